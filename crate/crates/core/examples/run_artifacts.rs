//! Write the artifacts of a short run (history, manifest, VTK snapshots)
//! into a directory given on the command line, then read the history back.
use std::path::PathBuf;

use magafem::afem::{run, AfemConfig, Mode};
use magafem::io::{parse_config, read_history};
use magafem::manufactured::ManufacturedCase;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("magafem-demo"));
    let text = "mode = \"exact\"\nn = 3\nmax_dof = 5000\n";
    let config = AfemConfig {
        out_dir: Some(dir.clone()),
        ..parse_config(std::path::Path::new("inline.toml"), text)?
    };
    assert_eq!(config.mode, Mode::AdaptiveExact);
    let out = run(&config, &ManufacturedCase::new(config.kappa))?;
    let rows = read_history(&dir.join("history.csv"))?;
    println!("{} records written to {}", rows.len(), dir.display());
    for (row, rec) in rows.iter().zip(&out.records) {
        println!("  DoF {:>6}  total {:.6}  M_h {:.6}  VTK iter{:03}.vtk", row.dof, row.total, row.m_h.unwrap(), rec.iteration);
    }
    Ok(())
}
