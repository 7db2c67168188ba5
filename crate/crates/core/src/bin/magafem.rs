use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use magafem::afem::{run_with_observer, AfemConfig, AfemError, Mode};
use magafem::io::{load_config, write_comparison};
use magafem::manufactured::ManufacturedCase;

#[derive(Parser)]
#[command(name = "magafem", version, about = "Adaptive optimal control of magneto-static fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive (or uniform) loop on the benchmark case.
    Run(RunArgs),
    /// Merge the histories of several runs into one CSV table.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// adaptive, exact or uniform.
    #[arg(long)]
    mode: Option<Mode>,
    /// Subdivisions per axis of the initial mesh (a multiple of 3).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    max_dof: Option<usize>,
    #[arg(long, visible_alias = "steps")]
    max_iters: Option<usize>,
    #[arg(long)]
    tol_kkt: Option<f64>,
    #[arg(long)]
    tol_aux: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the per-iteration VTK snapshots.
    #[arg(long)]
    no_vtk: bool,
    #[arg(long)]
    deterministic: bool,
}

fn build_config(a: RunArgs) -> Result<AfemConfig, String> {
    let mut c = match &a.config {
        Some(p) => load_config(p).map_err(|e| e.to_string())?,
        None => AfemConfig::default(),
    };
    if let Some(v) = a.mode {
        c.mode = v;
    }
    if let Some(v) = a.n {
        c.initial_n = v;
    }
    if let Some(v) = a.theta {
        c.theta = v;
    }
    if let Some(v) = a.kappa {
        c.kappa = v;
    }
    if let Some(v) = a.max_dof {
        c.max_dof = v;
    }
    if let Some(v) = a.max_iters {
        c.max_iterations = v;
    }
    if let Some(v) = a.tol_kkt {
        c.tol_kkt = v;
    }
    if let Some(v) = a.tol_aux {
        c.tol_aux = v;
    }
    if a.out.is_some() {
        c.out_dir = a.out;
    }
    if a.no_vtk {
        c.write_vtk = false;
    }
    if a.deterministic {
        c.deterministic = true;
    }
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

fn run(args: RunArgs) -> ExitCode {
    let config = match build_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let case = ManufacturedCase::new(config.kappa);
    println!("{:>4} {:>8} {:>12} {:>12} {:>12} {:>12} {:>8}", "it", "DoF", "err_H", "err_j", "total", "M_h", "sec");
    let result = run_with_observer(&config, &case, |_, r| {
        println!(
            "{:>4} {:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12} {:>8.1}",
            r.iteration,
            r.dof,
            r.error_h,
            r.error_j,
            r.total,
            r.m_h.map(|m| format!("{m:.4e}")).unwrap_or_default(),
            r.seconds
        );
    });
    match result {
        Ok(out) if out.success() => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("error: an auxiliary solve failed or the majorant bound was violated");
            ExitCode::FAILURE
        }
        Err(AfemError::Solve { iteration, records, source }) => {
            eprintln!("error: iteration {iteration} failed ({source}); {} records kept", records.len());
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Compare { runs, out } => match write_comparison(&runs, &out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
