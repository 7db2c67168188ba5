//! Kuhn bisection of the benchmark mesh towards a corner of the
//! control box, with conformity and shape checks after every sweep.
use magafem::manufactured::ManufacturedCase;
use magafem::mesh::MarkedSet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let domain = ManufacturedCase::domain();
    let mut mesh = ManufacturedCase::initial_mesh(6)?;
    println!("sweep    cells   vertices   min quality   cells in ω");
    for sweep in 0..=8 {
        mesh.audit_conformity(&domain)?;
        let in_omega = mesh.in_omega_flags().iter().filter(|f| **f).count();
        println!(
            "{sweep:>5} {:>8} {:>10} {:>13.4} {:>12}",
            mesh.n_cells(),
            mesh.n_vertices(),
            mesh.min_quality(),
            in_omega
        );
        // refine everything touching a ball around the corner (0.5, 0.5, 0.5)
        let marked: Vec<usize> = (0..mesh.n_cells())
            .filter(|&c| {
                let x = mesh.geometry(c).centroid();
                let d2: f64 = x.iter().map(|v| (v - 0.5).powi(2)).sum();
                d2 < 0.04
            })
            .collect();
        mesh = mesh.bisect(&MarkedSet::new(marked, mesh.n_cells())?)?;
    }
    println!("total volume {:.15} (exact 3.375)", mesh.total_volume());
    Ok(())
}
