//! Solve the discrete optimality system once and compare the recovered
//! control and field with the benchmark solution.
use std::sync::Arc;

use magafem::manufactured::{triple_norm_error, ManufacturedCase};
use magafem::optimality::{assemble_kkt, gauge_fix_v, interpolate_data, solve_optimality, Discretization};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let case = ManufacturedCase::default();
    println!("    n      DoF   MINRES its   ‖H̄ − H̄_h‖_μ   ‖j̄ − j̄_h‖_ω      total");
    for n in [3, 6, 9] {
        let disc = Discretization::new(Arc::new(ManufacturedCase::initial_mesh(n)?))?;
        let data = interpolate_data(&case, &disc)?;
        let sys = gauge_fix_v(assemble_kkt(&case, &disc, &data)?);
        let sol = solve_optimality(&disc, &data, &sys, 1e-10, 50_000)?;
        let err = triple_norm_error(
            &disc.mesh,
            |c, g, l| sol.h_bar(c, g, l),
            |c, g, l| sol.zeta_j(&disc.map, c, g, l),
            case.kappa,
        );
        println!(
            "{n:>5} {:>8} {:>12} {:>14.5} {:>14.5} {:>10.5}",
            disc.dof_count(),
            sol.report.iterations,
            err.error_h,
            err.error_j,
            err.total
        );
    }
    Ok(())
}
