//! Guaranteed upper and lower bounds for the error of one discrete
//! solution: the optimized majorant, its elementwise indicators and the
//! minorant with the exact adjoint error as test field.
use std::sync::Arc;

use magafem::afem::exact_proxy_minorant;
use magafem::estimator::{estimate, project_h_bar, EstimatorConstants};
use magafem::manufactured::{triple_norm_error, ManufacturedCase};
use magafem::optimality::{assemble_kkt, gauge_fix_v, interpolate_data, solve_optimality, Discretization};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let case = ManufacturedCase::default();
    let k = EstimatorConstants::benchmark();
    println!("c_m = {:.4}, c_p,ω = {:.4}", k.c_m, k.c_p_omega);
    let disc = Discretization::new(Arc::new(ManufacturedCase::initial_mesh(6)?))?;
    let data = interpolate_data(&case, &disc)?;
    let sol = solve_optimality(&disc, &data, &gauge_fix_v(assemble_kkt(&case, &disc, &data)?), 1e-10, 50_000)?;
    let err = triple_norm_error(&disc.mesh, |c, g, l| sol.h_bar(c, g, l), |c, g, l| sol.zeta_j(&disc.map, c, g, l), case.kappa);

    let (rep, _, _) = estimate(&disc, &sol, &case, &k, 1e-10, 50_000)?;
    let (psi0, _) = project_h_bar(&disc, &sol, 1e-12, 10_000);
    println!("total error        {:.5}", err.total);
    println!("M_+,rot            {:.5}", rep.m_plus_rot);
    println!("M_+,π              {:.5}", rep.m_plus_pi);
    println!("M_h                {:.5}   (efficiency {:.2})", rep.m_h, rep.m_h / err.total);
    println!("‖Ψ_opt − Ψ_0‖ dofs {:.3e}", {
        let (psi, _) = magafem::estimator::optimize_aux_curl(&disc, &sol, &case, &k, 1e-10, 50_000);
        psi.values().iter().zip(psi0.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    });
    let mut top: Vec<(usize, f64)> = rep.indicators.iter().copied().enumerate().collect();
    top.sort_by(|a, b| b.1.total_cmp(&a.1));
    let omega = top.iter().take(50).filter(|(c, _)| disc.mesh.in_omega(*c)).count();
    println!("largest 50 indicators: {omega} in ω");
    let lower = exact_proxy_minorant(&disc, &sol, &case)?;
    println!("minorant {:.4e} <= total² {:.4e} <= M_h² {:.4e}", lower.best(), err.total.powi(2), rep.m_h.powi(2));
    Ok(())
}
