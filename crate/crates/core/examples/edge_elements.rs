//! Lowest-order Nédélec and Raviart–Thomas interpolation: exact on the
//! element spaces and first order for smooth fields.
use std::sync::Arc;

use magafem::assembly::assemble_vector_mass;
use magafem::mesh::{BoxDomain, Mesh};
use magafem::quadrature::QuadratureRule;
use magafem::spaces::{interpolate_edge, interpolate_face, DofMap, FeField, SpaceKind};

fn l2_error(f: &FeField, exact: impl Fn([f64; 3]) -> [f64; 3]) -> f64 {
    let mesh = f.mesh();
    let q = QuadratureRule::tet_degree5();
    let mut e = 0.0;
    for c in 0..mesh.n_cells() {
        let g = mesh.geometry(c);
        for (lam, w) in q.iter() {
            let v = f.eval_vector(c, &g, lam);
            let u = exact(g.point(lam));
            e += g.volume * w * (0..3).map(|k| (v[k] - u[k]).powi(2)).sum::<f64>();
        }
    }
    e.sqrt()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let smooth = |x: [f64; 3]| [x[1].sin(), (x[0] * x[2]).cos(), x[0] * x[1]];
    println!("    n   edge dofs   ‖u − Π_N u‖    face dofs   ‖u − Π_RT u‖");
    for n in [2, 4, 8, 16] {
        let d = BoxDomain::unit();
        let mesh = Arc::new(Mesh::build_structured_cube(d, n, d, |_| 1.0)?);
        let ned = Arc::new(DofMap::build(mesh.clone(), SpaceKind::EdgeFree)?);
        let rt = Arc::new(DofMap::build(mesh.clone(), SpaceKind::FaceFree)?);
        let fe = interpolate_edge(smooth, &ned)?;
        let ff = interpolate_face(smooth, &rt)?;
        println!(
            "{n:>5} {:>11} {:>14.4e} {:>12} {:>14.4e}",
            ned.n_dofs(),
            l2_error(&fe, smooth),
            rt.n_dofs(),
            l2_error(&ff, smooth)
        );
        if n == 2 {
            // a + b × x lies in the Nédélec space
            let rigid = |x: [f64; 3]| [1.0 + 0.5 * x[2] - x[1], -2.0 + x[0], 0.25 - 0.5 * x[0]];
            let f = interpolate_edge(rigid, &ned)?;
            let m = assemble_vector_mass(&ned, &vec![1.0; mesh.n_cells()]);
            println!("      reproduction error {:.1e}, ‖Π_N u‖² = {:.6}", l2_error(&f, rigid), m.bilinear(f.values(), f.values()));
        }
    }
    Ok(())
}
