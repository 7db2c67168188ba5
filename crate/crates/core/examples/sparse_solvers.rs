//! Jacobi-preconditioned CG on a nodal Laplacian and MINRES on the
//! indefinite optimality system of the benchmark.
use std::sync::Arc;

use magafem::assembly::assemble_nodal_stiffness;
use magafem::manufactured::ManufacturedCase;
use magafem::optimality::{assemble_kkt, gauge_fix_v, interpolate_data, Discretization};
use magafem::sparse::{cg, minres};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let case = ManufacturedCase::default();
    let disc = Discretization::new(Arc::new(ManufacturedCase::initial_mesh(9)?))?;

    let lap = assemble_nodal_stiffness(&disc.u_space, &vec![1.0; disc.mesh.n_cells()]);
    let b = vec![1.0; lap.nrows()];
    let (_, rep) = cg(&lap, &b, 1e-10, 10_000);
    println!("CG      n = {:>6}: {:>5} iterations, relative residual {:.2e}", lap.nrows(), rep.iterations, rep.relative_residual);

    let data = interpolate_data(&case, &disc)?;
    let sys = gauge_fix_v(assemble_kkt(&case, &disc, &data)?);
    println!("KKT blocks: E {}, u {}, v {}, nnz {}", sys.e_range().len(), sys.u_range().len(), sys.v_range().len(), sys.matrix.nnz());
    let (_, rep) = minres(&sys.matrix, &sys.rhs, 1e-10, 50_000, &sys.preconditioner);
    println!("MINRES  n = {:>6}: {:>5} iterations, relative residual {:.2e}", sys.matrix.nrows(), rep.iterations, rep.relative_residual);
    Ok(())
}
