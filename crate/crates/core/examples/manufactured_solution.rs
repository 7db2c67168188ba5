//! The benchmark's exact fields at a few points, and a finite-difference
//! check of the identities that make them an optimal triple.
use magafem::manufactured::ManufacturedCase;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let case = ManufacturedCase::default();
    for x in [[-0.25, -0.25, 0.3], [0.2, 0.3, 0.1], [0.75, 0.2, -0.1], [0.25, 0.25, 0.9]] {
        let v = case.eval_exact(x)?;
        println!("x = {x:?}: μ = {}, Ē = {:.4?}, H̄ = {:.4?}", v.mu, v.e_bar, v.h_bar);
        if let Some(j) = v.j_bar {
            println!("    j̄ = {j:.4?}");
        }
    }
    let residual = case.verify_consistency(2000, 42)?;
    println!("largest identity residual over 2000 samples: {residual:.2e}");
    Ok(())
}
