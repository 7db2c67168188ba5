//! Majorant-driven adaptive refinement compared with uniform refinement.
use magafem::afem::{run_with_observer, AfemConfig, Mode};
use magafem::manufactured::ManufacturedCase;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let case = ManufacturedCase::default();
    for mode in [Mode::AdaptiveMajorant, Mode::Uniform] {
        let config = AfemConfig {
            mode,
            initial_n: 6,
            max_dof: 20_000,
            ..AfemConfig::default()
        };
        println!("{mode}:");
        println!("{:>8} {:>10} {:>10} {:>8} {:>12}", "DoF", "total", "M_h", "ratio", "marked in ω");
        let out = run_with_observer(&config, &case, |_, r| {
            println!(
                "{:>8} {:>10.4} {:>10.4} {:>8.2} {:>6}/{:<6}",
                r.dof,
                r.total,
                r.m_h.unwrap(),
                r.m_h.unwrap() / r.total,
                r.marked_in_omega,
                r.marked
            );
        })?;
        println!("bound held on every step: {}\n", out.success());
    }
    Ok(())
}
