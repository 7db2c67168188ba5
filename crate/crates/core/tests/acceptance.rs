//! Acceptance criteria for the benchmark: three full runs (majorant-driven,
//! exact-error-driven, uniform) up to 1.5·10⁵ unknowns plus the property
//! checks with fixed seeds. Prints one PASS/FAIL line per criterion.

mod common;

use std::time::Instant;

use common::*;
use magafem::afem::{run, AfemConfig, ConvergenceRecord, Mode};
use magafem::manufactured::ManufacturedCase;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const REL_SLACK: f64 = 1e-8;

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: &'static str, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name, pass, detail }
}

fn benchmark_run(mode: Mode) -> Vec<ConvergenceRecord> {
    let config = AfemConfig {
        mode,
        initial_n: 6,
        theta: 0.5,
        kappa: 1.0,
        max_dof: 150_000,
        ..AfemConfig::default()
    };
    let start = Instant::now();
    let out = run(&config, &ManufacturedCase::new(config.kappa)).expect("benchmark run failed");
    println!("\n{mode} run: {} records in {:.0} s", out.records.len(), start.elapsed().as_secs_f64());
    println!("{:>8} {:>12} {:>12} {:>12} {:>12} {:>12}", "DoF", "err_H", "err_j", "total", "M_h", "M_minus");
    for r in &out.records {
        println!(
            "{:>8} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.4e}",
            r.dof,
            r.error_h,
            r.error_j,
            r.total,
            r.m_h.unwrap_or(f64::NAN),
            r.m_minus.unwrap_or(f64::NAN)
        );
    }
    out.records
}

fn guaranteed_bound(records: &[ConvergenceRecord]) -> Outcome {
    let violations: Vec<usize> = records
        .iter()
        .filter(|r| {
            let m = r.m_h.expect("majorant computed");
            r.total > m + REL_SLACK * (1.0 + m)
        })
        .map(|r| r.dof)
        .collect();
    outcome(
        "1",
        "guaranteed majorant",
        violations.is_empty() && !records.is_empty(),
        format!("{} records, violations at DoF {violations:?}", records.len()),
    )
}

fn efficiency(records: &[ConvergenceRecord]) -> Outcome {
    let ratios: Vec<f64> = records.iter().map(|r| r.m_h.unwrap() / r.total).collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    outcome(
        "2",
        "efficiency bracket",
        lo >= 1.0 && hi <= 40.0,
        format!("M_h/total in [{lo:.3}, {hi:.3}], required within [1, 40]"),
    )
}

fn error_reduction(records: &[ConvergenceRecord]) -> Outcome {
    let first = &records[0];
    let required = if first.dof < 4940 { 2.5 } else { 3.0 };
    match records.iter().rev().find(|r| r.dof >= 90_000) {
        None => outcome("3", "error reduction", false, "no record with DoF >= 90000".into()),
        Some(last) => {
            let factor = first.total / last.total;
            outcome(
                "3",
                "error reduction",
                factor >= required,
                format!(
                    "total {:.4} at DoF {} -> {:.4} at DoF {}, factor {factor:.3} (required {required})",
                    first.total, first.dof, last.total, last.dof
                ),
            )
        }
    }
}

fn adaptive_vs_uniform(adaptive: &[ConvergenceRecord], uniform: &[ConvergenceRecord]) -> Outcome {
    let within = |a: usize, b: usize| (a.abs_diff(b) as f64) <= 0.2 * a.min(b) as f64;
    let best = adaptive
        .iter()
        .flat_map(|a| uniform.iter().filter(move |u| within(a.dof, u.dof)).map(move |u| (a, u)))
        .max_by_key(|(a, u)| (a.dof.min(u.dof), a.dof));
    match best {
        None => outcome("4", "adaptive beats uniform", false, "no pair of records within 20% DoF".into()),
        Some((a, u)) => outcome(
            "4",
            "adaptive beats uniform",
            a.total <= u.total,
            format!(
                "adaptive {:.4} at DoF {} vs uniform {:.4} at DoF {}",
                a.total, a.dof, u.total, u.dof
            ),
        ),
    }
}

fn sandwich(records: &[ConvergenceRecord]) -> Outcome {
    let mut bad = Vec::new();
    let mut lowest: f64 = f64::INFINITY;
    for r in records {
        let (lo, e2, hi) = (r.m_minus.unwrap(), r.total * r.total, r.m_h.unwrap().powi(2));
        lowest = lowest.min(lo / e2);
        if lo > e2 * (1.0 + REL_SLACK) || e2 > hi * (1.0 + REL_SLACK) {
            bad.push(r.dof);
        }
    }
    outcome(
        "5",
        "two-sided sandwich",
        bad.is_empty(),
        format!("violations at DoF {bad:?}; smallest minorant/total² = {lowest:.3e}"),
    )
}

/// Log-log interpolation of `total` over DoF.
fn interpolate_total(records: &[ConvergenceRecord], dof: usize) -> Option<f64> {
    let x = (dof as f64).ln();
    records.windows(2).find_map(|w| {
        let (x0, x1) = ((w[0].dof as f64).ln(), (w[1].dof as f64).ln());
        (x0 <= x && x <= x1).then(|| {
            let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
            (w[0].total.ln() * (1.0 - t) + w[1].total.ln() * t).exp()
        })
    })
}

fn exact_parity(exact: &[ConvergenceRecord], majorant: &[ConvergenceRecord]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for r in exact {
        if let Some(reference) = interpolate_total(majorant, r.dof) {
            worst = worst.max(r.total / reference);
            compared += 1;
        }
    }
    let last = exact.last().unwrap();
    outcome(
        "6",
        "exact-estimator parity",
        compared > 0 && worst <= 1.5,
        format!(
            "{compared} records compared, worst exact/majorant-run ratio {worst:.3} (required <= 1.5); final exact total {:.4} at DoF {}",
            last.total, last.dof
        ),
    )
}

fn property_suites() -> Vec<Outcome> {
    let start = Instant::now();
    let seeds = [1u64, 2, 3];
    let mut rng = StdRng::seed_from_u64(2024);
    let fold = |checks: Vec<Check>| -> (bool, String) {
        let mut worst: f64 = 0.0;
        for c in &checks {
            match c {
                Ok(v) => worst = worst.max(*v),
                Err(e) => return (false, e.clone()),
            }
        }
        (true, format!("{} cases, worst {worst:.2e}", checks.len()))
    };
    let mut out = Vec::new();
    let mut push = |id, name, (pass, detail): (bool, String)| out.push(outcome(id, name, pass, detail));
    push("7a", "curl∘grad kernel <= 1e-12", fold(seeds.iter().map(|&s| curl_grad_kernel(s)).collect()));
    push(
        "7b",
        "mesh conformity, volume <= 1e-12",
        fold(seeds.iter().map(|&s| mesh_conformity(s, 4, 0.3)).collect()),
    );
    let dorfler: Vec<Check> = (0..200)
        .map(|_| {
            let (v, theta) = random_indicators(&mut rng);
            dorfler_agrees(&v, theta)
        })
        .collect();
    push("7c", "Dörfler minimal-prefix oracle", fold(dorfler));
    push("7d", "KKT symmetry <= 1e-10", fold(seeds.iter().map(|&s| kkt_symmetry(s)).collect()));
    push("7e", "gauge invariance of ∇v̄_h <= 1e-9", fold(seeds.iter().map(|&s| gauge_invariance(s)).collect()));
    push(
        "7f",
        "ū_h vanishes for gradient-free load <= 1e-8",
        fold(seeds.iter().map(|&s| rotational_load_multiplier(s)).collect()),
    );
    push(
        "7g",
        "manufactured identities <= 1e-6",
        fold(seeds.iter().map(|&s| manufactured_identities(s)).collect()),
    );
    let interp: Vec<Check> = seeds
        .iter()
        .map(|&s| {
            let mut r = || [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let (a, b) = (r(), r());
            interpolation_reproduction(s, a, b, rng.gen_range(-2.0..2.0))
        })
        .collect();
    push("7h", "N1/RT interpolation reproduction <= 1e-12", fold(interp));
    let seconds = start.elapsed().as_secs_f64();
    let all = out.iter().all(|o| o.pass);
    out.push(outcome("7", "property suites", all && seconds < 120.0, format!("{seconds:.1} s (limit 120 s)")));
    out
}

#[test]
fn acceptance() {
    let properties = property_suites();
    let majorant = benchmark_run(Mode::AdaptiveMajorant);
    let uniform = benchmark_run(Mode::Uniform);
    let exact = benchmark_run(Mode::AdaptiveExact);
    let mut results = vec![guaranteed_bound(&majorant)];
    results.push(efficiency(&majorant));
    results.push(error_reduction(&majorant));
    results.push(adaptive_vs_uniform(&majorant, &uniform));
    results.push(sandwich(&majorant));
    results.push(exact_parity(&exact, &majorant));
    results.extend(properties);
    println!();
    for o in &results {
        println!(
            "criterion {:<3} {} {}: {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
    }
    let failed: Vec<&str> = results.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
