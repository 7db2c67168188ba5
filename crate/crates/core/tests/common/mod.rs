//! Checks shared by the property suite (random seeds) and the acceptance
//! runner (fixed seeds). Each returns the measured worst defect, or a
//! message describing the first violation.
#![allow(dead_code)]

use std::sync::Arc;

use magafem::afem::dorfler_mark;
use magafem::assembly::{assemble_edge_functional, assemble_nodal_stiffness};
use magafem::geometry::{add, cross, sub, Vec3};
use magafem::manufactured::ManufacturedCase;
use magafem::mesh::{MarkedSet, Mesh};
use magafem::optimality::{
    assemble_kkt, assemble_kkt_with_load, gauge_fix_v, gauge_fix_v_at, interpolate_data, solve_optimality,
    Discretization,
};
use magafem::quadrature::QuadratureRule;
use magafem::spaces::{gradient_to_edges, interpolate_edge, interpolate_face, DofMap, FeField, SpaceKind};
use magafem::sparse::{dot, minres, norm};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub type Check = Result<f64, String>;

pub fn benchmark(n: usize) -> Mesh {
    ManufacturedCase::initial_mesh(n).unwrap()
}

/// Bisect a random fraction of cells `sweeps` times.
pub fn random_refinement(mut mesh: Mesh, sweeps: usize, fraction: f64, seed: u64) -> Mesh {
    let mut rng = StdRng::seed_from_u64(seed);
    for _ in 0..sweeps {
        let cells: Vec<usize> = (0..mesh.n_cells()).filter(|_| rng.gen_bool(fraction)).collect();
        let n = mesh.n_cells();
        mesh = mesh.bisect(&MarkedSet::new(cells, n).unwrap()).unwrap();
    }
    mesh
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_vec(rng: &mut StdRng) -> Vec3 {
    [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
}

/// Minimal subset size whose sum reaches `θ·total`, by exhaustive search.
pub fn brute_force_min_size(v: &[f64], theta: f64) -> usize {
    let total: f64 = v.iter().sum();
    if total == 0.0 {
        return 0;
    }
    let n = v.len();
    (0u32..1 << n)
        .filter(|mask| {
            let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| v[i]).sum();
            s >= theta * total
        })
        .map(|mask| mask.count_ones() as usize)
        .min()
        .unwrap()
}

/// Dörfler marking against the exhaustive oracle: minimal cardinality,
/// prefix of the (value descending, index ascending) order, bulk reached.
pub fn dorfler_agrees(v: &[f64], theta: f64) -> Check {
    let m = dorfler_mark(v, theta);
    let oracle = brute_force_min_size(v, theta);
    ensure(m.len() == oracle, || format!("{} marked, oracle {oracle} for {v:?}", m.len()))?;
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    ensure(m.cells() == &order[..m.len()], || format!("not a sorted prefix: {:?}", m.cells()))?;
    let total: f64 = v.iter().sum();
    let s: f64 = m.cells().iter().map(|&c| v[c]).sum();
    ensure(s >= theta * total, || format!("bulk {s} below {}", theta * total))?;
    Ok(0.0)
}

/// Random indicator vectors with ties and zeros.
pub fn random_indicators(rng: &mut StdRng) -> (Vec<f64>, f64) {
    let n = rng.gen_range(1..11);
    let v = (0..n)
        .map(|_| match rng.gen_range(0..4) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.0..10.0),
        })
        .collect();
    (v, rng.gen_range(0.01..0.99))
}

/// Conformity, volume conservation and nestedness of random bisections.
pub fn mesh_conformity(seed: u64, sweeps: usize, fraction: f64) -> Check {
    let domain = ManufacturedCase::domain();
    let mut mesh = benchmark(3);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..sweeps {
        let cells: Vec<usize> = (0..mesh.n_cells()).filter(|_| rng.gen_bool(fraction)).collect();
        let fine = mesh.bisect(&MarkedSet::new(cells, mesh.n_cells()).unwrap()).map_err(|e| e.to_string())?;
        fine.audit_conformity(&domain).map_err(|e| e.to_string())?;
        worst = worst.max((fine.total_volume() - domain.volume()).abs());
        let mut child_volume = vec![0.0; mesh.n_cells()];
        for c in 0..fine.n_cells() {
            let p = fine.parent(c);
            child_volume[p] += fine.cell_volume(c);
            ensure(mesh.geometry(p).contains(fine.geometry(c).centroid(), 1e-12), || {
                format!("cell {c} outside its parent {p}")
            })?;
            ensure(fine.in_omega(c) == mesh.in_omega(p) && fine.mu(c) == mesh.mu(p), || {
                format!("cell {c} lost its material data")
            })?;
        }
        for p in 0..mesh.n_cells() {
            worst = worst.max((child_volume[p] - mesh.cell_volume(p)).abs());
        }
        let omega: f64 = (0..fine.n_cells()).filter(|&c| fine.in_omega(c)).map(|c| fine.cell_volume(c)).sum();
        worst = worst.max((omega - 0.125).abs());
        mesh = fine;
    }
    ensure(worst <= 1e-12, || format!("volume defect {worst:e}"))?;
    Ok(worst)
}

/// `curl` of the edge representation of a random discrete gradient.
pub fn curl_grad_kernel(seed: u64) -> Check {
    let mesh = Arc::new(random_refinement(benchmark(3), 2, 0.3, seed));
    let nodal = Arc::new(DofMap::build(mesh.clone(), SpaceKind::NodalZeroTrace).unwrap());
    let edges = Arc::new(DofMap::build(mesh.clone(), SpaceKind::EdgeZeroTrace).unwrap());
    let mut rng = StdRng::seed_from_u64(seed ^ 1);
    let vals: Vec<f64> = (0..nodal.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let p = FeField::from_values(nodal, vals).unwrap();
    let g = gradient_to_edges(&p, &edges).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for c in 0..mesh.n_cells() {
        let geo = mesh.geometry(c);
        worst = worst.max(norm(&g.curl(c, &geo)));
        let d = sub(g.eval_vector(c, &geo, &[0.1, 0.2, 0.3, 0.4]), p.grad(c, &geo));
        ensure(norm(&d) <= 1e-12 * (1.0 + norm(&p.grad(c, &geo))), || {
            format!("cell {c}: edge field differs from gradient by {d:?}")
        })?;
    }
    ensure(worst <= 1e-12, || format!("‖curl ∇φ‖ = {worst:e}"))?;
    Ok(worst)
}

/// Edge interpolation of `a + b×x` and face interpolation of `a + s x`.
pub fn interpolation_reproduction(seed: u64, a: Vec3, b: Vec3, s: f64) -> Check {
    let mesh = Arc::new(random_refinement(benchmark(3), 2, 0.3, seed));
    let ned = |x: Vec3| add(a, cross(b, x));
    let rt = |x: Vec3| add(a, [s * x[0], s * x[1], s * x[2]]);
    let e = interpolate_edge(ned, &Arc::new(DofMap::build(mesh.clone(), SpaceKind::EdgeFree).unwrap())).unwrap();
    let f = interpolate_face(rt, &Arc::new(DofMap::build(mesh.clone(), SpaceKind::FaceFree).unwrap())).unwrap();
    let mut worst: f64 = 0.0;
    for c in 0..mesh.n_cells() {
        let g = mesh.geometry(c);
        for lam in [[0.25; 4], [0.7, 0.1, 0.1, 0.1], [0.05, 0.15, 0.3, 0.5]] {
            let x = g.point(&lam);
            worst = worst.max(norm(&sub(e.eval_vector(c, &g, &lam), ned(x))));
            worst = worst.max(norm(&sub(f.eval_vector(c, &g, &lam), rt(x))));
        }
        worst = worst.max(norm(&sub(e.curl(c, &g), [2.0 * b[0], 2.0 * b[1], 2.0 * b[2]])));
        ensure((f.div(c, &g) - 3.0 * s).abs() <= 1e-11, || format!("cell {c}: div {}", f.div(c, &g)))?;
    }
    ensure(worst <= 1e-12, || format!("reproduction defect {worst:e}"))?;
    Ok(worst)
}

/// Relative asymmetry of the assembled optimality matrix.
pub fn kkt_symmetry(seed: u64) -> Check {
    let mesh = Arc::new(random_refinement(benchmark(3), 2, 0.3, seed));
    let case = ManufacturedCase::default();
    let disc = Discretization::new(mesh).unwrap();
    let data = interpolate_data(&case, &disc).unwrap();
    let sys = assemble_kkt(&case, &disc, &data).map_err(|e| e.to_string())?;
    let a = &sys.matrix;
    let mut rng = StdRng::seed_from_u64(seed);
    let n = a.nrows();
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let d = (dot(&a.matvec(&x), &y) - dot(&x, &a.matvec(&y))).abs() / (a.max_abs() * norm(&x) * norm(&y));
    let worst = d.max(a.asymmetry() / a.max_abs());
    ensure(worst <= 1e-10, || format!("asymmetry {worst:e}"))?;
    Ok(worst)
}

/// Cellwise `∇v̄_h` for two different pinned multiplier dofs.
pub fn gauge_invariance(seed: u64) -> Check {
    let mesh = Arc::new(random_refinement(benchmark(3), 1, 0.3, seed));
    let case = ManufacturedCase::default();
    let disc = Discretization::new(mesh).unwrap();
    let data = interpolate_data(&case, &disc).unwrap();
    let sys = assemble_kkt(&case, &disc, &data).map_err(|e| e.to_string())?;
    let pin = (seed as usize) % disc.v_space.n_dofs();
    let s0 = solve_optimality(&disc, &data, &gauge_fix_v(sys.clone()), 1e-12, 50_000).map_err(|e| e.to_string())?;
    let s1 = solve_optimality(&disc, &data, &gauge_fix_v_at(sys, pin), 1e-12, 50_000).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for c in 0..disc.omega.n_cells() {
        let g = disc.omega.geometry(c);
        worst = worst.max(norm(&sub(s0.v.grad(c, &g), s1.v.grad(c, &g))));
    }
    ensure(worst <= 1e-9, || format!("‖Δ∇v‖ = {worst:e}"))?;
    Ok(worst)
}

/// A load `f(Φ) = (F, rot Φ)` annihilates discrete gradients, so the
/// divergence multiplier `ū_h` must vanish. Returns `‖∇ū_h‖ / ‖f‖`.
pub fn rotational_load_multiplier(seed: u64) -> Check {
    let mesh = Arc::new(random_refinement(benchmark(3), 1, 0.3, seed));
    let disc = Discretization::new(mesh.clone()).unwrap();
    let mut rng = StdRng::seed_from_u64(seed);
    let f_cells: Vec<Vec3> = (0..mesh.n_cells()).map(|_| random_vec(&mut rng)).collect();
    let load = assemble_edge_functional(&disc.e_space, &QuadratureRule::tet_degree1(), |_| true, |c, _, _| {
        ([0.0; 3], f_cells[c])
    });
    let phi: Vec<f64> = (0..disc.u_space.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let phi = FeField::from_values(disc.u_space.clone(), phi).unwrap();
    let grad = gradient_to_edges(&phi, &disc.e_space).unwrap();
    let defect = dot(grad.values(), &load).abs() / (norm(grad.values()) * norm(&load));
    ensure(defect <= 1e-12, || format!("load does not annihilate gradients: {defect:e}"))?;
    let sys = gauge_fix_v(assemble_kkt_with_load(&disc, 1.0, load).map_err(|e| e.to_string())?);
    let (x, rep) = minres(&sys.matrix, &sys.rhs, 1e-13, 50_000, &sys.preconditioner);
    ensure(rep.converged, || format!("MINRES stalled at {:e}", rep.relative_residual))?;
    let u = &x[sys.u_range()];
    let lap = assemble_nodal_stiffness(&disc.u_space, &vec![1.0; mesh.n_cells()]);
    let rel = lap.bilinear(u, u).sqrt() / norm(&sys.rhs);
    ensure(rel <= 1e-8, || format!("‖∇ū_h‖/‖f‖ = {rel:e}"))?;
    Ok(rel)
}

/// Finite-difference residual of the benchmark's defining identities.
pub fn manufactured_identities(seed: u64) -> Check {
    let r = ManufacturedCase::default().verify_consistency(200, seed).map_err(|e| e.to_string())?;
    ensure(r <= 1e-6, || format!("residual {r:e}"))?;
    Ok(r)
}
