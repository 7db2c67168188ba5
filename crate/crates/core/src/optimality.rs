//! Discrete optimality system: assembly of the symmetric double saddle
//! point system for `(Ē_h, ū_h, v̄_h)`, gauge fixing, solution and recovery
//! of the discrete control `j̄_h` and field `H̄_h`.

use std::sync::Arc;

use thiserror::Error;

use crate::assembly::{
    assemble_curl_curl, assemble_load, assemble_mixed_b, assemble_mixed_c, assemble_nodal_stiffness,
    assemble_vector_mass, inverse_mu, omega_weight,
};
use crate::geometry::{add, axpy, TetGeometry, Vec3};
use crate::mesh::{Mesh, MeshError, SubdomainMap};
use crate::spaces::{
    extend_by_zero, gradient_to_edges, interpolate_edge, restrict, DofMap, FeField, SpaceError, SpaceKind,
};
use crate::sparse::{minres, CsrMatrix, SolveReport, SparseError, TripletBuilder};

/// Data of the control problem. `μ` and the control domain come from the
/// mesh; field evaluations receive the material value and control-domain
/// membership of the cell being integrated so that interface-discontinuous
/// data are evaluated on the correct side.
pub trait ControlProblem {
    fn kappa(&self) -> f64;
    /// Applied current `J`.
    fn applied_current(&self, x: Vec3, mu: f64, in_omega: bool) -> Vec3;
    /// Desired magnetic field `H_d`, interpolated into the free edge space,
    /// so it must have a well-defined tangential trace on every edge.
    fn desired_field(&self, x: Vec3) -> Vec3;
    /// Shift control `j_d` (only evaluated in the control domain).
    fn shift_control(&self, x: Vec3) -> Vec3;
}

#[derive(Debug, Error)]
pub enum OptimalityError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("control cost must be positive, got {0}")]
    InvalidKappa(f64),
    #[error("KKT solve did not converge: {0:?}")]
    NotConverged(SolveReport),
}

/// All finite element spaces on one mesh.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Arc<Mesh>,
    pub omega: Arc<Mesh>,
    pub map: SubdomainMap,
    /// Edge space with zero tangential trace on `∂Ω` (for `Ē_h`).
    pub e_space: Arc<DofMap>,
    /// Nodal space with zero trace on `∂Ω` (for `ū_h`).
    pub u_space: Arc<DofMap>,
    /// Nodal space on `ω` (for `v̄_h`).
    pub v_space: Arc<DofMap>,
    /// Edge space on `Ω` without boundary condition.
    pub r_space: Arc<DofMap>,
    /// Edge space on `ω` without boundary condition (for `j̄_h`).
    pub j_space: Arc<DofMap>,
    /// Raviart–Thomas space on `ω` with zero normal trace.
    pub d_space: Arc<DofMap>,
}

impl Discretization {
    pub fn new(mesh: Arc<Mesh>) -> Result<Self, OptimalityError> {
        let (omega, map) = mesh.extract_omega()?;
        let omega = Arc::new(omega);
        let build = |m: &Arc<Mesh>, k| DofMap::build(m.clone(), k).map(Arc::new);
        Ok(Discretization {
            e_space: build(&mesh, SpaceKind::EdgeZeroTrace)?,
            u_space: build(&mesh, SpaceKind::NodalZeroTrace)?,
            v_space: build(&omega, SpaceKind::NodalOmega)?,
            r_space: build(&mesh, SpaceKind::EdgeFree)?,
            j_space: build(&omega, SpaceKind::EdgeFree)?,
            d_space: build(&omega, SpaceKind::FaceZeroTraceOmega)?,
            mesh,
            omega,
            map,
        })
    }

    /// Unknowns of the optimality system `(Ē_h, ū_h, v̄_h)`.
    pub fn dof_count(&self) -> usize {
        self.e_space.n_dofs() + self.u_space.n_dofs() + self.v_space.n_dofs()
    }
}

/// Interpolated data: `j_{d,h}` in the `ω` edge space and `H_{d,h}` in the
/// free `Ω` edge space.
#[derive(Debug, Clone)]
pub struct DiscreteData {
    pub j_d: FeField,
    pub h_d: FeField,
}

pub fn interpolate_data(problem: &impl ControlProblem, disc: &Discretization) -> Result<DiscreteData, OptimalityError> {
    let j_d = interpolate_edge(|x| problem.shift_control(x), &disc.j_space)?;
    let h_d = interpolate_edge(|x| problem.desired_field(x), &disc.r_space)?;
    Ok(DiscreteData { j_d, h_d })
}

/// Symmetric block system `[[Ã, Bᵀ, Cᵀ], [B, 0, 0], [C, 0, D]]`.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Block starts: E-block at `offsets[0]`, u-block at `offsets[1]`,
    /// v-block at `offsets[2]`, total size `offsets[3]`.
    pub offsets: [usize; 4],
    /// Diagonal of the block-diagonal preconditioner.
    pub preconditioner: Vec<f64>,
    /// Pinned v-dof (local index within the v-block), if gauge fixed.
    pub pinned: Option<usize>,
    pub kappa: f64,
}

impl KktSystem {
    pub fn e_range(&self) -> std::ops::Range<usize> {
        self.offsets[0]..self.offsets[1]
    }
    pub fn u_range(&self) -> std::ops::Range<usize> {
        self.offsets[1]..self.offsets[2]
    }
    pub fn v_range(&self) -> std::ops::Range<usize> {
        self.offsets[2]..self.offsets[3]
    }
}

/// The `E`-load `f(Φ) = (ζ j_{d,h} + J, Φ) − (H_{d,h}, rot Φ)`.
pub fn assemble_optimality_load(
    problem: &impl ControlProblem,
    disc: &Discretization,
    data: &DiscreteData,
) -> Vec<f64> {
    let mesh = &disc.mesh;
    assemble_load(
        &disc.e_space,
        |c, g, lam| {
            let x = g.point(lam);
            let omega = mesh.in_omega(c);
            let mut s = problem.applied_current(x, mesh.mu(c), omega);
            if omega {
                let sc = disc.map.sub_cell(c).expect("control cell is in the submesh");
                s = add(s, data.j_d.eval_vector(sc, g, lam));
            }
            s
        },
        |c, g, lam| data.h_d.eval_vector(c, g, lam),
    )
}

/// Assemble the optimality system for the given problem data.
pub fn assemble_kkt(
    problem: &impl ControlProblem,
    disc: &Discretization,
    data: &DiscreteData,
) -> Result<KktSystem, OptimalityError> {
    let load = assemble_optimality_load(problem, disc, data);
    assemble_kkt_with_load(disc, problem.kappa(), load)
}

/// Assemble the optimality system with an explicitly supplied `E`-load.
pub fn assemble_kkt_with_load(disc: &Discretization, kappa: f64, load: Vec<f64>) -> Result<KktSystem, OptimalityError> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(OptimalityError::InvalidKappa(kappa));
    }
    let (ne, nu, nv) = (disc.e_space.n_dofs(), disc.u_space.n_dofs(), disc.v_space.n_dofs());
    if load.len() != ne {
        return Err(OptimalityError::Dimension(format!("load has length {}, expected {ne}", load.len())));
    }
    let mesh = &disc.mesh;
    let curl = assemble_curl_curl(&disc.e_space, &inverse_mu(mesh));
    let mass = assemble_vector_mass(&disc.e_space, &omega_weight(mesh, 1.0 / kappa));
    let a = curl.add(&mass, 1.0)?;
    let b = assemble_mixed_b(&disc.e_space, &disc.u_space);
    let c = assemble_mixed_c(&disc.omega, &disc.map, &disc.e_space, &disc.v_space, 1.0 / kappa);
    let d = assemble_nodal_stiffness(&disc.v_space, &vec![1.0 / kappa; disc.omega.n_cells()]);
    let n = ne + nu + nv;
    let mut t = TripletBuilder::with_capacity(n, n, a.nnz() + 2 * (b.nnz() + c.nnz()) + d.nnz());
    t.add_block(0, 0, &a, 1.0);
    t.add_block(ne, 0, &b, 1.0);
    t.add_block_transposed(0, ne, &b, 1.0);
    t.add_block(ne + nu, 0, &c, 1.0);
    t.add_block_transposed(0, ne + nu, &c, 1.0);
    t.add_block(ne + nu, ne + nu, &d, 1.0);
    let matrix = t.build()?;
    let lap = assemble_nodal_stiffness(&disc.u_space, &vec![1.0; mesh.n_cells()]);
    let mut preconditioner = a.diagonal();
    preconditioner.extend(lap.diagonal());
    preconditioner.extend(d.diagonal());
    let mut rhs = load;
    rhs.resize(n, 0.0);
    Ok(KktSystem {
        matrix,
        rhs,
        offsets: [0, ne, ne + nu, n],
        preconditioner,
        pinned: None,
        kappa,
    })
}

/// Pin the v-dof with local index `dof` to zero, removing the constant
/// kernel of the `ω`-Neumann multiplier.
pub fn gauge_fix_v_at(mut system: KktSystem, dof: usize) -> KktSystem {
    let i = system.offsets[2] + dof;
    assert!(i < system.offsets[3], "v-dof {dof} out of range");
    system.matrix.pin(i);
    system.rhs[i] = 0.0;
    system.preconditioner[i] = 1.0;
    system.pinned = Some(dof);
    system
}

/// Pin the lowest-index v-dof.
pub fn gauge_fix_v(system: KktSystem) -> KktSystem {
    gauge_fix_v_at(system, 0)
}

/// Discrete optimal triple and recovered control and field.
#[derive(Debug, Clone)]
pub struct OptimalitySolution {
    pub e: FeField,
    pub u: FeField,
    pub v: FeField,
    /// `j̄_h = j_{d,h} − κ⁻¹(ζ*Ē_h + ∇v̄_h)` in the `ω` edge space.
    pub j: FeField,
    /// `H_{d,h}` in the free edge space; `H̄_h = μ⁻¹ rot Ē_h + H_{d,h}`.
    pub h_d: FeField,
    pub report: SolveReport,
    pub kappa: f64,
}

impl OptimalitySolution {
    /// `H̄_h` at a point of a parent-mesh cell.
    pub fn h_bar(&self, cell: usize, g: &TetGeometry, lambda: &[f64; 4]) -> Vec3 {
        let mesh = self.e.mesh();
        let curl = self.e.curl(cell, g);
        axpy(1.0 / mesh.mu(cell), curl, self.h_d.eval_vector(cell, g, lambda))
    }

    /// `ζ j̄_h` at a point of a parent-mesh cell (zero outside `ω`).
    pub fn zeta_j(&self, map: &SubdomainMap, cell: usize, g: &TetGeometry, lambda: &[f64; 4]) -> Vec3 {
        match map.sub_cell(cell) {
            Some(sc) => self.j.eval_vector(sc, g, lambda),
            None => [0.0; 3],
        }
    }
}

/// Solve a gauge-fixed system with MINRES and recover `j̄_h`, `H̄_h`.
pub fn solve_optimality(
    disc: &Discretization,
    data: &DiscreteData,
    system: &KktSystem,
    tol: f64,
    maxit: usize,
) -> Result<OptimalitySolution, OptimalityError> {
    let (x, report) = minres(&system.matrix, &system.rhs, tol, maxit, &system.preconditioner);
    if !report.converged {
        return Err(OptimalityError::NotConverged(report));
    }
    recover(disc, data, system, x, report)
}

/// Split a block solution vector and recover the control.
pub fn recover(
    disc: &Discretization,
    data: &DiscreteData,
    system: &KktSystem,
    x: Vec<f64>,
    report: SolveReport,
) -> Result<OptimalitySolution, OptimalityError> {
    let e = FeField::from_values(disc.e_space.clone(), x[system.e_range()].to_vec())?;
    let u = FeField::from_values(disc.u_space.clone(), x[system.u_range()].to_vec())?;
    let v = FeField::from_values(disc.v_space.clone(), x[system.v_range()].to_vec())?;
    let e_omega = restrict(&e, &disc.map, &disc.j_space)?;
    let grad_v = gradient_to_edges(&v, &disc.j_space)?;
    let k = 1.0 / system.kappa;
    let values = data
        .j_d
        .values()
        .iter()
        .zip(e_omega.values().iter().zip(grad_v.values()))
        .map(|(jd, (e, g))| jd - k * (e + g))
        .collect();
    let j = FeField::from_values(disc.j_space.clone(), values)?;
    Ok(OptimalitySolution {
        e,
        u,
        v,
        j,
        h_d: data.h_d.clone(),
        report,
        kappa: system.kappa,
    })
}

/// `ζ j̄_h` as a field in the free `Ω` edge space.
pub fn extended_control(disc: &Discretization, sol: &OptimalitySolution) -> Result<FeField, OptimalityError> {
    Ok(extend_by_zero(&sol.j, &disc.map, &disc.r_space)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manufactured::ManufacturedCase;
    use crate::sparse::{dot, norm};
    use rand::{Rng, SeedableRng};

    fn setup(n: usize) -> (Discretization, DiscreteData, ManufacturedCase) {
        let case = ManufacturedCase::default();
        let disc = Discretization::new(Arc::new(ManufacturedCase::initial_mesh(n).unwrap())).unwrap();
        let data = interpolate_data(&case, &disc).unwrap();
        (disc, data, case)
    }

    #[test]
    fn dof_count_of_initial_mesh() {
        let (disc, _, _) = setup(6);
        assert_eq!(disc.u_space.n_dofs(), 125);
        assert_eq!(disc.v_space.n_dofs(), 27);
        assert_eq!(disc.e_space.n_dofs(), disc.mesh.n_interior_edges());
        assert_eq!(disc.dof_count(), disc.e_space.n_dofs() + 152);
    }

    #[test]
    fn submesh_cells_keep_vertex_order() {
        let (disc, _, _) = setup(6);
        for (s, &p) in disc.map.cell_to_parent.iter().enumerate() {
            let vs = disc.omega.cell(s).vertices.map(|v| disc.map.vertex_to_parent[v]);
            assert_eq!(vs, disc.mesh.cell(p).vertices);
        }
    }

    #[test]
    fn kkt_structure_and_symmetry() {
        let (disc, data, case) = setup(6);
        let sys = assemble_kkt(&case, &disc, &data).unwrap();
        let a = &sys.matrix;
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let x: Vec<f64> = (0..a.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..a.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lhs = dot(&a.matvec(&x), &y);
        let rhs = dot(&x, &a.matvec(&y));
        assert!((lhs - rhs).abs() <= 1e-10 * a.max_abs() * norm(&x) * norm(&y));
        // (2,2) and (2,3) blocks vanish
        for r in sys.u_range() {
            for (c, _) in a.row(r) {
                assert!(sys.e_range().contains(&c));
            }
        }
        // zero data gives zero rhs
        let zero = assemble_kkt_with_load(&disc, 1.0, vec![0.0; disc.e_space.n_dofs()]).unwrap();
        assert!(zero.rhs.iter().all(|v| *v == 0.0));
        assert!(assemble_kkt_with_load(&disc, 0.0, vec![0.0; disc.e_space.n_dofs()]).is_err());
    }

    #[test]
    fn solve_satisfies_constraints_and_gauge() {
        let (disc, data, case) = setup(6);
        let sys = assemble_kkt(&case, &disc, &data).unwrap();
        let s0 = solve_optimality(&disc, &data, &gauge_fix_v(sys.clone()), 1e-10, 20000).unwrap();
        assert!(s0.report.converged);
        assert_eq!(s0.v.values()[0], 0.0);
        // discrete divergence constraint
        let b = assemble_mixed_b(&disc.e_space, &disc.u_space);
        let f = &sys.rhs[sys.e_range()];
        assert!(norm(&b.matvec(s0.e.values())) <= 1e-8 * norm(f));
        // gauge invariance of ∇v̄_h
        let last = disc.v_space.n_dofs() - 1;
        let s1 = solve_optimality(&disc, &data, &gauge_fix_v_at(sys.clone(), last), 1e-10, 20000).unwrap();
        let diff: Vec<f64> = s0.v.values().iter().zip(s1.v.values()).map(|(a, b)| a - b).collect();
        let mean = diff.iter().sum::<f64>() / diff.len() as f64;
        assert!(diff.iter().all(|d| (d - mean).abs() <= 1e-9));
        for c in 0..disc.omega.n_cells() {
            let g = disc.omega.geometry(c);
            let (g0, g1) = (s0.v.grad(c, &g), s1.v.grad(c, &g));
            for k in 0..3 {
                assert!((g0[k] - g1[k]).abs() <= 1e-9);
            }
        }
        // energy identity ã(E,E) + c(E,v) = f(E) − b(E,u)
        let x: Vec<f64> = s0.e.values().iter().chain(s0.u.values()).chain(s0.v.values()).copied().collect();
        let ax = sys.matrix.matvec(&x);
        let row_e: f64 = dot(&ax[sys.e_range()], s0.e.values());
        assert!((row_e - dot(f, s0.e.values())).abs() <= 1e-8 * norm(f) * norm(s0.e.values()));
    }

    #[test]
    fn gradient_compatible_load_gives_zero_multiplier() {
        let (disc, data, case) = setup(6);
        let sys = assemble_kkt(&case, &disc, &data).unwrap();
        // project f so that f(∇φ_h) = 0 for every nodal φ_h
        let g = gradient_matrix(&disc);
        let f = sys.rhs[sys.e_range()].to_vec();
        // solve (Gᵀ G) α = Gᵀ f, then f ← f − G α, so Gᵀ f = 0
        let gtg = g.transpose();
        let lhs = product(&gtg, &g);
        let (alpha, rep) = crate::sparse::cg(&lhs, &gtg.matvec(&f), 1e-14, 10000);
        assert!(rep.converged);
        let ga = g.matvec(&alpha);
        let f2: Vec<f64> = f.iter().zip(&ga).map(|(a, b)| a - b).collect();
        assert!(norm(&gtg.matvec(&f2)) < 1e-10 * norm(&f));
        let sys2 = gauge_fix_v(assemble_kkt_with_load(&disc, 1.0, f2).unwrap());
        let s = solve_optimality(&disc, &data, &sys2, 1e-12, 20000).unwrap();
        let s_nodal = assemble_nodal_stiffness(&disc.u_space, &vec![1.0; disc.mesh.n_cells()]);
        let grad_u = s_nodal.bilinear(s.u.values(), s.u.values()).sqrt();
        assert!(grad_u <= 1e-8 * norm(&f), "‖∇u‖ = {grad_u}");
    }

    fn gradient_matrix(disc: &Discretization) -> CsrMatrix {
        let mesh = &disc.mesh;
        let mut t = TripletBuilder::new(disc.e_space.n_dofs(), disc.u_space.n_dofs());
        for (e, &[a, bb]) in mesh.edges().iter().enumerate() {
            let Some(r) = disc.e_space.entity_dof(e) else { continue };
            if let Some(cb) = disc.u_space.entity_dof(bb) {
                t.push(r, cb, 1.0);
            }
            if let Some(ca) = disc.u_space.entity_dof(a) {
                t.push(r, ca, -1.0);
            }
        }
        t.build().unwrap()
    }

    fn product(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
        let bt = b.transpose();
        let mut t = TripletBuilder::new(a.nrows(), b.ncols());
        let mut col = vec![0.0; a.ncols()];
        for j in 0..b.ncols() {
            col.iter_mut().for_each(|v| *v = 0.0);
            for (r, v) in bt.row(j) {
                col[r] = v;
            }
            let y = a.matvec(&col);
            for (i, v) in y.into_iter().enumerate() {
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t.build().unwrap()
    }

    #[test]
    fn large_kappa_keeps_control_at_shift() {
        let (disc, data, _) = setup(6);
        let case = ManufacturedCase::new(1e8);
        let sys = gauge_fix_v(assemble_kkt(&case, &disc, &data).unwrap());
        let s = solve_optimality(&disc, &data, &sys, 1e-10, 20000).unwrap();
        let m = crate::assembly::assemble_vector_mass(&disc.j_space, &vec![1.0; disc.omega.n_cells()]);
        let diff: Vec<f64> = s.j.values().iter().zip(data.j_d.values()).map(|(a, b)| a - b).collect();
        let rel = (m.bilinear(&diff, &diff) / m.bilinear(data.j_d.values(), data.j_d.values())).sqrt();
        assert!(rel <= 1e-4, "{rel}");
    }
}
