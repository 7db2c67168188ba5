//! Functional a posteriori bounds: the majorant `M_h` with optimized
//! auxiliary fields, its elementwise indicators, the divergence majorant and
//! the minorant.

use std::f64::consts::PI;

use crate::assembly::{
    assemble_curl_curl, assemble_div_div, assemble_edge_functional, assemble_face_functional, assemble_rt_mass,
    assemble_vector_mass,
};
use crate::geometry::{add, dot, norm2, scale, sub, TetGeometry, Vec3};
use crate::mesh::Mesh;
use crate::optimality::{ControlProblem, Discretization, OptimalityError, OptimalitySolution};
use crate::quadrature::QuadratureRule;
use crate::spaces::{gradient_to_edges, restrict, FeField};
use crate::sparse::{cg, SolveReport};

/// Constants entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConstants {
    /// Maxwell constant bound `ĉ_m`.
    pub c_m: f64,
    /// Poincaré constant bound on the control domain.
    pub c_p_omega: f64,
    /// Poincaré constant bound on the computational domain.
    pub c_p_domain: f64,
    pub d_domain: f64,
    pub d_omega: f64,
}

impl EstimatorConstants {
    /// Values for `Ω = (−0.5, 1)³`, `ω = (0, 0.5)³` and `μ ∈ {1, 10}`:
    /// `ĉ_m = 15√3/π`, `ĉ_{p,ω} = √3/(2π)` and `ĉ_{p,Ω} = d_Ω/π`.
    pub fn benchmark() -> Self {
        let s3 = 3f64.sqrt();
        EstimatorConstants {
            c_m: 15.0 * s3 / PI,
            c_p_omega: s3 / (2.0 * PI),
            c_p_domain: 1.5 * s3 / PI,
            d_domain: 1.5 * s3,
            d_omega: 0.5 * s3,
        }
    }

    pub fn validate(&self) -> bool {
        [self.c_m, self.c_p_omega, self.c_p_domain, self.d_domain, self.d_omega]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
    }
}

impl Default for EstimatorConstants {
    fn default() -> Self {
        Self::benchmark()
    }
}

/// Squared elementwise pieces of the majorant on parent-mesh cells:
/// `a_T = ‖H̄_h − Ψ‖²_{T,μ}`, `b_T = ‖ζj̄_h + J − rot Ψ‖²_T`,
/// `c_T = ‖ζ*Ē_h + ∇v̄_h − Υ‖²_T`, `d_T = ‖div Υ‖²_T` (zero outside `ω`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellPieces {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub m_plus_rot: f64,
    pub m_plus_pi: f64,
    pub m_h: f64,
    /// Elementwise indicators `M_T`.
    pub indicators: Vec<f64>,
    pub pieces: CellPieces,
    pub m_plus_div: Option<f64>,
    pub m_minus: Option<f64>,
    pub aux_reports: Vec<SolveReport>,
}

impl EstimatorReport {
    /// Largest relative mismatch between each global term and the
    /// aggregation of its elementwise pieces.
    pub fn consistency_defect(&self, constants: &EstimatorConstants, kappa: f64) -> f64 {
        let s = |v: &[f64]| v.iter().sum::<f64>().sqrt();
        let rot = s(&self.pieces.a) + constants.c_m * s(&self.pieces.b);
        let pi = s(&self.pieces.c) + constants.c_p_omega * s(&self.pieces.d);
        let mh = rot + weight_pi(constants, kappa) * pi;
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-300);
        rel(rot, self.m_plus_rot).max(rel(pi, self.m_plus_pi)).max(rel(mh, self.m_h))
    }
}

/// Weight `κ⁻¹ĉ_m + κ^{-1/2}` of the projection part in `M_h`.
pub fn weight_pi(constants: &EstimatorConstants, kappa: f64) -> f64 {
    constants.c_m / kappa + 1.0 / kappa.sqrt()
}

/// `ζ*Ē_h + ∇v̄_h` as a field in the `ω` edge space.
pub fn projection_residual(disc: &Discretization, sol: &OptimalitySolution) -> Result<FeField, OptimalityError> {
    let e = restrict(&sol.e, &disc.map, &disc.j_space)?;
    let g = gradient_to_edges(&sol.v, &disc.j_space)?;
    let values = e.values().iter().zip(g.values()).map(|(a, b)| a + b).collect();
    Ok(FeField::from_values(disc.j_space.clone(), values)?)
}

fn rule() -> QuadratureRule {
    QuadratureRule::tet_degree5()
}

/// `ζ j̄_h + J` at a point of a parent cell.
fn source(
    disc: &Discretization,
    sol: &OptimalitySolution,
    problem: &impl ControlProblem,
    c: usize,
    g: &TetGeometry,
    lam: &[f64; 4],
) -> Vec3 {
    let mesh = &disc.mesh;
    let j = problem.applied_current(g.point(lam), mesh.mu(c), mesh.in_omega(c));
    add(j, sol.zeta_j(&disc.map, c, g, lam))
}

/// Minimize `‖H̄_h − Ψ‖²_μ + ĉ_m²‖ζj̄_h + J − rot Ψ‖²` over the free edge space.
pub fn optimize_aux_curl(
    disc: &Discretization,
    sol: &OptimalitySolution,
    problem: &impl ControlProblem,
    constants: &EstimatorConstants,
    tol: f64,
    maxit: usize,
) -> (FeField, SolveReport) {
    let mesh = &disc.mesh;
    let c2 = constants.c_m * constants.c_m;
    let k = assemble_curl_curl(&disc.r_space, &vec![c2; mesh.n_cells()]);
    let m = assemble_vector_mass(&disc.r_space, mesh.mu_values());
    let a = k.add(&m, 1.0).expect("same dimensions");
    let rhs = assemble_edge_functional(&disc.r_space, &rule(), |_| true, |c, g, lam| {
        let h = scale(mesh.mu(c), sol.h_bar(c, g, lam));
        (h, scale(c2, source(disc, sol, problem, c, g, lam)))
    });
    let (x, rep) = cg(&a, &rhs, tol, maxit);
    (FeField::from_values(disc.r_space.clone(), x).expect("finite solution"), rep)
}

/// Minimize `‖ζ*Ē_h + ∇v̄_h − Υ‖²_ω + ĉ_{p,ω}²‖div Υ‖²_ω` over the
/// Raviart–Thomas space with zero normal trace on `∂ω`.
pub fn optimize_aux_div(
    disc: &Discretization,
    sol: &OptimalitySolution,
    constants: &EstimatorConstants,
    tol: f64,
    maxit: usize,
) -> Result<(FeField, SolveReport), OptimalityError> {
    let w = projection_residual(disc, sol)?;
    let n = disc.omega.n_cells();
    let cp2 = constants.c_p_omega * constants.c_p_omega;
    let a = assemble_div_div(&disc.d_space, &vec![cp2; n]).add(&assemble_rt_mass(&disc.d_space, &vec![1.0; n]), 1.0)?;
    let rhs = assemble_face_functional(&disc.d_space, &QuadratureRule::tet_degree2(), |c, g, lam| w.eval_vector(c, g, lam));
    let (x, rep) = cg(&a, &rhs, tol, maxit);
    Ok((FeField::from_values(disc.d_space.clone(), x)?, rep))
}

/// Evaluate the majorant for given auxiliary fields `Ψ` (free edge space on
/// `Ω`) and `Υ` (face space on `ω`).
pub fn majorant(
    disc: &Discretization,
    sol: &OptimalitySolution,
    problem: &impl ControlProblem,
    psi: &FeField,
    upsilon: &FeField,
    constants: &EstimatorConstants,
) -> Result<EstimatorReport, OptimalityError> {
    let mesh = &disc.mesh;
    let kappa = sol.kappa;
    let w = projection_residual(disc, sol)?;
    let q = rule();
    let n = mesh.n_cells();
    let mut pieces = CellPieces {
        a: vec![0.0; n],
        b: vec![0.0; n],
        c: vec![0.0; n],
        d: vec![0.0; n],
    };
    for cell in 0..n {
        let g = mesh.geometry(cell);
        let mu = mesh.mu(cell);
        let rot_psi = psi.curl(cell, &g);
        let (mut a, mut b) = (0.0, 0.0);
        for (lam, wq) in q.iter() {
            a += wq * mu * norm2(sub(sol.h_bar(cell, &g, lam), psi.eval_vector(cell, &g, lam)));
            b += wq * norm2(sub(source(disc, sol, problem, cell, &g, lam), rot_psi));
        }
        pieces.a[cell] = a * g.volume;
        pieces.b[cell] = b * g.volume;
        if let Some(sc) = disc.map.sub_cell(cell) {
            let mut c = 0.0;
            for (lam, wq) in q.iter() {
                c += wq * norm2(sub(w.eval_vector(sc, &g, lam), upsilon.eval_vector(sc, &g, lam)));
            }
            pieces.c[cell] = c * g.volume;
            pieces.d[cell] = upsilon.div(sc, &g).powi(2) * g.volume;
        }
    }
    let s = |v: &[f64]| v.iter().sum::<f64>().sqrt();
    let m_plus_rot = s(&pieces.a) + constants.c_m * s(&pieces.b);
    let m_plus_pi = s(&pieces.c) + constants.c_p_omega * s(&pieces.d);
    let wp = weight_pi(constants, kappa);
    let indicators = (0..n)
        .map(|t| {
            pieces.a[t].sqrt()
                + constants.c_m * pieces.b[t].sqrt()
                + wp * (pieces.c[t].sqrt() + constants.c_p_omega * pieces.d[t].sqrt())
        })
        .collect();
    Ok(EstimatorReport {
        m_plus_rot,
        m_plus_pi,
        m_h: m_plus_rot + wp * m_plus_pi,
        indicators,
        pieces,
        m_plus_div: None,
        m_minus: None,
        aux_reports: Vec::new(),
    })
}

/// Optimize both auxiliary fields and evaluate the majorant.
pub fn estimate(
    disc: &Discretization,
    sol: &OptimalitySolution,
    problem: &impl ControlProblem,
    constants: &EstimatorConstants,
    tol: f64,
    maxit: usize,
) -> Result<(EstimatorReport, FeField, FeField), OptimalityError> {
    let (psi, r1) = optimize_aux_curl(disc, sol, problem, constants, tol, maxit);
    let (ups, r2) = optimize_aux_div(disc, sol, constants, tol, maxit)?;
    let mut report = majorant(disc, sol, problem, &psi, &ups, constants)?;
    report.aux_reports = vec![r1, r2];
    Ok((report, psi, ups))
}

/// `μ`-weighted L² projection of `H̄_h` onto the free edge space, a
/// conforming stand-in for `H̄_h` as a candidate `Ψ`.
pub fn project_h_bar(disc: &Discretization, sol: &OptimalitySolution, tol: f64, maxit: usize) -> (FeField, SolveReport) {
    let mesh = &disc.mesh;
    let m = assemble_vector_mass(&disc.r_space, mesh.mu_values());
    let rhs = assemble_edge_functional(&disc.r_space, &QuadratureRule::tet_degree2(), |_| true, |c, g, lam| {
        (scale(mesh.mu(c), sol.h_bar(c, g, lam)), [0.0; 3])
    });
    let (x, rep) = cg(&m, &rhs, tol, maxit);
    (FeField::from_values(disc.r_space.clone(), x).expect("finite solution"), rep)
}

/// `‖Ẽ − Φ‖ + ĉ_{p,Ω}‖div Φ‖` for a face field `Φ` on `mesh` (with `ε = 1`).
pub fn majorant_div(
    mesh: &Mesh,
    e_tilde: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
    phi: &FeField,
    c_p_domain: f64,
) -> f64 {
    let q = rule();
    let (mut a, mut b) = (0.0, 0.0);
    for c in 0..mesh.n_cells() {
        let g = mesh.geometry(c);
        a += g.volume * q.iter().map(|(l, w)| w * norm2(sub(e_tilde(c, &g, l), phi.eval_vector(c, &g, l)))).sum::<f64>();
        b += g.volume * phi.div(c, &g).powi(2);
    }
    a.sqrt() + c_p_domain * b.sqrt()
}

/// The two parts of `M₋(tΦ) = t·linear − t²·quadratic`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinorantParts {
    /// `2(ζj̃ + J, Φ) − 2(H̃, rot Φ)`.
    pub linear: f64,
    /// `κ⁻¹‖ζ*Φ‖²_ω + (μ⁻¹ rot Φ, rot Φ)`.
    pub quadratic: f64,
}

impl MinorantParts {
    /// `M₋(H̃, j̃; tΦ)`.
    pub fn at(&self, t: f64) -> f64 {
        t * self.linear - t * t * self.quadratic
    }

    /// Maximizing scale `t*` of the concave quadratic.
    pub fn best_scale(&self) -> f64 {
        if self.quadratic > 0.0 {
            0.5 * self.linear / self.quadratic
        } else {
            0.0
        }
    }

    /// `max_t M₋(tΦ) = linear² / (4 quadratic)`.
    pub fn best(&self) -> f64 {
        self.at(self.best_scale())
    }
}

/// Parts of `M₋(H̃, j̃; Φ) = (2(ζj̃ + J) − κ⁻¹ζζ*Φ, Φ) − (2H̃ + μ⁻¹rot Φ, rot Φ)`
/// for a zero-trace edge field `Φ` on the parent mesh. `h_tilde` and
/// `zeta_j_tilde` are evaluated on parent cells (the latter only on control
/// cells).
pub fn minorant(
    mesh: &Mesh,
    problem: &impl ControlProblem,
    h_tilde: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
    zeta_j_tilde: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
    phi: &FeField,
) -> MinorantParts {
    minorant_with(
        mesh,
        problem,
        h_tilde,
        zeta_j_tilde,
        |c, g, lam| phi.eval_vector(c, g, lam),
        |c, g, _| phi.curl(c, g),
    )
}

/// As [`minorant`] for any `Φ ∈ H₀(rot)` given pointwise together with its
/// rotation. A discrete `Φ` from the solution's own edge space is
/// orthogonal to the residual, so useful candidates come from outside it.
pub fn minorant_with(
    mesh: &Mesh,
    problem: &impl ControlProblem,
    h_tilde: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
    zeta_j_tilde: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
    phi: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
    rot_phi: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
) -> MinorantParts {
    let q = rule();
    let kinv = 1.0 / problem.kappa();
    let (mut linear, mut quadratic) = (0.0, 0.0);
    for c in 0..mesh.n_cells() {
        let g = mesh.geometry(c);
        let mu = mesh.mu(c);
        let omega = mesh.in_omega(c);
        let (mut l, mut qd) = (0.0, 0.0);
        for (lam, w) in q.iter() {
            let x = g.point(lam);
            let p = phi(c, &g, lam);
            let rot = rot_phi(c, &g, lam);
            let mut s = problem.applied_current(x, mu, omega);
            if omega {
                s = add(s, zeta_j_tilde(c, &g, lam));
                qd += w * kinv * norm2(p);
            }
            l += w * 2.0 * (dot(s, p) - dot(h_tilde(c, &g, lam), rot));
            qd += w * norm2(rot) / mu;
        }
        linear += g.volume * l;
        quadratic += g.volume * qd;
    }
    MinorantParts { linear, quadratic }
}
