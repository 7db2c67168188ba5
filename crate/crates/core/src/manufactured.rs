//! Closed-form benchmark with a known optimal control.
//!
//! `Ω = (−0.5, 1)³`, `ω = (0, 0.5)³`, `μ = 10` on `(−0.5, 0)² × (−0.5, 1)`
//! and 1 elsewhere, `E = μ²/(8π²) sin²(2πx₁) sin²(2πx₂) e₃`, `Ē = E` outside
//! the column `(0, 0.5)² × (−0.5, 1)` and 0 inside it, `H̄ = μ⁻¹ rot E`,
//! `H_d = H̄` inside the column and 0 outside, `j̄ = 100 (s₁c₂, −s₂c₁, 0)`,
//! `j_d = j̄` and `J = rot H̄ − ζ j̄`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::geometry::{norm2, sub, TetGeometry, Vec3};
use crate::mesh::{BoxDomain, Mesh, MeshError};
use crate::optimality::ControlProblem;
use crate::quadrature::QuadratureRule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("point {0:?} lies outside the computational domain")]
    OutsideDomain(Vec3),
    #[error("identity `{identity}` violated at {point:?}: residual {residual:e}")]
    Inconsistent {
        identity: &'static str,
        point: Vec3,
        residual: f64,
    },
}

/// All exact fields at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactValues {
    pub mu: f64,
    pub e_bar: Vec3,
    pub h_bar: Vec3,
    /// `None` outside the control domain.
    pub j_bar: Option<Vec3>,
    pub applied_current: Vec3,
    pub desired_field: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    pub kappa: f64,
}

impl Default for ManufacturedCase {
    fn default() -> Self {
        ManufacturedCase { kappa: 1.0 }
    }
}

#[inline]
fn trig(x: Vec3) -> (f64, f64, f64, f64) {
    let (s1, c1) = (2.0 * PI * x[0]).sin_cos();
    let (s2, c2) = (2.0 * PI * x[1]).sin_cos();
    (s1, c1, s2, c2)
}

impl ManufacturedCase {
    pub fn new(kappa: f64) -> Self {
        ManufacturedCase { kappa }
    }

    pub fn domain() -> BoxDomain {
        BoxDomain::cube(-0.5, 1.0)
    }

    pub fn control() -> BoxDomain {
        BoxDomain::cube(0.0, 0.5)
    }

    pub fn mu(x: Vec3) -> f64 {
        if x[0] < 0.0 && x[1] < 0.0 {
            10.0
        } else {
            1.0
        }
    }

    /// Inside the column `(0, 0.5)² × (−0.5, 1)` where `Ē` vanishes.
    pub fn in_column(x: Vec3) -> bool {
        x[0] > 0.0 && x[0] < 0.5 && x[1] > 0.0 && x[1] < 0.5
    }

    pub fn in_control(x: Vec3) -> bool {
        Self::control().contains_point(x, 0.0)
    }

    /// Initial structured mesh with `n` subdivisions per axis.
    pub fn initial_mesh(n: usize) -> Result<Mesh, MeshError> {
        Mesh::build_structured_cube(Self::domain(), n, Self::control(), Self::mu)
    }

    pub fn e_field(x: Vec3, mu: f64) -> Vec3 {
        let (s1, _, s2, _) = trig(x);
        [0.0, 0.0, mu * mu / (8.0 * PI * PI) * s1 * s1 * s2 * s2]
    }

    pub fn rot_e(x: Vec3, mu: f64) -> Vec3 {
        let (s1, c1, s2, c2) = trig(x);
        let a = mu * mu / (2.0 * PI);
        [a * s1 * s1 * s2 * c2, -a * s1 * c1 * s2 * s2, 0.0]
    }

    pub fn e_bar(x: Vec3, mu: f64) -> Vec3 {
        if Self::in_column(x) {
            [0.0; 3]
        } else {
            Self::e_field(x, mu)
        }
    }

    pub fn rot_e_bar(x: Vec3, mu: f64) -> Vec3 {
        if Self::in_column(x) {
            [0.0; 3]
        } else {
            Self::rot_e(x, mu)
        }
    }

    pub fn h_bar(x: Vec3, mu: f64) -> Vec3 {
        let r = Self::rot_e(x, mu);
        [r[0] / mu, r[1] / mu, 0.0]
    }

    pub fn rot_h_bar(x: Vec3, mu: f64) -> Vec3 {
        let (s1, c1, s2, c2) = trig(x);
        [0.0, 0.0, -mu * (c1 * c1 * s2 * s2 + s1 * s1 * c2 * c2 - 2.0 * s1 * s1 * s2 * s2)]
    }

    pub fn j_bar(x: Vec3) -> Vec3 {
        let (s1, c1, s2, c2) = trig(x);
        [100.0 * s1 * c2, -100.0 * s2 * c1, 0.0]
    }

    pub fn desired(x: Vec3) -> Vec3 {
        if Self::in_column(x) {
            Self::h_bar(x, 1.0)
        } else {
            [0.0; 3]
        }
    }

    pub fn applied(x: Vec3, mu: f64, in_omega: bool) -> Vec3 {
        let r = Self::rot_h_bar(x, mu);
        if in_omega {
            sub(r, Self::j_bar(x))
        } else {
            r
        }
    }

    /// Exact fields at a point, with `μ` and `ω`-membership taken from the
    /// point itself.
    pub fn eval_exact(&self, x: Vec3) -> Result<ExactValues, CaseError> {
        if !Self::domain().contains_point(x, 0.0) {
            return Err(CaseError::OutsideDomain(x));
        }
        let mu = Self::mu(x);
        let in_omega = Self::in_control(x);
        Ok(ExactValues {
            mu,
            e_bar: Self::e_bar(x, mu),
            h_bar: Self::h_bar(x, mu),
            j_bar: in_omega.then(|| Self::j_bar(x)),
            applied_current: Self::applied(x, mu, in_omega),
            desired_field: Self::desired(x),
        })
    }

    /// Check the defining identities with fourth-order central differences
    /// at `samples` random points per identity, staying away from material
    /// and column interfaces. Returns the largest residual seen.
    pub fn verify_consistency(&self, samples: usize, seed: u64) -> Result<f64, CaseError> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let h = 1e-3;
        let margin = 5.0 * h;
        let interfaces = [-0.5, 0.0, 0.5, 1.0];
        let away = |x: Vec3| (0..2).all(|k| interfaces.iter().all(|p| (x[k] - p).abs() > margin));
        let mut worst: f64 = 0.0;
        let mut check = |identity: &'static str, point: Vec3, residual: f64, scale: f64| {
            let r = residual / scale.max(1.0);
            worst = worst.max(r);
            if r > 1e-6 {
                Err(CaseError::Inconsistent { identity, point, residual: r })
            } else {
                Ok(())
            }
        };
        let mut drawn = 0;
        while drawn < samples {
            let x = [rng.gen_range(-0.5..1.0), rng.gen_range(-0.5..1.0), rng.gen_range(-0.5..1.0)];
            if !away(x) || (x[2] - 0.0).abs() < margin || (x[2] - 0.5).abs() < margin {
                continue;
            }
            drawn += 1;
            let mu = Self::mu(x);
            let in_omega = Self::in_control(x);
            let zeta_j = if in_omega { Self::j_bar(x) } else { [0.0; 3] };
            // rot H̄ = ζ j̄ + J
            let rh = fd_curl(|y| Self::h_bar(y, mu), x, h);
            let target = crate::geometry::add(zeta_j, Self::applied(x, mu, in_omega));
            check("rot H = zeta j + J", x, norm2(sub(rh, target)).sqrt(), norm2(target).sqrt())?;
            // analytic rot H̄ matches its finite-difference value
            let rh_exact = Self::rot_h_bar(x, mu);
            check("rot H analytic", x, norm2(sub(rh, rh_exact)).sqrt(), norm2(rh_exact).sqrt())?;
            // rot Ē = μ (H̄ − H_d)
            let col = Self::in_column(x);
            let re = fd_curl(|y| if col { [0.0; 3] } else { Self::e_field(y, mu) }, x, h);
            let rhs = crate::geometry::scale(mu, sub(Self::h_bar(x, mu), Self::desired(x)));
            check("rot E = mu (H - H_d)", x, norm2(sub(re, rhs)).sqrt(), norm2(rhs).sqrt())?;
            // div μH̄ = 0 and div Ē = 0
            let dh = fd_div(|y| crate::geometry::scale(mu, Self::h_bar(y, mu)), x, h);
            check("div mu H = 0", x, dh.abs(), 1.0)?;
            let de = fd_div(|y| Self::e_field(y, mu), x, h);
            check("div E = 0", x, de.abs(), 1.0)?;
            if in_omega {
                let dj = fd_div(Self::j_bar, x, h);
                check("div j = 0", x, dj.abs(), 1.0)?;
                // j_d is defined as j̄
                let jd = self.shift_control(x);
                check("j = j_d", x, norm2(sub(jd, Self::j_bar(x))).sqrt(), 1.0)?;
            }
        }
        // tangential trace of Ē on ∂Ω and normal trace of j̄ on ∂ω
        let dom = Self::domain();
        let ctl = Self::control();
        for _ in 0..samples {
            let (axis, side) = (rng.gen_range(0..3), rng.gen_range(0..2));
            let mut x = [rng.gen_range(-0.5..1.0), rng.gen_range(-0.5..1.0), rng.gen_range(-0.5..1.0)];
            x[axis] = if side == 0 { dom.lo[axis] } else { dom.hi[axis] };
            let e = Self::e_bar(x, Self::mu(x));
            let mut t = e;
            t[axis] = 0.0;
            check("n x E = 0 on boundary", x, norm2(t).sqrt(), 1.0)?;
            let mut y = [rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5)];
            y[axis] = if side == 0 { ctl.lo[axis] } else { ctl.hi[axis] };
            check("n . j = 0 on control boundary", y, Self::j_bar(y)[axis].abs(), 1.0)?;
        }
        Ok(worst)
    }
}

impl ControlProblem for ManufacturedCase {
    fn kappa(&self) -> f64 {
        self.kappa
    }

    fn applied_current(&self, x: Vec3, mu: f64, in_omega: bool) -> Vec3 {
        Self::applied(x, mu, in_omega)
    }

    fn desired_field(&self, x: Vec3) -> Vec3 {
        Self::desired(x)
    }

    fn shift_control(&self, x: Vec3) -> Vec3 {
        Self::j_bar(x)
    }
}

fn fd_partial(f: &impl Fn(Vec3) -> Vec3, x: Vec3, axis: usize, h: f64) -> Vec3 {
    let at = |t: f64| {
        let mut y = x;
        y[axis] += t;
        f(y)
    };
    let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
    [0, 1, 2].map(|k| (8.0 * (p1[k] - m1[k]) - (p2[k] - m2[k])) / (12.0 * h))
}

/// Fourth-order finite-difference curl.
pub fn fd_curl(f: impl Fn(Vec3) -> Vec3, x: Vec3, h: f64) -> Vec3 {
    let d = [0, 1, 2].map(|a| fd_partial(&f, x, a, h));
    [d[1][2] - d[2][1], d[2][0] - d[0][2], d[0][1] - d[1][0]]
}

/// Fourth-order finite-difference divergence.
pub fn fd_div(f: impl Fn(Vec3) -> Vec3, x: Vec3, h: f64) -> f64 {
    (0..3).map(|a| fd_partial(&f, x, a, h)[a]).sum()
}

/// Errors in the triple norm, with per-cell squared contributions
/// `μ|H̄ − H̄_h|² + κ|j̄ − j̄_h|²` (the latter on control cells only).
#[derive(Debug, Clone, PartialEq)]
pub struct TripleNormError {
    pub error_h: f64,
    pub error_j: f64,
    pub total: f64,
    pub cell_squared: Vec<f64>,
}

/// `‖H̄ − H̄_h‖_μ`, `‖j̄ − j̄_h‖_ω` and the combined norm, by degree-5
/// cellwise quadrature on `mesh`. The discrete fields are evaluated per
/// cell and barycentric point; `j_h` is only called on control cells.
pub fn triple_norm_error(
    mesh: &Mesh,
    h_h: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
    j_h: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
    kappa: f64,
) -> TripleNormError {
    triple_norm_error_with_rule(mesh, &QuadratureRule::tet_degree5(), h_h, j_h, kappa)
}

pub fn triple_norm_error_with_rule(
    mesh: &Mesh,
    rule: &QuadratureRule,
    h_h: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
    j_h: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
    kappa: f64,
) -> TripleNormError {
    let mut eh2 = 0.0;
    let mut ej2 = 0.0;
    let mut cell_squared = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let g = mesh.geometry(c);
        let mu = mesh.mu(c);
        let omega = mesh.in_omega(c);
        let (mut h2, mut j2) = (0.0, 0.0);
        for (lam, w) in rule.iter() {
            let x = g.point(lam);
            h2 += w * mu * norm2(sub(ManufacturedCase::h_bar(x, mu), h_h(c, &g, lam)));
            if omega {
                j2 += w * norm2(sub(ManufacturedCase::j_bar(x), j_h(c, &g, lam)));
            }
        }
        h2 *= g.volume;
        j2 *= g.volume;
        eh2 += h2;
        ej2 += j2;
        cell_squared.push(h2 + kappa * j2);
    }
    TripleNormError {
        error_h: eh2.sqrt(),
        error_j: ej2.sqrt(),
        total: (eh2 + kappa * ej2).sqrt(),
        cell_squared,
    }
}
