//! Assembly of the bilinear forms and load functionals on edge, nodal and
//! face spaces. Cellwise coefficients are passed as slices indexed by cell;
//! cells whose coefficient is exactly zero are skipped.

use crate::geometry::{dot, TetGeometry, Vec3};
use crate::mesh::{Mesh, SubdomainMap, LOCAL_EDGES};
use crate::quadrature::QuadratureRule;
use crate::spaces::{edge_basis, edge_curls, face_basis, face_div, DofMap, Entity, LocalDofs};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// `∫_T λ_a λ_b`.
#[inline]
fn lambda_mass(volume: f64, a: usize, b: usize) -> f64 {
    if a == b {
        volume / 10.0
    } else {
        volume / 20.0
    }
}

/// Local curl-curl matrix `∫_T curl w_i · curl w_j` in local orientation.
pub fn local_curl_curl(g: &TetGeometry) -> [[f64; 6]; 6] {
    let c = edge_curls(g);
    let mut k = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            k[i][j] = g.volume * dot(c[i], c[j]);
        }
    }
    k
}

/// Local Nédélec mass matrix `∫_T w_i · w_j` in local orientation (closed form).
pub fn local_edge_mass(g: &TetGeometry) -> [[f64; 6]; 6] {
    let gl = &g.grad_lambda;
    let gg = |a: usize, b: usize| dot(gl[a], gl[b]);
    let m = |a: usize, b: usize| lambda_mass(g.volume, a, b);
    let mut k = [[0.0; 6]; 6];
    for (i, &[p, q]) in LOCAL_EDGES.iter().enumerate() {
        for (j, &[r, s]) in LOCAL_EDGES.iter().enumerate() {
            k[i][j] = m(p, r) * gg(q, s) - m(p, s) * gg(q, r) - m(q, r) * gg(p, s) + m(q, s) * gg(p, r);
        }
    }
    k
}

/// Local P1 stiffness `∫_T ∇λ_a · ∇λ_b`.
pub fn local_stiffness(g: &TetGeometry) -> [[f64; 4]; 4] {
    let mut k = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            k[a][b] = g.volume * dot(g.grad_lambda[a], g.grad_lambda[b]);
        }
    }
    k
}

/// Local mixed matrix `∫_T w_i · ∇λ_a` (rows: nodal `a`, columns: edge `i`).
pub fn local_mixed(g: &TetGeometry) -> [[f64; 6]; 4] {
    // ∫ λ_p = |T|/4, so ∫ w_i = |T|/4 (∇λ_q − ∇λ_p)
    let mut k = [[0.0; 6]; 4];
    for a in 0..4 {
        for (i, &[p, q]) in LOCAL_EDGES.iter().enumerate() {
            let gl = &g.grad_lambda;
            k[a][i] = 0.25 * g.volume * (dot(gl[q], gl[a]) - dot(gl[p], gl[a]));
        }
    }
    k
}

/// Local Raviart–Thomas mass matrix `∫_T φ_i · φ_j` (degree-2 quadrature, exact).
pub fn local_rt_mass(g: &TetGeometry) -> [[f64; 4]; 4] {
    let rule = QuadratureRule::tet_degree2();
    let mut k = [[0.0; 4]; 4];
    for (lam, w) in rule.iter() {
        let phi = face_basis(g, g.point(lam));
        for i in 0..4 {
            for j in 0..4 {
                k[i][j] += w * g.volume * dot(phi[i], phi[j]);
            }
        }
    }
    k
}

fn scatter<const N: usize>(b: &mut TripletBuilder, rows: &LocalDofs, cols: &LocalDofs, local: &[[f64; N]], scale: f64) {
    for i in 0..rows.len {
        let Some(gi) = rows.dofs[i] else { continue };
        for j in 0..cols.len {
            let Some(gj) = cols.dofs[j] else { continue };
            b.push(gi, gj, scale * rows.signs[i] * cols.signs[j] * local[i][j]);
        }
    }
}

fn assemble_square<const N: usize>(
    dm: &DofMap,
    coeff: &[f64],
    local: impl Fn(&TetGeometry) -> [[f64; N]; N],
) -> CsrMatrix {
    let mesh = dm.mesh();
    assert_eq!(coeff.len(), mesh.n_cells());
    let n = dm.n_dofs();
    let mut b = TripletBuilder::with_capacity(n, n, N * N * mesh.n_cells());
    for (c, &w) in coeff.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let loc = dm.local(c);
        let k = local(&mesh.geometry(c));
        scatter(&mut b, &loc, &loc, &k, w);
    }
    b.build().expect("assembled entries are finite and in bounds")
}

/// `(coeff curl u, curl v)` on an edge space.
pub fn assemble_curl_curl(dm: &DofMap, coeff: &[f64]) -> CsrMatrix {
    assert_eq!(dm.kind().entity(), Entity::Edge);
    assemble_square(dm, coeff, local_curl_curl)
}

/// `(weight u, v)` on an edge space.
pub fn assemble_vector_mass(dm: &DofMap, weight: &[f64]) -> CsrMatrix {
    assert_eq!(dm.kind().entity(), Entity::Edge);
    assemble_square(dm, weight, local_edge_mass)
}

/// `(coeff ∇u, ∇v)` on a nodal space.
pub fn assemble_nodal_stiffness(dm: &DofMap, coeff: &[f64]) -> CsrMatrix {
    assert_eq!(dm.kind().entity(), Entity::Vertex);
    assemble_square(dm, coeff, local_stiffness)
}

/// `(weight u, v)` on a face space.
pub fn assemble_rt_mass(dm: &DofMap, weight: &[f64]) -> CsrMatrix {
    assert_eq!(dm.kind().entity(), Entity::Face);
    assemble_square(dm, weight, local_rt_mass)
}

/// `(weight div u, div v)` on a face space.
pub fn assemble_div_div(dm: &DofMap, weight: &[f64]) -> CsrMatrix {
    assert_eq!(dm.kind().entity(), Entity::Face);
    assemble_square(dm, weight, |g| {
        let d = face_div(g);
        [[g.volume * d * d; 4]; 4]
    })
}

/// `b(Φ, u) = (Φ, ∇u)` with rows indexed by nodal dofs and columns by edge
/// dofs. Both spaces must live on the same mesh.
pub fn assemble_mixed_b(edge: &DofMap, nodal: &DofMap) -> CsrMatrix {
    assert_eq!(edge.kind().entity(), Entity::Edge);
    assert_eq!(nodal.kind().entity(), Entity::Vertex);
    let mesh = edge.mesh();
    assert_eq!(mesh.n_cells(), nodal.mesh().n_cells());
    let mut b = TripletBuilder::with_capacity(nodal.n_dofs(), edge.n_dofs(), 24 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let k = local_mixed(&mesh.geometry(c));
        scatter(&mut b, &nodal.local(c), &edge.local(c), &k, 1.0);
    }
    b.build().expect("assembled entries are finite and in bounds")
}

/// `c(Φ, v) = scale (ζ*Φ, ∇v)_ω` with rows indexed by nodal dofs on the
/// ω-submesh `sub` and columns by dofs of the parent edge space.
pub fn assemble_mixed_c(sub: &Mesh, map: &SubdomainMap, parent_edge: &DofMap, omega_nodal: &DofMap, scale: f64) -> CsrMatrix {
    assert_eq!(parent_edge.kind().entity(), Entity::Edge);
    assert_eq!(omega_nodal.kind().entity(), Entity::Vertex);
    assert_eq!(sub.n_vertices(), omega_nodal.n_entities());
    let mut b = TripletBuilder::with_capacity(omega_nodal.n_dofs(), parent_edge.n_dofs(), 24 * sub.n_cells());
    for c in 0..sub.n_cells() {
        let es = sub.cell_edges(c);
        let mut cols = LocalDofs {
            len: 6,
            dofs: [None; 6],
            signs: *sub.cell_edge_signs(c),
        };
        for l in 0..6 {
            cols.dofs[l] = parent_edge.entity_dof(map.edge_to_parent[es[l]]);
        }
        let k = local_mixed(&sub.geometry(c));
        scatter(&mut b, &omega_nodal.local(c), &cols, &k, scale);
    }
    b.build().expect("assembled entries are finite and in bounds")
}

/// Functional `Φ ↦ Σ_T ∫_T f₀·Φ + f₁·curl Φ` on an edge space, where
/// `f(cell, geometry, λ)` returns `(f₀, f₁)` at a quadrature point.
pub fn assemble_edge_functional(
    dm: &DofMap,
    rule: &QuadratureRule,
    cells: impl Fn(usize) -> bool,
    f: impl Fn(usize, &TetGeometry, &[f64; 4]) -> (Vec3, Vec3),
) -> Vec<f64> {
    assert_eq!(dm.kind().entity(), Entity::Edge);
    let mesh = dm.mesh();
    let mut out = vec![0.0; dm.n_dofs()];
    for c in (0..mesh.n_cells()).filter(|&c| cells(c)) {
        let g = mesh.geometry(c);
        let curls = edge_curls(&g);
        let mut local = [0.0; 6];
        for (lam, w) in rule.iter() {
            let (f0, f1) = f(c, &g, lam);
            let basis = edge_basis(&g, lam);
            for l in 0..6 {
                local[l] += w * (dot(f0, basis[l]) + dot(f1, curls[l]));
            }
        }
        let loc = dm.local(c);
        for l in 0..6 {
            if let Some(d) = loc.dofs[l] {
                out[d] += g.volume * loc.signs[l] * local[l];
            }
        }
    }
    out
}

/// Load `f(Φ) = (ζ j_d + J, Φ) − (H_d, curl Φ)` with degree-5 quadrature.
/// `source` evaluates `ζ j_d + J` and `h_d` evaluates `H_d` at a quadrature
/// point of a cell.
pub fn assemble_load(
    dm: &DofMap,
    source: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
    h_d: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
) -> Vec<f64> {
    let rule = QuadratureRule::tet_degree5();
    assemble_edge_functional(dm, &rule, |_| true, |c, g, lam| {
        let h = h_d(c, g, lam);
        (source(c, g, lam), [-h[0], -h[1], -h[2]])
    })
}

/// Functional `Υ ↦ Σ_T ∫_T f·Υ` on a face space.
pub fn assemble_face_functional(
    dm: &DofMap,
    rule: &QuadratureRule,
    f: impl Fn(usize, &TetGeometry, &[f64; 4]) -> Vec3,
) -> Vec<f64> {
    assert_eq!(dm.kind().entity(), Entity::Face);
    let mesh = dm.mesh();
    let mut out = vec![0.0; dm.n_dofs()];
    for c in 0..mesh.n_cells() {
        let g = mesh.geometry(c);
        let mut local = [0.0; 4];
        for (lam, w) in rule.iter() {
            let v = f(c, &g, lam);
            let basis = face_basis(&g, g.point(lam));
            for l in 0..4 {
                local[l] += w * dot(v, basis[l]);
            }
        }
        let loc = dm.local(c);
        for l in 0..4 {
            if let Some(d) = loc.dofs[l] {
                out[d] += g.volume * loc.signs[l] * local[l];
            }
        }
    }
    out
}

/// Cellwise coefficient vector `μ_T^{-1}`.
pub fn inverse_mu(mesh: &Mesh) -> Vec<f64> {
    mesh.mu_values().iter().map(|m| 1.0 / m).collect()
}

/// Cellwise indicator of ω scaled by `s`.
pub fn omega_weight(mesh: &Mesh, s: f64) -> Vec<f64> {
    mesh.in_omega_flags().iter().map(|&w| if w { s } else { 0.0 }).collect()
}
