//! Conforming tetrahedral meshes of axis-aligned boxes, with entity
//! connectivity, control-subdomain tagging and newest-vertex bisection.
//!
//! Every cell stores its vertices in bisection order together with a tag
//! `k ∈ {1, 2, 3}`; the refinement edge is `(v0, v_k)`. Splitting follows
//! Maubach's rule, which on a Kuhn-subdivided grid reproduces newest-vertex
//! bisection and keeps the number of similarity classes finite.

use std::collections::HashMap;

use thiserror::Error;

use crate::geometry::{midpoint, TetGeometry, Vec3};

/// Local edge numbering as pairs of local vertex positions.
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
/// Local face `i` is the face opposite local vertex `i`.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

const NONE: usize = usize::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("control box is not aligned with the {n}-grid of the domain (axis {axis})")]
    NotGridAligned { n: usize, axis: usize },
    #[error("control box is not contained in the domain")]
    ControlOutsideDomain,
    #[error("marked cell {0} out of range")]
    MarkedOutOfRange(usize),
    #[error("cell {0} marked twice")]
    DuplicateMark(usize),
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),
    #[error("conforming closure did not terminate after {0} sweeps")]
    ClosureDiverged(usize),
}

/// Axis-aligned box `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl BoxDomain {
    pub fn new(lo: Vec3, hi: Vec3) -> Result<Self, MeshError> {
        if (0..3).any(|i| !(lo[i] < hi[i])) {
            return Err(MeshError::InvalidArgument(format!("degenerate box {lo:?} .. {hi:?}")));
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn cube(lo: f64, hi: f64) -> Self {
        BoxDomain::new([lo; 3], [hi; 3]).expect("lo < hi")
    }

    pub fn unit() -> Self {
        Self::cube(0.0, 1.0)
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|i| self.hi[i] - self.lo[i]).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..3).map(|i| (self.hi[i] - self.lo[i]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains_point(&self, x: Vec3, tol: f64) -> bool {
        (0..3).all(|i| x[i] >= self.lo[i] - tol && x[i] <= self.hi[i] + tol)
    }

    pub fn contains_box(&self, other: &BoxDomain) -> bool {
        (0..3).all(|i| other.lo[i] >= self.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// True if `x` lies on the boundary of the box (within `tol`).
    pub fn on_boundary(&self, x: Vec3, tol: f64) -> bool {
        self.contains_point(x, tol) && (0..3).any(|i| (x[i] - self.lo[i]).abs() <= tol || (x[i] - self.hi[i]).abs() <= tol)
    }
}

/// A tetrahedron in bisection order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub vertices: [usize; 4],
    pub tag: u8,
}

impl Cell {
    pub fn refinement_edge(&self) -> [usize; 2] {
        [self.vertices[0], self.vertices[self.tag as usize]]
    }

    /// Split at the refinement edge, inserting vertex `z`.
    fn bisect(&self, z: usize) -> (Cell, Cell) {
        let k = self.tag as usize;
        let v = self.vertices;
        let mut first = v;
        first[k] = z;
        let mut second = [0; 4];
        let mut idx = 0;
        for &w in &v[1..=k] {
            second[idx] = w;
            idx += 1;
        }
        second[idx] = z;
        idx += 1;
        for &w in &v[(k + 1)..] {
            second[idx] = w;
            idx += 1;
        }
        let tag = if k > 1 { k as u8 - 1 } else { 3 };
        (Cell { vertices: first, tag }, Cell { vertices: second, tag })
    }
}

/// Cells selected for refinement.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MarkedSet {
    cells: Vec<usize>,
}

impl MarkedSet {
    pub fn new(cells: Vec<usize>, n_cells: usize) -> Result<Self, MeshError> {
        let mut seen = vec![false; n_cells];
        for &c in &cells {
            if c >= n_cells {
                return Err(MeshError::MarkedOutOfRange(c));
            }
            if seen[c] {
                return Err(MeshError::DuplicateMark(c));
            }
            seen[c] = true;
        }
        Ok(MarkedSet { cells })
    }

    pub fn all(n_cells: usize) -> Self {
        MarkedSet {
            cells: (0..n_cells).collect(),
        }
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Correspondence between a submesh and its parent mesh. All `*_to_parent`
/// vectors are indexed by submesh entity; `parent_*_to_sub` hold `None`
/// for parent entities outside the submesh.
#[derive(Debug, Clone)]
pub struct SubdomainMap {
    pub cell_to_parent: Vec<usize>,
    pub vertex_to_parent: Vec<usize>,
    pub edge_to_parent: Vec<usize>,
    pub face_to_parent: Vec<usize>,
    parent_cell_to_sub: Vec<usize>,
    parent_vertex_to_sub: Vec<usize>,
    parent_edge_to_sub: Vec<usize>,
    parent_face_to_sub: Vec<usize>,
}

fn opt(i: usize) -> Option<usize> {
    (i != NONE).then_some(i)
}

impl SubdomainMap {
    pub fn sub_cell(&self, parent: usize) -> Option<usize> {
        opt(self.parent_cell_to_sub[parent])
    }
    pub fn sub_vertex(&self, parent: usize) -> Option<usize> {
        opt(self.parent_vertex_to_sub[parent])
    }
    pub fn sub_edge(&self, parent: usize) -> Option<usize> {
        opt(self.parent_edge_to_sub[parent])
    }
    pub fn sub_face(&self, parent: usize) -> Option<usize> {
        opt(self.parent_face_to_sub[parent])
    }
    pub fn n_parent_edges(&self) -> usize {
        self.parent_edge_to_sub.len()
    }
    pub fn n_parent_vertices(&self) -> usize {
        self.parent_vertex_to_sub.len()
    }
    pub fn n_parent_faces(&self) -> usize {
        self.parent_face_to_sub.len()
    }
}

/// Conforming tetrahedral mesh with derived entity connectivity.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Vec3>,
    cells: Vec<Cell>,
    edges: Vec<[usize; 2]>,
    faces: Vec<[usize; 3]>,
    cell_edges: Vec<[usize; 6]>,
    cell_edge_signs: Vec<[f64; 6]>,
    cell_faces: Vec<[usize; 4]>,
    cell_face_signs: Vec<[f64; 4]>,
    face_cells: Vec<[usize; 2]>,
    boundary_faces: Vec<bool>,
    boundary_edges: Vec<bool>,
    boundary_vertices: Vec<bool>,
    in_omega: Vec<bool>,
    mu: Vec<f64>,
    eps: Vec<f64>,
    parent: Vec<usize>,
}

impl Mesh {
    /// Build a mesh from vertices and cells in bisection order. Per-cell data
    /// vectors must have one entry per cell.
    pub fn from_cells(
        vertices: Vec<Vec3>,
        cells: Vec<Cell>,
        in_omega: Vec<bool>,
        mu: Vec<f64>,
        parent: Vec<usize>,
    ) -> Result<Self, MeshError> {
        let nc = cells.len();
        if in_omega.len() != nc || mu.len() != nc || parent.len() != nc {
            return Err(MeshError::InvalidArgument("per-cell data length mismatch".into()));
        }
        for c in &cells {
            if c.tag < 1 || c.tag > 3 || c.vertices.iter().any(|&v| v >= vertices.len()) {
                return Err(MeshError::InvalidArgument(format!("bad cell {c:?}")));
            }
        }

        // edges, numbered in lexicographic order of sorted vertex pairs
        let mut keys: Vec<([usize; 2], u32)> = Vec::with_capacity(6 * nc);
        for (ci, c) in cells.iter().enumerate() {
            for (l, [p, q]) in LOCAL_EDGES.iter().enumerate() {
                let (a, b) = (c.vertices[*p], c.vertices[*q]);
                keys.push(([a.min(b), a.max(b)], (ci * 6 + l) as u32));
            }
        }
        keys.sort_unstable();
        let mut edges = Vec::with_capacity(keys.len() / 4);
        let mut cell_edges = vec![[0usize; 6]; nc];
        let mut cell_edge_signs = vec![[1.0; 6]; nc];
        for (i, (k, slot)) in keys.iter().enumerate() {
            if i == 0 || keys[i - 1].0 != *k {
                edges.push(*k);
            }
            let (ci, l) = (*slot as usize / 6, *slot as usize % 6);
            cell_edges[ci][l] = edges.len() - 1;
            let [p, q] = LOCAL_EDGES[l];
            cell_edge_signs[ci][l] = if cells[ci].vertices[p] < cells[ci].vertices[q] { 1.0 } else { -1.0 };
        }
        drop(keys);

        let mut fkeys: Vec<([usize; 3], u32)> = Vec::with_capacity(4 * nc);
        for (ci, c) in cells.iter().enumerate() {
            for (l, f) in LOCAL_FACES.iter().enumerate() {
                let mut k = [c.vertices[f[0]], c.vertices[f[1]], c.vertices[f[2]]];
                k.sort_unstable();
                fkeys.push((k, (ci * 4 + l) as u32));
            }
        }
        fkeys.sort_unstable();
        let mut faces: Vec<[usize; 3]> = Vec::with_capacity(fkeys.len() / 2 + 1);
        let mut face_cells: Vec<[usize; 2]> = Vec::with_capacity(fkeys.len() / 2 + 1);
        let mut cell_faces = vec![[0usize; 4]; nc];
        let mut cell_face_signs = vec![[1.0; 4]; nc];
        for (i, (k, slot)) in fkeys.iter().enumerate() {
            let (ci, l) = (*slot as usize / 4, *slot as usize % 4);
            if i == 0 || fkeys[i - 1].0 != *k {
                faces.push(*k);
                face_cells.push([ci, NONE]);
            } else {
                let fc = face_cells.last_mut().expect("face exists");
                if fc[1] != NONE {
                    return Err(MeshError::NonConforming(format!("face {k:?} shared by more than two cells")));
                }
                fc[1] = ci;
            }
            let fi = faces.len() - 1;
            cell_faces[ci][l] = fi;
            // global normal (x_b - x_a) x (x_c - x_a) against the outward direction
            let [a, b, c] = *k;
            let n = crate::geometry::cross(
                crate::geometry::sub(vertices[b], vertices[a]),
                crate::geometry::sub(vertices[c], vertices[a]),
            );
            let opposite = vertices[cells[ci].vertices[l]];
            let out = crate::geometry::dot(n, crate::geometry::sub(vertices[a], opposite));
            cell_face_signs[ci][l] = if out > 0.0 { 1.0 } else { -1.0 };
        }
        drop(fkeys);

        let mut boundary_faces = vec![false; faces.len()];
        let mut boundary_edges = vec![false; edges.len()];
        let mut boundary_vertices = vec![false; vertices.len()];
        for (ci, c) in cells.iter().enumerate() {
            for l in 0..4 {
                let f = cell_faces[ci][l];
                if face_cells[f][1] == NONE {
                    boundary_faces[f] = true;
                    for &p in &LOCAL_FACES[l] {
                        boundary_vertices[c.vertices[p]] = true;
                    }
                    for (le, [p, q]) in LOCAL_EDGES.iter().enumerate() {
                        if *p != l && *q != l {
                            boundary_edges[cell_edges[ci][le]] = true;
                        }
                    }
                }
            }
        }

        let eps = vec![1.0; nc];
        Ok(Mesh {
            vertices,
            cells,
            edges,
            faces,
            cell_edges,
            cell_edge_signs,
            cell_faces,
            cell_face_signs,
            face_cells,
            boundary_faces,
            boundary_edges,
            boundary_vertices,
            in_omega,
            mu,
            eps,
            parent,
        })
    }

    /// Build a mesh from unordered tetrahedra. The refinement edge of each cell
    /// is its longest edge, ties broken by the smallest sorted vertex pair.
    pub fn from_tetrahedra(
        vertices: Vec<Vec3>,
        tets: &[[usize; 4]],
        in_omega: Vec<bool>,
        mu: Vec<f64>,
    ) -> Result<Self, MeshError> {
        let cells = tets
            .iter()
            .map(|t| {
                let mut best: Option<(f64, [usize; 2])> = None;
                for [p, q] in LOCAL_EDGES {
                    let (a, b) = (t[p].min(t[q]), t[p].max(t[q]));
                    let len = crate::geometry::norm(crate::geometry::sub(vertices[a], vertices[b]));
                    let better = match best {
                        None => true,
                        Some((l, k)) => len > l * (1.0 + 1e-12) || ((len - l).abs() <= l * 1e-12 && [a, b] < k),
                    };
                    if better {
                        best = Some((len, [a, b]));
                    }
                }
                let [a, b] = best.expect("tet has edges").1;
                let mut rest: Vec<usize> = t.iter().copied().filter(|&v| v != a && v != b).collect();
                rest.sort_unstable();
                Cell {
                    vertices: [a, rest[0], rest[1], b],
                    tag: 3,
                }
            })
            .collect::<Vec<_>>();
        let n = cells.len();
        Self::from_cells(vertices, cells, in_omega, mu, (0..n).collect())
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }
    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }
    pub fn vertex(&self, v: usize) -> Vec3 {
        self.vertices[v]
    }
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }
    pub fn cell(&self, c: usize) -> &Cell {
        &self.cells[c]
    }
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }
    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }
    pub fn cell_edges(&self, c: usize) -> &[usize; 6] {
        &self.cell_edges[c]
    }
    pub fn cell_edge_signs(&self, c: usize) -> &[f64; 6] {
        &self.cell_edge_signs[c]
    }
    pub fn cell_faces(&self, c: usize) -> &[usize; 4] {
        &self.cell_faces[c]
    }
    pub fn cell_face_signs(&self, c: usize) -> &[f64; 4] {
        &self.cell_face_signs[c]
    }
    /// Cells adjacent to a face; the second entry is `None` on the boundary.
    pub fn face_cells(&self, f: usize) -> (usize, Option<usize>) {
        let [a, b] = self.face_cells[f];
        (a, opt(b))
    }
    pub fn is_boundary_face(&self, f: usize) -> bool {
        self.boundary_faces[f]
    }
    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edges[e]
    }
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertices[v]
    }
    pub fn in_omega(&self, c: usize) -> bool {
        self.in_omega[c]
    }
    pub fn in_omega_flags(&self) -> &[bool] {
        &self.in_omega
    }
    pub fn mu(&self, c: usize) -> f64 {
        self.mu[c]
    }
    pub fn mu_values(&self) -> &[f64] {
        &self.mu
    }
    pub fn eps(&self, c: usize) -> f64 {
        self.eps[c]
    }
    /// Index of the cell in the mesh this one was refined from.
    pub fn parent(&self, c: usize) -> usize {
        self.parent[c]
    }
    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    pub fn geometry(&self, c: usize) -> TetGeometry {
        let v = self.cells[c].vertices;
        TetGeometry::new([self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]], self.vertices[v[3]]])
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        self.geometry(c).volume
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_volume(c)).sum()
    }

    pub fn n_interior_edges(&self) -> usize {
        self.boundary_edges.iter().filter(|b| !**b).count()
    }

    pub fn n_interior_vertices(&self) -> usize {
        self.boundary_vertices.iter().filter(|b| !**b).count()
    }

    pub fn min_quality(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.geometry(c).quality()).fold(f64::INFINITY, f64::min)
    }

    /// Check that every face has one or two cells, that single-cell faces lie
    /// on the boundary of `domain`, and that all cells have positive volume.
    pub fn audit_conformity(&self, domain: &BoxDomain) -> Result<(), MeshError> {
        let tol = 1e-12 * domain.diameter();
        for (f, vs) in self.faces.iter().enumerate() {
            if self.face_cells[f][1] != NONE {
                continue;
            }
            let on_plane = (0..3).any(|axis| {
                [domain.lo[axis], domain.hi[axis]]
                    .iter()
                    .any(|&p| vs.iter().all(|&v| (self.vertices[v][axis] - p).abs() <= tol))
            });
            if !on_plane {
                return Err(MeshError::NonConforming(format!("interior face {vs:?} has a single cell")));
            }
        }
        for c in 0..self.n_cells() {
            if !(self.cell_volume(c) > 0.0) {
                return Err(MeshError::NonConforming(format!("cell {c} has non-positive volume")));
            }
        }
        Ok(())
    }

    /// Structured mesh of `domain` with `n` subdivisions per axis, each grid
    /// cube split into the six Kuhn tetrahedra sharing its main diagonal.
    /// Cells with centroid inside `control` are tagged as control cells, and
    /// `mu` is sampled at cell centroids.
    pub fn build_structured_cube(
        domain: BoxDomain,
        n: usize,
        control: BoxDomain,
        mu: impl Fn(Vec3) -> f64,
    ) -> Result<Self, MeshError> {
        if n == 0 {
            return Err(MeshError::InvalidArgument("n must be positive".into()));
        }
        if !domain.contains_box(&control) {
            return Err(MeshError::ControlOutsideDomain);
        }
        for axis in 0..3 {
            let h = (domain.hi[axis] - domain.lo[axis]) / n as f64;
            for p in [control.lo[axis], control.hi[axis]] {
                let t = (p - domain.lo[axis]) / h;
                if (t - t.round()).abs() > 1e-9 {
                    return Err(MeshError::NotGridAligned { n, axis });
                }
            }
        }
        let m = n + 1;
        let idx = |i: usize, j: usize, k: usize| i + m * (j + m * k);
        let mut vertices = Vec::with_capacity(m * m * m);
        for k in 0..m {
            for j in 0..m {
                for i in 0..m {
                    let t = [i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64];
                    vertices.push([
                        domain.lo[0] + t[0] * (domain.hi[0] - domain.lo[0]),
                        domain.lo[1] + t[1] * (domain.hi[1] - domain.lo[1]),
                        domain.lo[2] + t[2] * (domain.hi[2] - domain.lo[2]),
                    ]);
                }
            }
        }
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut cells = Vec::with_capacity(6 * n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    for perm in PERMS {
                        let mut p = [i, j, k];
                        let mut vs = [idx(p[0], p[1], p[2]); 4];
                        for (s, &axis) in perm.iter().enumerate() {
                            p[axis] += 1;
                            vs[s + 1] = idx(p[0], p[1], p[2]);
                        }
                        cells.push(Cell { vertices: vs, tag: 3 });
                    }
                }
            }
        }
        let mut in_omega = Vec::with_capacity(cells.len());
        let mut mus = Vec::with_capacity(cells.len());
        for c in &cells {
            let g = TetGeometry::new(c.vertices.map(|v| vertices[v]));
            let x = g.centroid();
            in_omega.push(control.contains_point(x, 0.0));
            mus.push(mu(x));
        }
        let nc = cells.len();
        Self::from_cells(vertices, cells, in_omega, mus, (0..nc).collect())
    }

    /// Bisect all marked cells at their refinement edges and close the mesh
    /// conformingly by recursive bisection of cells with hanging edge
    /// midpoints. The genealogy of the result points into `self`.
    pub fn bisect(&self, marked: &MarkedSet) -> Result<Mesh, MeshError> {
        let nc = self.n_cells();
        let mut flags = vec![false; nc];
        for &c in marked.cells() {
            if c >= nc {
                return Err(MeshError::MarkedOutOfRange(c));
            }
            flags[c] = true;
        }
        let mut vertices = self.vertices.clone();
        let mut cells: Vec<(Cell, usize)> = self.cells.iter().copied().zip(0..nc).collect();
        let mut midpoints: HashMap<[usize; 2], usize> = HashMap::new();
        const MAX_SWEEPS: usize = 200;
        let mut sweeps = 0;
        loop {
            if !flags.iter().any(|f| *f) {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_SWEEPS {
                return Err(MeshError::ClosureDiverged(MAX_SWEEPS));
            }
            let mut next = Vec::with_capacity(cells.len() + flags.iter().filter(|f| **f).count());
            for ((cell, parent), flag) in cells.iter().zip(&flags) {
                if !*flag {
                    next.push((*cell, *parent));
                    continue;
                }
                let [a, b] = cell.refinement_edge();
                let key = [a.min(b), a.max(b)];
                let z = *midpoints.entry(key).or_insert_with(|| {
                    vertices.push(midpoint(vertices[a], vertices[b]));
                    vertices.len() - 1
                });
                let (c1, c2) = cell.bisect(z);
                next.push((c1, *parent));
                next.push((c2, *parent));
            }
            cells = next;
            flags = cells
                .iter()
                .map(|(c, _)| {
                    LOCAL_EDGES.iter().any(|[p, q]| {
                        let (a, b) = (c.vertices[*p], c.vertices[*q]);
                        midpoints.contains_key(&[a.min(b), a.max(b)])
                    })
                })
                .collect();
        }
        let in_omega = cells.iter().map(|(_, p)| self.in_omega[*p]).collect();
        let mu = cells.iter().map(|(_, p)| self.mu[*p]).collect();
        let parent = cells.iter().map(|(_, p)| *p).collect();
        let cells = cells.into_iter().map(|(c, _)| c).collect();
        let mut out = Mesh::from_cells(vertices, cells, in_omega, mu, parent)?;
        out.eps = out.parent.iter().map(|&p| self.eps[p]).collect();
        Ok(out)
    }

    /// One uniform refinement step: three full bisection sweeps, halving every
    /// cell diameter. The genealogy points into `self`.
    pub fn uniform_refine(&self) -> Result<Mesh, MeshError> {
        let mut mesh = self.clone();
        let mut parent: Vec<usize> = (0..self.n_cells()).collect();
        for _ in 0..3 {
            let next = mesh.bisect(&MarkedSet::all(mesh.n_cells()))?;
            parent = next.parent.iter().map(|&p| parent[p]).collect();
            mesh = next;
        }
        mesh.parent = parent;
        Ok(mesh)
    }

    /// Extract the submesh of cells satisfying `keep`, renumbering vertices
    /// in ascending parent order so entity orientations are preserved.
    pub fn extract(&self, keep: impl Fn(usize) -> bool) -> Result<(Mesh, SubdomainMap), MeshError> {
        let cell_to_parent: Vec<usize> = (0..self.n_cells()).filter(|&c| keep(c)).collect();
        let mut used = vec![false; self.n_vertices()];
        for &c in &cell_to_parent {
            for &v in &self.cells[c].vertices {
                used[v] = true;
            }
        }
        let mut parent_vertex_to_sub = vec![NONE; self.n_vertices()];
        let mut vertex_to_parent = Vec::new();
        for (v, u) in used.iter().enumerate() {
            if *u {
                parent_vertex_to_sub[v] = vertex_to_parent.len();
                vertex_to_parent.push(v);
            }
        }
        let vertices = vertex_to_parent.iter().map(|&v| self.vertices[v]).collect();
        let cells: Vec<Cell> = cell_to_parent
            .iter()
            .map(|&c| {
                let cell = self.cells[c];
                Cell {
                    vertices: cell.vertices.map(|v| parent_vertex_to_sub[v]),
                    tag: cell.tag,
                }
            })
            .collect();
        let in_omega = cell_to_parent.iter().map(|&c| self.in_omega[c]).collect();
        let mu = cell_to_parent.iter().map(|&c| self.mu[c]).collect();
        let n = cells.len();
        let mut sub = Mesh::from_cells(vertices, cells, in_omega, mu, (0..n).collect())?;
        sub.eps = cell_to_parent.iter().map(|&c| self.eps[c]).collect();

        let mut parent_cell_to_sub = vec![NONE; self.n_cells()];
        let mut edge_to_parent = vec![NONE; sub.n_edges()];
        let mut face_to_parent = vec![NONE; sub.n_faces()];
        let mut parent_edge_to_sub = vec![NONE; self.n_edges()];
        let mut parent_face_to_sub = vec![NONE; self.n_faces()];
        for (sc, &pc) in cell_to_parent.iter().enumerate() {
            parent_cell_to_sub[pc] = sc;
            for l in 0..6 {
                let (se, pe) = (sub.cell_edges[sc][l], self.cell_edges[pc][l]);
                edge_to_parent[se] = pe;
                parent_edge_to_sub[pe] = se;
            }
            for l in 0..4 {
                let (sf, pf) = (sub.cell_faces[sc][l], self.cell_faces[pc][l]);
                face_to_parent[sf] = pf;
                parent_face_to_sub[pf] = sf;
            }
        }
        Ok((
            sub,
            SubdomainMap {
                cell_to_parent,
                vertex_to_parent,
                edge_to_parent,
                face_to_parent,
                parent_cell_to_sub,
                parent_vertex_to_sub,
                parent_edge_to_sub,
                parent_face_to_sub,
            },
        ))
    }

    /// Submesh of the control cells.
    pub fn extract_omega(&self) -> Result<(Mesh, SubdomainMap), MeshError> {
        self.extract(|c| self.in_omega[c])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_mesh() -> Mesh {
        Mesh::build_structured_cube(BoxDomain::unit(), 1, BoxDomain::unit(), |_| 1.0).unwrap()
    }

    #[test]
    fn single_cube_has_six_kuhn_cells() {
        let m = unit_mesh();
        assert_eq!(m.n_vertices(), 8);
        assert_eq!(m.n_cells(), 6);
        assert_eq!(m.n_edges(), 19);
        assert!((m.total_volume() - 1.0).abs() < 1e-15);
        m.audit_conformity(&BoxDomain::unit()).unwrap();
        // refinement edge is the main diagonal, the longest edge
        for c in m.cells() {
            assert_eq!(c.refinement_edge(), [0, 7]);
        }
    }

    #[test]
    fn benchmark_domain_counts() {
        let omega = BoxDomain::cube(0.0, 0.5);
        let dom = BoxDomain::cube(-0.5, 1.0);
        let m = Mesh::build_structured_cube(dom, 6, omega, |_| 1.0).unwrap();
        assert_eq!(m.n_vertices(), 343);
        assert_eq!(m.n_cells(), 1296);
        assert!((m.total_volume() - 3.375).abs() / 3.375 < 1e-12);
        assert_eq!(m.in_omega_flags().iter().filter(|b| **b).count(), 6 * 8);
        assert_eq!(
            Mesh::build_structured_cube(dom, 5, omega, |_| 1.0).unwrap_err(),
            MeshError::NotGridAligned { n: 5, axis: 0 }
        );
        assert!(matches!(
            Mesh::build_structured_cube(dom, 0, omega, |_| 1.0),
            Err(MeshError::InvalidArgument(_))
        ));
        assert_eq!(
            Mesh::build_structured_cube(omega, 2, dom, |_| 1.0).unwrap_err(),
            MeshError::ControlOutsideDomain
        );
    }

    #[test]
    fn bisect_one_cell() {
        let m = unit_mesh();
        let r = m.bisect(&MarkedSet::new(vec![2], 6).unwrap()).unwrap();
        r.audit_conformity(&BoxDomain::unit()).unwrap();
        // the main diagonal is shared by all six cells, so closure bisects all
        assert_eq!(r.n_cells(), 12);
        for p in 0..6 {
            let kids: Vec<usize> = (0..r.n_cells()).filter(|&c| r.parent(c) == p).collect();
            let v: f64 = kids.iter().map(|&c| r.cell_volume(c)).sum();
            assert!((v - m.cell_volume(p)).abs() < 1e-15);
        }
    }

    #[test]
    fn bisect_single_tetrahedron_marks_only_that_cell() {
        let verts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let m = Mesh::from_tetrahedra(verts, &[[0, 1, 2, 3]], vec![true], vec![1.0]).unwrap();
        let r = m.bisect(&MarkedSet::all(1)).unwrap();
        assert_eq!(r.n_cells(), 2);
        assert!((r.total_volume() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn marked_set_validation() {
        assert_eq!(MarkedSet::new(vec![1, 1], 3).unwrap_err(), MeshError::DuplicateMark(1));
        assert_eq!(MarkedSet::new(vec![3], 3).unwrap_err(), MeshError::MarkedOutOfRange(3));
    }

    #[test]
    fn uniform_refine_gives_eight_children() {
        let m = unit_mesh();
        let r = m.uniform_refine().unwrap();
        assert_eq!(r.n_cells(), 48);
        assert_eq!(r.n_vertices(), 27);
        r.audit_conformity(&BoxDomain::unit()).unwrap();
        for c in 0..r.n_cells() {
            let p = r.parent(c);
            assert!(m.geometry(p).contains(r.geometry(c).centroid(), 1e-12));
            assert!((r.geometry(c).diameter() - 0.5 * m.geometry(p).diameter()).abs() < 1e-12);
        }
    }

    #[test]
    fn submesh_preserves_orientation() {
        let dom = BoxDomain::cube(-0.5, 1.0);
        let m = Mesh::build_structured_cube(dom, 6, BoxDomain::cube(0.0, 0.5), |_| 1.0).unwrap();
        let (sub, map) = m.extract_omega().unwrap();
        assert_eq!(sub.n_vertices(), 27);
        for sc in 0..sub.n_cells() {
            let pc = map.cell_to_parent[sc];
            assert_eq!(sub.cell_edge_signs(sc), m.cell_edge_signs(pc));
            assert_eq!(sub.cell_face_signs(sc), m.cell_face_signs(pc));
        }
        for (se, &pe) in map.edge_to_parent.iter().enumerate() {
            assert_eq!(map.sub_edge(pe), Some(se));
            let [a, b] = sub.edges()[se];
            assert_eq!([map.vertex_to_parent[a], map.vertex_to_parent[b]], m.edges()[pe]);
        }
    }
}
