//! Lowest-order finite element spaces: Nédélec edge elements, continuous
//! P1 nodal elements and Raviart–Thomas face elements, with their dof maps,
//! coefficient fields and canonical interpolation operators.
//!
//! Global orientation of edges and faces follows ascending vertex indices;
//! the per-cell signs stored on [`Mesh`] convert between local and global
//! orientation.

use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{cross, dot, norm2, scale, sub, TetGeometry, Vec3};
use crate::mesh::{Mesh, SubdomainMap, LOCAL_EDGES};
use crate::quadrature::{LineRule, TriangleRule};

const NONE: usize = usize::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("space {0:?} must be built on a mesh whose cells all lie in the control domain")]
    NotOmegaMesh(SpaceKind),
    #[error("coefficient vector has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("coefficient {0} is not finite")]
    NonFinite(usize),
    #[error("incompatible spaces: {0}")]
    Incompatible(String),
}

/// Which finite element space a dof map describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    /// Nédélec edge elements with vanishing tangential trace on the boundary.
    EdgeZeroTrace,
    /// Nédélec edge elements without boundary condition.
    EdgeFree,
    /// Continuous P1 with vanishing trace on the boundary.
    NodalZeroTrace,
    /// Continuous P1 on a control-domain submesh, no boundary condition.
    NodalOmega,
    /// Raviart–Thomas on a control-domain submesh with vanishing normal trace.
    FaceZeroTraceOmega,
    /// Raviart–Thomas without boundary condition.
    FaceFree,
}

/// Geometric entity carrying the dofs of a space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entity {
    Vertex,
    Edge,
    Face,
}

impl SpaceKind {
    pub fn entity(self) -> Entity {
        match self {
            SpaceKind::EdgeZeroTrace | SpaceKind::EdgeFree => Entity::Edge,
            SpaceKind::NodalZeroTrace | SpaceKind::NodalOmega => Entity::Vertex,
            SpaceKind::FaceZeroTraceOmega | SpaceKind::FaceFree => Entity::Face,
        }
    }

    pub fn local_dofs(self) -> usize {
        match self.entity() {
            Entity::Edge => 6,
            Entity::Vertex | Entity::Face => 4,
        }
    }
}

/// Local-to-global dof table of one cell. Constrained dofs have `None`.
#[derive(Debug, Clone, Copy)]
pub struct LocalDofs {
    pub len: usize,
    pub dofs: [Option<usize>; 6],
    pub signs: [f64; 6],
}

/// Degree-of-freedom map of a space on a mesh.
#[derive(Debug, Clone)]
pub struct DofMap {
    kind: SpaceKind,
    mesh: Arc<Mesh>,
    entity_dof: Vec<usize>,
    dof_entity: Vec<usize>,
}

impl DofMap {
    /// Number the unconstrained entities of `kind` on `mesh` in entity order.
    pub fn build(mesh: Arc<Mesh>, kind: SpaceKind) -> Result<Self, SpaceError> {
        if matches!(kind, SpaceKind::NodalOmega | SpaceKind::FaceZeroTraceOmega)
            && !(0..mesh.n_cells()).all(|c| mesh.in_omega(c))
        {
            return Err(SpaceError::NotOmegaMesh(kind));
        }
        let (n, constrained): (usize, Box<dyn Fn(usize) -> bool>) = match kind {
            SpaceKind::EdgeZeroTrace => (mesh.n_edges(), Box::new(|e| mesh.is_boundary_edge(e))),
            SpaceKind::EdgeFree => (mesh.n_edges(), Box::new(|_| false)),
            SpaceKind::NodalZeroTrace => (mesh.n_vertices(), Box::new(|v| mesh.is_boundary_vertex(v))),
            SpaceKind::NodalOmega => (mesh.n_vertices(), Box::new(|_| false)),
            SpaceKind::FaceZeroTraceOmega => (mesh.n_faces(), Box::new(|f| mesh.is_boundary_face(f))),
            SpaceKind::FaceFree => (mesh.n_faces(), Box::new(|_| false)),
        };
        let mut entity_dof = vec![NONE; n];
        let mut dof_entity = Vec::with_capacity(n);
        for (e, slot) in entity_dof.iter_mut().enumerate() {
            if !constrained(e) {
                *slot = dof_entity.len();
                dof_entity.push(e);
            }
        }
        drop(constrained);
        Ok(DofMap {
            kind,
            mesh,
            entity_dof,
            dof_entity,
        })
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Number of free dofs.
    pub fn n_dofs(&self) -> usize {
        self.dof_entity.len()
    }

    pub fn n_entities(&self) -> usize {
        self.entity_dof.len()
    }

    /// Free dof carried by an entity, `None` if constrained.
    pub fn entity_dof(&self, entity: usize) -> Option<usize> {
        let d = self.entity_dof[entity];
        (d != NONE).then_some(d)
    }

    pub fn dof_entity(&self, dof: usize) -> usize {
        self.dof_entity[dof]
    }

    pub fn is_constrained(&self, entity: usize) -> bool {
        self.entity_dof[entity] == NONE
    }

    pub fn local(&self, cell: usize) -> LocalDofs {
        let mut out = LocalDofs {
            len: self.kind.local_dofs(),
            dofs: [None; 6],
            signs: [1.0; 6],
        };
        match self.kind.entity() {
            Entity::Edge => {
                let es = self.mesh.cell_edges(cell);
                out.signs = *self.mesh.cell_edge_signs(cell);
                for l in 0..6 {
                    out.dofs[l] = self.entity_dof(es[l]);
                }
            }
            Entity::Vertex => {
                let vs = self.mesh.cell(cell).vertices;
                for l in 0..4 {
                    out.dofs[l] = self.entity_dof(vs[l]);
                }
            }
            Entity::Face => {
                let fs = self.mesh.cell_faces(cell);
                let sg = self.mesh.cell_face_signs(cell);
                for l in 0..4 {
                    out.dofs[l] = self.entity_dof(fs[l]);
                    out.signs[l] = sg[l];
                }
            }
        }
        out
    }
}

/// Nédélec basis functions `λ_p ∇λ_q − λ_q ∇λ_p` in local orientation.
#[inline]
pub fn edge_basis(g: &TetGeometry, lambda: &[f64; 4]) -> [Vec3; 6] {
    let mut out = [[0.0; 3]; 6];
    for (l, [p, q]) in LOCAL_EDGES.iter().enumerate() {
        let (gp, gq) = (g.grad_lambda[*p], g.grad_lambda[*q]);
        for k in 0..3 {
            out[l][k] = lambda[*p] * gq[k] - lambda[*q] * gp[k];
        }
    }
    out
}

/// Curls `2 ∇λ_p × ∇λ_q` of the local Nédélec basis.
#[inline]
pub fn edge_curls(g: &TetGeometry) -> [Vec3; 6] {
    let mut out = [[0.0; 3]; 6];
    for (l, [p, q]) in LOCAL_EDGES.iter().enumerate() {
        out[l] = scale(2.0, cross(g.grad_lambda[*p], g.grad_lambda[*q]));
    }
    out
}

/// Raviart–Thomas basis `(x − x_i) / (3|T|)` with unit outward flux through
/// the face opposite vertex `i`.
#[inline]
pub fn face_basis(g: &TetGeometry, x: Vec3) -> [Vec3; 4] {
    let s = 1.0 / (3.0 * g.volume);
    [0, 1, 2, 3].map(|i| scale(s, sub(x, g.vertices[i])))
}

/// Divergence of the local Raviart–Thomas basis.
#[inline]
pub fn face_div(g: &TetGeometry) -> f64 {
    1.0 / g.volume
}

/// Coefficient vector of a finite element function.
#[derive(Debug, Clone)]
pub struct FeField {
    dofmap: Arc<DofMap>,
    values: Vec<f64>,
}

impl FeField {
    pub fn zeros(dofmap: Arc<DofMap>) -> Self {
        let n = dofmap.n_dofs();
        FeField {
            dofmap,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(dofmap: Arc<DofMap>, values: Vec<f64>) -> Result<Self, SpaceError> {
        if values.len() != dofmap.n_dofs() {
            return Err(SpaceError::LengthMismatch {
                got: values.len(),
                expected: dofmap.n_dofs(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpaceError::NonFinite(i));
        }
        Ok(FeField { dofmap, values })
    }

    pub fn dofmap(&self) -> &Arc<DofMap> {
        &self.dofmap
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.dofmap.mesh()
    }

    pub fn kind(&self) -> SpaceKind {
        self.dofmap.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value attached to an entity (zero if constrained).
    pub fn entity_value(&self, entity: usize) -> f64 {
        self.dofmap.entity_dof(entity).map_or(0.0, |d| self.values[d])
    }

    /// Signed local coefficients of the cell's basis functions.
    pub fn local_coefficients(&self, cell: usize) -> [f64; 6] {
        let loc = self.dofmap.local(cell);
        let mut out = [0.0; 6];
        for l in 0..loc.len {
            if let Some(d) = loc.dofs[l] {
                out[l] = loc.signs[l] * self.values[d];
            }
        }
        out
    }

    /// Vector value in `cell` at barycentric point `lambda` (edge and face spaces).
    pub fn eval_vector(&self, cell: usize, g: &TetGeometry, lambda: &[f64; 4]) -> Vec3 {
        let c = self.local_coefficients(cell);
        let mut v = [0.0; 3];
        match self.kind().entity() {
            Entity::Edge => {
                let b = edge_basis(g, lambda);
                for l in 0..6 {
                    v = crate::geometry::axpy(c[l], b[l], v);
                }
            }
            Entity::Face => {
                let b = face_basis(g, g.point(lambda));
                for l in 0..4 {
                    v = crate::geometry::axpy(c[l], b[l], v);
                }
            }
            Entity::Vertex => panic!("eval_vector on a nodal field"),
        }
        v
    }

    /// Scalar value in `cell` at barycentric point `lambda` (nodal spaces).
    pub fn eval_scalar(&self, cell: usize, lambda: &[f64; 4]) -> f64 {
        assert_eq!(self.kind().entity(), Entity::Vertex);
        let c = self.local_coefficients(cell);
        (0..4).map(|l| c[l] * lambda[l]).sum()
    }

    /// Cellwise-constant curl of an edge field.
    pub fn curl(&self, cell: usize, g: &TetGeometry) -> Vec3 {
        assert_eq!(self.kind().entity(), Entity::Edge);
        let c = self.local_coefficients(cell);
        let curls = edge_curls(g);
        let mut v = [0.0; 3];
        for l in 0..6 {
            v = crate::geometry::axpy(c[l], curls[l], v);
        }
        v
    }

    /// Cellwise-constant divergence of a face field.
    pub fn div(&self, cell: usize, g: &TetGeometry) -> f64 {
        assert_eq!(self.kind().entity(), Entity::Face);
        let c = self.local_coefficients(cell);
        (0..4).map(|l| c[l]).sum::<f64>() * face_div(g)
    }

    /// Cellwise-constant gradient of a nodal field.
    pub fn grad(&self, cell: usize, g: &TetGeometry) -> Vec3 {
        assert_eq!(self.kind().entity(), Entity::Vertex);
        let c = self.local_coefficients(cell);
        let mut v = [0.0; 3];
        for l in 0..4 {
            v = crate::geometry::axpy(c[l], g.grad_lambda[l], v);
        }
        v
    }

    /// Evaluate at a physical point by locating the containing cell (linear
    /// search; intended for tests and diagnostics).
    pub fn eval_at_point(&self, x: Vec3) -> Option<Vec3> {
        let mesh = self.mesh();
        (0..mesh.n_cells()).find_map(|c| {
            let g = mesh.geometry(c);
            g.contains(x, 1e-12).then(|| self.eval_vector(c, &g, &g.barycentric(x)))
        })
    }
}

/// Oriented line integrals `∫_e u · t` along every edge (low → high vertex),
/// 4-point Gauss per edge.
pub fn edge_moments(mesh: &Mesh, field: impl Fn(Vec3) -> Vec3) -> Vec<f64> {
    let rule = LineRule::gauss(4);
    mesh.edges()
        .iter()
        .map(|&[a, b]| {
            let (xa, xb) = (mesh.vertex(a), mesh.vertex(b));
            let t = sub(xb, xa);
            rule.points
                .iter()
                .zip(&rule.weights)
                .map(|(&s, &w)| w * dot(field(crate::geometry::axpy(s, t, xa)), t))
                .sum()
        })
        .collect()
}

/// Oriented fluxes `∫_f u · n` through every face, with `n` the normal of
/// `(x_b − x_a) × (x_c − x_a)` for sorted vertices `a < b < c`.
pub fn face_fluxes(mesh: &Mesh, field: impl Fn(Vec3) -> Vec3) -> Vec<f64> {
    let rule = TriangleRule::degree4();
    mesh.faces()
        .iter()
        .map(|&[a, b, c]| {
            let (xa, xb, xc) = (mesh.vertex(a), mesh.vertex(b), mesh.vertex(c));
            let n = cross(sub(xb, xa), sub(xc, xa));
            rule.points
                .iter()
                .zip(&rule.weights)
                .map(|(p, &w)| {
                    let x = [0, 1, 2].map(|k| p[0] * xa[k] + p[1] * xb[k] + p[2] * xc[k]);
                    0.5 * w * dot(field(x), n)
                })
                .sum()
        })
        .collect()
}

fn check_entity(dofmap: &DofMap, entity: Entity) -> Result<(), SpaceError> {
    if dofmap.kind.entity() != entity {
        return Err(SpaceError::Incompatible(format!("{:?} is not a {entity:?} space", dofmap.kind)));
    }
    Ok(())
}

fn gather(dofmap: &Arc<DofMap>, per_entity: Vec<f64>) -> FeField {
    let values = dofmap.dof_entity.iter().map(|&e| per_entity[e]).collect();
    FeField {
        dofmap: dofmap.clone(),
        values,
    }
}

/// Canonical edge interpolant (tangential edge moments).
pub fn interpolate_edge(field: impl Fn(Vec3) -> Vec3, dofmap: &Arc<DofMap>) -> Result<FeField, SpaceError> {
    check_entity(dofmap, Entity::Edge)?;
    Ok(gather(dofmap, edge_moments(dofmap.mesh(), field)))
}

/// Canonical face interpolant (normal face fluxes).
pub fn interpolate_face(field: impl Fn(Vec3) -> Vec3, dofmap: &Arc<DofMap>) -> Result<FeField, SpaceError> {
    check_entity(dofmap, Entity::Face)?;
    Ok(gather(dofmap, face_fluxes(dofmap.mesh(), field)))
}

/// Nodal interpolant.
pub fn interpolate_nodal(field: impl Fn(Vec3) -> f64, dofmap: &Arc<DofMap>) -> Result<FeField, SpaceError> {
    check_entity(dofmap, Entity::Vertex)?;
    let mesh = dofmap.mesh();
    Ok(gather(dofmap, mesh.vertices().iter().map(|&x| field(x)).collect()))
}

/// Edge coefficients of `∇p` for a nodal field `p` on the same mesh:
/// `p(b) − p(a)` on the edge `a < b`.
pub fn gradient_to_edges(nodal: &FeField, edge_space: &Arc<DofMap>) -> Result<FeField, SpaceError> {
    check_entity(nodal.dofmap(), Entity::Vertex)?;
    check_entity(edge_space, Entity::Edge)?;
    if nodal.mesh().n_vertices() != edge_space.mesh().n_vertices() || nodal.mesh().n_edges() != edge_space.mesh().n_edges() {
        return Err(SpaceError::Incompatible("nodal and edge spaces live on different meshes".into()));
    }
    let mesh = edge_space.mesh();
    let per_edge = mesh
        .edges()
        .iter()
        .map(|&[a, b]| nodal.entity_value(b) - nodal.entity_value(a))
        .collect();
    Ok(gather(edge_space, per_edge))
}

/// Restriction `ζ*` of a parent-mesh field to the submesh described by `map`.
pub fn restrict(field: &FeField, map: &SubdomainMap, target: &Arc<DofMap>) -> Result<FeField, SpaceError> {
    let entity = field.kind().entity();
    check_entity(target, entity)?;
    let to_parent = match entity {
        Entity::Vertex => &map.vertex_to_parent,
        Entity::Edge => &map.edge_to_parent,
        Entity::Face => &map.face_to_parent,
    };
    if to_parent.len() != target.n_entities() {
        return Err(SpaceError::Incompatible("target space does not live on the submesh".into()));
    }
    let parent_entities = match entity {
        Entity::Vertex => map.n_parent_vertices(),
        Entity::Edge => map.n_parent_edges(),
        Entity::Face => map.n_parent_faces(),
    };
    if parent_entities != field.dofmap.n_entities() {
        return Err(SpaceError::Incompatible("field does not live on the parent mesh".into()));
    }
    let per_entity = to_parent.iter().map(|&p| field.entity_value(p)).collect();
    Ok(gather(target, per_entity))
}

/// Extension by zero `ζ` of a submesh field to the parent-mesh space `target`.
pub fn extend_by_zero(field: &FeField, map: &SubdomainMap, target: &Arc<DofMap>) -> Result<FeField, SpaceError> {
    let entity = field.kind().entity();
    check_entity(target, entity)?;
    let to_parent = match entity {
        Entity::Vertex => &map.vertex_to_parent,
        Entity::Edge => &map.edge_to_parent,
        Entity::Face => &map.face_to_parent,
    };
    if to_parent.len() != field.dofmap.n_entities() {
        return Err(SpaceError::Incompatible("field does not live on the submesh".into()));
    }
    let mut per_entity = vec![0.0; target.n_entities()];
    for (s, &p) in to_parent.iter().enumerate() {
        if p >= per_entity.len() {
            return Err(SpaceError::Incompatible("target space does not live on the parent mesh".into()));
        }
        per_entity[p] = field.entity_value(s);
    }
    Ok(gather(target, per_entity))
}

/// Squared L² norm of an edge or face field over all cells, using a
/// degree-2 rule (exact for these piecewise-linear fields).
pub fn l2_norm_squared(field: &FeField) -> f64 {
    let mesh = field.mesh();
    let rule = crate::quadrature::QuadratureRule::tet_degree2();
    (0..mesh.n_cells())
        .map(|c| {
            let g = mesh.geometry(c);
            g.volume * rule.iter().map(|(p, w)| w * norm2(field.eval_vector(c, &g, p))).sum::<f64>()
        })
        .sum()
}
