//! Small fixed-size vector helpers and per-tetrahedron geometry.

pub type Vec3 = [f64; 3];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(s: f64, a: Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

#[inline]
pub fn axpy(s: f64, a: Vec3, b: Vec3) -> Vec3 {
    [s * a[0] + b[0], s * a[1] + b[1], s * a[2] + b[2]]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm2(a: Vec3) -> f64 {
    dot(a, a)
}

#[inline]
pub fn midpoint(a: Vec3, b: Vec3) -> Vec3 {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
}

/// Signed volume of the tetrahedron `(a, b, c, d)`.
pub fn signed_volume(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> f64 {
    dot(sub(b, a), cross(sub(c, a), sub(d, a))) / 6.0
}

/// Affine geometry of one tetrahedron: vertex coordinates, barycentric
/// gradients and (unsigned) volume.
#[derive(Debug, Clone, Copy)]
pub struct TetGeometry {
    pub vertices: [Vec3; 4],
    pub grad_lambda: [Vec3; 4],
    pub volume: f64,
}

impl TetGeometry {
    pub fn new(vertices: [Vec3; 4]) -> Self {
        let [x0, x1, x2, x3] = vertices;
        let e1 = sub(x1, x0);
        let e2 = sub(x2, x0);
        let e3 = sub(x3, x0);
        let det = dot(e1, cross(e2, e3));
        // rows of the inverse Jacobian are the gradients of lambda_1..lambda_3
        let g1 = scale(1.0 / det, cross(e2, e3));
        let g2 = scale(1.0 / det, cross(e3, e1));
        let g3 = scale(1.0 / det, cross(e1, e2));
        let g0 = scale(-1.0, add(add(g1, g2), g3));
        TetGeometry {
            vertices,
            grad_lambda: [g0, g1, g2, g3],
            volume: det.abs() / 6.0,
        }
    }

    /// Physical point for barycentric coordinates `lambda`.
    #[inline]
    pub fn point(&self, lambda: &[f64; 4]) -> Vec3 {
        let mut p = [0.0; 3];
        for (l, v) in lambda.iter().zip(self.vertices.iter()) {
            p = axpy(*l, *v, p);
        }
        p
    }

    pub fn centroid(&self) -> Vec3 {
        self.point(&[0.25; 4])
    }

    /// Barycentric coordinates of a physical point.
    pub fn barycentric(&self, x: Vec3) -> [f64; 4] {
        let d = sub(x, self.vertices[0]);
        let l1 = dot(self.grad_lambda[1], d);
        let l2 = dot(self.grad_lambda[2], d);
        let l3 = dot(self.grad_lambda[3], d);
        [1.0 - l1 - l2 - l3, l1, l2, l3]
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                d = d.max(norm(sub(self.vertices[i], self.vertices[j])));
            }
        }
        d
    }

    /// Shape quality `inradius / diameter`.
    pub fn quality(&self) -> f64 {
        let mut area = 0.0;
        for i in 0..4 {
            let f: Vec<Vec3> = (0..4).filter(|&k| k != i).map(|k| self.vertices[k]).collect();
            area += 0.5 * norm(cross(sub(f[1], f[0]), sub(f[2], f[0])));
        }
        3.0 * self.volume / area / self.diameter()
    }

    pub fn contains(&self, x: Vec3, tol: f64) -> bool {
        self.barycentric(x).iter().all(|&l| l >= -tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barycentric_gradients_of_reference_tet() {
        let g = TetGeometry::new([[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!((g.volume - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(g.grad_lambda[1], [1.0, 0.0, 0.0]);
        assert_eq!(g.grad_lambda[0], [-1.0, -1.0, -1.0]);
        let l = g.barycentric([0.1, 0.2, 0.3]);
        assert!((l[0] - 0.4).abs() < 1e-15);
    }
}
