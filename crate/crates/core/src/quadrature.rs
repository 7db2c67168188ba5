//! Quadrature rules on the reference tetrahedron, triangle and segment.
//!
//! Tetrahedral rules are stored in barycentric coordinates with weights that
//! sum to one, so `∫_T f ≈ |T| Σ w_q f(x_q)`.

/// A quadrature rule on the tetrahedron in barycentric coordinates.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 4], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// Centroid rule, exact for degree 1.
    pub fn tet_degree1() -> Self {
        QuadratureRule {
            points: vec![[0.25; 4]],
            weights: vec![1.0],
            degree: 1,
        }
    }

    /// Symmetric 4-point rule, exact for degree 2.
    pub fn tet_degree2() -> Self {
        let a = (5.0 - 5.0_f64.sqrt()) / 20.0;
        let b = 1.0 - 3.0 * a;
        QuadratureRule {
            points: vec![[b, a, a, a], [a, b, a, a], [a, a, b, a], [a, a, a, b]],
            weights: vec![0.25; 4],
            degree: 2,
        }
    }

    /// Symmetric 14-point rule (Walkington), exact for degree 5.
    pub fn tet_degree5() -> Self {
        let groups = [
            (0.092_735_250_310_891_2, 0.012_248_840_519_393_66),
            (0.310_885_919_263_300_6, 0.018_781_320_953_002_64),
        ];
        let mut points = Vec::with_capacity(14);
        let mut weights = Vec::with_capacity(14);
        for (a, w) in groups {
            let b = 1.0 - 3.0 * a;
            for k in 0..4 {
                let mut p = [a; 4];
                p[k] = b;
                points.push(p);
                weights.push(6.0 * w);
            }
        }
        let a = 0.454_496_295_874_350_4;
        let b = 0.5 - a;
        let w = 0.007_091_003_462_846_911;
        for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
            let mut p = [b; 4];
            p[i] = a;
            p[j] = a;
            points.push(p);
            weights.push(6.0 * w);
        }
        QuadratureRule {
            points,
            weights,
            degree: 5,
        }
    }

    /// Collapsed (Duffy) Gauss–Legendre product rule with `n` points per
    /// direction, exact for degree `2n - 3`.
    pub fn tet_conical(n: usize) -> Self {
        assert!(n >= 2, "conical product rule needs at least 2 points per direction");
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n * n);
        let mut weights = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let (u, v, s) = (x[i], x[j], x[k]);
                    let px = u;
                    let py = (1.0 - u) * v;
                    let pz = (1.0 - u) * (1.0 - v) * s;
                    let jac = (1.0 - u) * (1.0 - u) * (1.0 - v);
                    points.push([1.0 - px - py - pz, px, py, pz]);
                    weights.push(6.0 * w[i] * w[j] * w[k] * jac);
                }
            }
        }
        QuadratureRule {
            points,
            weights,
            degree: 2 * n - 3,
        }
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Newton iteration on P_n starting from the Chebyshev-like guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    let mut pairs: Vec<(f64, f64)> = nodes.into_iter().zip(weights).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Triangle rule in barycentric coordinates, weights summing to one.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl TriangleRule {
    /// Six-point rule with positive weights, exact for degree 4.
    pub fn degree4() -> Self {
        let (a, wa) = (0.445_948_490_915_965, 0.223_381_589_678_011);
        let (b, wb) = (0.091_576_213_509_771, 0.109_951_743_655_322);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (t, w) in [(a, wa), (b, wb)] {
            let s = 1.0 - 2.0 * t;
            points.push([s, t, t]);
            points.push([t, s, t]);
            points.push([t, t, s]);
            weights.extend([w; 3]);
        }
        TriangleRule {
            points,
            weights,
            degree: 4,
        }
    }
}

/// Gauss rule on the unit segment `[0, 1]`.
#[derive(Debug, Clone)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    pub fn gauss(n: usize) -> Self {
        let (points, weights) = gauss_legendre(n);
        LineRule { points, weights }
    }
}
