//! Reduced coordinates on the simplex hull, small LPs and polygon clipping.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

/// Orthonormal coordinates `x = x̄ + Vξ` on the affine hull of the simplex.
#[derive(Debug, Clone)]
pub(crate) struct Reduced {
    pub basis: DMatrix<f64>,
    pub center: DVector<f64>,
}

impl Reduced {
    /// Helmert basis of `𝟙⊥`.
    pub fn new(n: usize) -> Self {
        let mut basis = DMatrix::zeros(n, n.saturating_sub(1));
        for j in 1..n {
            let norm = ((j * (j + 1)) as f64).sqrt();
            for i in 0..j {
                basis[(i, j - 1)] = 1.0 / norm;
            }
            basis[(j, j - 1)] = -(j as f64) / norm;
        }
        Self { basis, center: DVector::from_element(n, 1.0 / n as f64) }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn lift(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.center + &self.basis * xi
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * (x - &self.center)
    }
}

/// Half-spaces `aᵢ·ξ ≤ bᵢ` with unit-norm `aᵢ`.
#[derive(Debug, Clone, Default)]
pub(crate) struct HalfSpaces {
    pub a: Vec<DVector<f64>>,
    pub b: Vec<f64>,
}

impl HalfSpaces {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn contains(&self, xi: &DVector<f64>, slack: f64) -> bool {
        self.a.iter().zip(&self.b).all(|(a, b)| a.dot(xi) <= b + slack)
    }

    /// Largest ball inside the polytope, optionally restricted to facet
    /// `on_facet`. Returns `None` when the LP is infeasible.
    pub fn chebyshev(&self, dim: usize, on_facet: Option<usize>) -> Option<(DVector<f64>, f64)> {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let xi: Vec<_> = (0..dim).map(|_| lp.add_var(0.0, (-10.0, 10.0))).collect();
        let r = lp.add_var(1.0, (0.0, 10.0));
        for (i, (a, &b)) in self.a.iter().zip(&self.b).enumerate() {
            let mut expr: Vec<_> = xi.iter().zip(a.iter()).map(|(&v, &c)| (v, c)).collect();
            if on_facet == Some(i) {
                lp.add_constraint(expr, ComparisonOp::Eq, b);
            } else {
                expr.push((r, a.norm()));
                lp.add_constraint(expr, ComparisonOp::Le, b);
            }
        }
        let sol = lp.solve().ok()?.into_solution().ok()?;
        let center = DVector::from_iterator(dim, xi.iter().map(|&v| sol.var_value(v)));
        Some((center, sol.var_value(r)))
    }

    /// `max obj·ξ` over every row except `skip`, capped at `cap`.
    pub fn max_excluding(&self, dim: usize, skip: usize, keep: &[bool], obj: &DVector<f64>, cap: f64) -> Option<f64> {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let xi: Vec<_> = obj.iter().take(dim).map(|&c| lp.add_var(c, (-10.0, 10.0))).collect();
        for (i, (a, &b)) in self.a.iter().zip(&self.b).enumerate() {
            if i == skip || !keep[i] {
                continue;
            }
            lp.add_constraint(xi.iter().zip(a.iter()).map(|(&v, &c)| (v, c)).collect::<Vec<_>>(), ComparisonOp::Le, b);
        }
        lp.add_constraint(xi.iter().zip(obj.iter()).map(|(&v, &c)| (v, c)).collect::<Vec<_>>(), ComparisonOp::Le, cap);
        let sol = lp.solve().ok()?.into_solution().ok()?;
        Some(sol.objective())
    }
}

/// Planar coordinates of a point of the 3-simplex: the vertices map to
/// `(0,0)`, `(1,0)` and `(1/2, √3/2)`.
pub fn planar(x: &[f64]) -> [f64; 2] {
    [x[1] + 0.5 * x[2], 0.75f64.sqrt() * x[2]]
}

/// Clips the simplex `conv(e₁, …, eₙ)` for `n = 3` by `Hx ≤ K`.
pub(crate) fn clip_triangle(h: &DMatrix<f64>, k: &DVector<f64>) -> Vec<DVector<f64>> {
    let mut poly: Vec<DVector<f64>> = (0..3)
        .map(|i| {
            let mut e = DVector::zeros(3);
            e[i] = 1.0;
            e
        })
        .collect();
    for row in 0..h.nrows() {
        let a = h.row(row).transpose();
        let b = k[row];
        let mut out = Vec::with_capacity(poly.len() + 1);
        for i in 0..poly.len() {
            let p = &poly[i];
            let q = &poly[(i + 1) % poly.len()];
            let fp = a.dot(p) - b;
            let fq = a.dot(q) - b;
            if fp <= 0.0 {
                out.push(p.clone());
            }
            if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
                let t = fp / (fp - fq);
                out.push(p + (q - p) * t);
            }
        }
        poly = out;
        if poly.is_empty() {
            break;
        }
    }
    poly
}

/// Shoelace area of a planar polygon.
pub fn polygon_area(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (p, q) = (points[i], points[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    0.5 * twice.abs()
}
