//! Parallel networks with affine latencies.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty vector or network")]
    Empty,
    #[error("entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("entry {index} = {value} is negative")]
    NegativeEntry { index: usize, value: f64 },
    #[error("entries sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("latency coefficients of edge {edge} must be finite and nonnegative (a = {a}, b = {b})")]
    InvalidLatency { edge: usize, a: f64, b: f64 },
    #[error("cost matrix {name} is not {n}x{n}")]
    CostShape { name: &'static str, n: usize },
    #[error("cost matrix {name} is not symmetric (deviation {deviation:e})")]
    NotSymmetric { name: &'static str, deviation: f64 },
    #[error("cost matrix {name} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { name: &'static str, min_eigenvalue: f64 },
}

/// A point of the probability simplex `{ f : Σ f_e = 1, f_e ≥ 0 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector(DVector<f64>);

impl SimplexVector {
    /// Validates and normalises `entries`.
    ///
    /// Entries down to `-tol::SIMPLEX` are clamped to zero; sums within
    /// `tol::SIMPLEX_NORMALIZE` of one are rescaled to one.
    pub fn new(entries: Vec<f64>) -> Result<Self, NetworkError> {
        Self::from_dvector(DVector::from_vec(entries))
    }

    pub fn from_dvector(mut v: DVector<f64>) -> Result<Self, NetworkError> {
        if v.is_empty() {
            return Err(NetworkError::Empty);
        }
        for (index, x) in v.iter_mut().enumerate() {
            if !x.is_finite() {
                return Err(NetworkError::NonFinite { index });
            }
            if *x < -tol::SIMPLEX {
                return Err(NetworkError::NegativeEntry { index, value: *x });
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let sum = v.sum();
        if (sum - 1.0).abs() > tol::SIMPLEX_NORMALIZE {
            return Err(NetworkError::NotNormalized { sum });
        }
        v /= sum;
        Ok(Self(v))
    }

    /// The barycenter `(1/n, …, 1/n)`.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "simplex dimension must be positive");
        Self(DVector::from_element(n, 1.0 / n as f64))
    }

    /// The vertex `e_i` of the n-simplex.
    pub fn vertex(n: usize, i: usize) -> Self {
        assert!(i < n, "vertex index out of range");
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// ∞-norm distance to another point.
    pub fn distance_inf(&self, other: &SimplexVector) -> f64 {
        (&self.0 - &other.0).amax()
    }
}

impl Serialize for SimplexVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for SimplexVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let entries = Vec::<f64>::deserialize(d)?;
        SimplexVector::new(entries).map_err(serde::de::Error::custom)
    }
}

impl std::ops::Index<usize> for SimplexVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Travel time `a·f + b` on one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineLatency {
    pub a: f64,
    pub b: f64,
}

impl AffineLatency {
    pub fn eval(&self, flow: f64) -> f64 {
        self.a * flow + self.b
    }
}

/// Two nodes joined by `n_e` parallel edges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParallelNetwork {
    edges: Vec<AffineLatency>,
}

impl<'de> Deserialize<'de> for ParallelNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            edges: Vec<AffineLatency>,
        }
        let raw = Raw::deserialize(d)?;
        ParallelNetwork::new(raw.edges).map_err(serde::de::Error::custom)
    }
}

/// Which quadratic objective to build from a network.
#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// `J₁(x) = Σ ∫₀^{x_e} l_e`, i.e. `Q = diag(a/2)`.
    Rosenthal,
    /// `J₂(x) = Σ x_e l_e(x_e)`, i.e. `Q = diag(a)`.
    SocialWelfare,
    Custom(QuadraticCostSpec),
}

impl ParallelNetwork {
    pub fn new(edges: Vec<AffineLatency>) -> Result<Self, NetworkError> {
        if edges.is_empty() {
            return Err(NetworkError::Empty);
        }
        for (edge, l) in edges.iter().enumerate() {
            let ok = l.a.is_finite() && l.b.is_finite() && l.a >= 0.0 && l.b >= 0.0;
            if !ok {
                return Err(NetworkError::InvalidLatency { edge, a: l.a, b: l.b });
            }
        }
        Ok(Self { edges })
    }

    /// Builds a network from `(a, b)` pairs.
    pub fn from_coefficients(coeffs: &[(f64, f64)]) -> Result<Self, NetworkError> {
        Self::new(coeffs.iter().map(|&(a, b)| AffineLatency { a, b }).collect())
    }

    /// Pure linear latencies `l_e(y) = a_e y`.
    pub fn linear(slopes: &[f64]) -> Result<Self, NetworkError> {
        Self::new(slopes.iter().map(|&a| AffineLatency { a, b: 0.0 }).collect())
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[AffineLatency] {
        &self.edges
    }

    fn check_dim(&self, f: &SimplexVector) -> Result<(), NetworkError> {
        if f.dim() != self.num_edges() {
            return Err(NetworkError::DimensionMismatch { expected: self.num_edges(), got: f.dim() });
        }
        Ok(())
    }

    /// Per-edge latency `a_e f_e + b_e`.
    pub fn latency_vector(&self, f: &SimplexVector) -> Result<DVector<f64>, NetworkError> {
        self.check_dim(f)?;
        Ok(self.latencies_unchecked(f.as_slice()))
    }

    pub(crate) fn latencies_unchecked(&self, f: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.edges.len(), self.edges.iter().zip(f).map(|(l, &x)| l.eval(x)))
    }

    /// `Σ a_e f_e² / 2 + b_e f_e`.
    pub fn rosenthal_potential(&self, f: &SimplexVector) -> Result<f64, NetworkError> {
        self.check_dim(f)?;
        Ok(self.potential_unchecked(f.as_slice()))
    }

    pub(crate) fn potential_unchecked(&self, f: &[f64]) -> f64 {
        self.edges.iter().zip(f).map(|(l, &x)| 0.5 * l.a * x * x + l.b * x).sum()
    }

    /// `Σ a_e f_e² + b_e f_e`.
    pub fn social_welfare(&self, f: &SimplexVector) -> Result<f64, NetworkError> {
        self.check_dim(f)?;
        Ok(self.edges.iter().zip(f.as_slice()).map(|(l, &x)| x * l.eval(x)).sum())
    }

    /// Wardrop/Nash equilibrium by water-filling on the common latency level.
    ///
    /// Edges with `a_e > 0` carry `max(0, (L - b_e)/a_e)`. If constant-latency
    /// edges exist and the sloped edges cannot absorb all flow below their
    /// cheapest free-flow time, the level is pinned there and the remainder
    /// is split equally among the tied constant edges.
    pub fn nash_equilibrium(&self) -> SimplexVector {
        let n = self.num_edges();
        let sloped: Vec<usize> = (0..n).filter(|&e| self.edges[e].a > 0.0).collect();
        let flat_min = (0..n)
            .filter(|&e| self.edges[e].a == 0.0)
            .map(|e| self.edges[e].b)
            .fold(f64::INFINITY, f64::min);

        let absorbed = |level: f64| -> f64 {
            sloped.iter().map(|&e| ((level - self.edges[e].b) / self.edges[e].a).max(0.0)).sum()
        };

        let mut flow = vec![0.0; n];
        if flat_min.is_finite() && absorbed(flat_min) <= 1.0 {
            for &e in &sloped {
                flow[e] = ((flat_min - self.edges[e].b) / self.edges[e].a).max(0.0);
            }
            let rest = 1.0 - flow.iter().sum::<f64>();
            let tied: Vec<usize> = (0..n)
                .filter(|&e| self.edges[e].a == 0.0 && self.edges[e].b <= flat_min + tol::SIMPLEX)
                .collect();
            for &e in &tied {
                flow[e] = rest / tied.len() as f64;
            }
        } else {
            // Sort sloped edges by free-flow time and grow the support while
            // the common level stays below the next edge's free-flow time.
            let mut order = sloped.clone();
            order.sort_by(|&i, &j| self.edges[i].b.total_cmp(&self.edges[j].b).then(i.cmp(&j)));
            let (mut inv_sum, mut ratio_sum) = (0.0, 0.0);
            let mut level = 0.0;
            let mut support = 0;
            for (k, &e) in order.iter().enumerate() {
                inv_sum += 1.0 / self.edges[e].a;
                ratio_sum += self.edges[e].b / self.edges[e].a;
                level = (1.0 + ratio_sum) / inv_sum;
                support = k + 1;
                match order.get(k + 1) {
                    Some(&next) if level > self.edges[next].b => continue,
                    _ => break,
                }
            }
            for &e in &order[..support] {
                flow[e] = ((level - self.edges[e].b) / self.edges[e].a).max(0.0);
            }
        }
        SimplexVector::new(flow).expect("water-filling produces a simplex point")
    }

    /// Builds the LQR cost matrices induced by the latencies.
    pub fn cost(&self, kind: CostKind) -> QuadraticCostSpec {
        let n = self.num_edges();
        let slopes = DVector::from_iterator(n, self.edges.iter().map(|l| l.a));
        let offsets = DVector::from_iterator(n, self.edges.iter().map(|l| l.b));
        let q = match kind {
            CostKind::Rosenthal => DMatrix::from_diagonal(&(slopes * 0.5)),
            CostKind::SocialWelfare => DMatrix::from_diagonal(&slopes),
            CostKind::Custom(spec) => return spec,
        };
        QuadraticCostSpec {
            q: q.clone(),
            r: DMatrix::zeros(n, n),
            q_terminal: q,
            linear: Some(offsets),
        }
    }
}

/// Stage and terminal weights of the LQR objective
/// `Σ xᵀQx + uᵀRu + linearᵀx  +  x_Tᵀ Q_f x_T + linearᵀx_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCostSpec {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q_terminal: DMatrix<f64>,
    pub linear: Option<DVector<f64>>,
}

impl QuadraticCostSpec {
    /// Validated constructor; matrices must be symmetric PSD of equal size.
    pub fn new(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        q_terminal: DMatrix<f64>,
        linear: Option<DVector<f64>>,
    ) -> Result<Self, NetworkError> {
        let spec = Self { q, r, q_terminal, linear };
        spec.validate()?;
        Ok(spec)
    }

    /// `Q = Q_f = q`, `R = 0`, no linear term.
    pub fn state_only(q: DMatrix<f64>) -> Result<Self, NetworkError> {
        let n = q.nrows();
        Self::new(q.clone(), DMatrix::zeros(n, n), q, None)
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let n = self.q.nrows();
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        for (name, m) in [("Q", &self.q), ("R", &self.r), ("Q_f", &self.q_terminal)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(NetworkError::CostShape { name, n });
            }
            if let Some(index) = m.iter().position(|x| !x.is_finite()) {
                return Err(NetworkError::NonFinite { index });
            }
            let deviation = (m - m.transpose()).amax();
            if deviation > tol::SYMMETRY {
                return Err(NetworkError::NotSymmetric { name, deviation });
            }
            let sym = (m + m.transpose()) * 0.5;
            let min_eigenvalue = SymmetricEigen::new(sym).eigenvalues.min();
            if min_eigenvalue < -tol::PSD {
                return Err(NetworkError::NotPsd { name, min_eigenvalue });
            }
        }
        if let Some(b) = &self.linear {
            if b.len() != n {
                return Err(NetworkError::DimensionMismatch { expected: n, got: b.len() });
            }
        }
        Ok(())
    }

    /// `xᵀQx + linearᵀx`.
    pub fn state_cost(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.q * x)) + self.linear_term(x)
    }

    /// `x_Tᵀ Q_f x_T + linearᵀx_T`.
    pub fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.q_terminal * x)) + self.linear_term(x)
    }

    pub fn control_cost(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.r * u))
    }

    fn linear_term(&self, x: &DVector<f64>) -> f64 {
        self.linear.as_ref().map_or(0.0, |b| b.dot(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sv(v: &[f64]) -> SimplexVector {
        SimplexVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn simplex_construction() {
        let v = sv(&[0.5, 0.5 + 5e-7]);
        assert_abs_diff_eq!(v.as_slice().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_eq!(sv(&[1.0, -1e-10]).as_slice(), &[1.0, 0.0]);
        assert!(matches!(SimplexVector::new(vec![1.1, -0.1]), Err(NetworkError::NegativeEntry { .. })));
        assert!(matches!(SimplexVector::new(vec![0.5, 0.49]), Err(NetworkError::NotNormalized { .. })));
        assert!(matches!(SimplexVector::new(vec![]), Err(NetworkError::Empty)));
        assert!(matches!(SimplexVector::new(vec![f64::NAN, 1.0]), Err(NetworkError::NonFinite { .. })));
    }

    #[test]
    fn latency_examples() {
        let sym = ParallelNetwork::linear(&[1.0, 1.0, 1.0]).unwrap();
        let l = sym.latency_vector(&SimplexVector::uniform(3)).unwrap();
        assert!(l.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));

        let net = ParallelNetwork::linear(&[1.0, 2.0, 4.0]).unwrap();
        let l = net.latency_vector(&sv(&[4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0])).unwrap();
        assert!(l.iter().all(|&x| (x - 4.0 / 7.0).abs() < 1e-15));

        let single = ParallelNetwork::from_coefficients(&[(2.0, 3.0)]).unwrap();
        assert_eq!(single.latency_vector(&sv(&[1.0])).unwrap()[0], 5.0);

        assert!(matches!(
            net.latency_vector(&SimplexVector::uniform(2)),
            Err(NetworkError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn rejects_negative_coefficients() {
        assert!(ParallelNetwork::from_coefficients(&[(1.0, 0.0), (-1.0, 0.0)]).is_err());
        assert!(ParallelNetwork::new(vec![]).is_err());
    }

    #[test]
    fn nash_examples() {
        let sym = ParallelNetwork::linear(&[1.0, 1.0, 1.0]).unwrap();
        assert!(sym.nash_equilibrium().distance_inf(&SimplexVector::uniform(3)) < 1e-15);

        let net = ParallelNetwork::linear(&[1.0, 2.0, 4.0]).unwrap();
        let expected = sv(&[4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]);
        assert!(net.nash_equilibrium().distance_inf(&expected) < 1e-15);

        // Brute-force grid minimum of J₁ at resolution 1e-4 sits at (1, 0):
        // the second edge's free-flow time 10 exceeds edge one's maximum 1.
        let offset = ParallelNetwork::from_coefficients(&[(1.0, 0.0), (1.0, 10.0)]).unwrap();
        assert_eq!(offset.nash_equilibrium().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn nash_with_constant_latencies() {
        // Constant edges tie at b = 1; the sloped edge absorbs flow up to level 1.
        let net = ParallelNetwork::from_coefficients(&[(0.0, 1.0), (0.0, 1.0), (2.0, 0.0), (0.0, 3.0)]).unwrap();
        let f = net.nash_equilibrium();
        assert_abs_diff_eq!(f[2], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 0.25, epsilon = 1e-15);
        assert_eq!(f[3], 0.0);

        // All-constant network: argmin of b with equal split.
        let flat = ParallelNetwork::from_coefficients(&[(0.0, 2.0), (0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(flat.nash_equilibrium().as_slice(), &[0.0, 0.5, 0.5]);

        // Sloped edges saturate before reaching the constant level.
        let cheap = ParallelNetwork::from_coefficients(&[(1.0, 0.0), (0.0, 5.0)]).unwrap();
        assert_eq!(cheap.nash_equilibrium().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn potential_examples() {
        let sym = ParallelNetwork::linear(&[1.0, 1.0, 1.0]).unwrap();
        let u = SimplexVector::uniform(3);
        assert_abs_diff_eq!(sym.rosenthal_potential(&u).unwrap(), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sym.social_welfare(&u).unwrap(), 1.0 / 3.0, epsilon = 1e-15);

        let net = ParallelNetwork::linear(&[1.0, 2.0, 4.0]).unwrap();
        let f = sv(&[4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]);
        assert_abs_diff_eq!(net.rosenthal_potential(&f).unwrap(), 2.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(net.social_welfare(&f).unwrap(), 4.0 / 7.0, epsilon = 1e-15);

        let flat = ParallelNetwork::from_coefficients(&[(0.0, 5.0), (3.0, 1.0)]).unwrap();
        let e0 = SimplexVector::vertex(2, 0);
        assert_eq!(flat.rosenthal_potential(&e0).unwrap(), 5.0);
        assert_eq!(flat.social_welfare(&e0).unwrap(), 5.0);
    }

    #[test]
    fn cost_matrices() {
        let net = ParallelNetwork::linear(&[1.0, 2.0, 4.0]).unwrap();
        let ros = net.cost(CostKind::Rosenthal);
        assert_eq!(ros.q, DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0, 2.0])));
        assert_eq!(ros.q_terminal, ros.q);
        assert_eq!(ros.r, DMatrix::zeros(3, 3));
        assert_eq!(ros.linear, Some(DVector::zeros(3)));
        let sw = net.cost(CostKind::SocialWelfare);
        assert_eq!(sw.q, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0])));

        let single = ParallelNetwork::linear(&[1.0]).unwrap();
        assert_eq!(single.cost(CostKind::Rosenthal).q[(0, 0)], 0.5);

        let custom = QuadraticCostSpec::state_only(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(net.cost(CostKind::Custom(custom.clone())), custom);
    }

    #[test]
    fn cost_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(QuadraticCostSpec::state_only(asym), Err(NetworkError::NotSymmetric { .. })));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(QuadraticCostSpec::state_only(indefinite), Err(NetworkError::NotPsd { .. })));
        let bad_r = QuadraticCostSpec::new(DMatrix::identity(2, 2), DMatrix::identity(3, 3), DMatrix::identity(2, 2), None);
        assert!(matches!(bad_r, Err(NetworkError::CostShape { name: "R", .. })));
    }

    #[test]
    fn network_json() {
        let net: ParallelNetwork = serde_json::from_str(r#"{"edges":[{"a":1.0,"b":0.0},{"a":2.0,"b":0.5}]}"#).unwrap();
        assert_eq!(net.num_edges(), 2);
        assert!(serde_json::from_str::<ParallelNetwork>(r#"{"edges":[{"a":-1.0,"b":0.0}]}"#).is_err());
    }
}
