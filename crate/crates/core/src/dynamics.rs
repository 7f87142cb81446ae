//! Flow-conserving LTI dynamics `x_{t+1} = γ A x_t + (1-γ) B u_t`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::network::{NetworkError, QuadraticCostSpec, SimplexVector};
use crate::qp::CondensedQp;
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("column {column} is not a probability vector (deviation {deviation:e})")]
    NotLeftStochastic { column: usize, deviation: f64 },
    #[error("gamma = {0} is outside [0, 1]")]
    InvalidGamma(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gamma = 1 leaves the steady state undetermined")]
    SingularConfiguration,
    #[error("{0} is not the uniform-averaging matrix")]
    NotUniformAveraging(&'static str),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Square nonnegative matrix whose columns each lie on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix(DMatrix<f64>);

impl Serialize for StochasticMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = self.0.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }
}

/// Accepts `m` iff it is square, finite, entrywise `≥ -ε` and every column
/// sums to one within `ε = tol::SIMPLEX`.
pub fn validate_left_stochastic(m: DMatrix<f64>) -> Result<StochasticMatrix, DynamicsError> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(DynamicsError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            if !m[(row, col)].is_finite() {
                return Err(DynamicsError::NonFinite { row, col });
            }
        }
        let c = m.column(col);
        let min = c.min();
        if min < -tol::SIMPLEX {
            return Err(DynamicsError::NotLeftStochastic { column: col, deviation: -min });
        }
        let deviation = (c.sum() - 1.0).abs();
        if deviation > tol::SIMPLEX {
            return Err(DynamicsError::NotLeftStochastic { column: col, deviation });
        }
    }
    Ok(StochasticMatrix(m))
}

impl StochasticMatrix {
    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// Every entry `1/n`: each column averages its input.
    pub fn uniform(n: usize) -> Self {
        Self(DMatrix::from_element(n, n, 1.0 / n as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn is_uniform_averaging(&self) -> bool {
        let target = 1.0 / self.dim() as f64;
        self.0.iter().all(|&x| (x - target).abs() <= tol::UNIFORM)
    }
}

/// The players' update rule: memory `A` weighted by `γ`, suggestion `B` by `1-γ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameDynamics {
    gamma: f64,
    a: StochasticMatrix,
    b: StochasticMatrix,
}

impl GameDynamics {
    pub fn new(gamma: f64, a: StochasticMatrix, b: StochasticMatrix) -> Result<Self, DynamicsError> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(DynamicsError::InvalidGamma(gamma));
        }
        if a.dim() != b.dim() {
            return Err(DynamicsError::DimensionMismatch { expected: a.dim(), got: b.dim() });
        }
        Ok(Self { gamma, a, b })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn a(&self) -> &StochasticMatrix {
        &self.a
    }

    pub fn b(&self) -> &StochasticMatrix {
        &self.b
    }

    pub fn num_edges(&self) -> usize {
        self.a.dim()
    }

    /// `γA`, the effective state matrix.
    pub fn state_matrix(&self) -> DMatrix<f64> {
        self.a.matrix() * self.gamma
    }

    /// `(1-γ)B`, the effective input matrix.
    pub fn input_matrix(&self) -> DMatrix<f64> {
        self.b.matrix() * (1.0 - self.gamma)
    }

    /// Raw affine update without simplex normalisation.
    pub fn apply(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.a.matrix() * x * self.gamma + self.b.matrix() * u * (1.0 - self.gamma)
    }

    /// One step of the dynamics; stays on the simplex when `A`, `B` are left stochastic.
    pub fn step(&self, x: &SimplexVector, u: &SimplexVector) -> Result<SimplexVector, DynamicsError> {
        let n = self.num_edges();
        for v in [x, u] {
            if v.dim() != n {
                return Err(DynamicsError::DimensionMismatch { expected: n, got: v.dim() });
            }
        }
        Ok(SimplexVector::from_dvector(self.apply(x.as_vector(), u.as_vector()))?)
    }

    /// Steady state under uniform-averaging `B`:
    /// `x* = ((1-γ)/n) (I - γA)⁻¹ 𝟙`.
    pub fn steady_state_averaging_b(&self) -> Result<SimplexVector, DynamicsError> {
        if !self.b.is_uniform_averaging() {
            return Err(DynamicsError::NotUniformAveraging("B"));
        }
        if self.gamma >= 1.0 {
            return Err(DynamicsError::SingularConfiguration);
        }
        let n = self.num_edges();
        let system = DMatrix::identity(n, n) - self.state_matrix();
        warn_if_ill_conditioned(&system);
        let rhs = DVector::from_element(n, (1.0 - self.gamma) / n as f64);
        let x = system.lu().solve(&rhs).ok_or(DynamicsError::SingularConfiguration)?;
        Ok(SimplexVector::from_dvector(x)?)
    }

    /// Under uniform-averaging `A` the horizon problem decouples into two static
    /// QPs over `u ∈ Δ`: one weighted by `Q` (steps `0..T-1`) and one by `Q_f`
    /// (the last step).
    pub fn reduced_problem_averaging_a(&self, cost: &QuadraticCostSpec) -> Result<AveragingReduction, DynamicsError> {
        if !self.a.is_uniform_averaging() {
            return Err(DynamicsError::NotUniformAveraging("A"));
        }
        let n = self.num_edges();
        if cost.dim() != n {
            return Err(DynamicsError::DimensionMismatch { expected: n, got: cost.dim() });
        }
        let running = self.static_qp(&cost.q, &cost.r, cost.linear.as_ref());
        let terminal = self.static_qp(&cost.q_terminal, &cost.r, cost.linear.as_ref());
        Ok(AveragingReduction { gamma: self.gamma, b: self.b.matrix().clone(), running, terminal })
    }

    /// `(γ/n 𝟙 + (1-γ)Bu)ᵀ W (γ/n 𝟙 + (1-γ)Bu) + uᵀRu (+ linearᵀ(…))` as a
    /// one-step QP in `u`.
    fn static_qp(&self, weight: &DMatrix<f64>, r: &DMatrix<f64>, linear: Option<&DVector<f64>>) -> CondensedQp {
        let n = self.num_edges();
        let drift = DVector::from_element(n, self.gamma / n as f64);
        let input = self.input_matrix();
        let hessian = (input.transpose() * weight * &input + r) * 2.0;
        let mut lin = input.transpose() * weight * &drift * 2.0;
        let mut constant = drift.dot(&(weight * &drift));
        if let Some(b) = linear {
            lin += input.transpose() * b;
            constant += b.dot(&drift);
        }
        CondensedQp::static_simplex(hessian, lin, constant, tol::REGULARIZATION)
    }
}

/// The two static problems left when `A` averages the state.
#[derive(Debug, Clone)]
pub struct AveragingReduction {
    gamma: f64,
    b: DMatrix<f64>,
    /// Weighted by `Q`; optimal for every step but the last.
    pub running: CondensedQp,
    /// Weighted by `Q_f`; optimal for the last step.
    pub terminal: CondensedQp,
}

impl AveragingReduction {
    /// The state reached from any simplex point by applying `u`:
    /// `γ/n 𝟙 + (1-γ)Bu`.
    pub fn state_after(&self, u: &SimplexVector) -> Result<SimplexVector, DynamicsError> {
        let n = self.b.nrows();
        let x = DVector::from_element(n, self.gamma / n as f64) + &self.b * u.as_vector() * (1.0 - self.gamma);
        Ok(SimplexVector::from_dvector(x)?)
    }
}

fn warn_if_ill_conditioned(m: &DMatrix<f64>) {
    let sv = m.clone().singular_values();
    let (max, min) = (sv.max(), sv.min());
    if min == 0.0 || max / min > 1e12 {
        log::warn!("ill-conditioned system: condition number {:e}", max / min);
    }
}
