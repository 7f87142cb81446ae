//! Condensed parametric QP of the horizon problem.
//!
//! Stacking the controls `z = (u_0, …, u_{T-1})` and substituting the
//! dynamics gives
//!
//! ```text
//!     V*(x) = min_z  ½ zᵀPz + (Fx + c)ᵀz + ½ xᵀYx + dᵀx
//!             s.t.   Gz ≤ W + Sx        (u_t ≥ 0)
//!                    E z = 𝟙            (𝟙ᵀu_t = 1)
//! ```
//!
//! State constraints are not encoded: left-stochastic dynamics keep every
//! state on the simplex once the controls are.

mod active_set;
mod riccati;

pub use active_set::{solve_qp, solve_qp_at, KktResiduals, QpSolution};
pub use riccati::{riccati_recursion, DareVariant, RiccatiSequence};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::GameDynamics;
use crate::network::{NetworkError, QuadraticCostSpec, SimplexVector};
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("regularization must be finite and nonnegative, got {0}")]
    InvalidRegularization(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("condensed Hessian is not positive definite; increase the regularization")]
    NotStrictlyConvex,
    #[error("initial point violates inequality row {row} by {violation:e}")]
    Infeasible { row: usize, violation: f64 },
    #[error("active-set iteration limit {0} exceeded")]
    MaxIterations(usize),
    #[error("working-set constraints are linearly dependent")]
    DependentConstraints,
    #[error("KKT certificate failed: {0}")]
    Certification(String),
    #[error("Riccati inner matrix is singular at step {0}")]
    SingularRiccati(usize),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Finite-horizon routing problem: dynamics, cost and horizon length.
#[derive(Debug, Clone)]
pub struct HorizonProblem {
    dynamics: GameDynamics,
    cost: QuadraticCostSpec,
    horizon: usize,
    regularization: f64,
}

impl HorizonProblem {
    pub fn new(dynamics: GameDynamics, cost: QuadraticCostSpec, horizon: usize) -> Result<Self, QpError> {
        Self::with_regularization(dynamics, cost, horizon, tol::REGULARIZATION)
    }

    pub fn with_regularization(
        dynamics: GameDynamics,
        cost: QuadraticCostSpec,
        horizon: usize,
        regularization: f64,
    ) -> Result<Self, QpError> {
        if horizon == 0 {
            return Err(QpError::ZeroHorizon);
        }
        if !regularization.is_finite() || regularization < 0.0 {
            return Err(QpError::InvalidRegularization(regularization));
        }
        cost.validate()?;
        if cost.dim() != dynamics.num_edges() {
            return Err(QpError::DimensionMismatch { expected: dynamics.num_edges(), got: cost.dim() });
        }
        Ok(Self { dynamics, cost, horizon, regularization })
    }

    pub fn dynamics(&self) -> &GameDynamics {
        &self.dynamics
    }

    pub fn cost(&self) -> &QuadraticCostSpec {
        &self.cost
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_edges(&self) -> usize {
        self.dynamics.num_edges()
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    /// States `x_0 … x_T` produced by `controls` (no simplex projection).
    pub fn rollout(&self, x0: &DVector<f64>, controls: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.clone());
        for u in controls {
            let next = self.dynamics.apply(states.last().unwrap(), u);
            states.push(next);
        }
        states
    }

    /// Horizon cost of `controls` evaluated by direct simulation.
    pub fn rollout_cost(&self, x0: &DVector<f64>, controls: &[DVector<f64>]) -> f64 {
        let states = self.rollout(x0, controls);
        let running: f64 = controls
            .iter()
            .zip(&states)
            .map(|(u, x)| self.cost.state_cost(x) + self.cost.control_cost(u))
            .sum();
        running + self.cost.terminal_cost(states.last().unwrap())
    }

    /// Builds the condensed QP.
    pub fn condense(&self) -> Result<CondensedQp, QpError> {
        let n = self.num_edges();
        let horizon = self.horizon;
        let nz = n * horizon;
        let a = self.dynamics.state_matrix();
        let b = self.dynamics.input_matrix();

        // powers[t] = (γA)^t for t = 0..=T
        let mut powers = Vec::with_capacity(horizon + 1);
        powers.push(DMatrix::<f64>::identity(n, n));
        for t in 1..=horizon {
            let next = &a * &powers[t - 1];
            powers.push(next);
        }

        // Stacked predictions x_{1..T} = Φ x_0 + Γ z.
        let mut phi = DMatrix::zeros(nz, n);
        let mut gamma = DMatrix::zeros(nz, nz);
        for t in 0..horizon {
            phi.view_mut((t * n, 0), (n, n)).copy_from(&powers[t + 1]);
            for k in 0..=t {
                gamma.view_mut((t * n, k * n), (n, n)).copy_from(&(&powers[t - k] * &b));
            }
        }

        let mut q_bar = DMatrix::zeros(nz, nz);
        let mut r_bar = DMatrix::zeros(nz, nz);
        for t in 0..horizon {
            let weight = if t + 1 == horizon { &self.cost.q_terminal } else { &self.cost.q };
            q_bar.view_mut((t * n, t * n), (n, n)).copy_from(weight);
            r_bar.view_mut((t * n, t * n), (n, n)).copy_from(&self.cost.r);
        }

        let gt_q = gamma.transpose() * &q_bar;
        let mut hessian = (&gt_q * &gamma + r_bar) * 2.0;
        hessian = (&hessian + hessian.transpose()) * 0.5;
        for i in 0..nz {
            hessian[(i, i)] += self.regularization;
        }
        let cross = &gt_q * &phi * 2.0;
        let mut param_hessian = (&self.cost.q + phi.transpose() * &q_bar * &phi) * 2.0;
        param_hessian = (&param_hessian + param_hessian.transpose()) * 0.5;

        let (linear, param_linear) = match &self.cost.linear {
            Some(offsets) => {
                let stacked = DVector::from_iterator(nz, (0..horizon).flat_map(|_| offsets.iter().copied()));
                (gamma.transpose() * &stacked, offsets + phi.transpose() * &stacked)
            }
            None => (DVector::zeros(nz), DVector::zeros(n)),
        };

        CondensedQp::assemble(
            n,
            horizon,
            hessian,
            self.regularization,
            cross,
            linear,
            param_hessian,
            param_linear,
            0.0,
        )
    }
}

/// Parametric QP in the stacked controls, with the initial state as parameter.
#[derive(Debug, Clone)]
pub struct CondensedQp {
    n_e: usize,
    horizon: usize,
    /// `P`, including the Tikhonov term.
    pub hessian: DMatrix<f64>,
    pub regularization: f64,
    /// `F`: couples the parameter into the linear term.
    pub cross: DMatrix<f64>,
    /// `c`: linear term from the latency offsets.
    pub linear: DVector<f64>,
    /// `Y`: parameter-only quadratic term.
    pub param_hessian: DMatrix<f64>,
    /// Parameter-only linear term from the latency offsets.
    pub param_linear: DVector<f64>,
    pub constant: f64,
    /// `G`: one row `-e_iᵀ` per control entry.
    pub ineq: DMatrix<f64>,
    /// `W`.
    pub ineq_rhs: DVector<f64>,
    /// `S`.
    pub ineq_param: DMatrix<f64>,
    /// One row of ones per step over that step's controls.
    pub eq: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub(crate) hessian_inv: DMatrix<f64>,
}

impl CondensedQp {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        n_e: usize,
        horizon: usize,
        hessian: DMatrix<f64>,
        regularization: f64,
        cross: DMatrix<f64>,
        linear: DVector<f64>,
        param_hessian: DMatrix<f64>,
        param_linear: DVector<f64>,
        constant: f64,
    ) -> Result<Self, QpError> {
        let nz = n_e * horizon;
        let hessian_inv = hessian.clone().cholesky().ok_or(QpError::NotStrictlyConvex)?.inverse();
        let mut eq = DMatrix::zeros(horizon, nz);
        for t in 0..horizon {
            eq.view_mut((t, t * n_e), (1, n_e)).fill(1.0);
        }
        Ok(Self {
            n_e,
            horizon,
            hessian,
            regularization,
            cross,
            linear,
            param_hessian,
            param_linear,
            constant,
            ineq: -DMatrix::identity(nz, nz),
            ineq_rhs: DVector::zeros(nz),
            ineq_param: DMatrix::zeros(nz, n_e),
            eq,
            eq_rhs: DVector::from_element(horizon, 1.0),
            hessian_inv,
        })
    }

    /// One-step QP `min ½uᵀHu + lᵀu + constant` over `u ∈ Δ` with no
    /// parameter dependence.
    pub fn static_simplex(hessian: DMatrix<f64>, linear: DVector<f64>, constant: f64, regularization: f64) -> Self {
        let n = linear.len();
        let mut h = (&hessian + hessian.transpose()) * 0.5;
        for i in 0..n {
            h[(i, i)] += regularization;
        }
        Self::assemble(
            n,
            1,
            h,
            regularization,
            DMatrix::zeros(n, n),
            linear,
            DMatrix::zeros(n, n),
            DVector::zeros(n),
            constant,
        )
        .expect("regularized static Hessian is positive definite")
    }

    pub fn num_edges(&self) -> usize {
        self.n_e
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Length of `z`.
    pub fn num_vars(&self) -> usize {
        self.n_e * self.horizon
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq.nrows()
    }

    /// `Fx + c`.
    pub fn linear_at(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.cross * x + &self.linear
    }

    /// Objective at `(x, z)` without the regularization term, so it equals
    /// the rollout cost of the controls in `z`.
    pub fn objective(&self, x: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let quad = 0.5 * z.dot(&(&self.hessian * z)) - 0.5 * self.regularization * z.norm_squared();
        quad + self.linear_at(x).dot(z) + 0.5 * x.dot(&(&self.param_hessian * x)) + self.param_linear.dot(x) + self.constant
    }

    /// `V*(x)`, the optimal objective.
    pub fn value_function(&self, x: &SimplexVector) -> Result<f64, QpError> {
        Ok(solve_qp(self, x)?.value)
    }

    /// Splits `z` into per-step controls.
    pub fn controls(&self, z: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.horizon).map(|t| z.rows(t * self.n_e, self.n_e).into_owned()).collect()
    }

    /// Affine KKT solution `z(x) = Zx + z₀`, `ν(x) = Nx + ν₀` for a fixed
    /// active set. Multipliers are ordered equality rows first, then the
    /// active inequality rows in the order given. `None` when the active rows
    /// are linearly dependent together with the equalities.
    pub fn affine_law(&self, active: &[usize]) -> Option<AffineKkt> {
        let n = self.n_e;
        let c = self.constraint_rows(active);
        let m = c.nrows();
        let kct = &self.hessian_inv * c.transpose();
        let schur = &c * &kct;
        let chol = schur.cholesky()?;
        if chol.l_dirty().diagonal().iter().any(|&d| d <= 1e-12) {
            return None;
        }

        let mut rhs_param = &c * (&self.hessian_inv * &self.cross);
        let mut rhs_off = &c * (&self.hessian_inv * &self.linear);
        for t in 0..self.horizon {
            rhs_off[t] += self.eq_rhs[t];
        }
        for (k, &row) in active.iter().enumerate() {
            let r = self.horizon + k;
            rhs_off[r] += self.ineq_rhs[row];
            for j in 0..n {
                rhs_param[(r, j)] += self.ineq_param[(row, j)];
            }
        }
        let mult_param = -chol.solve(&rhs_param);
        let mult_off = -chol.solve(&rhs_off);
        let z_param = -(&self.hessian_inv * &self.cross) - &kct * &mult_param;
        let z_off = -(&self.hessian_inv * &self.linear) - &kct * &mult_off;
        debug_assert_eq!(mult_param.nrows(), m);
        Some(AffineKkt { z_param, z_off, mult_param, mult_off })
    }

    pub(crate) fn constraint_rows(&self, active: &[usize]) -> DMatrix<f64> {
        let nz = self.num_vars();
        let mut c = DMatrix::zeros(self.horizon + active.len(), nz);
        c.view_mut((0, 0), (self.horizon, nz)).copy_from(&self.eq);
        for (k, &row) in active.iter().enumerate() {
            c.row_mut(self.horizon + k).copy_from(&self.ineq.row(row));
        }
        c
    }
}

/// Affine optimiser and multipliers over a critical region.
#[derive(Debug, Clone)]
pub struct AffineKkt {
    pub z_param: DMatrix<f64>,
    pub z_off: DVector<f64>,
    pub mult_param: DMatrix<f64>,
    pub mult_off: DVector<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{validate_left_stochastic, StochasticMatrix};
    use approx::assert_abs_diff_eq;

    fn identity_problem(gamma: f64, q: DMatrix<f64>, r: DMatrix<f64>, qf: DMatrix<f64>, horizon: usize) -> HorizonProblem {
        let n = q.nrows();
        let dynamics = GameDynamics::new(gamma, StochasticMatrix::identity(n), StochasticMatrix::identity(n)).unwrap();
        let cost = QuadraticCostSpec::new(q, r, qf, None).unwrap();
        HorizonProblem::with_regularization(dynamics, cost, horizon, 0.0).unwrap()
    }

    #[test]
    fn condense_single_step_by_hand() {
        let hp = identity_problem(0.5, DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), DMatrix::identity(2, 2), 1);
        let qp = hp.condense().unwrap();
        let half = DMatrix::<f64>::identity(2, 2) * 0.5;
        assert!((&qp.hessian - &half).amax() < 1e-15);
        assert!((&qp.cross - &half).amax() < 1e-15);
        assert!((&qp.param_hessian - &half).amax() < 1e-15);
        assert_eq!(qp.linear, DVector::zeros(2));
        assert_eq!(qp.ineq, -DMatrix::<f64>::identity(2, 2));
        assert_eq!(qp.eq, DMatrix::from_row_slice(1, 2, &[1.0, 1.0]));
    }

    #[test]
    fn condense_muted_control() {
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let dynamics = GameDynamics::new(1.0, StochasticMatrix::identity(2), StochasticMatrix::uniform(2)).unwrap();
        let cost = QuadraticCostSpec::new(DMatrix::identity(2, 2), r.clone(), DMatrix::identity(2, 2), None).unwrap();
        let hp = HorizonProblem::new(dynamics, cost, 1).unwrap();
        let qp = hp.condense().unwrap();
        let expected = &r * 2.0 + DMatrix::identity(2, 2) * tol::REGULARIZATION;
        assert!((&qp.hessian - expected).amax() < 1e-15);
        assert_eq!(qp.cross, DMatrix::zeros(2, 2));
    }

    #[test]
    fn condensed_objective_matches_rollout() {
        let a = validate_left_stochastic(DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.1, 0.3, 0.4, 0.6, 0.5, 0.1, 0.3])).unwrap();
        let b = validate_left_stochastic(DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.5])).unwrap();
        let dynamics = GameDynamics::new(0.6, a, b).unwrap();
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 3.0]);
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.0, 0.4]));
        let qf = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0]));
        let cost = QuadraticCostSpec::new(q, r, qf, Some(DVector::from_vec(vec![0.3, 1.0, 0.0]))).unwrap();
        let hp = HorizonProblem::new(dynamics, cost, 2).unwrap();
        let qp = hp.condense().unwrap();
        let x = DVector::from_vec(vec![0.3, 0.5, 0.2]);
        let controls = vec![DVector::from_vec(vec![0.1, 0.6, 0.3]), DVector::from_vec(vec![1.0, 0.0, 0.0])];
        let z = DVector::from_iterator(6, controls.iter().flat_map(|u| u.iter().copied()));
        assert_abs_diff_eq!(qp.objective(&x, &z), hp.rollout_cost(&x, &controls), epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_problems() {
        let dynamics = GameDynamics::new(0.5, StochasticMatrix::identity(2), StochasticMatrix::identity(2)).unwrap();
        let cost = QuadraticCostSpec::state_only(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(HorizonProblem::new(dynamics.clone(), cost.clone(), 0).unwrap_err(), QpError::ZeroHorizon);
        let big = QuadraticCostSpec::state_only(DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(HorizonProblem::new(dynamics.clone(), big, 2), Err(QpError::DimensionMismatch { .. })));
        assert!(HorizonProblem::with_regularization(dynamics.clone(), cost, 2, -1.0).is_err());

        // Averaging B with R = 0 and no regularization has a singular Hessian.
        let avg = GameDynamics::new(0.5, StochasticMatrix::identity(2), StochasticMatrix::uniform(2)).unwrap();
        let cost = QuadraticCostSpec::state_only(DMatrix::identity(2, 2)).unwrap();
        let hp = HorizonProblem::with_regularization(avg, cost, 1, 0.0).unwrap();
        assert_eq!(hp.condense().unwrap_err(), QpError::NotStrictlyConvex);
    }
}
