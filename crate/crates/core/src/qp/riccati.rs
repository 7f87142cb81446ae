//! Finite-horizon Riccati recursion for the unconstrained problem.

use nalgebra::{DMatrix, DVector};

use super::{HorizonProblem, QpError};

/// Which inner matrix the gain is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DareVariant {
    /// `(R + BᵀP_{t+1}B)⁻¹`.
    #[default]
    Standard,
    /// `(R + BᵀQ_fB)⁻¹` at every step.
    TerminalWeighted,
}

/// Cost-to-go matrices `P_0 … P_T` and gains `K_0 … K_{T-1}` with
/// `u_t = -K_t x_t`.
#[derive(Debug, Clone)]
pub struct RiccatiSequence {
    pub cost_to_go: Vec<DMatrix<f64>>,
    pub gains: Vec<DMatrix<f64>>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    qf: DMatrix<f64>,
}

/// Backward recursion for `x_{t+1} = A x_t + B u_t` with stage cost
/// `xᵀQx + uᵀRu` and terminal cost `xᵀQ_f x`. `regularization` is added to the
/// inner matrix only if it is singular.
#[allow(clippy::too_many_arguments)]
pub fn riccati_recursion(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    qf: &DMatrix<f64>,
    horizon: usize,
    variant: DareVariant,
    regularization: f64,
) -> Result<RiccatiSequence, QpError> {
    if horizon == 0 {
        return Err(QpError::ZeroHorizon);
    }
    let m = b.ncols();
    let mut cost_to_go = vec![qf.clone(); horizon + 1];
    let mut gains = vec![DMatrix::zeros(m, a.ncols()); horizon];
    for t in (0..horizon).rev() {
        let next = &cost_to_go[t + 1];
        let inner_weight = match variant {
            DareVariant::Standard => next,
            DareVariant::TerminalWeighted => qf,
        };
        let inner = r + b.transpose() * inner_weight * b;
        let inner = (&inner + inner.transpose()) * 0.5;
        let chol = match inner.clone().cholesky() {
            Some(c) => c,
            None => (inner + DMatrix::identity(m, m) * regularization)
                .cholesky()
                .ok_or(QpError::SingularRiccati(t))?,
        };
        let pb = next * b;
        let gain = chol.solve(&(pb.transpose() * a));
        let p = q + a.transpose() * next * a - a.transpose() * &pb * &gain;
        cost_to_go[t] = (&p + p.transpose()) * 0.5;
        gains[t] = gain;
    }
    Ok(RiccatiSequence {
        cost_to_go,
        gains,
        a: a.clone(),
        b: b.clone(),
        q: q.clone(),
        r: r.clone(),
        qf: qf.clone(),
    })
}

impl RiccatiSequence {
    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// States `x_0 … x_T` and controls under the feedback gains.
    pub fn rollout(&self, x0: &DVector<f64>) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut states = vec![x0.clone()];
        let mut controls = Vec::with_capacity(self.horizon());
        for k in &self.gains {
            let x = states.last().unwrap();
            let u = -(k * x);
            states.push(&self.a * x + &self.b * &u);
            controls.push(u);
        }
        (states, controls)
    }

    /// Horizon cost of the feedback rollout from `x0`.
    pub fn cost(&self, x0: &DVector<f64>) -> f64 {
        let (states, controls) = self.rollout(x0);
        let running: f64 = states
            .iter()
            .zip(&controls)
            .map(|(x, u)| x.dot(&(&self.q * x)) + u.dot(&(&self.r * u)))
            .sum();
        let last = states.last().unwrap();
        running + last.dot(&(&self.qf * last))
    }

    /// `x_0ᵀ P_0 x_0`.
    pub fn predicted_cost(&self, x0: &DVector<f64>) -> f64 {
        x0.dot(&(&self.cost_to_go[0] * x0))
    }
}

impl HorizonProblem {
    /// Riccati recursion on `γA` and `(1-γ)B` with the simplex constraints
    /// dropped. Latency offsets are ignored.
    pub fn riccati(&self, variant: DareVariant) -> Result<RiccatiSequence, QpError> {
        let cost = self.cost();
        riccati_recursion(
            &self.dynamics().state_matrix(),
            &self.dynamics().input_matrix(),
            &cost.q,
            &cost.r,
            &cost.q_terminal,
            self.horizon(),
            variant,
            self.regularization().max(crate::tol::REGULARIZATION),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_one_step() {
        // x1 = x0 + u, cost x0² + u² + x1²: K = 1/2, P0 = 1 + 1 - 1/2 = 3/2.
        let one = DMatrix::from_element(1, 1, 1.0);
        let seq = riccati_recursion(&one, &one, &one, &one, &one, 1, DareVariant::Standard, 0.0).unwrap();
        assert_abs_diff_eq!(seq.gains[0][(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(seq.cost_to_go[0][(0, 0)], 1.5, epsilon = 1e-15);
        let x0 = DVector::from_element(1, 2.0);
        assert_abs_diff_eq!(seq.cost(&x0), seq.predicted_cost(&x0), epsilon = 1e-12);
    }

    #[test]
    fn variants_agree_on_one_step() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]);
        let b = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.3]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(2, 2) * 0.1;
        let qf = DMatrix::identity(2, 2) * 2.0;
        let s = riccati_recursion(&a, &b, &q, &r, &qf, 1, DareVariant::Standard, 0.0).unwrap();
        let p = riccati_recursion(&a, &b, &q, &r, &qf, 1, DareVariant::TerminalWeighted, 0.0).unwrap();
        assert!((&s.gains[0] - &p.gains[0]).amax() < 1e-14);
        let s3 = riccati_recursion(&a, &b, &q, &r, &qf, 3, DareVariant::Standard, 0.0).unwrap();
        let p3 = riccati_recursion(&a, &b, &q, &r, &qf, 3, DareVariant::TerminalWeighted, 0.0).unwrap();
        assert!((&s3.gains[0] - &p3.gains[0]).amax() > 1e-6);
    }
}
