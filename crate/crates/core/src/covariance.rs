//! Regularized design matrix `V_t = I + Σ A_s A_sᵀ` under rank-one updates.
//!
//! The inverse is carried along with the Sherman–Morrison formula and the
//! log-determinant with the matrix determinant lemma, so a round costs
//! `O(d²)`. Every `refresh_period` updates both are recomputed from a
//! Cholesky factorization of `V_t` to stop floating-point drift.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// Default number of rank-one updates between exact refreshes.
pub const DEFAULT_REFRESH_PERIOD: usize = 1000;

/// Slack accepted on the unit-norm precondition for actions.
pub const NORM_SLACK: f64 = 1e-9;

/// Quadratic forms in `[-QUAD_FLOOR, 0)` are roundoff and clamp to zero.
const QUAD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CovarianceState {
    dim: usize,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    log_det: f64,
    b: Vector,
    theta_hat: Vector,
    step: u64,
    rls_steps: u64,
    updates_since_refresh: usize,
    refresh_period: usize,
    potential_sum: f64,
}

impl CovarianceState {
    /// Fresh state: `V_0 = I`, `θ̂_0 = 0`.
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_refresh_period(dim, DEFAULT_REFRESH_PERIOD)
    }

    pub fn with_refresh_period(dim: usize, refresh_period: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if refresh_period == 0 {
            return Err(Error::invalid("refresh period must be positive"));
        }
        Ok(Self {
            dim,
            v: DMatrix::identity(dim, dim),
            v_inv: DMatrix::identity(dim, dim),
            log_det: 0.0,
            b: Vector::zeros(dim),
            theta_hat: Vector::zeros(dim),
            step: 0,
            rls_steps: 0,
            updates_since_refresh: 0,
            refresh_period,
            potential_sum: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The Gram matrix `V_t`.
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// The maintained inverse of `V_t`.
    pub fn v_inv(&self) -> &DMatrix<f64> {
        &self.v_inv
    }

    /// Natural log of `det V_t`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Response accumulator `Σ A_s X̂_s`.
    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn theta_hat(&self) -> &Vector {
        &self.theta_hat
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn updates_since_refresh(&self) -> usize {
        self.updates_since_refresh
    }

    pub fn refresh_period(&self) -> usize {
        self.refresh_period
    }

    /// Running `Σ_t min{1, ‖A_t‖²_{V_{t-1}⁻¹}}` over all updates so far.
    pub fn potential_sum(&self) -> f64 {
        self.potential_sum
    }

    /// `max |V V⁻¹ − I|`, the drift of the maintained inverse.
    pub fn inverse_residual(&self) -> f64 {
        let mut prod = &self.v * &self.v_inv;
        for i in 0..self.dim {
            prod[(i, i)] -= 1.0;
        }
        prod.amax()
    }

    pub(crate) fn check_action(&self, a: &Vector) -> Result<()> {
        if a.len() != self.dim {
            return Err(Error::invalid(format!(
                "action has dimension {}, expected {}",
                a.len(),
                self.dim
            )));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("action has non-finite entries"));
        }
        let norm = a.norm();
        if norm > 1.0 + NORM_SLACK {
            return Err(Error::invalid(format!("action norm {norm} exceeds 1")));
        }
        Ok(())
    }

    /// `aᵀ V⁻¹ a` without clamping.
    fn quad_form(&self, a: &Vector) -> f64 {
        let mut acc = 0.0;
        for (j, aj) in a.iter().enumerate() {
            acc += aj * self.v_inv.column(j).dot(a);
        }
        acc
    }

    /// `‖a‖²_{V⁻¹}`, clamping roundoff negatives to zero.
    pub fn mahalanobis_sq(&self, a: &Vector) -> Result<f64> {
        if a.len() != self.dim {
            return Err(Error::invalid("dimension mismatch"));
        }
        let q = self.quad_form(a);
        if q.is_nan() {
            return Err(Error::invalid("non-finite quadratic form"));
        }
        if q < -QUAD_FLOOR {
            return Err(Error::corrupt(format!(
                "negative quadratic form {q} under V⁻¹"
            )));
        }
        Ok(q.max(0.0))
    }

    /// `‖a‖_{V⁻¹} = √(aᵀ V⁻¹ a)`.
    pub fn mahalanobis_norm(&self, a: &Vector) -> Result<f64> {
        self.mahalanobis_sq(a).map(f64::sqrt)
    }

    /// `V ← V + a aᵀ` together with the inverse and log-determinant.
    ///
    /// Returns `‖a‖²_{V_{old}⁻¹}`.
    pub fn rank_one_update(&mut self, a: &Vector) -> Result<f64> {
        self.check_action(a)?;
        let u = &self.v_inv * a;
        let q = a.dot(&u);
        let denom = 1.0 + q;
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::corrupt(format!(
                "1 + aᵀV⁻¹a = {denom} is not positive"
            )));
        }
        let q = if q < 0.0 && q >= -QUAD_FLOOR { 0.0 } else { q };
        self.v.ger(1.0, a, a, 1.0);
        self.v_inv.ger(-1.0 / denom, &u, &u, 1.0);
        self.log_det += q.ln_1p();
        self.potential_sum += q.clamp(0.0, 1.0);
        self.step += 1;
        self.updates_since_refresh += 1;
        if self.updates_since_refresh >= self.refresh_period {
            self.refresh()?;
        }
        Ok(q)
    }

    /// Folds `x_hat · a` into the response and recomputes `θ̂ = V⁻¹ b`.
    ///
    /// Must follow the `rank_one_update` of the same round.
    pub fn rls_update(&mut self, a: &Vector, x_hat: f64) -> Result<()> {
        if !x_hat.is_finite() {
            return Err(Error::invalid(format!("non-finite prediction {x_hat}")));
        }
        if a.len() != self.dim {
            return Err(Error::invalid("dimension mismatch"));
        }
        if self.rls_steps >= self.step {
            return Err(Error::protocol(
                "rls_update without a preceding rank_one_update",
            ));
        }
        self.b.axpy(x_hat, a, 1.0);
        self.theta_hat = &self.v_inv * &self.b;
        self.rls_steps += 1;
        Ok(())
    }

    /// Both halves of a round: `rank_one_update(a)` then `rls_update(a, x_hat)`.
    pub fn observe(&mut self, a: &Vector, x_hat: f64) -> Result<f64> {
        if !x_hat.is_finite() {
            return Err(Error::invalid(format!("non-finite prediction {x_hat}")));
        }
        let q = self.rank_one_update(a)?;
        self.rls_update(a, x_hat)?;
        Ok(q)
    }

    /// Recomputes `V⁻¹`, `log det V` and `θ̂` from a Cholesky factorization of `V`.
    pub fn refresh(&mut self) -> Result<()> {
        let chol = Cholesky::new(self.v.clone())
            .ok_or_else(|| Error::corrupt("V is not numerically positive definite"))?;
        let l = chol.l_dirty();
        let log_det = 2.0 * (0..self.dim).map(|i| l[(i, i)].ln()).sum::<f64>();
        let mut inv = chol.inverse();
        // symmetrize away the last-ulp asymmetry of the triangular solves
        inv = (&inv + inv.transpose()) * 0.5;
        self.v_inv = inv;
        self.log_det = log_det;
        self.theta_hat = &self.v_inv * &self.b;
        self.updates_since_refresh = 0;
        Ok(())
    }
}
