//! Online linear regressors that turn `(A_t, X_t)` into the prediction `X̂_t`
//! consumed by the least-squares update.

use crate::covariance::{CovarianceState, Vector};
use crate::error::{Error, Result};

/// An online linear regression learner.
///
/// `feed` runs one protocol round: the learner commits to a prediction for
/// `a`, then sees the outcome `x`, and the committed prediction is returned.
pub trait OnlineRegressor: Send + std::fmt::Debug {
    fn feed(&mut self, a: &Vector, x: f64) -> Result<f64>;
}

/// Returns the realized reward unchanged.
pub fn passthrough_predict(_a: &Vector, pending_reward: f64) -> f64 {
    pending_reward
}

/// Uses `X̂_t = X_t`, which reduces the conversion to plain ridge regression
/// on the observed rewards.
#[derive(Debug, Clone, Copy, Default)]
pub struct Passthrough;

impl OnlineRegressor for Passthrough {
    fn feed(&mut self, a: &Vector, x: f64) -> Result<f64> {
        Ok(passthrough_predict(a, x))
    }
}

/// Online ridge regression (unit regularizer) with clipped predictions.
#[derive(Debug, Clone)]
pub struct RidgeRegressor {
    state: CovarianceState,
    clip: f64,
    predicted: bool,
}

impl RidgeRegressor {
    /// Predictions are clipped to `[-1 - noise_bound, 1 + noise_bound]`.
    pub fn new(dim: usize, noise_bound: f64) -> Result<Self> {
        if !(noise_bound >= 0.0) {
            return Err(Error::invalid("noise bound must be >= 0"));
        }
        Ok(Self {
            state: CovarianceState::new(dim)?,
            clip: 1.0 + noise_bound,
            predicted: false,
        })
    }

    pub fn theta(&self) -> &Vector {
        self.state.theta_hat()
    }

    pub fn predict(&mut self, a: &Vector) -> Result<f64> {
        self.state.check_action(a)?;
        self.predicted = true;
        Ok(self.state.theta_hat().dot(a).clamp(-self.clip, self.clip))
    }

    pub fn observe(&mut self, a: &Vector, x: f64) -> Result<()> {
        if !self.predicted {
            return Err(Error::protocol("observe called before predict"));
        }
        if !x.is_finite() {
            return Err(Error::invalid(format!("non-finite outcome {x}")));
        }
        self.state.observe(a, x)?;
        self.predicted = false;
        Ok(())
    }
}

impl OnlineRegressor for RidgeRegressor {
    fn feed(&mut self, a: &Vector, x: f64) -> Result<f64> {
        let prediction = self.predict(a)?;
        self.observe(a, x)?;
        Ok(prediction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn passthrough_is_identity() {
        let a = Vector::zeros(2);
        assert_eq!(passthrough_predict(&a, 0.37), 0.37);
        assert_eq!(passthrough_predict(&a, -2.0), -2.0);
        assert_eq!(Passthrough.feed(&a, 1.5).unwrap(), 1.5);
    }

    #[test]
    fn ridge_starts_at_zero() {
        let mut r = RidgeRegressor::new(3, 1.0).unwrap();
        assert_eq!(r.predict(&Vector::from_vec(vec![0.6, 0.8, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn ridge_one_dimensional() {
        let mut r = RidgeRegressor::new(1, 1.0).unwrap();
        let a = Vector::from_vec(vec![1.0]);
        r.feed(&a, 1.0).unwrap();
        assert_abs_diff_eq!(r.theta()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.predict(&a).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ridge_protocol_and_clipping() {
        let mut r = RidgeRegressor::new(1, 0.0).unwrap();
        let a = Vector::from_vec(vec![1.0]);
        assert!(matches!(r.observe(&a, 1.0), Err(Error::Protocol(_))));
        for _ in 0..50 {
            r.feed(&a, 100.0).unwrap();
        }
        assert_eq!(r.predict(&a).unwrap(), 1.0);
        r.observe(&a, 0.0).unwrap();
        assert!(matches!(r.observe(&a, 0.0), Err(Error::Protocol(_))));
    }
}
