//! Bandit instances: action-set providers, hidden targets, noise and regret.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::Vector;
use crate::error::{Error, Result};

/// Norm slack for emitted actions and targets.
pub const UNIT_SLACK: f64 = 1e-12;

pub type ActionSet = Arc<Vec<Vector>>;

/// Everything the learner has revealed so far.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub sets: Vec<ActionSet>,
    pub chosen: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    pub fn push(&mut self, set: ActionSet, chosen: usize, reward: f64) {
        self.sets.push(set);
        self.chosen.push(chosen);
        self.rewards.push(reward);
    }
}

/// Source of per-round action sets. May read the whole transcript, which
/// makes adaptive adversaries expressible.
pub trait ActionSetProvider: Send + Sync + std::fmt::Debug {
    fn next_set(&self, history: &Transcript) -> Result<ActionSet>;

    /// All sets the provider can emit over `horizon` rounds, when that does
    /// not depend on the learner.
    fn enumerate_sets(&self, _horizon: usize) -> Option<Vec<ActionSet>> {
        None
    }
}

/// The same set every round.
#[derive(Debug, Clone)]
pub struct FixedSetProvider {
    set: ActionSet,
}

impl FixedSetProvider {
    pub fn new(actions: Vec<Vector>) -> Result<Self> {
        validate_set(&actions)?;
        Ok(Self {
            set: Arc::new(actions),
        })
    }

    pub fn set(&self) -> &ActionSet {
        &self.set
    }
}

impl ActionSetProvider for FixedSetProvider {
    fn next_set(&self, _history: &Transcript) -> Result<ActionSet> {
        Ok(Arc::clone(&self.set))
    }

    fn enumerate_sets(&self, _horizon: usize) -> Option<Vec<ActionSet>> {
        Some(vec![Arc::clone(&self.set)])
    }
}

pub(crate) fn validate_set(actions: &[Vector]) -> Result<()> {
    if actions.is_empty() {
        return Err(Error::invalid("action set is empty"));
    }
    let dim = actions[0].len();
    for a in actions {
        if a.len() != dim {
            return Err(Error::invalid("actions of mixed dimension"));
        }
        if a.iter().any(|x| !x.is_finite()) || a.norm() > 1.0 + UNIT_SLACK {
            return Err(Error::invalid("action outside the unit ball"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// `ε ~ Uniform[-1, 1]`.
    UniformPm1,
    Gaussian { sigma: f64 },
    None,
}

impl NoiseModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::UniformPm1 => rng.random_range(-1.0..=1.0),
            NoiseModel::Gaussian { sigma } => Normal::new(0.0, sigma)
                .map(|n| n.sample(rng))
                .unwrap_or(0.0),
            NoiseModel::None => 0.0,
        }
    }
}

/// Uniform draw from the unit sphere in `R^dim`.
pub fn sample_unit_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-300 {
            return v / n;
        }
    }
}

#[derive(Debug, Clone)]
pub struct BanditInstance {
    theta_star: Vector,
    provider: Arc<dyn ActionSetProvider>,
    noise: NoiseModel,
}

impl BanditInstance {
    pub fn new(
        theta_star: Vector,
        provider: Arc<dyn ActionSetProvider>,
        noise: NoiseModel,
    ) -> Result<Self> {
        if theta_star.is_empty() || theta_star.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("θ* must be a finite nonempty vector"));
        }
        if theta_star.norm() > 1.0 + UNIT_SLACK {
            return Err(Error::invalid("‖θ*‖ exceeds 1"));
        }
        if let NoiseModel::Gaussian { sigma } = noise {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::invalid("noise sigma must be finite and >= 0"));
            }
        }
        Ok(Self {
            theta_star,
            provider,
            noise,
        })
    }

    /// `k_actions` fixed actions uniform on the unit sphere, and `θ*` whose
    /// first `sparsity` coordinates are uniform on the unit sphere of that
    /// dimension, the rest zero.
    pub fn generate_fixed_sphere<R: Rng + ?Sized>(
        dim: usize,
        k_actions: usize,
        sparsity: usize,
        noise: NoiseModel,
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 || k_actions == 0 {
            return Err(Error::invalid("dimension and action count must be positive"));
        }
        if sparsity == 0 || sparsity > dim {
            return Err(Error::invalid(format!(
                "sparsity {sparsity} outside 1..={dim}"
            )));
        }
        let actions: Vec<Vector> = (0..k_actions).map(|_| sample_unit_sphere(dim, rng)).collect();
        let head = sample_unit_sphere(sparsity, rng);
        let mut theta = Vector::zeros(dim);
        theta.rows_mut(0, sparsity).copy_from(&head);
        Self::new(theta, Arc::new(FixedSetProvider::new(actions)?), noise)
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn theta_star(&self) -> &Vector {
        &self.theta_star
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn provider(&self) -> &Arc<dyn ActionSetProvider> {
        &self.provider
    }

    /// Asks the provider for the next set and checks its norms.
    pub fn next_set(&self, history: &Transcript) -> Result<ActionSet> {
        let set = self.provider.next_set(history)?;
        validate_set(&set)?;
        if set[0].len() != self.dim() {
            return Err(Error::invalid("provider emitted actions of the wrong dimension"));
        }
        Ok(set)
    }

    /// `X = ⟨a, θ*⟩ + ε`.
    pub fn reward<R: Rng + ?Sized>(&self, a: &Vector, rng: &mut R) -> f64 {
        a.dot(&self.theta_star) + self.noise.sample(rng)
    }

    /// `max_{b ∈ set} ⟨b, θ*⟩ − ⟨set[chosen], θ*⟩`, never negative.
    pub fn instantaneous_regret(&self, set: &[Vector], chosen: usize) -> Result<f64> {
        let picked = set
            .get(chosen)
            .ok_or_else(|| Error::invalid(format!("chosen index {chosen} not in the set")))?;
        let best = set
            .iter()
            .map(|a| a.dot(&self.theta_star))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((best - picked.dot(&self.theta_star)).max(0.0))
    }

    /// Minimum gap between the optimal action and any other action across
    /// the provider's sets. `None` if undefined: no suboptimal action, a tie
    /// for the optimum, or a provider whose sets cannot be enumerated.
    pub fn min_gap(&self, horizon: usize) -> Option<f64> {
        let sets = self.provider.enumerate_sets(horizon)?;
        min_gap_over(&self.theta_star, &sets)
    }
}

/// Minimum suboptimality gap over the given sets.
pub fn min_gap_over(theta_star: &Vector, sets: &[ActionSet]) -> Option<f64> {
    let mut gap = f64::INFINITY;
    for set in sets {
        let mut values: Vec<f64> = set.iter().map(|a| a.dot(theta_star)).collect();
        if values.len() < 2 {
            continue;
        }
        values.sort_by(|a, b| b.total_cmp(a));
        let g = values[0] - values[1];
        if g <= UNIT_SLACK {
            return None;
        }
        gap = gap.min(g);
    }
    gap.is_finite().then_some(gap)
}
