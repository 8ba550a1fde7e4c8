//! Bandit policies over a ladder of confidence radii.
//!
//! Every policy plays the optimistic action
//!
//! ```text
//!   A_t = argmax_a ⟨a, θ̂_{t-1}⟩ + √α ‖a‖_{V_{t-1}⁻¹}
//! ```
//!
//! and differs only in how the squared radius `α` is picked each round:
//!
//! * `Oful` uses the log-determinant radius `√α = √(2 ln T + ln det V) + 1`;
//! * `Greedy` uses `α = 0`, `FixedLevel` a single ladder level;
//! * `SparseLinUcb` samples a level from a fixed distribution;
//! * `AdaLinUcb` samples a level from Exp3 weights, with an optional forced
//!   exploration coin that plays the top level instead.
//!
//! A round is split in two calls, [`Policy::choose`] then [`Policy::update`],
//! so the caller can draw the reward in between. The update applies
//! `V ← V + A Aᵀ`, feeds `(A, X)` to the online regressor, refreshes the
//! least-squares estimate with its prediction, and for Exp3 rounds charges
//! the loss `(2 − X)/4` to the sampled level.

use rand::Rng;

use crate::confidence::RadiusLadder;
use crate::covariance::{CovarianceState, Vector};
use crate::error::{Error, Result};
use crate::regressors::{OnlineRegressor, Passthrough};

/// Scores closer than this are ties, resolved toward the lowest index.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Index of the optimistic action for squared radius `alpha`.
pub fn ucb_argmax(actions: &[Vector], state: &CovarianceState, alpha: f64) -> Result<usize> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("radius {alpha} must be finite and >= 0")));
    }
    ucb_argmax_scaled(actions, state, alpha.sqrt())
}

/// Like [`ucb_argmax`] but takes the bonus multiplier `√α` directly.
pub fn ucb_argmax_scaled(actions: &[Vector], state: &CovarianceState, beta: f64) -> Result<usize> {
    if actions.is_empty() {
        return Err(Error::invalid("empty action set"));
    }
    let theta = state.theta_hat();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, a) in actions.iter().enumerate() {
        state.check_action(a)?;
        let mut score = a.dot(theta);
        if beta != 0.0 {
            score += beta * state.mahalanobis_norm(a)?;
        }
        if i == 0 || score > best_score + TIE_TOLERANCE {
            best = i;
            best_score = score;
        }
    }
    Ok(best)
}

/// `√γ_t = √(2 ln T + ln det V) + 1`, the log-determinant OFUL radius.
pub fn oful_beta(log_det: f64, horizon: u64) -> f64 {
    (2.0 * (horizon as f64).ln() + log_det).max(0.0).sqrt() + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionKind {
    Uniform,
    Theory { c: f64 },
    KnownSparsity { position: usize },
    Explicit,
}

/// Probabilities over ladder positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionDistribution {
    probs: Vec<f64>,
    kind: DistributionKind,
}

impl SelectionDistribution {
    pub fn uniform(n_levels: usize) -> Result<Self> {
        if n_levels == 0 {
            return Err(Error::invalid("distribution needs at least one level"));
        }
        Ok(Self {
            probs: vec![1.0 / n_levels as f64; n_levels],
            kind: DistributionKind::Uniform,
        })
    }

    pub fn point_mass(n_levels: usize, position: usize) -> Result<Self> {
        if position >= n_levels {
            return Err(Error::invalid(format!(
                "point mass at {position} outside {n_levels} levels"
            )));
        }
        let mut probs = vec![0.0; n_levels];
        probs[position] = 1.0;
        Ok(Self {
            probs,
            kind: DistributionKind::KnownSparsity { position },
        })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("distribution needs at least one level"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("weights sum to zero"));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
            kind: DistributionKind::Explicit,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `q_s = C² 2^{-s}` for levels `s = 1..=n` where that is below 1; the
/// remaining mass is split evenly over the other levels, then the vector is
/// renormalized.
///
/// When the sub-unit masses already exceed 1 the capped levels get weight 1
/// before renormalization.
pub fn theory_distribution(c_param: f64, n_levels: usize) -> Result<SelectionDistribution> {
    if !(c_param >= 1.0) || !c_param.is_finite() {
        return Err(Error::invalid(format!("C = {c_param} must be >= 1")));
    }
    if n_levels == 0 {
        return Err(Error::invalid("distribution needs at least one level"));
    }
    let c2 = c_param * c_param;
    let raw: Vec<Option<f64>> = (1..=n_levels)
        .map(|s| {
            let q = c2 * 0.5f64.powi(s as i32);
            (q < 1.0).then_some(q)
        })
        .collect();
    let capped = raw.iter().filter(|q| q.is_none()).count();
    let free: f64 = raw.iter().flatten().sum();
    let kappa = if capped == 0 {
        0.0
    } else if free < 1.0 {
        (1.0 - free) / capped as f64
    } else {
        1.0
    };
    let weights = raw.into_iter().map(|q| q.unwrap_or(kappa)).collect();
    let mut dist = SelectionDistribution::from_weights(weights)?;
    dist.kind = DistributionKind::Theory { c: c_param };
    Ok(dist)
}

/// Inverse-CDF draw from `probs` using one uniform variate.
fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    // roundoff left u above the final partial sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Draws a ladder position from `dist`.
pub fn sample_level<R: Rng + ?Sized>(dist: &SelectionDistribution, rng: &mut R) -> usize {
    sample_categorical(&dist.probs, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSchedule {
    Fixed(f64),
    /// `η_t = 2 √(ln n / (n t))`.
    TimeVarying,
}

impl EtaSchedule {
    /// `η = √(ln n / (T n))`.
    pub fn horizon_tuned(n_levels: usize, horizon: u64) -> Self {
        let n = n_levels as f64;
        EtaSchedule::Fixed((n.ln() / (horizon as f64 * n)).sqrt())
    }

    pub fn at(&self, n_levels: usize, t: u64) -> f64 {
        match *self {
            EtaSchedule::Fixed(eta) => eta,
            EtaSchedule::TimeVarying => {
                let n = n_levels as f64;
                2.0 * (n.ln() / (n * t.max(1) as f64)).sqrt()
            }
        }
    }
}

/// Exp3 over ladder positions with a prior and forced exploration.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp3State {
    cumulative: Vec<f64>,
    prior: Vec<f64>,
    eta: EtaSchedule,
    explore_q: f64,
}

impl Exp3State {
    pub fn new(prior: Vec<f64>, eta: EtaSchedule, explore_q: f64) -> Result<Self> {
        if prior.is_empty() {
            return Err(Error::invalid("Exp3 needs at least one level"));
        }
        if prior.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("prior weights must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&explore_q) {
            return Err(Error::invalid(format!("explore_q {explore_q} outside [0, 1]")));
        }
        if let EtaSchedule::Fixed(eta) = eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::invalid(format!("learning rate {eta} must be >= 0")));
            }
        }
        Ok(Self {
            cumulative: vec![0.0; prior.len()],
            prior,
            eta,
            explore_q,
        })
    }

    /// Uniform prior, which makes the weights a plain softmax.
    pub fn uniform(n_levels: usize, eta: EtaSchedule, explore_q: f64) -> Result<Self> {
        Self::new(vec![1.0; n_levels], eta, explore_q)
    }

    pub fn n_levels(&self) -> usize {
        self.prior.len()
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn set_cumulative(&mut self, cumulative: Vec<f64>) -> Result<()> {
        if cumulative.len() != self.prior.len() || cumulative.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("cumulative estimates must be finite, one per level"));
        }
        self.cumulative = cumulative;
        Ok(())
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn eta(&self) -> EtaSchedule {
        self.eta
    }

    pub fn explore_q(&self) -> f64 {
        self.explore_q
    }

    /// `P_{t,s} ∝ prior_s · exp(η_t S_s)`, computed in log space.
    pub fn probs(&self, t: u64) -> Result<Vec<f64>> {
        let eta = self.eta.at(self.n_levels(), t);
        let logits: Vec<Option<f64>> = self
            .prior
            .iter()
            .zip(&self.cumulative)
            .map(|(p, s)| (*p > 0.0).then(|| p.ln() + eta * s))
            .collect();
        let max = logits
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::invalid("prior has no mass"));
        }
        let weights: Vec<f64> = logits
            .iter()
            .map(|l| l.map_or(0.0, |l| (l - max).exp()))
            .collect();
        let total: f64 = weights.iter().sum();
        Ok(weights.into_iter().map(|w| w / total).collect())
    }

    /// Charges the clipped loss `(2 − reward)/4`, importance weighted by
    /// `1/p_chosen`, to position `chosen`.
    pub fn update(&mut self, chosen: usize, reward: f64, p_chosen: f64) -> Result<()> {
        if !(p_chosen > 0.0) {
            return Err(Error::invalid(format!("p_chosen = {p_chosen} must be positive")));
        }
        if chosen >= self.cumulative.len() {
            return Err(Error::invalid(format!("level position {chosen} out of range")));
        }
        if reward.is_nan() {
            return Err(Error::invalid("reward is NaN"));
        }
        let loss = exp3_loss(reward);
        if loss > 0.0 {
            self.cumulative[chosen] -= loss / p_chosen;
        }
        Ok(())
    }
}

/// `clip((2 − x)/4, 0, 1)`.
pub fn exp3_loss(reward: f64) -> f64 {
    ((2.0 - reward) / 4.0).clamp(0.0, 1.0)
}

/// Exp3 sampling distribution at round `t`.
pub fn exp3_probs(exp3: &Exp3State, t: u64) -> Result<Vec<f64>> {
    exp3.probs(t)
}

/// Exp3 loss update for the level at position `chosen`.
pub fn exp3_update(exp3: &mut Exp3State, chosen: usize, reward: f64, p_chosen: f64) -> Result<()> {
    exp3.update(chosen, reward, p_chosen)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    Oful,
    Greedy,
    /// Always plays the given ladder level.
    FixedLevel(usize),
    SparseLinUcb(SelectionDistribution),
    AdaLinUcb(Exp3State),
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Oful => "oful",
            PolicyKind::Greedy => "greedy",
            PolicyKind::FixedLevel(_) => "fixed-level",
            PolicyKind::SparseLinUcb(_) => "sparse-linucb",
            PolicyKind::AdaLinUcb(_) => "ada-linucb",
        }
    }
}

/// How the radius of a round was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Oful,
    Greedy,
    Fixed,
    /// Level drawn from a fixed distribution.
    Sampled,
    /// Forced exploration at the top level.
    Explore,
    /// Level drawn from Exp3.
    Exp3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub index: usize,
    /// Ladder level used, if the policy plays ladder levels.
    pub level: Option<usize>,
    pub branch: Branch,
}

#[derive(Debug, Clone)]
struct Pending {
    action: Vector,
    exp3: Option<(usize, f64)>,
}

/// One policy instance for one episode.
#[derive(Debug)]
pub struct Policy {
    kind: PolicyKind,
    covariance: CovarianceState,
    ladder: RadiusLadder,
    regressor: Box<dyn OnlineRegressor>,
    pending: Option<Pending>,
}

impl Policy {
    pub fn new(
        kind: PolicyKind,
        covariance: CovarianceState,
        ladder: RadiusLadder,
        regressor: Box<dyn OnlineRegressor>,
    ) -> Result<Self> {
        let n = ladder.n_levels();
        match &kind {
            PolicyKind::FixedLevel(level) => {
                ladder.position_of(*level)?;
            }
            PolicyKind::SparseLinUcb(dist) if dist.len() != n => {
                return Err(Error::invalid(format!(
                    "distribution has {} levels, ladder has {n}",
                    dist.len()
                )));
            }
            PolicyKind::AdaLinUcb(exp3) if exp3.n_levels() != n => {
                return Err(Error::invalid(format!(
                    "Exp3 has {} levels, ladder has {n}",
                    exp3.n_levels()
                )));
            }
            _ => {}
        }
        Ok(Self {
            kind,
            covariance,
            ladder,
            regressor,
            pending: None,
        })
    }

    /// Passthrough regressor and the default refresh period.
    pub fn with_defaults(kind: PolicyKind, dim: usize, ladder: RadiusLadder) -> Result<Self> {
        Self::new(kind, CovarianceState::new(dim)?, ladder, Box::new(Passthrough))
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn covariance(&self) -> &CovarianceState {
        &self.covariance
    }

    pub fn ladder(&self) -> &RadiusLadder {
        &self.ladder
    }

    /// Picks the action for round `t` (1-based).
    pub fn choose<R: Rng + ?Sized>(
        &mut self,
        actions: &[Vector],
        t: u64,
        rng: &mut R,
    ) -> Result<Choice> {
        if self.pending.is_some() {
            return Err(Error::protocol("action chosen twice without an update"));
        }
        let (choice, exp3) = match &self.kind {
            PolicyKind::Oful => (self.oful_round(actions)?, None),
            PolicyKind::Greedy => {
                let index = ucb_argmax_scaled(actions, &self.covariance, 0.0)?;
                (
                    Choice {
                        index,
                        level: None,
                        branch: Branch::Greedy,
                    },
                    None,
                )
            }
            PolicyKind::FixedLevel(level) => {
                let level = *level;
                let index = self.play_level(actions, level, t)?;
                (
                    Choice {
                        index,
                        level: Some(level),
                        branch: Branch::Fixed,
                    },
                    None,
                )
            }
            PolicyKind::SparseLinUcb(dist) => {
                let position = sample_level(dist, rng);
                (self.sparse_linucb_round(actions, position, t)?, None)
            }
            PolicyKind::AdaLinUcb(exp3) => self.ada_linucb_round(exp3.clone(), actions, t, rng)?,
        };
        self.pending = Some(Pending {
            action: actions[choice.index].clone(),
            exp3,
        });
        Ok(choice)
    }

    fn play_level(&self, actions: &[Vector], level: usize, t: u64) -> Result<usize> {
        let alpha = self.ladder.radius(level, t)?;
        ucb_argmax(actions, &self.covariance, alpha)
    }

    fn oful_round(&self, actions: &[Vector]) -> Result<Choice> {
        let beta = oful_beta(self.covariance.log_det(), self.ladder.horizon());
        let index = ucb_argmax_scaled(actions, &self.covariance, beta)?;
        Ok(Choice {
            index,
            level: None,
            branch: Branch::Oful,
        })
    }

    fn sparse_linucb_round(&self, actions: &[Vector], position: usize, t: u64) -> Result<Choice> {
        let level = self.ladder.level_at(position)?;
        let index = self.play_level(actions, level, t)?;
        Ok(Choice {
            index,
            level: Some(level),
            branch: Branch::Sampled,
        })
    }

    fn ada_linucb_round<R: Rng + ?Sized>(
        &self,
        exp3: Exp3State,
        actions: &[Vector],
        t: u64,
        rng: &mut R,
    ) -> Result<(Choice, Option<(usize, f64)>)> {
        let coin: f64 = rng.random();
        if coin < exp3.explore_q() {
            let level = self.ladder.top_level();
            let index = self.play_level(actions, level, t)?;
            return Ok((
                Choice {
                    index,
                    level: Some(level),
                    branch: Branch::Explore,
                },
                None,
            ));
        }
        let probs = exp3.probs(t)?;
        let position = sample_categorical(&probs, rng);
        let level = self.ladder.level_at(position)?;
        let index = self.play_level(actions, level, t)?;
        Ok((
            Choice {
                index,
                level: Some(level),
                branch: Branch::Exp3,
            },
            Some((position, probs[position])),
        ))
    }

    /// Applies the reward of the pending round.
    pub fn update(&mut self, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::invalid(format!("non-finite reward {reward}")));
        }
        let pending = self
            .pending
            .take()
            .ok_or_else(|| Error::protocol("reward supplied before an action was chosen"))?;
        if let (Some((position, p)), PolicyKind::AdaLinUcb(exp3)) = (pending.exp3, &mut self.kind) {
            exp3.update(position, reward, p)?;
        }
        self.covariance.rank_one_update(&pending.action)?;
        let x_hat = self.regressor.feed(&pending.action, reward)?;
        self.covariance.rls_update(&pending.action, x_hat)?;
        Ok(())
    }
}
