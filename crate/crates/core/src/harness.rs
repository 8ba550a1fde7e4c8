//! Seeded episodes, multi-repetition experiments and regret aggregation.
//!
//! Seeds are derived by hashing `(base seed, sparsity, repetition, policy
//! settings, stream)` through SplitMix64, so a policy's random streams do not
//! depend on which other policies share the roster or on their order.
//! Within a repetition every policy faces the same instance.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::{LadderMode, RadiusLadder};
use crate::covariance::{CovarianceState, DEFAULT_REFRESH_PERIOD};
use crate::environment::{BanditInstance, NoiseModel, Transcript};
use crate::error::{Error, Result};
use crate::policies::{
    theory_distribution, EtaSchedule, Exp3State, Policy, PolicyKind, SelectionDistribution,
};
use crate::regressors::{OnlineRegressor, Passthrough, RidgeRegressor};

/// Sparsity levels used when a config does not list any.
pub const DEFAULT_SPARSITY: [usize; 5] = [1, 2, 4, 8, 16];

/// Slack on the runtime elliptic-potential audit.
pub const POTENTIAL_SLACK: f64 = 1e-6;

fn default_k() -> usize {
    30
}
fn default_reps() -> usize {
    20
}
fn default_refresh() -> usize {
    DEFAULT_REFRESH_PERIOD
}
fn default_noise() -> NoiseModel {
    NoiseModel::UniformPm1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    #[serde(default = "LadderConfig::default_mode")]
    pub mode: LadderMode,
    #[serde(default = "LadderConfig::default_levels")]
    pub levels: usize,
    /// Whether level 0 is the greedy level; only for time-dependent ladders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub greedy: Option<bool>,
}

impl LadderConfig {
    fn default_mode() -> LadderMode {
        LadderMode::TimeDependent
    }
    fn default_levels() -> usize {
        6
    }

    pub fn build(&self, horizon: u64) -> Result<RadiusLadder> {
        let greedy = self
            .greedy
            .unwrap_or(self.mode == LadderMode::TimeDependent);
        RadiusLadder::new(self.levels, self.mode, horizon, greedy)
    }
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            mode: Self::default_mode(),
            levels: Self::default_levels(),
            greedy: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKindSpec {
    Oful,
    Greedy,
    FixedLevel,
    SparseLinucb,
    AdaLinucb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionSpec {
    Uniform,
    Theory,
    /// Point mass at the level matched to the instance sparsity.
    Known,
    /// Normalized `weights`.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaSpec {
    /// `η_t = 2 √(ln n / (n t))`.
    TimeVarying,
    /// `η = √(ln n / (T n))`.
    HorizonTuned,
    /// `eta_value`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorSpec {
    Passthrough,
    Ridge,
}

/// One roster entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub label: String,
    pub kind: PolicyKindSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<DistributionSpec>,
    /// `C` of the theory distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<EtaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regressor: Option<RegressorSpec>,
    /// Ridge predictions are clipped to `±(1 + noise_bound)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_bound: Option<f64>,
}

impl PolicySpec {
    pub fn new(label: impl Into<String>, kind: PolicyKindSpec) -> Self {
        Self {
            label: label.into(),
            kind,
            distribution: None,
            prior: None,
            c: None,
            level: None,
            weights: None,
            eta: None,
            eta_value: None,
            explore_q: None,
            regressor: None,
            noise_bound: None,
        }
    }

    pub fn with_distribution(mut self, dist: DistributionSpec) -> Self {
        self.distribution = Some(dist);
        self
    }

    pub fn with_prior(mut self, prior: DistributionSpec) -> Self {
        self.prior = Some(prior);
        self
    }

    pub fn with_level(mut self, level: usize) -> Self {
        self.level = Some(level);
        self
    }

    pub fn with_explore_q(mut self, q: f64) -> Self {
        self.explore_q = Some(q);
        self
    }

    fn selection(
        &self,
        which: Option<DistributionSpec>,
        ladder: &RadiusLadder,
        sparsity: usize,
        key: &str,
    ) -> Result<SelectionDistribution> {
        let n = ladder.n_levels();
        match which.unwrap_or(DistributionSpec::Uniform) {
            DistributionSpec::Uniform => SelectionDistribution::uniform(n),
            DistributionSpec::Theory => theory_distribution(self.c.unwrap_or(1.0), n),
            DistributionSpec::Known => {
                let level = match self.level {
                    Some(level) => level,
                    None => known_sparsity_level(ladder, sparsity),
                };
                SelectionDistribution::point_mass(n, ladder.position_of(level)?)
            }
            DistributionSpec::Explicit => {
                let weights = self
                    .weights
                    .clone()
                    .ok_or_else(|| Error::config(key, "explicit distribution needs `weights`"))?;
                if weights.len() != n {
                    return Err(Error::config(
                        key,
                        format!("{} weights for a ladder of {n} levels", weights.len()),
                    ));
                }
                SelectionDistribution::from_weights(weights)
            }
        }
    }

    /// Builds the policy kind for an instance of the given sparsity.
    pub fn build_kind(&self, ladder: &RadiusLadder, sparsity: usize) -> Result<PolicyKind> {
        Ok(match self.kind {
            PolicyKindSpec::Oful => PolicyKind::Oful,
            PolicyKindSpec::Greedy => PolicyKind::Greedy,
            PolicyKindSpec::FixedLevel => PolicyKind::FixedLevel(
                self.level
                    .ok_or_else(|| Error::config("level", "fixed-level policy needs `level`"))?,
            ),
            PolicyKindSpec::SparseLinucb => PolicyKind::SparseLinUcb(self.selection(
                self.distribution,
                ladder,
                sparsity,
                "distribution",
            )?),
            PolicyKindSpec::AdaLinucb => {
                let prior = self.selection(self.prior, ladder, sparsity, "prior")?;
                let n = ladder.n_levels();
                let eta = match self.eta.unwrap_or(EtaSpec::TimeVarying) {
                    EtaSpec::TimeVarying => EtaSchedule::TimeVarying,
                    EtaSpec::HorizonTuned => EtaSchedule::horizon_tuned(n, ladder.horizon()),
                    EtaSpec::Fixed => EtaSchedule::Fixed(
                        self.eta_value
                            .ok_or_else(|| Error::config("eta_value", "fixed eta needs `eta_value`"))?,
                    ),
                };
                PolicyKind::AdaLinUcb(Exp3State::new(
                    prior.probs().to_vec(),
                    eta,
                    self.explore_q.unwrap_or(0.0),
                )?)
            }
        })
    }

    pub fn build_regressor(&self, dim: usize) -> Result<Box<dyn OnlineRegressor>> {
        Ok(match self.regressor.unwrap_or(RegressorSpec::Passthrough) {
            RegressorSpec::Passthrough => Box::new(Passthrough),
            RegressorSpec::Ridge => Box::new(RidgeRegressor::new(dim, self.noise_bound.unwrap_or(1.0))?),
        })
    }
}

/// Level whose radius scale `2^i` first reaches the sparsity, skipping the
/// greedy level and clamped to the top of the ladder.
pub fn known_sparsity_level(ladder: &RadiusLadder, sparsity: usize) -> usize {
    ladder
        .levels()
        .filter(|&l| l >= 1)
        .find(|&l| (1usize << l.min(63)) >= sparsity)
        .unwrap_or_else(|| ladder.top_level())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub horizon: u64,
    #[serde(default = "default_k")]
    pub k_actions: usize,
    #[serde(default)]
    pub sparsity: Vec<usize>,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    #[serde(default = "default_refresh")]
    pub refresh_period: usize,
    /// All policies of a repetition see the same noise draws.
    #[serde(default)]
    pub shared_noise: bool,
    /// Output directory for `run`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub ladder: LadderConfig,
    #[serde(rename = "policy")]
    pub policies: Vec<PolicySpec>,
}

impl ExperimentConfig {
    /// Config with defaults for everything but the problem size.
    pub fn new(dim: usize, horizon: u64, policies: Vec<PolicySpec>) -> Self {
        Self {
            dim,
            horizon,
            k_actions: default_k(),
            sparsity: Vec::new(),
            repetitions: default_reps(),
            seed: 0,
            noise: default_noise(),
            refresh_period: default_refresh(),
            shared_noise: false,
            ladder: LadderConfig::default(),
            output: None,
            policies,
        }
    }

    /// Fills defaulted fields and checks every constraint, reporting the
    /// offending key path.
    pub fn resolve(mut self) -> Result<Self> {
        if self.dim == 0 {
            return Err(Error::config("dim", "must be positive"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be positive"));
        }
        if self.k_actions == 0 {
            return Err(Error::config("k_actions", "must be positive"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("repetitions", "must be positive"));
        }
        if self.refresh_period == 0 {
            return Err(Error::config("refresh_period", "must be positive"));
        }
        if self.sparsity.is_empty() {
            self.sparsity = DEFAULT_SPARSITY
                .iter()
                .copied()
                .filter(|s| *s <= self.dim)
                .collect();
        }
        for (i, s) in self.sparsity.iter().enumerate() {
            if *s == 0 || *s > self.dim {
                return Err(Error::config(
                    format!("sparsity[{i}]"),
                    format!("{s} outside 1..={}", self.dim),
                ));
            }
        }
        if let NoiseModel::Gaussian { sigma } = self.noise {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::config("noise.gaussian.sigma", "must be finite and >= 0"));
            }
        }
        let ladder = self
            .ladder
            .build(self.horizon)
            .map_err(|e| Error::config("ladder", e.to_string()))?;
        if self.policies.is_empty() {
            return Err(Error::config("policy", "roster is empty"));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, p) in self.policies.iter().enumerate() {
            let key = format!("policy[{i}]");
            if p.label.is_empty() || p.label.contains([',', '"', '\n']) {
                return Err(Error::config(
                    format!("{key}.label"),
                    "must be nonempty without commas, quotes or newlines",
                ));
            }
            if !seen.insert(p.label.as_str()) {
                return Err(Error::config(
                    format!("{key}.label"),
                    format!("duplicate label `{}`", p.label),
                ));
            }
            self.check_policy(p, &ladder, &key)?;
        }
        Ok(self)
    }

    fn check_policy(&self, p: &PolicySpec, ladder: &RadiusLadder, key: &str) -> Result<()> {
        use PolicyKindSpec::*;
        let field = |name: &str| format!("{key}.{name}");
        let reject = |name: &str, present: bool| -> Result<()> {
            if present {
                Err(Error::config(
                    field(name),
                    format!("not accepted by a `{:?}` policy", p.kind),
                ))
            } else {
                Ok(())
            }
        };
        reject("distribution", p.distribution.is_some() && p.kind != SparseLinucb)?;
        reject("prior", p.prior.is_some() && p.kind != AdaLinucb)?;
        reject(
            "eta",
            (p.eta.is_some() || p.eta_value.is_some()) && p.kind != AdaLinucb,
        )?;
        reject("explore_q", p.explore_q.is_some() && p.kind != AdaLinucb)?;
        if let Some(c) = p.c {
            if !(c >= 1.0 && c.is_finite()) {
                return Err(Error::config(field("c"), "must be >= 1"));
            }
        }
        if let Some(q) = p.explore_q {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::config(field("explore_q"), "must lie in [0, 1]"));
            }
        }
        if let Some(level) = p.level {
            if !ladder.levels().contains(&level) {
                return Err(Error::config(
                    field("level"),
                    format!("{level} outside ladder levels {:?}", ladder.levels()),
                ));
            }
        }
        if p.kind == FixedLevel && p.level.is_none() {
            return Err(Error::config(field("level"), "required for fixed-level"));
        }
        if let Some(nb) = p.noise_bound {
            if !(nb >= 0.0 && nb.is_finite()) {
                return Err(Error::config(field("noise_bound"), "must be finite and >= 0"));
            }
        }
        let s = self.sparsity[0];
        p.build_kind(ladder, s).map_err(|e| match e {
            Error::Config { path, message } => Error::config(field(&path), message),
            other => Error::config(key, other.to_string()),
        })?;
        Ok(())
    }

    pub fn ladder(&self) -> Result<RadiusLadder> {
        self.ladder.build(self.horizon)
    }
}

const MIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(MIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed split: hashes `base` with each part in turn.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, p| splitmix64(acc ^ splitmix64(*p)))
}

/// FNV-1a 64.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Stream key of a roster entry: a hash of its settings without the label,
/// so duplicated specs draw identical streams and unrelated entries never
/// share one.
pub fn spec_key(spec: &PolicySpec) -> u64 {
    let unlabeled = PolicySpec {
        label: String::new(),
        ..spec.clone()
    };
    let text = toml::to_string(&unlabeled).unwrap_or_default();
    fnv1a(text.as_bytes())
}

const STREAM_INSTANCE: u64 = 1;
const STREAM_POLICY: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// Seed of repetition `rep` at sparsity `sparsity`.
pub fn repetition_seed(base: u64, sparsity: usize, rep: usize) -> u64 {
    derive_seed(base, &[sparsity as u64, rep as u64])
}

/// Per-round record of one policy over one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub label: String,
    pub sparsity: usize,
    pub seed: u64,
    pub inst_regret: Vec<f64>,
    pub cum_regret: Vec<f64>,
    /// Ladder level played each round; `None` for OFUL and greedy.
    pub levels: Vec<Option<usize>>,
    pub chosen: Vec<usize>,
    pub wall_seconds: f64,
    /// `Σ min{1, ‖A_t‖²_{V⁻¹}}` and `ln det V_T` at the end of the episode.
    pub potential_sum: f64,
    pub final_log_det: f64,
}

impl RegretTrace {
    pub fn horizon(&self) -> usize {
        self.inst_regret.len()
    }

    pub fn final_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }
}

/// Plays `horizon` rounds of `policy` on `instance`.
///
/// Errors from the policy or provider carry the 1-based round index.
pub fn run_episode(
    instance: &BanditInstance,
    policy: &mut Policy,
    horizon: usize,
    policy_rng: &mut ChaCha8Rng,
    noise_rng: &mut ChaCha8Rng,
) -> Result<RegretTrace> {
    let started = Instant::now();
    let mut transcript = Transcript::default();
    let mut inst_regret = Vec::with_capacity(horizon);
    let mut cum_regret = Vec::with_capacity(horizon);
    let mut levels = Vec::with_capacity(horizon);
    let mut total = 0.0;
    for t in 1..=horizon {
        let round = |e: Error| e.at_round(t);
        let set = instance.next_set(&transcript).map_err(round)?;
        let choice = policy.choose(&set, t as u64, policy_rng).map_err(round)?;
        let reward = instance.reward(&set[choice.index], noise_rng);
        let regret = instance
            .instantaneous_regret(&set, choice.index)
            .map_err(round)?;
        policy.update(reward).map_err(round)?;
        total += regret;
        inst_regret.push(regret);
        cum_regret.push(total);
        levels.push(choice.level);
        transcript.push(set, choice.index, reward);
    }
    let cov = policy.covariance();
    let potential_sum = cov.potential_sum();
    let final_log_det = cov.log_det();
    if potential_sum > 2.0 * final_log_det + POTENTIAL_SLACK {
        return Err(Error::corrupt(format!(
            "elliptic potential {potential_sum} exceeds 2 ln det V = {}",
            2.0 * final_log_det
        )));
    }
    Ok(RegretTrace {
        label: String::new(),
        sparsity: 0,
        seed: 0,
        inst_regret,
        cum_regret,
        levels,
        chosen: transcript.chosen,
        wall_seconds: started.elapsed().as_secs_f64(),
        potential_sum,
        final_log_det,
    })
}

/// Runs one roster entry on `instance` for repetition `rep`, with streams
/// derived from the config's base seed.
pub fn run_policy_on(
    config: &ExperimentConfig,
    spec: &PolicySpec,
    instance: &BanditInstance,
    sparsity: usize,
    rep: usize,
) -> Result<RegretTrace> {
    let ladder = config.ladder()?;
    let kind = spec.build_kind(&ladder, sparsity)?;
    let covariance = CovarianceState::with_refresh_period(config.dim, config.refresh_period)?;
    let mut policy = Policy::new(kind, covariance, ladder, spec.build_regressor(config.dim)?)?;
    let s = sparsity as u64;
    let r = rep as u64;
    let key = spec_key(spec);
    let mut policy_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[s, r, key, STREAM_POLICY]));
    let noise_seed = if config.shared_noise {
        derive_seed(config.seed, &[s, r, STREAM_NOISE])
    } else {
        derive_seed(config.seed, &[s, r, key, STREAM_NOISE])
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut trace = run_episode(
        instance,
        &mut policy,
        config.horizon as usize,
        &mut policy_rng,
        &mut noise_rng,
    )?;
    trace.label = spec.label.clone();
    trace.sparsity = sparsity;
    trace.seed = repetition_seed(config.seed, sparsity, rep);
    Ok(trace)
}

/// The instance of repetition `rep` at the given sparsity.
pub fn generate_instance(
    config: &ExperimentConfig,
    sparsity: usize,
    rep: usize,
) -> Result<BanditInstance> {
    let seed = derive_seed(config.seed, &[sparsity as u64, rep as u64, STREAM_INSTANCE]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BanditInstance::generate_fixed_sphere(
        config.dim,
        config.k_actions,
        sparsity,
        config.noise,
        &mut rng,
    )
}

/// Pointwise mean and population standard deviation of cumulative regret.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub label: String,
    pub sparsity: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub repetitions: usize,
}

impl AggregateResult {
    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }
}

pub fn aggregate(traces: &[&RegretTrace]) -> Result<AggregateResult> {
    let first = traces
        .first()
        .ok_or_else(|| Error::invalid("no traces to aggregate"))?;
    let len = first.cum_regret.len();
    for t in traces {
        if t.label != first.label || t.sparsity != first.sparsity {
            return Err(Error::invalid("traces with mixed labels"));
        }
        if t.cum_regret.len() != len {
            return Err(Error::invalid("traces with mixed lengths"));
        }
    }
    let columns: Vec<&[f64]> = traces.iter().map(|t| t.cum_regret.as_slice()).collect();
    let (mean, std) = mean_std(&columns, len);
    Ok(AggregateResult {
        label: first.label.clone(),
        sparsity: first.sparsity,
        mean,
        std,
        repetitions: traces.len(),
    })
}

/// Two-pass pointwise mean and population std.
pub(crate) fn mean_std(series: &[&[f64]], len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = series.len() as f64;
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    for i in 0..len {
        let m = series.iter().map(|s| s[i]).sum::<f64>() / n;
        let var = series.iter().map(|s| (s[i] - m).powi(2)).sum::<f64>() / n;
        mean[i] = m;
        std[i] = var.sqrt();
    }
    (mean, std)
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Ordered by sparsity, then roster order, then repetition.
    pub traces: Vec<RegretTrace>,
    /// Ordered by sparsity, then roster order.
    pub aggregates: Vec<AggregateResult>,
}

impl ExperimentResult {
    pub fn aggregate_for(&self, label: &str, sparsity: usize) -> Option<&AggregateResult> {
        self.aggregates
            .iter()
            .find(|a| a.label == label && a.sparsity == sparsity)
    }
}

/// Runs every roster policy on fresh instances for each sparsity level and
/// repetition. Repetitions run in parallel.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let config = config.clone().resolve()?;
    let jobs: Vec<(usize, usize)> = config
        .sparsity
        .iter()
        .flat_map(|&s| (0..config.repetitions).map(move |r| (s, r)))
        .collect();
    let per_job: Vec<Vec<RegretTrace>> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let instance = Arc::new(generate_instance(&config, s, r)?);
            config
                .policies
                .iter()
                .map(|spec| run_policy_on(&config, spec, &instance, s, r))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let n_pol = config.policies.len();
    let reps = config.repetitions;
    let mut slots: Vec<Option<RegretTrace>> = per_job.into_iter().flatten().map(Some).collect();
    let mut traces = Vec::with_capacity(slots.len());
    let mut aggregates = Vec::new();
    for (si, _) in config.sparsity.iter().enumerate() {
        for p in 0..n_pol {
            let start = traces.len();
            for r in 0..reps {
                let idx = (si * reps + r) * n_pol + p;
                traces.push(slots[idx].take().expect("each trace is moved once"));
            }
            let group: Vec<&RegretTrace> = traces[start..].iter().collect();
            aggregates.push(aggregate(&group)?);
        }
    }
    Ok(ExperimentResult { traces, aggregates })
}
