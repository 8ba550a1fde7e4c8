//! Confidence radii: the level ladder, the online-to-confidence-set radius
//! `γ(δ)`, the sparse-regression regret bound `B_T` and the safe level.
//!
//! Levels are labelled by their exponent. A fixed-horizon ladder with `n`
//! levels spans labels `1..=n` with squared radius `2^i · ln T`; a
//! time-dependent ladder spans `0..n` when the greedy level is included
//! (radius exactly 0 at label 0) and `1..=n` otherwise, with squared radius
//! `2^i · ln t` at round `t`. Selection distributions are indexed by
//! position in the ladder, not by label.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderMode {
    /// `α_i = 2^i ln T`.
    FixedHorizon,
    /// `α_{i,t} = 2^i ln t`, with the greedy level pinned at 0.
    TimeDependent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusLadder {
    n_levels: usize,
    mode: LadderMode,
    horizon: u64,
    include_greedy_level: bool,
}

impl RadiusLadder {
    pub fn new(
        n_levels: usize,
        mode: LadderMode,
        horizon: u64,
        include_greedy_level: bool,
    ) -> Result<Self> {
        if n_levels == 0 {
            return Err(Error::invalid("ladder needs at least one level"));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon must be positive"));
        }
        if include_greedy_level && mode == LadderMode::FixedHorizon {
            return Err(Error::invalid(
                "the greedy level only exists in time-dependent ladders",
            ));
        }
        Ok(Self {
            n_levels,
            mode,
            horizon,
            include_greedy_level,
        })
    }

    /// Fixed-horizon ladder with labels `1..=n`.
    pub fn fixed_horizon(n_levels: usize, horizon: u64) -> Result<Self> {
        Self::new(n_levels, LadderMode::FixedHorizon, horizon, false)
    }

    /// Time-dependent ladder with labels `0..n`, level 0 being greedy.
    pub fn time_dependent(n_levels: usize, horizon: u64) -> Result<Self> {
        Self::new(n_levels, LadderMode::TimeDependent, horizon, true)
    }

    /// Fixed-horizon ladder tall enough to contain `γ(1/T)` for a regressor
    /// with regret bound `b_t`, and never shorter than `⌈log₂ d⌉ + 3`.
    pub fn sized_for(dim: usize, horizon: u64, b_t: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if horizon < 2 {
            return Err(Error::invalid(
                "a fixed-horizon ladder needs horizon >= 2 (ln 1 = 0)",
            ));
        }
        let gamma = gamma_delta(&ConversionParams::at_horizon(b_t, horizon)?)?;
        let log_t = (horizon as f64).ln();
        let floor = ceil_log2(dim) + 3;
        let mut n = 1;
        while 2f64.powi(n as i32) * log_t < gamma {
            n += 1;
        }
        Self::fixed_horizon(floor.max(n), horizon)
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn mode(&self) -> LadderMode {
        self.mode
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn includes_greedy_level(&self) -> bool {
        self.include_greedy_level
    }

    pub fn first_level(&self) -> usize {
        usize::from(!self.include_greedy_level)
    }

    pub fn top_level(&self) -> usize {
        self.first_level() + self.n_levels - 1
    }

    /// Level labels in increasing radius order.
    pub fn levels(&self) -> RangeInclusive<usize> {
        self.first_level()..=self.top_level()
    }

    /// Label of the level at `position` (0-based).
    pub fn level_at(&self, position: usize) -> Result<usize> {
        if position >= self.n_levels {
            return Err(Error::invalid(format!(
                "position {position} outside ladder of {} levels",
                self.n_levels
            )));
        }
        Ok(self.first_level() + position)
    }

    /// Position (0-based) of the level labelled `level`.
    pub fn position_of(&self, level: usize) -> Result<usize> {
        if !self.levels().contains(&level) {
            return Err(Error::invalid(format!(
                "level {level} outside ladder {:?}",
                self.levels()
            )));
        }
        Ok(level - self.first_level())
    }

    /// Squared radius of `level` at round `t` (1-based).
    pub fn radius(&self, level: usize, t: u64) -> Result<f64> {
        self.position_of(level)?;
        if t == 0 {
            return Err(Error::invalid("rounds are numbered from 1"));
        }
        let scale = 2f64.powi(level as i32);
        Ok(match self.mode {
            LadderMode::FixedHorizon => scale * (self.horizon as f64).ln(),
            LadderMode::TimeDependent if level == 0 => 0.0,
            LadderMode::TimeDependent => scale * (t as f64).ln(),
        })
    }

    /// Squared radius of the top level at round `t`.
    pub fn top_radius(&self, t: u64) -> Result<f64> {
        self.radius(self.top_level(), t)
    }
}

fn ceil_log2(d: usize) -> usize {
    if d <= 1 {
        0
    } else {
        (usize::BITS - (d - 1).leading_zeros()) as usize
    }
}

/// Inputs of the online-to-confidence-set radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConversionParams {
    /// Regret bound `B_T` of the online regressor.
    pub b_t: f64,
    /// Failure probability, in `(0, 1/4]`.
    pub delta: f64,
    /// Constant of the sparse-regression bound.
    pub c_universal: f64,
    pub t_horizon: u64,
}

impl ConversionParams {
    /// `δ = min(1/T, 1/4)`.
    pub fn at_horizon(b_t: f64, t_horizon: u64) -> Result<Self> {
        if t_horizon == 0 {
            return Err(Error::invalid("horizon must be positive"));
        }
        Ok(Self {
            b_t,
            delta: (1.0 / t_horizon as f64).min(0.25),
            c_universal: 1.0,
            t_horizon,
        })
    }
}

/// `γ(δ) = 2 + 2B_T + 32 ln((√8 + √(1 + B_T)) / δ)`.
pub fn gamma_delta(params: &ConversionParams) -> Result<f64> {
    let ConversionParams { b_t, delta, .. } = *params;
    if !(delta > 0.0 && delta <= 0.25) {
        return Err(Error::invalid(format!("delta {delta} outside (0, 1/4]")));
    }
    if !(b_t >= 0.0 && b_t.is_finite()) {
        return Err(Error::invalid(format!("B_T {b_t} must be finite and >= 0")));
    }
    let numer = 8f64.sqrt() + (1.0 + b_t).sqrt();
    Ok(2.0 + 2.0 * b_t + 32.0 * (numer.ln() - delta.ln()))
}

/// Regret bound of exponentially weighted sparse online regression:
/// `c·l0·{ln(e + √T) + C_T ln(1 + l1/l0)}` with `C_T = 2 + log₂ ln(e + √T)`,
/// where `l0 = ‖θ‖₀` and `l1 = ‖θ‖₁`.
pub fn seqsew_regret_bound(l0: usize, l1: f64, t_horizon: u64, c_universal: f64) -> Result<f64> {
    if l0 == 0 {
        return Err(Error::invalid("‖θ‖₀ must be at least 1"));
    }
    if !(l1 >= 0.0 && l1.is_finite()) {
        return Err(Error::invalid(format!("‖θ‖₁ = {l1} must be finite and >= 0")));
    }
    if !(c_universal > 0.0 && c_universal.is_finite()) {
        return Err(Error::invalid("the universal constant must be positive"));
    }
    let root = (std::f64::consts::E + (t_horizon as f64).sqrt()).ln();
    let c_t = 2.0 + root.log2();
    let l0f = l0 as f64;
    Ok(c_universal * l0f * (root + c_t * (l1 / l0f).ln_1p()))
}

/// Smallest fixed-horizon level whose squared radius is at least `gamma`.
pub fn safe_index(ladder: &RadiusLadder, gamma: f64) -> Result<usize> {
    if ladder.mode() != LadderMode::FixedHorizon {
        return Err(Error::invalid(
            "the safe level is only defined on fixed-horizon ladders",
        ));
    }
    if gamma.is_nan() {
        return Err(Error::invalid("gamma is NaN"));
    }
    let t = ladder.horizon();
    for level in ladder.levels() {
        if gamma <= ladder.radius(level, t)? {
            return Ok(level);
        }
    }
    Err(Error::LadderTooShort {
        gamma,
        top: ladder.top_radius(t)?,
    })
}
