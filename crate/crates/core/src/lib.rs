//! Sparsity-agnostic linear bandits.
//!
//! The crate implements OFUL, SparseLinUCB (a fixed distribution over a
//! ladder of nested confidence radii) and AdaLinUCB (Exp3 over the same
//! ladder), together with the numerical core they share and a seeded
//! benchmark harness.
//!
//! * [`covariance`]: the design matrix, its inverse and log-determinant,
//!   and the regularized least-squares estimate.
//! * [`confidence`]: the radius ladder and the online-to-confidence-set
//!   conversion radius.
//! * [`regressors`]: online regressors feeding the least-squares update.
//! * [`policies`]: action selection and the per-round update.
//! * [`environment`]: bandit instances, action-set providers and noise.
//! * [`harness`]: episodes, repetitions and aggregation.
//! * [`cli`]: config files, result files and the command implementations.
//!
//! ```
//! use rand::SeedableRng;
//! use rand_chacha::ChaCha8Rng;
//! use sparsebandit::{BanditInstance, NoiseModel, Policy, PolicyKind, RadiusLadder};
//!
//! let mut rng = ChaCha8Rng::seed_from_u64(1);
//! let instance = BanditInstance::generate_fixed_sphere(4, 10, 2, NoiseModel::UniformPm1, &mut rng)?;
//! let ladder = RadiusLadder::time_dependent(6, 200)?;
//! let mut policy = Policy::with_defaults(PolicyKind::Oful, 4, ladder)?;
//! let set = instance.next_set(&Default::default())?;
//! let choice = policy.choose(&set, 1, &mut rng)?;
//! policy.update(instance.reward(&set[choice.index], &mut rng))?;
//! assert_eq!(policy.covariance().step(), 1);
//! # Ok::<(), sparsebandit::Error>(())
//! ```

pub mod cli;
pub mod confidence;
pub mod covariance;
pub mod environment;
pub mod error;
pub mod harness;
pub mod policies;
pub mod regressors;

pub use confidence::{gamma_delta, safe_index, seqsew_regret_bound, ConversionParams, LadderMode, RadiusLadder};
pub use covariance::{CovarianceState, Vector};
pub use environment::{ActionSet, ActionSetProvider, BanditInstance, FixedSetProvider, NoiseModel, Transcript};
pub use error::{Error, Result};
pub use harness::{
    aggregate, run_episode, run_experiment, AggregateResult, ExperimentConfig, ExperimentResult, PolicySpec,
    RegretTrace,
};
pub use policies::{Choice, Exp3State, Policy, PolicyKind, SelectionDistribution};
pub use regressors::{OnlineRegressor, Passthrough, RidgeRegressor};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/covariance.md")]
    mod covariance {}
    #[doc = include_str!("../../../book/src/confidence.md")]
    mod confidence {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/config.md")]
    mod config {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
}
