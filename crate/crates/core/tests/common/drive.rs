//! Runs library policies on oracle instances with explicit rng streams.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use sparsebandit::{
    BanditInstance, Choice, FixedSetProvider, NoiseModel, Policy, PolicyKind, RadiusLadder,
    Transcript,
};

use super::{rng, RefInstance};

pub fn to_library(inst: &RefInstance, noise: NoiseModel) -> BanditInstance {
    let provider = FixedSetProvider::new(inst.actions.clone()).unwrap();
    BanditInstance::new(inst.theta.clone(), Arc::new(provider), noise).unwrap()
}

/// Plays `horizon` rounds and returns every choice and the final policy.
pub fn play(
    instance: &BanditInstance,
    kind: PolicyKind,
    ladder: RadiusLadder,
    horizon: u64,
    policy_rng: &mut ChaCha8Rng,
    noise_rng: &mut ChaCha8Rng,
) -> (Vec<Choice>, Policy) {
    let mut policy = Policy::with_defaults(kind, instance.dim(), ladder).unwrap();
    let mut transcript = Transcript::default();
    let mut choices = Vec::new();
    for t in 1..=horizon {
        let set = instance.next_set(&transcript).unwrap();
        let choice = policy.choose(&set, t, policy_rng).unwrap();
        let x = instance.reward(&set[choice.index], noise_rng);
        policy.update(x).unwrap();
        transcript.push(set, choice.index, x);
        choices.push(choice);
    }
    (choices, policy)
}

pub fn play_seeded(
    inst: &RefInstance,
    kind: PolicyKind,
    ladder: RadiusLadder,
    horizon: u64,
    policy_seed: u64,
    noise_seed: u64,
) -> (Vec<Choice>, Policy) {
    let instance = to_library(inst, NoiseModel::UniformPm1);
    play(
        &instance,
        kind,
        ladder,
        horizon,
        &mut rng(policy_seed),
        &mut rng(noise_seed),
    )
}

pub fn indices(choices: &[Choice]) -> Vec<usize> {
    choices.iter().map(|c| c.index).collect()
}
