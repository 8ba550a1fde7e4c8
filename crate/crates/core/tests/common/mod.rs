//! Oracles shared by the integration and acceptance tests. Apart from
//! `drive`, nothing here calls into the library: matrices are inverted and
//! solved directly, and the two level-selecting algorithms are transcribed
//! line by line.
#![allow(dead_code)]

pub mod drive;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = DMatrix<f64>;
pub type Vec64 = DVector<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform on the unit sphere via normalized Gaussians (Box-Muller, so the
/// stream differs from the library's sampler).
pub fn sphere(dim: usize, rng: &mut ChaCha8Rng) -> Vec64 {
    loop {
        let v = Vec64::from_fn(dim, |_, _| {
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        });
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// A point in the unit ball with a random radius.
pub fn ball(dim: usize, rng: &mut ChaCha8Rng) -> Vec64 {
    let r: f64 = rng.random();
    sphere(dim, rng) * r
}

/// `I + Σ a aᵀ` and `Σ a x`.
pub fn design(actions: &[Vec64], targets: &[f64]) -> (Mat, Vec64) {
    let d = actions.first().map_or(0, |a| a.len());
    let mut v = Mat::identity(d, d);
    let mut b = Vec64::zeros(d);
    for (a, x) in actions.iter().zip(targets) {
        v += a * a.transpose();
        b += a * *x;
    }
    (v, b)
}

pub fn inverse(v: &Mat) -> Mat {
    v.clone().try_inverse().expect("design matrix is invertible")
}

pub fn solve(v: &Mat, b: &Vec64) -> Vec64 {
    v.clone().lu().solve(b).expect("design matrix is invertible")
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// `aᵀ V⁻¹ a` through a linear solve.
pub fn quad_inv(v: &Mat, a: &Vec64) -> f64 {
    a.dot(&solve(v, a))
}

/// Lowest index whose score is within 1e-12 of the best seen so far is kept.
pub fn argmax_low(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] + 1e-12 {
            best = i;
        }
    }
    best
}

pub fn ucb_scores(actions: &[Vec64], v_inv: &Mat, theta: &Vec64, alpha: f64) -> Vec<f64> {
    actions
        .iter()
        .map(|a| a.dot(theta) + alpha.sqrt() * a.dot(&(v_inv * a)).max(0.0).sqrt())
        .collect()
}

/// Fixed-set instance, noise drawn as `Uniform[-1, 1]` from `noise_rng`.
#[derive(Debug, Clone)]
pub struct RefInstance {
    pub actions: Vec<Vec64>,
    pub theta: Vec64,
}

impl RefInstance {
    pub fn reward(&self, i: usize, noise_rng: &mut ChaCha8Rng) -> f64 {
        self.actions[i].dot(&self.theta) + noise_rng.random_range(-1.0..=1.0)
    }
}

fn radius(level: usize, t: u64) -> f64 {
    if level == 0 {
        0.0
    } else {
        2f64.powi(level as i32) * (t as f64).ln()
    }
}

fn draw(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Straight-line transcription of the fixed-distribution algorithm on a
/// ladder with levels `0..n` (level 0 greedy, `α_{i,t} = 2^i ln t`),
/// with `X̂_t = X_t`.
pub fn reference_sparse_linucb(
    inst: &RefInstance,
    q: &[f64],
    horizon: u64,
    policy_seed: u64,
    noise_seed: u64,
) -> Vec<usize> {
    let d = inst.theta.len();
    let mut prng = rng(policy_seed);
    let mut nrng = rng(noise_seed);
    let mut v = Mat::identity(d, d);
    let mut b = Vec64::zeros(d);
    let mut theta = Vec64::zeros(d);
    let mut chosen = Vec::new();
    for t in 1..=horizon {
        let u: f64 = prng.random();
        let level = draw(q, u);
        let v_inv = inverse(&v);
        let i = argmax_low(&ucb_scores(&inst.actions, &v_inv, &theta, radius(level, t)));
        let x = inst.reward(i, &mut nrng);
        let a = &inst.actions[i];
        v += a * a.transpose();
        b += a * x;
        theta = solve(&v, &b);
        chosen.push(i);
    }
    chosen
}

/// Straight-line transcription of the Exp3 algorithm with a prior,
/// `η_t = 2 √(ln n / (n t))` and forced exploration `q_explore`.
pub fn reference_ada_linucb(
    inst: &RefInstance,
    prior: &[f64],
    q_explore: f64,
    horizon: u64,
    policy_seed: u64,
    noise_seed: u64,
) -> Vec<usize> {
    let d = inst.theta.len();
    let n = prior.len();
    let mut prng = rng(policy_seed);
    let mut nrng = rng(noise_seed);
    let mut v = Mat::identity(d, d);
    let mut b = Vec64::zeros(d);
    let mut theta = Vec64::zeros(d);
    let mut s = vec![0.0; n];
    let mut chosen = Vec::new();
    for t in 1..=horizon {
        let v_inv = inverse(&v);
        let z: f64 = prng.random();
        let explore = z < q_explore;
        let (level, p) = if explore {
            (n - 1, None)
        } else {
            let eta = 2.0 * ((n as f64).ln() / (n as f64 * t as f64)).sqrt();
            let w: Vec<f64> = prior
                .iter()
                .zip(&s)
                .map(|(q, s)| q * (eta * s).exp())
                .collect();
            let total: f64 = w.iter().sum();
            let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
            let u: f64 = prng.random();
            let level = draw(&probs, u);
            (level, Some(probs[level]))
        };
        let i = argmax_low(&ucb_scores(&inst.actions, &v_inv, &theta, radius(level, t)));
        let x = inst.reward(i, &mut nrng);
        if let Some(p) = p {
            let loss = ((2.0 - x) / 4.0).clamp(0.0, 1.0);
            s[level] -= loss / p;
        }
        let a = &inst.actions[i];
        v += a * a.transpose();
        b += a * x;
        theta = solve(&v, &b);
        chosen.push(i);
    }
    chosen
}

/// Random fixed-set instance with an `S`-sparse unit target.
pub fn ref_instance(dim: usize, k: usize, sparsity: usize, rng: &mut ChaCha8Rng) -> RefInstance {
    let actions = (0..k).map(|_| sphere(dim, rng)).collect();
    let head = sphere(sparsity, rng);
    let mut theta = Vec64::zeros(dim);
    theta.rows_mut(0, sparsity).copy_from(&head);
    RefInstance { actions, theta }
}

/// One row of the high-precision conversion fixtures.
#[derive(Debug, Clone, PartialEq)]
pub enum Fixture {
    Gamma { b_t: f64, delta: f64, value: f64 },
    SeqSew { l0: usize, l1: f64, horizon: u64, c: f64, value: f64 },
}

pub fn conversion_fixtures() -> Vec<Fixture> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/conversion_oracle.csv");
    let mut rdr = csv::Reader::from_path(path).expect("fixture file");
    rdr.records()
        .map(|rec| {
            let rec = rec.expect("fixture row");
            let f = |i: usize| rec[i].parse::<f64>().expect("numeric fixture field");
            match &rec[0] {
                "gamma" => Fixture::Gamma { b_t: f(1), delta: f(2), value: f(5) },
                "seqsew" => Fixture::SeqSew {
                    l0: rec[1].parse().unwrap(),
                    l1: f(2),
                    horizon: rec[3].parse().unwrap(),
                    c: f(4),
                    value: f(5),
                },
                other => panic!("unknown fixture kind {other}"),
            }
        })
        .collect()
}

/// Least `i ∈ 1..=n` with `gamma ≤ 2^i ln T`, by scanning every level.
pub fn scan_safe_level(n: usize, horizon: u64, gamma: f64) -> Option<usize> {
    let log_t = (horizon as f64).ln();
    let radii: Vec<f64> = (1..=n).map(|i| 2f64.powi(i as i32) * log_t).collect();
    radii.iter().position(|r| gamma <= *r).map(|p| p + 1)
}
