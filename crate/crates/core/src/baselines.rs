//! Comparison policies: per-client UCB1 with no communication, and a
//! full-information variant of the phased protocol.

use crate::env::BanditInstance;
use crate::error::{Error, Result};
use crate::harness::compute_regret;
use crate::protocol::{self, client_rngs, AlgorithmConfig, Exchange};
use crate::trace::Trace;

/// Per-client pull counts and reward sums.
#[derive(Debug, Clone, PartialEq)]
pub struct UcbState {
    pub counts: Vec<u64>,
    pub sums: Vec<f64>,
    /// Multiplier inside the square root of the bonus, `sqrt(c ln t / n)`.
    pub exploration: f64,
}

impl UcbState {
    pub fn new(num_arms: usize) -> Self {
        UcbState {
            counts: vec![0; num_arms],
            sums: vec![0.0; num_arms],
            exploration: 2.0,
        }
    }

    /// Next arm at 1-based round `t`: every arm once, then the highest
    /// `mean + sqrt(2 ln t / n)`, ties to the lowest index.
    pub fn select(&self, t: u64) -> usize {
        if let Some(a) = self.counts.iter().position(|&n| n == 0) {
            return a;
        }
        let lt = (t as f64).ln();
        let mut best = 0;
        let mut best_index = f64::NEG_INFINITY;
        for (a, (&n, &s)) in self.counts.iter().zip(&self.sums).enumerate() {
            let n = n as f64;
            let index = s / n + (self.exploration * lt / n).sqrt();
            if index > best_index {
                best_index = index;
                best = a;
            }
        }
        best
    }

    pub fn update(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1;
        self.sums[arm] += reward;
    }
}

/// Each client runs UCB1 on its own for `horizon` rounds.
pub fn local_ucb_run(env: &BanditInstance, horizon: u64, seed: u64) -> Result<Trace> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be positive".into()));
    }
    let (m, k) = (env.num_clients(), env.num_arms());
    let mut rngs = client_rngs(seed, m);
    let mut log = Vec::with_capacity(m);
    for (i, rng) in rngs.iter_mut().enumerate() {
        let mut state = UcbState::new(k);
        let mut pulls = Vec::with_capacity(horizon as usize);
        for t in 1..=horizon {
            let a = state.select(t);
            let y = env.sample_reward(i, a, rng);
            state.update(a, y);
            pulls.push(a as u32);
        }
        log.push(pulls);
    }
    let cum_regret = compute_regret(env, &log)?;
    Ok(Trace {
        algo: "local-ucb".into(),
        seed,
        cum_regret,
        init_comm: None,
        phases: Vec::new(),
        pulls_per_client: vec![horizon; m],
        optimal_eliminated: false,
    })
}

/// The phased protocol with the same design-driven exploration, but clients
/// send raw features (once) and raw rewards, and the server fits pooled
/// least squares over everything observed so far. Widths are
/// `alpha |x|_W` with `W` the pseudo-inverse of the pooled Gram matrix.
pub fn collaborative_run(env: &BanditInstance, config: &AlgorithmConfig, seed: u64) -> Result<Trace> {
    let mut cfg = *config;
    cfg.variant = protocol::Variant::FedPe;
    protocol::run_phased(env, &cfg, seed, Exchange::Raw, "collaborative")
}
