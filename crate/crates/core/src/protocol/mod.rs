//! Phased elimination with collaborative exploration.
//!
//! Every run starts with each client pulling each arm once. Phase `p` then
//! takes `f^p + K` rounds per client:
//!
//! 1. clients score their active arms against the broadcast models and
//!    drop arms that are confidently worse than their best estimate;
//! 2. the server solves the design over the reported active sets and sends
//!    pull counts `ceil(pi * f^p)`;
//! 3. clients pull as told, upload local estimates, and fill the rest of
//!    the phase with their current best arm;
//! 4. the server aggregates and broadcasts new models.
//!
//! The horizon cuts the last phase short; its uploads are then never used
//! and are not exchanged.

pub mod alpha;
pub mod client;
pub mod schedule;
pub mod server;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{allocate_pulls, solve_design, Mode, SolverConfig};
use crate::env::BanditInstance;
use crate::error::{Error, Result};
use crate::harness::{compute_regret, sparsity_level, DEFAULT_SPARSITY_THRESHOLD};
use crate::trace::{CommCounts, CommMode, PhaseRecord, Trace};

pub use alpha::{compute_alpha, compute_alpha_shared};
pub use client::{eliminate, ArmScore, ClientState, WidthRule};
pub use schedule::{phase_lengths, PhaseSchedule, ScheduleKind};
pub use server::{GlobalModel, Models, RawPool, ServerState, Upload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    FedPe,
    Enhanced,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub variant: Variant,
    pub horizon: u64,
    pub delta: f64,
    pub schedule: ScheduleKind,
    pub comm_mode: CommMode,
    pub solver: SolverConfig,
}

impl AlgorithmConfig {
    pub fn new(variant: Variant, horizon: u64, delta: f64, schedule: ScheduleKind) -> Self {
        AlgorithmConfig {
            variant,
            horizon,
            delta,
            schedule,
            comm_mode: CommMode::Naive,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        self.solver.validate()
    }
}

/// What clients send the server after exploring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Exchange {
    /// Local least-squares estimates only.
    Estimates,
    /// Raw features (once) and raw rewards; the server pools them.
    Raw,
}

/// Runs one of the phased-elimination variants.
pub fn run_policy(env: &BanditInstance, config: &AlgorithmConfig, seed: u64) -> Result<Trace> {
    let tag = match config.variant {
        Variant::FedPe => "fed-pe",
        Variant::Enhanced => "enhanced",
        Variant::Shared => "shared",
    };
    run_phased(env, config, seed, Exchange::Estimates, tag)
}

/// One independent stream per client, derived from the run seed.
pub(crate) fn client_rngs(seed: u64, num_clients: usize) -> Vec<ChaCha8Rng> {
    (0..num_clients)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rng
        })
        .collect()
}

pub(crate) fn run_phased(
    env: &BanditInstance,
    config: &AlgorithmConfig,
    seed: u64,
    exchange: Exchange,
    tag: &str,
) -> Result<Trace> {
    config.validate()?;
    if config.variant == Variant::Shared && env.mode() != Mode::Shared {
        return Err(Error::InvalidConfig(
            "the shared-parameter variant needs an instance with one shared parameter".into(),
        ));
    }
    let (m, k, d) = (env.num_clients(), env.num_arms(), env.dim());
    let t_total = config.horizon;
    let sched = phase_lengths(config.schedule, t_total, k as u64)?;
    let h = sched.num_phases();
    let design_mode = if config.variant == Variant::Shared { Mode::Shared } else { Mode::Disjoint };
    let rule = match (exchange, config.variant) {
        (Exchange::Raw, _) => WidthRule::Unscaled { alpha: compute_alpha(m, k, h, d, config.delta)? },
        (_, Variant::FedPe) => WidthRule::Scaled { alpha: compute_alpha(m, k, h, d, config.delta)?, ell: env.ell() },
        (_, Variant::Shared) => WidthRule::Scaled {
            alpha: compute_alpha_shared(m, k, h, d, config.delta)?,
            ell: env.ell(),
        },
        (_, Variant::Enhanced) => WidthRule::Enhanced {
            ell: env.ell(),
            num_clients: m,
            num_arms: k,
            dim: d,
            delta: config.delta,
        },
    };

    let mut rngs = client_rngs(seed, m);
    let mut log: Vec<Vec<u32>> = vec![Vec::with_capacity(t_total as usize); m];
    let features: Vec<Vec<DVector<f64>>> =
        (0..m).map(|i| (0..k).map(|a| env.feature(i, a).clone()).collect()).collect();
    let all_arms: Vec<usize> = (0..k).collect();

    // Initialisation: one pull of every arm.
    let mut init = CommCounts::new(d);
    let mut directions = vec![Vec::with_capacity(k); m];
    let mut uploads = Vec::with_capacity(m * k);
    let mut raw = RawPool::new(d, k);
    for i in 0..m {
        for a in 0..k {
            let y = env.sample_reward(i, a, &mut rngs[i]);
            log[i].push(a as u32);
            let x = &features[i][a];
            match exchange {
                Exchange::Estimates => {
                    let (estimate, dir) = client::initial_upload(x, y);
                    directions[i].push(dir);
                    uploads.push(Upload { client: i, arm: a, estimate, pulls: 1 });
                }
                Exchange::Raw => {
                    directions[i].push(x / x.norm());
                    raw.observe(a, x, 1, y);
                }
            }
        }
    }
    let server = ServerState::new(design_mode, d, k, directions)?;
    let mut models = match exchange {
        Exchange::Estimates => {
            init.estimates = (m * k) as u64;
            server.aggregate(&uploads, &all_arms)?
        }
        Exchange::Raw => {
            init.raw_reals = (m * k * d + m * k) as u64;
            init.raw_ints = (m * k) as u64;
            raw.models(&all_arms)
        }
    };
    record_broadcast(&mut init, design_mode, m, k);
    init.client_arm_pairs = (m * k) as u64;

    let optimal: Vec<Vec<usize>> = (0..m).map(|i| env.optimal_set(i)).collect();
    let mut clients: Vec<ClientState> =
        (0..m).map(|i| ClientState::new(i, k, config.variant == Variant::Enhanced)).collect();
    let mut optimal_eliminated = false;
    let mut used = k as u64;
    let mut phases = Vec::with_capacity(h);

    for p in 1..=h {
        let f_p = sched.f(p);
        let f_prev = sched.f(p - 1);
        let phase_len = f_p + k as u64;
        let left = t_total - used;
        let truncated = left < phase_len;
        let rounds = phase_len.min(left);
        let mut comm = CommCounts::new(d);

        for (i, c) in clients.iter_mut().enumerate() {
            c.eliminate_arms(&features[i], &models, rule, f_prev)?;
            if optimal[i].iter().any(|a| !c.active().contains(a)) {
                optimal_eliminated = true;
            }
        }
        let active_sets: Vec<Vec<usize>> = clients.iter().map(|c| c.active().to_vec()).collect();
        let entries: u64 = active_sets.iter().map(|s| s.len() as u64).sum();
        comm.active_set_entries = entries;
        comm.allocation_entries = entries;

        let problem = server.design_problem(&active_sets)?;
        let solution = solve_design(&problem, &config.solver)?;
        let alloc = allocate_pulls(&solution.pi, f_p);

        let mut uploads = Vec::new();
        for (i, c) in clients.iter().enumerate() {
            let best = c.best_arm().expect("elimination ran");
            let explore: u64 = alloc[i].iter().sum();
            if explore > phase_len {
                return Err(Error::Protocol(format!(
                    "client {i}: allocation of {explore} pulls exceeds the phase length {phase_len}"
                )));
            }
            if truncated {
                let mut budget = rounds;
                for (slot, &a) in c.active().iter().enumerate() {
                    let n = alloc[i][slot].min(budget);
                    log[i].extend(std::iter::repeat_n(a as u32, n as usize));
                    budget -= n;
                }
                log[i].extend(std::iter::repeat_n(best as u32, budget as usize));
                continue;
            }
            for (slot, &a) in c.active().iter().enumerate() {
                let n = alloc[i][slot];
                if n == 0 {
                    continue;
                }
                let sum = client::pull_sum(env, i, a, n, &mut rngs[i]);
                log[i].extend(std::iter::repeat_n(a as u32, n as usize));
                let x = &features[i][a];
                match exchange {
                    Exchange::Estimates => uploads.push(Upload {
                        client: i,
                        arm: a,
                        estimate: x * (sum / n as f64 / x.norm_squared()),
                        pulls: n,
                    }),
                    Exchange::Raw => {
                        raw.observe(a, x, n, sum);
                        comm.raw_reals += n;
                        comm.raw_ints += n;
                    }
                }
            }
            log[i].extend(std::iter::repeat_n(best as u32, (phase_len - explore) as usize));
        }

        if !truncated {
            let mut union: Vec<usize> = active_sets.iter().flatten().copied().collect();
            union.sort_unstable();
            union.dedup();
            // A pooled design may leave an active arm unexplored; the pooled
            // model still covers it.
            let required: &[usize] = if design_mode == Mode::Shared { &[] } else { &union };
            models = match exchange {
                Exchange::Estimates => {
                    comm.estimates = uploads.len() as u64;
                    server.aggregate(&uploads, required)?
                }
                Exchange::Raw => raw.models(&union),
            };
            record_broadcast(&mut comm, design_mode, m, union.len());
            comm.client_arm_pairs = entries;
        }

        phases.push(PhaseRecord {
            phase: p,
            f_p,
            comm,
            sparsity: sparsity_level(&solution.pi, DEFAULT_SPARSITY_THRESHOLD),
            sweeps: solution.sweeps,
            certified: solution.certified,
            truncated,
            active_sets,
            rounds,
        });
        used += rounds;
        if used >= t_total {
            break;
        }
    }

    let pulls_per_client = log.iter().map(|l| l.len() as u64).collect();
    let cum_regret = compute_regret(env, &log)?;
    Ok(Trace {
        algo: tag.to_string(),
        seed,
        cum_regret,
        init_comm: Some(init),
        phases,
        pulls_per_client,
        optimal_eliminated,
    })
}

fn record_broadcast(comm: &mut CommCounts, mode: Mode, num_clients: usize, num_arms: usize) {
    match mode {
        Mode::Disjoint => comm.broadcast_pairs = (num_clients * num_arms) as u64,
        Mode::Shared => comm.pooled_broadcasts = num_clients as u64,
    }
}
