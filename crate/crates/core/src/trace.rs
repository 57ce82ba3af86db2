//! Run records shared by the protocol, the baselines and the harness.

use serde::{Deserialize, Serialize};

/// How message payloads are converted to scalar counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommMode {
    /// Estimates travel as `d`-vectors, potentials as `d x d` matrices.
    #[default]
    Naive,
    /// Estimates travel as their projection on the known direction, and
    /// each client receives two scalars per active arm.
    Reduced,
}

impl std::fmt::Display for CommMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CommMode::Naive => "naive",
            CommMode::Reduced => "reduced",
        })
    }
}

impl std::str::FromStr for CommMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "naive" => Ok(CommMode::Naive),
            "reduced" => Ok(CommMode::Reduced),
            other => Err(crate::Error::InvalidConfig(format!("unknown comm mode `{other}`"))),
        }
    }
}

/// Itemised message counts for one phase (or for initialisation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommCounts {
    /// Ambient dimension, needed to price vectors and matrices.
    pub dim: u64,
    /// Local estimates uploaded (one `d`-vector each).
    pub estimates: u64,
    /// Arm indices in active-set messages (up).
    pub active_set_entries: u64,
    /// Pull counts sent by the server (down).
    pub allocation_entries: u64,
    /// `(theta_a, V_a)` pairs delivered, counted per receiving client.
    pub broadcast_pairs: u64,
    /// Pooled `(theta, V)` deliveries in shared mode, one per client.
    pub pooled_broadcasts: u64,
    /// Sum over clients of their active-set sizes; prices the reduced
    /// download.
    pub client_arm_pairs: u64,
    /// Raw real values uploaded (rewards, feature coordinates).
    pub raw_reals: u64,
    /// Raw integers uploaded (arm ids of raw pulls).
    pub raw_ints: u64,
}

impl CommCounts {
    pub fn new(dim: usize) -> Self {
        CommCounts {
            dim: dim as u64,
            ..Default::default()
        }
    }

    /// `(up, down)` scalar counts.
    pub fn scalars(&self, mode: CommMode) -> (u64, u64) {
        let d = self.dim;
        let raw = self.raw_reals + self.raw_ints;
        match mode {
            CommMode::Naive => (
                d * self.estimates + self.active_set_entries + raw,
                (d + d * d) * (self.broadcast_pairs + self.pooled_broadcasts) + self.allocation_entries,
            ),
            CommMode::Reduced => (
                self.estimates + self.active_set_entries + raw,
                2 * self.client_arm_pairs + self.allocation_entries,
            ),
        }
    }

    pub fn total(&self, mode: CommMode) -> u64 {
        let (u, d) = self.scalars(mode);
        u + d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRecord {
    /// 1-based phase index.
    pub phase: usize,
    /// Scheduled exploration budget `f^p`.
    pub f_p: u64,
    pub comm: CommCounts,
    /// Weights above threshold divided by the number of clients.
    pub sparsity: f64,
    pub sweeps: usize,
    pub certified: bool,
    /// The horizon ended inside this phase.
    pub truncated: bool,
    /// Active sets after this phase's elimination.
    pub active_sets: Vec<Vec<usize>>,
    /// Rounds actually played per client in this phase.
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub algo: String,
    pub seed: u64,
    /// `cum_regret[t]` is the pseudo-regret summed over clients after
    /// round `t + 1`.
    pub cum_regret: Vec<f64>,
    pub init_comm: Option<CommCounts>,
    pub phases: Vec<PhaseRecord>,
    /// Pulls executed by each client.
    pub pulls_per_client: Vec<u64>,
    /// Some client dropped one of its optimal arms at some phase.
    pub optimal_eliminated: bool,
}

impl Trace {
    pub fn final_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }

    /// Round index (1-based) at which each recorded phase ends.
    pub fn phase_boundaries(&self, num_arms: u64) -> Vec<u64> {
        let mut t = if self.init_comm.is_some() { num_arms } else { 0 };
        self.phases
            .iter()
            .map(|p| {
                t += p.rounds;
                t
            })
            .collect()
    }
}
