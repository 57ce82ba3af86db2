//! Multi-client G-optimal design.
//!
//! Each client `i` holds a distribution `pi[i]` over its active arms. For arm
//! `a` the design matrix is `U_a = sum_{j in R_a} pi[j][a] e_ja e_ja'` where
//! `R_a` is the set of clients that still have `a` active. The objectives are
//!
//! - `G(pi) = sum_i max_a e_ia' U_a+ e_ia` (to be minimised), and
//! - `F(pi) = sum_a log pdet(U_a)` (to be maximised).
//!
//! A maximiser of `F` is a minimiser of `G`, and at the optimum `G` equals the
//! summed ranks `sum_a d_a`. For every feasible `pi`, `G(pi) >= sum_a d_a`,
//! so `G - sum_a d_a` is a duality gap used as the stopping certificate.
//!
//! In shared mode all arms feed one pooled matrix and the bound is its rank.

mod bca;
mod format;
mod projected;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, normalized};

pub use bca::solve_block_subproblem;
pub use format::{load_problem, parse_problem, problem_to_json};

/// Weights `pi[i][k]` for the `k`-th active arm of client `i`, aligned with
/// [`DesignProblem::arms`].
pub type Weights = Vec<Vec<f64>>;

/// Pulls per `(client, slot)`, aligned like [`Weights`].
pub type Allocation = Vec<Vec<u64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One parameter vector per arm.
    Disjoint,
    /// One parameter vector shared by every arm.
    Shared,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Disjoint => "disjoint",
            Mode::Shared => "shared",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disjoint" => Ok(Mode::Disjoint),
            "shared" => Ok(Mode::Shared),
            other => Err(Error::InvalidInput(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
struct ClientBlock {
    arms: Vec<usize>,
    directions: Vec<DVector<f64>>,
}

/// A validated design problem. Directions are normalised on construction.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    mode: Mode,
    dim: usize,
    num_arms: usize,
    clients: Vec<ClientBlock>,
    /// `coverage[a]` lists `(client, slot)` pairs with `a` active.
    coverage: Vec<Vec<(usize, usize)>>,
    /// Rank of the direction set per arm (disjoint) or a single pooled rank.
    ranks: Vec<usize>,
}

impl DesignProblem {
    /// `active_sets[i]` and `directions[i]` are parallel lists. Directions
    /// need not be unit length but must be nonzero. Arms within a client
    /// are sorted ascending.
    pub fn new(
        mode: Mode,
        dim: usize,
        num_arms: usize,
        active_sets: Vec<Vec<usize>>,
        directions: Vec<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        if dim == 0 || num_arms == 0 {
            return Err(Error::InvalidInput("dimension and arm count must be positive".into()));
        }
        if active_sets.is_empty() {
            return Err(Error::InvalidInput("design problem has no clients".into()));
        }
        if active_sets.len() != directions.len() {
            return Err(Error::InvalidInput(format!(
                "{} active sets but {} direction lists",
                active_sets.len(),
                directions.len()
            )));
        }
        let mut clients = Vec::with_capacity(active_sets.len());
        for (i, (arms, dirs)) in active_sets.into_iter().zip(directions).enumerate() {
            if arms.is_empty() {
                return Err(Error::InvalidInput(format!("client {i} has an empty active set")));
            }
            if arms.len() != dirs.len() {
                return Err(Error::InvalidInput(format!(
                    "client {i}: {} arms but {} directions",
                    arms.len(),
                    dirs.len()
                )));
            }
            let mut pairs: Vec<(usize, DVector<f64>)> = Vec::with_capacity(arms.len());
            for (a, v) in arms.into_iter().zip(dirs) {
                if a >= num_arms {
                    return Err(Error::InvalidInput(format!(
                        "client {i}: arm {a} out of range for {num_arms} arms"
                    )));
                }
                if v.len() != dim {
                    return Err(Error::InvalidInput(format!(
                        "client {i}, arm {a}: direction has length {}, expected {dim}",
                        v.len()
                    )));
                }
                let e = normalized(&v).ok_or_else(|| {
                    Error::InvalidInput(format!("client {i}, arm {a}: zero or non-finite direction"))
                })?;
                pairs.push((a, e));
            }
            pairs.sort_by_key(|(a, _)| *a);
            if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidInput(format!("client {i}: duplicate arm")));
            }
            let (arms, directions) = pairs.into_iter().unzip();
            clients.push(ClientBlock { arms, directions });
        }

        let mut coverage = vec![Vec::new(); num_arms];
        for (i, c) in clients.iter().enumerate() {
            for (k, &a) in c.arms.iter().enumerate() {
                coverage[a].push((i, k));
            }
        }

        let ranks = match mode {
            Mode::Disjoint => coverage
                .iter()
                .map(|cov| {
                    let vs: Vec<DVector<f64>> =
                        cov.iter().map(|&(i, k)| clients[i].directions[k].clone()).collect();
                    linalg::rank_of_set(&vs, Some(DIRECTION_RANK_TOL))
                })
                .collect::<Result<Vec<_>>>()?,
            Mode::Shared => {
                let vs: Vec<DVector<f64>> =
                    clients.iter().flat_map(|c| c.directions.iter().cloned()).collect();
                vec![linalg::rank_of_set(&vs, Some(DIRECTION_RANK_TOL))?]
            }
        };

        Ok(DesignProblem {
            mode,
            dim,
            num_arms,
            clients,
            coverage,
            ranks,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    /// Active arms of client `i`, ascending.
    pub fn arms(&self, i: usize) -> &[usize] {
        &self.clients[i].arms
    }

    /// Unit direction of the `k`-th active arm of client `i`.
    pub fn direction(&self, i: usize, k: usize) -> &DVector<f64> {
        &self.clients[i].directions[k]
    }

    /// `(client, slot)` pairs covering arm `a`.
    pub fn coverage(&self, a: usize) -> &[(usize, usize)] {
        &self.coverage[a]
    }

    /// Direction-set ranks: one per arm in disjoint mode (zero for arms no
    /// client holds), a single pooled rank in shared mode.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// The value `G` attains at an optimum.
    pub fn rank_bound(&self) -> usize {
        self.ranks.iter().sum()
    }

    /// `pi[i][k] = 1 / |A_i|`.
    pub fn uniform_weights(&self) -> Weights {
        self.clients
            .iter()
            .map(|c| vec![1.0 / c.arms.len() as f64; c.arms.len()])
            .collect()
    }

    /// Checks shape, non-negativity and the per-client simplex constraint.
    pub fn check_weights(&self, pi: &Weights) -> Result<()> {
        if pi.len() != self.clients.len() {
            return Err(Error::InvalidInput(format!(
                "weights cover {} clients, problem has {}",
                pi.len(),
                self.clients.len()
            )));
        }
        for (i, (w, c)) in pi.iter().zip(&self.clients).enumerate() {
            if w.len() != c.arms.len() {
                return Err(Error::InvalidInput(format!(
                    "client {i}: {} weights for {} arms",
                    w.len(),
                    c.arms.len()
                )));
            }
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidInput(format!("client {i}: negative or non-finite weight")));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("client {i}: weights sum to {s}")));
            }
        }
        Ok(())
    }

    /// Design matrices: one per arm (disjoint) or one pooled (shared).
    pub(crate) fn design_matrices(&self, pi: &Weights) -> Vec<DMatrix<f64>> {
        let n = match self.mode {
            Mode::Disjoint => self.num_arms,
            Mode::Shared => 1,
        };
        let mut mats = vec![DMatrix::zeros(self.dim, self.dim); n];
        for (i, c) in self.clients.iter().enumerate() {
            for (k, (&a, e)) in c.arms.iter().zip(&c.directions).enumerate() {
                let w = pi[i][k];
                if w != 0.0 {
                    mats[self.matrix_index(a)].ger(w, e, e, 1.0);
                }
            }
        }
        mats
    }

    pub(crate) fn matrix_index(&self, arm: usize) -> usize {
        match self.mode {
            Mode::Disjoint => arm,
            Mode::Shared => 0,
        }
    }
}

const DIRECTION_RANK_TOL: f64 = 1e-9;

/// Solver knobs. `rank_tol` is relative to each design matrix's spectral norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub max_sweeps: usize,
    pub bisection_tol: f64,
    pub rank_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 0.1,
            max_sweeps: 500,
            bisection_tol: 1e-12,
            rank_tol: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("max_sweeps must be at least 1".into()));
        }
        if !(self.bisection_tol > 0.0) {
            return Err(Error::InvalidConfig("bisection_tol must be positive".into()));
        }
        if !(self.rank_tol >= 0.0) {
            return Err(Error::InvalidConfig("rank_tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignSolution {
    pub pi: Weights,
    /// See [`DesignProblem::ranks`].
    pub ranks: Vec<usize>,
    pub objective_g: f64,
    pub objective_f: f64,
    /// Full passes over the clients (BCA) or gradient steps (shared mode).
    pub sweeps: usize,
    /// Whether `G <= rank_bound + epsilon` was reached.
    pub certified: bool,
}

impl DesignSolution {
    pub fn rank_bound(&self) -> usize {
        self.ranks.iter().sum()
    }
}

/// Pseudo-inverses, log pseudo-determinants and ranks of the design
/// matrices, with the rank check against the direction sets applied.
pub(crate) struct Analysis {
    pub pinvs: Vec<DMatrix<f64>>,
    pub log_pdet: f64,
}

pub(crate) fn analyze(problem: &DesignProblem, pi: &Weights, rank_tol: f64) -> Result<Analysis> {
    let mats = problem.design_matrices(pi);
    let mut pinvs = Vec::with_capacity(mats.len());
    let mut total = 0.0;
    for (idx, m) in mats.iter().enumerate() {
        let expected = problem.ranks[idx];
        if expected == 0 {
            pinvs.push(DMatrix::zeros(problem.dim, problem.dim));
            continue;
        }
        let (p, logdet, rank) = linalg::sym_analyze(m, rank_tol);
        if rank < expected {
            let scope = match problem.mode {
                Mode::Disjoint => format!("arm {idx}"),
                Mode::Shared => "pooled design".to_string(),
            };
            return Err(Error::RankViolation {
                scope,
                expected,
                actual: rank,
            });
        }
        total += logdet;
        pinvs.push(p);
    }
    Ok(Analysis {
        pinvs,
        log_pdet: total,
    })
}

/// `sum_i max_a e' U+ e` from precomputed pseudo-inverses.
pub(crate) fn g_from_pinvs(problem: &DesignProblem, pinvs: &[DMatrix<f64>]) -> f64 {
    problem
        .clients
        .iter()
        .map(|c| {
            c.arms
                .iter()
                .zip(&c.directions)
                .map(|(&a, e)| linalg::quad_form(&pinvs[problem.matrix_index(a)], e))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

/// The G objective.
pub fn eval_g(problem: &DesignProblem, pi: &Weights, rank_tol: f64) -> Result<f64> {
    problem.check_weights(pi)?;
    let an = analyze(problem, pi, rank_tol)?;
    Ok(g_from_pinvs(problem, &an.pinvs))
}

/// The F objective: summed log pseudo-determinants.
pub fn eval_f(problem: &DesignProblem, pi: &Weights, rank_tol: f64) -> Result<f64> {
    problem.check_weights(pi)?;
    Ok(analyze(problem, pi, rank_tol)?.log_pdet)
}

/// Per-client leverage terms `e_ia' U_a+ e_ia`, which are also the partial
/// derivatives of F with respect to `pi[i][k]`.
pub fn gradient_f(problem: &DesignProblem, pi: &Weights, rank_tol: f64) -> Result<Weights> {
    problem.check_weights(pi)?;
    let an = analyze(problem, pi, rank_tol)?;
    Ok(gains(problem, &an.pinvs))
}

pub(crate) fn gains(problem: &DesignProblem, pinvs: &[DMatrix<f64>]) -> Weights {
    problem
        .clients
        .iter()
        .map(|c| {
            c.arms
                .iter()
                .zip(&c.directions)
                .map(|(&a, e)| linalg::quad_form(&pinvs[problem.matrix_index(a)], e))
                .collect()
        })
        .collect()
}

/// Maximises F subject to the simplex constraints, stopping once the duality
/// gap `G - rank_bound` is at most `epsilon`.
pub fn solve_design(problem: &DesignProblem, config: &SolverConfig) -> Result<DesignSolution> {
    config.validate()?;
    match problem.mode {
        Mode::Disjoint => bca::solve(problem, config),
        Mode::Shared => projected::solve(problem, config),
    }
}

/// Weights at or below this are treated as zero when allocating pulls.
pub const ZERO_WEIGHT: f64 = 1e-12;

/// Floor kept on weights that alone span some direction of their design
/// matrix, so the rank can not drop in finite arithmetic.
pub(crate) const WEIGHT_FLOOR: f64 = 1e-9;

/// Leverage `pi * g` at or above this marks a sole spanner.
pub(crate) const SOLE_SPANNER_LEVERAGE: f64 = 1.0 - 1e-7;

/// `f_ia = ceil(pi_ia * f)`, with zero weights mapped to zero pulls.
///
/// A relative slack of 1e-9 is subtracted before the ceiling so that
/// products like `0.3 * 10` that land a few ulps above an integer are not
/// rounded up to the next one.
pub fn allocate_pulls(pi: &Weights, f: u64) -> Allocation {
    pi.iter()
        .map(|w| {
            w.iter()
                .map(|&x| {
                    if x <= ZERO_WEIGHT {
                        0
                    } else {
                        let y = x * f as f64;
                        (y - 1e-9 * y.max(1.0)).ceil().max(1.0) as u64
                    }
                })
                .collect()
        })
        .collect()
}
