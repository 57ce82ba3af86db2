//! Client-side steps: arm elimination and local estimation.

use nalgebra::DVector;
use rand::Rng;

use super::alpha::enhanced_alpha;
use super::server::Models;
use crate::env::BanditInstance;
use crate::error::{Error, Result};
use crate::linalg;

/// Estimated reward and confidence half-width of one active arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmScore {
    pub arm: usize,
    pub estimate: f64,
    pub width: f64,
}

/// Keeps every arm whose upper bound reaches the lower bound of the arm with
/// the highest estimate. Returns the survivors (in input order) and that
/// best arm; ties for the best estimate go to the earliest entry.
pub fn eliminate(scores: &[ArmScore]) -> (Vec<usize>, usize) {
    assert!(!scores.is_empty(), "elimination over an empty active set");
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if s.estimate > scores[best].estimate {
            best = k;
        }
    }
    let floor = scores[best].estimate - scores[best].width;
    let kept = scores
        .iter()
        .enumerate()
        .filter(|(k, s)| *k == best || s.estimate + s.width >= floor)
        .map(|(_, s)| s.arm)
        .collect();
    (kept, scores[best].arm)
}

/// How confidence widths are formed from the broadcast models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WidthRule {
    /// `alpha |x|_V / ell`.
    Scaled { alpha: f64, ell: f64 },
    /// `alpha |x|_W` for a potential built from raw features.
    Unscaled { alpha: f64 },
    /// Running averages across phases with per-arm multipliers.
    Enhanced {
        ell: f64,
        num_clients: usize,
        num_arms: usize,
        dim: usize,
        delta: f64,
    },
}

/// Running sums kept by an enhanced client.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedSums {
    /// `sum_q r_hat^q f^{q-1}` per arm.
    pub reward: Vec<f64>,
    /// `sum_q (sigma^q)^2 (f^{q-1})^2` per arm.
    pub variance: Vec<f64>,
    /// `sum_q f^{q-1}`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: usize,
    active: Vec<usize>,
    best_arm: Option<usize>,
    enhanced: Option<EnhancedSums>,
}

impl ClientState {
    pub fn new(id: usize, num_arms: usize, enhanced: bool) -> Self {
        ClientState {
            id,
            active: (0..num_arms).collect(),
            best_arm: None,
            enhanced: enhanced.then(|| EnhancedSums {
                reward: vec![0.0; num_arms],
                variance: vec![0.0; num_arms],
                weight: 0.0,
            }),
        }
    }

    /// Active arms, ascending.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Arm with the highest estimate at the last elimination.
    pub fn best_arm(&self) -> Option<usize> {
        self.best_arm
    }

    pub fn enhanced_sums(&self) -> Option<&EnhancedSums> {
        self.enhanced.as_ref()
    }

    /// Scores every active arm against the broadcast models and shrinks the
    /// active set. `f_prev` is the exploration budget behind the models
    /// (1 for the initialisation round).
    pub fn eliminate_arms(
        &mut self,
        features: &[DVector<f64>],
        models: &Models,
        rule: WidthRule,
        f_prev: u64,
    ) -> Result<Vec<ArmScore>> {
        let mut scores = Vec::with_capacity(self.active.len());
        if let Some(sums) = self.enhanced.as_mut() {
            sums.weight += f_prev as f64;
        }
        for &a in &self.active {
            let model = models.for_arm(a).ok_or_else(|| {
                Error::Protocol(format!("client {}: no global model for active arm {a}", self.id))
            })?;
            let x = &features[a];
            let r_hat = x.dot(&model.theta);
            let norm_v = linalg::quad_form(&model.v, x).max(0.0).sqrt();
            let (estimate, width) = match rule {
                WidthRule::Scaled { alpha, ell } => (r_hat, alpha * norm_v / ell),
                WidthRule::Unscaled { alpha } => (r_hat, alpha * norm_v),
                WidthRule::Enhanced {
                    ell,
                    num_clients,
                    num_arms,
                    dim,
                    delta,
                } => {
                    let sums = self.enhanced.as_mut().expect("enhanced client");
                    let f = f_prev as f64;
                    let sigma = norm_v / ell;
                    sums.reward[a] += r_hat * f;
                    sums.variance[a] += sigma * sigma * f * f;
                    let sigma_bar =
                        (dim as f64 * num_arms as f64 / num_clients as f64 + sums.variance[a]).sqrt();
                    let alpha = enhanced_alpha(num_clients, num_arms, dim, delta, sigma_bar);
                    (sums.reward[a] / sums.weight, alpha * sigma_bar / sums.weight)
                }
            };
            scores.push(ArmScore { arm: a, estimate, width });
        }
        let (kept, best) = eliminate(&scores);
        self.active = kept;
        self.best_arm = Some(best);
        Ok(scores)
    }
}

/// Initial upload for one arm after a single pull with reward `y`:
/// the estimate `y x / |x|^2` and its unit direction. A zero reward gives a
/// zero estimate; the direction then falls back to `x / |x|` with its first
/// nonzero coordinate made positive.
pub fn initial_upload(x: &DVector<f64>, y: f64) -> (DVector<f64>, DVector<f64>) {
    let estimate = x * (y / x.norm_squared());
    let direction = linalg::normalized(&estimate).unwrap_or_else(|| {
        let mut e = x / x.norm();
        if let Some(first) = e.iter().find(|v| **v != 0.0) {
            if *first < 0.0 {
                e.neg_mut();
            }
        }
        e
    });
    (estimate, direction)
}

/// Pulls arm `a` at client `i` `pulls` times and returns the summed reward.
pub fn pull_sum<R: Rng + ?Sized>(env: &BanditInstance, i: usize, a: usize, pulls: u64, rng: &mut R) -> f64 {
    (0..pulls).map(|_| env.sample_reward(i, a, rng)).sum()
}

/// Local least-squares estimate from `pulls` observations of arm `a`:
/// `(mean reward) x / |x|^2`, or `None` when the arm is not pulled.
pub fn explore_and_estimate<R: Rng + ?Sized>(
    env: &BanditInstance,
    i: usize,
    a: usize,
    pulls: u64,
    rng: &mut R,
) -> Option<DVector<f64>> {
    if pulls == 0 {
        return None;
    }
    let mean = pull_sum(env, i, a, pulls, rng) / pulls as f64;
    let x = env.feature(i, a);
    Some(x * (mean / x.norm_squared()))
}
