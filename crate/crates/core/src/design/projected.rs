//! Projected gradient ascent for the shared design.
//!
//! With one pooled matrix a client's arms no longer touch separate
//! determinants, so the block problem has no closed form. Each step moves
//! along the gradient `e' U+ e`, projects every client back onto its simplex
//! and backtracks until the Armijo condition holds.

use super::{
    analyze, g_from_pinvs, gains, DesignProblem, DesignSolution, SolverConfig, Weights,
    SOLE_SPANNER_LEVERAGE, WEIGHT_FLOOR,
};
use crate::error::{Error, Result};

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const MAX_STEP: f64 = 1e6;

pub(crate) fn solve(problem: &DesignProblem, config: &SolverConfig) -> Result<DesignSolution> {
    let bound = problem.rank_bound() as f64;
    let mut pi = problem.uniform_weights();
    let mut step = 1.0;
    let mut sweeps = 0;
    let mut best: Option<(f64, f64, Weights)> = None;
    loop {
        let an = analyze(problem, &pi, config.rank_tol)?;
        let g = g_from_pinvs(problem, &an.pinvs);
        if g <= bound + config.epsilon {
            return Ok(DesignSolution {
                pi,
                ranks: problem.ranks().to_vec(),
                objective_g: g,
                objective_f: an.log_pdet,
                sweeps,
                certified: true,
            });
        }
        if best.as_ref().is_none_or(|(bg, _, _)| g < *bg) {
            best = Some((g, an.log_pdet, pi.clone()));
        }
        if sweeps == config.max_sweeps {
            break;
        }
        sweeps += 1;

        let grad = gains(problem, &an.pinvs);
        let lower: Vec<Vec<f64>> = pi
            .iter()
            .zip(&grad)
            .map(|(w, gr)| {
                w.iter()
                    .zip(gr)
                    .map(|(&p, &q)| if p * q >= SOLE_SPANNER_LEVERAGE { WEIGHT_FLOOR.min(p) } else { 0.0 })
                    .collect()
            })
            .collect();

        let f0 = an.log_pdet;
        let mut moved = false;
        for _ in 0..MAX_BACKTRACKS {
            let cand: Weights = pi
                .iter()
                .zip(&grad)
                .zip(&lower)
                .map(|((w, gr), lo)| {
                    let y: Vec<f64> = w.iter().zip(gr).map(|(p, q)| p + step * q).collect();
                    project_simplex(&y, lo)
                })
                .collect();
            let ascent: f64 = cand
                .iter()
                .zip(&pi)
                .zip(&grad)
                .flat_map(|((c, w), gr)| c.iter().zip(w).zip(gr).map(|((c, w), q)| (c - w) * q))
                .sum();
            if ascent <= 0.0 {
                // The projected step is stationary at this step size.
                step *= 0.5;
                continue;
            }
            let f1 = match analyze(problem, &cand, config.rank_tol) {
                Ok(a) => a.log_pdet,
                Err(Error::RankViolation { .. }) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            };
            if f1 >= f0 + ARMIJO_C * ascent {
                pi = cand;
                step = (step * 2.0).min(MAX_STEP);
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let (g, f, pi) = best.expect("at least one iterate is evaluated");
    Ok(DesignSolution {
        pi,
        ranks: problem.ranks().to_vec(),
        objective_g: g,
        objective_f: f,
        sweeps,
        certified: false,
    })
}

/// Euclidean projection of `y` onto `{x : sum x = 1, x >= lower}`.
/// Requires `sum lower <= 1`.
pub(crate) fn project_simplex(y: &[f64], lower: &[f64]) -> Vec<f64> {
    let radius = 1.0 - lower.iter().sum::<f64>();
    let z: Vec<f64> = y.iter().zip(lower).map(|(a, b)| a - b).collect();
    let mut sorted = z.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - radius) / (k + 1) as f64;
        if v - t > 0.0 {
            tau = t;
        }
    }
    let mut x: Vec<f64> = z.iter().zip(lower).map(|(v, l)| (v - tau).max(0.0) + l).collect();
    let s: f64 = x.iter().sum();
    if let Some(k) = (0..x.len()).max_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap()) {
        x[k] -= s - 1.0;
    }
    x
}
