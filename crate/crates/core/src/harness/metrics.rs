use crate::design::Weights;
use crate::env::BanditInstance;
use crate::error::{Error, Result};
use crate::trace::{CommCounts, CommMode, PhaseRecord};

pub const DEFAULT_SPARSITY_THRESHOLD: f64 = 1e-9;

/// Cumulative pseudo-regret summed over clients. `pull_log[i][t]` is the arm
/// client `i` pulled in round `t + 1`; clients may have logs of different
/// lengths, the series runs to the longest.
pub fn compute_regret(env: &BanditInstance, pull_log: &[Vec<u32>]) -> Result<Vec<f64>> {
    if pull_log.len() != env.num_clients() {
        return Err(Error::InvalidInput(format!(
            "pull log covers {} clients, instance has {}",
            pull_log.len(),
            env.num_clients()
        )));
    }
    let horizon = pull_log.iter().map(Vec::len).max().unwrap_or(0);
    let mut inst = vec![0.0; horizon];
    for (i, pulls) in pull_log.iter().enumerate() {
        for (t, &a) in pulls.iter().enumerate() {
            let a = a as usize;
            if a >= env.num_arms() {
                return Err(Error::InvalidInput(format!(
                    "pull log: client {i}, round {} names arm {a} of {}",
                    t + 1,
                    env.num_arms()
                )));
            }
            inst[t] += env.gap(i, a);
        }
    }
    let mut acc = 0.0;
    Ok(inst
        .into_iter()
        .map(|r| {
            acc += r;
            acc
        })
        .collect())
}

/// Total `(up, down)` scalars over an optional initialisation record and
/// the phase records.
pub fn comm_cost(init: Option<&CommCounts>, phases: &[PhaseRecord], mode: CommMode) -> (u64, u64) {
    init.into_iter()
        .chain(phases.iter().map(|p| &p.comm))
        .map(|c| c.scalars(mode))
        .fold((0, 0), |(u, d), (a, b)| (u + a, d + b))
}

/// Weights above `threshold`, divided by the number of clients.
pub fn sparsity_level(pi: &Weights, threshold: f64) -> f64 {
    if pi.is_empty() {
        return 0.0;
    }
    let n = pi.iter().flatten().filter(|&&w| w > threshold).count();
    n as f64 / pi.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Mode;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};

    fn env() -> BanditInstance {
        BanditInstance::new(
            Mode::Shared,
            vec![DVector::from_element(1, 1.0)],
            vec![
                vec![DVector::from_element(1, 1.0), DVector::from_element(1, 0.8), DVector::from_element(1, 0.5)],
                vec![DVector::from_element(1, 0.6), DVector::from_element(1, 0.9), DVector::from_element(1, 0.7)],
            ],
            1.0,
            0.5,
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn optimal_log_has_no_regret() {
        let e = env();
        let r = compute_regret(&e, &[vec![0; 10], vec![1; 10]]).unwrap();
        assert!(r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn one_round_gap() {
        let e = env();
        let r = compute_regret(&e, &[vec![1], vec![1]]).unwrap();
        assert!((r[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force_resummation() {
        let e = env();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let log: Vec<Vec<u32>> = (0..2).map(|_| (0..50).map(|_| rng.random_range(0..3)).collect()).collect();
        let r = compute_regret(&e, &log).unwrap();
        for t in 0..50 {
            let mut oracle = 0.0;
            for (i, pulls) in log.iter().enumerate() {
                let best = (0..3).map(|a| e.mean(i, a)).fold(f64::NEG_INFINITY, f64::max);
                for &a in &pulls[..=t] {
                    oracle += best - e.feature(i, a as usize)[0] * e.theta(a as usize)[0];
                }
            }
            assert!((r[t] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_arm() {
        assert!(compute_regret(&env(), &[vec![3], vec![0]]).is_err());
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity_level(&vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1e-9), 1.0);
        assert_eq!(sparsity_level(&vec![vec![0.5, 0.5], vec![0.2, 0.8, 0.0]], 1e-9), 2.0);
    }

    #[test]
    fn estimate_upload_cost() {
        let c = CommCounts { dim: 3, estimates: 2, ..Default::default() };
        let rec = PhaseRecord {
            phase: 1,
            f_p: 2,
            comm: c,
            sparsity: 1.0,
            sweeps: 0,
            certified: true,
            truncated: false,
            active_sets: vec![vec![0], vec![0]],
            rounds: 3,
        };
        assert_eq!(comm_cost(None, &[rec], CommMode::Naive), (6, 0));
    }
}
