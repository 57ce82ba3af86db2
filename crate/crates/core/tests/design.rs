use std::path::PathBuf;

use nalgebra::DVector;
use proptest::prelude::*;

use fedpe::design::{
    allocate_pulls, eval_f, eval_g, gradient_f, load_problem, parse_problem, solve_block_subproblem,
    solve_design, DesignProblem, Mode, SolverConfig, Weights,
};
use fedpe::Error;

const RANK_TOL: f64 = 1e-12;

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus/problem_parse").join(name)
}

fn assert_on_simplex(pi: &Weights) {
    for w in pi {
        assert!(w.iter().all(|&x| x >= 0.0), "{w:?}");
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{w:?}");
    }
}

#[test]
fn corpus_problems_solve_to_certificate() {
    let cfg = SolverConfig::default();
    for name in ["disjoint_basis.json", "shared_two_clients.json", "collinear.json"] {
        let problem = load_problem(corpus(name)).unwrap();
        let sol = solve_design(&problem, &cfg).unwrap();
        assert_on_simplex(&sol.pi);
        assert!(sol.certified, "{name}");
        let bound = sol.rank_bound() as f64;
        assert!(sol.objective_g <= bound + cfg.epsilon, "{name}: G = {}", sol.objective_g);
        assert!(sol.objective_g >= bound - 1e-9, "{name}: G = {}", sol.objective_g);
        assert!((eval_g(&problem, &sol.pi, RANK_TOL).unwrap() - sol.objective_g).abs() < 1e-9);
        assert!((eval_f(&problem, &sol.pi, RANK_TOL).unwrap() - sol.objective_f).abs() < 1e-9);
    }
}

#[test]
fn shared_clients_with_one_arm_each_split_nothing() {
    // Every client has a single arm, so the only feasible design is all ones
    // and the pooled rank is the span of the clients' directions.
    let text = r#"{"mode":"shared","d":3,"K":2,"clients":[
        {"arms":[0],"directions":[[1,0,0]]},
        {"arms":[1],"directions":[[0,1,0]]},
        {"arms":[0],"directions":[[1,1,0]]}]}"#;
    let problem = parse_problem(text).unwrap();
    assert_eq!(problem.ranks(), &[2]);
    let sol = solve_design(&problem, &SolverConfig::default()).unwrap();
    assert_eq!(sol.pi, vec![vec![1.0]; 3]);
    // Pooled U = diag(1,1,0) + 0.5 (1,1,0)(1,1,0)'. Leverages sum to the rank.
    let g = gradient_f(&problem, &sol.pi, RANK_TOL).unwrap();
    let total: f64 = g.iter().flatten().sum();
    assert!((total - 2.0).abs() < 1e-12);
    assert!(sol.certified);
}

#[test]
fn malformed_problems_are_rejected_with_a_field() {
    let cases = [
        (r#"{"mode":"disjoint","d":0,"K":1,"clients":[]}"#, "d"),
        (r#"{"mode":"disjoint","d":2,"K":1,"clients":[]}"#, "clients"),
        (r#"{"mode":"disjoint","d":2,"K":1,"clients":[{"arms":[0],"directions":[[1]]}]}"#, "clients[0].directions[0]"),
        (r#"{"mode":"disjoint","d":2,"K":1,"clients":[{"arms":[3],"directions":[[1,0]]}]}"#, "clients"),
        (r#"{"mode":"disjoint","d":2,"K":1,"clients":[{"arms":[0],"directions":[[0,0]]}]}"#, "clients"),
    ];
    for (text, field) in cases {
        match parse_problem(text) {
            Err(Error::Load { field: f, .. }) => assert_eq!(f, field, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
    assert!(parse_problem(r#"{"mode":"both","d":1,"K":1,"clients":[]}"#).is_err());
    assert!(parse_problem(r#"{"mode":"disjoint","d":1,"K":1,"clients":[],"x":1}"#).is_err());
}

#[test]
fn solver_config_is_validated() {
    let problem = load_problem(corpus("disjoint_basis.json")).unwrap();
    for cfg in [
        SolverConfig { epsilon: 0.0, ..SolverConfig::default() },
        SolverConfig { max_sweeps: 0, ..SolverConfig::default() },
        SolverConfig { bisection_tol: -1.0, ..SolverConfig::default() },
        SolverConfig { rank_tol: f64::NAN, ..SolverConfig::default() },
    ] {
        assert!(matches!(solve_design(&problem, &cfg), Err(Error::InvalidConfig(_))));
    }
}

#[test]
fn allocation_examples() {
    assert_eq!(allocate_pulls(&vec![vec![0.3, 0.7]], 10), vec![vec![3, 7]]);
    assert_eq!(allocate_pulls(&vec![vec![0.25, 0.75]], 3), vec![vec![1, 3]]);
    assert_eq!(allocate_pulls(&vec![vec![1.0, 0.0]], 5), vec![vec![5, 0]]);
    assert_eq!(allocate_pulls(&vec![vec![1e-6, 1.0 - 1e-6]], 4), vec![vec![1, 4]]);
}

fn unit(v: Vec<f64>) -> Option<DVector<f64>> {
    let v = DVector::from_vec(v);
    (v.norm() > 1e-3).then(|| v.normalize())
}

/// Random disjoint problems: `m` clients, each with a nonempty subset of `k`
/// arms and a direction per arm.
fn problem_strategy() -> impl Strategy<Value = DesignProblem> {
    (1usize..=4, 1usize..=4, 1usize..=3)
        .prop_flat_map(|(m, k, d)| {
            let client = (
                proptest::collection::btree_set(0..k, 1..=k),
                proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, d), k),
            );
            (Just((k, d)), proptest::collection::vec(client, m))
        })
        .prop_filter_map("zero direction", |((k, d), clients)| {
            let mut sets = Vec::new();
            let mut dirs = Vec::new();
            for (arms, raw) in clients {
                let arms: Vec<usize> = arms.into_iter().collect();
                let vs = arms.iter().map(|&a| unit(raw[a].clone())).collect::<Option<Vec<_>>>()?;
                sets.push(arms);
                dirs.push(vs);
            }
            DesignProblem::new(Mode::Disjoint, d, k, sets, dirs).ok()
        })
}

fn interior(problem: &DesignProblem, raw: &[f64]) -> Weights {
    let mut it = raw.iter().cycle();
    (0..problem.num_clients())
        .map(|i| {
            let w: Vec<f64> = problem.arms(i).iter().map(|_| 0.05 + it.next().unwrap()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solutions_are_feasible_and_certified(problem in problem_strategy()) {
        let cfg = SolverConfig::default();
        let sol = solve_design(&problem, &cfg).unwrap();
        assert_on_simplex(&sol.pi);
        prop_assert_eq!(sol.ranks.as_slice(), problem.ranks());
        let bound = problem.rank_bound() as f64;
        prop_assert!(sol.objective_g >= bound - 1e-9);
        prop_assert!(sol.certified);
        prop_assert!(sol.objective_g <= bound + cfg.epsilon);
    }

    #[test]
    fn every_interior_design_satisfies_weak_duality(
        problem in problem_strategy(),
        raw in proptest::collection::vec(0.0f64..1.0, 16),
    ) {
        let pi = interior(&problem, &raw);
        let g = eval_g(&problem, &pi, RANK_TOL).unwrap();
        let lev = gradient_f(&problem, &pi, RANK_TOL).unwrap();
        // sum_i sum_k pi_ik g_ik = sum_a tr(U_a+ U_a) = sum_a rank_a
        let weighted: f64 = pi.iter().flatten().zip(lev.iter().flatten()).map(|(p, g)| p * g).sum();
        prop_assert!((weighted - problem.rank_bound() as f64).abs() < 1e-7);
        prop_assert!(g >= weighted - 1e-9);
    }

    #[test]
    fn allocation_covers_the_weights(
        raw in proptest::collection::vec(0.0f64..1.0, 1..8),
        f in 1u64..100_000,
    ) {
        let s: f64 = raw.iter().sum();
        prop_assume!(s > 0.0);
        let w: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let alloc = allocate_pulls(&vec![w.clone()], f);
        for (&x, &n) in w.iter().zip(&alloc[0]) {
            if x <= 1e-12 {
                prop_assert_eq!(n, 0);
            } else {
                let y = x * f as f64;
                prop_assert!(n as f64 >= y * (1.0 - 1e-9) && (n as f64) < y + 1.0 + 1e-9);
                prop_assert!(n >= 1);
            }
        }
        prop_assert!(alloc[0].iter().sum::<u64>() <= f + w.len() as u64);
    }

    #[test]
    fn block_subproblem_stays_in_the_box(
        pairs in proptest::collection::vec((0.01f64..100.0, 0.0f64..1.0), 1..8),
    ) {
        let gains: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let s: f64 = pairs.iter().map(|p| p.1).sum::<f64>() + 1e-9;
        let current: Vec<f64> = pairs.iter().map(|p| (p.1 + 1e-9 / pairs.len() as f64) / s).collect();
        let w = solve_block_subproblem(&gains, &current, 1e-12).unwrap();
        prop_assert!(w.iter().sum::<f64>().abs() < 1e-8);
        for (x, c) in w.iter().zip(&current) {
            prop_assert!(*x >= -c - 1e-12 && *x <= 1.0 - c + 1e-12);
        }
        // The returned shift is at least as good as staying put.
        let val: f64 = w.iter().zip(&gains).map(|(x, g)| (1.0 + x * g).ln()).sum();
        prop_assert!(val >= -1e-9);
    }
}
