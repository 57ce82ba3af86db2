#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(problem) = fedpe::design::parse_problem(text) {
        let again = fedpe::design::parse_problem(&fedpe::design::problem_to_json(&problem))
            .expect("re-parse of serialised problem");
        assert_eq!(problem.ranks(), again.ranks());
        let pi = problem.uniform_weights();
        let _ = fedpe::design::eval_g(&problem, &pi, 1e-12);
    }
});
