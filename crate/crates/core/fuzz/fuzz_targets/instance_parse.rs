#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    // Malformed input must come back as an error, never a panic.
    if let Ok(env) = fedpe::env::parse_instance(text) {
        let again = fedpe::env::parse_instance(&env.to_json()).expect("re-parse of serialised instance");
        assert_eq!(env.optimal_arms(), again.optimal_arms());
    }
});
