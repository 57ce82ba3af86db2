#![no_main]

use libfuzzer_sys::fuzz_target;
use fedpe::protocol::{phase_lengths, ScheduleKind};

fuzz_target!(|text: &str| {
    let Ok(kind) = text.parse::<ScheduleKind>() else {
        return;
    };
    assert_eq!(kind.to_string().parse::<ScheduleKind>().ok(), Some(kind));
    for k in [1u64, 3, 10] {
        for t in [1u64, 2, 7, 100, 4096, 65_535] {
            if let Ok(s) = phase_lengths(kind, t, k) {
                let rounds: u64 = s.lengths().iter().map(|f| f + k).sum();
                assert!(rounds + k >= t);
            }
        }
    }
});
