#![no_main]

use libfuzzer_sys::fuzz_target;
use volquote::claims::VolClaim;

fuzz_target!(|data: &[u8]| {
    if let Ok(claim) = VolClaim::from_table_reader(data) {
        let (lo, hi) = claim.payoff_bounds();
        for y in [1e-6, 0.05, 0.15, 0.5, 10.0] {
            let b = claim.payoff(y);
            assert!(b >= lo && b <= hi);
        }
    }
});
