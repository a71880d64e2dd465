#![no_main]

use libfuzzer_sys::fuzz_target;
use volquote::claims::ClaimSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Table specs would touch the filesystem.
    if let Ok(spec) = ClaimSpec::parse(text) {
        if !matches!(spec, ClaimSpec::Table(_)) {
            if let Ok(claim) = spec.resolve() {
                let (lo, hi) = claim.payoff_bounds();
                assert!(lo <= hi);
            }
        }
    }
});
