#![no_main]

use libfuzzer_sys::fuzz_target;
use volquote::pricer::SurfaceSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = text.parse::<SurfaceSpec>() {
            assert!(spec.validate().is_ok());
        }
    }
});
