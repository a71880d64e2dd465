#![no_main]

use libfuzzer_sys::fuzz_target;
use volquote::config::{RunConfig, KEYS};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::parse(text) {
            for key in KEYS {
                let _ = cfg.parsed::<f64>(key);
            }
        }
    }
});
