#![no_main]

use gqc::experiment::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        // accepted configs are valid and survive a round trip
        cfg.validate().expect("from_json validates");
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).expect("round trip"), cfg);
    }
});
