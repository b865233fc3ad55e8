#![no_main]

use compsnn::experiment::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = serde_json::from_str::<ExperimentConfig>(text) {
        let _ = cfg.validate();
    }
});
