#![no_main]

use compsnn::model::ModelParams;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok((params, seed, epoch)) = ModelParams::from_checkpoint_json(text) {
        let again = params.to_checkpoint_json(seed, epoch);
        assert!(ModelParams::from_checkpoint_json(&again).is_ok());
    }
});
