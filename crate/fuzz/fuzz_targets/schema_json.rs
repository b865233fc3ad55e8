#![no_main]

use compsnn::demographics::DemographicSchema;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(schema) = DemographicSchema::from_json(text) {
        assert_eq!(DemographicSchema::from_json(&schema.to_json()).unwrap(), schema);
    }
});
