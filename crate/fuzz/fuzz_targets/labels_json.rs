#![no_main]

use compsnn::density::SegmentLabels;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(labels) = SegmentLabels::from_json(text) {
        assert_eq!(SegmentLabels::from_json(&labels.to_json()).unwrap(), labels);
    }
});
