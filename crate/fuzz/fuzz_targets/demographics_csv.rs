#![no_main]

use compsnn::io::read_demographics;
use compsnn::synth::synthetic_schema;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_demographics(data, &synthetic_schema()) {
        for (_, v) in rows {
            assert!(v.0.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
});
