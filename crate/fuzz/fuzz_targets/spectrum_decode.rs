#![no_main]

use compsnn::graph::Spectrum;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(sp) = Spectrum::decode(data) {
        assert_eq!(Spectrum::decode(&sp.encode()).unwrap(), sp);
    }
});
