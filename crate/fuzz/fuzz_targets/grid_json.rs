#![no_main]

use compsnn::density::{segment, DensityGrid};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(grid) = DensityGrid::from_json(text) {
        if grid.rows() * grid.cols() <= 4096 {
            let _ = segment(&grid, 2);
        }
    }
});
