#![no_main]

use compsnn::graph::{laplacian, LaplacianKind, TrajectoryGraph};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(g) = TrajectoryGraph::from_json(text) {
        if g.node_count() <= 256 {
            let _ = laplacian(&g, LaplacianKind::Normalized);
        }
    }
});
