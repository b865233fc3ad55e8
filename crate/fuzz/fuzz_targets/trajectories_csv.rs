#![no_main]

use compsnn::io::{read_trajectories, write_trajectories};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(trajs) = read_trajectories(data) {
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &trajs).unwrap();
        assert_eq!(read_trajectories(buf.as_slice()).unwrap(), trajs);
    }
});
