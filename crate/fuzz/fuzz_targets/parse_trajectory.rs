#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(snapshots) = mtlab::io::parse_trajectory(text) {
        assert!(snapshots.windows(2).all(|w| w[0].iteration < w[1].iteration));
    }
});
