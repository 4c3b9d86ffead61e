#![no_main]

use libfuzzer_sys::fuzz_target;
use mtlab::sweep::{format_manifest, parse_manifest};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(entries) = parse_manifest(text) {
        // Formatting flattens failure messages, so compare after one pass.
        let once = format_manifest(&entries);
        let again = parse_manifest(&once).expect("formatted manifest reparses");
        assert_eq!(format_manifest(&again), once);
    }
});
