#![no_main]

use libfuzzer_sys::fuzz_target;

// Command-line values: method names, gradient levels and seed lists.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = mtlab::error::parse_method(text);
    let _ = mtlab::config::parse_level(text);
    let _ = mtlab::config::parse_seeds(text);
});
