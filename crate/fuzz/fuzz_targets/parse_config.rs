#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = mtlab::parse_config(text) {
        // Anything accepted must survive its own round trip.
        let again = mtlab::parse_config(&config.to_toml()).expect("resolved config reparses");
        assert_eq!(again.to_toml(), config.to_toml());
    }
});
