//! Replays the checked-in fuzz seeds through the same checks the fuzz
//! targets make, so the corpus stays valid on a stable toolchain.

use std::fs;
use std::path::PathBuf;

use mtlab::sweep::{format_manifest, parse_manifest};

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (
                path.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(&path).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn config_seeds_round_trip_when_accepted() {
    let mut accepted = 0;
    for (name, text) in seeds("parse_config") {
        if let Ok(config) = mtlab::parse_config(&text) {
            accepted += 1;
            let again = mtlab::parse_config(&config.to_toml()).unwrap();
            assert_eq!(again.to_toml(), config.to_toml(), "{name}");
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn trajectory_seeds_parse_or_reject_cleanly() {
    let mut accepted = 0;
    for (name, text) in seeds("parse_trajectory") {
        match mtlab::io::parse_trajectory(&text) {
            Ok(snapshots) => {
                accepted += 1;
                assert!(
                    snapshots
                        .windows(2)
                        .all(|w| w[0].iteration < w[1].iteration),
                    "{name}"
                );
            }
            Err(e) => assert!(e.to_string().contains("line"), "{name}: {e}"),
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn manifest_seeds_are_stable_under_formatting() {
    for (name, text) in seeds("parse_manifest") {
        let entries = parse_manifest(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let once = format_manifest(&entries);
        assert_eq!(
            format_manifest(&parse_manifest(&once).unwrap()),
            once,
            "{name}"
        );
    }
}

#[test]
fn field_seeds_parse() {
    for (name, text) in seeds("parse_fields") {
        let ok = mtlab::error::parse_method(&text).is_ok()
            || mtlab::config::parse_level(&text).is_ok()
            || mtlab::config::parse_seeds(&text).is_ok();
        assert!(ok, "{name}");
    }
}
