//! The bundled scenarios/ directory must match the built-in corpus.
//! Regenerate with `SRPSIM_WRITE_SCENARIOS=1 cargo test --test scenarios`.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use srpsim::corpus::corpus;
use srpsim::harness::run_scenario;
use srpsim::scenario::{load_scenario, Scenario};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn bundled_files_match_corpus() {
    let write = std::env::var_os("SRPSIM_WRITE_SCENARIOS").is_some();
    let mut expected = BTreeSet::new();
    for f in corpus() {
        let name = format!("{}.json", f.name);
        let json = Scenario::from_file(f).unwrap().to_json() + "\n";
        let path = dir().join(&name);
        if write {
            fs::create_dir_all(dir()).unwrap();
            fs::write(&path, &json).unwrap();
        } else {
            let on_disk = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(on_disk, json, "{name} is out of date");
        }
        expected.insert(name);
    }
    let present: BTreeSet<String> = fs::read_dir(dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    assert_eq!(present, expected);
}

#[test]
fn bundled_files_meet_their_expectations() {
    let mut n = 0;
    for entry in fs::read_dir(dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let sc = load_scenario(&path).unwrap();
            let (_, report) = run_scenario(&sc, sc.config.seed).unwrap();
            assert!(report.passed(), "{}: {:?}", path.display(), report.violations);
            n += 1;
        }
    }
    assert!(n > 0);
}
