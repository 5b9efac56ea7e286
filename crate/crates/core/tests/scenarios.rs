use std::path::PathBuf;
use std::sync::Arc;

use cellx_core::agent::ManualClock;
use cellx_core::scenario::{Scenario, ScenarioRun};

fn shipped(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    Scenario::load(path).unwrap()
}

fn run(name: &str) -> ScenarioRun {
    let s = shipped(name);
    s.run(Arc::new(ManualClock::new(0)), s.policy(), None).unwrap()
}

#[test]
fn shipped_scenarios_pass() {
    for name in ["configure-band3", "diagnose-sync-loss", "rollback-on-regression"] {
        let r = run(name);
        println!("{}", r.table());
        assert!(r.passed(), "{}", r.table());
    }
}

#[test]
fn scripted_runs_are_identical() {
    for name in ["configure-band3", "diagnose-sync-loss", "rollback-on-regression"] {
        let (a, b) = (run(name), run(name));
        assert_eq!(a.table(), b.table());
        assert_eq!(a.turns, b.turns);
    }
}
