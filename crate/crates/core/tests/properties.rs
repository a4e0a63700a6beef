mod common;

use common::{conservation_trial, demo, frame_trial, law_failures, rng, scenario};
use slcnc::workspace::load_workspace;

#[test]
fn disjoint_frames_do_not_change_verdicts() {
    let mut r = rng(7);
    let mut tried = 0;
    for seed in 1000..1080 {
        if frame_trial(&scenario(seed), &mut r).unwrap() {
            tried += 1;
        }
    }
    assert!(tried >= 60, "only {tried} frames placed");
}

#[test]
fn facing_conserves_stock_per_feed() {
    let w = load_workspace(demo("facing/workspace.json")).unwrap();
    let program = std::fs::read_to_string(demo("facing/program.nc")).unwrap();
    let (feeds, removed) = conservation_trial(&w, &program).unwrap();
    assert_eq!(feeds, 10);
    assert!(removed > 0);
}

#[test]
fn algebraic_laws_hold() {
    for (law, failures) in law_failures(11, 200) {
        assert_eq!(failures, 0, "{law}");
    }
}
