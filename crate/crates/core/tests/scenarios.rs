use std::path::PathBuf;

use ibvs_grasp::Scenario;

fn scenario_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

#[test]
fn shipped_files_match_presets() {
    assert_eq!(
        Scenario::load(&scenario_file("experiment1.toml")).unwrap(),
        Scenario::experiment1()
    );
    assert_eq!(
        Scenario::load(&scenario_file("experiment2.toml")).unwrap(),
        Scenario::experiment2_dynamic()
    );
}

#[test]
fn missing_file_is_an_error() {
    assert!(Scenario::load(&scenario_file("nope.toml")).is_err());
}
