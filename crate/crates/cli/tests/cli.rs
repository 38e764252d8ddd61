use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use quick_xml::events::Event;
use quick_xml::Reader;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ibvs-grasp"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn well_formed(path: &Path) {
    let text = fs::read_to_string(path).unwrap();
    let mut reader = Reader::from_str(&text);
    let mut depth = 0i32;
    let mut saw_svg = false;
    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) => {
                saw_svg |= e.name().as_ref() == b"svg";
                depth += 1;
            }
            Ok(Event::End(_)) => depth -= 1,
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => panic!("{}: {e}", path.display()),
        }
    }
    assert!(saw_svg && depth == 0, "{}", path.display());
}

#[test]
fn missing_scenario_file_fails_with_diagnostic() {
    let out = run(&[
        "experiment1",
        "--scenario",
        "/nonexistent/scenario.toml",
        "--out",
        "/tmp",
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/scenario.toml"), "{err}");
}

#[test]
fn unknown_flag_prints_usage() {
    let out = run(&["experiment2", "--bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn empty_log_fails() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("empty.csv");
    fs::write(&log, "t,mode,mean_err_px,n_matches,vx,vy,vz,wx,wy,wz\n").unwrap();
    assert!(!run(&["plot", log.to_str().unwrap()]).status.success());
    fs::write(&log, "").unwrap();
    assert!(!run(&["plot", log.to_str().unwrap()]).status.success());
}

#[test]
fn malformed_log_fails() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bad.csv");
    fs::write(&log, "t,mode,mean_err_px,n_matches,vx,vy,vz,wx,wy,wz\n0.0,PBVS,x\n").unwrap();
    assert!(!run(&["plot", log.to_str().unwrap()]).status.success());
}

#[test]
fn experiment1_converges_and_plots_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = run(&["experiment1", "--out", out_dir, "--seeds", "0", "--svg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let exp = dir.path().join("experiment1");

    let steps = exp.join("static_seed0_steps.csv");
    let log = ibvs_grasp::sim::read_step_log(fs::File::open(&steps).unwrap()).unwrap();
    let last = log.iter().rev().find(|r| r.mean_err_px.is_finite()).unwrap();
    assert!(last.mean_err_px < 1.0, "{}", last.mean_err_px);

    // Target jumps show up as spikes well above the settled error.
    let dynamic = ibvs_grasp::sim::read_step_log(fs::File::open(exp.join("dynamic_seed0_steps.csv")).unwrap()).unwrap();
    let jumps = dynamic
        .windows(2)
        .filter(|w| w[1].mean_err_px - w[0].mean_err_px > 20.0)
        .count();
    assert_eq!(jumps, 2);
    assert!(dynamic.last().unwrap().mean_err_px < 1.0);

    for name in [
        "static_seed0_error.svg",
        "static_seed0_paths.svg",
        "dynamic_seed0_paths.svg",
    ] {
        well_formed(&exp.join(name));
    }

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for target in [&a, &b] {
        let st = run(&[
            "plot",
            steps.to_str().unwrap(),
            exp.join("static_seed0_tracks.csv").to_str().unwrap(),
            "--out",
            target.to_str().unwrap(),
        ]);
        assert!(st.status.success());
    }
    for name in ["static_seed0_steps_error.svg", "static_seed0_tracks_paths.svg"] {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap());
        well_formed(&a.join(name));
    }
}

#[test]
fn experiment2_noiseless_static_campaign_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = ibvs_grasp::Scenario::experiment2_static();
    sc.noise = ibvs_grasp::NoiseConfig::none();
    let path = dir.path().join("noiseless.toml");
    fs::write(&path, sc.to_toml_string()).unwrap();
    let out = run(&[
        "experiment2",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--trials",
        "10",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = fs::read_to_string(dir.path().join(&sc.name).join("summary.json")).unwrap();
    let summary = ibvs_grasp::CampaignSummary::from_json(&json).unwrap();
    assert_eq!(summary.n_trials, 10);
    assert_eq!(summary.success_rate, 1.0);
    let log = dir.path().join(&sc.name).join("seed3_steps.csv");
    assert!(!ibvs_grasp::sim::read_step_log(fs::File::open(log).unwrap())
        .unwrap()
        .is_empty());
}

#[test]
fn seeds_and_trials_conflict() {
    assert!(!run(&["experiment2", "--seeds", "1", "--trials", "2"]).status.success());
    assert!(!run(&["experiment2", "--seeds", "5-2"]).status.success());
}
