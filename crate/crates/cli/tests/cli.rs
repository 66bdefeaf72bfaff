//! End-to-end binary tests: exit codes, artifact determinism, and graceful
//! failure on malformed input.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_dsheaf")
}

fn models_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("models")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dsheaf-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn validate_accepts_every_bundled_model() {
    for entry in std::fs::read_dir(models_dir()).unwrap() {
        let path = entry.unwrap().path();
        let output = run(&["validate", path.to_str().unwrap()]);
        assert!(output.status.success(), "{path:?}: {output:?}");
    }
}

#[test]
fn validate_rejects_malformed_input_with_code_two() {
    let dir = tmp_dir("malformed");
    let path = dir.join("broken.model");
    std::fs::write(&path, "sheaf-model v1\n[vertices]\nv1 notanumber\n").unwrap();
    let output = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 3"), "{stderr}");
}

#[test]
fn truncated_models_never_crash_the_binary() {
    let text = std::fs::read_to_string(models_dir().join("fig2.model")).unwrap();
    let dir = tmp_dir("truncated");
    for cut in (0..text.len()).step_by(7) {
        if !text.is_char_boundary(cut) {
            continue;
        }
        let path = dir.join("cut.model");
        std::fs::write(&path, &text[..cut]).unwrap();
        let output = run(&["validate", path.to_str().unwrap()]);
        let code = output.status.code().expect("no signal");
        assert!(code == 0 || code == 2, "cut {cut}: code {code}");
    }
}

#[test]
fn non_convergence_exits_with_code_three() {
    let model = models_dir().join("fig1.model");
    let dir = tmp_dir("horizon");
    let output = run(&[
        "diffuse",
        model.to_str().unwrap(),
        "--t-max",
        "0.001",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3), "{output:?}");
}

#[test]
fn divergence_ceiling_exits_with_code_four() {
    let model = models_dir().join("example_c1.model");
    let dir = tmp_dir("ceiling");
    // The asymmetric edge grows the map norm from sqrt(2) toward sqrt(13)/2;
    // a ceiling below that is hit on the way.
    let output = run(&[
        "joint",
        model.to_str().unwrap(),
        "--map-ceiling",
        "1.5",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(4), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("divergence ceiling"), "{stdout}");
    assert!(stdout.contains("asymmetric"), "{stdout}");
}

#[test]
fn identical_runs_produce_identical_artifacts() {
    let model = models_dir().join("fig2.model");
    let dir_a = tmp_dir("det-a");
    let dir_b = tmp_dir("det-b");
    for dir in [&dir_a, &dir_b] {
        let output = run(&[
            "poisson",
            model.to_str().unwrap(),
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
        assert!(output.status.success());
    }
    for name in ["fig2.poisson.trajectory.csv", "fig2.poisson.final.model"] {
        let a = std::fs::read(dir_a.join(name)).unwrap();
        let b = std::fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn final_model_artifacts_reload() {
    let model = models_dir().join("fig3.model");
    let dir = tmp_dir("reload");
    let output = run(&[
        "learn",
        model.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let learned = dir.join("fig3.learn.final.model");
    let output = run(&["validate", learned.to_str().unwrap()]);
    assert!(output.status.success(), "{output:?}");
}

#[test]
fn every_defaulted_parameter_is_echoed() {
    let model = models_dir().join("fig2.model");
    let dir = tmp_dir("echo");
    let output = run(&[
        "poisson",
        model.to_str().unwrap(),
        "--alpha",
        "2",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("alpha = 2\n"), "{stdout}");
    for name in ["t-max", "rel-tol", "abs-tol", "velocity-tol", "stride"] {
        let marker = format!("{name} = ");
        let line = stdout
            .lines()
            .find(|l| l.trim_start().starts_with(&marker))
            .unwrap_or_else(|| panic!("missing echo for {name}: {stdout}"));
        assert!(line.contains("(default)"), "{line}");
    }
}

#[test]
fn analyze_round_trips_through_the_csv() {
    let model = models_dir().join("fig6_scenario1.model");
    let dir = tmp_dir("analyze");
    let output = run(&[
        "joint",
        model.to_str().unwrap(),
        "--t-max",
        "50",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let csv = dir.join("fig6_scenario1.joint.trajectory.csv");
    let output = run(&[
        "analyze",
        csv.to_str().unwrap(),
        "--alpha",
        "1",
        "--beta",
        "1",
    ]);
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("effective gaps"), "{stdout}");
    assert!(dir
        .join("fig6_scenario1.joint.trajectory.analyze.gaps.csv")
        .exists());
}

#[test]
fn sweep_writes_per_job_artifacts_and_summary() {
    let model = models_dir().join("example_c1.model");
    let dir = tmp_dir("sweep");
    let output = run(&[
        "sweep",
        model.to_str().unwrap(),
        "--alphas",
        "0.5,1",
        "--betas",
        "1",
        "--t-max",
        "40",
        "--jobs",
        "2",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let summary = std::fs::read_to_string(dir.join("example_c1.sweep.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(dir.join("example_c1.sweep.a0.5_b1.trajectory.csv").exists());
    assert!(dir.join("example_c1.sweep.a1_b1.trajectory.csv").exists());
}

#[test]
fn diffusing_an_agreement_state_converges_instantly() {
    let model = models_dir().join("fig1.model");
    let dir = tmp_dir("instant");
    let output = run(&[
        "diffuse",
        model.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    // The written limit state is an agreement state; rerunning from it is a
    // zero-length run.
    let settled = dir.join("fig1.diffuse.final.model");
    let output = run(&[
        "diffuse",
        settled.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("converged at t = 0.000000"), "{stdout}");
}

#[test]
fn corrupting_one_map_entry_breaks_exactly_the_dependent_run() {
    let dir = tmp_dir("mutation");
    let pristine = std::fs::read_to_string(models_dir().join("fig1.model")).unwrap();
    let corrupted = pristine.replace(
        "[restriction v1 e12]\n1 1\n-2\n",
        "[restriction v1 e12]\n1 1\n-2.1\n",
    );
    assert_ne!(pristine, corrupted);
    let path = dir.join("mutated.model");
    std::fs::write(&path, &corrupted).unwrap();
    let output = run(&[
        "diffuse",
        path.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    // The run itself still succeeds; the limit just lands elsewhere.
    assert!(output.status.success(), "{output:?}");
    let settled = std::fs::read_to_string(dir.join("mutated.diffuse.final.model")).unwrap();
    let doc = discourse_sheaf::model::parse_model(&settled).unwrap();
    let expected = nalgebra::DVector::from_vec(vec![1.0, 0.0, -1.0, -1.0, 0.0, -1.0]);
    let gap = (doc.cochain0.unwrap().to_flat() - expected).norm();
    assert!(gap > 1e-3, "corruption went undetected: gap {gap:e}");
    // The untouched bundled model still reproduces its limit.
    let output = run(&[
        "diffuse",
        models_dir().join("fig1.model").to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let settled = std::fs::read_to_string(dir.join("fig1.diffuse.final.model")).unwrap();
    let doc = discourse_sheaf::model::parse_model(&settled).unwrap();
    let expected = nalgebra::DVector::from_vec(vec![1.0, 0.0, -1.0, -1.0, 0.0, -1.0]);
    let gap = (doc.cochain0.unwrap().to_flat() - expected).norm();
    assert!(gap < 1e-6, "pristine model drifted: gap {gap:e}");
}

#[test]
fn frozen_flag_inverts_the_listed_incidences() {
    let dir = tmp_dir("frozen");
    let text = std::fs::read_to_string(models_dir().join("fig3.model")).unwrap();
    // Same adaptation set expressed as its complement: list the two frozen
    // incidences and pass --frozen.
    let at = text.find("[adapting]").unwrap();
    let inverted = format!("{}[adapting]\nv4 e34\nv4 e41\n", &text[..at]);
    let path = dir.join("inverted.model");
    std::fs::write(&path, inverted).unwrap();

    let direct_dir = tmp_dir("frozen-direct");
    let output = run(&[
        "learn",
        models_dir().join("fig3.model").to_str().unwrap(),
        "--out-dir",
        direct_dir.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let output = run(&[
        "learn",
        path.to_str().unwrap(),
        "--frozen",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");

    let direct = discourse_sheaf::model::parse_model(
        &std::fs::read_to_string(direct_dir.join("fig3.learn.final.model")).unwrap(),
    )
    .unwrap();
    let inverted = discourse_sheaf::model::parse_model(
        &std::fs::read_to_string(dir.join("inverted.learn.final.model")).unwrap(),
    )
    .unwrap();
    for (key, m) in direct.sheaf.restrictions() {
        assert_eq!(m, &inverted.sheaf.restrictions()[key]);
    }
}
