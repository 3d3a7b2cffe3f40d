use std::path::Path;
use std::process::Command;

fn mutsel(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mutsel"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const CONSTANT: &str = "grid.n = 32\ncoeff.A = const(1)\ncoeff.r = const(2)\nkernel = blind(const(1))\nselection.p = 1\n";

#[test]
fn eig_passes_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "eig.conf",
        &format!("scenario = eig\n{CONSTANT}expect.lambda1 = -2\n"),
    );
    let out = dir.path().join("out");
    let (code, stdout, stderr) = mutsel(&["eig", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["all_pass"], true);
    assert_eq!(report["scenario"], "eig");
    assert!(out.join("report.json").exists());
    assert!(out.join("eigenfunction.csv").exists());
}

#[test]
fn failing_verdict_gives_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "eig.conf",
        &format!("{CONSTANT}expect.lambda1 = -3\n"),
    );
    let (code, stdout, _) = mutsel(&[
        "eig",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(stdout.contains("\"lambda1_matches\": false"));
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.conf", "grid.n = 32\ngrid.m = 4\n");
    let (code, _, stderr) = mutsel(&["steady", "--config", &cfg]);
    assert_eq!(code, 2);
    assert!(stderr.contains("line 2"), "{stderr}");
    let cfg = write(
        dir.path(),
        "other.conf",
        &format!("scenario = gap\n{CONSTANT}"),
    );
    let (code, _, stderr) = mutsel(&["eig", "--config", &cfg]);
    assert_eq!(code, 2);
    assert!(stderr.contains("gap"), "{stderr}");
}

#[test]
fn seed_flag_changes_hash_and_data() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        format!("{CONSTANT}dynamics.dt = 1e-2\ndynamics.t_end = 0.5\ndynamics.u0 = random\n");
    let cfg = write(dir.path(), "sim.conf", &text);
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let (code, stdout, stderr) = mutsel(&[
            "simulate",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(code, 0, "{stderr}");
        let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
        (
            v["config_hash"].as_str().unwrap().to_string(),
            std::fs::read(out.join("final.csv")).unwrap(),
        )
    };
    let a = run("1", "a");
    let b = run("1", "b");
    let c = run("2", "c");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
    assert_ne!(a.1, c.1);
}

#[test]
fn entropy_accepts_trajectory_file() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{CONSTANT}dynamics.dt = 1e-3\ndynamics.t_end = 0.5\ndynamics.record_every = 1\ndynamics.u0 = const(0.1) + cos(1, 0, 0.05)\noutput.snapshots = true\n"
    );
    let cfg = write(dir.path(), "e.conf", &text);
    let sim = dir.path().join("sim");
    assert_eq!(
        mutsel(&["simulate", "--config", &cfg, "--out", sim.to_str().unwrap()]).0,
        0
    );
    let traj = sim.join("snapshots.csv");
    let (_, stdout, stderr) = mutsel(&[
        "entropy",
        "--config",
        &cfg,
        "--traj",
        traj.to_str().unwrap(),
        "--out",
        dir.path().join("ent").to_str().unwrap(),
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap_or_else(|_| panic!("{stderr}"));
    assert_eq!(v["quantities"]["F_monotone"], true);
    assert_eq!(v["verdicts"]["gap_bound"], true);
}
