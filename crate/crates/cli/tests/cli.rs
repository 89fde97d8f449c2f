use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn reachguard(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reachguard"))
        .args(args)
        .current_dir(dir)
        .env_remove("REACHGUARD_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn header(path: &Path) -> String {
    let bytes = fs::read(path).unwrap();
    let end = bytes.windows(2).position(|w| w == b"\n\n").unwrap();
    String::from_utf8(bytes[..end].to_vec()).unwrap()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(reachguard(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(reachguard(dir.path(), &["safeset"]).status.code(), Some(1));
    let bad_param = reachguard(dir.path(), &["safeset", "--nodes", "9", "--tau", "-1", "--out", "f.vfield"]);
    assert_eq!(bad_param.status.code(), Some(1));
    assert!(reachguard(dir.path(), &["--help"]).status.success());
}

#[test]
fn missing_or_broken_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(reachguard(dir.path(), &["estimate", "nope.csv"]).status.code(), Some(2));
    fs::write(dir.path().join("bad.csv"), "t,x_rel,v_rel,v_av,a_av\n0,10,0,5,0\n0,10,0,5,0\n").unwrap();
    let o = reachguard(dir.path(), &["estimate", "bad.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 3"));
    let cfg = reachguard(dir.path(), &["safeset", "--config", "absent.cfg", "--out", "f.vfield"]);
    assert_eq!(cfg.status.code(), Some(2));
}

#[test]
fn unconverged_solve_exits_three_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let strict = reachguard(dir.path(), &["safeset", "--nodes", "9", "--t-max", "0.5", "--out", "f.vfield"]);
    assert_eq!(strict.status.code(), Some(3));
    let relaxed = reachguard(
        dir.path(),
        &["safeset", "--nodes", "9", "--t-max", "0.5", "--allow-unconverged", "--out", "g.vfield"],
    );
    assert!(relaxed.status.success());
    assert!(header(&dir.path().join("g.vfield")).contains("converged: false"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "# test run\ntau = 0.8\nr = 25\nnodes = 9\nt_max = 0.5\n").unwrap();
    let o = reachguard(
        dir.path(),
        &["safeset", "--config", "run.cfg", "--tau", "0.3", "--allow-unconverged", "--out", "f.vfield"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let h = header(&dir.path().join("f.vfield"));
    assert!(h.contains("\ntau: 0.3\n"), "{h}");
    assert!(h.contains("\nr: 25\n"), "{h}");
    assert!(h.contains("run.nodes: 9 9 9"), "{h}");
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_reachguard"))
        .args(["safeset", "--nodes", "9", "--t-max", "0.5", "--allow-unconverged", "--out", "f.vfield"])
        .current_dir(dir.path())
        .env("REACHGUARD_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    let zero = Command::new(env!("CARGO_BIN_EXE_reachguard"))
        .args(["--threads", "0", "synth", "--scenario", "cruise", "--out", "t.csv"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(zero.status.code(), Some(1));
}

#[test]
fn synth_estimate_check_and_slice_work_together() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (scenario, out) in [("cruise", "cruise.csv"), ("hard-brake", "brake.csv")] {
        assert!(reachguard(d, &["synth", "--scenario", scenario, "--seed", "2", "--duration", "120", "--out", out])
            .status
            .success());
    }
    assert!(fs::read_to_string(d.join("cruise.csv"))
        .unwrap()
        .starts_with("# units: s,m,m/s,m/s,m/s^2\nt,x_rel,v_rel,v_av,a_av\n"));

    let est = reachguard(d, &["estimate", "cruise.csv", "brake.csv"]);
    assert!(est.status.success());
    let text = stdout(&est);
    for key in ["u_min:", "u_max:", "d_min:", "d_max:", "min_time_headway:"] {
        assert!(text.contains(key), "{text}");
    }

    let solve = reachguard(
        d,
        &[
            "safeset",
            "--nodes",
            "11",
            "--allow-unconverged",
            "--bounds-from",
            "cruise.csv",
            "brake.csv",
            "--out",
            "f.vfield",
        ],
    );
    assert!(solve.status.success(), "{}", String::from_utf8_lossy(&solve.stderr));
    assert!(header(&d.join("f.vfield")).contains("run.bounds_source: from-data cruise.csv,brake.csv"));

    let check = reachguard(d, &["check", "--field", "f.vfield", "--violations", "v.csv", "cruise.csv"]);
    assert!(check.status.success());
    assert!(stdout(&check).contains("in_domain:"));
    assert!(fs::read_to_string(d.join("v.csv")).unwrap().starts_with("trace,index,x_rel,v_rel,v_av,value"));

    let slice = reachguard(d, &["slice", "--field", "f.vfield", "--v-av", "5,20", "--out-dir", "slices"]);
    assert!(slice.status.success());
    for v in ["5", "20"] {
        let body = fs::read_to_string(d.join("slices").join(format!("slice_vav_{v}.csv"))).unwrap();
        assert!(body.contains("x_rel,v_rel\n"), "{body}");
    }
    assert_eq!(
        reachguard(d, &["slice", "--field", "f.vfield", "--v-av", "45", "--out-dir", "slices"]).status.code(),
        Some(1)
    );
}

#[test]
fn simulate_writes_series_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = reachguard(
        d,
        &["simulate", "--lead-steps", "5:30,10:30", "--gap", "12", "--variant", "modified", "--out", "sim.csv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.join("sim.csv")).unwrap();
    assert!(csv.contains("# variant: modified"));
    assert!(csv.contains("\nt,x_rel,v_rel,v_av,v_cmd,u\n"));
    let metrics = stdout(&o);
    assert_eq!(metrics.matches("plateau:").count(), 2, "{metrics}");
    assert!(metrics.contains("collision: false"));

    let missing = reachguard(d, &["simulate", "--lead-speed", "10", "--duration", "5", "--out", "x.csv"]);
    assert_eq!(missing.status.code(), Some(1));
}
