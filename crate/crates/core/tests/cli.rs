use std::path::Path;
use std::process::{Command, Output};

use sweepsim::catalog;
use sweepsim::cli::scenario::{builtin, InitialSpec, PerturbationSpec, Scenario};
use sweepsim::oracles::Oracle;

fn sweepsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sweepsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn sweepsim_threads(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sweepsim"))
        .args(args)
        .env("SWEEPSIM_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_scenario(dir: &Path, s: &Scenario) -> String {
    let p = dir.join(format!("{}.json", s.name));
    std::fs::write(&p, s.to_json()).unwrap();
    p.to_str().unwrap().to_string()
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

#[test]
fn solve_is_byte_identical_across_runs_seeds_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let base = ["solve", "example3", "--n-steps", "400", "--out"];
    let run = |dir: &Path, seed: &str, threads: &str| {
        let mut args = base.to_vec();
        args.push(dir.to_str().unwrap());
        args.extend(["--seed", seed]);
        let o = sweepsim_threads(&args, threads);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    };
    run(&a, "0", "1");
    run(&b, "0", "2");
    run(&c, "17", "1");
    for f in ["trajectory.csv", "residuals.csv", "metadata.json"] {
        assert_eq!(read(&a, f), read(&b, f), "{f} depends on the thread count");
    }
    assert_eq!(read(&a, "trajectory.csv"), read(&c, "trajectory.csv"));
    let csv = String::from_utf8(read(&a, "trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1,x2"));
    assert_eq!(lines.next(), Some("0,0,1"));
    assert_eq!(csv.lines().count(), 402);
}

#[test]
fn reach_endpoints_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let o = sweepsim_threads(
            &["reach", "example4", "--samples", "12", "--n-steps", "300", "--out", dir.to_str().unwrap()],
            threads,
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(read(&a, "endpoints.csv"), read(&b, "endpoints.csv"));
    let csv = String::from_utf8(read(&a, "endpoints.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("index,x0_1,x0_2,xT_1,xT_2"));
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn scenario_file_matches_the_builtin() {
    let tmp = tempfile::tempdir().unwrap();
    let s = builtin("example2-interior").unwrap();
    let file = write_scenario(tmp.path(), &s);
    let text = std::fs::read_to_string(&file).unwrap();
    assert_eq!(Scenario::from_json(&text).unwrap().to_json(), text);

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (arg, dir) in [(file.as_str(), &a), ("example2-interior", &b)] {
        let o = sweepsim(&["solve", arg, "--n-steps", "300", "--out", dir.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(read(&a, "trajectory.csv"), read(&b, "trajectory.csv"));
}

#[test]
fn unknown_keys_in_a_file_are_validation_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value =
        serde_json::from_str(&builtin("example1").unwrap().to_json()).unwrap();
    v["solver"]["n_step"] = serde_json::json!(10);
    let p = tmp.path().join("bad.json");
    std::fs::write(&p, v.to_string()).unwrap();
    let o = sweepsim(&["solve", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("n_step"), "{}", stderr(&o));
}

#[test]
fn exit_codes() {
    assert_eq!(code(&sweepsim(&["certify", "example1", "--samples", "500"])), 0);
    assert_eq!(code(&sweepsim(&["solve", "no-such-scenario"])), 2);
    assert_eq!(code(&sweepsim(&["solve", "example1", "--n-steps", "1"])), 2);
    assert_eq!(code(&sweepsim(&["solve", "example1", "--bogus"])), 2);
    assert_eq!(code(&sweepsim(&["converge", "example1", "--n-list", "100"])), 2);
    assert_eq!(code(&sweepsim(&["converge", "static-square"])), 2);
    assert_eq!(code(&sweepsim_threads(&["certify", "example1"], "zero")), 2);
    // the shell is not 1e-6-hypomonotone
    assert_eq!(code(&sweepsim(&["certify", "shell", "--samples", "500"])), 4);
    let o = sweepsim(&["solve", "shell"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("A3"), "{}", stderr(&o));
}

#[test]
fn projection_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = builtin("static-square").unwrap();
    s.name = "disk-under-gravity".into();
    s.family = catalog::disk_family(1.0);
    s.perturbation = PerturbationSpec::Gravity { g0: 50.0 };
    s.x0 = InitialSpec::Point(vec![0.0, 0.0]);
    s.solver.tol = Some(1e-300);
    let file = write_scenario(tmp.path(), &s);
    let o = sweepsim(&["solve", &file]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("converge"), "{}", stderr(&o));
}

#[test]
fn wrong_reference_solution_exits_5() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = builtin("example2-interior").unwrap();
    s.name = "mismatched".into();
    s.oracle = Some(Oracle::Example2 { x0: [-0.5, 1.0] });
    let file = write_scenario(tmp.path(), &s);
    let o = sweepsim(&["converge", &file, "--n-list", "100,200,400"]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    let out: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(out["fitted_order"].as_f64().unwrap() < 0.9);
}

#[test]
fn infeasible_start_outside_the_heal_radius() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = builtin("example1").unwrap();
    s.name = "far-start".into();
    s.x0 = InitialSpec::Point(vec![3.0, 0.0]);
    s.solver.heal_radius = Some(0.1);
    let file = write_scenario(tmp.path(), &s);
    let o = sweepsim(&["solve", &file]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("x0 violates constraint f_1"), "{}", stderr(&o));

    // inside the radius the start is projected and the run succeeds
    s.solver.heal_radius = Some(5.0);
    let file = write_scenario(tmp.path(), &s);
    let out = tmp.path().join("healed");
    let o = sweepsim(&["solve", &file, "--n-steps", "50", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta: serde_json::Value = serde_json::from_slice(&read(&out, "metadata.json")).unwrap();
    assert!(meta["healed"].as_f64().unwrap() > 0.0);
}

#[test]
fn converge_writes_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sweepsim(&[
        "converge",
        "example3",
        "--n-list",
        "100,200,400",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = String::from_utf8(read(tmp.path(), "convergence.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "n,h,sup_error,endpoint_error");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("100,0.01,"));
}
