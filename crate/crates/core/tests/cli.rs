use std::fs;
use std::path::Path;

use fnls_core::cli::{dispatch, run_config_hash, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK};
use fnls_core::io::{config_from_str, read_field_with_meta, Override};
use serde_json::Value;

fn run(args: &[&str]) -> i32 {
    dispatch(std::iter::once("fnls").chain(args.iter().copied()))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(run(&["frobnicate"]), EXIT_INVALID);
    assert_eq!(run(&[]), EXIT_INVALID);
    assert_eq!(run(&["--help"]), EXIT_OK);
}

#[test]
fn groundstate_writes_field_and_report_then_check_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.field");
    assert_eq!(run(&["groundstate", "--d", "1", "--s", "0.5", "--alpha", "2", "--out", path_str(&q)]), EXIT_OK);
    // The default box truncates the x^{-2} tail at the 1e-3 level; identity checks use a wider one.
    assert_eq!(
        run(&["groundstate", "--d", "1", "--s", "0.5", "--alpha", "2", "--L", "512", "--N", "16384", "--out", path_str(&q)]),
        EXIT_OK
    );
    let report = json(&dir.path().join("q.json"));
    let payload = &report["payload"];
    assert_eq!(payload["solve"]["converged"], Value::Bool(true));
    assert_eq!(payload["pohozaev"]["passes"], Value::Bool(true), "{payload}");
    assert!(payload["critical_mass"].as_f64().unwrap() > 2.4);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("q.json.timing.json").exists());

    let (_, meta) = read_field_with_meta(&q).unwrap();
    assert_eq!((meta.s_used, meta.alpha_used), (Some(0.5), Some(2.0)));

    let out = dir.path().join("check.json");
    assert_eq!(run(&["check", "pohozaev", path_str(&q), "--report", path_str(&out)]), EXIT_OK);
    let check = json(&out);
    for key in ["r1", "r2"] {
        assert!(check["payload"]["pohozaev"][key].as_f64().unwrap() < 1e-3, "{check}");
    }
    assert_eq!(check["payload"]["pohozaev"]["passes"], Value::Bool(true));
    let out_all = dir.path().join("all.json");
    assert_eq!(run(&["check", "all", path_str(&q), "--report", path_str(&out_all)]), EXIT_OK);
    let all = &json(&out_all)["payload"];
    for key in ["pohozaev", "gn", "decay", "mass", "energy"] {
        assert!(!all[key].is_null(), "missing {key}");
    }
    assert!(all["decay"]["exponent"].is_number() && all["decay"]["window"].is_array());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = d.path().join("m.field");
        let code = run(&[
            "minimize", "--d", "1", "--s", "0.5", "--alpha", "1", "--a", "2", "--N", "1024", "--L", "64", "--potential",
            "periodic-power", "--starts", "2", "--seed", "7", "--out", path_str(&out),
        ]);
        assert_eq!(code, EXIT_OK);
    }
    for name in ["m.field", "m.json"] {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
    let report = json(&dirs[0].path().join("m.json"));
    assert!(report["payload"]["energy_per_mass"].as_f64().unwrap().is_finite());
    assert_eq!(report["payload"]["starts"].as_array().unwrap().len(), 3);
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.field");
    // Well exponent at the d + 4s bound.
    assert_eq!(
        run(&["minimize", "--d", "1", "--s", "0.5", "--a", "1", "--potential", "periodic-power", "--p", "3", "--out", path_str(&out)]),
        EXIT_INVALID
    );
    // Exponent above the Sobolev-critical value.
    assert_eq!(run(&["groundstate", "--d", "2", "--s", "0.5", "--alpha", "5", "--out", path_str(&out)]), EXIT_INVALID);
    assert_eq!(run(&["groundstate", "--d", "3", "--s", "0.5", "--out", path_str(&out)]), EXIT_INVALID);
    assert_eq!(run(&["minimize", "--d", "1", "--s", "0.5", "--out", path_str(&out)]), EXIT_INVALID);
    assert_eq!(run(&["groundstate", "--config", "/nonexistent/run.toml"]), EXIT_INVALID);
    assert_eq!(run(&["check", "pohozaev", "/nonexistent/q.field"]), EXIT_INVALID);
    assert!(!out.exists());
}

#[test]
fn vanishing_minimization_reports_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.field");
    let code = run(&["minimize", "--d", "1", "--s", "0.5", "--a", "1.0", "--N", "1024", "--L", "64", "--out", path_str(&out)]);
    assert_eq!(code, EXIT_NOT_CONVERGED);
    let report = json(&dir.path().join("v.json"));
    assert!(report["payload"]["solve"]["stop_reason"].as_str().unwrap().contains("vanish"), "{report}");
}

#[test]
fn spectrum_reports_a_gap_for_the_canonical_well() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spec.field");
    let code = run(&["spectrum", "--d", "1", "--s", "0.5", "--N", "1024", "--L", "16", "--potential", "periodic-power", "--out", path_str(&out)]);
    assert_eq!(code, EXIT_OK);
    let report = json(&dir.path().join("spec.json"));
    let gap = &report["payload"]["gap"];
    assert_eq!(gap["holds"], Value::Bool(true));
    assert!(gap["margin"].as_f64().unwrap() > 0.04);
}

#[test]
fn sweep_from_config_writes_csv_summary_and_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(
        &cfg,
        "[problem]\nd = 1\ns = 0.5\n\n[potential]\nkind = \"periodic_power\"\nkappa = 1.0\np = 2.0\n\n[sweep]\nj_range = [7, 8]\nreference_n = 16384\nreference_l = 1024.0\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&["sweep", "--config", path_str(&cfg), "--out", path_str(&out)]), EXIT_OK);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("a,beta_a,eps_a,energy,kinetic,potential_integral,nonlinear,x_a"), "{header}");
    assert!(header.ends_with("profile_l2_dist,profile_hs_dist,grid_N,grid_L,converged"), "{header}");
    assert_eq!(csv.lines().count(), 3);
    let summary = json(&out.join("sweep_summary.json"));
    assert_eq!(summary["payload"]["records"].as_array().unwrap().len(), 2);
    assert!(summary["payload"]["summary"]["lambda0_predicted"].as_f64().unwrap() > 0.9);
    assert!(out.join("last_profile.field").exists());
}

#[test]
fn config_hash_tracks_meaning_not_spelling() {
    let base = "[problem]\nd = 1\ns = 0.5\nalpha = \"critical\"\na = \"0.9 a_star\"\n[grid]\nN = 2048\nL = 64.0\n";
    let reordered = "[grid]\nL = 64.0\nN = 2048\n[problem]\na = \"0.9*a_star\"\nalpha = 2.0\ns = 0.5\nd = 1\n[output]\ndirectory = \"elsewhere\"\n";
    let h = |text: &str, o: &[Override]| run_config_hash("minimize", &config_from_str(text, o).unwrap()).unwrap();
    assert_eq!(h(base, &[]), h(reordered, &[]));
    assert_ne!(h(base, &[]), h(base, &[Override::new("problem.s", 0.6)]));
    assert_ne!(h(base, &[]), h(base, &[Override::new("grid.N", 4096i64)]));
    assert_ne!(h(base, &[]), h(base, &[Override::new("solver.rng_seed", 3i64)]));
    assert_ne!(h(base, &[]), h(base, &[Override::new("problem.a", 1.0)]));
}
