use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn bohmvar(args: &[&str], out: &Path) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_bohmvar"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    status.status.code().unwrap_or(-1)
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn decompose_ground_state_momentum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(bohmvar(&["decompose", "--state", "ho1d:n=0", "--op", "momentum"], &out), 0);
    let r = report(&out);
    for key in ["mean", "var_q", "var_b", "q_term", "deficit", "residual", "h6", "method"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert!((r["var_q"].as_f64().unwrap() - 0.5).abs() < 1e-10);
    assert_eq!(r["identity_holds"], true);
    assert_eq!(r["status"], "ok");
    let text = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(text.contains("5.0000000000000"));
    assert_eq!(csv_rows(&out.join("eps_sequence.csv")).len(), 13);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    assert_eq!(bohmvar(&["decompose", "--state", "ho1d:n=zero", "--op", "momentum"], &p.join("a")), 1);
    assert_eq!(report(&p.join("a"))["errors"][0]["kind"], "descriptor");
    assert_eq!(bohmvar(&["decompose", "--state", "ho1d", "--quad.bogus", "1"], &p.join("b")), 1);
    assert_eq!(bohmvar(&["decompose", "--state", "ho1d", "--op", "spin_z"], &p.join("c")), 1);
    // a coarse ε schedule that never settles
    let coarse = ["--quad.eps0", "0.3", "--quad.eps_ratio", "0.9"];
    let mut args = vec!["decompose", "--state", "ho1d:n=1", "--op", "momentum"];
    args.extend(coarse);
    assert_eq!(bohmvar(&args, &p.join("d")), 3);
    assert_eq!(report(&p.join("d"))["status"], "divergence");
    // same schedule with the convergence check disabled: the excluded
    // neighbourhood now breaks the identity
    args.extend(["--quad.tol_conv", "10"]);
    assert_eq!(bohmvar(&args, &p.join("e")), 2);
    assert_eq!(report(&p.join("e"))["identity_holds"], false);
}

#[test]
fn config_file_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# ground state\nstate = ho1d:n=2\nop = kinetic\nquad.points = 40\nseed = 99\n").unwrap();
    let out = tmp.path().join("run");
    let code = bohmvar(
        &["decompose", "--config", cfg.to_str().unwrap(), "--quad.points", "36"],
        &out,
    );
    assert_eq!(code, 0);
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["quad.points"], "36");
    assert_eq!(m["config"]["state"], "ho1d:n=2");
    assert_eq!(m["config"]["mc.seed"], "99");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    let keys = m["config"].as_object().unwrap();
    for (k, _) in bohmvar::cli::KEYS {
        assert!(keys.contains_key(*k), "manifest lacks {k}");
    }
    assert_eq!(report(&out)["method"]["scheme"]["points"], 36);
}

#[test]
fn reports_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = tmp.path().join(name);
        let code = bohmvar(
            &[
                "decompose",
                "--state",
                "ho2d_angular:l=1",
                "--op",
                "momentum:axis=1",
                "--mc.n",
                "5000",
                "--workers",
                workers,
            ],
            &out,
        );
        assert_eq!(code, 0);
        fs::read(out.join("report.json")).unwrap()
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "2"));
}

#[test]
fn momentum_sweep_over_excitation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let code = bohmvar(
        &["sweep", "--state", "ho1d:n={n}", "--op", "momentum|position_1", "--sweep.values", "0..4"],
        &out,
    );
    assert_eq!(code, 0);
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 10);
    for r in &rows {
        let n: f64 = r[1].parse().unwrap();
        let var_b: f64 = r[7].parse().unwrap();
        let q: f64 = r[8].parse().unwrap();
        match &r[3] {
            "momentum" => {
                assert!((q - (n + 0.5)).abs() < 1e-5);
                assert!(var_b.abs() < 1e-12);
            }
            _ => {
                assert!((var_b - (n + 0.5)).abs() < 1e-8);
                assert_eq!(q, 0.0);
            }
        }
    }
}

#[test]
fn spin_angle_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("spin");
    let code = bohmvar(
        &["sweep", "--state", "spinor:theta={theta}", "--op", "spin_z", "--sweep.param", "theta", "--sweep.values", "0..1.5:4"],
        &out,
    );
    assert_eq!(code, 0);
    for r in csv_rows(&out.join("sweep.csv")) {
        let t: f64 = r[1].parse().unwrap();
        let deficit: f64 = r[9].parse().unwrap();
        let expected = (t.sin() * t.cos()).powi(2);
        assert!((deficit - expected).abs() < 1e-8, "θ = {t}: {deficit} vs {expected}");
        assert!(r[7].parse::<f64>().unwrap().abs() < 1e-12);
        assert_eq!(r[8].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn sweep_rows_record_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let code = bohmvar(&["sweep", "--state", "ho1d:n={n}", "--op", "momentum", "--sweep.values", "1,-1"], &out);
    assert_eq!(code, 0);
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(&rows[0][4], "ok");
    assert_eq!(&rows[1][4], "descriptor");
    assert!(!rows[1][17].is_empty());
}

#[test]
fn other_tasks_write_their_files() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    let cases: [(&[&str], &str, &[&str]); 6] = [
        (&["pointwise-check", "--state", "ho2d_angular:l=-1", "--op", "kinetic", "--pointwise.n", "50"], "pw", &["pointwise.csv"]),
        (&["nodal", "--state", "ho1d:n=3", "--nodal.samples", "5000"], "nodal", &["nodes.csv", "volume.csv"]),
        (&["uncertainty", "--state", "ho1d:n=1"], "unc", &["uncertainty.csv"]),
        (&["qp-relation", "--state", "hydrogen_1s"], "qp", &[]),
        (&["trajectories", "--state", "ho2d_angular:l=1", "--traj.n", "200", "--traj.horizon", "1"], "ens", &["paths.csv", "equivariance.csv"]),
        (
            &["trajectories", "--state", "ho1d:n=1", "--traj.x0", "0.3", "--traj.op", "hamiltonian", "--traj.horizon", "2"],
            "one",
            &["paths.csv", "weak_values.csv"],
        ),
    ];
    for (args, name, files) in cases {
        let out = p.join(name);
        assert_eq!(bohmvar(args, &out), 0, "{args:?}");
        assert!(out.join("manifest.json").exists());
        for f in files {
            assert!(out.join(f).exists(), "{name}: {f}");
        }
    }
    let nodal = report(&p.join("nodal"));
    assert_eq!(nodal["nodes"].as_array().unwrap().len(), 3);
    assert_eq!(nodal["k"], 1);
    for s in nodal["synthetic"].as_array().unwrap() {
        assert_eq!(s["agrees"], true);
    }
    for r in csv_rows(&p.join("one").join("weak_values.csv")) {
        assert!((r[1].parse::<f64>().unwrap() - 1.5).abs() < 1e-10);
    }
    let qp = report(&p.join("qp"));
    assert!((qp["q_p"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(qp["holds"], true);
    let head = fs::read_to_string(p.join("ens").join("paths.csv")).unwrap();
    assert!(head.starts_with("t,x1,x2,id"));
}
