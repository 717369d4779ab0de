use std::path::Path;
use std::process::Command;

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(config: &Path, extra: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_cloaklab"))
        .arg("run")
        .arg(config)
        .args(extra)
        .env("CLOAKLAB_LOG", "warn")
        .status()
        .unwrap()
        .code()
        .unwrap()
}

#[test]
fn empty_eps_list_is_a_validation_error() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.toml", "eps_list = []\nsuite = \"capacity\"\n");
    assert_eq!(run(&c, &[]), 3);
}

#[test]
fn unknown_suite_is_a_parse_error() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.toml", "eps_list = [0.1]\nsuite = \"everything\"\n");
    assert_eq!(run(&c, &[]), 2);
    let ok = write(d.path(), "ok.toml", "eps_list = [0.1]\n");
    assert_eq!(run(&ok, &["--suite", "everything"]), 2);
    assert_eq!(run(&d.path().join("missing.toml"), &[]), 2);
}

#[test]
fn capacity_suite_writes_csv_and_summary() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("out");
    let c = write(d.path(), "c.toml", "eps_list = [0.1, 0.05]\nsuite = \"capacity\"\n");
    assert_eq!(run(&c, &["--out", out.to_str().unwrap()]), 0);
    let csv = std::fs::read_to_string(out.join("capacity.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epsilon,capacity,analytic,rel_err"));
    assert_eq!(lines.count(), 2);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["suite"], "capacity");
    assert!(summary["runtime_seconds"].as_f64().unwrap() >= 0.0);
    let verdicts = summary["verdicts"].as_array().unwrap();
    assert!(!verdicts.is_empty());
    for v in verdicts {
        assert_eq!(v["pass"], true, "{v}");
        for key in ["name", "value", "tolerance"] {
            assert!(v.get(key).is_some());
        }
    }
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let d = tempfile::tempdir().unwrap();
    let body = "eps_list = [0.4, 0.2]\nmesh_h = 0.05\nseed = 9\nlambda_list = [-1.0]\nsuite = \"all\"\n";
    let c = write(d.path(), "c.toml", body);
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    assert_eq!(run(&c, &["--out", a.to_str().unwrap(), "--threads", "1"]), 0);
    assert_eq!(run(&c, &["--out", b.to_str().unwrap(), "--threads", "4"]), 0);
    for name in ["sweep.csv", "resolvent.csv", "spectrum.csv", "capacity.csv", "conductivity.csv", "surgery.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let headers = [
        ("sweep.csv", "epsilon,h,l2_error,sup_error"),
        ("spectrum.csv", "epsilon,index,eigenvalue"),
        ("conductivity.csv", "r_tilde,sqrt_det,sigma_rr,sigma_thth,sigma_ss"),
        ("surgery.csv", "r,partial_name,max_abs"),
    ];
    for (name, header) in headers {
        let s = std::fs::read_to_string(a.join(name)).unwrap();
        assert_eq!(s.lines().next(), Some(header));
    }
}

#[test]
fn json_config_is_accepted() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    let c = write(
        d.path(),
        "c.json",
        &format!(r#"{{"eps_list": [0.1], "suite": "surgery", "output_dir": {:?}}}"#, out.to_str().unwrap()),
    );
    assert_eq!(run(&c, &[]), 0);
    assert!(out.join("surgery.csv").exists());
}

#[test]
fn solve_near_the_spectrum_is_a_numerical_failure() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    let c = write(d.path(), "c.toml", "eps_list = [0.4]\nmesh_h = 0.1\nk2 = 1.0\nsuite = \"sweep\"\n");
    assert_eq!(run(&c, &["--out", out.to_str().unwrap()]), 4);
}

#[test]
fn failed_verdict_exits_with_one() {
    // eps barely shrinks, so the final error is not below half the first
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    let c = write(d.path(), "c.toml", "eps_list = [0.4, 0.35]\nmesh_h = 0.08\nsuite = \"sweep\"\n");
    assert_eq!(run(&c, &["--out", out.to_str().unwrap()]), 1);
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let failed: Vec<&str> = s["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|v| v["pass"] == false)
        .map(|v| v["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["sweep_final_below_half"]);
}

#[test]
fn three_torus_capacity() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    let body = "manifold = \"t3\"\neps_list = [0.1]\nsuite = \"capacity\"\n[link]\naxis = 2\nbase = [[3.0, 3.0]]\n";
    let c = write(d.path(), "c.toml", body);
    assert_eq!(run(&c, &["--out", out.to_str().unwrap()]), 0);
}

#[test]
fn shipped_example_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let cfg = cloaklab_cli::config::ExperimentConfig::load(&path).unwrap();
    cloaklab_cli::config::Experiment::new(cfg).unwrap();
}
