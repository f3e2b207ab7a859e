use std::path::Path;
use std::process::{Command, Output};

fn wavefield(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavefield"))
        .args(args)
        .env("WAVEFIELD_CACHE", cache)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout(o)).unwrap()
}

#[test]
fn filters_json_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&wavefield(
        dir.path(),
        &["filters", "--order", "2", "--format", "json"],
    ));
    let h: Vec<f64> = v["h"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let s3 = 3f64.sqrt();
    let d = 4.0 * 2f64.sqrt();
    let expected = [
        (1.0 + s3) / d,
        (3.0 + s3) / d,
        (3.0 - s3) / d,
        (1.0 - s3) / d,
    ];
    assert_eq!(h.len(), 4);
    for (a, b) in h.iter().zip(expected) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn csv_floats_have_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&wavefield(dir.path(), &["filters", "--order", "1"]));
    assert!(out.contains("7.0710678118654757e-1"), "{out}");
}

#[test]
fn haar_dwt_forward_and_back() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("v.csv");
    std::fs::write(&input, "1\n1\n1\n1\n").unwrap();
    let fwd = stdout(&wavefield(
        dir.path(),
        &[
            "dwt",
            "--order",
            "1",
            "--levels",
            "1",
            "--direction",
            "forward",
            "--input",
            input.to_str().unwrap(),
        ],
    ));
    let values: Vec<f64> = fwd
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.parse().unwrap())
        .collect();
    let r2 = 2f64.sqrt();
    assert_eq!(values.len(), 4);
    for (a, b) in values.iter().zip([r2, r2, 0.0, 0.0]) {
        assert!((a - b).abs() < 1e-15);
    }
    let pyramid = dir.path().join("p.csv");
    std::fs::write(&pyramid, &fwd).unwrap();
    let back = stdout(&wavefield(
        dir.path(),
        &[
            "dwt",
            "--order",
            "1",
            "--levels",
            "1",
            "--direction",
            "inverse",
            "--input",
            pyramid.to_str().unwrap(),
        ],
    ));
    assert!(back.contains("# signal scale=0"));
    for v in back.lines().filter(|l| !l.starts_with('#')) {
        assert!((v.parse::<f64>().unwrap() - 1.0).abs() < 1e-15);
    }
}

#[test]
fn coeffs_verify_oracle_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&wavefield(
        dir.path(),
        &[
            "coeffs",
            "--order",
            "3",
            "--kind",
            "d",
            "--verify-oracle",
            "14",
            "--format",
            "json",
        ],
    ));
    assert!(v["oracle_max_deviation"].as_f64().unwrap() < 1e-4);
    assert!((v["derivative_scale_exponent"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!(dir.path().join("d-K3-s0-v1.coef").exists());
    // second run hits the cache and prints the same table
    let first = stdout(&wavefield(
        dir.path(),
        &["coeffs", "--order", "3", "--kind", "gamma3"],
    ));
    let second = stdout(&wavefield(
        dir.path(),
        &["coeffs", "--order", "3", "--kind", "gamma3"],
    ));
    assert_eq!(first, second);
}

#[test]
fn hamiltonian_one_mode_is_a_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let coo = dir.path().join("h.coo");
    let v = json(&wavefield(
        dir.path(),
        &[
            "hamiltonian",
            "--order",
            "3",
            "--scale",
            "0",
            "--modes",
            "1",
            "--nmax",
            "8",
            "--mass2",
            "1",
            "--lambda",
            "0",
            "--gamma",
            "1",
            "--eigs",
            "3",
            "--format",
            "json",
            "--dump-matrix",
            coo.to_str().unwrap(),
        ],
    ));
    let e: Vec<f64> = v["eigenvalue"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    for (n, x) in e.iter().enumerate() {
        assert!((x - n as f64).abs() < 1e-10, "{e:?}");
    }
    let header = std::fs::read_to_string(&coo).unwrap();
    assert!(header.starts_with("9 "));
}

#[test]
fn flow_writes_trajectory_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("m.coo");
    std::fs::write(&input, "2 4\n0 0 1\n0 1 0.1\n1 0 0.1\n1 1 2\n").unwrap();
    let log = dir.path().join("log.csv");
    let manifest = dir.path().join("runs.jsonl");
    let args = [
        "flow",
        "--input",
        input.to_str().unwrap(),
        "--generator",
        "diag",
        "--lambda-end",
        "10",
        "--log",
        log.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--format",
        "json",
    ];
    let v = json(&wavefield(dir.path(), &args));
    assert!(v["offdiag_frobenius"].as_f64().unwrap() < 1e-3);
    let lines: Vec<String> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(lines[0], "lambda,offdiag_frobenius,max_eigen_drift");
    assert!(lines.len() > 2);

    let again = stdout(&wavefield(dir.path(), &args));
    assert_eq!(again, serde_json::to_string_pretty(&v).unwrap() + "\n");
    let runs: Vec<serde_json::Value> = std::fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["subcommand"], "flow");
    assert_eq!(runs[0]["outputs"], runs[1]["outputs"]);
    assert_eq!(runs[0]["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn diagnose_emits_one_row_per_scale() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&wavefield(
        dir.path(),
        &[
            "diagnose",
            "--order",
            "2",
            "--scale",
            "3",
            "--probe",
            "projection",
            "--function",
            "gauss:48,4",
        ],
    ));
    let rows: Vec<(u32, f64)> = out
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('k'))
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(
        rows.iter().map(|r| r.0).collect::<Vec<_>>(),
        vec![0, 1, 2, 3]
    );
    assert!(rows.windows(2).all(|w| w[1].1 < w[0].1));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let usage = wavefield(dir.path(), &["transmogrify"]);
    assert_eq!(usage.status.code(), Some(2));
    let bad_flag = wavefield(dir.path(), &["filters", "--order", "2", "--colour"]);
    assert_eq!(bad_flag.status.code(), Some(2));
    let failure = wavefield(dir.path(), &["filters", "--order", "99"]);
    assert_eq!(failure.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&failure.stderr).starts_with("unsupported-order:"));
    let missing = wavefield(
        dir.path(),
        &[
            "dwt",
            "--order",
            "1",
            "--levels",
            "1",
            "--direction",
            "forward",
            "--input",
            "/nonexistent",
        ],
    );
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("io:"));
}
