use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn diffpca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffpca"))
        .args(args)
        .env("DIFFPCA_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = diffpca(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_writes_a_small_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let spread = configs().join("spread_call.json");
    ok(&["generate", "--model", s(&spread), "--m", "4", "--out", s(dir.path())]);
    let text = fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0], "x_0,x_1,y,z_0,z_1");
    assert!(dir.path().join("dataset.meta.json").exists());
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["run"]["command"], "generate");
}

fn read_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn spread_dataset_matches_model_moments() {
    // Gaussian dynamics at t = 1: X_i ~ N(100, 20^2) with correlation 0.9
    let dir = tempfile::tempdir().unwrap();
    let spread = configs().join("spread_call.json");
    ok(&["generate", "--model", s(&spread), "--m", "16384", "--out", s(dir.path())]);
    let rows = read_rows(&dir.path().join("dataset.csv"));
    let m = rows.len() as f64;
    let (sd, rho) = (20.0, 0.9);
    let mean = |j: usize| rows.iter().map(|r| r[j]).sum::<f64>() / m;
    let (m0, m1) = (mean(0), mean(1));
    let cov = |a: usize, ma: f64, b: usize, mb: f64| rows.iter().map(|r| (r[a] - ma) * (r[b] - mb)).sum::<f64>() / (m - 1.0);
    for mj in [m0, m1] {
        assert!((mj - 100.0).abs() <= 4.0 * sd / m.sqrt(), "mean {mj}");
    }
    let var_se = sd * sd * (2.0 / (m - 1.0)).sqrt();
    for v in [cov(0, m0, 0, m0), cov(1, m1, 1, m1)] {
        assert!((v - sd * sd).abs() <= 4.0 * var_se, "variance {v}");
    }
    let c = rho * sd * sd;
    let cov_se = ((sd.powi(4) + c * c) / m).sqrt();
    let c01 = cov(0, m0, 1, m1);
    assert!((c01 - c).abs() <= 4.0 * cov_se, "covariance {c01}");
}

#[test]
fn spread_reports_swap_the_principal_axis() {
    let dir = tempfile::tempdir().unwrap();
    let spread = configs().join("spread_call.json");
    ok(&["generate", "--model", s(&spread), "--m", "4096", "--out", s(dir.path())]);
    let data = dir.path().join("dataset.csv");
    let mut loadings = Vec::new();
    for mode in ["classic", "differential"] {
        let out = dir.path().join(mode);
        ok(&["pca", "--data", s(&data), "--mode", mode, "--dim", "1", "--central", "--out", s(&out)]);
        let text = fs::read_to_string(out.join("eigen_report.csv")).unwrap();
        let col: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        loadings.push(col);
    }
    assert!(loadings[0][0] * loadings[0][1] > 0.0, "classic: {:?}", loadings[0]);
    assert!(loadings[1][0] * loadings[1][1] < 0.0, "differential: {:?}", loadings[1]);
}

#[test]
fn bermudan_loadings_are_written_per_forward() {
    let dir = tempfile::tempdir().unwrap();
    let berm = configs().join("bermudan_5f.json");
    ok(&["pca", "--model", s(&berm), "--exposure", "1", "--m", "1024", "--out", s(dir.path())]);
    let text = fs::read_to_string(dir.path().join("eigen_report.csv")).unwrap();
    let summary = read_json(&dir.path().join("pca_summary.json"));
    let p = summary["dim"].as_u64().unwrap() as usize;
    assert!(p >= 1);
    let lines: Vec<&str> = text.lines().collect();
    // one row per live forward, from the one fixing at 1y to the last
    assert_eq!(lines.len(), 1 + 16);
    assert!(lines[1].starts_with("F_1,"));
    assert_eq!(lines[0].split(',').count(), 1 + p);
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let basket = configs().join("basket_call.json");
    for dir in [&a, &b] {
        ok(&["generate", "--model", s(&basket), "--m", "64", "--seed", "5", "--out", s(dir.path())]);
        ok(&["pca", "--data", s(&dir.path().join("dataset.csv")), "--dim", "2", "--out", s(dir.path())]);
    }
    for file in ["dataset.csv", "encoder.json", "eigen_report.csv"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn bad_config_exits_with_a_named_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = read_json(&configs().join("basket_call.json"));
    doc["model"]["vols"] = json!([0.2, 0.2]);
    let path = dir.path().join("bad.json");
    fs::write(&path, doc.to_string()).unwrap();
    let out = diffpca(&["generate", "--model", s(&path), "--m", "4", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vols"));

    let missing = diffpca(&["lsm", "--out", s(dir.path())]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("model"));
}

#[test]
fn pca_finds_the_single_forward_axis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "model": {
            "type": "equity",
            "n_assets": 3,
            "spots": [100.0, 100.0, 100.0],
            "vols": [0.2, 0.2, 0.2],
            "correlation": [[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]],
            "dynamics": "normal",
            "rate": 0.0
        },
        "instrument": { "type": "forward", "asset": 2, "strike": 100.0, "maturity": 2.0 }
    });
    let path = dir.path().join("forward.json");
    fs::write(&path, cfg.to_string()).unwrap();
    ok(&["generate", "--model", s(&path), "--m", "128", "--out", s(dir.path())]);
    ok(&["pca", "--data", s(&dir.path().join("dataset.csv")), "--tol", "1e-9", "--out", s(dir.path())]);
    let summary = read_json(&dir.path().join("pca_summary.json"));
    assert_eq!(summary["dim"], 1, "{summary}");
    let report = fs::read_to_string(dir.path().join("eigen_report.csv")).unwrap();
    let loading: f64 = report.lines().nth(3).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((loading.abs() - 1.0).abs() < 1e-12, "{report}");
}

#[test]
fn regress_recovers_a_parabola() {
    let dir = tempfile::tempdir().unwrap();
    let m = 21;
    let mut csv = String::from("x_0,y,z_0\n");
    for i in 0..m {
        let x = -1.0 + 0.1 * i as f64;
        csv.push_str(&format!("{x},{},{}\n", x * x, 2.0 * x));
    }
    fs::write(dir.path().join("square.csv"), csv).unwrap();
    let meta = json!({
        "format_version": 1,
        "model_hash": "",
        "instrument_hash": "",
        "seed": 0,
        "m": m,
        "n": 1,
        "exposure": 0.0,
        "smoothing": 0.0,
        "labels": ["x_0"]
    });
    fs::write(dir.path().join("square.meta.json"), meta.to_string()).unwrap();
    let data = dir.path().join("square.csv");
    for extra in [&[][..], &["--differential"][..]] {
        let mut args = vec!["regress", "--data", s(&data), "--degree", "2", "--out", s(dir.path())];
        args.extend_from_slice(extra);
        ok(&args);
        let fit = read_json(&dir.path().join("regression.json"));
        let beta: Vec<f64> = serde_json::from_value(fit["model"]["beta"].clone()).unwrap();
        for (b, want) in beta.iter().zip([0.0, 0.0, 1.0]) {
            assert!((b - want).abs() < 1e-10, "{extra:?}: {beta:?}");
        }
    }
}

#[test]
fn bench_reports_timings() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["bench", "--cov-rows", "256", "--dim", "64", "--out", s(dir.path())]);
    let report = read_json(&dir.path().join("bench.json"));
    let timings = report["timings"].as_array().unwrap();
    for name in ["covariance", "eigen_jacobi"] {
        let t = timings.iter().find(|t| t["name"] == name).unwrap();
        assert!(t["seconds"].as_f64().unwrap() > 0.0, "{report}");
    }
}

#[test]
fn lsm_prices_the_bermudan_put_against_the_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let put = configs().join("bermudan_put.json");
    ok(&[
        "lsm", "--model", s(&put), "--m", "4096", "--m-price", "32768", "--lattice-steps", "1000", "--out", s(dir.path()),
    ]);
    let report = read_json(&dir.path().join("lsm_report.json"));
    let (price, se, lattice) = (report["price"].as_f64().unwrap(), report["stderr"].as_f64().unwrap(), report["lattice"].as_f64().unwrap());
    assert!((price - lattice).abs() <= 3.0 * se, "{price} +/- {se} vs {lattice}");
    assert_eq!(report["lattice_within_3_stderr"], true);
    assert!(dir.path().join("policy.json").exists());
}

#[test]
fn manifest_replays_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let spread = configs().join("spread_call.json");
    ok(&["generate", "--model", s(&spread), "--m", "32", "--seed", "9", "--out", s(a.path())]);
    ok(&["run", s(&a.path().join("manifest.json")), "--out", s(b.path())]);
    assert_eq!(
        fs::read(a.path().join("dataset.csv")).unwrap(),
        fs::read(b.path().join("dataset.csv")).unwrap()
    );
}

#[test]
fn json_outputs_round_trip_through_library_types() {
    let dir = tempfile::tempdir().unwrap();
    let put = configs().join("bermudan_put.json");
    ok(&["pca", "--model", s(&put), "--exposure", "0.25", "--m", "512", "--out", s(dir.path())]);
    ok(&["lsm", "--model", s(&put), "--m", "1024", "--m-price", "1024", "--out", s(dir.path())]);
    let check = |file: &str, reparse: &dyn Fn(&str) -> Value| {
        let text = fs::read_to_string(dir.path().join(file)).unwrap();
        assert_eq!(reparse(&text), serde_json::from_str::<Value>(&text).unwrap(), "{file}");
    };
    check("encoder.json", &|t| serde_json::to_value(serde_json::from_str::<diffpca::dimred::Encoder>(t).unwrap()).unwrap());
    check("policy.json", &|t| serde_json::to_value(serde_json::from_str::<diffpca::lsm::ExercisePolicy>(t).unwrap()).unwrap());
    let manifest = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    let replay = tempfile::tempdir().unwrap();
    ok(&["run", s(&dir.path().join("manifest.json")), "--out", s(replay.path())]);
    assert_eq!(fs::read(dir.path().join("policy.json")).unwrap(), fs::read(replay.path().join("policy.json")).unwrap());
    assert!(manifest.contains("\"command\": \"lsm\""), "{manifest}");
}
