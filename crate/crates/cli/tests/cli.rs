//! Drives the `keyrate` binary end to end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tempfile::TempDir;

use keyrate_cli::config::RunConfig;

fn keyrate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keyrate")).args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn read(path: &Path) -> Csv {
        let mut r = csv::Reader::from_path(path).unwrap();
        let header = r.headers().unwrap().iter().map(String::from).collect();
        let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
        Csv { header, rows }
    }

    fn get(&self, row: usize, col: &str) -> &str {
        let k = self.header.iter().position(|h| h == col).unwrap_or_else(|| panic!("no column {col}"));
        &self.rows[row][k]
    }

    fn num(&self, row: usize, col: &str) -> f64 {
        self.get(row, col).parse().unwrap_or_else(|_| panic!("{col} = {:?}", self.get(row, col)))
    }
}

fn run_ok(args: &[&str]) -> Output {
    let out = keyrate(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn minimal_single_point() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"protocol": {"alpha": 0.6}, "channel": {"distance_km": 0, "xi": 0}, "subspace_N": 10}"#);
    let out = dir.path().join("o.csv");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let csv = Csv::read(&out);
    assert_eq!(csv.rows.len(), 1);
    assert_eq!(csv.get(0, "status"), "ok");
    assert_eq!(csv.num(0, "W"), 0.0);
    assert_eq!(csv.num(0, "delta_correction"), 0.0);
    assert_eq!(csv.num(0, "key_rate_clamped"), csv.num(0, "key_rate").max(0.0));
}

#[test]
fn distance_sweep_is_nonincreasing() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.json",
        r#"{"protocol": {"alpha": 0.7}, "channel": {"distance_km": 0, "xi": 0.01}, "subspace_N": 10,
            "solver": {"max_fw_iterations": 15},
            "sweep": {"variable": "distance_km", "grid": [0, 10, 20, 30, 40, 50]}}"#,
    );
    let out = dir.path().join("o.csv");
    run_ok(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let csv = Csv::read(&out);
    assert_eq!(csv.rows.len(), 6);
    for k in 0..6 {
        assert_eq!(csv.get(k, "status"), "ok");
        assert_eq!(csv.num(k, "distance_km"), 10.0 * k as f64);
    }
    for k in 1..6 {
        assert!(csv.num(k, "key_rate") <= csv.num(k - 1, "key_rate") + 1e-4, "row {k}");
    }
}

#[test]
fn parallel_sweep_matches_serial() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.json",
        r#"{"protocol": {"alpha": 0.7}, "channel": {"distance_km": 5, "xi": 0.01}, "subspace_N": 3,
            "sweep": {"variable": "xi", "grid": [0.0, 0.01, 0.02, 0.04]}}"#,
    );
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    run_ok(&["sweep", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--jobs", "1"]);
    run_ok(&["sweep", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--jobs", "3"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn amplitude_search_stays_in_interval() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.json",
        r#"{"protocol": {"alpha": 1.0}, "channel": {"distance_km": 15, "xi": 0.01}, "subspace_N": 10,
            "solver": {"max_fw_iterations": 10},
            "optimize": {"variable": "alpha", "interval": [0.5, 2.0], "tol": 0.1}}"#,
    );
    let out = dir.path().join("o.csv");
    let res = run_ok(&["optimize", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let summary: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    let x = summary["x_opt"].as_f64().unwrap();
    assert!((0.5..=2.0).contains(&x), "{x}");
    assert!(summary["key_rate"].as_f64().unwrap() > 0.0);
    let csv = Csv::read(&out);
    assert_eq!(csv.rows.len(), summary["probes"].as_u64().unwrap() as usize);
    let alphas: Vec<f64> = (0..csv.rows.len()).map(|k| csv.num(k, "alpha")).collect();
    assert!(alphas.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn echoed_config_reparses_identically() {
    let dir = TempDir::new().unwrap();
    let text = r#"{"protocol": {"alpha": 0.6, "delta_p": 0.1}, "channel": {"distance_km": 0, "xi": 0}, "subspace_N": 2}"#;
    let cfg = write(&dir, "c.json", text);
    let echo = dir.path().join("echo.json");
    let out = dir.path().join("o.csv");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--echo-config", echo.to_str().unwrap()]);
    let echoed = RunConfig::load(&echo).unwrap();
    assert_eq!(echoed, RunConfig::from_json(text).unwrap());
    assert_eq!(RunConfig::from_json(&echoed.to_json()).unwrap(), echoed);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let good = write(&dir, "good.json", r#"{"protocol": {"alpha": 0.6}, "channel": {"distance_km": 0, "xi": 0}, "subspace_N": 2}"#);
    let bad = write(&dir, "bad.json", r#"{"protocol": {"alpha": 0.6}, "channel": {"distance_km": 0}, "subspace_N": 2}"#);
    let code = |args: &[&str]| keyrate(args).status.code();
    assert_eq!(code(&["run", "--config", bad.to_str().unwrap()]), Some(2));
    assert_eq!(code(&["sweep", "--config", good.to_str().unwrap()]), Some(2));
    assert_eq!(code(&["run", "--config", dir.path().join("missing.json").to_str().unwrap()]), Some(3));
    let unwritable = dir.path().join("no/such/dir/o.csv");
    assert_eq!(code(&["run", "--config", good.to_str().unwrap(), "--out", unwritable.to_str().unwrap()]), Some(3));
    assert_eq!(code(&["run", "--config", good.to_str().unwrap(), "--jobs", "0"]), Some(2));
    let err = keyrate(&["run", "--config", bad.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&err.stderr).contains("xi"));
}

/// Heterodyne samples of a displaced thermal state with the simulated channel's noise.
fn write_samples(path: &Path, beta: (f64, f64), mean_photons: f64, count: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quad = Normal::new(0.0, ((1.0 + mean_photons) / 2.0).sqrt()).unwrap();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    writeln!(f, "# re,im").unwrap();
    for _ in 0..count {
        writeln!(f, "{},{}", beta.0 + quad.sample(&mut rng), beta.1 + quad.sample(&mut rng)).unwrap();
    }
}

#[test]
fn sample_ingestion() {
    let dir = TempDir::new().unwrap();
    let (dist, xi, alpha) = (5.0, 0.02, 0.7);
    let cfg = write(
        &dir,
        "c.json",
        &format!(r#"{{"protocol": {{"alpha": {alpha}}}, "channel": {{"distance_km": {dist}, "xi": {xi}}}, "subspace_N": 3}}"#),
    );
    let eta: f64 = 10f64.powf(-0.2 * dist / 10.0);
    let amp = eta.sqrt() * alpha;
    let betas = [(amp, 0.0), (0.0, amp), (-amp, 0.0), (0.0, -amp)];
    let mut files = Vec::new();
    for (i, b) in betas.iter().enumerate() {
        let p = dir.path().join(format!("s{i}.csv"));
        write_samples(&p, *b, eta * xi / 2.0, 200_000, 40 + i as u64);
        files.push(p);
    }
    let out = dir.path().join("o.csv");
    let mut args = vec!["ingest-samples", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend(files.iter().map(|p| p.to_str().unwrap()));
    run_ok(&args);
    let ingested = Csv::read(&out);
    assert_eq!(ingested.get(0, "status"), "ok");

    let sim = dir.path().join("sim.csv");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", sim.to_str().unwrap()]);
    let simulated = Csv::read(&sim);
    let diff = (ingested.num(0, "C_num") - simulated.num(0, "C_num")).abs();
    assert!(diff < 0.05, "sample-based bound differs from simulated by {diff}");

    let single = dir.path().join("single.csv");
    run_ok(&["ingest-samples", "--config", cfg.to_str().unwrap(), "--out", single.to_str().unwrap(), files[0].to_str().unwrap()]);
    assert_eq!(Csv::read(&single).get(0, "status"), "ok");

    let broken = write(&dir, "broken.csv", "0.1,0.2\n0.3\n");
    let code = keyrate(&["ingest-samples", "--config", cfg.to_str().unwrap(), broken.to_str().unwrap()]).status.code();
    assert_eq!(code, Some(2));
    let two = keyrate(&["ingest-samples", "--config", cfg.to_str().unwrap(), files[0].to_str().unwrap(), files[1].to_str().unwrap()]);
    assert_eq!(two.status.code(), Some(2));
}
