use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mdiqrng"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn mdiqrng")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn counts_file(dir: &Path, name: &str, zeros: [u64; 4], trials: u64) -> PathBuf {
    let keys = ["zero", "one", "plus", "plus_i"];
    let body: serde_json::Map<String, Value> = keys
        .iter()
        .zip(zeros)
        .map(|(k, z)| (k.to_string(), serde_json::json!({ "trials": trials, "zeros": z })))
        .collect();
    let path = dir.join(name);
    std::fs::write(&path, Value::Object(body).to_string()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn tomo_examples() {
    let dir = tempfile::tempdir().unwrap();
    let ideal = counts_file(dir.path(), "ideal.json", [1000, 0, 500, 500], 1000);
    let out = run(&["tomo", s(&ideal)]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["a0"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((v["n0_z"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let attack = counts_file(dir.path(), "attack.json", [1000, 500, 750, 750], 1000);
    let v = json(&run(&["tomo", s(&attack)]));
    assert!((v["a0"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert!((v["n0_z"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn invalid_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = counts_file(dir.path(), "bad.json", [1001, 0, 500, 500], 1000);
    assert_eq!(run(&["tomo", s(&bad)]).status.code(), Some(2));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\n  \"zero\": {\"trials\": 10,\n").unwrap();
    let out = run(&["tomo", s(&broken)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let extra = dir.path().join("extra.json");
    std::fs::write(
        &extra,
        r#"{"zero":{"trials":1,"zeros":1},"one":{"trials":1,"zeros":0},"plus":{"trials":1,"zeros":1},"plus_i":{"trials":1,"zeros":1},"minus":{"trials":1,"zeros":0}}"#,
    )
    .unwrap();
    assert_eq!(run(&["tomo", s(&extra)]).status.code(), Some(2));
    assert_eq!(run(&["tomo", "/nonexistent/counts.json"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--eta-db-min", "5", "--eta-db-max", "1"]).status.code(), Some(2));
}

#[test]
fn rate_examples() {
    let dir = tempfile::tempdir().unwrap();
    let n = 100_000_000u64;
    let ideal = counts_file(dir.path(), "ideal.json", [n, 0, n / 2, n / 2], n);
    let out = run(&["rate", s(&ideal), "--n-gen", "10000000000"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out)["bits_per_run"].as_f64().unwrap();
    assert!(r > 0.95 && r < 1.0, "{r}");

    let attack = counts_file(dir.path(), "attack.json", [n, n / 2, 3 * n / 4, 3 * n / 4], n);
    let v = json(&run(&["rate", s(&attack), "--n-gen", "10000000000"]));
    assert!((v["asymptotic_bits_per_run"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    let r = v["bits_per_run"].as_f64().unwrap();
    assert!(r > 0.45 && r < 0.5, "{r}");
    assert!(v["extractable_length"].as_u64().unwrap() < v["rn_length"].as_u64().unwrap());

    let noise = counts_file(dir.path(), "noise.json", [500, 500, 500, 500], 1000);
    let out = run(&["rate", s(&noise), "--n-gen", "1000"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["bits_per_run"].as_f64(), Some(0.0));
}

#[test]
fn rate_with_coherent_source() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coh.json");
    // Honest η = 1, μ = 0.05 statistics with the no-click outcome 1.
    let n = 10_000_000u64;
    let (mu, e) = (0.05f64, (-0.05f64).exp());
    let z = |p: f64| (p * mu * e * n as f64).round() as u64;
    let body = serde_json::json!({
        "unpolarized": { "trials": n, "zeros": z(0.5) },
        "plus": { "trials": n, "zeros": z(0.5) },
        "plus_i": { "trials": n, "zeros": z(0.5) },
        "zero": { "trials": n, "zeros": z(1.0) },
    });
    std::fs::write(&path, body.to_string()).unwrap();
    let out = run(&["rate", s(&path), "--n-gen", "1000000000", "--mu", "0.05"]);
    let v = json(&out);
    assert_eq!(out.status.code(), Some(0), "{v}");
    let r = v["bits_per_run"].as_f64().unwrap();
    assert!(r > 0.0 && r < mu * e, "{r}");
}

#[test]
fn sweep_table() {
    let out = run(&["sweep", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("eta,eta_db,mu_star,bits_per_pulse,bits_per_second"));
    let rates: Vec<f64> = lines.map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(rates.len(), 16);
    assert!(rates.windows(2).all(|w| w[1] < w[0]));
    let decades = (rates[0] / rates[15]).log10();
    assert!((5.0..7.0).contains(&decades), "{decades}");

    let v = json(&run(&["sweep"]));
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 16);
    for (row, rate) in rows.iter().zip(&rates) {
        assert_eq!(row["bits_per_pulse"].as_f64().unwrap(), *rate);
    }

    let single = run(&["sweep", "--format", "csv", "--eta-db-min", "10", "--points", "1"]);
    let text = String::from_utf8(single.stdout).unwrap();
    let bps: f64 = text.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!(bps > 1e4, "{bps}");

    let empty = run(&["sweep", "--format", "csv", "--points", "0"]);
    assert_eq!(empty.status.code(), Some(0));
    assert_eq!(String::from_utf8(empty.stdout).unwrap().lines().count(), 1);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let bits = |k: usize| dir.path().join(format!("bits{k}.bin"));
    let args = |k: usize| {
        vec![
            "simulate".to_string(),
            "--eta".into(),
            "0.1".into(),
            "-n".into(),
            "1000000".into(),
            "--test-fraction".into(),
            "0.5".into(),
            "--seed".into(),
            "7".into(),
            "--bits-out".into(),
            bits(k).to_str().unwrap().into(),
        ]
    };
    let a = bin().args(args(0)).output().unwrap();
    let b = bin().args(args(1)).output().unwrap();
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let (x, y) = (std::fs::read(bits(0)).unwrap(), std::fs::read(bits(1)).unwrap());
    assert_eq!(x, y);
    let v = json(&a);
    let n_gen = v["n_gen"].as_u64().unwrap();
    assert_eq!(u64::from_be_bytes(x[..8].try_into().unwrap()), n_gen);
    assert_eq!(x.len() as u64, 8 + n_gen.div_ceil(8));

    let device = dir.path().join("device.json");
    std::fs::write(&device, r#"{"kind":"fixed_povm","schedule":[{"f0":{"a":0.5,"n":[0,0,0]},"f1":{"a":0.5,"n":[0,0,0]}}]}"#)
        .unwrap();
    let out = run(&["simulate", "-n", "100000", "--device", s(&device)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn attack_demo_frequency() {
    let out = run(&["attack-demo", "-n", "1000000"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let f = v["ones_frequency"].as_f64().unwrap();
    let sigma = v["ones_sigma"].as_f64().unwrap();
    assert!((f - 0.25).abs() <= 3.0 * sigma, "{f} ± {sigma}");
    assert!((v["tomography_a0"].as_f64().unwrap() - 0.75).abs() < 0.01);
}

#[test]
fn extract_golden_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("out.bin");
    let out = run(&[
        "extract",
        "--input",
        s(&fixture("toeplitz_8_4_input.bin")),
        "--seed-hex",
        "b3a0",
        "--output-length",
        "4",
        "--bits-out",
        s(&out_path),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(&out_path).unwrap(), std::fs::read(fixture("toeplitz_8_4_output.bin")).unwrap());
    assert_eq!(json(&out)["output_hex"], "50");

    let short = run(&["extract", "--input", s(&fixture("toeplitz_8_4_input.bin")), "--seed-hex", "b3", "--output-length", "4"]);
    assert_eq!(short.status.code(), Some(2));
}

#[test]
fn report_file_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = run(&["sweep", "--format", "csv", "--points", "3", "--output", s(&path)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 4);
}
