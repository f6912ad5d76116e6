use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use srbkit_cli::config::{load_config, parse_config, ConfigError};

const BIN: &str = env!("CARGO_BIN_EXE_srbkit");

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn srbkit(args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--quiet")
        .args(args)
        .env_remove("SRBKIT_OUT_DIR")
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn doubling_entropy_is_ln2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.json");
    let tower = data("towers/doubling.tower");
    let run = srbkit(&[
        "tower",
        "entropy",
        "--tower",
        tower.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let v = json(&out);
    let h = v["results"]["entropy"].as_f64().unwrap();
    assert!((h - std::f64::consts::LN_2).abs() < 1e-7, "{h}");
    for key in ["tool_version", "config", "seed", "prng", "command"] {
        assert!(!v[key].is_null(), "missing {key}");
    }
    assert!(dir.path().join("h.meta.json").exists());
}

#[test]
fn henon_exponents_sum_to_log_b() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ly.json");
    let args = [
        "srb", "lyapunov", "--map", "henon", "--a", "1.4", "--b", "0.3", "--n", "1000000", "--seed", "7",
    ];
    let run = srbkit(&[&args[..], &["--out", out.to_str().unwrap()]].concat());
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let est = &json(&out)["results"]["estimate"];
    let sum = est["lambda1"].as_f64().unwrap() + est["lambda2"].as_f64().unwrap();
    assert!((sum - 0.3f64.ln()).abs() < 1e-6, "{sum}");
}

#[test]
fn sweep_has_one_row_per_delta_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let cfg = data("configs/henon_sweep.toml");
    let run = srbkit(&[
        "sweep",
        "stability",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let resolved = load_config(&cfg).unwrap();
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        [
            "family",
            "param_base",
            "delta",
            "seed",
            "n",
            "distance",
            "entropy",
            "lambda1",
            "status"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), resolved.sweep.deltas.len() * resolved.run.seeds.len());
    let mut keys: Vec<(String, String)> = rows.iter().map(|r| (r[2].to_string(), r[3].to_string())).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), rows.len());
    for r in rows.iter().filter(|r| r[2].parse::<f64>().unwrap() == 0.0) {
        assert_eq!(r[5].parse::<f64>().unwrap(), 0.0);
    }
    assert!(dir.path().join("sweep.json").exists());
}

#[test]
fn shipped_configs_load_and_echo_defaults() {
    for name in [
        "default",
        "henon_sweep",
        "ulam",
        "bernoulli_entropy",
        "tent_entropy",
        "uniformity",
    ] {
        let cfg = load_config(data(&format!("configs/{name}.toml"))).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(cfg.run.tol > 0.0 && cfg.run.grid > 0, "{name}");
    }
    let cfg = parse_config("[run]\nseed = 4\n", None).unwrap();
    assert_eq!((cfg.run.grid, cfg.run.burn_in, cfg.run.tol), (4096, 1000, 1e-10));
    let echoed = cfg.to_toml();
    assert!(
        echoed.contains("grid = 4096") && echoed.contains("burn_in = 1000"),
        "{echoed}"
    );
}

#[test]
fn config_errors_exit_with_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json");
    let cases = [
        ("[budget]\nbeta = 1.5\n", "beta"),
        ("[run]\nseed = 1\nR_maxx = 3\n", "R_maxx"),
        ("[tower]\npath = \"nowhere.tower\"\n", "path"),
    ];
    for (src, key) in cases {
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, src).unwrap();
        let run = srbkit(&[
            "tower",
            "entropy",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&run), 2, "{src}");
        assert!(String::from_utf8_lossy(&run.stderr).contains(key), "{src}");
    }
    assert_eq!(code(&srbkit(&["tower", "frobnicate"])), 2);
    assert!(!out.exists());
}

#[test]
fn failed_checks_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trap.json");
    let run = srbkit(&[
        "model",
        "trap-check",
        "--map",
        "henon",
        "--a",
        "1.2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 1, "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn degenerate_trapping_polygon_is_rejected() {
    let src = "[trapping]\npolygon = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]\n";
    match parse_config(src, None) {
        Err(ConfigError::OutOfRange { key, .. }) => assert_eq!(key, "polygon"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn out_dir_variable_replaces_the_directory() {
    let dir = tempfile::tempdir().unwrap();
    let tower = data("towers/doubling.tower");
    let run = Command::new(BIN)
        .args([
            "-q",
            "tower",
            "entropy",
            "--tower",
            tower.to_str().unwrap(),
            "--out",
            "/nonexistent/h.json",
        ])
        .env("SRBKIT_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert!(dir.path().join("h.json").exists());
}

#[test]
fn replay_reproduces_the_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("m.csv");
    let again = dir.path().join("again.csv");
    let run = srbkit(&[
        "srb",
        "measure",
        "--map",
        "tent",
        "--slope",
        "1.8",
        "--n",
        "20000",
        "--seed",
        "5",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let sidecar = dir.path().join("m.json");
    let run = srbkit(&["replay", sidecar.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&again).unwrap());
    assert_eq!(
        std::fs::read(&sidecar).unwrap(),
        std::fs::read(dir.path().join("again.json")).unwrap()
    );
}

#[test]
fn run_config_seeds_parse_or_fail_cleanly() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/run_config");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let src = std::fs::read(entry.unwrap().path()).unwrap();
        if let Ok(src) = std::str::from_utf8(&src) {
            if let Ok(cfg) = parse_config(src, None) {
                assert_eq!(parse_config(&cfg.to_toml(), None).unwrap().to_toml(), cfg.to_toml());
            }
            n += 1;
        }
    }
    assert!(n >= 8);
}
