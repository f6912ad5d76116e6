//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Reference values are computed here from closed forms, independently of the
//! library code under test.

use std::f64::consts::{LN_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::Value;
use srbkit::interval::Interval;
use srbkit::models::{first_return_tower, FirstReturnOptions, Map1D, System};
use srbkit::srb::{
    birkhoff_average, induced_lyapunov_check, pesin_defect, LyapunovOptions, OrbitOptions, RelationOptions,
};
use srbkit::tower::file::read_tower_file;
use srbkit::tower::{entropy, return_time_stats, solve_invariant_density, SolveOptions};

type Outcome = Result<String, String>;

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn shipped_towers() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(data("towers"))
        .expect("data/towers")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "tower"))
        .collect();
    v.sort();
    v
}

struct Workdir(tempfile::TempDir);

impl Workdir {
    fn new() -> Workdir {
        Workdir(tempfile::tempdir().expect("tempdir"))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    /// Runs the CLI with `--out <name>` appended; returns exit code and envelope.
    fn cli(&self, args: &[&str], name: &str) -> (i32, Value) {
        let out = self.path(name);
        let mut argv = vec!["srbkit".to_string(), "--quiet".to_string()];
        argv.extend(args.iter().map(|s| s.to_string()));
        argv.push("--out".into());
        argv.push(out.display().to_string());
        let code = srbkit_cli::run(argv);
        let json_path = if out.extension().is_some_and(|e| e == "json") {
            out
        } else {
            out.with_extension("json")
        };
        let env = std::fs::read_to_string(&json_path)
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .unwrap_or(Value::Null);
        (code, env)
    }
}

fn num(v: &Value, path: &[&str]) -> f64 {
    let mut cur = v;
    for k in path {
        cur = &cur[*k];
    }
    cur.as_f64().unwrap_or_else(|| panic!("missing number at {path:?}"))
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> Result<String, String> {
    let err = (got - want).abs();
    if err <= tol {
        Ok(format!("{name} {got:.9} (err {err:.1e})"))
    } else {
        Err(format!("{name} = {got}, expected {want} within {tol:e} (err {err:e})"))
    }
}

fn c1_doubling_entropy() -> Outcome {
    let w = Workdir::new();
    let tower = data("towers/doubling.tower");
    let (code, env) = w.cli(&["tower", "entropy", "--tower", tower.to_str().unwrap()], "h.json");
    if code != 0 {
        return Err(format!("exit code {code}"));
    }
    within("h", num(&env, &["results", "entropy"]), LN_2, 1e-9)
}

fn c2_abramov() -> Outcome {
    let w = Workdir::new();
    let tower = data("towers/bernoulli.tower");
    let (code, env) = w.cli(&["tower", "entropy", "--tower", tower.to_str().unwrap()], "h.json");
    if code != 0 {
        return Err(format!("exit code {code}"));
    }
    let (p, tau) = ([0.5, 0.25, 0.25], [1.0, 2.0, 3.0]);
    let sigma: f64 = p.iter().zip(tau).map(|(p, t)| p * t).sum();
    let h = -p.iter().map(|p| p * p.ln()).sum::<f64>() / sigma;
    let a = within("sigma", num(&env, &["results", "sigma"]), sigma, 1e-12)?;
    let b = within("h", num(&env, &["results", "entropy"]), h, 1e-8)?;
    Ok(format!("{a}, {b}"))
}

fn c3_kac() -> Outcome {
    let out = first_return_tower(
        &Map1D::Doubling,
        Interval::new(0.0, 0.5),
        &FirstReturnOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let d = solve_invariant_density(&out.tower, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let stats = return_time_stats(&out.tower, &d);
    let h = entropy(&out.tower, &d).map_err(|e| e.to_string())?;
    // m{R = j} = 2^-j on the normalized base
    let tail: f64 = (5..200).map(|j| f64::from(j) * 0.5f64.powi(j)).sum();
    let a = within("sigma", stats.sigma, 2.0, 1e-6)?;
    let b = within("h", h, LN_2, 1e-6)?;
    let c = within("tail(5)", stats.tail(5), tail, 1e-6)?;
    Ok(format!("{a}, {b}, {c}"))
}

fn c4_density_bounds() -> Outcome {
    let mut lines = Vec::new();
    for path in shipped_towers() {
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let t = read_tower_file(&path).map_err(|e| format!("{name}: {e}"))?;
        let d = solve_invariant_density(&t, &SolveOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        let k = t.budget().k();
        let (lo, hi) = d
            .values
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        if d.residual > 1e-10 {
            return Err(format!("{name}: residual {:e}", d.residual));
        }
        if lo < 1.0 / k || hi > k {
            return Err(format!("{name}: density range [{lo}, {hi}] outside [1/K, K], K = {k}"));
        }
        lines.push(format!("{name} res {:.0e}", d.residual));
    }
    Ok(lines.join(", "))
}

fn c5_ulam() -> Outcome {
    let start = Instant::now();
    let t = read_tower_file(data("towers/ulam.tower")).map_err(|e| e.to_string())?;
    let grid = 4096;
    let d = solve_invariant_density(
        &t,
        &SolveOptions {
            grid,
            ..SolveOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    // exact cell averages of 1/(pi sqrt(x(1-x))) from its distribution function
    let cdf = |x: f64| 2.0 / PI * x.sqrt().asin();
    let h = 1.0 / grid as f64;
    let l1: f64 = (0..grid)
        .map(|j| {
            let avg = (cdf((j + 1) as f64 * h) - cdf(j as f64 * h)) / h;
            (d.values[j] - avg).abs() * h
        })
        .sum();
    if l1 > 1e-2 {
        return Err(format!("L1 error {l1:e} > 1e-2"));
    }
    let ent = entropy(&t, &d).map_err(|e| e.to_string())?;
    let sys = System::Interval(Map1D::Logistic);
    let phi = srbkit::expr::Expr::parse("log(abs(4 - 8 * x))").unwrap();
    let orbit = OrbitOptions {
        n: 10_000_000,
        seed: 5,
        ..OrbitOptions::default()
    };
    let x0 = sys.seeded_start(5);
    let lam = birkhoff_average(&sys, &phi, x0, &orbit).map_err(|e| e.to_string())?;
    let pesin = pesin_defect(
        &Map1D::Logistic,
        &t,
        &d,
        x0[0],
        &LyapunovOptions {
            n: 10_000_000,
            seed: 6,
            ..LyapunovOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let a = within("h", ent, LN_2, 5e-3)?;
    let b = within("lambda", lam, LN_2, 5e-3)?;
    if pesin.defect >= 5e-3 {
        return Err(format!("pesin defect {} >= 5e-3", pesin.defect));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("took {secs:.1} s"));
    }
    Ok(format!(
        "L1 {l1:.1e}, {a}, {b}, pesin defect {:.1e}, {secs:.1} s",
        pesin.defect
    ))
}

fn c6_lyapunov_relation() -> Outcome {
    let t = read_tower_file(data("towers/first_return_doubling.tower")).map_err(|e| e.to_string())?;
    let d = solve_invariant_density(&t, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let opts = RelationOptions {
        n: 10_000_000,
        seed: 21,
        ..RelationOptions::default()
    };
    let r = induced_lyapunov_check(&t, &d, &Map1D::Doubling, 0.3, &opts).map_err(|e| e.to_string())?;
    if r.defect >= 1e-3 {
        return Err(format!("doubling defect {:e} >= 1e-3", r.defect));
    }
    let closed = within("lambda_F", r.lambda_induced, 2.0 * LN_2, 1e-3)?;

    let fr = first_return_tower(
        &Map1D::Logistic,
        Interval::new(0.25, 0.75),
        &FirstReturnOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let opts = SolveOptions {
        skip_bounds: true,
        ..SolveOptions::default()
    };
    let dl = solve_invariant_density(&fr.tower, &opts).map_err(|e| e.to_string())?;
    let ropts = RelationOptions {
        n: 1_000_000,
        seed: 22,
        ..RelationOptions::default()
    };
    let rl = induced_lyapunov_check(&fr.tower, &dl, &Map1D::Logistic, 0.4, &ropts).map_err(|e| e.to_string())?;
    if rl.relative_defect >= 0.02 {
        return Err(format!("logistic relative defect {} >= 2%", rl.relative_defect));
    }
    Ok(format!(
        "doubling defect {:.1e}, {closed}; logistic relative defect {:.2}%",
        r.defect,
        100.0 * rl.relative_defect
    ))
}

fn c7_henon() -> Outcome {
    let start = Instant::now();
    let w = Workdir::new();
    let (a, b) = (1.4f64, 0.3f64);
    let mut l1s = Vec::new();
    for seed in [1u64, 2, 3, 4, 5] {
        let s = seed.to_string();
        let (code, env) = w.cli(
            &[
                "srb", "lyapunov", "--map", "henon", "--a", "1.4", "--b", "0.3", "--seed", &s,
            ],
            &format!("ly{seed}.json"),
        );
        if code != 0 {
            return Err(format!("lyapunov exit {code}"));
        }
        let l1 = num(&env, &["results", "estimate", "lambda1"]);
        let l2 = num(&env, &["results", "estimate", "lambda2"]);
        within(&format!("seed {seed} sum"), l1 + l2, b.ln(), 1e-6)?;
        if l1.is_nan() || l1 <= 0.0 {
            return Err(format!("seed {seed}: lambda1 = {l1}"));
        }
        l1s.push(l1);
    }
    let spread =
        l1s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - l1s.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread > 5e-3 {
        return Err(format!("lambda1 spread {spread:e} > 5e-3"));
    }
    let cfg = data("configs/default.toml");
    let (code, env) = w.cli(&["model", "trap-check", "--config", cfg.to_str().unwrap()], "trap.json");
    let r = &env["results"];
    if code != 0
        || r["pass"] != Value::Bool(true)
        || r["interior_samples"].as_u64() != Some(10_000)
        || r["n_steps"].as_u64() != Some(100)
    {
        return Err(format!("trap check exit {code}: {r}"));
    }
    // fixed point: x = 1 - a x^2 + b x
    let x = (-(1.0 - b) + ((1.0 - b).powi(2) + 4.0 * a).sqrt()) / (2.0 * a);
    let (code, env) = w.cli(&["model", "fixed-point", "--a", "1.4", "--b", "0.3"], "fp.json");
    if code != 0 {
        return Err(format!("fixed-point exit {code}"));
    }
    let z = &env["results"]["fixed_point"]["z_star"];
    let (zx, zy) = (z[0].as_f64().unwrap(), z[1].as_f64().unwrap());
    within("z*.x", zx, 0.6313545, 1e-7)?;
    within("z*.y", zy, 0.1894063, 1e-7)?;
    within("z*.x closed form", zx, x, 1e-12)?;
    let secs = start.elapsed().as_secs_f64();
    if secs >= 120.0 {
        return Err(format!("took {secs:.1} s"));
    }
    Ok(format!(
        "lambda1 in [{:.4}, {:.4}], trap ok, z* = ({zx:.7}, {zy:.7}), {secs:.1} s",
        l1s.iter().cloned().fold(f64::INFINITY, f64::min),
        l1s.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn c8_statistical_stability() -> Outcome {
    let w = Workdir::new();
    let cfg = data("configs/henon_sweep.toml");
    let (code, _) = w.cli(&["sweep", "stability", "--config", cfg.to_str().unwrap()], "sweep.csv");
    if code != 0 {
        return Err(format!("exit {code}"));
    }
    let mut rdr = csv::Reader::from_path(w.path("sweep.csv")).map_err(|e| e.to_string())?;
    let head = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| head.iter().position(|h| h == name).unwrap();
    let (cd, cs, cdist) = (col("delta"), col("seed"), col("distance"));
    let mut by_delta: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    let mut seeds = std::collections::BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let d: f64 = rec[cdist]
            .parse()
            .map_err(|_| format!("distance '{}' not a number", &rec[cdist]))?;
        if !d.is_finite() {
            return Err("non-finite distance".into());
        }
        seeds.insert(rec[cs].to_string());
        by_delta.entry(rec[cd].to_string()).or_default().push(d);
    }
    if seeds.len() != 8 || by_delta.len() != 4 || by_delta.values().any(|v| v.len() != 8) {
        return Err(format!(
            "expected 4 deltas x 8 seeds, got {:?}",
            by_delta.keys().collect::<Vec<_>>()
        ));
    }
    let at = |d: f64| {
        by_delta
            .iter()
            .find(|(k, _)| k.parse::<f64>().unwrap() == d)
            .map(|(_, v)| v.clone())
            .unwrap_or_default()
    };
    if at(0.0).iter().any(|&d| d != 0.0) {
        return Err(format!("nonzero self-distance {:?}", at(0.0)));
    }
    let (small, large) = (median(at(-1e-4)), median(at(-1e-2)));
    if small > large {
        return Err(format!("median at 1e-4 ({small}) > median at 1e-2 ({large})"));
    }
    Ok(format!(
        "medians: 1e-4 {small:.2e}, 1e-3 {:.2e}, 1e-2 {large:.2e}",
        median(at(-1e-3))
    ))
}

fn c9_entropy_continuity() -> Outcome {
    let w = Workdir::new();
    let thetas: Vec<String> = (1..=19).map(|k| format!("{}", f64::from(k) / 20.0)).collect();
    let (code, env) = w.cli(
        &[
            "sweep",
            "entropy",
            "--family",
            "bernoulli",
            "--thetas",
            &thetas.join(","),
        ],
        "b.json",
    );
    if code != 0 {
        return Err(format!("bernoulli exit {code}"));
    }
    let mut worst: f64 = 0.0;
    for row in env["results"]["rows"].as_array().ok_or("no rows")? {
        let th = row["theta"].as_f64().unwrap();
        let h = row["entropy"]
            .as_f64()
            .ok_or_else(|| format!("theta {th}: {}", row["status"]))?;
        // masses (theta, 1 - theta), return times (1, 2)
        let closed = (-th * th.ln() - (1.0 - th) * (1.0 - th).ln()) / (th + 2.0 * (1.0 - th));
        worst = worst.max((h - closed).abs());
    }
    if worst > 1e-8 {
        return Err(format!("bernoulli max error {worst:e}"));
    }
    let slopes: Vec<String> = (0..=10).map(|k| format!("{}", 1.9 + f64::from(k) / 100.0)).collect();
    let (code, env) = w.cli(
        &[
            "sweep",
            "entropy",
            "--family",
            "tent",
            "--seed",
            "4",
            "--thetas",
            &slopes.join(","),
        ],
        "t.json",
    );
    if code != 0 {
        return Err(format!("tent exit {code}"));
    }
    let mut worst_t: f64 = 0.0;
    for row in env["results"]["rows"].as_array().ok_or("no rows")? {
        let s = row["theta"].as_f64().unwrap();
        let h = row["entropy"]
            .as_f64()
            .ok_or_else(|| format!("slope {s}: {}", row["status"]))?;
        worst_t = worst_t.max((h - s.ln()).abs());
    }
    if worst_t > 1e-6 {
        return Err(format!("tent max error {worst_t:e}"));
    }
    Ok(format!(
        "bernoulli max error {worst:.1e} over 19 params, tent max error {worst_t:.1e} over 11 slopes"
    ))
}

fn c10_deep_returns() -> Outcome {
    let w = Workdir::new();
    let mut total = 0;
    for path in shipped_towers() {
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let (code, env) = w.cli(
            &["tower", "stats", "--tower", path.to_str().unwrap(), "--seed", "10"],
            &format!("{name}.json"),
        );
        let checks = env["results"]["deep_return"].as_array().cloned().unwrap_or_default();
        if checks.len() != 21 {
            return Err(format!("{name}: {} checks, exit {code}", checks.len()));
        }
        for c in &checks {
            let (est, se, bound) = (num(c, &["estimate"]), num(c, &["std_error"]), num(c, &["bound"]));
            if est > bound + 3.0 * se {
                return Err(format!(
                    "{name}: k={} N={} estimate {est} > {bound} + 3 x {se}",
                    c["k"], c["n"]
                ));
            }
        }
        if code != 0 {
            return Err(format!("{name}: exit {code}"));
        }
        total += checks.len();
    }
    Ok(format!("{total} (tower, k, N) checks hold"))
}

fn c11_reproducibility() -> Outcome {
    let w = Workdir::new();
    let bernoulli = data("towers/bernoulli.tower");
    let tower = bernoulli.to_str().unwrap();
    let sweep = data("configs/henon_sweep.toml");
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["tower", "stats", "--tower", tower], "json"),
        (
            vec!["srb", "lyapunov", "--map", "henon", "--n", "200000", "--seed", "3"],
            "json",
        ),
        (
            vec![
                "srb",
                "measure",
                "--map",
                "henon",
                "--n",
                "200000",
                "--seed",
                "3",
                "--hist-grid",
                "64",
            ],
            "csv",
        ),
        (
            vec![
                "sweep",
                "stability",
                "--config",
                sweep.to_str().unwrap(),
                "--n",
                "100000",
                "--jobs",
                "1",
            ],
            "csv",
        ),
        (vec!["sweep", "entropy", "--family", "tent", "--n", "100000"], "json"),
    ];
    for (i, (args, ext)) in cases.iter().enumerate() {
        let mut second = args.clone();
        if args[0] == "sweep" && args[1] == "stability" {
            second.pop();
            second.push("4");
        }
        let (a, b) = (format!("a{i}.{ext}"), format!("b{i}.{ext}"));
        let (ca, _) = w.cli(args, &a);
        let (cb, _) = w.cli(&second, &b);
        if ca != 0 || cb != 0 {
            return Err(format!("{}: exit codes {ca}, {cb}", args[..2].join(" ")));
        }
        let files: Vec<(PathBuf, PathBuf)> = if *ext == "csv" {
            vec![
                (w.path(&a), w.path(&b)),
                (w.path(&format!("a{i}.json")), w.path(&format!("b{i}.json"))),
            ]
        } else {
            vec![(w.path(&a), w.path(&b))]
        };
        for (pa, pb) in files {
            if std::fs::read(&pa).unwrap() != std::fs::read(&pb).unwrap() {
                return Err(format!(
                    "{}: {} and {} differ",
                    args[..2].join(" "),
                    pa.display(),
                    pb.display()
                ));
            }
        }
        let replay_out = w.path(&format!("r{i}.{ext}"));
        let envelope = w.path(&format!("a{i}.json"));
        let code = srbkit_cli::run([
            "srbkit",
            "--quiet",
            "replay",
            envelope.to_str().unwrap(),
            "--out",
            replay_out.to_str().unwrap(),
        ]);
        if code != 0 || std::fs::read(w.path(&a)).unwrap() != std::fs::read(&replay_out).unwrap() {
            return Err(format!(
                "{}: replay exit {code} or differing payload",
                args[..2].join(" ")
            ));
        }
    }
    Ok(format!("{} commands byte-identical on rerun and replay", cases.len()))
}

fn main() {
    std::env::remove_var(srbkit_cli::OUT_DIR_VAR);
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("doubling tower entropy", c1_doubling_entropy),
        ("Abramov closed form", c2_abramov),
        ("first return of the doubling map", c3_kac),
        ("density bounds on shipped towers", c4_density_bounds),
        ("Ulam map chain", c5_ulam),
        ("induced Lyapunov relation", c6_lyapunov_relation),
        ("Henon invariants", c7_henon),
        ("statistical stability sweep", c8_statistical_stability),
        ("entropy continuity", c9_entropy_continuity),
        ("deep-return inequality", c10_deep_returns),
        ("reproducibility", c11_reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("criterion {:>2} PASS [{secs:6.1}s] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL [{secs:6.1}s] {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
