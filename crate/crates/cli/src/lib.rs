//! Batch front end of `srbkit`.
//!
//! Every command loads a [`config::RunConfig`] (from `--config`, or the
//! defaults), applies command-line overrides, runs one operation and writes
//! its artifact. JSON artifacts are envelopes
//! `{tool_version, command, config, seed, prng, results}`; CSV artifacts get
//! such an envelope as a sidecar with the same stem. Wall-clock data goes to
//! a separate `*.meta.json` so the artifacts themselves are reproducible.
//!
//! Exit codes: 0 on success, 1 when a check fails or a computation errors,
//! 2 on configuration and usage errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use config::{ConfigError, DistanceKind, FamilyKind, MapKind, RunConfig};
use output::Artifact;
use srbkit::expr::Expr;
use srbkit::interval::Interval;
use srbkit::models::{
    first_return_tower, henon_fixed_point, manifold_containment_defect, orbit, trapping_region_check,
    unstable_manifold_segment, FirstReturnOptions, HenonMap, Noise, System,
};
use srbkit::rng::{stream_seed, PRNG_NAME};
use srbkit::srb::{
    birkhoff_average, empirical_measure, induced_lyapunov_check, lyapunov_spectrum, pesin_defect, saturate_measure,
    LyapunovOptions, OrbitOptions, RelationOptions,
};
use srbkit::stability::{entropy_continuity_sweep, stability_sweep, uniformity_diagnostics, EntropyFamily, SweepSpec};
use srbkit::tower::file::{read_tower_file, write_tower, TowerFileError};
use srbkit::tower::{
    audit_tower, deep_return_bound_check, entropy_with, return_time_stats, solve_invariant_density, SolveOptions,
};
use srbkit::{GibbsMarkovTower, QuotientDensity};

/// Environment variable naming the directory that receives all artifacts.
pub const OUT_DIR_VAR: &str = "SRBKIT_OUT_DIR";

/// Every operation the tool runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    #[serde(rename = "tower validate")]
    TowerValidate,
    #[serde(rename = "tower solve")]
    TowerSolve,
    #[serde(rename = "tower entropy")]
    TowerEntropy,
    #[serde(rename = "tower stats")]
    TowerStats,
    #[serde(rename = "model orbit")]
    ModelOrbit,
    #[serde(rename = "model fixed-point")]
    ModelFixedPoint,
    #[serde(rename = "model trap-check")]
    ModelTrapCheck,
    #[serde(rename = "model manifold")]
    ModelManifold,
    #[serde(rename = "model build-tower")]
    ModelBuildTower,
    #[serde(rename = "srb measure")]
    SrbMeasure,
    #[serde(rename = "srb lyapunov")]
    SrbLyapunov,
    #[serde(rename = "srb birkhoff")]
    SrbBirkhoff,
    #[serde(rename = "srb saturate")]
    SrbSaturate,
    #[serde(rename = "srb pesin")]
    SrbPesin,
    #[serde(rename = "srb relation")]
    SrbRelation,
    #[serde(rename = "sweep stability")]
    SweepStability,
    #[serde(rename = "sweep entropy")]
    SweepEntropy,
    #[serde(rename = "sweep uniformity")]
    SweepUniformity,
}

impl Command {
    pub fn name(self) -> String {
        match serde_json::to_value(self) {
            Ok(Value::String(s)) => s,
            _ => unreachable!("commands serialize to strings"),
        }
    }

    fn default_file(self) -> String {
        let stem = self.name().replace([' ', '-'], "_");
        format!("{stem}.{}", output::kind_of(self).extension())
    }
}

#[derive(Parser, Debug)]
#[command(name = "srbkit", version, about = "Gibbs-Markov towers and SRB-measure numerics")]
struct Cli {
    /// Worker threads for parallel jobs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Do not list the files written.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    group: Group,
}

#[derive(Subcommand, Debug)]
enum Group {
    /// Operations on tower definition files.
    Tower {
        #[command(subcommand)]
        op: TowerOp,
    },
    /// Concrete maps: orbits, the Hénon fixed point and manifold, first-return towers.
    Model {
        #[command(subcommand)]
        op: ModelOp,
    },
    /// Orbit statistics and saturated measures.
    Srb {
        #[command(subcommand)]
        op: SrbOp,
    },
    /// Parameter sweeps.
    Sweep {
        #[command(subcommand)]
        op: SweepOp,
    },
    /// Re-runs the command recorded in a JSON artifact.
    Replay { artifact: PathBuf },
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum TowerOp {
    Validate,
    Solve,
    Entropy,
    Stats,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum ModelOp {
    Orbit,
    FixedPoint,
    TrapCheck,
    Manifold,
    BuildTower,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum SrbOp {
    Measure,
    Lyapunov,
    Birkhoff,
    Saturate,
    Pesin,
    Relation,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum SweepOp {
    Stability,
    Entropy,
    Uniformity,
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok([
            a.parse().map_err(|e| format!("{e}"))?,
            b.parse().map_err(|e| format!("{e}"))?,
        ]),
        _ => Err(format!("expected two comma-separated numbers, got '{s}'")),
    }
}

/// Overrides of configuration values.
#[derive(Args, Debug, Default)]
struct Flags {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact path; its directory is replaced by $SRBKIT_OUT_DIR when set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Orbit length.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    burn_in: Option<usize>,
    /// Density grid.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Histogram cells per axis.
    #[arg(long, global = true)]
    hist_grid: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    #[arg(long = "r-max", global = true)]
    r_max: Option<u32>,
    #[arg(long, global = true)]
    refine: Option<usize>,
    /// power | cesaro
    #[arg(long, global = true, value_parser = parse_serde::<srbkit::tower::SolveMethod>)]
    method: Option<srbkit::tower::SolveMethod>,
    /// Entropy integration measure: invariant | reference
    #[arg(long, global = true, value_parser = parse_serde::<srbkit::tower::IntegrationMeasure>)]
    measure: Option<srbkit::tower::IntegrationMeasure>,
    /// jitter | none
    #[arg(long, global = true, value_parser = parse_serde::<Noise>)]
    noise: Option<Noise>,
    #[arg(long, global = true)]
    renorm_every: Option<usize>,
    #[arg(long, global = true)]
    n_samples: Option<usize>,
    /// henon | doubling | tent | logistic | quadratic | linear
    #[arg(long, global = true, value_parser = parse_serde::<MapKind>)]
    map: Option<MapKind>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    b: Option<f64>,
    #[arg(long, global = true)]
    slope: Option<f64>,
    /// Starting point `x,y`.
    #[arg(long, global = true, value_parser = parse_pair, allow_negative_numbers = true)]
    x0: Option<[f64; 2]>,
    /// Tower definition file.
    #[arg(long, global = true)]
    tower: Option<PathBuf>,
    /// Reference tower of uniformity diagnostics.
    #[arg(long, global = true)]
    reference: Option<PathBuf>,
    /// Base `lo,hi` of a first-return tower.
    #[arg(long, global = true, value_parser = parse_pair, allow_negative_numbers = true)]
    base: Option<[f64; 2]>,
    /// Birkhoff observable.
    #[arg(long, global = true)]
    phi: Option<String>,
    /// henon | tent | bernoulli | constant
    #[arg(long, global = true, value_parser = parse_serde::<FamilyKind>)]
    family: Option<FamilyKind>,
    /// Base value of the swept parameter.
    #[arg(long, global = true, allow_negative_numbers = true)]
    param_base: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    deltas: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    thetas: Option<Vec<f64>>,
    /// w1 | sliced_w1
    #[arg(long, global = true, value_parser = parse_serde::<DistanceKind>)]
    distance: Option<DistanceKind>,
    #[arg(long, global = true)]
    n_directions: Option<usize>,
    /// Return-time cutoff of uniformity diagnostics.
    #[arg(long, global = true)]
    cutoff: Option<u32>,
    #[arg(long, global = true)]
    depth: Option<usize>,
}

fn absolute(p: &Path) -> String {
    std::fs::canonicalize(p)
        .unwrap_or_else(|_| p.to_path_buf())
        .to_string_lossy()
        .into_owned()
}

impl Flags {
    fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($flag:expr, $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(self.seed, c.run.seed);
        set!(self.seeds, c.run.seeds);
        set!(self.n, c.run.n);
        set!(self.burn_in, c.run.burn_in);
        set!(self.grid, c.run.grid);
        set!(self.hist_grid, c.run.hist_grid);
        set!(self.tol, c.run.tol);
        set!(self.max_iter, c.run.max_iter);
        set!(self.r_max, c.run.r_max);
        set!(self.refine, c.run.refine);
        set!(self.method, c.run.method);
        set!(self.measure, c.run.measure);
        set!(self.noise, c.run.noise);
        set!(self.renorm_every, c.run.renorm_every);
        set!(self.n_samples, c.run.n_samples);
        set!(self.map, c.map.kind);
        set!(self.a, c.map.a);
        set!(self.b, c.map.b);
        set!(self.slope, c.map.slope);
        if let Some(x0) = self.x0 {
            c.map.x0 = Some(x0);
        }
        if let Some(p) = &self.tower {
            c.tower.path = Some(absolute(p));
        }
        if let Some(p) = &self.reference {
            c.tower.reference = Some(absolute(p));
        }
        if let Some(b) = self.base {
            c.tower.base = Some(b);
        }
        set!(self.phi, c.observable.expr);
        set!(self.family, c.sweep.family);
        if let Some(v) = self.param_base {
            c.sweep.base = Some(v);
        }
        set!(self.deltas, c.sweep.deltas);
        set!(self.thetas, c.sweep.thetas);
        set!(self.distance, c.sweep.distance);
        set!(self.n_directions, c.sweep.n_directions);
        set!(self.cutoff, c.sweep.cutoff);
        set!(self.depth, c.sweep.depth);
    }
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration, flags or input files: exit 2.
    Config(String),
    /// A check ran and failed, or a computation errored: exit 1.
    Run(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Run(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn run_err(e: impl std::fmt::Display) -> Failure {
    Failure::Run(e.to_string())
}

fn load_tower(path: Option<&str>, key: &str) -> Result<GibbsMarkovTower, Failure> {
    let path = path.ok_or_else(|| Failure::Config(format!("{key} is required (--tower or [tower] path)")))?;
    match read_tower_file(path) {
        Ok(t) => Ok(t),
        Err(e @ TowerFileError::Tower(_)) => Err(Failure::Run(format!("{path}: {e}"))),
        Err(e) => Err(Failure::Config(format!("{path}: {e}"))),
    }
}

fn tower_of(cfg: &RunConfig) -> Result<GibbsMarkovTower, Failure> {
    let t = load_tower(cfg.tower.path.as_deref(), "tower.path")?;
    if cfg.budget.is_set() {
        let b = cfg
            .budget
            .apply(t.budget())
            .map_err(|e| Failure::Config(e.to_string()))?;
        return t.with_budget(b).map_err(run_err);
    }
    Ok(t)
}

fn solve_opts(cfg: &RunConfig) -> SolveOptions {
    SolveOptions {
        grid: cfg.run.grid,
        tol: cfg.run.tol,
        max_iter: cfg.run.max_iter,
        method: cfg.run.method,
        refine: cfg.run.refine,
        skip_bounds: false,
    }
}

fn density_of(cfg: &RunConfig, t: &GibbsMarkovTower) -> Result<QuotientDensity, Failure> {
    solve_invariant_density(t, &solve_opts(cfg)).map_err(run_err)
}

fn orbit_opts(cfg: &RunConfig, seed: u64) -> OrbitOptions {
    OrbitOptions {
        burn_in: cfg.run.burn_in,
        n: cfg.run.n,
        seed,
        noise: cfg.run.noise,
    }
}

fn lyapunov_opts(cfg: &RunConfig, seed: u64) -> LyapunovOptions {
    LyapunovOptions {
        n: cfg.run.n,
        burn_in: cfg.run.burn_in,
        renorm_every: cfg.run.renorm_every,
        seed,
        noise: cfg.run.noise,
    }
}

fn system(cfg: &RunConfig) -> Result<System, Failure> {
    cfg.system().map_err(|e| Failure::Config(e.to_string()))
}

fn henon(cfg: &RunConfig) -> Result<HenonMap, Failure> {
    match system(cfg)? {
        System::Henon(h) => Ok(h),
        _ => Err(Failure::Config("this command needs map.kind = \"henon\"".into())),
    }
}

fn map1d(cfg: &RunConfig) -> Result<srbkit::models::Map1D, Failure> {
    cfg.map1d().map_err(|e| Failure::Config(e.to_string()))
}

/// What a command produced.
pub struct Outcome {
    pub results: Value,
    pub artifact: Artifact,
    /// False when a check failed; the artifact is still written.
    pub passed: bool,
    /// Per-job wall-clock seconds, recorded in the metadata file.
    pub job_runtimes: Option<Vec<f64>>,
}

impl Outcome {
    fn json(results: Value) -> Outcome {
        Outcome {
            results,
            artifact: Artifact::Json,
            passed: true,
            job_runtimes: None,
        }
    }

    fn check(results: Value, passed: bool) -> Outcome {
        Outcome {
            passed,
            ..Outcome::json(results)
        }
    }
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

/// Runs `cmd` under `cfg` without writing anything.
pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<Outcome, Failure> {
    let seed = cfg.run.seed;
    Ok(match cmd {
        Command::TowerValidate => {
            let t = tower_of(cfg)?;
            let report = audit_tower(&t, cfg.run.samples_per_branch).map_err(run_err)?;
            let passed = report.passed();
            Outcome::check(to_value(report), passed)
        }
        Command::TowerSolve => {
            let t = tower_of(cfg)?;
            let d = density_of(cfg, &t)?;
            Outcome::json(json!({
                "grid": d.grid(),
                "refine": cfg.run.refine,
                "method": cfg.run.method,
                "residual": d.residual,
                "iterations": d.iterations,
                "leaked_mass": d.leaked_mass,
                "min": d.min(),
                "max": d.max(),
                "K": t.budget().k(),
                "values": d.values,
            }))
        }
        Command::TowerEntropy => {
            let t = tower_of(cfg)?;
            let d = density_of(cfg, &t)?;
            let h = entropy_with(&t, &d, cfg.run.measure).map_err(run_err)?;
            let sigma = return_time_stats(&t, &d).sigma;
            Outcome::json(json!({
                "entropy": h,
                "sigma": sigma,
                "measure": cfg.run.measure,
                "grid": d.grid(),
                "residual": d.residual,
            }))
        }
        Command::TowerStats => {
            let t = tower_of(cfg)?;
            let d = density_of(cfg, &t)?;
            let stats = return_time_stats(&t, &d);
            let tails: serde_json::Map<String, Value> = cfg
                .stats
                .cutoffs
                .iter()
                .map(|&n| (n.to_string(), json!(stats.tail(n))))
                .collect();
            let mut checks = Vec::new();
            let mut job = 0u64;
            for &k in &cfg.stats.k {
                for &n in &cfg.stats.cutoffs {
                    let r = deep_return_bound_check(&t, &d, k, n, cfg.run.n_samples, stream_seed(seed, job))
                        .map_err(run_err)?;
                    checks.push(r);
                    job += 1;
                }
            }
            let passed = checks.iter().all(|c| c.pass);
            Outcome::check(json!({ "stats": stats, "tails": tails, "deep_return": checks }), passed)
        }
        Command::ModelOrbit => {
            let sys = system(cfg)?;
            let x0 = cfg.start(&sys, seed);
            let pts = orbit(&sys, x0, cfg.run.n).map_err(run_err)?;
            let last = *pts.last().expect("orbit includes its start");
            Outcome {
                artifact: Artifact::Csv(output::orbit_csv(&pts)),
                ..Outcome::json(json!({ "x0": x0, "steps": cfg.run.n, "last": last }))
            }
        }
        Command::ModelFixedPoint => {
            let h = henon(cfg)?;
            let fp = henon_fixed_point(&h).map_err(run_err)?;
            let residual = {
                let z = h.eval(fp.z_star);
                (z[0] - fp.z_star[0]).hypot(z[1] - fp.z_star[1])
            };
            Outcome::json(json!({ "fixed_point": fp, "residual": residual }))
        }
        Command::ModelTrapCheck => {
            let h = henon(cfg)?;
            let tr = &cfg.trapping;
            let report = trapping_region_check(&h, &tr.region(), tr.n_interior_samples, tr.n_steps, seed);
            let passed = report.pass;
            Outcome::check(to_value(report), passed)
        }
        Command::ModelManifold => {
            let h = henon(cfg)?;
            let m = &cfg.manifold;
            let seg = unstable_manifold_segment(&h, m.arc_length, m.n_points).map_err(run_err)?;
            let defect = manifold_containment_defect(&h, m.arc_length, m.n_points).map_err(run_err)?;
            Outcome::json(json!({ "manifold": seg, "containment_defect": defect }))
        }
        Command::ModelBuildTower => {
            let map = map1d(cfg)?;
            let base = match cfg.tower.base {
                Some([lo, hi]) => Interval::new(lo, hi),
                None => map.domain(),
            };
            let mut opts = FirstReturnOptions {
                r_max: cfg.run.r_max,
                ..FirstReturnOptions::default()
            };
            if let Some(l) = cfg.tower.min_branch_len {
                opts.min_branch_len = l;
            }
            let out = first_return_tower(&map, base, &opts).map_err(run_err)?;
            let stats = return_time_stats(&out.tower, &QuotientDensity::uniform(1));
            let text = format!(
                "# first return of {map} to {base}, built by srbkit {}\n{}",
                srbkit::VERSION,
                write_tower(&out.tower)
            );
            Outcome {
                results: json!({
                    "branches": out.tower.branches().len(),
                    "unassigned_mass": out.tower.unassigned_mass(),
                    "histogram": stats.histogram,
                    "partial_return_mass": out.partial_return_mass,
                    "short_piece_mass": out.short_piece_mass,
                    "unresolved_mass": out.unresolved_mass,
                    "pieces_capped": out.pieces_capped,
                    "non_markov_warning": out.warning,
                    "budget": out.tower.budget(),
                }),
                artifact: Artifact::Text(text),
                passed: true,
                job_runtimes: None,
            }
        }
        Command::SrbMeasure => {
            let sys = system(cfg)?;
            let x0 = cfg.start(&sys, seed);
            let m = empirical_measure(&sys, x0, &orbit_opts(cfg, seed), cfg.run.hist_grid, None).map_err(run_err)?;
            Outcome {
                artifact: Artifact::Csv(output::measure_csv(&m)),
                ..Outcome::json(json!({ "header": m.header(), "x0": x0 }))
            }
        }
        Command::SrbLyapunov => {
            let sys = system(cfg)?;
            let x0 = cfg.start(&sys, seed);
            let est = lyapunov_spectrum(&sys, x0, &lyapunov_opts(cfg, seed)).map_err(run_err)?;
            let sum = est.sum();
            Outcome::json(json!({ "estimate": est, "sum": sum, "x0": x0 }))
        }
        Command::SrbBirkhoff => {
            let sys = system(cfg)?;
            let x0 = cfg.start(&sys, seed);
            let phi = Expr::parse(&cfg.observable.expr).map_err(|e| Failure::Config(e.to_string()))?;
            let v = birkhoff_average(&sys, &phi, x0, &orbit_opts(cfg, seed)).map_err(run_err)?;
            Outcome::json(json!({ "observable": phi.source(), "average": v, "x0": x0 }))
        }
        Command::SrbSaturate => {
            let map = map1d(cfg)?;
            let t = tower_of(cfg)?;
            let d = density_of(cfg, &t)?;
            let s = saturate_measure(&t, &d, &map, cfg.run.grid).map_err(run_err)?;
            Outcome {
                artifact: Artifact::Csv(output::measure_csv(&s.measure)),
                ..Outcome::json(json!({
                    "header": s.measure.header(),
                    "level_mass": s.level_mass,
                    "sigma": s.sigma,
                    "truncated_mass": s.truncated_mass,
                }))
            }
        }
        Command::SrbPesin => {
            let map = map1d(cfg)?;
            let t = tower_of(cfg)?;
            let d = density_of(cfg, &t)?;
            let x0 = cfg.start(&System::Interval(map), seed)[0];
            let r = pesin_defect(&map, &t, &d, x0, &lyapunov_opts(cfg, seed)).map_err(run_err)?;
            Outcome::json(json!({ "report": r, "x0": x0 }))
        }
        Command::SrbRelation => {
            let map = map1d(cfg)?;
            let t = tower_of(cfg)?;
            let d = density_of(cfg, &t)?;
            let x0 = match cfg.map.x0 {
                Some(p) => p[0],
                None => t.base().mid(),
            };
            let opts = RelationOptions {
                n: cfg.run.n,
                seed,
                ..RelationOptions::default()
            };
            let r = induced_lyapunov_check(&t, &d, &map, x0, &opts).map_err(run_err)?;
            let passed = r.pass;
            Outcome::check(json!({ "report": r, "x0": x0 }), passed)
        }
        Command::SweepStability => {
            let spec = SweepSpec {
                family: cfg.family(),
                deltas: cfg.sweep.deltas.clone(),
                seeds: cfg.run.seeds.clone(),
                n: cfg.run.n,
                burn_in: cfg.run.burn_in,
                grid: cfg.run.hist_grid,
                distance: cfg.distance(),
            };
            if cfg.sweep.family == FamilyKind::Constant {
                return Err(Failure::Config(
                    "stability sweeps need family henon, tent or bernoulli".into(),
                ));
            }
            let report = stability_sweep(&spec).map_err(run_err)?;
            Outcome {
                results: json!({ "summary": report.summary }),
                artifact: Artifact::Csv(output::sweep_csv(&report.rows)),
                passed: true,
                job_runtimes: Some(report.runtimes),
            }
        }
        Command::SweepEntropy => {
            let family = match cfg.sweep.family {
                FamilyKind::Bernoulli => EntropyFamily::Bernoulli,
                FamilyKind::Tent => EntropyFamily::Tent {
                    orbit: orbit_opts(cfg, seed),
                },
                FamilyKind::Constant => EntropyFamily::Constant(Box::new(tower_of(cfg)?)),
                FamilyKind::Henon => {
                    return Err(Failure::Config(
                        "entropy sweeps need family bernoulli, tent or constant".into(),
                    ))
                }
            };
            let report = entropy_continuity_sweep(&family, &cfg.sweep.thetas, cfg.run.grid).map_err(run_err)?;
            Outcome::json(to_value(report))
        }
        Command::SweepUniformity => {
            let tn = tower_of(cfg)?;
            let t0 = load_tower(cfg.tower.reference.as_deref(), "tower.reference")?;
            let u = uniformity_diagnostics(&tn, &t0, cfg.sweep.cutoff, cfg.sweep.depth).map_err(run_err)?;
            Outcome::json(to_value(u))
        }
    })
}

/// The envelope written next to (or as) every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub tool_version: String,
    pub command: Command,
    pub config: RunConfig,
    pub seed: u64,
    pub prng: String,
    pub results: Value,
}

fn out_path(requested: Option<&Path>, cmd: Command) -> PathBuf {
    let requested = requested
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(cmd.default_file()));
    match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(requested.file_name().unwrap_or(requested.as_os_str())),
        _ => requested,
    }
}

fn perform(
    cmd: Command,
    cfg: RunConfig,
    out: Option<&Path>,
    jobs: Option<usize>,
    quiet: bool,
) -> Result<bool, Failure> {
    let started = std::time::SystemTime::now();
    let clock = Instant::now();
    let outcome = match jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Failure::Config(format!("--jobs: {e}")))?;
            pool.install(|| execute(cmd, &cfg))
        }
        None => execute(cmd, &cfg),
    }?;
    let envelope = Envelope {
        tool_version: srbkit::VERSION.to_string(),
        command: cmd,
        seed: cfg.run.seed,
        config: cfg,
        prng: PRNG_NAME.to_string(),
        results: outcome.results,
    };
    let mut path = out_path(out, cmd);
    if !matches!(outcome.artifact, Artifact::Json) && path.extension().is_some_and(|e| e == "json") {
        path.set_extension(outcome.artifact.extension());
    }
    let meta = output::Meta {
        started_unix_seconds: started
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0.0, |d| d.as_secs_f64()),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        jobs: jobs.unwrap_or_else(rayon::current_num_threads),
        job_runtimes: outcome.job_runtimes,
    };
    let written = output::write(&path, &envelope, &outcome.artifact, &meta).map_err(Failure::Config)?;
    if !quiet {
        for p in written {
            eprintln!("wrote {}", p.display());
        }
    }
    if !outcome.passed {
        eprintln!("{}: check failed", cmd.name());
    }
    Ok(outcome.passed)
}

fn replay(artifact: &Path, out: Option<&Path>, jobs: Option<usize>, quiet: bool) -> Result<bool, Failure> {
    let src = std::fs::read_to_string(artifact).map_err(|e| Failure::Config(format!("{}: {e}", artifact.display())))?;
    let env: Envelope = serde_json::from_str(&src)
        .map_err(|e| Failure::Config(format!("{}: not an artifact: {e}", artifact.display())))?;
    env.config.validate()?;
    let default = artifact.with_file_name(format!(
        "replay_{}",
        PathBuf::from(env.command.default_file())
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    ));
    perform(env.command, env.config, Some(out.unwrap_or(&default)), jobs, quiet)
}

fn dispatch(cli: Cli) -> Result<bool, Failure> {
    let cmd = match cli.group {
        Group::Replay { artifact } => return replay(&artifact, cli.flags.out.as_deref(), cli.jobs, cli.quiet),
        Group::Tower { op } => match op {
            TowerOp::Validate => Command::TowerValidate,
            TowerOp::Solve => Command::TowerSolve,
            TowerOp::Entropy => Command::TowerEntropy,
            TowerOp::Stats => Command::TowerStats,
        },
        Group::Model { op } => match op {
            ModelOp::Orbit => Command::ModelOrbit,
            ModelOp::FixedPoint => Command::ModelFixedPoint,
            ModelOp::TrapCheck => Command::ModelTrapCheck,
            ModelOp::Manifold => Command::ModelManifold,
            ModelOp::BuildTower => Command::ModelBuildTower,
        },
        Group::Srb { op } => match op {
            SrbOp::Measure => Command::SrbMeasure,
            SrbOp::Lyapunov => Command::SrbLyapunov,
            SrbOp::Birkhoff => Command::SrbBirkhoff,
            SrbOp::Saturate => Command::SrbSaturate,
            SrbOp::Pesin => Command::SrbPesin,
            SrbOp::Relation => Command::SrbRelation,
        },
        Group::Sweep { op } => match op {
            SweepOp::Stability => Command::SweepStability,
            SweepOp::Entropy => Command::SweepEntropy,
            SweepOp::Uniformity => Command::SweepUniformity,
        },
    };
    let mut cfg = match &cli.flags.config {
        Some(p) => config::load_config(p)?,
        None => RunConfig::default(),
    };
    cli.flags.apply(&mut cfg);
    cfg.validate()?;
    perform(cmd, cfg, cli.flags.out.as_deref(), cli.jobs, cli.quiet)
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}
