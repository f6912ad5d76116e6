//! Run configuration: a TOML document with fixed sections and strict keys.
//!
//! ```toml
//! [run]
//! seed = 7
//! n = 1000000
//!
//! [map]
//! kind = "henon"
//! a = 1.4
//! b = 0.3
//! ```
//!
//! Every section and key is optional; missing values take the defaults of
//! [`RunConfig::default`]. Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use srbkit::models::{HenonMap, LinearMap2, Map1D, Noise, System, TrappingRegion};
use srbkit::stability::{Distance, Family};
use srbkit::tower::{IntegrationMeasure, SolveMethod};
use srbkit::DistortionBudget;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("{section}.{key} = {value} is out of range ({expected})")]
    OutOfRange {
        section: &'static str,
        key: &'static str,
        value: String,
        expected: &'static str,
    },
    #[error("{key}: file {path} does not exist")]
    MissingFile { key: &'static str, path: String },
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

impl ConfigError {
    /// Name of the offending key, if the error concerns one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key, .. } => Some(key),
            ConfigError::OutOfRange { key, .. } | ConfigError::MissingFile { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Seeds of multi-seed commands.
    pub seeds: Vec<u64>,
    pub n: usize,
    pub burn_in: usize,
    /// Cells of tower densities and interval saturations.
    pub grid: usize,
    /// Cells per axis of orbit histograms.
    pub hist_grid: usize,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(rename = "R_max")]
    pub r_max: u32,
    pub refine: usize,
    pub method: SolveMethod,
    pub measure: IntegrationMeasure,
    pub renorm_every: usize,
    pub noise: Noise,
    pub samples_per_branch: usize,
    /// Monte-Carlo samples of the deep-return check.
    pub n_samples: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            seeds: (1..=8).collect(),
            n: 1_000_000,
            burn_in: 1000,
            grid: srbkit::tower::DEFAULT_GRID,
            hist_grid: 256,
            tol: 1e-10,
            max_iter: 100_000,
            r_max: srbkit::tower::DEFAULT_R_MAX,
            refine: 16,
            method: SolveMethod::Power,
            measure: IntegrationMeasure::Invariant,
            renorm_every: 10,
            noise: Noise::Jitter,
            samples_per_branch: 32,
            n_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Henon,
    Doubling,
    Tent,
    Logistic,
    Quadratic,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSection {
    pub kind: MapKind,
    /// Hénon `a`, or the quadratic parameter.
    pub a: f64,
    pub b: f64,
    pub slope: f64,
    pub matrix: [[f64; 2]; 2],
    /// Starting point; seeded from `run.seed` when absent.
    pub x0: Option<[f64; 2]>,
}

impl Default for MapSection {
    fn default() -> Self {
        MapSection {
            kind: MapKind::Henon,
            a: 1.4,
            b: 0.3,
            slope: 2.0,
            matrix: [[2.0, 0.0], [0.0, 0.5]],
            x0: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TowerSection {
    pub path: Option<String>,
    /// Second tower for uniformity diagnostics.
    pub reference: Option<String>,
    /// Base of `model build-tower`; the map's domain when absent.
    pub base: Option<[f64; 2]>,
    pub min_branch_len: Option<f64>,
}

/// Replaces the budget of a loaded tower.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub beta: Option<f64>,
    #[serde(rename = "C0")]
    pub c0: Option<f64>,
    #[serde(rename = "C1")]
    pub c1: Option<f64>,
    #[serde(rename = "C2")]
    pub c2: Option<f64>,
}

impl BudgetSection {
    pub fn is_set(&self) -> bool {
        self != &BudgetSection::default()
    }

    /// `base` with the configured constants substituted.
    pub fn apply(&self, base: &DistortionBudget) -> Result<DistortionBudget, srbkit::TowerError> {
        DistortionBudget::new(
            self.c.unwrap_or(base.c),
            self.beta.unwrap_or(base.beta),
            self.c0.unwrap_or(base.c0),
            self.c1.unwrap_or(base.c1),
            self.c2.unwrap_or(base.c2),
        )
    }
}

/// Quadrilateral containing the Hénon attractor at `(1.4, 0.3)`.
pub const DEFAULT_TRAP: [[f64; 2]; 4] = [[-1.33, 0.42], [1.32, 0.133], [1.245, -0.14], [-1.06, -0.5]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrappingSection {
    pub polygon: Vec<[f64; 2]>,
    pub n_boundary_samples: usize,
    pub n_interior_samples: usize,
    pub n_steps: usize,
}

impl Default for TrappingSection {
    fn default() -> Self {
        TrappingSection {
            polygon: DEFAULT_TRAP.to_vec(),
            n_boundary_samples: 1000,
            n_interior_samples: 10_000,
            n_steps: 100,
        }
    }
}

impl TrappingSection {
    pub fn region(&self) -> TrappingRegion {
        TrappingRegion::new(self.polygon.clone(), self.n_boundary_samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldSection {
    pub arc_length: f64,
    pub n_points: usize,
}

impl Default for ManifoldSection {
    fn default() -> Self {
        ManifoldSection {
            arc_length: 4.0,
            n_points: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Henon,
    Tent,
    Bernoulli,
    /// Entropy sweeps only: the tower of `tower.path` for every parameter.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    W1,
    SlicedW1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub family: FamilyKind,
    /// Base value of the swept parameter; the map section's when absent.
    pub base: Option<f64>,
    pub deltas: Vec<f64>,
    pub distance: DistanceKind,
    pub n_directions: usize,
    /// Parameters of entropy sweeps.
    pub thetas: Vec<f64>,
    /// Return-time cutoff of uniformity diagnostics.
    #[serde(rename = "N")]
    pub cutoff: u32,
    pub depth: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            family: FamilyKind::Henon,
            base: None,
            deltas: vec![0.0, -1e-4, -1e-3, -1e-2],
            distance: DistanceKind::SlicedW1,
            n_directions: 16,
            thetas: (1..=19).map(|k| f64::from(k) / 20.0).collect(),
            cutoff: 8,
            depth: 1,
        }
    }
}

/// Deep-return checks of `tower stats`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub k: Vec<usize>,
    #[serde(rename = "N")]
    pub cutoffs: Vec<u32>,
}

impl Default for StatsSection {
    fn default() -> Self {
        StatsSection {
            k: vec![1, 2, 3],
            cutoffs: (2..=8).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservableSection {
    /// Birkhoff observable in the expression grammar.
    pub expr: String,
}

impl Default for ObservableSection {
    fn default() -> Self {
        ObservableSection { expr: "logjac".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub map: MapSection,
    pub tower: TowerSection,
    pub budget: BudgetSection,
    pub trapping: TrappingSection,
    pub manifold: ManifoldSection,
    pub sweep: SweepSection,
    pub stats: StatsSection,
    pub observable: ObservableSection,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Parses and validates a configuration. File paths are resolved against
/// `dir` and made absolute.
pub fn parse_config(src: &str, dir: Option<&Path>) -> Result<RunConfig, ConfigError> {
    let mut cfg: RunConfig = toml::from_str(src).map_err(|e| {
        let line = e.span().map_or(0, |s| line_of(src, s.start));
        let msg = e.message().to_string();
        match msg
            .strip_prefix("unknown field `")
            .and_then(|rest| rest.split('`').next())
        {
            Some(key) => ConfigError::UnknownKey {
                key: key.to_string(),
                line,
            },
            None => ConfigError::Syntax { line, msg },
        }
    })?;
    if let Some(dir) = dir {
        for p in [&mut cfg.tower.path, &mut cfg.tower.reference].into_iter().flatten() {
            let joined = dir.join(&*p);
            *p = std::fs::canonicalize(&joined)
                .unwrap_or(joined)
                .to_string_lossy()
                .into_owned();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates the configuration at `path`.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    parse_config(&src, Some(&dir))
}

struct Check<'a> {
    section: &'static str,
    err: &'a mut Option<ConfigError>,
}

impl Check<'_> {
    fn real(&mut self, key: &'static str, v: f64, ok: bool, expected: &'static str) {
        if self.err.is_none() && !(v.is_finite() && ok) {
            *self.err = Some(ConfigError::OutOfRange {
                section: self.section,
                key,
                value: v.to_string(),
                expected,
            });
        }
    }

    fn int(&mut self, key: &'static str, v: usize, lo: usize, hi: usize, expected: &'static str) {
        if self.err.is_none() && !(lo..=hi).contains(&v) {
            *self.err = Some(ConfigError::OutOfRange {
                section: self.section,
                key,
                value: v.to_string(),
                expected,
            });
        }
    }
}

impl RunConfig {
    /// Range and file checks. Reports the first offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut err = None;
        {
            let r = &self.run;
            let mut c = Check {
                section: "run",
                err: &mut err,
            };
            c.int("n", r.n, 1, 1 << 34, "1 <= n <= 2^34");
            c.int("burn_in", r.burn_in, 0, 1 << 34, "0 <= burn_in <= 2^34");
            c.int("grid", r.grid, 1, 1 << 24, "1 <= grid <= 2^24");
            c.int("hist_grid", r.hist_grid, 1, 1 << 14, "1 <= hist_grid <= 2^14");
            c.real("tol", r.tol, r.tol > 0.0 && r.tol < 1.0, "0 < tol < 1");
            c.int("max_iter", r.max_iter, 1, 1 << 32, "max_iter >= 1");
            c.int("R_max", r.r_max as usize, 1, 4096, "1 <= R_max <= 4096");
            c.int("refine", r.refine, 1, 256, "1 <= refine <= 256");
            c.int("renorm_every", r.renorm_every, 1, 1000, "1 <= renorm_every <= 1000");
            c.int(
                "samples_per_branch",
                r.samples_per_branch,
                2,
                1 << 16,
                "samples_per_branch >= 2",
            );
            c.int("n_samples", r.n_samples, 1, 1 << 32, "n_samples >= 1");
            c.int("seeds", r.seeds.len(), 1, 1 << 16, "at least one seed");
        }
        {
            let m = &self.map;
            let mut c = Check {
                section: "map",
                err: &mut err,
            };
            match m.kind {
                MapKind::Henon => {
                    c.real("a", m.a, (1.0..=2.0).contains(&m.a), "1 <= a <= 2");
                    c.real("b", m.b, m.b > 0.0, "b > 0");
                }
                MapKind::Quadratic => c.real("a", m.a, m.a > 0.0 && m.a <= 2.0, "0 < a <= 2"),
                MapKind::Tent => c.real("slope", m.slope, m.slope > 0.0 && m.slope <= 2.0, "0 < slope <= 2"),
                MapKind::Linear => {
                    let ok = m.matrix.iter().flatten().all(|v| v.is_finite());
                    c.real("matrix", if ok { 0.0 } else { f64::NAN }, ok, "finite entries");
                }
                MapKind::Doubling | MapKind::Logistic => {}
            }
            if let Some(x0) = m.x0 {
                let ok = x0.iter().all(|v| v.is_finite());
                c.real("x0", if ok { 0.0 } else { f64::NAN }, ok, "finite coordinates");
            }
        }
        {
            let b = &self.budget;
            let mut c = Check {
                section: "budget",
                err: &mut err,
            };
            if let Some(beta) = b.beta {
                c.real("beta", beta, beta > 0.0 && beta < 1.0, "0 < beta < 1");
            }
            for (key, v) in [("C", b.c), ("C0", b.c0), ("C1", b.c1), ("C2", b.c2)] {
                if let Some(v) = v {
                    c.real(key, v, v >= 0.0, "nonnegative");
                }
            }
        }
        {
            let t = &self.tower;
            let mut c = Check {
                section: "tower",
                err: &mut err,
            };
            if let Some([lo, hi]) = t.base {
                c.real("base", hi - lo, lo.is_finite() && hi > lo, "lo < hi");
            }
            if let Some(v) = t.min_branch_len {
                c.real("min_branch_len", v, v > 0.0, "positive");
            }
        }
        {
            let t = &self.trapping;
            let mut c = Check {
                section: "trapping",
                err: &mut err,
            };
            c.int("polygon", t.polygon.len(), 3, 1 << 16, "at least 3 vertices");
            for &v in t.polygon.iter().flatten() {
                c.real("polygon", v, true, "finite coordinates");
            }
            let area = t.region().area();
            c.real("polygon", area, area > 0.0, "positive enclosed area");
            c.int(
                "n_boundary_samples",
                t.n_boundary_samples,
                1,
                1 << 24,
                "n_boundary_samples >= 1",
            );
            c.int(
                "n_interior_samples",
                t.n_interior_samples,
                0,
                1 << 24,
                "n_interior_samples <= 2^24",
            );
            c.int("n_steps", t.n_steps, 1, 1 << 24, "n_steps >= 1");
        }
        {
            let m = &self.manifold;
            let mut c = Check {
                section: "manifold",
                err: &mut err,
            };
            c.real("arc_length", m.arc_length, m.arc_length > 0.0, "positive");
            c.int("n_points", m.n_points, 2, 1 << 24, "n_points >= 2");
        }
        {
            let s = &self.sweep;
            let mut c = Check {
                section: "sweep",
                err: &mut err,
            };
            if let Some(b) = s.base {
                c.real("base", b, true, "finite");
            }
            let has_zero = s.deltas.contains(&0.0);
            c.real(
                "deltas",
                if has_zero { 0.0 } else { f64::NAN },
                has_zero,
                "must include 0",
            );
            for &d in &s.deltas {
                c.real("deltas", d, true, "finite");
            }
            if s.distance == DistanceKind::SlicedW1 {
                c.int("n_directions", s.n_directions, 4, 1 << 16, "n_directions >= 4");
            }
            c.int("thetas", s.thetas.len(), 1, 1 << 16, "at least one parameter");
            for &t in &s.thetas {
                c.real("thetas", t, true, "finite");
            }
            c.int("N", s.cutoff as usize, 1, 4096, "1 <= N <= 4096");
            c.int("depth", s.depth, 1, 4, "1 <= depth <= 4");
        }
        {
            let s = &self.stats;
            let mut c = Check {
                section: "stats",
                err: &mut err,
            };
            c.int("k", s.k.len(), 1, 64, "one to 64 values");
            for &k in &s.k {
                c.int("k", k, 1, 64, "1 <= k <= 64");
            }
            c.int("N", s.cutoffs.len(), 1, 4096, "at least one value");
            for &n in &s.cutoffs {
                c.int("N", n as usize, 1, 4096, "1 <= N <= 4096");
            }
        }
        if let Some(e) = err {
            return Err(e);
        }
        if let Err(e) = srbkit::expr::Expr::parse(&self.observable.expr) {
            return Err(ConfigError::Syntax {
                line: 0,
                msg: format!("observable.expr: {e}"),
            });
        }
        for (key, p) in [
            ("tower.path", &self.tower.path),
            ("tower.reference", &self.tower.reference),
        ] {
            if let Some(p) = p {
                if !Path::new(p).exists() {
                    return Err(ConfigError::MissingFile { key, path: p.clone() });
                }
            }
        }
        Ok(())
    }

    /// The configured interval map.
    pub fn map1d(&self) -> Result<Map1D, srbkit::models::MapError> {
        match self.map.kind {
            MapKind::Doubling => Ok(Map1D::Doubling),
            MapKind::Logistic => Ok(Map1D::Logistic),
            MapKind::Tent => Map1D::tent(self.map.slope),
            MapKind::Quadratic => Map1D::quadratic(self.map.a),
            MapKind::Henon | MapKind::Linear => Err(srbkit::models::MapError::UnknownMap(format!(
                "{:?} is not an interval map",
                self.map.kind
            ))),
        }
    }

    pub fn system(&self) -> Result<System, srbkit::models::MapError> {
        match self.map.kind {
            MapKind::Henon => Ok(System::Henon(HenonMap::new(self.map.a, self.map.b)?)),
            MapKind::Linear => Ok(System::Linear(LinearMap2 {
                matrix: self.map.matrix,
            })),
            _ => Ok(System::Interval(self.map1d()?)),
        }
    }

    /// `map.x0`, or a start drawn from `seed`.
    pub fn start(&self, sys: &System, seed: u64) -> [f64; 2] {
        self.map.x0.unwrap_or_else(|| sys.seeded_start(seed))
    }

    /// Family of stability sweeps; the base parameter falls back to the map section.
    pub fn family(&self) -> Family {
        let s = &self.sweep;
        match s.family {
            FamilyKind::Henon => Family::Henon {
                a: s.base.unwrap_or(self.map.a),
                b: self.map.b,
            },
            FamilyKind::Tent => Family::Tent {
                slope: s.base.unwrap_or(self.map.slope),
            },
            FamilyKind::Bernoulli | FamilyKind::Constant => Family::Bernoulli {
                theta: s.base.unwrap_or(0.5),
            },
        }
    }

    pub fn distance(&self) -> Distance {
        match self.sweep.distance {
            DistanceKind::W1 => Distance::W1,
            DistanceKind::SlicedW1 => Distance::SlicedW1 {
                n_directions: self.sweep.n_directions,
            },
        }
    }

    /// The configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let c = parse_config("", None).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.run.grid, 4096);
        assert_eq!(c.run.burn_in, 1000);
        assert_eq!(c.run.tol, 1e-10);
    }

    #[test]
    fn beta_out_of_range() {
        let e = parse_config("[budget]\nbeta = 1.5\n", None).unwrap_err();
        assert!(matches!(e, ConfigError::OutOfRange { key: "beta", .. }), "{e}");
    }

    #[test]
    fn misspelled_key_is_named_with_its_line() {
        let e = parse_config("[run]\nseed = 1\nR_maxx = 10\n", None).unwrap_err();
        assert_eq!(
            e,
            ConfigError::UnknownKey {
                key: "R_maxx".into(),
                line: 3
            }
        );
        let e = parse_config("[runn]\n", None).unwrap_err();
        assert_eq!(e.key(), Some("runn"));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let e = parse_config("[run]\nseed = = 1\n", None).unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 2, .. }), "{e}");
    }

    #[test]
    fn missing_tower_file() {
        let e = parse_config("[tower]\npath = \"/nonexistent/x.tower\"\n", None).unwrap_err();
        assert!(matches!(e, ConfigError::MissingFile { key: "tower.path", .. }));
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.map.x0 = Some([0.1, 0.2]);
        c.budget.beta = Some(0.25);
        let back = parse_config(&c.to_toml(), None).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn sweep_needs_zero_delta() {
        let e = parse_config("[sweep]\ndeltas = [0.1]\n", None).unwrap_err();
        assert_eq!(e.key(), Some("deltas"));
    }
}
