use std::path::{Path, PathBuf};

use serde::Serialize;
use srbkit::models::Point2;
use srbkit::srb::EmpiricalMeasure;
use srbkit::stability::StabilityRow;

use crate::{Command, Envelope};

/// Main artifact of a command.
pub enum Artifact {
    /// The envelope itself.
    Json,
    /// CSV rows; the envelope goes to a sidecar.
    Csv(Vec<u8>),
    /// A tower definition; the envelope goes to a sidecar.
    Text(String),
}

impl Artifact {
    pub fn extension(&self) -> &'static str {
        match self {
            Artifact::Json => "json",
            Artifact::Csv(_) => "csv",
            Artifact::Text(_) => "tower",
        }
    }
}

pub(crate) fn kind_of(cmd: Command) -> Artifact {
    match cmd {
        Command::ModelOrbit | Command::SrbMeasure | Command::SrbSaturate | Command::SweepStability => {
            Artifact::Csv(Vec::new())
        }
        Command::ModelBuildTower => Artifact::Text(String::new()),
        _ => Artifact::Json,
    }
}

/// Wall-clock data kept out of the reproducible artifacts.
#[derive(Serialize)]
pub struct Meta {
    pub started_unix_seconds: f64,
    pub elapsed_seconds: f64,
    pub jobs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub job_runtimes: Option<Vec<f64>>,
}

fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

#[derive(Serialize)]
struct Cell {
    cell_x: f64,
    cell_y: f64,
    weight: f64,
}

pub fn measure_csv(m: &EmpiricalMeasure) -> Vec<u8> {
    csv_bytes(m.atoms().map(|(p, weight)| Cell {
        cell_x: p[0],
        cell_y: p[1],
        weight,
    }))
}

pub fn orbit_csv(points: &[Point2]) -> Vec<u8> {
    #[derive(Serialize)]
    struct Step {
        step: usize,
        x: f64,
        y: f64,
    }
    csv_bytes(
        points
            .iter()
            .enumerate()
            .map(|(step, p)| Step { step, x: p[0], y: p[1] }),
    )
}

pub fn sweep_csv(rows: &[StabilityRow]) -> Vec<u8> {
    csv_bytes(rows)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn put(path: &Path, bytes: &[u8]) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}

/// Writes the artifact, its sidecar if any, and the metadata file. Returns
/// the paths written, artifact first.
pub fn write(path: &Path, envelope: &Envelope, artifact: &Artifact, meta: &Meta) -> Result<Vec<PathBuf>, String> {
    let mut json = serde_json::to_string_pretty(envelope).map_err(|e| e.to_string())?;
    json.push('\n');
    let mut written = vec![path.to_path_buf()];
    match artifact {
        Artifact::Json => put(path, json.as_bytes())?,
        Artifact::Csv(bytes) => put(path, bytes)?,
        Artifact::Text(text) => put(path, text.as_bytes())?,
    }
    if !matches!(artifact, Artifact::Json) {
        let sidecar = with_suffix(path, ".json");
        if sidecar == path {
            return Err(format!("{}: artifact and sidecar would collide", path.display()));
        }
        put(&sidecar, json.as_bytes())?;
        written.push(sidecar);
    }
    let meta_path = with_suffix(path, ".meta.json");
    put(
        &meta_path,
        serde_json::to_string_pretty(meta)
            .map_err(|e| e.to_string())?
            .as_bytes(),
    )?;
    written.push(meta_path);
    Ok(written)
}
