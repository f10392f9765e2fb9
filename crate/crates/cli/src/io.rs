//! Artifact file formats shared by the subcommands: detection output,
//! track output, and run manifests.

use std::path::Path;

use serde::{Deserialize, Serialize};

use flexpose::fmp::PoseCandidate;
use flexpose::{RunConfig, Scalar};

use crate::CliError;

/// One reported part placement. Shape fields are present for stage-2 results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartOut {
    pub x: f64,
    pub y: f64,
    pub level: usize,
    #[serde(rename = "type")]
    pub tau: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateOut {
    pub score: f64,
    pub parts: Vec<PartOut>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame: usize,
    pub stage1: Vec<CandidateOut>,
    pub stage2: Vec<CandidateOut>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectOutput {
    pub part_count: usize,
    pub frames: Vec<FrameDetections>,
}

/// Track output entry, one per frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackFrameOut {
    pub frame: usize,
    pub score: f64,
    pub parts: Vec<PartOut>,
}

pub fn candidate_out(c: &PoseCandidate<Scalar>) -> CandidateOut {
    let parts = c
        .parts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let st = c.states.as_ref().map(|s| &s[i]);
            PartOut {
                x: p.x,
                y: p.y,
                level: p.level,
                tau: p.tau,
                r: st.map(|s| s.r),
                theta: st.map(|s| s.theta),
                eta: st.map(|s| s.eta),
            }
        })
        .collect();
    CandidateOut { score: c.score, parts }
}

pub fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    wall_time_s: f64,
    config: std::collections::BTreeMap<&'static str, String>,
}

/// Write `<stem>.manifest.json` next to an output file, or `manifest.json`
/// inside an output directory.
pub fn write_manifest(
    command: &str,
    cfg: &RunConfig,
    out: &Path,
    started: std::time::Instant,
) -> Result<(), CliError> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        wall_time_s: started.elapsed().as_secs_f64(),
        config: cfg.entries().into_iter().collect(),
    };
    let path = if out.is_dir() {
        out.join("manifest.json")
    } else {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        out.with_file_name(name)
    };
    write_json(&manifest, &path)
}
