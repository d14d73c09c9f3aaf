//! Episode-record files: a header line with the evaluation context, then one
//! JSON line per rollout, planned windows included for consistency analysis.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use cdp_core::dataset::{NormStats, WindowSpec};
use cdp_core::planner::EpisodeRecord;

use crate::dataset_io::NormWire;
use crate::error::{CliError, Result};
use crate::jsonl::{from_line, to_line};

pub const RECORDS_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct RecordsHeader {
    version: u32,
    horizon: usize,
    state_dim: usize,
    action_dim: usize,
    rho: f64,
    fingerprint: String,
    norm: NormWire,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordWire {
    seed: u64,
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    planned: Vec<Vec<f64>>,
    reached_done: bool,
}

/// Evaluation context bundled with the records.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordsFile {
    pub spec: WindowSpec,
    pub rho: f64,
    pub fingerprint: String,
    pub norm: NormStats,
    pub records: Vec<EpisodeRecord>,
}

pub fn save_records(path: &Path, file: &RecordsFile) -> Result<()> {
    let header = RecordsHeader {
        version: RECORDS_VERSION,
        horizon: file.spec.horizon,
        state_dim: file.spec.state_dim,
        action_dim: file.spec.action_dim,
        rho: file.rho,
        fingerprint: file.fingerprint.clone(),
        norm: NormWire::from(&file.norm),
    };
    let mut out = to_line(&header)?;
    out.push('\n');
    for r in &file.records {
        let wire = RecordWire {
            seed: r.seed,
            states: r.states.clone(),
            actions: r.actions.clone(),
            rewards: r.rewards.clone(),
            planned: r.planned.clone(),
            reached_done: r.reached_done,
        };
        out.push_str(&to_line(&wire)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<RecordsFile> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| CliError::Validation(format!("{}: empty records file", path.display())))?;
    let header: RecordsHeader = from_line(first, 1)?;
    if header.version != RECORDS_VERSION {
        return Err(CliError::Validation(format!(
            "unsupported records version {}",
            header.version
        )));
    }
    let spec = WindowSpec::new(header.horizon, header.state_dim, header.action_dim)?;
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let wire: RecordWire = from_line(line, idx + 1)?;
        records.push(EpisodeRecord {
            seed: wire.seed,
            states: wire.states,
            actions: wire.actions,
            rewards: wire.rewards,
            planned: wire.planned,
            reached_done: wire.reached_done,
        });
    }
    Ok(RecordsFile {
        spec,
        rho: header.rho,
        fingerprint: header.fingerprint,
        norm: header.norm.into(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip() {
        let file = RecordsFile {
            spec: WindowSpec::new(2, 2, 1).unwrap(),
            rho: 0.25,
            fingerprint: "deadbeef".into(),
            norm: NormStats {
                state_mean: vec![0.1, 0.2],
                state_std: vec![1.0, 2.0],
                action_mean: vec![0.0],
                action_std: vec![0.5],
                v_min: 0.0,
                v_max: 1.0,
                floored_dims: vec![],
                degenerate_return_range: false,
            },
            records: vec![EpisodeRecord {
                seed: 42,
                states: vec![vec![0.3, 0.4], vec![0.5, 0.6]],
                actions: vec![vec![0.01]],
                rewards: vec![1.0],
                planned: vec![vec![0.0; 9]],
                reached_done: true,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        save_records(&path, &file).unwrap();
        let back = load_records(&path).unwrap();
        assert_eq!(file, back);
    }
}
