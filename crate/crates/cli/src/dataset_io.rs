//! Dataset file format: JSON lines with a header object on line 1 and one
//! object per episode after it. Floats carry 17 significant digits, so a
//! save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use cdp_core::dataset::{Episode, NormStats, OfflineDataset, ReturnConfig, Transition};

use crate::error::{CliError, Result};
use crate::jsonl::{from_line, to_line};

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NormWire {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub action_mean: Vec<f64>,
    pub action_std: Vec<f64>,
    pub v_min: f64,
    pub v_max: f64,
    pub floored_dims: Vec<usize>,
    pub degenerate_return_range: bool,
}

impl From<&NormStats> for NormWire {
    fn from(n: &NormStats) -> Self {
        NormWire {
            state_mean: n.state_mean.clone(),
            state_std: n.state_std.clone(),
            action_mean: n.action_mean.clone(),
            action_std: n.action_std.clone(),
            v_min: n.v_min,
            v_max: n.v_max,
            floored_dims: n.floored_dims.clone(),
            degenerate_return_range: n.degenerate_return_range,
        }
    }
}

impl From<NormWire> for NormStats {
    fn from(w: NormWire) -> Self {
        NormStats {
            state_mean: w.state_mean,
            state_std: w.state_std,
            action_mean: w.action_mean,
            action_std: w.action_std,
            v_min: w.v_min,
            v_max: w.v_max,
            floored_dims: w.floored_dims,
            degenerate_return_range: w.degenerate_return_range,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    version: u32,
    state_dim: usize,
    action_dim: usize,
    episode_count: usize,
    eta: f64,
    gamma: f64,
    norm: NormWire,
}

/// Episode wire form: `states` has one extra entry (the terminal next
/// state); `next_state[t]` is reconstructed as `states[t + 1]`.
#[derive(Debug, Serialize, Deserialize)]
struct EpisodeWire {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
}

pub fn save_dataset(path: &Path, dataset: &OfflineDataset) -> Result<()> {
    let cfg = dataset.return_config();
    let header = DatasetHeader {
        version: DATASET_VERSION,
        state_dim: dataset.state_dim(),
        action_dim: dataset.action_dim(),
        episode_count: dataset.episodes().len(),
        eta: cfg.eta,
        gamma: cfg.gamma,
        norm: NormWire::from(dataset.norm_stats()),
    };
    let mut out = to_line(&header)?;
    out.push('\n');
    for (e, ep) in dataset.episodes().iter().enumerate() {
        let mut states: Vec<Vec<f64>> = ep.transitions.iter().map(|t| t.state.clone()).collect();
        states.push(ep.transitions.last().unwrap().next_state.clone());
        // the chained form is only valid when consecutive transitions agree
        for (t, pair) in ep.transitions.windows(2).enumerate() {
            if pair[0].next_state != pair[1].state {
                return Err(CliError::Validation(format!(
                    "episode {e} step {t}: next_state does not chain to the following state"
                )));
            }
        }
        let wire = EpisodeWire {
            states,
            actions: ep.transitions.iter().map(|t| t.action.clone()).collect(),
            rewards: ep.transitions.iter().map(|t| t.reward).collect(),
            dones: ep.transitions.iter().map(|t| t.done).collect(),
        };
        out.push_str(&to_line(&wire)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<OfflineDataset> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| CliError::Validation(format!("{}: empty dataset file", path.display())))?;
    let header: DatasetHeader = from_line(first, 1)?;
    if header.version != DATASET_VERSION {
        return Err(CliError::Validation(format!(
            "unsupported dataset version {}",
            header.version
        )));
    }
    let mut episodes = Vec::with_capacity(header.episode_count);
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let wire: EpisodeWire = from_line(line, idx + 1)?;
        let len = wire.actions.len();
        if wire.states.len() != len + 1 || wire.rewards.len() != len || wire.dones.len() != len {
            return Err(CliError::Validation(format!(
                "line {}: inconsistent episode arrays",
                idx + 1
            )));
        }
        let transitions = (0..len)
            .map(|t| Transition {
                state: wire.states[t].clone(),
                action: wire.actions[t].clone(),
                reward: wire.rewards[t],
                next_state: wire.states[t + 1].clone(),
                done: wire.dones[t],
            })
            .collect();
        episodes.push(Episode { transitions });
    }
    if episodes.len() != header.episode_count {
        return Err(CliError::Validation(format!(
            "header announces {} episodes, file has {}",
            header.episode_count,
            episodes.len()
        )));
    }
    let cfg = ReturnConfig {
        eta: header.eta,
        gamma: header.gamma,
    };
    let ds = OfflineDataset::build_with_stats(episodes, cfg, header.norm.into())?;
    if ds.state_dim() != header.state_dim || ds.action_dim() != header.action_dim {
        return Err(CliError::Validation(
            "header dims disagree with episode contents".into(),
        ));
    }
    Ok(ds)
}
