//! Evaluation: seeded planner rollouts, score anchoring against measured
//! random/expert references, and report/record emission.

use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use cdp_core::analysis::{discounted_return, ScoreReport};
use cdp_core::dataset::{trajectory_return, ReturnConfig};
use cdp_core::env::{collect_episode, PointMazeDesk, PolicyKind};
use cdp_core::planner::{rollout, EpisodeRecord, PlannerConfig, PlannerContext};
use cdp_core::rng::SeededRng;

use crate::checkpoint::Checkpoint;
use crate::error::{CliError, Result};

/// Per-environment score anchors, measured once and cached.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Anchors {
    pub random_ref: f64,
    pub expert_ref: f64,
    pub episodes: usize,
    pub seed_base: u64,
}

/// Mean trajectory return of a policy over seeded episodes.
pub fn measure_policy_return(
    env: &PointMazeDesk,
    kind: PolicyKind,
    episodes: usize,
    seed_base: u64,
    gamma: f64,
) -> f64 {
    let cfg = ReturnConfig { eta: gamma, gamma };
    let mut sum = 0.0;
    for e in 0..episodes {
        let mut rng = SeededRng::from_seed(seed_base.wrapping_add(e as u64));
        let ep = collect_episode(env, kind, &mut rng);
        sum += trajectory_return(&ep, &cfg).unwrap_or(0.0);
    }
    sum / episodes as f64
}

pub fn measure_anchors(env: &PointMazeDesk, episodes: usize, seed_base: u64, gamma: f64) -> Anchors {
    Anchors {
        random_ref: measure_policy_return(env, PolicyKind::Random, episodes, seed_base, gamma),
        expert_ref: measure_policy_return(env, PolicyKind::Expert, episodes, seed_base, gamma),
        episodes,
        seed_base,
    }
}

/// Read cached anchors or measure and cache them.
pub fn load_or_measure_anchors(
    path: &Path,
    env: &PointMazeDesk,
    episodes: usize,
    seed_base: u64,
    gamma: f64,
) -> Result<Anchors> {
    if path.exists() {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("read {}: {e}", path.display())))?;
        return serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())));
    }
    let anchors = measure_anchors(env, episodes, seed_base, gamma);
    let text = serde_json::to_string_pretty(&anchors)
        .map_err(|e| CliError::Io(format!("serialize anchors: {e}")))?;
    fs::write(path, text).map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))?;
    Ok(anchors)
}

/// Evaluate a checkpoint over the given seeds. Rollouts are independent and
/// spread over at most `threads` workers; results are ordered by seed, so
/// the outcome does not depend on the thread count.
pub fn evaluate(
    ckpt: &Checkpoint,
    env: &PointMazeDesk,
    seeds: &[u64],
    rho: f64,
    max_episode_steps: usize,
    gamma: f64,
    threads: usize,
    anchors: &Anchors,
    fingerprint: String,
) -> Result<(ScoreReport, Vec<EpisodeRecord>)> {
    if seeds.is_empty() {
        return Err(CliError::Validation("need at least one evaluation seed".into()));
    }
    let schedule = ckpt.schedule()?;
    let plan_cfg = PlannerConfig {
        horizon: ckpt.spec.horizon,
        rho,
        max_episode_steps,
    };
    plan_cfg.validate().map_err(CliError::from)?;

    let workers = threads.max(1).min(seeds.len());
    let results: Mutex<Vec<Option<EpisodeRecord>>> = Mutex::new(vec![None; seeds.len()]);
    let first_error: Mutex<Option<CliError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for w in 0..workers {
            let results = &results;
            let first_error = &first_error;
            let schedule = &schedule;
            let plan_cfg = &plan_cfg;
            scope.spawn(move || {
                let ctx = PlannerContext {
                    models: &ckpt.models,
                    schedule,
                    spec: &ckpt.spec,
                    norm: &ckpt.norm,
                };
                for (i, seed) in seeds.iter().enumerate() {
                    if i % workers != w {
                        continue;
                    }
                    match rollout(env, &ctx, plan_cfg, *seed) {
                        Ok(rec) => {
                            results.lock().unwrap()[i] = Some(rec);
                        }
                        Err(e) => {
                            let mut slot = first_error.lock().unwrap();
                            if slot.is_none() {
                                *slot = Some(CliError::from(e));
                            }
                            return;
                        }
                    }
                }
            });
        }
    });

    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let records: Vec<EpisodeRecord> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("rollout missing"))
        .collect();

    let returns: Vec<f64> = records
        .iter()
        .map(|r| discounted_return(&r.rewards, gamma))
        .collect();
    let report = ScoreReport::from_returns(
        returns,
        anchors.random_ref,
        anchors.expert_ref,
        fingerprint,
    )?;
    Ok((report, records))
}

/// Write the per-seed report CSV: one row per seed plus a summary row.
pub fn write_report_csv(path: &Path, seeds: &[u64], report: &ScoreReport) -> Result<()> {
    let mut out = String::from("seed,return\n");
    for (s, r) in seeds.iter().zip(&report.returns) {
        out.push_str(&format!("{s},{r}\n"));
    }
    out.push_str(&format!(
        "# mean={} std={} normalized={} fingerprint={}\n",
        report.mean, report.std, report.normalized, report.fingerprint
    ));
    fs::write(path, out).map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdp_core::analysis::normalized_score;

    #[test]
    fn anchors_are_cached_and_reused() {
        let env = PointMazeDesk::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("anchors.json");
        let a = load_or_measure_anchors(&path, &env, 10, 100, 0.99).unwrap();
        assert!(path.exists());
        let b = load_or_measure_anchors(&path, &env, 99, 999, 0.99).unwrap();
        assert_eq!(a, b, "second call must read the cache");
        assert!(a.expert_ref > a.random_ref);
    }

    #[test]
    fn policy_anchors_normalize_to_their_own_scores() {
        let env = PointMazeDesk::default();
        let anchors = measure_anchors(&env, 20, 7, 0.99);
        let zero = normalized_score(anchors.random_ref, anchors.random_ref, anchors.expert_ref)
            .unwrap();
        let hundred =
            normalized_score(anchors.expert_ref, anchors.random_ref, anchors.expert_ref).unwrap();
        assert_eq!(zero, 0.0);
        assert_eq!(hundred, 100.0);
    }
}
