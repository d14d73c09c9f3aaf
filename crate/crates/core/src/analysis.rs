//! Scoring and analysis artifacts: normalized scores, reward histograms,
//! plan-execution consistency, scatter exports, and the Welch statistic.

use alloc::string::String;
use alloc::vec::Vec;

use crate::contrastive::cosine_sim;
use crate::dataset::{NormStats, OfflineDataset, WindowSpec};
use crate::error::{CoreError, Result};
use crate::planner::EpisodeRecord;

/// Discounted return of one episode's reward sequence, Horner form.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut r = 0.0;
    for reward in rewards.iter().rev() {
        r = reward + gamma * r;
    }
    r
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator; 0 for fewer than 2 points).
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    libm::sqrt(ss / (xs.len() - 1) as f64)
}

/// `100 * (score - random_ref) / (expert_ref - random_ref)`.
pub fn normalized_score(score: f64, random_ref: f64, expert_ref: f64) -> Result<f64> {
    let span = expert_ref - random_ref;
    if span.abs() < 1e-12 {
        return Err(CoreError::Numeric(
            "score anchors are degenerate (expert == random)".into(),
        ));
    }
    Ok(100.0 * (score - random_ref) / span)
}

/// Per-seed returns with aggregate statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub returns: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub normalized: f64,
    pub fingerprint: String,
}

impl ScoreReport {
    pub fn from_returns(
        returns: Vec<f64>,
        random_ref: f64,
        expert_ref: f64,
        fingerprint: String,
    ) -> Result<Self> {
        let m = mean(&returns);
        Ok(ScoreReport {
            std: sample_std(&returns),
            normalized: normalized_score(m, random_ref, expert_ref)?,
            mean: m,
            returns,
            fingerprint,
        })
    }
}

/// Equal-width histogram; the top edge is inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub min: f64,
    pub max: f64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn top_bin_count(&self) -> u64 {
        *self.counts.last().unwrap_or(&0)
    }
}

/// Bin `values` into `bins` equal-width cells over their observed range.
/// Empty input gives all-zero bins over [0, 0]; a degenerate range puts
/// everything in the first bin.
pub fn reward_histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(CoreError::Config("histogram needs at least one bin".into()));
    }
    let mut counts = alloc::vec![0u64; bins];
    if values.is_empty() {
        return Ok(Histogram {
            counts,
            min: 0.0,
            max: 0.0,
        });
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / bins as f64;
    for v in values {
        let idx = if width <= 0.0 {
            0
        } else {
            let raw = ((v - min) / width) as usize;
            raw.min(bins - 1)
        };
        counts[idx] += 1;
    }
    Ok(Histogram { counts, min, max })
}

/// Fixed-range variant used when two histograms must share bins.
pub fn reward_histogram_in_range(values: &[f64], bins: usize, min: f64, max: f64) -> Result<Histogram> {
    if bins == 0 {
        return Err(CoreError::Config("histogram needs at least one bin".into()));
    }
    if !(max > min) {
        return Err(CoreError::Config("histogram range must be increasing".into()));
    }
    let mut counts = alloc::vec![0u64; bins];
    let width = (max - min) / bins as f64;
    for v in values {
        let clamped = v.clamp(min, max);
        let raw = ((clamped - min) / width) as usize;
        counts[raw.min(bins - 1)] += 1;
    }
    Ok(Histogram { counts, min, max })
}

/// Rows are episodes, columns lookahead offsets `1..=L`; entries average the
/// cosine similarity between the planned state at offset `j` and the state
/// actually reached `j` steps later, in z-scored space. Episodes too short
/// for some lookahead produce a truncated row, reported alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyMatrix {
    pub rows: Vec<Vec<f64>>,
    /// (episode index, available lookahead) for truncated rows.
    pub truncated: Vec<(usize, usize)>,
}

impl ConsistencyMatrix {
    /// Column mean over rows that reach the requested lookahead.
    pub fn column_mean(&self, j: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter_map(|r| r.get(j - 1).copied())
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(mean(&vals))
        }
    }
}

pub fn consistency_matrix(
    records: &[EpisodeRecord],
    spec: &WindowSpec,
    norm: &NormStats,
    lookahead: usize,
) -> Result<ConsistencyMatrix> {
    if lookahead == 0 || lookahead > spec.horizon {
        return Err(CoreError::Config(alloc::format!(
            "lookahead must be in 1..={}, got {lookahead}",
            spec.horizon
        )));
    }
    let mut rows = Vec::with_capacity(records.len());
    let mut truncated = Vec::new();
    for (e, rec) in records.iter().enumerate() {
        let steps = rec.actions.len();
        let mut row = Vec::new();
        for j in 1..=lookahead {
            // planning times t with a realized state at t + j
            let mut sims = Vec::new();
            for t in 0..steps {
                if t + j >= rec.states.len() {
                    break;
                }
                let planned = &rec.planned[t][spec.state_range(j)];
                let realized = &rec.states[t + j];
                let zp = norm.normalize_state(planned);
                let zr = norm.normalize_state(realized);
                // z-scored states can sit at the origin; skip those pairs
                if crate::tensor::norm(&zp) < 1e-9 || crate::tensor::norm(&zr) < 1e-9 {
                    continue;
                }
                sims.push(cosine_sim(&zp, &zr)?);
            }
            if sims.is_empty() {
                truncated.push((e, j - 1));
                break;
            }
            row.push(mean(&sims));
        }
        rows.push(row);
    }
    Ok(ConsistencyMatrix { rows, truncated })
}

/// One scatter row: 2-D coordinates and the value attached to them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

/// Dataset scatter: every pool state with its raw per-state return.
pub fn dataset_scatter(dataset: &OfflineDataset) -> Vec<ScatterPoint> {
    let mut out = Vec::with_capacity(dataset.transition_count());
    for (e, ep) in dataset.episodes().iter().enumerate() {
        for (t, tr) in ep.transitions.iter().enumerate() {
            out.push(ScatterPoint {
                x: tr.state[0],
                y: tr.state[1],
                value: dataset.state_returns()[e][t],
            });
        }
    }
    out
}

/// Rollout scatter: every visited state with the reward collected there.
pub fn records_scatter(records: &[EpisodeRecord]) -> Vec<ScatterPoint> {
    let mut out = Vec::new();
    for rec in records {
        for (t, r) in rec.rewards.iter().enumerate() {
            out.push(ScatterPoint {
                x: rec.states[t][0],
                y: rec.states[t][1],
                value: *r,
            });
        }
    }
    out
}

/// Welch's t statistic and Welch-Satterthwaite degrees of freedom for the
/// one-sided hypothesis mean(a) > mean(b).
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(CoreError::Config(
            "Welch test needs at least two samples per side".into(),
        ));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (sa, sb) = (sample_std(a), sample_std(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = sa * sa / na;
    let vb = sb * sb / nb;
    let denom = libm::sqrt(va + vb);
    if denom < 1e-300 {
        // identical constant samples: no evidence either way
        return Ok((0.0, na + nb - 2.0));
    }
    let t = (ma - mb) / denom;
    let df = (va + vb) * (va + vb)
        / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok((t, df))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn normalized_score_anchors() {
        assert_eq!(normalized_score(0.1, 0.1, 0.9).unwrap(), 0.0);
        assert_eq!(normalized_score(0.9, 0.1, 0.9).unwrap(), 100.0);
        assert_eq!(normalized_score(0.5, 0.1, 0.9).unwrap(), 50.0);
        assert!(normalized_score(0.5, 0.3, 0.3).is_err());
    }

    #[test]
    fn discounted_return_matches_direct_sum() {
        let rewards = [0.0, 0.5, 1.0, 0.25];
        let gamma = 0.9;
        let direct: f64 = rewards
            .iter()
            .enumerate()
            .map(|(t, r)| libm::pow(gamma, t as f64) * r)
            .sum();
        assert!((discounted_return(&rewards, gamma) - direct).abs() < 1e-12);
    }

    #[test]
    fn histogram_edge_cases() {
        let empty = reward_histogram(&[], 4).unwrap();
        assert_eq!(empty.counts, vec![0, 0, 0, 0]);
        assert_eq!(empty.total(), 0);

        let single = reward_histogram(&[0.7, 0.7, 0.7], 4).unwrap();
        assert_eq!(single.counts.iter().filter(|c| **c > 0).count(), 1);
        assert_eq!(single.total(), 3);
    }

    #[test]
    fn histogram_counts_sum_and_uniform_flatness() {
        let mut rng = crate::rng::SeededRng::from_seed(5);
        let n = 40_000;
        let values: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let bins = 8;
        let h = reward_histogram(&values, bins).unwrap();
        assert_eq!(h.total(), n as u64);
        // multinomial 3-sigma bound per bin
        let p = 1.0 / bins as f64;
        let expect = n as f64 * p;
        let sigma = libm::sqrt(n as f64 * p * (1.0 - p));
        for c in &h.counts {
            assert!(
                (*c as f64 - expect).abs() < 3.0 * sigma,
                "bin count {c} vs {expect} +- {sigma}"
            );
        }
    }

    fn identity_norm() -> NormStats {
        NormStats {
            state_mean: vec![0.0, 0.0],
            state_std: vec![1.0, 1.0],
            action_mean: vec![0.0],
            action_std: vec![1.0],
            v_min: 0.0,
            v_max: 1.0,
            floored_dims: vec![],
            degenerate_return_range: false,
        }
    }

    #[test]
    fn consistency_matrix_hand_example() {
        // 2-step episode, lookahead 1; identity normalization makes the
        // arithmetic direct
        let spec = WindowSpec::new(2, 2, 1).unwrap();
        // planned window at t=0: states (1,0), (0,1), (1,1)
        let planned0 = vec![1.0, 0.0, 9.0, 0.0, 1.0, 9.0, 1.0, 1.0, 9.0];
        // planned window at t=1: states (0,1), (1,0), (0,0) -> unused offsets ok
        let planned1 = vec![0.0, 1.0, 9.0, 1.0, 0.0, 9.0, 0.5, 0.5, 9.0];
        let rec = EpisodeRecord {
            seed: 0,
            states: vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 0.0]],
            actions: vec![vec![0.0], vec![0.0]],
            rewards: vec![0.0, 0.0],
            planned: vec![planned0, planned1],
            reached_done: false,
        };
        let m = consistency_matrix(&[rec], &spec, &identity_norm(), 2).unwrap();
        // offset 1: t=0 planned (0,1) vs realized (1,1): cos = 1/sqrt(2);
        //           t=1 planned (1,0) vs realized (1,0): cos = 1
        let expect_j1 = (1.0 / libm::sqrt(2.0) + 1.0) / 2.0;
        assert!((m.rows[0][0] - expect_j1).abs() < 1e-12);
        // offset 2: only t=0 valid: planned (1,1) vs realized (1,0):
        let expect_j2 = 1.0 / libm::sqrt(2.0);
        assert!((m.rows[0][1] - expect_j2).abs() < 1e-12);
        assert!(m.truncated.is_empty());
    }

    #[test]
    fn perfect_foresight_saturates_at_one() {
        let spec = WindowSpec::new(2, 2, 1).unwrap();
        let states = vec![vec![0.5, 0.5], vec![0.6, 0.4], vec![0.7, 0.3]];
        let mut planned = Vec::new();
        for t in 0..2 {
            let mut w = vec![0.0; spec.flat_len()];
            for j in 0..=2 {
                let idx = (t + j).min(2);
                w[spec.state_range(j)].copy_from_slice(&states[idx]);
            }
            planned.push(w);
        }
        let rec = EpisodeRecord {
            seed: 1,
            states,
            actions: vec![vec![0.0], vec![0.0]],
            rewards: vec![0.0, 0.0],
            planned,
            reached_done: false,
        };
        let m = consistency_matrix(&[rec], &spec, &identity_norm(), 1).unwrap();
        assert!((m.rows[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_plans_score_zero() {
        let spec = WindowSpec::new(1, 2, 1).unwrap();
        let mut w = vec![0.0; spec.flat_len()];
        w[spec.state_range(1)].copy_from_slice(&[0.0, 1.0]);
        let rec = EpisodeRecord {
            seed: 2,
            states: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            actions: vec![vec![0.0]],
            rewards: vec![0.0],
            planned: vec![w],
            reached_done: false,
        };
        let m = consistency_matrix(&[rec], &spec, &identity_norm(), 1).unwrap();
        assert_eq!(m.rows[0][0], 0.0);
    }

    #[test]
    fn short_episode_truncates_and_flags() {
        let spec = WindowSpec::new(3, 2, 1).unwrap();
        let mut w = vec![0.5; spec.flat_len()];
        w[spec.state_range(1)].copy_from_slice(&[1.0, 1.0]);
        let rec = EpisodeRecord {
            seed: 3,
            states: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            actions: vec![vec![0.0]],
            rewards: vec![0.0],
            planned: vec![w],
            reached_done: true,
        };
        let m = consistency_matrix(&[rec], &spec, &identity_norm(), 3).unwrap();
        assert_eq!(m.rows[0].len(), 1); // only lookahead 1 available
        assert_eq!(m.truncated, vec![(0, 1)]);
    }

    #[test]
    fn welch_t_detects_a_clear_gap() {
        let a: Vec<f64> = (0..20).map(|i| 1.0 + 0.01 * i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| 0.2 + 0.01 * i as f64).collect();
        let (t, df) = welch_t(&a, &b).unwrap();
        assert!(t > 10.0, "t = {t}");
        assert!(df > 10.0);
        let (t_rev, _) = welch_t(&b, &a).unwrap();
        assert!((t + t_rev).abs() < 1e-12);
    }

    #[test]
    fn scatter_row_counts() {
        let rec = EpisodeRecord {
            seed: 0,
            states: vec![vec![0.1, 0.2], vec![0.3, 0.4]],
            actions: vec![vec![0.0]],
            rewards: vec![1.0],
            planned: vec![vec![]],
            reached_done: true,
        };
        let pts = records_scatter(&[rec]);
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].value, 1.0);
    }
}
