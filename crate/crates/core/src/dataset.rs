//! Offline dataset model: episodes of transitions, per-state discounted
//! returns, window slicing for the trajectory generator, and normalization.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

/// Geometry of a trajectory window: `horizon + 1` consecutive
/// (state, action) pairs, flattened row-major as
/// `[s_0, a_0, s_1, a_1, ...]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub horizon: usize,
    pub state_dim: usize,
    pub action_dim: usize,
}

impl WindowSpec {
    pub fn new(horizon: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if horizon == 0 || state_dim == 0 || action_dim == 0 {
            return Err(CoreError::Config(format!(
                "window spec needs positive horizon and dims, got H={horizon} sd={state_dim} ad={action_dim}"
            )));
        }
        Ok(WindowSpec {
            horizon,
            state_dim,
            action_dim,
        })
    }

    pub fn pair_dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    pub fn flat_len(&self) -> usize {
        (self.horizon + 1) * self.pair_dim()
    }

    /// Flat range of the state at window position `j`.
    pub fn state_range(&self, j: usize) -> core::ops::Range<usize> {
        let start = j * self.pair_dim();
        start..start + self.state_dim
    }

    /// Flat range of the action at window position `j`.
    pub fn action_range(&self, j: usize) -> core::ops::Range<usize> {
        let start = j * self.pair_dim() + self.state_dim;
        start..start + self.action_dim
    }
}

/// One environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// An ordered list of transitions from one episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Episode {
    pub transitions: Vec<Transition>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Discounts for per-state returns (`eta`) and whole-trajectory returns
/// (`gamma`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnConfig {
    pub eta: f64,
    pub gamma: f64,
}

impl Default for ReturnConfig {
    fn default() -> Self {
        ReturnConfig {
            eta: 0.99,
            gamma: 0.99,
        }
    }
}

impl ReturnConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta", self.eta), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CoreError::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Per-state discounted returns `v_t = r_t + eta * v_{t+1}`, `v_T = r_T`.
pub fn compute_state_returns(episode: &Episode, cfg: &ReturnConfig) -> Result<Vec<f64>> {
    if episode.is_empty() {
        return Err(CoreError::Config("returns of an empty episode".into()));
    }
    let n = episode.len();
    let mut v = alloc::vec![0.0; n];
    v[n - 1] = episode.transitions[n - 1].reward;
    for t in (0..n - 1).rev() {
        v[t] = episode.transitions[t].reward + cfg.eta * v[t + 1];
    }
    Ok(v)
}

/// Whole-trajectory return `R = sum_t gamma^t r_t`, evaluated by the same
/// backward recursion as the per-state returns so that `gamma == eta`
/// implies `R == v_0` exactly.
pub fn trajectory_return(episode: &Episode, cfg: &ReturnConfig) -> Result<f64> {
    if episode.is_empty() {
        return Err(CoreError::Config("return of an empty episode".into()));
    }
    let mut r = 0.0;
    for t in (0..episode.len()).rev() {
        r = episode.transitions[t].reward + cfg.gamma * r;
    }
    Ok(r)
}

/// Per-dimension z-score statistics and the return range, computed once over
/// the whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub action_mean: Vec<f64>,
    pub action_std: Vec<f64>,
    pub v_min: f64,
    pub v_max: f64,
    /// Dimensions whose std hit the floor (state dims first, then action).
    pub floored_dims: Vec<usize>,
    pub degenerate_return_range: bool,
}

const STD_FLOOR: f64 = 1e-6;
const RETURN_RANGE_FLOOR: f64 = 1e-12;

impl NormStats {
    pub fn scale_return(&self, v: f64) -> f64 {
        let range = (self.v_max - self.v_min).max(RETURN_RANGE_FLOOR);
        (v - self.v_min) / range
    }

    pub fn unscale_return(&self, scaled: f64) -> f64 {
        let range = (self.v_max - self.v_min).max(RETURN_RANGE_FLOOR);
        self.v_min + scaled * range
    }

    pub fn normalize_state(&self, s: &[f64]) -> Vec<f64> {
        s.iter()
            .zip(self.state_mean.iter().zip(&self.state_std))
            .map(|(x, (m, sd))| (x - m) / sd)
            .collect()
    }

    pub fn denormalize_state(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.state_mean.iter().zip(&self.state_std))
            .map(|(x, (m, sd))| x * sd + m)
            .collect()
    }

    pub fn normalize_action(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(self.action_mean.iter().zip(&self.action_std))
            .map(|(x, (m, sd))| (x - m) / sd)
            .collect()
    }

    pub fn denormalize_action(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.action_mean.iter().zip(&self.action_std))
            .map(|(x, (m, sd))| x * sd + m)
            .collect()
    }
}

/// Episodes with precomputed per-state returns and normalization statistics.
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    state_dim: usize,
    action_dim: usize,
    episodes: Vec<Episode>,
    state_returns: Vec<Vec<f64>>,
    cfg: ReturnConfig,
    norm: NormStats,
}

impl OfflineDataset {
    pub fn build(episodes: Vec<Episode>, cfg: ReturnConfig) -> Result<Self> {
        cfg.validate()?;
        if episodes.is_empty() || episodes.iter().any(Episode::is_empty) {
            return Err(CoreError::Config(
                "dataset needs at least one nonempty episode and no empty ones".into(),
            ));
        }
        let state_dim = episodes[0].transitions[0].state.len();
        let action_dim = episodes[0].transitions[0].action.len();
        for (e, ep) in episodes.iter().enumerate() {
            for (t, tr) in ep.transitions.iter().enumerate() {
                if tr.state.len() != state_dim
                    || tr.action.len() != action_dim
                    || tr.next_state.len() != state_dim
                {
                    return Err(CoreError::Shape(format!(
                        "episode {e} step {t}: inconsistent dimensions"
                    )));
                }
            }
        }

        let state_returns: Result<Vec<Vec<f64>>> = episodes
            .iter()
            .map(|ep| compute_state_returns(ep, &cfg))
            .collect();
        let state_returns = state_returns?;
        let norm = Self::compute_norm(&episodes, &state_returns, state_dim, action_dim);
        Ok(OfflineDataset {
            state_dim,
            action_dim,
            episodes,
            state_returns,
            cfg,
            norm,
        })
    }

    /// Rebuild with previously computed stats (dataset file round trip).
    pub fn build_with_stats(
        episodes: Vec<Episode>,
        cfg: ReturnConfig,
        norm: NormStats,
    ) -> Result<Self> {
        let mut ds = Self::build(episodes, cfg)?;
        ds.norm = norm;
        Ok(ds)
    }

    fn compute_norm(
        episodes: &[Episode],
        returns: &[Vec<f64>],
        state_dim: usize,
        action_dim: usize,
    ) -> NormStats {
        let mut state_mean = alloc::vec![0.0; state_dim];
        let mut action_mean = alloc::vec![0.0; action_dim];
        let mut count = 0usize;
        for ep in episodes {
            for tr in &ep.transitions {
                for d in 0..state_dim {
                    state_mean[d] += tr.state[d];
                }
                for d in 0..action_dim {
                    action_mean[d] += tr.action[d];
                }
                count += 1;
            }
        }
        let n = count as f64;
        for m in state_mean.iter_mut().chain(action_mean.iter_mut()) {
            *m /= n;
        }
        let mut state_var = alloc::vec![0.0; state_dim];
        let mut action_var = alloc::vec![0.0; action_dim];
        for ep in episodes {
            for tr in &ep.transitions {
                for d in 0..state_dim {
                    let dx = tr.state[d] - state_mean[d];
                    state_var[d] += dx * dx;
                }
                for d in 0..action_dim {
                    let dx = tr.action[d] - action_mean[d];
                    action_var[d] += dx * dx;
                }
            }
        }
        let mut floored_dims = Vec::new();
        let mut std_of = |var: f64, dim_index: usize| {
            let s = libm::sqrt(var / n);
            if s < STD_FLOOR {
                floored_dims.push(dim_index);
                STD_FLOOR
            } else {
                s
            }
        };
        let state_std: Vec<f64> = state_var
            .iter()
            .enumerate()
            .map(|(d, v)| std_of(*v, d))
            .collect();
        let action_std: Vec<f64> = action_var
            .iter()
            .enumerate()
            .map(|(d, v)| std_of(*v, state_dim + d))
            .collect();

        let mut v_min = f64::INFINITY;
        let mut v_max = f64::NEG_INFINITY;
        for ep in returns {
            for v in ep {
                v_min = v_min.min(*v);
                v_max = v_max.max(*v);
            }
        }
        NormStats {
            state_mean,
            state_std,
            action_mean,
            action_std,
            v_min,
            v_max,
            floored_dims,
            degenerate_return_range: (v_max - v_min) < RETURN_RANGE_FLOOR,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn return_config(&self) -> ReturnConfig {
        self.cfg
    }

    pub fn norm_stats(&self) -> &NormStats {
        &self.norm
    }

    /// Raw per-state returns, one vector per episode.
    pub fn state_returns(&self) -> &[Vec<f64>] {
        &self.state_returns
    }

    pub fn transition_count(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    /// Min-max scale a raw return into `[0, 1]`.
    pub fn scale_return(&self, v: f64) -> f64 {
        self.norm.scale_return(v)
    }

    pub fn normalize_state(&self, s: &[f64]) -> Vec<f64> {
        self.norm.normalize_state(s)
    }

    pub fn denormalize_state(&self, z: &[f64]) -> Vec<f64> {
        self.norm.denormalize_state(z)
    }

    pub fn normalize_action(&self, a: &[f64]) -> Vec<f64> {
        self.norm.normalize_action(a)
    }

    pub fn denormalize_action(&self, z: &[f64]) -> Vec<f64> {
        self.norm.denormalize_action(z)
    }
}

/// An `H+1`-pair slice of one episode, flattened for the diffusion model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajWindow {
    pub values: Vec<f64>,
    /// Raw per-state return of the window's first state.
    pub start_return: f64,
    pub padded: bool,
    pub episode: usize,
    pub start: usize,
}

/// All windows of the dataset, one per transition, terminal pairs repeated
/// for tails shorter than the horizon. Values are raw environment units.
pub fn slice_windows(dataset: &OfflineDataset, horizon: usize) -> Result<Vec<TrajWindow>> {
    if horizon == 0 {
        return Err(CoreError::Config("window horizon must be >= 1".into()));
    }
    let spec = WindowSpec::new(horizon, dataset.state_dim(), dataset.action_dim())?;
    let mut out = Vec::with_capacity(dataset.transition_count());
    for (e, ep) in dataset.episodes().iter().enumerate() {
        let len = ep.len();
        for t in 0..len {
            let mut values = Vec::with_capacity(spec.flat_len());
            let mut padded = false;
            for j in 0..=horizon {
                let idx = if t + j < len {
                    t + j
                } else {
                    padded = true;
                    len - 1
                };
                let tr = &ep.transitions[idx];
                values.extend_from_slice(&tr.state);
                values.extend_from_slice(&tr.action);
            }
            out.push(TrajWindow {
                values,
                start_return: dataset.state_returns()[e][t],
                padded,
                episode: e,
                start: t,
            });
        }
    }
    Ok(out)
}

/// Z-score a window's states/actions using the dataset statistics.
pub fn normalize_window(dataset: &OfflineDataset, spec: &WindowSpec, window: &TrajWindow) -> TrajWindow {
    let mut values = window.values.clone();
    for j in 0..=spec.horizon {
        let sr = spec.state_range(j);
        let normed = dataset.normalize_state(&window.values[sr.clone()]);
        values[sr].copy_from_slice(&normed);
        let ar = spec.action_range(j);
        let normed = dataset.normalize_action(&window.values[ar.clone()]);
        values[ar].copy_from_slice(&normed);
    }
    TrajWindow {
        values,
        ..window.clone()
    }
}

/// Inverse of [`normalize_window`].
pub fn denormalize_window(dataset: &OfflineDataset, spec: &WindowSpec, window: &TrajWindow) -> TrajWindow {
    let mut values = window.values.clone();
    for j in 0..=spec.horizon {
        let sr = spec.state_range(j);
        let denormed = dataset.denormalize_state(&window.values[sr.clone()]);
        values[sr].copy_from_slice(&denormed);
        let ar = spec.action_range(j);
        let denormed = dataset.denormalize_action(&window.values[ar.clone()]);
        values[ar].copy_from_slice(&denormed);
    }
    TrajWindow {
        values,
        ..window.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn episode_from_rewards(rewards: &[f64]) -> Episode {
        Episode {
            transitions: rewards
                .iter()
                .enumerate()
                .map(|(t, r)| Transition {
                    state: vec![t as f64, 2.0 * t as f64],
                    action: vec![0.1 * t as f64],
                    reward: *r,
                    next_state: vec![t as f64 + 1.0, 2.0 * t as f64 + 1.0],
                    done: false,
                })
                .collect(),
        }
    }

    #[test]
    fn returns_match_brute_force_summation() {
        let ep = episode_from_rewards(&[1.0, 1.0, 1.0]);
        let cfg = ReturnConfig {
            eta: 0.5,
            gamma: 0.5,
        };
        let v = compute_state_returns(&ep, &cfg).unwrap();
        assert_eq!(v, vec![1.75, 1.5, 1.0]);
        // independent oracle: direct power series
        for t in 0..3 {
            let direct: f64 = (t..3).map(|i| libm::pow(0.5, (i - t) as f64) * 1.0).sum();
            assert!((v[t] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_eta_returns_instant_rewards() {
        let ep = episode_from_rewards(&[3.0, -1.0, 2.0]);
        let cfg = ReturnConfig {
            eta: 0.0,
            gamma: 0.0,
        };
        let v = compute_state_returns(&ep, &cfg).unwrap();
        assert_eq!(v, vec![3.0, -1.0, 2.0]);
    }

    #[test]
    fn terminal_return_is_terminal_reward() {
        let ep = episode_from_rewards(&[0.0, 0.0, 7.0]);
        let v = compute_state_returns(&ep, &ReturnConfig::default()).unwrap();
        assert_eq!(*v.last().unwrap(), 7.0);
    }

    #[test]
    fn trajectory_return_examples() {
        let ep = episode_from_rewards(&[1.0, 2.0, 3.0]);
        let undiscounted = ReturnConfig {
            eta: 1.0,
            gamma: 1.0,
        };
        assert_eq!(trajectory_return(&ep, &undiscounted).unwrap(), 6.0);
        let myopic = ReturnConfig {
            eta: 0.0,
            gamma: 0.0,
        };
        assert_eq!(trajectory_return(&ep, &myopic).unwrap(), 1.0);
        let ep2 = episode_from_rewards(&[1.0, 1.0]);
        let cfg = ReturnConfig {
            eta: 0.9,
            gamma: 0.9,
        };
        assert!((trajectory_return(&ep2, &cfg).unwrap() - 1.9).abs() < 1e-15);
    }

    #[test]
    fn trajectory_return_equals_v0_when_gamma_is_eta() {
        let ep = episode_from_rewards(&[0.3, -0.2, 1.5, 0.0, 2.0]);
        let cfg = ReturnConfig {
            eta: 0.97,
            gamma: 0.97,
        };
        let v = compute_state_returns(&ep, &cfg).unwrap();
        assert_eq!(trajectory_return(&ep, &cfg).unwrap(), v[0]);
    }

    #[test]
    fn window_slicing_counts_and_padding() {
        let ds = OfflineDataset::build(
            vec![episode_from_rewards(&[1.0, 0.0, 2.0])],
            ReturnConfig::default(),
        )
        .unwrap();
        let windows = slice_windows(&ds, 2).unwrap();
        assert_eq!(windows.len(), 3);
        assert!(!windows[0].padded);
        assert!(windows[1].padded);
        assert!(windows[2].padded);
        // padded tail repeats the terminal pair
        let spec = WindowSpec::new(2, 2, 1).unwrap();
        let last = &windows[2];
        let term_state = &ds.episodes()[0].transitions[2].state;
        for j in 0..=2 {
            assert_eq!(&last.values[spec.state_range(j)], term_state.as_slice());
        }
    }

    #[test]
    fn windows_carry_start_returns_and_stay_in_episode() {
        let ds = OfflineDataset::build(
            vec![
                episode_from_rewards(&[1.0, 0.0]),
                episode_from_rewards(&[5.0, 5.0, 5.0]),
            ],
            ReturnConfig::default(),
        )
        .unwrap();
        let windows = slice_windows(&ds, 3).unwrap();
        assert_eq!(windows.len(), 5);
        for w in &windows {
            assert_eq!(w.start_return, ds.state_returns()[w.episode][w.start]);
        }
        assert!(windows.iter().take(2).all(|w| w.episode == 0));
        assert!(windows.iter().skip(2).all(|w| w.episode == 1));
    }

    #[test]
    fn normalize_denormalize_round_trip() {
        let ds = OfflineDataset::build(
            vec![episode_from_rewards(&[1.0, 2.0, 0.5, 0.1])],
            ReturnConfig::default(),
        )
        .unwrap();
        let spec = WindowSpec::new(2, 2, 1).unwrap();
        let windows = slice_windows(&ds, 2).unwrap();
        for w in &windows {
            let roundtrip = denormalize_window(&ds, &spec, &normalize_window(&ds, &spec, w));
            for (a, b) in roundtrip.values.iter().zip(&w.values) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn return_scaling_hits_endpoints_and_midpoint() {
        // eta = 0 keeps v_t = r_t, so v values are exactly {2, 4, 6}
        let ep = episode_from_rewards(&[2.0, 4.0, 6.0]);
        let ds = OfflineDataset::build(
            vec![ep],
            ReturnConfig {
                eta: 0.0,
                gamma: 0.0,
            },
        )
        .unwrap();
        assert_eq!(ds.scale_return(2.0), 0.0);
        assert_eq!(ds.scale_return(4.0), 0.5);
        assert_eq!(ds.scale_return(6.0), 1.0);
    }

    #[test]
    fn degenerate_dimension_is_floored_and_flagged() {
        let mut ep = episode_from_rewards(&[1.0, 1.0, 1.0]);
        for tr in &mut ep.transitions {
            tr.state[1] = 42.0; // constant dimension
        }
        let ds = OfflineDataset::build(vec![ep], ReturnConfig::default()).unwrap();
        assert!(ds.norm_stats().floored_dims.contains(&1));
        assert_eq!(ds.norm_stats().state_std[1], 1e-6);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(OfflineDataset::build(vec![], ReturnConfig::default()).is_err());
        assert!(OfflineDataset::build(vec![Episode::default()], ReturnConfig::default()).is_err());
    }
}
