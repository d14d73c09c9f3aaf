//! Deterministic toy environments and the behavior policies that manufacture
//! offline datasets with controllable expert ratios.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::dataset::{Episode, OfflineDataset, ReturnConfig, Transition};
use crate::error::{CoreError, Result};
use crate::rng::SeededRng;

/// Environment interface used by the planner and dataset generators.
/// Stepping is a pure function of (state, action).
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Infinity-norm bound actions are clipped to.
    fn action_bound(&self) -> f64;
    fn reset(&self, rng: &mut SeededRng) -> Vec<f64>;
    fn step(&self, state: &[f64], action: &[f64]) -> (Vec<f64>, f64, bool);
}

/// Axis-aligned wall segment. A thin barrier: motion crossing the segment's
/// line within its extent is blocked along that axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Wall {
    Vertical { x: f64, y0: f64, y1: f64 },
    Horizontal { y: f64, x0: f64, x1: f64 },
}

/// Maze geometry: walls, goal disc, start distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeLayout {
    pub walls: Vec<Wall>,
    pub goal_center: [f64; 2],
    pub goal_radius: f64,
    pub start_center: [f64; 2],
    pub start_jitter: f64,
}

impl Default for MazeLayout {
    /// U-shaped detour: a vertical wall at x = 0.5 spanning y in [0, 0.7]
    /// forces paths from the start corner to the goal corner over the top.
    fn default() -> Self {
        MazeLayout {
            walls: alloc::vec![Wall::Vertical {
                x: 0.5,
                y0: 0.0,
                y1: 0.7,
            }],
            goal_center: [0.9, 0.1],
            goal_radius: 0.05,
            start_center: [0.1, 0.1],
            start_jitter: 0.04,
        }
    }
}

/// Point-mass maze on the unit square. Reward 1 on reaching the goal disc
/// (episode ends), 0 otherwise; a dense variant pays negative goal distance
/// for debugging.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMazeDesk {
    pub layout: MazeLayout,
    pub max_step: f64,
    pub dense_reward: bool,
    pub horizon_cap: usize,
}

impl Default for PointMazeDesk {
    fn default() -> Self {
        PointMazeDesk {
            layout: MazeLayout::default(),
            max_step: 0.05,
            dense_reward: false,
            horizon_cap: 200,
        }
    }
}

impl PointMazeDesk {
    pub fn in_goal(&self, state: &[f64]) -> bool {
        let dx = state[0] - self.layout.goal_center[0];
        let dy = state[1] - self.layout.goal_center[1];
        libm::sqrt(dx * dx + dy * dy) <= self.layout.goal_radius
    }

    fn clip_action(&self, action: &[f64]) -> [f64; 2] {
        [
            action[0].clamp(-self.max_step, self.max_step),
            action[1].clamp(-self.max_step, self.max_step),
        ]
    }

    fn crosses(from: f64, to: f64, line: f64) -> bool {
        (from < line && to >= line) || (from > line && to <= line)
    }

    /// Axis-sequential motion: x first against vertical walls at the current
    /// y, then y against horizontal walls at the updated x. A blocked axis
    /// keeps its coordinate.
    fn move_point(&self, state: &[f64], action: [f64; 2]) -> [f64; 2] {
        let (x, y) = (state[0], state[1]);
        let mut nx = (x + action[0]).clamp(0.0, 1.0);
        for wall in &self.layout.walls {
            if let Wall::Vertical { x: wx, y0, y1 } = wall {
                if y >= *y0 && y <= *y1 && Self::crosses(x, nx, *wx) {
                    nx = x;
                    break;
                }
            }
        }
        let mut ny = (y + action[1]).clamp(0.0, 1.0);
        for wall in &self.layout.walls {
            if let Wall::Horizontal { y: wy, x0, x1 } = wall {
                if nx >= *x0 && nx <= *x1 && Self::crosses(y, ny, *wy) {
                    ny = y;
                    break;
                }
            }
        }
        [nx, ny]
    }
}

impl Environment for PointMazeDesk {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn action_bound(&self) -> f64 {
        self.max_step
    }

    fn reset(&self, rng: &mut SeededRng) -> Vec<f64> {
        let j = self.layout.start_jitter;
        let x = (self.layout.start_center[0] + rng.uniform_in(-j, j)).clamp(0.0, 1.0);
        let y = (self.layout.start_center[1] + rng.uniform_in(-j, j)).clamp(0.0, 1.0);
        alloc::vec![x, y]
    }

    fn step(&self, state: &[f64], action: &[f64]) -> (Vec<f64>, f64, bool) {
        if self.in_goal(state) {
            return (state.to_vec(), 1.0, true);
        }
        let next = self.move_point(state, self.clip_action(action));
        let next = alloc::vec![next[0], next[1]];
        if self.in_goal(&next) {
            (next, 1.0, true)
        } else if self.dense_reward {
            let dx = next[0] - self.layout.goal_center[0];
            let dy = next[1] - self.layout.goal_center[1];
            let r = -libm::sqrt(dx * dx + dy * dy);
            (next, r, false)
        } else {
            (next, 0.0, false)
        }
    }
}

/// Data-collection policy families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Noisy waypoint follower, noise std 0.005.
    Expert,
    /// Waypoint follower with noise std 0.02 and 20% random actions.
    Medium,
    /// Uniform actions.
    Random,
}

impl PolicyKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "expert" => Ok(PolicyKind::Expert),
            "medium" => Ok(PolicyKind::Medium),
            "random" => Ok(PolicyKind::Random),
            other => Err(CoreError::Config(format!("unknown policy kind '{other}'"))),
        }
    }
}

/// Per-episode behavior policy state.
pub trait Policy {
    fn act(&mut self, state: &[f64], rng: &mut SeededRng) -> Vec<f64>;
}

struct WaypointFollower {
    waypoints: Vec<[f64; 2]>,
    next: usize,
    max_step: f64,
    noise_std: f64,
    random_fraction: f64,
}

const WAYPOINT_SWITCH_RADIUS: f64 = 0.08;

impl Policy for WaypointFollower {
    fn act(&mut self, state: &[f64], rng: &mut SeededRng) -> Vec<f64> {
        if self.random_fraction > 0.0 && rng.uniform() < self.random_fraction {
            return alloc::vec![
                rng.uniform_in(-self.max_step, self.max_step),
                rng.uniform_in(-self.max_step, self.max_step),
            ];
        }
        while self.next + 1 < self.waypoints.len() {
            let w = self.waypoints[self.next];
            let d = libm::sqrt(
                (state[0] - w[0]) * (state[0] - w[0]) + (state[1] - w[1]) * (state[1] - w[1]),
            );
            if d < WAYPOINT_SWITCH_RADIUS {
                self.next += 1;
            } else {
                break;
            }
        }
        let target = self.waypoints[self.next];
        let dir = [target[0] - state[0], target[1] - state[1]];
        let norm = libm::sqrt(dir[0] * dir[0] + dir[1] * dir[1]).max(1e-9);
        let scale = self.max_step / norm;
        let mut a = [dir[0] * scale, dir[1] * scale];
        if self.noise_std > 0.0 {
            a[0] += self.noise_std * rng.normal();
            a[1] += self.noise_std * rng.normal();
        }
        alloc::vec![
            a[0].clamp(-self.max_step, self.max_step),
            a[1].clamp(-self.max_step, self.max_step),
        ]
    }
}

struct RandomPolicy {
    max_step: f64,
}

impl Policy for RandomPolicy {
    fn act(&mut self, _state: &[f64], rng: &mut SeededRng) -> Vec<f64> {
        alloc::vec![
            rng.uniform_in(-self.max_step, self.max_step),
            rng.uniform_in(-self.max_step, self.max_step),
        ]
    }
}

/// Route around the default maze: up the left side, across the top, down to
/// the goal.
fn default_waypoints(env: &PointMazeDesk) -> Vec<[f64; 2]> {
    alloc::vec![
        [0.15, 0.85],
        [0.85, 0.85],
        env.layout.goal_center,
    ]
}

pub fn make_policy(kind: PolicyKind, env: &PointMazeDesk) -> Box<dyn Policy> {
    match kind {
        PolicyKind::Expert => Box::new(WaypointFollower {
            waypoints: default_waypoints(env),
            next: 0,
            max_step: env.max_step,
            noise_std: 0.005,
            random_fraction: 0.0,
        }),
        PolicyKind::Medium => Box::new(WaypointFollower {
            waypoints: default_waypoints(env),
            next: 0,
            max_step: env.max_step,
            noise_std: 0.02,
            random_fraction: 0.2,
        }),
        PolicyKind::Random => Box::new(RandomPolicy {
            max_step: env.max_step,
        }),
    }
}

/// Roll one policy episode; ends on the goal or at the horizon cap.
pub fn collect_episode(env: &PointMazeDesk, kind: PolicyKind, rng: &mut SeededRng) -> Episode {
    let mut policy = make_policy(kind, env);
    let mut state = env.reset(rng);
    let mut transitions = Vec::new();
    for _ in 0..env.horizon_cap {
        let action = policy.act(&state, rng);
        let (next, reward, done) = env.step(&state, &action);
        transitions.push(Transition {
            state: state.clone(),
            action,
            reward,
            next_state: next.clone(),
            done,
        });
        state = next;
        if done {
            break;
        }
    }
    Episode { transitions }
}

/// Generate an offline dataset from seeded policy rollouts. Episode `e`
/// draws from a child stream forked in order, so datasets are reproducible
/// and episodes independent.
pub fn generate_dataset(
    env: &PointMazeDesk,
    kind: PolicyKind,
    episodes: usize,
    seed: u64,
    cfg: ReturnConfig,
) -> Result<OfflineDataset> {
    if episodes == 0 {
        return Err(CoreError::Config("need at least one episode".into()));
    }
    let mut parent = SeededRng::from_seed(seed);
    let eps: Vec<Episode> = (0..episodes)
        .map(|_| {
            let mut child = parent.fork();
            collect_episode(env, kind, &mut child)
        })
        .collect();
    OfflineDataset::build(eps, cfg)
}

/// Fraction of episodes that reach the goal (terminal reward 1).
pub fn success_rate(dataset: &OfflineDataset) -> f64 {
    let hits = dataset
        .episodes()
        .iter()
        .filter(|ep| ep.transitions.last().map(|t| t.reward >= 1.0 && t.done) == Some(true))
        .count();
    hits as f64 / dataset.episodes().len() as f64
}

/// Mix specification mirroring the paper-style expert-ratio protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSpec {
    pub base_kind: PolicyKind,
    pub expert_ratio: f64,
    pub total_episodes: usize,
}

/// Replace a `ratio` fraction of `base`'s episodes with uniformly sampled
/// `expert` episodes (both without replacement, order preserved), keeping
/// `base`'s episode budget; statistics are recomputed over the mixture.
pub fn mix_datasets(
    base: &OfflineDataset,
    expert: &OfflineDataset,
    ratio: f64,
    seed: u64,
) -> Result<OfflineDataset> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(CoreError::Config(format!("mix ratio {ratio} outside [0, 1]")));
    }
    if base.state_dim() != expert.state_dim() || base.action_dim() != expert.action_dim() {
        return Err(CoreError::Shape("mixing datasets of different dims".into()));
    }
    let n = base.episodes().len();
    let n_expert = libm::round(ratio * n as f64) as usize;
    if n_expert > expert.episodes().len() {
        return Err(CoreError::Config(format!(
            "need {n_expert} expert episodes, dataset has {}",
            expert.episodes().len()
        )));
    }
    let mut rng = SeededRng::from_seed(seed);
    let mut keep = rng.permutation(n);
    keep.truncate(n - n_expert);
    keep.sort_unstable();
    let mut take = rng.permutation(expert.episodes().len());
    take.truncate(n_expert);
    take.sort_unstable();

    let mut episodes: Vec<Episode> = keep.iter().map(|i| base.episodes()[*i].clone()).collect();
    episodes.extend(take.iter().map(|i| expert.episodes()[*i].clone()));
    OfflineDataset::build(episodes, base.return_config())
}

/// Mean trajectory return over a dataset's episodes.
pub fn mean_trajectory_return(dataset: &OfflineDataset) -> Result<f64> {
    let cfg = dataset.return_config();
    let mut sum = 0.0;
    for ep in dataset.episodes() {
        sum += crate::dataset::trajectory_return(ep, &cfg)?;
    }
    Ok(sum / dataset.episodes().len() as f64)
}
