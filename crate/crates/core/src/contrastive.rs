//! Contrastive machinery: soft positive/negative membership by return,
//! sample-set construction (return-only and dynamics-aware), the projector,
//! and the horizon-weighted contrastive loss.

use alloc::format;
use alloc::vec::Vec;

use crate::dataset::{OfflineDataset, WindowSpec};
use crate::error::{CoreError, Result, SampleSide};
use crate::graph::{Graph, NodeId};
use crate::kmeans::{build_clusters, cluster_transitions, nearest_centroid, Clustering, TransitionMatrix};
use crate::mlp::{Activation, MlpParams};
use crate::models::BLOCK_PROJECTOR;
use crate::rng::SeededRng;
use crate::tensor::{dot, norm};

/// How contrastive sample sets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Positives and negatives from the whole pool by return alone.
    Sr,
    /// Positives restricted to clusters reachable from the query state's
    /// cluster under the empirical transition matrix.
    Srd,
}

/// Thresholds, sampling sizes, and clustering knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveConfig {
    /// Positive threshold on [0, 1]-scaled returns.
    pub xi: f64,
    /// Negative threshold; `xi >= zeta`, the gap forms the blank band.
    pub zeta: f64,
    /// Logistic steepness of both membership curves.
    pub slope: f64,
    /// Samples per side.
    pub kappa: usize,
    pub temperature: f64,
    pub strategy: Strategy,
    /// Cluster count for the dynamics-aware strategy.
    pub cluster_count: usize,
    /// How many destination clusters feed a candidate set.
    pub transition_top_m: usize,
    /// Projector output width.
    pub latent_dim: usize,
    /// Cap on the state pool; larger datasets are subsampled.
    pub pool_cap: usize,
    pub kmeans_batch: usize,
    pub kmeans_epochs: usize,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            xi: 0.7,
            zeta: 0.3,
            slope: 20.0,
            kappa: 16,
            temperature: 0.5,
            strategy: Strategy::Sr,
            cluster_count: 32,
            transition_top_m: 3,
            latent_dim: 16,
            pool_cap: 4096,
            kmeans_batch: 256,
            kmeans_epochs: 10,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.xi < self.zeta {
            return Err(CoreError::Config(format!(
                "positive threshold {} below negative threshold {}",
                self.xi, self.zeta
            )));
        }
        if self.slope <= 0.0 {
            return Err(CoreError::Config("slope must be positive".into()));
        }
        if self.kappa == 0 {
            return Err(CoreError::Config("kappa must be >= 1".into()));
        }
        if self.temperature <= 0.0 {
            return Err(CoreError::Config("temperature must be positive".into()));
        }
        if self.cluster_count == 0 || self.transition_top_m == 0 {
            return Err(CoreError::Config(
                "cluster count and top-m must be >= 1".into(),
            ));
        }
        if self.latent_dim == 0 {
            return Err(CoreError::Config("latent dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// Probability that a state with scaled return `v` joins a positive set:
/// `1 / (1 + e^{slope (xi - v)})`.
pub fn p_positive(v: f64, cfg: &ContrastiveConfig) -> f64 {
    1.0 / (1.0 + libm::exp(cfg.slope * (cfg.xi - v)))
}

/// Probability that a state with scaled return `v` joins a negative set:
/// `1 / (1 + e^{slope (v - zeta)})`.
pub fn p_negative(v: f64, cfg: &ContrastiveConfig) -> f64 {
    1.0 / (1.0 + libm::exp(cfg.slope * (v - cfg.zeta)))
}

/// Plain cosine similarity; errors when either norm falls below `1e-12`.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoreError::Shape(format!(
            "cosine of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = norm(a);
    let nb = norm(b);
    if na < 1e-12 || nb < 1e-12 {
        return Err(CoreError::Numeric(format!(
            "cosine similarity of near-zero vector (norms {na:.3e}, {nb:.3e})"
        )));
    }
    Ok(dot(a, b) / (na * nb))
}

/// Single linear layer with Sigmoid output mapping states into the latent
/// space where similarity is measured.
pub fn make_projector(state_dim: usize, latent_dim: usize, rng: &mut SeededRng) -> Result<MlpParams> {
    MlpParams::init(BLOCK_PROJECTOR, &[state_dim, latent_dim], Activation::Sigmoid, rng)
}

/// Candidate pool slice for one source cluster.
#[derive(Debug, Clone, PartialEq)]
struct CandidateSet {
    indices: Vec<usize>,
    cum_pos: Vec<f64>,
}

/// Return-indexed state pool, membership weights, and (for the
/// dynamics-aware strategy) clustering artifacts. Immutable after build.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveIndex {
    states: Vec<Vec<f64>>,
    returns_scaled: Vec<f64>,
    p_pos: Vec<f64>,
    p_neg: Vec<f64>,
    cum_pos: Vec<f64>,
    cum_neg: Vec<f64>,
    clusters: Option<Clustering>,
    transitions: Option<TransitionMatrix>,
    candidates: Vec<CandidateSet>,
}

fn prefix_sums(weights: &[f64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cum.push(acc);
    }
    cum
}

impl ContrastiveIndex {
    /// Build the pool from a dataset: states are z-scored, returns min-max
    /// scaled. With the dynamics-aware strategy the pool is clustered and the
    /// cluster-transition matrix and per-cluster candidate sets are prepared.
    pub fn build(dataset: &OfflineDataset, cfg: &ContrastiveConfig, rng: &mut SeededRng) -> Result<Self> {
        cfg.validate()?;
        let mut states = Vec::with_capacity(dataset.transition_count());
        let mut returns_scaled = Vec::with_capacity(dataset.transition_count());
        for (e, ep) in dataset.episodes().iter().enumerate() {
            for (t, tr) in ep.transitions.iter().enumerate() {
                states.push(dataset.normalize_state(&tr.state));
                returns_scaled.push(dataset.scale_return(dataset.state_returns()[e][t]));
            }
        }
        if states.len() > cfg.pool_cap {
            let mut keep = rng.permutation(states.len());
            keep.truncate(cfg.pool_cap);
            keep.sort_unstable();
            states = keep.iter().map(|i| states[*i].clone()).collect();
            returns_scaled = keep.iter().map(|i| returns_scaled[*i]).collect();
        }

        let p_pos: Vec<f64> = returns_scaled.iter().map(|v| p_positive(*v, cfg)).collect();
        let p_neg: Vec<f64> = returns_scaled.iter().map(|v| p_negative(*v, cfg)).collect();
        let cum_pos = prefix_sums(&p_pos);
        let cum_neg = prefix_sums(&p_neg);

        let mut index = ContrastiveIndex {
            states,
            returns_scaled,
            p_pos,
            p_neg,
            cum_pos,
            cum_neg,
            clusters: None,
            transitions: None,
            candidates: Vec::new(),
        };

        if cfg.strategy == Strategy::Srd {
            let clusters = build_clusters(
                &index.states,
                cfg.cluster_count,
                cfg.kmeans_batch,
                cfg.kmeans_epochs,
                rng,
            )?;
            // transition counting walks whole episodes, not the capped pool
            let episode_assignments: Vec<Vec<usize>> = dataset
                .episodes()
                .iter()
                .map(|ep| {
                    ep.transitions
                        .iter()
                        .map(|tr| {
                            nearest_centroid(
                                &dataset.normalize_state(&tr.state),
                                &clusters.centroids,
                            )
                        })
                        .collect()
                })
                .collect();
            let transitions = cluster_transitions(&episode_assignments, cfg.cluster_count);
            index.candidates = Self::build_candidates(&index, &clusters, &transitions, cfg);
            index.clusters = Some(clusters);
            index.transitions = Some(transitions);
        }
        Ok(index)
    }

    fn build_candidates(
        index: &ContrastiveIndex,
        clusters: &Clustering,
        transitions: &TransitionMatrix,
        cfg: &ContrastiveConfig,
    ) -> Vec<CandidateSet> {
        let k = cfg.cluster_count;
        let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); k];
        for (i, c) in clusters.assignments.iter().enumerate() {
            members[*c].push(i);
        }
        (0..k)
            .map(|source| {
                // rank populated destination clusters by transition
                // probability, ties toward the lower cluster id, so a
                // candidate set is never empty
                let mut ranked: Vec<usize> =
                    (0..k).filter(|c| !members[*c].is_empty()).collect();
                ranked.sort_by(|a, b| {
                    transitions.rows[source][*b]
                        .partial_cmp(&transitions.rows[source][*a])
                        .unwrap()
                        .then(a.cmp(b))
                });
                ranked.truncate(cfg.transition_top_m);
                let mut indices: Vec<usize> = ranked
                    .iter()
                    .flat_map(|c| members[*c].iter().copied())
                    .collect();
                indices.sort_unstable();
                let weights: Vec<f64> = indices.iter().map(|i| index.p_pos[*i]).collect();
                CandidateSet {
                    cum_pos: prefix_sums(&weights),
                    indices,
                }
            })
            .collect()
    }

    pub fn pool_len(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn scaled_return(&self, i: usize) -> f64 {
        self.returns_scaled[i]
    }

    pub fn p_pos(&self) -> &[f64] {
        &self.p_pos
    }

    pub fn p_neg(&self) -> &[f64] {
        &self.p_neg
    }

    pub fn clustering(&self) -> Option<&Clustering> {
        self.clusters.as_ref()
    }

    pub fn transition_matrix(&self) -> Option<&TransitionMatrix> {
        self.transitions.as_ref()
    }

    /// Pool indices of the candidate set for a query state (dynamics-aware
    /// strategy only).
    pub fn candidate_set(&self, query_state: &[f64]) -> Result<&[usize]> {
        let clusters = self.clusters.as_ref().ok_or_else(|| {
            CoreError::Config("candidate sets need the dynamics-aware strategy".into())
        })?;
        let cluster = nearest_centroid(query_state, &clusters.centroids);
        Ok(&self.candidates[cluster].indices)
    }

    /// Draw `kappa` positives and `kappa` negatives without replacement,
    /// proportional to the membership probabilities. The query state only
    /// matters under the dynamics-aware strategy, where it selects the
    /// positive candidate set.
    pub fn sample_sets(
        &self,
        query_state: &[f64],
        cfg: &ContrastiveConfig,
        rng: &mut SeededRng,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        let positives = match cfg.strategy {
            Strategy::Sr => weighted_draw(
                None,
                &self.p_pos,
                &self.cum_pos,
                cfg.kappa,
                SampleSide::Positive,
                rng,
            )?,
            Strategy::Srd => {
                let clusters = self.clusters.as_ref().ok_or_else(|| {
                    CoreError::Config("index built without clustering".into())
                })?;
                let cluster = nearest_centroid(query_state, &clusters.centroids);
                let cand = &self.candidates[cluster];
                weighted_draw(
                    Some(&cand.indices),
                    &self.p_pos,
                    &cand.cum_pos,
                    cfg.kappa,
                    SampleSide::Positive,
                    rng,
                )?
            }
        };
        let negatives = weighted_draw(
            None,
            &self.p_neg,
            &self.cum_neg,
            cfg.kappa,
            SampleSide::Negative,
            rng,
        )?;
        Ok((positives, negatives))
    }
}

/// Weighted sampling without replacement over a (possibly index-mapped)
/// weight table. Rejection sampling against the static prefix sums with a
/// bounded retry budget, then an exact renormalizing fallback.
fn weighted_draw(
    map: Option<&[usize]>,
    weights: &[f64],
    cum: &[f64],
    kappa: usize,
    side: SampleSide,
    rng: &mut SeededRng,
) -> Result<Vec<usize>> {
    let local_len = cum.len();
    let weight_of = |local: usize| -> f64 {
        match map {
            Some(m) => weights[m[local]],
            None => weights[local],
        }
    };
    let to_pool = |local: usize| -> usize {
        match map {
            Some(m) => m[local],
            None => local,
        }
    };
    let eligible = (0..local_len).filter(|i| weight_of(*i) > 0.0).count();
    if eligible < kappa {
        return Err(CoreError::Sampling {
            side,
            needed: kappa,
            eligible,
        });
    }
    let total = if local_len == 0 { 0.0 } else { cum[local_len - 1] };
    let mut chosen: Vec<usize> = Vec::with_capacity(kappa);
    let mut attempts = 0usize;
    let budget = 64 * kappa.max(1);
    while chosen.len() < kappa && attempts < budget {
        attempts += 1;
        let u = rng.uniform() * total;
        let local = cum.partition_point(|c| *c <= u).min(local_len - 1);
        if weight_of(local) > 0.0 && !chosen.contains(&local) {
            chosen.push(local);
        }
    }
    if chosen.len() < kappa {
        // exact fallback: renormalize over the remaining mass each draw
        let mut live: Vec<f64> = (0..local_len).map(weight_of).collect();
        for c in &chosen {
            live[*c] = 0.0;
        }
        while chosen.len() < kappa {
            let total: f64 = live.iter().sum();
            let mut target = rng.uniform() * total;
            let mut pick = local_len - 1;
            for (i, w) in live.iter().enumerate() {
                target -= w;
                if target <= 0.0 && *w > 0.0 {
                    pick = i;
                    break;
                }
            }
            live[pick] = 0.0;
            chosen.push(pick);
        }
    }
    Ok(chosen.into_iter().map(to_pool).collect())
}

/// Contrastive loss of one generated state against explicit sample sets:
/// `log Σ exp(sim(f(s), f(neg))/T) - log Σ exp(sim(f(s), f(pos))/T)`.
///
/// Recorded on the tape, so the loss is differentiable with respect to the
/// generated state and the projector weights.
pub fn contrastive_loss_state(
    g: &mut Graph,
    generated: NodeId,
    positives: &[&[f64]],
    negatives: &[&[f64]],
    projector: &MlpParams,
    cfg: &ContrastiveConfig,
) -> Result<NodeId> {
    if positives.len() != negatives.len() || positives.is_empty() {
        return Err(CoreError::Config(format!(
            "sample sets must be equal-sized and nonempty, got {}+/{}-",
            positives.len(),
            negatives.len()
        )));
    }
    let f_gen = projector.forward_on(g, generated)?;
    let mut sims_pos = Vec::with_capacity(positives.len());
    for s in positives {
        let node = g.constant(s.to_vec());
        let f_s = projector.forward_on(g, node)?;
        sims_pos.push(g.cosine(f_gen, f_s)?);
    }
    let mut sims_neg = Vec::with_capacity(negatives.len());
    for s in negatives {
        let node = g.constant(s.to_vec());
        let f_s = projector.forward_on(g, node)?;
        sims_neg.push(g.cosine(f_gen, f_s)?);
    }
    let lse_pos = g.log_sum_exp(&sims_pos, cfg.temperature)?;
    let lse_neg = g.log_sum_exp(&sims_neg, cfg.temperature)?;
    Ok(g.affine_sum(&[(1.0, lse_neg), (-1.0, lse_pos)]))
}

/// Horizon-weighted contrastive loss of a reconstructed window: positions
/// `1..=H` (the generated states) contribute `1/(j+1) * L_j`; position 0 is
/// the conditioned observation and is skipped.
pub fn contrastive_loss_traj(
    g: &mut Graph,
    reconstruction: NodeId,
    spec: &WindowSpec,
    index: &ContrastiveIndex,
    cfg: &ContrastiveConfig,
    projector: &MlpParams,
    rng: &mut SeededRng,
) -> Result<NodeId> {
    let mut terms = Vec::with_capacity(spec.horizon);
    for j in 1..=spec.horizon {
        let range = spec.state_range(j);
        let state_node = g.slice(reconstruction, range.start, range.len())?;
        let query = g.value(state_node).to_vec();
        let (pos_idx, neg_idx) = index.sample_sets(&query, cfg, rng)?;
        let positives: Vec<&[f64]> = pos_idx.iter().map(|i| index.state(*i)).collect();
        let negatives: Vec<&[f64]> = neg_idx.iter().map(|i| index.state(*i)).collect();
        let loss = contrastive_loss_state(g, state_node, &positives, &negatives, projector, cfg)?;
        terms.push((1.0 / (j as f64 + 1.0), loss));
    }
    Ok(g.affine_sum(&terms))
}
