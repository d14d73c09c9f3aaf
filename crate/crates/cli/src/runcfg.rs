//! The merged run configuration: one flat key=value view over every module
//! config, serialized next to each output with a content fingerprint.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use cdp_core::contrastive::{ContrastiveConfig, Strategy};
use cdp_core::dataset::ReturnConfig;
use cdp_core::models::ModelConfig;
use cdp_core::planner::PlannerConfig;
use cdp_core::schedule::ScheduleKind;
use cdp_core::training::{Ablation, TrainConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub eta: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub schedule: String,
    pub diffusion_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub embed_dim: usize,
    pub denoiser_hidden: Vec<usize>,
    pub predictor_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub lambda_d: f64,
    pub lambda_v: f64,
    pub lambda_c: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub ablation: String,
    pub ckpt_every: usize,
    pub strategy: String,
    pub xi: f64,
    pub zeta: f64,
    pub slope: f64,
    pub kappa: usize,
    pub temperature: f64,
    pub clusters: usize,
    pub top_m: usize,
    pub pool_cap: usize,
    pub kmeans_batch: usize,
    pub kmeans_epochs: usize,
    pub rho: f64,
    pub max_episode_steps: usize,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let contrast = ContrastiveConfig::default();
        let model = ModelConfig::default();
        let plan = PlannerConfig::default();
        let ret = ReturnConfig::default();
        RunConfig {
            seed: 0,
            eta: ret.eta,
            gamma: ret.gamma,
            horizon: plan.horizon,
            schedule: "cosine".into(),
            diffusion_steps: 20,
            beta_start: 1e-4,
            beta_end: 0.35,
            embed_dim: model.embed_dim,
            denoiser_hidden: model.denoiser_hidden.to_vec(),
            predictor_hidden: model.predictor_hidden.to_vec(),
            latent_dim: model.latent_dim,
            lambda_d: train.lambda_d,
            lambda_v: train.lambda_v,
            lambda_c: train.lambda_c,
            steps: train.steps,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            ablation: "none".into(),
            ckpt_every: 0,
            strategy: "sr".into(),
            xi: contrast.xi,
            zeta: contrast.zeta,
            slope: contrast.slope,
            kappa: contrast.kappa,
            temperature: contrast.temperature,
            clusters: contrast.cluster_count,
            top_m: contrast.transition_top_m,
            pool_cap: contrast.pool_cap,
            kmeans_batch: contrast.kmeans_batch,
            kmeans_epochs: contrast.kmeans_epochs,
            rho: plan.rho,
            max_episode_steps: plan.max_episode_steps,
            threads: 1,
        }
    }
}

fn join(xs: &[usize]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Validation(format!("bad layer size '{p}'")))
        })
        .collect()
}

impl RunConfig {
    /// Canonical (sorted) key=value pairs.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = vec![
            ("contrast.clusters".into(), self.clusters.to_string()),
            ("contrast.kappa".into(), self.kappa.to_string()),
            ("contrast.kmeans_batch".into(), self.kmeans_batch.to_string()),
            ("contrast.kmeans_epochs".into(), self.kmeans_epochs.to_string()),
            ("contrast.pool_cap".into(), self.pool_cap.to_string()),
            ("contrast.slope".into(), self.slope.to_string()),
            ("contrast.strategy".into(), self.strategy.clone()),
            ("contrast.temperature".into(), self.temperature.to_string()),
            ("contrast.top_m".into(), self.top_m.to_string()),
            ("contrast.xi".into(), self.xi.to_string()),
            ("contrast.zeta".into(), self.zeta.to_string()),
            ("data.eta".into(), self.eta.to_string()),
            ("data.gamma".into(), self.gamma.to_string()),
            ("diffusion.beta_end".into(), self.beta_end.to_string()),
            ("diffusion.beta_start".into(), self.beta_start.to_string()),
            ("diffusion.schedule".into(), self.schedule.clone()),
            ("diffusion.steps".into(), self.diffusion_steps.to_string()),
            ("model.denoiser_hidden".into(), join(&self.denoiser_hidden)),
            ("model.embed_dim".into(), self.embed_dim.to_string()),
            ("model.latent_dim".into(), self.latent_dim.to_string()),
            ("model.predictor_hidden".into(), join(&self.predictor_hidden)),
            ("plan.max_episode_steps".into(), self.max_episode_steps.to_string()),
            ("plan.rho".into(), self.rho.to_string()),
            ("run.seed".into(), self.seed.to_string()),
            ("run.threads".into(), self.threads.to_string()),
            ("train.ablation".into(), self.ablation.clone()),
            ("train.batch_size".into(), self.batch_size.to_string()),
            ("train.ckpt_every".into(), self.ckpt_every.to_string()),
            ("train.lambda_c".into(), self.lambda_c.to_string()),
            ("train.lambda_d".into(), self.lambda_d.to_string()),
            ("train.lambda_v".into(), self.lambda_v.to_string()),
            ("train.learning_rate".into(), self.learning_rate.to_string()),
            ("train.steps".into(), self.steps.to_string()),
            ("train.window_horizon".into(), self.horizon.to_string()),
        ];
        pairs.sort();
        pairs
    }

    pub fn apply_pair(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| CliError::Validation(format!("bad value '{value}' for {what}"));
        match key {
            "contrast.clusters" => self.clusters = value.parse().map_err(|_| bad(key))?,
            "contrast.kappa" => self.kappa = value.parse().map_err(|_| bad(key))?,
            "contrast.kmeans_batch" => self.kmeans_batch = value.parse().map_err(|_| bad(key))?,
            "contrast.kmeans_epochs" => self.kmeans_epochs = value.parse().map_err(|_| bad(key))?,
            "contrast.pool_cap" => self.pool_cap = value.parse().map_err(|_| bad(key))?,
            "contrast.slope" => self.slope = value.parse().map_err(|_| bad(key))?,
            "contrast.strategy" => self.strategy = value.into(),
            "contrast.temperature" => self.temperature = value.parse().map_err(|_| bad(key))?,
            "contrast.top_m" => self.top_m = value.parse().map_err(|_| bad(key))?,
            "contrast.xi" => self.xi = value.parse().map_err(|_| bad(key))?,
            "contrast.zeta" => self.zeta = value.parse().map_err(|_| bad(key))?,
            "data.eta" => self.eta = value.parse().map_err(|_| bad(key))?,
            "data.gamma" => self.gamma = value.parse().map_err(|_| bad(key))?,
            "diffusion.beta_end" => self.beta_end = value.parse().map_err(|_| bad(key))?,
            "diffusion.beta_start" => self.beta_start = value.parse().map_err(|_| bad(key))?,
            "diffusion.schedule" => self.schedule = value.into(),
            "diffusion.steps" => self.diffusion_steps = value.parse().map_err(|_| bad(key))?,
            "model.denoiser_hidden" => self.denoiser_hidden = parse_list(value)?,
            "model.embed_dim" => self.embed_dim = value.parse().map_err(|_| bad(key))?,
            "model.latent_dim" => self.latent_dim = value.parse().map_err(|_| bad(key))?,
            "model.predictor_hidden" => self.predictor_hidden = parse_list(value)?,
            "plan.max_episode_steps" => self.max_episode_steps = value.parse().map_err(|_| bad(key))?,
            "plan.rho" => self.rho = value.parse().map_err(|_| bad(key))?,
            "run.seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            "run.threads" => self.threads = value.parse().map_err(|_| bad(key))?,
            "train.ablation" => self.ablation = value.into(),
            "train.batch_size" => self.batch_size = value.parse().map_err(|_| bad(key))?,
            "train.ckpt_every" => self.ckpt_every = value.parse().map_err(|_| bad(key))?,
            "train.lambda_c" => self.lambda_c = value.parse().map_err(|_| bad(key))?,
            "train.lambda_d" => self.lambda_d = value.parse().map_err(|_| bad(key))?,
            "train.lambda_v" => self.lambda_v = value.parse().map_err(|_| bad(key))?,
            "train.learning_rate" => self.learning_rate = value.parse().map_err(|_| bad(key))?,
            "train.steps" => self.steps = value.parse().map_err(|_| bad(key))?,
            "train.window_horizon" => self.horizon = value.parse().map_err(|_| bad(key))?,
            other => return Err(CliError::Validation(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn load_into(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("read {}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("{}:{}: expected key=value", path.display(), i + 1))
            })?;
            self.apply_pair(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_text();
        let _ = writeln!(text, "# fingerprint={}", self.fingerprint());
        fs::write(path, text).map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))?;
        Ok(())
    }

    /// Content hash of the canonical key=value text.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_text().as_bytes());
        let digest = hasher.finalize();
        let mut out = String::new();
        for b in digest.iter().take(8) {
            let _ = write!(out, "{b:02x}");
        }
        out
    }

    pub fn return_config(&self) -> ReturnConfig {
        ReturnConfig {
            eta: self.eta,
            gamma: self.gamma,
        }
    }

    pub fn schedule_kind(&self) -> Result<ScheduleKind> {
        match self.schedule.as_str() {
            "cosine" => Ok(ScheduleKind::Cosine),
            "linear" => Ok(ScheduleKind::Linear {
                beta_start: self.beta_start,
                beta_end: self.beta_end,
            }),
            other => Err(CliError::Validation(format!("unknown schedule '{other}'"))),
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            denoiser_hidden: self.denoiser_hidden.clone(),
            predictor_hidden: self.predictor_hidden.clone(),
            latent_dim: self.latent_dim,
        }
    }

    pub fn ablation(&self) -> Result<Ablation> {
        match self.ablation.as_str() {
            "none" => Ok(Ablation::Full),
            "no-contrast" => Ok(Ablation::NoContrast),
            "positives-only" => Ok(Ablation::PositivesOnlyData),
            other => Err(CliError::Validation(format!("unknown ablation '{other}'"))),
        }
    }

    pub fn strategy_kind(&self) -> Result<Strategy> {
        match self.strategy.as_str() {
            "sr" => Ok(Strategy::Sr),
            "srd" => Ok(Strategy::Srd),
            other => Err(CliError::Validation(format!("unknown strategy '{other}'"))),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            lambda_d: self.lambda_d,
            lambda_v: self.lambda_v,
            lambda_c: self.lambda_c,
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            ablation: self.ablation()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn contrastive_config(&self) -> Result<ContrastiveConfig> {
        let cfg = ContrastiveConfig {
            xi: self.xi,
            zeta: self.zeta,
            slope: self.slope,
            kappa: self.kappa,
            temperature: self.temperature,
            strategy: self.strategy_kind()?,
            cluster_count: self.clusters,
            transition_top_m: self.top_m,
            latent_dim: self.latent_dim,
            pool_cap: self.pool_cap,
            kmeans_batch: self.kmeans_batch,
            kmeans_epochs: self.kmeans_epochs,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn planner_config(&self) -> Result<PlannerConfig> {
        let cfg = PlannerConfig {
            horizon: self.horizon,
            rho: self.rho,
            max_episode_steps: self.max_episode_steps,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
