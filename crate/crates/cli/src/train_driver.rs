//! The training loop: batches, metrics log, periodic checkpoints, and
//! bit-identical resume from a saved RNG/optimizer state.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cdp_core::contrastive::ContrastiveIndex;
use cdp_core::dataset::{OfflineDataset, WindowSpec};
use cdp_core::models::ModelBundle;
use cdp_core::rng::SeededRng;
use cdp_core::training::{
    filter_high_return, gradient_separation_check, prepare_windows, train_step, Ablation,
    LossReport, OptimStates, PreparedWindow, StepContext,
};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::error::{CliError, Result};
use crate::runcfg::RunConfig;

pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub final_loss: Option<LossReport>,
}

/// Deterministic stream layout: one fork for the index build, one for model
/// init, and the root stream drives the loop. Resume rebuilds the first two
/// identically and restores the loop stream from the checkpoint.
fn stream_layout(seed: u64) -> (SeededRng, SeededRng, SeededRng) {
    let mut root = SeededRng::from_seed(seed);
    let index_rng = root.fork();
    let model_rng = root.fork();
    (index_rng, model_rng, root)
}

pub fn train(
    dataset: &OfflineDataset,
    run: &RunConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainArtifacts> {
    let train_cfg = run.train_config()?;
    let contrast_cfg = run.contrastive_config()?;
    let spec = WindowSpec::new(run.horizon, dataset.state_dim(), dataset.action_dim())?;
    let schedule = cdp_core::schedule::make_schedule(run.schedule_kind()?, run.diffusion_steps)?;

    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("create {}: {e}", out_dir.display())))?;
    run.save(&out_dir.join("run_config.txt"))?;

    let mut windows = prepare_windows(dataset, &spec)?;
    if train_cfg.ablation == Ablation::PositivesOnlyData {
        windows = filter_high_return(windows, contrast_cfg.xi)?;
    }
    let contrast_on = train_cfg.ablation != Ablation::NoContrast && train_cfg.lambda_c > 0.0;

    let (mut index_rng, mut model_rng, mut rng) = stream_layout(train_cfg.seed);
    let index = if contrast_on {
        Some(ContrastiveIndex::build(dataset, &contrast_cfg, &mut index_rng)?)
    } else {
        None
    };

    let (mut models, mut optim, start_step) = match resume {
        None => {
            let models = ModelBundle::init(&spec, &run.model_config(), &mut model_rng)?;
            let optim = OptimStates::new(&models, train_cfg.learning_rate);
            (models, optim, 0u64)
        }
        Some(ckpt_path) => {
            let ckpt = load_checkpoint(ckpt_path)?;
            if ckpt.spec != spec {
                return Err(CliError::Validation(format!(
                    "checkpoint window {:?} incompatible with configured {:?}",
                    ckpt.spec, spec
                )));
            }
            let optim = ckpt.optim.clone().ok_or_else(|| {
                CliError::Validation("checkpoint has no optimizer state; cannot resume".into())
            })?;
            let rng_state = ckpt.rng.clone().ok_or_else(|| {
                CliError::Validation("checkpoint has no rng state; cannot resume".into())
            })?;
            rng = SeededRng::restore(&rng_state);
            (ckpt.models, optim, ckpt.trained_steps)
        }
    };

    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics = if resume.is_some() && metrics_path.exists() {
        fs::OpenOptions::new()
            .append(true)
            .open(&metrics_path)
            .map_err(|e| CliError::Io(format!("open {}: {e}", metrics_path.display())))?
    } else {
        let mut f = fs::File::create(&metrics_path)
            .map_err(|e| CliError::Io(format!("create {}: {e}", metrics_path.display())))?;
        writeln!(f, "step,loss_d,loss_v,loss_c,loss_total")
            .map_err(|e| CliError::Io(e.to_string()))?;
        f
    };

    let ctx = StepContext {
        spec: &spec,
        schedule: &schedule,
        contrastive: &contrast_cfg,
        index: index.as_ref(),
    };
    let ckpt_path = out_dir.join("checkpoint.cdiff");
    let make_ckpt = |models: &ModelBundle, optim: &OptimStates, rng: &SeededRng, step: u64| Checkpoint {
        spec,
        embed_dim: run.embed_dim,
        latent_dim: run.latent_dim,
        schedule_kind: schedule.kind(),
        n_steps: schedule.len(),
        models: models.clone(),
        optim: Some(optim.clone()),
        rng: Some(rng.state()),
        norm: dataset.norm_stats().clone(),
        trained_steps: step,
    };

    let mut last_report = None;
    for step in (start_step + 1)..=(train_cfg.steps as u64) {
        let batch_idx: Vec<usize> = (0..train_cfg.batch_size)
            .map(|_| rng.below(windows.len()))
            .collect();
        let batch: Vec<&PreparedWindow> = batch_idx.iter().map(|i| &windows[*i]).collect();
        let report = train_step(&mut models, &mut optim, &batch, &train_cfg, &ctx, &mut rng)
            .map_err(|e| CliError::from(e))
            .map_err(|e| match e {
                CliError::Numeric(m) => CliError::Numeric(format!("step {step}: {m}")),
                other => other,
            })?;
        writeln!(
            metrics,
            "{step},{},{},{},{}",
            report.loss_d, report.loss_v, report.loss_c, report.total
        )
        .map_err(|e| CliError::Io(e.to_string()))?;
        last_report = Some(report);
        if run.ckpt_every > 0 && step % run.ckpt_every as u64 == 0 {
            save_checkpoint(&ckpt_path, &make_ckpt(&models, &optim, &rng, step))?;
        }
    }
    save_checkpoint(
        &ckpt_path,
        &make_ckpt(&models, &optim, &rng, train_cfg.steps as u64),
    )?;

    Ok(TrainArtifacts {
        checkpoint: ckpt_path,
        metrics: metrics_path,
        final_loss: last_report,
    })
}

/// Run the separation check on a fresh batch drawn from the dataset; used by
/// the CLI as a structural self-test after training.
pub fn check_separation(
    dataset: &OfflineDataset,
    run: &RunConfig,
    models: &ModelBundle,
) -> Result<bool> {
    let train_cfg = run.train_config()?;
    let contrast_cfg = run.contrastive_config()?;
    let spec = WindowSpec::new(run.horizon, dataset.state_dim(), dataset.action_dim())?;
    let schedule = cdp_core::schedule::make_schedule(run.schedule_kind()?, run.diffusion_steps)?;
    let windows = prepare_windows(dataset, &spec)?;
    let (mut index_rng, _, mut rng) = stream_layout(train_cfg.seed ^ 0x5eed);
    let contrast_on = train_cfg.ablation != Ablation::NoContrast && train_cfg.lambda_c > 0.0;
    let index = if contrast_on {
        Some(ContrastiveIndex::build(dataset, &contrast_cfg, &mut index_rng)?)
    } else {
        None
    };
    let ctx = StepContext {
        spec: &spec,
        schedule: &schedule,
        contrastive: &contrast_cfg,
        index: index.as_ref(),
    };
    let batch: Vec<&PreparedWindow> = windows.iter().take(train_cfg.batch_size).collect();
    let report = gradient_separation_check(models, &batch, &train_cfg, &ctx, &mut rng)?;
    Ok(report.is_separated())
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdp_core::dataset::ReturnConfig;
    use cdp_core::env::{generate_dataset, PointMazeDesk, PolicyKind};

    fn small_run() -> RunConfig {
        let mut run = RunConfig::default();
        run.steps = 6;
        run.batch_size = 4;
        run.horizon = 3;
        run.diffusion_steps = 5;
        run.denoiser_hidden = vec![16];
        run.predictor_hidden = vec![12];
        run.latent_dim = 6;
        run.kappa = 3;
        run.clusters = 4;
        run.pool_cap = 256;
        run
    }

    fn small_dataset() -> OfflineDataset {
        let env = PointMazeDesk::default();
        let base = generate_dataset(&env, PolicyKind::Random, 8, 1, ReturnConfig::default()).unwrap();
        let expert = generate_dataset(&env, PolicyKind::Expert, 4, 2, ReturnConfig::default()).unwrap();
        cdp_core::env::mix_datasets(&base, &expert, 0.25, 3).unwrap()
    }

    #[test]
    fn training_writes_metrics_and_checkpoint() {
        let ds = small_dataset();
        let run = small_run();
        let dir = tempfile::tempdir().unwrap();
        let arts = train(&ds, &run, dir.path(), None).unwrap();
        let metrics = fs::read_to_string(&arts.metrics).unwrap();
        let lines: Vec<&str> = metrics.lines().collect();
        assert_eq!(lines[0], "step,loss_d,loss_v,loss_c,loss_total");
        assert_eq!(lines.len(), 1 + 6);
        assert!(arts.checkpoint.exists());
        assert!(dir.path().join("run_config.txt").exists());
        let ckpt = load_checkpoint(&arts.checkpoint).unwrap();
        assert_eq!(ckpt.trained_steps, 6);
    }

    #[test]
    fn single_step_run_logs_one_row() {
        let ds = small_dataset();
        let mut run = small_run();
        run.steps = 1;
        let dir = tempfile::tempdir().unwrap();
        let arts = train(&ds, &run, dir.path(), None).unwrap();
        let metrics = fs::read_to_string(&arts.metrics).unwrap();
        assert_eq!(metrics.lines().count(), 2);
    }

    #[test]
    fn resume_splices_losses_bit_identically() {
        let ds = small_dataset();
        let mut run = small_run();
        run.steps = 8;

        // single uninterrupted run
        let dir_a = tempfile::tempdir().unwrap();
        train(&ds, &run, dir_a.path(), None).unwrap();
        let full = fs::read_to_string(dir_a.path().join("metrics.csv")).unwrap();

        // interrupted at 4, then resumed to 8
        let mut run_half = run.clone();
        run_half.steps = 4;
        let dir_b = tempfile::tempdir().unwrap();
        let half = train(&ds, &run_half, dir_b.path(), None).unwrap();
        let dir_c = tempfile::tempdir().unwrap();
        train(&ds, &run, dir_c.path(), Some(&half.checkpoint)).unwrap();
        let tail = fs::read_to_string(dir_c.path().join("metrics.csv")).unwrap();

        let head = fs::read_to_string(dir_b.path().join("metrics.csv")).unwrap();
        let full_rows: Vec<&str> = full.lines().skip(1).collect();
        let head_rows: Vec<&str> = head.lines().skip(1).collect();
        let tail_rows: Vec<&str> = tail.lines().skip(1).collect();
        assert_eq!(full_rows[..4], head_rows[..]);
        assert_eq!(full_rows[4..], tail_rows[..]);
    }

    #[test]
    fn no_contrast_ablation_zeroes_the_c_column() {
        let ds = small_dataset();
        let mut run = small_run();
        run.ablation = "no-contrast".into();
        let dir = tempfile::tempdir().unwrap();
        let arts = train(&ds, &run, dir.path(), None).unwrap();
        let metrics = fs::read_to_string(&arts.metrics).unwrap();
        for line in metrics.lines().skip(1) {
            let c: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
            assert_eq!(c, 0.0);
        }
    }

    #[test]
    fn determinism_across_identical_runs() {
        let ds = small_dataset();
        let run = small_run();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        train(&ds, &run, dir_a.path(), None).unwrap();
        train(&ds, &run, dir_b.path(), None).unwrap();
        let a = fs::read_to_string(dir_a.path().join("metrics.csv")).unwrap();
        let b = fs::read_to_string(dir_b.path().join("metrics.csv")).unwrap();
        assert_eq!(a, b);
        let ca = fs::read(dir_a.path().join("checkpoint.cdiff")).unwrap();
        let cb = fs::read(dir_b.path().join("checkpoint.cdiff")).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn separation_check_passes_on_trained_models() {
        let ds = small_dataset();
        let run = small_run();
        let dir = tempfile::tempdir().unwrap();
        let arts = train(&ds, &run, dir.path(), None).unwrap();
        let ckpt = load_checkpoint(&arts.checkpoint).unwrap();
        assert!(check_separation(&ds, &run, &ckpt.models).unwrap());
    }
}
