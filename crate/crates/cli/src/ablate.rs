//! Ablation comparison: train the contrastive variants and the ablated ones
//! under identical seeds and configs, evaluate them on the same seed list,
//! and test the full-vs-no-contrast gap with a one-sided Welch t.

use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use cdp_core::analysis::{welch_t, ScoreReport};
use cdp_core::dataset::OfflineDataset;
use cdp_core::env::PointMazeDesk;

use crate::checkpoint::load_checkpoint;
use crate::error::{CliError, Result};
use crate::eval_driver::{evaluate, Anchors};
use crate::runcfg::RunConfig;
use crate::train_driver::train;

#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub name: String,
    pub report: ScoreReport,
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub variants: Vec<VariantOutcome>,
    pub welch_t: f64,
    pub welch_df: f64,
    /// One-sided p for mean(full-sr) > mean(no-contrast).
    pub p_one_sided: f64,
}

/// The four standard variants, as (name, strategy, ablation).
pub const VARIANTS: [(&str, &str, &str); 4] = [
    ("full-sr", "sr", "none"),
    ("full-srd", "srd", "none"),
    ("no-contrast", "sr", "no-contrast"),
    ("positives-only", "sr", "positives-only"),
];

pub fn one_sided_p(t: f64, df: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| CliError::Numeric(format!("t distribution: {e}")))?;
    Ok(1.0 - dist.cdf(t))
}

pub fn compare_ablations(
    dataset: &OfflineDataset,
    base: &RunConfig,
    env: &PointMazeDesk,
    eval_seeds: &[u64],
    anchors: &Anchors,
    threads: usize,
    out_dir: &Path,
) -> Result<AblationOutcome> {
    let mut variants = Vec::new();
    for (name, strategy, ablation) in VARIANTS {
        let mut cfg = base.clone();
        cfg.strategy = strategy.into();
        cfg.ablation = ablation.into();
        let var_dir = out_dir.join(name);
        let arts = train(dataset, &cfg, &var_dir, None)?;
        let ckpt = load_checkpoint(&arts.checkpoint)?;
        let (report, _) = evaluate(
            &ckpt,
            env,
            eval_seeds,
            cfg.rho,
            cfg.max_episode_steps,
            cfg.gamma,
            threads,
            anchors,
            cfg.fingerprint(),
        )?;
        variants.push(VariantOutcome {
            name: name.into(),
            report,
        });
    }

    let full = &variants[0].report.returns;
    let ablated = &variants[2].report.returns;
    let (t, df) = welch_t(full, ablated)?;
    let p = one_sided_p(t, df)?;

    let mut table = String::from("variant,mean,std,normalized\n");
    for v in &variants {
        table.push_str(&format!(
            "{},{},{},{}\n",
            v.name, v.report.mean, v.report.std, v.report.normalized
        ));
    }
    std::fs::write(out_dir.join("table.csv"), table)
        .map_err(|e| CliError::Io(format!("write table.csv: {e}")))?;
    std::fs::write(
        out_dir.join("welch.txt"),
        format!("t={t}\ndf={df}\np_one_sided={p}\nhypothesis=mean(full-sr)>mean(no-contrast)\n"),
    )
    .map_err(|e| CliError::Io(format!("write welch.txt: {e}")))?;

    Ok(AblationOutcome {
        variants,
        welch_t: t,
        welch_df: df,
        p_one_sided: p,
    })
}
