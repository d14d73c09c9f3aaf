use cdp_cli::checkpoint::load_checkpoint;
use cdp_cli::dataset_io::load_dataset;
use cdp_core::dataset::{normalize_window, slice_windows};
use cdp_core::diffusion::{forward_sample, reconstruct, NoisyTrajectory};
use cdp_core::planner::{plan, PlannerConfig, PlannerContext};
use cdp_core::rng::SeededRng;

fn main() {
    let ckpt = load_checkpoint(std::path::Path::new("/tmp/smoke/train_expert/checkpoint.cdiff")).unwrap();
    let ds = load_dataset(std::path::Path::new("/tmp/smoke/expert.jsonl")).unwrap();
    let schedule = ckpt.schedule().unwrap();
    let spec = ckpt.spec;

    // 1. reconstruction quality at several noise levels on real windows
    let windows = slice_windows(&ds, spec.horizon).unwrap();
    let mut rng = SeededRng::from_seed(1);
    for i in [1usize, 5, 10, 20] {
        let mut err = 0.0;
        let mut count = 0;
        for w in windows.iter().step_by(97).take(30) {
            let nw = normalize_window(&ds, &spec, w);
            let clean = NoisyTrajectory::clean(nw.values.clone());
            let noise = rng.normal_vec(clean.len());
            let noisy = forward_sample(&clean, i, &noise, &schedule).unwrap();
            let recon = reconstruct(&ckpt.models.denoiser, &noisy, i).unwrap();
            for (a, b) in recon.values.iter().zip(&nw.values) {
                err += (a - b) * (a - b);
                count += 1;
            }
        }
        println!("recon rmse at i={i}: {:.4}", (err / count as f64).sqrt());
    }

    // 2. a plan from a fixed start
    let ctx = PlannerContext {
        models: &ckpt.models,
        schedule: &schedule,
        spec: &spec,
        norm: &ckpt.norm,
    };
    let cfg = PlannerConfig { horizon: spec.horizon, rho: 0.1, max_episode_steps: 200 };
    let mut rng = SeededRng::from_seed(5);
    let w = plan(&ctx, &[0.1, 0.1], &cfg, &mut rng).unwrap();
    println!("plan from (0.1, 0.1):");
    for j in 0..=spec.horizon {
        let s = &w[spec.state_range(j)];
        let a = &w[spec.action_range(j)];
        println!("  j={j}: state ({:+.3}, {:+.3}) action ({:+.4}, {:+.4})", s[0], s[1], a[0], a[1]);
    }
    // what the dataset says about actions near (0.1, 0.1)
    let mut near = vec![];
    for ep in ds.episodes() {
        for tr in &ep.transitions {
            let d = ((tr.state[0]-0.1f64).powi(2)+(tr.state[1]-0.1f64).powi(2)).sqrt();
            if d < 0.05 { near.push(tr.action.clone()); }
        }
    }
    let n = near.len() as f64;
    let mean: Vec<f64> = (0..2).map(|k| near.iter().map(|a| a[k]).sum::<f64>() / n).collect();
    println!("dataset mean action near (0.1,0.1): ({:+.4}, {:+.4}) over {} samples", mean[0], mean[1], near.len());
}
