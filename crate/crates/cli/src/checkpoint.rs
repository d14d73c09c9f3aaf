//! Versioned flat checkpoint format.
//!
//! Layout: the magic string `CDIFF1`, then one record per named block:
//! `u32 name_len | name bytes | u32 rank | u32 dims[rank] | payload`,
//! all integers and the 64-bit payload words little-endian. Payload words
//! are raw bit patterns, so float blocks round-trip bit-exactly and the RNG
//! state rides along in the same container.

use std::fs;
use std::io::Write;
use std::path::Path;

use cdp_core::adam::{AdamConfig, AdamState};
use cdp_core::dataset::{NormStats, WindowSpec};
use cdp_core::guide::ReturnPredictor;
use cdp_core::mlp::{Activation, MlpParams};
use cdp_core::models::{ModelBundle, BLOCK_DENOISER, BLOCK_PREDICTOR, BLOCK_PROJECTOR};
use cdp_core::rng::{RngState, SeededRng};
use cdp_core::schedule::{make_schedule, DiffusionSchedule, ScheduleKind};
use cdp_core::tensor::Tensor;
use cdp_core::training::OptimStates;

use crate::error::{CliError, Result};

const MAGIC: &[u8; 6] = b"CDIFF1";
const FORMAT_VERSION: f64 = 1.0;

/// One named block: a shape and raw 64-bit payload words.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub shape: Vec<u32>,
    pub words: Vec<u64>,
}

impl Block {
    pub fn floats(name: &str, shape: Vec<u32>, values: &[f64]) -> Self {
        Block {
            name: name.to_string(),
            shape,
            words: values.iter().map(|v| v.to_bits()).collect(),
        }
    }

    pub fn vector(name: &str, values: &[f64]) -> Self {
        Self::floats(name, vec![values.len() as u32], values)
    }

    pub fn as_floats(&self) -> Vec<f64> {
        self.words.iter().map(|w| f64::from_bits(*w)).collect()
    }
}

pub fn write_blocks(path: &Path, blocks: &[Block]) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    for b in blocks {
        let expect: u64 = b.shape.iter().map(|d| *d as u64).product();
        if expect != b.words.len() as u64 {
            return Err(CliError::Validation(format!(
                "block {}: shape {:?} vs {} words",
                b.name,
                b.shape,
                b.words.len()
            )));
        }
        buf.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(b.name.as_bytes());
        buf.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
        for d in &b.shape {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for w in &b.words {
            buf.extend_from_slice(&w.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)
        .map_err(|e| CliError::Io(format!("create {}: {e}", path.display())))?;
    f.write_all(&buf)
        .map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))?;
    Ok(())
}

pub fn read_blocks(path: &Path) -> Result<Vec<Block>> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Io(format!("read {}: {e}", path.display())))?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CliError::Validation(format!(
            "{}: missing CDIFF1 magic",
            path.display()
        )));
    }
    let mut off = MAGIC.len();
    let mut blocks = Vec::new();
    let take = |off: &mut usize, n: usize| -> Result<std::ops::Range<usize>> {
        if *off + n > bytes.len() {
            return Err(CliError::Validation(format!(
                "{}: truncated at offset {}",
                path.display(),
                *off
            )));
        }
        let r = *off..*off + n;
        *off += n;
        Ok(r)
    };
    while off < bytes.len() {
        let r = take(&mut off, 4)?;
        let name_len = u32::from_le_bytes(bytes[r].try_into().unwrap()) as usize;
        let r = take(&mut off, name_len)?;
        let name = String::from_utf8(bytes[r].to_vec())
            .map_err(|_| CliError::Validation("non-UTF8 block name".into()))?;
        let r = take(&mut off, 4)?;
        let rank = u32::from_le_bytes(bytes[r].try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let r = take(&mut off, 4)?;
            shape.push(u32::from_le_bytes(bytes[r].try_into().unwrap()));
        }
        let count: u64 = shape.iter().map(|d| *d as u64).product();
        let mut words = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let r = take(&mut off, 8)?;
            words.push(u64::from_le_bytes(bytes[r].try_into().unwrap()));
        }
        blocks.push(Block { name, shape, words });
    }
    Ok(blocks)
}

/// Everything needed to resume training or run evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: WindowSpec,
    pub embed_dim: usize,
    pub latent_dim: usize,
    pub schedule_kind: ScheduleKind,
    pub n_steps: usize,
    pub models: ModelBundle,
    pub optim: Option<OptimStates>,
    pub rng: Option<RngState>,
    pub norm: NormStats,
    pub trained_steps: u64,
}

impl Checkpoint {
    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        Ok(make_schedule(self.schedule_kind, self.n_steps)?)
    }
}

fn push_mlp(blocks: &mut Vec<Block>, prefix: &str, params: &MlpParams) {
    let sizes: Vec<f64> = params.sizes().iter().map(|s| *s as f64).collect();
    blocks.push(Block::vector(&format!("{prefix}.sizes"), &sizes));
    for l in 0..params.layer_count() {
        let w = params.weight(l);
        blocks.push(Block::floats(
            &format!("{prefix}.w{l}"),
            w.shape().iter().map(|d| *d as u32).collect(),
            w.data(),
        ));
        blocks.push(Block::vector(&format!("{prefix}.b{l}"), params.bias(l).data()));
    }
}

fn push_adam(blocks: &mut Vec<Block>, prefix: &str, state: &AdamState) {
    let cfg = state.config();
    blocks.push(Block::vector(
        &format!("{prefix}.config"),
        &[
            cfg.learning_rate,
            cfg.beta1,
            cfg.beta2,
            cfg.epsilon,
            state.step_count() as f64,
        ],
    ));
    let (mw, vw, mb, vb) = state.moments();
    for (l, m) in mw.iter().enumerate() {
        blocks.push(Block::vector(&format!("{prefix}.mw{l}"), m));
    }
    for (l, v) in vw.iter().enumerate() {
        blocks.push(Block::vector(&format!("{prefix}.vw{l}"), v));
    }
    for (l, m) in mb.iter().enumerate() {
        blocks.push(Block::vector(&format!("{prefix}.mb{l}"), m));
    }
    for (l, v) in vb.iter().enumerate() {
        blocks.push(Block::vector(&format!("{prefix}.vb{l}"), v));
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut blocks = Vec::new();
    let (kind_tag, beta_start, beta_end) = match ckpt.schedule_kind {
        ScheduleKind::Linear { beta_start, beta_end } => (0.0, beta_start, beta_end),
        ScheduleKind::Cosine => (1.0, 0.0, 0.0),
    };
    blocks.push(Block::vector(
        "meta",
        &[
            FORMAT_VERSION,
            ckpt.spec.state_dim as f64,
            ckpt.spec.action_dim as f64,
            ckpt.spec.horizon as f64,
            ckpt.n_steps as f64,
            kind_tag,
            beta_start,
            beta_end,
            ckpt.embed_dim as f64,
            ckpt.latent_dim as f64,
            ckpt.trained_steps as f64,
        ],
    ));

    push_mlp(&mut blocks, "denoiser", &ckpt.models.denoiser);
    push_mlp(&mut blocks, "predictor", ckpt.models.predictor.params());
    push_mlp(&mut blocks, "projector", &ckpt.models.projector);

    if let Some(optim) = &ckpt.optim {
        push_adam(&mut blocks, "adam.denoiser", &optim.denoiser);
        push_adam(&mut blocks, "adam.predictor", &optim.predictor);
        push_adam(&mut blocks, "adam.projector", &optim.projector);
    }
    if let Some(rng) = &ckpt.rng {
        let mut words = Vec::with_capacity(7);
        for chunk in rng.seed.chunks(8) {
            words.push(u64::from_le_bytes(chunk.try_into().unwrap()));
        }
        words.push(rng.stream);
        words.push(rng.word_pos as u64);
        words.push((rng.word_pos >> 64) as u64);
        blocks.push(Block {
            name: "rng".into(),
            shape: vec![7],
            words,
        });
    }

    let n = &ckpt.norm;
    blocks.push(Block::vector("norm.state_mean", &n.state_mean));
    blocks.push(Block::vector("norm.state_std", &n.state_std));
    blocks.push(Block::vector("norm.action_mean", &n.action_mean));
    blocks.push(Block::vector("norm.action_std", &n.action_std));
    blocks.push(Block::vector("norm.v_range", &[n.v_min, n.v_max]));
    let mut flags = vec![if n.degenerate_return_range { 1.0 } else { 0.0 }];
    flags.extend(n.floored_dims.iter().map(|d| *d as f64));
    blocks.push(Block::vector("norm.flags", &flags));

    write_blocks(path, &blocks)
}

struct BlockMap(Vec<Block>);

impl BlockMap {
    fn get(&self, name: &str) -> Result<&Block> {
        self.0
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| CliError::Validation(format!("checkpoint missing block '{name}'")))
    }

    fn floats(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.get(name)?.as_floats())
    }

    fn has(&self, name: &str) -> bool {
        self.0.iter().any(|b| b.name == name)
    }
}

fn load_mlp(map: &BlockMap, prefix: &str, block_id: u16, out_act: Activation) -> Result<MlpParams> {
    let sizes: Vec<usize> = map
        .floats(&format!("{prefix}.sizes"))?
        .iter()
        .map(|s| *s as usize)
        .collect();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..sizes.len() - 1 {
        let wb = map.get(&format!("{prefix}.w{l}"))?;
        let shape: Vec<usize> = wb.shape.iter().map(|d| *d as usize).collect();
        weights.push(
            Tensor::new(shape, wb.as_floats()).map_err(CliError::from)?,
        );
        let bb = map.get(&format!("{prefix}.b{l}"))?;
        biases.push(Tensor::from_vec(bb.as_floats()));
    }
    Ok(MlpParams::from_tensors(block_id, sizes, weights, biases, out_act)?)
}

fn load_adam(map: &BlockMap, prefix: &str, params: &MlpParams) -> Result<AdamState> {
    let cfg_vals = map.floats(&format!("{prefix}.config"))?;
    if cfg_vals.len() != 5 {
        return Err(CliError::Validation(format!("{prefix}.config malformed")));
    }
    let cfg = AdamConfig {
        learning_rate: cfg_vals[0],
        beta1: cfg_vals[1],
        beta2: cfg_vals[2],
        epsilon: cfg_vals[3],
    };
    let mut mw = Vec::new();
    let mut vw = Vec::new();
    let mut mb = Vec::new();
    let mut vb = Vec::new();
    for l in 0..params.layer_count() {
        mw.push(map.floats(&format!("{prefix}.mw{l}"))?);
        vw.push(map.floats(&format!("{prefix}.vw{l}"))?);
        mb.push(map.floats(&format!("{prefix}.mb{l}"))?);
        vb.push(map.floats(&format!("{prefix}.vb{l}"))?);
    }
    Ok(AdamState::restore(cfg, mw, vw, mb, vb, cfg_vals[4] as u64))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let map = BlockMap(read_blocks(path)?);
    let meta = map.floats("meta")?;
    if meta.len() != 11 || meta[0] != FORMAT_VERSION {
        return Err(CliError::Validation(format!(
            "{}: unsupported checkpoint meta",
            path.display()
        )));
    }
    let spec = WindowSpec::new(meta[3] as usize, meta[1] as usize, meta[2] as usize)?;
    let n_steps = meta[4] as usize;
    let schedule_kind = if meta[5] == 0.0 {
        ScheduleKind::Linear {
            beta_start: meta[6],
            beta_end: meta[7],
        }
    } else {
        ScheduleKind::Cosine
    };
    let embed_dim = meta[8] as usize;
    let latent_dim = meta[9] as usize;
    let trained_steps = meta[10] as u64;

    let denoiser = load_mlp(&map, "denoiser", BLOCK_DENOISER, Activation::Linear)?;
    let predictor_params = load_mlp(&map, "predictor", BLOCK_PREDICTOR, Activation::Linear)?;
    let predictor = ReturnPredictor::from_params(predictor_params, spec.flat_len())?;
    let projector = load_mlp(&map, "projector", BLOCK_PROJECTOR, Activation::Sigmoid)?;
    let models = ModelBundle {
        denoiser,
        predictor,
        projector,
    };

    let optim = if map.has("adam.denoiser.config") {
        Some(OptimStates {
            denoiser: load_adam(&map, "adam.denoiser", &models.denoiser)?,
            predictor: load_adam(&map, "adam.predictor", models.predictor.params())?,
            projector: load_adam(&map, "adam.projector", &models.projector)?,
        })
    } else {
        None
    };

    let rng = if map.has("rng") {
        let words = &map.get("rng")?.words;
        if words.len() != 7 {
            return Err(CliError::Validation("rng block malformed".into()));
        }
        let mut seed = [0u8; 32];
        for (i, w) in words[..4].iter().enumerate() {
            seed[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
        }
        Some(RngState {
            seed,
            stream: words[4],
            word_pos: words[5] as u128 | ((words[6] as u128) << 64),
        })
    } else {
        None
    };

    let v_range = map.floats("norm.v_range")?;
    let flags = map.floats("norm.flags")?;
    let norm = NormStats {
        state_mean: map.floats("norm.state_mean")?,
        state_std: map.floats("norm.state_std")?,
        action_mean: map.floats("norm.action_mean")?,
        action_std: map.floats("norm.action_std")?,
        v_min: v_range[0],
        v_max: v_range[1],
        degenerate_return_range: flags[0] != 0.0,
        floored_dims: flags[1..].iter().map(|d| *d as usize).collect(),
    };

    Ok(Checkpoint {
        spec,
        embed_dim,
        latent_dim,
        schedule_kind,
        n_steps,
        models,
        optim,
        rng,
        norm,
        trained_steps,
    })
}

/// Resume a captured stream.
pub fn restore_rng(state: &RngState) -> SeededRng {
    SeededRng::restore(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdp_core::models::ModelConfig;
    use cdp_core::training::OptimStates;

    #[test]
    fn block_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blocks.cdiff");
        let blocks = vec![
            Block::floats("a", vec![2, 2], &[1.0, -0.0, f64::MIN_POSITIVE, 1e300]),
            Block::vector("b.name.with.dots", &[0.1 + 0.2]),
            Block {
                name: "raw".into(),
                shape: vec![3],
                words: vec![u64::MAX, 0, 0x8000_0000_0000_0001],
            },
        ];
        write_blocks(&path, &blocks).unwrap();
        let back = read_blocks(&path).unwrap();
        assert_eq!(blocks, back);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cdiff");
        std::fs::write(&path, b"NOTAMAGIC").unwrap();
        assert!(read_blocks(&path).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let spec = WindowSpec::new(3, 2, 1).unwrap();
        let mut rng = SeededRng::from_seed(5);
        let models = ModelBundle::init(
            &spec,
            &ModelConfig {
                embed_dim: 4,
                denoiser_hidden: vec![9],
                predictor_hidden: vec![7],
                latent_dim: 5,
            },
            &mut rng,
        )
        .unwrap();
        let optim = OptimStates::new(&models, 2e-3);
        for _ in 0..11 {
            rng.normal();
        }
        let ckpt = Checkpoint {
            spec,
            embed_dim: 4,
            latent_dim: 5,
            schedule_kind: ScheduleKind::Cosine,
            n_steps: 12,
            models,
            optim: Some(optim),
            rng: Some(rng.state()),
            norm: NormStats {
                state_mean: vec![0.5, 0.25],
                state_std: vec![0.1, 0.2],
                action_mean: vec![0.0],
                action_std: vec![0.03],
                v_min: -1.5,
                v_max: 2.5,
                floored_dims: vec![2],
                degenerate_return_range: false,
            },
            trained_steps: 321,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.cdiff");
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(ckpt, back);

        // restored rng continues the stream bit-identically
        let mut resumed = restore_rng(back.rng.as_ref().unwrap());
        let mut original = rng;
        for _ in 0..50 {
            assert_eq!(original.next_u64(), resumed.next_u64());
        }
    }
}
