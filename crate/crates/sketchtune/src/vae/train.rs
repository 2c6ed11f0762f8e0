//! Autoencoder fine-tuning loop with per-epoch metric traces and
//! checkpointing.

use std::path::{Path, PathBuf};

use ndarray::ArrayD;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::extractor::PerceptualExtractor;
use super::loss::{vae_loss_on_tape, VaeLossConfig};
use super::model::{ToyVae, VaeModelConfig};
use super::VaeError;
use crate::checkpoint::{self, Checkpoint, RngState};
use crate::nn::{bind_params, collect_grads, Adam, AdamConfig};
use crate::tensor::{Tape, VarId};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VaeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub loss: VaeLossConfig,
    pub checkpoint_interval: usize,
    pub seed: u64,
    pub model: VaeModelConfig,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 16,
            optimizer: AdamConfig {
                lr: 2e-3,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            loss: VaeLossConfig::paper(),
            checkpoint_interval: 5,
            seed: 0,
            model: VaeModelConfig::default(),
        }
    }
}

/// One row of the metric trace. Evaluation reconstructs with the posterior
/// mean (no sampling), so the trace is smooth and deterministic.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mse: f64,
    pub lpips: f64,
    pub kl: f64,
    pub total: f64,
}

pub struct VaeTrainOutput {
    pub model: ToyVae,
    pub trace: Vec<EpochMetrics>,
    pub checkpoints: Vec<PathBuf>,
}

/// Renders the metric trace as the CSV the run directory stores.
pub fn trace_to_csv(trace: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,mse,lpips,kl,total\n");
    for row in trace {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.epoch, row.mse, row.lpips, row.kl, row.total
        ));
    }
    out
}

/// Deterministic full-set evaluation with `z = mean`.
pub fn evaluate_metrics(
    model: &ToyVae,
    images: &[ArrayD<f64>],
    cfg: &VaeLossConfig,
    extractor: &PerceptualExtractor,
    epoch: usize,
) -> EpochMetrics {
    let mut sums = (0.0, 0.0, 0.0, 0.0);
    for x in images {
        let mut tape = Tape::new();
        let bound = crate::nn::bind_frozen(&mut tape, model.params());
        let leaf = tape.leaf(x.clone());
        let (mu, lv) = model.encode_on_tape(&mut tape, &bound, leaf);
        let xhat = model.decode_on_tape(&mut tape, &bound, mu);
        let nodes = vae_loss_on_tape(&mut tape, &[leaf], &[xhat], &[mu], &[lv], cfg, extractor);
        sums.0 += tape.scalar(nodes.recon);
        sums.1 += tape.scalar(nodes.lpips);
        sums.2 += tape.scalar(nodes.kl);
        sums.3 += tape.scalar(nodes.total);
    }
    let n = images.len() as f64;
    EpochMetrics {
        epoch,
        mse: sums.0 / n,
        lpips: sums.1 / n,
        kl: sums.2 / n,
        total: sums.3 / n,
    }
}

fn save_ckpt(
    model: &ToyVae,
    opt: &Adam,
    cfg: &VaeTrainConfig,
    ckpt_config: &serde_json::Value,
    epoch: usize,
    dir: &Path,
    checkpoints: &mut Vec<PathBuf>,
) -> Result<(), VaeError> {
    let mut ck = Checkpoint::new(
        ckpt_config.clone(),
        epoch as u64,
        RngState {
            seed: cfg.seed,
            counter: epoch as u64,
        },
    );
    ck.insert_tensors(
        model
            .params()
            .iter()
            .map(|(k, v)| (format!("model.{k}"), v.clone()))
            .collect(),
    );
    ck.insert_tensors(opt.export_state());
    let path = dir.join(format!("vae-epoch{epoch:04}.ckpt"));
    checkpoint::save(&ck, &path)?;
    checkpoints.push(path);
    Ok(())
}

/// Trains the autoencoder. Images are `[C, H, W]` arrays in [0, 1].
/// With zero epochs the trace is empty and the written checkpoint equals
/// the initialization.
pub fn train_vae(
    images: &[ArrayD<f64>],
    cfg: &VaeTrainConfig,
    ckpt_dir: Option<&Path>,
    ckpt_config: serde_json::Value,
    extractor: &PerceptualExtractor,
) -> Result<VaeTrainOutput, VaeError> {
    if images.is_empty() {
        return Err(VaeError::ShapeMismatch("no training images".into()));
    }
    let mut model = ToyVae::init(cfg.model.clone(), crate::nn::derive_seed(cfg.seed, "vae-model"));
    let mut opt = Adam::new(&cfg.optimizer);
    let mut trace = Vec::new();
    let mut checkpoints = Vec::new();

    let mut last_good = model.params().clone();
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..images.len()).collect();
        let mut shuffle_rng = crate::nn::seeded_rng(cfg.seed, &format!("vae-shuffle/{epoch}"));
        order.shuffle(&mut shuffle_rng);

        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut tape = Tape::new();
            let bound = bind_params(&mut tape, model.params());
            let mut noise_rng =
                crate::nn::seeded_rng(cfg.seed, &format!("vae-noise/{epoch}/{step}"));

            let mut xs: Vec<VarId> = Vec::with_capacity(chunk.len());
            let mut xhats = Vec::with_capacity(chunk.len());
            let mut mus = Vec::with_capacity(chunk.len());
            let mut lvs = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let x = tape.leaf(images[i].clone());
                let (mu, lv) = model.encode_on_tape(&mut tape, &bound, x);
                // Reparameterized sample: z = mu + exp(lv / 2) * eps.
                let eps = crate::diffusion::standard_normal(
                    tape.value(mu).shape().to_vec().as_slice(),
                    &mut noise_rng,
                );
                let eps = tape.leaf(eps);
                let half_lv = tape.scale(lv, 0.5);
                let std = tape.exp(half_lv);
                let noise = tape.mul(std, eps);
                let z = tape.add(mu, noise);
                let xhat = model.decode_on_tape(&mut tape, &bound, z);
                xs.push(x);
                xhats.push(xhat);
                mus.push(mu);
                lvs.push(lv);
            }
            let nodes = vae_loss_on_tape(&mut tape, &xs, &xhats, &mus, &lvs, &cfg.loss, extractor);
            let total = tape.scalar(nodes.total);
            if !total.is_finite() {
                if let Some(dir) = ckpt_dir {
                    let recovered = ToyVae::from_params(cfg.model.clone(), last_good);
                    save_ckpt(&recovered, &opt, cfg, &ckpt_config, epoch - 1, dir, &mut checkpoints)?;
                }
                return Err(VaeError::Diverged { epoch });
            }
            let grads = tape.backward(nodes.total);
            let gmap = collect_grads(&tape, &bound, &grads, model.params());
            last_good = model.params().clone();
            opt.step(model.params_mut(), &gmap);
        }

        trace.push(evaluate_metrics(&model, images, &cfg.loss, extractor, epoch));
        if let Some(dir) = ckpt_dir {
            if cfg.checkpoint_interval > 0
                && epoch % cfg.checkpoint_interval == 0
                && epoch != cfg.epochs
            {
                save_ckpt(&model, &opt, cfg, &ckpt_config, epoch, dir, &mut checkpoints)?;
            }
        }
    }
    if let Some(dir) = ckpt_dir {
        save_ckpt(&model, &opt, cfg, &ckpt_config, cfg.epochs, dir, &mut checkpoints)?;
    }
    Ok(VaeTrainOutput {
        model,
        trace,
        checkpoints,
    })
}
