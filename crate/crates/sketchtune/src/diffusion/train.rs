//! Denoiser fine-tuning loop over (array, conditioning) pairs.

use std::path::{Path, PathBuf};

use ndarray::ArrayD;
use rand::seq::SliceRandom;

use super::conditioning::CondEmbedding;
use super::loss::denoising_loss_on_tape;
use super::model::{DenoiserConfig, DenoiserModel, ToyDenoiser};
use super::schedule::{NoiseSchedule, ScheduleKind};
use super::DiffusionError;
use crate::checkpoint::{self, Checkpoint, RngState};
use crate::nn::{bind_params, collect_grads, Adam, AdamConfig};
use crate::tensor::Tape;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct UnetTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub t_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub checkpoint_interval: usize,
    pub seed: u64,
    pub model: DenoiserConfig,
}

impl Default for UnetTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            optimizer: AdamConfig {
                lr: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            t_steps: 50,
            beta_min: 1e-4,
            beta_max: 2e-2,
            checkpoint_interval: 5,
            seed: 0,
            model: DenoiserConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UnetEpoch {
    pub epoch: usize,
    pub loss: f64,
}

pub struct UnetTrainOutput {
    pub model: ToyDenoiser,
    pub schedule: NoiseSchedule,
    pub trace: Vec<UnetEpoch>,
    pub checkpoints: Vec<PathBuf>,
}

/// Trains the denoiser on diffusion-space arrays with their conditioning.
/// `ckpt_config` is embedded verbatim into every checkpoint so downstream
/// stages can rebuild the model and schedule.
pub fn train_unet(
    data: &[ArrayD<f64>],
    conds: &[CondEmbedding],
    cfg: &UnetTrainConfig,
    ckpt_dir: Option<&Path>,
    ckpt_config: serde_json::Value,
) -> Result<UnetTrainOutput, DiffusionError> {
    assert_eq!(data.len(), conds.len());
    if data.is_empty() {
        return Err(DiffusionError::InvalidRange("no training data".into()));
    }
    let schedule = NoiseSchedule::new(cfg.t_steps, ScheduleKind::Linear, cfg.beta_min, cfg.beta_max)?;
    let mut model = ToyDenoiser::init(cfg.model.clone(), crate::nn::derive_seed(cfg.seed, "unet-init"));
    let mut opt = Adam::new(&cfg.optimizer);
    let mut trace = Vec::new();
    let mut checkpoints = Vec::new();

    let save = |model: &ToyDenoiser,
                opt: &Adam,
                epoch: usize,
                checkpoints: &mut Vec<PathBuf>|
     -> Result<(), DiffusionError> {
        let Some(dir) = ckpt_dir else { return Ok(()) };
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
        let path = dir.join(format!("unet-epoch{epoch:04}.ckpt"));
        checkpoint::save(&ck, &path)?;
        checkpoints.push(path);
        Ok(())
    };

    let mut last_good = model.params().clone();
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut shuffle_rng = crate::nn::seeded_rng(cfg.seed, &format!("unet-shuffle/{epoch}"));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<ArrayD<f64>> = chunk.iter().map(|&i| data[i].clone()).collect();
            let cs: Vec<&CondEmbedding> = chunk.iter().map(|&i| &conds[i]).collect();
            let mut tape = Tape::new();
            let bound = bind_params(&mut tape, model.params());
            let mut noise_rng =
                crate::nn::seeded_rng(cfg.seed, &format!("unet-noise/{epoch}/{step}"));
            let loss = denoising_loss_on_tape(
                &mut tape, &model, &bound, &xs, &cs, &schedule, &mut noise_rng,
            )?;
            let loss_v = tape.scalar(loss);
            if !loss_v.is_finite() {
                save(&ToyDenoiser::from_params(cfg.model.clone(), last_good), &opt, epoch - 1, &mut checkpoints)?;
                return Err(DiffusionError::Diverged { epoch });
            }
            let grads = tape.backward(loss);
            let gmap = collect_grads(&tape, &bound, &grads, model.params());
            last_good = model.params().clone();
            opt.step(model.params_mut(), &gmap);
            epoch_loss += loss_v * chunk.len() as f64;
            seen += chunk.len();
        }
        trace.push(UnetEpoch {
            epoch,
            loss: epoch_loss / seen as f64,
        });
        if cfg.checkpoint_interval > 0 && epoch % cfg.checkpoint_interval == 0 && epoch != cfg.epochs
        {
            save(&model, &opt, epoch, &mut checkpoints)?;
        }
    }
    save(&model, &opt, cfg.epochs, &mut checkpoints)?;
    Ok(UnetTrainOutput {
        model,
        schedule,
        trace,
        checkpoints,
    })
}
