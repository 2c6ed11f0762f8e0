//! Conditional denoiser: a small convolutional noise predictor with
//! sinusoidal timestep embedding and a single-query cross-attention
//! conditioning block (attention over prompt tokens produces per-channel
//! scale and shift).

use ndarray::{Array1, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::conditioning::CondEmbedding;
use crate::nn::{bind_frozen, he_normal, zeros, BoundParams, ParamStore};
use crate::tensor::{Tape, VarId};

/// Noise-prediction model: predicts the noise added at step `t` given the
/// noisy state and the prompt conditioning.
pub trait DenoiserModel: Send + Sync {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    /// Tape forward; `params` must be bound on `tape`.
    fn predict_on_tape(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        x_t: VarId,
        t: usize,
        cond: &CondEmbedding,
    ) -> VarId;

    /// Inference forward. Deterministic given (params, inputs).
    fn predict(&self, x_t: &ArrayD<f64>, t: usize, cond: &CondEmbedding) -> ArrayD<f64> {
        let mut tape = Tape::new();
        let bound = bind_frozen(&mut tape, self.params());
        let x = tape.leaf(x_t.clone());
        let out = self.predict_on_tape(&mut tape, &bound, x, t, cond);
        tape.value(out).clone()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DenoiserConfig {
    /// Data channels (1 for pixel-space grayscale, latent channels otherwise).
    pub channels: usize,
    /// Feature channels of the hidden convolutions.
    pub hidden: usize,
    /// Token embedding dimensionality (matches the text encoder).
    pub cond_dim: usize,
    /// Sinusoidal timestep embedding dimensionality (even).
    pub time_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            channels: 1,
            hidden: 16,
            cond_dim: 16,
            time_dim: 8,
        }
    }
}

/// Sinusoidal position embedding of the (1-based) timestep.
pub fn timestep_embedding(t: usize, dim: usize) -> Array1<f64> {
    assert!(dim >= 2 && dim % 2 == 0, "time_dim must be even and >= 2");
    let half = dim / 2;
    let mut out = Array1::<f64>::zeros(dim);
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        out[2 * i] = (t as f64 * freq).sin();
        out[2 * i + 1] = (t as f64 * freq).cos();
    }
    out
}

#[derive(Debug, Clone)]
pub struct ToyDenoiser {
    pub cfg: DenoiserConfig,
    params: ParamStore,
}

impl ToyDenoiser {
    pub fn init(cfg: DenoiserConfig, seed: u64) -> Self {
        let mut rng = crate::nn::seeded_rng(seed, "denoiser-init");
        let (c, f, d, td) = (cfg.channels, cfg.hidden, cfg.cond_dim, cfg.time_dim);
        let mut p = ParamStore::new();
        p.insert("conv1.w", he_normal(&[f, c, 3, 3], c * 9, &mut rng));
        p.insert("conv1.b", zeros(&[f]));
        p.insert("time.w", he_normal(&[td, f], td, &mut rng));
        p.insert("attn.wq", he_normal(&[f, d], f, &mut rng));
        p.insert("attn.wk", he_normal(&[d, d], d, &mut rng));
        p.insert("attn.wv", he_normal(&[d, d], d, &mut rng));
        p.insert("attn.wscale", he_normal(&[d, f], d, &mut rng));
        p.insert("attn.wshift", he_normal(&[d, f], d, &mut rng));
        p.insert("conv2.w", he_normal(&[f, f, 3, 3], f * 9, &mut rng));
        p.insert("conv2.b", zeros(&[f]));
        p.insert("conv3.w", he_normal(&[c, f, 3, 3], f * 9, &mut rng));
        p.insert("conv3.b", zeros(&[c]));
        Self { cfg, params: p }
    }

    pub fn from_params(cfg: DenoiserConfig, params: ParamStore) -> Self {
        Self { cfg, params }
    }
}

impl DenoiserModel for ToyDenoiser {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn predict_on_tape(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        x_t: VarId,
        t: usize,
        cond: &CondEmbedding,
    ) -> VarId {
        let f = self.cfg.hidden;
        let d = self.cfg.cond_dim;
        assert_eq!(cond.dim(), d, "conditioning dimensionality mismatch");

        // Stem convolution plus timestep bias.
        let h0 = tape.conv2d(x_t, params.id("conv1.w"), Some(params.id("conv1.b")), 1, 1);
        let temb = timestep_embedding(t, self.cfg.time_dim);
        let temb_leaf = tape.leaf(
            temb.into_shape_with_order(IxDyn(&[1, self.cfg.time_dim]))
                .unwrap(),
        );
        let tproj = tape.matmul(temb_leaf, params.id("time.w"));
        let tbias = tape.reshape(tproj, &[f]);
        let h0 = tape.add_channel(h0, tbias);
        let h0 = tape.leaky_relu(h0, 0.1);

        // Single-query cross-attention over the prompt tokens, emitting a
        // per-channel scale and shift.
        let tokens = tape.leaf(cond.tokens.clone());
        let pooled = tape.mean_spatial(h0);
        let q = tape.reshape(pooled, &[1, f]);
        let q = tape.matmul(q, params.id("attn.wq"));
        let k = tape.matmul(tokens, params.id("attn.wk"));
        let v = tape.matmul(tokens, params.id("attn.wv"));
        let qt = tape.transpose(q);
        let scores = tape.matmul(k, qt);
        let scores = tape.reshape(scores, &[cond.len()]);
        let scores = tape.scale(scores, 1.0 / (d as f64).sqrt());
        let attn = tape.softmax(scores);
        let attn_row = tape.reshape(attn, &[1, cond.len()]);
        let ctx = tape.matmul(attn_row, v);
        let scale_row = tape.matmul(ctx, params.id("attn.wscale"));
        let scale = tape.reshape(scale_row, &[f]);
        let scale = tape.add_scalar(scale, 1.0);
        let shift_row = tape.matmul(ctx, params.id("attn.wshift"));
        let shift = tape.reshape(shift_row, &[f]);
        let h1 = tape.mul_channel(h0, scale);
        let h1 = tape.add_channel(h1, shift);

        let h2 = tape.conv2d(h1, params.id("conv2.w"), Some(params.id("conv2.b")), 1, 1);
        let h2 = tape.leaky_relu(h2, 0.1);
        tape.conv2d(h2, params.id("conv3.w"), Some(params.id("conv3.b")), 1, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::conditioning::{HashedBagEncoder, TextEncoder};

    #[test]
    fn output_shape_matches_input() {
        let model = ToyDenoiser::init(DenoiserConfig::default(), 3);
        let enc = HashedBagEncoder::toy(3);
        let cond = enc.encode("a fish");
        let x = ArrayD::from_elem(IxDyn(&[1, 16, 16]), 0.3);
        let y = model.predict(&x, 5, &cond);
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn prediction_is_deterministic_and_conditioning_sensitive() {
        let model = ToyDenoiser::init(DenoiserConfig::default(), 4);
        let enc = HashedBagEncoder::toy(4);
        let a = enc.encode("a fish");
        let b = enc.encode("a house");
        let x = ArrayD::from_elem(IxDyn(&[1, 8, 8]), -0.2);
        let y1 = model.predict(&x, 3, &a);
        let y2 = model.predict(&x, 3, &a);
        let y3 = model.predict(&x, 3, &b);
        assert_eq!(y1, y2);
        assert_ne!(y1, y3);
        // Timestep changes the output too.
        let y4 = model.predict(&x, 4, &a);
        assert_ne!(y1, y4);
    }

    #[test]
    fn timestep_embedding_components_bounded() {
        let e = timestep_embedding(17, 8);
        assert_eq!(e.len(), 8);
        assert!(e.iter().all(|v| v.abs() <= 1.0));
        assert_ne!(timestep_embedding(1, 8), timestep_embedding(2, 8));
    }
}
