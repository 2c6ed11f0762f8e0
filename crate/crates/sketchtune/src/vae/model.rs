//! Toy convolutional autoencoder with a diagonal-Gaussian latent.
//!
//! Three stride-2 convolutions take a square image down 8x to the spatial
//! latent (64 -> 8); the decoder mirrors them with nearest-neighbour
//! upsampling. Real mode adapts a pretrained autoencoder behind the same
//! encode/decode surface.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::loss::LatentPosterior;
use crate::nn::{bind_frozen, he_normal, zeros, BoundParams, ParamStore};
use crate::tensor::{Tape, VarId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModelConfig {
    pub image_size: usize,
    pub in_channels: usize,
    pub latent_channels: usize,
    pub base_channels: usize,
}

impl Default for VaeModelConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            in_channels: 1,
            latent_channels: 2,
            base_channels: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyVae {
    pub cfg: VaeModelConfig,
    params: ParamStore,
}

impl ToyVae {
    pub fn init(cfg: VaeModelConfig, seed: u64) -> Self {
        assert!(
            cfg.image_size % 8 == 0,
            "image size must be divisible by 8"
        );
        let mut rng = crate::nn::seeded_rng(seed, "vae-init");
        let (cin, cl, b) = (cfg.in_channels, cfg.latent_channels, cfg.base_channels);
        let mut p = ParamStore::new();
        p.insert("enc1.w", he_normal(&[b, cin, 3, 3], cin * 9, &mut rng));
        p.insert("enc1.b", zeros(&[b]));
        p.insert("enc2.w", he_normal(&[2 * b, b, 3, 3], b * 9, &mut rng));
        p.insert("enc2.b", zeros(&[2 * b]));
        p.insert("enc3.w", he_normal(&[2 * cl, 2 * b, 3, 3], 2 * b * 9, &mut rng));
        p.insert("enc3.b", zeros(&[2 * cl]));
        p.insert("dec0.w", he_normal(&[2 * b, cl, 3, 3], cl * 9, &mut rng));
        p.insert("dec0.b", zeros(&[2 * b]));
        p.insert("dec1.w", he_normal(&[b, 2 * b, 3, 3], 2 * b * 9, &mut rng));
        p.insert("dec1.b", zeros(&[b]));
        p.insert("dec2.w", he_normal(&[b, b, 3, 3], b * 9, &mut rng));
        p.insert("dec2.b", zeros(&[b]));
        p.insert("dec3.w", he_normal(&[cin, b, 3, 3], b * 9, &mut rng));
        p.insert("dec3.b", zeros(&[cin]));
        Self { cfg, params: p }
    }

    pub fn from_params(cfg: VaeModelConfig, params: ParamStore) -> Self {
        Self { cfg, params }
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// `[latent_channels, S/8, S/8]`.
    pub fn latent_shape(&self) -> Vec<usize> {
        vec![
            self.cfg.latent_channels,
            self.cfg.image_size / 8,
            self.cfg.image_size / 8,
        ]
    }

    /// Encoder forward; returns (mean, log-variance) nodes.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        x: VarId,
    ) -> (VarId, VarId) {
        let cl = self.cfg.latent_channels;
        let h = tape.conv2d(x, params.id("enc1.w"), Some(params.id("enc1.b")), 2, 1);
        let h = tape.leaky_relu(h, 0.1);
        let h = tape.conv2d(h, params.id("enc2.w"), Some(params.id("enc2.b")), 2, 1);
        let h = tape.leaky_relu(h, 0.1);
        let h = tape.conv2d(h, params.id("enc3.w"), Some(params.id("enc3.b")), 2, 1);
        let mu = tape.slice_channels(h, 0, cl);
        let logvar = tape.slice_channels(h, cl, 2 * cl);
        // Soft-bound the log-variance so early training cannot explode it.
        let logvar = tape.tanh(logvar);
        let logvar = tape.scale(logvar, 6.0);
        (mu, logvar)
    }

    /// Decoder forward from a latent node.
    pub fn decode_on_tape(&self, tape: &mut Tape, params: &BoundParams, z: VarId) -> VarId {
        let h = tape.conv2d(z, params.id("dec0.w"), Some(params.id("dec0.b")), 1, 1);
        let h = tape.leaky_relu(h, 0.1);
        let h = tape.upsample2x(h);
        let h = tape.conv2d(h, params.id("dec1.w"), Some(params.id("dec1.b")), 1, 1);
        let h = tape.leaky_relu(h, 0.1);
        let h = tape.upsample2x(h);
        let h = tape.conv2d(h, params.id("dec2.w"), Some(params.id("dec2.b")), 1, 1);
        let h = tape.leaky_relu(h, 0.1);
        let h = tape.upsample2x(h);
        tape.conv2d(h, params.id("dec3.w"), Some(params.id("dec3.b")), 1, 1)
    }

    /// Frozen single-image encode; posterior has a leading batch axis of 1.
    pub fn encode(&self, x: &ArrayD<f64>) -> LatentPosterior {
        let mut tape = Tape::new();
        let bound = bind_frozen(&mut tape, &self.params);
        let leaf = tape.leaf(x.clone());
        let (mu, lv) = self.encode_on_tape(&mut tape, &bound, leaf);
        let with_batch = |v: &ArrayD<f64>| {
            let mut shape = vec![1];
            shape.extend_from_slice(v.shape());
            v.clone().into_shape_with_order(ndarray::IxDyn(&shape)).unwrap()
        };
        LatentPosterior {
            mean: with_batch(tape.value(mu)),
            log_variance: with_batch(tape.value(lv)),
        }
    }

    /// Frozen single-latent decode.
    pub fn decode(&self, z: &ArrayD<f64>) -> ArrayD<f64> {
        let mut tape = Tape::new();
        let bound = bind_frozen(&mut tape, &self.params);
        let leaf = tape.leaf(z.clone());
        let out = self.decode_on_tape(&mut tape, &bound, leaf);
        tape.value(out).clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn shapes_roundtrip() {
        let vae = ToyVae::init(VaeModelConfig::default(), 1);
        let x = ArrayD::from_elem(IxDyn(&[1, 64, 64]), 0.5);
        let post = vae.encode(&x);
        assert_eq!(post.mean.shape(), &[1, 2, 8, 8]);
        assert_eq!(post.log_variance.shape(), &[1, 2, 8, 8]);
        let z = post.mean.index_axis(ndarray::Axis(0), 0).to_owned().into_dyn();
        let xhat = vae.decode(&z);
        assert_eq!(xhat.shape(), x.shape());
    }

    #[test]
    fn tiny_config_is_under_1k_params() {
        let vae = ToyVae::init(
            VaeModelConfig {
                image_size: 8,
                in_channels: 1,
                latent_channels: 1,
                base_channels: 2,
            },
            0,
        );
        assert!(vae.params().num_scalars() <= 1000, "{}", vae.params().num_scalars());
    }

    #[test]
    fn encode_is_deterministic() {
        let vae = ToyVae::init(VaeModelConfig::default(), 7);
        let x = ArrayD::from_shape_fn(IxDyn(&[1, 64, 64]), |ix| {
            ((ix[1] + ix[2]) as f64 * 0.03).cos()
        });
        let a = vae.encode(&x);
        let b = vae.encode(&x);
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.log_variance, b.log_variance);
    }
}
