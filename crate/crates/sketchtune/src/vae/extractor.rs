//! Perceptual feature extractor for the hybrid reconstruction loss.
//!
//! Toy mode is a frozen, fixed-seed stack of three convolutions whose
//! channel vectors are unit-normalized at every spatial location before
//! comparison, so desk-scale runs need no downloaded weights. A pretrained
//! extractor can be plugged behind the same interface in real mode.

use ndarray::ArrayD;

use crate::nn::{bind_frozen, he_normal, zeros, ParamStore};
use crate::tensor::{Tape, VarId};

const NORM_EPS: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct PerceptualExtractor {
    params: ParamStore,
    /// (in_channels, out_channels, stride) per conv layer.
    layers: Vec<(usize, usize, usize)>,
    /// Per-layer loss weights, fixed at load.
    pub layer_weights: Vec<f64>,
    /// Identifier recorded in evaluation reports.
    pub id: String,
}

impl PerceptualExtractor {
    /// Frozen three-layer stack over single-channel input.
    pub fn toy(seed: u64) -> Self {
        let layers = vec![(1usize, 8usize, 1usize), (8, 16, 2), (16, 16, 2)];
        let mut rng = crate::nn::seeded_rng(seed, "perceptual-extractor");
        let mut params = ParamStore::new();
        for (i, &(cin, cout, _)) in layers.iter().enumerate() {
            params.insert(
                format!("conv{i}.w"),
                he_normal(&[cout, cin, 3, 3], cin * 9, &mut rng),
            );
            params.insert(format!("conv{i}.b"), zeros(&[cout]));
        }
        Self {
            params,
            layer_weights: vec![1.0; layers.len()],
            layers,
            id: format!("toy-conv3/seed{seed}"),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Unit-normalized feature maps per layer, recorded on `tape`.
    /// Weights are bound frozen; gradients flow only through `x`.
    pub fn features_on_tape(&self, tape: &mut Tape, x: VarId) -> Vec<VarId> {
        let bound = bind_frozen(tape, &self.params);
        let mut features = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for (i, &(_, _, stride)) in self.layers.iter().enumerate() {
            let w = bound.id(&format!("conv{i}.w"));
            let b = bound.id(&format!("conv{i}.b"));
            h = tape.conv2d(h, w, Some(b), stride, 1);
            h = tape.relu(h);
            features.push(tape.channel_unit_norm(h, NORM_EPS));
        }
        features
    }

    /// Convenience: feature arrays for a single image.
    pub fn features(&self, x: &ArrayD<f64>) -> Vec<ArrayD<f64>> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(x.clone());
        self.features_on_tape(&mut tape, leaf)
            .into_iter()
            .map(|id| tape.value(id).clone())
            .collect()
    }

    /// Pooled per-layer channel means, concatenated into one feature vector.
    /// This is the toy-mode image embedding the evaluation harness uses.
    pub fn pooled_vector(&self, x: &ArrayD<f64>) -> Vec<f64> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(x.clone());
        let feats = self.features_on_tape(&mut tape, leaf);
        let mut out = Vec::new();
        for f in feats {
            let pooled = tape.mean_spatial(f);
            out.extend(tape.value(pooled).iter().copied());
        }
        out
    }
}
