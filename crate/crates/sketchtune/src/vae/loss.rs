//! The autoencoder loss family: pixel reconstruction, Gaussian KL against
//! the standard-normal prior, perceptual distance, and their weighted
//! combination. Reductions are means over batch and elements except the KL,
//! which sums latent dimensions and averages the batch.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::extractor::PerceptualExtractor;
use super::VaeError;
use crate::tensor::{Tape, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconNorm {
    L2,
    L1,
}

/// Loss configuration. The production setting is L2 reconstruction with no
/// KL term and a 0.1 perceptual weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaeLossConfig {
    #[serde(default = "default_true")]
    pub use_recon: bool,
    /// KL coefficient (beta).
    pub kl_weight: f64,
    /// Perceptual coefficient (lambda).
    pub lpips_weight: f64,
    #[serde(default = "default_recon_norm")]
    pub recon_norm: ReconNorm,
}

fn default_true() -> bool {
    true
}
fn default_recon_norm() -> ReconNorm {
    ReconNorm::L2
}

impl VaeLossConfig {
    /// The final production configuration: MSE + 0.1 * perceptual.
    pub fn paper() -> Self {
        Self {
            use_recon: true,
            kl_weight: 0.0,
            lpips_weight: 0.1,
            recon_norm: ReconNorm::L2,
        }
    }

    pub fn with_kl(mut self, beta: f64) -> Self {
        self.kl_weight = beta;
        self
    }
}

impl Default for VaeLossConfig {
    fn default() -> Self {
        Self::paper()
    }
}

/// Diagonal-Gaussian posterior for a batch: shapes `[B, ...latent dims]`.
#[derive(Debug, Clone)]
pub struct LatentPosterior {
    pub mean: ArrayD<f64>,
    pub log_variance: ArrayD<f64>,
}

impl LatentPosterior {
    pub fn batch_size(&self) -> usize {
        self.mean.shape()[0]
    }
}

/// Scalar loss components for logging.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct VaeLossBreakdown {
    pub recon: f64,
    pub kl: f64,
    pub lpips: f64,
    pub total: f64,
}

/// Loss nodes on a tape; values are read for logging, the total is
/// backpropagated.
pub struct VaeLossNodes {
    pub recon: VarId,
    pub kl: VarId,
    pub lpips: VarId,
    pub total: VarId,
}

fn check_batch(x: &[ArrayD<f64>], xhat: &[ArrayD<f64>]) -> Result<(), VaeError> {
    if x.len() != xhat.len() || x.is_empty() {
        return Err(VaeError::ShapeMismatch(format!(
            "batch sizes {} vs {}",
            x.len(),
            xhat.len()
        )));
    }
    for (a, b) in x.iter().zip(xhat) {
        if a.shape() != b.shape() {
            return Err(VaeError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
    }
    Ok(())
}

/// Batch-mean reconstruction error between paired tape nodes.
pub fn recon_on_tape(tape: &mut Tape, xs: &[VarId], xhats: &[VarId], norm: ReconNorm) -> VarId {
    let mut acc: Option<VarId> = None;
    for (&x, &xh) in xs.iter().zip(xhats) {
        let d = tape.sub(x, xh);
        let e = match norm {
            ReconNorm::L2 => {
                let sq = tape.mul(d, d);
                tape.mean(sq)
            }
            ReconNorm::L1 => {
                let a = tape.abs(d);
                tape.mean(a)
            }
        };
        acc = Some(match acc {
            None => e,
            Some(prev) => tape.add(prev, e),
        });
    }
    let total = acc.expect("non-empty batch");
    tape.scale(total, 1.0 / xs.len() as f64)
}

/// Closed-form Gaussian KL to the standard-normal prior, summed over latent
/// dimensions and averaged over the batch:
/// `0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)`.
pub fn kl_on_tape(tape: &mut Tape, mus: &[VarId], logvars: &[VarId]) -> VarId {
    let mut acc: Option<VarId> = None;
    for (&mu, &lv) in mus.iter().zip(logvars) {
        let mu2 = tape.mul(mu, mu);
        let ev = tape.exp(lv);
        let a = tape.add(mu2, ev);
        let b = tape.sub(a, lv);
        let c = tape.add_scalar(b, -1.0);
        let s = tape.sum(c);
        let half = tape.scale(s, 0.5);
        acc = Some(match acc {
            None => half,
            Some(prev) => tape.add(prev, half),
        });
    }
    let total = acc.expect("non-empty batch");
    tape.scale(total, 1.0 / mus.len() as f64)
}

/// Perceptual distance: weighted sum over layers of the mean squared
/// difference between unit-normalized feature maps, averaged over the batch.
pub fn lpips_on_tape(
    tape: &mut Tape,
    xs: &[VarId],
    xhats: &[VarId],
    extractor: &PerceptualExtractor,
) -> VarId {
    let mut acc: Option<VarId> = None;
    for (&x, &xh) in xs.iter().zip(xhats) {
        let fx = extractor.features_on_tape(tape, x);
        let fxh = extractor.features_on_tape(tape, xh);
        for ((a, b), w) in fx.into_iter().zip(fxh).zip(&extractor.layer_weights) {
            let m = tape.mse(a, b);
            let weighted = tape.scale(m, *w);
            acc = Some(match acc {
                None => weighted,
                Some(prev) => tape.add(prev, weighted),
            });
        }
    }
    let total = acc.expect("non-empty batch");
    tape.scale(total, 1.0 / xs.len() as f64)
}

/// Full combined loss on a tape: `recon + beta * KL + lambda * LPIPS`.
pub fn vae_loss_on_tape(
    tape: &mut Tape,
    xs: &[VarId],
    xhats: &[VarId],
    mus: &[VarId],
    logvars: &[VarId],
    cfg: &VaeLossConfig,
    extractor: &PerceptualExtractor,
) -> VaeLossNodes {
    let recon = recon_on_tape(tape, xs, xhats, cfg.recon_norm);
    let kl = kl_on_tape(tape, mus, logvars);
    let lpips = lpips_on_tape(tape, xs, xhats, extractor);
    let mut total = if cfg.use_recon {
        recon
    } else {
        tape.scale(recon, 0.0)
    };
    if cfg.kl_weight != 0.0 {
        let w = tape.scale(kl, cfg.kl_weight);
        total = tape.add(total, w);
    }
    if cfg.lpips_weight != 0.0 {
        let w = tape.scale(lpips, cfg.lpips_weight);
        total = tape.add(total, w);
    }
    VaeLossNodes {
        recon,
        kl,
        lpips,
        total,
    }
}

/// Mean squared (or absolute) reconstruction error over a batch of arrays.
pub fn recon_loss(x: &[ArrayD<f64>], xhat: &[ArrayD<f64>]) -> Result<f64, VaeError> {
    check_batch(x, xhat)?;
    let mut tape = Tape::new();
    let xs: Vec<VarId> = x.iter().map(|a| tape.leaf(a.clone())).collect();
    let xhs: Vec<VarId> = xhat.iter().map(|a| tape.leaf(a.clone())).collect();
    let node = recon_on_tape(&mut tape, &xs, &xhs, ReconNorm::L2);
    Ok(tape.scalar(node))
}

/// Closed-form Gaussian KL of a batched posterior to the unit prior.
pub fn kl_loss(posterior: &LatentPosterior) -> Result<f64, VaeError> {
    if posterior.mean.shape() != posterior.log_variance.shape() {
        return Err(VaeError::ShapeMismatch(format!(
            "mean {:?} vs log_variance {:?}",
            posterior.mean.shape(),
            posterior.log_variance.shape()
        )));
    }
    if posterior
        .mean
        .iter()
        .chain(posterior.log_variance.iter())
        .any(|v| !v.is_finite())
    {
        return Err(VaeError::NonFinite("posterior".into()));
    }
    let b = posterior.batch_size();
    let mut tape = Tape::new();
    let mut mus = Vec::with_capacity(b);
    let mut lvs = Vec::with_capacity(b);
    for i in 0..b {
        let m = posterior.mean.index_axis(ndarray::Axis(0), i).to_owned();
        let l = posterior
            .log_variance
            .index_axis(ndarray::Axis(0), i)
            .to_owned();
        mus.push(tape.leaf(m.into_dyn()));
        lvs.push(tape.leaf(l.into_dyn()));
    }
    let node = kl_on_tape(&mut tape, &mus, &lvs);
    Ok(tape.scalar(node))
}

/// Perceptual distance between two batches of rasters.
pub fn lpips_loss(
    x: &[ArrayD<f64>],
    xhat: &[ArrayD<f64>],
    extractor: &PerceptualExtractor,
) -> Result<f64, VaeError> {
    check_batch(x, xhat)?;
    let mut tape = Tape::new();
    let xs: Vec<VarId> = x.iter().map(|a| tape.leaf(a.clone())).collect();
    let xhs: Vec<VarId> = xhat.iter().map(|a| tape.leaf(a.clone())).collect();
    let node = lpips_on_tape(&mut tape, &xs, &xhs, extractor);
    Ok(tape.scalar(node))
}

/// Combined loss with per-component breakdown.
pub fn vae_loss(
    x: &[ArrayD<f64>],
    xhat: &[ArrayD<f64>],
    posterior: &LatentPosterior,
    cfg: &VaeLossConfig,
    extractor: &PerceptualExtractor,
) -> Result<VaeLossBreakdown, VaeError> {
    check_batch(x, xhat)?;
    let b = posterior.batch_size();
    if b != x.len() {
        return Err(VaeError::ShapeMismatch(format!(
            "posterior batch {b} vs raster batch {}",
            x.len()
        )));
    }
    let mut tape = Tape::new();
    let xs: Vec<VarId> = x.iter().map(|a| tape.leaf(a.clone())).collect();
    let xhs: Vec<VarId> = xhat.iter().map(|a| tape.leaf(a.clone())).collect();
    let mut mus = Vec::with_capacity(b);
    let mut lvs = Vec::with_capacity(b);
    for i in 0..b {
        let m = posterior.mean.index_axis(ndarray::Axis(0), i).to_owned();
        let l = posterior
            .log_variance
            .index_axis(ndarray::Axis(0), i)
            .to_owned();
        mus.push(tape.leaf(m.into_dyn()));
        lvs.push(tape.leaf(l.into_dyn()));
    }
    let nodes = vae_loss_on_tape(&mut tape, &xs, &xhs, &mus, &lvs, cfg, extractor);
    let out = VaeLossBreakdown {
        recon: tape.scalar(nodes.recon),
        kl: tape.scalar(nodes.kl),
        lpips: tape.scalar(nodes.lpips),
        total: tape.scalar(nodes.total),
    };
    if !out.total.is_finite() {
        return Err(VaeError::NonFinite("vae loss".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;
    use rand_distr::{Distribution, Normal};

    fn randn(shape: &[usize], seed: u64) -> ArrayD<f64> {
        let mut rng = crate::nn::seeded_rng(seed, "loss-test");
        let n = Normal::new(0.0, 1.0).unwrap();
        ArrayD::from_shape_fn(IxDyn(shape), |_| n.sample(&mut rng))
    }

    #[test]
    fn recon_identity_and_unit_offset() {
        let x = vec![ArrayD::from_elem(IxDyn(&[1, 4, 4]), 0.3)];
        assert_eq!(recon_loss(&x, &x).unwrap(), 0.0);
        let zeros = vec![ArrayD::zeros(IxDyn(&[1, 4, 4]))];
        let ones = vec![ArrayD::from_elem(IxDyn(&[1, 4, 4]), 1.0)];
        assert!((recon_loss(&zeros, &ones).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn recon_matches_elementwise_oracle() {
        let x = vec![randn(&[1, 5, 5], 1), randn(&[1, 5, 5], 2)];
        let y = vec![randn(&[1, 5, 5], 3), randn(&[1, 5, 5], 4)];
        let got = recon_loss(&x, &y).unwrap();
        // Independent scalar loop.
        let mut acc = 0.0;
        let mut n = 0.0;
        for (a, b) in x.iter().zip(&y) {
            for (u, v) in a.iter().zip(b.iter()) {
                acc += (u - v) * (u - v);
                n += 1.0;
            }
        }
        assert!((got - acc / n).abs() < 1e-12);
    }

    #[test]
    fn recon_shape_mismatch_is_an_error() {
        let x = vec![ArrayD::zeros(IxDyn(&[1, 4, 4]))];
        let y = vec![ArrayD::zeros(IxDyn(&[1, 5, 5]))];
        assert!(matches!(recon_loss(&x, &y), Err(VaeError::ShapeMismatch(_))));
    }

    #[test]
    fn kl_zero_when_posterior_is_prior() {
        let p = LatentPosterior {
            mean: ArrayD::zeros(IxDyn(&[2, 4])),
            log_variance: ArrayD::zeros(IxDyn(&[2, 4])),
        };
        assert_eq!(kl_loss(&p).unwrap(), 0.0);
    }

    #[test]
    fn kl_unit_mean_single_dim() {
        let p = LatentPosterior {
            mean: ArrayD::from_elem(IxDyn(&[1, 1]), 1.0),
            log_variance: ArrayD::zeros(IxDyn(&[1, 1])),
        };
        assert!((kl_loss(&p).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_matches_monte_carlo_estimate() {
        // KL(q||p) = E_q[log q(z) - log p(z)] estimated by sampling.
        let mean = randn(&[1, 6], 7);
        let logvar = randn(&[1, 6], 8).mapv(|v| 0.4 * v);
        let p = LatentPosterior {
            mean: mean.clone(),
            log_variance: logvar.clone(),
        };
        let closed = kl_loss(&p).unwrap();

        let mut rng = crate::nn::seeded_rng(99, "kl-mc");
        let n = 100_000;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut acc = 0.0;
        for _ in 0..n {
            let mut term = 0.0;
            for d in 0..6 {
                let mu = mean[[0, d]];
                let lv = logvar[[0, d]];
                let z = mu + (0.5 * lv).exp() * normal.sample(&mut rng);
                let log_q = -0.5 * ((z - mu) * (z - mu) / lv.exp() + lv + (2.0 * std::f64::consts::PI).ln());
                let log_p = -0.5 * (z * z + (2.0 * std::f64::consts::PI).ln());
                term += log_q - log_p;
            }
            acc += term;
        }
        let mc = acc / n as f64;
        assert!(
            (mc - closed).abs() / closed.abs().max(1e-9) < 0.01,
            "mc {mc} vs closed {closed}"
        );
    }

    #[test]
    fn kl_rejects_non_finite() {
        let p = LatentPosterior {
            mean: ArrayD::from_elem(IxDyn(&[1, 2]), f64::NAN),
            log_variance: ArrayD::zeros(IxDyn(&[1, 2])),
        };
        assert!(matches!(kl_loss(&p), Err(VaeError::NonFinite(_))));
    }

    #[test]
    fn lpips_zero_on_identity_and_symmetric() {
        let e = PerceptualExtractor::toy(0);
        let x = vec![randn(&[1, 8, 8], 10)];
        let y = vec![randn(&[1, 8, 8], 11)];
        assert!(lpips_loss(&x, &x, &e).unwrap().abs() < 1e-30);
        let ab = lpips_loss(&x, &y, &e).unwrap();
        let ba = lpips_loss(&y, &x, &e).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab > 0.0);
    }

    #[test]
    fn lpips_matches_hand_computed_weighted_sum() {
        let e = PerceptualExtractor::toy(4);
        let x = randn(&[1, 8, 8], 20);
        let y = randn(&[1, 8, 8], 21);
        let got = lpips_loss(&[x.clone()], &[y.clone()], &e).unwrap();
        // Direct formula evaluation from the extractor's public features.
        let fx = e.features(&x);
        let fy = e.features(&y);
        let mut want = 0.0;
        for ((a, b), w) in fx.iter().zip(&fy).zip(&e.layer_weights) {
            let mut acc = 0.0;
            for (u, v) in a.iter().zip(b.iter()) {
                acc += (u - v) * (u - v);
            }
            want += w * acc / a.len() as f64;
        }
        assert!((got - want).abs() < 1e-6, "got {got} want {want}");
    }

    #[test]
    fn combined_loss_component_identities() {
        let e = PerceptualExtractor::toy(5);
        let x = vec![randn(&[1, 8, 8], 30)];
        let y = vec![randn(&[1, 8, 8], 31)];
        let post = LatentPosterior {
            mean: randn(&[1, 4], 32),
            log_variance: randn(&[1, 4], 33).mapv(|v| 0.3 * v),
        };

        // Production config at identity: exactly zero.
        let b = vae_loss(&x, &x, &LatentPosterior {
            mean: ArrayD::zeros(IxDyn(&[1, 4])),
            log_variance: ArrayD::zeros(IxDyn(&[1, 4])),
        }, &VaeLossConfig::paper(), &e)
        .unwrap();
        assert_eq!(b.total, 0.0);

        // beta=1, lambda=0, prior posterior: reduces to the recon loss.
        let cfg = VaeLossConfig {
            use_recon: true,
            kl_weight: 1.0,
            lpips_weight: 0.0,
            recon_norm: ReconNorm::L2,
        };
        let prior = LatentPosterior {
            mean: ArrayD::zeros(IxDyn(&[1, 4])),
            log_variance: ArrayD::zeros(IxDyn(&[1, 4])),
        };
        let b = vae_loss(&x, &y, &prior, &cfg, &e).unwrap();
        assert!((b.total - recon_loss(&x, &y).unwrap()).abs() < 1e-15);

        // Tiny beta: total equals recon + beta * KL exactly.
        let cfg = VaeLossConfig {
            use_recon: true,
            kl_weight: 1e-6,
            lpips_weight: 0.0,
            recon_norm: ReconNorm::L2,
        };
        let b = vae_loss(&x, &y, &post, &cfg, &e).unwrap();
        let want = recon_loss(&x, &y).unwrap() + 1e-6 * kl_loss(&post).unwrap();
        assert!((b.total - want).abs() < 1e-12);

        // Lambda enters affinely with the LPIPS component as slope.
        let l0 = vae_loss(&x, &y, &post, &VaeLossConfig { lpips_weight: 0.0, ..VaeLossConfig::paper() }, &e).unwrap();
        let l1 = vae_loss(&x, &y, &post, &VaeLossConfig { lpips_weight: 0.7, ..VaeLossConfig::paper() }, &e).unwrap();
        assert!((l1.total - (l0.total + 0.7 * l1.lpips)).abs() < 1e-12);
    }
}
