//! Noise-prediction training objective for the conditional denoiser.

use ndarray::ArrayD;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::conditioning::CondEmbedding;
use super::model::DenoiserModel;
use super::sampler::{add_noise, standard_normal};
use super::schedule::NoiseSchedule;
use super::DiffusionError;
use crate::nn::{bind_frozen, BoundParams};
use crate::tensor::{Tape, VarId};

/// Builds the batch objective on a tape: for each sample, draw a uniform
/// step and a standard-normal noise, form the closed-form noisy state, and
/// take the mean squared error between the drawn noise and the model's
/// prediction. Returns the batch-mean loss node.
pub fn denoising_loss_on_tape(
    tape: &mut Tape,
    model: &dyn DenoiserModel,
    params: &BoundParams,
    x0s: &[ArrayD<f64>],
    conds: &[&CondEmbedding],
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<VarId, DiffusionError> {
    assert_eq!(x0s.len(), conds.len(), "batch/conditioning length mismatch");
    if x0s.is_empty() {
        return Err(DiffusionError::InvalidRange("empty batch".into()));
    }
    let mut total: Option<VarId> = None;
    for (x0, cond) in x0s.iter().zip(conds) {
        let t = rng.random_range(1..=schedule.t_steps());
        let eps = standard_normal(x0.shape(), rng);
        let x_t = add_noise(x0, &eps, t, schedule)?;
        let x_leaf = tape.leaf(x_t);
        let eps_leaf = tape.leaf(eps);
        let pred = model.predict_on_tape(tape, params, x_leaf, t, cond);
        let loss = tape.mse(eps_leaf, pred);
        total = Some(match total {
            None => loss,
            Some(acc) => tape.add(acc, loss),
        });
    }
    let total = total.unwrap();
    Ok(tape.scale(total, 1.0 / x0s.len() as f64))
}

/// Scalar convenience wrapper with frozen parameters.
pub fn denoising_loss(
    model: &dyn DenoiserModel,
    x0s: &[ArrayD<f64>],
    conds: &[&CondEmbedding],
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<f64, DiffusionError> {
    let mut tape = Tape::new();
    let bound = bind_frozen(&mut tape, model.params());
    let mut rng = crate::nn::seeded_rng(seed, "denoising-loss");
    let loss = denoising_loss_on_tape(&mut tape, model, &bound, x0s, conds, schedule, &mut rng)?;
    let v = tape.scalar(loss);
    if !v.is_finite() {
        return Err(DiffusionError::NonFinite("denoising loss".into()));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::super::conditioning::{HashedBagEncoder, TextEncoder};
    use super::super::model::{DenoiserConfig, ToyDenoiser};
    use super::super::schedule::ScheduleKind;
    use super::*;
    use crate::nn::ParamStore;
    use ndarray::IxDyn;

    /// Test-only models with fixed behavior.
    struct OracleDenoiser {
        eps: std::sync::Mutex<Option<ArrayD<f64>>>,
        params: ParamStore,
    }

    impl DenoiserModel for OracleDenoiser {
        fn params(&self) -> &ParamStore {
            &self.params
        }
        fn params_mut(&mut self) -> &mut ParamStore {
            &mut self.params
        }
        fn predict_on_tape(
            &self,
            tape: &mut Tape,
            _params: &crate::nn::BoundParams,
            x_t: VarId,
            _t: usize,
            _cond: &CondEmbedding,
        ) -> VarId {
            let stored = self.eps.lock().unwrap().clone();
            match stored {
                Some(e) => tape.leaf(e),
                None => tape.scale(x_t, 0.0),
            }
        }
    }

    #[test]
    fn oracle_model_gives_zero_loss() {
        // Replicate the loss's own draws, then hand the true eps back.
        let schedule = NoiseSchedule::new(6, ScheduleKind::Linear, 1e-3, 0.1).unwrap();
        let cond = HashedBagEncoder::toy(0).encode("x");
        let x0 = ArrayD::from_elem(IxDyn(&[1, 3, 3]), 0.25);
        let mut rng = crate::nn::seeded_rng(9, "denoising-loss");
        let _t = rng.random_range(1..=schedule.t_steps());
        let eps = standard_normal(x0.shape(), &mut rng);
        let model = OracleDenoiser {
            eps: std::sync::Mutex::new(Some(eps)),
            params: ParamStore::new(),
        };
        let loss = denoising_loss(&model, &[x0], &[&cond], &schedule, 9).unwrap();
        assert!(loss.abs() < 1e-30, "loss {loss}");
    }

    #[test]
    fn zero_model_loss_is_about_one() {
        // E||eps||^2 with mean reduction is 1 per element.
        let schedule = NoiseSchedule::new(10, ScheduleKind::Linear, 1e-3, 0.05).unwrap();
        let enc = HashedBagEncoder::toy(1);
        let cond = enc.encode("anything");
        let model = OracleDenoiser {
            eps: std::sync::Mutex::new(None),
            params: ParamStore::new(),
        };
        let x0s: Vec<ArrayD<f64>> = (0..64)
            .map(|_| ArrayD::from_elem(IxDyn(&[1, 8, 8]), 0.1))
            .collect();
        let conds: Vec<&CondEmbedding> = x0s.iter().map(|_| &cond).collect();
        let loss = denoising_loss(&model, &x0s, &conds, &schedule, 3).unwrap();
        assert!(
            (loss - 1.0).abs() < 0.05,
            "expected mean-reduced loss near 1, got {loss}"
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Small conditional denoiser, well under 1k parameters.
        let cfg = DenoiserConfig {
            channels: 1,
            hidden: 3,
            cond_dim: 4,
            time_dim: 4,
        };
        let model = ToyDenoiser::init(cfg, 5);
        assert!(model.params().num_scalars() <= 1000);
        let enc = HashedBagEncoder::new(5, 4, 64, 8);
        let cond = enc.encode("tiny fish sketch");
        let schedule = NoiseSchedule::new(5, ScheduleKind::Linear, 1e-3, 0.1).unwrap();
        let mut rng0 = crate::nn::seeded_rng(17, "gradcheck-data");
        let x0s: Vec<ArrayD<f64>> = (0..2).map(|_| standard_normal(&[1, 5, 5], &mut rng0)).collect();
        let conds: Vec<&CondEmbedding> = x0s.iter().map(|_| &cond).collect();

        let loss_of = |m: &ToyDenoiser| -> f64 {
            denoising_loss(m, &x0s, &conds, &schedule, 20).unwrap()
        };

        // Analytic gradient.
        let mut tape = Tape::new();
        let bound = crate::nn::bind_params(&mut tape, model.params());
        let mut rng = crate::nn::seeded_rng(20, "denoising-loss");
        let loss = denoising_loss_on_tape(
            &mut tape, &model, &bound, &x0s, &conds, &schedule, &mut rng,
        )
        .unwrap();
        let grads = tape.backward(loss);
        let gmap = crate::nn::collect_grads(&tape, &bound, &grads, model.params());

        let h = 1e-5;
        let mut checked = 0usize;
        for (name, g) in &gmap {
            let base = model.params().get(name).unwrap().clone();
            for idx in 0..base.len() {
                let mut mp = model.clone();
                mp.params_mut().get_mut(name).unwrap().as_slice_mut().unwrap()[idx] += h;
                let mut mm = model.clone();
                mm.params_mut().get_mut(name).unwrap().as_slice_mut().unwrap()[idx] -= h;
                let fd = (loss_of(&mp) - loss_of(&mm)) / (2.0 * h);
                let ga = g.as_slice().unwrap()[idx];
                let denom = ga.abs().max(fd.abs()).max(1e-6);
                assert!(
                    (ga - fd).abs() / denom < 1e-4,
                    "{name}[{idx}]: analytic {ga} vs fd {fd}"
                );
                checked += 1;
            }
        }
        assert!(checked > 100);
    }
}
