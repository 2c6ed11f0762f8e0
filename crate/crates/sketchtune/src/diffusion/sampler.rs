//! Forward noising, reverse sampling, and per-step Gaussian log-densities.
//!
//! Reverse steps use the DDPM posterior mean derived from the predicted
//! noise with fixed posterior variance. The final step (t=1) emits the mean
//! without noise; its density is degenerate, so its recorded log-prob is 0
//! and policy-gradient sums skip it.

use ndarray::ArrayD;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::conditioning::CondEmbedding;
use super::model::DenoiserModel;
use super::schedule::NoiseSchedule;
use super::DiffusionError;

/// Per-step reverse statistics.
#[derive(Debug, Clone)]
pub struct StepStat {
    pub mean: ArrayD<f64>,
    pub var: f64,
    pub log_prob: f64,
}

/// One complete reverse pass: states `x_T..x_0` plus per-step statistics.
/// Replayable bit-exactly given (params, prompt, seed).
#[derive(Debug, Clone)]
pub struct DiffusionTrajectory {
    pub prompt: String,
    pub seed: u64,
    pub states: Vec<ArrayD<f64>>,
    /// Index 0 corresponds to t=T, the last entry to t=1.
    pub steps: Vec<StepStat>,
}

impl DiffusionTrajectory {
    pub fn t_steps(&self) -> usize {
        self.steps.len()
    }

    /// Sum of recorded log-probs over the stochastic steps (t >= 2).
    pub fn log_prob_sum(&self) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.var > 0.0)
            .map(|s| s.log_prob)
            .sum()
    }

    /// State x_t for 0 <= t <= T.
    pub fn state(&self, t: usize) -> &ArrayD<f64> {
        &self.states[self.t_steps() - t]
    }

    /// Step statistics for 1 <= t <= T.
    pub fn step(&self, t: usize) -> &StepStat {
        &self.steps[self.t_steps() - t]
    }
}

/// Closed-form forward marginal: `x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps`.
pub fn add_noise(
    x0: &ArrayD<f64>,
    eps: &ArrayD<f64>,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<ArrayD<f64>, DiffusionError> {
    if x0.shape() != eps.shape() {
        return Err(DiffusionError::ShapeMismatch(format!(
            "x0 {:?} vs eps {:?}",
            x0.shape(),
            eps.shape()
        )));
    }
    let ab = schedule.checked_alpha_bar(t)?;
    Ok(x0.mapv(|v| v * ab.sqrt()) + eps.mapv(|v| v * (1.0 - ab).sqrt()))
}

/// DDPM posterior mean from the model's noise estimate:
/// `mu = (x_t - beta_t / sqrt(1 - ab_t) * eps_hat) / sqrt(alpha_t)`.
pub fn posterior_mean_from_eps(
    x_t: &ArrayD<f64>,
    eps_hat: &ArrayD<f64>,
    t: usize,
    schedule: &NoiseSchedule,
) -> ArrayD<f64> {
    let beta = schedule.beta(t);
    let alpha = schedule.alpha(t);
    let ab = schedule.alpha_bar(t);
    let c = beta / (1.0 - ab).sqrt();
    (x_t - &eps_hat.mapv(|v| v * c)).mapv(|v| v / alpha.sqrt())
}

/// Analytic posterior mean `q(x_{t-1} | x_t, x0)`; the independent oracle
/// the reverse-step tests compare against.
pub fn analytic_posterior_mean(
    x_t: &ArrayD<f64>,
    x0: &ArrayD<f64>,
    t: usize,
    schedule: &NoiseSchedule,
) -> ArrayD<f64> {
    let beta = schedule.beta(t);
    let alpha = schedule.alpha(t);
    let ab = schedule.alpha_bar(t);
    let ab_prev = schedule.alpha_bar(t - 1);
    let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
    let ct = alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
    x0.mapv(|v| v * c0) + x_t.mapv(|v| v * ct)
}

/// One reverse step. For `t > 1` the provided standard-normal draw is scaled
/// by the posterior stddev; at `t == 1` the mean is emitted unchanged.
/// Returns `(x_{t-1}, mean, var)`.
pub fn reverse_step(
    model: &dyn DenoiserModel,
    x_t: &ArrayD<f64>,
    t: usize,
    cond: &CondEmbedding,
    schedule: &NoiseSchedule,
    noise: Option<&ArrayD<f64>>,
) -> Result<(ArrayD<f64>, ArrayD<f64>, f64), DiffusionError> {
    let var = schedule.checked_posterior_var(t)?;
    let eps_hat = model.predict(x_t, t, cond);
    let mean = posterior_mean_from_eps(x_t, &eps_hat, t, schedule);
    if t == 1 {
        return Ok((mean.clone(), mean, 0.0));
    }
    let z = noise.ok_or_else(|| {
        DiffusionError::InvalidRange("reverse_step needs a noise draw for t > 1".into())
    })?;
    if z.shape() != mean.shape() {
        return Err(DiffusionError::ShapeMismatch(format!(
            "noise {:?} vs state {:?}",
            z.shape(),
            mean.shape()
        )));
    }
    let x_prev = &mean + &z.mapv(|v| v * var.sqrt());
    Ok((x_prev, mean, var))
}

/// Sum over elements of the diagonal-Gaussian log-density of `x` under
/// `N(mean, var I)`. With `var == 0` the density is degenerate: the value is
/// 0 when `x == mean` (by the final-step convention) and an error otherwise.
pub fn step_log_prob(
    x: &ArrayD<f64>,
    mean: &ArrayD<f64>,
    var: f64,
) -> Result<f64, DiffusionError> {
    if x.shape() != mean.shape() {
        return Err(DiffusionError::ShapeMismatch(format!(
            "x {:?} vs mean {:?}",
            x.shape(),
            mean.shape()
        )));
    }
    if var == 0.0 {
        if x == mean {
            return Ok(0.0);
        }
        return Err(DiffusionError::DegenerateVariance);
    }
    let d = x.len() as f64;
    let sq: f64 = x
        .iter()
        .zip(mean.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(-0.5 * (sq / var + d * (var.ln() + (2.0 * std::f64::consts::PI).ln())))
}

/// Runs the full reverse chain from a standard-normal start, recording all
/// per-step statistics. Deterministic for a fixed (params, prompt, seed).
pub fn sample(
    model: &dyn DenoiserModel,
    cond: &CondEmbedding,
    schedule: &NoiseSchedule,
    shape: &[usize],
    seed: u64,
) -> Result<(ArrayD<f64>, DiffusionTrajectory), DiffusionError> {
    let t_steps = schedule.t_steps();
    let mut rng = crate::nn::seeded_rng(seed, "trajectory");
    let normal = Normal::new(0.0, 1.0).unwrap();
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        ArrayD::from_shape_fn(ndarray::IxDyn(shape), |_| normal.sample(rng))
    };

    let mut x = draw(&mut rng);
    let mut states = vec![x.clone()];
    let mut steps = Vec::with_capacity(t_steps);
    for t in (1..=t_steps).rev() {
        let noise = if t > 1 { Some(draw(&mut rng)) } else { None };
        let (x_prev, mean, var) = reverse_step(model, &x, t, cond, schedule, noise.as_ref())?;
        let log_prob = if var > 0.0 {
            step_log_prob(&x_prev, &mean, var)?
        } else {
            0.0
        };
        if !log_prob.is_finite() {
            return Err(DiffusionError::NonFinite("step log-prob".into()));
        }
        steps.push(StepStat { mean, var, log_prob });
        states.push(x_prev.clone());
        x = x_prev;
    }
    let traj = DiffusionTrajectory {
        prompt: cond.prompt.clone(),
        seed,
        states,
        steps,
    };
    Ok((x, traj))
}

/// Recomputes every step's log-prob from the stored states under the given
/// (possibly unchanged) parameters. Used for replay-integrity checks.
pub fn recompute_log_probs(
    model: &dyn DenoiserModel,
    traj: &DiffusionTrajectory,
    schedule: &NoiseSchedule,
    cond: &CondEmbedding,
) -> Result<Vec<f64>, DiffusionError> {
    let t_steps = traj.t_steps();
    if t_steps != schedule.t_steps() {
        return Err(DiffusionError::InvalidRange(format!(
            "trajectory has {t_steps} steps, schedule {}",
            schedule.t_steps()
        )));
    }
    let mut out = Vec::with_capacity(t_steps);
    for t in (1..=t_steps).rev() {
        let x_t = traj.state(t);
        let x_prev = traj.state(t - 1);
        let var = schedule.posterior_var(t);
        if var == 0.0 {
            out.push(0.0);
            continue;
        }
        let eps_hat = model.predict(x_t, t, cond);
        let mean = posterior_mean_from_eps(x_t, &eps_hat, t, schedule);
        out.push(step_log_prob(x_prev, &mean, var)?);
    }
    Ok(out)
}

/// Standard-normal tensor drawn from the given rng.
pub fn standard_normal(
    shape: &[usize],
    rng: &mut rand_chacha::ChaCha8Rng,
) -> ArrayD<f64> {
    ArrayD::from_shape_fn(ndarray::IxDyn(shape), |_| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    })
}
