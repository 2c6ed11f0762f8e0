//! DDPM noise schedule: per-step variances, cumulative signal levels, and
//! the posterior variances used for reverse-step sampling.

use serde::{Deserialize, Serialize};

use super::DiffusionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
}

/// Precomputed schedule tables. Steps are 1-based: `t` in `1..=T`, with
/// `alpha_bar(0) == 1` by definition.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    posterior_vars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear interpolation of beta from `beta_min` at t=1 to `beta_max`
    /// at t=T; posterior variance is the DDPM
    /// `beta_t * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)`.
    pub fn new(
        t_steps: usize,
        kind: ScheduleKind,
        beta_min: f64,
        beta_max: f64,
    ) -> Result<Self, DiffusionError> {
        if t_steps < 1 {
            return Err(DiffusionError::InvalidRange(
                "schedule needs at least one step".into(),
            ));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(DiffusionError::InvalidRange(format!(
                "beta range must satisfy 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let ScheduleKind::Linear = kind;
        let betas: Vec<f64> = (0..t_steps)
            .map(|i| {
                if t_steps == 1 {
                    beta_min
                } else {
                    beta_min + (beta_max - beta_min) * i as f64 / (t_steps - 1) as f64
                }
            })
            .collect();
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(t_steps);
        let mut prod = 1.0;
        for a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        let posterior_vars: Vec<f64> = (0..t_steps)
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
                betas[i] * (1.0 - prev) / (1.0 - alpha_bars[i])
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
            posterior_vars,
        })
    }

    pub fn t_steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, t: usize) -> Result<(), DiffusionError> {
        if t < 1 || t > self.t_steps() {
            return Err(DiffusionError::StepOutOfRange {
                t,
                t_steps: self.t_steps(),
            });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// Cumulative signal level; `alpha_bar(0) == 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Reverse-step variance. Zero at t=1 (the last step is deterministic).
    pub fn posterior_var(&self, t: usize) -> f64 {
        self.posterior_vars[t - 1]
    }

    pub fn checked_alpha_bar(&self, t: usize) -> Result<f64, DiffusionError> {
        self.check(t)?;
        Ok(self.alpha_bar(t))
    }

    pub fn checked_posterior_var(&self, t: usize) -> Result<f64, DiffusionError> {
        self.check(t)?;
        Ok(self.posterior_var(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_alpha_bar() {
        let s = NoiseSchedule::new(1, ScheduleKind::Linear, 0.1, 0.1).unwrap();
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-15);
        assert_eq!(s.alpha_bar(0), 1.0);
    }

    #[test]
    fn long_schedule_reaches_near_pure_noise() {
        let s = NoiseSchedule::new(1000, ScheduleKind::Linear, 1e-4, 2e-2).unwrap();
        assert!(s.alpha_bar(1000) < 5e-5, "alpha_bar_T = {}", s.alpha_bar(1000));
    }

    #[test]
    fn alpha_bar_strictly_decreasing() {
        for (t_steps, lo, hi) in [(1usize, 0.1, 0.1), (10, 1e-4, 0.02), (100, 0.01, 0.2)] {
            let s = NoiseSchedule::new(t_steps, ScheduleKind::Linear, lo, hi).unwrap();
            for t in 1..=t_steps {
                assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            }
        }
    }

    #[test]
    fn betas_nondecreasing_and_in_range() {
        let s = NoiseSchedule::new(50, ScheduleKind::Linear, 1e-4, 2e-2).unwrap();
        for t in 1..=50 {
            assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
            if t > 1 {
                assert!(s.beta(t) >= s.beta(t - 1));
            }
        }
    }

    #[test]
    fn first_posterior_variance_is_zero() {
        let s = NoiseSchedule::new(10, ScheduleKind::Linear, 1e-3, 0.1).unwrap();
        assert_eq!(s.posterior_var(1), 0.0);
        for t in 2..=10 {
            assert!(s.posterior_var(t) > 0.0);
        }
    }

    #[test]
    fn invalid_ranges_rejected() {
        assert!(NoiseSchedule::new(0, ScheduleKind::Linear, 0.1, 0.2).is_err());
        assert!(NoiseSchedule::new(5, ScheduleKind::Linear, 0.0, 0.2).is_err());
        assert!(NoiseSchedule::new(5, ScheduleKind::Linear, 0.3, 0.2).is_err());
        assert!(NoiseSchedule::new(5, ScheduleKind::Linear, 0.3, 1.0).is_err());
    }
}
