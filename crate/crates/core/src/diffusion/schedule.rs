use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionConfig {
    /// Number of forward steps `T`.
    pub steps: usize,
    /// `b̄_max`, the first interpolation point after `b_0 = 1`.
    pub b_max: f64,
    /// `b̄_min`, the last interpolation point `b_T`.
    pub b_min: f64,
    /// Reverse steps `T′` used at inference.
    pub inference_steps: usize,
    /// Posterior variance fixed to the schedule (the only supported mode).
    pub fixed_variance: bool,
    /// Draw one `t` per row instead of one per batch.
    pub per_row_t: bool,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self::from_noise_scale(1e-4, 100, 5)
    }
}

impl DiffusionConfig {
    /// Maps a scalar noise scale `S` to `b̄_max = 1 − S`, `b̄_min = 1 − 10·S`,
    /// with `b̄_min` clamped into `(0, b̄_max]`.
    pub fn from_noise_scale(scale: f64, steps: usize, inference_steps: usize) -> Self {
        let b_max = 1.0 - scale;
        let b_min = (1.0 - 10.0 * scale).clamp(f64::MIN_POSITIVE, b_max);
        Self {
            steps,
            b_max,
            b_min,
            inference_steps,
            fixed_variance: true,
            per_row_t: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("diffusion needs at least one step".into()));
        }
        if !(self.b_max > 0.0 && self.b_max < 1.0) {
            return Err(Error::Config(format!(
                "b_max must lie in (0, 1), got {}",
                self.b_max
            )));
        }
        if !(self.b_min > 0.0 && self.b_min <= self.b_max) {
            return Err(Error::Config(format!(
                "b_min must lie in (0, b_max], got {} with b_max {}",
                self.b_min, self.b_max
            )));
        }
        // Equal endpoints give β_t = 0 for every t ≥ 2.
        if self.steps >= 2 && self.b_min == self.b_max {
            return Err(Error::Config(
                "b_min must be strictly below b_max when steps >= 2".into(),
            ));
        }
        if self.inference_steps > self.steps {
            return Err(Error::Config(format!(
                "inference steps {} exceed diffusion steps {}",
                self.inference_steps, self.steps
            )));
        }
        if !self.fixed_variance {
            return Err(Error::Config(
                "only fixed-variance reverse steps are supported".into(),
            ));
        }
        Ok(())
    }
}

/// Precomputed `b`, `β`, `α`, `ᾱ` for `t = 1..T`.
///
/// `ᾱ` is the running product of `α`, so it equals `b_t` only up to
/// rounding; accessors take 1-based `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    b: Vec<f64>,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

pub fn build_schedule(cfg: &DiffusionConfig) -> Result<DiffusionSchedule> {
    cfg.validate()?;
    let t_max = cfg.steps;
    let mut b = Vec::with_capacity(t_max + 1);
    b.push(1.0);
    for k in 1..=t_max {
        let frac = if t_max == 1 {
            0.0
        } else {
            (k - 1) as f64 / (t_max - 1) as f64
        };
        b.push(cfg.b_max + (cfg.b_min - cfg.b_max) * frac);
    }
    let beta: Vec<f64> = (1..=t_max).map(|t| 1.0 - b[t] / b[t - 1]).collect();
    let alpha: Vec<f64> = beta.iter().map(|bt| 1.0 - bt).collect();
    let alpha_bar = alpha
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(DiffusionSchedule {
        b,
        beta,
        alpha,
        alpha_bar,
    })
}

impl DiffusionSchedule {
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    /// Interpolation sequence, length `T + 1`, `b[0] = 1`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid(format!(
                "step {t} outside 1..={}",
                self.steps()
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// Loss weight at step `t`: 1 for the reconstruction term at `t = 1`,
    /// otherwise `½(ᾱ_{t−1}/(1−ᾱ_{t−1}) − ᾱ_t/(1−ᾱ_t))`.
    pub fn loss_weight(&self, t: usize) -> f64 {
        if t <= 1 {
            return 1.0;
        }
        let snr = |ab: f64| ab / (1.0 - ab);
        0.5 * (snr(self.alpha_bar(t - 1)) - snr(self.alpha_bar(t)))
    }

    /// Coefficients `(c_x0, c_t)` of the posterior mean
    /// `c_x0·ĥ_0 + c_t·h_t` for stepping from `t` to `t − 1`.
    pub fn posterior_coefficients(&self, t: usize) -> (f64, f64) {
        let (ab, ab_prev) = (self.alpha_bar(t), self.alpha_bar(t - 1));
        let denom = 1.0 - ab;
        (
            ab_prev.sqrt() * self.beta(t) / denom,
            self.alpha(t).sqrt() * (1.0 - ab_prev) / denom,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(steps: usize, b_max: f64, b_min: f64) -> DiffusionConfig {
        DiffusionConfig {
            steps,
            b_max,
            b_min,
            inference_steps: 0,
            ..DiffusionConfig::default()
        }
    }

    #[test]
    fn two_step_example() {
        let s = build_schedule(&cfg(2, 0.99, 0.98)).unwrap();
        assert!((s.beta(1) - 0.01).abs() < 1e-15);
        assert!((s.beta(2) - (1.0 - 0.98 / 0.99)).abs() < 1e-15);
        assert!((s.alpha_bar(1) - 0.99).abs() < 1e-15);
        assert!((s.alpha_bar(2) - 0.98).abs() < 1e-15);
        // ½(0.99/0.01 − 0.98/0.02) = ½(99 − 49)
        assert!((s.loss_weight(2) - 25.0).abs() < 1e-9);
        assert_eq!(s.loss_weight(1), 1.0);
    }

    #[test]
    fn single_step() {
        let s = build_schedule(&cfg(1, 0.9, 0.5)).unwrap();
        assert_eq!(s.steps(), 1);
        assert!((s.beta(1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn product_oracle() {
        let s = build_schedule(&cfg(250, 0.9999, 0.02)).unwrap();
        let mut prod = 1.0;
        for t in 1..=250 {
            prod *= 1.0 - s.beta(t);
            assert!((prod - s.alpha_bar(t)).abs() < 1e-12);
            assert!((s.alpha_bar(t) - s.b()[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid() {
        for c in [
            cfg(0, 0.9, 0.5),
            cfg(3, 1.0, 0.5),
            cfg(3, 0.5, 0.9),
            cfg(3, 0.9, 0.0),
            cfg(3, 0.9, 0.9),
        ] {
            assert!(build_schedule(&c).is_err(), "{c:?}");
        }
        assert!(build_schedule(&cfg(1, 0.9, 0.9)).is_ok());
        let too_many = DiffusionConfig {
            inference_steps: 4,
            ..cfg(3, 0.9, 0.5)
        };
        assert!(build_schedule(&too_many).is_err());
    }

    #[test]
    fn noise_scale_preset() {
        let c = DiffusionConfig::from_noise_scale(1e-3, 100, 5);
        assert!((c.b_max - 0.999).abs() < 1e-15);
        assert!((c.b_min - 0.99).abs() < 1e-15);
        let clamped = DiffusionConfig::from_noise_scale(0.5, 10, 5);
        assert!(clamped.b_min > 0.0);
        assert!(build_schedule(&clamped).is_ok());
    }

    #[test]
    fn posterior_at_first_step_keeps_only_prediction() {
        let s = build_schedule(&cfg(10, 0.999, 0.99)).unwrap();
        let (c0, c1) = s.posterior_coefficients(1);
        assert!((c0 - 1.0).abs() < 1e-12);
        assert_eq!(c1, 0.0);
    }
}
