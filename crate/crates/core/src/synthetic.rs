//! Planted-signature time series for end-to-end checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Label;
use crate::error::{invalid, Result};
use crate::timeseries::TimeSeries;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub length: usize,
    pub window: usize,
    /// Peak height of the planted signature, in units of the noise sd.
    pub amplitude: f64,
    pub noise: f64,
    pub per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            length: 50,
            window: 10,
            amplitude: 3.0,
            noise: 1.0,
            per_class: 20,
            seed: 0,
        }
    }
}

/// Half-sine bump of height `amplitude · noise` over `window` samples.
pub fn signature(cfg: &SyntheticConfig) -> Vec<f64> {
    let peak = cfg.amplitude * cfg.noise;
    (0..cfg.window)
        .map(|k| peak * (std::f64::consts::PI * (k as f64 + 0.5) / cfg.window as f64).sin())
        .collect()
}

/// Gaussian noise series; positives carry the signature at a random offset.
/// Classes alternate, positive first.
pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<TimeSeries>> {
    if cfg.window < 1 || cfg.window > cfg.length {
        return Err(invalid("window", "must lie in [1, length]"));
    }
    if cfg.noise.is_nan() || cfg.noise <= 0.0 {
        return Err(invalid("noise", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.noise).map_err(|e| invalid("noise", e.to_string()))?;
    let sig = signature(cfg);
    let mut out = Vec::with_capacity(2 * cfg.per_class);
    for _ in 0..cfg.per_class {
        for label in [Label::Positive, Label::Negative] {
            let mut values: Vec<f64> = (0..cfg.length).map(|_| normal.sample(&mut rng)).collect();
            if label == Label::Positive {
                let at = rng.random_range(0..=cfg.length - cfg.window);
                for (v, s) in values[at..].iter_mut().zip(&sig) {
                    *v += s;
                }
            }
            out.push(TimeSeries::new(values, Some(label))?);
        }
    }
    Ok(out)
}

/// Independent train and test sets drawn from consecutive seeds.
pub fn train_test(cfg: &SyntheticConfig) -> Result<(Vec<TimeSeries>, Vec<TimeSeries>)> {
    let train = generate(cfg)?;
    let test = generate(&SyntheticConfig {
        seed: cfg.seed.wrapping_add(1),
        ..cfg.clone()
    })?;
    Ok((train, test))
}
