//! Time series as bags of sliding windows.

use serde::{Deserialize, Serialize};

use crate::data::{Bag, Instance, Label, LabeledBag, Sample};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, label: Option<Label>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("time series is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("time series value {i} is not finite")));
        }
        Ok(TimeSeries { values, label })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How to cut windows: an absolute length or a fraction of the series length.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct WindowConfig {
    pub length: Option<usize>,
    pub length_fraction: Option<f64>,
    pub znormalize: bool,
}

impl WindowConfig {
    pub fn fixed(length: usize) -> Self {
        WindowConfig {
            length: Some(length),
            ..WindowConfig::default()
        }
    }

    pub fn fraction(fraction: f64) -> Self {
        WindowConfig {
            length_fraction: Some(fraction),
            ..WindowConfig::default()
        }
    }

    pub fn with_znormalize(mut self, on: bool) -> Self {
        self.znormalize = on;
        self
    }

    /// Window for a series of length `len`. Fractions round half-up:
    /// `ℓ = floor(fraction · len + 0.5)`.
    pub fn resolve(&self, len: usize) -> Result<Window> {
        let length = match (self.length, self.length_fraction) {
            (Some(l), _) => l,
            (None, Some(f)) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(invalid("length_fraction", format!("must lie in (0, 1], got {f}")));
                }
                (f * len as f64 + 0.5).floor() as usize
            }
            (None, None) => return Err(invalid("length", "window length not set")),
        };
        let w = Window {
            length,
            znormalize: self.znormalize,
        };
        w.check(len)?;
        Ok(w)
    }
}

/// A resolved window: fixed length plus normalization flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub length: usize,
    pub znormalize: bool,
}

impl Window {
    pub fn new(length: usize, znormalize: bool) -> Self {
        Window { length, znormalize }
    }

    fn check(&self, len: usize) -> Result<()> {
        if self.length < 1 {
            return Err(invalid("length", "window length must be at least 1"));
        }
        if self.length > len {
            return Err(invalid(
                "length",
                format!("window length {} exceeds series length {len}", self.length),
            ));
        }
        Ok(())
    }

    /// All `L − ℓ + 1` windows, in order of their start offset.
    pub fn extract(&self, tau: &TimeSeries) -> Result<Bag> {
        self.check(tau.len())?;
        let instances = tau
            .values
            .windows(self.length)
            .map(|w| {
                let mut v = w.to_vec();
                if self.znormalize {
                    znormalize(&mut v);
                }
                Instance::new(v)
            })
            .collect();
        Ok(Bag::new(instances))
    }
}

/// Shift to mean 0 and scale to unit (population) standard deviation.
/// Constant windows become the zero vector.
pub fn znormalize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd < 1e-10 {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    }
}

pub fn extract_bag(tau: &TimeSeries, cfg: &WindowConfig) -> Result<Bag> {
    cfg.resolve(tau.len())?.extract(tau)
}

/// Sliding-window sample: one bag per series, labels carried through. Bag
/// `i` instance `j` is the window of series `i` starting at offset `j`.
#[derive(Clone, Debug)]
pub struct SeriesSample {
    pub sample: Sample,
    pub window: Window,
}

/// Build a sample from labeled series. A fractional window length is
/// resolved against the shortest series.
pub fn extract_sample(series: &[TimeSeries], cfg: &WindowConfig) -> Result<SeriesSample> {
    let shortest = series
        .iter()
        .map(TimeSeries::len)
        .min()
        .ok_or_else(|| Error::Validation("no time series given".into()))?;
    let window = cfg.resolve(shortest)?;
    let sample = window_sample(series, window)?;
    Ok(SeriesSample { sample, window })
}

/// Sample for an already resolved window.
pub fn window_sample(series: &[TimeSeries], window: Window) -> Result<Sample> {
    let items = series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let label = s
                .label
                .ok_or_else(|| Error::Validation(format!("series {i} has no label")))?;
            Ok(LabeledBag::new(window.extract(s)?, label))
        })
        .collect::<Result<Vec<_>>>()?;
    Sample::new(items)
}
