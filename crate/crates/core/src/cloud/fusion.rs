//! Fusion of repeated per-class measurements.
//!
//! Two weightings are supported. `MeasurementNormalized` weights every
//! measurement of a class by its inverse variance normalised over the
//! measurements of that class, which is the classic inverse-variance
//! combination. `LiteralPaper` normalises the inverse variances over the
//! classes of a single measurement instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to every standard deviation before inversion.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FusionMode {
    #[default]
    MeasurementNormalized,
    LiteralPaper,
}

impl FusionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FusionMode::MeasurementNormalized => "measurement-normalized",
            FusionMode::LiteralPaper => "literal",
        }
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "measurement-normalized" => Ok(FusionMode::MeasurementNormalized),
            "literal" => Ok(FusionMode::LiteralPaper),
            other => Err(Error::InvalidParameter(format!("unknown fusion mode {other}"))),
        }
    }
}

/// One per-class probability vector with its per-class standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub probs: Vec<f64>,
    pub uncert: Vec<f64>,
}

#[inline]
pub(crate) fn floored(sigma: f64) -> f64 {
    sigma.max(SIGMA_FLOOR)
}

/// Combines a measurement history into one `(probs, uncert)` pair.
pub fn fuse_class_measurements(
    history: &[Measurement],
    mode: FusionMode,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = history
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot fuse an empty history".into()))?;
    let c = first.probs.len();
    if history
        .iter()
        .any(|m| m.probs.len() != c || m.uncert.len() != c)
    {
        return Err(Error::InvalidInput(
            "measurements disagree on the number of classes".into(),
        ));
    }
    if history.len() == 1 {
        // a single measurement is its own estimate
        return Ok((
            first.probs.clone(),
            first.uncert.iter().map(|&s| floored(s)).collect(),
        ));
    }

    let mut probs = vec![0.0; c];
    let mut uncert = vec![0.0; c];
    match mode {
        FusionMode::MeasurementNormalized => {
            for class in 0..c {
                let total: f64 = history
                    .iter()
                    .map(|m| floored(m.uncert[class]).powi(-2))
                    .sum();
                let mut p = 0.0;
                let mut var = 0.0;
                for m in history {
                    let s = floored(m.uncert[class]);
                    let w = s.powi(-2) / total;
                    p += w * m.probs[class];
                    var += w * w * s * s;
                }
                probs[class] = p;
                uncert[class] = var.sqrt();
            }
        }
        FusionMode::LiteralPaper => {
            for m in history {
                let total: f64 = m.uncert.iter().map(|&s| floored(s).powi(-2)).sum();
                for class in 0..c {
                    let s = floored(m.uncert[class]);
                    let w = s.powi(-2) / total;
                    probs[class] += w * m.probs[class];
                    uncert[class] += w * w * s * s;
                }
            }
            for u in uncert.iter_mut() {
                *u = u.sqrt();
            }
        }
    }
    normalize(&mut probs);
    Ok((probs, uncert))
}

/// Rescales `probs` to sum to one. An all-zero vector becomes uniform.
pub(crate) fn normalize(probs: &mut [f64]) {
    let z: f64 = probs.iter().sum();
    if z > 0.0 && z.is_finite() {
        for p in probs.iter_mut() {
            *p /= z;
        }
    } else {
        let u = 1.0 / probs.len() as f64;
        probs.iter_mut().for_each(|p| *p = u);
    }
}
