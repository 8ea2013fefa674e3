//! Scalar probability laws used for synaptic marks and initial potentials.
//!
//! All supported laws have bounded support (or are degenerate), so every
//! polynomial and exponential moment is finite, as the limit theory requires.
//! Mark laws must additionally put no mass at zero: a zero mark would be an
//! event nobody feels, which the likelihood could not see.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Minimal probability mass a truncated Gaussian must keep inside its window.
const MIN_TRUNCATION_MASS: f64 = 1e-6;

/// A scalar law: degenerate, uniform, or Gaussian restricted to a window.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarLaw {
    /// Point mass at `value`.
    Dirac { value: f64 },
    /// Uniform on `[min, max)`.
    Uniform { min: f64, max: f64 },
    /// `Normal(mean, std)` conditioned on `[min, max]`, sampled by inverse
    /// CDF so each draw consumes exactly one uniform.
    TruncatedGaussian {
        mean: f64,
        std: f64,
        min: f64,
        max: f64,
    },
}

impl ScalarLaw {
    /// Structural validation shared by every use of the law.
    pub fn validate(&self) -> Result<()> {
        match self {
            ScalarLaw::Dirac { value } => {
                if !value.is_finite() {
                    return Err(Error::Config("dirac value must be finite".into()));
                }
                Ok(())
            }
            ScalarLaw::Uniform { min, max } => {
                if !min.is_finite() || !max.is_finite() || min >= max {
                    return Err(Error::Config(format!(
                        "uniform law needs finite min < max, got [{min}, {max})"
                    )));
                }
                Ok(())
            }
            ScalarLaw::TruncatedGaussian {
                mean, std, min, max,
            } => {
                if !std.is_finite() || *std <= 0.0 || !mean.is_finite() {
                    return Err(Error::Config(format!(
                        "truncated gaussian needs a positive finite std, got {std}"
                    )));
                }
                if !min.is_finite() || !max.is_finite() || min >= max {
                    return Err(Error::Config(format!(
                        "truncated gaussian needs finite min < max, got [{min}, {max}]"
                    )));
                }
                let (alpha, beta) = ((min - mean) / std, (max - mean) / std);
                let n = Normal::new(0.0, 1.0).expect("standard normal");
                let mass = n.cdf(beta) - n.cdf(alpha);
                if mass < MIN_TRUNCATION_MASS {
                    return Err(Error::Config(format!(
                        "truncation window [{min}, {max}] keeps only {mass:.3e} of the Gaussian mass"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Extra requirement for mark laws: no atom at zero.
    pub fn validate_as_mark(&self) -> Result<()> {
        self.validate()?;
        if let ScalarLaw::Dirac { value: 0.0 } = self {
            return Err(Error::Config(
                "mark law must put no mass at zero; a Dirac mark of 0 is invisible".into(),
            ));
        }
        Ok(())
    }

    /// Mean of the law, in closed form.
    pub fn mean(&self) -> f64 {
        match self {
            ScalarLaw::Dirac { value } => *value,
            ScalarLaw::Uniform { min, max } => 0.5 * (min + max),
            ScalarLaw::TruncatedGaussian {
                mean, std, min, max,
            } => {
                let n = Normal::new(0.0, 1.0).expect("standard normal");
                let (alpha, beta) = ((min - mean) / std, (max - mean) / std);
                let z = n.cdf(beta) - n.cdf(alpha);
                let pdf = |y: f64| (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt();
                mean + std * (pdf(alpha) - pdf(beta)) / z
            }
        }
    }

    /// One draw from the law. Every variant consumes a fixed number of
    /// uniforms (zero or one) so streams stay aligned across variants.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ScalarLaw::Dirac { value } => *value,
            ScalarLaw::Uniform { min, max } => rng.gen_range(*min..*max),
            ScalarLaw::TruncatedGaussian {
                mean, std, min, max,
            } => {
                let n = Normal::new(0.0, 1.0).expect("standard normal");
                let (alpha, beta) = ((min - mean) / std, (max - mean) / std);
                let (lo, hi) = (n.cdf(alpha), n.cdf(beta));
                let u: f64 = rng.gen_range(lo..hi);
                let x = mean + std * n.inverse_cdf(u);
                x.clamp(*min, *max)
            }
        }
    }

    /// Canonical textual form used for model fingerprinting.
    pub fn fingerprint(&self) -> String {
        match self {
            ScalarLaw::Dirac { value } => format!("dirac({value})"),
            ScalarLaw::Uniform { min, max } => format!("uniform({min},{max})"),
            ScalarLaw::TruncatedGaussian {
                mean, std, min, max,
            } => format!("trunc_gauss({mean},{std},{min},{max})"),
        }
    }
}
