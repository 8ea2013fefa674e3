//! The model: drift, reset, mark law, initial law, rate family, parameter box.
//!
//! A [`ModelSpec`] is an immutable, validated description of the population
//! dynamics. Construction certifies rate bounds over the parameter box once
//! (see [`rate::RateBounds`]); everything downstream — exact thinning, the
//! mean-field solver, the likelihood — reads those cached bounds.

mod dynamics;
mod laws;
mod rate;

pub use dynamics::{CustomDrift, CustomReset, DriftSpec, ResetSpec, DEFAULT_RESET_CLAMP};
pub use laws::ScalarLaw;
pub use rate::{DeclaredBounds, Features, RateBounds, RateFamily, MAX_PARAM_DIM};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::Arc;

use crate::error::{Error, Result};

/// A parameter point `theta`. Thin wrapper over `Vec<f64>` so dimensions are
/// checked at API boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Theta(pub Vec<f64>);

impl Theta {
    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Components as a slice.
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Theta {
    fn from(v: Vec<f64>) -> Self {
        Theta(v)
    }
}

/// The admissible parameter box `Theta = prod_k [lower_k, upper_k]` with a
/// non-empty interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ThetaBox {
    /// Builds a box, requiring `lower_k < upper_k` in every coordinate.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Config(format!(
                "parameter box needs matching non-empty bounds, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.len() > MAX_PARAM_DIM {
            return Err(Error::Config(format!(
                "parameter dimension {} exceeds the supported maximum {MAX_PARAM_DIM}",
                lower.len()
            )));
        }
        for (k, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l >= u {
                return Err(Error::Config(format!(
                    "parameter box has empty interior in coordinate {k}: [{l}, {u}]"
                )));
            }
        }
        Ok(ThetaBox { lower, upper })
    }

    /// Dimension of the box.
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Lower corner.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Upper corner.
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Whether `theta` lies in the closed box.
    pub fn contains(&self, theta: &Theta) -> bool {
        theta.dim() == self.dim()
            && theta
                .as_slice()
                .iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((t, l), u)| l <= t && t <= u)
    }

    /// Whether `theta` lies strictly inside the box.
    pub fn contains_interior(&self, theta: &Theta) -> bool {
        theta.dim() == self.dim()
            && theta
                .as_slice()
                .iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((t, l), u)| l < t && t < u)
    }

    /// Componentwise projection onto the closed box.
    pub fn project(&self, theta: &Theta) -> Theta {
        Theta(
            theta
                .as_slice()
                .iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .map(|((t, l), u)| t.clamp(*l, *u))
                .collect(),
        )
    }

    /// Box midpoint.
    pub fn center(&self) -> Theta {
        Theta(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| 0.5 * (l + u))
                .collect(),
        )
    }

    /// The `2^min(d, 4)` corner-style starting points used by the estimator:
    /// corners of the box shrunk toward the center (only the first four
    /// coordinates alternate when `d > 4`).
    pub fn shrunk_corners(&self, shrink: f64) -> Vec<Theta> {
        let d = self.dim();
        let varying = d.min(4);
        let c = self.center();
        (0..(1usize << varying))
            .map(|mask| {
                Theta(
                    (0..d)
                        .map(|k| {
                            let corner = if k < varying && (mask >> k) & 1 == 1 {
                                self.upper[k]
                            } else {
                                self.lower[k]
                            };
                            c.0[k] + shrink * (corner - c.0[k])
                        })
                        .collect(),
                )
            })
            .collect()
    }

    /// Canonical textual form used for model fingerprinting.
    fn fingerprint(&self) -> String {
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!("[{}]x[{}]", fmt(&self.lower), fmt(&self.upper))
    }
}

/// Immutable, validated model description. Share via [`Arc`].
#[derive(Debug, Clone)]
pub struct ModelSpec {
    drift: DriftSpec,
    reset: ResetSpec,
    mark_law: ScalarLaw,
    initial_law: ScalarLaw,
    rate: RateFamily,
    theta_box: ThetaBox,
    bounds: RateBounds,
    hash: String,
}

impl ModelSpec {
    /// Validates every component, certifies rate bounds over the box, and
    /// fingerprints the model.
    pub fn new(
        drift: DriftSpec,
        reset: ResetSpec,
        mark_law: ScalarLaw,
        initial_law: ScalarLaw,
        rate: RateFamily,
        theta_box: ThetaBox,
    ) -> Result<Arc<Self>> {
        drift.validate()?;
        reset.validate()?;
        mark_law.validate_as_mark()?;
        initial_law.validate()?;
        rate.validate()?;
        let bounds = rate.certified_bounds(&theta_box)?;
        let fingerprint = format!(
            "drift={};reset={};mark={};init={};rate={};box={}",
            drift.fingerprint(),
            reset.fingerprint(),
            mark_law.fingerprint(),
            initial_law.fingerprint(),
            rate_fingerprint(&rate),
            theta_box.fingerprint(),
        );
        let hash = hex_digest(&fingerprint);
        Ok(Arc::new(ModelSpec {
            drift,
            reset,
            mark_law,
            initial_law,
            rate,
            theta_box,
            bounds,
            hash,
        }))
    }

    /// Between-spike drift.
    pub fn drift(&self) -> &DriftSpec {
        &self.drift
    }

    /// At-spike reset map.
    pub fn reset(&self) -> &ResetSpec {
        &self.reset
    }

    /// Synaptic mark law.
    pub fn mark_law(&self) -> &ScalarLaw {
        &self.mark_law
    }

    /// Initial-potential law.
    pub fn initial_law(&self) -> &ScalarLaw {
        &self.initial_law
    }

    /// The rate family.
    pub fn rate(&self) -> &RateFamily {
        &self.rate
    }

    /// The admissible parameter box.
    pub fn theta_box(&self) -> &ThetaBox {
        &self.theta_box
    }

    /// Certified rate bounds over the box (computed once at construction).
    pub fn family_bounds(&self) -> RateBounds {
        self.bounds
    }

    /// Hex SHA-256 of the canonical model description; embedded in trajectory
    /// files so records cannot silently be replayed against the wrong model.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Mean of the mark law (the `m` entering the mean-field drift).
    pub fn mark_mean(&self) -> f64 {
        self.mark_law.mean()
    }

    fn check_theta(&self, theta: &Theta) -> Result<()> {
        if theta.dim() != self.theta_box.dim() {
            return Err(Error::ParamDomain(format!(
                "theta has dimension {} but the model expects {}",
                theta.dim(),
                self.theta_box.dim()
            )));
        }
        if !self.theta_box.contains(theta) {
            return Err(Error::ParamDomain(format!(
                "theta {:?} lies outside the admissible box",
                theta.as_slice()
            )));
        }
        Ok(())
    }

    /// Rate `f_theta(x)`; errors when `theta` leaves the box.
    pub fn rate_eval(&self, theta: &Theta, x: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.rate.features(x).dot(theta.as_slice()))
    }

    /// Parameter gradient and Hessian of `theta -> f_theta(x)`. For the
    /// affine families the gradient is the feature vector and the Hessian is
    /// identically zero.
    pub fn rate_derivatives(&self, theta: &Theta, x: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_theta(theta)?;
        let d = theta.dim();
        let phi = self.rate.features(x);
        Ok((
            DVector::from_column_slice(phi.as_slice()),
            DMatrix::zeros(d, d),
        ))
    }

    /// Deterministic between-spike flow over `dt >= 0`.
    pub fn drift_flow(&self, x: f64, dt: f64) -> Result<f64> {
        if !dt.is_finite() || dt < 0.0 {
            return Err(Error::InvalidInput(format!(
                "flow duration must be finite and non-negative, got {dt}"
            )));
        }
        Ok(self.drift.flow(x, dt))
    }

    /// One mark draw.
    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.mark_law.sample(rng)
    }

    /// One initial-potential draw.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.initial_law.sample(rng)
    }
}

fn rate_fingerprint(r: &RateFamily) -> String {
    match r {
        RateFamily::Constant => "constant".into(),
        RateFamily::AffineSigmoid { center, scale } => format!("affine_sigmoid({center},{scale})"),
        RateFamily::SoftplusClamp { center, scale } => format!("softplus_clamp({center},{scale})"),
        RateFamily::UserTabulated {
            x_grid,
            basis,
            bounds,
        } => {
            let fmt = |v: &[f64]| {
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let rows = basis.iter().map(|b| fmt(b)).collect::<Vec<_>>().join(";");
            format!(
                "tabulated(grid=[{}],basis=[{rows}],decl=({},{},{}))",
                fmt(x_grid),
                bounds.min_rate,
                bounds.max_rate,
                bounds.max_relative_gradient
            )
        }
    }
}

fn hex_digest(s: &str) -> String {
    let mut h = Sha256::new();
    h.update(s.as_bytes());
    let out = h.finalize();
    let mut hex = String::with_capacity(64);
    for b in out {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}
