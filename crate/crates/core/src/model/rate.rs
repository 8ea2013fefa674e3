//! Parametric spiking-rate families.
//!
//! Every built-in family is affine in the parameter vector: the rate factors
//! as `f_theta(x) = theta · phi(x)` for a feature map `phi` with `phi_0 = 1`.
//! That structure is load-bearing in two places: parameter derivatives are
//! exact (`grad = phi(x)`, `hess = 0`), and rate bounds over a parameter box
//! can be certified in closed form, which is what makes thinning-based
//! simulation exact rather than approximate.
//!
//! The certified bounds for a family over a box `Theta` are
//!
//! - `min_rate  = inf  f_theta(x)` over `Theta x R` (must be positive),
//! - `max_rate  = sup  f_theta(x)` (the thinning envelope),
//! - `max_relative_gradient = sup |grad f / f|` (Euclidean norm),
//! - `max_hessian_norm = sup |hess f|` (zero for affine families),
//! - `taylor_constant`: `C` with
//!   `|f_theta/f_eta - 1 - (theta-eta)·grad f_eta / f_eta| <= C |theta-eta|^2`;
//!   exact value 0 for affine families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ThetaBox;

/// Hard cap on the parameter dimension; keeps feature vectors allocation-free.
pub const MAX_PARAM_DIM: usize = 8;

/// Stack-allocated feature vector `phi(x)`.
#[derive(Debug, Clone, Copy)]
pub struct Features {
    vals: [f64; MAX_PARAM_DIM],
    len: usize,
}

impl Features {
    fn from_slice(v: &[f64]) -> Self {
        debug_assert!(v.len() <= MAX_PARAM_DIM);
        let mut vals = [0.0; MAX_PARAM_DIM];
        vals[..v.len()].copy_from_slice(v);
        Features { vals, len: v.len() }
    }

    /// Feature values as a slice of length `dim`.
    pub fn as_slice(&self) -> &[f64] {
        &self.vals[..self.len]
    }

    /// Inner product with a parameter vector of matching dimension.
    #[inline]
    pub fn dot(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.len);
        let mut acc = 0.0;
        for (p, t) in self.vals[..self.len].iter().zip(theta) {
            acc += p * t;
        }
        acc
    }

    /// Squared Euclidean norm of the feature vector.
    pub fn norm_squared(&self) -> f64 {
        self.as_slice().iter().map(|v| v * v).sum()
    }
}

/// Certified rate bounds over a parameter box; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    /// Infimum of the rate over box and state space; strictly positive.
    pub min_rate: f64,
    /// Supremum of the rate; the thinning envelope.
    pub max_rate: f64,
    /// Supremum of `|grad_theta f| / f`.
    pub max_relative_gradient: f64,
    /// Supremum of the parameter-Hessian norm (0 for affine families).
    pub max_hessian_norm: f64,
    /// Second-order Taylor constant of the rate ratio (0 for affine families).
    pub taylor_constant: f64,
}

/// Bounds a tabulated family must declare; verified against the table at
/// construction time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredBounds {
    pub min_rate: f64,
    pub max_rate: f64,
    pub max_relative_gradient: f64,
}

/// Parametric rate family `theta -> f_theta`.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFamily {
    /// `f_theta(x) = theta_0`, constant in the state. Dimension 1.
    Constant,
    /// `f_theta(x) = theta_0 + theta_1 * sigmoid((x - center) / scale)`.
    /// Dimension 2; smooth, increasing in `x`, bounded.
    AffineSigmoid { center: f64, scale: f64 },
    /// `f_theta(x) = theta_0 + theta_1 * p/(1+p)` with
    /// `p = softplus((x - center) / scale)`. Dimension 2; smooth, bounded.
    SoftplusClamp { center: f64, scale: f64 },
    /// Linear span of user-supplied basis functions tabulated on a grid and
    /// interpolated piecewise-linearly (clamped outside the grid). The user
    /// must declare bounds; they are verified on the table at construction.
    UserTabulated {
        x_grid: Vec<f64>,
        basis: Vec<Vec<f64>>,
        bounds: DeclaredBounds,
    },
}

#[inline]
fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp().ln_1p()
    }
}

impl RateFamily {
    /// Parameter dimension `d` of the family.
    pub fn dim(&self) -> usize {
        match self {
            RateFamily::Constant => 1,
            RateFamily::AffineSigmoid { .. } | RateFamily::SoftplusClamp { .. } => 2,
            RateFamily::UserTabulated { basis, .. } => basis.len(),
        }
    }

    /// Feature map `phi(x)`; the rate is `theta · phi(x)`.
    #[inline]
    pub fn features(&self, x: f64) -> Features {
        match self {
            RateFamily::Constant => Features::from_slice(&[1.0]),
            RateFamily::AffineSigmoid { center, scale } => {
                Features::from_slice(&[1.0, sigmoid((x - center) / scale)])
            }
            RateFamily::SoftplusClamp { center, scale } => {
                let p = softplus((x - center) / scale);
                Features::from_slice(&[1.0, p / (1.0 + p)])
            }
            RateFamily::UserTabulated { x_grid, basis, .. } => {
                let mut vals = [0.0; MAX_PARAM_DIM];
                let k = interp_index(x_grid, x);
                match k {
                    InterpPos::Below => {
                        for (j, b) in basis.iter().enumerate() {
                            vals[j] = b[0];
                        }
                    }
                    InterpPos::Above => {
                        for (j, b) in basis.iter().enumerate() {
                            vals[j] = *b.last().expect("non-empty basis row");
                        }
                    }
                    InterpPos::Segment(i, w) => {
                        for (j, b) in basis.iter().enumerate() {
                            vals[j] = b[i] + w * (b[i + 1] - b[i]);
                        }
                    }
                }
                Features {
                    vals,
                    len: basis.len(),
                }
            }
        }
    }

    /// Validates the family definition itself (hyper-parameters and tables).
    pub fn validate(&self) -> Result<()> {
        match self {
            RateFamily::Constant => Ok(()),
            RateFamily::AffineSigmoid { scale, .. } | RateFamily::SoftplusClamp { scale, .. } => {
                if !scale.is_finite() || *scale <= 0.0 {
                    return Err(Error::Config(format!(
                        "rate family scale must be positive and finite, got {scale}"
                    )));
                }
                Ok(())
            }
            RateFamily::UserTabulated { x_grid, basis, .. } => {
                if basis.is_empty() || basis.len() > MAX_PARAM_DIM {
                    return Err(Error::Config(format!(
                        "tabulated family needs between 1 and {MAX_PARAM_DIM} basis functions, got {}",
                        basis.len()
                    )));
                }
                if x_grid.len() < 2 {
                    return Err(Error::Config(
                        "tabulated family needs at least two grid points".into(),
                    ));
                }
                if x_grid.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("tabulated grid must be finite".into()));
                }
                if x_grid.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config(
                        "tabulated grid must be strictly increasing".into(),
                    ));
                }
                for (j, b) in basis.iter().enumerate() {
                    if b.len() != x_grid.len() {
                        return Err(Error::Config(format!(
                            "basis function {j} has {} values but the grid has {} points",
                            b.len(),
                            x_grid.len()
                        )));
                    }
                    if b.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Config(format!(
                            "basis function {j} contains non-finite values"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Certified bounds of the family over `bx`; exact (not just conservative)
    /// for the built-in families, declared-and-verified for tabulated ones.
    pub fn certified_bounds(&self, bx: &ThetaBox) -> Result<RateBounds> {
        if bx.dim() != self.dim() {
            return Err(Error::Config(format!(
                "parameter box has dimension {} but the rate family needs {}",
                bx.dim(),
                self.dim()
            )));
        }
        match self {
            RateFamily::Constant => {
                let (lo, hi) = (bx.lower()[0], bx.upper()[0]);
                if lo <= 0.0 {
                    return Err(Error::Config(format!(
                        "constant rate box must be positive, lower bound is {lo}"
                    )));
                }
                Ok(RateBounds {
                    min_rate: lo,
                    max_rate: hi,
                    max_relative_gradient: 1.0 / lo,
                    max_hessian_norm: 0.0,
                    taylor_constant: 0.0,
                })
            }
            RateFamily::AffineSigmoid { .. } | RateFamily::SoftplusClamp { .. } => {
                // Second feature ranges over (0, 1); the rate over box x state
                // space is a + b*g with (a, b) in the box and g in [0, 1].
                let (a_lo, a_hi) = (bx.lower()[0], bx.upper()[0]);
                let (b_lo, b_hi) = (bx.lower()[1], bx.upper()[1]);
                let min_rate = a_lo + f64::min(0.0, b_lo);
                let max_rate = a_hi + f64::max(0.0, b_hi);
                if min_rate <= 0.0 {
                    return Err(Error::Config(format!(
                        "rate can reach {min_rate} <= 0 over the given box; shrink the box"
                    )));
                }
                // sup over g in [0,1] of sqrt(1+g^2) / (a_lo + b_lo*g):
                // stationary at g = b_lo/a_lo, otherwise at an endpoint.
                let ratio = |g: f64| (1.0 + g * g).sqrt() / (a_lo + b_lo * g);
                let mut b1 = f64::max(ratio(0.0), ratio(1.0));
                let g_star = b_lo / a_lo;
                if (0.0..=1.0).contains(&g_star) {
                    b1 = f64::max(b1, ratio(g_star));
                }
                Ok(RateBounds {
                    min_rate,
                    max_rate,
                    max_relative_gradient: b1,
                    max_hessian_norm: 0.0,
                    taylor_constant: 0.0,
                })
            }
            RateFamily::UserTabulated { x_grid, bounds, .. } => {
                self.verify_declared(bx, x_grid, bounds)?;
                Ok(RateBounds {
                    min_rate: bounds.min_rate,
                    max_rate: bounds.max_rate,
                    max_relative_gradient: bounds.max_relative_gradient,
                    max_hessian_norm: 0.0,
                    taylor_constant: 0.0,
                })
            }
        }
    }

    /// Spot-verifies declared tabulated bounds on the knots and on interval
    /// midpoints. Because the rate is affine in `theta` and piecewise linear
    /// in `x`, the extreme rate values over the box are attained at knots, so
    /// the min/max checks are exact; the gradient-ratio check is a dense spot
    /// check of the declared envelope.
    fn verify_declared(&self, bx: &ThetaBox, x_grid: &[f64], decl: &DeclaredBounds) -> Result<()> {
        if !decl.min_rate.is_finite() || decl.min_rate <= 0.0 {
            return Err(Error::Config(format!(
                "declared min_rate must be positive and finite, got {}",
                decl.min_rate
            )));
        }
        if !decl.max_rate.is_finite()
            || !decl.max_relative_gradient.is_finite()
            || decl.max_rate < decl.min_rate
            || decl.max_relative_gradient <= 0.0
        {
            return Err(Error::Config(
                "declared bounds must satisfy 0 < min_rate <= max_rate and a positive gradient bound".into(),
            ));
        }
        let probe = |x: f64| -> Result<()> {
            let phi = self.features(x);
            // Linear in theta: box extremes are attained coordinatewise.
            let mut lo = 0.0;
            let mut hi = 0.0;
            for ((p, l), u) in phi.as_slice().iter().zip(bx.lower()).zip(bx.upper()) {
                lo += f64::min(p * l, p * u);
                hi += f64::max(p * l, p * u);
            }
            let slack = 1e-9 * (1.0 + decl.max_rate.abs());
            if lo < decl.min_rate - slack || hi > decl.max_rate + slack {
                return Err(Error::Config(format!(
                    "declared rate bounds [{}, {}] violated at x = {x}: rate spans [{lo}, {hi}]",
                    decl.min_rate, decl.max_rate
                )));
            }
            let grad_ratio = phi.norm_squared().sqrt() / lo;
            if grad_ratio > decl.max_relative_gradient * (1.0 + 1e-9) {
                return Err(Error::Config(format!(
                    "declared gradient bound {} violated at x = {x}: |phi|/f = {grad_ratio}",
                    decl.max_relative_gradient
                )));
            }
            Ok(())
        };
        for w in x_grid.windows(2) {
            probe(w[0])?;
            probe(0.5 * (w[0] + w[1]))?;
        }
        probe(*x_grid.last().expect("non-empty grid"))?;
        Ok(())
    }
}

enum InterpPos {
    Below,
    Above,
    /// Interval index and fractional position within it.
    Segment(usize, f64),
}

fn interp_index(grid: &[f64], x: f64) -> InterpPos {
    let n = grid.len();
    if x <= grid[0] {
        return InterpPos::Below;
    }
    if x >= grid[n - 1] {
        return InterpPos::Above;
    }
    // partition_point returns the first index with grid[i] > x.
    let i = grid.partition_point(|g| *g <= x) - 1;
    let w = (x - grid[i]) / (grid[i + 1] - grid[i]);
    InterpPos::Segment(i, w)
}
