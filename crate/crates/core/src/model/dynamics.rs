//! Between-spike drift and at-spike reset maps.
//!
//! Between events every potential follows the deterministic flow of
//! `dx/dt = b(x)`. The two built-in drifts have closed-form flows; custom
//! drifts are integrated with a fixed-step fourth-order Runge–Kutta scheme
//! whose step is tied to the declared Lipschitz constant.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default clamp applied by the reset-to-zero map: the downward jump never
/// exceeds this magnitude, keeping the reset map bounded and 1-Lipschitz.
pub const DEFAULT_RESET_CLAMP: f64 = 1e3;

/// Relative Runge–Kutta step for custom drifts: `1e-3 * min(1, 1/L)`.
const RK4_BASE_STEP: f64 = 1e-3;

/// Deterministic between-spike drift `b`.
#[derive(Clone)]
pub enum DriftSpec {
    /// `b(x) = 0`: potentials are piecewise constant between events.
    Zero,
    /// `b(x) = input - decay * x` (leaky integrator).
    Linear { decay: f64, input: f64 },
    /// User-supplied drift with declared Lipschitz constant.
    Custom(CustomDrift),
}

/// A named custom drift callable with its declared Lipschitz constant.
#[derive(Clone)]
pub struct CustomDrift {
    pub name: String,
    pub lipschitz: f64,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftSpec::Zero => write!(f, "Zero"),
            DriftSpec::Linear { decay, input } => {
                write!(f, "Linear {{ decay: {decay}, input: {input} }}")
            }
            DriftSpec::Custom(c) => {
                write!(f, "Custom {{ name: {:?}, lipschitz: {} }}", c.name, c.lipschitz)
            }
        }
    }
}

impl DriftSpec {
    /// Validates hyper-parameters (finiteness; positive Lipschitz constant).
    pub fn validate(&self) -> Result<()> {
        match self {
            DriftSpec::Zero => Ok(()),
            DriftSpec::Linear { decay, input } => {
                if !decay.is_finite() || !input.is_finite() {
                    return Err(Error::Config(
                        "linear drift coefficients must be finite".into(),
                    ));
                }
                Ok(())
            }
            DriftSpec::Custom(c) => {
                if !c.lipschitz.is_finite() || c.lipschitz <= 0.0 {
                    return Err(Error::Config(format!(
                        "custom drift must declare a positive finite Lipschitz constant, got {}",
                        c.lipschitz
                    )));
                }
                Ok(())
            }
        }
    }

    /// True when the flow leaves states unchanged (enables the exact
    /// piecewise-constant fast path in quadrature and simulation).
    pub fn is_zero(&self) -> bool {
        matches!(self, DriftSpec::Zero)
    }

    /// Canonical textual form used for model fingerprinting.
    pub fn fingerprint(&self) -> String {
        match self {
            DriftSpec::Zero => "zero".into(),
            DriftSpec::Linear { decay, input } => format!("linear({decay},{input})"),
            DriftSpec::Custom(c) => format!("custom({},{})", c.name, c.lipschitz),
        }
    }

    /// Flow map of `dx/dt = b(x) + input_shift` over `dt >= 0`. The shift is
    /// how the mean-field solver injects the population input without
    /// changing the drift object.
    pub fn flow_with_input(&self, x: f64, input_shift: f64, dt: f64) -> f64 {
        debug_assert!(dt >= 0.0);
        if dt == 0.0 {
            return x;
        }
        match self {
            DriftSpec::Zero => x + input_shift * dt,
            DriftSpec::Linear { decay, input } => {
                let c = input + input_shift;
                if *decay == 0.0 {
                    x + c * dt
                } else {
                    let fixed = c / decay;
                    fixed + (x - fixed) * (-decay * dt).exp()
                }
            }
            DriftSpec::Custom(c) => {
                let h_max = RK4_BASE_STEP * f64::min(1.0, 1.0 / c.lipschitz);
                let steps = (dt / h_max).ceil().max(1.0) as u64;
                let h = dt / steps as f64;
                let f = |y: f64| (c.f)(y) + input_shift;
                let mut y = x;
                for _ in 0..steps {
                    let k1 = f(y);
                    let k2 = f(y + 0.5 * h * k1);
                    let k3 = f(y + 0.5 * h * k2);
                    let k4 = f(y + h * k3);
                    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                }
                y
            }
        }
    }

    /// Flow map of `dx/dt = b(x)` over `dt >= 0`.
    pub fn flow(&self, x: f64, dt: f64) -> f64 {
        self.flow_with_input(x, 0.0, dt)
    }

    /// Pointwise drift value `b(x)`.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            DriftSpec::Zero => 0.0,
            DriftSpec::Linear { decay, input } => input - decay * x,
            DriftSpec::Custom(c) => (c.f)(x),
        }
    }
}

/// At-spike reset map `phi`: on its own spike a neuron jumps from `x` to
/// `x + phi(x)`.
#[derive(Clone)]
pub enum ResetSpec {
    /// No self-jump: the spiker keeps its potential.
    None,
    /// `phi(x) = -x`, clamped so that `|phi| <= max_abs`; sends the spiker
    /// to zero for all ordinarily reachable potentials while staying bounded
    /// and 1-Lipschitz.
    ToZero { max_abs: f64 },
    /// User-supplied reset with declared bound and Lipschitz constant.
    Custom(CustomReset),
}

/// A named custom reset callable with declared bound and Lipschitz constant.
#[derive(Clone)]
pub struct CustomReset {
    pub name: String,
    pub bound: f64,
    pub lipschitz: f64,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for ResetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResetSpec::None => write!(f, "None"),
            ResetSpec::ToZero { max_abs } => write!(f, "ToZero {{ max_abs: {max_abs} }}"),
            ResetSpec::Custom(c) => write!(
                f,
                "Custom {{ name: {:?}, bound: {}, lipschitz: {} }}",
                c.name, c.bound, c.lipschitz
            ),
        }
    }
}

impl ResetSpec {
    /// Validates hyper-parameters.
    pub fn validate(&self) -> Result<()> {
        match self {
            ResetSpec::None => Ok(()),
            ResetSpec::ToZero { max_abs } => {
                if !max_abs.is_finite() || *max_abs <= 0.0 {
                    return Err(Error::Config(format!(
                        "reset clamp must be positive and finite, got {max_abs}"
                    )));
                }
                Ok(())
            }
            ResetSpec::Custom(c) => {
                if !c.bound.is_finite()
                    || c.bound <= 0.0
                    || !c.lipschitz.is_finite()
                    || c.lipschitz <= 0.0
                {
                    return Err(Error::Config(
                        "custom reset must declare a positive bound and Lipschitz constant".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// True when there is no self-jump at all.
    pub fn is_none(&self) -> bool {
        matches!(self, ResetSpec::None)
    }

    /// Canonical textual form used for model fingerprinting.
    pub fn fingerprint(&self) -> String {
        match self {
            ResetSpec::None => "none".into(),
            ResetSpec::ToZero { max_abs } => format!("to_zero({max_abs})"),
            ResetSpec::Custom(c) => format!("custom({},{},{})", c.name, c.bound, c.lipschitz),
        }
    }

    /// The self-jump `phi(x)` applied to the spiker's pre-spike potential.
    #[inline]
    pub fn jump(&self, x: f64) -> f64 {
        match self {
            ResetSpec::None => 0.0,
            ResetSpec::ToZero { max_abs } => -x.clamp(-max_abs, *max_abs),
            ResetSpec::Custom(c) => (c.f)(x),
        }
    }
}
