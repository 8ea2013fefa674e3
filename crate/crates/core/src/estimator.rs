//! Box-constrained maximum-likelihood estimation.
//!
//! The path log-likelihood is log-concave in `theta` for every rate family
//! (each is affine in `theta`), so a projected Newton iteration with an
//! Armijo backtracking line search converges to the unique constrained
//! maximizer. Several deterministic starting points (the box center plus
//! shrunk corners) guard against line-search stalls near the boundary; the
//! best final value wins.
//!
//! Estimates are reported together with the observed information at the
//! estimate, which is what calibrates confidence statements: for large
//! populations `sqrt(n) * (theta_hat - theta_star)` is asymptotically
//! centered normal with covariance the inverse limiting information.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::PathEvaluator;
use crate::limit::FisherMatrix;
use crate::model::{Theta, ThetaBox};
use crate::simulator::TrajectoryRecord;

/// Ridge values tried in order until the shifted negative Hessian admits a
/// Cholesky factorization.
const RIDGE_LADDER: [f64; 7] = [0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0, 100.0];

/// How far multi-start corners are pulled toward the box center.
const CORNER_SHRINK: f64 = 0.75;

/// Smallest Armijo step before a line search gives up.
const MIN_STEP: f64 = 1e-12;

/// Armijo sufficient-increase constant.
const ARMIJO_C: f64 = 1e-4;

/// Polish iterations after objective-based convergence. Rounding caps
/// Armijo progress once the per-step gain falls below the floating-point
/// resolution of the log-likelihood, which leaves a parameter error of
/// roughly `sqrt(eps / curvature)`; a few unconditional Newton steps on the
/// score equation remove it.
const POLISH_STEPS: usize = 4;

/// Largest Newton correction (relative to the parameter scale) the polish
/// phase is willing to take; larger proposals mean the point is not in the
/// quadratic regime, where an unguarded step would be unsafe.
const POLISH_SPAN: f64 = 1e-5;

/// Options for [`mle`].
#[derive(Debug, Clone)]
pub struct EstimatorOptions {
    /// Maximum Newton iterations per start.
    pub max_iterations: usize,
    /// Convergence when the projected gradient infinity-norm falls below
    /// `grad_tolerance * n` (the score scales linearly with the population).
    pub grad_tolerance: f64,
    /// Convergence when the step infinity-norm falls below
    /// `step_tolerance * (1 + |theta|)`.
    pub step_tolerance: f64,
    /// Convergence when the objective gain falls below
    /// `value_tolerance * (1 + |value|)`.
    pub value_tolerance: f64,
    /// Reference parameter for the likelihood ratio; defaults to the box
    /// center. The maximizer does not depend on it.
    pub theta_ref: Option<Theta>,
    /// Record the objective value after every accepted iteration of the
    /// winning start.
    pub keep_trace: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            max_iterations: 100,
            grad_tolerance: 1e-8,
            step_tolerance: 1e-10,
            value_tolerance: 1e-12,
            theta_ref: None,
            keep_trace: false,
        }
    }
}

impl EstimatorOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        for (name, v) in [
            ("grad_tolerance", self.grad_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("value_tolerance", self.value_tolerance),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Result of a maximum-likelihood fit.
#[derive(Debug, Clone)]
pub struct MleResult {
    /// Constrained maximizer of the path likelihood.
    pub theta_hat: Theta,
    /// Log-likelihood ratio of `theta_hat` against the reference parameter.
    pub log_likelihood: f64,
    /// Observed per-neuron information at `theta_hat`.
    pub observed_info: FisherMatrix,
    /// Population size of the fitted record.
    pub n: usize,
    /// Newton iterations used by the winning start.
    pub iterations: usize,
    /// Whether the winning start met a convergence tolerance.
    pub converged: bool,
    /// Number of starting points tried.
    pub starts: usize,
    /// Projected-gradient infinity-norm at `theta_hat` (unscaled).
    pub grad_norm: f64,
    /// Whether any coordinate of `theta_hat` sits on the box boundary.
    pub at_boundary: bool,
    /// Objective values after each accepted iteration of the winning start.
    pub trace: Option<Vec<f64>>,
}

/// Gradient with the components that push out of the box at `x` zeroed;
/// its norm vanishes exactly at a constrained stationary point.
fn projected_gradient(g: &DVector<f64>, x: &[f64], bx: &ThetaBox) -> DVector<f64> {
    let mut p = g.clone();
    for i in 0..x.len() {
        if (x[i] <= bx.lower()[i] && p[i] < 0.0) || (x[i] >= bx.upper()[i] && p[i] > 0.0) {
            p[i] = 0.0;
        }
    }
    p
}

struct StartOutcome {
    theta: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn newton_from(
    start: &Theta,
    eval: &PathEvaluator,
    theta_ref: &[f64],
    bx: &ThetaBox,
    opts: &EstimatorOptions,
    n: f64,
) -> StartOutcome {
    let d = start.dim();
    let mut x = start.as_slice().to_vec();
    let mut value = eval.loglr(&x, theta_ref);
    let mut trace = vec![value];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iterations {
        let g = eval.score(&x);
        if projected_gradient(&g, &x, bx).amax() <= opts.grad_tolerance * n {
            converged = true;
            break;
        }
        let h = eval.hessian(&x);
        let dir = ascent_direction(&h, &g, d);
        // Backtracking projected line search with the Armijo rule.
        let mut t = 1.0;
        let mut accepted = false;
        while t >= MIN_STEP {
            let cand: Vec<f64> = (0..d)
                .map(|i| (x[i] + t * dir[i]).clamp(bx.lower()[i], bx.upper()[i]))
                .collect();
            let slope: f64 = (0..d).map(|i| g[i] * (cand[i] - x[i])).sum();
            if slope <= 0.0 {
                t *= 0.5;
                continue;
            }
            let cand_value = eval.loglr(&cand, theta_ref);
            if cand_value >= value + ARMIJO_C * slope {
                let step_inf = (0..d)
                    .map(|i| (cand[i] - x[i]).abs())
                    .fold(0.0_f64, f64::max);
                let gain = cand_value - value;
                let x_scale = 1.0 + x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                x = cand;
                value = cand_value;
                iterations += 1;
                trace.push(value);
                accepted = true;
                if step_inf <= opts.step_tolerance * x_scale
                    || gain <= opts.value_tolerance * (1.0 + value.abs())
                {
                    converged = true;
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No admissible increase left in this direction; declare
            // convergence if the projected gradient is already small at a
            // looser scale, otherwise report non-convergence.
            let g = eval.score(&x);
            converged = projected_gradient(&g, &x, bx).amax() <= opts.grad_tolerance * n * 1e3;
            break;
        }
        if converged {
            break;
        }
    }

    let mut moved = false;
    for _ in 0..POLISH_STEPS {
        let g = eval.score(&x);
        let gn = projected_gradient(&g, &x, bx).amax();
        if gn <= opts.grad_tolerance * n {
            break;
        }
        let h = eval.hessian(&x);
        let dir = ascent_direction(&h, &g, d);
        let cand: Vec<f64> = (0..d)
            .map(|i| (x[i] + dir[i]).clamp(bx.lower()[i], bx.upper()[i]))
            .collect();
        let step_inf = (0..d)
            .map(|i| (cand[i] - x[i]).abs())
            .fold(0.0_f64, f64::max);
        let x_scale = 1.0 + x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if step_inf > POLISH_SPAN * x_scale {
            break;
        }
        let gn_cand = projected_gradient(&eval.score(&cand), &cand, bx).amax();
        if gn_cand < gn {
            x = cand;
            moved = true;
        } else {
            break;
        }
    }
    if moved {
        value = eval.loglr(&x, theta_ref);
        trace.push(value);
        if !converged {
            let g = eval.score(&x);
            converged = projected_gradient(&g, &x, bx).amax() <= opts.grad_tolerance * n * 1e3;
        }
    }

    StartOutcome {
        theta: x,
        value,
        iterations,
        converged,
        trace,
    }
}

/// Solves `(-H + ridge I) dir = g`, walking the ridge ladder until the
/// factorization succeeds. `-H` is positive semidefinite, so this always
/// terminates with a strict ascent direction.
fn ascent_direction(h: &DMatrix<f64>, g: &DVector<f64>, d: usize) -> DVector<f64> {
    let scale = h.amax().max(1.0);
    for ridge in RIDGE_LADDER {
        let mut a = -h;
        for i in 0..d {
            a[(i, i)] += ridge * scale;
        }
        if let Some(ch) = Cholesky::new(a) {
            return ch.solve(g);
        }
    }
    // Unreachable in exact arithmetic; fall back to steepest ascent.
    g / scale
}

/// Maximum-likelihood estimate of the rate parameter from a recorded
/// trajectory, by multi-start projected Newton over the admissible box.
pub fn mle(record: &TrajectoryRecord, opts: &EstimatorOptions) -> Result<MleResult> {
    opts.validate()?;
    let model = record.model();
    let bx = model.theta_box();
    let theta_ref = match &opts.theta_ref {
        Some(t) => {
            if t.dim() != bx.dim() || !bx.contains(t) {
                return Err(Error::ParamDomain(format!(
                    "theta_ref {:?} lies outside the admissible box",
                    t.as_slice()
                )));
            }
            t.clone()
        }
        None => bx.center(),
    };

    let eval = PathEvaluator::new(record);
    let n = record.n() as f64;
    let mut starts = vec![bx.center()];
    starts.extend(bx.shrunk_corners(CORNER_SHRINK));

    let mut best: Option<StartOutcome> = None;
    for start in &starts {
        let out = newton_from(start, &eval, theta_ref.as_slice(), bx, opts, n);
        let better = match &best {
            None => true,
            Some(b) => out.value > b.value,
        };
        if better {
            best = Some(out);
        }
    }
    let best = best.expect("at least one start");

    let theta_hat = Theta(best.theta.clone());
    let g = eval.score(&best.theta);
    let grad_norm = projected_gradient(&g, &best.theta, bx).amax();
    let at_boundary = (0..bx.dim()).any(|i| {
        let span = bx.upper()[i] - bx.lower()[i];
        best.theta[i] <= bx.lower()[i] + 1e-9 * span || best.theta[i] >= bx.upper()[i] - 1e-9 * span
    });
    let observed_info = crate::likelihood::observed_info(record, &theta_hat)?;

    Ok(MleResult {
        theta_hat,
        log_likelihood: best.value,
        observed_info,
        n: record.n(),
        iterations: best.iterations,
        converged: best.converged,
        starts: starts.len(),
        grad_norm,
        at_boundary,
        trace: if opts.keep_trace {
            Some(best.trace)
        } else {
            None
        },
    })
}

/// Standardized estimation error `sqrt(n) * fisher^{1/2} (theta_hat -
/// theta_star)` using the symmetric positive-semidefinite square root of the
/// supplied information matrix (typically the limiting information of the
/// mean-field system, or the observed information of the fitted record).
/// Under the model this is asymptotically standard normal in every
/// coordinate. Errors when the information matrix is singular.
pub fn standardized_error(
    result: &MleResult,
    theta_star: &Theta,
    fisher: &FisherMatrix,
    n: usize,
) -> Result<DVector<f64>> {
    if theta_star.dim() != result.theta_hat.dim() || fisher.dim() != result.theta_hat.dim() {
        return Err(Error::ParamDomain(format!(
            "theta_star has dimension {}, fisher {}, the fit has {}",
            theta_star.dim(),
            fisher.dim(),
            result.theta_hat.dim()
        )));
    }
    if fisher.min_eigenvalue() <= 0.0 {
        return Err(Error::Numerics(
            "information matrix is singular; the error cannot be standardized".into(),
        ));
    }
    let diff = DVector::from_iterator(
        theta_star.dim(),
        result
            .theta_hat
            .as_slice()
            .iter()
            .zip(theta_star.as_slice())
            .map(|(a, b)| a - b),
    );
    Ok((n as f64).sqrt() * fisher.sqrt_psd() * diff)
}
