//! Exact path log-likelihood ratios and their derivatives.
//!
//! Relative to a reference parameter `theta_ref`, the log-likelihood of an
//! observed trajectory under `theta` is
//!
//! ```text
//! log L(theta / theta_ref) = sum_events log( f_theta / f_theta_ref )(x_pre)
//!                          - sum_i int_0^t ( f_theta - f_theta_ref )(X^i_s) ds
//! ```
//!
//! with the sum over all recorded spikes (evaluated at the spiker's pre-jump
//! potential) and the compensator integral over every neuron's path. Because
//! every rate family is affine in `theta` (`f_theta = theta . phi`), the
//! event terms need only the per-event feature vectors and the compensator
//! needs only the path integral of the feature vector; both are independent
//! of `theta`, which makes repeated evaluation at different parameters cheap.
//!
//! The compensator integrals are computed segment by segment between global
//! event times. With zero drift the potentials are constant on a segment and
//! one function evaluation per neuron is exact; otherwise a fifth-order
//! Gauss-Legendre rule is applied along the deterministic flow.
//!
//! [`lan_decompose`] splits a local log-likelihood ratio at
//! `theta = theta_star + h / sqrt(n)` into the linear score term, the
//! quadratic observed-information term and the remainder that local
//! asymptotic normality drives to zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::limit::FisherMatrix;
use crate::model::{ModelSpec, Theta, MAX_PARAM_DIM};
use crate::simulator::TrajectoryRecord;

/// Fifth-order Gauss-Legendre nodes and weights on the unit interval
/// (exact for polynomial integrands of degree nine and below).
const GL5: [(f64, f64); 5] = [
    (0.046910077030668004, 0.11846344252809454),
    (0.23076534494715845, 0.23931433524968324),
    (0.5, 0.28444444444444444),
    (0.7692346550528415, 0.23931433524968324),
    (0.953089922969332, 0.11846344252809454),
];

/// Calls `node(x, w)` for every quadrature node of the compensator
/// integrals: summing `w * g(x)` over all calls yields
/// `sum_i int_0^t g(X^i_s) ds` (unnormalized).
fn quadrature_pass(record: &TrajectoryRecord, mut node: impl FnMut(f64, f64)) {
    let drift = record.model().drift();
    if drift.is_zero() {
        // Potentials are constant between events: one node per neuron per
        // segment, exactly.
        record.sweep_segments(|a, b, states| {
            let len = b - a;
            for &x in states {
                node(x, len);
            }
        });
    } else {
        record.sweep_segments(|a, b, states| {
            let len = b - a;
            for &x in states {
                for (off, w) in GL5 {
                    node(drift.flow(x, len * off), len * w);
                }
            }
        });
    }
}

/// Time integral of the empirical measure applied to `g`:
/// `int_0^t (1/n) sum_i g(X^i_s) ds`.
pub fn path_integral(record: &TrajectoryRecord, mut g: impl FnMut(f64) -> f64) -> f64 {
    let mut acc = 0.0;
    quadrature_pass(record, |x, w| acc += w * g(x));
    acc / record.n() as f64
}

fn check_eval_theta(model: &ModelSpec, theta: &Theta, what: &str) -> Result<()> {
    if theta.dim() != model.theta_box().dim() {
        return Err(Error::ParamDomain(format!(
            "{what} has dimension {}, the model expects {}",
            theta.dim(),
            model.theta_box().dim()
        )));
    }
    if !model.theta_box().contains(theta) {
        return Err(Error::ParamDomain(format!(
            "{what} {:?} lies outside the admissible box",
            theta.as_slice()
        )));
    }
    Ok(())
}

/// Precomputed sufficient statistics of a trajectory for likelihood work:
/// the per-event feature vectors and the unnormalized compensator integral
/// `comp = sum_i int_0^t phi(X^i_s) ds`. Evaluating the log-likelihood ratio,
/// score or Hessian at any parameter is then linear in the event count.
pub(crate) struct PathEvaluator {
    d: usize,
    /// Feature vector `phi(x_pre)` per recorded event, flattened row-major.
    feats: Vec<f64>,
    comp: Vec<f64>,
    /// Certified rate range of the family over the box; event rates are
    /// clamped to it before taking logarithms, which is a mathematical no-op
    /// for in-box parameters but shields the logs from boundary roundoff.
    rate_range: (f64, f64),
}

impl PathEvaluator {
    /// One quadrature pass over the record.
    pub(crate) fn new(record: &TrajectoryRecord) -> PathEvaluator {
        Self::build(record, None).0
    }

    /// One fused quadrature pass that also accumulates the observed
    /// information at `theta` (already validated against the box).
    pub(crate) fn with_info(
        record: &TrajectoryRecord,
        theta: &Theta,
    ) -> Result<(PathEvaluator, FisherMatrix)> {
        let (eval, acc) = Self::build(record, Some(theta.as_slice()));
        let d = eval.d;
        let acc = acc.expect("info accumulator requested");
        let mut m = DMatrix::zeros(d, d);
        let inv_n = 1.0 / record.n() as f64;
        for i in 0..d {
            for j in 0..=i {
                let v = acc[i * d + j] * inv_n;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok((eval, FisherMatrix::from_symmetric(m)?))
    }

    fn build(record: &TrajectoryRecord, info_theta: Option<&[f64]>) -> (PathEvaluator, Option<Vec<f64>>) {
        let rate = record.model().rate();
        let d = rate.dim();
        let mut comp = vec![0.0; d];
        let mut info = info_theta.map(|_| vec![0.0; d * d]);
        quadrature_pass(record, |x, w| {
            let phi = rate.features(x);
            let p = phi.as_slice();
            for (c, pi) in comp.iter_mut().zip(p) {
                *c += w * pi;
            }
            if let (Some(acc), Some(th)) = (info.as_mut(), info_theta) {
                let f = phi.dot(th);
                let s = w / f;
                for i in 0..d {
                    let si = s * p[i];
                    for j in 0..=i {
                        acc[i * d + j] += si * p[j];
                    }
                }
            }
        });
        let mut feats = Vec::with_capacity(record.events().len() * d);
        for e in record.events() {
            feats.extend_from_slice(record.model().rate().features(e.pre_jump_state).as_slice());
        }
        let bounds = record.model().family_bounds();
        (
            PathEvaluator {
                d,
                feats,
                comp,
                rate_range: (bounds.min_rate, bounds.max_rate),
            },
            info,
        )
    }

    fn event_features(&self) -> impl Iterator<Item = &[f64]> {
        self.feats.chunks_exact(self.d.max(1))
    }

    /// `log L(theta / theta_ref)` for the stored trajectory, as a difference
    /// of clamped logarithms.
    pub(crate) fn loglr(&self, theta: &[f64], theta_ref: &[f64]) -> f64 {
        let (lo, hi) = self.rate_range;
        let mut acc = 0.0;
        for p in self.event_features() {
            acc += dot(p, theta).clamp(lo, hi).ln() - dot(p, theta_ref).clamp(lo, hi).ln();
        }
        for (i, c) in self.comp.iter().enumerate() {
            acc -= (theta[i] - theta_ref[i]) * c;
        }
        acc
    }

    /// Gradient of the log-likelihood in `theta` (independent of the
    /// reference parameter).
    pub(crate) fn score(&self, theta: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.d);
        for p in self.event_features() {
            let f = dot(p, theta);
            for i in 0..self.d {
                g[i] += p[i] / f;
            }
        }
        for (i, c) in self.comp.iter().enumerate() {
            g[i] -= c;
        }
        g
    }

    /// Hessian of the log-likelihood in `theta`. The rate families are
    /// affine in `theta`, so both the per-event curvature of `f` and the
    /// compensator curvature vanish and the Hessian reduces to the negative
    /// outer-product sum over events; it is negative semidefinite
    /// everywhere, making the likelihood log-concave on the box.
    pub(crate) fn hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.d, self.d);
        for p in self.event_features() {
            let f = dot(p, theta);
            let inv2 = 1.0 / (f * f);
            for i in 0..self.d {
                for j in 0..=i {
                    h[(i, j)] -= p[i] * p[j] * inv2;
                }
            }
        }
        for i in 0..self.d {
            for j in 0..i {
                h[(j, i)] = h[(i, j)];
            }
        }
        h
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact log-likelihood ratio `log L(theta / theta_ref)` of the recorded
/// trajectory.
pub fn log_likelihood_ratio(
    record: &TrajectoryRecord,
    theta: &Theta,
    theta_ref: &Theta,
) -> Result<f64> {
    check_eval_theta(record.model(), theta, "theta")?;
    check_eval_theta(record.model(), theta_ref, "theta_ref")?;
    Ok(PathEvaluator::new(record).loglr(theta.as_slice(), theta_ref.as_slice()))
}

/// Score (gradient of the path log-likelihood) at `theta`. This is the
/// full-path score: at the data-generating parameter its fluctuations grow
/// like `sqrt(n)`.
pub fn score(record: &TrajectoryRecord, theta: &Theta) -> Result<DVector<f64>> {
    check_eval_theta(record.model(), theta, "theta")?;
    Ok(PathEvaluator::new(record).score(theta.as_slice()))
}

/// Hessian of the path log-likelihood at `theta` (negative semidefinite).
pub fn hessian(record: &TrajectoryRecord, theta: &Theta) -> Result<DMatrix<f64>> {
    check_eval_theta(record.model(), theta, "theta")?;
    Ok(PathEvaluator::new(record).hessian(theta.as_slice()))
}

/// Observed (per-neuron) information matrix
/// `I_t = int_0^t <mu_s, phi phi^T / f_theta> ds`: the normalized
/// compensator of the score's quadratic variation. As the population grows
/// it converges to the limiting information matrix of the mean-field system.
pub fn observed_info(record: &TrajectoryRecord, theta: &Theta) -> Result<FisherMatrix> {
    check_eval_theta(record.model(), theta, "theta")?;
    Ok(PathEvaluator::with_info(record, theta)?.1)
}

/// The three pieces of the quadratic likelihood expansion at `theta_star`
/// in direction `h`, with local alternative `theta_star + h / sqrt(n)`.
///
/// The identity
/// `log_likelihood_ratio = h . delta - (h . info h) / 2 + remainder`
/// holds exactly by construction; the statistical content is that the
/// remainder tends to zero as the population grows while `delta` stays
/// asymptotically normal with covariance `info`.
#[derive(Debug, Clone)]
pub struct LanTerms {
    /// Local direction `h`.
    pub h: DVector<f64>,
    /// Exact log-likelihood ratio `log L(theta_star + h/sqrt(n) / theta_star)`.
    pub log_likelihood_ratio: f64,
    /// Normalized score `score(theta_star) / sqrt(n)`.
    pub delta: DVector<f64>,
    /// Observed per-neuron information at `theta_star`.
    pub info: FisherMatrix,
    /// `log_likelihood_ratio - h . delta + (h . info h) / 2`.
    pub remainder: f64,
}

/// Computes the quadratic expansion of the log-likelihood ratio between
/// `theta_star + h / sqrt(n)` and `theta_star`. Both parameter points must
/// lie in the admissible box.
pub fn lan_decompose(record: &TrajectoryRecord, theta_star: &Theta, h: &[f64]) -> Result<LanTerms> {
    let model = record.model();
    check_eval_theta(model, theta_star, "theta_star")?;
    if h.len() != theta_star.dim() || h.len() > MAX_PARAM_DIM {
        return Err(Error::ParamDomain(format!(
            "direction h has dimension {}, the model expects {}",
            h.len(),
            theta_star.dim()
        )));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::ParamDomain("direction h must be finite".into()));
    }
    let n = record.n() as f64;
    let sqrt_n = n.sqrt();
    let theta_local = Theta(
        theta_star
            .as_slice()
            .iter()
            .zip(h)
            .map(|(t, hi)| t + hi / sqrt_n)
            .collect(),
    );
    check_eval_theta(model, &theta_local, "theta_star + h/sqrt(n)")?;

    let (eval, info) = PathEvaluator::with_info(record, theta_star)?;
    let loglr = eval.loglr(theta_local.as_slice(), theta_star.as_slice());
    let delta = eval.score(theta_star.as_slice()) / sqrt_n;
    let hv = DVector::from_column_slice(h);
    let quad = 0.5 * (info.matrix() * &hv).dot(&hv);
    let remainder = loglr - hv.dot(&delta) + quad;
    Ok(LanTerms {
        h: hv,
        log_likelihood_ratio: loglr,
        delta,
        info,
        remainder,
    })
}
