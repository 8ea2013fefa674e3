//! Large-population (mean-field) limit of the interacting system.
//!
//! As the population grows, a single tagged neuron follows
//! `dx/dt = b(x) + m * <mu_t, f_theta>` between its own reset jumps, where
//! `mu_t` is the law of the limit state and `m` is the mark mean. The law is
//! approximated by a particle cloud of `particles` members on a uniform time
//! grid:
//!
//! - **Deterministic mode** (no reset map): the cloud obeys a coupled ODE and
//!   is integrated with classical RK4; the only errors are the `O(h^4)`
//!   integrator error and the `O(particles^{-1/2})` cloud sampling error.
//! - **Stochastic mode** (with a reset map): each particle keeps its own
//!   thinned reset-jump stream while the population input `m * mean f` is
//!   frozen over each grid step. Outputs are flagged approximate.
//!
//! From a solved ensemble one obtains the limiting information matrix
//! (time-integral of the expected outer product of the relative rate
//! gradient) and the identifiability separation between parameter points.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Theta};
use crate::rng::{stream, substream, StreamRole};

/// Eigenvalues more negative than this fail the positive-semidefinite checks.
const PSD_TOL: f64 = 1e-10;

/// A symmetric positive-semidefinite information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    m: DMatrix<f64>,
}

impl FisherMatrix {
    /// Wraps a matrix, symmetrizing it and validating finiteness and
    /// approximate positive semidefiniteness.
    pub fn from_symmetric(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "information matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics(
                "information matrix contains non-finite entries".into(),
            ));
        }
        let sym = 0.5 * (&m + m.transpose());
        let min_eig = sym
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let scale = sym.amax().max(1.0);
        if min_eig < -PSD_TOL * scale {
            return Err(Error::Numerics(format!(
                "information matrix has negative eigenvalue {min_eig}"
            )));
        }
        Ok(FisherMatrix { m: sym })
    }

    /// Dimension `d`.
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// The underlying symmetric matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        self.m
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Symmetric PSD square root, clamping roundoff-negative eigenvalues to
    /// zero.
    pub fn sqrt_psd(&self) -> DMatrix<f64> {
        let eig = self.m.clone().symmetric_eigen();
        let vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
    }

    /// Inverse via Cholesky; errors when the matrix is not positive definite.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        Cholesky::new(self.m.clone())
            .map(|c| c.inverse())
            .ok_or_else(|| {
                Error::Numerics("information matrix is singular (not positive definite)".into())
            })
    }

    /// Rows as nested vectors (for JSON summaries).
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.m[(i, j)]).collect())
            .collect()
    }
}

/// How an ensemble was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitMode {
    /// Coupled ODE, RK4; exact up to integrator and cloud sampling error.
    Deterministic,
    /// Per-particle thinned reset jumps with the population input frozen per
    /// grid step; an approximation by construction.
    Stochastic,
}

/// Particle-cloud approximation of the limit law on a uniform time grid.
#[derive(Debug, Clone)]
pub struct LimitEnsemble {
    model: Arc<ModelSpec>,
    theta: Theta,
    mode: LimitMode,
    times: Vec<f64>,
    /// `states[q]` holds the cloud at `times[q]`.
    states: Vec<Vec<f64>>,
}

impl LimitEnsemble {
    /// The model the ensemble was solved under.
    pub fn model(&self) -> &Arc<ModelSpec> {
        &self.model
    }

    /// The parameter the ensemble was solved at.
    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    /// Solver mode; stochastic-mode outputs are approximations.
    pub fn mode(&self) -> LimitMode {
        self.mode
    }

    /// Whether outputs carry the stochastic-mode approximation caveat.
    pub fn approximate(&self) -> bool {
        self.mode == LimitMode::Stochastic
    }

    /// Grid times, `times[0] = 0` through `times.last() = horizon`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of particles.
    pub fn particles(&self) -> usize {
        self.states[0].len()
    }

    /// Cloud at grid index `q`.
    pub fn states_at(&self, q: usize) -> &[f64] {
        &self.states[q]
    }

    /// Cloud at the final grid time.
    pub fn final_states(&self) -> &[f64] {
        self.states.last().expect("non-empty grid")
    }

    /// Average of `g` over the cloud at grid index `q`.
    pub fn cloud_mean(&self, q: usize, mut g: impl FnMut(f64) -> f64) -> f64 {
        let s: f64 = self.states[q].iter().map(|x| g(*x)).sum();
        s / self.states[q].len() as f64
    }

    #[cfg(test)]
    pub(crate) fn with_permuted_particles(&self) -> LimitEnsemble {
        let mut out = self.clone();
        for cloud in &mut out.states {
            cloud.reverse();
        }
        out
    }
}

/// Solves the mean-field limit at `theta` with a cloud of `particles`
/// members over `[0, t]` on a grid of `steps` uniform steps.
///
/// The initial cloud is drawn from the same named stream the simulator uses
/// for initial potentials, so ensembles with equal seeds share their cloud
/// across parameter values (common random numbers for parameter sweeps).
pub fn solve_limit(
    model: &Arc<ModelSpec>,
    theta: &Theta,
    particles: usize,
    t: f64,
    steps: usize,
    seed: u64,
) -> Result<LimitEnsemble> {
    if particles == 0 {
        return Err(Error::InvalidInput(
            "the particle cloud needs at least one member".into(),
        ));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidInput(format!(
            "horizon must be finite and non-negative, got {t}"
        )));
    }
    if t > 0.0 && steps == 0 {
        return Err(Error::InvalidInput(
            "a positive horizon needs at least one grid step".into(),
        ));
    }
    if theta.dim() != model.theta_box().dim() || !model.theta_box().contains(theta) {
        return Err(Error::ParamDomain(format!(
            "theta {:?} lies outside the admissible box",
            theta.as_slice()
        )));
    }

    let mut init_rng = stream(seed, StreamRole::InitialStates);
    let cloud: Vec<f64> = (0..particles)
        .map(|_| model.sample_initial(&mut init_rng))
        .collect();

    if t == 0.0 {
        return Ok(LimitEnsemble {
            model: Arc::clone(model),
            theta: theta.clone(),
            mode: if model.reset().is_none() {
                LimitMode::Deterministic
            } else {
                LimitMode::Stochastic
            },
            times: vec![0.0],
            states: vec![cloud],
        });
    }

    let times: Vec<f64> = (0..=steps).map(|k| t * k as f64 / steps as f64).collect();
    if model.reset().is_none() {
        solve_deterministic(model, theta, cloud, times)
    } else {
        solve_stochastic(model, theta, cloud, times, seed)
    }
}

fn mean_rate(model: &ModelSpec, theta: &[f64], cloud: &[f64]) -> f64 {
    let rate = model.rate();
    let s: f64 = cloud.iter().map(|x| rate.features(*x).dot(theta)).sum();
    s / cloud.len() as f64
}

fn solve_deterministic(
    model: &Arc<ModelSpec>,
    theta: &Theta,
    cloud: Vec<f64>,
    times: Vec<f64>,
) -> Result<LimitEnsemble> {
    let drift = model.drift();
    let m_mark = model.mark_mean();
    let th = theta.as_slice();
    let particles = cloud.len();

    // Coupled RK4 on the full cloud: each stage first computes the
    // population input m * mean f, then the per-particle derivative.
    let stage = |y: &[f64], out: &mut Vec<f64>| {
        let input = m_mark * mean_rate(model, th, y);
        out.clear();
        out.extend(y.iter().map(|x| drift.value(*x) + input));
    };

    let mut states = Vec::with_capacity(times.len());
    states.push(cloud.clone());
    let mut y = cloud;
    let mut k1 = Vec::with_capacity(particles);
    let mut k2 = Vec::with_capacity(particles);
    let mut k3 = Vec::with_capacity(particles);
    let mut k4 = Vec::with_capacity(particles);
    let mut tmp = vec![0.0; particles];
    for w in times.windows(2) {
        let h = w[1] - w[0];
        stage(&y, &mut k1);
        for i in 0..particles {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        stage(&tmp, &mut k2);
        for i in 0..particles {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        stage(&tmp, &mut k3);
        for i in 0..particles {
            tmp[i] = y[i] + h * k3[i];
        }
        stage(&tmp, &mut k4);
        for i in 0..particles {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        states.push(y.clone());
    }

    Ok(LimitEnsemble {
        model: Arc::clone(model),
        theta: theta.clone(),
        mode: LimitMode::Deterministic,
        times,
        states,
    })
}

fn solve_stochastic(
    model: &Arc<ModelSpec>,
    theta: &Theta,
    cloud: Vec<f64>,
    times: Vec<f64>,
    seed: u64,
) -> Result<LimitEnsemble> {
    let drift = model.drift();
    let reset = model.reset();
    let rate = model.rate();
    let th = theta.as_slice();
    let m_mark = model.mark_mean();
    let envelope = model.family_bounds().max_rate;
    let wait = Exp::new(envelope).expect("positive envelope rate");
    let particles = cloud.len();

    let mut rngs: Vec<_> = (0..particles)
        .map(|i| substream(seed, StreamRole::LimitParticle, i as u64))
        .collect();
    // Each particle's next thinning candidate time; the envelope is constant
    // so candidates stream ahead independently of the frozen input.
    let mut next_cand: Vec<f64> = rngs.iter_mut().map(|r| wait.sample(r)).collect();

    let mut states = Vec::with_capacity(times.len());
    states.push(cloud.clone());
    let mut y = cloud;
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        // Population input frozen over the step.
        let input = m_mark * mean_rate(model, th, &y);
        for i in 0..particles {
            let mut x = y[i];
            let mut s = a;
            while next_cand[i] < b {
                let c = next_cand[i];
                x = drift.flow_with_input(x, input, c - s);
                s = c;
                let f = rate.features(x).dot(th);
                let coin: f64 = rngs[i].gen_range(0.0..1.0);
                if coin <= f / envelope {
                    x += reset.jump(x);
                }
                next_cand[i] = c + wait.sample(&mut rngs[i]);
            }
            y[i] = drift.flow_with_input(x, input, b - s);
        }
        states.push(y.clone());
    }

    Ok(LimitEnsemble {
        model: Arc::clone(model),
        theta: theta.clone(),
        mode: LimitMode::Stochastic,
        times,
        states,
    })
}

/// Limiting information matrix: the time integral over the grid (trapezoid
/// rule) of the cloud average of `phi phi^T / f_theta`.
pub fn limiting_fisher(ensemble: &LimitEnsemble) -> Result<FisherMatrix> {
    let model = ensemble.model();
    let theta = ensemble.theta().as_slice();
    let d = theta.len();
    let rate = model.rate();
    let mut acc = DMatrix::zeros(d, d);
    let times = ensemble.times();
    if times.len() == 1 {
        return FisherMatrix::from_symmetric(acc);
    }
    let mut grid_term = |q: usize, weight: f64| {
        let cloud = ensemble.states_at(q);
        let mut g: DMatrix<f64> = DMatrix::zeros(d, d);
        for x in cloud {
            let phi = rate.features(*x);
            let f = phi.dot(theta);
            let p = phi.as_slice();
            for i in 0..d {
                for j in 0..=i {
                    g[(i, j)] += p[i] * p[j] / f;
                }
            }
        }
        for i in 0..d {
            for j in 0..=i {
                let v = g[(i, j)] / cloud.len() as f64;
                acc[(i, j)] += weight * v;
                if i != j {
                    acc[(j, i)] += weight * v;
                }
            }
        }
    };
    for q in 0..times.len() {
        let w = if q == 0 {
            0.5 * (times[1] - times[0])
        } else if q == times.len() - 1 {
            0.5 * (times[q] - times[q - 1])
        } else {
            0.5 * (times[q + 1] - times[q - 1])
        };
        grid_term(q, w);
    }
    FisherMatrix::from_symmetric(acc)
}

/// Identifiability separation between `theta` and the ensemble's parameter
/// `theta_ref`: the time integral of the cloud average of
/// `|f_theta / f_theta_ref - 1|`. Zero iff the two parameters generate
/// statistically indistinguishable spike streams on the ensemble's window.
pub fn identifiability(ensemble: &LimitEnsemble, theta: &Theta) -> Result<f64> {
    let model = ensemble.model();
    if theta.dim() != model.theta_box().dim() || !model.theta_box().contains(theta) {
        return Err(Error::ParamDomain(format!(
            "theta {:?} lies outside the admissible box",
            theta.as_slice()
        )));
    }
    let rate = model.rate();
    let th = theta.as_slice();
    let th_ref = ensemble.theta().as_slice();
    let times = ensemble.times();
    if times.len() == 1 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for q in 0..times.len() {
        let w = if q == 0 {
            0.5 * (times[1] - times[0])
        } else if q == times.len() - 1 {
            0.5 * (times[q] - times[q - 1])
        } else {
            0.5 * (times[q + 1] - times[q - 1])
        };
        let mean = ensemble.cloud_mean(q, |x| {
            let phi = rate.features(x);
            (phi.dot(th) / phi.dot(th_ref) - 1.0).abs()
        });
        acc += w * mean;
    }
    Ok(acc)
}
