//! Monte Carlo experiments probing the limit theorems at desk scale.
//!
//! Each experiment simulates replicated records over a population grid,
//! evaluates the statistic of interest (likelihood remainder, score,
//! standardized estimation error, transport distance, identifiability
//! separation) and assembles an [`ExperimentReport`] holding every raw row
//! plus summary statistics and named verdicts.
//!
//! # Determinism
//!
//! Replicate `r` at grid position `g` always simulates from the seed
//! `derive_seed(seed, g, r)`; the limiting reference ensemble uses the
//! reserved slot `derive_seed(seed, u64::MAX, 0)`. Rows are assembled in
//! grid-major, replicate-minor order. Worker threads therefore only change
//! *who* computes a row, never its value or position, and the rows CSV is
//! byte-identical for any thread count.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::{mle, standardized_error, EstimatorOptions};
use crate::likelihood::{lan_decompose, score};
use crate::limit::{identifiability, limiting_fisher, solve_limit, FisherMatrix};
use crate::model::{ModelSpec, ResetSpec, Theta};
use crate::rng::derive_seed;
use crate::simulator::{simulate, EmpiricalMeasure};
use crate::{Error, Result};

use super::report::{col, column_values, ExperimentReport, Verdict};
use super::stats;
use super::wasserstein::wasserstein1;

/// Reference-ensemble grid resolution when the config leaves `steps` at 0.
const STEPS_PER_UNIT_TIME: f64 = 200.0;

/// The LAN remainder of a √n-regular family shrinks like n^{-1/2}; the
/// endpoint medians must beat this multiple of √(n_first/n_last).
pub const DECAY_ENDPOINT_FACTOR: f64 = 2.4;

/// Relative slack around the √(n_min/n_max) target for the information-gap
/// ratio between the smallest and largest populations.
pub const INFO_GAP_SLACK: f64 = 0.5;

/// Information gaps at or below this relative level are floating-point
/// rounding, not statistical fluctuation; their ratio carries no decay
/// information and is not judged.
const INFO_GAP_FLOOR: f64 = 1e-12;

/// Relative slack around the √(n_min/n_max) target for the error-norm
/// consistency ratio.
pub const CONSISTENCY_SLACK: f64 = 0.4;

/// The score mean must sit within this many standard errors of zero.
pub const SCORE_MEAN_SIGMA: f64 = 4.0;

/// Relative Frobenius tolerance between the score covariance and the
/// limiting information.
pub const SCORE_COV_REL_TOL: f64 = 0.10;

/// Componentwise standard deviations of standardized errors must lie within
/// this distance of 1.
pub const Z_STD_TOL: f64 = 0.15;

/// Absolute Frobenius tolerance between the standardized-error covariance
/// and the identity.
pub const Z_COV_TOL: f64 = 0.15;

/// Maximum tolerated fraction of non-converged fits.
pub const NONCONVERGENCE_MAX: f64 = 0.02;

/// Expected log-log slope of the mean transport distance in the population
/// size, with the tolerated deviation.
pub const SLOPE_TARGET: f64 = -0.5;
pub const SLOPE_TOL: f64 = 0.1;

/// A slope verdict needs at least this many grid points spanning at least
/// this factor; smaller designs report the fit without judging it.
const SLOPE_MIN_POINTS: usize = 4;
const SLOPE_MIN_SPAN: f64 = 16.0;

/// Reference cloud oversampling for the chaos experiment when the config
/// leaves `reference_particles` at 0: the injected O(M^{-1/2}) bias stays an
/// order below the smallest measured distance.
const REFERENCE_OVERSAMPLE: usize = 10;

/// Hard cap on identifiability grid points (the scan is quadratic in them).
const MAX_SCAN_POINTS: usize = 256;

fn default_reference_particles() -> usize {
    20_000
}

fn default_scan_particles() -> usize {
    2_000
}

fn default_grid_per_dim() -> usize {
    5
}

fn default_separation_threshold() -> f64 {
    1e-6
}

/// Configuration of [`lan_experiment`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanConfig {
    /// True parameter the records are simulated under (box interior).
    pub theta_star: Vec<f64>,
    /// Local directions; each must keep `theta_star + h/sqrt(n)` inside the
    /// box for the smallest population in the grid.
    pub h: Vec<Vec<f64>>,
    /// Population sizes, strictly increasing.
    pub n_grid: Vec<usize>,
    /// Simulated records per population size.
    pub replicates: usize,
    /// Observation horizon.
    pub horizon: f64,
    /// Particle count of the limiting reference ensemble.
    #[serde(default = "default_reference_particles")]
    pub reference_particles: usize,
    /// Time steps of the reference ensemble; 0 picks 200 per unit time.
    #[serde(default)]
    pub reference_steps: usize,
}

/// Configuration of [`score_calibration`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    /// True parameter the records are simulated under (box interior).
    pub theta_star: Vec<f64>,
    /// Population size.
    pub n: usize,
    /// Number of simulated records (at least two).
    pub replicates: usize,
    /// Observation horizon.
    pub horizon: f64,
    /// Particle count of the limiting reference ensemble.
    #[serde(default = "default_reference_particles")]
    pub reference_particles: usize,
    /// Time steps of the reference ensemble; 0 picks 200 per unit time.
    #[serde(default)]
    pub reference_steps: usize,
}

/// Configuration of [`normality_experiment`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalityConfig {
    /// True parameter the records are simulated under (box interior).
    pub theta_star: Vec<f64>,
    /// Population sizes, strictly increasing. Gaussian verdicts use the
    /// largest size; smaller sizes feed the consistency ratio.
    pub n_grid: Vec<usize>,
    /// Fitted records per population size (at least two).
    pub replicates: usize,
    /// Observation horizon.
    pub horizon: f64,
    /// Particle count of the limiting reference ensemble.
    #[serde(default = "default_reference_particles")]
    pub reference_particles: usize,
    /// Time steps of the reference ensemble; 0 picks 200 per unit time.
    #[serde(default)]
    pub reference_steps: usize,
}

/// Configuration of [`chaos_rate_experiment`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosConfig {
    /// True parameter the records are simulated under (box interior).
    pub theta_star: Vec<f64>,
    /// Population sizes, strictly increasing.
    pub n_grid: Vec<usize>,
    /// Simulated records per population size.
    pub replicates: usize,
    /// Observation horizon; the transport distance is measured at this time.
    pub horizon: f64,
    /// Reference cloud size; 0 picks ten times the largest population.
    #[serde(default)]
    pub reference_particles: usize,
    /// Time steps of the reference ensemble; 0 picks 200 per unit time.
    #[serde(default)]
    pub reference_steps: usize,
    /// The n^{-1/2} rate is only claimed without a reset jump. Setting this
    /// flag runs other models anyway (against an approximate reference) and
    /// skips the slope verdict.
    #[serde(default)]
    pub exploratory: bool,
}

/// Configuration of [`identifiability_scan`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyConfig {
    /// Grid points per parameter dimension, box endpoints included.
    #[serde(default = "default_grid_per_dim")]
    pub grid_per_dim: usize,
    /// Observation horizon of the separation integral.
    pub horizon: f64,
    /// Particle count of the per-point ensembles.
    #[serde(default = "default_scan_particles")]
    pub particles: usize,
    /// Time steps of the ensembles; 0 picks 200 per unit time.
    #[serde(default)]
    pub steps: usize,
    /// Pairs separated by less than this are flagged near-non-identifiable.
    #[serde(default = "default_separation_threshold")]
    pub threshold: f64,
}

impl LanConfig {
    /// Checks every invariant that does not require running: parameter
    /// interiority, grid shape, and that each direction keeps the local
    /// alternative inside the box at the smallest population size.
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        let d = model.theta_box().dim();
        let theta_star = check_theta_star(model, &self.theta_star)?;
        check_n_grid(&self.n_grid)?;
        check_replicates(self.replicates, 1)?;
        check_horizon(self.horizon)?;
        if self.h.is_empty() {
            return Err(Error::Config("the direction list h must be nonempty".into()));
        }
        let sqrt_n_min = (self.n_grid[0] as f64).sqrt();
        for (k, h) in self.h.iter().enumerate() {
            if h.len() != d || h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!(
                    "direction {k} must have {d} finite components"
                )));
            }
            let local: Vec<f64> = theta_star
                .as_slice()
                .iter()
                .zip(h)
                .map(|(t, hi)| t + hi / sqrt_n_min)
                .collect();
            if !model.theta_box().contains(&Theta(local)) {
                return Err(Error::Config(format!(
                    "direction {k} pushes theta_star + h/sqrt(n) outside the box at n = {}",
                    self.n_grid[0]
                )));
            }
        }
        if self.reference_particles == 0 {
            return Err(Error::Config("reference_particles must be positive".into()));
        }
        Ok(())
    }
}

impl CalibrateConfig {
    /// Checks every invariant that does not require running.
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        check_theta_star(model, &self.theta_star)?;
        if self.n == 0 {
            return Err(Error::Config("the population size must be positive".into()));
        }
        check_replicates(self.replicates, 2)?;
        check_horizon(self.horizon)?;
        if self.reference_particles == 0 {
            return Err(Error::Config("reference_particles must be positive".into()));
        }
        Ok(())
    }
}

impl NormalityConfig {
    /// Checks every invariant that does not require running. (Whether the
    /// limiting information is invertible is only known after solving the
    /// reference ensemble.)
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        check_theta_star(model, &self.theta_star)?;
        check_n_grid(&self.n_grid)?;
        check_replicates(self.replicates, 2)?;
        check_horizon(self.horizon)?;
        if self.reference_particles == 0 {
            return Err(Error::Config("reference_particles must be positive".into()));
        }
        Ok(())
    }
}

impl ChaosConfig {
    /// The reference cloud size after resolving the 0-means-auto default.
    pub fn resolved_reference_particles(&self) -> usize {
        if self.reference_particles == 0 {
            REFERENCE_OVERSAMPLE * self.n_grid.last().copied().unwrap_or(0)
        } else {
            self.reference_particles
        }
    }

    /// Checks every invariant that does not require running, including the
    /// no-reset gate for the rate claim.
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        check_theta_star(model, &self.theta_star)?;
        check_n_grid(&self.n_grid)?;
        check_replicates(self.replicates, 1)?;
        check_horizon(self.horizon)?;
        if !self.exploratory && !matches!(model.reset(), ResetSpec::None) {
            return Err(Error::Config(
                "the n^{-1/2} transport rate is only claimed without a reset jump; \
                 set exploratory to probe this model anyway"
                    .into(),
            ));
        }
        let n_max = *self.n_grid.last().expect("grid validated nonempty");
        let reference = self.resolved_reference_particles();
        if reference < n_max {
            return Err(Error::Config(format!(
                "the reference cloud ({reference}) must dominate the largest \
                 population ({n_max})"
            )));
        }
        Ok(())
    }
}

impl IdentifyConfig {
    /// Checks every invariant that does not require running, including the
    /// quadratic-cost grid cap.
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        let d = model.theta_box().dim();
        check_horizon(self.horizon)?;
        if self.grid_per_dim == 0 {
            return Err(Error::Config("grid_per_dim must be at least 1".into()));
        }
        if self.particles == 0 {
            return Err(Error::Config("particles must be at least 1".into()));
        }
        if !self.threshold.is_finite() || self.threshold < 0.0 {
            return Err(Error::Config(format!(
                "threshold must be finite and non-negative, got {}",
                self.threshold
            )));
        }
        self.grid_per_dim
            .checked_pow(d as u32)
            .filter(|p| *p <= MAX_SCAN_POINTS)
            .ok_or_else(|| {
                Error::Config(format!(
                    "a {}^{d} grid exceeds the scan cap of {MAX_SCAN_POINTS} points",
                    self.grid_per_dim
                ))
            })?;
        Ok(())
    }
}

fn resolve_steps(requested: usize, horizon: f64) -> usize {
    if requested > 0 {
        requested
    } else {
        ((horizon * STEPS_PER_UNIT_TIME).ceil() as usize).max(1)
    }
}

fn check_horizon(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Config(format!(
            "horizon must be finite and non-negative, got {t}"
        )));
    }
    Ok(())
}

fn check_replicates(r: usize, least: usize) -> Result<()> {
    if r < least {
        return Err(Error::Config(format!(
            "the experiment needs at least {least} replicate(s), got {r}"
        )));
    }
    Ok(())
}

fn check_n_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("n_grid must be nonempty".into()));
    }
    if grid[0] == 0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "n_grid must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Checks that the configured true parameter lies strictly inside the box
/// (simulation and local expansions both need interior points).
pub(crate) fn check_theta_star(model: &ModelSpec, theta: &[f64]) -> Result<Theta> {
    let candidate = Theta(theta.to_vec());
    if candidate.dim() != model.theta_box().dim()
        || !model.theta_box().contains_interior(&candidate)
    {
        return Err(Error::Config(format!(
            "theta_star not interior: {theta:?} must lie strictly inside the parameter box"
        )));
    }
    Ok(candidate)
}

pub(crate) fn numbered(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|i| format!("{prefix}_{i}")).collect()
}

pub(crate) fn names(fixed: &[&str]) -> Vec<String> {
    fixed.iter().map(|s| s.to_string()).collect()
}

/// Frobenius distance between two `d x d` matrices given entrywise.
fn frobenius_distance(
    d: usize,
    a: impl Fn(usize, usize) -> f64,
    b: impl Fn(usize, usize) -> f64,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            let diff = a(i, j) - b(i, j);
            acc += diff * diff;
        }
    }
    acc.sqrt()
}

/// Frobenius gap to `reference`, relative to the reference norm; absolute
/// when the reference vanishes (a zero target leaves nothing to scale by).
fn relative_frobenius_gap(a: impl Fn(usize, usize) -> f64, reference: &FisherMatrix) -> f64 {
    let gap = frobenius_distance(reference.dim(), a, |i, j| reference.entry(i, j));
    let norm = reference.frobenius();
    if norm > 0.0 {
        gap / norm
    } else {
        gap
    }
}

/// `num / den` with the exact-zero degeneracies resolved: both zero is a
/// perfect 0 ratio, a vanishing denominator alone is infinite.
fn guarded_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn median_or_nan(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        stats::median(xs)
    }
}

fn l2<I: Iterator<Item = f64>>(xs: I) -> f64 {
    xs.map(|v| v * v).sum::<f64>().sqrt()
}

/// Extracts the `d` columns starting at `first` as replicate vectors.
fn matrix_column_block(rows: &[Vec<f64>], first: usize, d: usize) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r[first..first + d].to_vec()).collect()
}

/// Solves the limiting reference ensemble and its information matrix.
fn reference_fisher(
    model: &Arc<ModelSpec>,
    theta_star: &Theta,
    particles: usize,
    steps: usize,
    horizon: f64,
    seed: u64,
) -> Result<FisherMatrix> {
    let ensemble = solve_limit(
        model,
        theta_star,
        particles,
        horizon,
        steps,
        derive_seed(seed, u64::MAX, 0),
    )?;
    limiting_fisher(&ensemble)
}

/// Simulates replicated records, expands the log-likelihood ratio in each
/// configured direction and measures how fast the non-quadratic remainder
/// dies out as the population grows.
///
/// Row schema: `n, h_index, replicate, events, log_likelihood_ratio,
/// remainder, info_gap, delta_0..`. The information gap is the relative
/// Frobenius distance between the observed per-neuron information and the
/// limiting information of the reference ensemble; it and `delta` are
/// direction-independent, so they repeat across the `h_index` rows of one
/// record.
///
/// Verdicts (only when the grid has two or more sizes):
/// - `remainder-median-decreasing`: per-direction medians of |remainder|
///   fall strictly along the grid.
/// - `remainder-endpoint-decay`: the last median beats
///   `2.4 sqrt(n_first/n_last)` times the first.
/// - `info-gap-ratio`: the mean information gap shrinks by
///   `sqrt(n_first/n_last)`, within ±50%.
pub fn lan_experiment(
    model: &Arc<ModelSpec>,
    config: &LanConfig,
    seed: u64,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    config.validate(model)?;
    let d = model.theta_box().dim();
    let theta_star = Theta(config.theta_star.clone());

    let steps = resolve_steps(config.reference_steps, config.horizon);
    let fisher = reference_fisher(
        model,
        &theta_star,
        config.reference_particles,
        steps,
        config.horizon,
        seed,
    )?;

    let jobs: Vec<(usize, usize)> = (0..config.n_grid.len())
        .flat_map(|gi| (0..config.replicates).map(move |rep| (gi, rep)))
        .collect();
    let blocks = jobs
        .into_par_iter()
        .map(|(gi, rep)| -> Result<Vec<Vec<f64>>> {
            let n = config.n_grid[gi];
            let record = simulate(
                model,
                &theta_star,
                n,
                config.horizon,
                derive_seed(seed, gi as u64, rep as u64),
            )?;
            let events = record.events().len() as f64;
            let mut shared: Option<(f64, DVector<f64>)> = None;
            let mut rows = Vec::with_capacity(config.h.len());
            for (hi, h) in config.h.iter().enumerate() {
                let terms = lan_decompose(&record, &theta_star, h)?;
                if shared.is_none() {
                    let gap = relative_frobenius_gap(|i, j| terms.info.entry(i, j), &fisher);
                    shared = Some((gap, terms.delta.clone()));
                }
                let (gap, delta) = shared.as_ref().expect("set on the first direction");
                let mut row = vec![
                    n as f64,
                    hi as f64,
                    rep as f64,
                    events,
                    terms.log_likelihood_ratio,
                    terms.remainder,
                    *gap,
                ];
                row.extend(delta.iter());
                rows.push(row);
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = blocks.into_iter().flatten().collect();

    let mut columns = names(&[
        "n",
        "h_index",
        "replicate",
        "events",
        "log_likelihood_ratio",
        "remainder",
        "info_gap",
    ]);
    columns.extend(numbered("delta", d));

    let c_n = col(&columns, "n");
    let c_h = col(&columns, "h_index");
    let c_rem = col(&columns, "remainder");
    let c_delta = col(&columns, "delta_0");

    let median_abs_remainder = |gi: usize, hi: usize| -> f64 {
        let n = config.n_grid[gi] as f64;
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r[c_n] == n && r[c_h] == hi as f64)
            .map(|r| r[c_rem].abs())
            .collect();
        median_or_nan(&vals)
    };
    let mean_gap = |gi: usize| -> f64 {
        stats::mean(&column_values(&columns, &rows, "info_gap", |r| {
            r[c_n] == config.n_grid[gi] as f64 && r[c_h] == 0.0
        }))
    };

    let per_n: Vec<serde_json::Value> = (0..config.n_grid.len())
        .map(|gi| {
            let n = config.n_grid[gi] as f64;
            let medians: Vec<f64> = (0..config.h.len())
                .map(|hi| median_abs_remainder(gi, hi))
                .collect();
            let deltas: Vec<Vec<f64>> = rows
                .iter()
                .filter(|r| r[c_n] == n && r[c_h] == 0.0)
                .map(|r| r[c_delta..c_delta + d].to_vec())
                .collect();
            let delta_cov_gap = if deltas.len() >= 2 {
                let refs: Vec<&[f64]> = deltas.iter().map(|v| v.as_slice()).collect();
                let cov = stats::sample_cov(&refs);
                Some(relative_frobenius_gap(|i, j| cov[i * d + j], &fisher))
            } else {
                None
            };
            serde_json::json!({
                "n": config.n_grid[gi],
                "median_abs_remainder": medians,
                "mean_info_gap": mean_gap(gi),
                "delta_covariance_gap": delta_cov_gap,
            })
        })
        .collect();

    let mut verdicts = Vec::new();
    if config.n_grid.len() >= 2 {
        let last = config.n_grid.len() - 1;
        let mut worst_adjacent = f64::NEG_INFINITY;
        let mut worst_endpoint = f64::NEG_INFINITY;
        for hi in 0..config.h.len() {
            let medians: Vec<f64> = (0..config.n_grid.len())
                .map(|gi| median_abs_remainder(gi, hi))
                .collect();
            for w in medians.windows(2) {
                worst_adjacent = worst_adjacent.max(guarded_ratio(w[1], w[0]));
            }
            worst_endpoint = worst_endpoint.max(guarded_ratio(medians[last], medians[0]));
        }
        verdicts.push(Verdict::new(
            "remainder-median-decreasing",
            worst_adjacent < 1.0,
            worst_adjacent,
            "median |remainder| ratio < 1 for every adjacent population pair",
        ));
        let decay = DECAY_ENDPOINT_FACTOR
            * (config.n_grid[0] as f64 / config.n_grid[last] as f64).sqrt();
        verdicts.push(Verdict::new(
            "remainder-endpoint-decay",
            worst_endpoint < decay,
            worst_endpoint,
            format!("median |remainder| endpoint ratio < {decay}"),
        ));
        let gap_first = mean_gap(0);
        let gap_last = mean_gap(last);
        let ratio = guarded_ratio(gap_last, gap_first);
        let target = (config.n_grid[0] as f64 / config.n_grid[last] as f64).sqrt();
        let (lo, hi) = ((1.0 - INFO_GAP_SLACK) * target, (1.0 + INFO_GAP_SLACK) * target);
        // A family whose observed information matches the limit to rounding
        // has no gap left to shrink; that degenerate perfection passes.
        let degenerate = gap_first <= INFO_GAP_FLOOR && gap_last <= INFO_GAP_FLOOR;
        let passed = degenerate || (ratio >= lo && ratio <= hi);
        verdicts.push(Verdict::new(
            "info-gap-ratio",
            passed,
            ratio,
            format!("mean info gap ratio within [{lo}, {hi}]"),
        ));
    }

    Ok(ExperimentReport {
        experiment: "lan".into(),
        config: serde_json::to_value(config)?,
        columns,
        rows,
        summary: serde_json::json!({
            "per_n": per_n,
            "limiting_fisher": fisher.to_rows(),
            "reference": {"particles": config.reference_particles, "steps": steps},
        }),
        verdicts,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Simulates replicated records at one population size and checks that the
/// normalized score is centered, has the limiting information as its
/// covariance, and is componentwise Gaussian.
///
/// Row schema: `n, replicate, events, delta_0.., fisher_i_j..` (the upper
/// triangle of the limiting information repeats on every row so the verdict
/// thresholds can be recomputed from the CSV alone).
pub fn score_calibration(
    model: &Arc<ModelSpec>,
    config: &CalibrateConfig,
    seed: u64,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    config.validate(model)?;
    let d = model.theta_box().dim();
    let theta_star = Theta(config.theta_star.clone());

    let steps = resolve_steps(config.reference_steps, config.horizon);
    let fisher = reference_fisher(
        model,
        &theta_star,
        config.reference_particles,
        steps,
        config.horizon,
        seed,
    )?;

    let sqrt_n = (config.n as f64).sqrt();
    let rows = (0..config.replicates)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>> {
            let record = simulate(
                model,
                &theta_star,
                config.n,
                config.horizon,
                derive_seed(seed, 0, rep as u64),
            )?;
            let delta = score(&record, &theta_star)? / sqrt_n;
            let mut row = vec![
                config.n as f64,
                rep as f64,
                record.events().len() as f64,
            ];
            row.extend(delta.iter());
            for i in 0..d {
                for j in i..d {
                    row.push(fisher.entry(i, j));
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let mut columns = names(&["n", "replicate", "events"]);
    columns.extend(numbered("delta", d));
    for i in 0..d {
        for j in i..d {
            columns.push(format!("fisher_{i}_{j}"));
        }
    }

    let c_delta = col(&columns, "delta_0");
    let deltas = matrix_column_block(&rows, c_delta, d);
    let r = rows.len() as f64;
    let means: Vec<f64> = (0..d)
        .map(|k| stats::mean(&deltas.iter().map(|v| v[k]).collect::<Vec<_>>()))
        .collect();
    let stds: Vec<f64> = (0..d)
        .map(|k| stats::sample_std(&deltas.iter().map(|v| v[k]).collect::<Vec<_>>()))
        .collect();
    let refs: Vec<&[f64]> = deltas.iter().map(|v| v.as_slice()).collect();
    let cov = stats::sample_cov(&refs);
    let cov_gap = relative_frobenius_gap(|i, j| cov[i * d + j], &fisher);

    let ks: Vec<f64> = (0..d)
        .map(|k| {
            let xs: Vec<f64> = deltas.iter().map(|v| v[k]).collect();
            let variance = fisher.entry(k, k);
            if variance > 0.0 {
                stats::ks_statistic(&xs, stats::centered_normal_cdf(variance.sqrt()))
            } else if xs.iter().all(|v| *v == 0.0) {
                // Degenerate component: a point mass at zero matches the
                // zero-variance limit exactly.
                0.0
            } else {
                1.0
            }
        })
        .collect();

    let mean_norm = l2(means.iter().copied());
    let max_std = stds.iter().cloned().fold(0.0_f64, f64::max);
    let mean_tol = SCORE_MEAN_SIGMA * max_std / r.sqrt();
    let ks_max = ks.iter().cloned().fold(0.0_f64, f64::max);
    let ks_crit = stats::KS_CRIT_1PCT / r.sqrt();

    let verdicts = vec![
        Verdict::new(
            "score-mean-centered",
            mean_norm <= mean_tol,
            mean_norm,
            format!("|mean delta| <= {mean_tol} (4 standard errors)"),
        ),
        Verdict::new(
            "score-covariance",
            cov_gap <= SCORE_COV_REL_TOL,
            cov_gap,
            format!("relative Frobenius gap to the limiting information <= {SCORE_COV_REL_TOL}"),
        ),
        Verdict::new(
            "score-ks-normal",
            ks_max < ks_crit,
            ks_max,
            format!("componentwise KS statistic < {ks_crit} (1% critical value)"),
        ),
    ];

    Ok(ExperimentReport {
        experiment: "calibrate".into(),
        config: serde_json::to_value(config)?,
        columns,
        rows,
        summary: serde_json::json!({
            "delta_mean": means,
            "delta_std": stds,
            "delta_covariance": (0..d).map(|i| (0..d).map(|j| cov[i * d + j]).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "ks_per_component": ks,
            "limiting_fisher": fisher.to_rows(),
            "reference": {"particles": config.reference_particles, "steps": steps},
        }),
        verdicts,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Fits the maximum-likelihood estimator on replicated records and checks
/// that the standardized errors `sqrt(n) I^{1/2} (theta_hat - theta_star)`
/// are componentwise standard normal at the largest population size, with
/// the error norm shrinking like n^{-1/2} along the grid.
///
/// Row schema: `n, replicate, events, converged, at_boundary, iterations,
/// theta_hat_0.., z_0.., error_norm`. Gaussian verdicts use converged rows
/// at the largest size only; non-converged fits are counted by the
/// `nonconvergence` verdict and excluded elsewhere.
pub fn normality_experiment(
    model: &Arc<ModelSpec>,
    config: &NormalityConfig,
    options: &EstimatorOptions,
    seed: u64,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    config.validate(model)?;
    let d = model.theta_box().dim();
    let theta_star = Theta(config.theta_star.clone());

    let steps = resolve_steps(config.reference_steps, config.horizon);
    let fisher = reference_fisher(
        model,
        &theta_star,
        config.reference_particles,
        steps,
        config.horizon,
        seed,
    )?;
    if fisher.min_eigenvalue() <= 0.0 {
        return Err(Error::Numerics(
            "the limiting information at theta_star is singular; \
             standardized errors are undefined"
                .into(),
        ));
    }

    let jobs: Vec<(usize, usize)> = (0..config.n_grid.len())
        .flat_map(|gi| (0..config.replicates).map(move |rep| (gi, rep)))
        .collect();
    let rows = jobs
        .into_par_iter()
        .map(|(gi, rep)| -> Result<Vec<f64>> {
            let n = config.n_grid[gi];
            let record = simulate(
                model,
                &theta_star,
                n,
                config.horizon,
                derive_seed(seed, gi as u64, rep as u64),
            )?;
            let fit = mle(&record, options)?;
            let z = standardized_error(&fit, &theta_star, &fisher, n)?;
            let error_norm = l2(fit
                .theta_hat
                .as_slice()
                .iter()
                .zip(theta_star.as_slice())
                .map(|(a, b)| a - b));
            let mut row = vec![
                n as f64,
                rep as f64,
                record.events().len() as f64,
                f64::from(u8::from(fit.converged)),
                f64::from(u8::from(fit.at_boundary)),
                fit.iterations as f64,
            ];
            row.extend(fit.theta_hat.as_slice());
            row.extend(z.iter());
            row.push(error_norm);
            Ok(row)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let mut columns = names(&[
        "n",
        "replicate",
        "events",
        "converged",
        "at_boundary",
        "iterations",
    ]);
    columns.extend(numbered("theta_hat", d));
    columns.extend(numbered("z", d));
    columns.push("error_norm".into());

    let c_n = col(&columns, "n");
    let c_conv = col(&columns, "converged");
    let c_z = col(&columns, "z_0");

    let n_max = *config.n_grid.last().expect("grid validated nonempty") as f64;
    let top_rows: Vec<&Vec<f64>> = rows.iter().filter(|r| r[c_n] == n_max).collect();
    let top_total = top_rows.len() as f64;
    let top_converged: Vec<&Vec<f64>> =
        top_rows.iter().copied().filter(|r| r[c_conv] == 1.0).collect();
    let nonconvergence = (top_total - top_converged.len() as f64) / top_total;

    let (z_std, z_cov_gap, ks, ks_crit) = if top_converged.len() >= 2 {
        let z: Vec<Vec<f64>> = top_converged
            .iter()
            .map(|r| r[c_z..c_z + d].to_vec())
            .collect();
        let stds: Vec<f64> = (0..d)
            .map(|k| stats::sample_std(&z.iter().map(|v| v[k]).collect::<Vec<_>>()))
            .collect();
        let refs: Vec<&[f64]> = z.iter().map(|v| v.as_slice()).collect();
        let cov = stats::sample_cov(&refs);
        let gap = frobenius_distance(
            d,
            |i, j| cov[i * d + j],
            |i, j| f64::from(u8::from(i == j)),
        );
        let ks: Vec<f64> = (0..d)
            .map(|k| {
                let xs: Vec<f64> = z.iter().map(|v| v[k]).collect();
                stats::ks_statistic(&xs, stats::centered_normal_cdf(1.0))
            })
            .collect();
        let crit = stats::KS_CRIT_1PCT / (top_converged.len() as f64).sqrt();
        (Some(stds), gap, ks, crit)
    } else {
        // Not enough converged fits to judge; the Gaussian verdicts fail
        // below via NaN comparisons, and the nonconvergence verdict explains
        // why.
        (None, f64::NAN, vec![f64::NAN; d], f64::NAN)
    };

    let std_dev_from_one = z_std
        .as_ref()
        .map(|s| s.iter().map(|v| (v - 1.0).abs()).fold(0.0_f64, f64::max))
        .unwrap_or(f64::NAN);
    let ks_max = ks.iter().cloned().fold(f64::NAN, f64::max);

    let mut verdicts = vec![
        Verdict::new(
            "z-std",
            std_dev_from_one <= Z_STD_TOL,
            std_dev_from_one,
            format!("componentwise |std - 1| <= {Z_STD_TOL}"),
        ),
        Verdict::new(
            "z-covariance",
            z_cov_gap <= Z_COV_TOL,
            z_cov_gap,
            format!("Frobenius gap to the identity <= {Z_COV_TOL}"),
        ),
        Verdict::new(
            "z-ks-normal",
            ks_max < ks_crit,
            ks_max,
            format!("componentwise KS statistic < {ks_crit} (1% critical value)"),
        ),
        Verdict::new(
            "nonconvergence",
            nonconvergence <= NONCONVERGENCE_MAX,
            nonconvergence,
            format!("non-converged fraction <= {NONCONVERGENCE_MAX}"),
        ),
    ];

    let per_n: Vec<serde_json::Value> = config
        .n_grid
        .iter()
        .map(|&n| {
            let sel: Vec<&Vec<f64>> = rows.iter().filter(|r| r[c_n] == n as f64).collect();
            let conv: Vec<f64> = sel
                .iter()
                .filter(|r| r[c_conv] == 1.0)
                .map(|r| r[columns.len() - 1])
                .collect();
            let iters: Vec<f64> = sel.iter().map(|r| r[col(&columns, "iterations")]).collect();
            serde_json::json!({
                "n": n,
                "replicates": sel.len(),
                "nonconvergence_rate": 1.0 - conv.len() as f64 / sel.len() as f64,
                "median_error_norm": median_or_nan(&conv),
                "mean_iterations": stats::mean(&iters),
            })
        })
        .collect();

    if config.n_grid.len() >= 2 {
        let err_at = |n: usize| -> f64 {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r[c_n] == n as f64 && r[c_conv] == 1.0)
                .map(|r| r[columns.len() - 1])
                .collect();
            median_or_nan(&vals)
        };
        let first = config.n_grid[0];
        let last = *config.n_grid.last().expect("nonempty");
        let ratio = guarded_ratio(err_at(last), err_at(first));
        let target = (first as f64 / last as f64).sqrt();
        let (lo, hi) = (
            (1.0 - CONSISTENCY_SLACK) * target,
            (1.0 + CONSISTENCY_SLACK) * target,
        );
        verdicts.push(Verdict::new(
            "consistency",
            ratio >= lo && ratio <= hi,
            ratio,
            format!("median error-norm ratio within [{lo}, {hi}]"),
        ));
    }

    Ok(ExperimentReport {
        experiment: "normality".into(),
        config: serde_json::to_value(config)?,
        columns,
        rows,
        summary: serde_json::json!({
            "per_n": per_n,
            "z_std": z_std,
            "ks_per_component": ks,
            "limiting_fisher": fisher.to_rows(),
            "reference": {"particles": config.reference_particles, "steps": steps},
        }),
        verdicts,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Measures the transport distance between the finite-population empirical
/// measure at the horizon and a large limiting reference cloud, then fits
/// the decay rate of its mean in the population size.
///
/// Row schema: `n, replicate, events, w1`.
///
/// The n^{-1/2} verdict only applies to models without a reset jump (the
/// rate is not claimed otherwise) and to grids with at least four sizes
/// spanning a factor of sixteen; exploratory runs report the rows and
/// summary without judging them.
pub fn chaos_rate_experiment(
    model: &Arc<ModelSpec>,
    config: &ChaosConfig,
    seed: u64,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    config.validate(model)?;
    let theta_star = Theta(config.theta_star.clone());
    let n_max = *config.n_grid.last().expect("grid validated nonempty");
    let reference_particles = config.resolved_reference_particles();

    let steps = resolve_steps(config.reference_steps, config.horizon);
    let reference = solve_limit(
        model,
        &theta_star,
        reference_particles,
        config.horizon,
        steps,
        derive_seed(seed, u64::MAX, 0),
    )?;
    let reference_measure = EmpiricalMeasure::new(reference.final_states().to_vec())?;

    let jobs: Vec<(usize, usize)> = (0..config.n_grid.len())
        .flat_map(|gi| (0..config.replicates).map(move |rep| (gi, rep)))
        .collect();
    let rows = jobs
        .into_par_iter()
        .map(|(gi, rep)| -> Result<Vec<f64>> {
            let n = config.n_grid[gi];
            let record = simulate(
                model,
                &theta_star,
                n,
                config.horizon,
                derive_seed(seed, gi as u64, rep as u64),
            )?;
            let empirical = record.empirical_measure(config.horizon)?;
            let w1 = wasserstein1(&empirical, &reference_measure);
            Ok(vec![
                n as f64,
                rep as f64,
                record.events().len() as f64,
                w1,
            ])
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let columns = names(&["n", "replicate", "events", "w1"]);
    let c_n = col(&columns, "n");

    let mean_w1: Vec<f64> = config
        .n_grid
        .iter()
        .map(|&n| {
            stats::mean(&column_values(&columns, &rows, "w1", |r| {
                r[c_n] == n as f64
            }))
        })
        .collect();
    let median_w1: Vec<f64> = config
        .n_grid
        .iter()
        .map(|&n| {
            median_or_nan(&column_values(&columns, &rows, "w1", |r| {
                r[c_n] == n as f64
            }))
        })
        .collect();

    let span = n_max as f64 / config.n_grid[0] as f64;
    let fit_slope = config.n_grid.len() >= SLOPE_MIN_POINTS
        && span >= SLOPE_MIN_SPAN
        && mean_w1.iter().all(|v| *v > 0.0);
    let slope = if fit_slope {
        let ns: Vec<f64> = config.n_grid.iter().map(|&n| n as f64).collect();
        Some(stats::log_log_slope(&ns, &mean_w1))
    } else {
        None
    };

    let mut verdicts = Vec::new();
    if let (Some(s), false) = (slope, config.exploratory) {
        verdicts.push(Verdict::new(
            "w1-slope",
            (s - SLOPE_TARGET).abs() <= SLOPE_TOL,
            s,
            format!(
                "log-log slope of mean W1 within [{}, {}]",
                SLOPE_TARGET - SLOPE_TOL,
                SLOPE_TARGET + SLOPE_TOL
            ),
        ));
    }

    let per_n: Vec<serde_json::Value> = config
        .n_grid
        .iter()
        .enumerate()
        .map(|(gi, &n)| {
            serde_json::json!({
                "n": n,
                "mean_w1": mean_w1[gi],
                "median_w1": median_w1[gi],
            })
        })
        .collect();

    Ok(ExperimentReport {
        experiment: "chaos".into(),
        config: serde_json::to_value(config)?,
        columns,
        rows,
        summary: serde_json::json!({
            "per_n": per_n,
            "slope": slope,
            "reference": {
                "particles": reference_particles,
                "steps": steps,
                "approximate": reference.approximate(),
            },
        }),
        verdicts,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Scans a parameter grid over the box and measures, for every ordered pair,
/// how far the pair is from being statistically indistinguishable, together
/// with the smallest eigenvalue of the limiting information at each point.
///
/// Row schema: `grid_i, grid_j, theta_i_0.., theta_j_0.., separation,
/// fisher_min_eigenvalue` (the eigenvalue belongs to the `grid_j` point).
/// All per-point ensembles share one seed, so separations compare dynamics
/// under common random numbers rather than sampling noise.
pub fn identifiability_scan(
    model: &Arc<ModelSpec>,
    config: &IdentifyConfig,
    seed: u64,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    config.validate(model)?;
    let bx = model.theta_box();
    let d = bx.dim();
    let point_count = config.grid_per_dim.pow(d as u32);

    let axes: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let (lo, hi) = (bx.lower()[k], bx.upper()[k]);
            if config.grid_per_dim == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..config.grid_per_dim)
                    .map(|i| lo + (hi - lo) * i as f64 / (config.grid_per_dim - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut points: Vec<Vec<f64>> = vec![Vec::with_capacity(d)];
    for axis in &axes {
        points = points
            .iter()
            .flat_map(|p| {
                axis.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    debug_assert_eq!(points.len(), point_count);

    let steps = resolve_steps(config.steps, config.horizon);
    // One shared seed: every point's cloud starts from the same draws, so
    // pair separations reflect the dynamics, not independent sampling noise.
    let ensemble_seed = derive_seed(seed, u64::MAX, 0);
    let ensembles = points
        .par_iter()
        .map(|p| {
            let theta = Theta(p.clone());
            let ensemble = solve_limit(
                model,
                &theta,
                config.particles,
                config.horizon,
                steps,
                ensemble_seed,
            )?;
            let min_eig = limiting_fisher(&ensemble)?.min_eigenvalue();
            Ok((ensemble, min_eig))
        })
        .collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|i| (0..points.len()).map(move |j| (i, j)))
        .collect();
    let rows = pairs
        .into_par_iter()
        .map(|(i, j)| -> Result<Vec<f64>> {
            let separation = identifiability(&ensembles[j].0, &Theta(points[i].clone()))?;
            let mut row = vec![i as f64, j as f64];
            row.extend(&points[i]);
            row.extend(&points[j]);
            row.push(separation);
            row.push(ensembles[j].1);
            Ok(row)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let mut columns = names(&["grid_i", "grid_j"]);
    columns.extend(numbered("theta_i", d));
    columns.extend(numbered("theta_j", d));
    columns.push("separation".into());
    columns.push("fisher_min_eigenvalue".into());

    let c_i = col(&columns, "grid_i");
    let c_j = col(&columns, "grid_j");
    let c_sep = col(&columns, "separation");

    let min_separation = rows
        .iter()
        .filter(|r| r[c_i] != r[c_j])
        .map(|r| r[c_sep])
        .fold(f64::INFINITY, f64::min);
    let flagged: Vec<serde_json::Value> = rows
        .iter()
        .filter(|r| r[c_i] != r[c_j] && r[c_sep] <= config.threshold)
        .map(|r| {
            serde_json::json!({
                "i": r[c_i] as usize,
                "j": r[c_j] as usize,
                "separation": r[c_sep],
            })
        })
        .collect();
    let min_eigenvalue = ensembles
        .iter()
        .map(|(_, e)| *e)
        .fold(f64::INFINITY, f64::min);

    let verdicts = vec![
        Verdict::new(
            "identifiable-separation",
            min_separation > config.threshold,
            min_separation,
            format!("every off-diagonal separation > {}", config.threshold),
        ),
        Verdict::new(
            "fisher-positive-definite",
            min_eigenvalue > 0.0,
            min_eigenvalue,
            "smallest information eigenvalue over the grid > 0",
        ),
    ];

    Ok(ExperimentReport {
        experiment: "identify".into(),
        config: serde_json::to_value(config)?,
        columns,
        rows,
        summary: serde_json::json!({
            "points": points.iter().enumerate().map(|(idx, p)| {
                serde_json::json!({"index": idx, "theta": p})
            }).collect::<Vec<_>>(),
            "flagged_pairs": flagged,
            "min_separation": min_separation,
            "min_fisher_eigenvalue": min_eigenvalue,
            "particles": config.particles,
            "steps": steps,
            "threshold": config.threshold,
        }),
        verdicts,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    })
}
