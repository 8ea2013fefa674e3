//! Acceptance gate: one test per criterion, each printing a single
//! pass/fail line (run with `--nocapture` to see the lines for passing
//! tests). Tolerances, grids and runtime budgets are pinned here.

use std::sync::Arc;
use std::time::Instant;

use approx::assert_relative_eq;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use neurolan::analysis::stats::{mean, sample_std};
use neurolan::analysis::{
    chaos_rate_experiment, lan_experiment, normality_experiment, score_calibration,
    CalibrateConfig, ChaosConfig, ExperimentReport, LanConfig, NormalityConfig, Verdict,
};
use neurolan::estimator::{mle, EstimatorOptions};
use neurolan::likelihood::{hessian, lan_decompose, log_likelihood_ratio, observed_info, score};
use neurolan::model::{
    DriftSpec, ModelSpec, RateFamily, ResetSpec, ScalarLaw, Theta, ThetaBox,
};
use neurolan::rng::derive_seed;
use neurolan::simulator::simulate;

/// Closed-form comparisons (criterion 1).
const CLOSED_FORM_TOL: f64 = 1e-9;
/// Score vs finite difference of the log-likelihood ratio (criterion 2).
const SCORE_FD_TOL: f64 = 1e-6;
/// Hessian vs finite difference of the score (criterion 2).
const HESSIAN_FD_TOL: f64 = 1e-5;
/// Martingale band in Monte Carlo standard errors (criterion 3).
const MARTINGALE_SIGMA: f64 = 4.0;

fn line(number: u32, name: &str, passed: bool, detail: &str, elapsed: f64, budget: f64) {
    println!(
        "criterion {number:02} {name}: {} ({detail}; {elapsed:.1}s of {budget:.0}s budget)",
        if passed { "pass" } else { "FAIL" }
    );
}

fn budget(number: u32, elapsed: f64, budget: f64) {
    assert!(
        elapsed < budget,
        "criterion {number:02} exceeded its {budget:.0}s runtime budget: {elapsed:.1}s"
    );
}

fn verdict<'a>(report: &'a ExperimentReport, id: &str) -> &'a Verdict {
    report
        .verdicts
        .iter()
        .find(|v| v.criterion == id)
        .unwrap_or_else(|| panic!("missing verdict {id}"))
}

/// Constant rate, no drift, no reset, Dirac marks: the population spikes as
/// one Poisson process of rate `n * theta`, so every inference quantity has
/// a closed form in the event count.
fn poisson_model() -> Arc<ModelSpec> {
    ModelSpec::new(
        DriftSpec::Zero,
        ResetSpec::None,
        ScalarLaw::Dirac { value: 0.2 },
        ScalarLaw::Uniform { min: 0.0, max: 1.0 },
        RateFamily::Constant,
        ThetaBox::new(vec![0.2], vec![3.0]).unwrap(),
    )
    .unwrap()
}

/// Two-parameter sigmoid family with leaky-integrate drift and reset. The
/// sharp sigmoid keeps the two features well separated (limiting information
/// eigenvalues 0.20 and 2.3 at `theta_star = [0.4, 0.3]`, horizon 1), and
/// the box boundary sits more than four estimator standard deviations away
/// from `theta_star` at every population size used below.
fn sigmoid_model() -> Arc<ModelSpec> {
    ModelSpec::new(
        DriftSpec::Linear {
            decay: 1.0,
            input: 0.3,
        },
        ResetSpec::ToZero { max_abs: 100.0 },
        ScalarLaw::Uniform { min: 0.0, max: 0.5 },
        ScalarLaw::Uniform { min: 0.0, max: 1.0 },
        RateFamily::AffineSigmoid {
            center: 0.4,
            scale: 0.1,
        },
        ThetaBox::new(vec![0.05, 0.02], vec![1.0, 1.0]).unwrap(),
    )
    .unwrap()
}

/// Constant rate without a reset jump: the setting in which the n^{-1/2}
/// convergence rate of the empirical measure is claimed.
fn no_reset_model() -> Arc<ModelSpec> {
    ModelSpec::new(
        DriftSpec::Zero,
        ResetSpec::None,
        ScalarLaw::Uniform { min: -0.3, max: 0.3 },
        ScalarLaw::Uniform { min: 0.0, max: 1.0 },
        RateFamily::Constant,
        ThetaBox::new(vec![0.5], vec![2.0]).unwrap(),
    )
    .unwrap()
}

#[test]
fn criterion_01_poisson_closed_forms() {
    let clock = Instant::now();
    let model = poisson_model();
    let theta_star = Theta(vec![1.2]);
    let (n, t, h) = (20usize, 1.0f64, 0.7f64);
    let nf = n as f64;
    let opts = EstimatorOptions {
        grad_tolerance: 1e-12,
        step_tolerance: 1e-14,
        value_tolerance: 1e-16,
        ..EstimatorOptions::default()
    };

    let mut worst = 0.0f64;
    let mut check = |label: &str, got: f64, want: f64| {
        let dev = (got - want).abs() / want.abs().max(1.0);
        if dev > worst {
            worst = dev;
        }
        assert!(
            dev <= CLOSED_FORM_TOL,
            "{label}: got {got}, closed form {want} (deviation {dev:.3e})"
        );
    };

    for rep in 0..50u64 {
        let record = simulate(&model, &theta_star, n, t, derive_seed(0xACCE01, 0, rep)).unwrap();
        let k = record.events().len() as f64;
        let star = theta_star.0[0];

        for theta in [0.8, 1.5] {
            let want_loglr = k * (theta / star).ln() - nf * t * (theta - star);
            let got = log_likelihood_ratio(&record, &Theta(vec![theta]), &theta_star).unwrap();
            check("log_likelihood_ratio", got, want_loglr);

            let got_score = score(&record, &Theta(vec![theta])).unwrap();
            check("score", got_score[0], k / theta - nf * t);

            let got_hess = hessian(&record, &Theta(vec![theta])).unwrap();
            check("hessian", got_hess[(0, 0)], -k / (theta * theta));

            let info = observed_info(&record, &Theta(vec![theta])).unwrap();
            check("observed_info", info.entry(0, 0), t / theta);
        }

        let fit = mle(&record, &opts).unwrap();
        let want_mle = (k / (nf * t)).clamp(0.2, 3.0);
        check("mle", fit.theta_hat.0[0], want_mle);

        let terms = lan_decompose(&record, &theta_star, &[h]).unwrap();
        check("delta", terms.delta[0], (k / star - nf * t) / nf.sqrt());
        let y = h / (nf.sqrt() * star);
        let want_remainder = k * ((1.0 + y).ln() - y) + h * h * t / (2.0 * star);
        check("remainder", terms.remainder, want_remainder);
    }

    let elapsed = clock.elapsed().as_secs_f64();
    line(
        1,
        "closed-form suite (constant rate)",
        true,
        &format!("worst relative deviation {worst:.2e} <= {CLOSED_FORM_TOL:.0e} over 50 records"),
        elapsed,
        10.0,
    );
    budget(1, elapsed, 10.0);
}

#[test]
fn criterion_02_derivative_checks() {
    let clock = Instant::now();
    let model = sigmoid_model();
    let theta_star = Theta(vec![0.4, 0.3]);
    let mut draw = StdRng::seed_from_u64(0xACCE02);
    let eps = 1e-5;

    for rep in 0..20u64 {
        let record =
            simulate(&model, &theta_star, 50, 1.0, derive_seed(0xACCE02, 0, rep)).unwrap();
        let theta = Theta(vec![draw.gen_range(0.15..0.95), draw.gen_range(0.15..0.95)]);

        let grad = score(&record, &theta).unwrap();
        let hess = hessian(&record, &theta).unwrap();
        for k in 0..2 {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up.0[k] += eps;
            dn.0[k] -= eps;

            let fd_grad = (log_likelihood_ratio(&record, &up, &theta_star).unwrap()
                - log_likelihood_ratio(&record, &dn, &theta_star).unwrap())
                / (2.0 * eps);
            assert_relative_eq!(grad[k], fd_grad, max_relative = SCORE_FD_TOL, epsilon = 1e-6);

            let score_up = score(&record, &up).unwrap();
            let score_dn = score(&record, &dn).unwrap();
            for j in 0..2 {
                let fd_hess = (score_up[j] - score_dn[j]) / (2.0 * eps);
                assert_relative_eq!(
                    hess[(j, k)],
                    fd_hess,
                    max_relative = HESSIAN_FD_TOL,
                    epsilon = 1e-5
                );
            }
        }
    }

    let elapsed = clock.elapsed().as_secs_f64();
    line(
        2,
        "score and hessian vs finite differences",
        true,
        &format!("20 record/parameter pairs at rel {SCORE_FD_TOL:.0e}/{HESSIAN_FD_TOL:.0e}"),
        elapsed,
        30.0,
    );
    budget(2, elapsed, 30.0);
}

#[test]
fn criterion_03_likelihood_ratio_martingale() {
    let clock = Instant::now();
    let model = sigmoid_model();
    let theta_star = Theta(vec![0.5, 0.4]);
    // Alternative within 0.2 of the truth in every coordinate.
    let theta = Theta(vec![0.62, 0.3]);
    let replicates = 10_000u64;

    let mut values = Vec::with_capacity(replicates as usize);
    for rep in 0..replicates {
        let record =
            simulate(&model, &theta_star, 5, 0.5, derive_seed(0xACCE03, 0, rep)).unwrap();
        values.push(
            log_likelihood_ratio(&record, &theta, &theta_star)
                .unwrap()
                .exp(),
        );
    }
    let m = mean(&values);
    let se = sample_std(&values) / (replicates as f64).sqrt();
    let passed = (m - 1.0).abs() <= MARTINGALE_SIGMA * se;

    let elapsed = clock.elapsed().as_secs_f64();
    line(
        3,
        "likelihood-ratio martingale",
        passed,
        &format!("mean exp(loglr) = {m:.4}, {MARTINGALE_SIGMA} SE band +/- {:.4}", MARTINGALE_SIGMA * se),
        elapsed,
        120.0,
    );
    assert!(passed, "mean {m} deviates from 1 by more than {MARTINGALE_SIGMA} standard errors ({se:.2e})");
    budget(3, elapsed, 120.0);
}

#[test]
fn criterion_04_remainder_decay() {
    let clock = Instant::now();
    let model = sigmoid_model();
    let config = LanConfig {
        theta_star: vec![0.4, 0.3],
        h: vec![vec![0.6, 0.8]], // unit norm
        n_grid: vec![100, 400, 1600, 6400],
        replicates: 50,
        horizon: 0.5,
        reference_particles: 20_000,
        reference_steps: 0,
    };
    let report = lan_experiment(&model, &config, 0xACCE04).unwrap();
    let decreasing = verdict(&report, "remainder-median-decreasing");
    let endpoint = verdict(&report, "remainder-endpoint-decay");
    let passed = decreasing.passed && endpoint.passed;

    let elapsed = clock.elapsed().as_secs_f64();
    line(
        4,
        "remainder decay across populations",
        passed,
        &format!(
            "worst adjacent median ratio {:.3}, endpoint ratio {:.3} (need < {})",
            decreasing.measured, endpoint.measured, endpoint.threshold
        ),
        elapsed,
        600.0,
    );
    assert!(decreasing.passed, "medians not strictly decreasing: {}", decreasing.measured);
    assert!(endpoint.passed, "endpoint decay too slow: {}", endpoint.measured);
    budget(4, elapsed, 600.0);
}

#[test]
fn criterion_05_score_calibration() {
    let clock = Instant::now();
    let model = sigmoid_model();
    let config = CalibrateConfig {
        theta_star: vec![0.4, 0.3],
        n: 1000,
        replicates: 500,
        horizon: 0.5,
        reference_particles: 20_000,
        reference_steps: 0,
    };
    let report = score_calibration(&model, &config, 0xACCE05).unwrap();
    let centered = verdict(&report, "score-mean-centered");
    let covariance = verdict(&report, "score-covariance");
    let ks = verdict(&report, "score-ks-normal");
    let passed = report.passed();

    let elapsed = clock.elapsed().as_secs_f64();
    line(
        5,
        "score calibration against the limit",
        passed,
        &format!(
            "mean norm {:.4}, covariance gap {:.3}, worst KS {:.4}",
            centered.measured, covariance.measured, ks.measured
        ),
        elapsed,
        600.0,
    );
    assert!(passed, "failed: {:?}", report.failed_criteria());
    budget(5, elapsed, 600.0);
}

#[test]
fn criterion_06_estimator_normality() {
    let clock = Instant::now();
    let model = sigmoid_model();
    let config = NormalityConfig {
        theta_star: vec![0.4, 0.3],
        n_grid: vec![1000],
        replicates: 500,
        horizon: 1.0,
        reference_particles: 20_000,
        reference_steps: 0,
    };
    let report =
        normality_experiment(&model, &config, &EstimatorOptions::default(), 0xACCE06).unwrap();
    let std_v = verdict(&report, "z-std");
    let cov_v = verdict(&report, "z-covariance");
    let ks_v = verdict(&report, "z-ks-normal");
    let conv_v = verdict(&report, "nonconvergence");
    let passed = report.passed();

    let elapsed = clock.elapsed().as_secs_f64();
    line(
        6,
        "standardized estimator normality",
        passed,
        &format!(
            "worst |std-1| {:.3}, cov gap {:.3}, worst KS {:.4}, nonconvergence {:.3}",
            std_v.measured, cov_v.measured, ks_v.measured, conv_v.measured
        ),
        elapsed,
        900.0,
    );
    assert!(passed, "failed: {:?}", report.failed_criteria());
    budget(6, elapsed, 900.0);
}

#[test]
fn criterion_07_estimator_consistency() {
    let clock = Instant::now();
    let model = sigmoid_model();
    let config = NormalityConfig {
        theta_star: vec![0.4, 0.3],
        n_grid: vec![500, 2000],
        replicates: 100,
        horizon: 1.0,
        reference_particles: 20_000,
        reference_steps: 0,
    };
    let report =
        normality_experiment(&model, &config, &EstimatorOptions::default(), 0xACCE07).unwrap();
    let consistency = verdict(&report, "consistency");

    let elapsed = clock.elapsed().as_secs_f64();
    line(
        7,
        "error medians shrink like sqrt(n)",
        consistency.passed,
        &format!(
            "median-error ratio {:.3} (acceptance {})",
            consistency.measured, consistency.threshold
        ),
        elapsed,
        600.0,
    );
    assert!(
        consistency.passed,
        "median ratio {} outside {}",
        consistency.measured, consistency.threshold
    );
    budget(7, elapsed, 600.0);
}

#[test]
fn criterion_08_chaos_rate() {
    let clock = Instant::now();
    let model = no_reset_model();
    let config = ChaosConfig {
        theta_star: vec![1.0],
        n_grid: vec![64, 256, 1024, 4096],
        replicates: 50,
        horizon: 0.5,
        reference_particles: 40_960,
        reference_steps: 0,
        exploratory: false,
    };
    let report = chaos_rate_experiment(&model, &config, 0xACCE08).unwrap();
    let slope = verdict(&report, "w1-slope");

    let elapsed = clock.elapsed().as_secs_f64();
    line(
        8,
        "transport-distance decay rate",
        slope.passed,
        &format!("fitted slope {:.3} (acceptance {})", slope.measured, slope.threshold),
        elapsed,
        900.0,
    );
    assert!(slope.passed, "slope {} outside {}", slope.measured, slope.threshold);
    budget(8, elapsed, 900.0);
}

#[test]
fn criterion_09_information_gap() {
    let clock = Instant::now();
    let model = sigmoid_model();
    let config = LanConfig {
        theta_star: vec![0.4, 0.3],
        h: vec![vec![0.6, 0.8]],
        n_grid: vec![400, 1600],
        replicates: 20,
        horizon: 0.5,
        reference_particles: 20_000,
        reference_steps: 0,
    };
    let report = lan_experiment(&model, &config, 0xACCE09).unwrap();
    let gap = verdict(&report, "info-gap-ratio");

    let elapsed = clock.elapsed().as_secs_f64();
    line(
        9,
        "observed information approaches the limit",
        gap.passed,
        &format!("mean-gap ratio {:.3} (acceptance {})", gap.measured, gap.threshold),
        elapsed,
        300.0,
    );
    assert!(gap.passed, "gap ratio {} outside {}", gap.measured, gap.threshold);
    budget(9, elapsed, 300.0);
}

#[test]
fn criterion_10_thread_count_determinism() {
    let clock = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("chaos.json");
    std::fs::write(
        &config_path,
        r#"{
            "seed": 10,
            "model": {
                "drift": {"type": "zero"},
                "reset": {"type": "none"},
                "mark_law": {"type": "uniform", "min": -0.3, "max": 0.3},
                "initial_law": {"type": "uniform", "min": 0.0, "max": 1.0},
                "rate": {"family": "constant"},
                "theta_box": {"lower": [0.5], "upper": [2.0]}
            },
            "experiment": {
                "kind": "chaos",
                "theta_star": [1.0],
                "n_grid": [32, 128],
                "replicates": 20,
                "horizon": 0.4,
                "reference_particles": 1280,
                "exploratory": true
            }
        }"#,
    )
    .unwrap();

    let mut rows = Vec::new();
    for jobs in ["1", "8"] {
        let out = dir.path().join(format!("jobs{jobs}"));
        let code = neurolan::cli::run([
            "neurolan",
            "chaos",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            jobs,
        ]);
        assert_eq!(code, 0, "chaos run with --jobs {jobs} failed");
        rows.push(std::fs::read(out.join("rows.csv")).unwrap());
    }
    let passed = rows[0] == rows[1];

    let elapsed = clock.elapsed().as_secs_f64();
    line(
        10,
        "row output independent of --jobs",
        passed,
        &format!("{} bytes, --jobs 1 vs --jobs 8", rows[0].len()),
        elapsed,
        120.0,
    );
    assert!(passed, "rows.csv differs between --jobs 1 and --jobs 8");
    budget(10, elapsed, 120.0);
}
