//! Convergence checks for the mean-field limit solver against closed forms.
//!
//! With a constant rate, no reset, and linear drift, every particle obeys
//! `x' = (input + m * theta) - decay * x`, so the cloud mean has the exact
//! solution
//!
//! `mean(t) = mean(0) * exp(-decay t) + A / decay * (1 - exp(-decay t))`
//!
//! with `A = input + mark_mean * theta`. That pins the RK4 integrator to an
//! analytic target; the stochastic (reset) mode is checked for cross-seed
//! stability instead, since it has no closed form.

use std::sync::Arc;

use neurolan::analysis::wasserstein1;
use neurolan::limit::{solve_limit, LimitMode};
use neurolan::model::{DriftSpec, ModelSpec, RateFamily, ResetSpec, ScalarLaw, Theta, ThetaBox};
use neurolan::simulator::EmpiricalMeasure;

const DECAY: f64 = 2.0;
const INPUT: f64 = 0.5;
const MARK_MEAN: f64 = 0.4;
const THETA: f64 = 1.5;

fn linear_model(initial: ScalarLaw) -> Arc<ModelSpec> {
    ModelSpec::new(
        DriftSpec::Linear {
            decay: DECAY,
            input: INPUT,
        },
        ResetSpec::None,
        ScalarLaw::Uniform { min: 0.2, max: 0.6 },
        initial,
        RateFamily::Constant,
        ThetaBox::new(vec![0.5], vec![3.0]).unwrap(),
    )
    .unwrap()
}

fn closed_form_mean(x0: f64, t: f64) -> f64 {
    let a = INPUT + MARK_MEAN * THETA;
    x0 * (-DECAY * t).exp() + a / DECAY * (1.0 - (-DECAY * t).exp())
}

#[test]
fn deterministic_limit_matches_the_linear_closed_form() {
    let model = linear_model(ScalarLaw::Uniform { min: 0.0, max: 1.0 });
    let theta = Theta(vec![THETA]);
    let ensemble = solve_limit(&model, &theta, 500, 1.0, 400, 7).unwrap();
    assert_eq!(ensemble.mode(), LimitMode::Deterministic);

    // Linear dynamics: the cloud mean solves the same ODE started from the
    // empirical initial mean, so only integrator error remains.
    let x0 = ensemble.cloud_mean(0, |x| x);
    let mut worst = 0.0f64;
    for (q, t) in ensemble.times().iter().enumerate() {
        let err = (ensemble.cloud_mean(q, |x| x) - closed_form_mean(x0, *t)).abs();
        worst = worst.max(err);
    }
    assert!(worst < 1e-9, "worst mean error {worst:.3e} exceeds 1e-9");
}

#[test]
fn integrator_error_decays_under_step_refinement() {
    let model = linear_model(ScalarLaw::Dirac { value: 0.9 });
    let theta = Theta(vec![THETA]);
    let target = closed_form_mean(0.9, 1.0);

    let error_at = |steps: usize| -> f64 {
        let ensemble = solve_limit(&model, &theta, 1, 1.0, steps, 7).unwrap();
        (ensemble.final_states()[0] - target).abs()
    };

    let (e25, e100, e400) = (error_at(25), error_at(100), error_at(400));
    assert!(
        e25 > e100 && e100 > e400,
        "errors should shrink with the grid: {e25:.3e}, {e100:.3e}, {e400:.3e}"
    );
    assert!(e400 < 1e-9, "finest grid error {e400:.3e} exceeds 1e-9");
    // Fourth-order scheme: each 4x refinement should gain well over 10x.
    assert!(e100 < e25 / 10.0 && e400 < e100 / 10.0);
}

#[test]
fn stochastic_reference_is_stable_across_seeds() {
    let model = ModelSpec::new(
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
    .unwrap();
    let theta = Theta(vec![0.4, 0.3]);

    let cloud_at = |seed: u64| -> EmpiricalMeasure {
        let ensemble = solve_limit(&model, &theta, 20_000, 0.5, 200, seed).unwrap();
        assert_eq!(ensemble.mode(), LimitMode::Stochastic);
        assert!(ensemble.approximate());
        EmpiricalMeasure::new(ensemble.final_states().to_vec()).unwrap()
    };

    let d = wasserstein1(&cloud_at(11), &cloud_at(12));
    assert!(
        d < 0.02,
        "independent 20k-particle clouds should nearly coincide, got W1 = {d:.4}"
    );
}
