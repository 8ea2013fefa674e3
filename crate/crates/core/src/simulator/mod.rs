//! Exact event-by-event simulation of the finite population by thinning.
//!
//! A global candidate stream runs at the constant envelope rate
//! `n * max_rate`, where `max_rate` is the certified rate bound over the
//! parameter box. Each candidate picks a uniform neuron, advances exactly
//! that neuron's potential to the candidate time, and accepts with
//! probability `f_theta(x-) / max_rate`. Because the envelope dominates the
//! true intensity everywhere, accepted candidates reproduce the exact law of
//! the interacting system — there is no time-discretization error anywhere.
//!
//! On acceptance the whole population is synchronized to the event time,
//! the spiker takes its reset jump, and every other neuron receives the
//! mark kick `u / n`. Rejected candidates cost `O(1)`; accepted events cost
//! `O(n)`, so a run costs `O(candidates + n * events)`.
//!
//! Randomness is split across named streams (candidate waits, neuron picks,
//! acceptance coins, marks, initial states), so the accept/reject pattern of
//! one component can never shift another component's draws.

mod record;

pub use record::{EmpiricalMeasure, JumpLedger, SpikeEvent, TrajectoryRecord};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Theta};
use crate::rng::{stream, StreamRole};

/// Simulates the `n`-neuron system on `[0, t]` under `theta_star`.
///
/// `theta_star` must lie strictly inside the model's parameter box (boundary
/// parameters break the estimation theory downstream). `t = 0` yields a
/// valid record with zero events.
pub fn simulate(
    model: &Arc<ModelSpec>,
    theta_star: &Theta,
    n: usize,
    t: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "population size must be at least 1".into(),
        ));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidInput(format!(
            "horizon must be finite and non-negative, got {t}"
        )));
    }
    if !model.theta_box().contains_interior(theta_star) {
        return Err(Error::ParamDomain(format!(
            "theta_star {:?} must lie strictly inside the parameter box",
            theta_star.as_slice()
        )));
    }

    let mut init_rng = stream(seed, StreamRole::InitialStates);
    let mut cand_rng = stream(seed, StreamRole::CandidateTimes);
    let mut pick_rng = stream(seed, StreamRole::NeuronPick);
    let mut coin_rng = stream(seed, StreamRole::AcceptCoin);
    let mut mark_rng = stream(seed, StreamRole::Marks);

    let initial_states: Vec<f64> = (0..n).map(|_| model.sample_initial(&mut init_rng)).collect();

    let bounds = model.family_bounds();
    let envelope = bounds.max_rate;
    let wait = Exp::new(n as f64 * envelope).expect("positive envelope rate");

    let drift = model.drift();
    let reset = model.reset();
    let rate = model.rate();
    let theta = theta_star.as_slice();
    let zero_drift = drift.is_zero();
    let inv_n = 1.0 / n as f64;

    let mut states = initial_states.clone();
    let mut last_update = vec![0.0_f64; n];
    let mut events = Vec::new();
    let mut candidates: u64 = 0;
    let mut t_cur = 0.0_f64;

    loop {
        t_cur += wait.sample(&mut cand_rng);
        if t_cur >= t {
            break;
        }
        candidates += 1;
        let j = pick_rng.gen_range(0..n);
        if !zero_drift {
            states[j] = drift.flow(states[j], t_cur - last_update[j]);
            last_update[j] = t_cur;
        }
        let x_pre = states[j];
        let f = rate.features(x_pre).dot(theta);
        let coin: f64 = coin_rng.gen_range(0.0..1.0);
        if coin > f / envelope {
            continue;
        }
        // Accepted: synchronize everyone, apply the reset and the kicks.
        let mark = model.sample_mark(&mut mark_rng);
        let kick = mark * inv_n;
        for i in 0..n {
            if i == j {
                continue;
            }
            if !zero_drift {
                states[i] = drift.flow(states[i], t_cur - last_update[i]);
                last_update[i] = t_cur;
            }
            states[i] += kick;
        }
        states[j] = x_pre + reset.jump(x_pre);
        events.push(SpikeEvent {
            time: t_cur,
            neuron: j,
            pre_jump_state: x_pre,
            mark,
            post_jump_state: states[j],
        });
    }

    Ok(TrajectoryRecord::from_parts(
        Arc::clone(model),
        n,
        t,
        theta_star.clone(),
        seed,
        candidates,
        initial_states,
        events,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriftSpec, RateFamily, ResetSpec, ScalarLaw, ThetaBox};

    fn constant_model(lo: f64, hi: f64) -> Arc<ModelSpec> {
        ModelSpec::new(
            DriftSpec::Zero,
            ResetSpec::None,
            ScalarLaw::Dirac { value: 0.5 },
            ScalarLaw::Uniform {
                min: -1.0,
                max: 1.0,
            },
            RateFamily::Constant,
            ThetaBox::new(vec![lo], vec![hi]).unwrap(),
        )
        .unwrap()
    }

    fn leaky_sigmoid_model() -> Arc<ModelSpec> {
        ModelSpec::new(
            DriftSpec::Linear {
                decay: 1.0,
                input: 0.2,
            },
            ResetSpec::ToZero { max_abs: 1e3 },
            ScalarLaw::Uniform { min: 0.1, max: 0.9 },
            ScalarLaw::Uniform {
                min: -1.0,
                max: 1.0,
            },
            RateFamily::AffineSigmoid {
                center: 0.0,
                scale: 0.5,
            },
            ThetaBox::new(vec![0.5, 0.5], vec![2.0, 2.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_horizon_yields_empty_record() {
        let m = constant_model(0.5, 2.0);
        let r = simulate(&m, &Theta(vec![1.0]), 10, 0.0, 1).unwrap();
        assert!(r.events().is_empty());
        assert_eq!(r.initial_states().len(), 10);
        assert_eq!(r.empirical_measure(0.0).unwrap().atoms().len(), 10);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let m = constant_model(0.5, 2.0);
        assert!(simulate(&m, &Theta(vec![1.0]), 0, 1.0, 1).is_err());
        assert!(simulate(&m, &Theta(vec![1.0]), 5, -1.0, 1).is_err());
        // Boundary theta_star is rejected: the interior is required.
        assert!(simulate(&m, &Theta(vec![0.5]), 5, 1.0, 1).is_err());
        assert!(simulate(&m, &Theta(vec![3.0]), 5, 1.0, 1).is_err());
    }

    #[test]
    fn same_seed_reproduces_the_record_exactly() {
        let m = leaky_sigmoid_model();
        let a = simulate(&m, &Theta(vec![1.0, 1.2]), 25, 2.0, 42).unwrap();
        let b = simulate(&m, &Theta(vec![1.0, 1.2]), 25, 2.0, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate(&m, &Theta(vec![1.0, 1.2]), 25, 2.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn event_times_increase_strictly_and_stay_inside_the_window() {
        let m = leaky_sigmoid_model();
        let r = simulate(&m, &Theta(vec![1.5, 1.0]), 30, 3.0, 7).unwrap();
        assert!(!r.events().is_empty());
        let mut prev = 0.0;
        for e in r.events() {
            assert!(e.time > prev && e.time < 3.0);
            prev = e.time;
        }
    }

    #[test]
    fn acceptance_ratio_is_bracketed_by_the_certified_bounds() {
        let m = constant_model(0.5, 2.0);
        let r = simulate(&m, &Theta(vec![1.0]), 50, 10.0, 11).unwrap();
        let ratio = r.events().len() as f64 / r.candidates() as f64;
        let b = m.family_bounds();
        // For the constant family the acceptance probability is exactly
        // theta / max_rate = 0.5; allow wide Monte Carlo slack but verify the
        // certified bracket [min_rate/max_rate, 1].
        assert!(ratio >= b.min_rate / b.max_rate - 0.05, "ratio {ratio}");
        assert!(ratio <= 1.0);
        assert!((ratio - 0.5).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn total_event_count_matches_poisson_moments() {
        // Constant rate 1, no reset, zero drift: the population spike count
        // over [0, t] is exactly Poisson(n * t) regardless of the kicks.
        let m = constant_model(0.5, 2.0);
        let theta = Theta(vec![1.0]);
        let (n, t, reps) = (50usize, 2.0, 400usize);
        let lambda = n as f64 * t; // 100 expected events per replicate
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for rep in 0..reps {
            let r = simulate(&m, &theta, n, t, 1000 + rep as u64).unwrap();
            let k = r.events().len() as f64;
            sum += k;
            sumsq += k * k;
        }
        let mean = sum / reps as f64;
        let var = sumsq / reps as f64 - mean * mean;
        let se_mean = (lambda / reps as f64).sqrt();
        assert!(
            (mean - lambda).abs() < 4.0 * se_mean,
            "mean {mean} vs {lambda} (4se {})",
            4.0 * se_mean
        );
        // Var(sample var) for Poisson ~ (lambda + 2 lambda^2) / reps.
        let se_var = ((lambda + 2.0 * lambda * lambda) / reps as f64).sqrt();
        assert!(
            (var - lambda).abs() < 4.0 * se_var,
            "var {var} vs {lambda} (4se {})",
            4.0 * se_var
        );
    }

    #[test]
    fn bookkeeping_closed_form_for_dirac_marks() {
        // Zero drift, no reset, Dirac(u0) marks: neuron i's final state is
        // x0_i + u0 * (K - K_i) / n where K_i counts its own spikes.
        let m = constant_model(0.5, 2.0);
        let r = simulate(&m, &Theta(vec![1.0]), 7, 3.0, 99).unwrap();
        let ledger = r.jump_ledger();
        let k_total = ledger.total() as f64;
        assert!(k_total > 0.0, "want at least one event for this check");
        let finals = r.replay_all(r.horizon()).unwrap();
        for (i, fin) in finals.iter().enumerate() {
            let k_i = ledger.times[i].len() as f64;
            let expect = r.initial_states()[i] + 0.5 * (k_total - k_i) / 7.0;
            assert!((fin - expect).abs() < 1e-12, "neuron {i}: {fin} vs {expect}");
        }
    }

    #[test]
    fn replay_matches_recorded_pre_jump_states() {
        let m = leaky_sigmoid_model();
        let r = simulate(&m, &Theta(vec![1.2, 0.8]), 20, 2.0, 5).unwrap();
        assert!(!r.events().is_empty());
        for e in r.events() {
            let x = r.replay_state(e.neuron, e.time).unwrap();
            assert!(
                (x - e.pre_jump_state).abs() < 1e-12,
                "replay {x} vs recorded {}",
                e.pre_jump_state
            );
        }
    }

    #[test]
    fn replay_state_and_replay_all_agree() {
        let m = leaky_sigmoid_model();
        let r = simulate(&m, &Theta(vec![1.0, 1.5]), 15, 2.0, 21).unwrap();
        for k in 0..=40 {
            let s = 2.0 * k as f64 / 40.0;
            let all = r.replay_all(s).unwrap();
            for i in 0..15 {
                let one = r.replay_state(i, s).unwrap();
                assert!(
                    (one - all[i]).abs() < 1e-12,
                    "s={s}, i={i}: {one} vs {}",
                    all[i]
                );
            }
        }
    }

    #[test]
    fn replay_at_zero_returns_initial_states_exactly() {
        let m = leaky_sigmoid_model();
        let r = simulate(&m, &Theta(vec![1.0, 1.0]), 8, 1.0, 2).unwrap();
        let at0 = r.replay_all(0.0).unwrap();
        assert_eq!(at0, r.initial_states());
    }

    #[test]
    fn pure_flow_replay_without_events() {
        // Rate can't be zero, so use a tiny horizon with a seed that yields
        // no events; then replay is the pure drift flow.
        let m = ModelSpec::new(
            DriftSpec::Linear {
                decay: 1.0,
                input: 0.0,
            },
            ResetSpec::None,
            ScalarLaw::Dirac { value: 0.5 },
            ScalarLaw::Dirac { value: 1.0 },
            RateFamily::Constant,
            ThetaBox::new(vec![0.5], vec![2.0]).unwrap(),
        )
        .unwrap();
        let mut r = None;
        for seed in 0..50 {
            let cand = simulate(&m, &Theta(vec![0.6]), 1, 1e-3, seed).unwrap();
            if cand.events().is_empty() {
                r = Some(cand);
                break;
            }
        }
        let r = r.expect("some seed yields an empty record at t = 1e-3");
        let got = r.replay_state(0, 1e-3).unwrap();
        let expect = (-1e-3_f64).exp();
        assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
    }

    #[test]
    fn jsonl_round_trip_is_bit_exact() {
        let m = leaky_sigmoid_model();
        let r = simulate(&m, &Theta(vec![1.3, 0.7]), 12, 1.5, 31).unwrap();
        let text = r.to_jsonl();
        let back = TrajectoryRecord::from_jsonl(&m, &text).unwrap();
        assert_eq!(r, back);
        // And the re-serialization is byte-identical.
        assert_eq!(text, back.to_jsonl());
    }

    #[test]
    fn jsonl_rejects_wrong_model_and_corrupt_payloads() {
        let m = leaky_sigmoid_model();
        let r = simulate(&m, &Theta(vec![1.3, 0.7]), 5, 1.0, 3).unwrap();
        let text = r.to_jsonl();
        let other = constant_model(0.5, 2.0);
        assert!(TrajectoryRecord::from_jsonl(&other, &text).is_err());
        // Tamper with an event time ordering.
        let mut lines: Vec<&str> = text.lines().collect();
        if lines.len() >= 3 {
            lines.swap(1, 2);
            let swapped = lines.join("\n");
            assert!(TrajectoryRecord::from_jsonl(&m, &swapped).is_err());
        }
        assert!(TrajectoryRecord::from_jsonl(&m, "").is_err());
    }

    #[test]
    fn empirical_measure_has_one_atom_per_neuron() {
        let m = leaky_sigmoid_model();
        let r = simulate(&m, &Theta(vec![1.0, 1.0]), 9, 1.0, 17).unwrap();
        let mu = r.empirical_measure(0.7).unwrap();
        assert_eq!(mu.atoms().len(), 9);
        assert_eq!(mu.integrate(|_| 1.0), 1.0);
        let single = simulate(&m, &Theta(vec![1.0, 1.0]), 1, 0.5, 1).unwrap();
        assert_eq!(single.empirical_measure(0.25).unwrap().atoms().len(), 1);
    }

    #[test]
    fn query_validation() {
        let m = constant_model(0.5, 2.0);
        let r = simulate(&m, &Theta(vec![1.0]), 3, 1.0, 1).unwrap();
        assert!(r.replay_state(3, 0.5).is_err());
        assert!(r.replay_state(0, 1.5).is_err());
        assert!(r.replay_state(0, -0.1).is_err());
    }
}
