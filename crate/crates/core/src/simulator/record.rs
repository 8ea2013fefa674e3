//! Trajectory records: the complete, replayable outcome of one simulation.
//!
//! A record stores the initial potentials and every spike event (time,
//! spiker, pre-spike potential, mark). Together with the model that is the
//! full sufficient description of the path: the state of any neuron at any
//! time can be reconstructed exactly, which is what the likelihood needs.
//!
//! Records serialize to a versioned JSON-lines format: one header line with
//! the model hash, population size, horizon, generating parameter, seed,
//! candidate count and initial potentials, then one line per event
//! `{"t": …, "j": …, "x_pre": …, "u": …}`. Floats are written in shortest
//! round-trip decimal form, so serialize/deserialize is bit-exact.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Theta};

/// One spike: who fired, when, from which potential, and the mark everyone
/// else received (scaled by `1/n`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeEvent {
    /// Event time, strictly inside `(0, horizon)`.
    pub time: f64,
    /// Index of the spiking neuron.
    pub neuron: usize,
    /// The spiker's potential just before the spike (left limit).
    pub pre_jump_state: f64,
    /// Synaptic mark `u`; every other neuron gains `u / n`.
    pub mark: f64,
    /// The spiker's potential just after its reset jump.
    pub post_jump_state: f64,
}

/// Complete simulated path of the finite system.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    model: Arc<ModelSpec>,
    n: usize,
    horizon: f64,
    theta_star: Theta,
    seed: u64,
    /// Thinning candidates examined (diagnostic; acceptance ratio = events/candidates).
    candidates: u64,
    initial_states: Vec<f64>,
    events: Vec<SpikeEvent>,
}

/// Per-neuron event times — the counting-measure view of a record.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLedger {
    /// `times[i]` lists the spike times of neuron `i`, increasing.
    pub times: Vec<Vec<f64>>,
}

impl JumpLedger {
    /// Total number of spikes across the population.
    pub fn total(&self) -> usize {
        self.times.iter().map(Vec::len).sum()
    }

    /// Spikes of neuron `i` inside the window `[from, to)`.
    pub fn count_in(&self, i: usize, from: f64, to: f64) -> usize {
        self.times[i].iter().filter(|t| from <= **t && **t < to).count()
    }
}

/// Empirical measure of the population at a fixed time: `n` unit atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Builds a measure from atom positions (must be non-empty and finite).
    pub fn new(atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput(
                "empirical measure needs at least one atom".into(),
            ));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput(
                "empirical measure atoms must be finite".into(),
            ));
        }
        Ok(EmpiricalMeasure { atoms })
    }

    /// Atom positions (unnormalized; every atom carries mass `1/len`).
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// Integral of `g` against the measure: the average of `g` over atoms.
    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        let s: f64 = self.atoms.iter().map(|x| g(*x)).sum();
        s / self.atoms.len() as f64
    }

    /// Mean of the measure.
    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireHeader {
    version: u32,
    model_hash: String,
    n: usize,
    t: f64,
    theta_star: Vec<f64>,
    seed: u64,
    candidates: u64,
    x0: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEvent {
    t: f64,
    j: usize,
    x_pre: f64,
    u: f64,
}

const WIRE_VERSION: u32 = 1;

impl TrajectoryRecord {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        model: Arc<ModelSpec>,
        n: usize,
        horizon: f64,
        theta_star: Theta,
        seed: u64,
        candidates: u64,
        initial_states: Vec<f64>,
        events: Vec<SpikeEvent>,
    ) -> Self {
        debug_assert_eq!(initial_states.len(), n);
        TrajectoryRecord {
            model,
            n,
            horizon,
            theta_star,
            seed,
            candidates,
            initial_states,
            events,
        }
    }

    /// The model this record was simulated under.
    pub fn model(&self) -> &Arc<ModelSpec> {
        &self.model
    }

    /// Population size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Observation horizon `t`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// The generating parameter.
    pub fn theta_star(&self) -> &Theta {
        &self.theta_star
    }

    /// Seed the record was simulated with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Thinning candidates examined during simulation.
    pub fn candidates(&self) -> u64 {
        self.candidates
    }

    /// Initial potentials, one per neuron.
    pub fn initial_states(&self) -> &[f64] {
        &self.initial_states
    }

    /// All spike events in increasing time order.
    pub fn events(&self) -> &[SpikeEvent] {
        &self.events
    }

    /// Per-neuron event times.
    pub fn jump_ledger(&self) -> JumpLedger {
        let mut times = vec![Vec::new(); self.n];
        for e in &self.events {
            times[e.neuron].push(e.time);
        }
        JumpLedger { times }
    }

    fn check_query(&self, neuron: usize, s: f64) -> Result<()> {
        if neuron >= self.n {
            return Err(Error::InvalidInput(format!(
                "neuron index {neuron} out of range for population of {}",
                self.n
            )));
        }
        if !(0.0..=self.horizon).contains(&s) {
            return Err(Error::InvalidInput(format!(
                "query time {s} outside the record window [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Exact potential of `neuron` at time `s`, with the left-limit
    /// convention: events at exactly time `s` are not yet applied.
    pub fn replay_state(&self, neuron: usize, s: f64) -> Result<f64> {
        self.check_query(neuron, s)?;
        let drift = self.model.drift();
        let reset = self.model.reset();
        let inv_n = 1.0 / self.n as f64;
        let mut x = self.initial_states[neuron];
        let mut t_last = 0.0;
        for e in &self.events {
            if e.time >= s {
                break;
            }
            x = drift.flow(x, e.time - t_last);
            t_last = e.time;
            if e.neuron == neuron {
                x += reset.jump(x);
            } else {
                x += e.mark * inv_n;
            }
        }
        Ok(drift.flow(x, s - t_last))
    }

    /// Potentials of the whole population at time `s` (left limits), via a
    /// single forward sweep. Kept as an independent code path from
    /// [`Self::replay_state`]; the two are cross-checked in tests.
    pub fn replay_all(&self, s: f64) -> Result<Vec<f64>> {
        self.check_query(0, s)?;
        let drift = self.model.drift();
        let reset = self.model.reset();
        let inv_n = 1.0 / self.n as f64;
        let zero_drift = drift.is_zero();
        let mut states = self.initial_states.clone();
        let mut t_last = 0.0;
        for e in &self.events {
            if e.time >= s {
                break;
            }
            if !zero_drift {
                let dt = e.time - t_last;
                for x in &mut states {
                    *x = drift.flow(*x, dt);
                }
            }
            t_last = e.time;
            let kick = e.mark * inv_n;
            for (i, x) in states.iter_mut().enumerate() {
                if i == e.neuron {
                    *x += reset.jump(*x);
                } else {
                    *x += kick;
                }
            }
        }
        if !zero_drift {
            let dt = s - t_last;
            for x in &mut states {
                *x = drift.flow(*x, dt);
            }
        }
        Ok(states)
    }

    /// Empirical measure of the population at time `s`.
    pub fn empirical_measure(&self, s: f64) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::new(self.replay_all(s)?)
    }

    /// Sweeps the inter-event segments in time order. The visitor receives
    /// `(a, b, states)` where `states` are the population potentials at the
    /// segment start `a` (just after any event at `a`) and `b > a` is the
    /// segment end. Zero-length segments are skipped.
    pub(crate) fn sweep_segments(&self, mut visit: impl FnMut(f64, f64, &[f64])) {
        let drift = self.model.drift();
        let reset = self.model.reset();
        let inv_n = 1.0 / self.n as f64;
        let zero_drift = drift.is_zero();
        let mut states = self.initial_states.clone();
        let mut t_last = 0.0;
        for e in &self.events {
            if e.time > t_last {
                visit(t_last, e.time, &states);
            }
            if !zero_drift {
                let dt = e.time - t_last;
                for x in &mut states {
                    *x = drift.flow(*x, dt);
                }
            }
            t_last = e.time;
            let kick = e.mark * inv_n;
            for (i, x) in states.iter_mut().enumerate() {
                if i == e.neuron {
                    *x += reset.jump(*x);
                } else {
                    *x += kick;
                }
            }
        }
        if self.horizon > t_last {
            visit(t_last, self.horizon, &states);
        }
    }

    /// Serializes to the versioned JSON-lines trajectory format.
    pub fn to_jsonl(&self) -> String {
        let header = WireHeader {
            version: WIRE_VERSION,
            model_hash: self.model.hash().to_string(),
            n: self.n,
            t: self.horizon,
            theta_star: self.theta_star.0.clone(),
            seed: self.seed,
            candidates: self.candidates,
            x0: self.initial_states.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        for e in &self.events {
            out.push('\n');
            let w = WireEvent {
                t: e.time,
                j: e.neuron,
                x_pre: e.pre_jump_state,
                u: e.mark,
            };
            out.push_str(&serde_json::to_string(&w).expect("event serializes"));
        }
        out.push('\n');
        out
    }

    /// Parses the JSON-lines format back into a record. The caller supplies
    /// the model; its hash must match the one stored in the header.
    pub fn from_jsonl(model: &Arc<ModelSpec>, text: &str) -> Result<TrajectoryRecord> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header_line = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty trajectory file".into()))?;
        let header: WireHeader = serde_json::from_str(header_line)?;
        if header.version != WIRE_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported trajectory format version {}",
                header.version
            )));
        }
        if header.model_hash != model.hash() {
            return Err(Error::Config(format!(
                "trajectory was recorded under model {} but {} was supplied",
                &header.model_hash[..12.min(header.model_hash.len())],
                &model.hash()[..12]
            )));
        }
        if header.n == 0 || header.x0.len() != header.n {
            return Err(Error::InvalidInput(format!(
                "header population {} does not match {} initial states",
                header.n,
                header.x0.len()
            )));
        }
        if !header.t.is_finite() || header.t < 0.0 {
            return Err(Error::InvalidInput(format!(
                "invalid horizon {} in trajectory header",
                header.t
            )));
        }
        let theta_star = Theta(header.theta_star);
        if !model.theta_box().contains_interior(&theta_star) {
            return Err(Error::ParamDomain(
                "recorded theta_star is not interior to the model's parameter box".into(),
            ));
        }
        let reset = model.reset();
        let mut events = Vec::new();
        let mut prev_t = 0.0;
        for line in lines {
            let w: WireEvent = serde_json::from_str(line)?;
            if !w.t.is_finite() || w.t <= prev_t || w.t >= header.t {
                return Err(Error::InvalidInput(format!(
                    "event times must increase strictly inside (0, {}); got {}",
                    header.t, w.t
                )));
            }
            if w.j >= header.n {
                return Err(Error::InvalidInput(format!(
                    "event neuron {} out of range for population {}",
                    w.j, header.n
                )));
            }
            if !w.x_pre.is_finite() || !w.u.is_finite() {
                return Err(Error::InvalidInput("non-finite event payload".into()));
            }
            prev_t = w.t;
            events.push(SpikeEvent {
                time: w.t,
                neuron: w.j,
                pre_jump_state: w.x_pre,
                mark: w.u,
                post_jump_state: w.x_pre + reset.jump(w.x_pre),
            });
        }
        Ok(TrajectoryRecord::from_parts(
            Arc::clone(model),
            header.n,
            header.t,
            theta_star,
            header.seed,
            header.candidates,
            header.x0,
            events,
        ))
    }
}

impl PartialEq for TrajectoryRecord {
    fn eq(&self, other: &Self) -> bool {
        self.model.hash() == other.model.hash()
            && self.n == other.n
            && self.horizon == other.horizon
            && self.theta_star == other.theta_star
            && self.seed == other.seed
            && self.candidates == other.candidates
            && self.initial_states == other.initial_states
            && self.events == other.events
    }
}
