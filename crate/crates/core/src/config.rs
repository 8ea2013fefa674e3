//! JSON run configuration: a serializable mirror of one model plus one
//! experiment, with strict schema checking and line-numbered diagnostics.
//!
//! Custom drifts and resets are closures and therefore have no JSON form;
//! configs are limited to the built-in dynamics. A single `seed` drives
//! every stream of the run, so one number reproduces everything.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    CalibrateConfig, ChaosConfig, IdentifyConfig, LanConfig, NormalityConfig,
};
use crate::estimator::EstimatorOptions;
use crate::model::{
    DeclaredBounds, DriftSpec, ModelSpec, RateFamily, ResetSpec, ScalarLaw, Theta, ThetaBox,
    DEFAULT_RESET_CLAMP,
};
use crate::{Error, Result};

/// Top-level run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream of the run derives from it.
    pub seed: u64,
    pub model: ModelConfig,
    pub experiment: ExperimentConfig,
    /// Estimator settings for subcommands that fit; defaults otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorConfig>,
    /// Default output directory (the `--out` flag overrides it).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

/// Model section: one entry per model component.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub drift: DriftConfig,
    pub reset: ResetConfig,
    pub mark_law: LawConfig,
    pub initial_law: LawConfig,
    pub rate: RateConfig,
    pub theta_box: BoxConfig,
}

impl ModelConfig {
    /// Parses a standalone model section.
    pub fn from_json(text: &str) -> Result<ModelConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("model schema error: {e}")))
    }

    /// Builds and certifies the described model.
    pub fn build(&self) -> Result<Arc<ModelSpec>> {
        let drift = match &self.drift {
            DriftConfig::Zero => DriftSpec::Zero,
            DriftConfig::Linear { decay, input } => DriftSpec::Linear {
                decay: *decay,
                input: *input,
            },
        };
        let reset = match &self.reset {
            ResetConfig::None => ResetSpec::None,
            ResetConfig::ToZero { max_abs } => ResetSpec::ToZero { max_abs: *max_abs },
        };
        let rate = match &self.rate {
            RateConfig::Constant => RateFamily::Constant,
            RateConfig::AffineSigmoid { center, scale } => RateFamily::AffineSigmoid {
                center: *center,
                scale: *scale,
            },
            RateConfig::SoftplusClamp { center, scale } => RateFamily::SoftplusClamp {
                center: *center,
                scale: *scale,
            },
            RateConfig::Tabulated {
                x_grid,
                basis,
                min_rate,
                max_rate,
                max_relative_gradient,
            } => RateFamily::UserTabulated {
                x_grid: x_grid.clone(),
                basis: basis.clone(),
                bounds: DeclaredBounds {
                    min_rate: *min_rate,
                    max_rate: *max_rate,
                    max_relative_gradient: *max_relative_gradient,
                },
            },
        };
        ModelSpec::new(
            drift,
            reset,
            law(&self.mark_law),
            law(&self.initial_law),
            rate,
            ThetaBox::new(self.theta_box.lower.clone(), self.theta_box.upper.clone())?,
        )
    }
}

/// Drift field `b` of the potential dynamics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DriftConfig {
    /// `b(x) = 0`.
    Zero,
    /// `b(x) = input - decay * x`.
    Linear { decay: f64, input: f64 },
}

/// Reset jump applied to the spiking neuron.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResetConfig {
    /// No self-jump.
    None,
    /// Send the spiker to zero, with a boundedness clamp.
    ToZero {
        #[serde(default = "default_reset_clamp")]
        max_abs: f64,
    },
}

fn default_reset_clamp() -> f64 {
    DEFAULT_RESET_CLAMP
}

/// A scalar probability law (marks and initial potentials).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LawConfig {
    Dirac { value: f64 },
    Uniform { min: f64, max: f64 },
    TruncatedGaussian { mean: f64, std: f64, min: f64, max: f64 },
}

/// Parametric rate family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RateConfig {
    Constant,
    AffineSigmoid { center: f64, scale: f64 },
    SoftplusClamp { center: f64, scale: f64 },
    /// Basis functions tabulated on a grid with user-declared bounds.
    Tabulated {
        x_grid: Vec<f64>,
        basis: Vec<Vec<f64>>,
        min_rate: f64,
        max_rate: f64,
        max_relative_gradient: f64,
    },
}

/// Admissible parameter box.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Estimator settings; every field defaults to the library default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    pub step_tolerance: f64,
    pub value_tolerance: f64,
    pub theta_ref: Option<Vec<f64>>,
    pub keep_trace: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let opts = EstimatorOptions::default();
        EstimatorConfig {
            max_iterations: opts.max_iterations,
            grad_tolerance: opts.grad_tolerance,
            step_tolerance: opts.step_tolerance,
            value_tolerance: opts.value_tolerance,
            theta_ref: None,
            keep_trace: opts.keep_trace,
        }
    }
}

impl EstimatorConfig {
    pub fn to_options(&self) -> EstimatorOptions {
        EstimatorOptions {
            max_iterations: self.max_iterations,
            grad_tolerance: self.grad_tolerance,
            step_tolerance: self.step_tolerance,
            value_tolerance: self.value_tolerance,
            theta_ref: self.theta_ref.clone().map(Theta),
            keep_trace: self.keep_trace,
        }
    }
}

/// Output section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory the rows CSV, summary JSON and manifest are written into.
    pub directory: String,
}

/// One-record simulation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// True parameter (box interior).
    pub theta_star: Vec<f64>,
    /// Population size.
    pub n: usize,
    /// Observation horizon (0 yields a valid empty record).
    pub horizon: f64,
}

impl SimulateConfig {
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        crate::analysis::experiments::check_theta_star(model, &self.theta_star)?;
        if self.n == 0 {
            return Err(Error::Config("the population size must be positive".into()));
        }
        if !self.horizon.is_finite() || self.horizon < 0.0 {
            return Err(Error::Config(format!(
                "horizon must be finite and non-negative, got {}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Maximum-likelihood fit of a previously recorded trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Path of a record written by the simulate subcommand (resolved
    /// relative to the working directory).
    pub record: String,
    /// Optional true parameter; when present the report also carries the
    /// estimation error and its standardization by the observed information.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<Vec<f64>>,
}

impl EstimateConfig {
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if self.record.is_empty() {
            return Err(Error::Config("record path must be nonempty".into()));
        }
        if let Some(t) = &self.theta_star {
            let theta = Theta(t.clone());
            if theta.dim() != model.theta_box().dim() || !model.theta_box().contains(&theta) {
                return Err(Error::Config(format!(
                    "theta_star {t:?} must lie inside the parameter box"
                )));
            }
        }
        Ok(())
    }
}

/// The experiment section, dispatched on `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Simulate(SimulateConfig),
    Estimate(EstimateConfig),
    Lan(LanConfig),
    Calibrate(CalibrateConfig),
    Normality(NormalityConfig),
    Chaos(ChaosConfig),
    Identify(IdentifyConfig),
}

impl ExperimentConfig {
    /// The subcommand name this experiment belongs to.
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::Simulate(_) => "simulate",
            ExperimentConfig::Estimate(_) => "estimate",
            ExperimentConfig::Lan(_) => "lan",
            ExperimentConfig::Calibrate(_) => "calibrate",
            ExperimentConfig::Normality(_) => "normality",
            ExperimentConfig::Chaos(_) => "chaos",
            ExperimentConfig::Identify(_) => "identify",
        }
    }

    fn validate(&self, model: &ModelSpec) -> Result<()> {
        match self {
            ExperimentConfig::Simulate(c) => c.validate(model),
            ExperimentConfig::Estimate(c) => c.validate(model),
            ExperimentConfig::Lan(c) => c.validate(model),
            ExperimentConfig::Calibrate(c) => c.validate(model),
            ExperimentConfig::Normality(c) => c.validate(model),
            ExperimentConfig::Chaos(c) => c.validate(model),
            ExperimentConfig::Identify(c) => c.validate(model),
        }
    }
}

impl RunConfig {
    /// Parses a JSON document; schema violations carry the line and column.
    pub fn from_json(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config schema error: {e}")))
    }

    /// Builds and certifies the model described by the `model` section.
    pub fn build_model(&self) -> Result<Arc<ModelSpec>> {
        self.model.build()
    }

    /// Estimator options from the config, or the defaults.
    pub fn estimator_options(&self) -> EstimatorOptions {
        self.estimator
            .as_ref()
            .map(EstimatorConfig::to_options)
            .unwrap_or_default()
    }

    /// Full static check: model construction (including rate-bound
    /// certification over the box) plus every experiment invariant that can
    /// be verified without running.
    pub fn validate(&self) -> Result<()> {
        let model = self.build_model()?;
        self.experiment.validate(&model)?;
        if let Some(e) = &self.estimator {
            let opts = e.to_options();
            if let Some(t) = &opts.theta_ref {
                if t.dim() != model.theta_box().dim() || !model.theta_box().contains(t) {
                    return Err(Error::Config(format!(
                        "estimator theta_ref {:?} must lie inside the parameter box",
                        t.as_slice()
                    )));
                }
            }
            // Tolerance positivity is re-checked by the estimator itself,
            // but validate should catch it without running.
            for (name, v) in [
                ("grad_tolerance", opts.grad_tolerance),
                ("step_tolerance", opts.step_tolerance),
                ("value_tolerance", opts.value_tolerance),
            ] {
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::Config(format!(
                        "estimator {name} must be positive and finite, got {v}"
                    )));
                }
            }
            if opts.max_iterations == 0 {
                return Err(Error::Config(
                    "estimator max_iterations must be at least 1".into(),
                ));
            }
        }
        Ok(())
    }
}

fn law(cfg: &LawConfig) -> ScalarLaw {
    match cfg {
        LawConfig::Dirac { value } => ScalarLaw::Dirac { value: *value },
        LawConfig::Uniform { min, max } => ScalarLaw::Uniform {
            min: *min,
            max: *max,
        },
        LawConfig::TruncatedGaussian { mean, std, min, max } => ScalarLaw::TruncatedGaussian {
            mean: *mean,
            std: *std,
            min: *min,
            max: *max,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_lan_json() -> String {
        r#"{
            "seed": 42,
            "model": {
                "drift": {"type": "zero"},
                "reset": {"type": "none"},
                "mark_law": {"type": "uniform", "min": -0.3, "max": 0.3},
                "initial_law": {"type": "uniform", "min": 0.0, "max": 1.0},
                "rate": {"family": "constant"},
                "theta_box": {"lower": [0.5], "upper": [2.0]}
            },
            "experiment": {
                "kind": "lan",
                "theta_star": [1.0],
                "h": [[0.5]],
                "n_grid": [4, 8],
                "replicates": 2,
                "horizon": 0.5
            }
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_parses_validates_and_builds() {
        let cfg = RunConfig::from_json(&minimal_lan_json()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.experiment.kind(), "lan");
        let model = cfg.build_model().unwrap();
        assert_eq!(model.theta_box().dim(), 1);
        // Optional sections fall back to defaults.
        assert_eq!(cfg.estimator_options().max_iterations, 100);
        if let ExperimentConfig::Lan(lan) = &cfg.experiment {
            assert_eq!(lan.reference_particles, 20_000);
            assert_eq!(lan.reference_steps, 0);
        } else {
            panic!("wrong experiment kind");
        }
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let bad = minimal_lan_json().replace("\"seed\": 42", "\"seed\": 42, \"sneed\": 1");
        let err = RunConfig::from_json(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sneed"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn experiment_invariants_are_checked_without_running() {
        // theta_star on the box boundary is not interior.
        let bad = minimal_lan_json().replace("\"theta_star\": [1.0]", "\"theta_star\": [2.0]");
        let err = RunConfig::from_json(&bad).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("inside the parameter box"), "{err}");
        // A degenerate box has an empty interior and cannot be certified.
        let empty = minimal_lan_json().replace("\"lower\": [0.5]", "\"lower\": [2.0]");
        assert!(RunConfig::from_json(&empty).unwrap().validate().is_err());
    }

    #[test]
    fn full_schema_round_trips_every_section() {
        let text = r#"{
            "seed": 7,
            "model": {
                "drift": {"type": "linear", "decay": 1.0, "input": 0.3},
                "reset": {"type": "to_zero"},
                "mark_law": {"type": "truncated_gaussian", "mean": 0.2, "std": 0.1, "min": 0.0, "max": 0.5},
                "initial_law": {"type": "dirac", "value": 0.0},
                "rate": {"family": "affine_sigmoid", "center": 0.5, "scale": 0.3},
                "theta_box": {"lower": [0.1, 0.1], "upper": [1.0, 1.0]}
            },
            "experiment": {
                "kind": "normality",
                "theta_star": [0.4, 0.3],
                "n_grid": [16, 32],
                "replicates": 2,
                "horizon": 0.5
            },
            "estimator": {"max_iterations": 50, "keep_trace": true},
            "output": {"directory": "runs"}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        cfg.validate().unwrap();
        // The reset clamp defaulted.
        match cfg.model.reset {
            ResetConfig::ToZero { max_abs } => assert_eq!(max_abs, DEFAULT_RESET_CLAMP),
            _ => panic!("wrong reset"),
        }
        let opts = cfg.estimator_options();
        assert_eq!(opts.max_iterations, 50);
        assert!(opts.keep_trace);
        assert_eq!(opts.grad_tolerance, 1e-8);
        assert_eq!(cfg.output.as_ref().unwrap().directory, "runs");
        // Serialization round-trips through the same schema.
        let echoed = serde_json::to_string(&cfg).unwrap();
        let back = RunConfig::from_json(&echoed).unwrap();
        back.validate().unwrap();
        assert_eq!(back.experiment.kind(), "normality");
    }

    #[test]
    fn estimate_and_chaos_kinds_parse() {
        let text = r#"{
            "seed": 1,
            "model": {
                "drift": {"type": "zero"},
                "reset": {"type": "none"},
                "mark_law": {"type": "uniform", "min": -0.3, "max": 0.3},
                "initial_law": {"type": "uniform", "min": 0.0, "max": 1.0},
                "rate": {"family": "constant"},
                "theta_box": {"lower": [0.5], "upper": [2.0]}
            },
            "experiment": {"kind": "estimate", "record": "record.jsonl"}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.experiment.kind(), "estimate");

        let chaos = text.replace(
            r#"{"kind": "estimate", "record": "record.jsonl"}"#,
            r#"{"kind": "chaos", "theta_star": [1.0], "n_grid": [8, 16],
                "replicates": 2, "horizon": 0.3}"#,
        );
        let cfg = RunConfig::from_json(&chaos).unwrap();
        cfg.validate().unwrap();
        if let ExperimentConfig::Chaos(c) = &cfg.experiment {
            assert!(!c.exploratory);
            assert_eq!(c.resolved_reference_particles(), 160);
        } else {
            panic!("wrong experiment kind");
        }
    }

    #[test]
    fn estimator_reference_must_sit_in_the_box() {
        let mut text = minimal_lan_json();
        text = text.replace(
            "\"experiment\"",
            "\"estimator\": {\"theta_ref\": [9.0]}, \"experiment\"",
        );
        let err = RunConfig::from_json(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("theta_ref"), "{err}");
    }
}
