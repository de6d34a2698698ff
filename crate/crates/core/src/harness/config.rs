use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::consensus::TripletName;
use crate::cost::SignalKind;
use crate::error::{Error, Result};
use crate::graph::GraphKind;

/// Which internal model the structured algorithm embeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelSpec {
    /// The exact annihilator of the signal family.
    #[default]
    Exact,
    /// Sine model with its linear coefficient shifted by `-e`.
    Perturbed { e: f64 },
    /// `L` harmonics of `ν` plus an integrator.
    Approx { harmonics: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CostFamily {
    #[default]
    Quadratic,
    /// Quadratic plus `sin(νk)·log(1 + exp(cᵀx))`.
    NonQuadratic,
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub agents: usize,
    /// Per-agent decision dimension.
    pub dim: usize,
    pub graph: GraphKind,
    pub steps: usize,
    pub seed: u64,
    pub triplet: TripletName,
    pub signal: SignalKind,
    pub cost: CostFamily,
    pub nu: f64,
    /// Step size of the structured algorithm; per-triplet default when absent.
    pub mu: Option<f64>,
    pub tau: Option<f64>,
    /// Step size of the unstructured baseline; per-triplet default when absent.
    pub mu_unstructured: Option<f64>,
    /// Eigenvalue range of the local Hessians.
    pub hessian_lo: f64,
    pub hessian_hi: f64,
    pub model: ModelSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            agents: 10,
            dim: 15,
            graph: GraphKind::Cycle,
            steps: 5000,
            seed: 1,
            triplet: TripletName::Diging,
            signal: SignalKind::Sine,
            cost: CostFamily::Quadratic,
            nu: 0.1,
            mu: None,
            tau: None,
            mu_unstructured: None,
            hessian_lo: 1.0,
            hessian_hi: 5.0,
            model: ModelSpec::Exact,
        }
    }
}

/// Hand-tuned `(μ, τ, μ_unstructured)` per triplet for Hessian spectra in `[1, 10]`.
pub fn default_step_sizes(triplet: TripletName) -> (f64, f64, f64) {
    match triplet {
        TripletName::AugDgm => (0.1, 0.2, 0.3),
        TripletName::ExactDiffusion => (0.2, 0.3, 0.3),
        TripletName::Diging => (0.05, 1.0, 0.05),
        TripletName::Extra | TripletName::Custom => (0.1, 1.0, 0.1),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Preset for the non-quadratic experiment.
    pub fn nonquadratic() -> Self {
        Self {
            cost: CostFamily::NonQuadratic,
            triplet: TripletName::Extra,
            nu: 5.0,
            hessian_hi: 10.0,
            model: ModelSpec::Approx { harmonics: 1 },
            ..Self::default()
        }
    }

    /// Preset for the model-perturbation sweep.
    pub fn perturbation() -> Self {
        Self {
            triplet: TripletName::Extra,
            nu: 1.0,
            ..Self::default()
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu.unwrap_or(default_step_sizes(self.triplet).0)
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(default_step_sizes(self.triplet).1)
    }

    pub fn mu_unstructured(&self) -> f64 {
        self.mu_unstructured.unwrap_or(default_step_sizes(self.triplet).2)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.agents < 2 {
            return fail(format!("agents must be at least 2, got {}", self.agents));
        }
        if self.dim == 0 || self.steps == 0 {
            return fail("dim and steps must be positive".into());
        }
        if !(self.hessian_lo > 0.0 && self.hessian_lo <= self.hessian_hi && self.hessian_hi.is_finite()) {
            return fail(format!(
                "Hessian range [{}, {}] must satisfy 0 < lo <= hi",
                self.hessian_lo, self.hessian_hi
            ));
        }
        if !self.nu.is_finite() {
            return fail("nu must be finite".into());
        }
        for (name, v) in [("mu", self.mu), ("tau", self.tau), ("mu_unstructured", self.mu_unstructured)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return fail(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if self.triplet == TripletName::Custom {
            return fail("custom triplets cannot be configured from a file".into());
        }
        match self.model {
            ModelSpec::Perturbed { e } if !e.is_finite() => fail("perturbation must be finite".into()),
            ModelSpec::Approx { harmonics: 0 } => fail("approximate model needs at least one harmonic".into()),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
        let nq = ExperimentConfig::nonquadratic();
        assert_eq!(ExperimentConfig::from_toml_str(&nq.to_toml()).unwrap(), nq);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "triplet = \"extra\"\nsignal = \"ramp\"\nmu = 0.02\n[graph]\nkind = \"path\"\n[model]\nkind = \"perturbed\"\ne = 0.05\n",
        )
        .unwrap();
        assert_eq!(cfg.triplet, TripletName::Extra);
        assert_eq!(cfg.signal, SignalKind::Ramp);
        assert_eq!(cfg.graph, GraphKind::Path);
        assert_eq!(cfg.model, ModelSpec::Perturbed { e: 0.05 });
        assert_eq!(cfg.mu(), 0.02);
        assert_eq!(cfg.tau(), default_step_sizes(TripletName::Extra).1);
    }

    #[test]
    fn invalid_files_are_config_errors() {
        for text in ["agents = 1", "mu = -1.0", "hessian_lo = 0.0", "bogus = 3", "triplet = \"nope\"", "[model]\nkind = \"approx\"\nharmonics = 0"] {
            let err = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }
}
