//! Experiment configuration files.
//!
//! ```toml
//! experiment = "convergence-sweep"
//! seed = 12648430            # optional, overrides --seed
//! label = "sweep"            # optional stream label
//!
//! [model]
//! kind = "hermite"
//! beta = 2.0
//! n_values = [500, 1000, 2000]
//! w = 0.0                    # optional
//! nu_target = 1.0            # optional
//!
//! [[queries]]
//! t = 1.0
//! boundary = "dirichlet"     # optional
//! parity = "floor"           # optional
//!
//! [replicas]
//! matrix = 500
//! walk = 0                   # optional, walk MC rows when positive
//! continuum = 100000
//!
//! [numerics]                 # optional
//! ds = 0.001
//! h = 0.02
//!
//! [output]                   # optional
//! file = "sweep.csv"
//! ```
//!
//! Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use sglab_core::ensembles::{EnsembleKind, ModelParams};
use sglab_core::semigroup::{Boundary, SemigroupQuery};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Matrix traces over an `n` grid against the continuum trace.
    ConvergenceSweep,
    /// Matrix pairings of a Gaussian bump over an `n` grid against the
    /// continuum pairing.
    PairingSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: EnsembleKind,
    pub beta: f64,
    pub n_values: Vec<usize>,
    #[serde(default)]
    pub w: f64,
    #[serde(default = "one")]
    pub nu_target: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicaSection {
    pub matrix: usize,
    #[serde(default)]
    pub walk: usize,
    pub continuum: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    pub ds: Option<f64>,
    pub h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_file")]
    pub file: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { file: default_file() }
    }
}

fn default_file() -> String {
    "sweep.csv".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: Option<u64>,
    pub label: Option<String>,
    pub model: ModelSection,
    pub queries: Vec<SemigroupQuery>,
    pub replicas: ReplicaSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Parse and validate; every failure is a config error.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.model.n_values.is_empty() {
            return bad("model.n_values must list at least one size".into());
        }
        for &n in &self.model.n_values {
            self.params(n).validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
        }
        if self.queries.is_empty() {
            return bad("at least one [[queries]] entry is required".into());
        }
        for (i, q) in self.queries.iter().enumerate() {
            if !(q.t > 0.0 && q.t.is_finite()) {
                return bad(format!("queries[{i}].t must be positive, got {}", q.t));
            }
            if q.boundary == Boundary::Robin {
                if self.experiment == Experiment::ConvergenceSweep {
                    return bad(format!(
                        "queries[{i}]: traces are not available for the robin boundary; the limiting Robin trace is only conjectured"
                    ));
                }
                if !self.model.kind.is_spiked() {
                    return bad(format!("queries[{i}]: the robin boundary needs a spiked ensemble"));
                }
            }
        }
        if self.replicas.matrix < 2 {
            return bad("replicas.matrix must be at least 2".into());
        }
        if self.replicas.continuum < 2 {
            return bad("replicas.continuum must be at least 2".into());
        }
        if let Some(ds) = self.numerics.ds {
            if !(ds > 0.0) {
                return bad(format!("numerics.ds must be positive, got {ds}"));
            }
        }
        if let Some(h) = self.numerics.h {
            if !(h > 0.0) {
                return bad(format!("numerics.h must be positive, got {h}"));
            }
        }
        if self.output.file.is_empty() || self.output.file.contains(['/', '\\']) {
            return bad("output.file must be a plain file name".into());
        }
        Ok(())
    }

    pub fn params(&self, n: usize) -> ModelParams {
        ModelParams::new(self.model.kind, n, self.model.beta)
            .with_w(self.model.w)
            .with_nu(self.model.nu_target)
    }
}
