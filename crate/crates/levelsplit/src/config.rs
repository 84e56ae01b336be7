//! Experiment configuration (JSON, schema version 1).
//!
//! ```json
//! {
//!   "version": 1,
//!   "name": "shared-optimal",
//!   "model": { "family": "tandem-shared", "lambda": 1.0, "mu1": 4.5, "mu2": 4.5 },
//!   "n": [30, 40, 50],
//!   "runs": 20000,
//!   "mechanism": { "canonical": 2.0 },
//!   "subsolution": { "preset": "optimal", "scale": 1.0 },
//!   "seed": 1
//! }
//! ```
//!
//! Optional fields: `delta` (default `ln 2`), `workers` (default: available
//! parallelism), `cap` (default 10^6), `truncation` (default 4),
//! `probe_resolution` (default 33), `out` (default `results/<name>`).

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use levelsplit_core::importance::Hamiltonian;
use levelsplit_core::mechanism::MechanismEntry;
use levelsplit_core::{
    AffinePiece, Buffer, ImportanceScheme, ModeRates, ModelKind, ModelSpec, SplittingMechanism, Subsolution,
    TandemRates, DEFAULT_PARTICLE_CAP,
};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelConfig,
    pub n: Vec<u32>,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default = "default_mechanism")]
    pub mechanism: MechanismConfig,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub subsolution: SubsolutionConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_truncation")]
    pub truncation: u32,
    #[serde(default = "default_probe_resolution")]
    pub probe_resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_runs() -> u64 {
    20_000
}
fn default_mechanism() -> MechanismConfig {
    MechanismConfig::Canonical(2.0)
}
fn default_delta() -> f64 {
    std::f64::consts::LN_2
}
fn default_seed() -> u64 {
    1
}
fn default_cap() -> usize {
    DEFAULT_PARTICLE_CAP
}
fn default_truncation() -> u32 {
    levelsplit_core::oracle::DEFAULT_TRUNCATION
}
fn default_probe_resolution() -> usize {
    33
}
fn default_mode() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    TandemShared {
        lambda: f64,
        mu1: f64,
        mu2: f64,
    },
    TandemSeparate {
        lambda: f64,
        mu1: f64,
        mu2: f64,
    },
    ModulatedTandem {
        buffer: Buffer,
        modes: Vec<ModeConfig>,
        #[serde(default = "default_mode")]
        initial_mode: u8,
    },
    GaussianMean {
        normals: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub switch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismConfig {
    Canonical(f64),
    Table { entries: Vec<MechanismEntry>, bound: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubsolutionConfig {
    Preset {
        preset: Preset,
        #[serde(default = "unit")]
        scale: f64,
    },
    Pieces {
        pieces: Vec<AffinePiece>,
        #[serde(default = "unit")]
        scale: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// The closed-form optimal subsolution of the model family.
    Optimal,
    /// `gamma - gamma min(x1, x2)`, the rescaled separate-buffer target.
    MinCoordinate,
}

/// Everything a run needs, validated.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// One model per configured `n`, in order.
    pub models: Vec<ModelSpec>,
    pub subsolution: Subsolution,
    pub mechanism: SplittingMechanism,
    pub scheme: ImportanceScheme,
    pub hamiltonian: Option<Hamiltonian>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in configuration {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("results").join(&self.name))
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or_else(crate::batch::default_workers).max(1)
    }

    fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            bail!("field `version`: unsupported schema version {} (expected {SCHEMA_VERSION})", self.version);
        }
        if self.n.is_empty() {
            bail!("field `n`: at least one value is required");
        }
        if self.runs < 2 {
            bail!("field `runs`: at least 2 runs are required, got {}", self.runs);
        }
        if self.cap == 0 {
            bail!("field `cap`: must be positive");
        }
        self.build()?;
        Ok(())
    }

    fn model_kind(&self) -> Result<ModelKind> {
        Ok(match &self.model {
            ModelConfig::TandemShared { lambda, mu1, mu2 } => {
                ModelKind::Tandem { rates: TandemRates::new(*lambda, *mu1, *mu2), buffer: Buffer::Shared }
            }
            ModelConfig::TandemSeparate { lambda, mu1, mu2 } => {
                ModelKind::Tandem { rates: TandemRates::new(*lambda, *mu1, *mu2), buffer: Buffer::Separate }
            }
            ModelConfig::ModulatedTandem { buffer, modes, initial_mode } => {
                let [a, b] = modes.as_slice() else {
                    bail!("field `model.modes`: exactly two modulation states are required, got {}", modes.len());
                };
                let conv =
                    |m: &ModeConfig| ModeRates { rates: TandemRates::new(m.lambda, m.mu1, m.mu2), switch: m.switch };
                ModelKind::Modulated { modes: [conv(a), conv(b)], buffer: *buffer, initial_mode: *initial_mode }
            }
            ModelConfig::GaussianMean { normals } => ModelKind::GaussianMean { normals: normals.clone() },
        })
    }

    /// Builds and cross-validates every component.
    pub fn build(&self) -> Result<Experiment> {
        let kind = self.model_kind()?;
        let models = self
            .n
            .iter()
            .map(|&n| ModelSpec::new(kind.clone(), n).map_err(|e| anyhow!("field `model`/`n`: {e}")))
            .collect::<Result<Vec<_>>>()?;
        let first = &models[0];

        let mechanism = match &self.mechanism {
            MechanismConfig::Canonical(u) => SplittingMechanism::canonical(*u),
            MechanismConfig::Table { entries, bound } => SplittingMechanism::new(entries.clone(), *bound),
        }
        .map_err(|e| anyhow!("field `mechanism`: {e}"))?;

        let subsolution = match &self.subsolution {
            SubsolutionConfig::Preset { preset: Preset::Optimal, scale } => Subsolution::optimal_for(first)
                .ok_or_else(|| {
                    anyhow!("field `subsolution`: no closed-form optimal subsolution for this model; list the pieces")
                })?
                .with_scale(*scale),
            SubsolutionConfig::Preset { preset: Preset::MinCoordinate, scale } => match first.kind() {
                ModelKind::Tandem { rates, .. } => Subsolution::min_coordinate(rates).with_scale(*scale),
                _ => bail!("field `subsolution`: preset `min-coordinate` needs a tandem model"),
            },
            SubsolutionConfig::Pieces { pieces, scale } => Subsolution::new(pieces.clone(), *scale),
        }
        .map_err(|e| anyhow!("field `subsolution`: {e}"))?;
        if subsolution.dimension() != first.dimension() {
            bail!(
                "field `subsolution`: pieces have dimension {}, the model needs {}",
                subsolution.dimension(),
                first.dimension()
            );
        }

        let scheme = ImportanceScheme::from_subsolution(subsolution.clone(), self.delta, mechanism.mean_offspring())
            .map_err(|e| anyhow!("field `delta`/`mechanism`: {e}"))?;
        Ok(Experiment { hamiltonian: Hamiltonian::for_model(first), models, subsolution, mechanism, scheme })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHARED: &str = r#"{
        "version": 1,
        "name": "t1",
        "model": { "family": "tandem-shared", "lambda": 1.0, "mu1": 4.5, "mu2": 4.5 },
        "n": [30, 40, 50],
        "runs": 20000,
        "mechanism": { "canonical": 2.0 },
        "subsolution": { "preset": "optimal" }
    }"#;

    fn err(text: &str) -> String {
        format!("{:#}", ExperimentConfig::parse(text).unwrap_err())
    }

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::parse(SHARED).unwrap();
        assert_eq!(c.delta, std::f64::consts::LN_2);
        assert_eq!(c.cap, 1_000_000);
        assert_eq!(c.out_dir(), PathBuf::from("results/t1"));
        let e = c.build().unwrap();
        assert_eq!(e.models.len(), 3);
        assert_eq!(e.scheme.mean_offspring(), 2.0);
        assert!(e.hamiltonian.is_some());
    }

    #[test]
    fn empty_n_is_rejected() {
        let text = SHARED.replace("[30, 40, 50]", "[]");
        assert!(err(&text).contains("field `n`"), "{}", err(&text));
    }

    #[test]
    fn offending_fields_are_named() {
        let text = SHARED.replace("\"mu1\": 4.5", "\"mu1\": 0.5");
        assert!(err(&text).contains("field `model`"));
        let text = SHARED.replace("{ \"canonical\": 2.0 }", "{ \"canonical\": 0.5 }");
        assert!(err(&text).contains("field `mechanism`"));
        let text = SHARED.replace("{ \"preset\": \"optimal\" }", "{ \"preset\": \"optimal\", \"scale\": 2 }");
        assert!(err(&text).contains("field `subsolution`"));
        let text = SHARED.replace("\"version\": 1", "\"version\": 7");
        assert!(err(&text).contains("field `version`"));
        let text = SHARED.replace("\"runs\": 20000", "\"runs\": 20000, \"bogus\": 1");
        assert!(err(&text).contains("bogus"));
    }

    #[test]
    fn modulated_needs_explicit_pieces() {
        let text = r#"{
            "version": 1,
            "model": { "family": "modulated-tandem", "buffer": "shared", "modes": [
                { "lambda": 1, "mu1": 3.5, "mu2": 2.5, "switch": 0.2 },
                { "lambda": 1, "mu1": 4.5, "mu2": 4.5, "switch": 0.5 } ] },
            "n": [30],
            "subsolution": { "preset": "optimal" }
        }"#;
        assert!(err(text).contains("list the pieces"));
        let ok = text.replace(
            "{ \"preset\": \"optimal\" }",
            "{ \"pieces\": [ { \"offset\": 1.00029, \"gradient\": [-1.00029, -1.00029] } ] }",
        );
        let c = ExperimentConfig::parse(&ok).unwrap();
        assert!(c.build().unwrap().hamiltonian.is_none());
    }

    #[test]
    fn table_mechanism() {
        let text = SHARED.replace(
            "{ \"canonical\": 2.0 }",
            r#"{ "table": { "entries": [ { "probability": 1.0, "weights": [0.5, 0.5] } ], "bound": 2 } }"#,
        );
        let c = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(c.build().unwrap().mechanism.mean_offspring(), 2.0);
    }
}
