use std::path::{Path, PathBuf};

use nsdecode::corpus::CorpusOptions;
use nsdecode::data::{Condition, Scenario};
use nsdecode::features::{FrameSpec, VadParams};
use nsdecode::hierarchy::{HyperParams, Scheme};
use nsdecode::preprocess::PreprocessConfig;
use nsdecode::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Dataset manifest; `synth` writes the dataset next to it.
    pub manifest: PathBuf,
    /// Every command writes only below this directory.
    pub output: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthSection {
    #[serde(default = "one")]
    pub n_subjects: usize,
    #[serde(default = "one")]
    pub n_sessions: usize,
    #[serde(default = "ten")]
    pub n_trials: usize,
    #[serde(flatten)]
    pub config: SynthConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { n_subjects: 1, n_sessions: 1, n_trials: 10, config: SynthConfig::default() }
    }
}

fn one() -> usize {
    1
}

fn ten() -> usize {
    10
}

fn all_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

fn all_scenarios() -> Vec<Scenario> {
    Scenario::ALL.to_vec()
}

fn heard() -> Vec<Condition> {
    vec![Condition::Heard]
}

fn ratio() -> f64 {
    0.7
}

/// One experiment, read from a TOML file. `seed` has no default.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub frame_spec: FrameSpec,
    #[serde(default)]
    pub vad: VadParams,
    #[serde(default = "all_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "all_scenarios")]
    pub scenarios: Vec<Scenario>,
    #[serde(default = "heard")]
    pub conditions: Vec<Condition>,
    #[serde(default = "ratio")]
    pub ratio: f64,
    #[serde(default)]
    pub hyper: HyperParams,
}

impl ExperimentConfig {
    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.manifest, &mut cfg.paths.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.synth.config.seed = cfg.seed;
        cfg.hyper.seed = cfg.seed;
        cfg.hyper.validate().map_err(|e| UsageError(e.to_string()))?;
        cfg.frame_spec.validate().map_err(|e| UsageError(e.to_string()))?;
        if !(cfg.ratio > 0.0 && cfg.ratio < 1.0) {
            return Err(UsageError(format!("ratio {} outside (0, 1)", cfg.ratio)).into());
        }
        Ok(cfg)
    }

    pub fn corpus_options(&self) -> CorpusOptions {
        CorpusOptions { preprocess: self.preprocess.clone(), frame_spec: self.frame_spec, vad: self.vad.clone() }
    }

    pub fn require_manifest(&self) -> anyhow::Result<()> {
        if !self.paths.manifest.is_file() {
            anyhow::bail!("manifest {} does not exist", self.paths.manifest.display());
        }
        Ok(())
    }
}
