//! TOML configuration files for the CLI: pipeline parameters, synthesis
//! configs, and benchmark suites. Every field has a default, so partial
//! files are fine.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::pipeline::{ClusteringMode, PipelineConfig};
use crate::synth::{NoiseModel, SceneConfig};
use crate::Result;

/// `synth` input: a scene plus an optional noise model applied on top of the
/// ideal predictions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub scene: SceneConfig,
    pub noise: Option<NoiseModel>,
}

/// One noise row of a benchmark suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub name: String,
    #[serde(flatten)]
    pub noise: NoiseModel,
}

/// Parameter sweep axes for the bench report.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub r_d: Vec<f64>,
    pub theta_d: Vec<u32>,
    pub k_secondaries: Vec<usize>,
}

/// `bench` input: a base scene and pipeline, seeds, noise levels, clustering
/// modes, and optional parameter sweeps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub scene: SceneConfig,
    pub pipeline: PipelineConfig,
    pub seeds: Vec<u64>,
    pub noise_levels: Vec<NoiseLevel>,
    pub modes: Vec<ClusteringMode>,
    pub sweep: SweepConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            scene: SceneConfig::default(),
            pipeline: PipelineConfig::default(),
            seeds: (0..5).collect(),
            noise_levels: vec![NoiseLevel {
                name: "clean".into(),
                noise: NoiseModel::default(),
            }],
            modes: vec![ClusteringMode::Binary, ClusteringMode::Distance],
            sweep: SweepConfig::default(),
        }
    }
}

pub fn parse_pipeline_config(text: &str) -> Result<PipelineConfig> {
    let config: PipelineConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}

pub fn load_pipeline_config(path: &Path) -> Result<PipelineConfig> {
    parse_pipeline_config(&std::fs::read_to_string(path)?)
}

pub fn parse_synth_config(text: &str) -> Result<SynthConfig> {
    let config: SynthConfig = toml::from_str(text)?;
    config.scene.validate()?;
    Ok(config)
}

pub fn load_synth_config(path: &Path) -> Result<SynthConfig> {
    parse_synth_config(&std::fs::read_to_string(path)?)
}

pub fn parse_suite_config(text: &str) -> Result<SuiteConfig> {
    let config: SuiteConfig = toml::from_str(text)?;
    config.scene.validate()?;
    config.pipeline.validate()?;
    if config.seeds.is_empty() {
        return Err(crate::Error::InvalidConfig("suite needs at least one seed".into()));
    }
    Ok(config)
}

pub fn load_suite_config(path: &Path) -> Result<SuiteConfig> {
    parse_suite_config(&std::fs::read_to_string(path)?)
}
