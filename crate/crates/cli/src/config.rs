use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use swimbladder::classifier::ForestParams;
use swimbladder::pipeline::PipelineConfig;

/// Optional settings read from a `key = value` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub roi_diameter: Option<usize>,
    pub r_min: Option<usize>,
    pub opening_radius: Option<usize>,
    pub folds: Option<usize>,
    pub n_estimators: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_split: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub features_per_split: Option<usize>,
    pub levels: Option<usize>,
    pub iterations_per_level: Option<usize>,
    pub bins: Option<usize>,
    pub initial_step: Option<f64>,
    pub initial_linear_step: Option<f64>,
    pub min_step: Option<f64>,
    pub sample_fraction: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Values given on the command line; they override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub roi_diameter: Option<usize>,
    pub r_min: Option<usize>,
    pub folds: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub jobs: Option<usize>,
    pub folds: usize,
    pub pipeline: PipelineConfig,
    pub forest: ForestParams,
}

impl Settings {
    pub fn resolve(file: &FileConfig, cli: &Overrides) -> Result<Self> {
        let seed = cli.seed.or(file.seed).unwrap_or(0);
        let mut pipeline = PipelineConfig::default();
        pipeline.roi_diameter = cli.roi_diameter.or(file.roi_diameter).unwrap_or(pipeline.roi_diameter);
        pipeline.r_min = cli.r_min.or(file.r_min).unwrap_or(pipeline.r_min);
        pipeline.opening_radius = file.opening_radius.unwrap_or(pipeline.opening_radius);
        let reg = &mut pipeline.registration;
        reg.seed = seed;
        reg.levels = file.levels.unwrap_or(reg.levels);
        reg.iterations_per_level = file.iterations_per_level.unwrap_or(reg.iterations_per_level);
        reg.bins = file.bins.unwrap_or(reg.bins);
        reg.initial_step = file.initial_step.unwrap_or(reg.initial_step);
        reg.initial_linear_step = file.initial_linear_step.unwrap_or(reg.initial_linear_step);
        reg.min_step = file.min_step.unwrap_or(reg.min_step);
        reg.sample_fraction = file.sample_fraction.unwrap_or(reg.sample_fraction);
        pipeline.validate()?;

        let defaults = ForestParams::default();
        let forest = ForestParams {
            n_estimators: file.n_estimators.unwrap_or(defaults.n_estimators),
            max_depth: file.max_depth.unwrap_or(defaults.max_depth),
            min_samples_split: file.min_samples_split.unwrap_or(defaults.min_samples_split),
            min_samples_leaf: file.min_samples_leaf.unwrap_or(defaults.min_samples_leaf),
            features_per_split: file.features_per_split.or(defaults.features_per_split),
            criterion: defaults.criterion,
            seed,
        };
        forest.validate()?;
        let folds = cli.folds.or(file.folds).unwrap_or(5);
        if folds < 2 {
            bail!("folds must be at least 2");
        }
        let jobs = cli.jobs.or(file.jobs);
        if jobs == Some(0) {
            bail!("--jobs must be at least 1");
        }
        Ok(Self {
            seed,
            jobs,
            folds,
            pipeline,
            forest,
        })
    }
}
