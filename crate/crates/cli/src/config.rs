//! Experiment and per-run configuration files (TOML).

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rsmote::pde::{PdeProblem, ProblemName};
use rsmote::samplers::{SamplerConfig, SamplerMethod};
use rsmote::trainer::TrainSchedule;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

/// Schedule fields shared by every run of an experiment. Point counts and
/// seeds come from the experiment matrix instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub sampling_iters: usize,
    pub adam_steps_per_iter: usize,
    pub lbfgs_steps_per_iter: usize,
    pub adam_lr: f64,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_boundary: Option<usize>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = TrainSchedule::new(1, 0);
        Self {
            sampling_iters: s.sampling_iters,
            adam_steps_per_iter: s.adam_steps_per_iter,
            lbfgs_steps_per_iter: s.lbfgs_steps_per_iter,
            adam_lr: s.adam_lr,
            gamma: s.gamma,
            n_boundary: s.n_boundary,
        }
    }
}

impl ScheduleSection {
    pub fn resolve(&self, n_interior: usize, seed: u64) -> TrainSchedule {
        TrainSchedule {
            adam_steps_per_iter: self.adam_steps_per_iter,
            lbfgs_steps_per_iter: self.lbfgs_steps_per_iter,
            sampling_iters: self.sampling_iters,
            adam_lr: self.adam_lr,
            gamma: self.gamma,
            n_interior,
            n_boundary: self.n_boundary,
            seed,
        }
    }
}

/// One experiment: a problem crossed with samplers, point counts and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemName,
    /// Spatial dimension, only for the dimensional problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub n_interior: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(rename = "sampler")]
    pub samplers: Vec<SamplerConfig>,
}

/// A config file that failed to parse or validate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: String,
    /// Dotted path of the offending field, e.g. `sampler[0].method`.
    pub field: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config {}", self.file)?;
        if let Some(line) = self.line {
            write!(f, ", line {line}")?;
        }
        if let Some(field) = &self.field {
            write!(f, ", field `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Finds the line that introduces `field` (last path segment) for
/// validation errors that carry no span.
fn line_of_field(text: &str, field: &str) -> Option<usize> {
    let key = field.rsplit('.').next()?.split('[').next()?;
    text.lines().position(|l| l.trim_start().starts_with(key)).map(|i| i + 1)
}

/// Parses TOML into `T`, reporting the field path and line on failure.
pub fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, file: &str) -> Result<T, ConfigError> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError {
            file: file.into(),
            field: (path != ".").then_some(path),
            line: inner.span().map(|s| line_of(text, s.start)),
            message: inner.message().trim().to_string(),
        }
    })
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, file: &str) -> Result<Self, ConfigError> {
        let cfg: Self = parse_toml(text, file)?;
        cfg.validate().map_err(|(field, message)| ConfigError {
            file: file.into(),
            line: line_of_field(text, &field),
            field: Some(field),
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let file = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| ConfigError {
            file: file.clone(),
            field: None,
            line: None,
            message: e.to_string(),
        })?;
        Self::from_toml(&text, &file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    /// Checks every cross-field contract; errors name the offending field.
    pub fn validate(&self) -> Result<(), (String, String)> {
        PdeProblem::<f64>::by_name(self.problem, self.dim).map_err(|e| ("dim".to_string(), e.to_string()))?;
        if self.samplers.is_empty() {
            return Err(("sampler".into(), "at least one [[sampler]] table is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(("seeds".into(), "seed list is empty".into()));
        }
        if self.n_interior.is_empty() || self.n_interior.contains(&0) {
            return Err(("n_interior".into(), "needs at least one positive point count".into()));
        }
        let mut labels = HashSet::new();
        for (i, s) in self.samplers.iter().enumerate() {
            s.validate().map_err(|e| (format!("sampler[{i}]"), e.to_string()))?;
            if !labels.insert(s.label()) {
                return Err((format!("sampler[{i}]"), format!("duplicate sampler {}", s.label())));
            }
            if s.method == SamplerMethod::Rad {
                if let Some(&n) = self.n_interior.iter().find(|&&n| n > s.rad_pool) {
                    return Err((format!("sampler[{i}].rad_pool"), format!("pool {} is smaller than n_interior {n}", s.rad_pool)));
                }
            }
        }
        let mut seen = HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(("seeds".into(), format!("seed {s} listed twice")));
        }
        for &n in &self.n_interior {
            self.schedule.resolve(n, 0).validate().map_err(|e| ("schedule".to_string(), e.to_string()))?;
        }
        Ok(())
    }

    /// Problem label such as `allen_cahn` or `elliptic-d10`.
    pub fn problem_label(&self) -> String {
        PdeProblem::<f64>::by_name(self.problem, self.dim).map(|p| p.label()).unwrap_or_else(|_| self.problem.to_string())
    }

    /// The full cross-product sampler × n_interior × seed, in that order.
    pub fn runs(&self, memory_probe: bool) -> Vec<RunSettings> {
        let mut out = Vec::new();
        for sampler in &self.samplers {
            for &n in &self.n_interior {
                for &seed in &self.seeds {
                    out.push(RunSettings {
                        problem: self.problem,
                        dim: self.dim,
                        memory_probe,
                        sampler: sampler.clone(),
                        schedule: self.schedule.resolve(n, seed),
                    });
                }
            }
        }
        out
    }
}

/// Fully resolved settings of one training run, snapshotted as
/// `config.toml` in the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub problem: ProblemName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub memory_probe: bool,
    pub sampler: SamplerConfig,
    pub schedule: TrainSchedule,
}

impl RunSettings {
    pub const FILE: &'static str = "config.toml";

    pub fn problem(&self) -> rsmote::Result<PdeProblem<f64>> {
        PdeProblem::by_name(self.problem, self.dim)
    }

    pub fn problem_label(&self) -> String {
        self.problem().map(|p| p.label()).unwrap_or_else(|_| self.problem.to_string())
    }

    /// `runs/<problem>/<sampler>/n<points>/seed<seed>` below the output root.
    pub fn relative_dir(&self) -> PathBuf {
        PathBuf::from("runs")
            .join(self.problem_label())
            .join(self.sampler.label())
            .join(format!("n{}", self.schedule.n_interior))
            .join(format!("seed{}", self.schedule.seed))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run spec serializes")
    }

    pub fn load(dir: &Path) -> Result<Self, ConfigError> {
        let path = dir.join(Self::FILE);
        let file = path.display().to_string();
        let text = fs::read_to_string(&path).map_err(|e| ConfigError {
            file: file.clone(),
            field: None,
            line: None,
            message: e.to_string(),
        })?;
        parse_toml(&text, &file)
    }
}
