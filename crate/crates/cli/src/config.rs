//! Run configuration: defaults, then an INI-style file, then command-line
//! flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use truckvol_core::model::{Hyperparameters, MaxFeatures};
use truckvol_core::synth::SynthConfig;
use truckvol_core::validate::DEFAULT_NOISE_LEVELS;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub links: Option<PathBuf>,
    pub blocks: Option<PathBuf>,
    pub counties: Option<PathBuf>,
    pub urban_areas: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    /// When set, `train` reads the tuned parameters written by `tune`.
    pub enabled: bool,
    pub n_iter: usize,
    pub folds: usize,
    pub n_initial: usize,
    pub sample_frac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub test_frac: f64,
    pub cv_folds: usize,
    pub lowess_frac: f64,
    pub noise_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub seed: u64,
    pub threads: Option<usize>,
    pub buffer_m: f64,
    pub arc_segments: usize,
    pub mdv_params: Hyperparameters,
    pub hdv_params: Hyperparameters,
    pub tuning: Tuning,
    pub validation: Validation,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            seed: 42,
            threads: None,
            buffer_m: 250.0,
            arc_segments: 16,
            mdv_params: Hyperparameters::mdv_default(),
            hdv_params: Hyperparameters::hdv_default(),
            tuning: Tuning { enabled: false, n_iter: 48, folds: 3, n_initial: 10, sample_frac: 1.0 },
            validation: Validation {
                test_frac: 0.2,
                cv_folds: 5,
                lowess_frac: 2.0 / 3.0,
                noise_levels: DEFAULT_NOISE_LEVELS.to_vec(),
            },
            synth: SynthConfig::default(),
        }
    }
}

fn bad(section: &str, key: &str, value: &str) -> CliError {
    CliError::Usage(format!("config [{section}] {key} = `{value}` is not valid"))
}

fn parse<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| bad(section, key, value))
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(bad(section, key, value)),
    }
}

pub fn parse_levels(value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse("validation", "noise_levels", s))
        .collect()
}

fn set_param(p: &mut Hyperparameters, section: &str, key: &str, value: &str) -> Result<(), CliError> {
    match key {
        "n_estimators" => p.n_estimators = parse(section, key, value)?,
        "max_depth" => {
            p.max_depth = match value.trim().to_ascii_lowercase().as_str() {
                "" | "none" => None,
                v => Some(parse(section, key, v)?),
            }
        }
        "min_samples_split" => p.min_samples_split = parse(section, key, value)?,
        "min_samples_leaf" => p.min_samples_leaf = parse(section, key, value)?,
        "max_features" => p.max_features = MaxFeatures::from_str(value).map_err(|_| bad(section, key, value))?,
        _ => return Err(CliError::Usage(format!("unknown config key [{section}] {key}"))),
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let ini = Ini::load_from_file(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        let base = path.parent().unwrap_or(Path::new(""));
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("run");
            for (key, value) in props.iter() {
                cfg.set(section, key, value, base)?;
            }
        }
        Ok(cfg)
    }

    /// Relative paths in a config file resolve against the file's directory.
    fn set(&mut self, section: &str, key: &str, value: &str, base: &Path) -> Result<(), CliError> {
        let path = || Some(base.join(value.trim()));
        match (section, key) {
            ("paths", "links") => self.paths.links = path(),
            ("paths", "blocks") => self.paths.blocks = path(),
            ("paths", "counties") => self.paths.counties = path(),
            ("paths", "urban_areas") => self.paths.urban_areas = path(),
            ("paths", "out_dir") => self.paths.out_dir = path(),
            ("run", "seed") => self.seed = parse(section, key, value)?,
            ("run", "threads") => self.threads = Some(parse(section, key, value)?),
            ("density", "buffer_m") => self.buffer_m = parse(section, key, value)?,
            ("density", "arc_segments") => self.arc_segments = parse(section, key, value)?,
            ("mdv_params", k) => set_param(&mut self.mdv_params, section, k, value)?,
            ("hdv_params", k) => set_param(&mut self.hdv_params, section, k, value)?,
            ("tuning", "enabled") => self.tuning.enabled = parse_bool(section, key, value)?,
            ("tuning", "n_iter") => self.tuning.n_iter = parse(section, key, value)?,
            ("tuning", "folds") => self.tuning.folds = parse(section, key, value)?,
            ("tuning", "n_initial") => self.tuning.n_initial = parse(section, key, value)?,
            ("tuning", "sample_frac") => self.tuning.sample_frac = parse(section, key, value)?,
            ("validation", "test_frac") => self.validation.test_frac = parse(section, key, value)?,
            ("validation", "cv_folds") => self.validation.cv_folds = parse(section, key, value)?,
            ("validation", "lowess_frac") => self.validation.lowess_frac = parse(section, key, value)?,
            ("validation", "noise_levels") => self.validation.noise_levels = parse_levels(value)?,
            ("synth", "n_links") => self.synth.n_links = parse(section, key, value)?,
            ("synth", "n_blocks") => self.synth.n_blocks = parse(section, key, value)?,
            ("synth", "n_states") => self.synth.n_states = parse(section, key, value)?,
            ("synth", "counties_per_state") => self.synth.counties_per_state = parse(section, key, value)?,
            ("synth", "missing_frac") => self.synth.missing_frac = parse(section, key, value)?,
            ("synth", "noise") => self.synth.noise = parse(section, key, value)?,
            ("synth", "total_sigma") => self.synth.total_sigma = parse(section, key, value)?,
            ("synth", "dirty_frac") => self.synth.dirty_frac = parse(section, key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key [{section}] {key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        self.mdv_params.validate().map_err(|e| CliError::Usage(format!("mdv_params: {e}")))?;
        self.hdv_params.validate().map_err(|e| CliError::Usage(format!("hdv_params: {e}")))?;
        if !(self.buffer_m > 0.0 && self.buffer_m.is_finite()) {
            return usage(format!("buffer_m must be positive, got {}", self.buffer_m));
        }
        if self.arc_segments < 4 {
            return usage(format!("arc_segments must be at least 4, got {}", self.arc_segments));
        }
        if !(self.tuning.sample_frac > 0.0 && self.tuning.sample_frac <= 1.0) {
            return usage(format!("tuning sample_frac must be in (0, 1], got {}", self.tuning.sample_frac));
        }
        if !(self.validation.test_frac > 0.0 && self.validation.test_frac < 1.0) {
            return usage(format!("test_frac must be in (0, 1), got {}", self.validation.test_frac));
        }
        if !(self.validation.lowess_frac > 0.0 && self.validation.lowess_frac <= 1.0) {
            return usage(format!("lowess_frac must be in (0, 1], got {}", self.validation.lowess_frac));
        }
        if self.threads == Some(0) {
            return usage("threads must be positive".into());
        }
        Ok(())
    }
}
