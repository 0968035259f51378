//! `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may appear
//! once. A profile supplies the defaults that the file then overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ampsure_core::damp::{DAmpConfig, Estimator, SIGMA_SWITCH, SIGMA_SWITCH_MRI};
use ampsure_core::learn::{Arch, TrainConfig};
use ampsure_core::measure::OperatorKind;
use ampsure_core::rng::derive_seed;

use crate::error::{Error, Result};

pub const DEFAULT_PATCH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Gaussian,
    Cdp,
    Mri,
}

impl Profile {
    pub fn operator(self) -> OperatorKind {
        match self {
            Profile::Gaussian => OperatorKind::GaussianDense,
            Profile::Cdp => OperatorKind::CodedDiffraction,
            Profile::Mri => OperatorKind::RadialFourierMri,
        }
    }

    pub fn sigma_switch(self) -> f64 {
        match self {
            Profile::Mri => SIGMA_SWITCH_MRI,
            _ => SIGMA_SWITCH,
        }
    }

    pub fn outer_rounds(self) -> usize {
        match self {
            Profile::Mri => 1,
            _ => 2,
        }
    }

    fn train(self) -> TrainConfig {
        match self {
            Profile::Mri => TrainConfig::mri(),
            _ => TrainConfig::default(),
        }
    }

    fn rate(self) -> f64 {
        match self {
            Profile::Mri => 0.4,
            _ => 0.25,
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Profile::Gaussian),
            "cdp" => Ok(Profile::Cdp),
            "mri" => Ok(Profile::Mri),
            _ => Err(Error::Config(format!("unknown profile {s:?} (gaussian, cdp, mri)"))),
        }
    }
}

/// Recovery method reported in the metrics table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    /// D-AMP with the block-DCT hard-threshold denoiser only.
    Hard,
    /// D-AMP with DCT soft thresholding only.
    Soft,
    /// D-AMP with learned weights below the σ switch.
    Learned,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Hard => "damp-hard",
            Method::Soft => "damp-soft",
            Method::Learned => "ldamp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "damp-hard" | "hard" => Ok(Method::Hard),
            "damp-soft" | "soft" => Ok(Method::Soft),
            "ldamp" | "learned" => Ok(Method::Learned),
            _ => Err(Error::Config(format!("unknown method {s:?} (damp-hard, damp-soft, ldamp)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub operator: OperatorKind,
    pub rate: f64,
    pub operator_seed: u64,
    /// Side of the square images; dataset images are center-cropped to it.
    pub image_size: usize,
    /// Synthetic phantom count when no dataset is given.
    pub num_images: usize,
    pub dataset: Option<PathBuf>,
    pub subsample: Option<usize>,
    pub noise_sigma: f64,
    pub damp: DAmpConfig,
    pub train: TrainConfig,
    /// `None` until resolved against the image size.
    pub patch_size: Option<usize>,
    pub arch: Arch,
    pub pretrain_epochs: usize,
    pub pretrain_learning_rate: f64,
    pub weights: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub out: PathBuf,
    pub emit_histograms: bool,
    pub record_sigma_true: bool,
    /// Off makes the metrics CSV byte-stable across reruns.
    pub record_runtime: bool,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(profile: Profile) -> Self {
        let damp = DAmpConfig {
            sigma_switch: profile.sigma_switch(),
            ..DAmpConfig::default()
        };
        let mut train = profile.train();
        train.outer_rounds = profile.outer_rounds();
        Self {
            profile,
            operator: profile.operator(),
            rate: profile.rate(),
            operator_seed: 0,
            image_size: 64,
            num_images: 4,
            dataset: None,
            subsample: None,
            noise_sigma: 0.0,
            damp,
            train,
            patch_size: None,
            arch: Arch::LearnedShrinkage,
            pretrain_epochs: 20,
            pretrain_learning_rate: 0.01,
            weights: None,
            methods: vec![Method::Hard, Method::Soft],
            out: PathBuf::from("ampsure-out"),
            emit_histograms: false,
            record_sigma_true: true,
            record_runtime: true,
            sigmas: vec![10.0, 25.0, 50.0],
            trials: 2000,
            seed: 0,
        }
    }

    /// Reads a config file on top of `profile`, or the file's own
    /// `profile` key when `profile` is `None`.
    pub fn from_file(path: &Path, profile: Option<Profile>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::from_text(&text, profile)
    }

    pub fn from_text(text: &str, profile: Option<Profile>) -> Result<Self> {
        let mut entries = parse_pairs(text)?;
        let file_profile = entries.remove("profile").map(|v| v.parse()).transpose()?;
        let mut cfg = Self::new(profile.or(file_profile).unwrap_or(Profile::Gaussian));
        if let Some(seed) = entries.remove("seed") {
            cfg.set_seed(parse(&seed, "seed")?);
        }
        for (key, value) in &entries {
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Sets every seed that is derived from the master seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.operator_seed = derive_seed(seed, 1);
        self.damp.probe_seed = derive_seed(seed, 2);
        self.train.seed = derive_seed(seed, 3);
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "operator" => {
                self.operator = match value {
                    "gaussian" => OperatorKind::GaussianDense,
                    "cdp" => OperatorKind::CodedDiffraction,
                    "mri" => OperatorKind::RadialFourierMri,
                    _ => return Err(Error::Config(format!("unknown operator {value:?} (gaussian, cdp, mri)"))),
                }
            }
            "rate" => self.rate = parse(value, key)?,
            "operator_seed" => self.operator_seed = parse(value, key)?,
            "image_size" => self.image_size = parse(value, key)?,
            "num_images" => self.num_images = parse(value, key)?,
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "subsample" => self.subsample = Some(parse(value, key)?),
            "noise_sigma" => self.noise_sigma = parse(value, key)?,
            "iterations" => self.damp.iterations = parse(value, key)?,
            "estimator" => {
                self.damp.estimator = match value {
                    "measurement" => Estimator::MeasurementDomain,
                    "image" => Estimator::ImageDomainReal,
                    _ => return Err(Error::Config(format!("unknown estimator {value:?} (measurement, image)"))),
                }
            }
            "sigma_switch" => self.damp.sigma_switch = parse(value, key)?,
            "probe_epsilon" => self.damp.probe_epsilon_factor = parse(value, key)?,
            "probe_seed" => self.damp.probe_seed = parse(value, key)?,
            "clamp" => self.damp.clamp = parse_bool(value, key)?,
            "epochs" => self.train.epochs = parse(value, key)?,
            "batch_size" => self.train.batch_size = parse(value, key)?,
            "learning_rate" => self.train.learning_rate = parse(value, key)?,
            "lr_drop_factor" => self.train.lr_drop_factor = parse(value, key)?,
            "lr_drop_epoch" => self.train.lr_drop_epoch = parse(value, key)?,
            "patch_size" => self.patch_size = Some(parse(value, key)?),
            "patches_per_image" => self.train.patches_per_image = parse(value, key)?,
            "sigma_max" => self.train.sigma_max = parse(value, key)?,
            "outer_rounds" => self.train.outer_rounds = parse(value, key)?,
            "sure_epsilon" => self.train.epsilon_factor = parse(value, key)?,
            "train_seed" => self.train.seed = parse(value, key)?,
            "arch" => {
                self.arch = match value {
                    "shrinkage" => Arch::LearnedShrinkage,
                    "cnn" => Arch::SmallResidualCnn,
                    _ => return Err(Error::Config(format!("unknown arch {value:?} (shrinkage, cnn)"))),
                }
            }
            "pretrain_epochs" => self.pretrain_epochs = parse(value, key)?,
            "pretrain_learning_rate" => self.pretrain_learning_rate = parse(value, key)?,
            "weights" => self.weights = Some(PathBuf::from(value)),
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "out" => self.out = PathBuf::from(value),
            "histograms" => self.emit_histograms = parse_bool(value, key)?,
            "record_sigma_true" => self.record_sigma_true = parse_bool(value, key)?,
            "record_runtime" => self.record_runtime = parse_bool(value, key)?,
            "sigmas" => {
                self.sigmas = value
                    .split(',')
                    .map(|s| parse(s.trim(), key))
                    .collect::<Result<_>>()?
            }
            "trials" => self.trials = parse(value, key)?,
            "seed" => self.set_seed(parse(value, key)?),
            "profile" => return Err(Error::Config("profile must be set before other keys".into())),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Training configuration with the patch size resolved to
    /// `min(50, image_size)` unless given.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            patch_size: self.patch_size.unwrap_or(DEFAULT_PATCH.min(self.image_size)),
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::Config(format!("rate must be in (0, 1], got {}", self.rate)));
        }
        if self.image_size == 0 {
            return Err(Error::Config("image_size must be positive".into()));
        }
        if self.dataset.is_none() && self.num_images == 0 {
            return Err(Error::Config("num_images must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.trials < 2 {
            return Err(Error::Config("trials must be at least 2".into()));
        }
        self.damp.validate()?;
        self.train_config().validate()?;
        Ok(())
    }
}

fn parse<T: FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(value: &str, key: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

/// Splits `key = value` lines. Values keep inner whitespace.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`", i + 1)));
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if out.insert(key.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key:?}", i + 1)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_defaults() {
        let g = ExperimentConfig::new(Profile::Gaussian);
        assert_eq!((g.damp.sigma_switch, g.train.outer_rounds), (55.0, 2));
        let c = ExperimentConfig::new(Profile::Cdp);
        assert_eq!((c.damp.sigma_switch, c.train.outer_rounds), (55.0, 2));
        let m = ExperimentConfig::new(Profile::Mri);
        assert_eq!((m.damp.sigma_switch, m.train.outer_rounds, m.train.sigma_max), (10.0, 1, 10.0));
    }

    #[test]
    fn patch_size_follows_image() {
        let mut c = ExperimentConfig::new(Profile::Gaussian);
        c.image_size = 32;
        assert_eq!(c.train_config().patch_size, 32);
        c.image_size = 180;
        assert_eq!(c.train_config().patch_size, 50);
        c.patch_size = Some(40);
        assert_eq!(c.train_config().patch_size, 40);
    }

    #[test]
    fn bad_lines() {
        assert!(parse_pairs("rate 0.2").is_err());
        assert!(parse_pairs("rate = 1\nrate = 2").is_err());
        assert!(parse_pairs(" = 3").is_err());
        assert!(ExperimentConfig::from_text("colour = red", None).is_err());
        assert!(ExperimentConfig::from_text("rate = fast", None).is_err());
    }
}
