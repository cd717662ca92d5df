//! Run configuration: a flat `key = value` file layered over a preset, with
//! command-line overrides applied last.
//!
//! ```toml
//! preset = "fashion"        # or "mnist" (default)
//! arch = "784,400,200,10"   # or [784, 400, 200, 10]
//! epochs = 3
//! seed = 7
//! theta_out = 0.3
//! dataset_dir = "data/fashion"
//! metrics_dir = "runs/fashion"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dataset::{IMAGE_PIXELS, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::network::validate_arch;
use crate::snn::Hyperparams;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Layer widths, input first.
    pub arch: Vec<usize>,
    pub hp: Hyperparams,
    pub epochs: u32,
    pub seed: u64,
    pub dataset_dir: PathBuf,
    /// Written after every epoch; also the resume source.
    pub checkpoint: Option<PathBuf>,
    pub metrics_dir: Option<PathBuf>,
    pub svg: bool,
    /// Use only the first `n` training samples.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Record per-class firing rates during evaluation.
    pub record_activity: bool,
    /// Record input contributions for this many samples of the first epoch.
    pub contribution_samples: usize,
    /// Continue from `checkpoint` if it exists.
    pub resume: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arch: vec![IMAGE_PIXELS, 1600, 800, NUM_CLASSES],
            hp: Hyperparams::mnist(),
            epochs: 150,
            seed: 0,
            dataset_dir: PathBuf::from("data/mnist"),
            checkpoint: None,
            metrics_dir: None,
            svg: false,
            train_limit: None,
            test_limit: None,
            record_activity: false,
            contribution_samples: 0,
            resume: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Mnist,
    Fashion,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(Preset::Mnist),
            "fashion" | "fashion-mnist" | "fashion_mnist" => Ok(Preset::Fashion),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

impl Preset {
    pub fn config(self) -> RunConfig {
        match self {
            Preset::Mnist => RunConfig::default(),
            Preset::Fashion => RunConfig {
                hp: Hyperparams::fashion_mnist(),
                epochs: 600,
                dataset_dir: PathBuf::from("data/fashion"),
                ..RunConfig::default()
            },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ArchValue {
    List(Vec<usize>),
    Text(String),
}

/// Every key optional; unknown keys are an error so typos surface.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub preset: Option<String>,
    pub arch: Option<ArchValue>,
    pub epochs: Option<u32>,
    pub seed: Option<u64>,
    pub dataset_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub metrics_dir: Option<PathBuf>,
    pub svg: Option<bool>,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub record_activity: Option<bool>,
    pub contribution_samples: Option<usize>,
    pub resume: Option<bool>,
    pub beta_p: Option<f32>,
    pub beta_r: Option<f32>,
    pub theta_p: Option<f32>,
    pub theta_out: Option<f32>,
    pub theta_hid: Option<f32>,
    pub eta: Option<f32>,
    pub eta_decay: Option<f32>,
    pub p_drop_hidden: Option<f32>,
    pub p_drop_input: Option<f32>,
    pub time_steps: Option<usize>,
}

/// Parses `"784,400,10"` (whitespace tolerated).
pub fn parse_arch(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad layer width {w:?} in {text:?}")))
        })
        .collect()
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let overrides: ConfigOverrides =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let base = match &overrides.preset {
            Some(p) => p.parse::<Preset>()?.config(),
            None => RunConfig::default(),
        };
        base.with_overrides(overrides)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Preset, then config file, then command-line overrides. A preset given
    /// on the command line replaces the one named in the file.
    pub fn resolve(
        file: Option<&Path>,
        preset: Option<Preset>,
        cli: ConfigOverrides,
    ) -> Result<Self> {
        let from_file: ConfigOverrides = match file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => ConfigOverrides::default(),
        };
        let preset = match (preset, &from_file.preset) {
            (Some(p), _) => p,
            (None, Some(name)) => name.parse()?,
            (None, None) => Preset::Mnist,
        };
        preset
            .config()
            .with_overrides(from_file)?
            .with_overrides(cli)
    }

    /// Applies a set of overrides. A `preset` key is ignored here; it only
    /// selects the base when parsing a file.
    ///
    /// When `time_steps` changes and `beta_r` is not given, `beta_r` follows
    /// `1 - 1/T`.
    pub fn with_overrides(mut self, o: ConfigOverrides) -> Result<Self> {
        if let Some(arch) = o.arch {
            self.arch = match arch {
                ArchValue::List(v) => v,
                ArchValue::Text(s) => parse_arch(&s)?,
            };
        }
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = o.$field { self.$field = v; })* };
        }
        set!(
            epochs,
            seed,
            dataset_dir,
            svg,
            record_activity,
            contribution_samples,
            resume
        );
        macro_rules! set_opt {
            ($($field:ident),*) => { $(if o.$field.is_some() { self.$field = o.$field; })* };
        }
        set_opt!(checkpoint, metrics_dir, train_limit, test_limit);
        if let Some(t) = o.time_steps {
            self.hp.time_steps = t;
            if o.beta_r.is_none() && t > 0 {
                self.hp.beta_r = crate::snn::default_beta_r(t);
            }
        }
        macro_rules! set_hp {
            ($($field:ident),*) => { $(if let Some(v) = o.$field { self.hp.$field = v; })* };
        }
        set_hp!(
            beta_p,
            beta_r,
            theta_p,
            theta_out,
            theta_hid,
            eta,
            eta_decay,
            p_drop_hidden,
            p_drop_input
        );
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        validate_arch(&self.arch)?;
        self.hp.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }

    /// Additional checks for MNIST-family data: 784 inputs, 10 outputs.
    pub fn validate_for_images(&self) -> Result<()> {
        let first = self.arch[0];
        let last = *self.arch.last().expect("validated arch");
        if first != IMAGE_PIXELS || last != NUM_CLASSES {
            return Err(Error::Config(format!(
                "architecture {:?} must start at {IMAGE_PIXELS} and end at {NUM_CLASSES} for image data",
                self.arch
            )));
        }
        Ok(())
    }
}
