//! Settings resolution: flag > `PCF_*` environment variable > config file > default.
//!
//! clap already resolves flags over environment variables, so every
//! tunable arrives here as an `Option` and falls back to the config file,
//! then to the built-in default.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use clap::Args;
use pcf_core::bcs_builder::BuilderConfig;
use pcf_core::downstream::MultiHomogConfig;
use pcf_core::pcf::PcfConfig;
use pcf_core::probmodel::{GmmConstraints, OptimizerConfig};
use serde::Serialize;

use crate::error::{AtPath, CliError, CliResult};

/// Plain `key = value` lines; `#` starts a comment. Keys are matched with
/// `-` and `_` treated alike.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('-', "_")
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected `key = value`",
                    n + 1
                )));
            };
            let v = v.trim().trim_matches('"');
            values.insert(normalize_key(k), v.to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(pcf_core::PcfError::from)
                    .at(p)?;
                Self::parse(&text)
            }
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        match self.values.get(&normalize_key(key)) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}"))),
        }
    }

    /// `flag` if given, else the file's value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }
}

/// Model and pipeline tunables shared by `encode` and `pcf`.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Pooling kernel size (odd); vertices are sampled within (k-1)/2 pixels.
    #[arg(long, env = "PCF_K")]
    pub k: Option<usize>,
    /// Distance-map scale.
    #[arg(long, env = "PCF_GAMMA")]
    pub gamma: Option<f64>,
    /// Confidence radius R.
    #[arg(long = "radius-r", env = "PCF_RADIUS_R")]
    pub radius_r: Option<f64>,
    #[arg(long = "delta-plus", env = "PCF_DELTA_PLUS")]
    pub delta_plus: Option<f64>,
    #[arg(long = "delta-minus", env = "PCF_DELTA_MINUS")]
    pub delta_minus: Option<f64>,
    #[arg(long, env = "PCF_MARGIN")]
    pub margin: Option<f64>,
    /// Confidence binarization threshold.
    #[arg(long, env = "PCF_THRESHOLD")]
    pub threshold: Option<f64>,
    /// Patch size of the per-patch mixture fits.
    #[arg(long, env = "PCF_PATCH")]
    pub patch: Option<usize>,
    #[arg(long = "max-systems", env = "PCF_MAX_SYSTEMS")]
    pub max_systems: Option<usize>,
    #[arg(long = "max-reselect", env = "PCF_MAX_RESELECT")]
    pub max_reselect: Option<usize>,
    /// Mean confidence around an origin below which it is re-selected.
    #[arg(long = "probe-threshold", env = "PCF_PROBE_THRESHOLD")]
    pub probe_threshold: Option<f64>,
    #[arg(long, env = "PCF_ITERATIONS")]
    pub iterations: Option<usize>,
    #[arg(long = "learning-rate", env = "PCF_LEARNING_RATE")]
    pub learning_rate: Option<f64>,
    #[arg(long, env = "PCF_SEED")]
    pub seed: Option<u64>,
}

/// Fully resolved and validated settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunConfig {
    pub k: usize,
    pub gamma: f64,
    pub radius_r: f64,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub margin: f64,
    pub threshold: f64,
    pub patch: usize,
    pub max_systems: usize,
    pub max_reselect: usize,
    pub probe_threshold: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn resolve(args: &ModelArgs, file: &ConfigFile) -> CliResult<Self> {
        let b = BuilderConfig::default();
        let c = GmmConstraints::<f64>::default();
        let o = OptimizerConfig::default();
        let p = PcfConfig::default();
        let cfg = Self {
            k: file.pick(args.k, "k", b.k)?,
            gamma: file.pick(args.gamma, "gamma", 0.03)?,
            radius_r: file.pick(args.radius_r, "radius_r", c.radius_r)?,
            delta_plus: file.pick(args.delta_plus, "delta_plus", c.delta_plus)?,
            delta_minus: file.pick(args.delta_minus, "delta_minus", c.delta_minus)?,
            margin: file.pick(args.margin, "margin", c.margin)?,
            threshold: file.pick(args.threshold, "threshold", p.threshold)?,
            patch: file.pick(args.patch, "patch", p.patch_size)?,
            max_systems: file.pick(args.max_systems, "max_systems", p.max_systems)?,
            max_reselect: file.pick(args.max_reselect, "max_reselect", b.max_reselect)?,
            probe_threshold: file.pick(
                args.probe_threshold,
                "probe_threshold",
                b.probe_threshold,
            )?,
            iterations: file.pick(args.iterations, "iterations", o.iterations)?,
            learning_rate: file.pick(args.learning_rate, "learning_rate", o.learning_rate)?,
            seed: file.pick(args.seed, "seed", 0)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        let usage = |e: pcf_core::PcfError| CliError::Usage(e.to_string());
        self.constraints().map_err(usage)?;
        self.builder().validate().map_err(usage)?;
        let checks = [
            (self.gamma > 0.0, "gamma must be > 0"),
            (
                (0.0..=1.0).contains(&self.threshold),
                "threshold must lie in [0, 1]",
            ),
            (self.patch >= 4, "patch must be >= 4"),
            (self.max_systems >= 1, "max-systems must be >= 1"),
            (self.learning_rate > 0.0, "learning-rate must be > 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(CliError::Usage((*msg).to_string())),
            None => Ok(()),
        }
    }

    pub fn constraints(&self) -> pcf_core::Result<GmmConstraints<f64>> {
        GmmConstraints::new(
            self.delta_plus,
            self.delta_minus,
            self.margin,
            self.radius_r,
        )
    }

    pub fn builder(&self) -> BuilderConfig {
        BuilderConfig {
            k: self.k,
            max_reselect: self.max_reselect,
            rng_seed: self.seed,
            probe_threshold: self.probe_threshold,
        }
    }

    pub fn pcf(&self) -> PcfConfig {
        PcfConfig {
            builder: self.builder(),
            optimizer: OptimizerConfig {
                learning_rate: self.learning_rate,
                iterations: self.iterations,
                ..OptimizerConfig::default()
            },
            patch_size: self.patch,
            max_systems: self.max_systems,
            threshold: self.threshold,
            ..PcfConfig::default()
        }
    }
}

/// Multi-homography tunables.
#[derive(Debug, Clone, Default, Args)]
pub struct HomogArgs {
    /// Inlier threshold of the first model, pixels.
    #[arg(long = "eps-global", env = "PCF_EPS_GLOBAL")]
    pub eps_global: Option<f64>,
    /// Inlier threshold of later models, pixels.
    #[arg(long = "eps-local", env = "PCF_EPS_LOCAL")]
    pub eps_local: Option<f64>,
    /// Minimum inliers per model.
    #[arg(long, env = "PCF_ETA")]
    pub eta: Option<usize>,
    #[arg(long = "max-models", env = "PCF_MAX_MODELS")]
    pub max_models: Option<usize>,
    #[arg(long = "ransac-iters", env = "PCF_RANSAC_ITERS")]
    pub ransac_iters: Option<usize>,
    #[arg(long, env = "PCF_SEED")]
    pub seed: Option<u64>,
}

impl HomogArgs {
    pub fn resolve(&self, file: &ConfigFile) -> CliResult<MultiHomogConfig> {
        let d = MultiHomogConfig::default();
        let cfg = MultiHomogConfig {
            eps_global: file.pick(self.eps_global, "eps_global", d.eps_global)?,
            eps_local: file.pick(self.eps_local, "eps_local", d.eps_local)?,
            min_inliers: file.pick(self.eta, "eta", d.min_inliers)?,
            max_models: file.pick(self.max_models, "max_models", d.max_models)?,
            ransac_iters: file.pick(self.ransac_iters, "ransac_iters", d.ransac_iters)?,
            rng_seed: file.pick(self.seed, "seed", d.rng_seed)?,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}
