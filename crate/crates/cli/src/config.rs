//! Run configuration: a TOML file of `key = value` pairs whose every key is
//! optional, overridden by command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use prnu_mfm::bench::{BenchConfig, BenchMode};
use prnu_mfm::noise::NoiseConfig;
use prnu_mfm::report::{DEFAULT_DELTA_RHO, DEFAULT_PCE_THRESHOLD};
use prnu_mfm::search::GaConfig;
use prnu_mfm::SearchRanges;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seeds the optimizer and the benchmark.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Crop in rows of the reference log-polar axis.
    pub delta_rho: f64,
    pub threshold: f64,
    pub ranges: SearchRanges,
    pub ga: GaConfig,
    pub noise: NoiseConfig,
    pub bench: BenchSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            delta_rho: DEFAULT_DELTA_RHO,
            threshold: DEFAULT_PCE_THRESHOLD,
            ranges: SearchRanges::default(),
            ga: GaConfig::default(),
            noise: NoiseConfig::default(),
            bench: BenchSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub trials: usize,
    pub image_size: usize,
    /// Crops swept by the benchmark, in reference rows.
    pub delta_rho: Vec<f64>,
    pub noise_levels: Vec<f64>,
    pub prnu_sigma: f64,
    pub mode: BenchMode,
    pub impostors: bool,
}

impl Default for BenchSection {
    fn default() -> Self {
        let d = BenchConfig::default();
        Self {
            trials: d.trials,
            image_size: d.image_size,
            delta_rho: d.delta_rho,
            noise_levels: d.noise_levels,
            prnu_sigma: d.prnu_sigma,
            mode: d.mode,
            impostors: d.impostors,
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub delta_rho: Vec<f64>,
    pub threshold: Option<f64>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    /// A single `--delta-rho` value sets the crop of every command; a list
    /// is only meaningful to the benchmark sweep.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(threads) = o.threads {
            self.threads = threads;
        }
        if let Some(threshold) = o.threshold {
            self.threshold = threshold;
        }
        if let [single] = o.delta_rho[..] {
            self.delta_rho = single;
        }
        if !o.delta_rho.is_empty() {
            self.bench.delta_rho = o.delta_rho.clone();
        }
        self.ga.rng_seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            bail!("threshold must be positive, got {}", self.threshold);
        }
        if !(self.delta_rho > 0.0 && self.delta_rho <= prnu_mfm::report::REFERENCE_RHO_ROWS) {
            bail!("delta_rho must lie in (0, {}], got {}", prnu_mfm::report::REFERENCE_RHO_ROWS, self.delta_rho);
        }
        self.ranges.validate()?;
        self.ga.validate()?;
        Ok(())
    }

    pub fn bench_config(&self) -> BenchConfig {
        let b = &self.bench;
        BenchConfig {
            trials: b.trials,
            image_size: b.image_size,
            ranges: self.ranges,
            delta_rho: b.delta_rho.clone(),
            pce_threshold: self.threshold,
            noise_levels: b.noise_levels.clone(),
            prnu_sigma: b.prnu_sigma,
            rng_seed: self.seed,
            mode: b.mode,
            impostors: b.impostors,
            ga: self.ga.clone(),
        }
    }
}
