//! Flat `key = value` run configuration.
//!
//! Keys are namespaced (`net.*`, `train.*`, `invert.*`, `phantom.*`,
//! `eval.*`, `atlas.*`, `sweep.*`, `paths.*`); `#` starts a comment.
//! Unknown keys are rejected. [`RunConfig::dump`] writes every key in
//! sorted order and parses back to the same configuration.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::EvalConfig;
use crate::inversion::{InversionConfig, PixelPolicy};
use crate::network::NetworkConfig;
use crate::phantom::PhantomDatasetConfig;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct AtlasConfig {
    /// Number of evenly spaced ages for growth curves.
    pub curve_points: usize,
    pub pma_min: f64,
    pub pma_max: f64,
    /// Ages (weeks) rendered as image strips.
    pub strip: Vec<f64>,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        Self {
            curve_points: 20,
            pma_min: 26.0,
            pma_max: 45.0,
            strip: vec![26.0, 29.0, 33.0, 38.0, 44.0],
        }
    }
}

impl AtlasConfig {
    pub fn curve_pmas(&self) -> Vec<f64> {
        let n = self.curve_points;
        if n == 1 {
            return vec![self.pma_min];
        }
        (0..n)
            .map(|i| self.pma_min + (self.pma_max - self.pma_min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathsConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub checkpoint: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            dataset: "data/phantom".into(),
            out: "out".into(),
            checkpoint: "out/model.ckpt".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub net: NetworkConfig,
    pub train: TrainConfig,
    pub invert: InversionConfig,
    pub phantom: PhantomDatasetConfig,
    pub eval: EvalConfig,
    pub atlas: AtlasConfig,
    pub sweep_p: Vec<f64>,
    pub paths: PathsConfig,
    /// Fraction and fg ratio used when `invert.pixels = sampled`.
    invert_sampling: (f64, f64),
}

impl Default for RunConfig {
    fn default() -> Self {
        let invert = InversionConfig::desk();
        let invert_sampling = match invert.pixels {
            PixelPolicy::Sampled { fraction, fg_bg_ratio } => (fraction, fg_bg_ratio),
            PixelPolicy::All => (0.05, 0.9),
        };
        Self {
            net: NetworkConfig::desk_2d(),
            train: TrainConfig::desk(),
            invert,
            phantom: PhantomDatasetConfig::default_2d(),
            eval: EvalConfig::default(),
            atlas: AtlasConfig::default(),
            sweep_p: vec![0.0, 0.05, 0.10, 0.15, 0.20, 0.25],
            paths: PathsConfig::default(),
            invert_sampling,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "y" | "1" => Ok(true),
        "false" | "no" | "n" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true/false, got `{v}`"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn range(key: &str, v: &str) -> Result<(f64, f64)> {
    match parse_list::<f64>(key, v)?.as_slice() {
        [a, b] if a <= b => Ok((*a, *b)),
        _ => Err(Error::Config(format!("`{key}`: expected `lo,hi`, got `{v}`"))),
    }
}

impl RunConfig {
    /// Parse configuration text over the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate()?;
        self.invert.validate()?;
        self.phantom.validate()?;
        if self.phantom.shape.len() != self.net.spatial_dims {
            return Err(Error::Config(format!(
                "phantom.shape has {} axes but net.spatial_dims = {}",
                self.phantom.shape.len(),
                self.net.spatial_dims
            )));
        }
        if self.atlas.curve_points == 0 || !(self.atlas.pma_min < self.atlas.pma_max) {
            return Err(Error::Config("atlas curve needs at least one point and pma_min < pma_max".into()));
        }
        if self.sweep_p.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("sweep.p_list entries must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Set one key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let k = key;
        match key {
            "net.spatial_dims" => self.net.spatial_dims = parse(k, v)?,
            "net.latent_dim" => self.net.latent_dim = parse(k, v)?,
            "net.hidden_dim" => self.net.hidden_dim = parse(k, v)?,
            "net.layers" => self.net.layers = parse(k, v)?,
            "net.omega0" => self.net.omega0 = parse(k, v)?,
            "net.s0" => self.net.s0 = parse(k, v)?,

            "train.steps" => self.train.steps = parse(k, v)?,
            "train.lr" => self.train.lr = parse(k, v)?,
            "train.latent_lr" => self.train.latent_lr = parse(k, v)?,
            "train.pixel_fraction" => self.train.pixel_fraction = parse(k, v)?,
            "train.fg_bg_ratio" => self.train.fg_bg_ratio = parse(k, v)?,
            "train.sgla_p" => self.train.sgla_p = parse(k, v)?,
            "train.ssl" => self.train.ssl_enabled = parse_bool(k, v)?,
            "train.sgla" => self.train.sgla_enabled = parse_bool(k, v)?,
            "train.seed" => self.train.seed = parse(k, v)?,
            "train.micro_batch_size" => self.train.micro_batch_size = parse(k, v)?,
            "train.weight_decay" => self.train.weight_decay = parse(k, v)?,
            "train.decay_latents" => self.train.decay_latents = parse_bool(k, v)?,
            "train.beta1" => self.train.beta1 = parse(k, v)?,
            "train.beta2" => self.train.beta2 = parse(k, v)?,
            "train.eps" => self.train.eps = parse(k, v)?,

            "invert.steps" => self.invert.steps = parse(k, v)?,
            "invert.lr" => self.invert.lr = parse(k, v)?,
            "invert.micro_batch_size" => self.invert.micro_batch_size = parse(k, v)?,
            "invert.seed" => self.invert.seed = parse(k, v)?,
            "invert.weight_decay" => self.invert.weight_decay = parse(k, v)?,
            "invert.pixels" => {
                let (fraction, fg_bg_ratio) = self.invert_sampling;
                self.invert.pixels = match v {
                    "all" => PixelPolicy::All,
                    "sampled" => PixelPolicy::Sampled { fraction, fg_bg_ratio },
                    _ => return Err(Error::Config(format!("`{k}`: expected all|sampled, got `{v}`"))),
                }
            }
            "invert.pixel_fraction" | "invert.fg_bg_ratio" => {
                let x: f64 = parse(k, v)?;
                if k == "invert.pixel_fraction" {
                    self.invert_sampling.0 = x;
                } else {
                    self.invert_sampling.1 = x;
                }
                if let PixelPolicy::Sampled { .. } = self.invert.pixels {
                    let (fraction, fg_bg_ratio) = self.invert_sampling;
                    self.invert.pixels = PixelPolicy::Sampled { fraction, fg_bg_ratio };
                }
            }

            "phantom.train_single" => self.phantom.train_single = parse(k, v)?,
            "phantom.train_multi" => self.phantom.train_multi = parse(k, v)?,
            "phantom.val" => self.phantom.val = parse(k, v)?,
            "phantom.test" => self.phantom.test = parse(k, v)?,
            "phantom.shape" => self.phantom.shape = parse_list(k, v)?,
            "phantom.spacing" => self.phantom.spacing = parse_list(k, v)?,
            "phantom.seed" => self.phantom.seed = parse(k, v)?,
            "phantom.hc_slope" => self.phantom.hc_slope = parse(k, v)?,
            "phantom.hc_intercept" => self.phantom.hc_intercept = parse(k, v)?,
            "phantom.hc_noise_sd" => self.phantom.hc_noise_sd = parse(k, v)?,
            "phantom.min_gap_weeks" => self.phantom.min_gap_weeks = parse(k, v)?,
            "phantom.a0" => self.phantom.ranges.a0 = range(k, v)?,
            "phantom.b0" => self.phantom.ranges.b0 = range(k, v)?,
            "phantom.c0" => self.phantom.ranges.c0 = range(k, v)?,
            "phantom.growth" => self.phantom.ranges.growth = range(k, v)?,
            "phantom.fold" => self.phantom.ranges.fold = range(k, v)?,
            "phantom.texture_freq" => self.phantom.ranges.texture_freq = range(k, v)?,

            "eval.both_directions" => self.eval.both_directions = parse_bool(k, v)?,
            "eval.bc_method" => self.eval.bc_method = v.parse()?,
            "eval.threshold" => self.eval.threshold = parse(k, v)?,

            "atlas.curve_points" => self.atlas.curve_points = parse(k, v)?,
            "atlas.pma_min" => self.atlas.pma_min = parse(k, v)?,
            "atlas.pma_max" => self.atlas.pma_max = parse(k, v)?,
            "atlas.strip" => self.atlas.strip = parse_list(k, v)?,

            "sweep.p_list" => self.sweep_p = parse_list(k, v)?,

            "paths.dataset" => self.paths.dataset = v.into(),
            "paths.out" => self.paths.out = v.into(),
            "paths.checkpoint" => self.paths.checkpoint = v.into(),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, sorted by key.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (n, t, i, p) = (&self.net, &self.train, &self.invert, &self.phantom);
        let (frac, ratio) = self.invert_sampling;
        let pixels = match i.pixels {
            PixelPolicy::All => "all",
            PixelPolicy::Sampled { .. } => "sampled",
        };
        let r = |x: (f64, f64)| format!("{},{}", x.0, x.1);
        let mut e: Vec<(&'static str, String)> = vec![
            ("atlas.curve_points", self.atlas.curve_points.to_string()),
            ("atlas.pma_max", self.atlas.pma_max.to_string()),
            ("atlas.pma_min", self.atlas.pma_min.to_string()),
            ("atlas.strip", list(&self.atlas.strip)),
            ("eval.bc_method", self.eval.bc_method.to_string()),
            ("eval.both_directions", self.eval.both_directions.to_string()),
            ("eval.threshold", self.eval.threshold.to_string()),
            ("invert.fg_bg_ratio", ratio.to_string()),
            ("invert.lr", i.lr.to_string()),
            ("invert.micro_batch_size", i.micro_batch_size.to_string()),
            ("invert.pixel_fraction", frac.to_string()),
            ("invert.pixels", pixels.to_string()),
            ("invert.seed", i.seed.to_string()),
            ("invert.steps", i.steps.to_string()),
            ("invert.weight_decay", i.weight_decay.to_string()),
            ("net.hidden_dim", n.hidden_dim.to_string()),
            ("net.latent_dim", n.latent_dim.to_string()),
            ("net.layers", n.layers.to_string()),
            ("net.omega0", n.omega0.to_string()),
            ("net.s0", n.s0.to_string()),
            ("net.spatial_dims", n.spatial_dims.to_string()),
            ("paths.checkpoint", self.paths.checkpoint.display().to_string()),
            ("paths.dataset", self.paths.dataset.display().to_string()),
            ("paths.out", self.paths.out.display().to_string()),
            ("phantom.a0", r(p.ranges.a0)),
            ("phantom.b0", r(p.ranges.b0)),
            ("phantom.c0", r(p.ranges.c0)),
            ("phantom.fold", r(p.ranges.fold)),
            ("phantom.growth", r(p.ranges.growth)),
            ("phantom.hc_intercept", p.hc_intercept.to_string()),
            ("phantom.hc_noise_sd", p.hc_noise_sd.to_string()),
            ("phantom.hc_slope", p.hc_slope.to_string()),
            ("phantom.min_gap_weeks", p.min_gap_weeks.to_string()),
            ("phantom.seed", p.seed.to_string()),
            ("phantom.shape", list(&p.shape)),
            ("phantom.spacing", list(&p.spacing)),
            ("phantom.test", p.test.to_string()),
            ("phantom.texture_freq", r(p.ranges.texture_freq)),
            ("phantom.train_multi", p.train_multi.to_string()),
            ("phantom.train_single", p.train_single.to_string()),
            ("phantom.val", p.val.to_string()),
            ("sweep.p_list", list(&self.sweep_p)),
            ("train.beta1", t.beta1.to_string()),
            ("train.beta2", t.beta2.to_string()),
            ("train.decay_latents", t.decay_latents.to_string()),
            ("train.eps", t.eps.to_string()),
            ("train.fg_bg_ratio", t.fg_bg_ratio.to_string()),
            ("train.latent_lr", t.latent_lr.to_string()),
            ("train.lr", t.lr.to_string()),
            ("train.micro_batch_size", t.micro_batch_size.to_string()),
            ("train.pixel_fraction", t.pixel_fraction.to_string()),
            ("train.seed", t.seed.to_string()),
            ("train.sgla", t.sgla_enabled.to_string()),
            ("train.sgla_p", t.sgla_p.to_string()),
            ("train.ssl", t.ssl_enabled.to_string()),
            ("train.steps", t.steps.to_string()),
            ("train.weight_decay", t.weight_decay.to_string()),
        ];
        e.sort_by_key(|x| x.0);
        e
    }

    pub fn dump(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
