//! Joint optimization of the network and the latent table: pixel sampling
//! with a fixed foreground/background ratio, subject-specific latents and
//! stochastic global latent augmentation.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{GradTarget, GradientSet, InrNetwork};
use crate::optim::{accumulate, AdamW, AdamWConfig, MicroBatchPlan};
use crate::rng::{stream_rng, Stream};
use crate::volume::{axis_coordinate, unravel, DatasetManifest, ForegroundMask, VolumeImage};

/// How scans map onto latent vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentKeying {
    /// One vector per scan (plain auto-decoder).
    PerScan,
    /// One vector shared by all scans of a subject.
    PerSubject,
}

/// Latent vectors keyed by subject or scan id, plus the global latent.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTable {
    dim: usize,
    keying: LatentKeying,
    entries: BTreeMap<String, Vec<f32>>,
    global: Vec<f32>,
}

impl LatentTable {
    pub fn new(dim: usize, keying: LatentKeying) -> Self {
        Self {
            dim,
            keying,
            entries: BTreeMap::new(),
            global: vec![0.0; dim],
        }
    }

    pub fn from_parts(
        dim: usize,
        keying: LatentKeying,
        entries: BTreeMap<String, Vec<f32>>,
        global: Vec<f32>,
    ) -> Result<Self> {
        if global.len() != dim || entries.values().any(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                what: "latent table entry",
                expected: dim,
                actual: global.len(),
            });
        }
        Ok(Self {
            dim,
            keying,
            entries,
            global,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn keying(&self) -> LatentKeying {
        self.keying
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in key order (the global latent is not included).
    pub fn entries(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn global(&self) -> &[f32] {
        &self.global
    }

    pub fn global_mut(&mut self) -> &mut [f32] {
        &mut self.global
    }

    pub fn key_for(&self, subject_id: &str, scan_id: &str) -> String {
        match self.keying {
            LatentKeying::PerSubject => subject_id.to_owned(),
            LatentKeying::PerScan => scan_id.to_owned(),
        }
    }

    /// The vector a scan trains, created as zeros on first touch.
    pub fn resolve_latent(&mut self, subject_id: &str, scan_id: &str) -> &mut Vec<f32> {
        let key = self.key_for(subject_id, scan_id);
        let dim = self.dim;
        self.entries.entry(key).or_insert_with(|| vec![0.0; dim])
    }

    pub fn entry_mut(&mut self, key: &str) -> &mut Vec<f32> {
        let dim = self.dim;
        self.entries
            .entry(key.to_owned())
            .or_insert_with(|| vec![0.0; dim])
    }
}

/// Which latent a training iteration uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentChoice {
    Own,
    Global,
}

/// One Bernoulli(p) draw: the global latent with probability `p`.
pub fn sgla_select<R: Rng>(rng: &mut R, p: f64) -> LatentChoice {
    if rng.gen::<f64>() < p {
        LatentChoice::Global
    } else {
        LatentChoice::Own
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    /// Learning rate for the network parameters.
    pub lr: f64,
    /// Learning rate for the latent vectors (including the global one).
    pub latent_lr: f64,
    pub pixel_fraction: f64,
    /// Share of sampled pixels drawn from the foreground.
    pub fg_bg_ratio: f64,
    pub sgla_p: f64,
    pub ssl_enabled: bool,
    pub sgla_enabled: bool,
    pub seed: u64,
    pub micro_batch_size: usize,
    pub weight_decay: f64,
    pub decay_latents: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200_000,
            lr: 1e-4,
            latent_lr: 1e-4,
            pixel_fraction: 0.05,
            fg_bg_ratio: 0.9,
            sgla_p: 0.10,
            ssl_enabled: true,
            sgla_enabled: true,
            seed: 0,
            micro_batch_size: 4096,
            weight_decay: 1e-2,
            decay_latents: false,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Budget for CPU-scale phantom experiments with the desk network.
    pub fn desk() -> Self {
        Self {
            steps: 20_000,
            lr: 1e-3,
            latent_lr: 1e-2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_fraction > 0.0 && self.pixel_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "pixel_fraction must lie in (0, 1], got {}",
                self.pixel_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.sgla_p) {
            return Err(Error::Config(format!("sgla_p must lie in [0, 1], got {}", self.sgla_p)));
        }
        if !(0.0..=1.0).contains(&self.fg_bg_ratio) {
            return Err(Error::Config(format!(
                "fg_bg_ratio must lie in [0, 1], got {}",
                self.fg_bg_ratio
            )));
        }
        if !(self.lr > 0.0 && self.latent_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.micro_batch_size == 0 {
            return Err(Error::Config("micro_batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn keying(&self) -> LatentKeying {
        if self.ssl_enabled {
            LatentKeying::PerSubject
        } else {
            LatentKeying::PerScan
        }
    }

    fn net_optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    fn latent_optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.latent_lr,
            ..self.net_optimizer()
        }
    }
}

/// Sampled pixels of one scan.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelBatch {
    pub dims: usize,
    /// `len × dims` coordinates in `[-0.5, 0.5]`.
    pub coords: Vec<f32>,
    pub targets: Vec<f32>,
    pub foreground: Vec<bool>,
    pub t: f64,
    pub latent_key: String,
}

impl PixelBatch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Every voxel of the image.
    pub fn full(img: &VolumeImage, mask: &ForegroundMask, t: f64) -> Result<Self> {
        let all: Vec<usize> = (0..img.len()).collect();
        Self::from_indices(img, mask, t, &all)
    }

    fn from_indices(img: &VolumeImage, mask: &ForegroundMask, t: f64, flat: &[usize]) -> Result<Self> {
        if mask.shape() != img.shape() {
            return Err(Error::ShapeMismatch(mask.shape().to_vec(), img.shape().to_vec()));
        }
        let shape = img.shape();
        let mut coords = Vec::with_capacity(flat.len() * shape.len());
        for &f in flat {
            let idx = unravel(f, shape);
            coords.extend(idx.iter().zip(shape).map(|(&i, &n)| axis_coordinate(i, n)));
        }
        Ok(Self {
            dims: shape.len(),
            coords,
            targets: flat.iter().map(|&f| img.data()[f]).collect(),
            foreground: flat.iter().map(|&f| mask.get(f)).collect(),
            t,
            latent_key: String::new(),
        })
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> (&[f32], &[f32]) {
        (
            &self.coords[range.start * self.dims..range.end * self.dims],
            &self.targets[range],
        )
    }
}

/// `⌊fraction·N⌋` pixels, `round(ratio·n)` of them foreground when
/// available, each class sampled uniformly without replacement.
pub fn sample_pixels<R: Rng>(
    img: &VolumeImage,
    mask: &ForegroundMask,
    t: f64,
    fraction: f64,
    ratio: f64,
    rng: &mut R,
) -> Result<PixelBatch> {
    if mask.shape() != img.shape() {
        return Err(Error::ShapeMismatch(mask.shape().to_vec(), img.shape().to_vec()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidValue(format!("pixel fraction {fraction} outside (0, 1]")));
    }
    let total = img.len();
    let n = (fraction * total as f64).floor() as usize;
    if n == 0 {
        return Err(Error::Empty("pixel sample (fraction too small for the image)"));
    }
    let (fg, bg): (Vec<usize>, Vec<usize>) = (0..total).partition(|&i| mask.get(i));
    let want_fg = ((ratio * n as f64).round() as usize).min(fg.len());
    let n_bg = (n - want_fg).min(bg.len());
    let n_fg = n - n_bg;
    if n_fg > fg.len() {
        return Err(Error::Empty("pixel class exhausted"));
    }
    let mut flat: Vec<usize> = index::sample(rng, fg.len(), n_fg).into_iter().map(|i| fg[i]).collect();
    flat.extend(index::sample(rng, bg.len(), n_bg).into_iter().map(|i| bg[i]));
    PixelBatch::from_indices(img, mask, t, &flat)
}

/// A scan held in memory for training.
#[derive(Clone, Debug)]
pub struct TrainingScan {
    pub subject_id: String,
    pub scan_id: String,
    pub t: f64,
    pub image: VolumeImage,
    pub mask: ForegroundMask,
}

impl TrainingScan {
    pub fn new(subject_id: &str, scan_id: &str, t: f64, image: VolumeImage) -> Self {
        let mask = ForegroundMask::from_intensity(&image);
        Self {
            subject_id: subject_id.to_owned(),
            scan_id: scan_id.to_owned(),
            t,
            image,
            mask,
        }
    }

    pub fn load_all(manifest: &DatasetManifest) -> Result<Vec<Self>> {
        manifest
            .records
            .iter()
            .map(|r| Ok(Self::new(&r.subject_id, &r.scan_id, r.t()?, manifest.load(r)?)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub iteration: u64,
    pub loss: f64,
    pub latent_key: String,
    pub used_global: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
}

impl TrainingLog {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("iteration,loss,latent_key,used_global\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.iteration, e.loss, e.latent_key, e.used_global as u8
            ));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    /// Mean loss over a window of entries, skipping non-finite ones.
    pub fn mean_loss(&self, range: std::ops::Range<usize>) -> f64 {
        let v: Vec<f64> = self.entries[range]
            .iter()
            .map(|e| e.loss)
            .filter(|l| l.is_finite())
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

/// Optimizer state carried across resumed runs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub iteration: u64,
    pub net_opt: AdamW,
    pub latent_opts: BTreeMap<String, AdamW>,
    pub global_opt: AdamW,
}

impl TrainState {
    pub fn new(net: &InrNetwork, config: &TrainConfig) -> Self {
        let sizes: Vec<usize> = net.param_groups().iter().map(|g| g.len()).collect();
        Self {
            iteration: 0,
            net_opt: AdamW::new(config.net_optimizer(), &sizes, true),
            latent_opts: BTreeMap::new(),
            global_opt: AdamW::new(
                config.latent_optimizer(),
                &[net.config().latent_dim],
                config.decay_latents,
            ),
        }
    }
}

/// Training entry point: runs `config.steps` iterations from `state`.
pub fn train(
    scans: &[TrainingScan],
    net: &mut InrNetwork,
    table: &mut LatentTable,
    state: &mut TrainState,
    config: &TrainConfig,
) -> Result<TrainingLog> {
    config.validate()?;
    if scans.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let d = net.config().spatial_dims;
    if let Some(s) = scans.iter().find(|s| s.image.ndim() != d) {
        return Err(Error::InvalidValue(format!(
            "scan {} has {} dims, network expects {d}",
            s.scan_id,
            s.image.ndim()
        )));
    }
    if table.dim() != net.config().latent_dim {
        return Err(Error::DimensionMismatch {
            what: "latent table dimension",
            expected: net.config().latent_dim,
            actual: table.dim(),
        });
    }
    if table.keying() != config.keying() {
        return Err(Error::Config("latent table keying does not match ssl setting".into()));
    }
    let mut log = TrainingLog::default();
    let end = state.iteration + config.steps;
    while state.iteration < end {
        let it = state.iteration;
        let entry = train_iteration(scans, net, table, state, config, it)?;
        log.entries.push(entry);
        state.iteration += 1;
    }
    Ok(log)
}

fn train_iteration(
    scans: &[TrainingScan],
    net: &mut InrNetwork,
    table: &mut LatentTable,
    state: &mut TrainState,
    config: &TrainConfig,
    it: u64,
) -> Result<LogEntry> {
    let scan = &scans[stream_rng(config.seed, Stream::ScanSelect, it).gen_range(0..scans.len())];
    let mut batch = sample_pixels(
        &scan.image,
        &scan.mask,
        scan.t,
        config.pixel_fraction,
        config.fg_bg_ratio,
        &mut stream_rng(config.seed, Stream::PixelSample, it),
    )?;
    let key = table.key_for(&scan.subject_id, &scan.scan_id);
    batch.latent_key = key.clone();
    let choice = if config.sgla_enabled {
        sgla_select(&mut stream_rng(config.seed, Stream::Sgla, it), config.sgla_p)
    } else {
        LatentChoice::Own
    };
    let latent: Vec<f32> = match choice {
        LatentChoice::Global => table.global().to_vec(),
        LatentChoice::Own => table.entry_mut(&key).clone(),
    };

    let evaluated = evaluate_batch(net, &batch, &latent, config.micro_batch_size);
    let mut entry = LogEntry {
        iteration: it,
        loss: f64::NAN,
        latent_key: key.clone(),
        used_global: choice == LatentChoice::Global,
    };
    let (loss, grads) = match evaluated {
        Ok(v) => v,
        Err(Error::NonFinite(what)) => {
            log::warn!("iteration {it}: non-finite {what}, step skipped");
            return Ok(entry);
        }
        Err(e) => return Err(e),
    };
    entry.loss = loss;
    if !grads.is_finite() {
        log::warn!("iteration {it}: non-finite gradient, step skipped");
        return Ok(entry);
    }

    let pg = grads.param_groups();
    state.net_opt.step(&mut net.param_groups_mut(), &pg)?;
    let latent_cfg = config.latent_optimizer();
    let (opt, target) = match choice {
        LatentChoice::Global => (&mut state.global_opt, table.global_mut()),
        LatentChoice::Own => {
            let opt = state
                .latent_opts
                .entry(key.clone())
                .or_insert_with(|| AdamW::new(latent_cfg, &[latent.len()], config.decay_latents));
            (opt, table.entry_mut(&key).as_mut_slice())
        }
    };
    opt.step(&mut [target], &[&grads.latent])?;
    Ok(entry)
}

/// Mean loss and gradient of a batch, micro-batched when it exceeds
/// `micro_batch_size` pixels.
pub fn evaluate_batch(
    net: &InrNetwork,
    batch: &PixelBatch,
    latent: &[f32],
    micro_batch_size: usize,
) -> Result<(f64, GradientSet)> {
    if batch.len() <= micro_batch_size {
        return net.forward_backward(batch, latent);
    }
    let plan = MicroBatchPlan::new(batch.len(), micro_batch_size)?;
    accumulate(&plan, |r| {
        let (c, y) = batch.slice(r);
        net.loss_and_grad(c, y, batch.t, latent, GradTarget::All)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkConfig;

    fn disk(n: usize, radius: f64, value: f32) -> VolumeImage {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (i as f64 + 0.5 - n as f64 / 2.0, j as f64 + 0.5 - n as f64 / 2.0);
                if x * x + y * y <= radius * radius {
                    data[i * n + j] = value + 0.3 * (x / n as f64) as f32;
                }
            }
        }
        VolumeImage::new(vec![n, n], vec![0.3, 0.3], data).unwrap()
    }

    #[test]
    fn sample_counts_follow_ratio() {
        let img = disk(64, 20.0, 0.6);
        let mask = ForegroundMask::from_intensity(&img);
        assert!(mask.count() > 184 && img.len() - mask.count() > 20);
        let b = sample_pixels(&img, &mask, 0.3, 0.05, 0.9, &mut stream_rng(1, Stream::Probe, 0)).unwrap();
        assert_eq!(b.len(), 204);
        assert_eq!(b.foreground.iter().filter(|f| **f).count(), 184);
        assert!(b.coords.iter().all(|c| (-0.5..=0.5).contains(c)));
        for (k, &fg) in b.foreground.iter().enumerate() {
            assert_eq!(fg, b.targets[k] > 0.0);
        }
    }

    #[test]
    fn sampling_is_seeded_and_without_replacement() {
        let img = disk(32, 10.0, 0.6);
        let mask = ForegroundMask::from_intensity(&img);
        let draw = |s| sample_pixels(&img, &mask, 0.3, 0.5, 0.9, &mut stream_rng(s, Stream::Probe, 0)).unwrap();
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
        let b = draw(5);
        let mut pts: Vec<(u32, u32)> = b.coords.chunks(2).map(|c| (c[0].to_bits(), c[1].to_bits())).collect();
        pts.sort();
        pts.dedup();
        assert_eq!(pts.len(), b.len());
    }

    #[test]
    fn all_foreground_mask_samples_foreground() {
        let img = VolumeImage::new(vec![16, 16], vec![1.0, 1.0], vec![0.5; 256]).unwrap();
        let mask = ForegroundMask::from_intensity(&img);
        let b = sample_pixels(&img, &mask, 0.5, 0.25, 0.9, &mut stream_rng(0, Stream::Probe, 0)).unwrap();
        assert_eq!(b.len(), 64);
        assert!(b.foreground.iter().all(|f| *f));
    }

    #[test]
    fn tiny_fraction_is_an_error() {
        let img = disk(8, 3.0, 0.5);
        let mask = ForegroundMask::from_intensity(&img);
        assert!(sample_pixels(&img, &mask, 0.3, 0.001, 0.9, &mut stream_rng(0, Stream::Probe, 0)).is_err());
    }

    #[test]
    fn latent_keying() {
        let mut ssl = LatentTable::new(4, LatentKeying::PerSubject);
        ssl.resolve_latent("A", "A_1")[0] = 1.5;
        assert_eq!(ssl.resolve_latent("A", "A_2")[0], 1.5);
        assert_eq!(ssl.len(), 1);

        let mut scan = LatentTable::new(4, LatentKeying::PerScan);
        scan.resolve_latent("A", "A_1")[0] = 1.5;
        assert_eq!(scan.resolve_latent("A", "A_2"), &vec![0.0; 4]);
        assert_eq!(scan.len(), 2);
        assert_eq!(scan.global(), &[0.0; 4]);
    }

    #[test]
    fn sgla_frequencies() {
        let mut rng = stream_rng(0, Stream::Probe, 0);
        assert!((0..1000).all(|_| sgla_select(&mut rng, 0.0) == LatentChoice::Own));
        assert!((0..1000).all(|_| sgla_select(&mut rng, 1.0) == LatentChoice::Global));
        let hits = (0..10_000u64)
            .filter(|&i| sgla_select(&mut stream_rng(17, Stream::Sgla, i), 0.1) == LatentChoice::Global)
            .count();
        let frac = hits as f64 / 10_000.0;
        assert!((0.09..=0.11).contains(&frac), "{frac}");
    }

    #[test]
    fn micro_batched_batch_matches_single_pass() {
        let net = InrNetwork::init(NetworkConfig::desk_2d(), 1).unwrap();
        let img = disk(32, 10.0, 0.6);
        let mask = ForegroundMask::from_intensity(&img);
        let b = sample_pixels(&img, &mask, 0.3, 0.4, 0.9, &mut stream_rng(0, Stream::Probe, 0)).unwrap();
        let l = vec![0.01; 16];
        let (l1, g1) = evaluate_batch(&net, &b, &l, 100_000).unwrap();
        let (l2, g2) = evaluate_batch(&net, &b, &l, 37).unwrap();
        assert!((l1 - l2).abs() <= 1e-12 * l1.abs());
        for (a, b) in g1.values().zip(g2.values()) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-6));
        }
    }

    fn tiny_scans() -> Vec<TrainingScan> {
        vec![
            TrainingScan::new("A", "A_1", 0.30, disk(16, 4.0, 0.5)),
            TrainingScan::new("A", "A_2", 0.40, disk(16, 6.0, 0.5)),
            TrainingScan::new("B", "B_1", 0.35, disk(16, 5.0, 0.7)),
        ]
    }

    fn small_cfg() -> NetworkConfig {
        NetworkConfig {
            spatial_dims: 2,
            latent_dim: 4,
            hidden_dim: 8,
            layers: 3,
            omega0: 10.0,
            s0: 10.0,
        }
    }

    fn run(config: &TrainConfig) -> (InrNetwork, LatentTable, TrainingLog) {
        let mut net = InrNetwork::init(small_cfg(), config.seed).unwrap();
        let mut table = LatentTable::new(4, config.keying());
        let mut state = TrainState::new(&net, config);
        let log = train(&tiny_scans(), &mut net, &mut table, &mut state, config).unwrap();
        (net, table, log)
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            steps: 40,
            lr: 1e-3,
            latent_lr: 1e-3,
            pixel_fraction: 0.25,
            ..TrainConfig::default()
        };
        let a = run(&cfg);
        let b = run(&cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_p_leaves_global_latent_untouched_and_matches_disabled() {
        let on = TrainConfig {
            steps: 60,
            lr: 1e-3,
            latent_lr: 1e-2,
            pixel_fraction: 0.25,
            sgla_p: 0.0,
            ..TrainConfig::default()
        };
        let off = TrainConfig {
            sgla_enabled: false,
            ..on.clone()
        };
        let a = run(&on);
        let b = run(&off);
        assert_eq!(a.1.global(), &[0.0; 4]);
        assert_eq!(a, b);
    }

    #[test]
    fn ssl_shares_one_vector_between_scans() {
        let cfg = TrainConfig {
            steps: 60,
            lr: 1e-3,
            latent_lr: 1e-2,
            pixel_fraction: 0.25,
            sgla_enabled: false,
            ..TrainConfig::default()
        };
        let (_, table, log) = run(&cfg);
        assert_eq!(table.len(), 2);
        assert!(log.entries.iter().any(|e| e.latent_key == "A"));
        let per_scan = run(&TrainConfig {
            ssl_enabled: false,
            ..cfg
        });
        assert_eq!(per_scan.1.len(), 3);
    }

    #[test]
    fn resume_continues_identically() {
        let cfg = TrainConfig {
            steps: 30,
            lr: 1e-3,
            latent_lr: 1e-2,
            pixel_fraction: 0.25,
            sgla_p: 0.3,
            ..TrainConfig::default()
        };
        let scans = tiny_scans();
        let mut net = InrNetwork::init(small_cfg(), 0).unwrap();
        let mut table = LatentTable::new(4, cfg.keying());
        let mut state = TrainState::new(&net, &cfg);
        train(&scans, &mut net, &mut table, &mut state, &cfg).unwrap();
        train(&scans, &mut net, &mut table, &mut state, &cfg).unwrap();

        let (full_net, full_table, _) = run(&TrainConfig { steps: 60, ..cfg });
        assert_eq!(net, full_net);
        assert_eq!(table, full_table);
    }

    #[test]
    fn keying_mismatch_is_rejected() {
        let cfg = TrainConfig::default();
        let mut net = InrNetwork::init(small_cfg(), 0).unwrap();
        let mut table = LatentTable::new(4, LatentKeying::PerScan);
        let mut state = TrainState::new(&net, &cfg);
        assert!(matches!(
            train(&tiny_scans(), &mut net, &mut table, &mut state, &cfg),
            Err(Error::Config(_))
        ));
        let mut table = LatentTable::new(4, LatentKeying::PerSubject);
        assert!(train(&[], &mut net, &mut table, &mut state, &cfg).is_err());
    }

    #[test]
    fn desk_network_overfits_one_scan() {
        let scans = vec![TrainingScan::new("A", "A_1", 0.30, disk(32, 10.0, 0.6))];
        let cfg = TrainConfig {
            steps: 500,
            pixel_fraction: 0.25,
            ..TrainConfig::desk()
        };
        let mut net = InrNetwork::init(NetworkConfig::desk_2d(), 0).unwrap();
        let mut table = LatentTable::new(16, cfg.keying());
        let mut state = TrainState::new(&net, &cfg);
        let log = train(&scans, &mut net, &mut table, &mut state, &cfg).unwrap();
        let first = log.mean_loss(0..10);
        let last = log.mean_loss(490..500);
        assert!(last < 0.5 * first, "{first} -> {last}");
    }
}
