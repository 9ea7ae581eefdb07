//! Synthetic longitudinal phantom with analytic ground truth.
//!
//! Each subject is an ellipse (ellipsoid in 3D) that grows linearly in
//! normalized time and carries subject-specific folds whose amplitude
//! increases with age. In polar form the 2D boundary is
//!
//! ```text
//! r(θ) = r_ell(θ; a(t), b(t)) · (1 + A(t)·Σ_k c_k sin(kθ + φ_k)),  k = 3..7
//! a(t) = a₀ + g_a (t − 0.26),   A(t) = (t − 0.26) / 0.19
//! ```
//!
//! A voxel is inside when its elliptic radius √((x/a)² + (y/b)² [+ (z/c)²])
//! is at most `1 + A(t)·F(θ)` with `θ = atan2(y, x)` measured in the axial
//! plane. Interior intensity is a low-frequency texture in shape-normalized
//! coordinates, so identity is preserved while the subject grows.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::hull_perimeter;
use crate::rng::{stream_rng, Stream};
use crate::volume::{ensure_dir, save_volume, DatasetManifest, ForegroundMask, ScanRecord, VolumeImage};

pub const T_MIN: f64 = 0.26;
pub const T_MAX: f64 = 0.45;
pub const FOLD_ORDERS: [u32; 5] = [3, 4, 5, 6, 7];
/// Minimum distance (voxels) between the shape and the image border.
pub const MARGIN_VOXELS: f64 = 2.0;

/// Uniform sampling ranges for subject parameters (cm, cm per unit t).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomRanges {
    pub a0: (f64, f64),
    pub b0: (f64, f64),
    pub c0: (f64, f64),
    pub growth: (f64, f64),
    pub fold: (f64, f64),
    pub texture_freq: (f64, f64),
}

impl Default for PhantomRanges {
    fn default() -> Self {
        Self {
            a0: (1.8, 2.6),
            b0: (2.2, 3.2),
            c0: (1.6, 2.4),
            growth: (3.0, 5.0),
            fold: (0.0, 0.03),
            texture_freq: (0.2, 0.6),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams {
    pub master_seed: u64,
    pub index: u64,
    /// Semi-axes at t = 0.26 along LR, AP, IS.
    pub semi_axes0: [f64; 3],
    pub growth: [f64; 3],
    pub fold_coeffs: [f64; 5],
    pub fold_phases: [f64; 5],
    pub texture_freq: [f64; 3],
    pub texture_phase: f64,
}

fn draw(rng: &mut impl Rng, r: (f64, f64)) -> f64 {
    if r.1 > r.0 {
        rng.gen_range(r.0..r.1)
    } else {
        r.0
    }
}

pub fn generate_subject(master_seed: u64, index: u64) -> SubjectParams {
    generate_subject_with(master_seed, index, &PhantomRanges::default())
}

pub fn generate_subject_with(master_seed: u64, index: u64, ranges: &PhantomRanges) -> SubjectParams {
    let mut rng = stream_rng(master_seed, Stream::Phantom, index);
    let semi_axes0 = [draw(&mut rng, ranges.a0), draw(&mut rng, ranges.b0), draw(&mut rng, ranges.c0)];
    let growth = [(); 3].map(|_| draw(&mut rng, ranges.growth));
    let fold_coeffs = [(); 5].map(|_| draw(&mut rng, ranges.fold));
    let fold_phases = [(); 5].map(|_| rng.gen_range(0.0..TAU));
    let texture_freq = [(); 3].map(|_| draw(&mut rng, ranges.texture_freq));
    let texture_phase = rng.gen_range(0.0..TAU);
    SubjectParams {
        master_seed,
        index,
        semi_axes0,
        growth,
        fold_coeffs,
        fold_phases,
        texture_freq,
        texture_phase,
    }
}

pub fn fold_amplitude(t: f64) -> f64 {
    (t - T_MIN) / (T_MAX - T_MIN)
}

impl SubjectParams {
    pub fn semi_axes(&self, t: f64) -> [f64; 3] {
        [0, 1, 2].map(|k| self.semi_axes0[k] + self.growth[k] * (t - T_MIN))
    }

    /// Fold modulation `F(θ)` and its derivative.
    fn folds(&self, theta: f64) -> (f64, f64) {
        let mut f = 0.0;
        let mut df = 0.0;
        for ((k, c), p) in FOLD_ORDERS.iter().zip(&self.fold_coeffs).zip(&self.fold_phases) {
            let k = *k as f64;
            f += c * (k * theta + p).sin();
            df += c * k * (k * theta + p).cos();
        }
        (f, df)
    }

    /// Boundary radius (cm) of the axial cross-section at angle `theta`.
    pub fn radius(&self, t: f64, theta: f64) -> f64 {
        let [a, b, _] = self.semi_axes(t);
        let (f, _) = self.folds(theta);
        ellipse_radius(a, b, theta).0 * (1.0 + fold_amplitude(t) * f)
    }

    fn check_time(t: f64) -> Result<()> {
        if !(T_MIN - 1e-9..=T_MAX + 1e-9).contains(&t) {
            return Err(Error::InvalidValue(format!("phantom time {t} outside [{T_MIN}, {T_MAX}]")));
        }
        Ok(())
    }
}

/// Radius of the ellipse `(x/a)² + (y/b)² = 1` at polar angle θ, and dr/dθ.
fn ellipse_radius(a: f64, b: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let d = b * b * c * c + a * a * s * s;
    let r = a * b / d.sqrt();
    let dr = a * b * (b * b - a * a) * s * c / d.powf(1.5);
    (r, dr)
}

/// Arc length of a closed polar curve by the periodic trapezoid rule,
/// doubling the node count until successive estimates agree to 1e-12.
fn polar_arc_length(curve: impl Fn(f64) -> (f64, f64)) -> f64 {
    let integrate = |n: usize| {
        let h = TAU / n as f64;
        (0..n)
            .map(|i| {
                let (r, dr) = curve(i as f64 * h);
                r.hypot(dr)
            })
            .sum::<f64>()
            * h
    };
    let mut n = 64;
    let mut prev = integrate(n);
    while n < 1 << 22 {
        n *= 2;
        let next = integrate(n);
        if (next - prev).abs() <= 1e-12 * next {
            return next;
        }
        prev = next;
    }
    prev
}

/// Exact length (cm) of the axial boundary curve at time `t`.
pub fn true_circumference(p: &SubjectParams, t: f64) -> f64 {
    let [a, b, _] = p.semi_axes(t);
    let amp = fold_amplitude(t);
    polar_arc_length(|th| {
        let (re, dre) = ellipse_radius(a, b, th);
        let (f, df) = p.folds(th);
        let m = 1.0 + amp * f;
        (re * m, dre * m + re * amp * df)
    })
}

/// Convex-hull perimeter (cm) of the analytic boundary — the tape-measure
/// reading of a perfect segmentation.
pub fn true_hull_circumference(p: &SubjectParams, t: f64) -> f64 {
    let n = 20_000;
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let th = i as f64 * TAU / n as f64;
            let r = p.radius(t, th);
            (r * th.cos(), r * th.sin())
        })
        .collect();
    hull_perimeter(&pts)
}

/// Arc length of an ellipse without folds.
pub fn ellipse_circumference(a: f64, b: f64) -> f64 {
    polar_arc_length(|th| ellipse_radius(a, b, th))
}

/// Render a subject at time `t` on a voxel grid centered on the origin.
pub fn render_phantom(
    p: &SubjectParams,
    t: f64,
    shape: &[usize],
    spacing: &[f32],
) -> Result<(VolumeImage, ForegroundMask)> {
    SubjectParams::check_time(t)?;
    let d = shape.len();
    if !(d == 2 || d == 3) || spacing.len() != d {
        return Err(Error::InvalidValue(format!("phantom shape {shape:?} / spacing {spacing:?}")));
    }
    let axes = p.semi_axes(t);
    let amp = fold_amplitude(t);
    let max_fold = 1.0 + amp * p.fold_coeffs.iter().map(|c| c.abs()).sum::<f64>();
    for k in 0..d {
        let half = shape[k] as f64 * spacing[k] as f64 / 2.0;
        let need = axes[k] * max_fold + MARGIN_VOXELS * spacing[k] as f64;
        if need > half {
            return Err(Error::InvalidValue(format!(
                "subject {} at t={t} needs {need:.2} cm on axis {k}, image half-width is {half:.2} cm",
                p.index
            )));
        }
    }
    let n: usize = shape.iter().product();
    let position = |idx: usize, k: usize| -> f64 {
        let stride: usize = shape[k + 1..].iter().product();
        let i = (idx / stride) % shape[k];
        (i as f64 + 0.5 - shape[k] as f64 / 2.0) * spacing[k] as f64
    };
    let values: Vec<(f32, bool)> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let mut rho2 = 0.0;
            let mut phase = p.texture_phase;
            let mut xy = [0.0; 2];
            for k in 0..d {
                let u = position(idx, k) / axes[k];
                rho2 += u * u;
                phase += TAU * p.texture_freq[k] * u;
                if k < 2 {
                    xy[k] = position(idx, k);
                }
            }
            let theta = xy[1].atan2(xy[0]);
            let bound = 1.0 + amp * p.folds(theta).0;
            if rho2.sqrt() <= bound {
                (((0.5 + 0.3 * phase.sin()).clamp(0.05, 0.95)) as f32, true)
            } else {
                (0.0, false)
            }
        })
        .collect();
    let (data, bits): (Vec<f32>, Vec<bool>) = values.into_iter().unzip();
    Ok((
        VolumeImage::new(shape.to_vec(), spacing.to_vec(), data)?,
        ForegroundMask::new(shape.to_vec(), bits)?,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomDatasetConfig {
    pub train_single: usize,
    pub train_multi: usize,
    pub val: usize,
    pub test: usize,
    pub shape: Vec<usize>,
    pub spacing: Vec<f32>,
    pub seed: u64,
    pub hc_slope: f64,
    pub hc_intercept: f64,
    pub hc_noise_sd: f64,
    pub min_gap_weeks: f64,
    pub ranges: PhantomRanges,
}

impl PhantomDatasetConfig {
    pub fn default_2d() -> Self {
        Self {
            train_single: 72,
            train_multi: 8,
            val: 4,
            test: 16,
            shape: vec![64, 64],
            spacing: vec![0.3, 0.3],
            seed: 0,
            hc_slope: 1.090,
            hc_intercept: 1.758,
            hc_noise_sd: 0.3,
            min_gap_weeks: 4.0,
            ranges: PhantomRanges::default(),
        }
    }

    pub fn default_3d() -> Self {
        Self {
            shape: vec![48, 64, 48],
            spacing: vec![0.4, 0.4, 0.4],
            ..Self::default_2d()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.shape.len();
        if !(d == 2 || d == 3) || self.spacing.len() != d {
            return Err(Error::Config("phantom shape must be 2D or 3D with matching spacing".into()));
        }
        if self.spacing.iter().any(|s| !(*s > 0.0)) || self.shape.contains(&0) {
            return Err(Error::Config("phantom spacing and shape must be positive".into()));
        }
        if !(self.hc_noise_sd >= 0.0) {
            return Err(Error::Config("hc_noise_sd must be non-negative".into()));
        }
        let span = (T_MAX - T_MIN) * 100.0;
        if !(0.0..span).contains(&self.min_gap_weeks) {
            return Err(Error::Config(format!("min_gap_weeks must lie in [0, {span})")));
        }
        Ok(())
    }

    /// Subject index ranges of the train-single, train-multi, val and test
    /// groups, in that order.
    fn groups(&self) -> [(Split, bool, std::ops::Range<usize>); 4] {
        let a = self.train_single;
        let b = a + self.train_multi;
        let c = b + self.val;
        let e = c + self.test;
        [
            (Split::Train, false, 0..a),
            (Split::Train, true, a..b),
            (Split::Val, true, b..c),
            (Split::Test, true, c..e),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.csv",
            Split::Val => "val.csv",
            Split::Test => "test.csv",
        }
    }
}

pub fn subject_id(index: usize) -> String {
    format!("sub-{index:04}")
}

/// Scan ages (weeks). Multi-scan subjects get two sorted ages at least
/// `min_gap` apart.
pub fn draw_pmas(master_seed: u64, index: u64, multi: bool, min_gap: f64) -> Vec<f64> {
    let mut rng = stream_rng(master_seed, Stream::Phantom, (1 << 40) | index);
    let (lo, hi) = (T_MIN * 100.0, T_MAX * 100.0);
    if !multi {
        return vec![rng.gen_range(lo..hi)];
    }
    loop {
        let (x, y) = (rng.gen_range(lo..hi), rng.gen_range(lo..hi));
        if (x - y).abs() >= min_gap {
            return vec![x.min(y), x.max(y)];
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedDataset {
    pub dir: PathBuf,
    pub train: DatasetManifest,
    pub val: DatasetManifest,
    pub test: DatasetManifest,
    pub subjects: Vec<SubjectParams>,
}

impl GeneratedDataset {
    pub fn manifest(&self, split: Split) -> &DatasetManifest {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Write `volumes/<scan>.ndv`, `train.csv`, `val.csv`, `test.csv` and
/// `subjects.csv` under `dir`.
pub fn generate_dataset(config: &PhantomDatasetConfig, dir: impl AsRef<Path>) -> Result<GeneratedDataset> {
    config.validate()?;
    let dir = dir.as_ref();
    ensure_dir(&dir.join("volumes"))?;

    let mut jobs = Vec::new();
    for (split, multi, range) in config.groups() {
        for index in range {
            jobs.push((split, multi, index));
        }
    }
    let rendered: Vec<(Split, SubjectParams, Vec<ScanRecord>)> = jobs
        .par_iter()
        .map(|&(split, multi, index)| -> Result<_> {
            let params = generate_subject_with(config.seed, index as u64, &config.ranges);
            let pmas = draw_pmas(config.seed, index as u64, multi, config.min_gap_weeks);
            let noise = Normal::new(0.0, config.hc_noise_sd).map_err(|e| Error::Config(e.to_string()))?;
            let mut noise_rng = stream_rng(config.seed, Stream::HcNoise, index as u64);
            let sid = subject_id(index);
            let mut records = Vec::new();
            for (s, pma) in pmas.iter().enumerate() {
                let t = pma / 100.0;
                let (img, _) = render_phantom(&params, t, &config.shape, &config.spacing)?;
                let scan_id = format!("{sid}_ses-{}", s + 1);
                let rel = format!("volumes/{scan_id}.ndv");
                save_volume(&img, dir.join(&rel))?;
                let hc = config.hc_slope * true_circumference(&params, t)
                    + config.hc_intercept
                    + noise.sample(&mut noise_rng);
                records.push(ScanRecord {
                    subject_id: sid.clone(),
                    scan_id,
                    pma_weeks: *pma,
                    path: rel,
                    hc_cm: Some(hc),
                });
            }
            Ok((split, params, records))
        })
        .collect::<Result<_>>()?;

    let mut out = GeneratedDataset {
        dir: dir.to_path_buf(),
        train: DatasetManifest::new(dir),
        val: DatasetManifest::new(dir),
        test: DatasetManifest::new(dir),
        subjects: Vec::new(),
    };
    for (split, params, records) in rendered {
        let m = match split {
            Split::Train => &mut out.train,
            Split::Val => &mut out.val,
            Split::Test => &mut out.test,
        };
        m.records.extend(records);
        out.subjects.push(params);
    }
    for split in [Split::Train, Split::Val, Split::Test] {
        out.manifest(split).write(dir.join(split.file_name()))?;
    }
    let path = dir.join("subjects.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["subject_id", "seed", "index"])?;
    for p in &out.subjects {
        w.write_record([subject_id(p.index as usize), p.master_seed.to_string(), p.index.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(out)
}

/// Circle sanity constant used in tests and docs.
pub fn circle_circumference(r: f64) -> f64 {
    2.0 * PI * r
}
