//! Image similarity, circumference measurement and head-circumference
//! statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{ForegroundMask, VolumeImage};

/// Intensity threshold for foreground in predicted images.
pub const PREDICTION_THRESHOLD: f32 = 0.05;

fn same_shape(a: &VolumeImage, b: &VolumeImage) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(a.shape().to_vec(), b.shape().to_vec()));
    }
    Ok(())
}

fn mse(a: &VolumeImage, b: &VolumeImage) -> Result<f64> {
    same_shape(a, b)?;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum();
    Ok(s / a.len() as f64)
}

/// Peak signal-to-noise ratio in dB over every voxel, peak 1.
/// Identical images give `f64::INFINITY`.
pub fn psnr(a: &VolumeImage, b: &VolumeImage) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

pub fn mae(a: &VolumeImage, b: &VolumeImage) -> Result<f64> {
    same_shape(a, b)?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (*x as f64 - *y as f64).abs()).sum();
    Ok(s / a.len() as f64)
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Valid-mode correlation of `data` with `kernel` along `axis`.
fn filter_axis(data: &[f64], shape: &[usize], axis: usize, kernel: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let k = kernel.len();
    let mut out_shape = shape.to_vec();
    out_shape[axis] = shape[axis] + 1 - k;
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let (n_in, n_out) = (shape[axis], out_shape[axis]);
    let mut out = vec![0.0; outer * n_out * inner];
    for o in 0..outer {
        for j in 0..n_out {
            let dst = &mut out[(o * n_out + j) * inner..][..inner];
            for (q, w) in kernel.iter().enumerate() {
                let src = &data[(o * n_in + j + q) * inner..][..inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    (out, out_shape)
}

fn gaussian_filter(data: &[f64], shape: &[usize], kernel: &[f64]) -> Vec<f64> {
    let (mut buf, mut sh) = (data.to_vec(), shape.to_vec());
    for axis in 0..shape.len() {
        let (b, s) = filter_axis(&buf, &sh, axis, kernel);
        buf = b;
        sh = s;
    }
    buf
}

/// Mean structural similarity with an 11-wide Gaussian window (σ = 1.5)
/// per axis, `K1 = 0.01`, `K2 = 0.03`, data range 1. Only window
/// positions fully inside the image contribute.
pub fn ssim(a: &VolumeImage, b: &VolumeImage) -> Result<f64> {
    same_shape(a, b)?;
    if a.shape().iter().any(|&n| n < SSIM_WINDOW) {
        return Err(Error::InvalidValue(format!(
            "image {:?} is smaller than the {SSIM_WINDOW}-voxel window",
            a.shape()
        )));
    }
    let kernel = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let x: Vec<f64> = a.data().iter().map(|v| *v as f64).collect();
    let y: Vec<f64> = b.data().iter().map(|v| *v as f64).collect();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
    let shape = a.shape();
    let mx = gaussian_filter(&x, shape, &kernel);
    let my = gaussian_filter(&y, shape, &kernel);
    let mxx = gaussian_filter(&prod(&x, &x), shape, &kernel);
    let myy = gaussian_filter(&prod(&y, &y), shape, &kernel);
    let mxy = gaussian_filter(&prod(&x, &y), shape, &kernel);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for i in 0..mx.len() {
        let vx = mxx[i] - mx[i] * mx[i];
        let vy = myy[i] - my[i] * my[i];
        let cxy = mxy[i] - mx[i] * my[i];
        total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2))
            / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}

/// Largest face-connected component of `mask` (first in storage order on
/// ties). An empty mask stays empty.
pub fn largest_component(mask: &ForegroundMask) -> ForegroundMask {
    let shape = mask.shape();
    let n = mask.bits().len();
    let mut strides = vec![1usize; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    let mut label = vec![0u32; n];
    let (mut best, mut best_size, mut next) = (0u32, 0usize, 0u32);
    let mut stack = Vec::new();
    for start in 0..n {
        if !mask.get(start) || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            for (k, &st) in strides.iter().enumerate() {
                let i = (p / st) % shape[k];
                if i > 0 && mask.get(p - st) && label[p - st] == 0 {
                    label[p - st] = next;
                    stack.push(p - st);
                }
                if i + 1 < shape[k] && mask.get(p + st) && label[p + st] == 0 {
                    label[p + st] = next;
                    stack.push(p + st);
                }
            }
        }
        if size > best_size {
            best_size = size;
            best = next;
        }
    }
    let bits = label.iter().map(|&l| l != 0 && l == best).collect();
    ForegroundMask::new(shape.to_vec(), bits).expect("shape preserved")
}

/// Foreground of a predicted image: intensity above `threshold`, largest
/// connected component only.
pub fn prediction_mask(img: &VolumeImage, threshold: f32) -> ForegroundMask {
    largest_component(&ForegroundMask::from_threshold(img, threshold))
}

/// Physical size of the foreground (cm² or cm³).
pub fn foreground_area(mask: &ForegroundMask, spacing: &[f32]) -> f64 {
    mask.count() as f64 * spacing.iter().map(|s| *s as f64).product::<f64>()
}

/// Foreground voxel indices `(lr, ap)` of the axial slice with the largest
/// anterior–posterior extent; ties go to the slice with more voxels.
fn measurement_slice(mask: &ForegroundMask) -> Result<Vec<(usize, usize)>> {
    let shape = mask.shape();
    let slices = if shape.len() == 3 { shape[2] } else { 1 };
    #[allow(clippy::type_complexity)]
    let mut best: Option<(usize, usize, Vec<(usize, usize)>)> = None;
    for z in 0..slices {
        let mut pts = Vec::new();
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                let flat = if shape.len() == 3 {
                    (i * shape[1] + j) * shape[2] + z
                } else {
                    i * shape[1] + j
                };
                if mask.get(flat) {
                    pts.push((i, j));
                }
            }
        }
        if pts.is_empty() {
            continue;
        }
        let lo = pts.iter().map(|p| p.1).min().unwrap();
        let hi = pts.iter().map(|p| p.1).max().unwrap();
        let extent = hi - lo;
        let better = match &best {
            None => true,
            Some((e, n, _)) => extent > *e || (extent == *e && pts.len() > *n),
        };
        if better {
            best = Some((extent, pts.len(), pts));
        }
    }
    best.map(|b| b.2).ok_or(Error::EmptyMask)
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, without
/// collinear points.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * p.len());
    for &pt in &p {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], pt) <= 0.0 {
            hull.pop();
        }
        hull.push(pt);
    }
    let lower = hull.len() + 1;
    for &pt in p.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], pt) <= 0.0 {
            hull.pop();
        }
        hull.push(pt);
    }
    hull.pop();
    hull
}

pub fn polygon_perimeter(poly: &[(f64, f64)]) -> f64 {
    if poly.len() < 2 {
        return 0.0;
    }
    (0..poly.len())
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            (a.0 - b.0).hypot(a.1 - b.1)
        })
        .sum()
}

pub fn hull_perimeter(points: &[(f64, f64)]) -> f64 {
    polygon_perimeter(&convex_hull(points))
}

/// Gaussian width (voxels) used to recover a sub-voxel boundary from a
/// binary mask.
pub const CONTOUR_SIGMA: f64 = 1.2;

fn slice_mask(mask: &ForegroundMask) -> Result<ForegroundMask> {
    let (n0, n1) = (mask.shape()[0], mask.shape()[1]);
    let mut bits = vec![false; n0 * n1];
    for (i, j) in measurement_slice(mask)? {
        bits[i * n1 + j] = true;
    }
    ForegroundMask::new(vec![n0, n1], bits)
}

fn nonzero(p: f64) -> Result<f64> {
    if p <= 0.0 {
        return Err(Error::Degenerate("foreground too small to measure".into()));
    }
    Ok(p)
}

/// Tape-measure brain circumference (cm): convex-hull perimeter of the
/// sub-voxel boundary of the measurement slice (level-½ contour of the
/// mask blurred by [`CONTOUR_SIGMA`]).
pub fn measure_bc(mask: &ForegroundMask, spacing: &[f32]) -> Result<f64> {
    let slice = slice_mask(mask)?;
    let pts: Vec<(f64, f64)> = contour_segments(&slice, spacing, CONTOUR_SIGMA)?
        .into_iter()
        .flat_map(|(a, b)| [a, b])
        .collect();
    nonzero(hull_perimeter(&pts))
}

/// Convex-hull perimeter (cm) of the foreground voxel centers of the
/// measurement slice. Biased low by a fraction of a voxel all round.
pub fn measure_bc_centers(mask: &ForegroundMask, spacing: &[f32]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = measurement_slice(mask)?
        .into_iter()
        .map(|(i, j)| (i as f64 * spacing[0] as f64, j as f64 * spacing[1] as f64))
        .collect();
    nonzero(hull_perimeter(&pts))
}

/// Ramanujan's ellipse circumference `π[3(a+b) − √((3a+b)(a+3b))]`.
pub fn ramanujan(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Degenerate(format!("ellipse semi-axes {a}, {b}")));
    }
    Ok(std::f64::consts::PI * (3.0 * (a + b) - ((3.0 * a + b) * (a + 3.0 * b)).sqrt()))
}

/// Ellipse brain circumference from the occipitofrontal (AP) and
/// biparietal (LR) diameters of the measurement slice.
pub fn measure_bc_ellipse(mask: &ForegroundMask, spacing: &[f32]) -> Result<f64> {
    let pts = measurement_slice(mask)?;
    let extent = |f: fn(&(usize, usize)) -> usize, s: f32| {
        let lo = pts.iter().map(f).min().unwrap();
        let hi = pts.iter().map(f).max().unwrap();
        (hi - lo + 1) as f64 * s as f64
    };
    let ap = extent(|p| p.1, spacing[1]);
    let lr = extent(|p| p.0, spacing[0]);
    ramanujan(ap / 2.0, lr / 2.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BcMethod {
    #[default]
    Hull,
    HullCenters,
    Ellipse,
}

impl BcMethod {
    pub fn measure(self, mask: &ForegroundMask, spacing: &[f32]) -> Result<f64> {
        match self {
            BcMethod::Hull => measure_bc(mask, spacing),
            BcMethod::HullCenters => measure_bc_centers(mask, spacing),
            BcMethod::Ellipse => measure_bc_ellipse(mask, spacing),
        }
    }
}

impl std::str::FromStr for BcMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hull" => Ok(BcMethod::Hull),
            "hull-centers" => Ok(BcMethod::HullCenters),
            "ellipse" => Ok(BcMethod::Ellipse),
            _ => Err(Error::Config(format!("unknown bc method `{s}` (hull|hull-centers|ellipse)"))),
        }
    }
}

impl std::fmt::Display for BcMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BcMethod::Hull => "hull",
            BcMethod::HullCenters => "hull-centers",
            BcMethod::Ellipse => "ellipse",
        })
    }
}

/// Boundary length (cm) of a 2D mask: marching squares at level ½ on the
/// mask blurred with a Gaussian of `sigma` voxels.
pub fn contour_length(mask: &ForegroundMask, spacing: &[f32], sigma: f64) -> Result<f64> {
    let segs = contour_segments(mask, spacing, sigma)?;
    Ok(segs.iter().map(|(p, q)| (p.0 - q.0).hypot(p.1 - q.1)).sum())
}

/// Line segment between two points (cm).
pub type Segment = ((f64, f64), (f64, f64));

/// Level-½ marching-squares segments (cm) of a 2D mask blurred with a
/// Gaussian of `sigma` voxels.
pub fn contour_segments(mask: &ForegroundMask, spacing: &[f32], sigma: f64) -> Result<Vec<Segment>> {
    let shape = mask.shape();
    if shape.len() != 2 {
        return Err(Error::DimensionMismatch {
            what: "contour dimensionality",
            expected: 2,
            actual: shape.len(),
        });
    }
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let r = if sigma > 0.0 { (3.0 * sigma).ceil() as usize } else { 0 };
    let pad = r + 1;
    let (h, w) = (shape[0] + 2 * pad, shape[1] + 2 * pad);
    let mut field = vec![0.0f64; h * w];
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            if mask.get(i * shape[1] + j) {
                field[(i + pad) * w + j + pad] = 1.0;
            }
        }
    }
    if r > 0 {
        let k = gaussian_kernel(2 * r + 1, sigma);
        let blur = |src: &[f64], along_rows: bool| -> Vec<f64> {
            let mut out = vec![0.0; h * w];
            for i in 0..h {
                for j in 0..w {
                    let mut s = 0.0;
                    for (q, kv) in k.iter().enumerate() {
                        let o = q as isize - r as isize;
                        let (ii, jj) = if along_rows { (i as isize + o, j as isize) } else { (i as isize, j as isize + o) };
                        if ii >= 0 && jj >= 0 && (ii as usize) < h && (jj as usize) < w {
                            s += kv * src[ii as usize * w + jj as usize];
                        }
                    }
                    out[i * w + j] = s;
                }
            }
            out
        };
        field = blur(&blur(&field, true), false);
    }
    let (sx, sy) = (spacing[0] as f64, spacing[1] as f64);
    let level = 0.5;
    let mut segs = Vec::new();
    for i in 0..h - 1 {
        for j in 0..w - 1 {
            // corners counter-clockwise: (i,j) (i+1,j) (i+1,j+1) (i,j+1)
            let c = [
                (i as f64, j as f64, field[i * w + j]),
                (i as f64 + 1.0, j as f64, field[(i + 1) * w + j]),
                (i as f64 + 1.0, j as f64 + 1.0, field[(i + 1) * w + j + 1]),
                (i as f64, j as f64 + 1.0, field[i * w + j + 1]),
            ];
            let mut cuts = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (c[e], c[(e + 1) % 4]);
                if (a.2 >= level) != (b.2 >= level) {
                    let f = (level - a.2) / (b.2 - a.2);
                    cuts.push((a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1)));
                }
            }
            let off = pad as f64;
            let cm = |p: (f64, f64)| ((p.0 - off) * sx, (p.1 - off) * sy);
            let mut seg = |p: (f64, f64), q: (f64, f64)| segs.push((cm(p), cm(q)));
            match cuts.len() {
                2 => seg(cuts[0], cuts[1]),
                4 => {
                    // saddle: pair by the cell-center value
                    let center = c.iter().map(|v| v.2).sum::<f64>() / 4.0;
                    if (center >= level) == (c[0].2 >= level) {
                        seg(cuts[0], cuts[3]);
                        seg(cuts[1], cuts[2]);
                    } else {
                        seg(cuts[0], cuts[1]);
                        seg(cuts[2], cuts[3]);
                    }
                }
                _ => {}
            }
        }
    }
    Ok(segs)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Pearson correlation; `None` if either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub slope: f64,
    pub intercept: f64,
    pub r: f64,
    /// Population standard deviation of the residuals (cm).
    pub sigma: f64,
}

impl RegressionModel {
    /// BC→HC relation reported for the clinical reference cohort.
    pub const REFERENCE: RegressionModel = RegressionModel {
        slope: 1.090,
        intercept: 1.758,
        r: 0.9358,
        sigma: 0.8600,
    };

    pub fn predict(&self, bc: f64) -> f64 {
        self.slope * bc + self.intercept
    }
}

/// Least-squares line `hc = slope·bc + intercept`.
pub fn fit_regression(pairs: &[(f64, f64)]) -> Result<RegressionModel> {
    if pairs.len() < 3 {
        return Err(Error::Empty("regression needs at least 3 pairs"));
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 1e-12 * (1.0 + mx * mx) * x.len() as f64) {
        return Err(Error::Degenerate("constant BC in regression".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - (slope * a + intercept)).collect();
    Ok(RegressionModel {
        slope,
        intercept,
        r: pearson(&x, &y).unwrap_or(1.0),
        sigma: std_dev(&residuals),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HcStats {
    /// Population standard deviation of `predicted − true` (cm).
    pub sigma: f64,
    pub r: Option<f64>,
    pub mean_error: f64,
}

pub fn hc_error_stats(pairs: &[(f64, f64)]) -> Result<HcStats> {
    if pairs.len() < 2 {
        return Err(Error::Empty("HC statistics need at least 2 records"));
    }
    let pred: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let truth: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let err: Vec<f64> = pred.iter().zip(&truth).map(|(p, t)| p - t).collect();
    Ok(HcStats {
        sigma: std_dev(&err),
        r: pearson(&pred, &truth),
        mean_error: mean(&err),
    })
}

/// One evaluated (input, target) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub subject_id: String,
    pub scan_id_in: String,
    pub scan_id_target: String,
    pub t1: f64,
    pub t2: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub mae: f64,
    pub inversion_loss: f64,
    pub recon_area: f64,
    pub pred_area: f64,
    pub predicted_bc: f64,
    pub predicted_hc: f64,
    pub true_hc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub cases: usize,
    pub psnr: (f64, f64),
    pub ssim: (f64, f64),
    pub mae: (f64, f64),
    pub hc: Option<HcStats>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    (mean(v), std_dev(v))
}

pub fn summarize(records: &[EvalRecord]) -> Result<EvalSummary> {
    if records.is_empty() {
        return Err(Error::Empty("evaluation records"));
    }
    let col = |f: fn(&EvalRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let hc: Vec<(f64, f64)> = records.iter().filter_map(|r| r.true_hc.map(|t| (r.predicted_hc, t))).collect();
    Ok(EvalSummary {
        cases: records.len(),
        psnr: mean_std(&col(|r| r.psnr)),
        ssim: mean_std(&col(|r| r.ssim)),
        mae: mean_std(&col(|r| r.mae)),
        hc: if hc.len() >= 2 { Some(hc_error_stats(&hc)?) } else { None },
    })
}

const REPORT_HEADER: [&str; 14] = [
    "subject_id",
    "scan_id_in",
    "scan_id_target",
    "t1",
    "t2",
    "psnr",
    "ssim",
    "mae",
    "inversion_loss",
    "recon_area",
    "pred_area",
    "predicted_bc",
    "predicted_hc",
    "true_hc",
];

/// Per-case CSV followed by one `summary` row whose metric cells read
/// `mean±std` (and `σ=…;r=…` in the HC column).
pub fn write_report(records: &[EvalRecord], path: impl AsRef<Path>) -> Result<()> {
    let s = summarize(records)?;
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_HEADER)?;
    for r in records {
        w.write_record([
            r.subject_id.clone(),
            r.scan_id_in.clone(),
            r.scan_id_target.clone(),
            r.t1.to_string(),
            r.t2.to_string(),
            r.psnr.to_string(),
            r.ssim.to_string(),
            r.mae.to_string(),
            r.inversion_loss.to_string(),
            r.recon_area.to_string(),
            r.pred_area.to_string(),
            r.predicted_bc.to_string(),
            r.predicted_hc.to_string(),
            r.true_hc.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    let pm = |m: (f64, f64)| format!("{:.4}±{:.4}", m.0, m.1);
    let hc = s
        .hc
        .map(|h| format!("σ={:.4};r={}", h.sigma, h.r.map(|r| format!("{r:.4}")).unwrap_or_else(|| "nan".into())))
        .unwrap_or_default();
    w.write_record([
        "summary".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        pm(s.psnr),
        pm(s.ssim),
        pm(s.mae),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        hc,
    ])?;
    w.flush().map_err(|e| Error::io(path, e))
}
