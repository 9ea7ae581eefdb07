//! Scalar images, normalization conventions, the NDV1 volume format and
//! the dataset manifest.
//!
//! Layout is row-major with the last axis fastest. Axis 0 runs left–right,
//! axis 1 anterior–posterior and (for 3D) axis 2 inferior–superior, so an
//! axial slice is a fixed index along the last axis.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NDV_MAGIC: &[u8; 7] = b"NDVOL1\0";

/// Intensity assigned to every background voxel.
pub const BACKGROUND_VALUE: f32 = 0.0;

#[derive(Clone, Debug, PartialEq)]
pub struct VolumeImage {
    shape: Vec<usize>,
    spacing: Vec<f32>,
    data: Vec<f32>,
}

impl VolumeImage {
    pub fn new(shape: Vec<usize>, spacing: Vec<f32>, data: Vec<f32>) -> Result<Self> {
        validate_shape(&shape)?;
        if spacing.len() != shape.len() {
            return Err(Error::DimensionMismatch {
                what: "spacing",
                expected: shape.len(),
                actual: spacing.len(),
            });
        }
        if let Some(s) = spacing.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidValue(format!("spacing must be positive, got {s}")));
        }
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::DimensionMismatch {
                what: "voxel data",
                expected: n,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume intensities".into()));
        }
        Ok(Self {
            shape,
            spacing,
            data,
        })
    }

    pub fn zeros(shape: Vec<usize>, spacing: Vec<f32>) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, spacing, vec![BACKGROUND_VALUE; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f32] {
        &self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if !(shape.len() == 2 || shape.len() == 3) {
        return Err(Error::InvalidValue(format!(
            "dimension count must be 2 or 3, got {}",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidValue(format!("zero-length axis in {shape:?}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForegroundMask {
    shape: Vec<usize>,
    bits: Vec<bool>,
}

impl ForegroundMask {
    pub fn new(shape: Vec<usize>, bits: Vec<bool>) -> Result<Self> {
        validate_shape(&shape)?;
        let n: usize = shape.iter().product();
        if bits.len() != n {
            return Err(Error::DimensionMismatch {
                what: "mask bits",
                expected: n,
                actual: bits.len(),
            });
        }
        Ok(Self { shape, bits })
    }

    /// Voxels with intensity strictly above `threshold`.
    pub fn from_threshold(img: &VolumeImage, threshold: f32) -> Self {
        Self {
            shape: img.shape.clone(),
            bits: img.data.iter().map(|&v| v > threshold).collect(),
        }
    }

    /// Default derivation: anything brighter than the background.
    pub fn from_intensity(img: &VolumeImage) -> Self {
        Self::from_threshold(img, BACKGROUND_VALUE)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn get(&self, flat: usize) -> bool {
        self.bits[flat]
    }
}

/// Linear-interpolation percentile of an ascending slice, `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Zero the background and map the 1st/99th foreground percentiles to 0/1.
pub fn normalize_intensity(img: &VolumeImage, mask: &ForegroundMask) -> Result<VolumeImage> {
    if mask.shape != img.shape {
        return Err(Error::ShapeMismatch(mask.shape.clone(), img.shape.clone()));
    }
    let mut fg: Vec<f64> = img
        .data
        .iter()
        .zip(&mask.bits)
        .filter(|(_, m)| **m)
        .map(|(v, _)| *v as f64)
        .collect();
    if fg.is_empty() {
        return Err(Error::EmptyMask);
    }
    fg.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&fg, 0.01);
    let hi = percentile_sorted(&fg, 0.99);
    if hi <= lo {
        return Err(Error::DegenerateRange(lo));
    }
    let scale = 1.0 / (hi - lo);
    let data = img
        .data
        .iter()
        .zip(&mask.bits)
        .map(|(&v, &m)| {
            if m {
                (((v as f64 - lo) * scale).clamp(0.0, 1.0)) as f32
            } else {
                BACKGROUND_VALUE
            }
        })
        .collect();
    Ok(VolumeImage {
        shape: img.shape.clone(),
        spacing: img.spacing.clone(),
        data,
    })
}

/// Voxel-center coordinate in `(-0.5, 0.5)` per axis.
pub fn coordinate_of(index: &[usize], shape: &[usize]) -> Result<Vec<f32>> {
    if index.len() != shape.len() {
        return Err(Error::DimensionMismatch {
            what: "index",
            expected: shape.len(),
            actual: index.len(),
        });
    }
    if index.iter().zip(shape).any(|(i, n)| i >= n) {
        return Err(Error::IndexOutOfRange {
            index: index.to_vec(),
            shape: shape.to_vec(),
        });
    }
    Ok(index
        .iter()
        .zip(shape)
        .map(|(&i, &n)| axis_coordinate(i, n))
        .collect())
}

#[inline]
pub(crate) fn axis_coordinate(i: usize, n: usize) -> f32 {
    ((i as f64 + 0.5) / n as f64 - 0.5) as f32
}

/// All voxel-center coordinates of `shape`, flattened in storage order
/// (`d` values per voxel).
pub fn voxel_coordinates(shape: &[usize]) -> Vec<f32> {
    let d = shape.len();
    let n: usize = shape.iter().product();
    let mut out = Vec::with_capacity(n * d);
    let mut idx = vec![0usize; d];
    for _ in 0..n {
        out.extend(idx.iter().zip(shape).map(|(&i, &s)| axis_coordinate(i, s)));
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Multi-index of a flat storage offset.
pub fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = flat % shape[k];
        flat /= shape[k];
    }
    idx
}

/// Postmenstrual age in weeks to normalized time.
pub fn normalize_time(pma_weeks: f64) -> Result<f64> {
    if !(pma_weeks.is_finite() && pma_weeks > 0.0) {
        return Err(Error::InvalidValue(format!(
            "age must be positive, got {pma_weeks}"
        )));
    }
    Ok(pma_weeks / 100.0)
}

pub fn encode_volume(img: &VolumeImage) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + img.shape.len() * 8 + img.data.len() * 4);
    buf.extend_from_slice(NDV_MAGIC);
    buf.push(img.shape.len() as u8);
    for &s in &img.shape {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for &s in &img.spacing {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    for &v in &img.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_volume(bytes: &[u8]) -> Result<VolumeImage> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(NDV_MAGIC.len(), "magic")?;
    if magic != NDV_MAGIC {
        return Err(Error::Format("bad NDV1 magic".into()));
    }
    let d = r.u8("dimension count")? as usize;
    if !(d == 2 || d == 3) {
        return Err(Error::Format(format!("dimension count {d} outside {{2, 3}}")));
    }
    let shape = (0..d)
        .map(|_| r.u32("shape").map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let spacing = (0..d).map(|_| r.f32("spacing")).collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    if r.remaining() != n * 4 {
        return Err(Error::Format(format!(
            "data section length mismatch: expected {} bytes, found {}",
            n * 4,
            r.remaining()
        )));
    }
    let data = (0..n).map(|_| r.f32("data")).collect::<Result<Vec<_>>>()?;
    VolumeImage::new(shape, spacing, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_volume(img: &VolumeImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    w.write_all(&encode_volume(img))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<VolumeImage> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_volume(&bytes)
}

/// Little-endian cursor shared by the binary formats.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// One row of a dataset manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub subject_id: String,
    pub scan_id: String,
    pub pma_weeks: f64,
    pub path: String,
    pub hc_cm: Option<f64>,
}

impl ScanRecord {
    pub fn t(&self) -> Result<f64> {
        normalize_time(self.pma_weeks)
    }
}

/// Scans of one split; relative volume paths resolve against `base_dir`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub base_dir: PathBuf,
    pub records: Vec<ScanRecord>,
}

impl DatasetManifest {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_dir: base_dir.into(),
            records: Vec::new(),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let headers = rdr.headers()?.clone();
        let expected = ["subject_id", "scan_id", "pma_weeks", "path", "hc_cm"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Format(format!(
                "{}: manifest header must be {}",
                path.display(),
                expected.join(",")
            )));
        }
        let records = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ScanRecord>, _>>()?;
        Ok(Self {
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            records,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn resolve(&self, record: &ScanRecord) -> PathBuf {
        let p = Path::new(&record.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load(&self, record: &ScanRecord) -> Result<VolumeImage> {
        load_volume(self.resolve(record))
    }

    /// Records grouped by subject, in order of first appearance.
    pub fn by_subject(&self) -> Vec<(String, Vec<&ScanRecord>)> {
        let mut groups: Vec<(String, Vec<&ScanRecord>)> = Vec::new();
        for r in &self.records {
            match groups.iter_mut().find(|(s, _)| *s == r.subject_id) {
                Some((_, v)) => v.push(r),
                None => groups.push((r.subject_id.clone(), vec![r])),
            }
        }
        groups
    }
}

pub(crate) fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
