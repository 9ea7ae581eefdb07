//! Latent inversion against a frozen network and prediction at other ages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{GradTarget, GradientSet, InrNetwork};
use crate::optim::{accumulate, AdamW, AdamWConfig, MicroBatchPlan};
use crate::rng::{stream_rng, Stream};
use crate::training::{sample_pixels, PixelBatch};
use crate::volume::{voxel_coordinates, ForegroundMask, VolumeImage};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PixelPolicy {
    /// Every voxel in every step.
    All,
    /// A fresh sample per step.
    Sampled { fraction: f64, fg_bg_ratio: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub steps: u64,
    pub lr: f64,
    pub pixels: PixelPolicy,
    pub micro_batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
}

impl InversionConfig {
    pub fn default_2d() -> Self {
        Self {
            steps: 2000,
            lr: 1e-3,
            pixels: PixelPolicy::All,
            micro_batch_size: 4096,
            seed: 0,
            weight_decay: 0.0,
        }
    }

    pub fn default_3d() -> Self {
        Self {
            steps: 1000,
            pixels: PixelPolicy::Sampled {
                fraction: 0.05,
                fg_bg_ratio: 0.9,
            },
            ..Self::default_2d()
        }
    }

    /// Budget matched to [`TrainConfig::desk`](crate::training::TrainConfig::desk).
    pub fn desk() -> Self {
        Self {
            steps: 300,
            lr: 1e-2,
            pixels: PixelPolicy::Sampled {
                fraction: 0.25,
                fg_bg_ratio: 0.9,
            },
            ..Self::default_2d()
        }
    }

    pub fn for_dims(d: usize) -> Self {
        if d == 3 {
            Self::default_3d()
        } else {
            Self::default_2d()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("inversion lr must be positive, got {}", self.lr)));
        }
        if self.micro_batch_size == 0 {
            return Err(Error::Config("micro_batch_size must be at least 1".into()));
        }
        if let PixelPolicy::Sampled { fraction, fg_bg_ratio } = self.pixels {
            if !(fraction > 0.0 && fraction <= 1.0) || !(0.0..=1.0).contains(&fg_bg_ratio) {
                return Err(Error::Config("invalid inversion sampling parameters".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inversion {
    pub latent: Vec<f32>,
    /// Mean squared error over all voxels at the final latent.
    pub loss: f64,
    /// Loss seen by each optimization step (before its update).
    pub trajectory: Vec<f64>,
}

fn batch_loss(
    net: &InrNetwork,
    batch: &PixelBatch,
    latent: &[f32],
    micro_batch_size: usize,
) -> Result<(f64, GradientSet)> {
    let plan = MicroBatchPlan::new(batch.len(), micro_batch_size)?;
    if plan.len() == 1 {
        return net.loss_and_grad(&batch.coords, &batch.targets, batch.t, latent, GradTarget::LatentOnly);
    }
    accumulate(&plan, |r| {
        let (c, y) = batch.slice(r);
        net.loss_and_grad(c, y, batch.t, latent, GradTarget::LatentOnly)
    })
}

/// Optimize a zero-initialized latent so that `f(·, t1, l)` reproduces
/// `img`. The network is borrowed immutably and never changes.
pub fn invert_latent(net: &InrNetwork, img: &VolumeImage, t1: f64, config: &InversionConfig) -> Result<Inversion> {
    config.validate()?;
    if img.ndim() != net.config().spatial_dims {
        return Err(Error::DimensionMismatch {
            what: "image dimensionality",
            expected: net.config().spatial_dims,
            actual: img.ndim(),
        });
    }
    let mask = ForegroundMask::from_intensity(img);
    let full = PixelBatch::full(img, &mask, t1)?;
    let dim = net.config().latent_dim;
    let mut latent = vec![0.0f32; dim];
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..AdamWConfig::default()
        },
        &[dim],
        config.weight_decay > 0.0,
    );
    let mut trajectory = Vec::with_capacity(config.steps as usize);
    for step in 0..config.steps {
        let (loss, grads) = match config.pixels {
            PixelPolicy::All => batch_loss(net, &full, &latent, config.micro_batch_size)?,
            PixelPolicy::Sampled { fraction, fg_bg_ratio } => {
                let mut rng = stream_rng(config.seed, Stream::Inversion, step);
                let b = sample_pixels(img, &mask, t1, fraction, fg_bg_ratio, &mut rng)?;
                batch_loss(net, &b, &latent, config.micro_batch_size)?
            }
        };
        if !loss.is_finite() || grads.latent.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "inversion loss at step {step} (last finite {:?})",
                trajectory.last()
            )));
        }
        trajectory.push(loss);
        opt.step(&mut [&mut latent], &[&grads.latent])?;
    }
    let (loss, _) = batch_loss(net, &full, &latent, config.micro_batch_size)?;
    Ok(Inversion {
        latent,
        loss,
        trajectory,
    })
}

/// Evaluate the network at every voxel center, clamped to `[0, 1]`.
pub fn predict_image(
    net: &InrNetwork,
    latent: &[f32],
    t: f64,
    shape: &[usize],
    spacing: &[f32],
    micro_batch_size: usize,
) -> Result<VolumeImage> {
    if shape.len() != net.config().spatial_dims {
        return Err(Error::DimensionMismatch {
            what: "output dimensionality",
            expected: net.config().spatial_dims,
            actual: shape.len(),
        });
    }
    if micro_batch_size == 0 {
        return Err(Error::Config("micro_batch_size must be at least 1".into()));
    }
    let d = shape.len();
    let coords = voxel_coordinates(shape);
    let mut data = Vec::with_capacity(coords.len() / d);
    for chunk in coords.chunks(micro_batch_size * d) {
        data.extend(net.forward_batch(chunk, t, latent)?.into_iter().map(|v| v.clamp(0.0, 1.0)));
    }
    VolumeImage::new(shape.to_vec(), spacing.to_vec(), data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Development {
    pub reconstruction: VolumeImage,
    pub prediction: VolumeImage,
    pub inversion: Inversion,
}

/// Invert at `t1`, then render at `t1` and at `t2` (either direction).
pub fn predict_development(
    net: &InrNetwork,
    img: &VolumeImage,
    t1: f64,
    t2: f64,
    config: &InversionConfig,
) -> Result<Development> {
    let inversion = invert_latent(net, img, t1, config)?;
    let render = |t| predict_image(net, &inversion.latent, t, img.shape(), img.spacing(), config.micro_batch_size);
    let reconstruction = render(t1)?;
    let prediction = if t2 == t1 { reconstruction.clone() } else { render(t2)? };
    Ok(Development {
        reconstruction,
        prediction,
        inversion,
    })
}
