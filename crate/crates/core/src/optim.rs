//! AdamW with decoupled weight decay, and micro-batched gradient
//! accumulation.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::GradientSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// Optimizer state for a fixed list of parameter groups.
///
/// ```text
/// θ ← θ·(1 − lr·wd)            (decayable groups only)
/// m ← β₁m + (1 − β₁)g
/// v ← β₂v + (1 − β₂)g²
/// θ ← θ − lr·m̂/(√v̂ + ε)       m̂ = m/(1 − β₁ᵗ), v̂ = v/(1 − β₂ᵗ)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub decayable: bool,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, group_sizes: &[usize], decayable: bool) -> Self {
        Self {
            config,
            decayable,
            step: 0,
            m: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn from_parts(
        config: AdamWConfig,
        decayable: bool,
        step: u64,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if m.len() != v.len() || m.iter().zip(&v).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Format("moment buffers do not match".into()));
        }
        Ok(Self {
            config,
            decayable,
            step,
            m,
            v,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// One update. Shapes must mirror the groups given at construction.
    /// A non-finite gradient leaves parameters and moments untouched and
    /// returns [`Error::NonFinite`].
    pub fn step(&mut self, params: &mut [&mut [f32]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter groups",
                expected: self.m.len(),
                actual: params.len().min(grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::DimensionMismatch {
                    what: "parameter group size",
                    expected: m.len(),
                    actual: if p.len() != m.len() { p.len() } else { g.len() },
                });
            }
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("gradient".into()));
        }

        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let decay = if self.decayable { 1.0 - c.lr * c.weight_decay } else { 1.0 };
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                let x = p[i] as f64 * decay - c.lr * mh / (vh.sqrt() + c.eps);
                p[i] = x as f32;
            }
        }
        Ok(())
    }
}

/// Contiguous partition of `total` pixels into micro-batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MicroBatchPlan {
    pub total: usize,
    pub micro_batch_size: usize,
}

impl MicroBatchPlan {
    pub fn new(total: usize, micro_batch_size: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::Empty("micro-batch plan"));
        }
        if micro_batch_size == 0 {
            return Err(Error::Config("micro-batch size must be at least 1".into()));
        }
        Ok(Self {
            total,
            micro_batch_size,
        })
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.total)
            .step_by(self.micro_batch_size)
            .map(move |s| s..(s + self.micro_batch_size).min(self.total))
    }

    pub fn len(&self) -> usize {
        self.total.div_ceil(self.micro_batch_size)
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Full-batch mean loss and gradient from micro-batch means, each weighted
/// by its share of pixels. Only one micro-batch is live at a time.
pub fn accumulate<F>(plan: &MicroBatchPlan, evaluator: F) -> Result<(f64, GradientSet)>
where
    F: FnMut(Range<usize>) -> Result<(f64, GradientSet)>,
{
    accumulate_ranges(plan.total, plan.ranges(), evaluator)
}

/// As [`accumulate`] for an arbitrary partition of `0..total`.
pub fn accumulate_ranges<I, F>(total: usize, ranges: I, mut evaluator: F) -> Result<(f64, GradientSet)>
where
    I: IntoIterator<Item = Range<usize>>,
    F: FnMut(Range<usize>) -> Result<(f64, GradientSet)>,
{
    let mut loss = 0.0;
    let mut acc: Option<GradientSet> = None;
    for (index, range) in ranges.into_iter().enumerate() {
        let w = range.len() as f64 / total as f64;
        let (l, g) = evaluator(range).map_err(|e| Error::MicroBatch {
            index,
            source: Box::new(e),
        })?;
        loss += w * l;
        match acc.as_mut() {
            Some(a) => a.add_scaled(&g, w),
            None => {
                let mut g = g;
                g.scale(w);
                acc = Some(g);
            }
        }
    }
    let grads = acc.ok_or(Error::Empty("micro-batch plan"))?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64, wd: f64) -> AdamWConfig {
        AdamWConfig {
            lr,
            weight_decay: wd,
            ..AdamWConfig::default()
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut opt = AdamW::new(cfg(1e-3, 0.0), &[3], true);
        let mut p = vec![1.0f32, -2.0, 0.5];
        for _ in 0..5 {
            opt.step(&mut [&mut p], &[&[0.0; 3]]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_gradient_pure_decay() {
        let mut opt = AdamW::new(cfg(1e-3, 0.01), &[1], true);
        let mut p = vec![1.0f32];
        opt.step(&mut [&mut p], &[&[0.0]]).unwrap();
        assert!((p[0] as f64 - 0.99999).abs() < 1e-7);

        let mut frozen = AdamW::new(cfg(1e-3, 0.01), &[1], false);
        let mut q = vec![1.0f32];
        frozen.step(&mut [&mut q], &[&[0.0]]).unwrap();
        assert_eq!(q[0], 1.0);
    }

    #[test]
    fn first_step_closed_form() {
        let mut opt = AdamW::new(cfg(1e-3, 0.0), &[1], true);
        let mut p = vec![0.0f32];
        opt.step(&mut [&mut p], &[&[1.0]]).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] as f64 - expected).abs() < 1e-10, "{}", p[0]);
        assert!((expected - -9.99999990e-4).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut opt = AdamW::new(cfg(1e-3, 0.01), &[2], true);
        let mut p = vec![1.0f32, 2.0];
        let err = opt.step(&mut [&mut p], &[&[f64::NAN, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(opt.step_count(), 0);
        assert!(opt.first_moments()[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut opt = AdamW::new(cfg(1e-3, 0.0), &[2], true);
        let mut p = vec![1.0f32, 2.0, 3.0];
        assert!(opt.step(&mut [&mut p], &[&[0.0; 3]]).is_err());
        assert!(opt.step(&mut [], &[]).is_err());
    }

    #[test]
    fn weight_decay_zero_is_adam() {
        // Adam reference written out longhand.
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 1e-2f64);
        let grads = [0.3, -1.2, 0.7, 0.05, -0.4];
        let mut opt = AdamW::new(cfg(lr, 0.0), &[1], true);
        let mut p = vec![0.25f32];
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.25f64);
        for (k, &g) in grads.iter().enumerate() {
            opt.step(&mut [&mut p], &[&[g]]).unwrap();
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let t = (k + 1) as i32;
            x -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            x = x as f32 as f64;
            assert_eq!(p[0] as f64, x);
        }
    }

    #[test]
    fn plan_partitions_pixels() {
        let plan = MicroBatchPlan::new(10, 3).unwrap();
        let r: Vec<_> = plan.ranges().collect();
        assert_eq!(r, vec![0..3, 3..6, 6..9, 9..10]);
        assert_eq!(plan.len(), 4);
        assert!(MicroBatchPlan::new(0, 3).is_err());
        assert!(MicroBatchPlan::new(3, 0).is_err());
    }

    #[test]
    fn evaluator_failure_reports_index() {
        let plan = MicroBatchPlan::new(10, 4).unwrap();
        let err = accumulate(&plan, |r| {
            if r.start == 4 {
                Err(Error::NonFinite("boom".into()))
            } else {
                Ok((0.0, GradientSet { layers: vec![], latent: vec![0.0] }))
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::MicroBatch { index: 1, .. }));
    }
}
