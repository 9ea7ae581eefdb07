//! The coordinate network: WIRE blocks composed with residual averaging,
//! hand-derived reverse-mode gradients and deterministic initialization.
//!
//! ```text
//! f = phi_N ∘ psi_{N-1} ∘ … ∘ psi_2 ∘ phi_1
//! phi_i(x) = sin(omega0 * u_i(x)) * exp(-(s0 * v_i(x))^2)
//! psi_i(x) = (x + phi_i(x)) / 2
//! ```
//!
//! The network input is the concatenation `(x, t, l)`: `d` spatial
//! coordinates, the normalized time and the `λ` latent entries. Parameters
//! are stored in `f32`; per-pixel arithmetic runs in `f32` and every
//! reduction over pixels (loss, parameter and latent gradients) accumulates
//! in `f64`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::training::PixelBatch;

/// Pixels per evaluation chunk. Chunk partial sums are reduced in chunk
/// order, which keeps results independent of the thread count.
pub const CHUNK_PIXELS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Spatial dimensions `d` (2 or 3).
    pub spatial_dims: usize,
    /// Latent dimension `λ`.
    pub latent_dim: usize,
    /// Hidden width `h`.
    pub hidden_dim: usize,
    /// Layer count `N` (first block, `N - 2` residual blocks, output block).
    pub layers: usize,
    pub omega0: f32,
    pub s0: f32,
}

impl NetworkConfig {
    /// Full-size 2D network (232 194 parameters).
    pub fn paper_2d() -> Self {
        Self {
            spatial_dims: 2,
            latent_dim: 128,
            hidden_dim: 128,
            layers: 8,
            omega0: 10.0,
            s0: 10.0,
        }
    }

    /// Full-size 3D network (232 450 parameters).
    pub fn paper_3d() -> Self {
        Self {
            spatial_dims: 3,
            ..Self::paper_2d()
        }
    }

    /// Reduced network used for CPU-scale phantom experiments.
    pub fn desk_2d() -> Self {
        Self {
            spatial_dims: 2,
            latent_dim: 16,
            hidden_dim: 32,
            layers: 5,
            omega0: 10.0,
            s0: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spatial_dims == 2 || self.spatial_dims == 3) {
            return Err(Error::Config(format!(
                "spatial dims must be 2 or 3, got {}",
                self.spatial_dims
            )));
        }
        if self.layers < 2 {
            return Err(Error::Config(format!("need at least 2 layers, got {}", self.layers)));
        }
        if self.latent_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("latent and hidden dims must be positive".into()));
        }
        if !(self.omega0 > 0.0 && self.s0 > 0.0 && self.omega0.is_finite() && self.s0.is_finite())
        {
            return Err(Error::Config("omega0 and s0 must be positive".into()));
        }
        Ok(())
    }

    /// `n_1 = λ + d + 1`.
    pub fn input_dim(&self) -> usize {
        self.latent_dim + self.spatial_dims + 1
    }

    /// `(inputs, outputs)` of every layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.layers)
            .map(|i| {
                let n = if i == 0 { self.input_dim() } else { self.hidden_dim };
                let m = if i + 1 == self.layers { 1 } else { self.hidden_dim };
                (n, m)
            })
            .collect()
    }

    /// `Σ 2·m_i·(n_i + 1)`.
    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(n, m)| 2 * m * (n + 1)).sum()
    }
}

/// Two parallel affine maps `u(x) = U x + b_u`, `v(x) = V x + b_v`.
/// Weights are row-major `outputs × inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct WireLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub u_weight: Vec<f32>,
    pub u_bias: Vec<f32>,
    pub v_weight: Vec<f32>,
    pub v_bias: Vec<f32>,
}

impl WireLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            u_weight: vec![0.0; inputs * outputs],
            u_bias: vec![0.0; outputs],
            v_weight: vec![0.0; inputs * outputs],
            v_bias: vec![0.0; outputs],
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.outputs * (self.inputs + 1)
    }

    /// Parameter groups in serialization order.
    pub fn groups(&self) -> [&[f32]; 4] {
        [&self.u_weight, &self.u_bias, &self.v_weight, &self.v_bias]
    }

    pub fn groups_mut(&mut self) -> [&mut [f32]; 4] {
        [
            &mut self.u_weight,
            &mut self.u_bias,
            &mut self.v_weight,
            &mut self.v_bias,
        ]
    }

    fn check(&self) -> Result<()> {
        let w = self.inputs * self.outputs;
        if self.u_weight.len() != w
            || self.v_weight.len() != w
            || self.u_bias.len() != self.outputs
            || self.v_bias.len() != self.outputs
        {
            return Err(Error::InvalidValue("inconsistent WIRE layer buffers".into()));
        }
        Ok(())
    }

    fn transposed(&self) -> (Vec<f32>, Vec<f32>) {
        let (n, m) = (self.inputs, self.outputs);
        let mut ut = vec![0.0; n * m];
        let mut vt = vec![0.0; n * m];
        for i in 0..m {
            for j in 0..n {
                ut[j * m + i] = self.u_weight[i * n + j];
                vt[j * m + i] = self.v_weight[i * n + j];
            }
        }
        (ut, vt)
    }
}

/// `sin(ω₀·u(x)) ⊙ exp(−(s₀·v(x))²)`.
pub fn wire_block(layer: &WireLayer, x: &[f32], omega0: f32, s0: f32) -> Result<Vec<f32>> {
    layer.check()?;
    if x.len() != layer.inputs {
        return Err(Error::DimensionMismatch {
            what: "WIRE block input",
            expected: layer.inputs,
            actual: x.len(),
        });
    }
    let n = layer.inputs;
    Ok((0..layer.outputs)
        .map(|i| {
            let row = i * n..(i + 1) * n;
            let u = dot(&layer.u_weight[row.clone()], x) + layer.u_bias[i];
            let v = dot(&layer.v_weight[row], x) + layer.v_bias[i];
            let sv = s0 * v;
            (omega0 * u).sin() * (-sv * sv).exp()
        })
        .collect())
}

/// `½(x + φ(x))` for a square layer.
pub fn residual_block(layer: &WireLayer, x: &[f32], omega0: f32, s0: f32) -> Result<Vec<f32>> {
    if layer.inputs != layer.outputs {
        return Err(Error::InvalidValue(format!(
            "residual block needs a square layer, got {}→{}",
            layer.inputs, layer.outputs
        )));
    }
    let phi = wire_block(layer, x, omega0, s0)?;
    Ok(x.iter().zip(phi).map(|(a, b)| 0.5 * (a + b)).collect())
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradients mirroring the network parameters, plus the latent input.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
    pub latent: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub u_weight: Vec<f64>,
    pub u_bias: Vec<f64>,
    pub v_weight: Vec<f64>,
    pub v_bias: Vec<f64>,
}

impl LayerGrad {
    fn zeros(n: usize, m: usize) -> Self {
        Self {
            u_weight: vec![0.0; n * m],
            u_bias: vec![0.0; m],
            v_weight: vec![0.0; n * m],
            v_bias: vec![0.0; m],
        }
    }

    pub fn groups(&self) -> [&[f64]; 4] {
        [&self.u_weight, &self.u_bias, &self.v_weight, &self.v_bias]
    }

    fn groups_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.u_weight,
            &mut self.u_bias,
            &mut self.v_weight,
            &mut self.v_bias,
        ]
    }
}

impl GradientSet {
    pub fn zeros(config: &NetworkConfig) -> Self {
        Self {
            layers: config
                .layer_shapes()
                .into_iter()
                .map(|(n, m)| LayerGrad::zeros(n, m))
                .collect(),
            latent: vec![0.0; config.latent_dim],
        }
    }

    /// Latent gradient only; parameter buffers are left empty.
    fn latent_only(latent_dim: usize) -> Self {
        Self {
            layers: Vec::new(),
            latent: vec![0.0; latent_dim],
        }
    }

    pub fn has_param_grads(&self) -> bool {
        !self.layers.is_empty()
    }

    /// Network parameter gradients in serialization order.
    pub fn param_groups(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.groups()).collect()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.param_groups()
            .into_iter()
            .flat_map(|g| g.iter().copied())
            .chain(self.latent.iter().copied())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// `self += weight · other`.
    pub fn add_scaled(&mut self, other: &GradientSet, weight: f64) {
        if self.layers.is_empty() && !other.layers.is_empty() {
            self.layers = other
                .layers
                .iter()
                .map(|l| LayerGrad {
                    u_weight: vec![0.0; l.u_weight.len()],
                    u_bias: vec![0.0; l.u_bias.len()],
                    v_weight: vec![0.0; l.v_weight.len()],
                    v_bias: vec![0.0; l.v_bias.len()],
                })
                .collect();
        }
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            for (d, s) in dst.groups_mut().into_iter().zip(src.groups()) {
                for (a, b) in d.iter_mut().zip(s) {
                    *a += weight * b;
                }
            }
        }
        for (a, b) in self.latent.iter_mut().zip(&other.latent) {
            *a += weight * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            for g in l.groups_mut() {
                g.iter_mut().for_each(|v| *v *= factor);
            }
        }
        self.latent.iter_mut().for_each(|v| *v *= factor);
    }
}

/// What the backward pass should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradTarget {
    /// Network parameters and latent.
    All,
    /// Latent only (network frozen).
    LatentOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InrNetwork {
    config: NetworkConfig,
    layers: Vec<WireLayer>,
}

/// Loss and gradients summed over a set of pixels (not yet averaged).
struct Sums {
    loss: f64,
    grads: GradientSet,
}

impl InrNetwork {
    /// Network with every parameter zero.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(n, m)| WireLayer::zeros(n, m))
            .collect();
        Ok(Self { config, layers })
    }

    /// Weights uniform in `[−1/√n_i, 1/√n_i]`, biases zero.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = stream_rng(seed, Stream::Init, 0);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f32).sqrt();
            for w in layer.u_weight.iter_mut().chain(layer.v_weight.iter_mut()) {
                *w = rng.gen_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn from_layers(config: NetworkConfig, layers: Vec<WireLayer>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(Error::DimensionMismatch {
                what: "layer count",
                expected: shapes.len(),
                actual: layers.len(),
            });
        }
        for (l, (n, m)) in layers.iter().zip(shapes) {
            if l.inputs != n || l.outputs != m {
                return Err(Error::InvalidValue(format!(
                    "layer shape {}→{} does not chain (expected {n}→{m})",
                    l.inputs, l.outputs
                )));
            }
            l.check()?;
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[WireLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [WireLayer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(WireLayer::param_count).sum()
    }

    /// Parameter groups in serialization order (per layer: U, b_u, V, b_v).
    pub fn param_groups(&self) -> Vec<&[f32]> {
        self.layers.iter().flat_map(|l| l.groups()).collect()
    }

    pub fn param_groups_mut(&mut self) -> Vec<&mut [f32]> {
        self.layers.iter_mut().flat_map(|l| l.groups_mut()).collect()
    }

    fn check_inputs(&self, t: f64, latent: &[f32]) -> Result<()> {
        if latent.len() != self.config.latent_dim {
            return Err(Error::DimensionMismatch {
                what: "latent",
                expected: self.config.latent_dim,
                actual: latent.len(),
            });
        }
        if !t.is_finite() || latent.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidValue(format!("time {t} outside [0, 1]")));
        }
        Ok(())
    }

    fn check_coords(&self, coords: &[f32]) -> Result<usize> {
        let d = self.config.spatial_dims;
        if !coords.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                what: "coordinate buffer (multiple of d)",
                expected: coords.len().div_ceil(d) * d,
                actual: coords.len(),
            });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coordinates".into()));
        }
        Ok(coords.len() / d)
    }

    /// Single-point evaluation `f(x, t, l)`.
    pub fn forward(&self, x: &[f32], t: f64, latent: &[f32]) -> Result<f32> {
        if x.len() != self.config.spatial_dims {
            return Err(Error::DimensionMismatch {
                what: "coordinate",
                expected: self.config.spatial_dims,
                actual: x.len(),
            });
        }
        Ok(self.forward_batch(x, t, latent)?[0])
    }

    /// Evaluate at every point of a flat `P × d` coordinate buffer.
    pub fn forward_batch(&self, coords: &[f32], t: f64, latent: &[f32]) -> Result<Vec<f32>> {
        self.check_inputs(t, latent)?;
        let p = self.check_coords(coords)?;
        let d = self.config.spatial_dims;
        let kernel = Kernel::new(self);
        let out: Vec<Vec<f32>> = coords
            .par_chunks(CHUNK_PIXELS * d)
            .map(|c| {
                let mut ws = Workspace::default();
                kernel.forward(c, t as f32, latent, &mut ws, false);
                ws.output
            })
            .collect();
        let out: Vec<f32> = out.into_iter().flatten().collect();
        debug_assert_eq!(out.len(), p);
        Ok(out)
    }

    /// Mean squared error over the batch and its exact gradient with
    /// respect to every parameter and the latent.
    pub fn forward_backward(&self, batch: &PixelBatch, latent: &[f32]) -> Result<(f64, GradientSet)> {
        self.loss_and_grad(&batch.coords, &batch.targets, batch.t, latent, GradTarget::All)
    }

    /// Mean squared error and gradient for explicit buffers.
    pub fn loss_and_grad(
        &self,
        coords: &[f32],
        targets: &[f32],
        t: f64,
        latent: &[f32],
        target: GradTarget,
    ) -> Result<(f64, GradientSet)> {
        let sums = self.sums(coords, targets, t, latent, target)?;
        let n = targets.len() as f64;
        let mut grads = sums.grads;
        grads.scale(1.0 / n);
        Ok((sums.loss / n, grads))
    }

    fn sums(
        &self,
        coords: &[f32],
        targets: &[f32],
        t: f64,
        latent: &[f32],
        target: GradTarget,
    ) -> Result<Sums> {
        self.check_inputs(t, latent)?;
        let p = self.check_coords(coords)?;
        if p == 0 {
            return Err(Error::Empty("pixel batch"));
        }
        if targets.len() != p {
            return Err(Error::DimensionMismatch {
                what: "targets",
                expected: p,
                actual: targets.len(),
            });
        }
        let d = self.config.spatial_dims;
        let kernel = Kernel::new(self);
        let parts: Vec<Sums> = coords
            .par_chunks(CHUNK_PIXELS * d)
            .zip(targets.par_chunks(CHUNK_PIXELS))
            .map(|(c, y)| {
                let mut ws = Workspace::default();
                kernel.forward(c, t as f32, latent, &mut ws, true);
                kernel.backward(y, &mut ws, target)
            })
            .collect();
        let mut iter = parts.into_iter();
        let mut total = iter.next().expect("at least one chunk");
        for part in iter {
            total.loss += part.loss;
            total.grads.add_scaled(&part.grads, 1.0);
        }
        if !total.loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        Ok(total)
    }
}

/// Per-layer constants shared by all chunks of one evaluation.
struct Kernel<'a> {
    net: &'a InrNetwork,
    transposed: Vec<(Vec<f32>, Vec<f32>)>,
}

#[derive(Default)]
struct Workspace {
    pixels: usize,
    /// Input of each layer, `P × n_i`.
    inputs: Vec<Vec<f32>>,
    /// `sin(ω₀u)` per layer.
    sin: Vec<Vec<f32>>,
    /// `ω₀·cos(ω₀u)` per layer.
    dsin: Vec<Vec<f32>>,
    /// `exp(−(s₀v)²)` per layer.
    gauss: Vec<Vec<f32>>,
    /// `−2s₀²v` per layer.
    dgauss: Vec<Vec<f32>>,
    output: Vec<f32>,
}

impl<'a> Kernel<'a> {
    fn new(net: &'a InrNetwork) -> Self {
        Self {
            net,
            transposed: net.layers.iter().map(WireLayer::transposed).collect(),
        }
    }

    fn forward(&self, coords: &[f32], t: f32, latent: &[f32], ws: &mut Workspace, keep: bool) {
        let cfg = &self.net.config;
        let d = cfg.spatial_dims;
        let p = coords.len() / d;
        let n0 = cfg.input_dim();
        let mut x = vec![0.0f32; p * n0];
        for (row, c) in x.chunks_exact_mut(n0).zip(coords.chunks_exact(d)) {
            row[..d].copy_from_slice(c);
            row[d] = t;
            row[d + 1..].copy_from_slice(latent);
        }
        ws.pixels = p;
        let (omega0, s0) = (cfg.omega0, cfg.s0);
        let last = self.net.layers.len() - 1;
        for (li, (layer, (ut, vt))) in self.net.layers.iter().zip(&self.transposed).enumerate() {
            let (n, m) = (layer.inputs, layer.outputs);
            let mut u = vec![0.0f32; p * m];
            let mut v = vec![0.0f32; p * m];
            for ((urow, vrow), xrow) in u
                .chunks_exact_mut(m)
                .zip(v.chunks_exact_mut(m))
                .zip(x.chunks_exact(n))
            {
                urow.copy_from_slice(&layer.u_bias);
                vrow.copy_from_slice(&layer.v_bias);
                for (j, &xj) in xrow.iter().enumerate() {
                    let uw = &ut[j * m..(j + 1) * m];
                    let vw = &vt[j * m..(j + 1) * m];
                    for i in 0..m {
                        urow[i] += xj * uw[i];
                        vrow[i] += xj * vw[i];
                    }
                }
            }
            let residual = li != 0 && li != last;
            let mut next = vec![0.0f32; p * m];
            let (mut sin, mut dsin, mut gauss, mut dgauss) = if keep {
                (vec![0.0; p * m], vec![0.0; p * m], vec![0.0; p * m], vec![0.0; p * m])
            } else {
                (Vec::new(), Vec::new(), Vec::new(), Vec::new())
            };
            for k in 0..p * m {
                let (s, c) = (omega0 * u[k]).sin_cos();
                let sv = s0 * v[k];
                let g = (-sv * sv).exp();
                let phi = s * g;
                next[k] = if residual { 0.5 * (x[k] + phi) } else { phi };
                if keep {
                    sin[k] = s;
                    dsin[k] = omega0 * c;
                    gauss[k] = g;
                    dgauss[k] = -2.0 * s0 * sv;
                }
            }
            if keep {
                ws.inputs.push(std::mem::replace(&mut x, next));
                ws.sin.push(sin);
                ws.dsin.push(dsin);
                ws.gauss.push(gauss);
                ws.dgauss.push(dgauss);
            } else {
                x = next;
            }
        }
        ws.output = x;
    }

    fn backward(&self, targets: &[f32], ws: &mut Workspace, target: GradTarget) -> Sums {
        let cfg = &self.net.config;
        let p = ws.pixels;
        let mut loss = 0.0f64;
        // d(sum of squared errors)/d(output)
        let mut dout: Vec<f32> = ws
            .output
            .iter()
            .zip(targets)
            .map(|(&yh, &y)| {
                let r = yh - y;
                loss += (r as f64) * (r as f64);
                2.0 * r
            })
            .collect();
        let mut grads = match target {
            GradTarget::All => GradientSet::zeros(cfg),
            GradTarget::LatentOnly => GradientSet::latent_only(cfg.latent_dim),
        };
        let last = self.net.layers.len() - 1;
        for li in (0..self.net.layers.len()).rev() {
            let layer = &self.net.layers[li];
            let (n, m) = (layer.inputs, layer.outputs);
            let residual = li != 0 && li != last;
            let input = &ws.inputs[li];
            let (sin, dsin, gauss, dgauss) = (&ws.sin[li], &ws.dsin[li], &ws.gauss[li], &ws.dgauss[li]);
            let mut du = vec![0.0f32; p * m];
            let mut dv = vec![0.0f32; p * m];
            for k in 0..p * m {
                let dphi = if residual { 0.5 * dout[k] } else { dout[k] };
                du[k] = dphi * gauss[k] * dsin[k];
                dv[k] = dphi * sin[k] * gauss[k] * dgauss[k];
            }
            if target == GradTarget::All {
                let g = &mut grads.layers[li];
                for ((durow, dvrow), xrow) in du
                    .chunks_exact(m)
                    .zip(dv.chunks_exact(m))
                    .zip(input.chunks_exact(n))
                {
                    for i in 0..m {
                        let (a, b) = (durow[i] as f64, dvrow[i] as f64);
                        g.u_bias[i] += a;
                        g.v_bias[i] += b;
                        let gu = &mut g.u_weight[i * n..(i + 1) * n];
                        for (w, &xj) in gu.iter_mut().zip(xrow) {
                            *w += a * xj as f64;
                        }
                        let gv = &mut g.v_weight[i * n..(i + 1) * n];
                        for (w, &xj) in gv.iter_mut().zip(xrow) {
                            *w += b * xj as f64;
                        }
                    }
                }
            }
            let mut din = vec![0.0f32; p * n];
            for (((dinrow, durow), dvrow), doutrow) in din
                .chunks_exact_mut(n)
                .zip(du.chunks_exact(m))
                .zip(dv.chunks_exact(m))
                .zip(dout.chunks_exact(m))
            {
                if residual {
                    for (a, &b) in dinrow.iter_mut().zip(doutrow) {
                        *a = 0.5 * b;
                    }
                }
                for i in 0..m {
                    let (a, b) = (durow[i], dvrow[i]);
                    let uw = &layer.u_weight[i * n..(i + 1) * n];
                    let vw = &layer.v_weight[i * n..(i + 1) * n];
                    for j in 0..n {
                        dinrow[j] += a * uw[j] + b * vw[j];
                    }
                }
            }
            dout = din;
        }
        let d = cfg.spatial_dims;
        let n0 = cfg.input_dim();
        for row in dout.chunks_exact(n0) {
            for (g, &v) in grads.latent.iter_mut().zip(&row[d + 1..]) {
                *g += v as f64;
            }
        }
        Sums { loss, grads }
    }
}
