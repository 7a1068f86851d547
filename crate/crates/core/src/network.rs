//! The multi-frequency diffractive network.
//!
//! Every wavelength runs through the same stack of modulation layers:
//!
//! ```text
//! u ← input
//! repeat L times: u ← modulate(propagate(u, K_f), layer_l)
//! u ← propagate(u, K_f)                 (to the output plane)
//! channel_f ← |u|
//! merged ← Σ_f w_f · channel_f
//! logits ← summed brightness of merged over each detector region
//! ```
//!
//! The channel weights `w_f` are unconstrained reals learned together with the
//! layer parameters.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::field::{ComplexField, GridGeometry, RealMap};
use crate::layers::{modulate_backward_scaled, modulate_scaled, ModulationParams, ParamGrad};
use crate::propagation::{propagate, propagate_adjoint, KernelCache, Method, PropagationKernel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    CrossEntropy,
    MeanSquaredError,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::CrossEntropy => "cross-entropy",
            LossKind::MeanSquaredError => "mse",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross-entropy" => Ok(LossKind::CrossEntropy),
            "mse" | "mean-squared-error" => Ok(LossKind::MeanSquaredError),
            other => Err(Error::Config(format!(
                "unknown loss {other:?} (expected cross-entropy or mse)"
            ))),
        }
    }
}

/// What each output channel contributes to the merged map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Readout {
    /// `|u|`
    #[default]
    Modulus,
    /// `|u|²`
    Intensity,
}

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Readout::Modulus => "modulus",
            Readout::Intensity => "intensity",
        })
    }
}

impl FromStr for Readout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modulus" => Ok(Readout::Modulus),
            "intensity" => Ok(Readout::Intensity),
            other => Err(Error::Config(format!(
                "unknown readout {other:?} (expected modulus or intensity)"
            ))),
        }
    }
}

/// `count` wavelengths evenly spaced over `[min, max]`, endpoints included.
/// A single wavelength sits at the midpoint.
pub fn pick_frequencies(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && min <= max && max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "wavelength range must satisfy 0 < min <= max, got [{min}, {max}]"
        )));
    }
    match count {
        0 => Err(Error::InvalidArgument(
            "need at least one wavelength".into(),
        )),
        1 => Ok(vec![0.5 * (min + max)]),
        _ => {
            let step = (max - min) / (count - 1) as f64;
            Ok((0..count)
                .map(|i| {
                    if i + 1 == count {
                        max
                    } else {
                        min + step * i as f64
                    }
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfdNetConfig {
    pub num_layers: usize,
    /// Ascending; repeats are allowed.
    pub wavelengths: Vec<f64>,
    pub layer_spacing: f64,
    pub geometry: GridGeometry,
    pub method: Method,
    pub loss: LossKind,
    pub num_classes: usize,
    pub amplitude_trainable: bool,
    pub bias_enabled: bool,
    /// Scale each channel's phase by `λ_ref/λ_f`, `λ_ref` the range midpoint.
    pub dispersive: bool,
    pub readout: Readout,
}

impl Default for MfdNetConfig {
    fn default() -> Self {
        Self {
            num_layers: 5,
            wavelengths: pick_frequencies(0.8, 1.2, 3).expect("valid default range"),
            layer_spacing: 20.0,
            geometry: GridGeometry {
                nx: 56,
                ny: 56,
                pitch: 1.0,
            },
            method: Method::SampledRs,
            loss: LossKind::CrossEntropy,
            num_classes: 10,
            amplitude_trainable: false,
            bias_enabled: false,
            dispersive: false,
            readout: Readout::Modulus,
        }
    }
}

impl MfdNetConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.num_layers == 0 {
            return Err(Error::Config("need at least one layer".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.wavelengths.is_empty() {
            return Err(Error::Config("need at least one wavelength".into()));
        }
        if self
            .wavelengths
            .iter()
            .any(|w| !(*w > 0.0 && w.is_finite()))
        {
            return Err(Error::Config("wavelengths must be positive".into()));
        }
        if self.wavelengths.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("wavelengths must be sorted ascending".into()));
        }
        if !(self.layer_spacing > 0.0 && self.layer_spacing.is_finite()) {
            return Err(Error::Config("layer spacing must be positive".into()));
        }
        Ok(())
    }

    pub fn num_channels(&self) -> usize {
        self.wavelengths.len()
    }

    /// Per-channel multiplier applied to every layer's phase grid.
    pub fn phase_scales(&self) -> Vec<f64> {
        if !self.dispersive {
            return vec![1.0; self.wavelengths.len()];
        }
        let (lo, hi) = (
            self.wavelengths[0],
            self.wavelengths[self.wavelengths.len() - 1],
        );
        let reference = 0.5 * (lo + hi);
        self.wavelengths.iter().map(|w| reference / w).collect()
    }
}

/// Axis-aligned pixel rectangle `[x0, x0+width) × [y0, y0+height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectorRegion {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl DetectorRegion {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x0 + self.width).contains(&x)
            && (self.y0..self.y0 + self.height).contains(&y)
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    fn overlaps(&self, other: &DetectorRegion) -> bool {
        self.x0 < other.x0 + other.width
            && other.x0 < self.x0 + self.width
            && self.y0 < other.y0 + other.height
            && other.y0 < self.y0 + self.height
    }
}

/// One detector rectangle per class.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorLayout {
    geometry: GridGeometry,
    regions: Vec<DetectorRegion>,
}

impl DetectorLayout {
    /// `classes` equal squares on the smallest `g × g` cell grid with `g² ≥ classes`,
    /// filled row-major and centered in the field. Each square covers the central
    /// half (linear) of its cell, leaving at least one guard pixel on every side.
    pub fn grid(geometry: GridGeometry, classes: usize) -> Result<Self> {
        geometry.validate()?;
        if classes == 0 {
            return Err(Error::InvalidArgument("need at least one detector".into()));
        }
        let mut g = 1;
        while g * g < classes {
            g += 1;
        }
        let cell = geometry.nx.min(geometry.ny) / g;
        let side = cell / 2;
        let margin = (cell - side) / 2;
        if side == 0 || margin == 0 {
            return Err(Error::InvalidArgument(format!(
                "{}x{} grid cannot host {classes} detectors ({g}x{g} cells of {cell} px)",
                geometry.nx, geometry.ny
            )));
        }
        let off_x = (geometry.nx - g * cell) / 2;
        let off_y = (geometry.ny - g * cell) / 2;
        let regions = (0..classes)
            .map(|c| DetectorRegion {
                x0: off_x + (c % g) * cell + margin,
                y0: off_y + (c / g) * cell + margin,
                width: side,
                height: side,
            })
            .collect();
        Self::from_regions(geometry, regions)
    }

    pub fn from_regions(geometry: GridGeometry, regions: Vec<DetectorRegion>) -> Result<Self> {
        for (i, r) in regions.iter().enumerate() {
            if r.area() == 0 || r.x0 + r.width > geometry.nx || r.y0 + r.height > geometry.ny {
                return Err(Error::InvalidArgument(format!(
                    "detector {i} is empty or out of bounds: {r:?}"
                )));
            }
            if regions[..i].iter().any(|o| o.overlaps(r)) {
                return Err(Error::InvalidArgument(format!(
                    "detector {i} overlaps another"
                )));
            }
        }
        Ok(Self { geometry, regions })
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn regions(&self) -> &[DetectorRegion] {
        &self.regions
    }

    pub fn num_classes(&self) -> usize {
        self.regions.len()
    }

    fn region_sums(&self, values: &[f64]) -> Vec<f64> {
        let nx = self.geometry.nx;
        self.regions
            .iter()
            .map(|r| {
                (r.y0..r.y0 + r.height)
                    .map(|y| {
                        values[y * nx + r.x0..y * nx + r.x0 + r.width]
                            .iter()
                            .sum::<f64>()
                    })
                    .sum()
            })
            .collect()
    }
}

/// Class scores: summed brightness of `merged` inside each region.
pub fn detector_readout(merged: &RealMap, layout: &DetectorLayout) -> Result<Vec<f64>> {
    merged.geometry().ensure_same(&layout.geometry)?;
    Ok(layout.region_sums(merged.values()))
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Loss value and its gradient with respect to the logits.
pub fn loss_and_grad(logits: &[f64], label: usize, kind: LossKind) -> Result<(f64, Vec<f64>)> {
    let c = logits.len();
    if label >= c {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {c} classes"
        )));
    }
    match kind {
        LossKind::CrossEntropy => {
            let peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = logits.iter().map(|l| (l - peak).exp()).collect();
            let total: f64 = exp.iter().sum();
            let loss = total.ln() + peak - logits[label];
            let mut grad: Vec<f64> = exp.iter().map(|e| e / total).collect();
            grad[label] -= 1.0;
            Ok((loss, grad))
        }
        LossKind::MeanSquaredError => {
            let n = c as f64;
            let mut loss = 0.0;
            let grad = logits
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let d = l - if i == label { 1.0 } else { 0.0 };
                    loss += d * d;
                    2.0 * d / n
                })
                .collect();
            Ok((loss / n, grad))
        }
    }
}

/// Cached intermediates of one channel.
#[derive(Debug, Clone)]
pub struct ChannelTrace {
    pub wavelength: f64,
    /// `z` entering each layer.
    pub pre_modulation: Vec<ComplexField>,
    /// `h` leaving each layer.
    pub post_modulation: Vec<ComplexField>,
    /// Field on the output plane.
    pub output: ComplexField,
    /// `|output|` (or `|output|²`).
    pub readout: RealMap,
}

/// Everything `backward` needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    net_id: u64,
    revision: u64,
    pub channels: Vec<ChannelTrace>,
    pub merged: RealMap,
    pub logits: Vec<f64>,
}

/// Identifies one trainable real scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamId {
    Phase { layer: usize, pixel: usize },
    Amplitude { layer: usize, pixel: usize },
    BiasRe { layer: usize },
    BiasIm { layer: usize },
    ChannelWeight(usize),
}

/// Gradients for every layer plus the channel weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradients {
    pub layers: Vec<ParamGrad>,
    pub channel_weights: Vec<f64>,
}

impl NetGradients {
    pub fn zeros_like(net: &MfdNet) -> Self {
        Self {
            layers: net.layers.iter().map(ParamGrad::zeros_like).collect(),
            channel_weights: vec![0.0; net.channel_weights.len()],
        }
    }

    pub fn add_assign(&mut self, other: &NetGradients) -> Result<()> {
        if self.layers.len() != other.layers.len()
            || self.channel_weights.len() != other.channel_weights.len()
        {
            return Err(Error::ShapeMismatch(
                "network gradients differ in shape".into(),
            ));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_assign(b)?;
        }
        self.channel_weights
            .iter_mut()
            .zip(&other.channel_weights)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        self.layers.iter_mut().for_each(|l| l.scale(c));
        self.channel_weights.iter_mut().for_each(|w| *w *= c);
    }

    pub fn get(&self, id: ParamId) -> Option<f64> {
        match id {
            ParamId::Phase { layer, pixel } => self.layers.get(layer)?.d_phase.get(pixel).copied(),
            ParamId::Amplitude { layer, pixel } => {
                self.layers.get(layer)?.d_amplitude.get(pixel).copied()
            }
            ParamId::BiasRe { layer } => self.layers.get(layer)?.d_bias.map(|b| b.re),
            ParamId::BiasIm { layer } => self.layers.get(layer)?.d_bias.map(|b| b.im),
            ParamId::ChannelWeight(f) => self.channel_weights.get(f).copied(),
        }
    }

    pub fn get_mut(&mut self, id: ParamId) -> Option<&mut f64> {
        match id {
            ParamId::Phase { layer, pixel } => self.layers.get_mut(layer)?.d_phase.get_mut(pixel),
            ParamId::Amplitude { layer, pixel } => {
                self.layers.get_mut(layer)?.d_amplitude.get_mut(pixel)
            }
            ParamId::BiasRe { layer } => self
                .layers
                .get_mut(layer)?
                .d_bias
                .as_mut()
                .map(|b| &mut b.re),
            ParamId::BiasIm { layer } => self
                .layers
                .get_mut(layer)?
                .d_bias
                .as_mut()
                .map(|b| &mut b.im),
            ParamId::ChannelWeight(f) => self.channel_weights.get_mut(f),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(ParamGrad::is_finite)
            && self.channel_weights.iter().all(|w| w.is_finite())
    }
}

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

/// A trainable multi-frequency diffractive network.
#[derive(Debug)]
pub struct MfdNet {
    config: MfdNetConfig,
    layers: Vec<ModulationParams>,
    /// `kernels[f][hop]`, `hop = 0..=L`: input→layer 1, between layers, last layer→output.
    kernels: Vec<Vec<Arc<PropagationKernel>>>,
    channel_weights: Vec<f64>,
    detector: DetectorLayout,
    phase_scales: Vec<f64>,
    id: u64,
    revision: u64,
}

impl Clone for MfdNet {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            layers: self.layers.clone(),
            kernels: self.kernels.clone(),
            channel_weights: self.channel_weights.clone(),
            detector: self.detector.clone(),
            phase_scales: self.phase_scales.clone(),
            id: fresh_id(),
            revision: 0,
        }
    }
}

impl PartialEq for MfdNet {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.layers == other.layers
            && self.channel_weights == other.channel_weights
            && self.detector == other.detector
    }
}

impl MfdNet {
    /// Random phase layers seeded by `seed`, channel weights `1/F`.
    pub fn new(config: MfdNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..config.num_layers)
            .map(|_| {
                ModulationParams::random(
                    config.geometry,
                    config.amplitude_trainable,
                    config.bias_enabled,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let f = config.num_channels();
        Self::from_parts(config, layers, vec![1.0 / f as f64; f])
    }

    pub fn from_parts(
        config: MfdNetConfig,
        layers: Vec<ModulationParams>,
        channel_weights: Vec<f64>,
    ) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.num_layers {
            return Err(Error::ShapeMismatch(format!(
                "{} layers for a {}-layer config",
                layers.len(),
                config.num_layers
            )));
        }
        for layer in &layers {
            layer.geometry().ensure_same(&config.geometry)?;
            if layer.amplitude_trainable() != config.amplitude_trainable
                || layer.bias.is_some() != config.bias_enabled
            {
                return Err(Error::ShapeMismatch(
                    "layer parameter layout disagrees with config".into(),
                ));
            }
        }
        if channel_weights.len() != config.num_channels()
            || channel_weights.iter().any(|w| !w.is_finite())
        {
            return Err(Error::ShapeMismatch(format!(
                "{} channel weights for {} wavelengths",
                channel_weights.len(),
                config.num_channels()
            )));
        }
        let detector = DetectorLayout::grid(config.geometry, config.num_classes)?;
        let mut cache = KernelCache::new();
        let kernels = config
            .wavelengths
            .iter()
            .map(|&w| {
                (0..=config.num_layers)
                    .map(|_| {
                        cache.get_or_build(config.geometry, w, config.layer_spacing, config.method)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            phase_scales: config.phase_scales(),
            config,
            layers,
            kernels,
            channel_weights,
            detector,
            id: fresh_id(),
            revision: 0,
        })
    }

    pub fn config(&self) -> &MfdNetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[ModulationParams] {
        &self.layers
    }

    /// Mutable access; invalidates outstanding traces.
    pub fn layers_mut(&mut self) -> &mut [ModulationParams] {
        self.revision += 1;
        &mut self.layers
    }

    pub fn channel_weights(&self) -> &[f64] {
        &self.channel_weights
    }

    /// Mutable access; invalidates outstanding traces.
    pub fn channel_weights_mut(&mut self) -> &mut [f64] {
        self.revision += 1;
        &mut self.channel_weights
    }

    pub fn detector(&self) -> &DetectorLayout {
        &self.detector
    }

    pub fn kernel(&self, channel: usize, hop: usize) -> &Arc<PropagationKernel> {
        &self.kernels[channel][hop]
    }

    pub fn geometry(&self) -> GridGeometry {
        self.config.geometry
    }

    /// Real scalars updated by training.
    pub fn num_trainable(&self) -> usize {
        self.layers
            .iter()
            .map(ModulationParams::trainable_count)
            .sum::<usize>()
            + self.channel_weights.len()
    }

    /// Every trainable scalar, in a fixed order.
    pub fn trainable_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::with_capacity(self.num_trainable());
        for (layer, p) in self.layers.iter().enumerate() {
            ids.extend((0..p.phase.len()).map(|pixel| ParamId::Phase { layer, pixel }));
            if p.amplitude_trainable() {
                ids.extend((0..p.amplitude.len()).map(|pixel| ParamId::Amplitude { layer, pixel }));
            }
            if p.bias.is_some() {
                ids.push(ParamId::BiasRe { layer });
                ids.push(ParamId::BiasIm { layer });
            }
        }
        ids.extend((0..self.channel_weights.len()).map(ParamId::ChannelWeight));
        ids
    }

    pub fn param(&self, id: ParamId) -> Option<f64> {
        match id {
            ParamId::Phase { layer, pixel } => self.layers.get(layer)?.phase.get(pixel).copied(),
            ParamId::Amplitude { layer, pixel } => {
                self.layers.get(layer)?.amplitude.get(pixel).copied()
            }
            ParamId::BiasRe { layer } => self.layers.get(layer)?.bias.map(|b| b.re),
            ParamId::BiasIm { layer } => self.layers.get(layer)?.bias.map(|b| b.im),
            ParamId::ChannelWeight(f) => self.channel_weights.get(f).copied(),
        }
    }

    pub fn set_param(&mut self, id: ParamId, value: f64) -> Result<()> {
        self.revision += 1;
        let slot = match id {
            ParamId::Phase { layer, pixel } => self
                .layers
                .get_mut(layer)
                .and_then(|l| l.phase.get_mut(pixel)),
            ParamId::Amplitude { layer, pixel } => self
                .layers
                .get_mut(layer)
                .and_then(|l| l.amplitude.get_mut(pixel)),
            ParamId::BiasRe { layer } => self
                .layers
                .get_mut(layer)
                .and_then(|l| l.bias.as_mut())
                .map(|b| &mut b.re),
            ParamId::BiasIm { layer } => self
                .layers
                .get_mut(layer)
                .and_then(|l| l.bias.as_mut())
                .map(|b| &mut b.im),
            ParamId::ChannelWeight(f) => self.channel_weights.get_mut(f),
        };
        match slot {
            Some(s) => {
                *s = value;
                Ok(())
            }
            None => Err(Error::InvalidArgument(format!("no such parameter: {id:?}"))),
        }
    }

    /// Runs every channel through the stack and caches what `backward` needs.
    pub fn forward(&self, input: &ComplexField) -> Result<ForwardTrace> {
        input.geometry().ensure_same(&self.config.geometry)?;
        let geometry = self.config.geometry;
        let mut channels = Vec::with_capacity(self.kernels.len());
        let mut merged = vec![0.0; geometry.len()];
        for (f, kernels) in self.kernels.iter().enumerate() {
            let scale = self.phase_scales[f];
            let mut pre = Vec::with_capacity(self.layers.len());
            let mut post = Vec::with_capacity(self.layers.len());
            let mut u = input.clone();
            for (layer, kernel) in self.layers.iter().zip(kernels) {
                let z = propagate(&u, kernel)?;
                u = modulate_scaled(&z, layer, scale)?;
                pre.push(z);
                post.push(u.clone());
            }
            let output = propagate(&u, &kernels[self.layers.len()])?;
            let readout = match self.config.readout {
                Readout::Modulus => output.modulus(),
                Readout::Intensity => output.intensity(),
            };
            let w = self.channel_weights[f];
            merged
                .iter_mut()
                .zip(readout.values())
                .for_each(|(m, r)| *m += w * r);
            channels.push(ChannelTrace {
                wavelength: self.config.wavelengths[f],
                pre_modulation: pre,
                post_modulation: post,
                output,
                readout,
            });
        }
        // Channel weights may be negative, so the merged map is not a RealMap
        // by construction; it is kept as raw values for the readout.
        let merged = RealMap::from_raw(geometry, merged);
        let logits = self.detector.region_sums(merged.values());
        Ok(ForwardTrace {
            net_id: self.id,
            revision: self.revision,
            channels,
            merged,
            logits,
        })
    }

    /// Exact reverse-mode gradients of the loss for `label`.
    pub fn backward(&self, trace: &ForwardTrace, label: usize) -> Result<NetGradients> {
        self.check_trace(trace)?;
        let (_, grad_logits) = loss_and_grad(&trace.logits, label, self.config.loss)?;
        self.backward_from_logits(trace, &grad_logits)
    }

    /// Loss and gradients for one sample.
    pub fn loss_and_gradients(
        &self,
        input: &ComplexField,
        label: usize,
    ) -> Result<(f64, Vec<f64>, NetGradients)> {
        let trace = self.forward(input)?;
        let (loss, grad_logits) = loss_and_grad(&trace.logits, label, self.config.loss)?;
        let grads = self.backward_from_logits(&trace, &grad_logits)?;
        Ok((loss, trace.logits, grads))
    }

    fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        if trace.net_id != self.id {
            return Err(Error::StaleTrace(
                "trace was produced by another network".into(),
            ));
        }
        if trace.revision != self.revision {
            return Err(Error::StaleTrace(
                "parameters changed since the forward pass".into(),
            ));
        }
        if trace.channels.len() != self.kernels.len()
            || trace
                .channels
                .iter()
                .any(|c| c.pre_modulation.len() != self.layers.len())
        {
            return Err(Error::StaleTrace("trace is incomplete".into()));
        }
        Ok(())
    }

    fn backward_from_logits(
        &self,
        trace: &ForwardTrace,
        grad_logits: &[f64],
    ) -> Result<NetGradients> {
        let geometry = self.config.geometry;
        let nx = geometry.nx;
        // Scatter detector gradients back onto the merged map.
        let mut grad_merged = vec![0.0; geometry.len()];
        for (region, g) in self.detector.regions.iter().zip(grad_logits) {
            for y in region.y0..region.y0 + region.height {
                grad_merged[y * nx + region.x0..y * nx + region.x0 + region.width].fill(*g);
            }
        }
        let mut grads = NetGradients::zeros_like(self);
        let last = self.layers.len();
        for (f, channel) in trace.channels.iter().enumerate() {
            let scores = self.detector.region_sums(channel.readout.values());
            grads.channel_weights[f] = grad_logits.iter().zip(&scores).map(|(g, s)| g * s).sum();

            let w = self.channel_weights[f];
            let grad_out: Vec<Complex64> = channel
                .output
                .values()
                .iter()
                .zip(&grad_merged)
                .map(|(u, gm)| {
                    let g = w * gm;
                    match self.config.readout {
                        Readout::Modulus => {
                            let m = u.norm();
                            if m > 0.0 {
                                u * (g / m)
                            } else {
                                Complex64::default()
                            }
                        }
                        Readout::Intensity => u * (2.0 * g),
                    }
                })
                .collect();
            let kernels = &self.kernels[f];
            let mut grad =
                propagate_adjoint(&ComplexField::from_raw(geometry, grad_out), &kernels[last])?;
            for l in (0..last).rev() {
                let (grad_z, layer_grad) = modulate_backward_scaled(
                    &grad,
                    &channel.pre_modulation[l],
                    &self.layers[l],
                    self.phase_scales[f],
                )?;
                grads.layers[l].add_assign(&layer_grad)?;
                if l > 0 {
                    grad = propagate_adjoint(&grad_z, &kernels[l])?;
                }
            }
        }
        Ok(grads)
    }

    /// Class with the largest detector score, lowest index on ties.
    pub fn predict(&self, input: &ComplexField) -> Result<usize> {
        Ok(argmax(&self.forward(input)?.logits))
    }

    /// Loss of the current parameters on one sample.
    pub fn loss(&self, input: &ComplexField, label: usize) -> Result<f64> {
        let trace = self.forward(input)?;
        loss(&trace, label, self.config.loss)
    }
}

/// Loss of a finished forward pass.
pub fn loss(trace: &ForwardTrace, label: usize, kind: LossKind) -> Result<f64> {
    Ok(loss_and_grad(&trace.logits, label, kind)?.0)
}
