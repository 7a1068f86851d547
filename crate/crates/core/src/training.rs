//! Optimizers, the epoch loop, evaluation and gradient checking.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{self, Dataset};
use crate::field::ComplexField;
use crate::network::{argmax, MfdNet, NetGradients, ParamId};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    Adam,
    SgdMomentum,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::SgdMomentum => "sgd-momentum",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd-momentum" | "sgd" => Ok(OptimizerKind::SgdMomentum),
            other => Err(Error::Config(format!(
                "unknown optimizer {other:?} (expected adam or sgd-momentum)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    /// Velocity decay for sgd-momentum.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
            optimizer: OptimizerKind::Adam,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            train_subset: None,
            test_subset: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        for (name, v) in [
            ("momentum", self.momentum),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.train_subset == Some(0) || self.test_subset == Some(0) {
            return Err(Error::Config("subset sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Moment accumulators mirroring the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    step: u64,
    /// Adam first moment, or sgd velocity.
    first: NetGradients,
    second: NetGradients,
}

impl OptimizerState {
    pub fn new(net: &MfdNet) -> Self {
        Self {
            step: 0,
            first: NetGradients::zeros_like(net),
            second: NetGradients::zeros_like(net),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One optimizer update; amplitudes are clamped to `≥ 0` afterwards.
pub fn step(
    net: &mut MfdNet,
    grads: &NetGradients,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    let shape_ok = |g: &NetGradients| {
        g.layers.len() == net.layers().len()
            && g.channel_weights.len() == net.channel_weights().len()
            && g.layers.iter().zip(net.layers()).all(|(g, l)| {
                g.d_phase.len() == l.phase.len()
                    && g.d_amplitude.len() == l.amplitude.len()
                    && g.d_bias.is_some() == l.bias.is_some()
            })
    };
    if !shape_ok(grads) || !shape_ok(&state.first) || !shape_ok(&state.second) {
        return Err(Error::ShapeMismatch(
            "gradients or optimizer state do not match the network".into(),
        ));
    }
    state.step += 1;
    let update = Updater::new(config, state.step);
    let OptimizerState { first, second, .. } = state;

    let layers = net.layers_mut();
    for (l, layer) in layers.iter_mut().enumerate() {
        let (g, m, v) = (
            &grads.layers[l],
            &mut first.layers[l],
            &mut second.layers[l],
        );
        update.slice(&mut layer.phase, &g.d_phase, &mut m.d_phase, &mut v.d_phase);
        if layer.amplitude_trainable() {
            update.slice(
                &mut layer.amplitude,
                &g.d_amplitude,
                &mut m.d_amplitude,
                &mut v.d_amplitude,
            );
            layer.clamp_amplitude();
        }
        if let (Some(b), Some(gb), Some(mb), Some(vb)) = (
            layer.bias.as_mut(),
            g.d_bias,
            m.d_bias.as_mut(),
            v.d_bias.as_mut(),
        ) {
            update.scalar(&mut b.re, gb.re, &mut mb.re, &mut vb.re);
            update.scalar(&mut b.im, gb.im, &mut mb.im, &mut vb.im);
        }
    }
    update.slice(
        net.channel_weights_mut(),
        &grads.channel_weights,
        &mut first.channel_weights,
        &mut second.channel_weights,
    );
    Ok(())
}

struct Updater {
    kind: OptimizerKind,
    lr: f64,
    momentum: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    correction1: f64,
    correction2: f64,
}

impl Updater {
    fn new(config: &TrainConfig, step: u64) -> Self {
        let t = step as i32;
        Self {
            kind: config.optimizer,
            lr: config.learning_rate,
            momentum: config.momentum,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            correction1: 1.0 - config.beta1.powi(t),
            correction2: 1.0 - config.beta2.powi(t),
        }
    }

    #[inline]
    fn scalar(&self, theta: &mut f64, g: f64, m: &mut f64, v: &mut f64) {
        match self.kind {
            OptimizerKind::Adam => {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / self.correction1;
                let v_hat = *v / self.correction2;
                *theta -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            OptimizerKind::SgdMomentum => {
                *m = self.momentum * *m + g;
                *theta -= self.lr * *m;
            }
        }
    }

    fn slice(&self, theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        for i in 0..theta.len() {
            self.scalar(&mut theta[i], g[i], &mut m[i], &mut v[i]);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub seconds: f64,
}

/// Shuffle seed for one epoch, derived from the run seed.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng.gen()
}

/// One shuffled pass over `train`. Per batch: forward, loss, backward,
/// mean-reduced gradients, one optimizer step. Samples within a batch run in
/// parallel; their gradients are summed in batch order, so results do not
/// depend on the worker count.
pub fn train_epoch(
    net: &mut MfdNet,
    train: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
    state: &mut OptimizerState,
    epoch: usize,
) -> Result<EpochMetrics> {
    config.validate()?;
    check_classes(net, train)?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let start = Instant::now();
    let geometry = net.geometry();
    let batch_size = config.batch_size.min(train.len());
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    for batch in data::batches(train.len(), batch_size, epoch_seed(config.seed, epoch)) {
        let results = batch
            .par_iter()
            .map(|&i| {
                let input = data::to_input_field(train.image(i), geometry)?;
                net.loss_and_gradients(&input, train.label(i))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sum = NetGradients::zeros_like(net);
        for (&i, (loss, logits, grads)) in batch.iter().zip(&results) {
            total_loss += loss;
            correct += usize::from(argmax(logits) == train.label(i));
            sum.add_assign(grads)?;
        }
        sum.scale(1.0 / batch.len() as f64);
        step(net, &sum, state, config)?;
    }
    let test_accuracy = test.map(|t| evaluate(net, t)).transpose()?;
    Ok(EpochMetrics {
        epoch,
        train_loss: total_loss / train.len() as f64,
        train_accuracy: correct as f64 / train.len() as f64,
        test_accuracy,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn check_classes(net: &MfdNet, dataset: &Dataset) -> Result<()> {
    if net.config().num_classes != dataset.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "network has {} classes but dataset has {}",
            net.config().num_classes,
            dataset.num_classes()
        )));
    }
    Ok(())
}

/// Fraction of samples whose prediction equals the label.
pub fn evaluate(net: &MfdNet, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    check_classes(net, dataset)?;
    let geometry = net.geometry();
    let hits = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let input = data::to_input_field(dataset.image(i), geometry)?;
            Ok(usize::from(net.predict(&input)? == dataset.label(i)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / dataset.len() as f64)
}

/// One probed scalar in a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub param: ParamId,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.probes.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }
}

/// `|a − n| / max(|a|, |n|)`, defined as 0 when both are below 1e-12.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Worst relative error between backward and central finite differences on
/// `n_probes` random trainable scalars.
pub fn grad_check(
    net: &MfdNet,
    input: &ComplexField,
    label: usize,
    n_probes: usize,
    epsilon: f64,
    seed: u64,
) -> Result<f64> {
    Ok(grad_check_report(net, input, label, n_probes, epsilon, seed, |_| {})?.max_rel_error())
}

/// Gradient check with full per-probe detail. `tamper` may alter the analytic
/// gradients before comparison, which lets callers confirm the harness notices
/// a broken backward pass.
pub fn grad_check_report(
    net: &MfdNet,
    input: &ComplexField,
    label: usize,
    n_probes: usize,
    epsilon: f64,
    seed: u64,
    tamper: impl FnOnce(&mut NetGradients),
) -> Result<GradCheckReport> {
    if n_probes == 0 {
        return Err(Error::InvalidArgument("need at least one probe".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {epsilon}"
        )));
    }
    let trace = net.forward(input)?;
    let mut grads = net.backward(&trace, label)?;
    tamper(&mut grads);

    // Cycle through parameter classes so every kind present gets probed.
    let ids = net.trainable_ids();
    let mut classes: Vec<Vec<ParamId>> = vec![Vec::new(); 4];
    for id in ids {
        let slot = match id {
            ParamId::Phase { .. } => 0,
            ParamId::Amplitude { .. } => 1,
            ParamId::BiasRe { .. } | ParamId::BiasIm { .. } => 2,
            ParamId::ChannelWeight(_) => 3,
        };
        classes[slot].push(id);
    }
    classes.retain(|c| !c.is_empty());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe_net = net.clone();
    let mut probes = Vec::with_capacity(n_probes);
    for k in 0..n_probes {
        let class = &classes[k % classes.len()];
        let id = class[rng.gen_range(0..class.len())];
        let original = net.param(id).expect("id comes from the network");
        probe_net.set_param(id, original + epsilon)?;
        let plus = probe_net.loss(input, label)?;
        probe_net.set_param(id, original - epsilon)?;
        let minus = probe_net.loss(input, label)?;
        probe_net.set_param(id, original)?;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let analytic = grads.get(id).expect("gradient mirrors parameters");
        probes.push(Probe {
            param: id,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    Ok(GradCheckReport { probes })
}
