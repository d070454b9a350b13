//! Network assembly, softmax classifier, optimizers with constraint hooks,
//! the training loop and evaluation metrics.

use std::borrow::Cow;
use std::fmt::Write as _;

use crate::augment::{apply_pipeline, AugmentSpec};
use crate::constraints::{
    clip_values, effective_exponents, init_exponents, project_values, reparam_grad, ConstraintPolicy, EnforceMode,
};
use crate::dataset::WindowedDataset;
use crate::error::{Error, Result};
use crate::gradients::{layer_backward, ChannelGrad};
use crate::nlconv::{layer_forward, Activation, Channel, Ewm, FeatureMap, LayerParams, VariantKind};
use crate::numerics::{SeededRng, Tensor, DEFAULT_EPS};

/// Shape of one convolutional layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub variant: VariantKind,
    pub k_h: usize,
    pub k_w: usize,
    pub stride_t: usize,
    pub stride_c: usize,
    pub out_channels: usize,
    pub activation: Activation,
}

/// A layer's parameters as trained plus its exponent policy. Under
/// reparameterization the exponent payload holds the unconstrained values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub params: LayerParams,
    pub policy: ConstraintPolicy,
}

impl ConvLayer {
    /// Parameters with exponents mapped into their effective range.
    pub fn effective(&self) -> Result<Cow<'_, LayerParams>> {
        if !self.policy.is_reparam() {
            return Ok(Cow::Borrowed(&self.params));
        }
        let mut p = self.params.clone();
        for ch in &mut p.channels {
            ch.ewm = effective_exponents(&ch.ewm, &self.policy)?;
        }
        Ok(Cow::Owned(p))
    }
}

/// Dense softmax classifier over the flattened last feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `classes x features`
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn classes(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn features(&self) -> usize {
        self.weights.shape()[1]
    }

    fn logits(&self, features: &[f64]) -> Vec<f64> {
        let f = self.features();
        self.weights
            .data()
            .chunks(f)
            .zip(self.bias.data())
            .map(|(row, b)| row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input_rows: usize,
    pub input_cols: usize,
    pub layers: Vec<ConvLayer>,
    pub head: Dense,
    pub eps: f64,
}

fn glorot(rng: &mut SeededRng, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    rng.uniform_vec(n, -limit, limit)
}

impl Network {
    /// Builds a network with standard weights drawn from `rng` and neutral
    /// exponents. Weight draws do not depend on the variants, so networks
    /// built from the same seed share their standard weights.
    pub fn new(
        input_rows: usize,
        input_cols: usize,
        specs: &[LayerSpec],
        classes: usize,
        policy: ConstraintPolicy,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        if specs.is_empty() {
            return Err(Error::InvalidArgument("need at least one convolutional layer".into()));
        }
        let (mut rows, mut cols) = (input_rows, input_cols);
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            if spec.out_channels == 0 {
                return Err(Error::InvalidArgument("out_channels must be >= 1".into()));
            }
            let init = init_exponents(spec.variant, spec.k_h, spec.k_w, &policy)?;
            let n = spec.k_h * spec.k_w;
            let channels = (0..spec.out_channels)
                .map(|_| {
                    Ok(Channel {
                        w1: Tensor::matrix(spec.k_h, spec.k_w, glorot(rng, n, n, spec.out_channels))?,
                        bias: 0.0,
                        ewm: init.stored.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let params = LayerParams {
                k_h: spec.k_h,
                k_w: spec.k_w,
                stride_t: spec.stride_t,
                stride_c: spec.stride_c,
                activation: spec.activation,
                channels,
            };
            let (t, c, m) = params.output_dims(rows, cols)?;
            rows = t;
            cols = c * m;
            layers.push(ConvLayer { params, policy });
        }
        let features = rows * cols;
        let head = Dense {
            weights: Tensor::matrix(classes, features, glorot(rng, classes * features, features, classes))?,
            bias: Tensor::zeros(&[classes]),
        };
        let net = Self {
            input_rows,
            input_cols,
            layers,
            head,
            eps: DEFAULT_EPS,
        };
        net.validate()?;
        Ok(net)
    }

    /// Checks that consecutive shapes line up.
    pub fn validate(&self) -> Result<()> {
        let (mut rows, mut cols) = (self.input_rows, self.input_cols);
        for layer in &self.layers {
            layer.params.validate()?;
            layer.policy.validate_for(layer.params.kind())?;
            let (t, c, m) = layer.params.output_dims(rows, cols)?;
            rows = t;
            cols = c * m;
        }
        if self.head.features() != rows * cols || self.head.bias.len() != self.head.classes() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.head.classes(), rows * cols],
                actual: self.head.weights.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    pub fn effective_layers(&self) -> Result<Vec<Cow<'_, LayerParams>>> {
        self.layers.iter().map(ConvLayer::effective).collect()
    }

    /// Effective exponents of every layer, flattened.
    pub fn exponents(&self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for layer in self.effective_layers()? {
            for ch in &layer.channels {
                out.extend(ch.ewm.values());
            }
        }
        Ok(out)
    }

    fn check_window(&self, window: &Tensor) -> Result<()> {
        window.ensure_shape(&[self.input_rows, self.input_cols])
    }

    fn forward_cached(
        &self,
        eff: &[Cow<'_, LayerParams>],
        window: &Tensor,
    ) -> Result<(Vec<Tensor>, Vec<FeatureMap>, Vec<f64>)> {
        self.check_window(window)?;
        let mut inputs = Vec::with_capacity(eff.len());
        let mut outputs = Vec::with_capacity(eff.len());
        let mut x = window.clone();
        for layer in eff {
            let fm = layer_forward(&x, layer, self.eps)?;
            let next = fm.as_matrix();
            inputs.push(x);
            outputs.push(fm);
            x = next;
        }
        let logits = self.head.logits(x.data());
        Ok((inputs, outputs, logits))
    }

    pub fn logits(&self, window: &Tensor) -> Result<Vec<f64>> {
        let eff = self.effective_layers()?;
        Ok(self.forward_cached(&eff, window)?.2)
    }

    /// Softmax class probabilities.
    pub fn forward(&self, window: &Tensor) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(window)?))
    }

    pub fn predict(&self, window: &Tensor) -> Result<usize> {
        Ok(argmax(&self.logits(window)?))
    }

    /// Cross-entropy of one sample and its gradient with respect to every
    /// stored parameter.
    pub fn loss_and_grad(&self, window: &Tensor, label: usize) -> Result<(f64, NetGrads)> {
        let eff = self.effective_layers()?;
        self.loss_and_grad_with(&eff, window, label)
    }

    fn loss_and_grad_with(
        &self,
        eff: &[Cow<'_, LayerParams>],
        window: &Tensor,
        label: usize,
    ) -> Result<(f64, NetGrads)> {
        if label >= self.classes() {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {} classes",
                self.classes()
            )));
        }
        let (inputs, outputs, logits) = self.forward_cached(eff, window)?;
        let probs = softmax(&logits);
        let loss = -probs[label].max(f64::MIN_POSITIVE).ln();

        let features = outputs.last().expect("at least one layer").tensor.data();
        let f = self.head.features();
        let mut head_w = Tensor::zeros(self.head.weights.shape());
        let mut head_b = Tensor::zeros(&[self.classes()]);
        let mut d_features = vec![0.0; f];
        for (k, &p) in probs.iter().enumerate() {
            let d = p - if k == label { 1.0 } else { 0.0 };
            head_b.data_mut()[k] = d;
            let row = &mut head_w.data_mut()[k * f..(k + 1) * f];
            for (r, x) in row.iter_mut().zip(features) {
                *r = d * x;
            }
            for (df, w) in d_features.iter_mut().zip(&self.head.weights.data()[k * f..(k + 1) * f]) {
                *df += d * w;
            }
        }

        let mut layers = vec![Vec::new(); eff.len()];
        let mut upstream = d_features;
        for l in (0..eff.len()).rev() {
            let d_out = Tensor::new(outputs[l].tensor.shape().to_vec(), upstream)?;
            let bundle = layer_backward(&inputs[l], &eff[l], &outputs[l], &d_out, self.eps)?;
            let mut grads = bundle.channels;
            let layer = &self.layers[l];
            if layer.policy.is_reparam() {
                for (g, ch) in grads.iter_mut().zip(&layer.params.channels) {
                    chain_reparam(&mut g.dewm, &ch.ewm, &layer.policy)?;
                }
            }
            layers[l] = grads;
            upstream = bundle.d_input.into_data();
        }
        Ok((loss, NetGrads { layers, head_w, head_b }))
    }

    /// Mutable parameter slices in a fixed order; the flag marks exponent
    /// payloads with their layer index.
    fn param_slices_mut(&mut self) -> Vec<(&mut [f64], Option<usize>)> {
        let mut out: Vec<(&mut [f64], Option<usize>)> = Vec::new();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for ch in &mut layer.params.channels {
                out.push((ch.w1.data_mut(), None));
                out.push((std::slice::from_mut(&mut ch.bias), None));
                for t in ch.ewm.tensors_mut() {
                    out.push((t.data_mut(), Some(l)));
                }
            }
        }
        out.push((self.head.weights.data_mut(), None));
        out.push((self.head.bias.data_mut(), None));
        out
    }

    /// Every stored parameter, flattened in optimizer order.
    pub fn flat_params(&mut self) -> Vec<f64> {
        self.param_slices_mut()
            .into_iter()
            .flat_map(|(s, _)| s.to_vec())
            .collect()
    }
}

fn chain_reparam(grad: &mut Ewm, stored: &Ewm, policy: &ConstraintPolicy) -> Result<()> {
    for (g, w) in grad.tensors_mut().into_iter().zip(stored.tensors()) {
        for (d, &v) in g.data_mut().iter_mut().zip(w.data()) {
            *d *= reparam_grad(v, policy)?;
        }
    }
    Ok(())
}

/// Gradients mirroring [`Network`]'s stored parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub layers: Vec<Vec<ChannelGrad>>,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

impl NetGrads {
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            for ch in layer {
                out.push(ch.dw1.data_mut());
                out.push(std::slice::from_mut(&mut ch.db));
                for t in ch.dewm.tensors_mut() {
                    out.push(t.data_mut());
                }
            }
        }
        out.push(self.head_w.data_mut());
        out.push(self.head_b.data_mut());
        out
    }

    fn add_assign(&mut self, other: &mut NetGrads) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices_mut()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += *y;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for a in self.slices_mut() {
            a.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Flattened in the same order as [`Network::flat_params`].
    pub fn flat(&mut self) -> Vec<f64> {
        self.slices_mut().into_iter().flat_map(|s| s.to_vec()).collect()
    }

    /// Overwrites every entry from `values`, in [`NetGrads::flat`] order.
    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.slices_mut().iter().map(|s| s.len()).sum();
        if total != values.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![total],
                actual: vec![values.len()],
            });
        }
        let mut it = values.iter();
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v = *it.next().expect("length checked"));
        }
        Ok(())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &x)| if x > best.1 { (i, x) } else { best },
        )
        .0
}

/// Class probabilities of `window`.
pub fn forward_network(net: &Network, window: &Tensor) -> Result<Vec<f64>> {
    net.forward(window)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub augment: Vec<AugmentSpec>,
    /// Evaluate every `eval_every` epochs (and always after the last).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            optimizer: Optimizer::adam(),
            seed: 0,
            augment: Vec::new(),
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidArgument("batch_size and eval_every must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            let unit = |b: f64| b > 0.0 && b < 1.0;
            if !unit(beta1) || !unit(beta2) || !(eps > 0.0) {
                return Err(Error::InvalidArgument(
                    "adam betas must lie in (0, 1) and eps > 0".into(),
                ));
            }
        }
        for spec in &self.augment {
            spec.validate()?;
        }
        Ok(())
    }
}

/// Optimizer state plus the constraint hooks around each step.
#[derive(Debug, Clone)]
pub struct Stepper {
    optimizer: Optimizer,
    lr: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Stepper {
    pub fn new(optimizer: Optimizer, lr: f64) -> Self {
        Self {
            optimizer,
            lr,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update and enforces every layer's exponent policy.
    pub fn step(&mut self, net: &mut Network, grads: &mut NetGrads) -> Result<()> {
        let policies: Vec<ConstraintPolicy> = net.layers.iter().map(|l| l.policy).collect();
        let mut params = net.param_slices_mut();
        let mut gslices = grads.slices_mut();
        if self.m.is_empty() {
            self.m = params.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        for (i, ((p, exp_layer), g)) in params.iter_mut().zip(gslices.iter_mut()).enumerate() {
            let policy = exp_layer.map(|l| policies[l]);
            if let Some(policy) = policy.filter(|p| p.mode == EnforceMode::ProjectAfterStep) {
                project_values(p, g, &policy);
            }
            match self.optimizer {
                Optimizer::Sgd => {
                    for (w, d) in p.iter_mut().zip(g.iter()) {
                        *w -= self.lr * d;
                    }
                }
                Optimizer::Adam { beta1, beta2, eps } => {
                    let bc1 = 1.0 - beta1.powi(self.t as i32);
                    let bc2 = 1.0 - beta2.powi(self.t as i32);
                    for (((w, d), m), v) in p.iter_mut().zip(g.iter()).zip(&mut self.m[i]).zip(&mut self.v[i]) {
                        *m = beta1 * *m + (1.0 - beta1) * d;
                        *v = beta2 * *v + (1.0 - beta2) * d * d;
                        *w -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    }
                }
            }
            if let Some(policy) = policy.filter(|p| !p.is_reparam()) {
                clip_values(p, &policy);
            }
        }
        drop(params);
        check_constraints(net)
    }
}

/// Fails if any effective exponent lies outside its layer's bounds.
pub fn check_constraints(net: &Network) -> Result<()> {
    for (layer, eff) in net.layers.iter().zip(net.effective_layers()?) {
        if eff.kind() == VariantKind::Standard {
            continue;
        }
        for ch in &eff.channels {
            if let Some(value) = ch.ewm.values().find(|&v| !layer.policy.contains(v)) {
                return Err(Error::ConstraintViolation {
                    value,
                    v_min: layer.policy.v_min,
                    v_max: layer.policy.v_max,
                });
            }
        }
    }
    Ok(())
}

/// Classification quality on a labeled set. Class 0 is the normal class.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    /// Recall per class; `None` when the class is absent.
    pub detection_rate: Vec<Option<f64>>,
    /// Fraction of normal windows predicted as any fault; `None` without
    /// normal windows.
    pub false_alarm: Option<f64>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub mean_loss: f64,
}

impl Metrics {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize, mean_loss: f64) -> Self {
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let total = truth.len();
        let correct: usize = (0..classes).map(|k| confusion[k][k]).sum();
        let detection_rate = confusion
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[k] as f64 / n as f64)
            })
            .collect::<Vec<_>>();
        let normal: usize = confusion[0].iter().sum();
        let false_alarm = (normal > 0).then(|| (normal - confusion[0][0]) as f64 / normal as f64);
        Self {
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            detection_rate,
            false_alarm,
            confusion,
            mean_loss,
        }
    }
}

pub fn evaluate(net: &Network, data: &WindowedDataset) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty dataset".into()));
    }
    let eff = net.effective_layers()?;
    let classes = net.classes();
    let mut truth = Vec::with_capacity(data.len());
    let mut predicted = Vec::with_capacity(data.len());
    let mut loss = 0.0;
    for w in &data.windows {
        if w.label >= classes {
            return Err(Error::InvalidArgument(format!("label {} out of range", w.label)));
        }
        let (_, _, logits) = net.forward_cached(&eff, &w.data)?;
        let probs = softmax(&logits);
        loss -= probs[w.label].max(f64::MIN_POSITIVE).ln();
        truth.push(w.label);
        predicted.push(argmax(&logits));
    }
    Ok(Metrics::from_predictions(
        &truth,
        &predicted,
        classes,
        loss / data.len() as f64,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub metrics: Option<Metrics>,
}

/// Minibatch cross-entropy training.
///
/// Shuffling and augmentation use separate streams derived from
/// `config.seed`, so a run is reproducible bit for bit. Metrics are computed
/// on `eval` when given, otherwise on the training set.
pub fn train(
    net: &mut Network,
    data: &WindowedDataset,
    eval: Option<&WindowedDataset>,
    config: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    net.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let master = SeededRng::new(config.seed);
    let mut shuffle_rng = master.derive(1);
    let mut aug_rng = master.derive(2);
    let mut stepper = Stepper::new(config.optimizer, config.lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let eff = net.effective_layers()?;
            let mut acc: Option<NetGrads> = None;
            let mut batch_loss = 0.0;
            for &i in batch {
                let w = &data.windows[i];
                let x = if config.augment.is_empty() {
                    Cow::Borrowed(&w.data)
                } else {
                    Cow::Owned(apply_pipeline(&w.data, &config.augment, &mut aug_rng)?)
                };
                let (loss, mut g) = net.loss_and_grad_with(&eff, &x, w.label)?;
                batch_loss += loss;
                match acc.as_mut() {
                    Some(a) => a.add_assign(&mut g),
                    None => acc = Some(g),
                }
            }
            drop(eff);
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            let mut grads = acc.expect("non-empty batch");
            grads.scale(1.0 / batch.len() as f64);
            stepper.step(net, &mut grads)?;
            epoch_loss += batch_loss;
        }
        let evaluate_now = (epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs;
        let metrics = if evaluate_now {
            Some(evaluate(net, eval.unwrap_or(data))?)
        } else {
            None
        };
        history.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / data.len() as f64,
            metrics,
        });
    }
    Ok(history)
}

/// CSV with columns `epoch,loss,accuracy,false_alarm,class_0,...`.
/// Epochs without an evaluation leave the metric columns empty.
pub fn history_csv(history: &[EpochRecord], classes: usize) -> String {
    let mut out = String::from("epoch,loss,accuracy,false_alarm");
    for k in 0..classes {
        let _ = write!(out, ",class_{k}");
    }
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in history {
        let _ = write!(out, "{},{:e}", r.epoch, r.train_loss);
        match &r.metrics {
            Some(m) => {
                let _ = write!(out, ",{:e},{}", m.accuracy, opt(m.false_alarm));
                for k in 0..classes {
                    let _ = write!(out, ",{}", opt(m.detection_rate.get(k).copied().flatten()));
                }
            }
            None => out.push_str(&",".repeat(2 + classes)),
        }
        out.push('\n');
    }
    out
}
