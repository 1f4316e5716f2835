//! Multi-target feedforward network: a shared trunk with one softmax head
//! per tokenizer layer, and bottleneck-feature extraction.

mod io;

pub use io::{read_matn, write_matn, MATN_VERSION};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSequence};
use crate::granularity::LayerSet;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Logistic,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Logistic => z.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Logistic => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Activation::Logistic => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Logistic),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "logistic" | "sigmoid" => Some(Activation::Logistic),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdnnConfig {
    /// Input, hidden..., bottleneck, optional hidden after the bottleneck.
    pub layer_dims: Vec<usize>,
    /// Index into `layer_dims` of the bottleneck layer.
    pub bottleneck_index: usize,
    /// Class count of every head.
    pub heads: Vec<usize>,
    pub activation: Activation,
    pub learn_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl MdnnConfig {
    /// `input-256-256-39` with a logistic trunk.
    pub fn new(input_dim: usize, heads: Vec<usize>) -> Self {
        Self {
            layer_dims: vec![input_dim, 256, 256, 39],
            bottleneck_index: 3,
            heads,
            activation: Activation::Logistic,
            learn_rate: 0.1,
            epochs: 20,
            batch_size: 128,
            seed: 0,
        }
    }

    /// Same trunk with a 256-wide bottleneck.
    pub fn wide(input_dim: usize, heads: Vec<usize>) -> Self {
        Self {
            layer_dims: vec![input_dim, 256, 256, 256],
            ..Self::new(input_dim, heads)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return bad(format!("layer dims {:?} need an input and at least one non-empty layer", self.layer_dims));
        }
        if self.bottleneck_index == 0 || self.bottleneck_index >= self.layer_dims.len() {
            return bad(format!(
                "bottleneck index {} is outside the trunk 1..{}",
                self.bottleneck_index,
                self.layer_dims.len()
            ));
        }
        if self.heads.is_empty() || self.heads.contains(&0) {
            return bad(format!("heads {:?} must be non-empty class counts", self.heads));
        }
        if !(self.learn_rate > 0.0 && self.learn_rate.is_finite()) {
            return bad(format!("learn rate {} must be positive", self.learn_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.layer_dims[self.bottleneck_index]
    }
}

/// Affine map `x W + b`; `w` is `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            w: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-r..=r)),
            b: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mdnn {
    pub layer_dims: Vec<usize>,
    pub bottleneck_index: usize,
    pub heads: Vec<usize>,
    pub activation: Activation,
    /// One per `layer_dims` transition.
    pub trunk: Vec<Dense>,
    /// From the last trunk layer to each head.
    pub head_layers: Vec<Dense>,
}

/// Per-head softmax posteriors and bottleneck activations for a batch.
#[derive(Debug, Clone)]
pub struct Forward {
    pub posteriors: Vec<Array2<f64>>,
    pub bottleneck: Array2<f64>,
}

impl Mdnn {
    /// Glorot-uniform weights and zero biases, seeded from `cfg.seed`.
    pub fn init(cfg: &MdnnConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seed::rng(seed::derive(cfg.seed, &[0]));
        let trunk = cfg
            .layer_dims
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], &mut rng))
            .collect();
        let top = *cfg.layer_dims.last().expect("validated");
        let head_layers = cfg.heads.iter().map(|&n| Dense::glorot(top, n, &mut rng)).collect();
        Ok(Self {
            layer_dims: cfg.layer_dims.clone(),
            bottleneck_index: cfg.bottleneck_index,
            heads: cfg.heads.clone(),
            activation: cfg.activation,
            trunk,
            head_layers,
        })
    }

    /// All parameters zero.
    pub fn zeros(cfg: &MdnnConfig) -> Result<Self> {
        let mut net = Self::init(cfg)?;
        net.for_each_param_mut(|p| *p = 0.0);
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.layer_dims[self.bottleneck_index]
    }

    /// Visits every parameter: trunk layers then heads, each as `W`
    /// (row-major) then `b`.
    pub fn for_each_param_mut<F: FnMut(&mut f64)>(&mut self, mut f: F) {
        for d in self.trunk.iter_mut().chain(self.head_layers.iter_mut()) {
            d.w.iter_mut().for_each(&mut f);
            d.b.iter_mut().for_each(&mut f);
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for d in self.trunk.iter().chain(&self.head_layers) {
            out.extend(d.w.iter());
            out.extend(d.b.iter());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.trunk
            .iter()
            .chain(&self.head_layers)
            .map(|d| d.w.len() + d.b.len())
            .sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    /// Trunk activations, input first.
    fn trunk_activations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.trunk.len() + 1);
        acts.push(x.to_owned());
        for d in &self.trunk {
            let mut z = d.apply(acts.last().expect("non-empty").view());
            self.activation.apply(&mut z);
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Forward> {
        self.check_input(&x)?;
        let acts = self.trunk_activations(x);
        let top = acts.last().expect("non-empty");
        let posteriors = self
            .head_layers
            .iter()
            .map(|h| {
                let mut z = h.apply(top.view());
                softmax_rows(&mut z);
                z
            })
            .collect();
        Ok(Forward {
            posteriors,
            bottleneck: acts[self.bottleneck_index].clone(),
        })
    }

    /// Bottleneck activations only.
    pub fn bottleneck(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        for d in &self.trunk[..self.bottleneck_index] {
            a = d.apply(a.view());
            self.activation.apply(&mut a);
        }
        Ok(a)
    }

    /// Replaces the input `x` by `(x - mean) * scale` inside the first layer,
    /// so a net trained on normalised inputs accepts raw ones.
    pub fn fold_input_affine(&mut self, mean: &Array1<f64>, scale: &Array1<f64>) -> Result<()> {
        let d = self.input_dim();
        for v in [mean, scale] {
            if v.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    actual: v.len(),
                });
            }
        }
        let first = &mut self.trunk[0];
        for (mut row, &s) in first.w.axis_iter_mut(Axis(0)).zip(scale) {
            row.mapv_inplace(|w| w * s);
        }
        let shift = mean.dot(&first.w);
        first.b -= &shift;
        Ok(())
    }
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// `-log softmax(z)[y]` per row, computed stably.
fn cross_entropy_rows(z: &Array2<f64>, y: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &t) in z.axis_iter(Axis(0)).zip(y) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[t];
    }
    total
}

/// Frame targets: `streams[h][t]` is the token of layer `h` at frame `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceTargets {
    pub utterance_id: String,
    pub streams: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameTargets {
    /// Class count per stream.
    pub heads: Vec<usize>,
    pub utterances: Vec<UtteranceTargets>,
}

impl FrameTargets {
    pub fn num_streams(&self) -> usize {
        self.heads.len()
    }

    /// Streams over all utterances, concatenated in corpus order.
    pub fn concat(&self) -> Vec<Vec<usize>> {
        (0..self.heads.len())
            .map(|h| {
                self.utterances
                    .iter()
                    .flat_map(|u| u.streams[h].iter().copied())
                    .collect()
            })
            .collect()
    }
}

/// One target stream per layer, in `(m, n)` order.
pub fn frame_targets(layer_set: &LayerSet) -> Result<FrameTargets> {
    let layers: Vec<_> = layer_set.layers.iter().collect();
    let Some((_, first)) = layers.first() else {
        return Err(Error::Invalid("layer set is empty".into()));
    };
    let heads = layers.iter().map(|(psi, _)| psi.n).collect();
    let mut utterances = Vec::with_capacity(first.labeling.utterances.len());
    for (u, base) in first.labeling.utterances.iter().enumerate() {
        let mut streams = Vec::with_capacity(layers.len());
        for (psi, layer) in &layers {
            let lab = layer.labeling.utterances.get(u).filter(|l| l.utterance_id == base.utterance_id);
            let Some(lab) = lab else {
                return Err(Error::Utterance {
                    utterance_id: base.utterance_id.clone(),
                    detail: format!("missing from layer {psi}"),
                });
            };
            let stream = lab.frame_tokens();
            if stream.len() != base.num_frames() {
                return Err(Error::Utterance {
                    utterance_id: base.utterance_id.clone(),
                    detail: format!("layer {psi} covers {} frames, expected {}", stream.len(), base.num_frames()),
                });
            }
            streams.push(stream);
        }
        utterances.push(UtteranceTargets {
            utterance_id: base.utterance_id.clone(),
            streams,
        });
    }
    Ok(FrameTargets { heads, utterances })
}

fn check_targets(net: &Mdnn, x: &ArrayView2<f64>, y: &[Vec<usize>]) -> Result<()> {
    if y.len() != net.heads.len() {
        return Err(Error::Invalid(format!("{} target streams for {} heads", y.len(), net.heads.len())));
    }
    for (h, (stream, &n)) in y.iter().zip(&net.heads).enumerate() {
        if stream.len() != x.nrows() {
            return Err(Error::Invalid(format!(
                "target stream {h} has {} frames, input has {}",
                stream.len(),
                x.nrows()
            )));
        }
        if let Some(&bad) = stream.iter().find(|&&t| t >= n) {
            return Err(Error::Invalid(format!("target {bad} out of range for head {h} with {n} classes")));
        }
    }
    Ok(())
}

/// `(1/H) Σ_h` mean per-frame cross-entropy of head `h`.
pub fn loss(net: &Mdnn, x: ArrayView2<f64>, y: &[Vec<usize>]) -> Result<f64> {
    net.check_input(&x)?;
    check_targets(net, &x, y)?;
    if x.nrows() == 0 {
        return Ok(0.0);
    }
    let acts = net.trunk_activations(x);
    let top = acts.last().expect("non-empty");
    let total: f64 = net
        .head_layers
        .iter()
        .zip(y)
        .map(|(h, t)| cross_entropy_rows(&h.apply(top.view()), t) / x.nrows() as f64)
        .sum();
    Ok(total / net.heads.len() as f64)
}

/// Gradient of [`loss`] with the same layout as the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub trunk: Vec<Dense>,
    pub head_layers: Vec<Dense>,
}

impl Gradients {
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for d in self.trunk.iter().chain(&self.head_layers) {
            out.extend(d.w.iter());
            out.extend(d.b.iter());
        }
        out
    }
}

/// Loss and its gradient by backpropagation.
pub fn loss_and_gradient(net: &Mdnn, x: ArrayView2<f64>, y: &[Vec<usize>]) -> Result<(f64, Gradients)> {
    net.check_input(&x)?;
    check_targets(net, &x, y)?;
    let rows = x.nrows();
    let acts = net.trunk_activations(x);
    let top = acts.last().expect("non-empty");
    let scale = 1.0 / (rows.max(1) as f64 * net.heads.len() as f64);

    let mut total = 0.0;
    let mut d_top = Array2::<f64>::zeros(top.raw_dim());
    let mut head_grads = Vec::with_capacity(net.heads.len());
    for (h, t) in net.head_layers.iter().zip(y) {
        let mut z = h.apply(top.view());
        total += cross_entropy_rows(&z, t);
        softmax_rows(&mut z);
        for (mut row, &c) in z.axis_iter_mut(Axis(0)).zip(t) {
            row[c] -= 1.0;
        }
        z *= scale;
        head_grads.push(Dense {
            w: top.t().dot(&z),
            b: z.sum_axis(Axis(0)),
        });
        d_top += &z.dot(&h.w.t());
    }

    let mut trunk_grads = Vec::with_capacity(net.trunk.len());
    let mut delta = d_top;
    for l in (0..net.trunk.len()).rev() {
        let act = net.activation;
        Zip::from(&mut delta).and(&acts[l + 1]).for_each(|d, &a| *d *= act.derivative(a));
        trunk_grads.push(Dense {
            w: acts[l].t().dot(&delta),
            b: delta.sum_axis(Axis(0)),
        });
        if l > 0 {
            delta = delta.dot(&net.trunk[l].w.t());
        }
    }
    trunk_grads.reverse();
    Ok((
        total * scale,
        Gradients {
            trunk: trunk_grads,
            head_layers: head_grads,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct TrainedMdnn {
    pub net: Mdnn,
    /// Full-data loss before training, then after every epoch.
    pub loss_trace: Vec<f64>,
}

/// Minibatch SGD on [`loss`] from a Glorot initialisation.
pub fn train(x: ArrayView2<f64>, y: &[Vec<usize>], cfg: &MdnnConfig) -> Result<TrainedMdnn> {
    let mut net = Mdnn::init(cfg)?;
    net.check_input(&x)?;
    check_targets(&net, &x, y)?;
    let rows = x.nrows();
    if rows == 0 {
        return Err(Error::Invalid("cannot train on an empty frame set".into()));
    }
    let mut trace = vec![loss(&net, x, y)?];
    let mut order: Vec<usize> = (0..rows).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut seed::rng(seed::derive(cfg.seed, &[1, epoch as u64])));
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.select(Axis(0), idx);
            let yb: Vec<Vec<usize>> = y.iter().map(|s| idx.iter().map(|&i| s[i]).collect()).collect();
            let (l, g) = loss_and_gradient(&net, xb.view(), &yb)?;
            if !l.is_finite() {
                return Err(Error::NonFinite { epoch, batch, loss: l });
            }
            let step = |d: &mut Dense, g: &Dense| {
                d.w.scaled_add(-cfg.learn_rate, &g.w);
                d.b.scaled_add(-cfg.learn_rate, &g.b);
            };
            for (d, g) in net.trunk.iter_mut().zip(&g.trunk) {
                step(d, g);
            }
            for (d, g) in net.head_layers.iter_mut().zip(&g.head_layers) {
                step(d, g);
            }
        }
        let l = loss(&net, x, y)?;
        if !l.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                batch: rows.div_ceil(cfg.batch_size),
                loss: l,
            });
        }
        log::debug!("mdnn epoch {epoch}: loss {l:.5}");
        trace.push(l);
    }
    Ok(TrainedMdnn { net, loss_trace: trace })
}

/// Trains on standardized corpus frames, then folds the standardization
/// into the first layer so the returned net takes raw inputs.
pub fn train_corpus(inputs: &[FeatureSequence], targets: &FrameTargets, cfg: &MdnnConfig) -> Result<TrainedMdnn> {
    if inputs.len() != targets.utterances.len() {
        return Err(Error::Invalid(format!(
            "{} input utterances but {} target utterances",
            inputs.len(),
            targets.utterances.len()
        )));
    }
    for (f, t) in inputs.iter().zip(&targets.utterances) {
        if f.utterance_id != t.utterance_id {
            return Err(Error::Invalid(format!(
                "inputs and targets disagree on utterance order: {} vs {}",
                f.utterance_id, t.utterance_id
            )));
        }
        if t.streams.iter().any(|s| s.len() != f.num_frames()) {
            return Err(Error::Utterance {
                utterance_id: f.utterance_id.clone(),
                detail: format!("targets do not cover its {} frames", f.num_frames()),
            });
        }
    }
    if inputs.is_empty() {
        return Err(Error::Invalid("cannot train on an empty corpus".into()));
    }
    let views: Vec<_> = inputs.iter().map(|f| f.frames().view()).collect();
    let x = ndarray::concatenate(Axis(0), &views).map_err(|_| Error::Dimension {
        expected: inputs[0].dim(),
        actual: inputs.iter().map(|f| f.dim()).find(|&d| d != inputs[0].dim()).unwrap_or(0),
    })?;
    let (mean, scale) = standardizer(x.view());
    let xs = standardize(x.view(), &mean, &scale);
    let mut trained = train(xs.view(), &targets.concat(), cfg)?;
    trained.net.fold_input_affine(&mean, &scale)?;
    Ok(trained)
}

/// Bottleneck features of one utterance's network input.
pub fn extract_bnf(net: &Mdnn, features: &FeatureSequence) -> Result<FeatureSequence> {
    let bnf = net.bottleneck(features.frames().view()).map_err(|e| match e {
        Error::Dimension { expected, actual } => Error::Utterance {
            utterance_id: features.utterance_id.clone(),
            detail: format!("network expects {expected}-dim input, got {actual}"),
        },
        other => other,
    })?;
    FeatureSequence::new(
        features.utterance_id.clone(),
        features.speaker_id.clone(),
        bnf,
        features.frame_shift_ms,
        FeatureKind::Bottleneck,
    )
}

/// Per-column mean and inverse standard deviation (1 for constant columns).
pub fn standardizer(x: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let n = x.nrows().max(1) as f64;
    let mean = x.sum_axis(Axis(0)) / n;
    let mut scale = Array1::zeros(x.ncols());
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
        scale[j] = if var > 1e-12 { 1.0 / var.sqrt() } else { 1.0 };
    }
    (mean, scale)
}

/// Applies `(x - mean) * scale` row-wise.
pub fn standardize(x: ArrayView2<f64>, mean: &Array1<f64>, scale: &Array1<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        Zip::from(&mut row).and(mean).and(scale).for_each(|v, &m, &s| *v = (*v - m) * s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{HyperParams, Segment, TokenLabeling, UtteranceLabels};

    fn tiny() -> MdnnConfig {
        MdnnConfig {
            layer_dims: vec![4, 3, 2],
            bottleneck_index: 2,
            heads: vec![2, 3],
            epochs: 0,
            batch_size: 2,
            ..MdnnConfig::new(4, vec![2, 3])
        }
    }

    fn data(rows: usize, dim: usize, heads: &[usize], seed: u64) -> (Array2<f64>, Vec<Vec<usize>>) {
        let mut rng = crate::seed::rng(seed);
        let x = Array2::from_shape_simple_fn((rows, dim), || rng.random_range(-1.0..1.0));
        let y = heads.iter().map(|&n| (0..rows).map(|_| rng.random_range(0..n)).collect()).collect();
        (x, y)
    }

    #[test]
    fn zero_net_is_uniform() {
        let cfg = MdnnConfig::new(6, vec![4, 7]);
        let net = Mdnn::zeros(&cfg).unwrap();
        let (x, y) = data(5, 6, &[4, 7], 1);
        let f = net.forward(x.view()).unwrap();
        assert!(f.bottleneck.iter().all(|&v| v == 0.5));
        assert_eq!(f.bottleneck.ncols(), 39);
        assert!(f.posteriors[0].iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let l = loss(&net, x.view(), &y).unwrap();
        assert!((l - (4f64.ln() + 7f64.ln()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn posteriors_normalize() {
        let net = Mdnn::init(&tiny()).unwrap();
        let (x, _) = data(7, 4, &[2, 3], 2);
        for p in net.forward(x.view()).unwrap().posteriors {
            for row in p.axis_iter(Axis(0)) {
                assert!((row.sum() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = Mdnn::init(&tiny()).unwrap();
        let x = Array2::zeros((3, 5));
        assert!(matches!(net.forward(x.view()), Err(Error::Dimension { expected: 4, actual: 5 })));
    }

    #[test]
    fn zero_epochs_returns_init() {
        let cfg = tiny();
        let (x, y) = data(5, 4, &[2, 3], 3);
        let t = train(x.view(), &y, &cfg).unwrap();
        assert_eq!(t.net, Mdnn::init(&cfg).unwrap());
        assert_eq!(t.loss_trace.len(), 1);
    }

    #[test]
    fn folding_matches_explicit_standardization() {
        let cfg = tiny();
        let mut net = Mdnn::init(&cfg).unwrap();
        let (x, _) = data(6, 4, &[2, 3], 4);
        let x = x.mapv(|v| v * 3.0 + 1.5);
        let (mean, scale) = standardizer(x.view());
        let on_std = net.bottleneck(standardize(x.view(), &mean, &scale).view()).unwrap();
        net.fold_input_affine(&mean, &scale).unwrap();
        let on_raw = net.bottleneck(x.view()).unwrap();
        for (a, b) in on_std.iter().zip(&on_raw) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn targets_follow_segments() {
        let lab = |tok| TokenLabeling {
            utterances: vec![UtteranceLabels {
                utterance_id: "u".into(),
                segments: vec![Segment { token: 1, start: 0, end: 10 }, Segment { token: tok, start: 10, end: 20 }],
            }],
        };
        let layer = |tok, n| crate::granularity::Layer {
            model: crate::tokenizer::TokenSetModel {
                psi: HyperParams { m: 3, n },
                hmms: Vec::new(),
                token_lm: Vec::new(),
                feature_dim: 1,
                lm_weight: 1.0,
            },
            labeling: lab(tok),
            report: Default::default(),
        };
        let set = LayerSet {
            layers: [(HyperParams { m: 3, n: 8 }, layer(7, 8)), (HyperParams { m: 5, n: 4 }, layer(2, 4))]
                .into_iter()
                .collect(),
            fingerprint: String::new(),
        };
        let t = frame_targets(&set).unwrap();
        assert_eq!(t.heads, vec![8, 4]);
        assert_eq!(t.utterances[0].streams[0][10..20], [7; 10]);
        assert_eq!(t.utterances[0].streams[1][..10], [1; 10]);
    }
}
