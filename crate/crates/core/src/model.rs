//! Small fully-connected softmax classifiers: initialization, mini-batch SGD
//! training, inference and JSON checkpoints.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Role};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Probabilities are clamped to `[PROB_EPS, 1 − PROB_EPS]` before taking log-odds.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidSpec(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub seed: u64,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize, seed: u64) -> Self {
        ModelSpec {
            input_dim,
            hidden_dims,
            num_classes,
            seed,
            activation: Activation::Relu,
        }
    }

    /// Parses `d,h1,…,hk,c` into a spec.
    pub fn from_arch(arch: &str, seed: u64) -> Result<Self> {
        let dims = arch
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidSpec(format!("bad architecture `{arch}`: {e}")))?;
        if dims.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "architecture `{arch}` needs at least input and class counts"
            )));
        }
        let spec = ModelSpec::new(
            dims[0],
            dims[1..dims.len() - 1].to_vec(),
            dims[dims.len() - 1],
            seed,
        );
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec("num_classes must be at least 2".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::InvalidSpec("hidden layer widths must be at least 1".into()));
        }
        Ok(())
    }

    /// `(inputs, outputs)` for every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.num_classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// One affine layer; `weights` is `inputs × outputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        for (i, &a) in input.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += a * w;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub epoch: usize,
    pub train_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    layers: Vec<Layer>,
    pub epoch: usize,
    pub loss_history: Vec<LossPoint>,
}

pub fn init_model(spec: &ModelSpec) -> Result<Model> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layers = spec
        .layer_shapes()
        .into_iter()
        .map(|(inputs, outputs)| {
            let bound = 1.0 / (inputs as f64).sqrt();
            let mut draw = || rng.random_range(-bound..=bound);
            let weights = (0..inputs * outputs).map(|_| draw()).collect();
            let bias = (0..outputs).map(|_| draw()).collect();
            Layer {
                inputs,
                outputs,
                weights,
                bias,
            }
        })
        .collect();
    Ok(Model {
        spec: spec.clone(),
        layers,
        epoch: 0,
        loss_history: Vec::new(),
    })
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `−log softmax(logits)[label]`, computed stably.
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Log-odds `log(p / (1 − p))` with `p` clamped to `[PROB_EPS, 1 − PROB_EPS]`.
pub fn log_odds(p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (p / (1.0 - p)).ln()
}

/// Per-layer `(pre-activation, activation)` pairs; the last activation is the logits.
type ForwardCache = Vec<(Vec<f64>, Vec<f64>)>;

impl Model {
    /// Assembles a model from explicit layers, checking shapes against `spec`.
    pub fn from_parts(spec: ModelSpec, layers: Vec<Layer>, epoch: usize) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::InvalidSpec(format!(
                "expected {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (k, ((i, o), l)) in shapes.iter().zip(&layers).enumerate() {
            if l.inputs != *i
                || l.outputs != *o
                || l.weights.len() != i * o
                || l.bias.len() != *o
            {
                return Err(Error::InvalidSpec(format!("layer {k} does not have shape {i}x{o}")));
            }
        }
        Ok(Model {
            spec,
            layers,
            epoch,
            loss_history: Vec::new(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.spec.num_classes {
            return Err(Error::InvalidLabel {
                label,
                num_classes: self.spec.num_classes,
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let act = self.spec.activation;
        let last = self.layers.len() - 1;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            layer.forward(&cur, &mut next);
            if k != last {
                next.iter_mut().for_each(|z| *z = act.apply(*z));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    fn forward_cache(&self, x: &[f64]) -> ForwardCache {
        let act = self.spec.activation;
        let last = self.layers.len() - 1;
        let mut cache: ForwardCache = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let input = if k == 0 { x } else { &cache[k - 1].1 };
            let mut z = Vec::new();
            layer.forward(input, &mut z);
            let a = if k == last {
                z.clone()
            } else {
                z.iter().map(|&v| act.apply(v)).collect()
            };
            cache.push((z, a));
        }
        cache
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Log-odds of the probability assigned to `label`.
    pub fn score(&self, x: &[f64], label: usize) -> Result<f64> {
        self.check_label(label)?;
        let p = self.predict_proba(x)?;
        Ok(log_odds(p[label]))
    }

    /// Mean cross-entropy over a dataset.
    pub fn mean_loss(&self, data: &Dataset) -> Result<f64> {
        data.check_labels(self.spec.num_classes)?;
        let mut total = 0.0;
        for s in data.samples() {
            total += cross_entropy(&self.logits(&s.x)?, s.label);
        }
        Ok(total / data.len() as f64)
    }

    /// Accumulates the cross-entropy gradient of one sample into `grads`.
    fn backprop(&self, x: &[f64], label: usize, grads: &mut [Layer]) {
        let cache = self.forward_cache(x);
        let last = self.layers.len() - 1;
        let mut delta = softmax(&cache[last].1);
        delta[label] -= 1.0;
        for k in (0..self.layers.len()).rev() {
            let input = if k == 0 { x } else { &cache[k - 1].1 };
            let layer = &self.layers[k];
            let g = &mut grads[k];
            for (i, &a) in input.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let row = &mut g.weights[i * layer.outputs..(i + 1) * layer.outputs];
                for (w, d) in row.iter_mut().zip(&delta) {
                    *w += a * d;
                }
            }
            for (b, d) in g.bias.iter_mut().zip(&delta) {
                *b += d;
            }
            if k > 0 {
                let (z_prev, a_prev) = &cache[k - 1];
                let act = self.spec.activation;
                delta = (0..layer.inputs)
                    .map(|i| {
                        let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                        let s: f64 = row.iter().zip(&delta).map(|(w, d)| w * d).sum();
                        s * act.derivative(z_prev[i], a_prev[i])
                    })
                    .collect();
            }
        }
    }

    fn zero_like(&self) -> Vec<Layer> {
        self.layers
            .iter()
            .map(|l| Layer {
                inputs: l.inputs,
                outputs: l.outputs,
                weights: vec![0.0; l.weights.len()],
                bias: vec![0.0; l.bias.len()],
            })
            .collect()
    }

    fn sgd_epoch(&mut self, data: &Dataset, lr: f64, batch_size: usize) {
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(self.epoch as u64 + 1);
        order.shuffle(&mut rng);
        for batch in order.chunks(batch_size) {
            let mut grads = self.zero_like();
            for &i in batch {
                let s = &data.samples()[i];
                self.backprop(&s.x, s.label, &mut grads);
            }
            let scale = lr / batch.len() as f64;
            for (layer, g) in self.layers.iter_mut().zip(&grads) {
                for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                    *w -= scale * gw;
                }
                for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                    *b -= scale * gb;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Checkpoint period in epochs; 0 keeps only the first and last.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr: 0.05,
            batch_size: 32,
            checkpoint_every: 10,
        }
    }
}

/// Runs `cfg.epochs` epochs of SGD, calling `on_checkpoint` at the starting
/// epoch, every `checkpoint_every` epochs, and after the final epoch.
pub fn fit<F>(model: &mut Model, data: &Dataset, cfg: &TrainConfig, mut on_checkpoint: F) -> Result<()>
where
    F: FnMut(&Model) -> Result<()>,
{
    if data.role() != Role::Train {
        return Err(Error::InvalidDataset("training requires a train-role dataset".into()));
    }
    if data.input_dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: data.input_dim(),
        });
    }
    data.check_labels(model.num_classes())?;
    if cfg.batch_size == 0 || !(cfg.lr.is_finite() && cfg.lr > 0.0) {
        return Err(Error::InvalidArgument("batch size and learning rate must be positive".into()));
    }

    let record = |model: &mut Model| -> Result<()> {
        let loss = model.mean_loss(data)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: model.epoch });
        }
        model.loss_history.push(LossPoint {
            epoch: model.epoch,
            train_loss: loss,
        });
        Ok(())
    };

    let start = model.epoch;
    if model.loss_history.last().map(|p| p.epoch) != Some(start) {
        record(model)?;
    }
    on_checkpoint(model)?;
    for step in 1..=cfg.epochs {
        model.sgd_epoch(data, cfg.lr, cfg.batch_size);
        model.epoch += 1;
        record(model)?;
        let periodic = cfg.checkpoint_every > 0 && (model.epoch - start) % cfg.checkpoint_every == 0;
        if periodic || step == cfg.epochs {
            on_checkpoint(model)?;
        }
    }
    Ok(())
}

pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("ckpt_epoch_{epoch:05}.json")
}

/// Trains and writes a checkpoint file per checkpoint epoch into `out_dir`.
pub fn train(model: &mut Model, data: &Dataset, cfg: &TrainConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    crate::fsutil::create_dir(out_dir)?;
    let mut paths = Vec::new();
    fit(model, data, cfg, |m| {
        let path = out_dir.join(checkpoint_file_name(m.epoch));
        save_checkpoint(m, &path)?;
        log::debug!("wrote {}", path.display());
        paths.push(path);
        Ok(())
    })?;
    Ok(paths)
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    spec: ModelSpec,
    epoch: usize,
    loss_history: Vec<LossPoint>,
    weights: Vec<LayerFile>,
}

impl Model {
    pub fn to_checkpoint_json(&self) -> Result<Vec<u8>> {
        let file = CheckpointFile {
            format_version: CHECKPOINT_FORMAT_VERSION,
            spec: self.spec.clone(),
            epoch: self.epoch,
            loss_history: self.loss_history.clone(),
            weights: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    w: l.weights.chunks(l.outputs).map(|r| r.to_vec()).collect(),
                    b: l.bias.clone(),
                })
                .collect(),
        };
        serde_json::to_vec(&file).map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))
    }

    pub fn from_checkpoint_json(bytes: &[u8], path: &Path) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_slice(bytes).map_err(|e| Error::parse("checkpoint", path, e))?;
        if file.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                found: file.format_version,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        let shapes = file.spec.layer_shapes();
        if shapes.len() != file.weights.len() {
            return Err(Error::parse("checkpoint", path, "layer count does not match spec"));
        }
        let mut layers = Vec::with_capacity(shapes.len());
        for ((inputs, outputs), lf) in shapes.into_iter().zip(file.weights) {
            if lf.w.len() != inputs || lf.w.iter().any(|r| r.len() != outputs) {
                return Err(Error::parse("checkpoint", path, "weight matrix shape does not match spec"));
            }
            layers.push(Layer {
                inputs,
                outputs,
                weights: lf.w.into_iter().flatten().collect(),
                bias: lf.b,
            });
        }
        let mut model = Model::from_parts(file.spec, layers, file.epoch)
            .map_err(|e| Error::parse("checkpoint", path, e))?;
        model.loss_history = file.loss_history;
        Ok(model)
    }
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    crate::fsutil::write_atomic(path, &model.to_checkpoint_json()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Model::from_checkpoint_json(&bytes, path)
}
