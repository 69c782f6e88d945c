//! The three window classifiers: MLP, FCN and a simplified point-cloud transformer.
//!
//! Every model consumes a batch of windows `[batch, T, C]` and produces class
//! probabilities `[batch, 2]` (column 1 is "familiar").

mod checkpoint;
mod spec;

pub use checkpoint::{Checkpoint, TrainedOn, CHECKPOINT_FORMAT_VERSION};
pub use spec::{mlp_widths, Hyper, ModelKind, ModelSpec};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::tensor::{scaled_dot_attention, AttentionParams, Graph, ParamId, ParamStore, RunningStats, Scalar, Tensor, Var};

#[derive(Clone, Debug)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

#[derive(Clone, Debug)]
struct ConvBlock {
    w: ParamId,
    b: ParamId,
    norm: Norm,
}

#[derive(Clone, Debug)]
struct AttentionBlock {
    wq: ParamId,
    wk: ParamId,
    v: Dense,
    ff: Dense,
    norm: Norm,
}

#[derive(Clone, Debug)]
enum Layers {
    Mlp { hidden: Vec<Dense>, head: Dense },
    Fcn { blocks: Vec<ConvBlock>, head: Dense },
    Pct { embed: Dense, blocks: Vec<AttentionBlock>, head: Dense },
}

/// Pending running-statistic updates produced by a training-mode forward pass.
type StatUpdates<T> = Vec<(ParamId, Vec<T>)>;

#[derive(Clone, Debug)]
pub struct Model<T: Scalar = f32> {
    spec: ModelSpec,
    params: ParamStore<T>,
    layers: Layers,
}

struct Init<'a> {
    store: &'a mut ParamStore,
    rng: crate::seed::Rng,
}

impl Init<'_> {
    fn glorot(&mut self, name: &str, shape: &[usize], fan_in: usize, fan_out: usize) -> Result<ParamId> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-limit..=limit)).collect();
        self.store.add(name, Tensor::new(shape.to_vec(), data)?, true)
    }

    fn constant(&mut self, name: &str, len: usize, value: f32, trainable: bool) -> Result<ParamId> {
        self.store.add(name, Tensor::full(&[len], value), trainable)
    }

    fn dense(&mut self, prefix: &str, input: usize, output: usize) -> Result<Dense> {
        Ok(Dense {
            w: self.glorot(&format!("{prefix}.weight"), &[input, output], input, output)?,
            b: self.constant(&format!("{prefix}.bias"), output, 0.0, true)?,
        })
    }

    fn norm(&mut self, prefix: &str, channels: usize) -> Result<Norm> {
        Ok(Norm {
            gamma: self.constant(&format!("{prefix}.gamma"), channels, 1.0, true)?,
            beta: self.constant(&format!("{prefix}.beta"), channels, 0.0, true)?,
            mean: self.constant(&format!("{prefix}.running_mean"), channels, 0.0, false)?,
            var: self.constant(&format!("{prefix}.running_var"), channels, 1.0, false)?,
        })
    }
}

impl Model {
    /// Builds any of the three architectures with seeded initial parameters.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Model> {
        spec.validate()?;
        let mut params = ParamStore::new();
        let mut init = Init { store: &mut params, rng: rng_from_seed(seed) };
        let layers = match &spec.hyper {
            Hyper::Mlp { hidden } => {
                let mut width = spec.input_dim();
                let mut dense = Vec::with_capacity(hidden.len());
                for (i, &h) in hidden.iter().enumerate() {
                    dense.push(init.dense(&format!("mlp.hidden{i}"), width, h)?);
                    width = h;
                }
                let head = init.dense("mlp.head", width, spec.class_count)?;
                Layers::Mlp { hidden: dense, head }
            }
            Hyper::Fcn { filters, kernels } => {
                let mut cin = spec.channels;
                let mut blocks = Vec::with_capacity(filters.len());
                for (i, (&f, &k)) in filters.iter().zip(kernels).enumerate() {
                    let prefix = format!("fcn.block{i}");
                    let w = init.glorot(&format!("{prefix}.conv.weight"), &[f, cin, k], cin * k, f * k)?;
                    let b = init.constant(&format!("{prefix}.conv.bias"), f, 0.0, true)?;
                    let norm = init.norm(&format!("{prefix}.bn"), f)?;
                    blocks.push(ConvBlock { w, b, norm });
                    cin = f;
                }
                let head = init.dense("fcn.head", cin, spec.class_count)?;
                Layers::Fcn { blocks, head }
            }
            Hyper::Pct { d_model, blocks: count, qk_reduction } => {
                let d = *d_model;
                let dk = d / qk_reduction;
                let embed = init.dense("pct.embed", spec.channels, d)?;
                let mut blocks = Vec::with_capacity(*count);
                for i in 0..*count {
                    let prefix = format!("pct.block{i}");
                    blocks.push(AttentionBlock {
                        wq: init.glorot(&format!("{prefix}.attn.query"), &[d, dk], d, dk)?,
                        wk: init.glorot(&format!("{prefix}.attn.key"), &[d, dk], d, dk)?,
                        v: init.dense(&format!("{prefix}.attn.value"), d, d)?,
                        ff: init.dense(&format!("{prefix}.ff"), d, d)?,
                        norm: init.norm(&format!("{prefix}.bn"), d)?,
                    });
                }
                let head = init.dense("pct.head", d, spec.class_count)?;
                Layers::Pct { embed, blocks, head }
            }
        };
        Ok(Model { spec: spec.clone(), params, layers })
    }

    pub fn build_mlp(spec: &ModelSpec, seed: u64) -> Result<Model> {
        Self::expect_kind(spec, ModelKind::Mlp)?;
        Self::build(spec, seed)
    }

    pub fn build_fcn(spec: &ModelSpec, seed: u64) -> Result<Model> {
        Self::expect_kind(spec, ModelKind::Fcn)?;
        Self::build(spec, seed)
    }

    pub fn build_pct(spec: &ModelSpec, seed: u64) -> Result<Model> {
        Self::expect_kind(spec, ModelKind::Pct)?;
        Self::build(spec, seed)
    }

    fn expect_kind(spec: &ModelSpec, kind: ModelKind) -> Result<()> {
        if spec.kind != kind {
            return Err(Error::Config(format!("expected a {kind} spec, got {}", spec.kind)));
        }
        Ok(())
    }
}

impl<T: Scalar> Model<T> {
    /// Copies the model into another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let mut params = ParamStore::new();
        for e in self.params.entries() {
            params.add(e.name.clone(), e.value.cast(), e.trainable).expect("names are unique");
        }
        Model { spec: self.spec.clone(), params, layers: self.layers.clone() }
    }

    pub(crate) fn from_parts(spec: ModelSpec, params: ParamStore<T>) -> Result<Model<T>> {
        let template = Model::build(&spec, 0)?;
        let mut own: ParamStore<T> = template.cast::<T>().params;
        own.load_values_from(&params)?;
        Ok(Model { spec, params: own, layers: template.layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Output widths of the dense hidden layers (MLP only).
    pub fn hidden_widths(&self) -> Vec<usize> {
        match &self.layers {
            Layers::Mlp { hidden, .. } => hidden.iter().map(|d| self.params.get(d.w).value.shape()[1]).collect(),
            _ => Vec::new(),
        }
    }

    /// `(filters, kernel)` of each convolution block (FCN only).
    pub fn conv_layout(&self) -> Vec<(usize, usize)> {
        match &self.layers {
            Layers::Fcn { blocks, .. } => blocks
                .iter()
                .map(|b| {
                    let s = self.params.get(b.w).value.shape();
                    (s[0], s[2])
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Number of stacked attention blocks (PCT only).
    pub fn attention_blocks(&self) -> usize {
        match &self.layers {
            Layers::Pct { blocks, .. } => blocks.len(),
            _ => 0,
        }
    }

    /// Records a forward pass over `x [batch, T, C]` and returns probabilities `[batch, 2]`.
    /// Training mode uses batch statistics in every batch-norm layer and updates the
    /// running statistics.
    pub fn forward(&mut self, g: &mut Graph<T>, x: Var, train: bool) -> Result<Var> {
        let (out, updates) = self.forward_with(g, x, train)?;
        for (id, values) in updates {
            self.params.get_mut(id).value.data_mut().copy_from_slice(&values);
        }
        Ok(out)
    }

    /// Inference-mode forward pass; the model is not modified.
    pub fn forward_infer(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        Ok(self.forward_with(g, x, false)?.0)
    }

    /// Class probabilities for a batch of windows, in inference mode.
    pub fn predict(&self, batch: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let x = g.input(batch);
        let p = self.forward_infer(&mut g, x)?;
        Ok(g.value(p).clone())
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 3 || shape[2] != self.spec.channels {
            return Err(Error::Shape(format!(
                "model expects [batch, T, {}] windows, got {shape:?}",
                self.spec.channels
            )));
        }
        if self.spec.kind == ModelKind::Mlp && shape[1] != self.spec.window_size {
            return Err(Error::Shape(format!(
                "MLP built for T={} cannot take T={}",
                self.spec.window_size, shape[1]
            )));
        }
        Ok(())
    }

    fn dense(&self, g: &mut Graph<T>, x: Var, d: &Dense) -> Result<Var> {
        let w = g.param(&self.params, d.w);
        let b = g.param(&self.params, d.b);
        g.linear(x, w, Some(b))
    }

    fn norm(&self, g: &mut Graph<T>, x: Var, n: &Norm, channels_last: bool, train: bool, updates: &mut StatUpdates<T>) -> Result<Var> {
        let gamma = g.param(&self.params, n.gamma);
        let beta = g.param(&self.params, n.beta);
        let mut stats = RunningStats {
            mean: self.params.get(n.mean).value.data().to_vec(),
            var: self.params.get(n.var).value.data().to_vec(),
        };
        let y = match (channels_last, train) {
            (false, true) => g.batchnorm1d_train(x, gamma, beta, &mut stats)?,
            (false, false) => g.batchnorm1d_infer(x, gamma, beta, &stats)?,
            (true, true) => g.batchnorm_last_train(x, gamma, beta, &mut stats)?,
            (true, false) => g.batchnorm_last_infer(x, gamma, beta, &stats)?,
        };
        if train {
            updates.push((n.mean, stats.mean));
            updates.push((n.var, stats.var));
        }
        Ok(y)
    }

    pub(crate) fn forward_with(&self, g: &mut Graph<T>, x: Var, train: bool) -> Result<(Var, StatUpdates<T>)> {
        let shape = g.shape(x).to_vec();
        self.check_input(&shape)?;
        let batch = shape[0];
        let mut updates = Vec::new();
        let logits = match &self.layers {
            Layers::Mlp { hidden, head } => {
                let mut h = g.reshape(x, &[batch, shape[1] * shape[2]])?;
                for d in hidden {
                    h = self.dense(g, h, d)?;
                    h = g.relu(h);
                }
                self.dense(g, h, head)?
            }
            Layers::Fcn { blocks, head } => {
                let mut h = g.transpose12(x)?;
                for b in blocks {
                    let w = g.param(&self.params, b.w);
                    let bias = g.param(&self.params, b.b);
                    h = g.conv1d(h, w, bias)?;
                    h = self.norm(g, h, &b.norm, false, train, &mut updates)?;
                    h = g.relu(h);
                }
                let pooled = g.global_avg_pool(h)?;
                self.dense(g, pooled, head)?
            }
            Layers::Pct { embed, blocks, head } => {
                let mut h = self.dense(g, x, embed)?;
                for b in blocks {
                    let p = AttentionParams {
                        wq: g.param(&self.params, b.wq),
                        wk: g.param(&self.params, b.wk),
                        wv: g.param(&self.params, b.v.w),
                        bv: Some(g.param(&self.params, b.v.b)),
                    };
                    let attn = scaled_dot_attention(g, h, &p)?;
                    h = g.add(h, attn.output)?;
                    h = self.dense(g, h, &b.ff)?;
                    h = self.norm(g, h, &b.norm, true, train, &mut updates)?;
                    h = g.relu(h);
                }
                let pooled = g.mean_axis(h, 1)?;
                self.dense(g, pooled, head)?
            }
        };
        Ok((g.softmax(logits)?, updates))
    }
}
