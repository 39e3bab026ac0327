//! The respiratory-rate network: a dilated residual inception block, a
//! stack of strided convolutions, global average pooling and a dense head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ConvSpec, Graph, Var};
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_length: usize,
    pub input_channels: usize,
    pub branch_kernels: Vec<usize>,
    pub branch_dilations: Vec<usize>,
    pub stem_filters: usize,
    pub max_filters: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub head_hidden: usize,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_length: 3200,
            input_channels: 3,
            branch_kernels: vec![3, 5, 7],
            branch_dilations: vec![1, 2, 4],
            stem_filters: 8,
            max_filters: 1024,
            conv_kernel: 3,
            conv_stride: 2,
            head_hidden: 64,
            leaky_slope: 0.2,
        }
    }
}

/// Shape of one strided convolution stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_length: usize,
    pub out_length: usize,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl ModelConfig {
    /// Narrower network that trains in minutes on a single core.
    pub fn desk() -> Self {
        Self { max_filters: 128, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_length", self.input_length),
            ("input_channels", self.input_channels),
            ("stem_filters", self.stem_filters),
            ("conv_kernel", self.conv_kernel),
            ("conv_stride", self.conv_stride),
            ("head_hidden", self.head_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(config_err(format!("{name} must be positive")));
            }
        }
        if self.branch_kernels.len() < 2 || self.branch_kernels.len() != self.branch_dilations.len() {
            return Err(config_err("branch kernels and dilations need equal length of at least 2"));
        }
        if self.branch_kernels.iter().chain([&self.conv_kernel]).any(|k| k % 2 == 0) {
            return Err(config_err("kernel sizes must be odd"));
        }
        if self.branch_dilations.contains(&0) {
            return Err(config_err("dilations must be positive"));
        }
        let ratio = self.max_filters / self.stem_filters;
        if self.max_filters < self.stem_filters || self.max_filters % self.stem_filters != 0 || !ratio.is_power_of_two() {
            return Err(config_err(format!(
                "max_filters {} is not stem_filters {} times a power of two",
                self.max_filters, self.stem_filters
            )));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(config_err("leaky_slope must be finite and non-negative"));
        }
        self.stage_plan().map(|_| ())
    }

    pub fn stage_spec(&self) -> ConvSpec {
        ConvSpec::new(self.conv_stride, 1, (self.conv_kernel - 1) / 2)
    }

    /// Strided stages: filters double from `stem_filters` up to `max_filters`
    /// and the stack stops once the length is at most 4.
    pub fn stage_plan(&self) -> Result<Vec<StagePlan>> {
        if self.conv_kernel == 0 || self.conv_stride == 0 || self.stem_filters == 0 {
            return Err(config_err("conv_kernel, conv_stride and stem_filters must be positive"));
        }
        let spec = self.stage_spec();
        let mut plan = Vec::new();
        let (mut len, mut ch, mut width) = (self.input_length, self.input_channels, self.stem_filters);
        while len > 4 {
            let out = spec
                .out_len(len, self.conv_kernel)
                .map_err(|e| config_err(format!("downsampling chain underflows at length {len}: {e}")))?;
            if out >= len {
                return Err(config_err(format!("stage does not shrink length {len}")));
            }
            plan.push(StagePlan { in_channels: ch, out_channels: width, in_length: len, out_length: out });
            (len, ch) = (out, width);
            width = (width * 2).min(self.max_filters);
        }
        if plan.is_empty() {
            return Err(config_err(format!("input length {} leaves no downsampling stage", self.input_length)));
        }
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConvBn {
    w: ParamId,
    b: ParamId,
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
    spec: ConvSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    branches: Vec<ConvBn>,
    proj_w: ParamId,
    proj_b: ParamId,
    stages: Vec<ConvBn>,
    hidden_w: ParamId,
    hidden_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

struct Init {
    rng: ChaCha8Rng,
    slope: f64,
}

impl Init {
    /// He initialization for a layer followed by a leaky ReLU.
    fn weights(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        let std = (2.0 / ((1.0 + self.slope * self.slope) * fan_in as f64)).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(|_| normal.sample(&mut self.rng)).collect() }
    }
}

fn conv_bn(store: &mut ParamStore, init: &mut Init, name: &str, cin: usize, cout: usize, k: usize, spec: ConvSpec) -> ConvBn {
    use ParamKind::{Buffer, Trainable};
    ConvBn {
        w: store.add(format!("{name}.conv.weight"), Trainable, init.weights(&[cout, cin, k], cin * k)),
        b: store.add(format!("{name}.conv.bias"), Trainable, Tensor::zeros(&[cout])),
        gamma: store.add(format!("{name}.bn.scale"), Trainable, Tensor::filled(&[cout], 1.0)),
        beta: store.add(format!("{name}.bn.shift"), Trainable, Tensor::zeros(&[cout])),
        mean: store.add(format!("{name}.bn.running_mean"), Buffer, Tensor::zeros(&[cout])),
        var: store.add(format!("{name}.bn.running_var"), Buffer, Tensor::filled(&[cout], 1.0)),
        spec,
    }
}

impl RrModel {
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        use ParamKind::Trainable;
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init { rng: ChaCha8Rng::seed_from_u64(seed), slope: config.leaky_slope };
        let cin = config.input_channels;
        let width = config.stem_filters;
        let branches = config
            .branch_kernels
            .iter()
            .zip(&config.branch_dilations)
            .enumerate()
            .map(|(i, (&k, &d))| {
                let spec = ConvSpec::new(1, d, d * (k - 1) / 2);
                conv_bn(&mut store, &mut init, &format!("inception.branch{i}"), cin, width, k, spec)
            })
            .collect();
        let cat = width * config.branch_kernels.len();
        let proj_w = store.add("inception.project.weight", Trainable, init.weights(&[cin, cat, 1], cat));
        let proj_b = store.add("inception.project.bias", Trainable, Tensor::zeros(&[cin]));
        let stages = config
            .stage_plan()?
            .iter()
            .enumerate()
            .map(|(i, s)| {
                conv_bn(&mut store, &mut init, &format!("stage{i}"), s.in_channels, s.out_channels, config.conv_kernel, config.stage_spec())
            })
            .collect::<Vec<_>>();
        let last = config.stage_plan()?.last().map(|s| s.out_channels).unwrap_or(cin);
        let h = config.head_hidden;
        let hidden_w = store.add("head.hidden.weight", Trainable, init.weights(&[h, last], last));
        let hidden_b = store.add("head.hidden.bias", Trainable, Tensor::zeros(&[h]));
        let out_w = store.add("head.out.weight", Trainable, init.weights(&[1, h], h));
        let out_b = store.add("head.out.bias", Trainable, Tensor::zeros(&[1]));
        Ok(Self { config: config.clone(), store, branches, proj_w, proj_b, stages, hidden_w, hidden_b, out_w, out_b })
    }

    /// Number of learned scalars; batch-norm running statistics are excluded.
    pub fn count_params(&self) -> usize {
        self.store.count_trainable()
    }

    pub fn set_output_bias(&mut self, value: f64) {
        self.store.get_mut(self.out_b).value.data[0] = value;
    }

    pub fn output_bias(&self) -> f64 {
        self.store.get(self.out_b).value.data[0]
    }

    pub fn zero_output_weights(&mut self) {
        self.store.get_mut(self.out_w).value.data.iter_mut().for_each(|w| *w = 0.0);
    }

    fn conv_bn_act(&mut self, g: &mut Graph, x: Var, block: &ConvBn, train: bool) -> Result<Var> {
        let w = g.param(&self.store, block.w)?;
        let b = g.param(&self.store, block.b)?;
        let y = g.conv1d(x, w, Some(b), block.spec)?;
        let gamma = g.param(&self.store, block.gamma)?;
        let beta = g.param(&self.store, block.beta)?;
        let y = if train {
            let (mean, var) = self.store.values_pair_mut(block.mean, block.var);
            g.batch_norm(y, gamma, beta, mean, var, true)?
        } else {
            let mut mean = self.store.get(block.mean).value.data.clone();
            let mut var = self.store.get(block.var).value.data.clone();
            g.batch_norm(y, gamma, beta, &mut mean, &mut var, false)?
        };
        g.leaky_relu(y, self.config.leaky_slope)
    }

    /// Builds the forward pass of a (batch, channels, length) input; the
    /// result is (batch, 1) in breaths per minute. Training mode uses batch
    /// statistics and updates the running ones.
    pub fn forward(&mut self, g: &mut Graph, x: Var, train: bool) -> Result<Var> {
        let (_, c, l) = g.value(x).dims3()?;
        if c != self.config.input_channels || l != self.config.input_length {
            return Err(Error::InvalidShape(format!(
                "model expects {} channels of length {}, got {c} of length {l}",
                self.config.input_channels, self.config.input_length
            )));
        }
        let branches = self.branches.clone();
        let mut outs = Vec::with_capacity(branches.len());
        for (i, block) in branches.iter().enumerate() {
            g.set_scope(format!("inception.branch{i}"));
            outs.push(self.conv_bn_act(g, x, block, train)?);
        }
        g.set_scope("inception.project");
        let cat = g.concat(&outs)?;
        let pw = g.param(&self.store, self.proj_w)?;
        let pb = g.param(&self.store, self.proj_b)?;
        let proj = g.conv1d(cat, pw, Some(pb), ConvSpec::new(1, 1, 0))?;
        let mut y = g.add(x, proj)?;
        for (i, block) in self.stages.clone().iter().enumerate() {
            g.set_scope(format!("stage{i}"));
            y = self.conv_bn_act(g, y, block, train)?;
        }
        g.set_scope("head");
        let pooled = g.global_avg_pool(y)?;
        let hw = g.param(&self.store, self.hidden_w)?;
        let hb = g.param(&self.store, self.hidden_b)?;
        let hidden = g.dense(pooled, hw, hb)?;
        let hidden = g.leaky_relu(hidden, self.config.leaky_slope)?;
        let ow = g.param(&self.store, self.out_w)?;
        let ob = g.param(&self.store, self.out_b)?;
        let out = g.dense(hidden, ow, ob)?;
        g.set_scope("");
        Ok(out)
    }

    /// Evaluation-mode predictions, processed in batches of `batch_size`.
    pub fn predict(&self, inputs: &[&[f32]], batch_size: usize) -> Result<Vec<f64>> {
        let mut model = self.clone();
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(batch_size.max(1)) {
            let x = batch_tensor(chunk, self.config.input_channels, self.config.input_length)?;
            let mut g = Graph::inference();
            let xv = g.input(x)?;
            let y = model.forward(&mut g, xv, false)?;
            out.extend_from_slice(&g.value(y).data);
        }
        Ok(out)
    }
}

/// Stacks flat channel-major samples into a (batch, channels, length) tensor.
pub fn batch_tensor(samples: &[&[f32]], channels: usize, length: usize) -> Result<Tensor> {
    let per = channels * length;
    let mut data = Vec::with_capacity(samples.len() * per);
    for (i, s) in samples.iter().enumerate() {
        if s.len() != per {
            return Err(Error::InvalidShape(format!("sample {i} has {} values, expected {per}", s.len())));
        }
        data.extend(s.iter().map(|&v| v as f64));
    }
    Tensor::new(vec![samples.len(), channels, length], data)
}
