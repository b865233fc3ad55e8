//! The composite model: a graph-signal MLP, a spectral GCNN and an attention
//! CNN whose 16-dimensional outputs feed an aggregator MLP, plus the
//! single-module baselines that replace the aggregator with a linear head.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FEATURE_CHANNELS;
use crate::graph::{gft, Spectrum, NODE_FEATURES};
use crate::loss::loss;
use crate::nn::{relu, relu_backward, sigmoid, sigmoid_backward, tanh, tanh_backward, Conv1d, Initializer, Linear, Param, Tensor};

/// Stabilizer added to the attention mass before normalizing.
pub const ATTENTION_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompSnnConfig {
    pub node_count: usize,
    pub mlp_hidden: usize,
    pub module_out: usize,
    pub cnn_channels: usize,
    pub cnn_kernel: usize,
    pub gcnn_filters: usize,
    pub gcnn_degree: usize,
    pub coeff_hidden: usize,
    pub aggregator_hidden: usize,
    pub demographic_dim: usize,
    pub epsilon: Vec<f64>,
}

// Upper bounds keep checkpoints from untrusted sources from requesting
// absurd allocations.
const MAX_NODES: usize = 2048;
const MAX_WIDTH: usize = 1024;
const MAX_KERNEL: usize = 255;
const MAX_FILTERS: usize = 32;
const MAX_DEGREE: usize = 32;

impl CompSnnConfig {
    pub fn new(node_count: usize, epsilon: Vec<f64>) -> Self {
        CompSnnConfig {
            node_count,
            mlp_hidden: 32,
            module_out: 16,
            cnn_channels: 16,
            cnn_kernel: 9,
            gcnn_filters: 4,
            gcnn_degree: 5,
            coeff_hidden: 16,
            aggregator_hidden: 32,
            demographic_dim: 8,
            epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("node_count", self.node_count, MAX_NODES),
            ("mlp_hidden", self.mlp_hidden, MAX_WIDTH),
            ("module_out", self.module_out, MAX_WIDTH),
            ("cnn_channels", self.cnn_channels, MAX_WIDTH),
            ("cnn_kernel", self.cnn_kernel, MAX_KERNEL),
            ("gcnn_filters", self.gcnn_filters, MAX_FILTERS),
            ("coeff_hidden", self.coeff_hidden, MAX_WIDTH),
            ("aggregator_hidden", self.aggregator_hidden, MAX_WIDTH),
            ("demographic_dim", self.demographic_dim, MAX_WIDTH),
        ];
        for (name, value, max) in dims {
            if value == 0 || value > max {
                return Err(Error::InvalidArgument(format!("{name} = {value} outside [1, {max}]")));
            }
        }
        if self.gcnn_degree > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "gcnn_degree {} above {MAX_DEGREE}",
                self.gcnn_degree
            )));
        }
        if self.cnn_kernel.is_multiple_of(2) {
            return Err(Error::EvenKernel(self.cnn_kernel));
        }
        if self.epsilon.len() != self.demographic_dim {
            return Err(Error::DimensionMismatch {
                expected: self.demographic_dim,
                actual: self.epsilon.len(),
            });
        }
        if let Some((index, &value)) = self.epsilon.iter().enumerate().find(|(_, &e)| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::NonPositiveEpsilon { index, value });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    CompSnn,
    Cnn,
    Gcnn,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::CompSnn, ModelKind::Cnn, ModelKind::Gcnn, ModelKind::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::CompSnn => "compsnn",
            ModelKind::Cnn => "cnn",
            ModelKind::Gcnn => "gcnn",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compsnn" => Ok(ModelKind::CompSnn),
            "cnn" | "single_cnn" => Ok(ModelKind::Cnn),
            "gcnn" | "single_gcnn" => Ok(ModelKind::Gcnn),
            "mlp" | "gnn" | "single_mlp" | "graph_mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

/// The three representations of one trajectory, already scaled for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    /// `|N| × 8` node signal, row-major.
    pub node_signal: Vec<f64>,
    /// Visit count per node.
    pub visits: Vec<f64>,
    /// `[10, N]` feature series.
    pub series: Tensor,
}

// ---------------------------------------------------------------- graph MLP

/// `|N|·8 → hidden → 16` with ReLU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMlp {
    pub hidden: Linear,
    pub output: Linear,
}

struct GraphMlpCache {
    pre: Vec<f64>,
    act: Vec<f64>,
}

impl GraphMlp {
    fn new(init: &mut Initializer, cfg: &CompSnnConfig, name: &str) -> Self {
        GraphMlp {
            hidden: Linear::new(init, &format!("{name}.hidden"), cfg.node_count * NODE_FEATURES, cfg.mlp_hidden),
            output: Linear::new(init, &format!("{name}.output"), cfg.mlp_hidden, cfg.module_out),
        }
    }

    fn forward_cached(&self, signal: &[f64]) -> Result<(Vec<f64>, GraphMlpCache)> {
        let pre = self.hidden.forward(signal)?;
        let act = relu(&pre);
        let out = self.output.forward(&act)?;
        Ok((out, GraphMlpCache { pre, act }))
    }

    fn backward(&mut self, signal: &[f64], cache: &GraphMlpCache, dy: &[f64]) {
        let d_act = self.output.backward(&cache.act, dy);
        let d_pre = relu_backward(&cache.pre, &d_act);
        self.hidden.backward(signal, &d_pre);
    }

    fn params(&self) -> Vec<&Param> {
        [self.hidden.params(), self.output.params()].concat()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let GraphMlp { hidden, output } = self;
        hidden.params_mut().into_iter().chain(output.params_mut()).collect()
    }
}

/// Flattened node signal through the graph MLP.
pub fn forward_graph_mlp(signal: &[f64], module: &GraphMlp) -> Result<Vec<f64>> {
    module.forward_cached(signal).map(|(out, _)| out)
}

// ---------------------------------------------------------------- GCNN

/// Maps the eigenvalue vector to the `K + 1` coefficients of one polynomial filter.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMlp {
    pub hidden: Linear,
    pub output: Linear,
}

/// Bank of learned polynomial spectral filters followed by a linear readout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gcnn {
    pub filters: Vec<CoefficientMlp>,
    pub readout: Linear,
}

struct FilterCache {
    hidden: Vec<f64>,
}

struct GcnnCache {
    s_hat: Vec<f64>,
    powers: Vec<f64>,
    filters: Vec<FilterCache>,
    concat: Vec<f64>,
}

impl Gcnn {
    fn new(init: &mut Initializer, cfg: &CompSnnConfig, name: &str) -> Self {
        let n = cfg.node_count;
        let filters = (0..cfg.gcnn_filters)
            .map(|f| CoefficientMlp {
                hidden: Linear::new(init, &format!("{name}.filter{f}.hidden"), n, cfg.coeff_hidden),
                output: Linear::new(init, &format!("{name}.filter{f}.output"), cfg.coeff_hidden, cfg.gcnn_degree + 1),
            })
            .collect();
        Gcnn {
            filters,
            readout: Linear::new(init, &format!("{name}.readout"), cfg.gcnn_filters * n, cfg.module_out),
        }
    }

    fn degree(&self) -> usize {
        self.filters[0].output.outputs() - 1
    }

    fn forward_cached(&self, visits: &[f64], spectrum: &Spectrum) -> Result<(Vec<f64>, GcnnCache)> {
        let lambda = &spectrum.eigenvalues;
        let n = lambda.len();
        if visits.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "visit signal has {} nodes, spectrum {n}",
                visits.len()
            )));
        }
        let s_hat = gft(spectrum, visits)?;
        let powers = eigenvalue_powers(lambda, self.degree());
        let mut concat = Vec::with_capacity(self.filters.len() * n);
        let mut caches = Vec::with_capacity(self.filters.len());
        for filter in &self.filters {
            let hidden = tanh(&filter.hidden.forward(lambda)?);
            let coeffs = filter.output.forward(&hidden)?;
            let response = polynomial_response(&coeffs, &powers, n);
            concat.extend(response.iter().zip(&s_hat).map(|(g, s)| g * s));
            caches.push(FilterCache { hidden });
        }
        let out = self.readout.forward(&concat)?;
        Ok((
            out,
            GcnnCache {
                s_hat,
                powers,
                filters: caches,
                concat,
            },
        ))
    }

    fn backward(&mut self, spectrum: &Spectrum, cache: &GcnnCache, dy: &[f64]) {
        let lambda = &spectrum.eigenvalues;
        let n = lambda.len();
        let k1 = self.degree() + 1;
        let d_concat = self.readout.backward(&cache.concat, dy);
        for (f, filter) in self.filters.iter_mut().enumerate() {
            let dz = &d_concat[f * n..(f + 1) * n];
            let mut d_coeffs = vec![0.0; k1];
            for (i, (&dzi, &sh)) in dz.iter().zip(&cache.s_hat).enumerate() {
                let dg = dzi * sh;
                for (k, dc) in d_coeffs.iter_mut().enumerate() {
                    *dc += dg * cache.powers[i * k1 + k];
                }
            }
            let fc = &cache.filters[f];
            let d_hidden = filter.output.backward(&fc.hidden, &d_coeffs);
            let d_pre = tanh_backward(&fc.hidden, &d_hidden);
            filter.hidden.backward(lambda, &d_pre);
        }
    }

    fn params(&self) -> Vec<&Param> {
        let mut out: Vec<&Param> = Vec::new();
        for f in &self.filters {
            out.extend(f.hidden.params());
            out.extend(f.output.params());
        }
        out.extend(self.readout.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let Gcnn { filters, readout } = self;
        let mut out: Vec<&mut Param> = Vec::new();
        for f in filters.iter_mut() {
            let CoefficientMlp { hidden, output } = f;
            out.extend(hidden.params_mut());
            out.extend(output.params_mut());
        }
        out.extend(readout.params_mut());
        out
    }
}

/// `powers[i * (K+1) + k] = λ_i^k`.
fn eigenvalue_powers(lambda: &[f64], degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(lambda.len() * (degree + 1));
    for &l in lambda {
        let mut p = 1.0;
        for _ in 0..=degree {
            out.push(p);
            p *= l;
        }
    }
    out
}

fn polynomial_response(coeffs: &[f64], powers: &[f64], n: usize) -> Vec<f64> {
    let k1 = coeffs.len();
    (0..n)
        .map(|i| coeffs.iter().zip(&powers[i * k1..(i + 1) * k1]).map(|(h, p)| h * p).sum())
        .collect()
}

/// Coefficients `h_0..h_K` of every filter, one row per filter.
pub fn spectral_filter_bank(eigenvalues: &[f64], module: &Gcnn) -> Result<Vec<Vec<f64>>> {
    module
        .filters
        .iter()
        .map(|f| f.output.forward(&tanh(&f.hidden.forward(eigenvalues)?)))
        .collect()
}

/// `out_i = (Σ_k h_k λ_i^k) · ŝ_i`.
pub fn apply_spectral_filter(coeffs: &[f64], eigenvalues: &[f64], s_hat: &[f64]) -> Result<Vec<f64>> {
    if eigenvalues.len() != s_hat.len() || coeffs.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} eigenvalues, {} spectral coefficients, {} filter taps",
            eigenvalues.len(),
            s_hat.len(),
            coeffs.len()
        )));
    }
    let powers = eigenvalue_powers(eigenvalues, coeffs.len() - 1);
    let g = polynomial_response(coeffs, &powers, eigenvalues.len());
    Ok(g.iter().zip(s_hat).map(|(g, s)| g * s).collect())
}

/// Visit counts → GFT → filter bank → concatenation → linear readout.
pub fn forward_gcnn(visits: &[f64], spectrum: &Spectrum, module: &Gcnn) -> Result<Vec<f64>> {
    module.forward_cached(visits, spectrum).map(|(out, _)| out)
}

// ---------------------------------------------------------------- CNN

/// Feature convolution gated by a one-channel attention convolution, pooled
/// over time by the attention-weighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Cnn {
    pub feature: Conv1d,
    pub attention: Conv1d,
    pub readout: Linear,
}

/// Intermediate activations of the CNN for one series.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnActivations {
    /// `[C, N]` sigmoid feature maps.
    pub features: Vec<f64>,
    /// `[N]` sigmoid attention weights.
    pub attention: Vec<f64>,
    pub channels: usize,
    pub len: usize,
}

impl CnnActivations {
    pub fn feature(&self, c: usize) -> &[f64] {
        &self.features[c * self.len..(c + 1) * self.len]
    }
}

struct CnnCache {
    acts: CnnActivations,
    pooled: Vec<f64>,
    denom: f64,
}

impl Cnn {
    fn new(init: &mut Initializer, cfg: &CompSnnConfig, name: &str) -> Self {
        Cnn {
            feature: Conv1d::new(init, &format!("{name}.feature"), FEATURE_CHANNELS, cfg.cnn_channels, cfg.cnn_kernel),
            attention: Conv1d::new(init, &format!("{name}.attention"), FEATURE_CHANNELS, 1, cfg.cnn_kernel),
            readout: Linear::new(init, &format!("{name}.readout"), cfg.cnn_channels, cfg.module_out),
        }
    }

    pub fn activations(&self, series: &Tensor) -> Result<CnnActivations> {
        let features = sigmoid(self.feature.forward(series)?.data());
        let attention = sigmoid(self.attention.forward(series)?.data());
        let len = series.shape()[1];
        Ok(CnnActivations {
            channels: self.feature.out_channels(),
            len,
            features,
            attention,
        })
    }

    fn forward_cached(&self, series: &Tensor) -> Result<(Vec<f64>, CnnCache)> {
        if series.shape().len() != 2 || series.shape()[0] != FEATURE_CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "CNN expects [{FEATURE_CHANNELS}, N] input, got {:?}",
                series.shape()
            )));
        }
        let acts = self.activations(series)?;
        let denom = acts.attention.iter().sum::<f64>() + ATTENTION_EPS;
        let pooled: Vec<f64> = (0..acts.channels)
            .map(|c| acts.feature(c).iter().zip(&acts.attention).map(|(f, a)| f * a).sum::<f64>() / denom)
            .collect();
        let out = self.readout.forward(&pooled)?;
        Ok((out, CnnCache { acts, pooled, denom }))
    }

    fn backward(&mut self, series: &Tensor, cache: &CnnCache, dy: &[f64]) -> Result<()> {
        let acts = &cache.acts;
        let n = acts.len;
        let d_pooled = self.readout.backward(&cache.pooled, dy);
        let mut d_feat = vec![0.0; acts.channels * n];
        let mut d_att = vec![0.0; n];
        for c in 0..acts.channels {
            let g = d_pooled[c] / cache.denom;
            let fc = acts.feature(c);
            for t in 0..n {
                d_feat[c * n + t] = g * acts.attention[t];
                d_att[t] += g * (fc[t] - cache.pooled[c]);
            }
        }
        let dz_feat = sigmoid_backward(&acts.features, &d_feat);
        let dz_att = sigmoid_backward(&acts.attention, &d_att);
        self.feature.backward(series, &dz_feat)?;
        self.attention.backward(series, &dz_att)?;
        Ok(())
    }

    fn params(&self) -> Vec<&Param> {
        [self.feature.params(), self.attention.params(), self.readout.params()].concat()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let Cnn {
            feature,
            attention,
            readout,
        } = self;
        feature
            .params_mut()
            .into_iter()
            .chain(attention.params_mut())
            .chain(readout.params_mut())
            .collect()
    }
}

/// Attention-pooled CNN embedding of a `[10, N]` series.
pub fn forward_cnn(series: &Tensor, module: &Cnn) -> Result<Vec<f64>> {
    module.forward_cached(series).map(|(out, _)| out)
}

// ---------------------------------------------------------------- full model

/// `48 → hidden → |u|` with ReLU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregator {
    pub hidden: Linear,
    pub output: Linear,
}

/// All learnable weights of a CompSNN or a SingleNN.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub config: CompSnnConfig,
    pub graph_mlp: Option<GraphMlp>,
    pub gcnn: Option<Gcnn>,
    pub cnn: Option<Cnn>,
    pub aggregator: Option<Aggregator>,
    /// `16 → |u|` readout of a SingleNN.
    pub head: Option<Linear>,
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardPass {
    pub prediction: Vec<f64>,
    graph: Option<GraphMlpCache>,
    gcnn: Option<GcnnCache>,
    cnn: Option<CnnCache>,
    merged: Vec<f64>,
    agg_pre: Vec<f64>,
    agg_act: Vec<f64>,
}

impl ModelParams {
    /// Glorot-initialised parameters, a pure function of `(kind, config, seed)`.
    pub fn new(kind: ModelKind, config: CompSnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Initializer::new(seed);
        let uses = |k: ModelKind| kind == ModelKind::CompSnn || kind == k;
        let graph_mlp = uses(ModelKind::Mlp).then(|| GraphMlp::new(&mut init, &config, "graph_mlp"));
        let gcnn = uses(ModelKind::Gcnn).then(|| Gcnn::new(&mut init, &config, "gcnn"));
        let cnn = uses(ModelKind::Cnn).then(|| Cnn::new(&mut init, &config, "cnn"));
        let (aggregator, head) = if kind == ModelKind::CompSnn {
            let agg = Aggregator {
                hidden: Linear::new(&mut init, "aggregator.hidden", 3 * config.module_out, config.aggregator_hidden),
                output: Linear::new(&mut init, "aggregator.output", config.aggregator_hidden, config.demographic_dim),
            };
            (Some(agg), None)
        } else {
            (
                None,
                Some(Linear::new(&mut init, "head", config.module_out, config.demographic_dim)),
            )
        };
        Ok(ModelParams {
            kind,
            config,
            graph_mlp,
            gcnn,
            cnn,
            aggregator,
            head,
        })
    }

    pub fn forward(&self, input: &ModelInput, spectrum: &Spectrum) -> Result<Vec<f64>> {
        self.forward_pass(input, spectrum).map(|p| p.prediction)
    }

    pub fn forward_pass(&self, input: &ModelInput, spectrum: &Spectrum) -> Result<ForwardPass> {
        let mut merged = Vec::with_capacity(3 * self.config.module_out);
        let graph = match &self.graph_mlp {
            Some(m) => {
                let (out, cache) = m.forward_cached(&input.node_signal)?;
                merged.extend(out);
                Some(cache)
            }
            None => None,
        };
        let gcnn = match &self.gcnn {
            Some(m) => {
                let (out, cache) = m.forward_cached(&input.visits, spectrum)?;
                merged.extend(out);
                Some(cache)
            }
            None => None,
        };
        let cnn = match &self.cnn {
            Some(m) => {
                let (out, cache) = m.forward_cached(&input.series)?;
                merged.extend(out);
                Some(cache)
            }
            None => None,
        };
        let (agg_pre, agg_act, logits) = match (&self.aggregator, &self.head) {
            (Some(agg), _) => {
                let pre = agg.hidden.forward(&merged)?;
                let act = relu(&pre);
                let logits = agg.output.forward(&act)?;
                (pre, act, logits)
            }
            (None, Some(head)) => (Vec::new(), Vec::new(), head.forward(&merged)?),
            (None, None) => return Err(Error::InvalidArgument("model has no output layer".into())),
        };
        Ok(ForwardPass {
            prediction: sigmoid(&logits),
            graph,
            gcnn,
            cnn,
            merged,
            agg_pre,
            agg_act,
        })
    }

    /// Accumulates `d loss / d params` given `d loss / d prediction`.
    pub fn backward(&mut self, input: &ModelInput, spectrum: &Spectrum, pass: &ForwardPass, d_pred: &[f64]) -> Result<()> {
        let d_logits = sigmoid_backward(&pass.prediction, d_pred);
        let d_merged = match (&mut self.aggregator, &mut self.head) {
            (Some(agg), _) => {
                let d_act = agg.output.backward(&pass.agg_act, &d_logits);
                let d_pre = relu_backward(&pass.agg_pre, &d_act);
                agg.hidden.backward(&pass.merged, &d_pre)
            }
            (None, Some(head)) => head.backward(&pass.merged, &d_logits),
            (None, None) => return Err(Error::InvalidArgument("model has no output layer".into())),
        };
        let width = self.config.module_out;
        let mut chunks = d_merged.chunks_exact(width);
        if let (Some(m), Some(cache)) = (&mut self.graph_mlp, &pass.graph) {
            m.backward(&input.node_signal, cache, chunks.next().expect("graph chunk"));
        }
        if let (Some(m), Some(cache)) = (&mut self.gcnn, &pass.gcnn) {
            m.backward(spectrum, cache, chunks.next().expect("gcnn chunk"));
        }
        if let (Some(m), Some(cache)) = (&mut self.cnn, &pass.cnn) {
            m.backward(&input.series, cache, chunks.next().expect("cnn chunk"))?;
        }
        Ok(())
    }

    /// Forward, loss against `target`, and gradient accumulation scaled by `weight`.
    pub fn accumulate_loss(&mut self, input: &ModelInput, spectrum: &Spectrum, target: &[f64], weight: f64) -> Result<f64> {
        let pass = self.forward_pass(input, spectrum)?;
        let (value, grad) = loss(&pass.prediction, target, &self.config.epsilon)?;
        let scaled: Vec<f64> = grad.iter().map(|g| g * weight).collect();
        self.backward(input, spectrum, &pass, &scaled)?;
        Ok(value)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        if let Some(m) = &self.graph_mlp {
            out.extend(m.params());
        }
        if let Some(m) = &self.gcnn {
            out.extend(m.params());
        }
        if let Some(m) = &self.cnn {
            out.extend(m.params());
        }
        if let Some(a) = &self.aggregator {
            out.extend(a.hidden.params());
            out.extend(a.output.params());
        }
        if let Some(h) = &self.head {
            out.extend(h.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let ModelParams {
            graph_mlp,
            gcnn,
            cnn,
            aggregator,
            head,
            ..
        } = self;
        let mut out: Vec<&mut Param> = Vec::new();
        if let Some(m) = graph_mlp {
            out.extend(m.params_mut());
        }
        if let Some(m) = gcnn {
            out.extend(m.params_mut());
        }
        if let Some(m) = cnn {
            out.extend(m.params_mut());
        }
        if let Some(a) = aggregator {
            let Aggregator { hidden, output } = a;
            out.extend(hidden.params_mut());
            out.extend(output.params_mut());
        }
        if let Some(h) = head {
            out.extend(h.params_mut());
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.grad.data().iter().copied()).collect()
    }

    pub fn set_flat_values(&mut self, values: &[f64]) -> Result<()> {
        let total = self.parameter_count();
        if values.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                actual: values.len(),
            });
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Checkpoint document; values are written as shortest round-trip decimals.
    pub fn to_checkpoint_json(&self, seed: u64, epoch: usize) -> String {
        let params = self
            .params()
            .into_iter()
            .map(|p| {
                (
                    p.name.clone(),
                    ParamRecord {
                        shape: p.value.shape().to_vec(),
                        values: p.value.data().iter().map(|v| format!("{v:?}")).collect(),
                    },
                )
            })
            .collect();
        let doc = CheckpointDocument {
            kind: self.kind,
            config: self.config.clone(),
            seed,
            epoch,
            params,
        };
        serde_json::to_string_pretty(&doc).expect("checkpoint serializes")
    }

    /// Restores parameters from a checkpoint, returning `(params, seed, epoch)`.
    pub fn from_checkpoint_json(text: &str) -> Result<(ModelParams, u64, usize)> {
        let doc: CheckpointDocument = serde_json::from_str(text)?;
        let mut model = ModelParams::new(doc.kind, doc.config, 0)?;
        let expected: Vec<String> = model.params().iter().map(|p| p.name.clone()).collect();
        if doc.params.len() != expected.len() || expected.iter().any(|n| !doc.params.contains_key(n)) {
            return Err(Error::Parse("checkpoint parameter names do not match the model".into()));
        }
        for p in model.params_mut() {
            let record = &doc.params[&p.name];
            if record.shape != p.value.shape() || record.values.len() != p.value.len() {
                return Err(Error::Parse(format!("parameter `{}` has the wrong shape", p.name)));
            }
            for (dst, s) in p.value.data_mut().iter_mut().zip(&record.values) {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::Parse(format!("parameter `{}`: bad number `{s}`", p.name)))?;
                if !v.is_finite() {
                    return Err(Error::Parse(format!("parameter `{}`: non-finite value", p.name)));
                }
                *dst = v;
            }
        }
        Ok((model, doc.seed, doc.epoch))
    }
}

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    shape: Vec<usize>,
    values: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDocument {
    kind: ModelKind,
    config: CompSnnConfig,
    seed: u64,
    epoch: usize,
    params: BTreeMap<String, ParamRecord>,
}

/// Prediction of the full composite model.
pub fn forward_compsnn(input: &ModelInput, spectrum: &Spectrum, params: &ModelParams) -> Result<Vec<f64>> {
    if params.kind != ModelKind::CompSnn {
        return Err(Error::UnknownKind(params.kind.to_string()));
    }
    params.forward(input, spectrum)
}

/// Prediction of a single-module baseline.
pub fn forward_singlenn(input: &ModelInput, spectrum: &Spectrum, params: &ModelParams) -> Result<Vec<f64>> {
    if params.kind == ModelKind::CompSnn {
        return Err(Error::UnknownKind(params.kind.to_string()));
    }
    params.forward(input, spectrum)
}
