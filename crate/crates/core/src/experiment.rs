//! End-to-end pipeline: dataset preparation, seeded SGD training, per-sample
//! evaluation and the cross-model comparison report.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::demographics::DemographicVector;
use crate::density::{build_density_grid, default_cell_size, segment, DensityGrid, SegmentLabels};
use crate::error::{Error, Result};
use crate::features::{compute_feature_series, validate_trajectory, FeatureConfig, FeatureSeries, RawTrajectory, FEATURE_CHANNELS};
use crate::graph::{
    aggregate_node_signal, build_graph, eigendecompose, laplacian, segment_centroids, LaplacianKind, NodeLookup, Spectrum, TrajectoryGraph,
    VisitSignal, NODE_FEATURES,
};
use crate::loss::{epsilon_from_targets, loss_value};
use crate::model::{CompSnnConfig, ModelInput, ModelKind, ModelParams};
use crate::nn::{sgd_step, Tensor};

/// Every knob of a pipeline run. Serialized as the CLI config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_traj: usize,
    pub val_fraction: f64,
    /// Grid cell size in map units; derived from `grid_target` when absent.
    pub cell_size: Option<f64>,
    pub grid_target: usize,
    pub min_separation: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub filters: usize,
    pub degree: usize,
    pub epsilon_floor: f64,
    pub features: FeatureConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            n_traj: 200,
            val_fraction: 0.2,
            cell_size: None,
            grid_target: 100,
            min_separation: 3,
            epochs: 100,
            lr: 0.05,
            batch: 16,
            filters: 4,
            degree: 5,
            epsilon_floor: 1e-3,
            features: FeatureConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!("val_fraction {} outside (0, 1)", self.val_fraction)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and non-negative",
                self.lr
            )));
        }
        if let Some(c) = self.cell_size {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidCellSize(c));
            }
        }
        if !(self.epsilon_floor > 0.0) {
            return Err(Error::InvalidArgument("epsilon_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Seeded train/validation split. Both index lists are ascending.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cannot split {n} trajectories")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut Xoshiro256PlusPlus::seed_from_u64(seed));
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

/// Per-trajectory representations before scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub id: String,
    /// Validated trajectory the features were computed from.
    pub trajectory: RawTrajectory,
    pub features: FeatureSeries,
    pub node_sequence: Vec<usize>,
    pub node_signal: Vec<f64>,
    pub visits: Vec<f64>,
}

/// Standardization fitted on the training split.
///
/// Feature channels are centred and scaled. Node signal columns and visit
/// counts are only scaled, so unvisited nodes stay exactly zero. The
/// flattened node signal gets unit Euclidean norm on average. The visit
/// vector gets norm `2^-degree`, which offsets the largest `λ^k` factor a
/// degree-`degree` spectral filter can apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub node_scale: Vec<f64>,
    pub visit_scale: f64,
}

fn positive_or_one(v: f64) -> f64 {
    if v > 1e-12 && v.is_finite() {
        v
    } else {
        1.0
    }
}

impl InputScaler {
    pub fn fit(reps: &[&Representation], degree: usize) -> Self {
        let mut sum = [0.0; FEATURE_CHANNELS];
        let mut sq = [0.0; FEATURE_CHANNELS];
        let mut count = 0.0;
        for r in reps {
            for c in 0..FEATURE_CHANNELS {
                for &v in r.features.channel(c) {
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
            count += r.features.len() as f64;
        }
        let count = count.max(1.0);
        let feature_mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let feature_scale = sq
            .iter()
            .zip(&feature_mean)
            .map(|(q, m)| positive_or_one((q / count - m * m).max(0.0).sqrt()))
            .collect();

        let mut node_sq = [0.0; NODE_FEATURES];
        let mut visited_rows = 0.0f64;
        let mut visit_sq = 0.0;
        for r in reps {
            for (row, &v) in r.node_signal.chunks_exact(NODE_FEATURES).zip(&r.visits) {
                if v > 0.0 {
                    visited_rows += 1.0;
                    row.iter().zip(node_sq.iter_mut()).for_each(|(x, s)| *s += x * x);
                    visit_sq += v * v;
                }
            }
        }
        let visit_n = reps.len().max(1) as f64;
        let rows_per_sample = visited_rows / reps.len().max(1) as f64;
        let norm = (rows_per_sample * NODE_FEATURES as f64).max(1.0).sqrt();
        let node_scale = node_sq
            .iter()
            .map(|s| positive_or_one((s / visited_rows.max(1.0)).sqrt()) * norm)
            .collect();
        InputScaler {
            feature_mean,
            feature_scale,
            node_scale,
            visit_scale: positive_or_one((visit_sq / visit_n.max(1.0)).sqrt()) * 2f64.powi(degree as i32),
        }
    }

    pub fn apply(&self, rep: &Representation) -> Result<ModelInput> {
        let n = rep.features.len();
        let mut series = Vec::with_capacity(FEATURE_CHANNELS * n);
        for c in 0..FEATURE_CHANNELS {
            let (m, s) = (self.feature_mean[c], self.feature_scale[c]);
            series.extend(rep.features.channel(c).iter().map(|v| (v - m) / s));
        }
        let node_signal = rep
            .node_signal
            .iter()
            .enumerate()
            .map(|(i, v)| v / self.node_scale[i % NODE_FEATURES])
            .collect();
        Ok(ModelInput {
            node_signal,
            visits: rep.visits.iter().map(|v| v / self.visit_scale).collect(),
            series: Tensor::new(vec![FEATURE_CHANNELS, n], series)?,
        })
    }
}

/// One scaled trajectory with its demographic target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub input: ModelInput,
    pub target: [f64; 8],
}

/// Everything derived from the data before any model is trained.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub grid: DensityGrid,
    pub labels: SegmentLabels,
    pub graph: TrajectoryGraph,
    pub spectrum: Spectrum,
    pub scaler: InputScaler,
    pub epsilon: Vec<f64>,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    /// Unscaled representations, training split first, then validation.
    pub representations: Vec<Representation>,
}

impl PreparedData {
    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn model_config(&self, cfg: &ExperimentConfig) -> CompSnnConfig {
        let mut c = CompSnnConfig::new(self.node_count(), self.epsilon.clone());
        c.gcnn_filters = cfg.filters;
        c.gcnn_degree = cfg.degree;
        c
    }

    pub fn representation(&self, id: &str) -> Option<&Representation> {
        self.representations.iter().find(|r| r.id == id)
    }
}

/// Builds the grid, segmentation, graph and spectrum from the training split
/// and the scaled model inputs of both splits.
pub fn prepare(trajs: &[RawTrajectory], demographics: &[DemographicVector], cfg: &ExperimentConfig) -> Result<PreparedData> {
    cfg.validate()?;
    if trajs.len() != demographics.len() {
        return Err(Error::LengthMismatch {
            expected: trajs.len(),
            actual: demographics.len(),
        });
    }
    let cleaned = trajs.iter().map(|t| validate_trajectory(t.clone())).collect::<Result<Vec<_>>>()?;
    let (train_idx, val_idx) = split_indices(cleaned.len(), cfg.val_fraction, cfg.seed)?;
    let train_trajs: Vec<RawTrajectory> = train_idx.iter().map(|&i| cleaned[i].clone()).collect();

    let cell = cfg.cell_size.unwrap_or_else(|| default_cell_size(&train_trajs, cfg.grid_target));
    let grid = build_density_grid(&train_trajs, cell)?;
    let labels = segment(&grid, cfg.min_separation)?;
    let node_count = labels.segment_count();
    let lookup = NodeLookup::new(&labels);

    let order: Vec<usize> = train_idx.iter().chain(&val_idx).copied().collect();
    let mut sequences = Vec::with_capacity(order.len());
    for &i in &order {
        sequences.push(lookup.map_clamped(&cleaned[i], &grid)?);
    }
    let graph = build_graph(&sequences[..train_idx.len()], node_count, segment_centroids(&labels, &grid))?;
    let spectrum = eigendecompose(&laplacian(&graph, LaplacianKind::Normalized))?;

    let mut representations = Vec::with_capacity(order.len());
    for (&i, seq) in order.iter().zip(sequences) {
        let features = compute_feature_series(&cleaned[i], &cfg.features)?;
        let signal = aggregate_node_signal(&features, &seq, node_count)?;
        let visits = VisitSignal::from_sequence(&seq, node_count)?.as_reals();
        representations.push(Representation {
            id: cleaned[i].id.clone(),
            trajectory: cleaned[i].clone(),
            features,
            node_sequence: seq,
            node_signal: signal.values,
            visits,
        });
    }
    let scaler = InputScaler::fit(&representations[..train_idx.len()].iter().collect::<Vec<_>>(), cfg.degree);
    let targets: Vec<[f64; 8]> = train_idx.iter().map(|&i| demographics[i].0).collect();
    let epsilon = epsilon_from_targets(&targets, cfg.epsilon_floor);

    let mut examples = Vec::with_capacity(order.len());
    for (&i, rep) in order.iter().zip(&representations) {
        examples.push(Example {
            id: rep.id.clone(),
            input: scaler.apply(rep)?,
            target: demographics[i].0,
        });
    }
    let val = examples.split_off(train_idx.len());
    Ok(PreparedData {
        grid,
        labels,
        graph,
        spectrum,
        scaler,
        epsilon,
        train: examples,
        val,
        representations,
    })
}

/// Mean losses per epoch; index 0 is the untrained model.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

impl History {
    /// Epoch with the minimum validation loss (first one on ties).
    pub fn best_epoch(&self) -> usize {
        self.val_loss
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (e, &v)| if v < best.1 { (e, v) } else { best })
            .0
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub kind: ModelKind,
    /// Parameters at the best validation epoch.
    pub params: ModelParams,
    pub history: History,
    pub best_epoch: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl From<&ExperimentConfig> for TrainConfig {
    fn from(c: &ExperimentConfig) -> Self {
        TrainConfig {
            epochs: c.epochs,
            lr: c.lr,
            batch: c.batch,
            seed: c.seed,
        }
    }
}

/// Seed used for a model's initialization and shuffling.
pub fn model_seed(seed: u64, kind: ModelKind) -> u64 {
    let k = ModelKind::ALL.iter().position(|&m| m == kind).expect("listed kind") as u64;
    seed ^ (k + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Per-sample losses in input order.
pub fn evaluate(params: &ModelParams, examples: &[Example], spectrum: &Spectrum) -> Result<Vec<f64>> {
    examples
        .iter()
        .map(|ex| {
            let x = params.forward(&ex.input, spectrum)?;
            loss_value(&x, &ex.target, &params.config.epsilon)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Minibatch SGD from a fresh initialization; returns the best-epoch model.
pub fn train(
    kind: ModelKind,
    train_set: &[Example],
    val_set: &[Example],
    spectrum: &Spectrum,
    model_cfg: &CompSnnConfig,
    tcfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_from(
        ModelParams::new(kind, model_cfg.clone(), model_seed(tcfg.seed, kind))?,
        train_set,
        val_set,
        spectrum,
        tcfg,
    )
}

/// Minibatch SGD starting from `params`.
pub fn train_from(
    mut params: ModelParams,
    train_set: &[Example],
    val_set: &[Example],
    spectrum: &Spectrum,
    tcfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let kind = params.kind;
    let seed = model_seed(tcfg.seed, kind);
    let batch = tcfg.batch.max(1);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x5DEE_CE66_D1CE_5EED);
    let monitor = if val_set.is_empty() { train_set } else { val_set };

    let initial_train = mean(&evaluate(&params, train_set, spectrum)?);
    let initial_val = mean(&evaluate(&params, monitor, spectrum)?);
    if !initial_train.is_finite() || !initial_val.is_finite() {
        return Err(Error::DivergedLoss { epoch: 0 });
    }
    let mut history = History {
        train_loss: vec![initial_train],
        val_loss: vec![initial_val],
    };
    let mut best = (0, initial_val, params.clone());
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=tcfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            params.zero_grad();
            let weight = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let ex = &train_set[i];
                let l = params.accumulate_loss(&ex.input, spectrum, &ex.target, weight)?;
                if !l.is_finite() {
                    return Err(Error::DivergedLoss { epoch });
                }
                total += l;
            }
            sgd_step(params.params_mut(), tcfg.lr).map_err(|_| Error::DivergedLoss { epoch })?;
        }
        let val = mean(&evaluate(&params, monitor, spectrum)?);
        if !val.is_finite() {
            return Err(Error::DivergedLoss { epoch });
        }
        history.train_loss.push(total / train_set.len() as f64);
        history.val_loss.push(val);
        if val < best.1 {
            best = (epoch, val, params.clone());
        }
    }
    Ok(TrainOutcome {
        kind,
        params: best.2,
        history,
        best_epoch: best.0,
        seed,
    })
}

// ---------------------------------------------------------------- comparison

pub const HISTOGRAM_BINS: usize = 30;

/// Per-sample losses of one model on a fixed sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelLosses {
    pub model: String,
    pub ids: Vec<String>,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub model: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub histogram: Vec<usize>,
}

/// Means, confidence intervals, histograms and loss correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub models: Vec<ModelSummary>,
    /// Upper edge of the last histogram bin; bins split `[0, histogram_max]` evenly.
    pub histogram_max: f64,
    /// `None` when either loss vector has zero variance.
    pub correlations: Vec<Vec<Option<f64>>>,
    pub losses: Vec<ModelLosses>,
}

/// Sample Pearson correlation; `None` for zero variance or length below 2.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean and `mean ± 1.96 · s / √n` with the sample standard deviation.
pub fn mean_ci(v: &[f64]) -> (f64, f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, m, m);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let half = 1.96 * var.sqrt() / (v.len() as f64).sqrt();
    (m, m - half, m + half)
}

fn histogram(v: &[f64], max: f64) -> Vec<usize> {
    let mut bins = vec![0; HISTOGRAM_BINS];
    for &x in v {
        let b = if max > 0.0 {
            ((x / max) * HISTOGRAM_BINS as f64).floor() as usize
        } else {
            0
        };
        bins[b.min(HISTOGRAM_BINS - 1)] += 1;
    }
    bins
}

pub fn compare_models(reports: &[ModelLosses]) -> Result<EvalReport> {
    let first = reports.first().ok_or(Error::EmptyInput("model reports"))?;
    if reports.iter().any(|r| r.ids != first.ids || r.losses.len() != first.ids.len()) {
        return Err(Error::OrderMismatch);
    }
    let histogram_max = reports.iter().flat_map(|r| r.losses.iter().copied()).fold(0.0f64, f64::max);
    let models = reports
        .iter()
        .map(|r| {
            let (mean, ci_low, ci_high) = mean_ci(&r.losses);
            ModelSummary {
                model: r.model.clone(),
                mean,
                ci_low,
                ci_high,
                histogram: histogram(&r.losses, histogram_max),
            }
        })
        .collect();
    let correlations = reports
        .iter()
        .map(|a| reports.iter().map(|b| pearson(&a.losses, &b.losses)).collect())
        .collect();
    Ok(EvalReport {
        models,
        histogram_max,
        correlations,
        losses: reports.to_vec(),
    })
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

impl EvalReport {
    pub fn summary(&self, model: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.model == model)
    }

    pub fn correlation(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.models.iter().position(|m| m.model == a)?;
        let j = self.models.iter().position(|m| m.model == b)?;
        self.correlations[i][j]
    }

    pub fn summary_csv(&self) -> String {
        let mut rows = vec![vec!["model".into(), "mean".into(), "ci_low".into(), "ci_high".into()]];
        for m in &self.models {
            rows.push(vec![
                m.model.clone(),
                m.mean.to_string(),
                m.ci_low.to_string(),
                m.ci_high.to_string(),
            ]);
        }
        csv_string(rows)
    }

    pub fn correlations_csv(&self) -> String {
        let mut header = vec!["model".to_string()];
        header.extend(self.models.iter().map(|m| m.model.clone()));
        let mut rows = vec![header];
        for (m, row) in self.models.iter().zip(&self.correlations) {
            let mut r = vec![m.model.clone()];
            r.extend(row.iter().map(|c| c.map_or_else(|| "n/a".to_string(), |v| v.to_string())));
            rows.push(r);
        }
        csv_string(rows)
    }

    pub fn histogram_csv(&self) -> String {
        let mut rows = vec![vec!["model".into(), "bin_low".into(), "bin_high".into(), "count".into()]];
        let width = self.histogram_max / HISTOGRAM_BINS as f64;
        for m in &self.models {
            for (b, &count) in m.histogram.iter().enumerate() {
                rows.push(vec![
                    m.model.clone(),
                    (b as f64 * width).to_string(),
                    ((b + 1) as f64 * width).to_string(),
                    count.to_string(),
                ]);
            }
        }
        csv_string(rows)
    }

    /// One row per sample, one loss column per model.
    pub fn losses_csv(&self) -> String {
        let mut header = vec!["traj_id".to_string()];
        header.extend(self.losses.iter().map(|l| l.model.clone()));
        let mut rows = vec![header];
        if let Some(first) = self.losses.first() {
            for (i, id) in first.ids.iter().enumerate() {
                let mut r = vec![id.clone()];
                r.extend(self.losses.iter().map(|l| l.losses[i].to_string()));
                rows.push(r);
            }
        }
        csv_string(rows)
    }
}

/// `model,epoch,train_loss,val_loss` rows for every outcome.
pub fn history_csv(outcomes: &[&TrainOutcome]) -> String {
    let mut rows = vec![vec!["model".into(), "epoch".into(), "train_loss".into(), "val_loss".into()]];
    for o in outcomes {
        for (e, (t, v)) in o.history.train_loss.iter().zip(&o.history.val_loss).enumerate() {
            rows.push(vec![o.kind.to_string(), e.to_string(), t.to_string(), v.to_string()]);
        }
    }
    csv_string(rows)
}

/// Trains every requested kind and compares them on the validation split.
pub fn run_benchmark(data: &PreparedData, cfg: &ExperimentConfig, kinds: &[ModelKind]) -> Result<(Vec<TrainOutcome>, EvalReport)> {
    let model_cfg = data.model_config(cfg);
    let tcfg = TrainConfig::from(cfg);
    let ids: Vec<String> = data.val.iter().map(|e| e.id.clone()).collect();
    let mut outcomes = Vec::new();
    let mut losses = Vec::new();
    for &kind in kinds {
        let outcome = train(kind, &data.train, &data.val, &data.spectrum, &model_cfg, &tcfg)?;
        losses.push(ModelLosses {
            model: kind.to_string(),
            ids: ids.clone(),
            losses: evaluate(&outcome.params, &data.val, &data.spectrum)?,
        });
        outcomes.push(outcome);
    }
    Ok((outcomes, compare_models(&losses)?))
}
