use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use compsnn::demographics::DemographicSchema;
use compsnn::experiment::{compare_models, evaluate, history_csv, prepare, train, ModelLosses, PreparedData, TrainConfig};
use compsnn::explain::{export_activation_map, render_svg, ActivationKind, MapStyle};
use compsnn::io::{align_demographics, read_demographics, read_trajectories, write_demographics, write_trajectories};
use compsnn::model::{ModelKind, ModelParams};
use compsnn::synth::{generate_synthetic_dataset, synthetic_schema, SyntheticWorld};
use compsnn::verify::gradient_suite;

use crate::config::Settings;

pub const TRAJECTORIES: &str = "trajectories.csv";
pub const DEMOGRAPHICS: &str = "demographics.csv";
pub const SCHEMA: &str = "schema.json";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

pub fn synth(s: &Settings) -> Result<()> {
    let e = &s.experiment;
    let records = generate_synthetic_dataset(e.seed, e.n_traj, &SyntheticWorld::default())?;
    let schema = synthetic_schema();
    let trajs: Vec<_> = records.iter().map(|r| r.trajectory.clone()).collect();
    let rows: Vec<_> = records.iter().map(|r| (r.trajectory.id.clone(), r.raw_values())).collect();
    let mut traj_csv = Vec::new();
    write_trajectories(&mut traj_csv, &trajs)?;
    let mut demo_csv = Vec::new();
    write_demographics(&mut demo_csv, &schema, &rows)?;
    write(&s.data_dir.join(TRAJECTORIES), traj_csv)?;
    write(&s.data_dir.join(DEMOGRAPHICS), demo_csv)?;
    write(&s.data_dir.join(SCHEMA), schema.to_json())?;
    println!("wrote {} trajectories to {}", records.len(), s.data_dir.display());
    Ok(())
}

fn load(s: &Settings) -> Result<PreparedData> {
    let schema_text =
        fs::read_to_string(s.data_dir.join(SCHEMA)).with_context(|| format!("reading {}", s.data_dir.join(SCHEMA).display()))?;
    let schema = DemographicSchema::from_json(&schema_text)?;
    let trajs = read_trajectories(open(&s.data_dir.join(TRAJECTORIES))?)?;
    let records = read_demographics(open(&s.data_dir.join(DEMOGRAPHICS))?, &schema)?;
    let demos = align_demographics(&trajs, &records)?;
    Ok(prepare(&trajs, &demos, &s.experiment)?)
}

pub fn graph(s: &Settings) -> Result<()> {
    let data = load(s)?;
    let out = &s.out_dir;
    write(&out.join("grid.json"), data.grid.to_json())?;
    write(&out.join("labels.json"), data.labels.to_json())?;
    write(&out.join("graph.json"), data.graph.to_json())?;
    write(&out.join("spectrum.bin"), data.spectrum.encode())?;
    write(&out.join("segmentation.svg"), data.labels.to_svg(8.0))?;
    println!(
        "grid {}x{} cells of {}, {} nodes, {} edges",
        data.grid.rows(),
        data.grid.cols(),
        data.grid.cell_size,
        data.node_count(),
        data.graph.edge_count()
    );
    Ok(())
}

fn checkpoint_path(s: &Settings, kind: ModelKind) -> std::path::PathBuf {
    s.out_dir.join("checkpoints").join(format!("{kind}.json"))
}

pub fn train_models(s: &Settings) -> Result<()> {
    let data = load(s)?;
    let model_cfg = data.model_config(&s.experiment);
    let tcfg = TrainConfig::from(&s.experiment);
    let mut outcomes = Vec::new();
    for kind in s.kinds()? {
        let o = train(kind, &data.train, &data.val, &data.spectrum, &model_cfg, &tcfg)?;
        println!(
            "{kind}: best epoch {} val loss {:.4}",
            o.best_epoch, o.history.val_loss[o.best_epoch]
        );
        write(&checkpoint_path(s, kind), o.params.to_checkpoint_json(o.seed, o.best_epoch))?;
        outcomes.push(o);
    }
    write(&s.out_dir.join("history.csv"), history_csv(&outcomes.iter().collect::<Vec<_>>()))?;
    write(&s.out_dir.join("config.json"), serde_json::to_string_pretty(&s.experiment)?)?;
    Ok(())
}

fn load_checkpoint(s: &Settings, kind: ModelKind, data: &PreparedData) -> Result<ModelParams> {
    let path = checkpoint_path(s, kind);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let (params, _, _) = ModelParams::from_checkpoint_json(&text).with_context(|| format!("loading {}", path.display()))?;
    if params.kind != kind {
        bail!("{} holds a {} model", path.display(), params.kind);
    }
    if params.config.node_count != data.node_count() || params.config.epsilon != data.epsilon {
        bail!("{} was trained on a different graph or dataset", path.display());
    }
    Ok(params)
}

pub fn eval(s: &Settings) -> Result<()> {
    let data = load(s)?;
    let ids: Vec<String> = data.val.iter().map(|e| e.id.clone()).collect();
    let mut losses = Vec::new();
    for kind in s.kinds()? {
        let params = load_checkpoint(s, kind, &data)?;
        losses.push(ModelLosses {
            model: kind.to_string(),
            ids: ids.clone(),
            losses: evaluate(&params, &data.val, &data.spectrum)?,
        });
    }
    let report = compare_models(&losses)?;
    for m in &report.models {
        println!("{}: mean {:.4} [{:.4}, {:.4}]", m.model, m.mean, m.ci_low, m.ci_high);
    }
    write(&s.out_dir.join("summary.csv"), report.summary_csv())?;
    write(&s.out_dir.join("correlations.csv"), report.correlations_csv())?;
    write(&s.out_dir.join("histogram.csv"), report.histogram_csv())?;
    write(&s.out_dir.join("losses.csv"), report.losses_csv())?;
    Ok(())
}

pub fn explain(s: &Settings) -> Result<()> {
    let data = load(s)?;
    let kinds: Vec<ModelKind> = s
        .kinds()?
        .into_iter()
        .filter(|k| matches!(k, ModelKind::CompSnn | ModelKind::Cnn))
        .collect();
    if kinds.is_empty() {
        bail!("only compsnn and cnn models have activation maps");
    }
    let ids = if s.traj_ids.is_empty() {
        vec![data.val[0].id.clone()]
    } else {
        s.traj_ids.clone()
    };
    let style = MapStyle::default();
    for kind in kinds {
        let params = load_checkpoint(s, kind, &data)?;
        let channels = params.config.cnn_channels;
        let mut activations = vec![ActivationKind::Attention];
        activations.extend((0..channels).map(ActivationKind::Feature));
        activations.extend((0..channels).map(ActivationKind::AttentionTimesFeature));
        for id in &ids {
            let rep = data.representation(id).with_context(|| format!("unknown trajectory `{id}`"))?;
            let input = data.scaler.apply(rep)?;
            let dir = s.out_dir.join("explain").join(kind.to_string());
            for &a in &activations {
                let map = export_activation_map(&params, &input, &rep.features, a)?;
                write(&dir.join(format!("{id}_{a}.svg")), render_svg(&map, &data.grid, &style)?)?;
                write(&dir.join(format!("{id}_{a}.csv")), map.to_csv())?;
            }
        }
    }
    println!("wrote activation maps to {}", s.out_dir.join("explain").display());
    Ok(())
}

/// Returns whether every check passed.
pub fn gradcheck(s: &Settings) -> Result<bool> {
    let checks = gradient_suite(s.experiment.seed)?;
    let mut worst = 0.0f64;
    for c in &checks {
        println!(
            "{:<16} {:>5} params  max rel error {:.3e}",
            c.name, c.parameters, c.max_relative_error
        );
        worst = worst.max(c.max_relative_error);
    }
    println!("max relative error {worst:.3e}");
    Ok(worst < 1e-4)
}
