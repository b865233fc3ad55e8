use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use compsnn::experiment::ExperimentConfig;
use compsnn::model::ModelKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "compsnn", version, about = "Composite signal neural network for trajectory analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset into the data directory.
    Synth,
    /// Build the density grid, segmentation, graph and spectrum.
    Graph,
    /// Train one or all model kinds and write checkpoints plus training history.
    Train,
    /// Evaluate trained checkpoints on the validation split.
    Eval,
    /// Export CNN activation maps for chosen trajectories.
    Explain,
    /// Run the gradient-check suite.
    Gradcheck,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cell_size: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    #[arg(long, global = true)]
    pub filters: Option<usize>,
    #[arg(long, global = true)]
    pub degree: Option<usize>,
    /// Number of synthetic trajectories.
    #[arg(long, global = true)]
    pub n_traj: Option<usize>,
    /// compsnn, cnn, gcnn, mlp or all.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Trajectory to explain; repeat for several.
    #[arg(long, global = true)]
    pub traj_id: Vec<String>,
}

/// A bad command line, as opposed to bad data or a bad config file.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Contents of the `--config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub model: String,
    pub traj_id: Vec<String>,
    pub experiment: ExperimentConfig,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            model: "all".into(),
            traj_id: Vec::new(),
            experiment: ExperimentConfig::default(),
        }
    }
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub model: String,
    pub traj_ids: Vec<String>,
    pub experiment: ExperimentConfig,
}

fn read_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

impl Settings {
    pub fn resolve(opts: &Options) -> Result<Self> {
        let file = match &opts.config {
            Some(p) => read_config(p)?,
            None => FileConfig::default(),
        };
        let mut e = file.experiment;
        if let Some(v) = opts.seed {
            e.seed = v;
        }
        if let Some(v) = opts.cell_size {
            e.cell_size = Some(v);
        }
        if let Some(v) = opts.epochs {
            e.epochs = v;
        }
        if let Some(v) = opts.lr {
            e.lr = v;
        }
        if let Some(v) = opts.batch {
            e.batch = v;
        }
        if let Some(v) = opts.filters {
            e.filters = v;
        }
        if let Some(v) = opts.degree {
            e.degree = v;
        }
        if let Some(v) = opts.n_traj {
            e.n_traj = v;
        }
        e.validate()?;
        let settings = Settings {
            data_dir: opts.data_dir.clone().unwrap_or(file.data_dir),
            out_dir: opts.out_dir.clone().unwrap_or(file.out_dir),
            model: opts.model.clone().unwrap_or(file.model),
            traj_ids: if opts.traj_id.is_empty() {
                file.traj_id
            } else {
                opts.traj_id.clone()
            },
            experiment: e,
        };
        if let Err(e) = settings.kinds() {
            if opts.model.is_some() {
                return Err(UsageError(e.to_string()).into());
            }
            return Err(e);
        }
        Ok(settings)
    }

    /// Model kinds selected by `model`, in canonical order.
    pub fn kinds(&self) -> Result<Vec<ModelKind>> {
        if self.model == "all" {
            return Ok(ModelKind::ALL.to_vec());
        }
        match self.model.parse::<ModelKind>() {
            Ok(k) => Ok(vec![k]),
            Err(_) => bail!("unknown model `{}`; expected compsnn, cnn, gcnn, mlp or all", self.model),
        }
    }
}
