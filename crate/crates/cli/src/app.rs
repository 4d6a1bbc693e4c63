//! Flag definitions. Every flag is optional on top of `--config`; flags win.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::commands::{
    cmd_evaluate, cmd_generate, cmd_sweep, cmd_train, EvaluateSettings, GenerateSettings, Method, SplitChoice,
    SweepSettings, TrainSettings,
};
use crate::config::{resolve, Overrides};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "pathlasso", version, about = "Path-lasso penalized autoencoders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a hypercube-cluster dataset.
    #[command(allow_negative_numbers = true)]
    Generate(GenerateArgs),
    /// Train one model and evaluate it on the test split.
    #[command(allow_negative_numbers = true)]
    Train(TrainArgs),
    /// Evaluate a trained model on a split of its data.
    Evaluate(EvaluateArgs),
    /// Train over a grid of penalty strengths.
    #[command(allow_negative_numbers = true)]
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Cube dimension; there are 2^dims clusters.
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long)]
    pub per_cluster: Option<usize>,
    #[arg(long)]
    pub cluster_std: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// The last column holds integer labels.
    #[arg(long)]
    pub labels: bool,
    #[arg(long)]
    pub skip_header: bool,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Hidden widths of the encoder, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub exclusive_weight: Option<f64>,
    /// Optimization seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub test_frac: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub knn: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::new();
        o.set_opt("data", self.data.as_ref().map(|p| json!(p)))
            .set_opt("method", self.method.map(|m| m.name()))
            .set_opt("latent_dim", self.latent_dim)
            .set_opt("hidden", self.hidden.clone())
            .set_opt("train.lambda", self.lambda)
            .set_opt("train.gamma", self.gamma)
            .set_opt("train.exclusive_weight", self.exclusive_weight)
            .set_opt("train.seed", self.seed)
            .set_opt("train.batch_size", self.batch_size)
            .set_opt("split_seed", self.split_seed)
            .set_opt("test_frac", self.test_frac)
            .set_opt("val_frac", self.val_frac)
            .set_opt("knn", self.knn);
        if self.labels {
            o.set("labels", true);
        }
        if self.skip_header {
            o.set("skip_header", true);
        }
        if self.no_standardize {
            o.set("standardize", false);
        }
        o
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Output directory of a `train` run.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub split: Option<SplitChoice>,
    #[arg(long)]
    pub knn: Option<usize>,
    /// Results table to append a row to.
    #[arg(long)]
    pub results: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated λ values.
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub target_connections: Option<usize>,
    /// Train this many λ values at once.
    #[arg(long)]
    pub parallel: Option<usize>,
}

/// Runs a parsed command and returns a short JSON summary for stdout.
pub fn run(cli: Cli) -> Result<Value> {
    match cli.command {
        Command::Generate(a) => {
            let mut o = Overrides::new();
            o.set_opt("dims", a.dims)
                .set_opt("per_cluster", a.per_cluster)
                .set_opt("cluster_std", a.cluster_std)
                .set_opt("noise_std", a.noise_std)
                .set_opt("seed", a.seed);
            let s: GenerateSettings = resolve("generate", a.config.as_deref(), o)?;
            let m = cmd_generate(&s, &a.out)?;
            Ok(json!({"out": a.out, "outputs": m.outputs}))
        }
        Command::Train(a) => {
            let s: TrainSettings = resolve("train", a.config.as_deref(), a.run.overrides())?;
            let summary = cmd_train(&s, &a.out)?;
            Ok(to_value(&summary))
        }
        Command::Evaluate(a) => {
            let mut o = Overrides::new();
            o.set_opt("model", a.model.as_ref().map(|p| json!(p)))
                .set_opt("data", a.data.as_ref().map(|p| json!(p)))
                .set_opt("split", a.split.map(|s| s.name()))
                .set_opt("knn", a.knn)
                .set_opt("results", a.results.as_ref().map(|p| json!(p)));
            let s: EvaluateSettings = resolve("evaluate", a.config.as_deref(), o)?;
            let metrics = cmd_evaluate(&s, &a.out)?;
            Ok(to_value(&metrics))
        }
        Command::Sweep(a) => {
            let mut o = a.run.overrides();
            o.set_opt("lambda_grid", a.lambda_grid.clone())
                .set_opt("target_connections", a.target_connections)
                .set_opt("parallel", a.parallel);
            let s: SweepSettings = resolve("sweep", a.config.as_deref(), o)?;
            let outcome = cmd_sweep(&s, &a.out)?;
            Ok(to_value(&outcome))
        }
    }
}

fn to_value<T: serde::Serialize>(summary: &T) -> Value {
    serde_json::to_value(summary).expect("summaries serialize")
}
