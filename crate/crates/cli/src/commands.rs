//! The four commands. Each resolves its settings, writes a fixed set of
//! files into its output directory and finishes with `manifest.json`.
//!
//! Layout of a training run:
//!
//! ```text
//! manifest.json      settings, input hashes, list of outputs
//! timing.json        wall-clock seconds (kept out of the manifest)
//! model/model.json   encoder and decoder networks, or the PCA model
//! model/zero_mask.json
//! model/data.json    data source, split indices, standardization
//! report.json        training report without timings
//! curves.csv         per-epoch losses of every stage
//! connections.csv    d_z x d_x connection matrix
//! metrics.json       test metrics (and validation metrics)
//! latent.csv         test embedding
//! reconstruction.csv test reconstruction, original scale
//! results.csv        one row per evaluation
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Axis};
use pathlasso::baselines::{lasso_ae_train, pca_fit, plain_ae_train, PcaModel};
use pathlasso::data::{generate_hypercube, load_csv, write_csv, Dataset, Split, Standardization};
use pathlasso::evaluation::MetricReport;
use pathlasso::trainer::{train_path_lasso, Autoencoder, AutoencoderSpec, StageReport, TrainConfig, TrainData, ZeroMask};
use pathlasso::Network;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CliError, Result};
use crate::manifest::{digest_file, RunManifest};
use crate::output::{column_names, curves_csv, matrix_csv, write_timing, OutDir, MANIFEST_FILE};

pub const RESULTS_HEADER: [&str; 12] = [
    "method",
    "lambda",
    "seed",
    "split",
    "rows",
    "r2",
    "obs_match",
    "label_match",
    "knn_k",
    "knn_match",
    "connections",
    "run",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pathlasso,
    Lasso,
    Plain,
    Pca,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pathlasso => "pathlasso",
            Method::Lasso => "lasso",
            Method::Plain => "plain",
            Method::Pca => "pca",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Val,
    Test,
    All,
}

impl SplitChoice {
    pub fn name(self) -> &'static str {
        match self {
            SplitChoice::Train => "train",
            SplitChoice::Val => "val",
            SplitChoice::Test => "test",
            SplitChoice::All => "all",
        }
    }

    fn indices(self, split: &Split) -> Vec<usize> {
        match self {
            SplitChoice::Train => split.train.clone(),
            SplitChoice::Val => split.val.clone(),
            SplitChoice::Test => split.test.clone(),
            SplitChoice::All => (0..split.len()).collect(),
        }
    }
}

// ---- settings ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateSettings {
    pub dims: usize,
    pub per_cluster: usize,
    pub cluster_std: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for GenerateSettings {
    fn default() -> Self {
        GenerateSettings {
            dims: 4,
            per_cluster: 100,
            cluster_std: 0.1,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub data: PathBuf,
    /// Last CSV column holds integer labels.
    pub labels: bool,
    pub skip_header: bool,
    pub method: Method,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub test_frac: f64,
    pub val_frac: f64,
    pub split_seed: u64,
    pub standardize: bool,
    pub knn: Option<usize>,
    /// Absolute cut-off for the lasso baseline; relative default when unset.
    pub lasso_threshold: Option<f64>,
    pub train: TrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            data: PathBuf::new(),
            labels: false,
            skip_header: false,
            method: Method::Pathlasso,
            latent_dim: 2,
            hidden: vec![50],
            test_frac: 0.2,
            val_frac: 0.1,
            split_seed: 0,
            standardize: true,
            knn: None,
            lasso_threshold: None,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSettings {
    /// Directory written by `train`.
    pub model: PathBuf,
    /// Defaults to the data file recorded with the model.
    pub data: Option<PathBuf>,
    pub split: SplitChoice,
    pub knn: Option<usize>,
    /// Results table to append to; defaults to `results.csv` in the output directory.
    pub results: Option<PathBuf>,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        EvaluateSettings {
            model: PathBuf::new(),
            data: None,
            split: SplitChoice::Test,
            knn: None,
            results: None,
        }
    }
}

pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    #[serde(flatten)]
    pub run: TrainSettings,
    pub lambda_grid: Vec<f64>,
    pub target_connections: Option<usize>,
    /// Number of λ values trained concurrently.
    pub parallel: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            run: TrainSettings::default(),
            lambda_grid: Vec::new(),
            target_connections: None,
            parallel: 1,
        }
    }
}

// ---- model files ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFile {
    Autoencoder { encoder: Network, decoder: Network },
    Pca { pca: PcaModel },
}

/// How the rows a model sees were produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub source: PathBuf,
    pub sha256: String,
    pub labels: bool,
    pub skip_header: bool,
    pub split: Split,
    pub standardization: Option<Standardization>,
}

pub enum Model {
    Autoencoder(Autoencoder),
    Pca(PcaModel),
}

impl Model {
    pub fn from_file(file: ModelFile) -> Result<Self> {
        Ok(match file {
            ModelFile::Autoencoder { encoder, decoder } => Model::Autoencoder(Autoencoder::from_parts(&encoder, &decoder)?),
            ModelFile::Pca { pca } => Model::Pca(pca),
        })
    }

    pub fn to_file(&self) -> ModelFile {
        match self {
            Model::Autoencoder(ae) => ModelFile::Autoencoder {
                encoder: ae.encoder(),
                decoder: ae.decoder(),
            },
            Model::Pca(p) => ModelFile::Pca { pca: p.clone() },
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Autoencoder(ae) => ae.input_dim(),
            Model::Pca(p) => p.input_dim(),
        }
    }

    pub fn encode(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(match self {
            Model::Autoencoder(ae) => ae.encode(x.view())?,
            Model::Pca(p) => p.transform(x.view())?,
        })
    }

    pub fn reconstruct(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(match self {
            Model::Autoencoder(ae) => ae.reconstruct(x.view())?,
            Model::Pca(p) => p.reconstruct(x.view())?,
        })
    }

    /// `d_z x d_x`; for PCA the absolute loadings.
    pub fn connections(&self) -> Result<Array2<f64>> {
        Ok(match self {
            Model::Autoencoder(ae) => ae.connection_matrix()?.into_inner(),
            Model::Pca(p) => p.loadings.t().mapv(f64::abs),
        })
    }

    pub fn connection_count(&self) -> Result<usize> {
        Ok(self.connections()?.iter().filter(|&&v| v > 0.0).count())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub split: SplitChoice,
    pub rows: usize,
    pub metrics: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub validation: Option<MetricReport>,
}

/// Summary handed back to callers (and to the sweep table).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub lambda: f64,
    pub seed: u64,
    pub connections: usize,
    pub test_rows: usize,
    pub test: MetricReport,
    pub validation: MetricReport,
}

// ---- helpers ----

fn load_dataset(path: &Path, labels: bool, skip_header: bool) -> Result<Dataset> {
    if path.as_os_str().is_empty() {
        return Err(CliError::settings("no data file given (--data)"));
    }
    if !path.exists() {
        return Err(CliError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
    }
    Ok(load_csv(path, labels, skip_header)?)
}

fn model_rows(x: &Array2<f64>, idx: &[usize], standardization: Option<&Standardization>) -> (Array2<f64>, Array2<f64>) {
    let raw = x.select(Axis(0), idx);
    let scaled = match standardization {
        Some(s) => s.transform(raw.view()),
        None => raw.clone(),
    };
    (raw, scaled)
}

struct Evaluation {
    rows: usize,
    metrics: MetricReport,
    latent: Array2<f64>,
    reconstruction: Array2<f64>,
    labels: Option<Vec<i64>>,
}

fn evaluate_rows(
    model: &Model,
    data: &Dataset,
    idx: &[usize],
    standardization: Option<&Standardization>,
    knn: Option<usize>,
) -> Result<Evaluation> {
    if data.n_cols() != model.input_dim() {
        return Err(CliError::Core(pathlasso::Error::Shape(format!(
            "data has {} columns, model expects {}",
            data.n_cols(),
            model.input_dim()
        ))));
    }
    let (raw, scaled) = model_rows(&data.x, idx, standardization);
    let latent = model.encode(&scaled)?;
    let rec_scaled = model.reconstruct(&scaled)?;
    let reconstruction = match standardization {
        Some(s) => s.inverse(rec_scaled.view()),
        None => rec_scaled,
    };
    let labels = data.labels_of(idx);
    let metrics = MetricReport::compute(
        raw.view(),
        reconstruction.view(),
        labels.as_deref(),
        knn,
        model.connection_count()?,
    )?;
    Ok(Evaluation {
        rows: idx.len(),
        metrics,
        latent,
        reconstruction,
        labels,
    })
}

fn results_row(method: &str, lambda: f64, seed: u64, split: SplitChoice, m: &MetricReport, rows: usize, run: &str) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    vec![
        method.to_string(),
        lambda.to_string(),
        seed.to_string(),
        split.name().to_string(),
        rows.to_string(),
        m.r2.to_string(),
        m.obs_match.to_string(),
        opt(m.label_match),
        m.knn_match.as_ref().map(|k| k.k.to_string()).unwrap_or_default(),
        opt(m.knn_match.as_ref().map(|k| k.fraction)),
        m.connections.to_string(),
        run.to_string(),
    ]
}

fn write_evaluation(out: &mut OutDir, eval: &Evaluation, d_x: usize) -> Result<()> {
    let labelled = eval.labels.is_some();
    let z = eval.latent.ncols();
    out.write_bytes(
        "latent.csv",
        &matrix_csv(eval.latent.view(), Some(&column_names("z", z, labelled)), eval.labels.as_deref())?,
    )?;
    out.write_bytes(
        "reconstruction.csv",
        &matrix_csv(eval.reconstruction.view(), Some(&column_names("x", d_x, labelled)), eval.labels.as_deref())?,
    )?;
    Ok(())
}

fn finish(out: &mut OutDir, command: &str, settings: &impl Serialize, seed: u64, inputs: Vec<crate::manifest::InputDigest>, timing: serde_json::Value) -> Result<RunManifest> {
    let settings = serde_json::to_value(settings).map_err(|source| CliError::Json {
        path: out.path(MANIFEST_FILE),
        source,
    })?;
    let manifest = RunManifest::new(command, settings, seed, inputs, out.written().to_vec());
    write_timing(out.root(), &timing)?;
    out.write_json(MANIFEST_FILE, &manifest)?;
    Ok(manifest)
}

fn stage_timing(stages: &[StageReport], total: f64) -> serde_json::Value {
    json!({
        "stages": stages.iter().map(|s| json!({"stage": s.name, "epochs": s.epochs, "seconds": s.seconds})).collect::<Vec<_>>(),
        "total_seconds": total,
    })
}

// ---- commands ----

/// Hypercube clusters as `data.csv` (label column last).
pub fn cmd_generate(settings: &GenerateSettings, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let data = generate_hypercube(
        settings.dims,
        settings.per_cluster,
        settings.cluster_std,
        settings.noise_std,
        settings.seed,
    )?;
    let mut out = OutDir::create(out)?;
    let mut bytes = Vec::new();
    write_csv(&mut bytes, data.x.view(), data.labels.as_deref())?;
    out.write_bytes("data.csv", &bytes)?;
    let timing = json!({"total_seconds": start.elapsed().as_secs_f64()});
    finish(&mut out, "generate", settings, settings.seed, vec![], timing)
}

struct Fitted {
    model: Model,
    stages: Vec<StageReport>,
    zero_mask: Option<ZeroMask>,
    report: serde_json::Value,
}

fn fit(settings: &TrainSettings, data: &Dataset) -> Result<Fitted> {
    let td = TrainData::from_dataset(data)?;
    let config = &settings.train;
    let spec = AutoencoderSpec::symmetric(data.n_cols(), &settings.hidden, settings.latent_dim);
    Ok(match settings.method {
        Method::Pathlasso => {
            let (ae, report) = train_path_lasso(&td, &spec, config)?;
            Fitted {
                report: to_json(&report.without_timing()),
                stages: report.stages,
                zero_mask: Some(report.zero_mask),
                model: Model::Autoencoder(ae),
            }
        }
        Method::Lasso => {
            let (ae, report) = lasso_ae_train(&td, &spec, config.lambda, settings.lasso_threshold, config)?;
            Fitted {
                report: to_json(&report.without_timing()),
                stages: report.stages,
                zero_mask: Some(report.zero_mask),
                model: Model::Autoencoder(ae),
            }
        }
        Method::Plain => {
            let (ae, stage) = plain_ae_train(&td, &spec, config)?;
            let connections = ae.connection_matrix()?;
            let mut quiet = stage.clone();
            quiet.seconds = 0.0;
            Fitted {
                report: json!({
                    "stages": [quiet],
                    "connection_count": connections.count_above(0.0),
                    "connections": connections,
                }),
                stages: vec![stage],
                zero_mask: None,
                model: Model::Autoencoder(ae),
            }
        }
        Method::Pca => {
            let pca = pca_fit(td.train.view(), settings.latent_dim)?;
            Fitted {
                report: json!({ "explained_variance_ratio": pca.explained_variance_ratio }),
                stages: Vec::new(),
                zero_mask: None,
                model: Model::Pca(pca),
            }
        }
    })
}

fn to_json<T: Serialize>(report: &T) -> serde_json::Value {
    serde_json::to_value(report).expect("reports serialize")
}

/// Trains one model and evaluates it on the test split.
pub fn cmd_train(settings: &TrainSettings, out: &Path) -> Result<RunSummary> {
    let start = Instant::now();
    let mut data = load_dataset(&settings.data, settings.labels, settings.skip_header)?
        .with_split(settings.test_frac, settings.val_frac, settings.split_seed)?;
    if settings.standardize {
        data = data.with_standardization()?;
    }
    let input = digest_file(&settings.data)?;
    let fitted = fit(settings, &data)?;
    let split = data.split()?.clone();
    let standardization = data.standardization.clone();

    let mut out = OutDir::create(out)?;
    out.write_json("model/model.json", &fitted.model.to_file())?;
    if let Some(mask) = &fitted.zero_mask {
        out.write_json("model/zero_mask.json", mask)?;
    }
    out.write_json(
        "model/data.json",
        &DataRecord {
            source: settings.data.clone(),
            sha256: input.sha256.clone(),
            labels: settings.labels,
            skip_header: settings.skip_header,
            split: split.clone(),
            standardization: standardization.clone(),
        },
    )?;
    out.write_json("report.json", &fitted.report)?;
    out.write_bytes("curves.csv", &curves_csv(&fitted.stages)?)?;
    let connections = fitted.model.connections()?;
    out.write_bytes("connections.csv", &matrix_csv(connections.view(), None, None)?)?;

    let test = evaluate_rows(&fitted.model, &data, &split.test, standardization.as_ref(), settings.knn)?;
    let val = evaluate_rows(&fitted.model, &data, &split.val, standardization.as_ref(), settings.knn)?;
    out.write_json(
        "metrics.json",
        &MetricsFile {
            split: SplitChoice::Test,
            rows: test.rows,
            metrics: test.metrics.clone(),
            validation: Some(val.metrics.clone()),
        },
    )?;
    write_evaluation(&mut out, &test, data.n_cols())?;
    let lambda = settings.train.lambda;
    let seed = settings.train.seed;
    let results_path = out.path("results.csv");
    if results_path.exists() {
        std::fs::remove_file(&results_path).map_err(|e| CliError::io(&results_path, e))?;
    }
    out.append_row(
        "results.csv",
        &RESULTS_HEADER,
        &results_row(settings.method.name(), lambda, seed, SplitChoice::Test, &test.metrics, test.rows, "."),
    )?;
    let timing = stage_timing(&fitted.stages, start.elapsed().as_secs_f64());
    finish(&mut out, "train", settings, seed, vec![input], timing)?;
    Ok(RunSummary {
        method: settings.method,
        lambda,
        seed,
        connections: test.metrics.connections,
        test_rows: test.rows,
        test: test.metrics,
        validation: val.metrics,
    })
}

/// Re-evaluates a trained model on a split of its data (or of another file
/// with the same rows).
pub fn cmd_evaluate(settings: &EvaluateSettings, out: &Path) -> Result<MetricsFile> {
    let start = Instant::now();
    let read = |rel: &str| -> Result<String> {
        let p = settings.model.join(rel);
        std::fs::read_to_string(&p).map_err(|e| CliError::io(p, e))
    };
    let parse = |rel: &str, text: String| -> Result<serde_json::Value> {
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: settings.model.join(rel),
            source,
        })
    };
    let model_file: ModelFile = serde_json::from_value(parse("model/model.json", read("model/model.json")?)?)
        .map_err(|e| CliError::settings(format!("model/model.json: {e}")))?;
    let record: DataRecord = serde_json::from_value(parse("model/data.json", read("model/data.json")?)?)
        .map_err(|e| CliError::settings(format!("model/data.json: {e}")))?;
    let model = Model::from_file(model_file)?;

    let data_path = settings.data.clone().unwrap_or_else(|| record.source.clone());
    let data = load_dataset(&data_path, record.labels, record.skip_header)?;
    let input = digest_file(&data_path)?;
    if data.n_rows() != record.split.len() {
        return Err(CliError::Core(pathlasso::Error::Shape(format!(
            "data has {} rows, the recorded split covers {}",
            data.n_rows(),
            record.split.len()
        ))));
    }
    let idx = settings.split.indices(&record.split);
    let eval = evaluate_rows(&model, &data, &idx, record.standardization.as_ref(), settings.knn)?;

    let mut out = OutDir::create(out)?;
    let metrics = MetricsFile {
        split: settings.split,
        rows: eval.rows,
        metrics: eval.metrics.clone(),
        validation: None,
    };
    out.write_json("metrics.json", &metrics)?;
    write_evaluation(&mut out, &eval, data.n_cols())?;

    let (method, lambda, seed) = recorded_run(&settings.model);
    let row = results_row(&method, lambda, seed, settings.split, &eval.metrics, eval.rows, &settings.model.display().to_string());
    match &settings.results {
        Some(table) => crate::output::append_csv_row(table, &RESULTS_HEADER, &row)?,
        None => {
            out.append_row("results.csv", &RESULTS_HEADER, &row)?;
        }
    }
    let timing = json!({"total_seconds": start.elapsed().as_secs_f64()});
    finish(&mut out, "evaluate", settings, seed, vec![input], timing)?;
    Ok(metrics)
}

/// Method, λ and seed from a training manifest, when there is one.
fn recorded_run(model_dir: &Path) -> (String, f64, u64) {
    let Ok(m) = RunManifest::load(&model_dir.join(MANIFEST_FILE)) else {
        return (String::new(), f64::NAN, 0);
    };
    let s = &m.settings;
    (
        s["method"].as_str().unwrap_or_default().to_string(),
        s["train"]["lambda"].as_f64().unwrap_or(f64::NAN),
        m.seed,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub runs: Vec<RunSummary>,
    /// Index into `runs` of the run closest to the connection target.
    pub selected: Option<usize>,
}

/// Closest connection count to `target`; ties go to the larger λ.
pub fn select_by_connections(runs: &[(f64, usize)], target: usize) -> Option<usize> {
    runs.iter()
        .enumerate()
        .min_by(|(_, (la, ca)), (_, (lb, cb))| {
            ca.abs_diff(target)
                .cmp(&cb.abs_diff(target))
                .then(lb.total_cmp(la))
        })
        .map(|(i, _)| i)
}

fn run_dir_name(i: usize) -> String {
    format!("runs/{i:03}")
}

/// One training run per λ, in `runs/NNN/`, plus a results table.
pub fn cmd_sweep(settings: &SweepSettings, out: &Path) -> Result<SweepOutcome> {
    let start = Instant::now();
    let grid: Vec<f64> = match (&settings.lambda_grid[..], settings.target_connections) {
        ([], Some(_)) => DEFAULT_LAMBDA_GRID.to_vec(),
        ([], None) => return Err(CliError::settings("empty lambda grid")),
        (g, _) => g.to_vec(),
    };
    if let Some(bad) = grid.iter().find(|l| !(**l >= 0.0)) {
        return Err(CliError::settings(format!("grid value {bad} is not a non-negative number")));
    }
    if settings.run.data.as_os_str().is_empty() {
        return Err(CliError::settings("no data file given (--data)"));
    }
    let input = digest_file(&settings.run.data)?;
    let mut out_dir = OutDir::create(out)?;
    let job = |(i, lambda): (usize, &f64)| -> Result<RunSummary> {
        let mut run = settings.run.clone();
        run.train.lambda = *lambda;
        cmd_train(&run, &out.join(run_dir_name(i)))
    };
    let results: Vec<Result<RunSummary>> = if settings.parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(settings.parallel)
            .build()
            .map_err(|e| CliError::settings(e.to_string()))?;
        pool.install(|| grid.par_iter().enumerate().map(job).collect())
    } else {
        grid.iter().enumerate().map(job).collect()
    };
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut table = csv::Writer::from_writer(Vec::new());
    table.write_record(RESULTS_HEADER.iter().chain(&["val_r2"]))?;
    for (i, r) in runs.iter().enumerate() {
        let mut row = results_row(r.method.name(), r.lambda, r.seed, SplitChoice::Test, &r.test, r.test_rows, &run_dir_name(i));
        row.push(r.validation.r2.to_string());
        table.write_record(&row)?;
    }
    out_dir.write_bytes("results.csv", &table.into_inner().map_err(|e| CliError::settings(e.to_string()))?)?;

    let selected = settings.target_connections.and_then(|target| {
        let pairs: Vec<(f64, usize)> = runs.iter().map(|r| (r.lambda, r.connections)).collect();
        select_by_connections(&pairs, target)
    });
    if let Some(i) = selected {
        out_dir.write_json(
            "selected.json",
            &json!({
                "index": i,
                "lambda": runs[i].lambda,
                "connections": runs[i].connections,
                "target_connections": settings.target_connections,
                "run": run_dir_name(i),
            }),
        )?;
    }
    let timing = json!({"total_seconds": start.elapsed().as_secs_f64()});
    finish(&mut out_dir, "sweep", settings, settings.run.train.seed, vec![input], timing)?;
    Ok(SweepOutcome { runs, selected })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_the_larger_lambda() {
        let runs = [(0.1, 6), (0.2, 3), (0.3, 5), (0.4, 8)];
        assert_eq!(select_by_connections(&runs, 4), Some(2));
        assert_eq!(select_by_connections(&runs, 8), Some(3));
        assert_eq!(select_by_connections(&[], 4), None);
    }

    #[test]
    fn settings_defaults_follow_the_documented_values() {
        let s: TrainSettings = serde_json::from_str("{}").unwrap();
        assert_eq!(s.hidden, vec![50]);
        assert_eq!((s.test_frac, s.val_frac), (0.2, 0.1));
        assert!(s.standardize);
        let g: GenerateSettings = serde_json::from_str("{}").unwrap();
        assert_eq!((g.dims, g.per_cluster, g.cluster_std), (4, 100, 0.1));
    }

    #[test]
    fn sweep_settings_flatten_the_run() {
        let s: SweepSettings = serde_json::from_str(r#"{"method": "lasso", "lambda_grid": [0.1], "train": {"seed": 3}}"#).unwrap();
        assert_eq!(s.run.method, Method::Lasso);
        assert_eq!(s.run.train.seed, 3);
        assert_eq!(s.lambda_grid, vec![0.1]);
    }
}
