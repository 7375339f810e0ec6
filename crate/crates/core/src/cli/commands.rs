use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::config::Config;
use crate::data::{
    read_table, synth_table, time_feature_columns, write_table, ScaleParams, SeriesDataset, Split, SynthKind, Table,
    TIME_FEATURE_NAMES,
};
use crate::engine::{
    evaluate_split, exploit, EpochLog, persistence_split, timing_probe, train_with_log, ForecastBatch, ModelConfig, SqrModel,
    TimingReport, TrainReport,
};
use crate::error::{Error, Result};
use crate::heads::HeadKind;
use crate::metrics::{point_metrics, write_curve_csv, MetricReport, EVAL_QUANTILES};
use crate::numerics::{read_checkpoint, write_checkpoint};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

/// Everything besides parameter values needed to rebuild a trained model
/// and feed it data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: Config,
    pub model: ModelConfig,
    /// Initialisation seed; it also fixes the lattice feature assignment.
    pub seed: u64,
    pub columns: Vec<String>,
    pub scale: Vec<ScaleParams>,
    pub target_column: usize,
    /// Feature indices of each lattice, for the lattice head.
    pub ensemble: Option<Vec<Vec<usize>>>,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
}

impl ModelMeta {
    pub fn new(config: &Config, model: &SqrModel, seed: u64, data: &SeriesDataset, report: Option<&TrainReport>) -> Self {
        Self {
            config: config.clone(),
            model: *model.config(),
            seed,
            columns: data.columns().to_vec(),
            scale: data.scale_params().to_vec(),
            target_column: data.target_column(),
            ensemble: model.head().as_dln().map(|d| d.ensemble().assignment().to_vec()),
            best_epoch: report.and_then(|r| r.best_epoch),
            epochs_run: report.map_or(0, |r| r.logs.len()),
        }
    }
}

pub fn save_model(path: &Path, model: &SqrModel, meta: &ModelMeta) -> Result<()> {
    write_checkpoint(path, &serde_json::to_value(meta)?, &model.blocks())
}

/// Rebuilds the model described by a checkpoint and loads its parameters.
pub fn load_model(path: &Path) -> Result<(SqrModel, ModelMeta)> {
    let ckpt = read_checkpoint(path)?;
    let meta: ModelMeta = serde_json::from_value(ckpt.meta.clone())
        .map_err(|e| Error::Checkpoint(format!("{}: bad metadata: {e}", path.display())))?;
    let mut model = SqrModel::new(meta.model, meta.seed)?;
    let assignment = model.head().as_dln().map(|d| d.ensemble().assignment().to_vec());
    if assignment != meta.ensemble {
        return Err(Error::Checkpoint("lattice feature assignment does not match the recorded seed".into()));
    }
    model.load_parameters(&ckpt)?;
    Ok((model, meta))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads the configured dataset, optionally from a different CSV file.
pub fn load_dataset(config: &Config, dataset: Option<&Path>) -> Result<SeriesDataset> {
    let mut data = config.data.clone();
    if let Some(p) = dataset {
        data.path = Some(p.to_path_buf());
        data.synthetic = None;
    }
    data.load()
}

/// Trains the configured head once. Each finished epoch is passed to
/// `on_epoch`.
pub fn train_model(
    config: &Config,
    kind: HeadKind,
    seed: u64,
    data: &SeriesDataset,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(SqrModel, TrainReport)> {
    let mut model = SqrModel::new(config.model_config(kind, data.num_features()), seed)?;
    let report = train_with_log(&mut model, data, &config.train_config(kind, seed), on_epoch)?;
    Ok((model, report))
}

/// `train`: writes the checkpoint and a line-JSON epoch log to `out_dir`.
pub fn cmd_train(config: &Config, seed: Option<u64>, dataset: Option<&Path>, out_dir: &Path) -> Result<TrainReport> {
    let mut config = config.clone();
    if let Some(s) = seed {
        config.train.seed = s;
    }
    if let Some(p) = dataset {
        config.data.path = Some(p.to_path_buf());
        config.data.synthetic = None;
    }
    let data = load_dataset(&config, None)?;
    create_dir(out_dir)?;
    let kind = config.head.kind;
    let seed = config.train.seed;
    let mut log = String::new();
    let mut log_err = None;
    let (model, report) = train_model(&config, kind, seed, &data, |l| {
        log::info!("epoch {} loss {:.6} val_crps {:.6} lr {:.3e}", l.epoch, l.train_loss, l.val_crps, l.lr);
        match serde_json::to_string(l) {
            Ok(line) => {
                log.push_str(&line);
                log.push('\n');
            }
            Err(e) => log_err = Some(e),
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    write_text(&out_dir.join(TRAIN_LOG_FILE), &log)?;
    let meta = ModelMeta::new(&config, &model, seed, &data, Some(&report));
    save_model(&out_dir.join(CHECKPOINT_FILE), &model, &meta)?;
    Ok(report)
}

/// Dataset for a checkpoint, scaled with the parameters it was trained on.
fn checkpoint_dataset(meta: &ModelMeta, dataset: Option<&Path>) -> Result<SeriesDataset> {
    let data = load_dataset(&meta.config, dataset)?;
    if data.columns() != meta.columns.as_slice() {
        return Err(Error::InvalidArgument(format!(
            "dataset columns {:?} do not match the checkpoint's {:?}",
            data.columns(),
            meta.columns
        )));
    }
    data.with_scaling(meta.scale.clone())
}

/// `eval`: writes `report.json`, `picp.csv` and `reliability.csv`.
pub fn cmd_eval(checkpoint: &Path, dataset: Option<&Path>, split: Split, out_dir: &Path) -> Result<MetricReport> {
    let (model, meta) = load_model(checkpoint)?;
    let data = checkpoint_dataset(&meta, dataset)?;
    let report = evaluate_split(&model, &data, split)?;
    create_dir(out_dir)?;
    report.write_json(&out_dir.join("report.json"))?;
    write_curve_csv(&out_dir.join("picp.csv"), &report.picp_curve)?;
    write_curve_csv(&out_dir.join("reliability.csv"), &report.reliability_curve)?;
    Ok(report)
}

/// Scaled model input from the last `window` rows of a raw table with the
/// checkpoint's columns, in any order. Calendar columns are derived from
/// the timestamps when absent.
pub fn prepare_window(table: &Table, meta: &ModelMeta) -> Result<Array2<f64>> {
    let w = meta.model.embedding.window;
    if table.timestamps.len() < w {
        return Err(Error::InsufficientData(format!(
            "window file has {} rows, the model needs {w}",
            table.timestamps.len()
        )));
    }
    let calendar = time_feature_columns(&table.timestamps);
    let rows = table.timestamps.len();
    let mut out = Array2::zeros((w, meta.columns.len()));
    for (j, name) in meta.columns.iter().enumerate() {
        let column = if let Some(i) = table.columns.iter().position(|c| c == name) {
            table.values.column(i)
        } else if let Some(i) = TIME_FEATURE_NAMES.iter().position(|c| c == name) {
            calendar.column(i)
        } else {
            return Err(Error::InvalidArgument(format!("window file lacks column '{name}'")));
        };
        let p = meta.scale[j];
        out.column_mut(j).assign(&column.slice(s![rows - w..]).mapv(|x| p.apply(x)));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("window file".into()));
    }
    Ok(out)
}

/// `forecast`: one exploitation pass over a window file. Values are in the
/// target's physical units.
pub fn cmd_forecast(checkpoint: &Path, window: &Path, taus: Option<&[f64]>) -> Result<ForecastBatch> {
    let (model, meta) = load_model(checkpoint)?;
    let input = prepare_window(&read_table(window)?, &meta)?;
    let mut batch = exploit(&model, input.view(), taus.unwrap_or(&EVAL_QUANTILES))?;
    let p = meta.scale[meta.target_column];
    batch.values.mapv_inplace(|v| p.invert(v));
    Ok(batch)
}

/// `step` column then one column per quantile level.
pub fn forecast_csv(batch: &ForecastBatch) -> String {
    let mut text = String::from("step");
    for t in &batch.taus {
        text.push_str(&format!(",{t}"));
    }
    text.push('\n');
    for (j, col) in batch.values.axis_iter(Axis(1)).enumerate() {
        text.push_str(&(j + 1).to_string());
        for v in col {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    text
}

/// `bench`: timing of the exploitation pass on a mid-range window.
pub fn cmd_bench(checkpoint: &Path, repeats: usize, taus: Option<&[f64]>) -> Result<TimingReport> {
    let (model, meta) = load_model(checkpoint)?;
    let e = meta.model.embedding;
    let window = Array2::from_elem((e.window, e.input_features), 0.5);
    timing_probe(&model, window.view(), taus.unwrap_or(&EVAL_QUANTILES), repeats)
}

pub fn cmd_generate(kind: SynthKind, length: usize, seed: u64, out: &Path) -> Result<()> {
    write_table(out, &synth_table(kind, length, seed)?)
}

/// Test metrics of one (head, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub head: HeadKind,
    pub seed: u64,
    pub report: MetricReport,
}

/// One row of the aggregate table: mean and sample standard deviation per
/// metric. Probabilistic columns are empty for the point head and for
/// smart persistence.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub crps: Option<(f64, f64)>,
    pub mae: (f64, f64),
    pub rmse: (f64, f64),
    pub ace: Option<(f64, f64)>,
    pub ss: Option<(f64, f64)>,
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(kind: HeadKind, runs: &[&RunResult]) -> TableRow {
    let col = |f: &dyn Fn(&MetricReport) -> f64| mean_std(&runs.iter().map(|r| f(&r.report)).collect::<Vec<_>>());
    let probabilistic = kind != HeadKind::Point;
    let ss: Option<Vec<f64>> = runs.iter().map(|r| r.report.ss).collect();
    TableRow {
        model: kind.label().to_string(),
        crps: probabilistic.then(|| col(&|m| m.crps)),
        mae: col(&|m| m.mae),
        rmse: col(&|m| m.rmse),
        ace: probabilistic.then(|| col(&|m| m.ace)),
        ss: ss.map(|v| mean_std(&v)),
    }
}

pub const TABLE_HEADER: [&str; 11] =
    ["Models", "CRPS", "CRPS_std", "MAE", "MAE_std", "RMSE", "RMSE_std", "ACE", "ACE_std", "SS", "SS_std"];

pub fn write_table_csv(path: &Path, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let cell = |v: Option<(f64, f64)>| v.map_or([String::new(), String::new()], |(m, s)| [m.to_string(), s.to_string()]);
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record(TABLE_HEADER).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.model.clone()];
        for c in [r.crps, Some(r.mae), Some(r.rmse), r.ace, r.ss] {
            rec.extend(cell(c));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Smart persistence MAE and RMSE on the test split, when available.
fn persistence_row(data: &SeriesDataset) -> Result<Option<TableRow>> {
    let Some(pers) = persistence_split(data, Split::Test)? else {
        return Ok(None);
    };
    let starts = data.sample_starts(Split::Test)?;
    let mut y = Array2::zeros(pers.dim());
    for (i, s) in starts.enumerate() {
        y.row_mut(i).assign(&data.raw_target_at(s));
    }
    let (mae, rmse) = point_metrics(y.view(), pers.view())?;
    Ok(Some(TableRow {
        model: "SP".into(),
        crps: None,
        mae: (mae, 0.0),
        rmse: (rmse, 0.0),
        ace: None,
        ss: None,
    }))
}

/// Outcome of `experiment`: the aggregate table and every run that
/// finished. `failure` holds the first failed run's error.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub rows: Vec<TableRow>,
    pub runs: Vec<RunResult>,
    pub failure: Option<Error>,
}

/// `experiment`: trains and tests every configured head for every seed and
/// writes `results.csv` (aggregate) and `runs.csv` (per run) to `out_dir`,
/// even when some runs fail.
pub fn cmd_experiment(config: &Config, seeds: Option<&[u64]>, out_dir: &Path) -> Result<ExperimentOutcome> {
    let seeds = seeds.unwrap_or(&config.experiment.seeds);
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    if config.experiment.heads.is_empty() {
        return Err(Error::Config("experiment.heads is empty".into()));
    }
    let data = load_dataset(config, None)?;
    create_dir(out_dir)?;
    let mut rows: Vec<TableRow> = persistence_row(&data)?.into_iter().collect();
    let mut runs = Vec::new();
    let mut failure = None;
    for &kind in &config.experiment.heads {
        let mut ok = Vec::new();
        for &seed in seeds {
            log::info!("{} seed {seed}", kind.label());
            let run = train_model(config, kind, seed, &data, |_| {})
                .and_then(|(model, _)| evaluate_split(&model, &data, Split::Test));
            match run {
                Ok(report) => ok.push(RunResult { head: kind, seed, report }),
                Err(e) => {
                    log::error!("{} seed {seed} failed: {e}", kind.label());
                    failure.get_or_insert(e);
                }
            }
        }
        if !ok.is_empty() {
            rows.push(aggregate(kind, &ok.iter().collect::<Vec<_>>()));
        }
        runs.extend(ok);
    }
    write_table_csv(&out_dir.join("results.csv"), &rows)?;
    write_runs_csv(&out_dir.join("runs.csv"), &runs)?;
    Ok(ExperimentOutcome { rows, runs, failure })
}

fn write_runs_csv(path: &Path, runs: &[RunResult]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("model,seed,crps,mae,rmse,ace,ss,crossover_rate\n");
    for r in runs {
        let m = &r.report;
        let ss = m.ss.map_or(String::new(), |v| v.to_string());
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.head.label(),
            r.seed,
            m.crps,
            m.mae,
            m.rmse,
            m.ace,
            ss,
            m.crossover_rate
        ));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Output location for a file argument: `out` when given, else stdout.
pub fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_cases() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        assert_eq!(mean_std(&[2.0, 2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn forecast_csv_layout() {
        let batch = ForecastBatch {
            taus: vec![0.1, 0.9],
            values: ndarray::array![[1.0, 2.0], [3.0, 4.0]],
            origin: 0,
        };
        assert_eq!(forecast_csv(&batch), "step,0.1,0.9\n1,1,3\n2,2,4\n");
    }

    #[test]
    fn point_head_has_no_probabilistic_columns() {
        let report = MetricReport {
            mae: 1.0,
            rmse: 2.0,
            ss: None,
            crps: 0.5,
            ace: 0.1,
            picp_curve: vec![],
            reliability_curve: vec![],
            crossover_rate: 0.0,
        };
        let run = RunResult {
            head: HeadKind::Point,
            seed: 1,
            report,
        };
        let row = aggregate(HeadKind::Point, &[&run, &run]);
        assert_eq!((row.crps, row.ace, row.ss), (None, None, None));
        assert_eq!(row.mae, (1.0, 0.0));
        assert_eq!(row.model, "LSTM-PP");
    }
}
