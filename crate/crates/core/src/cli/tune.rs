use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::commands::{load_dataset, train_model};
use super::config::Config;
use crate::data::{SeriesDataset, Split};
use crate::engine::evaluate_split;
use crate::error::{Error, Result};
use crate::heads::{DlnHeadConfig, HeadKind};

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub learning_rate: f64,
    pub feature_calib_keypoints: usize,
    pub quantile_calib_keypoints: usize,
    pub lattice_keypoints: usize,
    pub output_calib_keypoints: usize,
    pub lattice_input_size: usize,
}

impl TrialSpec {
    fn key(&self) -> (u64, [usize; 5]) {
        (
            self.learning_rate.to_bits(),
            [
                self.feature_calib_keypoints,
                self.quantile_calib_keypoints,
                self.lattice_keypoints,
                self.output_calib_keypoints,
                self.lattice_input_size,
            ],
        )
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.learning_rate
            .total_cmp(&other.learning_rate)
            .then_with(|| self.key().1.cmp(&other.key().1))
    }

    /// The config with this point's values applied.
    pub fn apply(&self, base: &Config, epochs: usize) -> Config {
        let mut cfg = base.clone();
        cfg.train.learning_rate = Some(self.learning_rate);
        cfg.train.epochs = Some(epochs);
        cfg.head.feature_calib_keypoints = self.feature_calib_keypoints;
        cfg.head.quantile_calib_keypoints = self.quantile_calib_keypoints;
        cfg.head.lattice_keypoints = self.lattice_keypoints;
        cfg.head.output_calib_keypoints = self.output_calib_keypoints;
        cfg.head.lattice_input_size = self.lattice_input_size;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialOutcome {
    Ok { val_crps: f64, val_ace: f64 },
    Skipped { reason: String },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub spec: TrialSpec,
    /// Vertex count of the lattice ensemble.
    pub lattice_parameters: usize,
    pub outcome: TrialOutcome,
}

/// Learning-rate axis: the tune section's list, else the configured rate.
fn lr_axis(config: &Config) -> Vec<f64> {
    config.tune.learning_rate.clone().unwrap_or_else(|| {
        vec![config.train_config(config.head.kind, 0).scheduler.base_lr]
    })
}

/// One keypoint axis: the tune section's list for the lattice head, else
/// the head section's value.
fn int_axis(config: &Config, name: &str, values: &Option<Vec<usize>>, fixed: usize) -> Result<Vec<usize>> {
    match values {
        Some(v) if v.is_empty() => Err(Error::Config(format!("tune.{name} is empty"))),
        Some(v) if config.head.kind == HeadKind::Dln => Ok(v.clone()),
        _ => Ok(vec![fixed]),
    }
}

/// Cartesian product of the grid axes. Only the learning rate varies for
/// heads other than the lattice head.
pub fn grid(config: &Config) -> Result<Vec<TrialSpec>> {
    let t = &config.tune;
    let h = &config.head;
    let lrs = lr_axis(config);
    if lrs.is_empty() {
        return Err(Error::Config("tune.learning_rate is empty".into()));
    }
    let fc = int_axis(config, "feature_calib_keypoints", &t.feature_calib_keypoints, h.feature_calib_keypoints)?;
    let qc = int_axis(config, "quantile_calib_keypoints", &t.quantile_calib_keypoints, h.quantile_calib_keypoints)?;
    let lk = int_axis(config, "lattice_keypoints", &t.lattice_keypoints, h.lattice_keypoints)?;
    let oc = int_axis(config, "output_calib_keypoints", &t.output_calib_keypoints, h.output_calib_keypoints)?;
    let li = int_axis(config, "lattice_input_size", &t.lattice_input_size, h.lattice_input_size)?;
    let mut out = Vec::new();
    for &learning_rate in &lrs {
        for &feature_calib_keypoints in &fc {
            for &quantile_calib_keypoints in &qc {
                for &lattice_keypoints in &lk {
                    for &output_calib_keypoints in &oc {
                        for &lattice_input_size in &li {
                            out.push(TrialSpec {
                                learning_rate,
                                feature_calib_keypoints,
                                quantile_calib_keypoints,
                                lattice_keypoints,
                                output_calib_keypoints,
                                lattice_input_size,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Lattice vertex count of a grid point for embedding size `e`.
pub fn lattice_parameters(spec: &TrialSpec, e: usize) -> usize {
    DlnHeadConfig {
        lattice_keypoints: spec.lattice_keypoints,
        lattice_input_size: spec.lattice_input_size,
        ..DlnHeadConfig::default()
    }
    .lattice_parameter_count(e)
}

/// Trains one grid point at reduced epochs and scores it on the
/// validation split. Points above the cap are skipped untrained.
pub fn run_trial(config: &Config, spec: TrialSpec, data: &SeriesDataset, max_params: usize) -> Trial {
    let e = config.embedding.hidden_size;
    let lattice = if config.head.kind == HeadKind::Dln { lattice_parameters(&spec, e) } else { 0 };
    let outcome = if lattice > max_params {
        TrialOutcome::Skipped {
            reason: format!("lattice ensemble has {lattice} parameters, cap is {max_params}"),
        }
    } else {
        let cfg = spec.apply(config, config.tune.epochs);
        let kind = cfg.head.kind;
        match train_model(&cfg, kind, cfg.train.seed, data, |_| {})
            .and_then(|(m, _)| evaluate_split(&m, data, Split::Validation))
        {
            Ok(r) => TrialOutcome::Ok {
                val_crps: r.crps,
                val_ace: r.ace,
            },
            Err(e) => TrialOutcome::Failed { reason: e.to_string() },
        }
    };
    Trial {
        spec,
        lattice_parameters: lattice,
        outcome,
    }
}

/// Completed trials by validation CRPS, ties broken by ACE, then the rest;
/// grid values break any remaining tie so the order ignores input order.
pub fn rank(trials: &mut [Trial]) {
    let score = |t: &Trial| match t.outcome {
        TrialOutcome::Ok { val_crps, val_ace } => (0, val_crps, val_ace),
        _ => (1, 0.0, 0.0),
    };
    trials.sort_by(|a, b| {
        let (ga, ca, aa) = score(a);
        let (gb, cb, ab) = score(b);
        ga.cmp(&gb)
            .then(ca.total_cmp(&cb))
            .then(aa.total_cmp(&ab))
            .then_with(|| a.spec.total_cmp(&b.spec))
    });
}

fn midpoints(values: &[usize], best: usize) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_unstable();
    v.dedup();
    let Some(i) = v.iter().position(|&x| x == best) else {
        return vec![];
    };
    let mut out = Vec::new();
    if i > 0 {
        out.push((v[i - 1] + best).div_ceil(2));
    }
    if i + 1 < v.len() {
        out.push((best + v[i + 1]) / 2);
    }
    out.retain(|&m| m != best && !v.contains(&m));
    out
}

/// Second-pass points: the best point with one axis moved halfway to a
/// neighbouring grid value (geometrically for the learning rate).
pub fn refinement(config: &Config, best: &TrialSpec) -> Vec<TrialSpec> {
    let t = &config.tune;
    let mut out = Vec::new();
    let mut lrs = lr_axis(config);
    lrs.sort_by(f64::total_cmp);
    lrs.dedup();
    if let Some(i) = lrs.iter().position(|&x| x == best.learning_rate) {
        let neighbours = [i.checked_sub(1).map(|j| lrs[j]), lrs.get(i + 1).copied()];
        for n in neighbours.into_iter().flatten() {
            out.push(TrialSpec {
                learning_rate: (n * best.learning_rate).sqrt(),
                ..*best
            });
        }
    }
    if config.head.kind == HeadKind::Dln {
        for m in midpoints(t.feature_calib_keypoints.as_deref().unwrap_or(&[]), best.feature_calib_keypoints) {
            out.push(TrialSpec { feature_calib_keypoints: m, ..*best });
        }
        for m in midpoints(t.quantile_calib_keypoints.as_deref().unwrap_or(&[]), best.quantile_calib_keypoints) {
            out.push(TrialSpec { quantile_calib_keypoints: m, ..*best });
        }
        for m in midpoints(t.lattice_keypoints.as_deref().unwrap_or(&[]), best.lattice_keypoints) {
            out.push(TrialSpec { lattice_keypoints: m, ..*best });
        }
        for m in midpoints(t.output_calib_keypoints.as_deref().unwrap_or(&[]), best.output_calib_keypoints) {
            out.push(TrialSpec { output_calib_keypoints: m, ..*best });
        }
        for m in midpoints(t.lattice_input_size.as_deref().unwrap_or(&[]), best.lattice_input_size) {
            out.push(TrialSpec { lattice_input_size: m, ..*best });
        }
    }
    out
}

/// Runs the grid (and the refinement pass when enabled), ranked.
pub fn tune(config: &Config, data: &SeriesDataset, max_params: usize) -> Result<Vec<Trial>> {
    let specs = grid(config)?;
    let mut trials: Vec<Trial> = specs
        .iter()
        .map(|&s| {
            log::info!("trial {s:?}");
            run_trial(config, s, data, max_params)
        })
        .collect();
    rank(&mut trials);
    if config.tune.refine {
        if let Some(best) = trials.first().filter(|t| matches!(t.outcome, TrialOutcome::Ok { .. })) {
            let best = best.spec;
            for s in refinement(config, &best) {
                if trials.iter().all(|t| t.spec.key() != s.key()) {
                    log::info!("refine {s:?}");
                    trials.push(run_trial(config, s, data, max_params));
                }
            }
            rank(&mut trials);
        }
    }
    Ok(trials)
}

pub fn write_trials_csv(path: &Path, trials: &[Trial]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "rank",
        "learning_rate",
        "feature_calib_keypoints",
        "quantile_calib_keypoints",
        "lattice_keypoints",
        "output_calib_keypoints",
        "lattice_input_size",
        "lattice_parameters",
        "val_crps",
        "val_ace",
        "status",
        "reason",
    ])
    .map_err(csv_err)?;
    for (i, t) in trials.iter().enumerate() {
        let s = &t.spec;
        let (crps, ace, status, reason) = match &t.outcome {
            TrialOutcome::Ok { val_crps, val_ace } => (val_crps.to_string(), val_ace.to_string(), "ok", String::new()),
            TrialOutcome::Skipped { reason } => (String::new(), String::new(), "skipped", reason.clone()),
            TrialOutcome::Failed { reason } => (String::new(), String::new(), "failed", reason.clone()),
        };
        w.write_record([
            (i + 1).to_string(),
            s.learning_rate.to_string(),
            s.feature_calib_keypoints.to_string(),
            s.quantile_calib_keypoints.to_string(),
            s.lattice_keypoints.to_string(),
            s.output_calib_keypoints.to_string(),
            s.lattice_input_size.to_string(),
            t.lattice_parameters.to_string(),
            crps,
            ace,
            status.to_string(),
            reason,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `tune`: writes `trials.csv` to `out_dir`.
pub fn cmd_tune(config: &Config, max_params: Option<usize>, out_dir: &Path) -> Result<Vec<Trial>> {
    let data = load_dataset(config, None)?;
    let trials = tune(config, &data, max_params.unwrap_or(config.tune.max_params))?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_trials_csv(&out_dir.join("trials.csv"), &trials)?;
    Ok(trials)
}
