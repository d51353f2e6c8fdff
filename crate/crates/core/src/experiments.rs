//! Repeated independent runs of one configuration, summarized as mean
//! function evaluations (MFE), their spread and the success rate.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::ann::{CostModel, OutputWeights, PenaltyMode, Topology};
use crate::datasets::{classification_success, Dataset, TaskKind};
use crate::de::{run_de, DeConfig, NetworkProblem, RunResult};
use crate::error::{Error, Result};

/// Optimizer variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Plain Differential Evolution.
    De,
    /// Differential Evolution with symmetry breaking.
    DeSb,
}

impl Variant {
    pub fn symmetry_breaking(self) -> bool {
        self == Variant::DeSb
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::De => "de",
            Variant::DeSb => "de-sb",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "de" => Ok(Variant::De),
            "de-sb" => Ok(Variant::DeSb),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected de or de-sb)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: Arc<Dataset>,
    pub topology: Topology,
    pub variant: Variant,
    /// Optimizer settings; `seed` and `symmetry_breaking` are overridden per
    /// run from `base_seed` and `variant`.
    pub de: DeConfig,
    pub runs: usize,
    pub base_seed: u64,
    pub penalty_mode: PenaltyMode,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        self.dataset.check_topology(&self.topology)?;
        self.de.validate()
    }

    /// Optimizer settings of run `index`.
    pub fn run_config(&self, index: usize) -> DeConfig {
        DeConfig {
            seed: self.base_seed.wrapping_add(index as u64),
            symmetry_breaking: self.variant.symmetry_breaking(),
            ..self.de.clone()
        }
    }
}

/// One run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub index: usize,
    pub seed: u64,
    pub result: RunResult,
    /// Output weights solved on the training set for the final best vector.
    pub weights: OutputWeights,
    /// Test MSE (regression) or test classification success in percent.
    pub test_metric: f64,
}

/// Mean and unbiased sample standard deviation; the deviation needs two
/// values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Some(Stat { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub dataset: String,
    pub kind: TaskKind,
    pub topology: Topology,
    pub variant: Variant,
    pub population: usize,
    pub threshold: f64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub runs: Vec<RunRecord>,
    /// Fraction of successful runs.
    pub robustness: f64,
    /// Evaluations to reach the threshold over successful runs; `None` when
    /// no run succeeded.
    pub mfe: Option<Stat>,
    /// Test metric over successful runs.
    pub test_metric: Option<Stat>,
}

impl ExperimentReport {
    pub fn successes(&self) -> usize {
        self.runs.iter().filter(|r| r.result.success).count()
    }

    pub fn metric_name(&self) -> &'static str {
        match self.kind {
            TaskKind::Regression => "test_mse",
            TaskKind::Classification => "test_success_pct",
        }
    }

    /// One line shaped like a results-table row.
    pub fn table_row(&self) -> String {
        let mfe = match self.mfe {
            Some(s) => format!("{:.3e} +- {}", s.mean, fmt_opt_sci(s.std)),
            None => "NA".to_string(),
        };
        let metric = match self.test_metric {
            Some(s) => format!(
                "{}={:.4e} +- {}",
                self.metric_name(),
                s.mean,
                fmt_opt_sci(s.std)
            ),
            None => format!("{}=NA", self.metric_name()),
        };
        format!(
            "{} {} {} [{},{}] {} {}",
            self.dataset,
            self.topology,
            self.variant,
            self.population,
            fmt_num(self.robustness),
            mfe,
            metric
        )
    }
}

fn fmt_opt_sci(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.2e}"))
}

fn fmt_num(v: f64) -> String {
    v.to_string()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_num)
}

/// Test-set quality of a trained parameter vector.
pub fn test_metric(
    dataset: &Dataset,
    topology: &Topology,
    result: &RunResult,
) -> Result<(OutputWeights, f64)> {
    let train = CostModel::new(topology, &dataset.train)?;
    let weights = train.solve_output_weights(&result.best.position)?;
    let metric = match dataset.kind {
        TaskKind::Regression => CostModel::new(topology, &dataset.test)?
            .mse_with_weights(&result.best.position, &weights)?,
        TaskKind::Classification => {
            classification_success(topology, &result.best.position, &weights, &dataset.test)?
        }
    };
    Ok((weights, metric))
}

/// Executes every run of `config`. With `parallel`, runs are spread over the
/// current rayon pool; results are identical either way.
pub fn run_experiment(config: &ExperimentConfig, parallel: bool) -> Result<ExperimentReport> {
    config.validate()?;
    let dataset = &config.dataset;
    let model =
        CostModel::new(&config.topology, &dataset.train)?.with_penalty_mode(config.penalty_mode);
    let problem = NetworkProblem::new(model);

    let one = |index: usize| -> Result<RunRecord> {
        let de = config.run_config(index);
        let result = run_de(&de, &problem)?;
        let (weights, test_metric) = test_metric(dataset, &config.topology, &result)?;
        Ok(RunRecord {
            index,
            seed: de.seed,
            result,
            weights,
            test_metric,
        })
    };
    let runs: Vec<RunRecord> = if parallel {
        (0..config.runs)
            .into_par_iter()
            .map(one)
            .collect::<Result<_>>()?
    } else {
        (0..config.runs).map(one).collect::<Result<_>>()?
    };

    let successful: Vec<&RunRecord> = runs.iter().filter(|r| r.result.success).collect();
    let evals: Vec<f64> = successful
        .iter()
        .map(|r| r.result.evals_used as f64)
        .collect();
    let metrics: Vec<f64> = successful.iter().map(|r| r.test_metric).collect();
    Ok(ExperimentReport {
        dataset: dataset.name.clone(),
        kind: dataset.kind,
        topology: config.topology.clone(),
        variant: config.variant,
        population: config.de.population,
        threshold: config.de.threshold,
        train_samples: dataset.train.len(),
        test_samples: dataset.test.len(),
        robustness: successful.len() as f64 / runs.len() as f64,
        mfe: Stat::of(&evals),
        test_metric: Stat::of(&metrics),
        runs,
    })
}

/// `MFE(DE) / MFE(DE-SB)`.
pub fn mfe_ratio(de: &ExperimentReport, de_sb: &ExperimentReport) -> Result<f64> {
    match (de.mfe, de_sb.mfe) {
        (Some(a), Some(b)) => Ok(a.mean / b.mean),
        _ => Err(Error::Config(
            "MFE ratio needs at least one successful run in both reports".into(),
        )),
    }
}

/// Column names of the summary file.
pub const SUMMARY_HEADER: &str = "dataset,kind,topology,variant,population,epsilon0,runs,successes,robustness,mfe,sigma_mfe,test_metric_name,test_metric,test_metric_std,train_samples,test_samples";

/// Column names of the per-run file.
pub const RUNS_HEADER: &str = "run,seed,success,evals_used,generations,best_total_cost,best_mse,best_penalty,param_norm,test_metric";

/// Column names of trace files.
pub const TRACE_HEADER: &str = "eval_count,best_total_cost";

/// Files written by [`emit_reports`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub summary: PathBuf,
    pub runs: Vec<PathBuf>,
    pub traces: Vec<PathBuf>,
    pub ratio: Option<PathBuf>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn summary_row(report: &ExperimentReport) -> String {
    [
        report.dataset.clone(),
        report.kind.to_string(),
        report.topology.to_string(),
        report.variant.to_string(),
        report.population.to_string(),
        fmt_num(report.threshold),
        report.runs.len().to_string(),
        report.successes().to_string(),
        fmt_num(report.robustness),
        fmt_opt(report.mfe.map(|s| s.mean)),
        fmt_opt(report.mfe.and_then(|s| s.std)),
        report.metric_name().to_string(),
        fmt_opt(report.test_metric.map(|s| s.mean)),
        fmt_opt(report.test_metric.and_then(|s| s.std)),
        report.train_samples.to_string(),
        report.test_samples.to_string(),
    ]
    .join(",")
}

/// Per-run table of one report.
pub fn runs_table(report: &ExperimentReport) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for r in &report.runs {
        let best = &r.result.best;
        out.push_str(
            &[
                r.index.to_string(),
                r.seed.to_string(),
                r.result.success.to_string(),
                r.result.evals_used.to_string(),
                r.result.generations.to_string(),
                fmt_num(best.cost.total()),
                fmt_num(best.cost.mse),
                fmt_num(best.cost.penalty),
                fmt_num(best.position.norm()),
                fmt_num(r.test_metric),
            ]
            .join(","),
        );
        out.push('\n');
    }
    out
}

pub fn trace_table(result: &RunResult) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for cp in &result.trace {
        out.push_str(&format!("{},{}\n", cp.evals, fmt_num(cp.best_cost)));
    }
    out
}

/// Writes `summary.csv` (one row per report), `runs_<variant>.csv`, one
/// trace per run under `traces/<variant>/`, and `ratio.csv` when both
/// variants are present.
pub fn emit_reports(reports: &[ExperimentReport], dir: &Path) -> Result<ReportFiles> {
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    let mut files = ReportFiles {
        summary: dir.join("summary.csv"),
        runs: Vec::new(),
        traces: Vec::new(),
        ratio: None,
    };
    for report in reports {
        summary.push_str(&summary_row(report));
        summary.push('\n');
        let runs = dir.join(format!("runs_{}.csv", report.variant));
        write(&runs, &runs_table(report))?;
        files.runs.push(runs);
        for r in &report.runs {
            let path = dir
                .join("traces")
                .join(report.variant.to_string())
                .join(format!("run_{:03}.csv", r.index));
            write(&path, &trace_table(&r.result))?;
            files.traces.push(path);
        }
    }
    write(&files.summary, &summary)?;

    let de = reports.iter().find(|r| r.variant == Variant::De);
    let sb = reports.iter().find(|r| r.variant == Variant::DeSb);
    if let (Some(de), Some(sb)) = (de, sb) {
        let ratio = mfe_ratio(de, sb).ok();
        let path = dir.join("ratio.csv");
        write(
            &path,
            &format!(
                "dataset,topology,mfe_de,mfe_de_sb,ratio\n{},{},{},{},{}\n",
                de.dataset,
                de.topology,
                fmt_opt(de.mfe.map(|s| s.mean)),
                fmt_opt(sb.mfe.map(|s| s.mean)),
                fmt_opt(ratio)
            ),
        )?;
        files.ratio = Some(path);
    }
    Ok(files)
}

/// Writes the files of a single report.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<ReportFiles> {
    emit_reports(std::slice::from_ref(report), dir)
}
