//! The `desb` command line: `gen`, `run` and `bench`.
//!
//! `run` and `bench` read a flat `key = value` configuration file:
//!
//! ```text
//! # syn5 with symmetry breaking
//! dataset = syn5
//! topology = 1-3-1
//! variant = de-sb
//! np = 80
//! epsilon0 = 5e-5
//! max_evals = 1.5e6
//! runs = 20
//! ```
//!
//! Required keys are `dataset`, `topology`, `variant` (`de`, `de-sb` or
//! `both`), `np` and `epsilon0`. Relative paths are resolved against the
//! directory of the configuration file.

use std::collections::BTreeMap;
use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::ann::{CostModel, PenaltyMode, Topology};
use crate::datasets::{builtin_dataset, load_classification, Dataset, NoiseSpec, BUILTIN_NAMES};
use crate::de::{run_de_with, DeConfig, NetworkProblem, RunOptions, RunResult, DEFAULT_MAX_EVALS};
use crate::error::{Error, Result};
use crate::experiments::{
    emit_reports, mfe_ratio, run_experiment, test_metric, trace_table, ExperimentConfig,
    ExperimentReport, Variant,
};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "DESB_OUTPUT_DIR";
/// Output directory used when neither the config nor the environment names one.
pub const DEFAULT_OUTPUT_DIR: &str = "desb-output";
/// Runs per configuration when `runs` is not given.
pub const DEFAULT_RUNS: usize = 50;

const KEYS: [&str; 16] = [
    "dataset",
    "topology",
    "variant",
    "np",
    "epsilon0",
    "f",
    "cr",
    "max_evals",
    "runs",
    "seed",
    "output_dir",
    "penalty_mode",
    "test_dataset",
    "schema",
    "data_seed",
    "noise_sigma",
];

/// Variants requested by a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantChoice {
    One(Variant),
    Both,
}

impl VariantChoice {
    pub fn variants(self) -> Vec<Variant> {
        match self {
            VariantChoice::One(v) => vec![v],
            VariantChoice::Both => vec![Variant::De, Variant::DeSb],
        }
    }
}

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfigFile {
    /// Built-in data set name or path to a data file.
    pub dataset: String,
    pub topology: Topology,
    pub variant: VariantChoice,
    pub population: usize,
    pub threshold: f64,
    pub weight: f64,
    pub crossover: f64,
    pub max_evals: u64,
    pub runs: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub penalty_mode: PenaltyMode,
    pub test_dataset: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub noise: NoiseSpec,
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl RunConfigFile {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &path.display().to_string(), &base)
    }

    pub fn parse(text: &str, origin: &str, base_dir: &Path) -> Result<Self> {
        let mut values: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse {
                path: origin.to_string(),
                line: no + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim().to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if values
                .insert(key.clone(), (no + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(err(format!("duplicate key `{key}`")));
            }
        }

        let get = |key: &str| values.get(key).map(|(line, v)| (*line, v.as_str()));
        let bad = |key: &str, line: usize, reason: String| Error::Parse {
            path: origin.to_string(),
            line,
            reason: format!("{key}: {reason}"),
        };
        let required = |key: &str| {
            get(key).ok_or_else(|| Error::Config(format!("{origin}: missing required key `{key}`")))
        };
        fn parse_with<T>(
            entry: Option<(usize, &str)>,
            key: &str,
            parse: impl Fn(&str) -> std::result::Result<T, String>,
            bad: &impl Fn(&str, usize, String) -> Error,
        ) -> Result<Option<T>> {
            entry
                .map(|(line, v)| parse(v).map_err(|e| bad(key, line, e)))
                .transpose()
        }
        let float = |v: &str| v.parse::<f64>().map_err(|e| e.to_string());
        let string_err = |v: &str, what: &str| format!("invalid {what} `{v}`");

        let dataset = required("dataset")?.1.to_string();
        if dataset.is_empty() {
            return Err(Error::Config(format!("{origin}: empty dataset")));
        }
        let topology = parse_with(
            Some(required("topology")?),
            "topology",
            |v| v.parse().map_err(|e: Error| e.to_string()),
            &bad,
        )?
        .expect("present");
        let variant = parse_with(
            Some(required("variant")?),
            "variant",
            |v| match v {
                "both" => Ok(VariantChoice::Both),
                v => v
                    .parse()
                    .map(VariantChoice::One)
                    .map_err(|_| string_err(v, "variant")),
            },
            &bad,
        )?
        .expect("present");
        let population =
            parse_with(Some(required("np")?), "np", parse_count, &bad)?.expect("present") as usize;
        let threshold =
            parse_with(Some(required("epsilon0")?), "epsilon0", float, &bad)?.expect("present");
        let weight = parse_with(get("f"), "f", float, &bad)?.unwrap_or(0.5);
        let crossover = parse_with(get("cr"), "cr", float, &bad)?.unwrap_or(0.9);
        let max_evals = parse_with(get("max_evals"), "max_evals", parse_count, &bad)?
            .unwrap_or(DEFAULT_MAX_EVALS);
        let runs = parse_with(get("runs"), "runs", parse_count, &bad)?
            .map_or(DEFAULT_RUNS, |r| r as usize);
        let seed = parse_with(
            get("seed"),
            "seed",
            |v| v.parse::<u64>().map_err(|e| e.to_string()),
            &bad,
        )?
        .unwrap_or(0);
        let penalty_mode = parse_with(
            get("penalty_mode"),
            "penalty_mode",
            |v| v.parse().map_err(|e: Error| e.to_string()),
            &bad,
        )?
        .unwrap_or_default();
        let defaults = NoiseSpec::default();
        let noise = NoiseSpec {
            sigma: parse_with(get("noise_sigma"), "noise_sigma", float, &bad)?
                .unwrap_or(defaults.sigma),
            seed: parse_with(
                get("data_seed"),
                "data_seed",
                |v| v.parse::<u64>().map_err(|e| e.to_string()),
                &bad,
            )?
            .unwrap_or(defaults.seed),
        };
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let output_dir = match get("output_dir") {
            Some((_, v)) => resolve(v),
            None => default_output_dir(),
        };

        let config = RunConfigFile {
            dataset,
            topology,
            variant,
            population,
            threshold,
            weight,
            crossover,
            max_evals,
            runs,
            seed,
            output_dir,
            penalty_mode,
            test_dataset: get("test_dataset").map(|(_, v)| resolve(v)),
            schema: get("schema").map(|(_, v)| resolve(v)),
            noise,
            base_dir: base_dir.to_path_buf(),
        };
        config.de_config(false).validate()?;
        if config.runs == 0 {
            return Err(Error::Config(format!("{origin}: runs must be at least 1")));
        }
        if config.noise.sigma.is_nan() || config.noise.sigma < 0.0 {
            return Err(Error::Config(format!(
                "{origin}: noise_sigma must be non-negative"
            )));
        }
        Ok(config)
    }

    /// Optimizer settings; the seed is the configured base seed.
    pub fn de_config(&self, symmetry_breaking: bool) -> DeConfig {
        DeConfig {
            population: self.population,
            weight: self.weight,
            crossover: self.crossover,
            symmetry_breaking,
            max_evals: self.max_evals,
            threshold: self.threshold,
            seed: self.seed,
            verify_symmetry: false,
        }
    }

    /// Loads the configured data set and checks it against the topology.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let dataset = if let Some(schema) = &self.schema {
            load_classification(&self.resolve(&self.dataset), schema)?
        } else if BUILTIN_NAMES.contains(&self.dataset.as_str()) && self.test_dataset.is_none() {
            builtin_dataset(&self.dataset, self.noise)?
        } else {
            let train = self.resolve(&self.dataset);
            let test = match &self.test_dataset {
                Some(t) => t.clone(),
                None => sibling_test_file(&train).ok_or_else(|| {
                    Error::Config(format!(
                        "`{}` is not a built-in data set; give a `.train.dat` file, test_dataset or schema",
                        self.dataset
                    ))
                })?,
            };
            Dataset::from_files(&data_name(&train), &train, &test)?
        };
        dataset.check_topology(&self.topology)?;
        Ok(dataset)
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Integer that may be written in scientific notation, e.g. `2e6`.
fn parse_count(v: &str) -> std::result::Result<u64, String> {
    if let Ok(n) = v.parse::<u64>() {
        return Ok(n);
    }
    match v.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < u64::MAX as f64 => Ok(x as u64),
        _ => Err(format!("expected a non-negative integer, got `{v}`")),
    }
}

fn default_output_dir() -> PathBuf {
    env::var_os(OUTPUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn sibling_test_file(train: &Path) -> Option<PathBuf> {
    let name = train.file_name()?.to_str()?;
    let stem = name.strip_suffix(".train.dat")?;
    Some(train.with_file_name(format!("{stem}.test.dat")))
}

fn data_name(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("data");
    name.strip_suffix(".train.dat")
        .or_else(|| name.rsplit_once('.').map(|(s, _)| s))
        .unwrap_or(name)
        .to_string()
}

#[derive(Debug, Parser)]
#[command(
    name = "desb",
    version,
    about = "Differential Evolution training of tanh networks with symmetry breaking"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a data set as `<name>.train.dat` and `<name>.test.dat`.
    Gen(GenArgs),
    /// One seeded training run.
    Run(RunArgs),
    /// Repeated runs with summary statistics.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Built-in problem name, or the name given to an ingested file.
    #[arg(long)]
    pub problem: Option<String>,
    /// Noise seed for regression problems.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noise standard deviation for regression problems.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Delimited classification file to convert (needs --schema).
    #[arg(long, requires = "schema")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub schema: Option<PathBuf>,
    /// Output directory; defaults to $DESB_OUTPUT_DIR or `desb-output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThreadArgs {
    /// Worker threads; 0 runs sequentially. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Overrides the configured variant.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Run index; the seed is `seed + index`.
    #[arg(long, default_value_t = 0)]
    pub index: u64,
    #[command(flatten)]
    pub common: ThreadArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// One or more configs; reports are written together.
    #[arg(required = true)]
    pub configs: Vec<PathBuf>,
    #[command(flatten)]
    pub common: ThreadArgs,
}

/// Parses `args` and executes the command, writing human-readable output to
/// `out`.
pub fn run_cli<I, T>(args: I, out: &mut dyn std::io::Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    execute(cli.command, out)
}

pub fn execute(command: Command, out: &mut dyn std::io::Write) -> Result<()> {
    match command {
        Command::Gen(args) => cmd_gen(&args, out),
        Command::Run(args) => {
            let text = with_threads(args.common.threads, |parallel| {
                let mut buf = Vec::new();
                cmd_run(&args, parallel, &mut buf).map(|()| buf)
            })?;
            out.write_all(&text)
                .map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
        Command::Bench(args) => {
            let text = with_threads(args.common.threads, |parallel| {
                let mut buf = Vec::new();
                cmd_bench(&args, parallel, &mut buf).map(|()| buf)
            })?;
            out.write_all(&text)
                .map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
    }
}

fn with_threads<T>(threads: usize, f: impl FnOnce(bool) -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    if threads == 0 {
        return f(false);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    pool.install(|| f(true))
}

fn say(out: &mut dyn std::io::Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io(Path::new("<stdout>"), e))
}

pub fn cmd_gen(args: &GenArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let dir = args.out.clone().unwrap_or_else(default_output_dir);
    let dataset = match (&args.data, &args.schema) {
        (Some(data), Some(schema)) => {
            let mut ds = load_classification(data, schema)?;
            if let Some(name) = &args.problem {
                ds.name = name.clone();
            }
            ds
        }
        _ => {
            let name = args.problem.as_deref().ok_or_else(|| {
                Error::Config("gen needs --problem or --data with --schema".into())
            })?;
            if !BUILTIN_NAMES.contains(&name) {
                return Err(Error::Config(format!(
                    "unknown problem `{name}`; expected one of {}",
                    BUILTIN_NAMES.join(", ")
                )));
            }
            let defaults = NoiseSpec::default();
            builtin_dataset(
                name,
                NoiseSpec {
                    sigma: args.sigma.unwrap_or(defaults.sigma),
                    seed: args.seed.unwrap_or(defaults.seed),
                },
            )?
        }
    };
    let (train, test) = dataset.write_files(&dir)?;
    say(
        out,
        &format!(
            "{}: {} train / {} test samples, d={} q={}\n  {}\n  {}",
            dataset.name,
            dataset.train.len(),
            dataset.test.len(),
            dataset.input_dim,
            dataset.output_dim,
            train.display(),
            test.display()
        ),
    )
}

/// Result of `desb run`.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub result: RunResult,
    pub test_metric: f64,
    pub trace: PathBuf,
    pub params: PathBuf,
}

pub fn cmd_run(args: &RunArgs, parallel: bool, out: &mut dyn std::io::Write) -> Result<()> {
    let config = RunConfigFile::from_file(&args.config)?;
    let variant = match (args.variant, config.variant) {
        (Some(v), _) | (None, VariantChoice::One(v)) => v,
        (None, VariantChoice::Both) => {
            return Err(Error::Config(
                "config has variant = both; choose one with --variant".into(),
            ))
        }
    };
    let dir = args
        .common
        .output_dir
        .clone()
        .unwrap_or_else(|| config.output_dir.clone());
    let outcome = single_run(&config, variant, args.index, parallel, &dir)?;
    let r = &outcome.result;
    say(
        out,
        &format!(
            "{} {} {variant}: success={} evals={} generations={} total={:.6e} mse={:.6e} penalty={:.6e} test_metric={:.6e}\n  {}\n  {}",
            config.dataset,
            config.topology,
            r.success,
            r.evals_used,
            r.generations,
            r.best.cost.total(),
            r.best.cost.mse,
            r.best.cost.penalty,
            outcome.test_metric,
            outcome.trace.display(),
            outcome.params.display(),
        ),
    )
}

/// Trains once and writes `trace.csv` and `params.txt` into `dir`.
pub fn single_run(
    config: &RunConfigFile,
    variant: Variant,
    index: u64,
    parallel: bool,
    dir: &Path,
) -> Result<RunOutcome> {
    let dataset = config.load_dataset()?;
    let model =
        CostModel::new(&config.topology, &dataset.train)?.with_penalty_mode(config.penalty_mode);
    let problem = NetworkProblem::new(model);
    let mut de = config.de_config(variant.symmetry_breaking());
    de.seed = config.seed.wrapping_add(index);
    let result = run_de_with(
        &de,
        &problem,
        RunOptions {
            parallel,
            sink: None,
        },
    )?;
    let (weights, metric) = test_metric(&dataset, &config.topology, &result)?;

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let trace = dir.join("trace.csv");
    fs::write(&trace, trace_table(&result)).map_err(|e| Error::io(&trace, e))?;
    let mut text = format!(
        "# topology={} variant={variant} seed={} success={} evals={}\n",
        config.topology, de.seed, result.success, result.evals_used
    );
    text.push_str("theta");
    for v in result.best.position.iter() {
        text.push_str(&format!(" {v}"));
    }
    text.push('\n');
    for i in 0..weights.rows() {
        text.push_str(&format!("output_row{i}"));
        for v in weights.row(i) {
            text.push_str(&format!(" {v}"));
        }
        text.push('\n');
    }
    let params = dir.join("params.txt");
    fs::write(&params, text).map_err(|e| Error::io(&params, e))?;
    Ok(RunOutcome {
        result,
        test_metric: metric,
        trace,
        params,
    })
}

/// Runs every variant of every config and returns the reports in order.
pub fn bench_reports(configs: &[RunConfigFile], parallel: bool) -> Result<Vec<ExperimentReport>> {
    let mut reports = Vec::new();
    for config in configs {
        let dataset = Arc::new(config.load_dataset()?);
        for variant in config.variant.variants() {
            let experiment = ExperimentConfig {
                dataset: Arc::clone(&dataset),
                topology: config.topology.clone(),
                variant,
                de: config.de_config(variant.symmetry_breaking()),
                runs: config.runs,
                base_seed: config.seed,
                penalty_mode: config.penalty_mode,
            };
            reports.push(run_experiment(&experiment, parallel)?);
        }
    }
    Ok(reports)
}

pub fn cmd_bench(args: &BenchArgs, parallel: bool, out: &mut dyn std::io::Write) -> Result<()> {
    let configs = args
        .configs
        .iter()
        .map(|p| RunConfigFile::from_file(p))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = Vec::new();
    for c in &configs {
        for v in c.variant.variants() {
            if seen.contains(&v) {
                return Err(Error::Config(format!("variant {v} configured twice")));
            }
            seen.push(v);
        }
    }
    let dir = args
        .common
        .output_dir
        .clone()
        .unwrap_or_else(|| configs[0].output_dir.clone());
    let reports = bench_reports(&configs, parallel)?;
    let files = emit_reports(&reports, &dir)?;
    for report in &reports {
        say(out, &report.table_row())?;
    }
    let de = reports.iter().find(|r| r.variant == Variant::De);
    let sb = reports.iter().find(|r| r.variant == Variant::DeSb);
    if let (Some(de), Some(sb)) = (de, sb) {
        let ratio = mfe_ratio(de, sb).map_or_else(|_| "NA".to_string(), |r| format!("{r:.3}"));
        say(out, &format!("ratio MFE(DE)/MFE(DE-SB) = {ratio}"))?;
    }
    say(
        out,
        &format!("summary written to {}", files.summary.display()),
    )
}
