//! Benchmark data: synthetic regression targets, the two-spirals problem,
//! delimited classification files described by a schema, and the plain-text
//! sample file format.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ann::{network_output, OutputWeights, ParamVector, Topology};
use crate::error::{Error, Result};

/// Default standard deviation of additive target noise.
pub const DEFAULT_NOISE_SIGMA: f64 = 5e-3;
/// Default training/test sizes of the regression problems.
pub const DEFAULT_REGRESSION_SAMPLES: usize = 200;

// Below this argument the sinc family is evaluated by its Taylor expansion.
const SINC_SERIES_CUTOFF: f64 = 1e-8;

/// One input/target pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    Classification,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Regression => "regression",
            TaskKind::Classification => "classification",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(TaskKind::Regression),
            "classification" => Ok(TaskKind::Classification),
            other => Err(Error::Dataset(format!("unknown task kind `{other}`"))),
        }
    }
}

/// A train/test partitioned data set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub kind: TaskKind,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Number of classes; `None` for regression.
    pub class_count: Option<usize>,
}

impl Dataset {
    fn from_parts(
        name: &str,
        kind: TaskKind,
        train: Vec<Sample>,
        test: Vec<Sample>,
    ) -> Result<Self> {
        let first = train
            .first()
            .or_else(|| test.first())
            .ok_or(Error::EmptySamples)?;
        let (input_dim, output_dim) = (first.x.len(), first.y.len());
        for s in train.iter().chain(&test) {
            if s.x.len() != input_dim || s.y.len() != output_dim {
                return Err(Error::Dataset(format!(
                    "{name}: inconsistent sample dimensions"
                )));
            }
        }
        Ok(Dataset {
            name: name.to_string(),
            kind,
            train,
            test,
            input_dim,
            output_dim,
            class_count: (kind == TaskKind::Classification).then_some(output_dim),
        })
    }

    /// Checks that the data fits a network topology.
    pub fn check_topology(&self, topology: &Topology) -> Result<()> {
        if topology.input_dim() != self.input_dim || topology.output_dim() != self.output_dim {
            return Err(Error::Config(format!(
                "topology {topology} does not match data set {} (d={}, q={})",
                self.name, self.input_dim, self.output_dim
            )));
        }
        Ok(())
    }

    /// Writes `<name>.train.dat` and `<name>.test.dat` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let train = dir.join(format!("{}.train.dat", self.name));
        let test = dir.join(format!("{}.test.dat", self.name));
        write_samples(
            &train,
            self.kind,
            self.input_dim,
            self.output_dim,
            &self.train,
        )?;
        write_samples(
            &test,
            self.kind,
            self.input_dim,
            self.output_dim,
            &self.test,
        )?;
        Ok((train, test))
    }

    /// Loads a data set from a pair of sample files.
    pub fn from_files(name: &str, train: &Path, test: &Path) -> Result<Self> {
        let a = read_samples(train)?;
        let b = read_samples(test)?;
        if (a.kind, a.input_dim, a.output_dim) != (b.kind, b.input_dim, b.output_dim) {
            return Err(Error::Dataset(format!(
                "headers of {} and {} disagree",
                train.display(),
                test.display()
            )));
        }
        Dataset::from_parts(name, a.kind, a.samples, b.samples)
    }
}

/// Additive Gaussian target noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma: DEFAULT_NOISE_SIGMA,
            seed: 1,
        }
    }
}

/// The synthetic regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetFunction {
    /// `(x + 0.5)^2 (0.1 + (x + 0.65)^2)`
    Syn5,
    /// `sin(10x) / (10x)`
    Sinc,
    /// `x / 2 + sin(10x) / (10x)`
    IncSinc,
    /// `sin(5r) / (15r)`, `r = |x|`
    Sinc2d,
}

impl TargetFunction {
    pub const ALL: [TargetFunction; 4] = [
        TargetFunction::Syn5,
        TargetFunction::Sinc,
        TargetFunction::IncSinc,
        TargetFunction::Sinc2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TargetFunction::Syn5 => "syn5",
            TargetFunction::Sinc => "sinc",
            TargetFunction::IncSinc => "incsinc",
            TargetFunction::Sinc2d => "sinc2d",
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            TargetFunction::Sinc2d => 2,
            _ => 1,
        }
    }

    pub fn eval(self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                what: "target function input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(match self {
            TargetFunction::Syn5 => {
                let x = x[0];
                (x + 0.5).powi(2) * (0.1 + (x + 0.65).powi(2))
            }
            TargetFunction::Sinc => sinc(10.0 * x[0]),
            TargetFunction::IncSinc => x[0] / 2.0 + sinc(10.0 * x[0]),
            TargetFunction::Sinc2d => {
                let r = x[0].hypot(x[1]);
                sinc(5.0 * r) / 3.0
            }
        })
    }
}

impl FromStr for TargetFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TargetFunction::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Dataset(format!("unknown target function `{s}`")))
    }
}

/// `sin(t) / t` with the removable singularity filled in.
fn sinc(t: f64) -> f64 {
    if t.abs() < SINC_SERIES_CUTOFF {
        1.0 - t * t / 6.0
    } else {
        t.sin() / t
    }
}

/// Evaluates the named target function at `x`.
pub fn target_function(name: &str, x: &[f64]) -> Result<f64> {
    name.parse::<TargetFunction>()?.eval(x)
}

/// Samples a regression data set: inputs uniform on `[-1, 1]^d`, targets
/// `f(x)` plus Gaussian noise. Training samples are drawn first.
pub fn gen_regression(
    name: &str,
    n_train: usize,
    n_test: usize,
    noise: NoiseSpec,
) -> Result<Dataset> {
    let f: TargetFunction = name.parse()?;
    if n_train == 0 || n_test == 0 {
        return Err(Error::Dataset("sample counts must be at least 1".into()));
    }
    if !noise.sigma.is_finite() || noise.sigma < 0.0 {
        return Err(Error::Dataset(format!(
            "invalid noise sigma {}",
            noise.sigma
        )));
    }
    let normal = Normal::new(0.0, noise.sigma).map_err(|e| Error::Dataset(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut samples = Vec::with_capacity(n_train + n_test);
    for _ in 0..n_train + n_test {
        let x: Vec<f64> = (0..f.input_dim())
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let y = f.eval(&x)? + normal.sample(&mut rng);
        samples.push(Sample { x, y: vec![y] });
    }
    let test = samples.split_off(n_train);
    Dataset::from_parts(f.name(), TaskKind::Regression, samples, test)
}

/// Repeatedly sends the next `a` items to the training part and the next
/// `b` items to the test part until the input is exhausted.
pub fn interleave_split<T>(
    items: impl IntoIterator<Item = T>,
    a: usize,
    b: usize,
) -> (Vec<T>, Vec<T>) {
    assert!(a >= 1 && b >= 1, "split counts must be positive");
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, item) in items.into_iter().enumerate() {
        if i % (a + b) < a {
            train.push(item);
        } else {
            test.push(item);
        }
    }
    (train, test)
}

/// Target vector of class `class` (0-based) among `count` classes.
pub fn one_hot(class: usize, count: usize) -> Result<Vec<f64>> {
    if class >= count {
        return Err(Error::Index(format!(
            "class {class} out of range for {count} classes"
        )));
    }
    let mut y = vec![0.0; count];
    y[class] = 1.0;
    Ok(y)
}

/// The canonical 194-point two-spirals problem, inputs scaled into
/// `[-1, 1]^2`, classes alternating pairwise, split 2/2.
pub fn gen_two_spirals() -> Dataset {
    let mut samples = Vec::with_capacity(194);
    for i in 0..97 {
        let angle = i as f64 * std::f64::consts::PI / 16.0;
        let radius = (104 - i) as f64 / 104.0;
        let (x, y) = (radius * angle.sin(), radius * angle.cos());
        samples.push(Sample {
            x: vec![x, y],
            y: vec![1.0, 0.0],
        });
        samples.push(Sample {
            x: vec![-x, -y],
            y: vec![0.0, 1.0],
        });
    }
    let (train, test) = interleave_split(samples, 2, 2);
    Dataset::from_parts("two-spirals", TaskKind::Classification, train, test)
        .expect("generator produces consistent samples")
}

/// Index of the largest component; the first one wins ties.
pub fn winner(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Percentage of samples whose winner-takes-all prediction matches the
/// one-hot target.
pub fn classification_success(
    topology: &Topology,
    theta: &ParamVector,
    weights: &OutputWeights,
    samples: &[Sample],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut correct = 0usize;
    for s in samples {
        let out = network_output(topology, theta, weights, &s.x)?;
        if winner(&out) == winner(&s.y) {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / samples.len() as f64)
}

/// How one column of a classification file is interpreted.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnRule {
    /// Real-valued attribute, rescaled over the file per the schema's [`Scaling`].
    Numeric,
    /// Symbolic attribute mapped through a fixed table.
    Categorical(Vec<(String, f64)>),
    /// The class label, with the class list in target order.
    Label(Vec<String>),
    Ignore,
}

/// Per-column treatment of numeric attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scaling {
    /// Affine map of the observed range onto `[-1, 1]`.
    #[default]
    MinMax,
    /// Zero mean, unit sample standard deviation.
    ZScore,
    /// Values used as read.
    None,
}

impl FromStr for Scaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(Scaling::MinMax),
            "zscore" => Ok(Scaling::ZScore),
            "none" => Ok(Scaling::None),
            other => Err(Error::Config(format!("unknown scaling `{other}`"))),
        }
    }
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scaling::MinMax => "minmax",
            Scaling::ZScore => "zscore",
            Scaling::None => "none",
        })
    }
}

/// Column directives for a delimited classification file.
///
/// ```text
/// # comment
/// delimiter ,
/// split 1 1
/// scale minmax
/// feature numeric
/// feature categorical x=1 o=-1 b=0
/// label yes no
/// ignore
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub delimiter: char,
    pub split: (usize, usize),
    pub scaling: Scaling,
    pub columns: Vec<ColumnRule>,
}

impl Schema {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut delimiter = ',';
        let mut split = (1, 1);
        let mut scaling = Scaling::default();
        let mut columns = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::Parse {
                path: origin.to_string(),
                line: no + 1,
                reason,
            };
            let mut words = line.split_whitespace();
            match words.next().unwrap_or_default() {
                "delimiter" => {
                    let d = words
                        .next()
                        .ok_or_else(|| err("missing delimiter".into()))?;
                    delimiter = match d {
                        "tab" => '\t',
                        "space" => ' ',
                        d if d.chars().count() == 1 => d.chars().next().unwrap(),
                        d => return Err(err(format!("bad delimiter `{d}`"))),
                    };
                }
                "split" => {
                    let mut n = || -> Result<usize> {
                        words
                            .next()
                            .and_then(|w| w.parse().ok())
                            .filter(|&v: &usize| v >= 1)
                            .ok_or_else(|| err("split needs two positive integers".into()))
                    };
                    split = (n()?, n()?);
                }
                "scale" => {
                    scaling = words
                        .next()
                        .ok_or_else(|| err("missing scaling".into()))?
                        .parse()
                        .map_err(|e: Error| err(e.to_string()))?;
                }
                "feature" => match words.next() {
                    Some("numeric") => columns.push(ColumnRule::Numeric),
                    Some("categorical") => {
                        let map = words
                            .map(|w| {
                                let (k, v) = w
                                    .split_once('=')
                                    .ok_or_else(|| err(format!("bad mapping `{w}`")))?;
                                let v =
                                    v.parse().map_err(|_| err(format!("bad value in `{w}`")))?;
                                Ok((k.to_string(), v))
                            })
                            .collect::<Result<Vec<_>>>()?;
                        if map.is_empty() {
                            return Err(err("categorical feature without values".into()));
                        }
                        columns.push(ColumnRule::Categorical(map));
                    }
                    other => return Err(err(format!("unknown feature type {other:?}"))),
                },
                "label" => {
                    let classes: Vec<String> = words.map(str::to_string).collect();
                    if classes.is_empty() {
                        return Err(err("label without classes".into()));
                    }
                    columns.push(ColumnRule::Label(classes));
                }
                "ignore" => columns.push(ColumnRule::Ignore),
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        let labels = columns
            .iter()
            .filter(|c| matches!(c, ColumnRule::Label(_)))
            .count();
        if labels != 1 {
            return Err(Error::Dataset(format!(
                "{origin}: schema needs exactly one label column, found {labels}"
            )));
        }
        Ok(Schema {
            delimiter,
            split,
            scaling,
            columns,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::parse(&text, &path.display().to_string())
    }

    fn classes(&self) -> &[String] {
        self.columns
            .iter()
            .find_map(|c| match c {
                ColumnRule::Label(v) => Some(v.as_slice()),
                _ => None,
            })
            .expect("validated on parse")
    }
}

/// Parses delimited classification records according to `schema`.
pub fn parse_classification(
    name: &str,
    text: &str,
    schema: &Schema,
    origin: &str,
) -> Result<Dataset> {
    let classes = schema.classes();
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: origin.to_string(),
            line: no + 1,
            reason,
        };
        let fields: Vec<&str> = if schema.delimiter == ' ' {
            line.split_whitespace().collect()
        } else {
            line.split(schema.delimiter).map(str::trim).collect()
        };
        if fields.len() != schema.columns.len() {
            return Err(err(format!(
                "expected {} fields, found {}",
                schema.columns.len(),
                fields.len()
            )));
        }
        let mut row = Vec::new();
        let mut label = None;
        for (field, rule) in fields.iter().zip(&schema.columns) {
            match rule {
                ColumnRule::Numeric => row.push(
                    field
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| err(format!("`{field}` is not a number")))?,
                ),
                ColumnRule::Categorical(map) => row.push(
                    map.iter()
                        .find(|(k, _)| k == field)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| err(format!("unknown category `{field}`")))?,
                ),
                ColumnRule::Label(_) => {
                    label = Some(
                        classes
                            .iter()
                            .position(|c| c == field)
                            .ok_or_else(|| err(format!("unknown label `{field}`")))?,
                    )
                }
                ColumnRule::Ignore => {}
            }
        }
        features.push(row);
        labels.push(label.expect("schema has a label column"));
    }
    if features.is_empty() {
        return Err(Error::EmptySamples);
    }

    // Constant columns map to 0 under either rescaling.
    let mut col = 0;
    for rule in &schema.columns {
        match rule {
            ColumnRule::Numeric => {
                let values: Vec<f64> = features.iter().map(|r| r[col]).collect();
                match schema.scaling {
                    Scaling::MinMax => {
                        let (lo, hi) = values
                            .iter()
                            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                                (lo.min(v), hi.max(v))
                            });
                        for r in &mut features {
                            r[col] = if hi > lo {
                                2.0 * (r[col] - lo) / (hi - lo) - 1.0
                            } else {
                                0.0
                            };
                        }
                    }
                    Scaling::ZScore => {
                        let n = values.len() as f64;
                        let mean = values.iter().sum::<f64>() / n;
                        let var = if values.len() > 1 {
                            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
                        } else {
                            0.0
                        };
                        let sd = var.sqrt();
                        for r in &mut features {
                            r[col] = if sd > 0.0 { (r[col] - mean) / sd } else { 0.0 };
                        }
                    }
                    Scaling::None => {}
                }
                col += 1;
            }
            ColumnRule::Categorical(_) => col += 1,
            _ => {}
        }
    }

    let samples = features
        .into_iter()
        .zip(labels)
        .map(|(x, label)| {
            Ok(Sample {
                x,
                y: one_hot(label, classes.len())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = interleave_split(samples, schema.split.0, schema.split.1);
    Dataset::from_parts(name, TaskKind::Classification, train, test)
}

/// Loads a delimited classification file described by a schema file.
pub fn load_classification(path: &Path, schema_path: &Path) -> Result<Dataset> {
    let schema = Schema::from_file(schema_path)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    parse_classification(name, &text, &schema, &path.display().to_string())
}

const IRIS_DATA: &str = include_str!("../data/iris.data");
const IRIS_SCHEMA: &str = include_str!("../data/iris.schema");
const TIC_TAC_TOE_DATA: &str = include_str!("../data/tic-tac-toe.data");
const TIC_TAC_TOE_SCHEMA: &str = include_str!("../data/tic-tac-toe.schema");
const BALANCE_DATA: &str = include_str!("../data/balance-scale.data");
const BALANCE_SCHEMA: &str = include_str!("../data/balance-scale.schema");

/// Names accepted by [`builtin_dataset`].
pub const BUILTIN_NAMES: [&str; 8] = [
    "syn5",
    "sinc",
    "incsinc",
    "sinc2d",
    "iris",
    "tic-tac-toe",
    "balance",
    "two-spirals",
];

/// One of the bundled classification data sets.
pub fn builtin_classification(name: &str) -> Result<Dataset> {
    let (data, schema) = match name {
        "iris" => (IRIS_DATA, IRIS_SCHEMA),
        "tic-tac-toe" => (TIC_TAC_TOE_DATA, TIC_TAC_TOE_SCHEMA),
        "balance" => (BALANCE_DATA, BALANCE_SCHEMA),
        "two-spirals" => return Ok(gen_two_spirals()),
        other => {
            return Err(Error::Dataset(format!(
                "unknown classification data set `{other}`"
            )))
        }
    };
    let schema = Schema::parse(schema, name)?;
    parse_classification(name, data, &schema, name)
}

/// Any bundled problem: regression targets are sampled with the default
/// sizes and the given noise.
pub fn builtin_dataset(name: &str, noise: NoiseSpec) -> Result<Dataset> {
    if name.parse::<TargetFunction>().is_ok() {
        gen_regression(
            name,
            DEFAULT_REGRESSION_SAMPLES,
            DEFAULT_REGRESSION_SAMPLES,
            noise,
        )
    } else {
        builtin_classification(name)
    }
}

/// Contents of a sample file.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFile {
    pub kind: TaskKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub samples: Vec<Sample>,
}

/// Writes samples as `# d=<d> q=<q> kind=<kind>` followed by one
/// space-separated line per sample, inputs then targets.
pub fn write_samples(
    path: &Path,
    kind: TaskKind,
    d: usize,
    q: usize,
    samples: &[Sample],
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# d={d} q={q} kind={kind}\n"));
    for s in samples {
        let line: Vec<String> = s.x.iter().chain(&s.y).map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: &Path) -> Result<SampleFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_samples(&text, &path.display().to_string())
}

pub fn parse_samples(text: &str, origin: &str) -> Result<SampleFile> {
    let err = |line: usize, reason: String| Error::Parse {
        path: origin.to_string(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "missing header".into()))?;
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| err(1, "header must start with `#`".into()))?;
    let (mut d, mut q, mut kind) = (None, None, None);
    for field in header.split_whitespace() {
        match field.split_once('=') {
            Some(("d", v)) => d = v.parse::<usize>().ok(),
            Some(("q", v)) => q = v.parse::<usize>().ok(),
            Some(("kind", v)) => kind = v.parse::<TaskKind>().ok(),
            _ => return Err(err(1, format!("unexpected header field `{field}`"))),
        }
    }
    let (d, q, kind) = match (d, q, kind) {
        (Some(d), Some(q), Some(k)) if d > 0 && q > 0 => (d, q, k),
        _ => return Err(err(1, "header needs d=<n> q=<n> kind=<kind>".into())),
    };
    let mut samples = Vec::new();
    for (no, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| err(no + 1, format!("`{v}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != d + q {
            return Err(err(
                no + 1,
                format!("expected {} values, found {}", d + q, values.len()),
            ));
        }
        samples.push(Sample {
            x: values[..d].to_vec(),
            y: values[d..].to_vec(),
        });
    }
    Ok(SampleFile {
        kind,
        input_dim: d,
        output_dim: q,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::parse_topology;

    #[test]
    fn target_values() {
        assert_eq!(target_function("syn5", &[-0.5]).unwrap(), 0.0);
        assert_eq!(target_function("sinc", &[0.0]).unwrap(), 1.0);
        assert_eq!(target_function("incsinc", &[0.0]).unwrap(), 1.0);
        assert_eq!(target_function("sinc2d", &[0.0, 0.0]).unwrap(), 1.0 / 3.0);
        let x: f64 = 0.3;
        assert_eq!(
            target_function("sinc", &[x]).unwrap(),
            (10.0 * x).sin() / (10.0 * x)
        );
        assert!(target_function("nope", &[0.0]).is_err());
        assert!(target_function("sinc2d", &[0.0]).is_err());
    }

    #[test]
    fn sinc_is_continuous_at_zero() {
        for &x in &[1e-6, -1e-6, 1e-9, 3e-10, 1e-12] {
            assert!((target_function("sinc", &[x]).unwrap() - 1.0).abs() <= 1e-9);
            assert!((target_function("incsinc", &[x]).unwrap() - 1.0).abs() <= 1e-6);
            assert!((target_function("sinc2d", &[x, x]).unwrap() - 1.0 / 3.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn regression_generation() {
        let ds = gen_regression(
            "sinc",
            200,
            200,
            NoiseSpec {
                sigma: 0.0,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!((ds.train.len(), ds.test.len()), (200, 200));
        for s in ds.train.iter().chain(&ds.test) {
            assert!(s.x[0].abs() <= 1.0);
            assert_eq!(s.y[0], target_function("sinc", &s.x).unwrap());
        }
        let noisy = gen_regression("sinc2d", 50, 10, NoiseSpec::default()).unwrap();
        assert_eq!(
            noisy,
            gen_regression("sinc2d", 50, 10, NoiseSpec::default()).unwrap()
        );
        assert_eq!(noisy.input_dim, 2);
        assert!(gen_regression("sinc", 0, 10, NoiseSpec::default()).is_err());
        assert!(gen_regression("bogus", 10, 10, NoiseSpec::default()).is_err());
    }

    #[test]
    fn splits() {
        let (train, test) = interleave_split(1..=6, 1, 1);
        assert_eq!((train, test), (vec![1, 3, 5], vec![2, 4, 6]));
        let (train, test) = interleave_split(1..=8, 2, 2);
        assert_eq!((train, test), (vec![1, 2, 5, 6], vec![3, 4, 7, 8]));
        let (train, test) = interleave_split(0..625, 1, 1);
        assert_eq!((train.len(), test.len()), (313, 312));
    }

    #[test]
    fn one_hot_vectors() {
        assert_eq!(one_hot(1, 3).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(one_hot(0, 1).unwrap(), vec![1.0]);
        assert!(one_hot(3, 3).is_err());
    }

    #[test]
    fn two_spirals_shape() {
        let ds = gen_two_spirals();
        assert_eq!(ds.train.len() + ds.test.len(), 194);
        assert_eq!((ds.train.len(), ds.test.len()), (98, 96));
        assert_eq!(ds.train[0].x, vec![0.0, 1.0]);
        assert_eq!(ds.train[0].y, vec![1.0, 0.0]);
        assert!(ds
            .train
            .iter()
            .chain(&ds.test)
            .all(|s| s.x.iter().all(|v| v.abs() <= 1.0)));
    }

    #[test]
    fn bundled_classification_sets() {
        let iris = builtin_classification("iris").unwrap();
        assert_eq!((iris.input_dim, iris.output_dim), (4, 3));
        assert_eq!((iris.train.len(), iris.test.len()), (75, 75));
        let ttt = builtin_classification("tic-tac-toe").unwrap();
        assert_eq!((ttt.input_dim, ttt.output_dim), (9, 2));
        assert_eq!((ttt.train.len(), ttt.test.len()), (479, 479));
        let balance = builtin_classification("balance").unwrap();
        assert_eq!((balance.input_dim, balance.output_dim), (4, 3));
        assert_eq!((balance.train.len(), balance.test.len()), (313, 312));
        for ds in [&iris, &ttt, &balance] {
            for s in ds.train.iter().chain(&ds.test) {
                assert_eq!(s.y.iter().sum::<f64>(), 1.0);
                assert!(s.y.iter().all(|v| *v == 0.0 || *v == 1.0));
            }
        }
        for ds in [&ttt, &balance] {
            for s in ds.train.iter().chain(&ds.test) {
                assert!(s.x.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
        // iris is standardized.
        for j in 0..4 {
            let col: Vec<f64> = iris
                .train
                .iter()
                .chain(&iris.test)
                .map(|s| s.x[j])
                .collect();
            let mean = col.iter().sum::<f64>() / 150.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 149.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_directive() {
        let text = "1,a\n2,b\n4,a\n5,b\n";
        let load = |scale: &str| {
            let schema =
                Schema::parse(&format!("{scale}feature numeric\nlabel a b\n"), "s").unwrap();
            let ds = parse_classification("t", text, &schema, "t").unwrap();
            // split 1/1 puts rows 0 and 2 into train
            [
                ds.train[0].x[0],
                ds.test[0].x[0],
                ds.train[1].x[0],
                ds.test[1].x[0],
            ]
        };
        assert_eq!(load(""), [-1.0, -0.5, 0.5, 1.0]);
        assert_eq!(load("scale minmax\n"), [-1.0, -0.5, 0.5, 1.0]);
        assert_eq!(load("scale none\n"), [1.0, 2.0, 4.0, 5.0]);
        // mean 3, sample variance 10/3
        let sd = (10.0f64 / 3.0).sqrt();
        let z = load("scale zscore\n");
        for (got, raw) in z.iter().zip([1.0, 2.0, 4.0, 5.0]) {
            assert!((got - (raw - 3.0) / sd).abs() < 1e-15);
        }
        assert!(Schema::parse("scale log\nlabel a\n", "s").is_err());
        assert!(Schema::parse("scale\nlabel a\n", "s").is_err());
    }

    #[test]
    fn malformed_row_names_line() {
        let schema = Schema::parse(IRIS_SCHEMA, "iris.schema").unwrap();
        let text = "5.1,3.5,1.4,0.2,Iris-setosa\n4.9,3.0,1.4,Iris-setosa\n";
        match parse_classification("x", text, &schema, "bad.data") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let text = "5.1,3.5,1.4,0.2,Iris-unknown\n";
        assert!(matches!(
            parse_classification("x", text, &schema, "bad.data"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn schema_errors() {
        assert!(Schema::parse("feature numeric\n", "s").is_err());
        assert!(Schema::parse("label a b\nfeature fuzzy\n", "s").is_err());
        assert!(Schema::parse("label a\nsplit 0 1\n", "s").is_err());
        let s = Schema::parse("delimiter tab\nsplit 2 3\nignore\nlabel a b\n", "s").unwrap();
        assert_eq!((s.delimiter, s.split), ('\t', (2, 3)));
    }

    #[test]
    fn winner_takes_all() {
        let t = parse_topology("1-1-2").unwrap();
        let theta = ParamVector::new(vec![0.0, 0.0]);
        // Zero hidden output: both outputs zero, ties go to class 0.
        let w = OutputWeights::zeros(2, 1);
        let samples: Vec<Sample> = [0, 0, 1, 0]
            .iter()
            .map(|&c| Sample {
                x: vec![0.1],
                y: one_hot(c, 2).unwrap(),
            })
            .collect();
        assert_eq!(
            classification_success(&t, &theta, &w, &samples).unwrap(),
            75.0
        );
        assert!(classification_success(&t, &theta, &w, &[]).is_err());
        assert_eq!(winner(&[0.2, 0.9, 0.9]), 1);
    }

    #[test]
    fn sample_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_regression("syn5", 7, 3, NoiseSpec::default()).unwrap();
        let (train, test) = ds.write_files(dir.path()).unwrap();
        let back = Dataset::from_files("syn5", &train, &test).unwrap();
        assert_eq!(back, ds);
        let text = fs::read_to_string(&train).unwrap();
        assert!(text.starts_with("# d=1 q=1 kind=regression\n"));

        assert!(parse_samples("# d=1 q=1 kind=regression\n0.5\n", "f").is_err());
        assert!(parse_samples("d=1 q=1\n", "f").is_err());
    }
}
