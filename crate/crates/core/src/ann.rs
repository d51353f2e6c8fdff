//! Fixed-topology feedforward networks with tanh hidden layers and a linear
//! output layer whose weights are solved by least squares.
//!
//! The global search vector ([`ParamVector`]) only holds the hidden-layer
//! weights and shifts. For hidden layer `l` (0-based index into
//! [`Topology::layer_sizes`], `1..=L-2`) and neuron `n`, the block
//! `(w[0..N_{l-1}], tau)` is stored contiguously, neurons in order, layers in
//! order. Output weights never live in the search vector: they are re-solved
//! against the training samples on every cost evaluation.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::str::FromStr;

use crate::datasets::Sample;
use crate::error::{Error, Result};

/// Ridge damping added to the diagonal of the normal equations.
pub const RIDGE: f64 = 1e-10;

/// Weight of the feasibility penalty outside the ball `||theta|| <= sqrt(D)`.
pub const PENALTY_WEIGHT: f64 = 50.0;

/// Layer sizes of a network, input layer first, output layer last.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Topology {
    layers: Vec<usize>,
}

impl Topology {
    pub fn new(layers: Vec<usize>) -> Result<Self> {
        let text = layers
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join("-");
        if layers.len() < 3 {
            return Err(Error::Topology {
                text,
                reason: "at least one hidden layer is required".into(),
            });
        }
        if layers.contains(&0) {
            return Err(Error::Topology {
                text,
                reason: "layer sizes must be positive".into(),
            });
        }
        Ok(Topology { layers })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1]
    }

    /// Indices of the hidden layers, `1..=L-2`.
    pub fn hidden_layers(&self) -> std::ops::Range<usize> {
        1..self.layers.len() - 1
    }

    pub fn last_hidden(&self) -> usize {
        self.layers.len() - 2
    }

    /// Size of the last hidden layer, i.e. the number of columns of the
    /// least-squares design matrix.
    pub fn last_hidden_size(&self) -> usize {
        self.layers[self.layers.len() - 2]
    }

    pub fn widest_hidden(&self) -> usize {
        self.hidden_layers()
            .map(|l| self.layers[l])
            .max()
            .unwrap_or(0)
    }

    /// Dimension of the global search vector: `sum N_l * (N_{l-1} + 1)` over
    /// hidden layers.
    pub fn param_dim(&self) -> usize {
        self.hidden_layers()
            .map(|l| self.layers[l] * (self.layers[l - 1] + 1))
            .sum()
    }

    /// Offset of the first parameter of hidden layer `layer`.
    pub fn layer_offset(&self, layer: usize) -> usize {
        debug_assert!(self.hidden_layers().contains(&layer));
        (1..layer)
            .map(|l| self.layers[l] * (self.layers[l - 1] + 1))
            .sum()
    }

    /// Offset of the `(w, tau)` block of hidden neuron `(layer, neuron)`.
    pub fn neuron_offset(&self, layer: usize, neuron: usize) -> usize {
        self.layer_offset(layer) + neuron * (self.layers[layer - 1] + 1)
    }

    pub(crate) fn check_neuron(&self, layer: usize, neuron: usize) -> Result<()> {
        if !self.hidden_layers().contains(&layer) {
            return Err(Error::Index(format!(
                "layer {layer} is not a hidden layer of {self}"
            )));
        }
        if neuron >= self.layers[layer] {
            return Err(Error::Index(format!(
                "neuron {neuron} out of range for layer {layer} with {} neurons",
                self.layers[layer]
            )));
        }
        Ok(())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Topology {
            text: text.to_string(),
            reason,
        };
        let layers = text
            .trim()
            .split('-')
            .map(|field| {
                field
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| bad(format!("`{field}` is not a non-negative integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        Topology::new(layers).map_err(|e| match e {
            Error::Topology { reason, .. } => bad(reason),
            other => other,
        })
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.layers.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

/// Parses a dash-separated topology string such as `"2-3-1-3-1"`.
pub fn parse_topology(text: &str) -> Result<Topology> {
    text.parse()
}

/// Flat vector of hidden-layer weights and shifts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    /// Builds a vector for `topology`, checking length and finiteness.
    pub fn for_topology(topology: &Topology, values: Vec<f64>) -> Result<Self> {
        check_dim("parameter vector", topology.param_dim(), values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "parameter {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(ParamVector(values))
    }

    pub fn norm(&self) -> f64 {
        euclidean_norm(&self.0)
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector(values)
    }
}

/// Output-layer weights, `q x N_{L-1}`, row-major. No bias term.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputWeights {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl OutputWeights {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        OutputWeights {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("output weights", rows * cols, data.len())?;
        Ok(OutputWeights { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, factor: f64) -> Self {
        OutputWeights {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Training cost of a parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostValue {
    pub mse: f64,
    pub penalty: f64,
}

impl CostValue {
    pub fn total(&self) -> f64 {
        self.mse + self.penalty
    }
}

/// How the parameter vector is rescaled before evaluating the error outside
/// the feasible ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyMode {
    /// `theta / ||theta||`, unit norm.
    #[default]
    Literal,
    /// `sqrt(D) * theta / ||theta||`, projection onto the ball boundary.
    Boundary,
}

impl FromStr for PenaltyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(PenaltyMode::Literal),
            "boundary" => Ok(PenaltyMode::Boundary),
            other => Err(Error::Config(format!(
                "unknown penalty mode `{other}` (expected literal or boundary)"
            ))),
        }
    }
}

impl fmt::Display for PenaltyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyMode::Literal => "literal",
            PenaltyMode::Boundary => "boundary",
        })
    }
}

fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Evaluates the hidden layers for one input. `buf` and `out` are scratch
/// buffers of at least the widest hidden layer; the last hidden output ends
/// up in the returned slice.
#[allow(clippy::needless_range_loop)]
fn hidden_into<'a>(
    topology: &Topology,
    theta: &[f64],
    x: &[f64],
    buf_a: &'a mut [f64],
    buf_b: &'a mut [f64],
) -> &'a [f64] {
    let sizes = &topology.layers;
    let mut offset = 0;
    let mut cur: &mut [f64] = buf_a;
    let mut next: &mut [f64] = buf_b;
    let fan_in = sizes[0];
    cur[..fan_in].copy_from_slice(x);
    for l in topology.hidden_layers() {
        let fan_in = sizes[l - 1];
        let width = sizes[l];
        for n in 0..width {
            let block = &theta[offset..offset + fan_in + 1];
            let mut act = block[fan_in];
            for (w, v) in block[..fan_in].iter().zip(&cur[..fan_in]) {
                act += w * v;
            }
            next[n] = act.tanh();
            offset += fan_in + 1;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    &cur[..sizes[sizes.len() - 2]]
}

/// Euclidean norm, summed in ascending order of the squares so that the
/// result is bit-identical under any reordering or sign change of `values`.
pub fn euclidean_norm(values: &[f64]) -> f64 {
    let mut squares: Vec<f64> = values.iter().map(|v| v * v).collect();
    squares.sort_unstable_by(f64::total_cmp);
    squares.iter().sum::<f64>().sqrt()
}

/// Output of the last hidden layer for input `x`.
pub fn forward_hidden(topology: &Topology, theta: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    check_dim("parameter vector", topology.param_dim(), theta.len())?;
    check_dim("input", topology.input_dim(), x.len())?;
    let width = topology.widest_hidden().max(topology.input_dim());
    let mut a = vec![0.0; width];
    let mut b = vec![0.0; width];
    Ok(hidden_into(topology, theta, x, &mut a, &mut b).to_vec())
}

/// Network output `W * x^{L-1}` for input `x`.
pub fn network_output(
    topology: &Topology,
    theta: &ParamVector,
    weights: &OutputWeights,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_dim("output weight rows", topology.output_dim(), weights.rows())?;
    check_dim(
        "output weight columns",
        topology.last_hidden_size(),
        weights.cols(),
    )?;
    let hidden = forward_hidden(topology, theta, x)?;
    Ok((0..weights.rows())
        .map(|r| dot(weights.row(r), &hidden))
        .collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Flattened samples prepared for repeated cost evaluation.
///
/// Evaluation is a pure function of the parameter vector; a model can be
/// shared between threads.
#[derive(Debug, Clone)]
pub struct CostModel {
    topology: Topology,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    samples: usize,
    penalty_mode: PenaltyMode,
}

/// Scratch space for one cost evaluation.
struct Workspace {
    design: Vec<f64>,
    // Column-major (N + K) x N ridge-augmented design, factorized in place.
    qr: Vec<f64>,
    // Column-major (N + K) x q right-hand sides.
    targets: Vec<f64>,
    reflector: Vec<f64>,
    // Solution, N x q row-major: column r holds output row r.
    rhs: Vec<f64>,
    buf_a: Vec<f64>,
    buf_b: Vec<f64>,
}

impl CostModel {
    pub fn new(topology: &Topology, samples: &[Sample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let d = topology.input_dim();
        let q = topology.output_dim();
        let mut inputs = Vec::with_capacity(samples.len() * d);
        let mut targets = Vec::with_capacity(samples.len() * q);
        for s in samples {
            check_dim("sample input", d, s.x.len())?;
            check_dim("sample target", q, s.y.len())?;
            inputs.extend_from_slice(&s.x);
            targets.extend_from_slice(&s.y);
        }
        Ok(CostModel {
            topology: topology.clone(),
            inputs,
            targets,
            samples: samples.len(),
            penalty_mode: PenaltyMode::Literal,
        })
    }

    pub fn with_penalty_mode(mut self, mode: PenaltyMode) -> Self {
        self.penalty_mode = mode;
        self
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn penalty_mode(&self) -> PenaltyMode {
        self.penalty_mode
    }

    pub fn sample_count(&self) -> usize {
        self.samples
    }

    pub fn param_dim(&self) -> usize {
        self.topology.param_dim()
    }

    fn workspace(&self) -> Workspace {
        let cols = self.topology.last_hidden_size();
        let q = self.topology.output_dim();
        let width = self.topology.widest_hidden().max(self.topology.input_dim());
        Workspace {
            design: vec![0.0; self.samples * cols],
            qr: vec![0.0; (self.samples + cols) * cols],
            targets: vec![0.0; (self.samples + cols) * q],
            reflector: vec![0.0; self.samples + cols],
            rhs: vec![0.0; cols * q],
            buf_a: vec![0.0; width],
            buf_b: vec![0.0; width],
        }
    }

    /// Fills the `K x N_{L-1}` design matrix of last-hidden outputs.
    fn fill_design(&self, theta: &[f64], ws: &mut Workspace) {
        let d = self.topology.input_dim();
        let cols = self.topology.last_hidden_size();
        for k in 0..self.samples {
            let x = &self.inputs[k * d..(k + 1) * d];
            let h = hidden_into(&self.topology, theta, x, &mut ws.buf_a, &mut ws.buf_b);
            ws.design[k * cols..(k + 1) * cols].copy_from_slice(h);
        }
    }

    /// Solves the ridge-regularized least-squares problem
    /// `min ||Y - H W^T||^2 + RIDGE ||W||^2`, i.e. the damped normal
    /// equations `(H^T H + RIDGE I) W^T = H^T Y`, by Householder QR of the
    /// augmented matrix `[sqrt(RIDGE) I; H]`; the damping rows come first so
    /// that an all-zero column of `H` yields an exactly zero weight. The result is stored transposed
    /// in `ws.rhs` (`N_{L-1} x q`, column `r` is output row `r`).
    fn solve_in_place(&self, ws: &mut Workspace) {
        let n = self.topology.last_hidden_size();
        let q = self.topology.output_dim();
        let k = self.samples;
        let m = k + n;
        let damping = RIDGE.sqrt();
        for c in 0..n {
            let col = &mut ws.qr[c * m..(c + 1) * m];
            for (t, v) in col[..n].iter_mut().enumerate() {
                *v = if t == c { damping } else { 0.0 };
            }
            for (row, v) in col[n..].iter_mut().enumerate() {
                *v = ws.design[row * n + c];
            }
        }
        for r in 0..q {
            let col = &mut ws.targets[r * m..(r + 1) * m];
            col[..n].iter_mut().for_each(|v| *v = 0.0);
            for (row, v) in col[n..].iter_mut().enumerate() {
                *v = self.targets[row * q + r];
            }
        }
        householder_solve(&mut ws.qr, &mut ws.targets, &mut ws.reflector, m, n, q);
        for r in 0..q {
            for i in 0..n {
                ws.rhs[i * q + r] = ws.targets[r * m + i];
            }
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn squared_error(&self, ws: &Workspace) -> f64 {
        let cols = self.topology.last_hidden_size();
        let q = self.topology.output_dim();
        let mut sum = 0.0;
        for k in 0..self.samples {
            let h = &ws.design[k * cols..(k + 1) * cols];
            let y = &self.targets[k * q..(k + 1) * q];
            for r in 0..q {
                let mut pred = 0.0;
                for i in 0..cols {
                    pred += ws.rhs[i * q + r] * h[i];
                }
                let e = y[r] - pred;
                sum += e * e;
            }
        }
        sum
    }

    fn weights_from(&self, ws: &Workspace) -> OutputWeights {
        let cols = self.topology.last_hidden_size();
        let q = self.topology.output_dim();
        let mut w = OutputWeights::zeros(q, cols);
        for r in 0..q {
            for i in 0..cols {
                w.data[r * cols + i] = ws.rhs[i * q + r];
            }
        }
        w
    }

    /// Least-squares output weights for `theta` over these samples.
    pub fn solve_output_weights(&self, theta: &ParamVector) -> Result<OutputWeights> {
        check_dim("parameter vector", self.param_dim(), theta.len())?;
        let mut ws = self.workspace();
        self.fill_design(theta, &mut ws);
        self.solve_in_place(&mut ws);
        Ok(self.weights_from(&ws))
    }

    /// Mean squared error with freshly solved output weights.
    pub fn mse(&self, theta: &ParamVector) -> Result<f64> {
        check_dim("parameter vector", self.param_dim(), theta.len())?;
        Ok(self.mse_unchecked(theta))
    }

    fn mse_unchecked(&self, theta: &[f64]) -> f64 {
        let mut ws = self.workspace();
        self.fill_design(theta, &mut ws);
        self.solve_in_place(&mut ws);
        let norm = (self.samples * self.topology.output_dim()) as f64;
        self.squared_error(&ws) / norm
    }

    /// Mean squared error of fixed output weights over these samples.
    pub fn mse_with_weights(&self, theta: &ParamVector, weights: &OutputWeights) -> Result<f64> {
        check_dim("parameter vector", self.param_dim(), theta.len())?;
        check_dim(
            "output weight rows",
            self.topology.output_dim(),
            weights.rows(),
        )?;
        check_dim(
            "output weight columns",
            self.topology.last_hidden_size(),
            weights.cols(),
        )?;
        let mut ws = self.workspace();
        self.fill_design(theta, &mut ws);
        let q = self.topology.output_dim();
        let cols = self.topology.last_hidden_size();
        for r in 0..q {
            for i in 0..cols {
                ws.rhs[i * q + r] = weights.get(r, i);
            }
        }
        Ok(self.squared_error(&ws) / (self.samples * q) as f64)
    }

    /// Penalized cost: plain MSE inside the ball `||theta|| <= sqrt(D)`,
    /// otherwise the MSE of the rescaled vector plus `50 (||theta|| - sqrt(D))`.
    pub fn cost(&self, theta: &ParamVector) -> Result<CostValue> {
        check_dim("parameter vector", self.param_dim(), theta.len())?;
        Ok(self.cost_unchecked(theta))
    }

    pub(crate) fn cost_unchecked(&self, theta: &[f64]) -> CostValue {
        let norm = euclidean_norm(theta);
        let radius = (theta.len() as f64).sqrt();
        if norm <= radius {
            return CostValue {
                mse: self.mse_unchecked(theta),
                penalty: 0.0,
            };
        }
        let scale = match self.penalty_mode {
            PenaltyMode::Literal => 1.0 / norm,
            PenaltyMode::Boundary => radius / norm,
        };
        let rescaled: Vec<f64> = theta.iter().map(|v| v * scale).collect();
        CostValue {
            mse: self.mse_unchecked(&rescaled),
            penalty: PENALTY_WEIGHT * (norm - radius),
        }
    }
}

/// Householder QR of the column-major `m x n` matrix `a` (`m >= n`, full
/// column rank), applied to the `q` column-major right-hand sides in `b`.
/// On return the first `n` rows of each column of `b` hold the solution.
fn householder_solve(a: &mut [f64], b: &mut [f64], v: &mut [f64], m: usize, n: usize, q: usize) {
    for j in 0..n {
        let col = &a[j * m..(j + 1) * m];
        let norm = col[j..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        let v = &mut v[j..m];
        v.copy_from_slice(&col[j..]);
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        a[j * m + j] = alpha;
        for x in &mut a[j * m + j + 1..(j + 1) * m] {
            *x = 0.0;
        }
        let reflect = |target: &mut [f64]| {
            let s = 2.0 * v.iter().zip(target.iter()).map(|(x, y)| x * y).sum::<f64>() / vv;
            for (t, x) in target.iter_mut().zip(v.iter()) {
                *t -= s * x;
            }
        };
        for c in j + 1..n {
            reflect(&mut a[c * m + j..(c + 1) * m]);
        }
        for r in 0..q {
            reflect(&mut b[r * m + j..(r + 1) * m]);
        }
    }
    for r in 0..q {
        let rhs = &mut b[r * m..(r + 1) * m];
        for i in (0..n).rev() {
            let mut x = rhs[i];
            for c in i + 1..n {
                x -= a[c * m + i] * rhs[c];
            }
            rhs[i] = x / a[i * m + i];
        }
    }
}

/// Least-squares output weights of `theta` over `samples`.
pub fn solve_output_weights(
    topology: &Topology,
    theta: &ParamVector,
    samples: &[Sample],
) -> Result<OutputWeights> {
    CostModel::new(topology, samples)?.solve_output_weights(theta)
}

/// Mean squared error `1/(K q) sum ||y - W x^{L-1}||^2` with least-squares `W`.
pub fn mse_cost(topology: &Topology, theta: &ParamVector, samples: &[Sample]) -> Result<f64> {
    CostModel::new(topology, samples)?.mse(theta)
}

/// Penalized training cost with the literal `theta / ||theta||` rescale.
pub fn penalized_cost(
    topology: &Topology,
    theta: &ParamVector,
    samples: &[Sample],
) -> Result<CostValue> {
    CostModel::new(topology, samples)?.cost(theta)
}
