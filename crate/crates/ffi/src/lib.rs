//! C ABI for the `desb` library.
//!
//! Objects are opaque handles created by `desb_*_new`/`desb_*_load`-style
//! functions and released with the matching `desb_*_free`. Every fallible
//! function returns a [`DesbStatus`]; on failure a message is available from
//! [`desb_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use desb::datasets::{builtin_dataset, load_classification, Dataset, NoiseSpec};
use desb::de::{run_de, DeConfig, NetworkProblem, RunResult};
use desb::symmetry::{count_symmetric_equivalents, SymmetryLayout, SymmetryOp};
use desb::{CostModel, Error, ParamVector, PenaltyMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    IndexOutOfRange = 4,
    Io = 5,
    Parse = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Network shape.
pub struct DesbTopology(desb::Topology);

/// Train/test data.
pub struct DesbDataset(Dataset);

/// Outcome of one optimizer run.
pub struct DesbRunResult(RunResult);

/// Cost split into its parts; `total = mse + penalty`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DesbCost {
    pub mse: f64,
    pub penalty: f64,
    pub total: f64,
}

/// Optimizer settings. Obtain defaults from [`desb_de_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesbDeConfig {
    pub population: usize,
    pub weight: f64,
    pub crossover: f64,
    pub symmetry_breaking: bool,
    pub max_evals: u64,
    pub threshold: f64,
    pub seed: u64,
    /// Rescale infeasible vectors onto the sphere boundary instead of to unit norm.
    pub boundary_penalty: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DesbStatus {
    match e {
        Error::Dimension { .. } => DesbStatus::DimensionMismatch,
        Error::Index(_) => DesbStatus::IndexOutOfRange,
        Error::Io { .. } => DesbStatus::Io,
        Error::Parse { .. } | Error::Topology { .. } => DesbStatus::Parse,
        _ => DesbStatus::InvalidArgument,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (DesbStatus, String)>) -> DesbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DesbStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DesbStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, (DesbStatus, String)>;
}

impl<T> OrStatus<T> for desb::Result<T> {
    fn or_status(self) -> Result<T, (DesbStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (DesbStatus, String) {
    (DesbStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (DesbStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DesbStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DesbStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn values<'a>(
    p: *const f64,
    len: usize,
    what: &str,
) -> Result<&'a [f64], (DesbStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn values_mut<'a>(
    p: *mut f64,
    len: usize,
    what: &str,
) -> Result<&'a mut [f64], (DesbStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn check_dim(topology: &desb::Topology, len: usize) -> Result<(), (DesbStatus, String)> {
    let dim = topology.param_dim();
    if len != dim {
        return Err((
            DesbStatus::DimensionMismatch,
            format!("parameter vector has length {len}, topology needs {dim}"),
        ));
    }
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn desb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a topology such as `"1-3-1"`.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn desb_topology_parse(
    text: *const c_char,
    out: *mut *mut DesbTopology,
) -> DesbStatus {
    guard(|| {
        let text = c_str(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let topology = text.parse().or_status()?;
        *out = Box::into_raw(Box::new(DesbTopology(topology)));
        Ok(())
    })
}

/// # Safety
/// `topology` must come from [`desb_topology_parse`] or be null.
#[no_mangle]
pub unsafe extern "C" fn desb_topology_free(topology: *mut DesbTopology) {
    if !topology.is_null() {
        drop(Box::from_raw(topology));
    }
}

/// Length of the searched parameter vector; 0 for a null handle.
///
/// # Safety
/// `topology` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn desb_topology_param_dim(topology: *const DesbTopology) -> usize {
    topology.as_ref().map_or(0, |t| t.0.param_dim())
}

/// Writes the number of symmetric equivalents as a decimal string into `buf`.
/// `needed` receives the required size including the terminating nul, also
/// when the buffer is too small.
///
/// # Safety
/// `buf` must hold `len` bytes (it may be null when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn desb_topology_equivalents(
    topology: *const DesbTopology,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> DesbStatus {
    guard(|| {
        let topology = deref(topology, "topology")?;
        let text = count_symmetric_equivalents(&topology.0).to_string();
        if !needed.is_null() {
            *needed = text.len() + 1;
        }
        if len < text.len() + 1 || buf.is_null() {
            return Err((
                DesbStatus::BufferTooSmall,
                format!("need {} bytes", text.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

/// Bundled data set by name. `noise_sigma` and `noise_seed` apply to the
/// regression problems.
///
/// # Safety
/// `name` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn desb_dataset_builtin(
    name: *const c_char,
    noise_sigma: f64,
    noise_seed: u64,
    out: *mut *mut DesbDataset,
) -> DesbStatus {
    guard(|| {
        let name = c_str(name, "name")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = builtin_dataset(
            name,
            NoiseSpec {
                sigma: noise_sigma,
                seed: noise_seed,
            },
        )
        .or_status()?;
        *out = Box::into_raw(Box::new(DesbDataset(ds)));
        Ok(())
    })
}

/// Loads a pair of sample files written by `desb gen`.
///
/// # Safety
/// Paths must be nul-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn desb_dataset_load(
    train_path: *const c_char,
    test_path: *const c_char,
    out: *mut *mut DesbDataset,
) -> DesbStatus {
    guard(|| {
        let train = c_str(train_path, "train_path")?;
        let test = c_str(test_path, "test_path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = Dataset::from_files("data", Path::new(train), Path::new(test)).or_status()?;
        *out = Box::into_raw(Box::new(DesbDataset(ds)));
        Ok(())
    })
}

/// Loads a delimited classification file described by a schema file.
///
/// # Safety
/// Paths must be nul-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn desb_dataset_load_classification(
    data_path: *const c_char,
    schema_path: *const c_char,
    out: *mut *mut DesbDataset,
) -> DesbStatus {
    guard(|| {
        let data = c_str(data_path, "data_path")?;
        let schema = c_str(schema_path, "schema_path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = load_classification(Path::new(data), Path::new(schema)).or_status()?;
        *out = Box::into_raw(Box::new(DesbDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn desb_dataset_free(dataset: *mut DesbDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn desb_dataset_train_len(dataset: *const DesbDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.train.len())
}

/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn desb_dataset_test_len(dataset: *const DesbDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.test.len())
}

/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn desb_dataset_input_dim(dataset: *const DesbDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.input_dim)
}

/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn desb_dataset_output_dim(dataset: *const DesbDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.output_dim)
}

/// Penalized training cost of `theta` on the training partition.
///
/// # Safety
/// `theta` must point to `len` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn desb_penalized_cost(
    topology: *const DesbTopology,
    dataset: *const DesbDataset,
    theta: *const f64,
    len: usize,
    boundary_penalty: bool,
    out: *mut DesbCost,
) -> DesbStatus {
    guard(|| {
        let topology = &deref(topology, "topology")?.0;
        let dataset = &deref(dataset, "dataset")?.0;
        let theta = values(theta, len, "theta")?;
        if out.is_null() {
            return Err(null("out"));
        }
        check_dim(topology, len)?;
        dataset.check_topology(topology).or_status()?;
        let model = CostModel::new(topology, &dataset.train)
            .or_status()?
            .with_penalty_mode(penalty_mode(boundary_penalty));
        let cost = model.cost(&ParamVector::new(theta.to_vec())).or_status()?;
        *out = DesbCost {
            mse: cost.mse,
            penalty: cost.penalty,
            total: cost.total(),
        };
        Ok(())
    })
}

fn penalty_mode(boundary: bool) -> PenaltyMode {
    if boundary {
        PenaltyMode::Boundary
    } else {
        PenaltyMode::Literal
    }
}

/// Negates the block of hidden neuron `(layer, neuron)` in place. Layers are
/// numbered from 0 at the input, so hidden layers are `1..L-1`.
///
/// # Safety
/// `theta` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn desb_apply_point(
    topology: *const DesbTopology,
    theta: *mut f64,
    len: usize,
    layer: usize,
    neuron: usize,
) -> DesbStatus {
    apply(topology, theta, len, SymmetryOp::Point { layer, neuron })
}

/// Swaps the blocks of hidden neurons `first` and `second` of `layer` in place.
///
/// # Safety
/// `theta` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn desb_apply_permutation(
    topology: *const DesbTopology,
    theta: *mut f64,
    len: usize,
    layer: usize,
    first: usize,
    second: usize,
) -> DesbStatus {
    apply(
        topology,
        theta,
        len,
        SymmetryOp::Permutation {
            layer,
            first,
            second,
        },
    )
}

unsafe fn apply(
    topology: *const DesbTopology,
    theta: *mut f64,
    len: usize,
    op: SymmetryOp,
) -> DesbStatus {
    guard(|| {
        let topology = &deref(topology, "topology")?.0;
        let theta = values_mut(theta, len, "theta")?;
        check_dim(topology, len)?;
        SymmetryLayout::new(topology).apply(op, theta).or_status()
    })
}

/// One draw of the distance-reducing heuristic, seeded by `seed`. `theta` is
/// modified in place; `applied` (optional) reports whether it changed.
///
/// # Safety
/// `theta` and `best` must point to `len` values; `theta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn desb_mgod_step(
    topology: *const DesbTopology,
    theta: *mut f64,
    best: *const f64,
    len: usize,
    seed: u64,
    applied: *mut bool,
) -> DesbStatus {
    guard(|| {
        let topology = &deref(topology, "topology")?.0;
        let theta = values_mut(theta, len, "theta")?;
        let best = values(best, len, "best")?;
        check_dim(topology, len)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let changed = SymmetryLayout::new(topology).mgod_in_place(theta, best, &mut rng);
        if !applied.is_null() {
            *applied = changed;
        }
        Ok(())
    })
}

/// Default optimizer settings.
#[no_mangle]
pub extern "C" fn desb_de_config_default() -> DesbDeConfig {
    let d = DeConfig::default();
    DesbDeConfig {
        population: d.population,
        weight: d.weight,
        crossover: d.crossover,
        symmetry_breaking: d.symmetry_breaking,
        max_evals: d.max_evals,
        threshold: d.threshold,
        seed: d.seed,
        boundary_penalty: false,
    }
}

/// Trains a network on the training partition of `dataset`.
///
/// # Safety
/// All pointers must be valid; `out` receives a handle to free with
/// [`desb_run_result_free`].
#[no_mangle]
pub unsafe extern "C" fn desb_run_de(
    topology: *const DesbTopology,
    dataset: *const DesbDataset,
    config: *const DesbDeConfig,
    out: *mut *mut DesbRunResult,
) -> DesbStatus {
    guard(|| {
        let topology = &deref(topology, "topology")?.0;
        let dataset = &deref(dataset, "dataset")?.0;
        let c = *deref(config, "config")?;
        if out.is_null() {
            return Err(null("out"));
        }
        dataset.check_topology(topology).or_status()?;
        let model = CostModel::new(topology, &dataset.train)
            .or_status()?
            .with_penalty_mode(penalty_mode(c.boundary_penalty));
        let de = DeConfig {
            population: c.population,
            weight: c.weight,
            crossover: c.crossover,
            symmetry_breaking: c.symmetry_breaking,
            max_evals: c.max_evals,
            threshold: c.threshold,
            seed: c.seed,
            verify_symmetry: false,
        };
        let result = run_de(&de, &NetworkProblem::new(model)).or_status()?;
        *out = Box::into_raw(Box::new(DesbRunResult(result)));
        Ok(())
    })
}

/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn desb_run_result_free(result: *mut DesbRunResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn desb_run_result_success(result: *const DesbRunResult) -> bool {
    result.as_ref().is_some_and(|r| r.0.success)
}

/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn desb_run_result_evals(result: *const DesbRunResult) -> u64 {
    result.as_ref().map_or(0, |r| r.0.evals_used)
}

/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn desb_run_result_generations(result: *const DesbRunResult) -> u64 {
    result.as_ref().map_or(0, |r| r.0.generations)
}

/// # Safety
/// `result` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn desb_run_result_best_cost(
    result: *const DesbRunResult,
    out: *mut DesbCost,
) -> DesbStatus {
    guard(|| {
        let r = &deref(result, "result")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = r.best.cost;
        *out = DesbCost {
            mse: c.mse,
            penalty: c.penalty,
            total: c.total(),
        };
        Ok(())
    })
}

/// Copies the best parameter vector into `buf`, which must hold exactly the
/// topology's parameter count.
///
/// # Safety
/// `buf` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn desb_run_result_best_position(
    result: *const DesbRunResult,
    buf: *mut f64,
    len: usize,
) -> DesbStatus {
    guard(|| {
        let r = &deref(result, "result")?.0;
        let buf = values_mut(buf, len, "buf")?;
        let best = &r.best.position;
        if len != best.len() {
            return Err((
                DesbStatus::DimensionMismatch,
                format!("buffer has length {len}, result has {}", best.len()),
            ));
        }
        buf.copy_from_slice(best);
        Ok(())
    })
}

/// Number of convergence checkpoints.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn desb_run_result_trace_len(result: *const DesbRunResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.trace.len())
}

/// Checkpoint `index`: evaluations so far and best total cost.
///
/// # Safety
/// `evals` and `cost` must be valid.
#[no_mangle]
pub unsafe extern "C" fn desb_run_result_trace_get(
    result: *const DesbRunResult,
    index: usize,
    evals: *mut u64,
    cost: *mut f64,
) -> DesbStatus {
    guard(|| {
        let r = &deref(result, "result")?.0;
        if evals.is_null() || cost.is_null() {
            return Err(null("output pointer"));
        }
        let c = r.trace.get(index).ok_or_else(|| {
            (
                DesbStatus::IndexOutOfRange,
                format!("checkpoint {index} of {}", r.trace.len()),
            )
        })?;
        *evals = c.evals;
        *cost = c.best_cost;
        Ok(())
    })
}
