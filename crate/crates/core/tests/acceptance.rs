//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! failure status if any criterion fails.
//!
//! `DESB_ACCEPTANCE=1,2,8` restricts the run to the listed criteria.

#![allow(clippy::needless_range_loop)]

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use desb::ann::RIDGE;
use desb::datasets::{builtin_dataset, Dataset, NoiseSpec, Sample, TaskKind};
use desb::de::DeConfig;
use desb::experiments::{run_experiment, ExperimentConfig, ExperimentReport, Variant};
use desb::symmetry::{SymmetryLayout, SymmetryOp};
use desb::{forward_hidden, solve_output_weights, CostModel, ParamVector, PenaltyMode, Topology};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn topo(s: &str) -> Topology {
    s.parse().unwrap()
}

fn uniform(rng: &mut ChaCha8Rng, dim: usize, half_width: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.random_range(-half_width..half_width))
        .collect()
}

/// Every single point and permutation operator of the topology.
fn all_ops(t: &Topology) -> Vec<SymmetryOp> {
    let sizes = t.layer_sizes();
    let mut ops = Vec::new();
    for layer in t.hidden_layers() {
        for neuron in 0..sizes[layer] {
            ops.push(SymmetryOp::Point { layer, neuron });
            for second in neuron + 1..sizes[layer] {
                ops.push(SymmetryOp::Permutation {
                    layer,
                    first: neuron,
                    second,
                });
            }
        }
    }
    ops
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut norm_mismatches = 0;
    let mut checks = 0;
    for (name, data) in [
        ("1-3-1", "syn5"),
        ("1-5-1", "sinc"),
        ("2-3-1-3-1", "sinc2d"),
    ] {
        let t = topo(name);
        let ds = builtin_dataset(data, NoiseSpec::default()).unwrap();
        let model = CostModel::new(&t, &ds.train).unwrap();
        let layout = SymmetryLayout::new(&t);
        let ops = all_ops(&t);
        for k in 0..100 {
            // Half of the vectors lie outside the feasible sphere.
            let scale = if k % 2 == 0 { 1.0 } else { 3.0 };
            let theta = ParamVector::new(uniform(&mut rng, t.param_dim(), scale));
            let base = model.cost(&theta).unwrap().total();
            let mut sorted: Vec<u64> = theta.iter().map(|v| v.abs().to_bits()).collect();
            sorted.sort_unstable();
            for &op in &ops {
                let mut moved = theta.clone();
                layout.apply(op, &mut moved).unwrap();
                let cost = model.cost(&moved).unwrap().total();
                worst = worst.max((cost - base).abs() / base.abs().max(f64::MIN_POSITIVE));
                // Same multiset of magnitudes, and the same norm value.
                let mut m: Vec<u64> = moved.iter().map(|v| v.abs().to_bits()).collect();
                m.sort_unstable();
                if m != sorted || moved.norm() != theta.norm() {
                    norm_mismatches += 1;
                }
                checks += 1;
            }
        }
    }
    outcome(
        worst <= 1e-9 && norm_mismatches == 0,
        format!("{checks} operator applications, max relative cost change {worst:.2e} (tol 1e-9), norm changes {norm_mismatches}"),
    )
}

/// Independent ideal separation for a single hidden layer of two neurons with
/// blocks `[0, 1]` and `[2, 3]`: the 8 signed permutations.
fn ideal_distance_1_2_1(theta: &[f64], best: &[f64]) -> f64 {
    let mut min = f64::INFINITY;
    for swap in [false, true] {
        for signs in 0..4u32 {
            let mut v = [0.0; 4];
            for n in 0..2 {
                let src = if swap { 1 - n } else { n };
                let s = if signs >> n & 1 == 1 { -1.0 } else { 1.0 };
                v[2 * n] = s * theta[2 * src];
                v[2 * n + 1] = s * theta[2 * src + 1];
            }
            let d = sum_sq(&v.iter().zip(best).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt();
            min = min.min(d);
        }
    }
    min
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let topologies = ["1-3-1", "1-5-1", "2-3-1-3-1", "2-4-3-2", "1-2-1"].map(topo);
    let mut increases = 0;
    for k in 0..10_000 {
        let t = &topologies[k % topologies.len()];
        let layout = SymmetryLayout::new(t);
        let mut theta = uniform(&mut rng, t.param_dim(), 1.0);
        let best = uniform(&mut rng, t.param_dim(), 1.0);
        let dist = |v: &[f64]| sum_sq(&v.iter().zip(&best).map(|(a, b)| a - b).collect::<Vec<_>>());
        let before = dist(&theta);
        layout.mgod_in_place(&mut theta, &best, &mut rng);
        if dist(&theta) > before {
            increases += 1;
        }
    }

    let t = topo("1-2-1");
    let layout = SymmetryLayout::new(&t);
    let ops = all_ops(&t);
    let mut reached = 0;
    let mut stuck = 0;
    let mut library_agrees = 0;
    for _ in 0..200 {
        let mut theta = uniform(&mut rng, 4, 1.0);
        let best = uniform(&mut rng, 4, 1.0);
        let ideal = ideal_distance_1_2_1(&theta, &best);
        let lib = desb::symmetry::ideal_separation_bruteforce(
            &t,
            &ParamVector::new(theta.clone()),
            &ParamVector::new(best.clone()),
        )
        .unwrap();
        if (lib.distance - ideal).abs() <= 1e-12 {
            library_agrees += 1;
        }
        for _ in 0..1000 {
            layout.mgod_in_place(&mut theta, &best, &mut rng);
        }
        let dist =
            |v: &[f64]| sum_sq(&v.iter().zip(&best).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt();
        let d = dist(&theta);
        if (d - ideal).abs() <= 1e-12 {
            reached += 1;
        } else {
            // A miss where no single operator shortens the distance is a
            // local minimum of the one-operator-at-a-time search.
            let improvable = ops.iter().any(|&op| {
                let mut v = theta.clone();
                layout.apply(op, &mut v).unwrap();
                dist(&v) < d
            });
            if !improvable {
                stuck += 1;
            }
        }
    }
    outcome(
        increases == 0 && reached >= 198 && library_agrees == 200,
        format!(
            "distance increases {increases}/10000; greedy reached ideal in {reached}/200 (need 198), \
             {stuck} of the {} misses are single-operator local minima; library oracle agrees {library_agrees}/200",
            200 - reached
        ),
    )
}

/// Solves `(H^T H + ridge I) W = H^T Y` exactly over the rationals.
fn exact_normal_equations(h: &[Vec<f64>], y: &[Vec<f64>], ridge: f64) -> Vec<Vec<f64>> {
    let rat = |v: f64| BigRational::from_float(v).unwrap();
    let (k, n, q) = (h.len(), h[0].len(), y[0].len());
    let hr: Vec<Vec<BigRational>> = h
        .iter()
        .map(|r| r.iter().map(|&v| rat(v)).collect())
        .collect();
    let yr: Vec<Vec<BigRational>> = y
        .iter()
        .map(|r| r.iter().map(|&v| rat(v)).collect())
        .collect();
    // Augmented system [A | B], A = H^T H + ridge I, B = H^T Y.
    let mut m: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            let mut row: Vec<BigRational> = (0..n)
                .map(|j| {
                    (0..k)
                        .map(|s| &hr[s][i] * &hr[s][j])
                        .fold(BigRational::zero(), |a, b| a + b)
                })
                .collect();
            row[i] += rat(ridge);
            row.extend((0..q).map(|c| {
                (0..k)
                    .map(|s| &hr[s][i] * &yr[s][c])
                    .fold(BigRational::zero(), |a, b| a + b)
            }));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !m[r][col].is_zero())
            .expect("positive definite");
        m.swap(col, pivot);
        let p = m[col][col].clone();
        for v in m[col].iter_mut() {
            *v /= &p;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..n + q {
                    let delta = &f * &m[col][c];
                    m[r][c] -= delta;
                }
            }
        }
    }
    (0..n)
        .map(|i| (0..q).map(|c| m[i][n + c].to_f64().unwrap()).collect())
        .collect()
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_weight: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(1..=50);
        let d = rng.random_range(1..=3);
        let n = rng.random_range(1..=6);
        let q = rng.random_range(1..=3);
        let t = Topology::new(vec![d, n, q]).unwrap();
        let theta = ParamVector::new(uniform(&mut rng, t.param_dim(), 1.0));
        let samples: Vec<Sample> = (0..k)
            .map(|_| Sample {
                x: uniform(&mut rng, d, 1.0),
                y: uniform(&mut rng, q, 1.0),
            })
            .collect();
        let w = solve_output_weights(&t, &theta, &samples).unwrap();

        let h: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| forward_hidden(&t, &theta, &s.x).unwrap())
            .collect();
        let y: Vec<Vec<f64>> = samples.iter().map(|s| s.y.clone()).collect();
        let oracle = exact_normal_equations(&h, &y, RIDGE); // n x q
        let scale = oracle.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
        for i in 0..n {
            for c in 0..q {
                worst_weight = worst_weight.max((w.get(c, i) - oracle[i][c]).abs() / scale);
            }
        }
        // H^T (Y - H W^T) equals ridge * W^T for the damped solution.
        for i in 0..n {
            for c in 0..q {
                let g: f64 = (0..k)
                    .map(|s| {
                        let fit: f64 = (0..n).map(|j| h[s][j] * w.get(c, j)).sum();
                        h[s][i] * (y[s][c] - fit)
                    })
                    .sum();
                worst_orth = worst_orth.max((g - RIDGE * w.get(c, i)).abs());
            }
        }
    }
    outcome(
        worst_weight <= 1e-8 && worst_orth <= 1e-8,
        format!(
            "max weight deviation from exact normal equations {worst_weight:.2e} (relative), \
             max |H^T r - ridge W| {worst_orth:.2e} (tol 1e-8)"
        ),
    )
}

fn experiment(
    dataset: &Arc<Dataset>,
    topology: &str,
    variant: Variant,
    np: usize,
    eps: f64,
    runs: usize,
    max_evals: u64,
) -> ExperimentReport {
    let config = ExperimentConfig {
        dataset: Arc::clone(dataset),
        topology: topo(topology),
        variant,
        de: DeConfig {
            population: np,
            threshold: eps,
            max_evals,
            symmetry_breaking: variant.symmetry_breaking(),
            ..DeConfig::default()
        },
        runs,
        base_seed: 1,
        penalty_mode: PenaltyMode::Literal,
    };
    run_experiment(&config, true).unwrap()
}

fn mfe(r: &ExperimentReport) -> f64 {
    r.mfe.map_or(f64::NAN, |s| s.mean)
}

/// Test MSE of every successful run within the sanity band.
fn test_mse_in_band(reports: &[&ExperimentReport]) -> (bool, f64, f64) {
    let values: Vec<f64> = reports
        .iter()
        .flat_map(|r| {
            r.runs
                .iter()
                .filter(|x| x.result.success)
                .map(|x| x.test_metric)
        })
        .collect();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (!values.is_empty() && lo >= 3e-5 && hi <= 1.5e-4, lo, hi)
}

fn criterion_4(band: &mut Vec<(bool, String)>) -> Outcome {
    let ds = Arc::new(builtin_dataset("syn5", NoiseSpec::default()).unwrap());
    let de = experiment(&ds, "1-3-1", Variant::De, 80, 5e-5, 20, 2_000_000);
    let sb = experiment(&ds, "1-3-1", Variant::DeSb, 80, 5e-5, 20, 2_000_000);
    let (ok, lo, hi) = test_mse_in_band(&[&de, &sb]);
    band.push((ok, format!("syn5 test MSE in [{lo:.2e}, {hi:.2e}]")));
    let pass = de.robustness == 1.0
        && sb.robustness == 1.0
        && (2e4..=2e5).contains(&mfe(&de))
        && mfe(&sb) < mfe(&de);
    outcome(
        pass,
        format!(
            "rho DE {} / DE-SB {}; MFE DE {:.3e} (need [2e4, 2e5]), DE-SB {:.3e} (need < DE)",
            de.robustness,
            sb.robustness,
            mfe(&de),
            mfe(&sb)
        ),
    )
}

fn criterion_5(band: &mut Vec<(bool, String)>) -> Outcome {
    let ds = Arc::new(builtin_dataset("sinc", NoiseSpec::default()).unwrap());
    let sb = experiment(&ds, "1-6-1", Variant::DeSb, 60, 5e-5, 10, 1_000_000);
    let de = experiment(&ds, "1-6-1", Variant::De, 60, 5e-5, 10, 2_000_000);
    let limit = 5.0 * mfe(&sb);
    let slow = de
        .runs
        .iter()
        .filter(|r| !r.result.success || r.result.evals_used as f64 > limit)
        .count();
    let (ok, lo, hi) = test_mse_in_band(&[&de, &sb]);
    band.push((ok, format!("sinc test MSE in [{lo:.2e}, {hi:.2e}]")));
    outcome(
        sb.robustness == 1.0 && mfe(&sb) < 1e6 && slow >= 7,
        format!(
            "DE-SB rho {} MFE {:.3e} (need all runs < 1e6); DE failed or slower than 5x DE-SB in {slow}/10 runs (need 7), DE rho {}",
            sb.robustness,
            mfe(&sb),
            de.robustness
        ),
    )
}

fn criterion_6() -> Outcome {
    let ds = Arc::new(builtin_dataset("iris", NoiseSpec::default()).unwrap());
    assert_eq!(ds.kind, TaskKind::Classification);
    let de = experiment(&ds, "4-3-3", Variant::De, 40, 0.011, 20, 1_000_000);
    let metric = de.test_metric.map_or(f64::NAN, |s| s.mean);
    outcome(
        de.robustness == 1.0 && (5e3..=6e4).contains(&mfe(&de)) && metric >= 97.0,
        format!(
            "rho {}; MFE {:.3e} (need [5e3, 6e4]); mean test success {metric:.2}% (need >= 97%)",
            de.robustness,
            mfe(&de)
        ),
    )
}

fn criterion_7(band: &[(bool, String)]) -> Outcome {
    if band.is_empty() {
        return outcome(false, "needs criteria 4 and 5 in the same run".into());
    }
    outcome(
        band.iter().all(|(ok, _)| *ok),
        format!(
            "{} (need [3e-5, 1.5e-4])",
            band.iter()
                .map(|(_, s)| s.as_str())
                .collect::<Vec<_>>()
                .join("; ")
        ),
    )
}

fn desb(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_desb"))
        .args(args)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success(), "desb {args:?} failed");
}

/// Every file below `dir`, relative path and contents, sorted.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bench.cfg");
    fs::write(
        &cfg,
        "dataset = syn5\ntopology = 1-3-1\nvariant = both\nnp = 20\nepsilon0 = 1e-3\nmax_evals = 30000\nruns = 4\nseed = 11\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let mut snaps = Vec::new();
    for (i, threads) in ["0", "0", "1", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("bench{i}"));
        desb(&[
            "bench",
            cfg,
            "--threads",
            threads,
            "--output-dir",
            out.to_str().unwrap(),
        ]);
        let run_out = out.join("single");
        desb(&[
            "run",
            cfg,
            "--variant",
            "de-sb",
            "--threads",
            threads,
            "--output-dir",
            run_out.to_str().unwrap(),
        ]);
        snaps.push(snapshot(&out));
    }
    let files = snaps[0].len();
    let has = |name: &str| snaps[0].iter().any(|(p, _)| p.ends_with(name));
    let complete =
        has("summary.csv") && has("run_003.csv") && has("trace.csv") && has("params.txt");
    let identical = snaps.iter().all(|s| *s == snaps[0]);
    outcome(
        complete && identical,
        format!("{files} files per output tree; identical across repeat and --threads 0/1/3: {identical}"),
    )
}

fn main() {
    let selected: Option<Vec<u32>> = std::env::var("DESB_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wants = |n: u32| selected.as_ref().is_none_or(|s| s.contains(&n));
    let mut band = Vec::new();
    let mut failed = 0;
    let mut report = |n: u32, title: &str, run: &mut dyn FnMut() -> Outcome| {
        if !wants(n) {
            return;
        }
        let start = Instant::now();
        let o = run();
        let line = format!(
            "{} criterion {n} ({title}): {} [{:.1}s]\n",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(line.as_bytes()).unwrap();
        stdout.flush().unwrap();
    };
    report(1, "symmetry invariance", &mut criterion_1);
    report(2, "distance-reducing heuristic", &mut criterion_2);
    report(3, "least-squares output layer", &mut criterion_3);
    report(4, "syn5 1-3-1", &mut || criterion_4(&mut band));
    report(5, "sinc 1-6-1 speedup direction", &mut || {
        criterion_5(&mut band)
    });
    report(6, "iris 4-3-3", &mut criterion_6);
    report(7, "test-set MSE sanity", &mut || criterion_7(&band));
    report(8, "determinism", &mut criterion_8);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
