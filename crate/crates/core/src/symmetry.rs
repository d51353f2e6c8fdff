//! Point and permutation symmetries of the hidden layers and the greedy
//! distance-reducing heuristic built on them.
//!
//! Flipping the sign of a tanh neuron's weights and shift together with its
//! outgoing weights, or swapping two neurons of the same layer together with
//! their outgoing weights, leaves the network function unchanged. The
//! parameters touched by either operator for neuron `(l, n)` form its
//! symmetry block: the neuron's own `(w, tau)` followed by the `n`-th
//! incoming weight of every neuron in layer `l + 1`. The outgoing weights of
//! the last hidden layer are solved by least squares and are not part of the
//! search vector, so those blocks only hold `(w, tau)`.
//!
//! Layers and neurons are 0-based: hidden layers are `1..=L-2`.

use std::fmt;

use itertools::Itertools;
use num_bigint::BigUint;
use rand::Rng;

use crate::ann::{ParamVector, Topology};
use crate::error::{Error, Result};

/// Largest symmetric-equivalent count the brute-force search accepts.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

/// A hidden neuron addressed by layer and index within the layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockRef {
    pub layer: usize,
    pub neuron: usize,
}

/// A single symmetry operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymmetryOp {
    Point {
        layer: usize,
        neuron: usize,
    },
    Permutation {
        layer: usize,
        first: usize,
        second: usize,
    },
}

impl fmt::Display for SymmetryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SymmetryOp::Point { layer, neuron } => write!(f, "O[{layer}]({neuron})"),
            SymmetryOp::Permutation {
                layer,
                first,
                second,
            } => write!(f, "P[{layer}]({first},{second})"),
        }
    }
}

/// Precomputed parameter indices of every symmetry block of a topology.
#[derive(Debug, Clone)]
pub struct SymmetryLayout {
    topology: Topology,
    // blocks[l - 1][n] lists the indices of the block of hidden neuron (l, n).
    blocks: Vec<Vec<Vec<usize>>>,
}

impl SymmetryLayout {
    pub fn new(topology: &Topology) -> Self {
        let sizes = topology.layer_sizes();
        let blocks = topology
            .hidden_layers()
            .map(|l| {
                (0..sizes[l])
                    .map(|n| {
                        let start = topology.neuron_offset(l, n);
                        let mut idx: Vec<usize> = (start..start + sizes[l - 1] + 1).collect();
                        if l < topology.last_hidden() {
                            idx.extend(
                                (0..sizes[l + 1]).map(|i| topology.neuron_offset(l + 1, i) + n),
                            );
                        }
                        idx
                    })
                    .collect()
            })
            .collect();
        SymmetryLayout {
            topology: topology.clone(),
            blocks,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn block(&self, block: BlockRef) -> Result<&[usize]> {
        self.topology.check_neuron(block.layer, block.neuron)?;
        Ok(&self.blocks[block.layer - 1][block.neuron])
    }

    /// Values of a block of `theta`, in block order.
    pub fn block_values(&self, theta: &[f64], block: BlockRef) -> Result<Vec<f64>> {
        Ok(self.block(block)?.iter().map(|&i| theta[i]).collect())
    }

    fn raw_block(&self, layer: usize, neuron: usize) -> &[usize] {
        &self.blocks[layer - 1][neuron]
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        let expected = self.topology.param_dim();
        if theta.len() != expected {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected,
                actual: theta.len(),
            });
        }
        Ok(())
    }

    fn check_op(&self, op: SymmetryOp) -> Result<()> {
        match op {
            SymmetryOp::Point { layer, neuron } => self.topology.check_neuron(layer, neuron),
            SymmetryOp::Permutation {
                layer,
                first,
                second,
            } => {
                self.topology.check_neuron(layer, first)?;
                self.topology.check_neuron(layer, second)
            }
        }
    }

    /// Applies `op` to `theta` in place.
    pub fn apply(&self, op: SymmetryOp, theta: &mut [f64]) -> Result<()> {
        self.check_len(theta)?;
        self.check_op(op)?;
        self.apply_unchecked(op, theta);
        Ok(())
    }

    fn apply_unchecked(&self, op: SymmetryOp, theta: &mut [f64]) {
        match op {
            SymmetryOp::Point { layer, neuron } => {
                for &i in self.raw_block(layer, neuron) {
                    theta[i] = -theta[i];
                }
            }
            SymmetryOp::Permutation {
                layer,
                first,
                second,
            } => {
                if first == second {
                    return;
                }
                let a = self.raw_block(layer, first);
                let b = self.raw_block(layer, second);
                for (&i, &j) in a.iter().zip(b) {
                    theta.swap(i, j);
                }
            }
        }
    }

    /// Draws `mu`, then the layer, then `n`, then `m` (permutation only), each
    /// uniformly, in that order.
    pub fn sample_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SymmetryOp {
        let point = rng.random_range(0..2u32) == 0;
        let layer = rng.random_range(self.topology.hidden_layers());
        let width = self.topology.layer_sizes()[layer];
        let neuron = rng.random_range(0..width);
        if point {
            SymmetryOp::Point { layer, neuron }
        } else {
            let second = rng.random_range(0..width);
            SymmetryOp::Permutation {
                layer,
                first: neuron,
                second,
            }
        }
    }

    /// Block distances `(D1, D2)` for keeping `theta` as is versus applying
    /// `op`, both measured against `best`.
    pub fn block_distances(&self, theta: &[f64], best: &[f64], op: SymmetryOp) -> (f64, f64) {
        match op {
            SymmetryOp::Point { layer, neuron } => {
                let mut keep = 0.0;
                let mut flip = 0.0;
                for &i in self.raw_block(layer, neuron) {
                    keep += (theta[i] - best[i]).powi(2);
                    flip += (-theta[i] - best[i]).powi(2);
                }
                (keep, flip)
            }
            SymmetryOp::Permutation {
                layer,
                first,
                second,
            } => {
                let n = self.raw_block(layer, first);
                let m = self.raw_block(layer, second);
                let mut keep = 0.0;
                let mut swap = 0.0;
                for (&i, &j) in n.iter().zip(m) {
                    keep += (theta[i] - best[i]).powi(2) + (theta[j] - best[j]).powi(2);
                    swap += (theta[i] - best[j]).powi(2) + (theta[j] - best[i]).powi(2);
                }
                (keep, swap)
            }
        }
    }

    /// Applies `op` iff it strictly reduces the block distance to `best`.
    /// Returns whether it was applied.
    pub fn mgod_apply(&self, theta: &mut [f64], best: &[f64], op: SymmetryOp) -> bool {
        let (keep, apply) = self.block_distances(theta, best, op);
        if keep > apply {
            self.apply_unchecked(op, theta);
            true
        } else {
            false
        }
    }

    /// One draw of the heuristic on `theta` in place.
    pub fn mgod_in_place<R: Rng + ?Sized>(
        &self,
        theta: &mut [f64],
        best: &[f64],
        rng: &mut R,
    ) -> bool {
        let op = self.sample_draw(rng);
        self.mgod_apply(theta, best, op)
    }
}

fn layout_for(topology: &Topology, theta: &ParamVector) -> Result<SymmetryLayout> {
    let layout = SymmetryLayout::new(topology);
    layout.check_len(theta)?;
    Ok(layout)
}

/// Point symmetry of hidden neuron `(layer, neuron)`.
pub fn apply_point(
    topology: &Topology,
    theta: &ParamVector,
    layer: usize,
    neuron: usize,
) -> Result<ParamVector> {
    let layout = layout_for(topology, theta)?;
    let mut out = theta.clone();
    layout.apply(SymmetryOp::Point { layer, neuron }, &mut out)?;
    Ok(out)
}

/// Swap of hidden neurons `first` and `second` of `layer`.
pub fn apply_permutation(
    topology: &Topology,
    theta: &ParamVector,
    layer: usize,
    first: usize,
    second: usize,
) -> Result<ParamVector> {
    let layout = layout_for(topology, theta)?;
    let mut out = theta.clone();
    layout.apply(
        SymmetryOp::Permutation {
            layer,
            first,
            second,
        },
        &mut out,
    )?;
    Ok(out)
}

/// Number of symmetric equivalents, `prod_l 2^{N_l} N_l!` over hidden layers.
pub fn count_symmetric_equivalents(topology: &Topology) -> BigUint {
    let sizes = topology.layer_sizes();
    topology
        .hidden_layers()
        .map(|l| {
            let n = sizes[l];
            let factorial: BigUint = (1..=n as u64).map(BigUint::from).product();
            (BigUint::from(1u32) << n) * factorial
        })
        .product()
}

/// One step of the heuristic: returns a copy of `theta`, possibly with one
/// symmetry operator applied so that it moves closer to `best`.
pub fn mgod_step<R: Rng + ?Sized>(
    topology: &Topology,
    theta: &ParamVector,
    best: &ParamVector,
    rng: &mut R,
) -> Result<ParamVector> {
    let layout = layout_for(topology, theta)?;
    layout.check_len(best)?;
    let mut out = theta.clone();
    layout.mgod_in_place(&mut out, best, rng);
    Ok(out)
}

/// Result of the exhaustive search over all composed symmetry operators.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealSeparation {
    /// Operators to apply in order to map the input onto `theta`.
    pub ops: Vec<SymmetryOp>,
    pub theta: ParamVector,
    pub distance: f64,
}

/// Per-layer transform: slot `n` receives the block of neuron `perm[n]`,
/// negated where bit `n` of `signs` is set.
#[derive(Debug, Clone)]
struct LayerTransform {
    perm: Vec<usize>,
    signs: u32,
}

fn layer_transforms(width: usize) -> Vec<LayerTransform> {
    (0..width)
        .permutations(width)
        .flat_map(|perm| {
            (0..1u32 << width).map(move |signs| LayerTransform {
                perm: perm.clone(),
                signs,
            })
        })
        .collect()
}

impl SymmetryLayout {
    fn apply_transform(&self, layer: usize, t: &LayerTransform, src: &[f64], dst: &mut [f64]) {
        for (slot, &from) in t.perm.iter().enumerate() {
            let sign = if t.signs >> slot & 1 == 1 { -1.0 } else { 1.0 };
            for (&i, &j) in self
                .raw_block(layer, slot)
                .iter()
                .zip(self.raw_block(layer, from))
            {
                dst[i] = sign * src[j];
            }
        }
    }

    /// Expresses a layer transform as transpositions followed by point flips.
    fn transform_ops(layer: usize, t: &LayerTransform, ops: &mut Vec<SymmetryOp>) {
        let mut slots: Vec<usize> = (0..t.perm.len()).collect();
        for (slot, &want) in t.perm.iter().enumerate() {
            let pos = slots.iter().position(|&s| s == want).unwrap();
            if pos != slot {
                slots.swap(pos, slot);
                ops.push(SymmetryOp::Permutation {
                    layer,
                    first: slot,
                    second: pos,
                });
            }
        }
        for slot in 0..t.perm.len() {
            if t.signs >> slot & 1 == 1 {
                ops.push(SymmetryOp::Point {
                    layer,
                    neuron: slot,
                });
            }
        }
    }
}

/// Exhaustively searches every composed symmetry operator for the one that
/// brings `theta` closest to `reference`.
///
/// Operators of different layers commute (they act on disjoint index roles:
/// rows of one layer, columns of the next), so the search space factors into
/// one independent (sign pattern, permutation) choice per hidden layer.
/// Within a layer, permutations are enumerated lexicographically and sign
/// patterns by bitmask; the first minimum wins, which makes the identity win
/// every tie it takes part in.
pub fn ideal_separation_bruteforce(
    topology: &Topology,
    theta: &ParamVector,
    reference: &ParamVector,
) -> Result<IdealSeparation> {
    let layout = layout_for(topology, theta)?;
    layout.check_len(reference)?;
    let count = count_symmetric_equivalents(topology);
    if count > BigUint::from(BRUTE_FORCE_LIMIT) {
        return Err(Error::StateSpace(count.to_string()));
    }

    let layers: Vec<usize> = topology.hidden_layers().collect();
    let per_layer: Vec<Vec<LayerTransform>> = layers
        .iter()
        .map(|&l| layer_transforms(topology.layer_sizes()[l]))
        .collect();

    let mut choice = vec![0usize; layers.len()];
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    let mut scratch = theta.to_vec();
    let mut next = theta.to_vec();
    loop {
        scratch.copy_from_slice(theta);
        for (li, &l) in layers.iter().enumerate() {
            next.copy_from_slice(&scratch);
            layout.apply_transform(l, &per_layer[li][choice[li]], &scratch, &mut next);
            std::mem::swap(&mut scratch, &mut next);
        }
        let dist = scratch
            .iter()
            .zip(reference.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        if best.as_ref().is_none_or(|(d, _, _)| dist < *d) {
            best = Some((dist, choice.clone(), scratch.clone()));
        }

        // Mixed-radix increment, first hidden layer most significant.
        let mut pos = layers.len();
        loop {
            if pos == 0 {
                let (dist, choice, theta) = best.expect("at least the identity is enumerated");
                let mut ops = Vec::new();
                for (li, &l) in layers.iter().enumerate() {
                    SymmetryLayout::transform_ops(l, &per_layer[li][choice[li]], &mut ops);
                }
                return Ok(IdealSeparation {
                    ops,
                    theta: ParamVector::new(theta),
                    distance: dist.sqrt(),
                });
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < per_layer[pos].len() {
                break;
            }
            choice[pos] = 0;
        }
    }
}
