use desb::datasets::interleave_split;
use desb::symmetry::{SymmetryLayout, SymmetryOp};
use desb::{euclidean_norm, Topology};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn topology() -> impl Strategy<Value = Topology> {
    prop::collection::vec(1usize..5, 1..3).prop_flat_map(|hidden| {
        (1usize..3, 1usize..3).prop_map(move |(d, q)| {
            let mut sizes = vec![d];
            sizes.extend(&hidden);
            sizes.push(q);
            Topology::new(sizes).unwrap()
        })
    })
}

fn with_vectors() -> impl Strategy<Value = (Topology, Vec<f64>, Vec<f64>, u64)> {
    topology().prop_flat_map(|t| {
        let dim = t.param_dim();
        (
            Just(t),
            prop::collection::vec(-3.0..3.0f64, dim),
            prop::collection::vec(-3.0..3.0f64, dim),
            any::<u64>(),
        )
    })
}

proptest! {
    #[test]
    fn heuristic_never_moves_away((t, theta, best, seed) in with_vectors()) {
        let layout = SymmetryLayout::new(&t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = theta;
        let dist = |v: &[f64]| v.iter().zip(&best).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        for _ in 0..20 {
            let before = dist(&v);
            layout.mgod_in_place(&mut v, &best, &mut rng);
            prop_assert!(dist(&v) <= before);
        }
    }

    #[test]
    fn operators_are_involutions((t, theta, _best, seed) in with_vectors()) {
        let layout = SymmetryLayout::new(&t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op: SymmetryOp = layout.sample_draw(&mut rng);
        let mut v = theta.clone();
        layout.apply(op, &mut v).unwrap();
        prop_assert_eq!(euclidean_norm(&v), euclidean_norm(&theta));
        layout.apply(op, &mut v).unwrap();
        prop_assert_eq!(v, theta);
    }

    #[test]
    fn interleave_is_a_partition(n in 0usize..300, a in 1usize..4, b in 1usize..4) {
        let items: Vec<usize> = (0..n).collect();
        let (train, test) = interleave_split(items, a, b);
        prop_assert_eq!(train.len() + test.len(), n);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}
