#![allow(clippy::needless_range_loop)]

mod common;

use common::rel_close;
use ncfair::array_io::{DenseArray, SubsetSpec};
use ncfair::ClassStatsAccumulator;
use proptest::prelude::*;

const C: usize = 6;
const D: usize = 3;

fn stream() -> impl Strategy<Value = Vec<(usize, Vec<f64>)>> {
    prop::collection::vec((0..C, prop::collection::vec(-50.0..50.0f64, D)), 1..120)
}

fn accumulate(items: &[(usize, Vec<f64>)]) -> ClassStatsAccumulator {
    let mut acc = ClassStatsAccumulator::new(C, D);
    for (c, h) in items {
        acc.push(*c, h);
    }
    acc
}

fn vec_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    diff <= tol * scale
}

/// Same counts; means and within-class scatter agree to `tol` relative.
fn equivalent(
    a: &ClassStatsAccumulator,
    b: &ClassStatsAccumulator,
    tol: f64,
) -> Result<(), String> {
    if a.counts() != b.counts() || a.tokens_seen() != b.tokens_seen() {
        return Err(format!("counts {:?} vs {:?}", a.counts(), b.counts()));
    }
    for c in 0..C {
        match (a.mean(c), b.mean(c)) {
            (None, None) => {}
            (Some(x), Some(y)) if vec_close(x, y, tol) => {}
            (x, y) => return Err(format!("class {c} means {x:?} vs {y:?}")),
        }
        let (x, y) = (a.scatter(c), b.scatter(c));
        // Scatter of a single point is exactly zero in both.
        if !(rel_close(x, y, tol) || (x.abs() < 1e-9 && y.abs() < 1e-9)) {
            return Err(format!("class {c} scatter {x} vs {y}"));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn permutation_invariance(items in stream(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut common::rng(seed));
        let a = accumulate(&items);
        let b = accumulate(&shuffled);
        prop_assert!(equivalent(&a, &b, 1e-10).is_ok(), "{:?}", equivalent(&a, &b, 1e-10));
        for c in 0..C {
            if let (Some(x), Some(y)) = (a.variance(c), b.variance(c)) {
                prop_assert!(rel_close(x, y, 1e-10) || (x < 1e-9 && y < 1e-9));
            }
        }
    }

    #[test]
    fn shard_then_merge_matches_single_pass(items in stream(), cuts in prop::collection::vec(any::<prop::sample::Index>(), 0..5)) {
        let mut bounds: Vec<usize> = cuts.iter().map(|i| i.index(items.len() + 1)).collect();
        bounds.push(0);
        bounds.push(items.len());
        bounds.sort_unstable();
        let mut merged = ClassStatsAccumulator::new(C, D);
        for w in bounds.windows(2) {
            merged.merge_from(&accumulate(&items[w[0]..w[1]])).unwrap();
        }
        let single = accumulate(&items);
        prop_assert!(equivalent(&merged, &single, 1e-10).is_ok(), "{:?}", equivalent(&merged, &single, 1e-10));
    }

    #[test]
    fn merge_is_commutative_and_associative(a in stream(), b in stream(), c in stream()) {
        let (x, y, z) = (accumulate(&a), accumulate(&b), accumulate(&c));
        let xy = x.merge(&y).unwrap();
        let yx = y.merge(&x).unwrap();
        prop_assert!(equivalent(&xy, &yx, 1e-10).is_ok());
        let left = xy.merge(&z).unwrap();
        let right = x.merge(&y.merge(&z).unwrap()).unwrap();
        prop_assert!(equivalent(&left, &right, 1e-10).is_ok());
        let empty = ClassStatsAccumulator::new(C, D);
        prop_assert_eq!(x.merge(&empty).unwrap(), x.clone());
        prop_assert_eq!(empty.merge(&x).unwrap(), x);
    }

    #[test]
    fn translation_shifts_means_and_keeps_variance(items in stream(), t in prop::collection::vec(-20.0..20.0f64, D)) {
        let shifted: Vec<(usize, Vec<f64>)> = items
            .iter()
            .map(|(c, h)| (*c, h.iter().zip(&t).map(|(a, b)| a + b).collect()))
            .collect();
        let a = accumulate(&items);
        let b = accumulate(&shifted);
        for c in 0..C {
            if let (Some(m), Some(n)) = (a.mean(c), b.mean(c)) {
                for j in 0..D {
                    prop_assert!((m[j] + t[j] - n[j]).abs() <= 1e-9 * (1.0 + n[j].abs()));
                }
                let (va, vb) = (a.variance(c).unwrap(), b.variance(c).unwrap());
                prop_assert!((va - vb).abs() <= 1e-9 * (1.0 + va));
            }
        }
        let all = SubsetSpec::whole(C).unwrap();
        let (ga, gb) = (a.global_mean(&all).unwrap(), b.global_mean(&all).unwrap());
        for j in 0..D {
            prop_assert!((ga.mean[j] + t[j] - gb.mean[j]).abs() <= 1e-9 * (1.0 + gb.mean[j].abs()));
        }
    }

    #[test]
    fn snapshot_round_trip_is_exact(items in stream()) {
        let acc = accumulate(&items);
        let dir = tempfile::tempdir().unwrap();
        acc.save_snapshot(dir.path()).unwrap();
        prop_assert_eq!(ClassStatsAccumulator::load_snapshot(dir.path()).unwrap(), acc);
    }
}

#[test]
fn float32_input_accumulates_in_double() {
    let reps32: Vec<f32> = vec![1.0, 2.0, 3.0, 0.1, 0.2, 0.3];
    let reps = DenseArray::from_f32(vec![2, 3], reps32.clone()).unwrap();
    let labels = DenseArray::from_labels(&[4, 4]);
    let mut acc = ClassStatsAccumulator::new(C, D);
    acc.accumulate(&reps, &labels).unwrap();
    let want: Vec<f64> = (0..3)
        .map(|j| (reps32[j] as f64 + reps32[j + 3] as f64) / 2.0)
        .collect();
    assert_eq!(acc.mean(4).unwrap(), want.as_slice());
}

#[test]
fn snapshot_files_follow_the_documented_layout() {
    let acc = accumulate(&[(1, vec![1.0, 2.0, 3.0]), (1, vec![3.0, 2.0, 1.0])]);
    let dir = tempfile::tempdir().unwrap();
    acc.save_snapshot(dir.path()).unwrap();
    let counts = ncfair::read_array(dir.path().join("counts.npy")).unwrap();
    let means = ncfair::read_array(dir.path().join("means.npy")).unwrap();
    let scatter = ncfair::read_array(dir.path().join("scatter.npy")).unwrap();
    assert_eq!(counts.shape(), &[C]);
    assert_eq!(counts.dtype(), ncfair::Dtype::I64);
    assert_eq!(means.shape(), &[C, D]);
    assert_eq!(scatter.shape(), &[C]);
    assert_eq!(scatter.to_f64_vec()[1], 4.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["dim"], 3);
    assert_eq!(manifest["vocab_size"], C);
    assert_eq!(manifest["tokens_seen"], 2);
}
