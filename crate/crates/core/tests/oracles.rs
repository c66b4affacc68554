//! Independent-oracle checks for the curve constructions: brute-force
//! pair counting, a second cell-dictionary box-count implementation, the
//! same-cell-pairs identity, and geometric invariances.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxeldim::fractal::{bounding_box, pairwise_distances};
use voxeldim::{box_count_curve, pair_count_curve, DataMatrix};

fn random_matrix(rng: &mut ChaCha8Rng, t: usize, n: usize) -> DataMatrix {
    let values = DMatrix::from_fn(t, n, |_, _| rng.gen_range(-5.0..5.0));
    let voxel_index = (0..n).map(|j| [j, 0, 0]).collect();
    DataMatrix::new(values, voxel_index).unwrap()
}

fn random_radii(rng: &mut ChaCha8Rng, m: &DataMatrix) -> Vec<f64> {
    let dists = pairwise_distances(m);
    let hi = dists.iter().cloned().fold(0.0f64, f64::max) * 1.2;
    let mut radii: Vec<f64> = (0..12)
        .map(|k| hi * 0.55f64.powi(k) * rng.gen_range(0.9..1.1))
        .collect();
    radii.sort_by(|a, b| b.partial_cmp(a).unwrap());
    radii.dedup();
    radii
}

/// O(t^2) per-radius brute-force pair count, computed without sorting or
/// partition points.
fn oracle_pair_count(m: &DataMatrix, r: f64) -> u64 {
    let v = m.values();
    let mut count = 0u64;
    for i in 0..m.t() {
        for j in (i + 1)..m.t() {
            let d2: f64 = (0..m.n()).map(|k| (v[(i, k)] - v[(j, k)]).powi(2)).sum();
            if d2.sqrt() <= r {
                count += 1;
            }
        }
    }
    count
}

/// Cell-dictionary occupancy oracle built on a BTreeMap with independently
/// computed integer keys.
fn oracle_box_sum_squares(m: &DataMatrix, r: f64) -> f64 {
    let (mins, _) = bounding_box(m);
    let v = m.values();
    let mut cells: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
    for i in 0..m.t() {
        let key: Vec<i64> = (0..m.n())
            .map(|k| f64::floor((v[(i, k)] - mins[k]) / r) as i64)
            .collect();
        *cells.entry(key).or_insert(0) += 1;
    }
    let t = m.t() as f64;
    cells.values().map(|&c| (c as f64 / t).powi(2)).sum()
}

/// Number of unordered row pairs falling in the same grid cell.
fn oracle_same_cell_pairs(m: &DataMatrix, r: f64) -> u64 {
    let (mins, _) = bounding_box(m);
    let v = m.values();
    let key = |i: usize| -> Vec<i64> {
        (0..m.n())
            .map(|k| f64::floor((v[(i, k)] - mins[k]) / r) as i64)
            .collect()
    };
    let keys: Vec<Vec<i64>> = (0..m.t()).map(key).collect();
    let mut pairs = 0u64;
    for i in 0..m.t() {
        for j in (i + 1)..m.t() {
            if keys[i] == keys[j] {
                pairs += 1;
            }
        }
    }
    pairs
}

#[test]
fn pair_count_matches_bruteforce_oracle_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..25 {
        let t = rng.gen_range(5..120);
        let n = rng.gen_range(1..30);
        let m = random_matrix(&mut rng, t, n);
        let radii = random_radii(&mut rng, &m);
        let curve = pair_count_curve(&m, &radii).unwrap();
        for p in &curve.points {
            let pc = p.y.exp().round() as u64;
            assert_eq!(pc, oracle_pair_count(&m, p.r), "t={t} n={n} r={}", p.r);
            // The stored y must be the exact log of that integer count.
            assert_eq!(p.y, (oracle_pair_count(&m, p.r) as f64).ln());
        }
        for &r in &curve.dropped_r {
            assert_eq!(oracle_pair_count(&m, r), 0);
        }
    }
}

#[test]
fn box_count_matches_cell_dictionary_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..25 {
        let t = rng.gen_range(5..120);
        let n = rng.gen_range(1..30);
        let m = random_matrix(&mut rng, t, n);
        let radii = random_radii(&mut rng, &m);
        let curve = box_count_curve(&m, &radii).unwrap();
        for p in &curve.points {
            let expected = oracle_box_sum_squares(&m, p.r);
            assert!(
                (p.y.exp() - expected).abs() <= 1e-12,
                "t={t} n={n} r={} got {} want {expected}",
                p.r,
                p.y.exp()
            );
        }
    }
}

#[test]
fn box_count_satisfies_same_cell_pair_identity() {
    // Sum of squared occupancy frequencies equals (t + 2 * P_same) / t^2,
    // where P_same counts unordered pairs sharing a cell.
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..15 {
        let t = rng.gen_range(5..80);
        let n = rng.gen_range(1..12);
        let m = random_matrix(&mut rng, t, n);
        let radii = random_radii(&mut rng, &m);
        let curve = box_count_curve(&m, &radii).unwrap();
        for p in &curve.points {
            let pairs = oracle_same_cell_pairs(&m, p.r);
            let expected = (t as f64 + 2.0 * pairs as f64) / (t as f64 * t as f64);
            assert!(
                (p.y.exp() - expected).abs() <= 1e-12,
                "identity failed at r={}",
                p.r
            );
        }
    }
}

#[test]
fn pair_counts_invariant_under_isometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let t = 60;
    let n = 8;
    let m = random_matrix(&mut rng, t, n);
    let radii = random_radii(&mut rng, &m);

    // Random rotation (QR of a Gaussian matrix) plus translation.
    let g = DMatrix::from_fn(n, n, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    let q = g.qr().q();
    let shift: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let mut moved = DMatrix::zeros(t, n);
    for i in 0..t {
        for j in 0..n {
            let mut acc = shift[j];
            for k in 0..n {
                acc += m.values()[(i, k)] * q[(k, j)];
            }
            moved[(i, j)] = acc;
        }
    }
    let moved = DataMatrix::new(moved, m.voxel_index().to_vec()).unwrap();

    let a = pair_count_curve(&m, &radii).unwrap();
    let b = pair_count_curve(&moved, &radii).unwrap();
    assert_eq!(a.points.len(), b.points.len());
    for (pa, pb) in a.points.iter().zip(&b.points) {
        // Counts are integers; rotations perturb distances by at most
        // floating-point roundoff, which can flip a pair lying exactly on
        // a radius, so compare counts with a one-pair slack.
        let ca = pa.y.exp().round() as i64;
        let cb = pb.y.exp().round() as i64;
        assert!((ca - cb).abs() <= 1, "r={} counts {ca} vs {cb}", pa.r);
    }
}

#[test]
fn pair_counts_equivariant_under_uniform_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let m = random_matrix(&mut rng, 50, 6);
    let radii = random_radii(&mut rng, &m);
    let s = 3.5f64;
    let scaled_values = m.values() * s;
    let scaled = DataMatrix::new(scaled_values, m.voxel_index().to_vec()).unwrap();
    let scaled_radii: Vec<f64> = radii.iter().map(|r| r * s).collect();

    let a = pair_count_curve(&m, &radii).unwrap();
    let b = pair_count_curve(&scaled, &scaled_radii).unwrap();
    assert_eq!(a.points.len(), b.points.len());
    for (pa, pb) in a.points.iter().zip(&b.points) {
        assert_eq!(pa.y, pb.y, "count changed under scaling at r={}", pa.r);
    }
}
