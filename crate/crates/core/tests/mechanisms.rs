use ldp_recon::alphabet::{Alphabet, PlanarGrid};
use ldp_recon::distributions::Distribution;
use ldp_recon::mechanisms::{geometric_linear, geometric_planar, krr, shokri, Channel};
use proptest::prelude::*;

/// Wide-window summation over integer offsets, each point sent to the
/// nearest finite cell by exhaustive search (smaller index wins ties).
fn brute_force_planar(cols: usize, rows: usize, eps: f64, radius: i64) -> Vec<f64> {
    let k = cols * rows;
    let cell = |i: usize| ((i % cols) as f64, (i / cols) as f64);
    let mut m = vec![0.0; k * k];
    for x in 0..k {
        let (xc, xr) = cell(x);
        let mut total = 0.0;
        for a in -radius..=radius + cols as i64 {
            for b in -radius..=radius + rows as i64 {
                let (wc, wr) = (a as f64, b as f64);
                let w = (-eps * ((wc - xc).powi(2) + (wr - xr).powi(2)).sqrt()).exp();
                let mut best = (f64::INFINITY, 0);
                for z in 0..k {
                    let (zc, zr) = cell(z);
                    let d = (wc - zc).powi(2) + (wr - zr).powi(2);
                    if d < best.0 {
                        best = (d, z);
                    }
                }
                m[x * k + best.1] += w;
                total += w;
            }
        }
        m[x * k..(x + 1) * k].iter_mut().for_each(|v| *v /= total);
    }
    m
}

#[test]
fn planar_geometric_matches_brute_force_on_3x3() {
    let g = PlanarGrid::new(3, 3, 1.0).unwrap();
    let ch = geometric_planar(&g, 1.0).unwrap();
    let d = ch.as_dense().unwrap();
    // e^{-r} summed over rings beyond r = 45 is far below 1e-12
    let oracle = brute_force_planar(3, 3, 1.0, 45);
    for (i, (a, b)) in d.data().iter().zip(&oracle).enumerate() {
        assert!((a - b).abs() < 1e-10, "entry {i}: {a} vs {b}");
    }
}

#[test]
fn planar_geometric_matches_brute_force_on_4x2() {
    let g = PlanarGrid::new(4, 2, 0.5).unwrap();
    let ch = geometric_planar(&g, 2.0).unwrap();
    let oracle = brute_force_planar(4, 2, 1.0, 45);
    for (a, b) in ch.as_dense().unwrap().data().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10);
    }
}

fn assert_geo_indistinguishable(ch: &Channel, dist: impl Fn(usize, usize) -> f64, eps: f64, zs: &[usize]) {
    let d = ch.as_dense().unwrap();
    let k = d.rows();
    for x in 0..k {
        for y in 0..k {
            let bound = (eps * dist(x, y)).exp() * (1.0 + 1e-9);
            for &z in zs {
                assert!(d.get(x, z) <= bound * d.get(y, z), "x={x} y={y} z={z}");
            }
        }
    }
}

#[test]
fn planar_geometric_is_geo_indistinguishable() {
    for &(eps, cell) in &[(0.19, 0.5), (1.0, 1.0), (3.124, 0.5)] {
        let g = PlanarGrid::new(5, 4, cell).unwrap();
        let ch = geometric_planar(&g, eps).unwrap();
        let zs: Vec<usize> = (0..g.size()).collect();
        assert_geo_indistinguishable(&ch, |a, b| g.dist(a, b).unwrap(), eps, &zs);
    }
}

#[test]
fn truncated_linear_geometric_interior_is_geo_indistinguishable() {
    for &eps in &[0.02, 0.131, 0.869, 3.0] {
        let k = 12;
        let ch = geometric_linear(k, eps).unwrap();
        let interior: Vec<usize> = (1..k - 1).collect();
        assert_geo_indistinguishable(&ch, |a, b| a.abs_diff(b) as f64, eps, &interior);
    }
}

#[test]
fn krr_privacy_ratio_over_grid() {
    for &k in &[2, 5, 20, 100] {
        for &eps in &[0.1, 1.0, 3.0, 8.0] {
            let ch = krr(k, eps).unwrap();
            let d = ch.as_dense().unwrap();
            let ratio = d.get(0, 0) / d.get(1, 0);
            assert!((ratio - eps.exp()).abs() <= 1e-9 * eps.exp());
        }
    }
}

#[test]
fn shokri_solution_is_feasible_and_tight() {
    let a = Alphabet::linear(6, 1.0).unwrap();
    let loss = a.distance_matrix();
    let pi = Distribution::uniform(6).unwrap();
    for &q in &[0.2, 0.7, 1.3] {
        let ch = shokri(&a, &pi, q).unwrap();
        let d = ch.as_dense().unwrap();
        for x in 0..6 {
            assert!((d.row(x).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(d.row(x).iter().all(|&v| v >= 0.0));
        }
        let quality = ldp_recon::mechanisms::quality_loss(d, pi.probs(), &loss);
        assert!(quality <= q + 1e-7, "quality {quality} above budget {q}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dense_rows_are_stochastic(k in 2usize..40, eps in 0.01f64..8.0) {
        for ch in [krr(k, eps).unwrap(), geometric_linear(k, eps).unwrap()] {
            let d = ch.as_dense().unwrap();
            for x in 0..k {
                prop_assert!((d.row(x).iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(d.row(x).iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn planar_rows_are_stochastic(cols in 1usize..7, rows in 1usize..7, eps in 0.02f64..3.2) {
        let g = PlanarGrid::new(cols, rows, 0.5).unwrap();
        let ch = geometric_planar(&g, eps).unwrap();
        let d = ch.as_dense().unwrap();
        for x in 0..g.size() {
            prop_assert!((d.row(x).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(d.row(x).iter().all(|&v| v > 0.0));
        }
    }
}
