use std::sync::Arc;

use ldp_recon::distributions::{binomial_distribution, Empirical};
use ldp_recon::estimators::{cm_inv, cm_inv_krr_weighted, gibu, EstimatorConfig};
use ldp_recon::experiment::{simulate, Population};
use ldp_recon::mechanisms::{average_channel, krr, Channel, MechanismGroup};
use ldp_recon::rng::derive_seed;
use proptest::prelude::*;

fn krr_mixture(k: usize, eps: &[f64]) -> Vec<Arc<Channel>> {
    eps.iter().map(|&e| Arc::new(krr(k, e).unwrap())).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) }
}

/// ‖(θ̂ − θ)·A[n]‖₂ for the raw compound inversion.
fn compound_residual(groups: &[MechanismGroup], theta: &[f64]) -> f64 {
    let est = cm_inv(groups).unwrap();
    let avg = average_channel(groups).unwrap();
    (0..avg.cols())
        .map(|z| (0..avg.rows()).map(|x| (est[x] - theta[x]) * avg.get(x, z)).sum::<f64>().powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn compound_inversion_is_consistent() {
    let k = 10;
    let channels = krr_mixture(k, &[0.5, 1.5, 3.0]);
    let weights = [0.5, 0.3, 0.2];
    let theta = binomial_distribution(k, 0.3).unwrap();
    let pop = Population::Synthetic(theta.clone());
    let mut medians = Vec::new();
    for n in [1_000usize, 10_000, 100_000, 1_000_000] {
        let r: Vec<f64> = (0..20)
            .map(|t| {
                let groups = simulate(&channels, &weights, &pop, n, derive_seed(7, &[n as u64, t])).unwrap();
                compound_residual(&groups, theta.probs())
            })
            .collect();
        medians.push(median(r));
    }
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

#[test]
fn gibu_recovers_a_skewed_truth() {
    let k = 8;
    let channels = krr_mixture(k, &[1.0, 2.0, 4.0]);
    let theta = binomial_distribution(k, 0.8).unwrap();
    let pop = Population::Synthetic(theta.clone());
    let groups = simulate(&channels, &[1.0 / 3.0; 3], &pop, 200_000, 3).unwrap();
    let r = gibu(&groups, &EstimatorConfig::default()).unwrap();
    let tv: f64 = r.estimate.probs().iter().zip(theta.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.02, "tv {tv}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn krr_closed_form_equals_matrix_inversion(
        k in 2usize..12,
        eps in prop::collection::vec(0.05f64..6.0, 1..5),
        seed in any::<u64>(),
    ) {
        let channels = krr_mixture(k, &eps);
        let weights = vec![1.0 / eps.len() as f64; eps.len()];
        let pop = Population::Synthetic(binomial_distribution(k, 0.4).unwrap());
        let groups = simulate(&channels, &weights, &pop, 500, seed).unwrap();
        let pooled = Empirical::pooled(groups.iter().map(|g| &g.observed)).unwrap();
        let pairs: Vec<(f64, u64)> = groups
            .iter()
            .map(|g| (match g.channel.mechanism() {
                ldp_recon::mechanisms::Mechanism::Krr { eps } => eps,
                other => panic!("unexpected {other:?}"),
            }, g.count()))
            .collect();
        let closed = cm_inv_krr_weighted(&pairs, &pooled, k).unwrap();
        let inverted = cm_inv(&groups).unwrap();
        for (a, b) in closed.iter().zip(&inverted) {
            prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
