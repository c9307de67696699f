//! Mapping raw estimates onto the probability simplex.

use serde::{Deserialize, Serialize};

use crate::distributions::Distribution;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostProcess {
    Projection,
    Normalization,
}

impl PostProcess {
    pub fn name(&self) -> &'static str {
        match self {
            PostProcess::Projection => "projection",
            PostProcess::Normalization => "normalization",
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Distribution> {
        match self {
            PostProcess::Projection => project_simplex(v),
            PostProcess::Normalization => truncate_normalize(v),
        }
    }
}

impl std::str::FromStr for PostProcess {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projection" => Ok(PostProcess::Projection),
            "normalization" => Ok(PostProcess::Normalization),
            other => Err(Error::Config(format!("unknown post-processing {other:?}"))),
        }
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Empty("no components to post-process".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("estimate has non-finite components".into()));
    }
    Ok(())
}

fn renormalized(mut w: Vec<f64>) -> Result<Distribution> {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    Distribution::new(w)
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(v: &[f64]) -> Result<Distribution> {
    check_finite(v)?;
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    renormalized(v.iter().map(|x| (x - tau).max(0.0)).collect())
}

/// Clip negative components to zero and rescale.
pub fn truncate_normalize(v: &[f64]) -> Result<Distribution> {
    check_finite(v)?;
    if !v.iter().any(|&x| x > 0.0) {
        return Err(Error::NonPositive);
    }
    renormalized(v.iter().map(|x| x.max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn assert_close(got: &Distribution, want: &[f64], tol: f64) {
        for (g, w) in got.probs().iter().zip(want) {
            assert!((g - w).abs() < tol, "{:?} vs {want:?}", got.probs());
        }
    }

    #[test]
    fn projection_examples() {
        assert_close(&project_simplex(&[1.2, -0.2]).unwrap(), &[1.0, 0.0], 1e-15);
        assert_close(&project_simplex(&[0.3, 0.7]).unwrap(), &[0.3, 0.7], 1e-15);
        let third = 1.0 / 3.0;
        assert_close(&project_simplex(&[0.5, 0.5, 0.5]).unwrap(), &[third; 3], 1e-12);
    }

    #[test]
    fn normalization_examples() {
        let d = truncate_normalize(&[0.5, -0.1, 0.8]).unwrap();
        assert_close(&d, &[0.384615, 0.0, 0.615385], 1e-6);
        assert_close(&truncate_normalize(&[0.3, 0.7]).unwrap(), &[0.3, 0.7], 1e-15);
        assert!(matches!(truncate_normalize(&[-1.0, -2.0]), Err(Error::NonPositive)));
        assert!(truncate_normalize(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn projection_is_nearest_among_sampled_points() {
        let mut rng = crate::rng::rng_from_seed(17);
        for _ in 0..50 {
            let k = rng.random_range(2..=10);
            let v: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.5)).collect();
            let p = project_simplex(&v).unwrap();
            let dist = |w: &[f64]| w.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = dist(p.probs());
            for _ in 0..10_000 {
                // uniform point on the simplex via normalized exponentials
                let e: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().ln()).collect();
                let s: f64 = e.iter().sum();
                let w: Vec<f64> = e.iter().map(|x| x / s).collect();
                assert!(dist(&w) >= best - 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn idempotent_and_argmax_preserving(v in proptest::collection::vec(-2.0f64..3.0, 1..12)) {
            let p = project_simplex(&v).unwrap();
            let pp = project_simplex(p.probs()).unwrap();
            for (a, b) in p.probs().iter().zip(pp.probs()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let argmax = |w: &[f64]| w.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let unique = v.iter().filter(|x| **x == m).count() == 1;
            if unique && m >= 0.0 {
                prop_assert_eq!(argmax(p.probs()), argmax(&v));
            }
            if v.iter().any(|x| *x > 0.0) {
                let t = truncate_normalize(&v).unwrap();
                let tt = truncate_normalize(t.probs()).unwrap();
                for (a, b) in t.probs().iter().zip(tt.probs()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
                if unique && m >= 0.0 {
                    prop_assert_eq!(argmax(t.probs()), argmax(&v));
                }
            }
        }
    }
}
