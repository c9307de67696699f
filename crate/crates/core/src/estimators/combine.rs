//! Combine-results: estimate per mechanism, then average.

use crate::distributions::Distribution;
use crate::error::{Error, Result};
use crate::mechanisms::MechanismGroup;
use crate::postprocess::PostProcess;

use super::{cm_rappor_groups, ibu, inv, EstimatorConfig};

/// Per-group estimator used by [`combine_results`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Base {
    Inv,
    Ibu,
    Rappor,
}

/// `Σ_A (nᴬ/n) θ̂[A]`. Raw closed-form estimates are post-processed per
/// group with `post` before averaging; IBU output is already a distribution.
pub fn combine_results(
    base: Base,
    groups: &[MechanismGroup],
    cfg: &EstimatorConfig,
    post: PostProcess,
) -> Result<Distribution> {
    let first = groups.first().ok_or_else(|| Error::Empty("no mechanism groups".into()))?;
    let k = first.channel.input_size();
    let n: u64 = groups.iter().map(MechanismGroup::count).sum();
    let mut avg = vec![0.0; k];
    for g in groups {
        let est = match base {
            Base::Inv => post.apply(&inv(g)?)?,
            Base::Rappor => post.apply(&cm_rappor_groups(std::slice::from_ref(g))?)?,
            Base::Ibu => ibu(g, cfg)?.estimate,
        };
        if est.len() != k {
            return Err(Error::DimensionMismatch("groups have different secret alphabets".into()));
        }
        let w = g.count() as f64 / n as f64;
        avg.iter_mut().zip(est.probs()).for_each(|(a, p)| *a += w * p);
    }
    let s: f64 = avg.iter().sum();
    avg.iter_mut().for_each(|a| *a /= s);
    Distribution::new(avg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{krr, rappor, Channel, DenseChannel, Mechanism};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn single_and_duplicate_groups() {
        let cfg = EstimatorConfig::default();
        let g = MechanismGroup::from_index_counts(krr(3, 1.0).unwrap(), &[5, 3, 2]).unwrap();
        let single = combine_results(Base::Inv, std::slice::from_ref(&g), &cfg, PostProcess::Projection).unwrap();
        let direct = PostProcess::Projection.apply(&inv(&g).unwrap()).unwrap();
        assert!(close(single.probs(), direct.probs(), 1e-15));

        let twice = combine_results(Base::Ibu, &[g.clone(), g.clone()], &cfg, PostProcess::Projection).unwrap();
        let once = ibu(&g, &cfg).unwrap().estimate;
        assert!(close(twice.probs(), once.probs(), 1e-15));
    }

    #[test]
    fn weighted_average_of_krr_groups() {
        let ch = krr(2, 3f64.ln()).unwrap();
        let g1 = MechanismGroup::from_index_counts(ch.clone(), &[7, 3]).unwrap();
        let g2 = MechanismGroup::from_index_counts(ch, &[5, 5]).unwrap();
        let d = combine_results(Base::Inv, &[g1, g2], &EstimatorConfig::default(), PostProcess::Projection).unwrap();
        assert!(close(d.probs(), &[0.7, 0.3], 1e-12));
    }

    #[test]
    fn inapplicable_bases() {
        let flat = DenseChannel::from_rows(vec![vec![0.2, 0.3, 0.5]; 3], Mechanism::Custom).unwrap();
        let g = MechanismGroup::from_index_counts(Channel::from(flat), &[1, 1, 1]).unwrap();
        assert!(combine_results(Base::Inv, &[g.clone()], &EstimatorConfig::default(), PostProcess::Projection).is_err());
        assert!(combine_results(Base::Rappor, &[g], &EstimatorConfig::default(), PostProcess::Projection).is_err());

        let r = MechanismGroup::new(
            rappor(3, 1.0).unwrap(),
            crate::distributions::Empirical::from_counts([(
                crate::mechanisms::Symbol::Bits("010".parse().unwrap()),
                4,
            )])
            .unwrap(),
        )
        .unwrap();
        assert!(combine_results(Base::Inv, &[r], &EstimatorConfig::default(), PostProcess::Projection).is_err());
    }
}
