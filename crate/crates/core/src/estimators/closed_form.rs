//! Matrix inversion and the k-RR / RAPPOR closed forms.

use nalgebra::{DMatrix, DVector};

use crate::distributions::Empirical;
use crate::error::{Error, Result};
use crate::mechanisms::{
    average_channel, dense_weights, krr_avg_eps_weighted, rappor_avg_eps_weighted, BitVectorReport, Channel,
    DenseChannel, MechanismGroup, Symbol,
};

/// Smallest acceptable LU pivot magnitude.
const PIVOT_MIN: f64 = 1e-12;

/// Solves `θ·A = q` for a square channel `A`.
pub fn solve_transposed(a: &DenseChannel, q: &[f64]) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::NotApplicable(format!("inversion needs a square channel, got {}×{}", a.rows(), a.cols())));
    }
    let k = a.rows();
    if q.len() != k {
        return Err(Error::DimensionMismatch(format!("{} frequencies for a {k}×{k} channel", q.len())));
    }
    let at = DMatrix::from_row_slice(k, k, a.data()).transpose();
    let lu = at.lu();
    let pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    if pivot < PIVOT_MIN {
        return Err(Error::SingularMatrix { pivot });
    }
    let theta = lu.solve(&DVector::from_column_slice(q)).ok_or(Error::SingularMatrix { pivot })?;
    Ok(theta.iter().copied().collect())
}

fn dense_of(g: &MechanismGroup) -> Result<&DenseChannel> {
    g.channel
        .as_dense()
        .ok_or_else(|| Error::NotApplicable("inversion of an implicit channel".into()))
}

/// `q·A⁻¹` for one group.
pub fn inv(group: &MechanismGroup) -> Result<Vec<f64>> {
    let a = dense_of(group)?;
    let q = dense_weights(&group.observed, a.cols())?;
    solve_transposed(a, &q)
}

/// `q[n]·A[n]⁻¹` with the pooled empirical and the average channel.
pub fn cm_inv(groups: &[MechanismGroup]) -> Result<Vec<f64>> {
    let avg = average_channel(groups)?;
    let pooled = Empirical::pooled(groups.iter().map(|g| &g.observed))?;
    let q = dense_weights(&pooled, avg.cols())?;
    solve_transposed(&avg, &q)
}

/// Closed form of [`cm_inv`] when every user runs k-RR, from `(ε, users)`.
pub fn cm_inv_krr_weighted(eps_counts: &[(f64, u64)], pooled_q: &Empirical<Symbol>, k: usize) -> Result<Vec<f64>> {
    if let Some((e, _)) = eps_counts.iter().find(|(e, _)| !(*e > 0.0)) {
        return Err(Error::InvalidParameter(format!("privacy parameter must be positive, got {e}")));
    }
    let eps_n = krr_avg_eps_weighted(eps_counts, k)?;
    let q = dense_weights(pooled_q, k)?;
    // (e^ε+k−1)/(e^ε−1) = 1 + k/(e^ε−1)
    let em1 = eps_n.exp_m1();
    let scale = 1.0 + k as f64 / em1;
    Ok(q.iter().map(|qz| scale * qz - 1.0 / em1).collect())
}

/// Per-user ε list form of [`cm_inv_krr_weighted`].
pub fn cm_inv_krr(eps_list: &[f64], pooled_q: &Empirical<Symbol>, k: usize) -> Result<Vec<f64>> {
    let pairs: Vec<(f64, u64)> = eps_list.iter().map(|&e| (e, 1)).collect();
    cm_inv_krr_weighted(&pairs, pooled_q, k)
}

fn rappor_estimate(eps_n: f64, set_freq: &[f64]) -> Vec<f64> {
    let em1 = (eps_n / 2.0).exp_m1();
    let scale = 1.0 + 2.0 / em1;
    set_freq.iter().map(|s| scale * s - 1.0 / em1).collect()
}

/// Compound RAPPOR estimator from per-user ε and reports.
pub fn cm_rappor(eps_list: &[f64], reports: &[BitVectorReport]) -> Result<Vec<f64>> {
    if reports.is_empty() {
        return Err(Error::Empty("no RAPPOR reports".into()));
    }
    if eps_list.len() != reports.len() {
        return Err(Error::DimensionMismatch(format!("{} ε values for {} reports", eps_list.len(), reports.len())));
    }
    let k = reports[0].len();
    let mut ones = vec![0u64; k];
    for r in reports {
        if r.len() != k {
            return Err(Error::DimensionMismatch("reports have different lengths".into()));
        }
        r.ones().for_each(|u| ones[u] += 1);
    }
    let n = reports.len() as f64;
    let s: Vec<f64> = ones.iter().map(|&c| c as f64 / n).collect();
    let pairs: Vec<(f64, u64)> = eps_list.iter().map(|&e| (e, 1)).collect();
    Ok(rappor_estimate(rappor_avg_eps_weighted(&pairs)?, &s))
}

/// [`cm_rappor`] on grouped reports; every group must use RAPPOR.
pub fn cm_rappor_groups(groups: &[MechanismGroup]) -> Result<Vec<f64>> {
    let first = groups.first().ok_or_else(|| Error::Empty("no mechanism groups".into()))?;
    let k = first.channel.input_size();
    let mut ones = vec![0u64; k];
    let mut pairs = Vec::with_capacity(groups.len());
    let mut n = 0u64;
    for g in groups {
        let r = match g.channel.as_ref() {
            Channel::Rappor(r) if r.k() == k => r,
            Channel::Rappor(_) => return Err(Error::DimensionMismatch("RAPPOR groups differ in k".into())),
            Channel::Dense(_) => return Err(Error::NotApplicable("RAPPOR estimator on a non-RAPPOR group".into())),
        };
        for (z, c) in g.observed.iter() {
            match z {
                Symbol::Bits(b) => b.ones().for_each(|u| ones[u] += c),
                Symbol::Index(_) => return Err(Error::InvalidParameter("index symbol in a RAPPOR group".into())),
            }
        }
        pairs.push((r.eps(), g.count()));
        n += g.count();
    }
    let s: Vec<f64> = ones.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(rappor_estimate(rappor_avg_eps_weighted(&pairs)?, &s))
}
