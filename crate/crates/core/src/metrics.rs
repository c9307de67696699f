//! Distances between distributions and analytic error bounds.

use crate::alphabet::{Alphabet, LinearAlphabet, PlanarGrid};
use crate::distributions::{total_variation, Distribution};
use crate::error::{Error, Result};
use crate::lp::transportation;

/// Largest planar grid for which exact EMD is computed.
pub const PLANAR_EMD_CAP: usize = 200;

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("vectors of length {a} and {b}")))
    }
}

/// Earth mover's distance on a line: `spacing · Σ_i |P(i) − Q(i)|` over the CDFs.
pub fn emd_linear(p: &Distribution, q: &Distribution, a: &LinearAlphabet) -> Result<f64> {
    same_len(p.len(), q.len())?;
    same_len(p.len(), a.size())?;
    let mut gap = 0.0;
    let mut total = 0.0;
    for (x, y) in p.probs().iter().zip(q.probs()) {
        gap += x - y;
        total += gap.abs();
    }
    Ok(a.spacing() * total)
}

/// Exact earth mover's distance on a planar grid with Euclidean ground cost.
pub fn emd_planar(p: &Distribution, q: &Distribution, g: &PlanarGrid) -> Result<f64> {
    same_len(p.len(), q.len())?;
    same_len(p.len(), g.size())?;
    if g.size() > PLANAR_EMD_CAP {
        return Err(Error::TooLarge(format!(
            "exact planar EMD is capped at {PLANAR_EMD_CAP} cells, grid has {}; coarsen the grid first",
            g.size()
        )));
    }
    let cost = Alphabet::Planar(*g).distance_matrix();
    Ok(transportation(p, q, &cost)?.total_cost.max(0.0))
}

/// Sums the mass of each `factor × factor` block of cells.
pub fn coarsen_distribution(p: &Distribution, g: &PlanarGrid, factor: usize) -> Result<(Distribution, PlanarGrid)> {
    same_len(p.len(), g.size())?;
    let coarse = g.coarsen(factor, factor)?;
    let mut mass = vec![0.0; coarse.size()];
    for (i, w) in p.probs().iter().enumerate() {
        mass[g.coarse_index(i, factor)] += w;
    }
    Ok((Distribution::new(mass)?, coarse))
}

/// [`emd_planar`] after merging `factor × factor` blocks.
pub fn emd_planar_coarsened(p: &Distribution, q: &Distribution, g: &PlanarGrid, factor: usize) -> Result<f64> {
    let (pc, coarse) = coarsen_distribution(p, g, factor)?;
    let (qc, _) = coarsen_distribution(q, g, factor)?;
    emd_planar(&pc, &qc, &coarse)
}

/// EMD on either kind of alphabet.
pub fn emd(p: &Distribution, q: &Distribution, a: &Alphabet) -> Result<f64> {
    match a {
        Alphabet::Linear(l) => emd_linear(p, q, l),
        Alphabet::Planar(g) => emd_planar(p, q, g),
    }
}

pub fn tv_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    same_len(p.len(), q.len())?;
    Ok(total_variation(p.probs(), q.probs()))
}

/// `Σ (estᵢ − truthᵢ)²`
pub fn l2_sq_error(est: &[f64], truth: &Distribution) -> Result<f64> {
    same_len(est.len(), truth.len())?;
    Ok(est.iter().zip(truth.probs()).map(|(e, t)| (e - t).powi(2)).sum())
}

/// Value of a mean-squared-error bound together with its inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub bound_value: f64,
    pub n: u64,
    pub eps_n: f64,
}

fn check_bound_args(eps_n: f64, n: u64) -> Result<()> {
    if !(eps_n > 0.0) {
        return Err(Error::InvalidParameter(format!("compound ε must be positive, got {eps_n}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("bound needs n >= 1".into()));
    }
    Ok(())
}

/// MSE bound of the compound k-RR inversion estimator:
/// `(1−Σθ²)/n + (k−1)/n · (k + 2(e^ε−1))/(e^ε−1)²`.
pub fn krr_mse_bound(truth: &Distribution, eps_n: f64, n: u64, k: usize) -> Result<BoundReport> {
    check_bound_args(eps_n, n)?;
    let nf = n as f64;
    let em1 = eps_n.exp_m1();
    let kf = k as f64;
    let bound_value = (1.0 - truth.sum_of_squares()) / nf + (kf - 1.0) / nf * (kf + 2.0 * em1) / (em1 * em1);
    Ok(BoundReport { bound_value, n, eps_n })
}

/// MSE bound of the compound RAPPOR estimator:
/// `(1−Σθ²)/n + k·e^{ε/2}/(n(e^{ε/2}−1)²)`.
pub fn rappor_mse_bound(truth: &Distribution, eps_n: f64, n: u64, k: usize) -> Result<BoundReport> {
    check_bound_args(eps_n, n)?;
    let nf = n as f64;
    let h = eps_n / 2.0;
    let em1 = h.exp_m1();
    // e^{h}/(e^h−1)² written to stay finite for large h
    let second = if h > 350.0 { (-h).exp() } else { h.exp() / (em1 * em1) };
    let bound_value = (1.0 - truth.sum_of_squares()) / nf + k as f64 * second / nf;
    Ok(BoundReport { bound_value, n, eps_n })
}
