//! Probability vectors, sampling and empirical distributions.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, ChaCha8Rng};

/// Tolerance on the total mass of a [`Distribution`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A dense probability vector over an alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty probability vector".into()));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("component {i} is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("components sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes a non-negative vector with positive mass.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidDistribution("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights have no mass".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidDistribution("empty alphabet".into()));
        }
        Ok(Self { probs: vec![1.0 / k as f64; k] })
    }

    pub fn point_mass(k: usize, x: usize) -> Result<Self> {
        if x >= k {
            return Err(Error::IndexOutOfRange { index: x, size: k });
        }
        let mut probs = vec![0.0; k];
        probs[x] = 1.0;
        Ok(Self { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    /// `Σ θ_x²`, the collision probability.
    pub fn sum_of_squares(&self) -> f64 {
        self.probs.iter().map(|p| p * p).sum()
    }

    pub fn has_full_support(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub fn sampler(&self) -> CategoricalSampler {
        CategoricalSampler::new(&self.probs)
    }
}

impl AsRef<[f64]> for Distribution {
    fn as_ref(&self) -> &[f64] {
        &self.probs
    }
}

/// Inverse-CDF sampler over a fixed probability vector.
#[derive(Debug, Clone)]
pub struct CategoricalSampler {
    cdf: Vec<f64>,
    last: usize,
}

impl CategoricalSampler {
    pub fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        // rounding can leave the cdf a hair under 1; draws past it go to the
        // last index with positive mass
        let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Self { cdf, last }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.last)
    }
}

/// `Binomial(k − 1, α)` on `{0, …, k − 1}`.
pub fn binomial_distribution(k: usize, alpha: f64) -> Result<Distribution> {
    if k == 0 {
        return Err(Error::InvalidParameter("alphabet size must be >= 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let trials = k - 1;
    let (la, lb) = (alpha.ln(), (1.0 - alpha).ln());
    // ln C(trials, x) accumulated incrementally
    let mut log_choose = 0.0;
    let mut logs = Vec::with_capacity(k);
    for x in 0..k {
        if x > 0 {
            log_choose += ((trials - x + 1) as f64).ln() - (x as f64).ln();
        }
        logs.push(log_choose + x as f64 * la + (trials - x) as f64 * lb);
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    Distribution::from_weights(&weights)
}

/// An i.i.d. sample of secret indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub values: Vec<usize>,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Relative frequencies over an alphabet of size `k`.
    pub fn frequencies(&self, k: usize) -> Result<Vec<f64>> {
        let mut counts = vec![0u64; k];
        for &v in &self.values {
            if v >= k {
                return Err(Error::IndexOutOfRange { index: v, size: k });
            }
            counts[v] += 1;
        }
        let n = self.values.len().max(1) as f64;
        Ok(counts.into_iter().map(|c| c as f64 / n).collect())
    }
}

/// Draw `n` values from `d` with a generator seeded by `seed`.
pub fn sample_iid(d: &Distribution, n: usize, seed: u64) -> SampleSet {
    let mut rng = rng_from_seed(seed);
    sample_with(d, n, &mut rng, seed)
}

fn sample_with(d: &Distribution, n: usize, rng: &mut ChaCha8Rng, seed: u64) -> SampleSet {
    let sampler = d.sampler();
    let values = (0..n).map(|_| sampler.sample(rng)).collect();
    SampleSet { values, seed }
}

/// Empirical distribution of observed symbols, stored sparsely over the
/// observed support in ascending symbol order.
#[derive(Debug, Clone, PartialEq)]
pub struct Empirical<S> {
    support: Vec<S>,
    counts: Vec<u64>,
    total: u64,
}

impl<S: Ord + Clone> Empirical<S> {
    /// Exact relative frequencies of `observations`.
    pub fn from_observations(mut observations: Vec<S>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Empty("no observations".into()));
        }
        observations.sort_unstable();
        let total = observations.len() as u64;
        let mut support: Vec<S> = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        for s in observations {
            match support.last() {
                Some(last) if *last == s => *counts.last_mut().unwrap() += 1,
                _ => {
                    support.push(s);
                    counts.push(1);
                }
            }
        }
        Ok(Self { support, counts, total })
    }

    /// Builds from `(symbol, count)` pairs; duplicates are merged and zero
    /// counts dropped.
    pub fn from_counts<I: IntoIterator<Item = (S, u64)>>(pairs: I) -> Result<Self> {
        let mut pairs: Vec<(S, u64)> = pairs.into_iter().filter(|(_, c)| *c > 0).collect();
        if pairs.is_empty() {
            return Err(Error::Empty("no observations".into()));
        }
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        let mut support: Vec<S> = Vec::with_capacity(pairs.len());
        let mut counts: Vec<u64> = Vec::with_capacity(pairs.len());
        for (s, c) in pairs {
            match support.last() {
                Some(last) if *last == s => *counts.last_mut().unwrap() += c,
                _ => {
                    support.push(s);
                    counts.push(c);
                }
            }
        }
        let total = counts.iter().sum();
        Ok(Self { support, counts, total })
    }

    /// Pools raw counts of several empiricals.
    pub fn pooled<'a, I>(parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Empirical<S>>,
        S: 'a,
    {
        let pairs: Vec<(S, u64)> = parts
            .into_iter()
            .flat_map(|e| e.support.iter().cloned().zip(e.counts.iter().copied()))
            .collect();
        Self::from_counts(pairs)
    }
}

impl<S> Empirical<S> {
    pub fn support(&self) -> &[S] {
        &self.support
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_count(&self) -> u64 {
        self.total
    }

    pub fn weights(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, u64)> {
        self.support.iter().zip(self.counts.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// Empirical distribution of a list of observations.
pub fn empirical<S: Ord + Clone>(observations: Vec<S>) -> Result<Empirical<S>> {
    Empirical::from_observations(observations)
}

/// Total-variation distance between two dense vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
