//! Obfuscation channels.
//!
//! A [`Channel`] maps a secret index to a distribution over observable
//! [`Symbol`]s. Dense channels keep the full row-stochastic matrix; Basic
//! One-Time RAPPOR is evaluated implicitly over `{0,1}^k`.

mod geometric;
mod rappor;
mod shokri;

use std::sync::{Arc, OnceLock};

use rand::Rng;

use crate::distributions::{CategoricalSampler, Empirical};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub use geometric::{geometric_linear, geometric_planar, planar_normalizer};
pub use rappor::{rappor, rappor_keep_probability, BitVectorReport, RapporChannel};
pub use shokri::{adversary_loss, quality_loss, shokri, shokri_solve, ShokriSolution, MAX_SHOKRI_SIZE};

/// Row-sum tolerance for channels.
pub const ROW_TOLERANCE: f64 = 1e-9;

/// An observable symbol: an index into a dense output alphabet or a RAPPOR
/// bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Index(usize),
    Bits(BitVectorReport),
}

impl std::fmt::Display for Symbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Symbol::Index(i) => write!(f, "{i}"),
            Symbol::Bits(b) => write!(f, "{b}"),
        }
    }
}

/// Which construction produced a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mechanism {
    Krr { eps: f64 },
    GeometricLinear { eps: f64 },
    GeometricPlanar { eps: f64 },
    Rappor { eps: f64 },
    Shokri { q_max: f64 },
    Custom,
}

impl Mechanism {
    pub fn family(&self) -> &'static str {
        match self {
            Mechanism::Krr { .. } => "krr",
            Mechanism::GeometricLinear { .. } => "geom_linear",
            Mechanism::GeometricPlanar { .. } => "geom_planar",
            Mechanism::Rappor { .. } => "rappor",
            Mechanism::Shokri { .. } => "shokri",
            Mechanism::Custom => "custom",
        }
    }
}

/// Row-stochastic matrix channel.
#[derive(Debug, Clone)]
pub struct DenseChannel {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    mechanism: Mechanism,
    samplers: OnceLock<Vec<CategoricalSampler>>,
}

impl PartialEq for DenseChannel {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.data == other.data
    }
}

impl DenseChannel {
    /// Row-major `rows × cols` matrix; every row must sum to one.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, mechanism: Mechanism) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "channel data has {} entries for {rows}×{cols}",
                data.len()
            )));
        }
        for (x, row) in data.chunks_exact(cols).enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidParameter(format!("row {x} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidParameter(format!("row {x} sums to {s}")));
            }
        }
        Ok(Self { rows, cols, data, mechanism, samplers: OnceLock::new() })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, mechanism: Mechanism) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged channel rows".into()));
        }
        Self::new(r, c, rows.concat(), mechanism)
    }

    pub fn identity(k: usize) -> Result<Self> {
        let mut data = vec![0.0; k * k];
        for i in 0..k {
            data[i * k + i] = 1.0;
        }
        Self::new(k, k, data, Mechanism::Custom)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn get(&self, x: usize, z: usize) -> f64 {
        self.data[x * self.cols + z]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.cols..(x + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, z: usize) -> Vec<f64> {
        (0..self.rows).map(|x| self.get(x, z)).collect()
    }

    fn samplers(&self) -> &[CategoricalSampler] {
        self.samplers
            .get_or_init(|| self.data.chunks_exact(self.cols).map(CategoricalSampler::new).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        self.samplers()[x].sample(rng)
    }
}

/// A privacy mechanism from secrets to observables.
#[derive(Debug, Clone, PartialEq)]
pub enum Channel {
    Dense(DenseChannel),
    Rappor(RapporChannel),
}

impl Channel {
    pub fn input_size(&self) -> usize {
        match self {
            Channel::Dense(d) => d.rows(),
            Channel::Rappor(r) => r.k(),
        }
    }

    pub fn mechanism(&self) -> Mechanism {
        match self {
            Channel::Dense(d) => d.mechanism(),
            Channel::Rappor(r) => Mechanism::Rappor { eps: r.eps() },
        }
    }

    pub fn as_dense(&self) -> Option<&DenseChannel> {
        match self {
            Channel::Dense(d) => Some(d),
            Channel::Rappor(_) => None,
        }
    }

    pub fn as_rappor(&self) -> Option<&RapporChannel> {
        match self {
            Channel::Rappor(r) => Some(r),
            Channel::Dense(_) => None,
        }
    }

    /// Whether `z` is an output symbol of this channel.
    pub fn accepts(&self, z: &Symbol) -> bool {
        match (self, z) {
            (Channel::Dense(d), Symbol::Index(i)) => *i < d.cols(),
            (Channel::Rappor(r), Symbol::Bits(b)) => b.len() == r.k(),
            _ => false,
        }
    }

    /// `P(z | x)`.
    pub fn prob(&self, x: usize, z: &Symbol) -> Result<f64> {
        if x >= self.input_size() {
            return Err(Error::IndexOutOfRange { index: x, size: self.input_size() });
        }
        match (self, z) {
            (Channel::Dense(d), Symbol::Index(i)) if *i < d.cols() => Ok(d.get(x, *i)),
            (Channel::Rappor(r), Symbol::Bits(b)) if b.len() == r.k() => Ok(r.prob(x, b)),
            _ => Err(Error::InvalidParameter(format!("symbol {z} is not an output of this channel"))),
        }
    }

    /// `P(z | x)` for every secret `x`.
    pub fn column(&self, z: &Symbol) -> Result<Vec<f64>> {
        (0..self.input_size()).map(|x| self.prob(x, z)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Symbol {
        match self {
            Channel::Dense(d) => Symbol::Index(d.sample(x, rng)),
            Channel::Rappor(r) => Symbol::Bits(r.sample(x, rng)),
        }
    }

    /// Obfuscate secret `x` with a generator seeded by `seed`.
    pub fn obfuscate(&self, x: usize, seed: u64) -> Result<Symbol> {
        if x >= self.input_size() {
            return Err(Error::IndexOutOfRange { index: x, size: self.input_size() });
        }
        Ok(self.sample(x, &mut rng_from_seed(seed)))
    }
}

impl From<DenseChannel> for Channel {
    fn from(d: DenseChannel) -> Self {
        Channel::Dense(d)
    }
}

impl From<RapporChannel> for Channel {
    fn from(r: RapporChannel) -> Self {
        Channel::Rappor(r)
    }
}

/// Users sharing one mechanism, with the empirical distribution of their
/// reports.
#[derive(Debug, Clone)]
pub struct MechanismGroup {
    pub channel: Arc<Channel>,
    pub observed: Empirical<Symbol>,
}

impl MechanismGroup {
    pub fn new(channel: impl Into<Arc<Channel>>, observed: Empirical<Symbol>) -> Result<Self> {
        let channel = channel.into();
        if let Some(bad) = observed.support().iter().find(|z| !channel.accepts(z)) {
            return Err(Error::InvalidParameter(format!("observed symbol {bad} is not a channel output")));
        }
        Ok(Self { channel, observed })
    }

    /// Group from per-output counts of a dense channel.
    pub fn from_index_counts(channel: impl Into<Arc<Channel>>, counts: &[u64]) -> Result<Self> {
        let observed = Empirical::from_counts(counts.iter().enumerate().map(|(z, &c)| (Symbol::Index(z), c)))?;
        Self::new(channel, observed)
    }

    /// nᴬ
    pub fn count(&self) -> u64 {
        self.observed.total_count()
    }
}

/// Dense vector of an empirical over index symbols `0..size`.
pub fn dense_weights(observed: &Empirical<Symbol>, size: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; size];
    let n = observed.total_count() as f64;
    for (z, c) in observed.iter() {
        match z {
            Symbol::Index(i) if *i < size => out[*i] += c as f64 / n,
            other => return Err(Error::InvalidParameter(format!("symbol {other} outside 0..{size}"))),
        }
    }
    Ok(out)
}

/// k-ary randomized response.
pub fn krr(k: usize, eps: f64) -> Result<Channel> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k-RR needs k >= 2, got {k}")));
    }
    check_eps(eps)?;
    // 1/(k−1+e^ε) and e^ε/(k−1+e^ε), written to survive large ε
    let off = 1.0 / ((k - 1) as f64 + eps.exp());
    let diag = 1.0 / (1.0 + (k - 1) as f64 * (-eps).exp());
    let mut data = vec![off; k * k];
    for x in 0..k {
        data[x * k + x] = diag;
    }
    Ok(DenseChannel::new(k, k, data, Mechanism::Krr { eps })?.into())
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && !eps.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("privacy parameter must be positive, got {eps}")))
    }
}

/// User-weighted average of dense channels with identical shapes.
pub fn average_channel(groups: &[MechanismGroup]) -> Result<DenseChannel> {
    let first = groups.first().ok_or_else(|| Error::Empty("no mechanism groups".into()))?;
    let shape = |g: &MechanismGroup| {
        g.channel
            .as_dense()
            .map(|d| (d.rows(), d.cols()))
            .ok_or_else(|| Error::NotApplicable("average of an implicit channel".into()))
    };
    let (rows, cols) = shape(first)?;
    let n: u64 = groups.iter().map(MechanismGroup::count).sum();
    let mut data = vec![0.0; rows * cols];
    for g in groups {
        if shape(g)? != (rows, cols) {
            return Err(Error::DimensionMismatch("channels have different alphabets".into()));
        }
        let w = g.count() as f64 / n as f64;
        let d = g.channel.as_dense().expect("checked dense");
        for (acc, v) in data.iter_mut().zip(d.data()) {
            *acc += w * v;
        }
    }
    DenseChannel::new(rows, cols, data, Mechanism::Custom)
}

/// ε[n] of the average of k-RR channels, given `(ε, users)` pairs.
pub fn krr_avg_eps_weighted(eps_counts: &[(f64, u64)], k: usize) -> Result<f64> {
    let n: u64 = eps_counts.iter().map(|(_, c)| c).sum();
    if n == 0 {
        return Err(Error::Empty("no users".into()));
    }
    let km1 = (k - 1) as f64;
    let mean: f64 = eps_counts
        .iter()
        .map(|&(e, c)| c as f64 / n as f64 / (km1 + e.exp()))
        .sum();
    Ok((1.0 / mean - km1).ln())
}

/// ε[n] solving `1/(k−1+e^{ε[n]}) = mean 1/(k−1+e^{εᵢ})`.
pub fn krr_avg_eps(eps_list: &[f64], k: usize) -> Result<f64> {
    let pairs: Vec<(f64, u64)> = eps_list.iter().map(|&e| (e, 1)).collect();
    krr_avg_eps_weighted(&pairs, k)
}

/// ε[n] for RAPPOR from `(ε, users)` pairs.
pub fn rappor_avg_eps_weighted(eps_counts: &[(f64, u64)]) -> Result<f64> {
    let n: u64 = eps_counts.iter().map(|(_, c)| c).sum();
    if n == 0 {
        return Err(Error::Empty("no users".into()));
    }
    let mean: f64 = eps_counts
        .iter()
        .map(|&(e, c)| c as f64 / n as f64 / (1.0 + (e / 2.0).exp()))
        .sum();
    Ok(2.0 * (1.0 / mean - 1.0).ln())
}

/// ε[n] solving `1/(1+e^{ε[n]/2}) = mean 1/(1+e^{εᵢ/2})`.
pub fn rappor_avg_eps(eps_list: &[f64]) -> Result<f64> {
    let pairs: Vec<(f64, u64)> = eps_list.iter().map(|&e| (e, 1)).collect();
    rappor_avg_eps_weighted(&pairs)
}
