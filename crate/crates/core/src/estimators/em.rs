//! Iterative Bayesian update over one or several mechanisms.

use std::sync::Arc;

use crate::distributions::{Distribution, Empirical};
use crate::error::{Error, Result};
use crate::mechanisms::{average_channel, Channel, MechanismGroup, RapporChannel, Symbol};

use super::{EstimationResult, EstimatorConfig};

/// Iterate components below this are set to zero.
const UNDERFLOW: f64 = 1e-300;

/// Observed columns of a dense channel, stored column by column.
#[derive(Debug, Clone)]
struct DenseTerms {
    weights: Vec<f64>,
    columns: Vec<f64>,
}

/// Observed RAPPOR reports in compressed form. For a report `v` with `h`
/// ones, `P(v|x) = B_h·g^{2v_x−1}` with `g = p/(1−p)` and
/// `B_h = p^{k−h}(1−p)^h`, so the likelihood and the update only need the
/// mass θ puts on the set bits.
///
/// Reports are stored as bytes of their bit vector. Each step tabulates the
/// mass of every 8-bit pattern once, so a report costs one lookup per byte.
#[derive(Debug, Clone)]
struct RapporTerms {
    k: usize,
    /// reports sorted by count, one run per distinct count
    runs: Vec<Run>,
    /// `ceil(k/8)` bytes per report, little-endian bit order
    bytes: Vec<u8>,
    /// `Σ w·(log B_h − log g)` over reports
    log_scale: f64,
    /// `g² − 1`
    lift: f64,
}

#[derive(Debug, Clone)]
struct Run {
    weight: f64,
    start: usize,
    end: usize,
}

impl RapporTerms {
    fn chunks(&self) -> usize {
        self.k.div_ceil(8)
    }
}

#[derive(Debug, Clone)]
enum Terms {
    Dense(DenseTerms),
    Rappor(RapporTerms),
}

fn impossible(z: &Symbol) -> Error {
    Error::ImpossibleObservation(format!("symbol {z} has zero probability under every secret"))
}

fn dense_terms(channel: &Channel, observed: &Empirical<Symbol>, n: f64) -> Result<DenseTerms> {
    let k = channel.input_size();
    let mut weights = Vec::with_capacity(observed.len());
    let mut columns = Vec::with_capacity(observed.len() * k);
    for (z, c) in observed.iter() {
        let col = channel.column(z)?;
        if !col.iter().any(|&p| p > 0.0) {
            return Err(impossible(z));
        }
        columns.extend(col);
        weights.push(c as f64 / n);
    }
    Ok(DenseTerms { weights, columns })
}

fn rappor_terms(r: &RapporChannel, observed: &Empirical<Symbol>, n: f64) -> Result<Option<RapporTerms>> {
    let p = r.keep_probability();
    let g = p / (1.0 - p);
    let lift = g * g - 1.0;
    if !(lift.is_finite() && lift > 0.0) {
        return Ok(None);
    }
    let k = r.k() as f64;
    let (lp, lq, lg) = (p.ln(), (1.0 - p).ln(), g.ln());
    let chunks = r.k().div_ceil(8);
    let mut t = RapporTerms {
        k: r.k(),
        runs: Vec::new(),
        bytes: Vec::with_capacity(observed.len() * chunks),
        log_scale: 0.0,
        lift,
    };
    let mut reports = Vec::with_capacity(observed.len());
    for (z, c) in observed.iter() {
        let Symbol::Bits(b) = z else {
            return Err(Error::InvalidParameter(format!("symbol {z} is not a RAPPOR report")));
        };
        reports.push((c, b));
    }
    reports.sort_by_key(|&(c, _)| c);
    for (i, (c, b)) in reports.into_iter().enumerate() {
        let start = t.bytes.len();
        t.bytes.resize(start + chunks, 0);
        for u in b.ones() {
            t.bytes[start + u / 8] |= 1 << (u % 8);
        }
        let h = b.count_ones() as f64;
        let w = c as f64 / n;
        t.log_scale += w * ((k - h) * lp + h * lq - lg);
        match t.runs.last_mut() {
            Some(run) if run.weight == w => run.end = i + 1,
            _ => t.runs.push(Run { weight: w, start: i, end: i + 1 }),
        }
    }
    Ok(Some(t))
}

/// Grouped EM model: the normalized log-likelihood
/// `L(θ) = Σ_A (nᴬ/n) Σ_z qᴬ_z log Σ_x θ_x Aᴬ_xz` and its update map.
#[derive(Debug, Clone)]
pub struct Gibu {
    k: usize,
    terms: Vec<Terms>,
}

impl Gibu {
    pub fn new(groups: &[MechanismGroup]) -> Result<Self> {
        let first = groups.first().ok_or_else(|| Error::Empty("no mechanism groups".into()))?;
        let k = first.channel.input_size();
        let n: u64 = groups.iter().map(MechanismGroup::count).sum();
        if n == 0 {
            return Err(Error::Empty("no observations".into()));
        }
        let n = n as f64;
        let mut terms = Vec::with_capacity(groups.len());
        for g in groups {
            if g.channel.input_size() != k {
                return Err(Error::DimensionMismatch("groups have different secret alphabets".into()));
            }
            let t = match g.channel.as_ref() {
                Channel::Rappor(r) => match rappor_terms(r, &g.observed, n)? {
                    Some(t) => Terms::Rappor(t),
                    // noiseless limit: g overflows, fall back to explicit columns
                    None => Terms::Dense(dense_terms(&g.channel, &g.observed, n)?),
                },
                Channel::Dense(_) => Terms::Dense(dense_terms(&g.channel, &g.observed, n)?),
            };
            terms.push(t);
        }
        Ok(Self { k, terms })
    }

    pub fn secrets(&self) -> usize {
        self.k
    }

    /// Evaluates `L(θ)` and applies one update.
    pub fn step(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        debug_assert_eq!(theta.len(), self.k);
        let k = self.k;
        let mut acc = vec![0.0; k];
        let mut loglik = 0.0;
        for terms in &self.terms {
            match terms {
                Terms::Dense(d) => {
                    for (w, col) in d.weights.iter().zip(d.columns.chunks_exact(k)) {
                        let den: f64 = theta.iter().zip(col).map(|(t, a)| t * a).sum();
                        if !(den > 0.0) {
                            return Err(Error::ImpossibleObservation("observed symbol lost all mass".into()));
                        }
                        loglik += w * den.ln();
                        let r = w / den;
                        acc.iter_mut().zip(col).for_each(|(s, a)| *s += r * a);
                    }
                }
                Terms::Rappor(r) => {
                    let total: f64 = theta.iter().sum();
                    let chunks = r.chunks();
                    // mass[c][m]: θ on the bits of pattern m in byte c
                    let mut mass = vec![[0.0f64; 256]; chunks];
                    for (c, table) in mass.iter_mut().enumerate() {
                        for m in 1..256usize {
                            let u = 8 * c + m.trailing_zeros() as usize;
                            table[m] = table[m & (m - 1)] + theta.get(u).copied().unwrap_or(0.0);
                        }
                    }
                    let mut hits = vec![[0.0f64; 256]; chunks];
                    let mut base = 0.0;
                    let mut ll = 0.0;
                    for run in &r.runs {
                        let w = run.weight;
                        // Σ ln e taken as ln Π e, renormalized before it leaves range
                        let (mut prod, mut logs) = (1.0f64, 0.0);
                        for v in r.bytes[run.start * chunks..run.end * chunks].chunks_exact(chunks) {
                            let set: f64 = v.iter().zip(&mass).map(|(&b, t)| t[b as usize]).sum();
                            let e = total + r.lift * set;
                            prod *= e;
                            if !(1e-200..=1e200).contains(&prod) {
                                logs += prod.ln();
                                prod = 1.0;
                            }
                            let s = w / e;
                            base += s;
                            v.iter().zip(hits.iter_mut()).for_each(|(&b, h)| h[b as usize] += s);
                        }
                        ll += w * (logs + prod.ln());
                    }
                    loglik += r.log_scale + ll;
                    for (c, h) in hits.iter().enumerate() {
                        for (m, &s) in h.iter().enumerate().filter(|(_, s)| **s != 0.0) {
                            let mut m = m;
                            while m != 0 {
                                let u = 8 * c + m.trailing_zeros() as usize;
                                acc[u] += r.lift * s;
                                m &= m - 1;
                            }
                        }
                    }
                    acc.iter_mut().for_each(|a| *a += base);
                }
            }
        }
        let next: Vec<f64> = theta.iter().zip(&acc).map(|(t, a)| t * a).collect();
        Ok((loglik, floor_and_normalize(next)))
    }

    pub fn loglik(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.step(theta)?.0)
    }

    pub fn run(&self, cfg: &EstimatorConfig) -> Result<EstimationResult> {
        iterate(self.k, cfg, |t| self.step(t))
    }
}

fn floor_and_normalize(mut v: Vec<f64>) -> Vec<f64> {
    v.iter_mut().for_each(|x| {
        if *x < UNDERFLOW {
            *x = 0.0;
        }
    });
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Runs the fused step until `|L(θᵗ) − L(θᵗ⁻¹)| < δ` and returns `θᵗ`.
fn iterate<F>(k: usize, cfg: &EstimatorConfig, step: F) -> Result<EstimationResult>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let (mut prev, mut next) = step(&cfg.initial(k)?)?;
    let mut t = 1;
    loop {
        let theta = next;
        let (l, following) = step(&theta)?;
        let converged = (l - prev).abs() < cfg.delta;
        if converged || t >= cfg.max_iters {
            if !converged {
                log::debug!("EM stopped at the iteration cap {t} with |ΔL| = {:e}", (l - prev).abs());
            }
            return Ok(EstimationResult {
                estimate: Distribution::new(theta.clone())?,
                iterations: t,
                final_loglik: Some(l),
                raw_estimate: theta,
                converged,
            });
        }
        prev = l;
        next = following;
        t += 1;
    }
}

/// GIBU over heterogeneous groups.
pub fn gibu(groups: &[MechanismGroup], cfg: &EstimatorConfig) -> Result<EstimationResult> {
    Gibu::new(groups)?.run(cfg)
}

/// Single-mechanism IBU.
pub fn ibu(group: &MechanismGroup, cfg: &EstimatorConfig) -> Result<EstimationResult> {
    gibu(std::slice::from_ref(group), cfg)
}

/// IBU on the average channel and the pooled empirical.
pub fn cm_ibu(groups: &[MechanismGroup], cfg: &EstimatorConfig) -> Result<EstimationResult> {
    let avg = average_channel(groups)?;
    let pooled = Empirical::pooled(groups.iter().map(|g| &g.observed))?;
    ibu(&MechanismGroup::new(Channel::from(avg), pooled)?, cfg)
}

/// Per-user form of the GIBU update, one likelihood column per user.
#[derive(Debug, Clone)]
pub struct NaiveGibu {
    k: usize,
    columns: Vec<Vec<f64>>,
}

impl NaiveGibu {
    pub fn new(users: &[(Arc<Channel>, Symbol)]) -> Result<Self> {
        let (first, _) = users.first().ok_or_else(|| Error::Empty("no users".into()))?;
        let k = first.input_size();
        let mut columns = Vec::with_capacity(users.len());
        for (ch, z) in users {
            if ch.input_size() != k {
                return Err(Error::DimensionMismatch("users have different secret alphabets".into()));
            }
            let col = ch.column(z)?;
            if !col.iter().any(|&p| p > 0.0) {
                return Err(impossible(z));
            }
            columns.push(col);
        }
        Ok(Self { k, columns })
    }

    pub fn step(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.columns.len() as f64;
        let mut next = vec![0.0; self.k];
        let mut loglik = 0.0;
        for g in &self.columns {
            let den: f64 = (0..self.k).map(|u| theta[u] * g[u]).sum();
            if !(den > 0.0) {
                return Err(Error::ImpossibleObservation("observed symbol lost all mass".into()));
            }
            loglik += den.ln() / n;
            for x in 0..self.k {
                next[x] += theta[x] * g[x] / den / n;
            }
        }
        Ok((loglik, floor_and_normalize(next)))
    }

    pub fn run(&self, cfg: &EstimatorConfig) -> Result<EstimationResult> {
        iterate(self.k, cfg, |t| self.step(t))
    }
}

/// Unoptimized GIBU from one `(channel, observation)` pair per user.
pub fn gibu_naive(users: &[(Arc<Channel>, Symbol)], cfg: &EstimatorConfig) -> Result<EstimationResult> {
    NaiveGibu::new(users)?.run(cfg)
}
