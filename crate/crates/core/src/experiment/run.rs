//! Experiment execution.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::alphabet::Alphabet;
use crate::distributions::{binomial_distribution, sample_iid, Distribution, Empirical};
use crate::error::{Error, Result};
use crate::estimators::{cm_ibu, cm_inv, cm_rappor_groups, combine_results, gibu, Base, EstimatorConfig};
use crate::ingest::{bin_to_grid, one_per_user, parse_gowalla, read_cell_counts, samples_from_counts};
use crate::mechanisms::{Channel, MechanismGroup, Symbol};
use crate::metrics::{emd, emd_planar_coarsened, l2_sq_error, tv_distance};
use crate::postprocess::PostProcess;
use crate::rng::{derive_seed, rng_from_seed};

use super::config::{DataSpec, EstimatorKind, ExperimentConfig, MetricKind, Validated};
use super::ResultRow;

/// Seed labels for the streams of one `(n, trial)` cell.
const STREAM_DATA: u64 = 0;
const STREAM_ASSIGN: u64 = 1;
const STREAM_USERS: u64 = 2;

/// Where secrets come from, with the ground truth used by the metrics.
#[derive(Debug, Clone)]
pub enum Population {
    Synthetic(Distribution),
    /// Finite pool of secrets (binned check-ins); truth is its empirical.
    Pool { values: Vec<usize>, truth: Distribution },
}

impl Population {
    pub fn truth(&self) -> &Distribution {
        match self {
            Population::Synthetic(d) => d,
            Population::Pool { truth, .. } => truth,
        }
    }

    fn draw(&self, n: usize, seed: u64) -> Result<Vec<usize>> {
        match self {
            Population::Synthetic(d) => Ok(sample_iid(d, n, seed).values),
            Population::Pool { values, .. } => {
                if n > values.len() {
                    return Err(Error::InvalidParameter(format!(
                        "n = {n} exceeds the {} available check-ins",
                        values.len()
                    )));
                }
                let mut rng = rng_from_seed(seed);
                Ok(rand::seq::index::sample(&mut rng, values.len(), n).into_iter().map(|i| values[i]).collect())
            }
        }
    }

    fn from_pool(values: Vec<usize>, k: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("no check-ins fall inside the grid".into()));
        }
        let n = values.len() as f64;
        let mut freq = vec![0.0; k];
        for &v in &values {
            *freq.get_mut(v).ok_or(Error::IndexOutOfRange { index: v, size: k })? += 1.0;
        }
        freq.iter_mut().for_each(|f| *f /= n);
        Ok(Population::Pool { values, truth: Distribution::new(freq)? })
    }
}

/// Loads or synthesizes the secret population of a configuration.
pub fn load_population(cfg: &ExperimentConfig, alphabet: &Alphabet) -> Result<Population> {
    let k = alphabet.size();
    match &cfg.data {
        DataSpec::Binomial { alpha } => Ok(Population::Synthetic(binomial_distribution(k, *alpha)?)),
        DataSpec::Gowalla { path, one_per_user: first_only } => {
            let Alphabet::Planar(grid) = alphabet else {
                return Err(Error::Config("check-in data needs a planar alphabet".into()));
            };
            let parsed = parse_gowalla(path)?;
            let checkins = if *first_only { one_per_user(&parsed.checkins) } else { parsed.checkins };
            let binned = bin_to_grid(&checkins, grid)?;
            log::info!(
                "{} check-ins binned, {} outside the grid, {} malformed lines",
                binned.samples.len(),
                binned.dropped,
                parsed.malformed
            );
            Population::from_pool(binned.samples.values, k)
        }
        DataSpec::CellCounts { path } => {
            let counts = read_cell_counts(path, k)?;
            Population::from_pool(samples_from_counts(&counts).values, k)
        }
    }
}

/// `⌊wᵢ·n⌋` users per mechanism, the remainder drawn by weight.
pub fn allocate(weights: &[f64], n: usize, seed: u64) -> Vec<usize> {
    let mut counts: Vec<usize> = weights.iter().map(|w| (w * n as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut rng = rng_from_seed(seed);
    let total: f64 = weights.iter().sum();
    for _ in assigned..n {
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = weights.len() - 1;
        for (m, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = m;
                break;
            }
        }
        counts[pick] += 1;
    }
    counts
}

/// Obfuscated data of one `(n, trial)` cell, grouped by mechanism.
pub fn simulate(
    channels: &[Arc<Channel>],
    weights: &[f64],
    population: &Population,
    n: usize,
    seed: u64,
) -> Result<Vec<MechanismGroup>> {
    let secrets = population.draw(n, derive_seed(seed, &[STREAM_DATA]))?;
    let counts = allocate(weights, n, derive_seed(seed, &[STREAM_ASSIGN]));
    let user_root = derive_seed(seed, &[STREAM_USERS]);
    let mut groups = Vec::with_capacity(channels.len());
    let mut start = 0;
    for (ch, &c) in channels.iter().zip(&counts) {
        let users = start..start + c;
        start += c;
        if c == 0 {
            continue;
        }
        let reports: Vec<Symbol> = users
            .map(|i| ch.sample(secrets[i], &mut rng_from_seed(derive_seed(user_root, &[i as u64]))))
            .collect();
        groups.push(MechanismGroup::new(ch.clone(), Empirical::from_observations(reports)?)?);
    }
    Ok(groups)
}

/// Output of one estimator before metrics.
struct Estimate {
    post: &'static str,
    dist: Distribution,
    iterations: Option<usize>,
}

fn run_estimator(
    e: EstimatorKind,
    groups: &[MechanismGroup],
    cfg: &EstimatorConfig,
    posts: &[PostProcess],
) -> Result<Vec<Estimate>> {
    let closed = |raw: Vec<f64>| -> Result<Vec<Estimate>> {
        posts
            .iter()
            .map(|p| Ok(Estimate { post: p.name(), dist: p.apply(&raw)?, iterations: None }))
            .collect()
    };
    let combined = |base: Base| -> Result<Vec<Estimate>> {
        posts
            .iter()
            .map(|p| Ok(Estimate { post: p.name(), dist: combine_results(base, groups, cfg, *p)?, iterations: None }))
            .collect()
    };
    match e {
        EstimatorKind::CrInv => combined(Base::Inv),
        EstimatorKind::CrRappor => combined(Base::Rappor),
        EstimatorKind::CrIbu => Ok(vec![Estimate {
            post: "none",
            dist: combine_results(Base::Ibu, groups, cfg, PostProcess::Projection)?,
            iterations: None,
        }]),
        EstimatorKind::CmInv => closed(cm_inv(groups)?),
        EstimatorKind::CmRappor => closed(cm_rappor_groups(groups)?),
        EstimatorKind::CmIbu | EstimatorKind::Gibu => {
            let r = if e == EstimatorKind::Gibu { gibu(groups, cfg)? } else { cm_ibu(groups, cfg)? };
            Ok(vec![Estimate { post: "none", dist: r.estimate, iterations: Some(r.iterations) }])
        }
    }
}

fn metric(m: MetricKind, est: &Distribution, truth: &Distribution, v: &Validated) -> Result<f64> {
    match m {
        MetricKind::Emd => match (v.emd_factor, &v.alphabet) {
            (Some(f), Alphabet::Planar(g)) => emd_planar_coarsened(est, truth, g, f),
            _ => emd(est, truth, &v.alphabet),
        },
        MetricKind::L2sq => l2_sq_error(est.probs(), truth),
        MetricKind::Tv => tv_distance(est, truth),
    }
}

/// Runs one `(n, trial)` cell and returns its rows in canonical order.
pub fn run_cell(
    cfg: &ExperimentConfig,
    v: &Validated,
    population: &Population,
    n: u64,
    trial: u32,
) -> Result<Vec<ResultRow>> {
    let seed = derive_seed(cfg.run.seed, &[n, trial as u64]);
    let groups = simulate(&v.channels, &v.weights, population, n as usize, seed)?;
    let est_cfg = cfg.estimation.estimator_config();
    let posts = cfg.estimation.post_processing.methods();
    let mut rows = Vec::new();
    for &e in &cfg.estimation.estimators {
        let started = Instant::now();
        let estimates = run_estimator(e, &groups, &est_cfg, &posts)?;
        let wall_ms = if cfg.estimation.timing { started.elapsed().as_millis() as u64 } else { 0 };
        for est in estimates {
            for &m in &cfg.estimation.metrics {
                let value = metric(m, &est.dist, population.truth(), v)?;
                rows.push(ResultRow {
                    n,
                    trial,
                    estimator: e.name().to_string(),
                    post: est.post.to_string(),
                    metric: m.name().to_string(),
                    value,
                    iterations: est.iterations,
                    wall_ms,
                });
            }
        }
    }
    Ok(rows)
}

/// Validates, loads data and runs every `(n, trial)` cell. Cells run in
/// parallel on the current rayon pool; rows come back in `(n, trial)` order.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let v = cfg.validate()?;
    let population = load_population(cfg, &v.alphabet)?;
    run_validated(cfg, &v, &population)
}

pub fn run_validated(cfg: &ExperimentConfig, v: &Validated, population: &Population) -> Result<Vec<ResultRow>> {
    let cells: Vec<(u64, u32)> = cfg
        .run
        .n_schedule
        .iter()
        .flat_map(|&n| (0..cfg.run.trials).map(move |t| (n, t)))
        .collect();
    let per_cell: Vec<Vec<ResultRow>> = cells
        .par_iter()
        .map(|&(n, t)| {
            log::debug!("running n = {n}, trial = {t}");
            run_cell(cfg, v, population, n, t)
        })
        .collect::<Result<_>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}
