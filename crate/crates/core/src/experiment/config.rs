//! TOML experiment configuration and up-front validation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, BoundingBox, LinearAlphabet, PlanarGrid};
use crate::distributions::Distribution;
use crate::error::{Error, Result};
use crate::estimators::{solve_transposed, EstimatorConfig};
use crate::mechanisms::{
    geometric_linear, geometric_planar, krr, rappor, shokri, Channel, DenseChannel, Mechanism,
};
use crate::metrics::PLANAR_EMD_CAP;
use crate::postprocess::PostProcess;

/// Tolerance on the sum of mixture weights.
const WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub alphabet: AlphabetSpec,
    pub data: DataSpec,
    #[serde(default)]
    pub run: RunSpec,
    pub mechanisms: Vec<MechanismSpec>,
    pub estimation: EstimationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AlphabetSpec {
    Linear {
        size: usize,
        #[serde(default = "one")]
        spacing: f64,
    },
    Planar {
        #[serde(default = "sf_cols")]
        cols: usize,
        #[serde(default = "sf_rows")]
        rows: usize,
        #[serde(default = "sf_cell")]
        cell_size: f64,
        #[serde(default = "sf_bbox")]
        bbox: BoundingBox,
    },
}

fn one() -> f64 {
    1.0
}
fn sf_cols() -> usize {
    24
}
fn sf_rows() -> usize {
    16
}
fn sf_cell() -> f64 {
    0.5
}
fn sf_bbox() -> BoundingBox {
    BoundingBox::SAN_FRANCISCO
}

impl AlphabetSpec {
    pub fn build(&self) -> Result<Alphabet> {
        match self {
            AlphabetSpec::Linear { size, spacing } => Ok(Alphabet::Linear(LinearAlphabet::new(*size, *spacing)?)),
            AlphabetSpec::Planar { cols, rows, cell_size, bbox } => {
                let g = PlanarGrid::new(*cols, *rows, *cell_size)?.with_bbox(*bbox)?;
                if let Ok((dw, dh)) = g.bbox_mismatch() {
                    if dw.abs() > 0.05 || dh.abs() > 0.05 {
                        log::warn!(
                            "grid extent differs from its bounding box by {:.1}% × {:.1}%",
                            100.0 * dw,
                            100.0 * dh
                        );
                    }
                }
                Ok(Alphabet::Planar(g))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// i.i.d. draws from `Binomial(k−1, α)` over the (flat) secret index.
    Binomial {
        #[serde(default = "half")]
        alpha: f64,
    },
    /// Gowalla check-ins binned onto a planar alphabet.
    Gowalla {
        path: PathBuf,
        #[serde(default)]
        one_per_user: bool,
    },
    /// Cached `cell_index,count` file for a planar alphabet.
    CellCounts { path: PathBuf },
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_schedule")]
    pub n_schedule: Vec<u64>,
    #[serde(default = "default_trials")]
    pub trials: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_schedule() -> Vec<u64> {
    vec![1_000, 10_000, 100_000, 1_000_000]
}
fn default_trials() -> u32 {
    20
}

impl Default for RunSpec {
    fn default() -> Self {
        Self { n_schedule: default_schedule(), trials: default_trials(), seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Krr,
    GeomLinear,
    GeomPlanar,
    Rappor,
    Shokri,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Krr => "krr",
            Family::GeomLinear => "geom_linear",
            Family::GeomPlanar => "geom_planar",
            Family::Rappor => "rappor",
            Family::Shokri => "shokri",
        }
    }
}

/// One mechanism of the mixture. `param` is ε for the privacy families and
/// the quality budget for Shokri's mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSpec {
    pub family: Family,
    pub param: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl MechanismSpec {
    pub fn build(&self, alphabet: &Alphabet) -> Result<Channel> {
        let k = alphabet.size();
        let wrong = |what: &str| Error::Config(format!("{} needs a {what} alphabet", self.family.name()));
        match (self.family, alphabet) {
            (Family::Krr, _) => krr(k, self.param),
            (Family::Rappor, _) => rappor(k, self.param),
            (Family::GeomLinear, Alphabet::Linear(_)) => geometric_linear(k, self.param),
            (Family::GeomLinear, Alphabet::Planar(_)) => Err(wrong("linear")),
            (Family::GeomPlanar, Alphabet::Planar(g)) => geometric_planar(g, self.param),
            (Family::GeomPlanar, Alphabet::Linear(_)) => Err(wrong("planar")),
            (Family::Shokri, _) => shokri(alphabet, &Distribution::uniform(k)?, self.param),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    CrInv,
    CrIbu,
    CrRappor,
    CmInv,
    CmIbu,
    CmRappor,
    Gibu,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::CrInv,
        EstimatorKind::CrIbu,
        EstimatorKind::CrRappor,
        EstimatorKind::CmInv,
        EstimatorKind::CmIbu,
        EstimatorKind::CmRappor,
        EstimatorKind::Gibu,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::CrInv => "cr_inv",
            EstimatorKind::CrIbu => "cr_ibu",
            EstimatorKind::CrRappor => "cr_rappor",
            EstimatorKind::CmInv => "cm_inv",
            EstimatorKind::CmIbu => "cm_ibu",
            EstimatorKind::CmRappor => "cm_rappor",
            EstimatorKind::Gibu => "gibu",
        }
    }

    /// Whether the raw output needs post-processing.
    pub fn is_closed_form(&self) -> bool {
        matches!(
            self,
            EstimatorKind::CrInv | EstimatorKind::CrRappor | EstimatorKind::CmInv | EstimatorKind::CmRappor
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostSpec {
    #[default]
    Projection,
    Normalization,
    Both,
}

impl PostSpec {
    pub fn methods(&self) -> Vec<PostProcess> {
        match self {
            PostSpec::Projection => vec![PostProcess::Projection],
            PostSpec::Normalization => vec![PostProcess::Normalization],
            PostSpec::Both => vec![PostProcess::Projection, PostProcess::Normalization],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Emd,
    L2sq,
    Tv,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Emd => "emd",
            MetricKind::L2sq => "l2sq",
            MetricKind::Tv => "tv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSpec {
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub post_processing: PostSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    /// Target `[cols, rows]` for exact planar EMD on grids above the cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emd_coarsen: Option<[usize; 2]>,
    /// Record wall-clock milliseconds per estimator (breaks byte-identical output).
    #[serde(default)]
    pub timing: bool,
}

fn default_delta() -> f64 {
    1e-10
}
fn default_max_iters() -> usize {
    100_000
}
fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::Emd]
}

impl EstimationSpec {
    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig { delta: self.delta, max_iters: self.max_iters, ..Default::default() }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file; relative data paths resolve against its directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        match &mut self.data {
            DataSpec::Gowalla { path, .. } | DataSpec::CellCounts { path } if path.is_relative() => {
                *path = base.join(&*path);
            }
            _ => {}
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Mixture weights, equal when none are given.
    pub fn weights(&self) -> Result<Vec<f64>> {
        let m = self.mechanisms.len();
        if m == 0 {
            return Err(Error::Config("the mixture has no mechanisms".into()));
        }
        let given: Vec<f64> = self.mechanisms.iter().filter_map(|s| s.weight).collect();
        if given.is_empty() {
            return Ok(vec![1.0 / m as f64; m]);
        }
        if given.len() != m {
            return Err(Error::Config("give a weight for every mechanism or for none".into()));
        }
        if given.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Config("mechanism weights must be positive".into()));
        }
        let s: f64 = given.iter().sum();
        if (s - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Config(format!("mechanism weights sum to {s}, not 1")));
        }
        Ok(given)
    }

    /// Checks the whole configuration and builds the alphabet and channels.
    pub fn validate(&self) -> Result<Validated> {
        let alphabet = self.alphabet.build().map_err(as_config)?;
        let weights = self.weights()?;
        let run = &self.run;
        if run.n_schedule.is_empty() || run.n_schedule[0] == 0 {
            return Err(Error::Config("n_schedule must be non-empty and positive".into()));
        }
        if run.n_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_schedule must be strictly increasing".into()));
        }
        if run.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        match (&self.data, &alphabet) {
            (DataSpec::Binomial { alpha }, _) if !(*alpha > 0.0 && *alpha < 1.0) => {
                return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
            }
            (DataSpec::Gowalla { .. } | DataSpec::CellCounts { .. }, Alphabet::Linear(_)) => {
                return Err(Error::Config("check-in data needs a planar alphabet".into()));
            }
            _ => {}
        }
        let est = &self.estimation;
        est.estimator_config().validate()?;
        if est.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        if est.metrics.is_empty() {
            return Err(Error::Config("no metrics selected".into()));
        }

        let channels: Vec<Arc<Channel>> = self
            .mechanisms
            .iter()
            .map(|m| m.build(&alphabet).map(Arc::new).map_err(as_config))
            .collect::<Result<_>>()?;

        let emd_factor = self.emd_factor(&alphabet)?;
        for e in &est.estimators {
            check_applicable(*e, &channels, &weights)?;
        }
        Ok(Validated { alphabet, channels, weights, emd_factor })
    }

    fn emd_factor(&self, alphabet: &Alphabet) -> Result<Option<usize>> {
        let Alphabet::Planar(g) = alphabet else {
            return Ok(None);
        };
        if !self.estimation.metrics.contains(&MetricKind::Emd) {
            return Ok(None);
        }
        match self.estimation.emd_coarsen {
            None if g.size() > PLANAR_EMD_CAP => Err(Error::Config(format!(
                "exact planar EMD is capped at {PLANAR_EMD_CAP} cells; set emd_coarsen for the {}×{} grid",
                g.cols(),
                g.rows()
            ))),
            None => Ok(None),
            Some([c, r]) => {
                if c == 0 || r == 0 || g.cols() % c != 0 || g.rows() % r != 0 || g.cols() / c != g.rows() / r {
                    return Err(Error::Config(format!(
                        "emd_coarsen {c}×{r} must divide the {}×{} grid by one common factor",
                        g.cols(),
                        g.rows()
                    )));
                }
                if c * r > PLANAR_EMD_CAP {
                    return Err(Error::Config(format!("emd_coarsen {c}×{r} exceeds the {PLANAR_EMD_CAP}-cell cap")));
                }
                Ok(Some(g.cols() / c))
            }
        }
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Estimator applicability, decided from the channels alone.
fn check_applicable(e: EstimatorKind, channels: &[Arc<Channel>], weights: &[f64]) -> Result<()> {
    let na = |why: String| Err(Error::Config(format!("{} is not applicable: {why}", e.name())));
    let all_dense = channels.iter().all(|c| c.as_dense().is_some());
    let all_rappor = channels.iter().all(|c| c.as_rappor().is_some());
    match e {
        EstimatorKind::Gibu | EstimatorKind::CrIbu => Ok(()),
        EstimatorKind::CrRappor | EstimatorKind::CmRappor if !all_rappor => {
            na("every mechanism must be RAPPOR".into())
        }
        EstimatorKind::CrRappor | EstimatorKind::CmRappor => Ok(()),
        _ if !all_dense => na("RAPPOR channels have no matrix form".into()),
        EstimatorKind::CmIbu => Ok(()),
        EstimatorKind::CrInv => {
            for c in channels {
                let d = c.as_dense().expect("dense");
                if singular(d) {
                    return na(format!("the {} channel is not invertible", c.mechanism().family()));
                }
            }
            Ok(())
        }
        EstimatorKind::CmInv => {
            let k = channels[0].input_size();
            let mut data = vec![0.0; k * k];
            for (c, w) in channels.iter().zip(weights) {
                let d = c.as_dense().expect("dense");
                data.iter_mut().zip(d.data()).for_each(|(a, v)| *a += w * v);
            }
            let avg = DenseChannel::new(k, k, data, Mechanism::Custom)?;
            if singular(&avg) {
                return na("the average channel is not invertible".into());
            }
            Ok(())
        }
    }
}

fn singular(d: &DenseChannel) -> bool {
    let q = vec![1.0 / d.cols() as f64; d.cols()];
    solve_transposed(d, &q).is_err()
}

/// A checked configuration with its alphabet and channels built.
#[derive(Debug, Clone)]
pub struct Validated {
    pub alphabet: Alphabet,
    pub channels: Vec<Arc<Channel>>,
    pub weights: Vec<f64>,
    /// Block size for planar EMD, when the grid is above the exact cap.
    pub emd_factor: Option<usize>,
}
