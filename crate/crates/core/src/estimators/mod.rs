//! Reconstruction of the secret distribution from obfuscated reports.
//!
//! Closed-form estimators return raw vectors that may leave the simplex;
//! callers post-process them (see [`crate::postprocess`]). The EM family
//! returns proper distributions.

mod closed_form;
mod combine;
mod em;

use crate::distributions::Distribution;
use crate::error::{Error, Result};

pub use closed_form::{cm_inv, cm_inv_krr, cm_inv_krr_weighted, cm_rappor, cm_rappor_groups, inv, solve_transposed};
pub use combine::{combine_results, Base};
pub use em::{cm_ibu, gibu, gibu_naive, ibu, Gibu, NaiveGibu};

/// Starting point of the EM iterations.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    #[default]
    Uniform,
    Custom(Distribution),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Stop once the normalized log-likelihood moves by less than this.
    pub delta: f64,
    pub max_iters: usize,
    pub init: Init,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { delta: 1e-10, max_iters: 100_000, init: Init::Uniform }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if let Init::Custom(d) = &self.init {
            if !d.has_full_support() {
                return Err(Error::Config("custom init must give every secret positive mass".into()));
            }
        }
        Ok(())
    }

    /// θ⁰ over `k` secrets.
    pub fn initial(&self, k: usize) -> Result<Vec<f64>> {
        match &self.init {
            Init::Uniform => Ok(vec![1.0 / k as f64; k]),
            Init::Custom(d) if d.len() == k => Ok(d.probs().to_vec()),
            Init::Custom(d) => Err(Error::DimensionMismatch(format!("init has {} entries for k = {k}", d.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub estimate: Distribution,
    pub iterations: usize,
    /// Normalized log-likelihood at the estimate; absent for closed forms.
    pub final_loglik: Option<f64>,
    pub raw_estimate: Vec<f64>,
    pub converged: bool,
}
