//! Nowcasts, forecasts, posterior replicates and predictive checks.
//!
//! Every summary is a deterministic function of the posterior samples: the
//! random streams are keyed by the fit seed, the operation and the global
//! draw index, and results are reduced in draw order. Intervals are
//! equal-tailed type-1 quantiles of the draws.

mod checks;
mod output;
mod predict;
mod replicate;

pub use checks::{
    coverage_of, interval_coverage, ppc_covariance, ppc_mean_var_sorted, total_variance_identity,
    CovarianceCheck, CoverageReport, MeanVarCheck, COVARIANCE_COLUMNS_ALL,
};
pub use output::{write_json_index, PpcReport};
pub use predict::{forecast, nowcast, nowcast_at, true_counts};
pub use replicate::{replicate_insample, Replicates};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::PosteriorSamples;
use crate::model::{ModelContext, ParameterState};
use crate::stats::quantile_inverse_cdf;
use crate::triangle::ReportingTriangle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionKind {
    Nowcast,
    Forecast,
    Replicate,
}

impl PredictionKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Nowcast => "nowcast",
            Self::Forecast => "forecast",
            Self::Replicate => "replicate",
        }
    }
}

/// Reported totals `y`, or the true counts `x` of the under-reporting model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Reported,
    True,
}

/// Per-time summaries of predictive draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionSummary {
    pub kind: PredictionKind,
    pub quantity: Quantity,
    /// 1-based times.
    pub times: Vec<usize>,
    /// Central interval levels, e.g. `0.95`.
    pub levels: Vec<f64>,
    /// Sum of the observed cells at each time (0 for forecasts).
    pub observed_prefix: Vec<u64>,
    /// Rows whose total is already known: a point mass.
    pub degenerate: Vec<bool>,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    /// `lower[level][time]`.
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    /// `draws[draw][time]`, chain-major.
    #[serde(skip)]
    pub draws: Vec<Vec<u64>>,
}

impl PredictionSummary {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the interval at `level`.
    pub fn level_index(&self, level: f64) -> Option<usize> {
        self.levels.iter().position(|l| (l - level).abs() < 1e-12)
    }

    /// Whether the `level` interval at position `i` contains `value`.
    pub fn covers(&self, i: usize, level: f64, value: f64) -> Option<bool> {
        let l = self.level_index(level)?;
        Some(self.lower[l][i] <= value && value <= self.upper[l][i])
    }

    /// Draws at position `i`, in draw order.
    pub fn column(&self, i: usize) -> Vec<u64> {
        self.draws.iter().map(|d| d[i]).collect()
    }
}

/// Equal-tailed type-1 interval of sorted draws.
pub fn central_interval<T: Copy>(sorted: &[T], level: f64) -> (T, T) {
    let tail = (1.0 - level) / 2.0;
    (quantile_inverse_cdf(sorted, tail), quantile_inverse_cdf(sorted, 1.0 - tail))
}

pub(crate) fn validate_levels(levels: &[f64]) -> Result<()> {
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::Config(format!("interval level {l} must lie in (0, 1)")));
    }
    Ok(())
}

pub(crate) fn summarize(
    kind: PredictionKind,
    quantity: Quantity,
    times: Vec<usize>,
    observed_prefix: Vec<u64>,
    degenerate: Vec<bool>,
    draws: Vec<Vec<u64>>,
    levels: &[f64],
) -> PredictionSummary {
    let n = times.len();
    let mut mean = Vec::with_capacity(n);
    let mut median = Vec::with_capacity(n);
    let mut lower = vec![Vec::with_capacity(n); levels.len()];
    let mut upper = vec![Vec::with_capacity(n); levels.len()];
    for i in 0..n {
        let mut col: Vec<u64> = draws.iter().map(|d| d[i]).collect();
        if col.is_empty() {
            mean.push(f64::NAN);
            median.push(f64::NAN);
            for l in 0..levels.len() {
                lower[l].push(f64::NAN);
                upper[l].push(f64::NAN);
            }
            continue;
        }
        mean.push(col.iter().map(|&v| v as f64).sum::<f64>() / col.len() as f64);
        col.sort_unstable();
        median.push(quantile_inverse_cdf(&col, 0.5) as f64);
        for (l, &level) in levels.iter().enumerate() {
            let (lo, hi) = central_interval(&col, level);
            lower[l].push(lo as f64);
            upper[l].push(hi as f64);
        }
    }
    PredictionSummary {
        kind,
        quantity,
        times,
        levels: levels.to_vec(),
        observed_prefix,
        degenerate,
        mean,
        median,
        lower,
        upper,
        draws,
    }
}

/// Stream tags separating the operations' random numbers.
pub(crate) mod stream {
    pub const NOWCAST: u64 = 1;
    pub const FORECAST: u64 = 2;
    pub const REPLICATE: u64 = 3;
    pub const COVERAGE: u64 = 4;
}

/// Random stream of one posterior draw within one operation.
pub(crate) fn draw_rng(seed: u64, tag: u64, draw: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(draw as u64);
    rng
}

/// Rebuilds the fitting context and checks that `samples` belong to `tri`.
pub fn context_for(samples: &PosteriorSamples, tri: &ReportingTriangle) -> Result<ModelContext> {
    let ctx = ModelContext::new(&samples.spec, tri)?;
    let (ys, xs) = ParameterState::latent_labels(&ctx);
    if ParameterState::block_labels(&ctx) != samples.block_labels
        || ys != samples.latent_y_labels
        || xs != samples.latent_x_labels
    {
        return Err(Error::Config(
            "posterior samples do not match this triangle (different rows or censoring)".into(),
        ));
    }
    Ok(ctx)
}

/// Applies `f` to every posterior draw in parallel, returning results in
/// chain-major draw order.
pub(crate) fn map_draws<T, F>(samples: &PosteriorSamples, ctx: &ModelContext, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &ParameterState) -> T + Sync,
{
    let kept = samples.n_kept();
    (0..samples.n_draws())
        .into_par_iter()
        .map(|g| {
            let s = samples.state(ctx, g / kept, g % kept)?;
            Ok(f(g, &s))
        })
        .collect()
}
