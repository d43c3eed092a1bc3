use serde::Serialize;

use crate::error::{Error, Result};
use crate::mcmc::PosteriorSamples;
use crate::model::Variant;
use crate::stats::{covariance_matrix, mean, variance};
use crate::triangle::ReportingTriangle;

use super::predict::{covariance_factor, delay_cells, fresh_log_mu, glm_cells};
use super::replicate::{observed_window, Replicates};
use super::{central_interval, context_for, draw_rng, map_draws, stream};

/// Default for the covariance checks: all `D + 1` columns, remainder included.
pub const COVARIANCE_COLUMNS_ALL: bool = true;

/// Replicate covariance statistics against the observed ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceCheck {
    pub include_remainder: bool,
    /// Mean elementwise difference, replicate minus observed, of `Cov[z_i, z_j]`.
    pub bias_z: Vec<f64>,
    /// `ln` mean squared difference; `-inf` when the matrices coincide.
    pub log_mse_z: Vec<f64>,
    /// As `bias_z` for the proportions `z_i / y` (rows with `y = 0` dropped).
    pub bias_p: Vec<f64>,
    pub log_mse_p: Vec<f64>,
    pub observed_cov_z: Vec<Vec<f64>>,
    pub observed_cov_p: Vec<Vec<f64>>,
}

fn as_f64(rows: &[Vec<u64>], cols: usize) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r[..cols].iter().map(|&v| v as f64).collect())
        .collect()
}

fn proportions(rows: &[Vec<u64>], cols: usize) -> Vec<Vec<f64>> {
    rows.iter()
        .filter_map(|r| {
            let y: u64 = r.iter().sum();
            (y > 0).then(|| r[..cols].iter().map(|&v| v as f64 / y as f64).collect())
        })
        .collect()
}

/// Mean difference and log mean squared difference of two matrices.
fn compare(rep: &[Vec<f64>], obs: &[Vec<f64>]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut n = 0.0;
    for (a, b) in rep.iter().flatten().zip(obs.iter().flatten()) {
        sum += a - b;
        sq += (a - b) * (a - b);
        n += 1.0;
    }
    let mse = sq / n;
    (sum / n, if mse == 0.0 { f64::NEG_INFINITY } else { mse.ln() })
}

/// Covariances of the cells and of the reported proportions over the
/// replication window, per replicate, compared with the observed ones.
pub fn ppc_covariance(
    reps: &Replicates,
    tri: &ReportingTriangle,
    include_remainder: bool,
) -> Result<CovarianceCheck> {
    let (times, _, obs) = observed_window(tri);
    if times != reps.times {
        return Err(Error::Config("replicates do not cover the triangle's complete rows".into()));
    }
    if times.len() < 2 {
        return Err(Error::InsufficientData("covariances need at least two complete rows".into()));
    }
    let width = tri.width();
    let cols = if include_remainder { width } else { width - 1 };
    let obs_z = covariance_matrix(&as_f64(&obs, cols));
    let obs_p_rows = proportions(&obs, cols);
    if obs_p_rows.len() < 2 {
        return Err(Error::InsufficientData("fewer than two complete rows with a positive total".into()));
    }
    let obs_p = covariance_matrix(&obs_p_rows);
    let mut out = CovarianceCheck {
        include_remainder,
        bias_z: Vec::with_capacity(reps.n_replicates()),
        log_mse_z: Vec::with_capacity(reps.n_replicates()),
        bias_p: Vec::with_capacity(reps.n_replicates()),
        log_mse_p: Vec::with_capacity(reps.n_replicates()),
        observed_cov_z: obs_z.clone(),
        observed_cov_p: obs_p.clone(),
    };
    for cells in &reps.cells {
        let (b, l) = compare(&covariance_matrix(&as_f64(cells, cols)), &obs_z);
        out.bias_z.push(b);
        out.log_mse_z.push(l);
        let p = proportions(cells, cols);
        let (b, l) = if p.len() < 2 {
            (f64::NAN, f64::NAN)
        } else {
            compare(&covariance_matrix(&p), &obs_p)
        };
        out.bias_p.push(b);
        out.log_mse_p.push(l);
    }
    Ok(out)
}

/// `(Var[ỹ], Σ_{i,j} Cov[z̃_i, z̃_j])` of replicate `r`; equal up to rounding.
pub fn total_variance_identity(reps: &Replicates, r: usize) -> (f64, f64) {
    let totals: Vec<f64> = reps.totals[r].iter().map(|&v| v as f64).collect();
    let cov = covariance_matrix(&as_f64(&reps.cells[r], reps.width()));
    (variance(&totals), cov.iter().flatten().sum())
}

/// Sample mean and variance of the replicate totals, and the envelope of
/// the sorted replicate totals, against the observed ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanVarCheck {
    pub observed_mean: f64,
    pub observed_var: f64,
    pub mean_draws: Vec<f64>,
    pub var_draws: Vec<f64>,
    /// Fraction of replicates with a statistic at least the observed one.
    pub p_mean: f64,
    pub p_var: f64,
    pub sorted_observed: Vec<f64>,
    pub sorted_mean: Vec<f64>,
    /// Pointwise 95% envelope of the sorted replicates.
    pub sorted_lower: Vec<f64>,
    pub sorted_upper: Vec<f64>,
    /// Ranks where the observed sorted value lies outside the envelope.
    pub below_envelope: usize,
    pub above_envelope: usize,
    /// Top-decile ranks whose observed value falls below the envelope: the
    /// replicates' upper tail is heavier than the data's.
    pub upper_tail_deficit: usize,
}

pub fn ppc_mean_var_sorted(reps: &Replicates, tri: &ReportingTriangle) -> Result<MeanVarCheck> {
    let (times, obs_y, _) = observed_window(tri);
    if times != reps.times {
        return Err(Error::Config("replicates do not cover the triangle's complete rows".into()));
    }
    if times.len() < 2 || reps.n_replicates() == 0 {
        return Err(Error::InsufficientData("need two complete rows and one replicate".into()));
    }
    let to_f = |v: &[u64]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let obs = to_f(&obs_y);
    let (om, ov) = (mean(&obs), variance(&obs));
    let mut mean_draws = Vec::with_capacity(reps.n_replicates());
    let mut var_draws = Vec::with_capacity(reps.n_replicates());
    let mut sorted: Vec<Vec<f64>> = Vec::with_capacity(reps.n_replicates());
    for ys in &reps.totals {
        let mut y = to_f(ys);
        mean_draws.push(mean(&y));
        var_draws.push(variance(&y));
        y.sort_by(f64::total_cmp);
        sorted.push(y);
    }
    let frac_ge = |d: &[f64], o: f64| d.iter().filter(|&&v| v >= o).count() as f64 / d.len() as f64;
    let mut sorted_observed = obs.clone();
    sorted_observed.sort_by(f64::total_cmp);
    let n = times.len();
    let mut sorted_mean = Vec::with_capacity(n);
    let mut sorted_lower = Vec::with_capacity(n);
    let mut sorted_upper = Vec::with_capacity(n);
    for i in 0..n {
        let mut col: Vec<f64> = sorted.iter().map(|s| s[i]).collect();
        sorted_mean.push(mean(&col));
        col.sort_by(f64::total_cmp);
        let (lo, hi) = central_interval(&col, 0.95);
        sorted_lower.push(lo);
        sorted_upper.push(hi);
    }
    let below: Vec<bool> = (0..n).map(|i| sorted_observed[i] < sorted_lower[i]).collect();
    let above = (0..n).filter(|&i| sorted_observed[i] > sorted_upper[i]).count();
    let top = n - (n as f64 * 0.1).ceil() as usize;
    Ok(MeanVarCheck {
        observed_mean: om,
        observed_var: ov,
        p_mean: frac_ge(&mean_draws, om),
        p_var: frac_ge(&var_draws, ov),
        mean_draws,
        var_draws,
        sorted_observed,
        sorted_mean,
        sorted_lower,
        sorted_upper,
        below_envelope: below.iter().filter(|&&b| b).count(),
        above_envelope: above,
        upper_tail_deficit: below[top..].iter().filter(|&&b| b).count(),
    })
}

/// Fraction of `observed` values inside `[lower, upper]`.
pub fn coverage_of(lower: &[f64], upper: &[f64], observed: &[f64]) -> Result<f64> {
    if observed.is_empty() || lower.len() != observed.len() || upper.len() != observed.len() {
        return Err(Error::InsufficientData("coverage needs at least one matching interval".into()));
    }
    let inside = observed
        .iter()
        .zip(lower.iter().zip(upper))
        .filter(|(o, (l, u))| **l <= **o && **o <= **u)
        .count();
    Ok(inside as f64 / observed.len() as f64)
}

/// Coverage of central predictive intervals for the reported proportions
/// `z_{t,d} / y_t` over the complete rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub level: f64,
    pub multinomial_limit: bool,
    /// Per delay column `1..=D+1`.
    pub per_delay: Vec<f64>,
    pub cells_per_delay: Vec<usize>,
    pub overall: f64,
}

/// Interval coverage of `z_{t,d} / y_t` at `level`. Under the GDMs the
/// replicate cells are drawn given the observed `y_t`, from the fitted
/// Generalized-Dirichlet-Multinomial or, with `multinomial_limit`, from the
/// stick-breaking Multinomial at the same `ν_t`. Under the GLMs the
/// proportions of unconditional cell replicates are used.
pub fn interval_coverage(
    samples: &PosteriorSamples,
    tri: &ReportingTriangle,
    level: f64,
    multinomial_limit: bool,
) -> Result<CoverageReport> {
    super::validate_levels(&[level])?;
    let ctx = context_for(samples, tri)?;
    let (times, totals, obs) = observed_window(tri);
    let rows: Vec<usize> = (0..times.len()).filter(|&i| totals[i] > 0).collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData("no complete row with a positive total".into()));
    }
    let width = tri.width();
    let seed = samples.config.seed;
    let multinomial = multinomial_limit || ctx.spec().multinomial_limit;
    // per draw: proportions[row][col], NaN when a GLM replicate total is 0
    let draws = map_draws(samples, &ctx, |g, s| {
        let mut rng = draw_rng(seed, stream::COVERAGE, g);
        let chol = covariance_factor(s);
        let mut cells = Vec::new();
        rows.iter()
            .map(|&i| {
                let t = times[i];
                let y = match ctx.variant() {
                    Variant::Gdm | Variant::GdmUr => {
                        delay_cells(&ctx, s, t, totals[i], multinomial, &mut rng, &mut cells);
                        totals[i]
                    }
                    Variant::Glm | Variant::GlmPlus => {
                        let lm = fresh_log_mu(&ctx, s, t, chol.as_ref(), &mut rng);
                        glm_cells(&ctx, s, &lm, 0, &mut rng, &mut cells);
                        cells.iter().sum()
                    }
                };
                cells
                    .iter()
                    .map(|&z| if y == 0 { f64::NAN } else { z as f64 / y as f64 })
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    })?;
    let mut inside = vec![0usize; width];
    let mut count = vec![0usize; width];
    for (k, &i) in rows.iter().enumerate() {
        for c in 0..width {
            let mut col: Vec<f64> = draws.iter().map(|d| d[k][c]).filter(|v| !v.is_nan()).collect();
            if col.is_empty() {
                continue;
            }
            col.sort_by(f64::total_cmp);
            let (lo, hi) = central_interval(&col, level);
            let o = obs[i][c] as f64 / totals[i] as f64;
            count[c] += 1;
            if lo <= o && o <= hi {
                inside[c] += 1;
            }
        }
    }
    let n: usize = count.iter().sum();
    if n == 0 {
        return Err(Error::InsufficientData("no cell had a defined interval".into()));
    }
    Ok(CoverageReport {
        level,
        multinomial_limit,
        per_delay: inside
            .iter()
            .zip(&count)
            .map(|(&a, &b)| if b == 0 { f64::NAN } else { a as f64 / b as f64 })
            .collect(),
        cells_per_delay: count,
        overall: inside.iter().sum::<usize>() as f64 / n as f64,
    })
}
