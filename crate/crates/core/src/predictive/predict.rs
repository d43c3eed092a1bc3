use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::distributions::sample::{binomial_draw, neg_binomial_draw};
use crate::distributions::sample_beta_binomial;
use crate::error::{Error, Result};
use crate::mcmc::PosteriorSamples;
use crate::model::{ModelContext, ParameterState, Variant};
use crate::special::logistic;
use crate::triangle::ReportingTriangle;

use super::{context_for, draw_rng, map_draws, stream, summarize, validate_levels};
use super::{PredictionKind, PredictionSummary, Quantity};

/// Negative-Binomial count, or Poisson under the Poisson limit.
pub(crate) fn count_draw<R: Rng + ?Sized>(poisson: bool, mean: f64, theta: f64, rng: &mut R) -> u64 {
    neg_binomial_draw(mean, if poisson { f64::INFINITY } else { theta }, rng)
}

/// Delay cells of a row with total `y` at time `t`: conditional
/// Beta-Binomials at `(ν_t, φ_t)`, or Binomials at `ν_t` under the
/// Multinomial limit. The remainder column takes what is left.
pub(crate) fn delay_cells<R: Rng + ?Sized>(
    ctx: &ModelContext,
    s: &ParameterState,
    t: usize,
    y: u64,
    multinomial: bool,
    rng: &mut R,
    out: &mut Vec<u64>,
) {
    out.clear();
    let mut left = y;
    for c in 0..ctx.delay_horizon() {
        let nu = logistic(ctx.delay_effect(s, t, c));
        let z = if multinomial {
            binomial_draw(left, nu, rng)
        } else {
            let phi = ctx.log_phi(s, t, c).exp();
            sample_beta_binomial(nu * phi, (1.0 - nu) * phi, left, rng)
        };
        out.push(z);
        left -= z;
    }
    out.push(left);
}

/// `(x, y)`: a true count from the total model and its reported part.
pub(crate) fn total_draw<R: Rng + ?Sized>(
    ctx: &ModelContext,
    s: &ParameterState,
    t: usize,
    rng: &mut R,
) -> (u64, u64) {
    let lam = ctx.log_lambda(s, t).exp();
    let x = count_draw(ctx.spec().poisson_limit, lam, s.theta[0], rng);
    let y = if ctx.variant() == Variant::GdmUr {
        binomial_draw(x, logistic(ctx.logit_pi(s, t)), rng)
    } else {
        x
    };
    (x, y)
}

/// Cells `first..=D` of one GLM row at the given `ln μ`.
pub(crate) fn glm_cells<R: Rng + ?Sized>(
    ctx: &ModelContext,
    s: &ParameterState,
    log_mu: &[f64],
    first: usize,
    rng: &mut R,
    out: &mut Vec<u64>,
) {
    out.clear();
    let poisson = ctx.spec().poisson_limit;
    for (c, lm) in log_mu.iter().enumerate().skip(first) {
        out.push(count_draw(poisson, lm.exp(), s.theta[c], rng));
    }
}

/// Predictor means `ln μ_{t,·}` with, under GLM+, a fresh correlated
/// deviation drawn through `chol`.
pub(crate) fn fresh_log_mu<R: Rng + ?Sized>(
    ctx: &ModelContext,
    s: &ParameterState,
    t: usize,
    chol: Option<&DMatrix<f64>>,
    rng: &mut R,
) -> Vec<f64> {
    let k = ctx.spec().n_delay_effects();
    let mut lm: Vec<f64> = (0..k).map(|c| ctx.log_mu(s, t, c)).collect();
    if let Some(l) = chol {
        let e: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..k {
            lm[i] += (0..=i).map(|j| l[(i, j)] * e[j]).sum::<f64>();
        }
    }
    lm
}

pub(crate) fn covariance_factor(s: &ParameterState) -> Option<DMatrix<f64>> {
    s.cov.as_ref().map(|c| {
        Cholesky::new(c.clone())
            .map(|ch| ch.l())
            .unwrap_or_else(|| DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| {
                if i == j { c[(i, i)].max(0.0).sqrt() } else { 0.0 }
            }))
    })
}

/// Nowcasts of every row whose total is not yet known.
pub fn nowcast(
    samples: &PosteriorSamples,
    tri: &ReportingTriangle,
    levels: &[f64],
) -> Result<PredictionSummary> {
    let times: Vec<usize> = (0..tri.n_rows())
        .filter(|&r| !tri.is_complete(r))
        .map(|r| r + 1)
        .collect();
    nowcast_at(samples, tri, &times, levels)
}

/// Nowcasts of the totals at 1-based `times`. Rows already complete give a
/// point mass at the observed total and are flagged degenerate.
///
/// GDM draws are the sampled latent totals; GLM draws add predictive draws
/// of the unobserved cells to the observed prefix.
pub fn nowcast_at(
    samples: &PosteriorSamples,
    tri: &ReportingTriangle,
    times: &[usize],
    levels: &[f64],
) -> Result<PredictionSummary> {
    validate_levels(levels)?;
    let ctx = context_for(samples, tri)?;
    if let Some(&t) = times.iter().find(|&&t| t == 0 || t > ctx.n_rows()) {
        return Err(Error::OutOfRange(t as f64));
    }
    let rows: Vec<_> = times.iter().map(|&t| &ctx.rows()[t - 1]).collect();
    let seed = samples.config.seed;
    let draws = map_draws(samples, &ctx, |g, s| {
        let mut rng = draw_rng(seed, stream::NOWCAST, g);
        let mut cells = Vec::new();
        rows.iter()
            .map(|row| {
                if row.complete {
                    return row.prefix_sum();
                }
                match ctx.variant() {
                    Variant::Gdm | Variant::GdmUr => s.latent_y[row.t - 1],
                    Variant::Glm | Variant::GlmPlus => {
                        let lm: Vec<f64> = if ctx.variant() == Variant::GlmPlus {
                            s.logmu[row.t - 1].clone()
                        } else {
                            (0..ctx.spec().n_delay_effects()).map(|c| ctx.log_mu(s, row.t, c)).collect()
                        };
                        glm_cells(&ctx, s, &lm, row.k(), &mut rng, &mut cells);
                        row.prefix_sum() + cells.iter().sum::<u64>()
                    }
                }
            })
            .collect()
    })?;
    Ok(summarize(
        PredictionKind::Nowcast,
        Quantity::Reported,
        times.to_vec(),
        rows.iter().map(|r| r.prefix_sum()).collect(),
        rows.iter().map(|r| r.complete).collect(),
        draws,
        levels,
    ))
}

/// Forecasts of the `horizon` times after the last row, with no observed
/// cells. Only the total model enters under the GDMs.
pub fn forecast(
    samples: &PosteriorSamples,
    tri: &ReportingTriangle,
    horizon: usize,
    levels: &[f64],
    quantity: Quantity,
) -> Result<PredictionSummary> {
    validate_levels(levels)?;
    let ctx = context_for(samples, tri)?;
    if quantity == Quantity::True && ctx.variant() != Variant::GdmUr {
        return Err(Error::Config("true counts exist only under the under-reporting model".into()));
    }
    let first = ctx.n_rows() + 1;
    if ctx.n_rows() + horizon > ctx.t_max() {
        return Err(Error::Config(format!(
            "forecast horizon {horizon} exceeds the spline extrapolation range of {} time units",
            ctx.t_max() - ctx.n_rows()
        )));
    }
    let times: Vec<usize> = (first..first + horizon).collect();
    let seed = samples.config.seed;
    let draws = map_draws(samples, &ctx, |g, s| {
        let mut rng = draw_rng(seed, stream::FORECAST, g);
        let mut cells = Vec::new();
        let chol = covariance_factor(s);
        times
            .iter()
            .map(|&t| match ctx.variant() {
                Variant::Gdm | Variant::GdmUr => {
                    let (x, y) = total_draw(&ctx, s, t, &mut rng);
                    if quantity == Quantity::True { x } else { y }
                }
                Variant::Glm | Variant::GlmPlus => {
                    let lm = fresh_log_mu(&ctx, s, t, chol.as_ref(), &mut rng);
                    glm_cells(&ctx, s, &lm, 0, &mut rng, &mut cells);
                    cells.iter().sum()
                }
            })
            .collect()
    })?;
    Ok(summarize(
        PredictionKind::Forecast,
        quantity,
        times.clone(),
        vec![0; times.len()],
        vec![false; times.len()],
        draws,
        levels,
    ))
}

/// Posterior true counts `x_t` of every row under the under-reporting model.
pub fn true_counts(
    samples: &PosteriorSamples,
    tri: &ReportingTriangle,
    levels: &[f64],
) -> Result<PredictionSummary> {
    validate_levels(levels)?;
    let ctx = context_for(samples, tri)?;
    if ctx.variant() != Variant::GdmUr {
        return Err(Error::Config("true counts exist only under the under-reporting model".into()));
    }
    let draws = map_draws(samples, &ctx, |_, s| s.latent_x.clone())?;
    Ok(summarize(
        PredictionKind::Nowcast,
        Quantity::True,
        (1..=ctx.n_rows()).collect(),
        ctx.rows().iter().map(|r| r.prefix_sum()).collect(),
        vec![false; ctx.n_rows()],
        draws,
        levels,
    ))
}
