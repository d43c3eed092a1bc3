//! Data-driven starting values with per-chain jitter.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::distributions::Prior;
use crate::error::{Error, Result};
use crate::model::{log_posterior, ModelContext, ParameterState, Variant};
use crate::special::{logistic, logit};

pub(crate) const MAX_INIT_ATTEMPTS: usize = 100;

/// Jitter sd on the log/logit scales of the starting values.
pub(crate) const INIT_JITTER: f64 = 0.3;

struct Moments {
    mean_total: f64,
    theta: f64,
    /// `Σ y / Σ cum[k]` over complete rows, per observed-cell count `k`.
    completion: Vec<f64>,
}

fn moment_theta(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 10.0;
    }
    let m = crate::stats::mean(xs);
    let v = crate::stats::variance(xs);
    if v > 1.05 * m && m > 0.0 {
        (m * m / (v - m)).clamp(0.5, 1e4)
    } else {
        1e3
    }
}

fn moments(ctx: &ModelContext) -> Moments {
    let d = ctx.delay_horizon();
    let complete: Vec<_> = ctx.rows().iter().filter(|r| r.complete).collect();
    let totals: Vec<f64> = complete.iter().map(|r| r.prefix_sum() as f64).collect();
    let mean_total = if totals.is_empty() {
        let p: Vec<f64> = ctx.rows().iter().map(|r| r.prefix_sum() as f64).collect();
        if p.is_empty() {
            1.0
        } else {
            crate::stats::mean(&p).max(0.5)
        }
    } else {
        crate::stats::mean(&totals).max(0.5)
    };
    let completion = (0..=d)
        .map(|k| {
            let num: f64 = totals.iter().sum();
            let den: f64 = complete.iter().map(|r| r.cum[k] as f64).sum();
            if k == 0 || den <= 0.0 || num <= 0.0 {
                f64::INFINITY
            } else {
                num / den
            }
        })
        .collect();
    Moments {
        mean_total,
        theta: moment_theta(&totals),
        completion,
    }
}

fn jit<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        sd * rng.sample::<f64, _>(StandardNormal)
    }
}

fn prior_centre(p: &Prior) -> f64 {
    match *p {
        Prior::Normal { mean, .. } => mean,
        _ => p.median(),
    }
}

/// Starting state; `jitter = 0` gives the deterministic data-driven point.
pub(crate) fn starting_state<R: Rng + ?Sized>(
    ctx: &ModelContext,
    rng: &mut R,
    jitter: f64,
) -> ParameterState {
    let spec = ctx.spec();
    let pri = &spec.priors;
    let d = ctx.delay_horizon();
    let mom = moments(ctx);
    let mut s = ParameterState::zeros(ctx);
    let has_rows = ctx.n_rows() > 0;

    s.iota = if has_rows {
        mom.mean_total.ln()
    } else {
        prior_centre(&pri.iota)
    } + jit(rng, jitter * 0.5);
    s.sigma_alpha = pri.sigma_trend.median();
    s.sigma_eta = pri.sigma_seasonal.median();
    s.sigma_beta.iter_mut().for_each(|v| *v = pri.sigma_delay.median());
    s.sigma_kappa.iter_mut().for_each(|v| *v = pri.sigma_dispersion.median());
    s.sigma_pi = pri.sigma_reporting.median();

    let complete: Vec<_> = ctx.rows().iter().filter(|r| r.complete).collect();
    let psi_mean = ctx.psi_mean().to_vec();
    if spec.variant.is_gdm() {
        s.theta[0] = if has_rows { mom.theta } else { pri.theta.median() } * jit(rng, jitter).exp();
        for c in 0..d {
            let z: f64 = complete.iter().map(|r| r.observed[c] as f64).sum();
            let n: f64 = complete.iter().map(|r| (r.prefix_sum() - r.cum[c]) as f64).sum();
            s.psi[c] = if complete.is_empty() {
                psi_mean[c]
            } else {
                logit(((z + 0.5) / (n + 1.0)).clamp(0.01, 0.99))
            } + jit(rng, jitter);
            s.phi[c] = pri.phi.median() * jit(rng, jitter).exp();
        }
    } else {
        for c in 0..=d {
            let col: Vec<f64> = complete.iter().map(|r| r.observed[c] as f64).collect();
            s.psi[c] = if col.is_empty() {
                psi_mean[c]
            } else {
                let share = (col.iter().sum::<f64>() + 0.5) / (mom.mean_total * col.len() as f64 + 1.0);
                share.ln()
            } + jit(rng, jitter);
            s.theta[c] = if col.is_empty() { pri.theta.median() } else { moment_theta(&col) }
                * jit(rng, jitter).exp();
        }
    }

    if let Some(r) = &spec.reporting {
        s.rho = prior_centre(&r.intercept) + jit(rng, jitter * 0.5);
    }

    if spec.variant.is_gdm() {
        for (r, row) in ctx.rows().iter().enumerate() {
            if row.complete {
                continue;
            }
            let prefix = row.prefix_sum();
            let ratio = mom.completion[row.k()];
            let guess = if prefix > 0 && ratio.is_finite() {
                prefix as f64 * ratio
            } else if ratio.is_finite() {
                prefix as f64 + mom.mean_total * (1.0 - 1.0 / ratio)
            } else {
                mom.mean_total.max(prefix as f64)
            };
            let extra = (guess - prefix as f64).max(0.0) * jit(rng, jitter * 0.3).exp();
            s.latent_y[r] = prefix + extra.round() as u64;
        }
    }
    if spec.variant == Variant::GdmUr {
        for (r, row) in ctx.rows().iter().enumerate() {
            let pi = logistic(ctx.logit_pi(&s, row.t)).max(1e-3);
            let y = s.latent_y[r];
            s.latent_x[r] = y.max((y as f64 / pi).round() as u64);
        }
    }

    if spec.variant == Variant::GlmPlus {
        let k = d + 1;
        let mut scatter = DMatrix::<f64>::zeros(k, k);
        for (r, row) in ctx.rows().iter().enumerate() {
            let mut resid = vec![0.0; k];
            for c in 0..k {
                let nu = ctx.log_mu(&s, row.t, c);
                s.logmu[r][c] = match row.observed.get(c) {
                    Some(&z) => (z as f64 + 0.5).ln(),
                    None => nu,
                };
                resid[c] = s.logmu[r][c] - nu;
            }
            for i in 0..k {
                for j in 0..k {
                    scatter[(i, j)] += resid[i] * resid[j];
                }
            }
        }
        let df = spec.covariance_df() + ctx.n_rows() as f64;
        let scale = DMatrix::<f64>::identity(k, k) + scatter;
        s.cov = Some(scale / (df - k as f64 - 1.0).max(1.0));
    }
    s
}

/// Draws starting states until the log-posterior is finite.
pub(crate) fn initialize<R: Rng + ?Sized>(
    ctx: &ModelContext,
    rng: &mut R,
) -> Result<(ParameterState, f64)> {
    let mut last = f64::NAN;
    for attempt in 0..MAX_INIT_ATTEMPTS {
        // later attempts widen the jitter around the data-driven point
        let jitter = INIT_JITTER * (1.0 + attempt as f64 / 10.0);
        let s = starting_state(ctx, rng, jitter);
        let lp = log_posterior(ctx, &s);
        if lp.is_finite() {
            return Ok((s, lp));
        }
        last = lp;
    }
    Err(Error::Initialization(format!(
        "log-posterior is {last} at every one of {MAX_INIT_ATTEMPTS} starting points; \
         check the priors and that the data are consistent with the model"
    )))
}
