use nalgebra::DVector;

use crate::distributions::discrete::{
    beta_binomial_unchecked, binomial_unchecked, neg_binomial_const, neg_binomial_kernel,
    neg_binomial_ln, poisson_kernel,
};
use crate::special::ln_factorial;
use crate::distributions::MvnParams;
use crate::special::logistic;

use super::context::RowData;
use super::{ModelContext, ParameterState, Variant};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Count term at a log-mean: NB, or Poisson under the `θ → ∞` flag.
#[inline]
pub(crate) fn count_term(poisson: bool, y: u64, log_mean: f64, theta: f64) -> f64 {
    count_const(poisson, y, theta) + count_kernel(poisson, y, log_mean, theta)
}

/// Mean-free part of [`count_term`].
#[inline]
pub(crate) fn count_const(poisson: bool, y: u64, theta: f64) -> f64 {
    if poisson {
        -ln_factorial(y)
    } else {
        neg_binomial_const(y, theta)
    }
}

/// Mean-dependent part of [`count_term`].
#[inline]
pub(crate) fn count_kernel(poisson: bool, y: u64, log_mean: f64, theta: f64) -> f64 {
    if poisson {
        poisson_kernel(y, log_mean)
    } else {
        neg_binomial_kernel(y, log_mean, theta)
    }
}

/// Conditional delay term of one observed cell with `n` still unreported.
#[inline]
pub(crate) fn gdm_cell_term(
    multinomial: bool,
    z: u64,
    n: u64,
    logit_nu: f64,
    log_phi: f64,
) -> f64 {
    let nu = logistic(logit_nu);
    if multinomial {
        return binomial_unchecked(z, n, nu);
    }
    let phi = log_phi.exp();
    // 1 − ν from the logit avoids cancellation for ν near 1
    let one_minus = logistic(-logit_nu);
    beta_binomial_unchecked(z, nu * phi, one_minus * phi, n)
}

/// Sum of the observed-prefix delay terms of a GDM row with total `y`;
/// `−∞` when `y` is below the observed prefix sum.
pub(crate) fn gdm_row_delay(ctx: &ModelContext, s: &ParameterState, row: &RowData, y: u64) -> f64 {
    if y < row.prefix_sum() {
        return f64::NEG_INFINITY;
    }
    let multinomial = ctx.spec().multinomial_limit;
    let m = row.k().min(ctx.delay_horizon());
    let mut out = 0.0;
    for c in 0..m {
        out += gdm_cell_term(
            multinomial,
            row.observed[c],
            y - row.cum[c],
            ctx.delay_effect(s, row.t, c),
            ctx.log_phi(s, row.t, c),
        );
    }
    out
}

/// `ln Binomial(y | x, π)` from the logit of `π`; `−∞` when `x < y`.
#[inline]
pub(crate) fn thinning_term(y: u64, x: u64, logit_pi: f64) -> f64 {
    if x < y {
        return f64::NEG_INFINITY;
    }
    binomial_unchecked(y, x, logistic(logit_pi))
}

fn total_term(ctx: &ModelContext, s: &ParameterState, t: usize, y: u64) -> f64 {
    count_term(ctx.spec().poisson_limit, y, ctx.log_lambda(s, t), s.theta[0])
}

/// `Σ_t [ NB(y_t | λ_t, θ) + Σ_{observed d ≤ D} BB(z_{t,d} | ·) ]`; the
/// censored suffix of every row is marginalized.
pub fn gdm_log_likelihood(ctx: &ModelContext, s: &ParameterState) -> f64 {
    let mut out = 0.0;
    for (r, row) in ctx.rows().iter().enumerate() {
        let y = s.latent_y[r];
        out += total_term(ctx, s, row.t, y) + gdm_row_delay(ctx, s, row, y);
    }
    out
}

/// GDM with the total thinned from a latent true count:
/// `Σ_t [ NB(x_t) + Binomial(y_t | x_t, π_t) + delay terms ]`.
pub fn gdm_ur_log_likelihood(ctx: &ModelContext, s: &ParameterState) -> f64 {
    let mut out = 0.0;
    for (r, row) in ctx.rows().iter().enumerate() {
        let (y, x) = (s.latent_y[r], s.latent_x[r]);
        out += total_term(ctx, s, row.t, x)
            + thinning_term(y, x, ctx.logit_pi(s, row.t))
            + gdm_row_delay(ctx, s, row, y);
    }
    out
}

/// `Σ over observed cells of NB(z_{t,d} | μ_{t,d}, θ_d)`.
pub fn glm_log_likelihood(ctx: &ModelContext, s: &ParameterState) -> f64 {
    let poisson = ctx.spec().poisson_limit;
    let mut out = 0.0;
    for row in ctx.rows() {
        for (c, &z) in row.observed.iter().enumerate() {
            out += count_term(poisson, z, ctx.log_mu(s, row.t, c), s.theta[c]);
        }
    }
    out
}

/// MVN row term of `ln μ_t` plus the NB terms of the observed cells at
/// `exp(ln μ_t)`.
pub fn glmplus_log_likelihood(ctx: &ModelContext, s: &ParameterState) -> f64 {
    let Some(cov) = &s.cov else {
        return f64::NEG_INFINITY;
    };
    let k = ctx.delay_horizon() + 1;
    let Ok(mvn) = MvnParams::new(DVector::zeros(k), cov.clone()) else {
        return f64::NEG_INFINITY;
    };
    let poisson = ctx.spec().poisson_limit;
    let mut out = 0.0;
    let mut resid = vec![0.0; k];
    for (r, row) in ctx.rows().iter().enumerate() {
        let lm = &s.logmu[r];
        for c in 0..k {
            resid[c] = lm[c] - ctx.log_mu(s, row.t, c);
        }
        out += mvn.log_pdf_residual(&resid);
        for (c, &z) in row.observed.iter().enumerate() {
            out += count_term(poisson, z, lm[c], s.theta[c]);
        }
    }
    out
}

pub fn log_likelihood(ctx: &ModelContext, s: &ParameterState) -> f64 {
    match ctx.variant() {
        Variant::Gdm => gdm_log_likelihood(ctx, s),
        Variant::GdmUr => gdm_ur_log_likelihood(ctx, s),
        Variant::Glm => glm_log_likelihood(ctx, s),
        Variant::GlmPlus => glmplus_log_likelihood(ctx, s),
    }
}

#[inline]
pub(crate) fn normal_ln(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -HALF_LN_2PI - sd.ln() - 0.5 * z * z
}

/// Sum of all prior terms on the natural scale of each parameter.
pub fn log_prior(ctx: &ModelContext, s: &ParameterState) -> f64 {
    let spec = ctx.spec();
    let p = &spec.priors;
    let mut out = p.iota.ln_density(s.iota);
    for (psi, mean) in s.psi.iter().zip(ctx.psi_mean()) {
        out += normal_ln(*psi, *mean, p.psi_sd);
    }
    if let Some(b) = ctx.trend() {
        out += smooth_prior(b.prior(), &s.alpha, s.sigma_alpha) + p.sigma_trend.ln_density(s.sigma_alpha);
    }
    if let Some(b) = ctx.seasonal() {
        out += smooth_prior(b.prior(), &s.eta, s.sigma_eta) + p.sigma_seasonal.ln_density(s.sigma_eta);
    }
    if let Some(b) = ctx.delay() {
        for (coefs, &sigma) in s.beta.iter().zip(&s.sigma_beta) {
            out += smooth_prior(b.prior(), coefs, sigma) + p.sigma_delay.ln_density(sigma);
        }
    }
    for &theta in &s.theta {
        out += p.theta.ln_density(theta);
    }
    for &phi in &s.phi {
        out += p.phi.ln_density(phi);
    }
    if let Some(b) = ctx.dispersion() {
        for (coefs, &sigma) in s.kappa.iter().zip(&s.sigma_kappa) {
            out += smooth_prior(b.prior(), coefs, sigma) + p.sigma_dispersion.ln_density(sigma);
        }
    }
    if let Some(r) = &spec.reporting {
        out += r.intercept.ln_density(s.rho);
        if let Some(b) = ctx.reporting() {
            out += smooth_prior(b.prior(), &s.pi_coefs, s.sigma_pi)
                + p.sigma_reporting.ln_density(s.sigma_pi);
        }
    }
    if let (Some(iw), Some(cov)) = (ctx.covariance_prior(), &s.cov) {
        out += iw.ln_density(cov);
    }
    out
}

pub(crate) fn smooth_prior(prior: &crate::splines::SplinePrior, coefs: &[f64], sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    prior.ln_density_tau_part(sigma.powi(-2), prior.quadratic(coefs)) + prior.ln_density_fixed(coefs)
}

pub fn log_posterior(ctx: &ModelContext, s: &ParameterState) -> f64 {
    let prior = log_prior(ctx, s);
    if prior == f64::NEG_INFINITY {
        return prior;
    }
    prior + log_likelihood(ctx, s)
}

/// Marginal of the observed total under Binomial thinning of an NB count:
/// `NB(λ, θ)` thinned by `π` is `NB(πλ, θ)`.
pub fn thinned_total_log_pmf(y: u64, lambda: f64, theta: f64, pi: f64) -> f64 {
    neg_binomial_ln(y, (pi * lambda).ln(), theta)
}
