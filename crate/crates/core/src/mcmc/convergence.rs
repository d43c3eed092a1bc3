//! The parameter selection monitored by the MPSRF gate.

use crate::error::{Error, Result};
use crate::model::{ModelContext, Variant};

use super::diagnostics::{mpsrf, Mpsrf};
use super::PosteriorSamples;

/// Times are sampled every `CONVERGENCE_STRIDE` rows starting at this stride.
pub const CONVERGENCE_STRIDE: usize = 10;

/// Derived draws per chain: `chains[j][draw][p]` with one label per `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSubset {
    pub labels: Vec<String>,
    pub chains: Vec<Vec<Vec<f64>>>,
}

impl ConvergenceSubset {
    pub fn mpsrf(&self) -> Result<Mpsrf> {
        mpsrf(&self.chains)
    }

    /// Draws of parameter `p` per chain.
    pub fn column(&self, p: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.iter().map(|d| d[p]).collect()).collect()
    }
}

/// GDM variants: `ln λ_t` and the delay predictor `ψ_d + β_{t,d}` at every
/// 10th time, `ln θ` and `ln φ_d`. GLM variants: `ln μ_{t,d}` at every 10th
/// time and `ln θ_d` (GLM only). The delay predictor is monitored only when
/// a delay spline is present.
pub fn convergence_subset(samples: &PosteriorSamples, ctx: &ModelContext) -> Result<ConvergenceSubset> {
    if samples.n_kept() == 0 {
        return Err(Error::InsufficientData("no kept draws".into()));
    }
    let spec = ctx.spec();
    let times: Vec<usize> = (CONVERGENCE_STRIDE..=ctx.n_rows()).step_by(CONVERGENCE_STRIDE).collect();
    let gdm = spec.variant.is_gdm();
    let delay_cols = if gdm { spec.delay_horizon } else { spec.n_delay_effects() };

    let mut labels = Vec::new();
    if gdm {
        labels.extend(times.iter().map(|t| format!("log_lambda[{t}]")));
        labels.push("log_theta".into());
        if ctx.delay().is_some() {
            for &t in &times {
                labels.extend((1..=delay_cols).map(|d| format!("delay_predictor[{t},{d}]")));
            }
        }
        labels.extend((1..=delay_cols).map(|d| format!("log_phi[{d}]")));
    } else {
        for &t in &times {
            labels.extend((1..=delay_cols).map(|d| format!("log_mu[{t},{d}]")));
        }
        if spec.variant == Variant::Glm {
            labels.extend((1..=delay_cols).map(|d| format!("log_theta[{d}]")));
        }
    }

    let mut chains = Vec::with_capacity(samples.n_chains());
    for c in 0..samples.n_chains() {
        let mut draws = Vec::with_capacity(samples.n_kept());
        for g in 0..samples.n_kept() {
            let s = samples.state(ctx, c, g)?;
            let mut v = Vec::with_capacity(labels.len());
            if gdm {
                v.extend(times.iter().map(|&t| ctx.log_lambda(&s, t)));
                v.push(s.theta[0].ln());
                if ctx.delay().is_some() {
                    for &t in &times {
                        v.extend((0..delay_cols).map(|col| ctx.delay_effect(&s, t, col)));
                    }
                }
                v.extend(s.phi.iter().map(|p| p.ln()));
            } else {
                for &t in &times {
                    v.extend((0..delay_cols).map(|col| ctx.log_mu(&s, t, col)));
                }
                if spec.variant == Variant::Glm {
                    v.extend(s.theta.iter().map(|p| p.ln()));
                }
            }
            draws.push(v);
        }
        chains.push(draws);
    }
    Ok(ConvergenceSubset { labels, chains })
}
