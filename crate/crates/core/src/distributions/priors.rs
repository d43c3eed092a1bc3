use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Scalar prior families. The matrix-valued Inverse-Wishart lives in
/// [`super::InverseWishart`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    /// Normal(0, sd²) folded at zero.
    HalfNormal { sd: f64 },
    Exponential { rate: f64 },
    /// `ln x ~ Normal(meanlog, sdlog²)`.
    LogNormal { meanlog: f64, sdlog: f64 },
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Prior::HalfNormal { sd } => sd > 0.0 && sd.is_finite(),
            Prior::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Prior::LogNormal { meanlog, sdlog } => {
                meanlog.is_finite() && sdlog > 0.0 && sdlog.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid prior hyperparameters: {self:?}")))
        }
    }

    /// Log-density at `x`; `−∞` outside the support. Hyperparameters are
    /// assumed valid.
    pub fn ln_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => normal_ln(x, mean, sd),
            Prior::HalfNormal { sd } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    std::f64::consts::LN_2 + normal_ln(x, 0.0, sd)
                }
            }
            Prior::Exponential { rate } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * x
                }
            }
            Prior::LogNormal { meanlog, sdlog } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    normal_ln(x.ln(), meanlog, sdlog) - x.ln()
                }
            }
        }
    }

    /// Log-density of `u = ln x` when `x` carries this prior:
    /// `ln p(eᵘ) + u`.
    pub fn ln_density_log_scale(&self, u: f64) -> f64 {
        match *self {
            Prior::LogNormal { meanlog, sdlog } => normal_ln(u, meanlog, sdlog),
            _ => self.ln_density(u.exp()) + u,
        }
    }

    pub fn is_positive(&self) -> bool {
        !matches!(self, Prior::Normal { .. })
    }

    pub fn median(&self) -> f64 {
        match *self {
            Prior::Normal { mean, .. } => mean,
            Prior::HalfNormal { sd } => sd * 0.674_489_750_196_081_7,
            Prior::Exponential { rate } => std::f64::consts::LN_2 / rate,
            Prior::LogNormal { meanlog, .. } => meanlog.exp(),
        }
    }
}

#[inline]
fn normal_ln(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -HALF_LN_2PI - sd.ln() - 0.5 * z * z
}

/// Validating wrapper around [`Prior::ln_density`].
pub fn log_prior_density(prior: &Prior, x: f64) -> Result<f64> {
    prior.validate()?;
    Ok(prior.ln_density(x))
}
