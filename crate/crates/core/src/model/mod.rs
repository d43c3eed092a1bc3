//! Model specifications, parameter state and log-posteriors for the four
//! variants: GDM, GLM, GLM+ and GDM with under-reporting.

pub(crate) mod context;
pub(crate) mod likelihood;
mod state;

pub use context::{ModelContext, RowData};
pub use likelihood::{
    gdm_log_likelihood, gdm_ur_log_likelihood, glm_log_likelihood, glmplus_log_likelihood,
    log_likelihood, log_posterior, log_prior, thinned_total_log_pmf,
};
pub use state::{ParameterState, BLOCK_NAMES};

use serde::{Deserialize, Serialize};

use crate::distributions::Prior;
use crate::error::{Error, Result};

/// Largest intercept sd on the logit scale accepted as informative for the
/// reporting rate.
pub const MAX_INFORMATIVE_REPORTING_SD: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Gdm,
    Glm,
    GlmPlus,
    GdmUr,
}

impl Variant {
    pub fn is_gdm(self) -> bool {
        matches!(self, Variant::Gdm | Variant::GdmUr)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Gdm => "gdm",
            Variant::Glm => "glm",
            Variant::GlmPlus => "glm_plus",
            Variant::GdmUr => "gdm_ur",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '+'], "_").as_str() {
            "gdm" => Ok(Variant::Gdm),
            "glm" => Ok(Variant::Glm),
            "glm_plus" | "glm_" | "glmplus" => Ok(Variant::GlmPlus),
            "gdm_ur" | "gdmur" => Ok(Variant::GdmUr),
            _ => Err(Error::Config(format!("unknown model variant '{s}'"))),
        }
    }
}

/// `f(t) = ι + α_t + η_t`. A basis size of 0 drops the term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TotalPredictor {
    pub trend_basis: usize,
    pub seasonal_basis: usize,
    pub period: f64,
    /// Time units past the last row covered by the trend's linear tail.
    pub forecast_reach: usize,
}

impl Default for TotalPredictor {
    fn default() -> Self {
        Self {
            trend_basis: 10,
            seasonal_basis: 8,
            period: 52.0,
            forecast_reach: 52,
        }
    }
}

/// `g(t, d) = ψ_d + β_{t,d}`; basis 0 gives time-constant delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayPredictor {
    pub basis: usize,
}

impl Default for DelayPredictor {
    fn default() -> Self {
        Self { basis: 6 }
    }
}

/// `h(t, d) = ln φ_d + κ_{t,d}`; basis 0 keeps one `φ_d` per delay.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispersionPredictor {
    pub basis: usize,
}

/// `i(t) = ρ + spline(t)` on the logit scale of the reporting rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportingPredictor {
    pub intercept: Prior,
    #[serde(default)]
    pub basis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSettings {
    pub iota: Prior,
    pub psi_sd: f64,
    /// Prior means of `ψ_d`; defaults to equal expected cell shares for the
    /// GDM variants and 0 otherwise.
    pub psi_mean: Option<Vec<f64>>,
    pub theta: Prior,
    pub phi: Prior,
    pub sigma_trend: Prior,
    pub sigma_seasonal: Prior,
    pub sigma_delay: Prior,
    pub sigma_dispersion: Prior,
    pub sigma_reporting: Prior,
    /// Inverse-Wishart degrees of freedom; defaults to `D + 2`.
    pub covariance_df: Option<f64>,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self {
            iota: Prior::Normal { mean: 0.0, sd: 10.0 },
            psi_sd: 10.0,
            psi_mean: None,
            theta: Prior::Exponential { rate: 0.01 },
            phi: Prior::LogNormal { meanlog: 2.0, sdlog: 2.0 },
            sigma_trend: Prior::HalfNormal { sd: 1.0 },
            sigma_seasonal: Prior::HalfNormal { sd: 1.0 },
            sigma_delay: Prior::HalfNormal { sd: std::f64::consts::SQRT_2 },
            sigma_dispersion: Prior::HalfNormal { sd: 1.0 },
            sigma_reporting: Prior::HalfNormal { sd: 1.0 },
            covariance_df: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub variant: Variant,
    pub delay_horizon: usize,
    #[serde(default)]
    pub total: TotalPredictor,
    #[serde(default)]
    pub delay: DelayPredictor,
    #[serde(default)]
    pub dispersion: DispersionPredictor,
    #[serde(default)]
    pub reporting: Option<ReportingPredictor>,
    #[serde(default)]
    pub priors: PriorSettings,
    /// GDM only: replace every Beta-Binomial by its `φ → ∞` Binomial.
    #[serde(default)]
    pub multinomial_limit: bool,
    /// Replace every Negative-Binomial by its `θ → ∞` Poisson.
    #[serde(default)]
    pub poisson_limit: bool,
}

impl ModelSpec {
    pub fn new(variant: Variant, delay_horizon: usize) -> Self {
        Self {
            variant,
            delay_horizon,
            total: TotalPredictor::default(),
            delay: DelayPredictor::default(),
            dispersion: DispersionPredictor::default(),
            reporting: None,
            priors: PriorSettings::default(),
            multinomial_limit: false,
            poisson_limit: false,
        }
    }

    /// Number of delay effects `ψ_d`: `D` for GDM (remainder implicit),
    /// `D + 1` for GLM and GLM+.
    pub fn n_delay_effects(&self) -> usize {
        if self.variant.is_gdm() {
            self.delay_horizon
        } else {
            self.delay_horizon + 1
        }
    }

    pub fn n_theta(&self) -> usize {
        if self.variant.is_gdm() {
            1
        } else {
            self.delay_horizon + 1
        }
    }

    pub fn psi_prior_mean(&self) -> Vec<f64> {
        if let Some(m) = &self.priors.psi_mean {
            return m.clone();
        }
        let d_max = self.delay_horizon;
        if self.variant.is_gdm() {
            // ν_d = 1/(D + 2 − d) gives each of the D + 1 cells share 1/(D + 1)
            (1..=d_max)
                .map(|d| crate::special::logit(1.0 / (d_max + 2 - d) as f64))
                .collect()
        } else {
            vec![0.0; d_max + 1]
        }
    }

    pub fn covariance_df(&self) -> f64 {
        self.priors
            .covariance_df
            .unwrap_or(self.delay_horizon as f64 + 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delay_horizon == 0 {
            return Err(Error::Config("delay horizon must be at least 1".into()));
        }
        for (name, n) in [
            ("trend", self.total.trend_basis),
            ("seasonal", self.total.seasonal_basis),
            ("delay", self.delay.basis),
            ("dispersion", self.dispersion.basis),
        ] {
            if n != 0 && n < 3 {
                return Err(Error::Config(format!("{name} basis needs 0 or at least 3 functions")));
            }
        }
        if !(self.total.period > 0.0) {
            return Err(Error::Config("seasonal period must be positive".into()));
        }
        let p = &self.priors;
        p.iota.validate()?;
        if !(p.psi_sd > 0.0) {
            return Err(Error::Config("psi prior sd must be positive".into()));
        }
        if let Some(m) = &p.psi_mean {
            if m.len() != self.n_delay_effects() {
                return Err(Error::Config(format!(
                    "psi_mean has {} entries, the model has {} delay effects",
                    m.len(),
                    self.n_delay_effects()
                )));
            }
        }
        for (name, prior) in [
            ("theta", p.theta),
            ("phi", p.phi),
            ("sigma_trend", p.sigma_trend),
            ("sigma_seasonal", p.sigma_seasonal),
            ("sigma_delay", p.sigma_delay),
            ("sigma_dispersion", p.sigma_dispersion),
            ("sigma_reporting", p.sigma_reporting),
        ] {
            prior.validate()?;
            if !prior.is_positive() {
                return Err(Error::Config(format!("{name} needs a prior on the positive half-line")));
            }
        }
        if matches!(p.iota, Prior::HalfNormal { .. } | Prior::Exponential { .. } | Prior::LogNormal { .. }) {
            return Err(Error::Config("iota needs a prior on the real line".into()));
        }
        if self.variant == Variant::GlmPlus {
            let dim = self.delay_horizon as f64 + 1.0;
            if !(self.covariance_df() > dim - 1.0) {
                return Err(Error::Config(format!(
                    "covariance prior needs more than {} degrees of freedom",
                    dim - 1.0
                )));
            }
        }
        if self.multinomial_limit && !self.variant.is_gdm() {
            return Err(Error::Config("multinomial limit applies to GDM variants only".into()));
        }
        if !self.variant.is_gdm() && self.dispersion.basis > 0 {
            return Err(Error::Config("dispersion splines apply to GDM variants only".into()));
        }
        match (self.variant, &self.reporting) {
            (Variant::GdmUr, None) => {
                return Err(Error::Config(
                    "the under-reporting model is not identifiable without an informative \
                     reporting-rate prior; set [reporting] intercept"
                        .into(),
                ))
            }
            (Variant::GdmUr, Some(r)) => {
                r.intercept.validate()?;
                match r.intercept {
                    Prior::Normal { sd, .. } if sd <= MAX_INFORMATIVE_REPORTING_SD => {}
                    _ => {
                        return Err(Error::Config(format!(
                            "reporting-rate intercept prior must be Normal with sd <= {MAX_INFORMATIVE_REPORTING_SD} \
                             on the logit scale, got {:?}",
                            r.intercept
                        )))
                    }
                }
                if r.basis != 0 && r.basis < 3 {
                    return Err(Error::Config("reporting basis needs 0 or at least 3 functions".into()));
                }
            }
            (_, Some(_)) => {
                return Err(Error::Config("a reporting-rate block needs the gdm_ur variant".into()))
            }
            (_, None) => {}
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            toml::from_str(text).map_err(|e| Error::Config(format!("model spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_prior_gives_equal_shares() {
        let spec = ModelSpec::new(Variant::Gdm, 4);
        let nu: Vec<f64> = spec.psi_prior_mean().iter().map(|v| crate::special::logistic(*v)).collect();
        let p = crate::distributions::stick_breaking_probabilities(&nu);
        for v in p {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn under_reporting_needs_informative_prior() {
        let mut spec = ModelSpec::new(Variant::GdmUr, 3);
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        spec.reporting = Some(ReportingPredictor {
            intercept: Prior::Normal { mean: 1.0, sd: 10.0 },
            basis: 0,
        });
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        spec.reporting.as_mut().unwrap().intercept = Prior::Normal { mean: 1.0, sd: 0.5 };
        spec.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_with_defaults() {
        let spec = ModelSpec::from_toml(
            "variant = \"glm_plus\"\ndelay_horizon = 3\n[total]\ntrend_basis = 5\n",
        )
        .unwrap();
        assert_eq!(spec.variant, Variant::GlmPlus);
        assert_eq!(spec.total.trend_basis, 5);
        assert_eq!(spec.total.seasonal_basis, 8);
        assert_eq!(spec.covariance_df(), 5.0);
        let text = toml::to_string(&spec).unwrap();
        assert_eq!(ModelSpec::from_toml(&text).unwrap(), spec);
        assert!(ModelSpec::from_toml("variant = \"gdm\"\ndelay_horizon = 2\nbogus = 1\n").is_err());
    }

    #[test]
    fn variant_names_parse() {
        for v in [Variant::Gdm, Variant::Glm, Variant::GlmPlus, Variant::GdmUr] {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("GLM+".parse::<Variant>().unwrap(), Variant::GlmPlus);
    }
}
