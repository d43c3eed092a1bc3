//! Log-densities and samplers for every distribution the models use.
//!
//! Discrete mass functions are exact (log-gamma based, no factorials). The
//! Generalized-Dirichlet-Multinomial has two independent implementations: the
//! closed form and the product of conditional Beta-Binomials. Likelihood code
//! uses the conditional form; the closed form is kept as its cross-check.

mod continuous;
pub(crate) mod discrete;
mod priors;
pub(crate) mod sample;

pub use continuous::{log_pdf_generalized_dirichlet, InverseWishart, MvnParams};
pub use discrete::{
    log_pmf_beta_binomial, log_pmf_binomial, log_pmf_gdm, log_pmf_gdm_conditional,
    log_pmf_neg_binomial, log_pmf_stick_multinomial, stick_breaking_probabilities,
};
pub use priors::{log_prior_density, Prior};
pub use sample::{
    sample_beta_binomial, sample_gdm, sample_generalized_dirichlet, sample_neg_binomial,
    sample_stick_multinomial,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generalized-Dirichlet parameters for a `k`-part composition: `k - 1`
/// stick-breaking Beta pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GDParams {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl GDParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(Error::Domain("alpha and beta lengths differ".into()));
        }
        if alpha.is_empty() {
            return Err(Error::Domain("need at least one stick-breaking pair".into()));
        }
        if alpha.iter().chain(&beta).any(|v| !(*v > 0.0) || v.is_nan()) {
            return Err(Error::Domain("GD parameters must be positive".into()));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Number of parts `k`.
    pub fn parts(&self) -> usize {
        self.alpha.len() + 1
    }

    /// Inverse of [`reparam_mean_dispersion`]: `ν = α/(α+β)`, `φ = α+β`.
    pub fn mean_dispersion(&self) -> DelayMeanDispersion {
        let (nu, phi) = self
            .alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| (a / (a + b), a + b))
            .unzip();
        DelayMeanDispersion { nu, phi }
    }
}

/// Conditional reporting means `ν_d ∈ (0, 1)` and dispersions `φ_d > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayMeanDispersion {
    pub nu: Vec<f64>,
    pub phi: Vec<f64>,
}

impl DelayMeanDispersion {
    pub fn new(nu: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if nu.len() != phi.len() || nu.is_empty() {
            return Err(Error::Domain("nu and phi must be non-empty and equal length".into()));
        }
        if nu.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::Domain("nu must lie in (0, 1)".into()));
        }
        if phi.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Domain("phi must be positive".into()));
        }
        Ok(Self { nu, phi })
    }
}

/// `α = νφ`, `β = (1 − ν)φ`.
pub fn reparam_mean_dispersion(md: &DelayMeanDispersion) -> GDParams {
    let (alpha, beta) = md
        .nu
        .iter()
        .zip(&md.phi)
        .map(|(nu, phi)| (nu * phi, (1.0 - nu) * phi))
        .unzip();
    GDParams { alpha, beta }
}

/// Negative-Binomial in mean/dispersion form: variance `λ + λ²/θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegBinParams {
    pub mean: f64,
    pub dispersion: f64,
}

impl NegBinParams {
    pub fn new(mean: f64, dispersion: f64) -> Result<Self> {
        if !(mean > 0.0) || !(dispersion > 0.0) {
            return Err(Error::Domain(format!(
                "negative binomial needs positive mean and dispersion, got ({mean}, {dispersion})"
            )));
        }
        Ok(Self { mean, dispersion })
    }

    pub fn variance(&self) -> f64 {
        self.mean + self.mean * self.mean / self.dispersion
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reparam_examples() {
        let gd = reparam_mean_dispersion(&DelayMeanDispersion::new(vec![0.5, 0.25], vec![10.0, 4.0]).unwrap());
        assert_eq!(gd.alpha(), &[5.0, 1.0]);
        assert_eq!(gd.beta(), &[5.0, 3.0]);
    }

    proptest::proptest! {
        #[test]
        fn reparam_round_trip(a in 1e-3f64..1e4, b in 1e-3f64..1e4) {
            let gd = GDParams::new(vec![a], vec![b]).unwrap();
            let back = reparam_mean_dispersion(&gd.mean_dispersion());
            proptest::prop_assert!((back.alpha()[0] - a).abs() <= 1e-12 * a.max(1.0));
            proptest::prop_assert!((back.beta()[0] - b).abs() <= 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(GDParams::new(vec![1.0], vec![0.0]).is_err());
        assert!(GDParams::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(DelayMeanDispersion::new(vec![1.0], vec![1.0]).is_err());
        assert!(NegBinParams::new(0.0, 1.0).is_err());
    }
}
