use crate::distributions::InverseWishart;
use crate::error::{Error, Result};
use crate::splines::{build_cubic_basis, build_cyclic_basis, center_basis, SplineBasis, SplinePrior};
use crate::triangle::ReportingTriangle;

use super::{ModelSpec, ParameterState, Variant};

/// Observed data of one triangle row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowData {
    /// 1-based time index.
    pub t: usize,
    /// Observed prefix of the delay cells.
    pub observed: Vec<u64>,
    /// `cum[d] = Σ_{j<d} observed[j]`, length `observed.len() + 1`.
    pub cum: Vec<u64>,
    pub complete: bool,
}

impl RowData {
    pub fn k(&self) -> usize {
        self.observed.len()
    }

    pub fn prefix_sum(&self) -> u64 {
        *self.cum.last().expect("cum is never empty")
    }

    pub fn total(&self) -> Option<u64> {
        self.complete.then(|| self.prefix_sum())
    }
}

/// A centered smooth with its design rows at `t = 1..=t_max`.
#[derive(Debug, Clone)]
pub struct Smooth {
    basis: SplineBasis,
    prior: SplinePrior,
    rows: Vec<Vec<f64>>,
}

impl Smooth {
    fn new(basis: SplineBasis, t_max: usize) -> Result<Self> {
        let basis = center_basis(&basis)?;
        let rows = (1..=t_max)
            .map(|t| basis.evaluate(t as f64))
            .collect::<Result<Vec<_>>>()?;
        let prior = basis.prior();
        Ok(Self { basis, prior, rows })
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn prior(&self) -> &SplinePrior {
        &self.prior
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Design row at 1-based `t`.
    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t - 1]
    }

    #[inline]
    pub fn eval(&self, t: usize, coefs: &[f64]) -> f64 {
        dot(&self.rows[t - 1], coefs)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Everything fixed during a fit: the spec, the observed data and the
/// spline designs.
#[derive(Debug, Clone)]
pub struct ModelContext {
    spec: ModelSpec,
    rows: Vec<RowData>,
    t_max: usize,
    present_day: usize,
    maturity: usize,
    trend: Option<Smooth>,
    seasonal: Option<Smooth>,
    delay: Option<Smooth>,
    dispersion: Option<Smooth>,
    reporting: Option<Smooth>,
    psi_mean: Vec<f64>,
    covariance_prior: Option<InverseWishart>,
}

impl ModelContext {
    /// `tri` must already be collapsed to `D + 1` columns.
    pub fn new(spec: &ModelSpec, tri: &ReportingTriangle) -> Result<Self> {
        spec.validate()?;
        if tri.width() != spec.delay_horizon + 1 {
            return Err(Error::Config(format!(
                "triangle has {} delay columns, the model needs D + 1 = {}; collapse the remainder first",
                tri.width(),
                spec.delay_horizon + 1
            )));
        }
        let rows: Vec<RowData> = (0..tri.n_rows())
            .map(|r| {
                let observed = tri.observed_cells(r).to_vec();
                let mut cum = Vec::with_capacity(observed.len() + 1);
                cum.push(0);
                for z in &observed {
                    cum.push(cum.last().unwrap() + z);
                }
                RowData {
                    t: r + 1,
                    observed,
                    cum,
                    complete: tri.is_complete(r),
                }
            })
            .collect();
        Self::build(spec, rows, tri.n_rows(), tri.present_day(), tri.maturity())
    }

    /// A context without data; the posterior is the prior. Smooths are built
    /// over `t = 1..=n_points`.
    pub fn prior_only(spec: &ModelSpec, n_points: usize) -> Result<Self> {
        spec.validate()?;
        Self::build(spec, Vec::new(), n_points, 0, spec.delay_horizon + 1)
    }

    fn build(
        spec: &ModelSpec,
        rows: Vec<RowData>,
        n_points: usize,
        present_day: usize,
        maturity: usize,
    ) -> Result<Self> {
        let t_max = n_points + spec.total.forecast_reach;
        let points: Vec<f64> = (1..=n_points).map(|t| t as f64).collect();
        let range = (1.0, t_max as f64);
        let cubic = |n: usize| -> Result<Option<Smooth>> {
            if n == 0 {
                return Ok(None);
            }
            Smooth::new(build_cubic_basis(&points, n, range)?, t_max).map(Some)
        };
        let seasonal = if spec.total.seasonal_basis == 0 {
            None
        } else {
            Some(Smooth::new(
                build_cyclic_basis(&points, spec.total.seasonal_basis, spec.total.period)?,
                t_max,
            )?)
        };
        let covariance_prior = (spec.variant == Variant::GlmPlus)
            .then(|| {
                let dim = spec.delay_horizon + 1;
                InverseWishart::new(nalgebra::DMatrix::identity(dim, dim), spec.covariance_df())
            })
            .transpose()?;
        Ok(Self {
            spec: spec.clone(),
            rows,
            t_max,
            present_day,
            maturity,
            trend: cubic(spec.total.trend_basis)?,
            seasonal,
            delay: cubic(spec.delay.basis)?,
            dispersion: cubic(spec.dispersion.basis)?,
            reporting: cubic(spec.reporting.as_ref().map_or(0, |r| r.basis))?,
            psi_mean: spec.psi_prior_mean(),
            covariance_prior,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn rows(&self) -> &[RowData] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Last time index the smooths can be evaluated at.
    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn present_day(&self) -> usize {
        self.present_day
    }

    pub fn maturity(&self) -> usize {
        self.maturity
    }

    pub fn delay_horizon(&self) -> usize {
        self.spec.delay_horizon
    }

    pub fn trend(&self) -> Option<&Smooth> {
        self.trend.as_ref()
    }

    pub fn seasonal(&self) -> Option<&Smooth> {
        self.seasonal.as_ref()
    }

    pub fn delay(&self) -> Option<&Smooth> {
        self.delay.as_ref()
    }

    pub fn dispersion(&self) -> Option<&Smooth> {
        self.dispersion.as_ref()
    }

    pub fn reporting(&self) -> Option<&Smooth> {
        self.reporting.as_ref()
    }

    pub fn psi_mean(&self) -> &[f64] {
        &self.psi_mean
    }

    pub fn covariance_prior(&self) -> Option<&InverseWishart> {
        self.covariance_prior.as_ref()
    }

    pub fn trend_dim(&self) -> usize {
        self.trend.as_ref().map_or(0, Smooth::dim)
    }

    pub fn seasonal_dim(&self) -> usize {
        self.seasonal.as_ref().map_or(0, Smooth::dim)
    }

    pub fn delay_dim(&self) -> usize {
        self.delay.as_ref().map_or(0, Smooth::dim)
    }

    pub fn dispersion_dim(&self) -> usize {
        self.dispersion.as_ref().map_or(0, Smooth::dim)
    }

    pub fn reporting_dim(&self) -> usize {
        self.reporting.as_ref().map_or(0, Smooth::dim)
    }

    /// Rows whose total is still latent.
    pub fn incomplete_rows(&self) -> impl Iterator<Item = &RowData> {
        self.rows.iter().filter(|r| !r.complete)
    }

    pub(crate) fn check_time(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_max {
            Err(Error::OutOfRange(t as f64))
        } else {
            Ok(())
        }
    }

    /// `ln λ_t = ι + α_t + η_t`.
    pub fn linear_predictor_total(&self, s: &ParameterState, t: usize) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.log_lambda(s, t))
    }

    #[inline]
    pub(crate) fn log_lambda(&self, s: &ParameterState, t: usize) -> f64 {
        let mut v = s.iota;
        if let Some(b) = &self.trend {
            v += b.eval(t, &s.alpha);
        }
        if let Some(b) = &self.seasonal {
            v += b.eval(t, &s.eta);
        }
        v
    }

    /// `ψ_d + β_{t,d}` for 1-based `d`: the logit of `ν_{t,d}` under the GDM,
    /// the delay part of `ln μ_{t,d}` under the GLMs.
    pub fn linear_predictor_delay(&self, s: &ParameterState, t: usize, d: usize) -> Result<f64> {
        self.check_time(t)?;
        if d == 0 || d > self.spec.n_delay_effects() {
            return Err(Error::Domain(format!("delay {d} has no effect in this model")));
        }
        Ok(self.delay_effect(s, t, d - 1))
    }

    /// 0-based delay column.
    #[inline]
    pub(crate) fn delay_effect(&self, s: &ParameterState, t: usize, col: usize) -> f64 {
        let mut v = s.psi[col];
        if let Some(b) = &self.delay {
            v += b.eval(t, &s.beta[col]);
        }
        v
    }

    /// `ln φ_{t,d}` for a 0-based delay column.
    #[inline]
    pub(crate) fn log_phi(&self, s: &ParameterState, t: usize, col: usize) -> f64 {
        let mut v = s.phi[col].ln();
        if let Some(b) = &self.dispersion {
            v += b.eval(t, &s.kappa[col]);
        }
        v
    }

    /// GLM mean `ln μ_{t,d}` for a 0-based delay column.
    #[inline]
    pub(crate) fn log_mu(&self, s: &ParameterState, t: usize, col: usize) -> f64 {
        self.log_lambda(s, t) + self.delay_effect(s, t, col)
    }

    /// Logit of the reporting rate `π_t`.
    #[inline]
    pub(crate) fn logit_pi(&self, s: &ParameterState, t: usize) -> f64 {
        let mut v = s.rho;
        if let Some(b) = &self.reporting {
            v += b.eval(t, &s.pi_coefs);
        }
        v
    }

    /// Reporting rate `π_t`.
    pub fn reporting_rate(&self, s: &ParameterState, t: usize) -> Result<f64> {
        self.check_time(t)?;
        Ok(crate::special::logistic(self.logit_pi(s, t)))
    }

    /// Conditional reporting means `ν_{t,1..D}` under the GDM.
    pub fn delay_means(&self, s: &ParameterState, t: usize) -> Result<Vec<f64>> {
        self.check_time(t)?;
        Ok((0..self.spec.delay_horizon)
            .map(|c| crate::special::logistic(self.delay_effect(s, t, c)))
            .collect())
    }

    /// GD dispersions `φ_{t,1..D}`.
    pub fn dispersions(&self, s: &ParameterState, t: usize) -> Result<Vec<f64>> {
        self.check_time(t)?;
        Ok((0..self.spec.delay_horizon).map(|c| self.log_phi(s, t, c).exp()).collect())
    }

    /// GLM means `μ_{t,1..D+1}` from the linear predictor.
    pub fn cell_means(&self, s: &ParameterState, t: usize) -> Result<Vec<f64>> {
        self.check_time(t)?;
        Ok((0..self.spec.n_delay_effects()).map(|c| self.log_mu(s, t, c).exp()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::logistic;

    fn small_tri() -> ReportingTriangle {
        let cells: Vec<Vec<u64>> = (0..30).map(|t| vec![10 + t, 5, 3]).collect();
        ReportingTriangle::censor(cells, 30).unwrap()
    }

    fn spec() -> ModelSpec {
        let mut s = ModelSpec::new(Variant::Gdm, 2);
        s.total.trend_basis = 5;
        s.total.seasonal_basis = 4;
        s.delay.basis = 4;
        s
    }

    #[test]
    fn zero_coefficients_give_intercepts() {
        let ctx = ModelContext::new(&spec(), &small_tri()).unwrap();
        let mut st = ParameterState::zeros(&ctx);
        st.iota = 1.7;
        assert_eq!(ctx.linear_predictor_total(&st, 5).unwrap(), 1.7);
        assert_eq!(logistic(ctx.linear_predictor_delay(&st, 5, 1).unwrap()), 0.5);
        assert!(ctx.linear_predictor_total(&st, ctx.t_max() + 1).is_err());
    }

    #[test]
    fn trend_is_linear_past_the_data() {
        let ctx = ModelContext::new(&spec(), &small_tri()).unwrap();
        let mut st = ParameterState::zeros(&ctx);
        st.alpha = vec![0.3, -0.2, 0.5, 0.1];
        let f: Vec<f64> = (31..=35).map(|t| ctx.linear_predictor_total(&st, t).unwrap()).collect();
        for w in f.windows(3) {
            assert!((w[2] - 2.0 * w[1] + w[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn predictor_matches_exported_basis_rows() {
        let ctx = ModelContext::new(&spec(), &small_tri()).unwrap();
        let mut st = ParameterState::zeros(&ctx);
        st.iota = 0.4;
        st.alpha = vec![0.3, -0.2, 0.5, 0.1];
        st.eta = vec![0.05, -0.1, 0.2];
        let xs: Vec<f64> = (1..=40).map(|t| t as f64).collect();
        let xa = ctx.trend().unwrap().basis().design_at(&xs).unwrap();
        let xe = ctx.seasonal().unwrap().basis().design_at(&xs).unwrap();
        let a = nalgebra::DVector::from_vec(st.alpha.clone());
        let e = nalgebra::DVector::from_vec(st.eta.clone());
        let brute = (xa * a + xe * e).add_scalar(0.4);
        for t in 1..=40 {
            assert!((ctx.linear_predictor_total(&st, t).unwrap() - brute[t - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_share_prior_mean() {
        let ctx = ModelContext::new(&spec(), &small_tri()).unwrap();
        let mut st = ParameterState::zeros(&ctx);
        st.psi = ctx.psi_mean().to_vec();
        let nu = ctx.delay_means(&st, 3).unwrap();
        let p = crate::distributions::stick_breaking_probabilities(&nu);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        st.psi[0] += 0.5;
        assert!(ctx.delay_means(&st, 3).unwrap()[0] > nu[0]);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let mut s = spec();
        s.delay_horizon = 3;
        assert!(matches!(ModelContext::new(&s, &small_tri()), Err(Error::Config(_))));
    }
}
