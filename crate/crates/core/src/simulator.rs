//! Synthetic delayed-reporting data with known truth.
//!
//! The generative chain is the model's own: a true count from the
//! Negative-Binomial (thinned by `π_t` when under-reporting is configured),
//! then the delay cells from the Generalized-Dirichlet-Multinomial, then the
//! same staircase censoring as real data. Seasonality is a sinusoid on
//! `ln λ`, so the truth has a closed form.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::sample::{binomial_draw, neg_binomial_draw};
use crate::distributions::sample_beta_binomial;
use crate::error::{Error, Result};
use crate::mcmc::{run_chains, PosteriorSamples, SamplerConfig};
use crate::model::{ModelSpec, Variant};
use crate::predictive::{nowcast, PredictionSummary};
use crate::special::{logistic, logit};
use crate::stats::quantile_inverse_cdf;
use crate::triangle::ReportingTriangle;

/// Shape of the long-run trend on `ln λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trend {
    Flat,
    /// `slope · (t − 1)`.
    Linear { slope: f64 },
    /// `rise / (1 + exp(−rate (t − midpoint)))`.
    Logistic { rise: f64, midpoint: f64, rate: f64 },
}

impl Trend {
    fn at(&self, t: f64) -> f64 {
        match *self {
            Trend::Flat => 0.0,
            Trend::Linear { slope } => slope * (t - 1.0),
            Trend::Logistic { rise, midpoint, rate } => rise / (1.0 + (-rate * (t - midpoint)).exp()),
        }
    }
}

/// Reporting rate `logit π_t = logit(base) + amplitude · sin(2πt / period)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportingTruth {
    pub base: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_period")]
    pub period: f64,
}

fn default_period() -> f64 {
    52.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of time points `T`.
    pub n_times: usize,
    /// Modelled delays `D`; later reports fall into the remainder column.
    pub delay_horizon: usize,
    /// Delay units after which a total is final.
    pub maturity: usize,
    pub present_day: usize,
    /// Level of `ln λ` before trend and seasonality.
    pub iota: f64,
    pub trend: Trend,
    pub seasonal_amplitude: f64,
    pub seasonal_period: f64,
    /// Phase of the seasonal sinusoid, in time units.
    pub seasonal_phase: f64,
    /// Conditional reporting means `ν_d`, one per modelled delay.
    pub nu: Vec<f64>,
    /// Generalized-Dirichlet dispersions `φ_d`.
    pub phi: Vec<f64>,
    /// Negative-Binomial dispersion of the totals.
    pub theta: f64,
    /// Poisson totals (`θ → ∞`).
    pub poisson_totals: bool,
    /// Multinomial delays (`φ → ∞`).
    pub multinomial_delays: bool,
    pub reporting: Option<ReportingTruth>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    /// Shaped like a weekly surveillance series: `T = 120`, `D = 8`,
    /// maturity 26, present day 114.
    fn default() -> Self {
        Self {
            n_times: 120,
            delay_horizon: 8,
            maturity: 26,
            present_day: 114,
            iota: 200f64.ln(),
            trend: Trend::Linear { slope: 0.004 },
            seasonal_amplitude: 0.6,
            seasonal_period: 52.0,
            seasonal_phase: 0.0,
            nu: vec![0.3, 0.35, 0.35, 0.3, 0.3, 0.25, 0.25, 0.2],
            phi: vec![10.0; 8],
            theta: 20.0,
            poisson_totals: false,
            multinomial_delays: false,
            reporting: None,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_times == 0 {
            return bad("scenario needs at least one time point".into());
        }
        crate::triangle::CensoringSpec::new(self.present_day, self.delay_horizon, self.maturity)?;
        if self.nu.len() != self.delay_horizon || self.phi.len() != self.delay_horizon {
            return bad(format!("nu and phi need one value per delay (D = {})", self.delay_horizon));
        }
        if self.nu.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return bad("nu must lie in (0, 1)".into());
        }
        if self.phi.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("phi must be positive and finite; use multinomial_delays for the limit".into());
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return bad("theta must be positive and finite; use poisson_totals for the limit".into());
        }
        if !self.iota.is_finite() || !self.seasonal_amplitude.is_finite() || !(self.seasonal_period > 0.0) {
            return bad("iota, seasonal amplitude and period must be finite, the period positive".into());
        }
        if let Some(r) = &self.reporting {
            if !(r.base > 0.0 && r.base <= 1.0) || !r.amplitude.is_finite() || !(r.period > 0.0) {
                return bad("reporting base must lie in (0, 1], the period be positive".into());
            }
        }
        Ok(())
    }

    pub fn log_lambda(&self, t: usize) -> f64 {
        let tf = t as f64;
        self.iota
            + self.trend.at(tf)
            + self.seasonal_amplitude * (2.0 * PI * (tf + self.seasonal_phase) / self.seasonal_period).sin()
    }

    pub fn reporting_rate(&self, t: usize) -> f64 {
        match &self.reporting {
            None => 1.0,
            Some(r) if r.base >= 1.0 && r.amplitude == 0.0 => 1.0,
            Some(r) => logistic(
                logit(r.base.min(1.0 - 1e-12)) + r.amplitude * (2.0 * PI * t as f64 / r.period).sin(),
            ),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let sc: Self = toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }
}

/// Everything needed to recompute the latent quantities of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub scenario: ScenarioConfig,
    pub lambda: Vec<f64>,
    /// Mean of `ln λ_t` over the rows: the intercept of a model whose
    /// smooths are centered over the same rows.
    pub centered_iota: f64,
    pub reporting_rate: Vec<f64>,
    /// True counts `x_t`; equal to `totals` without under-reporting.
    pub true_counts: Vec<u64>,
    /// Final reported totals `y_t`.
    pub totals: Vec<u64>,
    /// Uncensored cells, `D + 1` columns.
    pub cells: Vec<Vec<u64>>,
}

impl TruthRecord {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Draws one dataset; deterministic in `sc.seed`.
pub fn simulate_dataset(sc: &ScenarioConfig) -> Result<(ReportingTriangle, TruthRecord)> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let n = sc.n_times;
    let mut lambda = Vec::with_capacity(n);
    let mut rates = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut cells = Vec::with_capacity(n);
    let theta = if sc.poisson_totals { f64::INFINITY } else { sc.theta };
    for t in 1..=n {
        let lam = sc.log_lambda(t).exp();
        let pi = sc.reporting_rate(t);
        let x = neg_binomial_draw(lam, theta, &mut rng);
        let y = binomial_draw(x, pi, &mut rng);
        let mut row = Vec::with_capacity(sc.delay_horizon + 1);
        let mut left = y;
        for (&nu, &phi) in sc.nu.iter().zip(&sc.phi) {
            let z = if sc.multinomial_delays {
                binomial_draw(left, nu, &mut rng)
            } else {
                sample_beta_binomial(nu * phi, (1.0 - nu) * phi, left, &mut rng)
            };
            row.push(z);
            left -= z;
        }
        row.push(left);
        lambda.push(lam);
        rates.push(pi);
        xs.push(x);
        ys.push(y);
        cells.push(row);
    }
    let tri = ReportingTriangle::censor_with_maturity(cells.clone(), sc.present_day, sc.maturity)?;
    let centered_iota = lambda.iter().map(|l| l.ln()).sum::<f64>() / n as f64;
    Ok((
        tri,
        TruthRecord {
            scenario: sc.clone(),
            lambda,
            centered_iota,
            reporting_rate: rates,
            true_counts: xs,
            totals: ys,
            cells,
        },
    ))
}

/// 64-bit mix of a base seed and an index (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One simulate-fit-check replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRep {
    pub rep: usize,
    pub data_seed: u64,
    pub fit_seed: u64,
    /// Whether the 95% interval of each checked parameter covers the truth.
    pub covered: BTreeMap<String, bool>,
    /// Fraction of partially observed rows whose 95% nowcast covers `y_t`.
    pub nowcast_coverage: f64,
    pub nowcast_rows: usize,
    /// Same for rows with no observed cell.
    pub unobserved_coverage: f64,
    pub unobserved_rows: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RecoveryTable {
    pub reps: Vec<RecoveryRep>,
    /// Per parameter: fraction of reps whose interval covers the truth.
    pub parameter_coverage: BTreeMap<String, f64>,
    /// Over all reps' parameters.
    pub pooled_parameter_coverage: f64,
    /// Pooled over the partially observed rows of all reps.
    pub nowcast_coverage: f64,
}

impl RecoveryTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rep", "quantity", "covered"])?;
        for r in &self.reps {
            for (k, v) in &r.covered {
                w.write_record([r.rep.to_string(), k.clone(), (*v as u8).to_string()])?;
            }
            w.write_record([r.rep.to_string(), "nowcast".into(), r.nowcast_coverage.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(std::path::Path::new("<csv>"), e))?;
        Ok(())
    }
}

/// True values of the checked parameters: the centered intercept, `θ`
/// and every `φ_d`.
fn truth_values(truth: &TruthRecord) -> BTreeMap<String, f64> {
    let sc = &truth.scenario;
    let mut out = BTreeMap::new();
    out.insert("iota".to_string(), truth.centered_iota);
    if !sc.poisson_totals {
        out.insert("theta".to_string(), sc.theta);
    }
    if !sc.multinomial_delays {
        for (d, &p) in sc.phi.iter().enumerate() {
            out.insert(format!("phi[{}]", d + 1), p);
        }
    }
    out
}

/// Coverage of the 95% parameter intervals and nowcasts of one fit.
pub fn check_recovery(
    samples: &PosteriorSamples,
    tri: &ReportingTriangle,
    truth: &TruthRecord,
) -> Result<(BTreeMap<String, bool>, PredictionSummary)> {
    let mut covered = BTreeMap::new();
    for (label, value) in truth_values(truth) {
        let Some(chains) = samples.column(&label) else { continue };
        let mut all: Vec<f64> = chains.into_iter().flatten().collect();
        all.sort_by(f64::total_cmp);
        let lo = quantile_inverse_cdf(&all, 0.025);
        let hi = quantile_inverse_cdf(&all, 0.975);
        covered.insert(label, lo <= value && value <= hi);
    }
    Ok((covered, nowcast(samples, tri, &[0.95])?))
}

/// Repeats simulate → fit → check `n_reps` times with per-rep seeds derived
/// from `sc.seed` and `cfg.seed`.
pub fn recovery_study(
    sc: &ScenarioConfig,
    spec: &ModelSpec,
    cfg: &SamplerConfig,
    n_reps: usize,
) -> Result<RecoveryTable> {
    sc.validate()?;
    if !spec.variant.is_gdm() {
        return Err(Error::Config("the recovery study checks GDM parameters".into()));
    }
    if spec.variant == Variant::GdmUr && sc.reporting.is_none() {
        log::warn!("fitting the under-reporting model to fully reported data");
    }
    let reps = (0..n_reps)
        .into_par_iter()
        .map(|rep| -> Result<RecoveryRep> {
            let data_seed = derive_seed(sc.seed, rep as u64);
            let fit_seed = derive_seed(cfg.seed, rep as u64);
            let (tri, truth) = simulate_dataset(&ScenarioConfig { seed: data_seed, ..sc.clone() })?;
            let tri = tri_for(spec, tri)?;
            let samples = run_chains(spec, &tri, &SamplerConfig { seed: fit_seed, ..cfg.clone() })?;
            let (covered, now) = check_recovery(&samples, &tri, &truth)?;
            let (mut hit, mut n, mut hit0, mut n0) = (0, 0, 0, 0);
            for (i, &t) in now.times.iter().enumerate() {
                let inside = now.covers(i, 0.95, truth.totals[t - 1] as f64).unwrap_or(false);
                if !tri.observed_cells(t - 1).is_empty() {
                    n += 1;
                    hit += inside as usize;
                } else {
                    n0 += 1;
                    hit0 += inside as usize;
                }
            }
            Ok(RecoveryRep {
                rep,
                data_seed,
                fit_seed,
                covered,
                nowcast_coverage: ratio(hit, n),
                nowcast_rows: n,
                unobserved_coverage: ratio(hit0, n0),
                unobserved_rows: n0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_recovery(reps))
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

fn summarize_recovery(reps: Vec<RecoveryRep>) -> RecoveryTable {
    if reps.is_empty() {
        return RecoveryTable::default();
    }
    let mut per: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in &reps {
        for (k, &v) in &r.covered {
            let e = per.entry(k.clone()).or_default();
            e.0 += v as usize;
            e.1 += 1;
        }
    }
    let (hits, total) = per.values().fold((0, 0), |(a, b), (h, n)| (a + h, b + n));
    let (nh, nn) = reps.iter().fold((0.0, 0usize), |(a, b), r| {
        (a + r.nowcast_coverage * r.nowcast_rows as f64, b + r.nowcast_rows)
    });
    RecoveryTable {
        parameter_coverage: per.into_iter().map(|(k, (h, n))| (k, ratio(h, n))).collect(),
        pooled_parameter_coverage: ratio(hits, total),
        nowcast_coverage: if nn == 0 { f64::NAN } else { nh / nn as f64 },
        reps,
    }
}

/// The triangle as the model sees it: simulated data already carry `D + 1`
/// columns, so this only checks the horizon.
fn tri_for(spec: &ModelSpec, tri: ReportingTriangle) -> Result<ReportingTriangle> {
    if tri.width() != spec.delay_horizon + 1 {
        return Err(Error::Config(format!(
            "scenario has D = {}, the model D = {}",
            tri.width() - 1,
            spec.delay_horizon
        )));
    }
    Ok(tri)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::stick_breaking_probabilities;

    #[test]
    fn rows_sum_to_totals_and_censoring_is_the_staircase() {
        let (tri, truth) = simulate_dataset(&ScenarioConfig::default()).unwrap();
        assert_eq!(tri.n_rows(), 120);
        assert_eq!(tri.width(), 9);
        for (r, row) in truth.cells.iter().enumerate() {
            assert_eq!(row.iter().sum::<u64>(), truth.totals[r]);
            let k = crate::triangle::observed_prefix_closing(r + 1, 9, 26, 114);
            assert_eq!(tri.observed_cells(r), &row[..k]);
        }
        assert_eq!(tri.complete_rows().len(), 89);
        assert_eq!(truth.totals, truth.true_counts);
    }

    #[test]
    fn same_seed_same_data() {
        let sc = ScenarioConfig::default();
        assert_eq!(simulate_dataset(&sc).unwrap(), simulate_dataset(&sc).unwrap());
        let other = simulate_dataset(&ScenarioConfig { seed: 2, ..sc }).unwrap();
        assert_ne!(other.1.totals, simulate_dataset(&ScenarioConfig::default()).unwrap().1.totals);
    }

    #[test]
    fn full_reporting_reproduces_the_plain_scenario() {
        let plain = ScenarioConfig::default();
        let ur = ScenarioConfig {
            reporting: Some(ReportingTruth { base: 1.0, amplitude: 0.0, period: 52.0 }),
            ..plain.clone()
        };
        let (a, ta) = simulate_dataset(&plain).unwrap();
        let (b, tb) = simulate_dataset(&ur).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.cells, tb.cells);
    }

    #[test]
    fn under_reporting_thins_the_true_counts() {
        let sc = ScenarioConfig {
            reporting: Some(ReportingTruth { base: 0.7, amplitude: 0.3, period: 52.0 }),
            ..ScenarioConfig::default()
        };
        let (_, truth) = simulate_dataset(&sc).unwrap();
        assert!(truth.totals.iter().zip(&truth.true_counts).all(|(y, x)| y <= x));
        let ratio = truth.totals.iter().sum::<u64>() as f64 / truth.true_counts.iter().sum::<u64>() as f64;
        assert!((ratio - 0.7).abs() < 0.05, "{ratio}");
    }

    /// Poisson totals and Multinomial delays with constant `ν`: the cell
    /// proportions pooled over rows are the stick-breaking probabilities.
    #[test]
    fn limiting_scenario_matches_stick_breaking_probabilities() {
        let nu = vec![0.3, 0.5, 0.4];
        let sc = ScenarioConfig {
            n_times: 10_000,
            delay_horizon: 3,
            maturity: 3,
            present_day: 20_000,
            iota: 20f64.ln(),
            trend: Trend::Flat,
            seasonal_amplitude: 0.0,
            nu: nu.clone(),
            phi: vec![1.0; 3],
            poisson_totals: true,
            multinomial_delays: true,
            ..ScenarioConfig::default()
        };
        let (_, truth) = simulate_dataset(&sc).unwrap();
        let p = stick_breaking_probabilities(&nu);
        let n: u64 = truth.totals.iter().sum();
        for (d, &pd) in p.iter().enumerate() {
            let c: u64 = truth.cells.iter().map(|r| r[d]).sum();
            // cells of independent Poisson rows are Poisson, so counts are exact
            let se = (n as f64 * pd * (1.0 - pd)).sqrt() / n as f64;
            assert!((c as f64 / n as f64 - pd).abs() < 3.0 * se, "delay {d}");
        }
    }

    #[test]
    fn scenario_validation() {
        let ok = ScenarioConfig::default();
        assert!(ScenarioConfig { nu: vec![0.5; 3], ..ok.clone() }.validate().is_err());
        assert!(ScenarioConfig { theta: f64::INFINITY, ..ok.clone() }.validate().is_err());
        assert!(ScenarioConfig { maturity: 4, ..ok.clone() }.validate().is_err());
        let text = "n_times = 50\npresent_day = 45\nseed = 9\n[trend]\nkind = \"flat\"\n";
        let sc = ScenarioConfig::from_toml(text).unwrap();
        assert_eq!((sc.n_times, sc.seed, sc.trend), (50, 9, Trend::Flat));
        assert!(ScenarioConfig::from_toml("unknown = 1").is_err());
    }

    #[test]
    fn empty_study_is_empty() {
        let t = recovery_study(&ScenarioConfig::default(), &ModelSpec::new(Variant::Gdm, 8), &SamplerConfig::desk(), 0)
            .unwrap();
        assert!(t.reps.is_empty() && t.parameter_coverage.is_empty());
    }

    #[test]
    fn small_study_runs_end_to_end() {
        let sc = ScenarioConfig {
            n_times: 40,
            delay_horizon: 2,
            maturity: 4,
            present_day: 38,
            nu: vec![0.4, 0.5],
            phi: vec![10.0, 10.0],
            ..ScenarioConfig::default()
        };
        let mut spec = ModelSpec::new(Variant::Gdm, 2);
        spec.total.trend_basis = 4;
        spec.total.seasonal_basis = 0;
        spec.delay.basis = 0;
        let cfg = SamplerConfig { n_chains: 2, n_iterations: 600, burn_in: 300, thin: 2, threads: Some(1), ..SamplerConfig::desk() };
        let t = recovery_study(&sc, &spec, &cfg, 2).unwrap();
        assert_eq!(t.reps.len(), 2);
        assert_eq!(t.parameter_coverage.len(), 4);
        assert!(t.reps.iter().all(|r| r.nowcast_rows == 3 && r.unobserved_rows == 2));
        assert_ne!(t.reps[0].data_seed, t.reps[1].data_seed);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("rep,quantity,covered\n0,iota,"));
    }
}
