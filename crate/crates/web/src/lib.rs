//! Browser bindings: simulate a reporting triangle, choose the delay
//! horizon, and nowcast its incomplete rows with a short GDM fit.
//!
//! Every entry point takes and returns JSON strings. The page keeps no
//! Rust-side state: each call re-simulates from the same seeded scenario.

use nowcast_core::mcmc::{run_chain, PosteriorSamples, SamplerConfig};
use nowcast_core::model::{ModelContext, ModelSpec, ParameterState, Variant};
use nowcast_core::predictive::nowcast as nowcast_rows;
use nowcast_core::simulator::{simulate_dataset, ScenarioConfig, TruthRecord};
use nowcast_core::triangle::{cumulative_proportion_quantiles, select_delay_horizon, ReportingTriangle};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Knobs exposed on the page; everything else keeps the desk scenario.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct DemoScenario {
    pub n_times: usize,
    pub present_day: usize,
    pub delay_horizon: usize,
    pub phi: f64,
    pub theta: f64,
    pub seed: u64,
}

impl Default for DemoScenario {
    fn default() -> Self {
        let sc = ScenarioConfig::default();
        Self {
            n_times: 60,
            present_day: 56,
            delay_horizon: 4,
            phi: 10.0,
            theta: sc.theta,
            seed: 1,
        }
    }
}

impl DemoScenario {
    fn scenario(&self) -> ScenarioConfig {
        let base = ScenarioConfig::default();
        let d = self.delay_horizon;
        ScenarioConfig {
            n_times: self.n_times,
            present_day: self.present_day,
            delay_horizon: d,
            maturity: base.maturity.max(d),
            nu: (0..d).map(|i| base.nu[i.min(base.nu.len() - 1)]).collect(),
            phi: vec![self.phi; d],
            theta: self.theta,
            seed: self.seed,
            ..base
        }
    }

    fn simulate(&self) -> Result<(ReportingTriangle, TruthRecord), String> {
        simulate_dataset(&self.scenario()).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Serialize)]
pub struct TriangleView {
    /// `cells[t][d]`, `None` where not yet reported.
    pub cells: Vec<Vec<Option<u64>>>,
    pub totals: Vec<u64>,
    pub reported: Vec<u64>,
}

pub fn simulate_view(scenario: &DemoScenario) -> Result<TriangleView, String> {
    let (tri, truth) = scenario.simulate()?;
    Ok(TriangleView {
        cells: tri.masked_cells(),
        totals: truth.totals,
        reported: (0..tri.n_rows()).map(|r| tri.prefix_sum(r)).collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct DelayView {
    pub delay_horizon: usize,
    pub threshold_reached: bool,
    /// Per delay, the 20/40/60/80% quantiles of the cumulative proportion.
    pub quantiles: Vec<Vec<f64>>,
}

pub fn select_delay_view(scenario: &DemoScenario, threshold: f64, quantile: f64) -> Result<DelayView, String> {
    let (tri, _) = scenario.simulate()?;
    let sel = select_delay_horizon(&tri, threshold, quantile).map_err(|e| e.to_string())?;
    let quantiles = cumulative_proportion_quantiles(&tri, &[0.2, 0.4, 0.6, 0.8]).map_err(|e| e.to_string())?;
    Ok(DelayView {
        delay_horizon: sel.delay_horizon,
        threshold_reached: sel.threshold_reached,
        quantiles,
    })
}

#[derive(Debug, Serialize)]
pub struct NowcastRow {
    pub t: usize,
    pub reported: u64,
    pub truth: u64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Fits the GDM with `chains` sequential chains of `iterations` each and
/// returns 95% nowcasts of the incomplete rows.
pub fn nowcast_view(scenario: &DemoScenario, chains: usize, iterations: usize) -> Result<Vec<NowcastRow>, String> {
    let (tri, truth) = scenario.simulate()?;
    let mut spec = ModelSpec::new(Variant::Gdm, scenario.delay_horizon);
    spec.total.trend_basis = 6;
    spec.delay.basis = 0;
    let cfg = SamplerConfig {
        n_chains: chains,
        n_iterations: iterations,
        burn_in: iterations / 2,
        thin: 1,
        seed: scenario.seed,
        threads: Some(1),
        ..SamplerConfig::desk()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let ctx = ModelContext::new(&spec, &tri).map_err(|e| e.to_string())?;
    // sequential: the browser has no thread pool
    let draws = (0..chains)
        .map(|c| run_chain(&ctx, &cfg, c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let (ys, xs) = ParameterState::latent_labels(&ctx);
    let samples = PosteriorSamples {
        spec: spec.clone(),
        config: cfg,
        block_labels: ParameterState::block_labels(&ctx),
        latent_y_labels: ys,
        latent_x_labels: xs,
        chains: draws,
    };
    let now = nowcast_rows(&samples, &tri, &[0.95]).map_err(|e| e.to_string())?;
    Ok((0..now.len())
        .map(|i| {
            let t = now.times[i];
            NowcastRow {
                t,
                reported: now.observed_prefix[i],
                truth: truth.totals[t - 1],
                median: now.median[i],
                lower: now.lower[0][i],
                upper: now.upper[0][i],
            }
        })
        .collect())
}

fn parse(json: &str) -> Result<DemoScenario, JsError> {
    if json.trim().is_empty() {
        return Ok(DemoScenario::default());
    }
    serde_json::from_str(json).map_err(|e| JsError::new(&format!("scenario: {e}")))
}

fn to_json<T: Serialize>(v: Result<T, String>) -> Result<String, JsError> {
    let v = v.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn simulate(scenario: &str) -> Result<String, JsError> {
    to_json(simulate_view(&parse(scenario)?))
}

#[wasm_bindgen(js_name = selectDelay)]
pub fn select_delay(scenario: &str, threshold: f64, quantile: f64) -> Result<String, JsError> {
    to_json(select_delay_view(&parse(scenario)?, threshold, quantile))
}

#[wasm_bindgen]
pub fn nowcast(scenario: &str, chains: usize, iterations: usize) -> Result<String, JsError> {
    to_json(nowcast_view(&parse(scenario)?, chains, iterations))
}
