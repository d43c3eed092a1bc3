//! Fits the default GDM to the default simulated scenario at desk scale and
//! prints the convergence gate.

use nowcast_core::mcmc::{convergence_subset, run_chains, SamplerConfig};
use nowcast_core::model::{ModelContext, ModelSpec, Variant};
use nowcast_core::simulator::{simulate_dataset, ScenarioConfig};

fn main() -> nowcast_core::Result<()> {
    let iterations: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let (tri, _) = simulate_dataset(&ScenarioConfig::default())?;
    let spec = ModelSpec::new(Variant::Gdm, 8);
    let cfg = SamplerConfig { n_iterations: iterations, burn_in: iterations / 2, ..SamplerConfig::desk() };
    let start = std::time::Instant::now();
    let samples = run_chains(&spec, &tri, &cfg)?;
    let ctx = ModelContext::new(&spec, &tri)?;
    let subset = convergence_subset(&samples, &ctx)?;
    let m = subset.mpsrf()?;
    println!("iterations {iterations}: MPSRF {:.4} over {} parameters ({:.1} s)", m.value, m.dim, start.elapsed().as_secs_f64());
    let mut ess: Vec<(f64, &String)> = subset
        .labels
        .iter()
        .enumerate()
        .map(|(p, l)| (nowcast_core::mcmc::effective_sample_size(&subset.column(p)).value, l))
        .collect();
    ess.sort_by(|a, b| a.0.total_cmp(&b.0));
    println!("lowest ESS: {:?}", &ess[..ess.len().min(5)]);
    Ok(())
}
