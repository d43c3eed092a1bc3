//! Adaptive Metropolis-within-Gibbs sampling, multi-chain orchestration and
//! convergence diagnostics.
//!
//! Each chain owns a ChaCha8 stream derived from `(seed, chain index)`, so
//! results do not depend on thread count or scheduling. Proposal scales
//! adapt during burn-in only; the empirical block covariances restart once,
//! halfway through burn-in, to forget the transient from the start.

mod config;
mod convergence;
pub mod diagnostics;
mod gibbs;
mod init;
pub mod kernels;
mod samples;

pub use config::{AdaptationConfig, SamplerConfig, Schedule};
pub use convergence::{convergence_subset, ConvergenceSubset, CONVERGENCE_STRIDE};
pub use diagnostics::{effective_sample_size, mcse_mean, mpsrf, psrf, Ess, Mpsrf, MPSRF_THRESHOLD};
pub use kernels::{update_block_rw, update_integer_rw, update_scalar_rw};
pub use samples::{ChainDraws, ChainStats, PosteriorSamples, META_FILE, SAMPLES_SCHEMA};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{log_posterior, ModelContext, ModelSpec, ParameterState};
use crate::triangle::ReportingTriangle;

use gibbs::GibbsSampler;

/// The random stream of one chain.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

/// Fits `spec` to `tri` with `cfg.n_chains` independent chains.
pub fn run_chains(
    spec: &ModelSpec,
    tri: &ReportingTriangle,
    cfg: &SamplerConfig,
) -> Result<PosteriorSamples> {
    spec.validate()?;
    let ctx = ModelContext::new(spec, tri)?;
    run_chains_in(&ctx, cfg)
}

/// As [`run_chains`] on a prepared context (e.g. a prior-only one).
pub fn run_chains_in(ctx: &ModelContext, cfg: &SamplerConfig) -> Result<PosteriorSamples> {
    cfg.validate()?;
    let threads = cfg.threads.unwrap_or(cfg.n_chains).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let chains: Vec<ChainDraws> = pool.install(|| {
        (0..cfg.n_chains)
            .into_par_iter()
            .map(|c| run_chain(ctx, cfg, c))
            .collect::<Result<Vec<_>>>()
    })?;
    let (ys, xs) = ParameterState::latent_labels(ctx);
    Ok(PosteriorSamples {
        spec: ctx.spec().clone(),
        config: cfg.clone(),
        block_labels: ParameterState::block_labels(ctx),
        latent_y_labels: ys,
        latent_x_labels: xs,
        chains,
    })
}

/// One chain: initialize, burn in with adaptation, then keep every
/// `thin`-th state.
pub fn run_chain(ctx: &ModelContext, cfg: &SamplerConfig, chain: usize) -> Result<ChainDraws> {
    let mut rng = chain_rng(cfg.seed, chain);
    let (state, lp0) = init::initialize(ctx, &mut rng)?;
    let mut g = GibbsSampler::new(ctx, state, cfg.schedule, &cfg.adaptation);
    let n_blocks = ParameterState::block_labels(ctx).len();
    let n_kept = cfg.n_kept();
    let mut out = ChainDraws {
        blocks: vec![Vec::new(); n_blocks],
        latent_y: Vec::new(),
        latent_x: Vec::new(),
        log_posterior: Vec::with_capacity(n_kept),
        stats: ChainStats {
            initial_log_posterior: lp0,
            ..ChainStats::default()
        },
    };
    for it in 0..cfg.n_iterations {
        let adapt = it < cfg.burn_in;
        if adapt && it == cfg.burn_in / 2 {
            g.reset_empirical();
        }
        g.sweep(&mut rng, adapt);
        if it + 1 == cfg.burn_in {
            out.stats.scales_after_burn_in = g.proposal_fingerprint();
        }
        if it >= cfg.burn_in && (it + 1 - cfg.burn_in) % cfg.thin == 0 && out.log_posterior.len() < n_kept {
            for (b, v) in g.s.to_blocks(ctx).into_iter().enumerate() {
                out.blocks[b].extend(v);
            }
            let (ys, xs) = g.s.latent_to_blocks(ctx);
            out.latent_y.extend(ys);
            out.latent_x.extend(xs);
            out.log_posterior.push(g.lp);
        }
    }
    if cfg.burn_in == 0 {
        out.stats.scales_after_burn_in = g.proposal_fingerprint();
    }
    out.stats.scales_at_end = g.proposal_fingerprint();
    out.stats.final_log_posterior = log_posterior(ctx, &g.s);
    out.stats.acceptance = g
        .acceptance()
        .into_iter()
        .map(|(k, c)| (k.to_string(), c.rate()))
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests;
