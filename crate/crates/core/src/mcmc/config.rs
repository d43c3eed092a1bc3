use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationConfig {
    pub target_accept_scalar: f64,
    pub target_accept_block: f64,
    /// Block proposal covariances are re-estimated every this many updates.
    pub adaptation_window: usize,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            target_accept_scalar: 0.44,
            target_accept_block: 0.234,
            adaptation_window: 50,
        }
    }
}

/// Repeats of each update within one sweep. The sweep order is fixed:
/// total-count block, its smoothing sds, count dispersion(s), then per delay
/// (delay block, its smoothing sd, dispersion and its spline), reporting
/// block, GLM+ latent rows and covariance, latent true counts, latent totals.
/// The total-count and delay blocks get one random-walk move followed by
/// `total` (`delay`) Fisher-scoring moves; every smoothing-sd update is
/// followed by a joint rescaling of the sd and its coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub total: usize,
    pub smoothing: usize,
    pub count_dispersion: usize,
    pub delay: usize,
    pub delay_dispersion: usize,
    pub reporting: usize,
    pub logmu: usize,
    pub latent: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            total: 5,
            smoothing: 3,
            count_dispersion: 3,
            delay: 2,
            delay_dispersion: 2,
            reporting: 3,
            logmu: 2,
            latent: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Worker threads for chain-level parallelism; `None` means one per chain.
    pub threads: Option<usize>,
    pub adaptation: AdaptationConfig,
    pub schedule: Schedule,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SamplerConfig {
    /// 4 chains of 20k iterations, 10k burn-in, thinning 5.
    pub fn desk() -> Self {
        Self {
            n_chains: 4,
            n_iterations: 20_000,
            burn_in: 10_000,
            thin: 5,
            seed: 1,
            threads: None,
            adaptation: AdaptationConfig::default(),
            schedule: Schedule::default(),
        }
    }

    /// 4 chains of 400k iterations, 200k burn-in, thinning 20.
    pub fn paper() -> Self {
        Self {
            n_iterations: 400_000,
            burn_in: 200_000,
            thin: 20,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            _ => Err(Error::Config(format!("unknown sampler preset '{name}' (desk, paper)"))),
        }
    }

    /// Draws kept per chain.
    pub fn n_kept(&self) -> usize {
        (self.n_iterations - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        if self.n_iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.burn_in >= self.n_iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.n_iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if self.n_kept() == 0 {
            return Err(Error::Config("no draws would be kept after burn-in and thinning".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        let a = &self.adaptation;
        for (name, v) in [
            ("target_accept_scalar", a.target_accept_scalar),
            ("target_accept_block", a.target_accept_block),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1)")));
            }
        }
        if a.adaptation_window == 0 {
            return Err(Error::Config("adaptation window must be at least 1".into()));
        }
        Ok(())
    }
}
