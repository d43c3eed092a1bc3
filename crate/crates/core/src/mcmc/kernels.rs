//! Adaptive random-walk Metropolis kernels.
//!
//! Each kernel splits a step into `propose` and `decide` so callers can
//! evaluate the log-target difference with their own caches. Adaptation
//! happens only when `decide`/`observe` are called with `adapt = true`; a
//! kernel's proposal never changes otherwise.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

const GAIN_EXPONENT: f64 = 0.6;
const MAX_LOG_STEP: f64 = 30.0;

#[inline]
fn gain(n: u64) -> f64 {
    (1.0 + n as f64).powf(-GAIN_EXPONENT)
}

#[inline]
fn accept_prob(delta: f64) -> f64 {
    if delta.is_nan() {
        0.0
    } else {
        delta.min(0.0).exp()
    }
}

/// Metropolis decision on a log-target difference; NaN rejects.
#[inline]
fn metropolis<R: Rng + ?Sized>(delta: f64, rng: &mut R) -> bool {
    if delta >= 0.0 {
        return true;
    }
    if !(delta > f64::NEG_INFINITY) {
        return false;
    }
    rng.random::<f64>().ln() < delta
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AcceptanceCounter {
    pub proposed: u64,
    pub accepted: u64,
}

impl AcceptanceCounter {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
    }
}

/// Gaussian random walk on one real coordinate.
#[derive(Debug, Clone)]
pub struct ScalarKernel {
    log_step: f64,
    target: f64,
    n_adapt: u64,
    pub counter: AcceptanceCounter,
}

impl ScalarKernel {
    pub fn new(step: f64, target: f64) -> Self {
        Self {
            log_step: step.ln(),
            target,
            n_adapt: 0,
            counter: AcceptanceCounter::default(),
        }
    }

    pub fn step(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        x + self.step() * rng.sample::<f64, _>(StandardNormal)
    }

    /// Accept/reject on `delta = ln p(x′) − ln p(x)`; Robbins–Monro step-size
    /// update toward the target rate when `adapt`.
    pub fn decide<R: Rng + ?Sized>(&mut self, delta: f64, rng: &mut R, adapt: bool) -> bool {
        let ok = metropolis(delta, rng);
        if adapt {
            self.log_step += gain(self.n_adapt) * (accept_prob(delta) - self.target);
            self.log_step = self.log_step.clamp(-MAX_LOG_STEP, MAX_LOG_STEP);
            self.n_adapt += 1;
        } else {
            self.counter.record(ok);
        }
        ok
    }
}

/// One scalar random-walk Metropolis step on `log_target`.
pub fn update_scalar_rw<R: Rng + ?Sized>(
    kernel: &mut ScalarKernel,
    x: &mut f64,
    log_target: impl Fn(f64) -> f64,
    rng: &mut R,
    adapt: bool,
) -> bool {
    let prop = kernel.propose(*x, rng);
    let delta = log_target(prop) - log_target(*x);
    let ok = kernel.decide(delta, rng, adapt);
    if ok {
        *x = prop;
    }
    ok
}

/// Joint Gaussian random walk on a vector with a learned proposal shape
/// (empirical covariance) and a global scale tuned toward the target rate.
#[derive(Debug, Clone)]
pub struct BlockKernel {
    dim: usize,
    target: f64,
    log_scale: f64,
    chol: DMatrix<f64>,
    window: usize,
    n_adapt: u64,
    n_obs: usize,
    mean: Vec<f64>,
    m2: DMatrix<f64>,
    since_refresh: usize,
    fallbacks: u64,
    noise: Vec<f64>,
    pub counter: AcceptanceCounter,
}

impl BlockKernel {
    /// `cov` is the proposal shape before the `2.38/√d` factor.
    pub fn new(cov: &DMatrix<f64>, target: f64, window: usize) -> Self {
        let dim = cov.nrows();
        let mut k = Self {
            dim,
            target,
            log_scale: (2.38 / (dim.max(1) as f64).sqrt()).ln(),
            chol: DMatrix::identity(dim, dim),
            window: window.max(1),
            n_adapt: 0,
            n_obs: 0,
            mean: vec![0.0; dim],
            m2: DMatrix::zeros(dim, dim),
            since_refresh: 0,
            fallbacks: 0,
            noise: vec![0.0; dim],
            counter: AcceptanceCounter::default(),
        };
        k.set_shape(cov);
        k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    /// Lower Cholesky factor of the proposal shape.
    pub fn shape_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Times a non-positive-definite shape was replaced by its diagonal.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    fn set_shape(&mut self, cov: &DMatrix<f64>) {
        if let Some(c) = Cholesky::new(cov.clone()) {
            self.chol = c.l();
            return;
        }
        self.fallbacks += 1;
        log::warn!("block proposal covariance is not positive definite; using its diagonal");
        let old = self.chol.clone();
        self.chol = DMatrix::from_fn(self.dim, self.dim, |i, j| {
            if i != j {
                0.0
            } else if cov[(i, i)] > 0.0 && cov[(i, i)].is_finite() {
                cov[(i, i)].sqrt()
            } else {
                old.row(i).norm().max(1e-3)
            }
        });
    }

    pub fn propose<R: Rng + ?Sized>(&mut self, x: &[f64], rng: &mut R, out: &mut Vec<f64>) {
        let s = self.scale();
        for z in self.noise.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        out.clear();
        for i in 0..self.dim {
            let mut v = 0.0;
            for j in 0..=i {
                v += self.chol[(i, j)] * self.noise[j];
            }
            out.push(x[i] + s * v);
        }
    }

    pub fn decide<R: Rng + ?Sized>(&mut self, delta: f64, rng: &mut R, adapt: bool) -> bool {
        let ok = metropolis(delta, rng);
        if adapt {
            self.log_scale += gain(self.n_adapt) * (accept_prob(delta) - self.target);
            self.log_scale = self.log_scale.clamp(-MAX_LOG_STEP, MAX_LOG_STEP);
            self.n_adapt += 1;
        } else {
            self.counter.record(ok);
        }
        ok
    }

    /// Feeds the current value into the empirical covariance during
    /// adaptation and refreshes the proposal shape every `window` updates.
    pub fn observe(&mut self, x: &[f64], adapt: bool) {
        if !adapt {
            return;
        }
        self.n_obs += 1;
        let n = self.n_obs as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / n;
        }
        for i in 0..self.dim {
            let di = delta[i];
            for j in 0..self.dim {
                self.m2[(i, j)] += di * (x[j] - self.mean[j]);
            }
        }
        self.since_refresh += 1;
        let min_obs = (2 * self.dim + 2).max(self.window);
        if self.since_refresh >= self.window && self.n_obs >= min_obs {
            self.since_refresh = 0;
            let mut cov = &self.m2 / (n - 1.0);
            cov = (&cov + cov.transpose()) * 0.5;
            let ridge = 1e-10 * (cov.trace() / self.dim as f64).max(1e-12);
            for i in 0..self.dim {
                cov[(i, i)] += ridge;
            }
            self.set_shape(&cov);
        }
    }

    /// Forgets the empirical covariance (the current shape is kept).
    pub fn reset_empirical(&mut self) {
        self.n_obs = 0;
        self.since_refresh = 0;
        self.mean.iter_mut().for_each(|m| *m = 0.0);
        self.m2.fill(0.0);
    }
}

/// One blocked random-walk Metropolis step on `log_target`.
pub fn update_block_rw<R: Rng + ?Sized>(
    kernel: &mut BlockKernel,
    x: &mut [f64],
    log_target: impl Fn(&[f64]) -> f64,
    rng: &mut R,
    adapt: bool,
) -> bool {
    let mut prop = Vec::with_capacity(x.len());
    kernel.propose(x, rng, &mut prop);
    let delta = log_target(&prop) - log_target(x);
    let ok = kernel.decide(delta, rng, adapt);
    if ok {
        x.copy_from_slice(&prop);
    }
    kernel.observe(x, adapt);
    ok
}

/// Symmetric integer random walk: step `round(w · N(0, 1))`.
#[derive(Debug, Clone)]
pub struct IntegerKernel {
    log_width: f64,
    target: f64,
    n_adapt: u64,
    pub counter: AcceptanceCounter,
}

const MIN_LOG_WIDTH: f64 = -0.7;

impl IntegerKernel {
    pub fn new(width: f64, target: f64) -> Self {
        Self {
            log_width: width.ln().max(MIN_LOG_WIDTH),
            target,
            n_adapt: 0,
            counter: AcceptanceCounter::default(),
        }
    }

    pub fn width(&self) -> f64 {
        self.log_width.exp()
    }

    /// Proposed value, or `None` when the step rounds to zero.
    pub fn propose<R: Rng + ?Sized>(&self, y: u64, rng: &mut R) -> Option<i64> {
        let step = (self.width() * rng.sample::<f64, _>(StandardNormal)).round() as i64;
        (step != 0).then(|| y as i64 + step)
    }

    pub fn decide<R: Rng + ?Sized>(&mut self, delta: f64, rng: &mut R, adapt: bool) -> bool {
        let ok = metropolis(delta, rng);
        self.after(accept_prob(delta), ok, adapt);
        ok
    }

    /// A zero step: the chain stays put, counted as an acceptance.
    pub fn stay(&mut self, adapt: bool) {
        self.after(1.0, true, adapt);
    }

    fn after(&mut self, prob: f64, ok: bool, adapt: bool) {
        if adapt {
            self.log_width += gain(self.n_adapt) * (prob - self.target);
            self.log_width = self.log_width.clamp(MIN_LOG_WIDTH, MAX_LOG_STEP);
            self.n_adapt += 1;
        } else {
            self.counter.record(ok);
        }
    }
}

/// One integer random-walk step on `log_target` over `y ≥ lower`.
pub fn update_integer_rw<R: Rng + ?Sized>(
    kernel: &mut IntegerKernel,
    y: &mut u64,
    lower: u64,
    log_target: impl Fn(u64) -> f64,
    rng: &mut R,
    adapt: bool,
) -> bool {
    let Some(prop) = kernel.propose(*y, rng) else {
        kernel.stay(adapt);
        return true;
    };
    let delta = if prop < lower as i64 {
        f64::NEG_INFINITY
    } else {
        log_target(prop as u64) - log_target(*y)
    };
    let ok = kernel.decide(delta, rng, adapt);
    if ok {
        *y = prop as u64;
    }
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::diagnostics::effective_sample_size;
    use crate::stats::{mean, variance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_kernel_calibrates_and_samples_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut k = ScalarKernel::new(10.0, 0.44);
        let target = |x: f64| -0.5 * x * x;
        let mut x = 3.0;
        for _ in 0..5000 {
            update_scalar_rw(&mut k, &mut x, target, &mut rng, true);
        }
        let frozen = k.step();
        let mut draws = Vec::with_capacity(40_000);
        for _ in 0..40_000 {
            update_scalar_rw(&mut k, &mut x, target, &mut rng, false);
            draws.push(x);
        }
        assert_eq!(k.step(), frozen);
        assert!((k.counter.rate() - 0.44).abs() < 0.05, "rate {}", k.counter.rate());
        let ess = effective_sample_size(&[draws.clone()]).value;
        let v = variance(&draws);
        // sd of the sample variance of a Normal is about √(2/ESS)
        let mcse = (2.0 / ess).sqrt();
        assert!((v - 1.0).abs() < 3.0 * mcse, "var {v} ± {mcse}");
        assert!(mean(&draws).abs() < 3.0 / ess.sqrt());
    }

    #[test]
    fn one_dimensional_block_matches_scalar_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut k = BlockKernel::new(&DMatrix::from_element(1, 1, 1.0), 0.44, 50);
        let target = |x: &[f64]| -0.5 * x[0] * x[0];
        let mut x = [0.0];
        for _ in 0..5000 {
            update_block_rw(&mut k, &mut x, target, &mut rng, true);
        }
        let mut draws = Vec::new();
        for _ in 0..40_000 {
            update_block_rw(&mut k, &mut x, target, &mut rng, false);
            draws.push(x[0]);
        }
        assert!((k.counter.rate() - 0.44).abs() < 0.05);
        let ess = effective_sample_size(&[draws.clone()]).value;
        assert!((variance(&draws) - 1.0).abs() < 3.0 * (2.0 / ess).sqrt());
    }

    #[test]
    fn block_kernel_learns_a_correlated_gaussian() {
        // x ~ N(m, C) with strong correlation
        let c = DMatrix::from_row_slice(3, 3, &[4.0, 1.5, 0.0, 1.5, 1.0, 0.3, 0.0, 0.3, 0.25]);
        let prec = c.clone().try_inverse().unwrap();
        let m = [1.0, -2.0, 0.5];
        let target = |x: &[f64]| {
            let r: Vec<f64> = x.iter().zip(&m).map(|(a, b)| a - b).collect();
            let mut q = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    q += r[i] * prec[(i, j)] * r[j];
                }
            }
            -0.5 * q
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut k = BlockKernel::new(&DMatrix::identity(3, 3), 0.234, 50);
        let mut x = [0.0; 3];
        for i in 0..20_000 {
            if i == 5000 {
                k.reset_empirical();
            }
            update_block_rw(&mut k, &mut x, target, &mut rng, true);
        }
        let mut draws = vec![Vec::new(); 3];
        for _ in 0..60_000 {
            update_block_rw(&mut k, &mut x, target, &mut rng, false);
            for i in 0..3 {
                draws[i].push(x[i]);
            }
        }
        assert!((k.counter.rate() - 0.234).abs() < 0.05, "rate {}", k.counter.rate());
        for i in 0..3 {
            let ess = effective_sample_size(&[draws[i].clone()]).value;
            let mcse = (c[(i, i)] / ess).sqrt();
            assert!((mean(&draws[i]) - m[i]).abs() < 4.0 * mcse);
        }
    }

    #[test]
    fn non_positive_definite_shape_falls_back_to_diagonal() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let k = BlockKernel::new(&bad, 0.234, 10);
        assert_eq!(k.fallbacks(), 1);
        assert_eq!(k.shape_factor()[(1, 0)], 0.0);
        assert_eq!(k.shape_factor()[(0, 0)], 1.0);
    }

    #[test]
    fn integer_walk_never_goes_below_the_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut k = IntegerKernel::new(6.0, 0.44);
        let mut y = 10u64;
        // flat target: every proposal at or above the bound is accepted
        for _ in 0..10_000 {
            update_integer_rw(&mut k, &mut y, 8, |_| 0.0, &mut rng, false);
            assert!(y >= 8);
        }
    }

    #[test]
    fn integer_walk_recovers_a_poisson() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut k = IntegerKernel::new(1.0, 0.44);
        let lam: f64 = 30.0;
        let target = |y: u64| y as f64 * lam.ln() - crate::special::ln_factorial(y);
        let mut y = 0u64;
        for _ in 0..5000 {
            update_integer_rw(&mut k, &mut y, 0, target, &mut rng, true);
        }
        let mut draws = Vec::new();
        for _ in 0..50_000 {
            update_integer_rw(&mut k, &mut y, 0, target, &mut rng, false);
            draws.push(y as f64);
        }
        let ess = effective_sample_size(&[draws.clone()]).value;
        assert!((mean(&draws) - lam).abs() < 3.0 * (lam / ess).sqrt());
    }
}
