use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, Gamma, Poisson};

use super::{GDParams, NegBinParams};

/// Negative-Binomial draw as a Gamma-Poisson mixture.
pub fn sample_neg_binomial<R: Rng + ?Sized>(p: &NegBinParams, rng: &mut R) -> u64 {
    neg_binomial_draw(p.mean, p.dispersion, rng)
}

/// `θ = ∞` gives a Poisson draw.
pub(crate) fn neg_binomial_draw<R: Rng + ?Sized>(mean: f64, theta: f64, rng: &mut R) -> u64 {
    let rate = if theta.is_infinite() {
        mean
    } else {
        Gamma::new(theta, mean / theta)
            .expect("positive gamma parameters")
            .sample(rng)
    };
    poisson_draw(rate, rng)
}

pub(crate) fn poisson_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if !(rate > 0.0) {
        return 0;
    }
    Poisson::new(rate).expect("finite poisson rate").sample(rng) as u64
}

pub(crate) fn binomial_draw<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

pub fn sample_beta_binomial<R: Rng + ?Sized>(alpha: f64, beta: f64, n: u64, rng: &mut R) -> u64 {
    if n == 0 {
        return 0;
    }
    let p: f64 = Beta::new(alpha, beta).expect("positive beta parameters").sample(rng);
    binomial_draw(n, p, rng)
}

/// Sequential conditional Beta-Binomial draws; the last part takes the rest.
pub fn sample_gdm<R: Rng + ?Sized>(params: &GDParams, y: u64, rng: &mut R) -> Vec<u64> {
    let mut out = Vec::with_capacity(params.parts());
    let mut remaining = y;
    for (&a, &b) in params.alpha.iter().zip(&params.beta) {
        let z = sample_beta_binomial(a, b, remaining, rng);
        out.push(z);
        remaining -= z;
    }
    out.push(remaining);
    out
}

/// Multinomial with stick-breaking probabilities via conditional Binomials.
pub fn sample_stick_multinomial<R: Rng + ?Sized>(nu: &[f64], y: u64, rng: &mut R) -> Vec<u64> {
    let mut out = Vec::with_capacity(nu.len() + 1);
    let mut remaining = y;
    for &v in nu {
        let z = binomial_draw(remaining, v, rng);
        out.push(z);
        remaining -= z;
    }
    out.push(remaining);
    out
}

/// Generalized-Dirichlet draw by Beta stick-breaking.
pub fn sample_generalized_dirichlet<R: Rng + ?Sized>(params: &GDParams, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.parts());
    let mut left = 1.0;
    for (&a, &b) in params.alpha.iter().zip(&params.beta) {
        let v: f64 = Beta::new(a, b).expect("positive beta parameters").sample(rng);
        out.push(v * left);
        left *= 1.0 - v;
    }
    out.push(left);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{log_pmf_gdm, log_pmf_stick_multinomial};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    #[test]
    fn gdm_empirical_pmf_matches_closed_form() {
        let gd = GDParams::new(vec![1.3, 0.8], vec![2.1, 1.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let mut counts: HashMap<Vec<u64>, u64> = HashMap::new();
        for _ in 0..n {
            *counts.entry(sample_gdm(&gd, 4, &mut rng)).or_default() += 1;
        }
        let mut total_p = 0.0;
        for z1 in 0..=4u64 {
            for z2 in 0..=4 - z1 {
                let z = vec![z1, z2, 4 - z1 - z2];
                let p = log_pmf_gdm(&z, &gd, 4).unwrap().exp();
                total_p += p;
                let phat = *counts.get(&z).unwrap_or(&0) as f64 / n as f64;
                let mcse = (p * (1.0 - p) / n as f64).sqrt();
                assert!((phat - p).abs() < 4.0 * mcse, "{z:?}: {phat} vs {p}");
            }
        }
        assert!((total_p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn huge_dispersion_draws_are_multinomial() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let nu = [0.35, 0.5];
        let phi = 1e9;
        let gd = GDParams::new(
            nu.iter().map(|v| v * phi).collect(),
            nu.iter().map(|v| (1.0 - v) * phi).collect(),
        )
        .unwrap();
        let y = 5u64;
        let n = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut counts: HashMap<Vec<u64>, f64> = HashMap::new();
        for _ in 0..n {
            *counts.entry(sample_gdm(&gd, y, &mut rng)).or_default() += 1.0;
        }
        let mut stat = 0.0;
        let mut cells = 0;
        for z1 in 0..=y {
            for z2 in 0..=y - z1 {
                let z = vec![z1, z2, y - z1 - z2];
                let e = log_pmf_stick_multinomial(&z, &nu, y).unwrap().exp() * n as f64;
                let o = counts.get(&z).copied().unwrap_or(0.0);
                stat += (o - e).powi(2) / e;
                cells += 1;
            }
        }
        let crit = ChiSquared::new((cells - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "chi-square {stat} >= {crit}");
    }

    #[test]
    fn neg_binomial_moments() {
        let p = NegBinParams::new(7.5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_neg_binomial(&p, &mut rng) as f64).collect();
        let m = crate::stats::mean(&xs);
        let v = crate::stats::variance(&xs);
        assert!((m - p.mean).abs() < 3.0 * (p.variance() / n as f64).sqrt(), "{m}");
        // variance of the sample variance via the fourth central moment
        let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
        let se_v = ((m4 - v * v) / n as f64).sqrt();
        assert!((v - p.variance()).abs() < 3.0 * se_v, "{v}");
    }

    #[test]
    fn zero_total_and_infinite_dispersion() {
        let gd = GDParams::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_gdm(&gd, 0, &mut rng), vec![0, 0, 0]);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| neg_binomial_draw(3.0, f64::INFINITY, &mut rng) as f64)
            .collect();
        assert!((crate::stats::variance(&xs) - 3.0).abs() < 0.1);
    }

    #[test]
    fn samplers_are_deterministic() {
        let gd = GDParams::new(vec![2.0], vec![3.0]).unwrap();
        let a: Vec<_> = {
            let mut r = ChaCha8Rng::seed_from_u64(11);
            (0..50).map(|_| sample_gdm(&gd, 30, &mut r)).collect()
        };
        let b: Vec<_> = {
            let mut r = ChaCha8Rng::seed_from_u64(11);
            (0..50).map(|_| sample_gdm(&gd, 30, &mut r)).collect()
        };
        assert_eq!(a, b);
    }
}
