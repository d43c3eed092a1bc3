use crate::error::{Error, Result};
use crate::special::{ln_beta, ln_choose, ln_factorial, ln_gamma, ln_gamma_ratio, xlogy};

use super::{GDParams, NegBinParams};

/// `ln [ C(n,z) B(z+α, n−z+β) / B(α,β) ]`.
pub fn log_pmf_beta_binomial(z: i64, alpha: f64, beta: f64, n: u64) -> Result<f64> {
    if z < 0 || z as u64 > n {
        return Err(Error::Domain(format!("beta-binomial outcome {z} outside 0..={n}")));
    }
    Ok(beta_binomial_unchecked(z as u64, alpha, beta, n))
}

#[inline]
pub(crate) fn beta_binomial_unchecked(z: u64, alpha: f64, beta: f64, n: u64) -> f64 {
    ln_choose(n, z) + ln_gamma_ratio(alpha, z as f64) + ln_gamma_ratio(beta, (n - z) as f64)
        - ln_gamma_ratio(alpha + beta, n as f64)
}

/// Generalized-Dirichlet-Multinomial mass function in closed form.
pub fn log_pmf_gdm(z: &[u64], params: &GDParams, y: u64) -> Result<f64> {
    check_composition(z, params, y)?;
    let k = z.len();
    let mut tail: u64 = y;
    let mut out = ln_gamma(y as f64 + 1.0) - ln_gamma(z[k - 1] as f64 + 1.0);
    for i in 0..k - 1 {
        let (a, b) = (params.alpha[i], params.beta[i]);
        let after = tail - z[i];
        out += ln_gamma(z[i] as f64 + a) + ln_gamma(after as f64 + b)
            - ln_beta(a, b)
            - ln_gamma(z[i] as f64 + 1.0)
            - ln_gamma(a + b + tail as f64);
        tail = after;
    }
    Ok(out)
}

/// The same mass function as a chain of conditional Beta-Binomials with
/// `n_i = y − Σ_{j<i} z_j`.
pub fn log_pmf_gdm_conditional(z: &[u64], params: &GDParams, y: u64) -> Result<f64> {
    check_composition(z, params, y)?;
    let mut remaining = y;
    let mut out = 0.0;
    for (i, &zi) in z[..z.len() - 1].iter().enumerate() {
        out += beta_binomial_unchecked(zi, params.alpha[i], params.beta[i], remaining);
        remaining -= zi;
    }
    Ok(out)
}

fn check_composition(z: &[u64], params: &GDParams, y: u64) -> Result<()> {
    if z.len() != params.parts() {
        return Err(Error::Domain(format!(
            "composition has {} parts, parameters describe {}",
            z.len(),
            params.parts()
        )));
    }
    let sum: u64 = z.iter().sum();
    if sum != y {
        return Err(Error::Domain(format!("composition sums to {sum}, expected {y}")));
    }
    Ok(())
}

/// Cell probabilities of the stick-breaking Multinomial:
/// `p_d = ν_d ∏_{i<d} (1 − ν_i)`, remainder last.
pub fn stick_breaking_probabilities(nu: &[f64]) -> Vec<f64> {
    let mut left = 1.0;
    let mut p = Vec::with_capacity(nu.len() + 1);
    for &v in nu {
        p.push(v * left);
        left *= 1.0 - v;
    }
    p.push(left);
    p
}

/// Multinomial with stick-breaking probabilities, evaluated as a chain of
/// conditional Binomials (the `φ → ∞` limit of the GDM).
pub fn log_pmf_stick_multinomial(z: &[u64], nu: &[f64], y: u64) -> Result<f64> {
    if z.len() != nu.len() + 1 {
        return Err(Error::Domain("composition length must be len(nu) + 1".into()));
    }
    if z.iter().sum::<u64>() != y {
        return Err(Error::Domain("composition does not sum to total".into()));
    }
    let mut remaining = y;
    let mut out = 0.0;
    for (&zi, &v) in z.iter().zip(nu) {
        out += binomial_unchecked(zi, remaining, v);
        remaining -= zi;
    }
    Ok(out)
}

/// Negative-Binomial log-pmf in mean/dispersion form.
pub fn log_pmf_neg_binomial(y: u64, p: &NegBinParams) -> f64 {
    neg_binomial_ln(y, p.mean.ln(), p.dispersion)
}

/// NB log-pmf from the log-mean; shared with the likelihood hot loops.
#[inline]
pub(crate) fn neg_binomial_ln(y: u64, log_mean: f64, theta: f64) -> f64 {
    neg_binomial_const(y, theta) + neg_binomial_kernel(y, log_mean, theta)
}

/// Part of the NB log-pmf that does not depend on the mean.
#[inline]
pub(crate) fn neg_binomial_const(y: u64, theta: f64) -> f64 {
    ln_gamma_ratio(theta, y as f64) - ln_factorial(y)
}

/// Mean-dependent part of the NB log-pmf.
#[inline]
pub(crate) fn neg_binomial_kernel(y: u64, log_mean: f64, theta: f64) -> f64 {
    let mean = log_mean.exp();
    // θ ln(θ/(θ+λ)) = −θ ln(1 + λ/θ); y ln(λ/(θ+λ)) = y (ln λ − ln(θ+λ))
    -theta * (mean / theta).ln_1p() + xlogy_lm(y as f64, log_mean - (theta + mean).ln())
}

#[inline]
fn xlogy_lm(y: f64, log_ratio: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        y * log_ratio
    }
}

/// Poisson log-pmf from the log-mean (the `θ → ∞` limit).
#[cfg(test)]
fn poisson_ln(y: u64, log_mean: f64) -> f64 {
    poisson_kernel(y, log_mean) - ln_factorial(y)
}

#[inline]
pub(crate) fn poisson_kernel(y: u64, log_mean: f64) -> f64 {
    xlogy_lm(y as f64, log_mean) - log_mean.exp()
}

/// Binomial log-pmf.
pub fn log_pmf_binomial(y: u64, n: u64, pi: f64) -> Result<f64> {
    if y > n {
        return Err(Error::Domain(format!("binomial outcome {y} exceeds {n} trials")));
    }
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::Domain(format!("probability {pi} outside [0, 1]")));
    }
    Ok(binomial_unchecked(y, n, pi))
}

#[inline]
pub(crate) fn binomial_unchecked(y: u64, n: u64, pi: f64) -> f64 {
    ln_choose(n, y) + xlogy(y as f64, pi) + xlogy((n - y) as f64, 1.0 - pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn compositions(y: u64, k: usize) -> Vec<Vec<u64>> {
        if k == 1 {
            return vec![vec![y]];
        }
        let mut out = Vec::new();
        for first in 0..=y {
            for mut rest in compositions(y - first, k - 1) {
                rest.insert(0, first);
                out.push(rest);
            }
        }
        out
    }

    #[test]
    fn uniform_beta_binomial() {
        let v = log_pmf_beta_binomial(1, 1.0, 1.0, 2).unwrap();
        assert!((v - (1.0f64 / 3.0).ln()).abs() < 1e-14);
        assert!(log_pmf_beta_binomial(3, 1.0, 1.0, 2).is_err());
        assert!(log_pmf_beta_binomial(-1, 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn beta_binomial_large_dispersion_is_binomial() {
        // the exact log gap is O(z²/φ), so log-scale agreement is checked on
        // small n and probability-scale agreement on larger n
        let phi = 1e9;
        for &nu in &[0.1, 0.5, 0.83] {
            for n in [0u64, 1, 7, 20, 40] {
                for z in 0..=n {
                    let bb = log_pmf_beta_binomial(z as i64, nu * phi, (1.0 - nu) * phi, n).unwrap();
                    let bin = log_pmf_binomial(z, n, nu).unwrap();
                    if n <= 7 {
                        assert!((bb - bin).abs() < 1e-6, "nu={nu} n={n} z={z}: {bb} vs {bin}");
                    }
                    assert!((bb.exp() - bin.exp()).abs() < 1e-7, "nu={nu} n={n} z={z}");
                }
            }
        }
    }

    #[test]
    fn beta_binomial_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a = rng.random_range(0.05..50.0);
            let b = rng.random_range(0.05..50.0);
            let n = rng.random_range(0..=30u64);
            let s: f64 = (0..=n)
                .map(|z| log_pmf_beta_binomial(z as i64, a, b, n).unwrap().exp())
                .sum();
            assert!((s - 1.0).abs() < 1e-12, "{a} {b} {n}: {s}");
        }
    }

    #[test]
    fn gdm_two_parts_is_beta_binomial() {
        let p = GDParams::new(vec![2.5], vec![0.7]).unwrap();
        for z in 0..=9u64 {
            let g = log_pmf_gdm(&[z, 9 - z], &p, 9).unwrap();
            let bb = log_pmf_beta_binomial(z as i64, 2.5, 0.7, 9).unwrap();
            assert!((g - bb).abs() < 1e-12);
        }
    }

    #[test]
    fn gdm_enumeration_sums_to_one() {
        let p = GDParams::new(vec![1.3, 0.4], vec![2.0, 5.5]).unwrap();
        let comps = compositions(3, 3);
        assert_eq!(comps.len(), 10);
        let s: f64 = comps.iter().map(|z| log_pmf_gdm(z, &p, 3).unwrap().exp()).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gdm_closed_form_matches_conditional_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let k = rng.random_range(2..=6usize);
            let alpha: Vec<f64> = (0..k - 1).map(|_| rng.random_range(0.1..30.0)).collect();
            let beta: Vec<f64> = (0..k - 1).map(|_| rng.random_range(0.1..30.0)).collect();
            let p = GDParams::new(alpha, beta).unwrap();
            let y = rng.random_range(0..=50u64);
            let mut z = vec![0u64; k];
            for _ in 0..y {
                z[rng.random_range(0..k)] += 1;
            }
            let a = log_pmf_gdm(&z, &p, y).unwrap();
            let b = log_pmf_gdm_conditional(&z, &p, y).unwrap();
            assert!((a - b).abs() < 1e-10, "{z:?}: {a} vs {b}");
        }
    }

    #[test]
    fn gdm_rejects_bad_compositions() {
        let p = GDParams::new(vec![1.0], vec![1.0]).unwrap();
        assert!(log_pmf_gdm(&[1, 1], &p, 3).is_err());
        assert!(log_pmf_gdm_conditional(&[1, 1, 1], &p, 3).is_err());
    }

    #[test]
    fn neg_binomial_closed_forms() {
        let half = log_pmf_neg_binomial(0, &NegBinParams::new(1.0, 1.0).unwrap());
        assert!((half - 0.5f64.ln()).abs() < 1e-14);
        let poisson = log_pmf_neg_binomial(0, &NegBinParams::new(1.0, 1e8).unwrap());
        assert!((poisson + 1.0).abs() < 1e-6);
        // matches the textbook formula
        let (y, l, t) = (7u64, 3.2, 1.7);
        let direct = statrs::function::gamma::ln_gamma(y as f64 + t)
            - statrs::function::gamma::ln_gamma(t)
            - statrs::function::gamma::ln_gamma(y as f64 + 1.0)
            + t * (t / (t + l)).ln()
            + y as f64 * (l / (t + l)).ln();
        let v = log_pmf_neg_binomial(y, &NegBinParams::new(l, t).unwrap());
        assert!((v - direct).abs() < 1e-12);
    }

    #[test]
    fn neg_binomial_normalizes_and_approaches_poisson() {
        let p = NegBinParams::new(4.0, 2.5).unwrap();
        let s: f64 = (0..400).map(|y| log_pmf_neg_binomial(y, &p).exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
        for y in 0..30 {
            let nb = log_pmf_neg_binomial(y, &NegBinParams::new(6.0, 1e10).unwrap());
            assert!((nb - poisson_ln(y, 6f64.ln())).abs() < 1e-7);
        }
    }

    #[test]
    fn binomial_cases() {
        assert_eq!(log_pmf_binomial(5, 5, 1.0).unwrap(), 0.0);
        assert!((log_pmf_binomial(1, 2, 0.5).unwrap() - 0.5f64.ln()).abs() < 1e-14);
        assert!(log_pmf_binomial(3, 2, 0.5).is_err());
        assert_eq!(log_pmf_binomial(2, 3, 1.0).unwrap(), f64::NEG_INFINITY);
        for n in 0..=30 {
            let s: f64 = (0..=n).map(|y| log_pmf_binomial(y, n, 0.37).unwrap().exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stick_multinomial_matches_multinomial_formula() {
        let nu = [0.3, 0.5];
        let p = stick_breaking_probabilities(&nu);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let z = [2u64, 3, 1];
        let direct = ln_factorial(6) - z.iter().map(|&v| ln_factorial(v)).sum::<f64>()
            + z.iter().zip(&p).map(|(&c, q)| c as f64 * q.ln()).sum::<f64>();
        let v = log_pmf_stick_multinomial(&z, &nu, 6).unwrap();
        assert!((v - direct).abs() < 1e-12);
    }
}
