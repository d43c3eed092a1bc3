//! Convergence diagnostics: Brooks–Gelman MPSRF and initial-monotone ESS.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mpsrf {
    pub value: f64,
    pub chains: usize,
    pub draws: usize,
    pub dim: usize,
    /// Set when the within-chain covariance was singular and ridge-regularized.
    pub ridge: bool,
}

impl Mpsrf {
    /// Convergence gate: `MPSRF < 1.05`.
    pub fn converged(&self) -> bool {
        self.value < MPSRF_THRESHOLD
    }
}

pub const MPSRF_THRESHOLD: f64 = 1.05;

/// `chains[j][t][p]`: chain `j`, draw `t`, parameter `p`.
///
/// `MPSRF = (n−1)/n + (m+1)/m · λ_max(W⁻¹ B/n)` with `W` the pooled
/// within-chain covariance and `B/n` the covariance of the chain means.
pub fn mpsrf(chains: &[Vec<Vec<f64>>]) -> Result<Mpsrf> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::InsufficientData("MPSRF needs at least two chains".into()));
    }
    let n = chains[0].len();
    if n < 10 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::InsufficientData(
            "MPSRF needs at least 10 draws per chain, equally many in every chain".into(),
        ));
    }
    let p = chains[0][0].len();
    if p == 0 || chains.iter().flatten().any(|d| d.len() != p) {
        return Err(Error::InsufficientData("MPSRF needs a non-empty, rectangular subset".into()));
    }
    if p > n {
        return Err(Error::InsufficientData(format!(
            "subset dimension {p} exceeds the {n} draws per chain"
        )));
    }

    let means: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            let mut mu = vec![0.0; p];
            for d in c {
                for (a, v) in mu.iter_mut().zip(d) {
                    *a += v;
                }
            }
            mu.iter_mut().for_each(|a| *a /= n as f64);
            mu
        })
        .collect();
    let mut w = DMatrix::<f64>::zeros(p, p);
    for (c, mu) in chains.iter().zip(&means) {
        for d in c {
            for i in 0..p {
                let di = d[i] - mu[i];
                for k in 0..=i {
                    w[(i, k)] += di * (d[k] - mu[k]);
                }
            }
        }
    }
    w /= (m * (n - 1)) as f64;
    let mut grand = vec![0.0; p];
    for mu in &means {
        for (g, v) in grand.iter_mut().zip(mu) {
            *g += v / m as f64;
        }
    }
    let mut b = DMatrix::<f64>::zeros(p, p);
    for mu in &means {
        for i in 0..p {
            for k in 0..=i {
                b[(i, k)] += (mu[i] - grand[i]) * (mu[k] - grand[k]);
            }
        }
    }
    b /= (m - 1) as f64;
    for i in 0..p {
        for k in 0..i {
            w[(k, i)] = w[(i, k)];
            b[(k, i)] = b[(i, k)];
        }
    }

    // a pivot tiny relative to its variance means W is numerically singular
    let well_posed = |c: &Cholesky<f64, nalgebra::Dyn>, w: &DMatrix<f64>| {
        let l = c.l_dirty();
        (0..p).all(|i| l[(i, i)] * l[(i, i)] > 1e-10 * w[(i, i)])
    };
    let mut ridge = false;
    let mut chol = Cholesky::new(w.clone()).filter(|c| well_posed(c, &w));
    let mut eps = 1e-8;
    while chol.is_none() {
        ridge = true;
        let scale = (w.trace() / p as f64).abs().max(1e-300);
        let mut wr = w.clone();
        for i in 0..p {
            wr[(i, i)] += eps * scale;
        }
        chol = Cholesky::new(wr);
        eps *= 10.0;
        if eps > 1.0 {
            return Err(Error::Numerical("within-chain covariance cannot be regularized".into()));
        }
    }
    if ridge {
        log::info!("within-chain covariance is singular; MPSRF uses a ridge-regularized W");
    }
    let l = chol.unwrap().l();
    // L⁻¹ B L⁻ᵀ has the eigenvalues of W⁻¹ B
    let li = l
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let sym = &li * &b * li.transpose();
    let sym = (&sym + sym.transpose()) * 0.5;
    let lambda = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let nf = n as f64;
    let mf = m as f64;
    Ok(Mpsrf {
        value: (nf - 1.0) / nf + (mf + 1.0) / mf * lambda,
        chains: m,
        draws: n,
        dim: p,
        ridge,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ess {
    pub value: f64,
    /// No variation within any chain.
    pub degenerate: bool,
}

/// Initial-monotone-positive-sequence ESS per chain, summed over chains.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Ess {
    let mut total = 0.0;
    let mut any_var = false;
    for c in chains {
        let n = c.len();
        if n < 4 {
            total += n as f64;
            continue;
        }
        let mu = c.iter().sum::<f64>() / n as f64;
        let x: Vec<f64> = c.iter().map(|v| v - mu).collect();
        let g0 = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if !(g0 > 0.0) {
            continue;
        }
        any_var = true;
        let acov = |lag: usize| -> f64 {
            x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
        };
        let mut sum_pairs = 0.0;
        let mut prev = f64::INFINITY;
        let mut k = 0;
        while 2 * k + 1 < n {
            let pair = (if k == 0 { g0 } else { acov(2 * k) } + acov(2 * k + 1)) / g0;
            if pair <= 0.0 {
                break;
            }
            let pair = pair.min(prev);
            sum_pairs += pair;
            prev = pair;
            k += 1;
        }
        let tau = (2.0 * sum_pairs - 1.0).max(1.0 / (n as f64).log10().max(1.0));
        total += n as f64 / tau;
    }
    if !any_var {
        return Ess {
            value: 0.0,
            degenerate: true,
        };
    }
    Ess {
        value: total,
        degenerate: false,
    }
}

/// Potential scale reduction of a single parameter (the 1-D MPSRF).
pub fn psrf(chains: &[Vec<f64>]) -> Result<f64> {
    let wrapped: Vec<Vec<Vec<f64>>> = chains
        .iter()
        .map(|c| c.iter().map(|v| vec![*v]).collect())
        .collect();
    Ok(mpsrf(&wrapped)?.value)
}

/// Monte-Carlo standard error of the mean, pooled over chains.
pub fn mcse_mean(chains: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = chains.iter().flatten().cloned().collect();
    let ess = effective_sample_size(chains);
    if ess.degenerate {
        return 0.0;
    }
    (crate::stats::variance(&all) / ess.value).sqrt()
}
