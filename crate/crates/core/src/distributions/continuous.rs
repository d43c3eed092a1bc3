use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::special::{ln_beta, ln_multi_gamma};

use super::GDParams;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Generalized-Dirichlet log-density on the open simplex.
///
/// The leading tail-sum factor of the first stick is `1` on the simplex, so
/// the conventional `β₀` never enters. A zero coordinate contributes
/// `(e) · ln 0` for its exponent `e`: `−∞` when `e > 0`, nothing when `e = 0`,
/// `+∞` when `e < 0`.
pub fn log_pdf_generalized_dirichlet(p: &[f64], params: &GDParams) -> Result<f64> {
    let k = params.parts();
    if p.len() != k {
        return Err(Error::Domain(format!("point has {} parts, expected {k}", p.len())));
    }
    if p.iter().any(|v| *v < 0.0 || v.is_nan()) {
        return Err(Error::Domain("simplex coordinates must be non-negative".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("coordinates sum to {total}, not 1")));
    }
    let pow = |x: f64, e: f64| -> f64 {
        if x == 0.0 {
            if e > 0.0 {
                f64::NEG_INFINITY
            } else if e == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            e * x.ln()
        }
    };
    let (alpha, beta) = (params.alpha(), params.beta());
    let mut out = pow(p[k - 1], beta[k - 2] - 1.0);
    // tail = Σ_{j ≥ i} p_j
    let mut tail: f64 = 1.0;
    for i in 0..k - 1 {
        out += pow(p[i], alpha[i] - 1.0) - ln_beta(alpha[i], beta[i]);
        if i > 0 {
            out += pow(tail.max(0.0), beta[i - 1] - (alpha[i] + beta[i]));
        }
        tail -= p[i];
    }
    Ok(out)
}

/// Multivariate normal with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct MvnParams {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    ln_det: f64,
}

impl MvnParams {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::Domain("covariance shape does not match mean".into()));
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Domain("covariance is not symmetric".into()));
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
        let ln_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            mean,
            cov,
            chol,
            ln_det,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let r = x - &self.mean;
        self.log_pdf_residual(r.as_slice())
    }

    /// Log-density of `mean + residual`.
    pub fn log_pdf_residual(&self, r: &[f64]) -> f64 {
        let n = r.len();
        let l = self.chol.l_dirty();
        // forward substitution: L u = r, quadratic form = |u|²
        let mut u = vec![0.0; n];
        let mut quad = 0.0;
        for i in 0..n {
            let mut s = r[i];
            for j in 0..i {
                s -= l[(i, j)] * u[j];
            }
            u[i] = s / l[(i, i)];
            quad += u[i] * u[i];
        }
        -0.5 * (n as f64 * LN_2PI + self.ln_det + quad)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + self.chol.l() * z
    }
}

/// Inverse-Wishart with scale `Ψ` and `ν` degrees of freedom:
/// `p(X) ∝ |X|^{−(ν+p+1)/2} exp(−tr(Ψ X⁻¹)/2)`.
#[derive(Debug, Clone)]
pub struct InverseWishart {
    scale: DMatrix<f64>,
    df: f64,
    ln_norm: f64,
    scale_inv_chol: Cholesky<f64, Dyn>,
}

impl InverseWishart {
    pub fn new(scale: DMatrix<f64>, df: f64) -> Result<Self> {
        let p = scale.nrows();
        if scale.ncols() != p || p == 0 {
            return Err(Error::Config("inverse-Wishart scale must be square".into()));
        }
        if !(df > p as f64 - 1.0) {
            return Err(Error::Config(format!(
                "inverse-Wishart needs df > {}, got {df}",
                p - 1
            )));
        }
        let chol = Cholesky::new(scale.clone())
            .ok_or_else(|| Error::Config("inverse-Wishart scale is not positive definite".into()))?;
        let ln_det_scale = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let pf = p as f64;
        let ln_norm = 0.5 * df * ln_det_scale
            - 0.5 * df * pf * std::f64::consts::LN_2
            - ln_multi_gamma(p, 0.5 * df);
        let scale_inv = chol.inverse();
        let scale_inv_chol = Cholesky::new(scale_inv)
            .ok_or_else(|| Error::Config("inverse-Wishart scale is ill-conditioned".into()))?;
        Ok(Self {
            scale,
            df,
            ln_norm,
            scale_inv_chol,
        })
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn dim(&self) -> usize {
        self.scale.nrows()
    }

    /// `−∞` outside the positive-definite cone.
    pub fn ln_density(&self, x: &DMatrix<f64>) -> f64 {
        let p = self.dim() as f64;
        let Some(chol) = Cholesky::new(x.clone()) else {
            return f64::NEG_INFINITY;
        };
        let ln_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let x_inv = chol.inverse();
        let trace = (&self.scale * x_inv).trace();
        self.ln_norm - 0.5 * (self.df + p + 1.0) * ln_det - 0.5 * trace
    }

    /// Posterior after observing zero-mean residual rows with covariance `X`:
    /// `IW(Ψ + Σ r rᵀ, ν + n)`.
    pub fn posterior(&self, scatter: &DMatrix<f64>, n: usize) -> Result<Self> {
        Self::new(&self.scale + scatter, self.df + n as f64)
    }

    /// Draw via the Bartlett decomposition of the matching Wishart.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let p = self.dim();
        let mut a = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            let chi = ChiSquared::new(self.df - i as f64).expect("df validated");
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let la = self.scale_inv_chol.l() * a;
        let w = &la * la.transpose();
        let inv = Cholesky::new(w.clone())
            .map(|c| c.inverse())
            .or_else(|| w.try_inverse())
            .expect("Wishart draw is positive definite");
        // symmetrize against round-off
        (&inv + inv.transpose()) * 0.5
    }

    pub fn mean(&self) -> Option<DMatrix<f64>> {
        let p = self.dim() as f64;
        (self.df > p + 1.0).then(|| &self.scale / (self.df - p - 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::sample_generalized_dirichlet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Normal;

    #[test]
    fn uniform_beta_has_zero_log_density() {
        let p = GDParams::new(vec![1.0], vec![1.0]).unwrap();
        for &x in &[0.01, 0.3, 0.5, 0.99] {
            assert!(log_pdf_generalized_dirichlet(&[x, 1.0 - x], &p).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn chained_parameters_give_dirichlet() {
        // Dirichlet(a): α_i = a_i, β_i = Σ_{j>i} a_j
        let a = [1.5, 0.7, 2.2, 3.1];
        let alpha: Vec<f64> = a[..3].to_vec();
        let beta: Vec<f64> = (0..3).map(|i| a[i + 1..].iter().sum()).collect();
        let gd = GDParams::new(alpha, beta).unwrap();
        let x: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
        let ln_dir = statrs::function::gamma::ln_gamma(a.iter().sum())
            - a.iter().map(|v| statrs::function::gamma::ln_gamma(*v)).sum::<f64>()
            + a.iter().zip(&x).map(|(ai, xi)| (ai - 1.0) * xi.ln()).sum::<f64>();
        let v = log_pdf_generalized_dirichlet(&x, &gd).unwrap();
        assert!((v - ln_dir).abs() < 1e-10, "{v} vs {ln_dir}");
    }

    #[test]
    fn boundary_points() {
        let gd = GDParams::new(vec![2.0, 1.0], vec![1.5, 1.0]).unwrap();
        assert_eq!(
            log_pdf_generalized_dirichlet(&[0.0, 0.5, 0.5], &gd).unwrap(),
            f64::NEG_INFINITY
        );
        // exponent α₂ − 1 = 0: finite
        assert!(log_pdf_generalized_dirichlet(&[0.5, 0.0, 0.5], &gd)
            .unwrap()
            .is_finite());
        assert!(log_pdf_generalized_dirichlet(&[0.5, 0.6, 0.1], &gd).is_err());
    }

    #[test]
    fn stick_breaking_sampler_mean() {
        let gd = GDParams::new(vec![2.0, 3.0], vec![5.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_generalized_dirichlet(&gd, &mut rng)[0]).collect();
        let m = crate::stats::mean(&draws);
        let se = (crate::stats::variance(&draws) / n as f64).sqrt();
        assert!((m - 2.0 / 7.0).abs() < 3.0 * se, "{m}");
    }

    #[test]
    fn mvn_matches_independent_normals() {
        let mvn = MvnParams::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.25])),
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.3, -1.5]);
        let n1 = statrs_normal_ln(0.3, 1.0, 2.0) + statrs_normal_ln(-1.5, -2.0, 0.5);
        assert!((mvn.log_pdf(&x) - n1).abs() < 1e-12);
        assert!(MvnParams::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(MvnParams::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }

    fn statrs_normal_ln(x: f64, m: f64, s: f64) -> f64 {
        -0.5 * LN_2PI - s.ln() - 0.5 * ((x - m) / s).powi(2)
    }

    #[test]
    fn inverse_wishart_one_dimensional_is_inverse_gamma() {
        // IW_1(ψ, ν) = Inverse-Gamma(ν/2, ψ/2)
        let iw = InverseWishart::new(DMatrix::from_element(1, 1, 3.0), 5.0).unwrap();
        let x = 1.7f64;
        let (a, b) = (2.5f64, 1.5f64);
        let ig = a * b.ln() - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * x.ln() - b / x;
        assert!((iw.ln_density(&DMatrix::from_element(1, 1, x)) - ig).abs() < 1e-12);
    }

    #[test]
    fn inverse_wishart_integrates_to_one() {
        // Importance sampling with X = L Lᵀ, log-diagonal and off-diagonal of L
        // Gaussian; the proposal density follows from the Jacobian of the map
        // (u1, u2, l21) -> X, which is 4 l11³ l22².
        let iw = InverseWishart::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]), 4.0)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let nrm = Normal::new(0.0, 1.0).unwrap();
        let n = 400_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let (u1, u2, l21): (f64, f64, f64) = (nrm.sample(&mut rng), nrm.sample(&mut rng), nrm.sample(&mut rng));
            let (l11, l22) = (u1.exp(), u2.exp());
            let x = DMatrix::from_row_slice(2, 2, &[l11 * l11, l11 * l21, l11 * l21, l21 * l21 + l22 * l22]);
            let ln_q = -1.5 * LN_2PI - 0.5 * (u1 * u1 + u2 * u2 + l21 * l21)
                - (4.0f64.ln() + 3.0 * u1 + 2.0 * u2);
            acc += (iw.ln_density(&x) - ln_q).exp();
        }
        let integral = acc / n as f64;
        assert!((integral - 1.0).abs() < 0.05, "{integral}");
    }

    #[test]
    fn inverse_wishart_sample_mean() {
        let scale = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let iw = InverseWishart::new(scale, 8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 40_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            acc += iw.sample(&mut rng);
        }
        acc /= n as f64;
        let expect = iw.mean().unwrap();
        assert!((acc - &expect).amax() < 0.03 * expect.amax(), "{expect}");
    }

    #[test]
    fn bad_hyperparameters() {
        assert!(InverseWishart::new(DMatrix::identity(3, 3), 1.5).is_err());
        assert!(InverseWishart::new(-DMatrix::<f64>::identity(2, 2), 5.0).is_err());
        let iw = InverseWishart::new(DMatrix::identity(2, 2), 3.0).unwrap();
        assert_eq!(iw.ln_density(&-DMatrix::<f64>::identity(2, 2)), f64::NEG_INFINITY);
    }
}
