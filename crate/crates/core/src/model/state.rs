use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::{ModelContext, Variant};

/// Every unknown of a model. Vectors that a variant does not use are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub iota: f64,
    pub alpha: Vec<f64>,
    pub sigma_alpha: f64,
    pub eta: Vec<f64>,
    pub sigma_eta: f64,
    /// `ψ_d`: `D` entries for GDM, `D + 1` for GLM/GLM+.
    pub psi: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub sigma_beta: Vec<f64>,
    /// Scalar `θ` for GDM, `θ_d` for GLM/GLM+.
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// Time-varying log-dispersion coefficients per delay.
    pub kappa: Vec<Vec<f64>>,
    pub sigma_kappa: Vec<f64>,
    /// Reporting-rate intercept on the logit scale.
    pub rho: f64,
    pub pi_coefs: Vec<f64>,
    pub sigma_pi: f64,
    /// GLM+ latent `ln μ_t` rows, one per data row.
    pub logmu: Vec<Vec<f64>>,
    pub cov: Option<DMatrix<f64>>,
    /// Totals per data row; fixed at the observed value on complete rows.
    pub latent_y: Vec<u64>,
    /// True counts per data row (GDM-UR).
    pub latent_x: Vec<u64>,
}

/// Names of the continuous blocks in storage order.
pub const BLOCK_NAMES: [&str; 7] = [
    "total",
    "delay",
    "dispersion",
    "smoothing",
    "reporting",
    "covariance",
    "logmu",
];

impl ParameterState {
    /// All coefficients zero, dispersions and smoothing sds one, latent
    /// counts at their lower bounds.
    pub fn zeros(ctx: &ModelContext) -> Self {
        let spec = ctx.spec();
        let d = spec.delay_horizon;
        let gdm = spec.variant.is_gdm();
        let n_eff = spec.n_delay_effects();
        let has_delay = ctx.delay().is_some();
        let has_disp = ctx.dispersion().is_some();
        let latent_y: Vec<u64> = if gdm {
            ctx.rows().iter().map(|r| r.prefix_sum()).collect()
        } else {
            Vec::new()
        };
        Self {
            iota: 0.0,
            alpha: vec![0.0; ctx.trend_dim()],
            sigma_alpha: 1.0,
            eta: vec![0.0; ctx.seasonal_dim()],
            sigma_eta: 1.0,
            psi: vec![0.0; n_eff],
            beta: vec![vec![0.0; ctx.delay_dim()]; if has_delay { n_eff } else { 0 }],
            sigma_beta: vec![1.0; if has_delay { n_eff } else { 0 }],
            theta: vec![1.0; spec.n_theta()],
            phi: vec![1.0; if gdm { d } else { 0 }],
            kappa: vec![vec![0.0; ctx.dispersion_dim()]; if has_disp { d } else { 0 }],
            sigma_kappa: vec![1.0; if has_disp { d } else { 0 }],
            rho: 0.0,
            pi_coefs: vec![0.0; ctx.reporting_dim()],
            sigma_pi: 1.0,
            logmu: if spec.variant == Variant::GlmPlus {
                vec![vec![0.0; d + 1]; ctx.n_rows()]
            } else {
                Vec::new()
            },
            cov: (spec.variant == Variant::GlmPlus).then(|| DMatrix::identity(d + 1, d + 1)),
            latent_x: if spec.variant == Variant::GdmUr { latent_y.clone() } else { Vec::new() },
            latent_y,
        }
    }

    /// Column labels of each continuous block (see [`BLOCK_NAMES`]).
    pub fn block_labels(ctx: &ModelContext) -> Vec<Vec<String>> {
        let spec = ctx.spec();
        let gdm = spec.variant.is_gdm();
        let n_eff = spec.n_delay_effects();
        let mut total = vec!["iota".to_string()];
        total.extend((1..=ctx.trend_dim()).map(|j| format!("alpha[{j}]")));
        total.extend((1..=ctx.seasonal_dim()).map(|j| format!("eta[{j}]")));

        let mut delay = Vec::new();
        for d in 1..=n_eff {
            delay.push(format!("psi[{d}]"));
            delay.extend((1..=ctx.delay_dim()).map(|j| format!("beta[{d},{j}]")));
        }

        let mut disp = Vec::new();
        if gdm {
            disp.push("theta".to_string());
            for d in 1..=spec.delay_horizon {
                disp.push(format!("phi[{d}]"));
                disp.extend((1..=ctx.dispersion_dim()).map(|j| format!("kappa[{d},{j}]")));
            }
        } else {
            disp.extend((1..=n_eff).map(|d| format!("theta[{d}]")));
        }

        let mut smooth = Vec::new();
        if ctx.trend().is_some() {
            smooth.push("sigma_alpha".to_string());
        }
        if ctx.seasonal().is_some() {
            smooth.push("sigma_eta".to_string());
        }
        if ctx.delay().is_some() {
            smooth.extend((1..=n_eff).map(|d| format!("sigma_beta[{d}]")));
        }
        if ctx.dispersion().is_some() {
            smooth.extend((1..=spec.delay_horizon).map(|d| format!("sigma_kappa[{d}]")));
        }
        if ctx.reporting().is_some() {
            smooth.push("sigma_pi".to_string());
        }

        let mut reporting = Vec::new();
        if spec.variant == Variant::GdmUr {
            reporting.push("rho".to_string());
            reporting.extend((1..=ctx.reporting_dim()).map(|j| format!("pi_coef[{j}]")));
        }

        let mut cov = Vec::new();
        let mut logmu = Vec::new();
        if spec.variant == Variant::GlmPlus {
            let k = spec.delay_horizon + 1;
            for i in 1..=k {
                for j in i..=k {
                    cov.push(format!("Sigma[{i},{j}]"));
                }
            }
            for r in ctx.incomplete_rows() {
                logmu.extend((1..=k).map(|d| format!("logmu[{},{d}]", r.t)));
            }
        }
        vec![total, delay, disp, smooth, reporting, cov, logmu]
    }

    /// Latent integer blocks: (`latent_y` on incomplete rows, `latent_x` on
    /// all rows).
    pub fn latent_labels(ctx: &ModelContext) -> (Vec<String>, Vec<String>) {
        let ys = if ctx.variant().is_gdm() {
            ctx.incomplete_rows().map(|r| format!("y[{}]", r.t)).collect()
        } else {
            Vec::new()
        };
        let xs = if ctx.variant() == Variant::GdmUr {
            ctx.rows().iter().map(|r| format!("x[{}]", r.t)).collect()
        } else {
            Vec::new()
        };
        (ys, xs)
    }

    /// Flattens the continuous blocks in [`block_labels`](Self::block_labels) order.
    pub fn to_blocks(&self, ctx: &ModelContext) -> Vec<Vec<f64>> {
        let spec = ctx.spec();
        let gdm = spec.variant.is_gdm();
        let mut total = vec![self.iota];
        total.extend(&self.alpha);
        total.extend(&self.eta);

        let mut delay = Vec::new();
        for d in 0..self.psi.len() {
            delay.push(self.psi[d]);
            if let Some(b) = self.beta.get(d) {
                delay.extend(b);
            }
        }

        let mut disp = Vec::new();
        if gdm {
            disp.push(self.theta[0]);
            for d in 0..self.phi.len() {
                disp.push(self.phi[d]);
                if let Some(k) = self.kappa.get(d) {
                    disp.extend(k);
                }
            }
        } else {
            disp.extend(&self.theta);
        }

        let mut smooth = Vec::new();
        if ctx.trend().is_some() {
            smooth.push(self.sigma_alpha);
        }
        if ctx.seasonal().is_some() {
            smooth.push(self.sigma_eta);
        }
        smooth.extend(&self.sigma_beta);
        smooth.extend(&self.sigma_kappa);
        if ctx.reporting().is_some() {
            smooth.push(self.sigma_pi);
        }

        let mut reporting = Vec::new();
        if spec.variant == Variant::GdmUr {
            reporting.push(self.rho);
            reporting.extend(&self.pi_coefs);
        }

        let mut cov = Vec::new();
        let mut logmu = Vec::new();
        if let Some(c) = &self.cov {
            for i in 0..c.nrows() {
                for j in i..c.ncols() {
                    cov.push(c[(i, j)]);
                }
            }
            for (r, row) in ctx.rows().iter().zip(&self.logmu) {
                if !r.complete {
                    logmu.extend(row);
                }
            }
        }
        vec![total, delay, disp, smooth, reporting, cov, logmu]
    }

    pub fn latent_to_blocks(&self, ctx: &ModelContext) -> (Vec<u64>, Vec<u64>) {
        let ys = if ctx.variant().is_gdm() {
            ctx.rows()
                .iter()
                .zip(&self.latent_y)
                .filter(|(r, _)| !r.complete)
                .map(|(_, y)| *y)
                .collect()
        } else {
            Vec::new()
        };
        (ys, self.latent_x.clone())
    }

    /// Inverse of [`to_blocks`](Self::to_blocks). GLM+ `ln μ` rows of
    /// complete rows are not stored and come back at their predictor means.
    pub fn from_blocks(
        ctx: &ModelContext,
        blocks: &[&[f64]],
        latent_y: &[u64],
        latent_x: &[u64],
    ) -> Result<Self> {
        let labels = Self::block_labels(ctx);
        if blocks.len() != labels.len()
            || blocks.iter().zip(&labels).any(|(b, l)| b.len() != l.len())
        {
            return Err(Error::Domain("parameter blocks do not match the model layout".into()));
        }
        let mut s = Self::zeros(ctx);
        let spec = ctx.spec();
        let gdm = spec.variant.is_gdm();

        let mut it = blocks[0].iter().copied();
        s.iota = it.next().unwrap();
        s.alpha.iter_mut().for_each(|v| *v = it.next().unwrap());
        s.eta.iter_mut().for_each(|v| *v = it.next().unwrap());

        let mut it = blocks[1].iter().copied();
        for d in 0..s.psi.len() {
            s.psi[d] = it.next().unwrap();
            if let Some(b) = s.beta.get_mut(d) {
                b.iter_mut().for_each(|v| *v = it.next().unwrap());
            }
        }

        let mut it = blocks[2].iter().copied();
        if gdm {
            s.theta[0] = it.next().unwrap();
            for d in 0..s.phi.len() {
                s.phi[d] = it.next().unwrap();
                if let Some(k) = s.kappa.get_mut(d) {
                    k.iter_mut().for_each(|v| *v = it.next().unwrap());
                }
            }
        } else {
            s.theta.iter_mut().for_each(|v| *v = it.next().unwrap());
        }

        let mut it = blocks[3].iter().copied();
        if ctx.trend().is_some() {
            s.sigma_alpha = it.next().unwrap();
        }
        if ctx.seasonal().is_some() {
            s.sigma_eta = it.next().unwrap();
        }
        s.sigma_beta.iter_mut().for_each(|v| *v = it.next().unwrap());
        s.sigma_kappa.iter_mut().for_each(|v| *v = it.next().unwrap());
        if ctx.reporting().is_some() {
            s.sigma_pi = it.next().unwrap();
        }

        if spec.variant == Variant::GdmUr {
            let mut it = blocks[4].iter().copied();
            s.rho = it.next().unwrap();
            s.pi_coefs.iter_mut().for_each(|v| *v = it.next().unwrap());
        }

        if let Some(c) = s.cov.as_mut() {
            let mut it = blocks[5].iter().copied();
            let k = c.nrows();
            for i in 0..k {
                for j in i..k {
                    let v = it.next().unwrap();
                    c[(i, j)] = v;
                    c[(j, i)] = v;
                }
            }
            let mut it = blocks[6].iter().copied();
            for (r, row) in ctx.rows().iter().enumerate() {
                let v: Vec<f64> = if row.complete {
                    (0..k).map(|c| ctx.log_mu(&s, row.t, c)).collect()
                } else {
                    (0..k).map(|_| it.next().unwrap()).collect()
                };
                s.logmu[r] = v;
            }
        }

        if gdm {
            let n_incomplete = ctx.incomplete_rows().count();
            if latent_y.len() != n_incomplete {
                return Err(Error::Domain(format!(
                    "expected {n_incomplete} latent totals, got {}",
                    latent_y.len()
                )));
            }
            let mut it = latent_y.iter().copied();
            for (r, row) in ctx.rows().iter().enumerate() {
                if !row.complete {
                    s.latent_y[r] = it.next().unwrap();
                }
            }
        }
        if spec.variant == Variant::GdmUr {
            if latent_x.len() != ctx.n_rows() {
                return Err(Error::Domain("latent true-count block has the wrong length".into()));
            }
            s.latent_x = latent_x.to_vec();
        }
        Ok(s)
    }
}
