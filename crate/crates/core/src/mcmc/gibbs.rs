//! Metropolis-within-Gibbs sweeps over a [`ParameterState`].
//!
//! Every update evaluates only the terms of the log-posterior that involve
//! the updated block, read from per-row and per-cell caches. The running
//! value `lp` tracks the full log-posterior (natural scale, no Jacobians).

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;

use super::config::{AdaptationConfig, Schedule};
use super::kernels::{AcceptanceCounter, BlockKernel, IntegerKernel, ScalarKernel};
use crate::distributions::Prior;
use crate::model::context::Smooth;
use crate::model::likelihood::{
    count_const, count_kernel, gdm_cell_term, normal_ln, smooth_prior, thinning_term,
};
use crate::model::{log_posterior, ModelContext, ParameterState, Variant};
use crate::special::logistic;

mod newton;

use newton::Block;

/// Ridge added to spline penalties in the Fisher approximation of proposals.
const PROPOSAL_RIDGE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Gdm { ur: bool },
    Glm,
    GlmPlus,
}

struct Kernels {
    total: BlockKernel,
    sigma_alpha: ScalarKernel,
    sigma_eta: ScalarKernel,
    theta: Vec<ScalarKernel>,
    delay: Vec<BlockKernel>,
    sigma_beta: Vec<ScalarKernel>,
    phi: Vec<ScalarKernel>,
    kappa: Vec<BlockKernel>,
    sigma_kappa: Vec<ScalarKernel>,
    reporting: Option<BlockKernel>,
    sigma_pi: ScalarKernel,
    rescale_alpha: ScalarKernel,
    rescale_eta: ScalarKernel,
    rescale_beta: Vec<ScalarKernel>,
    rescale_kappa: Vec<ScalarKernel>,
    rescale_pi: ScalarKernel,
    latent_y: Vec<IntegerKernel>,
    latent_x: Vec<IntegerKernel>,
    logmu: Vec<BlockKernel>,
}

pub(crate) struct GibbsSampler<'a> {
    ctx: &'a ModelContext,
    pub(crate) s: ParameterState,
    pub(crate) lp: f64,
    kind: Kind,
    sched: Schedule,
    poisson: bool,
    multinomial: bool,
    log_lambda: Vec<f64>,
    /// Delay effect per row and 0-based column.
    eff: Vec<Vec<f64>>,
    tot_c: Vec<f64>,
    tot_k: Vec<f64>,
    thin: Vec<f64>,
    lpi: Vec<f64>,
    lphi: Vec<Vec<f64>>,
    /// GDM: conditional delay terms; GLM/GLM+: mean-dependent NB parts.
    cell: Vec<Vec<f64>>,
    /// GLM/GLM+: mean-free NB parts.
    cell_c: Vec<Vec<f64>>,
    prec: Vec<f64>,
    logdet: f64,
    q: Vec<f64>,
    k: Kernels,
    total_design: DMatrix<f64>,
    delay_design: DMatrix<f64>,
    scoring: AcceptanceCounter,
    cur: Vec<f64>,
    prop: Vec<f64>,
    rows_a: Vec<f64>,
    rows_b: Vec<f64>,
    cells_a: Vec<Vec<f64>>,
    resid: Vec<f64>,
}

fn fisher_cov(prior: DMatrix<f64>, design: &[(f64, Vec<f64>)]) -> DMatrix<f64> {
    let mut j = prior;
    let n = j.nrows();
    for (w, x) in design {
        if !(w.is_finite() && *w > 0.0) {
            continue;
        }
        for a in 0..n {
            for b in 0..n {
                j[(a, b)] += w * x[a] * x[b];
            }
        }
    }
    match Cholesky::new(j.clone()) {
        Some(c) => c.inverse(),
        None => DMatrix::from_fn(n, n, |a, b| if a == b { 1.0 / j[(a, a)].max(1e-6) } else { 0.0 }),
    }
}

/// Precision of a smooth's coefficients: `S/σ²` plus a ridge.
fn smooth_precision(sm: &Smooth, sigma: f64) -> DMatrix<f64> {
    let p = sm.basis().penalty() / (sigma * sigma);
    let n = p.nrows();
    p + DMatrix::identity(n, n) * PROPOSAL_RIDGE
}

fn block_diag(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut o = 0;
    for p in parts {
        let k = p.nrows();
        out.view_mut((o, o), (k, k)).copy_from(p);
        o += k;
    }
    out
}

fn location_precision(p: &Prior) -> f64 {
    match *p {
        Prior::Normal { sd, .. } => 1.0 / (sd * sd),
        _ => 1e-2,
    }
}

#[inline]
fn quad(prec: &[f64], r: &[f64]) -> f64 {
    let k = r.len();
    let mut q = 0.0;
    for i in 0..k {
        let row = &prec[i * k..(i + 1) * k];
        let mut v = 0.0;
        for j in 0..k {
            v += row[j] * r[j];
        }
        q += r[i] * v;
    }
    q
}

#[inline]
fn eval_opt(sm: Option<&Smooth>, t: usize, coefs: &[f64]) -> f64 {
    sm.map_or(0.0, |b| b.eval(t, coefs))
}

impl<'a> GibbsSampler<'a> {
    pub(crate) fn new(
        ctx: &'a ModelContext,
        s: ParameterState,
        sched: Schedule,
        adapt: &AdaptationConfig,
    ) -> Self {
        let spec = ctx.spec();
        let kind = match spec.variant {
            Variant::Gdm => Kind::Gdm { ur: false },
            Variant::GdmUr => Kind::Gdm { ur: true },
            Variant::Glm => Kind::Glm,
            Variant::GlmPlus => Kind::GlmPlus,
        };
        let n = ctx.n_rows();
        let kcols = ctx.delay_horizon() + 1;
        let placeholder = BlockKernel::new(&DMatrix::identity(1, 1), adapt.target_accept_block, 1);
        let mut g = Self {
            ctx,
            s,
            lp: 0.0,
            kind,
            sched,
            poisson: spec.poisson_limit,
            multinomial: spec.multinomial_limit,
            log_lambda: vec![0.0; n],
            eff: vec![vec![0.0; spec.n_delay_effects()]; n],
            tot_c: vec![0.0; n],
            tot_k: vec![0.0; n],
            thin: vec![0.0; n],
            lpi: vec![0.0; n],
            lphi: vec![vec![0.0; ctx.delay_horizon()]; n],
            cell: vec![Vec::new(); n],
            cell_c: vec![Vec::new(); n],
            prec: vec![0.0; kcols * kcols],
            logdet: 0.0,
            q: vec![0.0; n],
            k: Kernels {
                total: placeholder.clone(),
                sigma_alpha: ScalarKernel::new(0.5, adapt.target_accept_scalar),
                sigma_eta: ScalarKernel::new(0.5, adapt.target_accept_scalar),
                theta: Vec::new(),
                delay: Vec::new(),
                sigma_beta: Vec::new(),
                phi: Vec::new(),
                kappa: Vec::new(),
                sigma_kappa: Vec::new(),
                reporting: None,
                sigma_pi: ScalarKernel::new(0.5, adapt.target_accept_scalar),
                rescale_alpha: ScalarKernel::new(0.3, adapt.target_accept_scalar),
                rescale_eta: ScalarKernel::new(0.3, adapt.target_accept_scalar),
                rescale_beta: Vec::new(),
                rescale_kappa: Vec::new(),
                rescale_pi: ScalarKernel::new(0.3, adapt.target_accept_scalar),
                latent_y: Vec::new(),
                latent_x: Vec::new(),
                logmu: Vec::new(),
            },
            cur: Vec::new(),
            prop: Vec::new(),
            rows_a: vec![0.0; n],
            rows_b: vec![0.0; n],
            cells_a: vec![vec![0.0; kcols]; n],
            resid: vec![0.0; kcols],
            total_design: newton::design(ctx, &[ctx.trend(), ctx.seasonal()]),
            delay_design: newton::design(ctx, &[ctx.delay()]),
            scoring: AcceptanceCounter::default(),
        };
        g.refresh();
        g.build_kernels(adapt);
        g
    }

    fn count(&self, r: usize) -> u64 {
        match self.kind {
            Kind::Gdm { ur: true } => self.s.latent_x[r],
            _ => self.s.latent_y[r],
        }
    }

    /// Number of conditional delay terms of a GDM row.
    #[inline]
    fn m(&self, r: usize) -> usize {
        self.ctx.rows()[r].k().min(self.ctx.delay_horizon())
    }

    fn set_covariance(&mut self, cov: &DMatrix<f64>) -> bool {
        let Some(ch) = Cholesky::new(cov.clone()) else {
            return false;
        };
        let k = cov.nrows();
        self.logdet = 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let inv = ch.inverse();
        for i in 0..k {
            for j in 0..k {
                self.prec[i * k + j] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            }
        }
        true
    }

    fn row_q(&mut self, r: usize) -> f64 {
        let k = self.resid.len();
        for c in 0..k {
            self.resid[c] = self.s.logmu[r][c] - self.log_lambda[r] - self.eff[r][c];
        }
        quad(&self.prec, &self.resid)
    }

    /// Recomputes every cache from the state and resets `lp`.
    pub(crate) fn refresh(&mut self) {
        let ctx = self.ctx;
        let d = ctx.delay_horizon();
        for (r, row) in ctx.rows().iter().enumerate() {
            let t = row.t;
            self.log_lambda[r] = ctx.log_lambda(&self.s, t);
            for c in 0..self.eff[r].len() {
                self.eff[r][c] = ctx.delay_effect(&self.s, t, c);
            }
            match self.kind {
                Kind::Gdm { ur } => {
                    for c in 0..d {
                        self.lphi[r][c] = ctx.log_phi(&self.s, t, c);
                    }
                    let cnt = self.count(r);
                    self.tot_c[r] = count_const(self.poisson, cnt, self.s.theta[0]);
                    self.tot_k[r] = count_kernel(self.poisson, cnt, self.log_lambda[r], self.s.theta[0]);
                    if ur {
                        self.lpi[r] = ctx.logit_pi(&self.s, t);
                        self.thin[r] = thinning_term(self.s.latent_y[r], self.s.latent_x[r], self.lpi[r]);
                    }
                    let y = self.s.latent_y[r];
                    let m = self.m(r);
                    self.cell[r] = (0..m)
                        .map(|c| {
                            gdm_cell_term(
                                self.multinomial,
                                row.observed[c],
                                y - row.cum[c],
                                self.eff[r][c],
                                self.lphi[r][c],
                            )
                        })
                        .collect();
                }
                Kind::Glm | Kind::GlmPlus => {
                    let k = row.k();
                    self.cell_c[r] = (0..k)
                        .map(|c| count_const(self.poisson, row.observed[c], self.s.theta[c]))
                        .collect();
                    self.cell[r] = (0..k)
                        .map(|c| {
                            let lm = self.cell_log_mean(r, c);
                            count_kernel(self.poisson, row.observed[c], lm, self.s.theta[c])
                        })
                        .collect();
                }
            }
        }
        if self.kind == Kind::GlmPlus {
            let cov = self.s.cov.clone().expect("GLM+ state carries a covariance");
            self.set_covariance(&cov);
            for r in 0..ctx.n_rows() {
                self.q[r] = self.row_q(r);
            }
        }
        self.lp = log_posterior(ctx, &self.s);
    }

    #[inline]
    fn cell_log_mean(&self, r: usize, c: usize) -> f64 {
        match self.kind {
            Kind::GlmPlus => self.s.logmu[r][c],
            _ => self.log_lambda[r] + self.eff[r][c],
        }
    }

    fn build_kernels(&mut self, adapt: &AdaptationConfig) {
        let ctx = self.ctx;
        let spec = ctx.spec();
        let pri = &spec.priors;
        let (ts, tb) = (adapt.target_accept_scalar, adapt.target_accept_block);
        let win = adapt.adaptation_window;
        let rows = ctx.rows();

        // total-count block [ι, α, η]
        let mut parts = vec![DMatrix::from_element(1, 1, location_precision(&pri.iota))];
        if let Some(b) = ctx.trend() {
            parts.push(smooth_precision(b, self.s.sigma_alpha));
        }
        if let Some(b) = ctx.seasonal() {
            parts.push(smooth_precision(b, self.s.sigma_eta));
        }
        let design: Vec<(f64, Vec<f64>)> = rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let mut x = vec![1.0];
                if let Some(b) = ctx.trend() {
                    x.extend(b.row(row.t));
                }
                if let Some(b) = ctx.seasonal() {
                    x.extend(b.row(row.t));
                }
                (self.total_weight(r), x)
            })
            .collect();
        self.k.total = BlockKernel::new(&fisher_cov(block_diag(&parts), &design), tb, win);

        let n_eff = spec.n_delay_effects();
        self.k.delay = (0..n_eff)
            .map(|c| {
                let mut parts = vec![DMatrix::from_element(1, 1, 1.0 / (pri.psi_sd * pri.psi_sd))];
                if let Some(b) = ctx.delay() {
                    parts.push(smooth_precision(b, self.s.sigma_beta[c]));
                }
                let design: Vec<(f64, Vec<f64>)> = rows
                    .iter()
                    .enumerate()
                    .map(|(r, row)| {
                        let mut x = vec![1.0];
                        if let Some(b) = ctx.delay() {
                            x.extend(b.row(row.t));
                        }
                        (self.delay_weight(r, c), x)
                    })
                    .collect();
                BlockKernel::new(&fisher_cov(block_diag(&parts), &design), tb, win)
            })
            .collect();
        self.k.sigma_beta = (0..self.s.sigma_beta.len()).map(|_| ScalarKernel::new(0.5, ts)).collect();
        self.k.rescale_beta = (0..self.s.sigma_beta.len()).map(|_| ScalarKernel::new(0.3, ts)).collect();
        self.k.theta = (0..self.s.theta.len()).map(|_| ScalarKernel::new(0.2, ts)).collect();
        self.k.phi = (0..self.s.phi.len()).map(|_| ScalarKernel::new(0.3, ts)).collect();
        if let Some(b) = ctx.dispersion() {
            self.k.kappa = (0..self.s.kappa.len())
                .map(|c| {
                    let design: Vec<(f64, Vec<f64>)> = (0..rows.len())
                        .filter(|&r| self.m(r) > c)
                        .map(|r| (0.5, b.row(rows[r].t).to_vec()))
                        .collect();
                    let prior = smooth_precision(b, self.s.sigma_kappa[c]);
                    BlockKernel::new(&fisher_cov(prior, &design), tb, win)
                })
                .collect();
            self.k.sigma_kappa = (0..self.s.sigma_kappa.len()).map(|_| ScalarKernel::new(0.5, ts)).collect();
            self.k.rescale_kappa = (0..self.s.sigma_kappa.len()).map(|_| ScalarKernel::new(0.3, ts)).collect();
        }
        if let Some(rep) = &spec.reporting {
            let mut parts = vec![DMatrix::from_element(1, 1, location_precision(&rep.intercept))];
            if let Some(b) = ctx.reporting() {
                parts.push(smooth_precision(b, self.s.sigma_pi));
            }
            let design: Vec<(f64, Vec<f64>)> = rows
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    let mut x = vec![1.0];
                    if let Some(b) = ctx.reporting() {
                        x.extend(b.row(row.t));
                    }
                    let pi = logistic(self.lpi[r]);
                    (self.s.latent_x[r] as f64 * pi * (1.0 - pi), x)
                })
                .collect();
            self.k.reporting = Some(BlockKernel::new(&fisher_cov(block_diag(&parts), &design), tb, win));
        }

        if matches!(self.kind, Kind::Gdm { .. }) {
            self.k.latent_y = rows
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    let extra = self.s.latent_y[r].saturating_sub(row.prefix_sum()) as f64;
                    IntegerKernel::new(1.0 + extra.sqrt(), ts)
                })
                .collect();
        }
        if self.kind == (Kind::Gdm { ur: true }) {
            self.k.latent_x = (0..rows.len())
                .map(|r| {
                    let extra = (self.s.latent_x[r] - self.s.latent_y[r]) as f64;
                    IntegerKernel::new(1.0 + extra.sqrt(), ts)
                })
                .collect();
        }
        if self.kind == Kind::GlmPlus {
            let k = ctx.delay_horizon() + 1;
            let prec = DMatrix::from_row_slice(k, k, &self.prec);
            self.k.logmu = rows
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    let mut j = prec.clone();
                    for c in 0..row.k() {
                        let mu = self.s.logmu[r][c].exp();
                        let th = self.s.theta[c];
                        j[(c, c)] += if self.poisson { mu } else { mu * th / (mu + th) };
                    }
                    let cov = Cholesky::new(j.clone())
                        .map(|c| c.inverse())
                        .unwrap_or_else(|| DMatrix::identity(k, k));
                    BlockKernel::new(&cov, tb, win)
                })
                .collect();
        }
    }

    fn nb_info(&self, log_mean: f64, theta: f64) -> f64 {
        let mu = log_mean.exp();
        if self.poisson {
            mu
        } else {
            mu * theta / (mu + theta)
        }
    }

    fn total_weight(&self, r: usize) -> f64 {
        match self.kind {
            Kind::Gdm { .. } => self.nb_info(self.log_lambda[r], self.s.theta[0]),
            Kind::Glm => (0..self.ctx.rows()[r].k())
                .map(|c| self.nb_info(self.cell_log_mean(r, c), self.s.theta[c]))
                .sum(),
            Kind::GlmPlus => self.prec.iter().sum(),
        }
    }

    fn delay_weight(&self, r: usize, c: usize) -> f64 {
        let row = &self.ctx.rows()[r];
        match self.kind {
            Kind::Gdm { .. } => {
                if self.m(r) <= c {
                    return 0.0;
                }
                let n = (self.s.latent_y[r] - row.cum[c]) as f64;
                let nu = logistic(self.eff[r][c]);
                let base = n * nu * (1.0 - nu);
                if self.multinomial {
                    base
                } else {
                    let phi = self.lphi[r][c].exp();
                    base * (phi + 1.0) / (phi + n.max(1.0))
                }
            }
            Kind::Glm => {
                if row.k() <= c {
                    0.0
                } else {
                    self.nb_info(self.cell_log_mean(r, c), self.s.theta[c])
                }
            }
            Kind::GlmPlus => {
                let k = self.resid.len();
                self.prec[c * k + c]
            }
        }
    }

    /// One full sweep in the documented order.
    pub(crate) fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R, adapt: bool) {
        let sched = self.sched;
        let ctx = self.ctx;
        self.update_total(rng, adapt);
        for _ in 0..sched.total {
            self.update_scoring(Block::Total, rng, adapt);
        }
        for _ in 0..sched.smoothing {
            if ctx.trend().is_some() {
                self.update_sigma(Sigma::Trend, rng, adapt);
                    self.rescale_smooth(Sigma::Trend, rng, adapt);
            }
            if ctx.seasonal().is_some() {
                self.update_sigma(Sigma::Seasonal, rng, adapt);
                    self.rescale_smooth(Sigma::Seasonal, rng, adapt);
            }
        }
        for _ in 0..sched.count_dispersion {
            for c in 0..self.s.theta.len() {
                self.update_theta(c, rng, adapt);
            }
        }
        for c in 0..self.s.psi.len() {
            self.update_delay(c, rng, adapt);
            for _ in 0..sched.delay {
                self.update_scoring(Block::Delay(c), rng, adapt);
            }
            if ctx.delay().is_some() {
                for _ in 0..sched.smoothing {
                    self.update_sigma(Sigma::Delay(c), rng, adapt);
                    self.rescale_smooth(Sigma::Delay(c), rng, adapt);
                }
            }
            if matches!(self.kind, Kind::Gdm { .. }) {
                for _ in 0..sched.delay_dispersion {
                    self.update_phi(c, rng, adapt);
                }
                if ctx.dispersion().is_some() {
                    for _ in 0..sched.delay_dispersion {
                        self.update_kappa(c, rng, adapt);
                    }
                    for _ in 0..sched.smoothing {
                        self.update_sigma(Sigma::Dispersion(c), rng, adapt);
                    self.rescale_smooth(Sigma::Dispersion(c), rng, adapt);
                    }
                }
            }
        }
        if self.kind == (Kind::Gdm { ur: true }) {
            for _ in 0..sched.reporting {
                self.update_reporting(rng, adapt);
            }
            if ctx.reporting().is_some() {
                for _ in 0..sched.smoothing {
                    self.update_sigma(Sigma::Reporting, rng, adapt);
                    self.rescale_smooth(Sigma::Reporting, rng, adapt);
                }
            }
            for r in 0..ctx.n_rows() {
                for _ in 0..sched.latent {
                    self.update_latent_x(r, rng, adapt);
                }
            }
        }
        if self.kind == Kind::GlmPlus {
            for r in 0..ctx.n_rows() {
                for _ in 0..sched.logmu {
                    self.update_logmu(r, rng, adapt);
                }
            }
            self.update_covariance(rng);
        }
        if matches!(self.kind, Kind::Gdm { .. }) {
            for r in 0..ctx.n_rows() {
                if !ctx.rows()[r].complete {
                    for _ in 0..sched.latent {
                        self.update_latent_y(r, rng, adapt);
                    }
                }
            }
        }
    }

    pub(crate) fn reset_empirical(&mut self) {
        self.k.total.reset_empirical();
        self.k.delay.iter_mut().for_each(BlockKernel::reset_empirical);
        self.k.kappa.iter_mut().for_each(BlockKernel::reset_empirical);
        if let Some(k) = self.k.reporting.as_mut() {
            k.reset_empirical();
        }
        self.k.logmu.iter_mut().for_each(BlockKernel::reset_empirical);
    }

    /// Every proposal scale and shape entry, for adaptation-freeze checks.
    pub(crate) fn proposal_fingerprint(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut block = |k: &BlockKernel| {
            out.push(k.scale());
            out.extend(k.shape_factor().iter());
        };
        block(&self.k.total);
        self.k.delay.iter().for_each(&mut block);
        self.k.kappa.iter().for_each(&mut block);
        if let Some(k) = &self.k.reporting {
            block(k);
        }
        self.k.logmu.iter().for_each(&mut block);
        let k = &self.k;
        out.push(k.sigma_alpha.step());
        out.push(k.sigma_eta.step());
        out.push(k.sigma_pi.step());
        out.push(k.rescale_alpha.step());
        out.push(k.rescale_eta.step());
        out.push(k.rescale_pi.step());
        for s in k.rescale_beta.iter().chain(&k.rescale_kappa) {
            out.push(s.step());
        }
        for s in k.theta.iter().chain(&k.sigma_beta).chain(&k.phi).chain(&k.sigma_kappa) {
            out.push(s.step());
        }
        for i in k.latent_y.iter().chain(&k.latent_x) {
            out.push(i.width());
        }
        out
    }

    /// Post-burn-in acceptance counts per kernel group.
    pub(crate) fn acceptance(&self) -> Vec<(&'static str, AcceptanceCounter)> {
        let k = &self.k;
        let mut out = Vec::new();
        let mut sum = |name: &'static str, it: &mut dyn Iterator<Item = AcceptanceCounter>| {
            let mut acc = AcceptanceCounter::default();
            let mut any = false;
            for c in it {
                acc.merge(&c);
                any = true;
            }
            if any && acc.proposed > 0 {
                out.push((name, acc));
            }
        };
        sum("total", &mut std::iter::once(k.total.counter));
        sum("scoring", &mut std::iter::once(self.scoring));
        sum("delay", &mut k.delay.iter().map(|x| x.counter));
        sum("theta", &mut k.theta.iter().map(|x| x.counter));
        sum("phi", &mut k.phi.iter().map(|x| x.counter));
        sum("kappa", &mut k.kappa.iter().map(|x| x.counter));
        sum(
            "smoothing",
            &mut [k.sigma_alpha.counter, k.sigma_eta.counter, k.sigma_pi.counter]
                .into_iter()
                .chain(k.sigma_beta.iter().map(|x| x.counter))
                .chain(k.sigma_kappa.iter().map(|x| x.counter)),
        );
        sum(
            "rescale",
            &mut [k.rescale_alpha.counter, k.rescale_eta.counter, k.rescale_pi.counter]
                .into_iter()
                .chain(k.rescale_beta.iter().map(|x| x.counter))
                .chain(k.rescale_kappa.iter().map(|x| x.counter)),
        );
        sum("reporting", &mut k.reporting.iter().map(|x| x.counter));
        sum("logmu", &mut k.logmu.iter().map(|x| x.counter));
        sum("latent_y", &mut k.latent_y.iter().map(|x| x.counter));
        sum("latent_x", &mut k.latent_x.iter().map(|x| x.counter));
        out
    }

    // ---- continuous blocks -------------------------------------------------

    pub(crate) fn update_total<R: Rng + ?Sized>(&mut self, rng: &mut R, adapt: bool) {
        let mut cur = std::mem::take(&mut self.cur);
        let mut prop = std::mem::take(&mut self.prop);
        cur.clear();
        cur.push(self.s.iota);
        cur.extend(&self.s.alpha);
        cur.extend(&self.s.eta);
        self.k.total.propose(&cur, rng, &mut prop);
        let delta = self.total_delta(&prop, self.s.sigma_alpha, self.s.sigma_eta);
        if self.k.total.decide(delta, rng, adapt) {
            self.commit_total(&prop, delta);
            std::mem::swap(&mut cur, &mut prop);
        }
        self.k.total.observe(&cur, adapt);
        self.cur = cur;
        self.prop = prop;
    }

    /// Change in `lp` from moving `[ι, α, η]` to `prop` with smoothing sds
    /// `(sa, se)`; the smoothing-sd priors themselves are excluded. Fills
    /// `rows_a`/`rows_b`/`cells_a` for [`commit_total`](Self::commit_total).
    fn total_delta(&mut self, prop: &[f64], sa: f64, se: f64) -> f64 {
        let ctx = self.ctx;
        let pri = &ctx.spec().priors;
        let (na, ne) = (self.s.alpha.len(), self.s.eta.len());
        let (pa, pe) = (&prop[1..1 + na], &prop[1 + na..1 + na + ne]);
        let mut delta = pri.iota.ln_density(prop[0]) - pri.iota.ln_density(self.s.iota);
        if let Some(b) = ctx.trend() {
            delta += smooth_prior(b.prior(), pa, sa) - smooth_prior(b.prior(), &self.s.alpha, self.s.sigma_alpha);
        }
        if let Some(b) = ctx.seasonal() {
            delta += smooth_prior(b.prior(), pe, se) - smooth_prior(b.prior(), &self.s.eta, self.s.sigma_eta);
        }
        if delta == f64::NEG_INFINITY {
            return delta;
        }
        for (r, row) in ctx.rows().iter().enumerate() {
            let ll = prop[0] + eval_opt(ctx.trend(), row.t, pa) + eval_opt(ctx.seasonal(), row.t, pe);
            self.rows_a[r] = ll;
            match self.kind {
                Kind::Gdm { .. } => {
                    let v = count_kernel(self.poisson, self.count(r), ll, self.s.theta[0]);
                    self.rows_b[r] = v;
                    delta += v - self.tot_k[r];
                }
                Kind::Glm => {
                    for c in 0..row.k() {
                        let v = count_kernel(self.poisson, row.observed[c], ll + self.eff[r][c], self.s.theta[c]);
                        self.cells_a[r][c] = v;
                        delta += v - self.cell[r][c];
                    }
                }
                Kind::GlmPlus => {
                    for c in 0..self.resid.len() {
                        self.resid[c] = self.s.logmu[r][c] - ll - self.eff[r][c];
                    }
                    let q = quad(&self.prec, &self.resid);
                    self.rows_b[r] = q;
                    delta -= 0.5 * (q - self.q[r]);
                }
            }
        }
        delta
    }

    fn commit_total(&mut self, prop: &[f64], delta: f64) {
        let (na, ne) = (self.s.alpha.len(), self.s.eta.len());
        self.s.iota = prop[0];
        self.s.alpha.copy_from_slice(&prop[1..1 + na]);
        self.s.eta.copy_from_slice(&prop[1 + na..1 + na + ne]);
        self.lp += delta;
        for (r, row) in self.ctx.rows().iter().enumerate() {
            self.log_lambda[r] = self.rows_a[r];
            match self.kind {
                Kind::Gdm { .. } => self.tot_k[r] = self.rows_b[r],
                Kind::Glm => self.cell[r][..row.k()].copy_from_slice(&self.cells_a[r][..row.k()]),
                Kind::GlmPlus => self.q[r] = self.rows_b[r],
            }
        }
    }

    fn update_delay<R: Rng + ?Sized>(&mut self, c: usize, rng: &mut R, adapt: bool) {
        let mut cur = std::mem::take(&mut self.cur);
        let mut prop = std::mem::take(&mut self.prop);
        cur.clear();
        cur.push(self.s.psi[c]);
        if let Some(b) = self.s.beta.get(c) {
            cur.extend(b);
        }
        self.k.delay[c].propose(&cur, rng, &mut prop);
        let sb = self.s.sigma_beta.get(c).copied().unwrap_or(1.0);
        let delta = self.delay_delta(c, &prop, sb);
        if self.k.delay[c].decide(delta, rng, adapt) {
            self.commit_delay(c, &prop, delta);
            std::mem::swap(&mut cur, &mut prop);
        }
        self.k.delay[c].observe(&cur, adapt);
        self.cur = cur;
        self.prop = prop;
    }

    /// As [`total_delta`](Self::total_delta) for `[ψ_c, β_c]` with smoothing sd `sb`.
    fn delay_delta(&mut self, c: usize, prop: &[f64], sb: f64) -> f64 {
        let ctx = self.ctx;
        let pri = &ctx.spec().priors;
        let pb = &prop[1..];
        let m0 = ctx.psi_mean()[c];
        let mut delta = normal_ln(prop[0], m0, pri.psi_sd) - normal_ln(self.s.psi[c], m0, pri.psi_sd);
        if let Some(b) = ctx.delay() {
            delta += smooth_prior(b.prior(), pb, sb) - smooth_prior(b.prior(), &self.s.beta[c], self.s.sigma_beta[c]);
        }
        if delta == f64::NEG_INFINITY {
            return delta;
        }
        for (r, row) in ctx.rows().iter().enumerate() {
            let e = prop[0] + eval_opt(ctx.delay(), row.t, pb);
            self.rows_a[r] = e;
            match self.kind {
                Kind::Gdm { .. } => {
                    if self.m(r) > c {
                        let v = gdm_cell_term(
                            self.multinomial,
                            row.observed[c],
                            self.s.latent_y[r] - row.cum[c],
                            e,
                            self.lphi[r][c],
                        );
                        self.rows_b[r] = v;
                        delta += v - self.cell[r][c];
                    }
                }
                Kind::Glm => {
                    if row.k() > c {
                        let v = count_kernel(self.poisson, row.observed[c], self.log_lambda[r] + e, self.s.theta[c]);
                        self.rows_b[r] = v;
                        delta += v - self.cell[r][c];
                    }
                }
                Kind::GlmPlus => {
                    for j in 0..self.resid.len() {
                        let ej = if j == c { e } else { self.eff[r][j] };
                        self.resid[j] = self.s.logmu[r][j] - self.log_lambda[r] - ej;
                    }
                    let q = quad(&self.prec, &self.resid);
                    self.rows_b[r] = q;
                    delta -= 0.5 * (q - self.q[r]);
                }
            }
        }
        delta
    }

    fn commit_delay(&mut self, c: usize, prop: &[f64], delta: f64) {
        self.s.psi[c] = prop[0];
        if let Some(b) = self.s.beta.get_mut(c) {
            b.copy_from_slice(&prop[1..]);
        }
        self.lp += delta;
        for (r, row) in self.ctx.rows().iter().enumerate() {
            self.eff[r][c] = self.rows_a[r];
            match self.kind {
                Kind::Gdm { .. } if self.m(r) > c => self.cell[r][c] = self.rows_b[r],
                Kind::Glm if row.k() > c => self.cell[r][c] = self.rows_b[r],
                Kind::GlmPlus => self.q[r] = self.rows_b[r],
                _ => {}
            }
        }
    }

    fn update_kappa<R: Rng + ?Sized>(&mut self, c: usize, rng: &mut R, adapt: bool) {
        let mut cur = std::mem::take(&mut self.cur);
        let mut prop = std::mem::take(&mut self.prop);
        cur.clear();
        cur.extend(&self.s.kappa[c]);
        self.k.kappa[c].propose(&cur, rng, &mut prop);
        let delta = self.kappa_delta(c, &prop, self.s.sigma_kappa[c]);
        if self.k.kappa[c].decide(delta, rng, adapt) {
            self.commit_kappa(c, &prop, delta);
            std::mem::swap(&mut cur, &mut prop);
        }
        self.k.kappa[c].observe(&cur, adapt);
        self.cur = cur;
        self.prop = prop;
    }

    fn kappa_delta(&mut self, c: usize, prop: &[f64], sk: f64) -> f64 {
        let ctx = self.ctx;
        let b = ctx.dispersion().expect("dispersion smooth present");
        let mut delta = smooth_prior(b.prior(), prop, sk) - smooth_prior(b.prior(), &self.s.kappa[c], self.s.sigma_kappa[c]);
        if delta == f64::NEG_INFINITY {
            return delta;
        }
        let base = self.s.phi[c].ln();
        for (r, row) in ctx.rows().iter().enumerate() {
            let lp = base + b.eval(row.t, prop);
            self.rows_a[r] = lp;
            if self.m(r) > c && !self.multinomial {
                let v = gdm_cell_term(false, row.observed[c], self.s.latent_y[r] - row.cum[c], self.eff[r][c], lp);
                self.rows_b[r] = v;
                delta += v - self.cell[r][c];
            }
        }
        delta
    }

    fn commit_kappa(&mut self, c: usize, prop: &[f64], delta: f64) {
        self.s.kappa[c].copy_from_slice(prop);
        self.lp += delta;
        for r in 0..self.ctx.n_rows() {
            self.lphi[r][c] = self.rows_a[r];
            if self.m(r) > c && !self.multinomial {
                self.cell[r][c] = self.rows_b[r];
            }
        }
    }

    fn update_reporting<R: Rng + ?Sized>(&mut self, rng: &mut R, adapt: bool) {
        let mut cur = std::mem::take(&mut self.cur);
        let mut prop = std::mem::take(&mut self.prop);
        cur.clear();
        cur.push(self.s.rho);
        cur.extend(&self.s.pi_coefs);
        let kernel = self.k.reporting.as_mut().expect("reporting kernel");
        kernel.propose(&cur, rng, &mut prop);
        let delta = self.reporting_delta(&prop, self.s.sigma_pi);
        let kernel = self.k.reporting.as_mut().expect("reporting kernel");
        if kernel.decide(delta, rng, adapt) {
            self.commit_reporting(&prop, delta);
            std::mem::swap(&mut cur, &mut prop);
        }
        let kernel = self.k.reporting.as_mut().expect("reporting kernel");
        kernel.observe(&cur, adapt);
        self.cur = cur;
        self.prop = prop;
    }

    fn reporting_delta(&mut self, prop: &[f64], sp: f64) -> f64 {
        let ctx = self.ctx;
        let rep = ctx.spec().reporting.as_ref().expect("reporting block present");
        let pc = &prop[1..];
        let mut delta = rep.intercept.ln_density(prop[0]) - rep.intercept.ln_density(self.s.rho);
        if let Some(b) = ctx.reporting() {
            delta += smooth_prior(b.prior(), pc, sp) - smooth_prior(b.prior(), &self.s.pi_coefs, self.s.sigma_pi);
        }
        if delta == f64::NEG_INFINITY {
            return delta;
        }
        for (r, row) in ctx.rows().iter().enumerate() {
            let l = prop[0] + eval_opt(ctx.reporting(), row.t, pc);
            self.rows_a[r] = l;
            let v = thinning_term(self.s.latent_y[r], self.s.latent_x[r], l);
            self.rows_b[r] = v;
            delta += v - self.thin[r];
        }
        delta
    }

    fn commit_reporting(&mut self, prop: &[f64], delta: f64) {
        self.s.rho = prop[0];
        self.s.pi_coefs.copy_from_slice(&prop[1..]);
        self.lp += delta;
        self.lpi.copy_from_slice(&self.rows_a);
        self.thin.copy_from_slice(&self.rows_b);
    }

    fn update_logmu<R: Rng + ?Sized>(&mut self, r: usize, rng: &mut R, adapt: bool) {
        let row = &self.ctx.rows()[r];
        let mut cur = std::mem::take(&mut self.cur);
        let mut prop = std::mem::take(&mut self.prop);
        cur.clear();
        cur.extend(&self.s.logmu[r]);
        self.k.logmu[r].propose(&cur, rng, &mut prop);
        for c in 0..self.resid.len() {
            self.resid[c] = prop[c] - self.log_lambda[r] - self.eff[r][c];
        }
        let q = quad(&self.prec, &self.resid);
        let mut delta = -0.5 * (q - self.q[r]);
        for c in 0..row.k() {
            let v = count_kernel(self.poisson, row.observed[c], prop[c], self.s.theta[c]);
            self.cells_a[r][c] = v;
            delta += v - self.cell[r][c];
        }
        if self.k.logmu[r].decide(delta, rng, adapt) {
            self.s.logmu[r].copy_from_slice(&prop);
            self.q[r] = q;
            let k = row.k();
            self.cell[r][..k].copy_from_slice(&self.cells_a[r][..k]);
            self.lp += delta;
            std::mem::swap(&mut cur, &mut prop);
        }
        self.k.logmu[r].observe(&cur, adapt);
        self.cur = cur;
        self.prop = prop;
    }

    /// Conjugate Inverse-Wishart draw of the GLM+ covariance.
    pub(crate) fn update_covariance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let ctx = self.ctx;
        let iw = ctx.covariance_prior().expect("GLM+ carries an Inverse-Wishart prior");
        let k = self.resid.len();
        let n = ctx.n_rows();
        let mut scatter = DMatrix::<f64>::zeros(k, k);
        for r in 0..n {
            for c in 0..k {
                self.resid[c] = self.s.logmu[r][c] - self.log_lambda[r] - self.eff[r][c];
            }
            for i in 0..k {
                for j in 0..k {
                    scatter[(i, j)] += self.resid[i] * self.resid[j];
                }
            }
        }
        let Ok(post) = iw.posterior(&scatter, n) else {
            return;
        };
        let draw = post.sample(rng);
        let draw = (&draw + draw.transpose()) * 0.5;
        let old_cov = self.s.cov.clone().expect("covariance present");
        let old_logdet = self.logdet;
        let old_prec = self.prec.clone();
        if !self.set_covariance(&draw) {
            return;
        }
        let prior_delta = iw.ln_density(&draw) - iw.ln_density(&old_cov);
        if !prior_delta.is_finite() {
            self.logdet = old_logdet;
            self.prec = old_prec;
            return;
        }
        let mut delta = prior_delta - 0.5 * n as f64 * (self.logdet - old_logdet);
        for r in 0..n {
            let q = self.row_q(r);
            delta -= 0.5 * (q - self.q[r]);
            self.q[r] = q;
        }
        self.s.cov = Some(draw);
        self.lp += delta;
    }

    // ---- positive scalars on the log scale ---------------------------------

    fn update_theta<R: Rng + ?Sized>(&mut self, c: usize, rng: &mut R, adapt: bool) {
        let ctx = self.ctx;
        let prior = ctx.spec().priors.theta;
        let old = self.s.theta[c];
        let u = old.ln();
        let u2 = self.k.theta[c].propose(u, rng);
        let new = u2.exp();
        let mut dlp = prior.ln_density(new) - prior.ln_density(old);
        if dlp > f64::NEG_INFINITY && !self.poisson {
            match self.kind {
                Kind::Gdm { .. } => {
                    for r in 0..ctx.n_rows() {
                        let cnt = self.count(r);
                        let a = count_const(false, cnt, new);
                        let b = count_kernel(false, cnt, self.log_lambda[r], new);
                        self.rows_a[r] = a;
                        self.rows_b[r] = b;
                        dlp += a + b - self.tot_c[r] - self.tot_k[r];
                    }
                }
                Kind::Glm | Kind::GlmPlus => {
                    for (r, row) in ctx.rows().iter().enumerate() {
                        if row.k() > c {
                            let z = row.observed[c];
                            let a = count_const(false, z, new);
                            let b = count_kernel(false, z, self.cell_log_mean(r, c), new);
                            self.rows_a[r] = a;
                            self.rows_b[r] = b;
                            dlp += a + b - self.cell_c[r][c] - self.cell[r][c];
                        }
                    }
                }
            }
        }
        if self.k.theta[c].decide(dlp + (u2 - u), rng, adapt) {
            self.s.theta[c] = new;
            self.lp += dlp;
            if !self.poisson {
                for (r, row) in ctx.rows().iter().enumerate() {
                    match self.kind {
                        Kind::Gdm { .. } => {
                            self.tot_c[r] = self.rows_a[r];
                            self.tot_k[r] = self.rows_b[r];
                        }
                        _ if row.k() > c => {
                            self.cell_c[r][c] = self.rows_a[r];
                            self.cell[r][c] = self.rows_b[r];
                        }
                        _ => {}
                    }
                }
            }
        }
    }

    fn update_phi<R: Rng + ?Sized>(&mut self, c: usize, rng: &mut R, adapt: bool) {
        let ctx = self.ctx;
        let prior = ctx.spec().priors.phi;
        let old = self.s.phi[c];
        let u = old.ln();
        let u2 = self.k.phi[c].propose(u, rng);
        let new = u2.exp();
        let mut dlp = prior.ln_density(new) - prior.ln_density(old);
        let ln_new = new.ln();
        if dlp > f64::NEG_INFINITY {
            for (r, row) in ctx.rows().iter().enumerate() {
                let lp = ln_new + eval_opt(ctx.dispersion(), row.t, self.s.kappa.get(c).map_or(&[][..], |k| k));
                self.rows_a[r] = lp;
                if self.m(r) > c && !self.multinomial {
                    let v = gdm_cell_term(false, row.observed[c], self.s.latent_y[r] - row.cum[c], self.eff[r][c], lp);
                    self.rows_b[r] = v;
                    dlp += v - self.cell[r][c];
                }
            }
        }
        if self.k.phi[c].decide(dlp + (u2 - u), rng, adapt) {
            self.s.phi[c] = new;
            self.lp += dlp;
            for r in 0..ctx.n_rows() {
                self.lphi[r][c] = self.rows_a[r];
                if self.m(r) > c && !self.multinomial {
                    self.cell[r][c] = self.rows_b[r];
                }
            }
        }
    }

    fn update_sigma<R: Rng + ?Sized>(&mut self, which: Sigma, rng: &mut R, adapt: bool) {
        let ctx = self.ctx;
        let pri = &ctx.spec().priors;
        let (smooth, coefs, old, prior, kernel) = match which {
            Sigma::Trend => (ctx.trend(), &self.s.alpha, self.s.sigma_alpha, pri.sigma_trend, &mut self.k.sigma_alpha),
            Sigma::Seasonal => (ctx.seasonal(), &self.s.eta, self.s.sigma_eta, pri.sigma_seasonal, &mut self.k.sigma_eta),
            Sigma::Delay(c) => (ctx.delay(), &self.s.beta[c], self.s.sigma_beta[c], pri.sigma_delay, &mut self.k.sigma_beta[c]),
            Sigma::Dispersion(c) => (
                ctx.dispersion(),
                &self.s.kappa[c],
                self.s.sigma_kappa[c],
                pri.sigma_dispersion,
                &mut self.k.sigma_kappa[c],
            ),
            Sigma::Reporting => (ctx.reporting(), &self.s.pi_coefs, self.s.sigma_pi, pri.sigma_reporting, &mut self.k.sigma_pi),
        };
        let sp = smooth.expect("smooth present").prior();
        let qf = sp.quadratic(coefs);
        let u = old.ln();
        let u2 = kernel.propose(u, rng);
        let new = u2.exp();
        let dlp = sp.ln_density_tau_part(new.powi(-2), qf) - sp.ln_density_tau_part(old.powi(-2), qf)
            + prior.ln_density(new)
            - prior.ln_density(old);
        if kernel.decide(dlp + (u2 - u), rng, adapt) {
            self.lp += dlp;
            match which {
                Sigma::Trend => self.s.sigma_alpha = new,
                Sigma::Seasonal => self.s.sigma_eta = new,
                Sigma::Delay(c) => self.s.sigma_beta[c] = new,
                Sigma::Dispersion(c) => self.s.sigma_kappa[c] = new,
                Sigma::Reporting => self.s.sigma_pi = new,
            }
        }
    }

    /// Joint move of a smoothing sd and its coefficients: `σ → σ·eᵘ` with
    /// the penalized part of the coefficients scaled by `eᵘ`. The spline
    /// prior is invariant under the move, so only the likelihood and the
    /// prior on `σ` decide.
    fn rescale_smooth<R: Rng + ?Sized>(&mut self, which: Sigma, rng: &mut R, adapt: bool) {
        let ctx = self.ctx;
        let pri = &ctx.spec().priors;
        let (smooth, old, prior) = match which {
            Sigma::Trend => (ctx.trend(), self.s.sigma_alpha, pri.sigma_trend),
            Sigma::Seasonal => (ctx.seasonal(), self.s.sigma_eta, pri.sigma_seasonal),
            Sigma::Delay(c) => (ctx.delay(), self.s.sigma_beta[c], pri.sigma_delay),
            Sigma::Dispersion(c) => (ctx.dispersion(), self.s.sigma_kappa[c], pri.sigma_dispersion),
            Sigma::Reporting => (ctx.reporting(), self.s.sigma_pi, pri.sigma_reporting),
        };
        let sp = smooth.expect("smooth present").prior();
        let u = self.rescale_kernel(which).propose(0.0, rng);
        let f = u.exp();
        let new = old * f;
        let mut prop = std::mem::take(&mut self.prop);
        prop.clear();
        let mut delta = match which {
            Sigma::Trend | Sigma::Seasonal => {
                prop.push(self.s.iota);
                let (a, e) = (&self.s.alpha, &self.s.eta);
                if which == Sigma::Trend {
                    sp.scale_range(a, f, &mut prop);
                    prop.extend(e);
                    self.total_delta(&prop, new, self.s.sigma_eta)
                } else {
                    prop.extend(a);
                    sp.scale_range(e, f, &mut prop);
                    self.total_delta(&prop, self.s.sigma_alpha, new)
                }
            }
            Sigma::Delay(c) => {
                prop.push(self.s.psi[c]);
                sp.scale_range(&self.s.beta[c], f, &mut prop);
                self.delay_delta(c, &prop, new)
            }
            Sigma::Dispersion(c) => {
                sp.scale_range(&self.s.kappa[c], f, &mut prop);
                self.kappa_delta(c, &prop, new)
            }
            Sigma::Reporting => {
                prop.push(self.s.rho);
                sp.scale_range(&self.s.pi_coefs, f, &mut prop);
                self.reporting_delta(&prop, new)
            }
        };
        delta += prior.ln_density(new) - prior.ln_density(old);
        // Jacobian of log σ and of the scaled penalized coefficients.
        let jacobian = u * (1 + sp.rank()) as f64;
        if self.rescale_kernel(which).decide(delta + jacobian, rng, adapt) {
            match which {
                Sigma::Trend => {
                    self.commit_total(&prop, delta);
                    self.s.sigma_alpha = new;
                }
                Sigma::Seasonal => {
                    self.commit_total(&prop, delta);
                    self.s.sigma_eta = new;
                }
                Sigma::Delay(c) => {
                    self.commit_delay(c, &prop, delta);
                    self.s.sigma_beta[c] = new;
                }
                Sigma::Dispersion(c) => {
                    self.commit_kappa(c, &prop, delta);
                    self.s.sigma_kappa[c] = new;
                }
                Sigma::Reporting => {
                    self.commit_reporting(&prop, delta);
                    self.s.sigma_pi = new;
                }
            }
        }
        self.prop = prop;
    }

    fn rescale_kernel(&mut self, which: Sigma) -> &mut ScalarKernel {
        let k = &mut self.k;
        match which {
            Sigma::Trend => &mut k.rescale_alpha,
            Sigma::Seasonal => &mut k.rescale_eta,
            Sigma::Delay(c) => &mut k.rescale_beta[c],
            Sigma::Dispersion(c) => &mut k.rescale_kappa[c],
            Sigma::Reporting => &mut k.rescale_pi,
        }
    }

    // ---- latent integers ---------------------------------------------------

    pub(crate) fn update_latent_y<R: Rng + ?Sized>(&mut self, r: usize, rng: &mut R, adapt: bool) {
        let row = &self.ctx.rows()[r];
        let y = self.s.latent_y[r];
        let Some(prop) = self.k.latent_y[r].propose(y, rng) else {
            self.k.latent_y[r].stay(adapt);
            return;
        };
        let ur = self.kind == (Kind::Gdm { ur: true });
        let lower = row.prefix_sum() as i64;
        let out_of_support = prop < lower || (ur && prop > self.s.latent_x[r] as i64);
        let mut delta = f64::NEG_INFINITY;
        let (mut a, mut b) = (0.0, 0.0);
        if !out_of_support {
            let yp = prop as u64;
            delta = 0.0;
            if ur {
                a = thinning_term(yp, self.s.latent_x[r], self.lpi[r]);
                delta += a - self.thin[r];
            } else {
                a = count_const(self.poisson, yp, self.s.theta[0]);
                b = count_kernel(self.poisson, yp, self.log_lambda[r], self.s.theta[0]);
                delta += a + b - self.tot_c[r] - self.tot_k[r];
            }
            for c in 0..self.m(r) {
                let v = gdm_cell_term(self.multinomial, row.observed[c], yp - row.cum[c], self.eff[r][c], self.lphi[r][c]);
                self.resid[c] = v;
                delta += v - self.cell[r][c];
            }
        }
        if self.k.latent_y[r].decide(delta, rng, adapt) {
            self.s.latent_y[r] = prop as u64;
            self.lp += delta;
            if ur {
                self.thin[r] = a;
            } else {
                self.tot_c[r] = a;
                self.tot_k[r] = b;
            }
            let m = self.m(r);
            self.cell[r][..m].copy_from_slice(&self.resid[..m]);
        }
    }

    pub(crate) fn update_latent_x<R: Rng + ?Sized>(&mut self, r: usize, rng: &mut R, adapt: bool) {
        let x = self.s.latent_x[r];
        let Some(prop) = self.k.latent_x[r].propose(x, rng) else {
            self.k.latent_x[r].stay(adapt);
            return;
        };
        let y = self.s.latent_y[r];
        let mut delta = f64::NEG_INFINITY;
        let (mut a, mut b, mut th) = (0.0, 0.0, 0.0);
        if prop >= y as i64 {
            let xp = prop as u64;
            a = count_const(self.poisson, xp, self.s.theta[0]);
            b = count_kernel(self.poisson, xp, self.log_lambda[r], self.s.theta[0]);
            th = thinning_term(y, xp, self.lpi[r]);
            delta = a + b + th - self.tot_c[r] - self.tot_k[r] - self.thin[r];
        }
        if self.k.latent_x[r].decide(delta, rng, adapt) {
            self.s.latent_x[r] = prop as u64;
            self.lp += delta;
            self.tot_c[r] = a;
            self.tot_k[r] = b;
            self.thin[r] = th;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sigma {
    Trend,
    Seasonal,
    Delay(usize),
    Dispersion(usize),
    Reporting,
}
