//! Fisher-scoring proposals for the linear-predictor blocks.
//!
//! Given the current coefficients `x`, the proposal is Gaussian with mean
//! `x + H(x)⁻¹ g(x)` and precision `H(x)`, where `g` is the gradient of the
//! block's log conditional and `H` the prior precision plus the expected
//! (or approximate) information of the likelihood. The reverse density is
//! evaluated at the proposed point, so the move is exact whatever the
//! quality of `H`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{GibbsSampler, Kind};
use crate::distributions::Prior;
use crate::model::ModelContext;
use crate::special::{digamma_shift, logistic};

/// Design rows `[1, basis rows...]` of a linear-predictor block.
pub(super) fn design(ctx: &ModelContext, smooths: &[Option<&crate::model::context::Smooth>]) -> DMatrix<f64> {
    let p = 1 + smooths.iter().flatten().map(|s| s.dim()).sum::<usize>();
    let mut x = DMatrix::zeros(ctx.n_rows(), p);
    for (r, row) in ctx.rows().iter().enumerate() {
        x[(r, 0)] = 1.0;
        let mut j = 1;
        for sm in smooths.iter().flatten() {
            for v in sm.row(row.t) {
                x[(r, j)] = *v;
                j += 1;
            }
        }
    }
    x
}

/// Score and expected information of a count with respect to its log-mean.
#[inline]
fn count_score(poisson: bool, y: u64, log_mean: f64, theta: f64) -> (f64, f64) {
    let mu = log_mean.exp();
    let y = y as f64;
    if poisson {
        (y - mu, mu)
    } else {
        let d = theta + mu;
        (theta * (y - mu) / d, theta * mu / d)
    }
}

/// Score of a conditional delay cell with respect to `logit ν`, and the
/// information of its Beta-Binomial moment approximation.
#[inline]
fn cell_score(multinomial: bool, z: u64, n: u64, logit_nu: f64, log_phi: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let nu = logistic(logit_nu);
    let one_minus = logistic(-logit_nu);
    let (zf, nf) = (z as f64, n as f64);
    let v = nu * one_minus;
    if multinomial {
        return (zf - nf * nu, nf * v);
    }
    let phi = log_phi.exp();
    let (a, b) = (nu * phi, one_minus * phi);
    let g = v * phi * (digamma_shift(a, z) - digamma_shift(b, n - z));
    (g, nf * v * (phi + 1.0) / (phi + nf))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Block {
    Total,
    Delay(usize),
}

struct Scoring {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl Scoring {
    /// `ln q(x′ | x)` up to a constant shared by both directions.
    fn ln_density(&self, at: &DVector<f64>) -> f64 {
        let l = self.chol.l();
        let v = l.tr_mul(&(at - &self.mean));
        l.diagonal().iter().map(|d| d.ln()).sum::<f64>() - 0.5 * v.norm_squared()
    }
}

impl GibbsSampler<'_> {
    /// Score and information of row `r` with respect to the block's linear
    /// predictor `eta`.
    fn row_score(&self, block: Block, r: usize, eta: f64) -> (f64, f64) {
        let row = &self.ctx.rows()[r];
        match (block, self.kind) {
            (Block::Total, Kind::Gdm { .. }) => count_score(self.poisson, self.count(r), eta, self.s.theta[0]),
            (Block::Total, Kind::Glm) => (0..row.k()).fold((0.0, 0.0), |(g, w), c| {
                let (a, b) = count_score(self.poisson, row.observed[c], eta + self.eff[r][c], self.s.theta[c]);
                (g + a, w + b)
            }),
            (Block::Delay(c), Kind::Gdm { .. }) if self.m(r) > c => cell_score(
                self.multinomial,
                row.observed[c],
                self.s.latent_y[r] - row.cum[c],
                eta,
                self.lphi[r][c],
            ),
            (Block::Delay(_), Kind::Gdm { .. }) => (0.0, 0.0),
            (Block::Delay(c), Kind::Glm) if row.k() > c => {
                count_score(self.poisson, row.observed[c], self.log_lambda[r] + eta, self.s.theta[c])
            }
            (Block::Delay(_), Kind::Glm) => (0.0, 0.0),
            (block, Kind::GlmPlus) => {
                // Gaussian in the predictor: exact score and information.
                let k = self.resid.len();
                let resid = |j: usize| match block {
                    Block::Total => self.s.logmu[r][j] - eta - self.eff[r][j],
                    Block::Delay(c) if j == c => self.s.logmu[r][j] - self.log_lambda[r] - eta,
                    Block::Delay(_) => self.s.logmu[r][j] - self.log_lambda[r] - self.eff[r][j],
                };
                let mut g = 0.0;
                let mut w = 0.0;
                for i in 0..k {
                    let pi = &self.prec[i * k..(i + 1) * k];
                    match block {
                        Block::Total => {
                            for (j, pij) in pi.iter().enumerate() {
                                g += pij * resid(j);
                                w += pij;
                            }
                        }
                        Block::Delay(c) if i == c => {
                            for (j, pij) in pi.iter().enumerate() {
                                g += pij * resid(j);
                            }
                            w += pi[c];
                        }
                        Block::Delay(_) => {}
                    }
                }
                (g, w)
            }
        }
    }

    /// Prior precision and mean of the block's intercept and coefficients,
    /// or `None` when the intercept prior is not Normal.
    fn block_prior(&self, block: Block) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let ctx = self.ctx;
        let (m0, sd0, smooths) = match block {
            Block::Total => {
                let Prior::Normal { mean, sd } = ctx.spec().priors.iota else { return None };
                (mean, sd, vec![(ctx.trend(), self.s.sigma_alpha), (ctx.seasonal(), self.s.sigma_eta)])
            }
            Block::Delay(c) => (
                ctx.psi_mean()[c],
                ctx.spec().priors.psi_sd,
                vec![(ctx.delay(), self.s.sigma_beta.get(c).copied().unwrap_or(1.0))],
            ),
        };
        let p = 1 + smooths.iter().filter_map(|(s, _)| s.map(|s| s.dim())).sum::<usize>();
        let mut h = DMatrix::zeros(p, p);
        let mut mean = DVector::zeros(p);
        h[(0, 0)] = 1.0 / (sd0 * sd0);
        mean[0] = m0;
        let mut o = 1;
        for (sm, sigma) in smooths {
            let Some(sm) = sm else { continue };
            let k = sm.dim();
            h.view_mut((o, o), (k, k)).copy_from(&sm.prior().precision(sigma));
            o += k;
        }
        Some((h, mean))
    }

    fn scoring_at(
        &self,
        block: Block,
        design: &DMatrix<f64>,
        prior: &(DMatrix<f64>, DVector<f64>),
        x: &DVector<f64>,
    ) -> Option<Scoring> {
        let (prior_h, prior_mean) = prior;
        let mut g = -(prior_h * (x - prior_mean));
        let eta = design * x;
        let mut weighted = design.clone();
        for r in 0..design.nrows() {
            let (gr, wr) = self.row_score(block, r, eta[r]);
            if !(gr.is_finite() && wr.is_finite()) {
                return None;
            }
            g.axpy(gr, &design.row(r).transpose(), 1.0);
            weighted.row_mut(r).scale_mut(wr);
        }
        let h = prior_h + design.tr_mul(&weighted);
        let chol = Cholesky::new(h)?;
        let mean = x + chol.solve(&g);
        Some(Scoring { mean, chol })
    }

    /// One Fisher-scoring Metropolis–Hastings update of a block; the
    /// random walk stands in when the intercept prior is not Normal.
    pub(super) fn update_scoring<R: Rng + ?Sized>(&mut self, block: Block, rng: &mut R, adapt: bool) {
        let Some(prior) = self.block_prior(block) else {
            match block {
                Block::Total => self.update_total(rng, adapt),
                Block::Delay(c) => self.update_delay(c, rng, adapt),
            }
            return;
        };
        let mut x = Vec::new();
        let design = match block {
            Block::Total => {
                x.push(self.s.iota);
                x.extend(&self.s.alpha);
                x.extend(&self.s.eta);
                std::mem::take(&mut self.total_design)
            }
            Block::Delay(c) => {
                x.push(self.s.psi[c]);
                if let Some(b) = self.s.beta.get(c) {
                    x.extend(b);
                }
                std::mem::take(&mut self.delay_design)
            }
        };
        let x = DVector::from_vec(x);
        let mut ok = false;
        if let Some(fwd) = self.scoring_at(block, &design, &prior, &x) {
            let z = DVector::from_fn(x.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let step = fwd.chol.l().tr_solve_lower_triangular(&z).expect("non-singular factor");
            let prop = &fwd.mean + step;
            let delta = match block {
                Block::Total => self.total_delta(prop.as_slice(), self.s.sigma_alpha, self.s.sigma_eta),
                Block::Delay(c) => {
                    let sb = self.s.sigma_beta.get(c).copied().unwrap_or(1.0);
                    self.delay_delta(c, prop.as_slice(), sb)
                }
            };
            if delta > f64::NEG_INFINITY {
                if let Some(rev) = self.scoring_at(block, &design, &prior, &prop) {
                    let log_ratio = delta + rev.ln_density(&x) - fwd.ln_density(&prop);
                    if log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp() {
                        match block {
                            Block::Total => self.commit_total(prop.as_slice(), delta),
                            Block::Delay(c) => self.commit_delay(c, prop.as_slice(), delta),
                        }
                        ok = true;
                    }
                }
            }
        }
        match block {
            Block::Total => self.total_design = design,
            Block::Delay(_) => self.delay_design = design,
        }
        if !adapt {
            self.scoring.record(ok);
        }
    }
}
