//! Penalized cubic regression splines (natural, linear beyond the boundary
//! knots) and cyclic cubic splines.
//!
//! Both bases are parametrized by the function values at the knots. The
//! second derivatives at the knots are the linear map `F β` that makes the
//! piecewise cubic C², and the wiggliness penalty `∫ f''²` is `βᵀ S β` with
//! `S = Dᵀ B⁻¹ D`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile_linear;

const NULL_SPACE_SD: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplineKind {
    CubicLinearTail,
    Cyclic,
}

#[derive(Debug, Clone)]
pub struct SplineBasis {
    kind: SplineKind,
    knots: Vec<f64>,
    /// `(k × k)` map from knot values to knot second derivatives.
    second_deriv: DMatrix<f64>,
    points: Vec<f64>,
    design: DMatrix<f64>,
    penalty: DMatrix<f64>,
    /// Reparametrization `β = Z γ` of a centered basis.
    constraint: Option<DMatrix<f64>>,
    null_dim: usize,
    range: (f64, f64),
    period: Option<f64>,
}

/// `σ = 1/√τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessParam {
    pub sigma: f64,
}

impl SmoothnessParam {
    pub fn from_sigma(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!("smoothing sd must be positive, got {sigma}")));
        }
        Ok(Self { sigma })
    }

    pub fn from_tau(tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Domain(format!("penalty scale must be positive, got {tau}")));
        }
        Ok(Self { sigma: tau.sqrt().recip() })
    }

    pub fn tau(&self) -> f64 {
        self.sigma.powi(-2)
    }
}

fn distinct_sorted(points: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = points.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    u
}

fn tridiagonal_inverse_map(b: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    b.clone()
        .cholesky()
        .map(|c| c.solve(d))
        .ok_or_else(|| Error::Numerical("spline knot system is singular".into()))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn count_null(penalty: &DMatrix<f64>) -> usize {
    let eig = SymmetricEigen::new(penalty.clone());
    let max = eig.eigenvalues.amax();
    eig.eigenvalues.iter().filter(|v| v.abs() <= 1e-9 * max.max(1e-300)).count()
}

/// Cubic regression spline with `n_basis` knots at quantiles of the distinct
/// `points`. Evaluation is allowed on `extrapolation_range`, which must
/// contain the knots; beyond the boundary knots the function is linear.
pub fn build_cubic_basis(
    points: &[f64],
    n_basis: usize,
    extrapolation_range: (f64, f64),
) -> Result<SplineBasis> {
    if n_basis < 3 {
        return Err(Error::Config(format!("cubic spline needs at least 3 knots, got {n_basis}")));
    }
    if points.is_empty() || points.iter().any(|p| !p.is_finite()) {
        return Err(Error::Config("spline construction points must be finite and non-empty".into()));
    }
    let uniq = distinct_sorted(points);
    if n_basis > uniq.len() {
        return Err(Error::Config(format!(
            "{n_basis} basis functions exceed the {} distinct points",
            uniq.len()
        )));
    }
    let k = n_basis;
    let knots: Vec<f64> = (0..k)
        .map(|j| quantile_linear(&uniq, j as f64 / (k - 1) as f64))
        .collect();
    let (lo, hi) = extrapolation_range;
    if !(lo <= knots[0] && hi >= knots[k - 1]) {
        return Err(Error::Config(format!(
            "extrapolation range [{lo}, {hi}] does not contain the knots [{}, {}]",
            knots[0],
            knots[k - 1]
        )));
    }
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let mut d = DMatrix::zeros(k - 2, k);
    let mut b = DMatrix::zeros(k - 2, k - 2);
    for i in 0..k - 2 {
        d[(i, i)] = 1.0 / h[i];
        d[(i, i + 1)] = -1.0 / h[i] - 1.0 / h[i + 1];
        d[(i, i + 2)] = 1.0 / h[i + 1];
        b[(i, i)] = (h[i] + h[i + 1]) / 3.0;
        if i + 1 < k - 2 {
            b[(i, i + 1)] = h[i + 1] / 6.0;
            b[(i + 1, i)] = h[i + 1] / 6.0;
        }
    }
    let inner = tridiagonal_inverse_map(&b, &d)?;
    let mut second_deriv = DMatrix::zeros(k, k);
    second_deriv.rows_mut(1, k - 2).copy_from(&inner);
    let penalty = symmetrize(d.transpose() * &inner);
    finish(SplineKind::CubicLinearTail, knots, second_deriv, penalty, points, (lo, hi), None)
}

/// Cyclic cubic spline with `n_basis` equispaced knots over
/// `[first point, first point + period)`; the value, slope and curvature
/// match across the wrap.
pub fn build_cyclic_basis(points: &[f64], n_basis: usize, period: f64) -> Result<SplineBasis> {
    if n_basis < 3 {
        return Err(Error::Config(format!("cyclic spline needs at least 3 knots, got {n_basis}")));
    }
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::Config(format!("cyclic period must be positive, got {period}")));
    }
    if points.is_empty() || points.iter().any(|p| !p.is_finite()) {
        return Err(Error::Config("spline construction points must be finite and non-empty".into()));
    }
    let origin = points.iter().cloned().fold(f64::INFINITY, f64::min);
    let n = n_basis;
    let distinct_phases = distinct_sorted(
        &points.iter().map(|p| (p - origin).rem_euclid(period)).collect::<Vec<_>>(),
    );
    if n > distinct_phases.len() {
        return Err(Error::Config(format!(
            "{n} basis functions exceed the {} distinct phases",
            distinct_phases.len()
        )));
    }
    let step = period / n as f64;
    let knots: Vec<f64> = (0..=n).map(|j| origin + j as f64 * step).collect();
    let h = step;
    let mut d = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let next = (i + 1) % n;
        d[(i, i)] += -2.0 / h;
        d[(i, prev)] += 1.0 / h;
        d[(i, next)] += 1.0 / h;
        b[(i, i)] += 2.0 * h / 3.0;
        b[(i, prev)] += h / 6.0;
        b[(i, next)] += h / 6.0;
    }
    let second_deriv = tridiagonal_inverse_map(&b, &d)?;
    let penalty = symmetrize(d.transpose() * &second_deriv);
    finish(
        SplineKind::Cyclic,
        knots,
        second_deriv,
        penalty,
        points,
        (f64::NEG_INFINITY, f64::INFINITY),
        Some(period),
    )
}

fn finish(
    kind: SplineKind,
    knots: Vec<f64>,
    second_deriv: DMatrix<f64>,
    penalty: DMatrix<f64>,
    points: &[f64],
    range: (f64, f64),
    period: Option<f64>,
) -> Result<SplineBasis> {
    let null_dim = count_null(&penalty);
    let mut basis = SplineBasis {
        kind,
        knots,
        second_deriv,
        points: points.to_vec(),
        design: DMatrix::zeros(0, 0),
        penalty,
        constraint: None,
        null_dim,
        range,
        period,
    };
    basis.design = basis.design_at(points)?;
    Ok(basis)
}

/// Imposes `Σ_points f = 0` by the Householder reparametrization `β = Z γ`,
/// dropping one dimension.
pub fn center_basis(b: &SplineBasis) -> Result<SplineBasis> {
    if b.constraint.is_some() {
        return Err(Error::Config("basis is already centered".into()));
    }
    let c: DVector<f64> = b.design.row_sum().transpose();
    let k = c.len();
    let norm = c.norm();
    if norm == 0.0 {
        return Err(Error::Numerical("centering constraint is zero".into()));
    }
    let mut v = c.clone();
    v[0] += if c[0] >= 0.0 { norm } else { -norm };
    let h = DMatrix::identity(k, k) - (&v * v.transpose()) * (2.0 / v.norm_squared());
    let z = h.columns(1, k - 1).into_owned();
    let penalty = symmetrize(z.transpose() * &b.penalty * &z);
    let design = &b.design * &z;
    Ok(SplineBasis {
        null_dim: count_null(&penalty),
        penalty,
        design,
        constraint: Some(z),
        ..b.clone()
    })
}

impl SplineBasis {
    pub fn kind(&self) -> SplineKind {
        self.kind
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Design matrix at the construction points.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn centered(&self) -> bool {
        self.constraint.is_some()
    }

    pub fn null_dim(&self) -> usize {
        self.null_dim
    }

    pub fn dim(&self) -> usize {
        self.penalty.nrows()
    }

    pub fn rank(&self) -> usize {
        self.dim() - self.null_dim
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    /// Basis row at `x` in the (possibly centered) coefficient space.
    pub fn evaluate(&self, x: f64) -> Result<Vec<f64>> {
        let raw = self.evaluate_raw(x)?;
        Ok(match &self.constraint {
            None => raw,
            Some(z) => (0..z.ncols())
                .map(|j| raw.iter().enumerate().map(|(i, r)| r * z[(i, j)]).sum())
                .collect(),
        })
    }

    pub fn design_at(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(xs.len(), self.dim());
        for (r, &x) in xs.iter().enumerate() {
            for (c, v) in self.evaluate(x)?.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        Ok(m)
    }

    fn evaluate_raw(&self, x: f64) -> Result<Vec<f64>> {
        if !x.is_finite() {
            return Err(Error::OutOfRange(x));
        }
        match self.kind {
            SplineKind::CubicLinearTail => self.evaluate_natural(x),
            SplineKind::Cyclic => Ok(self.evaluate_cyclic(x)),
        }
    }

    fn evaluate_natural(&self, x: f64) -> Result<Vec<f64>> {
        let (lo, hi) = self.range;
        if x < lo - 1e-9 || x > hi + 1e-9 {
            return Err(Error::OutOfRange(x));
        }
        let kn = &self.knots;
        let k = kn.len();
        let f = &self.second_deriv;
        let mut row = vec![0.0; k];
        if x < kn[0] {
            // f(x₁) + (x − x₁) f'(x₁)
            let h = kn[1] - kn[0];
            let dx = x - kn[0];
            row[0] += 1.0 - dx / h;
            row[1] += dx / h;
            for c in 0..k {
                row[c] += dx * (-h / 3.0 * f[(0, c)] - h / 6.0 * f[(1, c)]);
            }
            return Ok(row);
        }
        if x > kn[k - 1] {
            let h = kn[k - 1] - kn[k - 2];
            let dx = x - kn[k - 1];
            row[k - 2] += -dx / h;
            row[k - 1] += 1.0 + dx / h;
            for c in 0..k {
                row[c] += dx * (h / 6.0 * f[(k - 2, c)] + h / 3.0 * f[(k - 1, c)]);
            }
            return Ok(row);
        }
        let j = kn.partition_point(|&v| v <= x).clamp(1, k - 1) - 1;
        self.segment(x, kn[j], kn[j + 1], j, j + 1, &mut row);
        Ok(row)
    }

    fn evaluate_cyclic(&self, x: f64) -> Vec<f64> {
        let period = self.period.expect("cyclic basis has a period");
        let n = self.knots.len() - 1;
        let origin = self.knots[0];
        let phase = (x - origin).rem_euclid(period);
        let step = period / n as f64;
        let j = ((phase / step).floor() as usize).min(n - 1);
        let mut row = vec![0.0; n];
        self.segment(origin + phase, self.knots[j], self.knots[j + 1], j, (j + 1) % n, &mut row);
        row
    }

    /// Adds the cubic on `[xl, xr]` between coefficients `jl` and `jr`.
    fn segment(&self, x: f64, xl: f64, xr: f64, jl: usize, jr: usize, row: &mut [f64]) {
        let h = xr - xl;
        let (am, ap) = ((xr - x) / h, (x - xl) / h);
        let cm = ((xr - x).powi(3) / h - h * (xr - x)) / 6.0;
        let cp = ((x - xl).powi(3) / h - h * (x - xl)) / 6.0;
        row[jl] += am;
        row[jr] += ap;
        let f = &self.second_deriv;
        for c in 0..row.len() {
            row[c] += cm * f[(jl, c)] + cp * f[(jr, c)];
        }
    }

    /// Writes the design at `xs` as CSV with a leading `x` column.
    pub fn write_design_csv<W: Write>(&self, xs: &[f64], out: W) -> Result<()> {
        let m = self.design_at(xs)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["x".to_string()];
        header.extend((1..=m.ncols()).map(|j| format!("b{j}")));
        w.write_record(&header)?;
        for (r, x) in xs.iter().enumerate() {
            let mut rec = vec![x.to_string()];
            rec.extend(m.row(r).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<design>", e))?;
        Ok(())
    }

    pub fn prior(&self) -> SplinePrior {
        SplinePrior::new(&self.penalty)
    }
}

/// Gaussian smoothing prior of one coefficient block: precision `τ S` on
/// the penalty range space and a fixed `Normal(0, 10²)` ridge on each
/// null-space direction.
#[derive(Debug, Clone)]
pub struct SplinePrior {
    penalty: DMatrix<f64>,
    rank: usize,
    /// `½ ln pdet(S) − (rank/2) ln 2π`
    range_const: f64,
    /// Orthonormal columns spanning the penalty null space.
    null_basis: DMatrix<f64>,
}

impl SplinePrior {
    pub fn new(penalty: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(penalty.clone());
        let max = eig.eigenvalues.amax().max(1e-300);
        let tol = 1e-9 * max;
        let mut ln_pdet = 0.0;
        let mut null_cols = Vec::new();
        for (i, &ev) in eig.eigenvalues.iter().enumerate() {
            if ev.abs() <= tol {
                null_cols.push(eig.eigenvectors.column(i).into_owned());
            } else {
                ln_pdet += ev.ln();
            }
        }
        let rank = penalty.nrows() - null_cols.len();
        let null_basis = if null_cols.is_empty() {
            DMatrix::zeros(penalty.nrows(), 0)
        } else {
            DMatrix::from_columns(&null_cols)
        };
        Self {
            penalty: penalty.clone(),
            rank,
            range_const: 0.5 * ln_pdet - rank as f64 * HALF_LN_2PI,
            null_basis,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.penalty.nrows()
    }

    /// `cᵀ S c`
    pub fn quadratic(&self, coefs: &[f64]) -> f64 {
        let k = coefs.len();
        let mut q = 0.0;
        for i in 0..k {
            let mut s = 0.0;
            for j in 0..k {
                s += self.penalty[(i, j)] * coefs[j];
            }
            q += coefs[i] * s;
        }
        q
    }

    /// Prior precision of the coefficients at smoothing sd `sigma`: `S/σ²`
    /// plus the null-space ridge.
    pub fn precision(&self, sigma: f64) -> DMatrix<f64> {
        let ridge = &self.null_basis * self.null_basis.transpose() / (NULL_SPACE_SD * NULL_SPACE_SD);
        &self.penalty / (sigma * sigma) + ridge
    }

    /// Appends `N Nᵀc + f·(c − N Nᵀc)` to `out`: the penalized part of `c`
    /// scaled by `f`, the null-space part kept.
    pub fn scale_range(&self, coefs: &[f64], f: f64, out: &mut Vec<f64>) {
        let start = out.len();
        out.extend(coefs.iter().map(|c| f * c));
        for col in self.null_basis.column_iter() {
            let u: f64 = col.iter().zip(coefs).map(|(a, b)| a * b).sum();
            for (o, a) in out[start..].iter_mut().zip(col.iter()) {
                *o += (1.0 - f) * u * a;
            }
        }
    }

    /// The `σ`-free part: the null-space ridge plus normalizing constants.
    pub fn ln_density_fixed(&self, coefs: &[f64]) -> f64 {
        let mut out = self.range_const;
        for col in self.null_basis.column_iter() {
            let u: f64 = col.iter().zip(coefs).map(|(a, b)| a * b).sum();
            let z = u / NULL_SPACE_SD;
            out += -HALF_LN_2PI - NULL_SPACE_SD.ln() - 0.5 * z * z;
        }
        out
    }

    /// Terms that depend on `τ` given `q = cᵀSc`.
    #[inline]
    pub fn ln_density_tau_part(&self, tau: f64, quadratic: f64) -> f64 {
        0.5 * self.rank as f64 * tau.ln() - 0.5 * tau * quadratic
    }

    pub fn ln_density(&self, coefs: &[f64], smooth: SmoothnessParam) -> f64 {
        self.ln_density_tau_part(smooth.tau(), self.quadratic(coefs)) + self.ln_density_fixed(coefs)
    }
}

/// Proper Gaussian log-prior of a spline coefficient block.
pub fn spline_log_prior(
    coefs: &[f64],
    penalty: &DMatrix<f64>,
    smooth: SmoothnessParam,
) -> Result<f64> {
    if penalty.nrows() != coefs.len() || penalty.ncols() != coefs.len() {
        return Err(Error::Domain("coefficient and penalty dimensions differ".into()));
    }
    if !(smooth.sigma > 0.0) {
        return Err(Error::Domain("penalty scale must be positive".into()));
    }
    Ok(SplinePrior::new(penalty).ln_density(coefs, smooth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Vec<f64> {
        (1..=n).map(|t| t as f64).collect()
    }

    fn eval(b: &SplineBasis, coefs: &[f64], x: f64) -> f64 {
        b.evaluate(x).unwrap().iter().zip(coefs).map(|(a, c)| a * c).sum()
    }

    fn random_coefs(k: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn linear_beyond_boundary_knots() {
        let b = build_cubic_basis(&grid(120), 10, (1.0, 172.0)).unwrap();
        let c = random_coefs(10, 1);
        for x0 in [120.0, 140.0, 168.0] {
            let f: Vec<f64> = (0..4).map(|i| eval(&b, &c, x0 + i as f64)).collect();
            for w in f.windows(3) {
                assert!((w[2] - 2.0 * w[1] + w[0]).abs() < 1e-8);
            }
        }
        assert!(matches!(b.evaluate(173.0), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn knot_values_are_coefficients_and_penalty_kills_lines() {
        let b = build_cubic_basis(&grid(50), 6, (1.0, 50.0)).unwrap();
        let c = random_coefs(6, 2);
        for (j, &kn) in b.knots().iter().enumerate() {
            assert!((eval(&b, &c, kn) - c[j]).abs() < 1e-12);
        }
        let line: Vec<f64> = b.knots().iter().map(|k| 3.0 - 0.25 * k).collect();
        let q = SplinePrior::new(b.penalty()).quadratic(&line);
        assert!(q.abs() < 1e-10, "{q}");
        assert_eq!(b.null_dim(), 2);
    }

    #[test]
    fn matches_piecewise_polynomial_oracle() {
        // Independent oracle: solve the natural-spline moment equations
        // directly with a dense system and evaluate the cubic on each piece.
        let b = build_cubic_basis(&grid(40), 7, (1.0, 40.0)).unwrap();
        let c = random_coefs(7, 3);
        let x = b.knots().to_vec();
        let k = x.len();
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut rhs = DVector::<f64>::zeros(k);
        a[(0, 0)] = 1.0;
        a[(k - 1, k - 1)] = 1.0;
        for i in 1..k - 1 {
            let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
            a[(i, i - 1)] = h0;
            a[(i, i)] = 2.0 * (h0 + h1);
            a[(i, i + 1)] = h1;
            rhs[i] = 6.0 * ((c[i + 1] - c[i]) / h1 - (c[i] - c[i - 1]) / h0);
        }
        let m = a.lu().solve(&rhs).unwrap();
        for t in 1..=40 {
            let t = t as f64;
            let j = (0..k - 1).find(|&j| t <= x[j + 1]).unwrap();
            let h = x[j + 1] - x[j];
            let s = t - x[j];
            // Taylor form from the left knot
            let slope = (c[j + 1] - c[j]) / h - h * (2.0 * m[j] + m[j + 1]) / 6.0;
            let v = c[j] + slope * s + m[j] / 2.0 * s * s + (m[j + 1] - m[j]) / (6.0 * h) * s.powi(3);
            assert!((eval(&b, &c, t) - v).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn cyclic_is_periodic_and_smooth() {
        let b = build_cyclic_basis(&grid(120), 8, 52.0).unwrap();
        let c = random_coefs(8, 4);
        for t in [1.0, 7.3, 52.0, 53.0, 80.5] {
            let (r0, r1) = (b.evaluate(t).unwrap(), b.evaluate(t + 52.0).unwrap());
            for (a, bb) in r0.iter().zip(&r1) {
                assert!((a - bb).abs() < 1e-10);
            }
        }
        assert!((eval(&b, &c, 1.0) - eval(&b, &c, 53.0)).abs() < 1e-10);
        // symmetric differences straddling the wrap point
        let w = 1.0;
        let e = 1e-4;
        let left = (eval(&b, &c, w) - eval(&b, &c, w - e)) / e;
        let right = (eval(&b, &c, w + e) - eval(&b, &c, w)) / e;
        assert!((left - right).abs() < 1e-3);
        let d1 = |x: f64| (eval(&b, &c, x + e) - eval(&b, &c, x - e)) / (2.0 * e);
        assert!((d1(w - 2.0 * e) - d1(w + 2.0 * e)).abs() < 1e-6 * 1e2);
        let d2 = |x: f64| (eval(&b, &c, x + e) - 2.0 * eval(&b, &c, x) + eval(&b, &c, x - e)) / (e * e);
        assert!((d2(w - 3.0 * e) - d2(w + 3.0 * e)).abs() < 1e-2);
        let ones = vec![1.0; 8];
        assert!(SplinePrior::new(b.penalty()).quadratic(&ones).abs() < 1e-12);
        assert_eq!(b.null_dim(), 1);
    }

    #[test]
    fn centering_projects_out_the_mean() {
        let raw = build_cubic_basis(&grid(60), 8, (1.0, 80.0)).unwrap();
        let cen = center_basis(&raw).unwrap();
        assert_eq!(cen.dim(), 7);
        assert!(cen.centered());
        for s in cen.design().row_sum().iter() {
            assert!(s.abs() < 1e-10);
        }
        let beta = random_coefs(8, 5);
        let raw_fit = raw.design() * DVector::from_column_slice(&beta);
        let mean = raw_fit.mean();
        // least-squares coefficients of the centered fit reproduce raw − mean
        let target = raw_fit.add_scalar(-mean);
        let x = cen.design();
        let gamma = (x.transpose() * x).cholesky().unwrap().solve(&(x.transpose() * &target));
        assert!((x * &gamma - &target).amax() < 1e-9);
        // penalty preserved on the constrained space
        let z = cen.constraint.as_ref().unwrap();
        let b = z * &gamma;
        let q_raw = SplinePrior::new(raw.penalty()).quadratic(b.as_slice());
        let q_cen = SplinePrior::new(cen.penalty()).quadratic(gamma.as_slice());
        assert!((q_raw - q_cen).abs() < 1e-9 * q_raw.abs().max(1.0));
        assert_eq!(cen.null_dim(), 1);
        assert!(center_basis(&cen).is_err());
    }

    #[test]
    fn penalties_are_psd_with_expected_rank() {
        for b in [
            build_cubic_basis(&grid(100), 10, (1.0, 100.0)).unwrap(),
            build_cyclic_basis(&grid(100), 8, 52.0).unwrap(),
        ] {
            let eig = SymmetricEigen::new(b.penalty().clone());
            assert!(eig.eigenvalues.min() >= -1e-10);
            let prior = b.prior();
            assert_eq!(prior.rank(), b.dim() - b.null_dim());
        }
    }

    #[test]
    fn log_prior_algebra() {
        let b = center_basis(&build_cubic_basis(&grid(80), 6, (1.0, 90.0)).unwrap()).unwrap();
        let s = b.penalty();
        let c = random_coefs(5, 6);
        let zero = vec![0.0; 5];
        let sm = SmoothnessParam::from_tau(2.0).unwrap();
        let p0 = spline_log_prior(&zero, s, sm).unwrap();
        let p1 = spline_log_prior(&c, s, sm).unwrap();
        let p2 = spline_log_prior(&c, s, SmoothnessParam::from_tau(4.0).unwrap()).unwrap();
        let prior = SplinePrior::new(s);
        let q = prior.quadratic(&c);
        assert!((p2 - p1 - (0.5 * prior.rank() as f64 * 2f64.ln() - 0.5 * 2.0 * q)).abs() < 1e-10);
        assert!(p0 > p1);
        assert!(spline_log_prior(&c, s, SmoothnessParam { sigma: 0.0 }).is_err());
    }

    #[test]
    fn prior_normalizes_in_two_dimensions() {
        // Penalty of rank 1 in 2-D: Gaussian on the range, ridge on the null.
        let s = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let prior = SplinePrior::new(&s);
        let sm = SmoothnessParam::from_sigma(0.7).unwrap();
        let (n, lim) = (1200, 60.0);
        let h = 2.0 * lim / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let c = [-lim + (i as f64 + 0.5) * h, -lim + (j as f64 + 0.5) * h];
                acc += prior.ln_density(&c, sm).exp() * h * h;
            }
        }
        assert!((acc - 1.0).abs() < 1e-3, "{acc}");
    }

    #[test]
    fn sigma_tau_involution() {
        for s in [0.01, 0.5, 1.0, 42.0] {
            let p = SmoothnessParam::from_sigma(s).unwrap();
            let back = SmoothnessParam::from_tau(p.tau()).unwrap();
            assert!((back.sigma - s).abs() < 1e-14 * s.max(1.0));
        }
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(build_cubic_basis(&[1.0, 2.0, 2.0], 3, (1.0, 2.0)).is_err());
        assert!(build_cubic_basis(&grid(10), 2, (1.0, 10.0)).is_err());
        assert!(build_cubic_basis(&grid(10), 4, (2.0, 10.0)).is_err());
        assert!(build_cyclic_basis(&grid(10), 4, 0.0).is_err());
    }

    #[test]
    fn design_csv_has_header_and_rows() {
        let b = build_cyclic_basis(&grid(20), 4, 10.0).unwrap();
        let mut buf = Vec::new();
        b.write_design_csv(&[1.0, 2.0], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x,b1,b2,b3,b4\n"));
        assert_eq!(s.lines().count(), 3);
    }
}
