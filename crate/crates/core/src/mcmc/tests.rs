use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gibbs::GibbsSampler;
use super::*;
use crate::distributions::{
    log_pmf_binomial, log_pmf_neg_binomial, sample_gdm, sample_neg_binomial, DelayMeanDispersion,
    reparam_mean_dispersion, MvnParams, NegBinParams, Prior,
};
use crate::model::{ReportingPredictor, Variant};
use crate::special::logit;
use crate::stats::{mean, variance};

/// Small GDM-generated triangle: `n` rows, `D = d`, constant ν and φ.
fn synthetic(n: usize, d: usize, present: usize, seed: u64) -> ReportingTriangle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gd = reparam_mean_dispersion(&DelayMeanDispersion::new(vec![0.4; d], vec![20.0; d]).unwrap());
    let cells = (0..n)
        .map(|t| {
            let lam = 60.0 * (1.0 + 0.3 * (t as f64 / 8.0).sin());
            let y = sample_neg_binomial(&NegBinParams::new(lam, 15.0).unwrap(), &mut rng);
            sample_gdm(&gd, y, &mut rng)
        })
        .collect();
    ReportingTriangle::censor(cells, present).unwrap()
}

fn small_spec(variant: Variant, d: usize) -> ModelSpec {
    let mut s = ModelSpec::new(variant, d);
    s.total.trend_basis = 5;
    s.total.seasonal_basis = 0;
    s.delay.basis = 4;
    if variant == Variant::GdmUr {
        s.reporting = Some(ReportingPredictor {
            intercept: Prior::Normal { mean: 2.0, sd: 0.5 },
            basis: 0,
        });
    }
    s
}

fn quick(n_iterations: usize, burn_in: usize) -> SamplerConfig {
    SamplerConfig {
        n_chains: 2,
        n_iterations,
        burn_in,
        thin: 1,
        threads: Some(1),
        ..SamplerConfig::desk()
    }
}

fn check_tracking(spec: &ModelSpec, tri: &ReportingTriangle, seed: u64) {
    let ctx = ModelContext::new(spec, tri).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s, _) = init::initialize(&ctx, &mut rng).unwrap();
    let cfg = SamplerConfig::desk();
    let mut g = GibbsSampler::new(&ctx, s, cfg.schedule, &cfg.adaptation);
    for it in 0..150 {
        g.sweep(&mut rng, it < 100);
        if it % 15 == 14 {
            let exact = log_posterior(&ctx, &g.s);
            assert!(
                (g.lp - exact).abs() < 1e-8 * exact.abs().max(1.0),
                "{:?} sweep {it}: cached {} vs exact {exact}",
                spec.variant,
                g.lp
            );
        }
    }
}

#[test]
fn cached_conditionals_track_the_full_log_posterior() {
    let tri = synthetic(30, 3, 27, 1);
    for v in [Variant::Gdm, Variant::GdmUr, Variant::Glm, Variant::GlmPlus] {
        check_tracking(&small_spec(v, 3), &tri, 2);
    }
    let mut spec = small_spec(Variant::Gdm, 3);
    spec.total.seasonal_basis = 6;
    spec.total.period = 12.0;
    spec.dispersion.basis = 4;
    check_tracking(&spec, &tri, 3);
    let mut spec = small_spec(Variant::Gdm, 3);
    spec.multinomial_limit = true;
    spec.poisson_limit = true;
    check_tracking(&spec, &tri, 4);
    let mut spec = small_spec(Variant::GdmUr, 3);
    spec.reporting.as_mut().unwrap().basis = 4;
    check_tracking(&spec, &tri, 5);
    let mut spec = small_spec(Variant::Glm, 3);
    spec.poisson_limit = true;
    check_tracking(&spec, &tri, 6);
}

#[test]
fn same_seed_gives_identical_draws() {
    let tri = synthetic(25, 2, 22, 7);
    let spec = small_spec(Variant::Gdm, 2);
    let cfg = quick(300, 100);
    let a = run_chains(&spec, &tri, &cfg).unwrap();
    let b = run_chains(&spec, &tri, &SamplerConfig { threads: Some(2), ..cfg.clone() }).unwrap();
    assert_eq!(a.chains, b.chains);
    let c = run_chains(&spec, &tri, &SamplerConfig { seed: 2, ..cfg }).unwrap();
    assert_ne!(a.chains[0].blocks, c.chains[0].blocks);
}

#[test]
fn chains_start_from_different_points() {
    let tri = synthetic(25, 2, 22, 7);
    let ctx = ModelContext::new(&small_spec(Variant::Gdm, 2), &tri).unwrap();
    let a = init::initialize(&ctx, &mut chain_rng(1, 0)).unwrap().0;
    let b = init::initialize(&ctx, &mut chain_rng(1, 1)).unwrap().0;
    assert_ne!(a.iota, b.iota);
}

#[test]
fn adaptation_is_frozen_after_burn_in_and_latents_respect_bounds() {
    let tri = synthetic(25, 2, 22, 8);
    for v in [Variant::Gdm, Variant::GdmUr] {
        let spec = small_spec(v, 2);
        let s = run_chains(&spec, &tri, &quick(400, 200)).unwrap();
        let ctx = ModelContext::new(&spec, &tri).unwrap();
        for ch in &s.chains {
            assert!(!ch.stats.scales_after_burn_in.is_empty());
            assert_eq!(ch.stats.scales_after_burn_in, ch.stats.scales_at_end);
        }
        for st in s.states(&ctx) {
            let st = st.unwrap();
            for (r, row) in ctx.rows().iter().enumerate() {
                assert!(st.latent_y[r] >= row.prefix_sum());
                if v == Variant::GdmUr {
                    assert!(st.latent_x[r] >= st.latent_y[r]);
                }
            }
        }
        assert_eq!(s.n_kept(), 200);
    }
}

#[test]
fn prior_only_intercept_matches_its_prior() {
    let mut spec = ModelSpec::new(Variant::Gdm, 2);
    spec.total.trend_basis = 0;
    spec.total.seasonal_basis = 0;
    spec.delay.basis = 0;
    spec.priors.iota = Prior::Normal { mean: 1.5, sd: 2.0 };
    let ctx = ModelContext::prior_only(&spec, 10).unwrap();
    let cfg = SamplerConfig {
        n_chains: 4,
        n_iterations: 12_000,
        burn_in: 2000,
        thin: 1,
        threads: Some(1),
        ..SamplerConfig::desk()
    };
    let s = run_chains_in(&ctx, &cfg).unwrap();
    let chains = s.column("iota").unwrap();
    let all: Vec<f64> = chains.iter().flatten().cloned().collect();
    let ess = effective_sample_size(&chains).value;
    let mc_mean = 2.0 / ess.sqrt();
    assert!((mean(&all) - 1.5).abs() < 3.0 * mc_mean, "mean {}", mean(&all));
    // sd of the sample sd of a Normal is about σ/√(2·ESS)
    let sd = variance(&all).sqrt();
    assert!((sd - 2.0).abs() < 3.0 * 2.0 / (2.0 * ess).sqrt(), "sd {sd}");
}

#[test]
fn latent_total_with_no_observed_cells_follows_the_count_distribution() {
    // the third row lies beyond the present day and has no observed cells
    let tri = ReportingTriangle::censor(vec![vec![5, 3, 2], vec![7, 1, 0], vec![0, 0, 0]], 2).unwrap();
    let mut spec = ModelSpec::new(Variant::Gdm, 2);
    spec.total.trend_basis = 0;
    spec.total.seasonal_basis = 0;
    spec.delay.basis = 0;
    let ctx = ModelContext::new(&spec, &tri).unwrap();
    assert_eq!(ctx.rows()[2].k(), 0);
    let mut s = ParameterState::zeros(&ctx);
    s.iota = 20f64.ln();
    s.theta = vec![4.0];
    s.latent_y = vec![10, 8, 0];
    let cfg = SamplerConfig::desk();
    let mut g = GibbsSampler::new(&ctx, s, cfg.schedule, &cfg.adaptation);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5000 {
        g.update_latent_y(2, &mut rng, true);
    }
    let mut draws = Vec::new();
    for _ in 0..200_000 {
        g.update_latent_y(2, &mut rng, false);
        draws.push(g.s.latent_y[2] as f64);
    }
    let ess = effective_sample_size(&[draws.clone()]).value;
    let (m, v) = (20.0, 20.0 + 400.0 / 4.0);
    assert!((mean(&draws) - m).abs() < 3.0 * (v / ess).sqrt(), "mean {}", mean(&draws));
    // variance check: sd of the sample variance ≈ v·√((2 + excess kurtosis)/ESS)
    let kurt = 6.0 / 4.0 + 1.0 / (20.0 * 0.2 * 1.0);
    assert!((variance(&draws) - v).abs() < 3.0 * v * ((2.0 + kurt) / ess).sqrt());
}

fn ur_fixture(y: u64, rho: f64) -> (ModelContext, ParameterState) {
    let tri = ReportingTriangle::censor(vec![vec![y, 0]], 5).unwrap();
    let mut spec = ModelSpec::new(Variant::GdmUr, 1);
    spec.total.trend_basis = 0;
    spec.total.seasonal_basis = 0;
    spec.delay.basis = 0;
    spec.reporting = Some(ReportingPredictor {
        intercept: Prior::Normal { mean: 0.0, sd: 1.0 },
        basis: 0,
    });
    let ctx = ModelContext::new(&spec, &tri).unwrap();
    let mut s = ParameterState::zeros(&ctx);
    s.iota = 6f64.ln();
    s.theta = vec![3.0];
    s.rho = rho;
    s.latent_x = vec![y];
    (ctx, s)
}

#[test]
fn true_count_marginal_matches_enumeration() {
    let (y, pi, lam, theta) = (3u64, 0.6, 6.0, 3.0);
    let (ctx, s) = ur_fixture(y, logit(pi));
    let cfg = SamplerConfig::desk();
    let mut g = GibbsSampler::new(&ctx, s, cfg.schedule, &cfg.adaptation);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5000 {
        g.update_latent_x(0, &mut rng, true);
    }
    let mut draws = Vec::new();
    for _ in 0..200_000 {
        g.update_latent_x(0, &mut rng, false);
        draws.push(g.s.latent_x[0] as f64);
    }
    let nb = NegBinParams::new(lam, theta).unwrap();
    let logw: Vec<f64> = (y..400)
        .map(|x| log_pmf_neg_binomial(x, &nb) + log_pmf_binomial(y, x, pi).unwrap())
        .collect();
    let norm = crate::special::log_sum_exp(&logw);
    let p: Vec<f64> = logw.iter().map(|l| (l - norm).exp()).collect();
    let m: f64 = p.iter().enumerate().map(|(i, pi)| (y as f64 + i as f64) * pi).sum();
    let v: f64 = p.iter().enumerate().map(|(i, pi)| (y as f64 + i as f64 - m).powi(2) * pi).sum();
    let ess = effective_sample_size(&[draws.clone()]).value;
    assert!((mean(&draws) - m).abs() < 3.0 * (v / ess).sqrt(), "{} vs {m}", mean(&draws));
    // P(x = y) against its exact value
    let hit: Vec<f64> = draws.iter().map(|&x| (x == y as f64) as u8 as f64).collect();
    let ess_hit = effective_sample_size(&[hit.clone()]).value;
    assert!((mean(&hit) - p[0]).abs() < 3.0 * (p[0] * (1.0 - p[0]) / ess_hit).sqrt());
}

#[test]
fn full_reporting_pins_the_true_count() {
    let (ctx, s) = ur_fixture(4, f64::INFINITY);
    let cfg = SamplerConfig::desk();
    let mut g = GibbsSampler::new(&ctx, s, cfg.schedule, &cfg.adaptation);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..2000 {
        g.update_latent_x(0, &mut rng, false);
        assert_eq!(g.s.latent_x[0], 4);
    }
}

#[test]
fn conjugate_covariance_update_matches_the_analytic_posterior() {
    let k = 3;
    let n = 60;
    let truth = DMatrix::from_row_slice(k, k, &[1.0, 0.3, 0.1, 0.3, 0.5, -0.1, 0.1, -0.1, 0.8]);
    let cells: Vec<Vec<u64>> = (0..n).map(|_| vec![1, 1, 1]).collect();
    let tri = ReportingTriangle::censor(cells, n).unwrap();
    let mut spec = ModelSpec::new(Variant::GlmPlus, 2);
    spec.total.trend_basis = 0;
    spec.total.seasonal_basis = 0;
    spec.delay.basis = 0;
    let ctx = ModelContext::new(&spec, &tri).unwrap();
    let mut s = ParameterState::zeros(&ctx);
    let mvn = MvnParams::new(nalgebra::DVector::zeros(k), truth).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut scatter = DMatrix::<f64>::zeros(k, k);
    for r in 0..n {
        let e = mvn.sample(&mut rng);
        s.logmu[r] = e.iter().cloned().collect();
        scatter += &e * e.transpose();
    }
    let cfg = SamplerConfig::desk();
    let mut g = GibbsSampler::new(&ctx, s, cfg.schedule, &cfg.adaptation);
    let reps = 20_000;
    let mut acc = DMatrix::<f64>::zeros(k, k);
    for _ in 0..reps {
        g.update_covariance(&mut rng);
        acc += g.s.cov.as_ref().unwrap();
    }
    acc /= reps as f64;
    let df = spec.covariance_df() + n as f64;
    let analytic = (DMatrix::identity(k, k) + scatter) / (df - k as f64 - 1.0);
    for i in 0..k {
        for j in 0..k {
            let scale = (analytic[(i, i)] * analytic[(j, j)]).sqrt();
            assert!(
                (acc[(i, j)] - analytic[(i, j)]).abs() < 0.05 * scale,
                "({i},{j}): {} vs {}",
                acc[(i, j)],
                analytic[(i, j)]
            );
        }
    }
    let exact = log_posterior(&ctx, &g.s);
    assert!((g.lp - exact).abs() < 1e-8 * exact.abs());
}

/// Gaussian regression on a centered spline basis with fixed σ: the
/// posterior is Normal with precision `XᵀX + A`, `A` the prior precision.
#[test]
fn spline_block_matches_gaussian_conjugate_posterior() {
    use crate::splines::{build_cubic_basis, center_basis};
    let pts: Vec<f64> = (1..=30).map(|t| t as f64).collect();
    let basis = center_basis(&build_cubic_basis(&pts, 6, (1.0, 30.0)).unwrap()).unwrap();
    let prior = basis.prior();
    let x = basis.design().clone();
    let p = x.ncols();
    let sigma: f64 = 0.7;
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let yobs: Vec<f64> = (0..30).map(|i| (i as f64 / 5.0).sin() + 0.5 * rng.random::<f64>()).collect();
    let lnp = |c: &[f64]| prior.ln_density_tau_part(sigma.powi(-2), prior.quadratic(c)) + prior.ln_density_fixed(c);
    // prior precision from the exact quadratic
    let zero = vec![0.0; p];
    let f0 = lnp(&zero);
    let unit = |i: usize| {
        let mut e = zero.clone();
        e[i] = 1.0;
        e
    };
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut eij = unit(i);
            eij[j] += 1.0;
            a[(i, j)] = if i == j {
                -2.0 * (lnp(&unit(i)) - f0)
            } else {
                -(lnp(&eij) - lnp(&unit(i)) - lnp(&unit(j)) + f0)
            };
        }
    }
    let prec = x.transpose() * &x + &a;
    let cov = prec.clone().try_inverse().unwrap();
    let yv = nalgebra::DVector::from_vec(yobs.clone());
    let post_mean = &cov * (x.transpose() * yv);
    let target = |c: &[f64]| {
        let cv = nalgebra::DVector::from_row_slice(c);
        let r = &x * cv - nalgebra::DVector::from_vec(yobs.clone());
        -0.5 * r.norm_squared() + lnp(c)
    };
    let mut k = kernels::BlockKernel::new(&DMatrix::identity(p, p), 0.234, 50);
    let mut c = vec![0.0; p];
    for i in 0..20_000 {
        if i == 5000 {
            k.reset_empirical();
        }
        update_block_rw(&mut k, &mut c, target, &mut rng, true);
    }
    let mut draws = vec![Vec::new(); p];
    for _ in 0..100_000 {
        update_block_rw(&mut k, &mut c, target, &mut rng, false);
        for j in 0..p {
            draws[j].push(c[j]);
        }
    }
    for j in 0..p {
        let ess = effective_sample_size(&[draws[j].clone()]).value;
        let mcse = (cov[(j, j)] / ess).sqrt();
        assert!(
            (mean(&draws[j]) - post_mean[j]).abs() < 3.0 * mcse,
            "coef {j}: {} vs {} (mcse {mcse})",
            mean(&draws[j]),
            post_mean[j]
        );
    }
}

#[test]
fn hopeless_priors_fail_initialization() {
    let tri = synthetic(10, 2, 10, 16);
    let mut spec = small_spec(Variant::Gdm, 2);
    spec.priors.iota = Prior::Normal { mean: 1e300, sd: 1e-300 };
    let err = run_chains(&spec, &tri, &quick(10, 5)).unwrap_err();
    assert!(matches!(err, Error::Initialization(_)), "{err}");
}

#[test]
fn samples_round_trip_through_disk() {
    let tri = synthetic(20, 2, 18, 17);
    for v in [Variant::GdmUr, Variant::GlmPlus] {
        let spec = small_spec(v, 2);
        let s = run_chains(&spec, &tri, &quick(60, 30)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path()).unwrap();
        let back = PosteriorSamples::load(dir.path()).unwrap();
        assert_eq!(back.block_labels, s.block_labels);
        assert_eq!(back.latent_y_labels, s.latent_y_labels);
        for (a, b) in back.chains.iter().zip(&s.chains) {
            assert_eq!(a.blocks, b.blocks);
            assert_eq!(a.latent_y, b.latent_y);
            assert_eq!(a.latent_x, b.latent_x);
            assert_eq!(a.log_posterior, b.log_posterior);
            assert_eq!(a.stats.acceptance, b.stats.acceptance);
        }
        let ctx = ModelContext::new(&spec, &tri).unwrap();
        assert_eq!(back.state(&ctx, 1, 5).unwrap().iota, s.state(&ctx, 1, 5).unwrap().iota);
    }
}
