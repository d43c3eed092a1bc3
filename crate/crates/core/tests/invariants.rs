use nowcast_core::distributions::{
    log_pmf_gdm, log_pmf_stick_multinomial, sample_gdm, stick_breaking_probabilities, GDParams,
};
use nowcast_core::stats::{quantile_inverse_cdf, quantile_linear};
use nowcast_core::triangle::{cumulative_proportion_quantiles, ReportingTriangle};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn compositions(y: u64, parts: usize) -> Vec<Vec<u64>> {
    if parts == 1 {
        return vec![vec![y]];
    }
    (0..=y)
        .flat_map(|first| {
            compositions(y - first, parts - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn gd_params() -> impl Strategy<Value = GDParams> {
    (1usize..4)
        .prop_flat_map(|k| (vec(0.05f64..30.0, k), vec(0.05f64..30.0, k)))
        .prop_map(|(a, b)| GDParams::new(a, b).unwrap())
}

proptest! {
    #[test]
    fn gdm_pmf_is_normalized(gd in gd_params(), y in 0u64..8) {
        let total: f64 = compositions(y, gd.parts()).iter().map(|z| log_pmf_gdm(z, &gd, y).unwrap().exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn stick_multinomial_is_normalized(nu in vec(0.01f64..0.99, 1..4), y in 0u64..8) {
        let total: f64 = compositions(y, nu.len() + 1)
            .iter()
            .map(|z| log_pmf_stick_multinomial(z, &nu, y).unwrap().exp())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn stick_breaking_shares_sum_to_one(nu in vec(0.0f64..=1.0, 1..10)) {
        let p = stick_breaking_probabilities(&nu);
        prop_assert_eq!(p.len(), nu.len() + 1);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gdm_draws_are_compositions(gd in gd_params(), y in 0u64..500, seed in any::<u64>()) {
        let z = sample_gdm(&gd, y, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(z.len(), gd.parts());
        prop_assert_eq!(z.iter().sum::<u64>(), y);
    }

    #[test]
    fn wide_csv_round_trip(
        cells in (1usize..6).prop_flat_map(|w| vec(vec(0u64..1000, w), 1..15)),
        present in 0usize..20,
    ) {
        let tri = ReportingTriangle::censor(cells, present).unwrap();
        let mut buf = Vec::new();
        tri.write_wide_csv(&mut buf).unwrap();
        let back = ReportingTriangle::read_wide_csv(buf.as_slice(), present, tri.maturity()).unwrap();
        prop_assert_eq!(back, tri);
    }

    #[test]
    fn quantiles_are_monotone(mut xs in vec(-1e6f64..1e6, 1..50), p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
        xs.sort_by(f64::total_cmp);
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(quantile_linear(&xs, lo) <= quantile_linear(&xs, hi));
        prop_assert!(quantile_inverse_cdf(&xs, lo) <= quantile_inverse_cdf(&xs, hi));
        prop_assert!(xs[0] <= quantile_linear(&xs, lo) && quantile_linear(&xs, hi) <= xs[xs.len() - 1]);
    }

    #[test]
    fn cumulative_proportions_increase_with_delay(
        cells in vec(vec(0u64..200, 5), 6..20),
    ) {
        let n = cells.len();
        let tri = ReportingTriangle::censor(cells, n + 5).unwrap();
        let probs = [0.2, 0.5, 0.8];
        if let Ok(q) = cumulative_proportion_quantiles(&tri, &probs) {
            for d in 0..q.len() {
                for j in 0..probs.len() {
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&q[d][j]));
                    if d > 0 {
                        prop_assert!(q[d - 1][j] <= q[d][j] + 1e-12);
                    }
                    if j > 0 {
                        prop_assert!(q[d][j - 1] <= q[d][j] + 1e-12);
                    }
                }
            }
        }
    }
}
