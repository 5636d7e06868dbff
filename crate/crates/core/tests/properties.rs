use percept_ops::composition::{predict_mean_estimate, Strategy as ReadStrategy};
use percept_ops::distributions::{GaussianOpParams, Sgt, SgtParams, UnivariateDistribution};
use percept_ops::evaluation::{pit_values, PitMode};
use percept_ops::fitting::fit_projection_errors;
use percept_ops::numeric::Kde;
use percept_ops::operators::{bahp, bahp_weight, BahpParams, ProjectionParams};
use percept_ops::perceptual_space::{Axis, ViewingContext};
use percept_ops::seed::rng_from_seed;
use percept_ops::stimuli::{default_scatter_context, gbm_design, GbmConfig};
use proptest::prelude::*;

fn sgt_params() -> impl Strategy<Value = SgtParams> {
    (-2.0f64..2.0, 0.5f64..2.5, -0.9f64..0.9, 2.0f64..4.0, 1.0f64..50.0)
        .prop_filter_map("finite variance", |(mu, sigma, lambda, p, q)| {
            (p * q > 2.0).then(|| SgtParams::new(mu, sigma, lambda, p, q).ok()).flatten()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sgt_cdf_is_a_monotone_probability(params in sgt_params(), a in -6.0f64..6.0, step in 0.0f64..3.0) {
        let sgt = Sgt::new(params).unwrap();
        let (fa, fb) = (sgt.cdf(a), sgt.cdf(a + step));
        prop_assert!((0.0..=1.0).contains(&fa) && (0.0..=1.0).contains(&fb));
        prop_assert!(fb >= fa - 1e-12);
    }

    #[test]
    fn sgt_peaks_at_mu(params in sgt_params(), offset in 0.01f64..3.0) {
        let sgt = Sgt::new(params).unwrap();
        prop_assert!(sgt.pdf(params.mu) >= sgt.pdf(params.mu + offset));
        prop_assert!(sgt.pdf(params.mu) >= sgt.pdf(params.mu - offset));
    }

    #[test]
    fn value_roundtrip(dist in 20.0f64..150.0, ppc in 20.0f64..60.0, v in -50.0f64..150.0) {
        let ctx = ViewingContext::scatter_chart(dist, ppc, (0.0, 61.0), (0.0, 100.0)).unwrap();
        for axis in [Axis::X, Axis::Y] {
            let back = ctx.va_to_value(ctx.value_to_va(v, axis).unwrap(), axis).unwrap();
            prop_assert!((back - v).abs() <= 1e-9 * v.abs().max(1.0));
        }
    }

    #[test]
    fn fusion_weight_and_mean_stay_between_operators(
        med in -5.0f64..5.0,
        gap in -6.0f64..6.0,
        ba_beta in -0.5f64..0.5,
        ba_sigma in 0.1f64..2.0,
        hp_beta in -0.5f64..0.5,
        hp_sigma in 0.1f64..2.0,
    ) {
        let params = BahpParams::new(
            GaussianOpParams::fixed(ba_beta, ba_sigma).unwrap(),
            GaussianOpParams::fixed(hp_beta, hp_sigma).unwrap(),
        ).unwrap();
        let mode = med + gap;
        let w = bahp_weight(mode, med, &params).unwrap();
        prop_assert!(w > 0.0 && w < 1.0);
        let g = bahp(med, mode, &params).unwrap();
        let (a, b) = (med + ba_beta, mode + hp_beta);
        prop_assert!(g.mean >= a.min(b) - 1e-12 && g.mean <= a.max(b) + 1e-12);
        prop_assert!(g.sd <= ba_sigma.max(hp_sigma) + 1e-12);
    }

    #[test]
    fn projection_fit_is_shift_and_scale_equivariant(
        seed in 0u64..1000,
        shift in -1.0f64..1.0,
        scale in 0.2f64..5.0,
    ) {
        let mut rng = rng_from_seed(seed);
        let d: Vec<f64> = (0..50).map(|_| 0.5 + 10.0 * rand::Rng::random::<f64>(&mut rng)).collect();
        let e: Vec<f64> = d.iter().map(|di| 0.05 * di * (rand::Rng::random::<f64>(&mut rng) - 0.5)).collect();
        let base = fit_projection_errors(&e, &d).unwrap().params;
        let moved: Vec<f64> = e.iter().map(|v| scale * v + shift).collect();
        let fit = fit_projection_errors(&moved, &d).unwrap().params;
        prop_assert!((fit.beta - (scale * base.beta + shift)).abs() <= 1e-9);
        prop_assert!((fit.alpha - scale * base.alpha).abs() <= 1e-9 * fit.alpha);
    }

    #[test]
    fn kde_density_is_finite_and_peaks_near_data(xs in prop::collection::vec(-10.0f64..10.0, 5..60), q in -50.0f64..50.0) {
        let kde = Kde::new(&xs);
        let v = kde.log_density(q);
        prop_assert!(v.is_finite() || v == f64::NEG_INFINITY);
        let best = xs.iter().map(|&x| kde.log_density(x)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(best.is_finite());
    }

    #[test]
    fn pit_values_lie_in_the_unit_interval(obs in prop::collection::vec(-3.0f64..3.0, 1..20), seed in 0u64..100) {
        let draws: Vec<Vec<f64>> = obs.iter().map(|_| (0..100).map(|i| i as f64 / 33.0 - 1.5).collect()).collect();
        let mut rng = rng_from_seed(seed);
        for mode in [PitMode::Randomized, PitMode::Mid] {
            let pit = pit_values(&obs, &draws, mode, &mut rng).unwrap();
            prop_assert!(pit.iter().all(|u| (0.0..=1.0).contains(u)));
        }
    }

    #[test]
    fn strategy_tags_roundtrip(i in 0usize..6) {
        let s = ReadStrategy::ALL[i];
        prop_assert_eq!(s.to_string().parse::<ReadStrategy>().unwrap(), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn draws_do_not_depend_on_the_draw_count(seed in 0u64..1000, i in 0usize..6, short in 1usize..20) {
        let ctx = default_scatter_context().unwrap();
        let stim = &gbm_design(seed, 1, &GbmConfig::default()).unwrap()[0];
        let proj = ProjectionParams::new(0.05, 0.04).unwrap();
        let s = ReadStrategy::ALL[i];
        let a = predict_mean_estimate(stim, &ctx, &proj, s, short, seed).unwrap().draws;
        let b = predict_mean_estimate(stim, &ctx, &proj, s, 40, seed).unwrap().draws;
        prop_assert_eq!(&a[..], &b[..short]);
    }
}

#[test]
fn sgt_is_a_univariate_distribution() {
    let sgt = Sgt::new(SgtParams::new(0.0, 1.0, 0.0, 2.0, 1e6).unwrap()).unwrap();
    // Near-Gaussian limit with unit variance.
    assert!((UnivariateDistribution::cdf(&sgt, 1.0) - 0.841_344_746).abs() < 1e-4);
}
