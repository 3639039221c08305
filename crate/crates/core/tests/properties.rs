use fbnn_core::baselines::{SwagState, VariationalState};
use fbnn_core::diagnostics::{calibration_bins, equal_frequency_sizes, ess, hellinger_grid, Grid};
use fbnn_core::math;
use fbnn_core::nn::forward;
use fbnn_core::rng::stream;
use fbnn_core::{Activation, GaussianPriorSpec, Matrix, MlpSpec, OutputActivation, ParamVector};
use proptest::prelude::*;

proptest! {
    #[test]
    fn swag_moments_match_columns(rows in 2usize..8, cols in 1usize..5, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = stream(seed, 0);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-3.0..3.0)).collect();
        let h = Matrix::from_vec(rows, cols, data).unwrap();
        let s = SwagState::from_history(h.clone()).unwrap();
        for j in 0..cols {
            let col = h.column(j);
            prop_assert!((s.mu[j] - math::mean(&col)).abs() < 1e-12);
            prop_assert!((s.sigma_diag[j] - math::sample_variance(&col)).abs() < 1e-10);
            prop_assert!(s.sigma_diag[j] >= 0.0);
        }
    }

    #[test]
    fn kl_is_nonnegative(mu in prop::collection::vec(-5.0f64..5.0, 1..6), ls in -4.0f64..2.0, var in 0.1f64..10.0) {
        let n = mu.len();
        let s = VariationalState::new(mu, vec![ls; n], GaussianPriorSpec::new(var).unwrap()).unwrap();
        prop_assert!(s.kl() >= -1e-12);
    }

    #[test]
    fn ece_ignores_order(pairs in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 10..60), bins in 1usize..6, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let (conf, correct): (Vec<f64>, Vec<bool>) = pairs.iter().cloned().unzip();
        let (a, _) = calibration_bins(&conf, &correct, bins).unwrap();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut stream(seed, 0));
        let (conf, correct): (Vec<f64>, Vec<bool>) = shuffled.into_iter().unzip();
        let (b, _) = calibration_bins(&conf, &correct, bins).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn equal_frequency_bins_partition(n in 1usize..500, bins in 1usize..20) {
        let sizes = equal_frequency_sizes(n, bins);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn hellinger_symmetric_and_bounded(m in -2.0f64..2.0, s in 0.3f64..2.0) {
        let grid = Grid { lower: vec![-10.0], upper: vec![10.0], resolution: 400 };
        let a = |x: &[f64]| 0.5 * x[0] * x[0];
        let b = move |x: &[f64]| 0.5 * ((x[0] - m) / s).powi(2);
        let ab = hellinger_grid(a, b, &grid).unwrap();
        let ba = hellinger_grid(b, a, &grid).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!(hellinger_grid(a, a, &grid).unwrap() < 1e-12);
    }

    #[test]
    fn ess_within_bounds(xs in prop::collection::vec(-10.0f64..10.0, 4..300)) {
        let e = ess(&xs).unwrap();
        prop_assert!(e >= 1.0 && e <= xs.len() as f64);
    }

    #[test]
    fn spearman_bounded(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..50)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = math::spearman(&a, &b);
        prop_assert!(r.is_nan() || (-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
    }

    #[test]
    fn flatten_round_trips(sizes in prop::collection::vec(1usize..5, 2..5), seed in any::<u64>()) {
        let spec = MlpSpec::uniform(sizes, Activation::Tanh, OutputActivation::Identity).unwrap();
        let p = spec.init_scaled(1.0, &mut stream(seed, 0));
        let layers = p.unflatten(&spec).unwrap();
        prop_assert_eq!(ParamVector::flatten(&layers), p);
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), q in 2usize..5) {
        let spec = MlpSpec::uniform(vec![3, 4, q], Activation::Relu, OutputActivation::Softmax).unwrap();
        let theta = spec.init_scaled(3.0, &mut stream(seed, 0));
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5], [0.0, 0.0, 0.0], [40.0, -40.0, 9.0]]).unwrap();
        let out = forward(&spec, &theta.0, &x).unwrap();
        for i in 0..3 {
            let row = out.row(i);
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_quantile_inverts_cdf(means in prop::collection::vec(-3.0f64..3.0, 1..6), sd in 0.2f64..2.0, q in 0.01f64..0.99) {
        let x = math::normal_mixture_quantile(&means, sd, q);
        let cdf = means.iter().map(|m| math::normal_cdf((x - m) / sd)).sum::<f64>() / means.len() as f64;
        prop_assert!((cdf - q).abs() < 1e-6);
    }
}
