use fbnn_core::baselines::{
    elbo_and_grad, run_laplace, run_mc_dropout, LaplaceConfig, TrainConfig, VariationalState,
};
use fbnn_core::rng::{fill_standard_normal, stream};
use fbnn_core::{Activation, BnnPosterior, Dataset, GaussianPriorSpec, Likelihood, Matrix, MlpSpec, NoiseModel, OutputActivation};

fn data(n: usize, seed: u64) -> Dataset {
    let mut rng = stream(seed, 0);
    let mut x = Matrix::zeros(n, 2);
    fill_standard_normal(&mut rng, x.as_mut_slice());
    let mut e = vec![0.0; n];
    fill_standard_normal(&mut rng, &mut e);
    let y: Vec<f64> = (0..n)
        .map(|i| (1.5 * x.get(i, 0)).sin() - 0.5 * x.get(i, 1) + 0.1 * e[i])
        .collect();
    Dataset::regression(x, Matrix::from_vec(n, 1, y).unwrap()).unwrap()
}

#[test]
fn elbo_gradient_matches_finite_differences() {
    let spec = MlpSpec::uniform(vec![2, 3, 1], Activation::Tanh, OutputActivation::Identity).unwrap();
    let d = data(30, 1);
    let noise = NoiseModel::isotropic(0.2, 1).unwrap();
    let post = BnnPosterior::new(&spec, &d, &noise, GaussianPriorSpec::new(2.0).unwrap(), Likelihood::Gaussian).unwrap();
    let mu = spec.init_scaled(1.0, &mut stream(2, 0)).into_inner();
    let ls: Vec<f64> = (0..mu.len()).map(|i| -1.0 - 0.1 * i as f64).collect();
    let prior = post.prior();
    // The same seed gives the same noise draws, so the estimate is smooth in (mu, log sigma).
    let elbo = |mu: &[f64], ls: &[f64]| {
        let s = VariationalState::new(mu.to_vec(), ls.to_vec(), prior).unwrap();
        elbo_and_grad(&s, &post, 3, &mut stream(9, 0)).unwrap()
    };
    let g = elbo(&mu, &ls);
    let h = 1e-6;
    for k in 0..mu.len() {
        let (mut a, mut b) = (mu.clone(), mu.clone());
        a[k] += h;
        b[k] -= h;
        let fd = (elbo(&a, &ls).elbo - elbo(&b, &ls).elbo) / (2.0 * h);
        assert!((fd - g.grad_mu[k]).abs() < 1e-4 * fd.abs().max(1.0), "mu[{k}]: {fd} vs {}", g.grad_mu[k]);
        let (mut a, mut b) = (ls.clone(), ls.clone());
        a[k] += h;
        b[k] -= h;
        let fd = (elbo(&mu, &a).elbo - elbo(&mu, &b).elbo) / (2.0 * h);
        assert!(
            (fd - g.grad_log_sigma[k]).abs() < 1e-4 * fd.abs().max(1.0),
            "log_sigma[{k}]: {fd} vs {}",
            g.grad_log_sigma[k]
        );
    }
}

#[test]
fn laplace_precision_matches_conjugate_closed_form() {
    // Linear model: the GGN diagonal plus prior precision and damping is exact.
    let spec = MlpSpec::uniform(vec![2, 1], Activation::Identity, OutputActivation::Identity).unwrap();
    let d = data(80, 3);
    let noise_var = 0.3;
    let prior_var = 2.0;
    let noise = NoiseModel::isotropic(noise_var, 1).unwrap();
    let post = BnnPosterior::new(&spec, &d, &noise, GaussianPriorSpec::new(prior_var).unwrap(), Likelihood::Gaussian).unwrap();
    let cfg = LaplaceConfig::default();
    let state = run_laplace(&post, &cfg, &mut stream(4, 0)).unwrap();
    let n = d.len();
    let expect = [
        (0..n).map(|i| d.x.get(i, 0).powi(2)).sum::<f64>() / noise_var + 1.0 / prior_var,
        (0..n).map(|i| d.x.get(i, 1).powi(2)).sum::<f64>() / noise_var + 1.0 / prior_var,
        n as f64 / noise_var + 1.0 / prior_var,
    ];
    for (h, e) in state.hessian_diag.iter().zip(expect) {
        let e = e + cfg.damping;
        assert!((h / e - 1.0).abs() < 1e-9, "{h} vs {e}");
    }
    assert_eq!(state.floored, 0);
}

#[test]
fn mc_dropout_spread_grows_with_rate() {
    let spec = MlpSpec::uniform(vec![2, 32, 1], Activation::Tanh, OutputActivation::Identity).unwrap();
    let d = data(100, 5);
    let noise = NoiseModel::isotropic(0.05, 1).unwrap();
    let post = BnnPosterior::new(&spec, &d, &noise, GaussianPriorSpec::default(), Likelihood::Gaussian).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let model = run_mc_dropout(&post, &cfg, 0.1, &mut stream(6, 0)).unwrap();
    let x = d.x.clone();
    let mut prev = 0.0;
    for rate in [0.0, 0.1, 0.3, 0.5] {
        let mut m = model.clone();
        m.dropout = fbnn_core::Dropout::hidden(&spec, rate);
        let draws = m.predictive(&spec, &x, 200, &mut stream(7, 0)).unwrap();
        let spread: f64 = (0..x.rows())
            .map(|i| fbnn_core::math::sample_variance(&draws.values_at(i, 0)))
            .sum::<f64>()
            / x.rows() as f64;
        if rate == 0.0 {
            assert!(spread < 1e-20, "{spread}");
        } else {
            assert!(spread > prev, "rate {rate}: {spread} <= {prev}");
        }
        prev = spread;
    }
}
