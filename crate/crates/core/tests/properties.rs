use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stnet::inference::{
    bic, covariance_matrix, fit_ml, fold_assignment, krige, log_likelihood, profile_loglik, simulate, Dataset,
    FitOptions, FitSpec, NelderMeadOptions, Observation, Target,
};
use stnet::models::WeightedSum;
use stnet::validate::{check_cnd, check_pd, InstanceConfig, InstanceNetwork};
use stnet::{
    full_covariance, parse_model_spec, CovModel, ModelKind, ModelSpec, Network, SpaceTimeCovariance,
    SpaceTimeSeparation,
};

/// Random tree with `n_sites` random points, each observed at times 1..=n_times.
fn random_dataset(seed: u64, n_edges: usize, n_sites: usize, n_times: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network::random_tree(&mut rng, n_edges, 0.5, 3.0);
    let mut sites = Vec::new();
    while sites.len() < n_sites {
        let p = net.random_point(&mut rng);
        if !sites.contains(&p) {
            sites.push(p);
        }
    }
    let records: Vec<(usize, f64)> = (0..n_sites).flat_map(|s| (1..=n_times).map(move |t| (s, t as f64))).collect();
    let n = records.len();
    let design = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
    let response = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    Dataset::new(net, sites, records, response, design).unwrap()
}

fn model5(t1: f64, t2: f64, t3: f64, t4: f64, sigma2: f64, nugget: f64) -> CovModel {
    CovModel::new(ModelKind::Model5 { theta1: t1, theta2: t2, theta3: t3, theta4: t4 }, sigma2, nugget)
}

fn dense_loglik(data: &Dataset, model: &CovModel, beta: &DVector<f64>) -> f64 {
    let n = data.len();
    let sigma = DMatrix::from_fn(n, n, |i, j| {
        let (si, ti) = data.records[i];
        let (sj, tj) = data.records[j];
        full_covariance(model, &SpaceTimeSeparation::between(data.geometry(), si, sj, (ti - tj).abs())).unwrap()
    });
    let r = &data.response - &data.design * beta;
    let lu = sigma.clone().lu();
    let quad = r.dot(&lu.solve(&r).unwrap());
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + lu.determinant().ln() + quad)
}

fn quick_fit() -> FitOptions {
    FitOptions { optimizer: NelderMeadOptions { max_evaluations: 80, restarts: 0, ..Default::default() } }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn loglik_matches_dense_oracle(
        seed in 0u64..1000,
        t1 in 0.5f64..20.0, t2 in 0.5f64..10.0, t3 in 0.2f64..2.0, t4 in 0.3f64..3.0,
        sigma2 in 0.2f64..3.0, nugget in 0.01f64..1.0,
        b0 in -2.0f64..2.0, b1 in -2.0f64..2.0,
    ) {
        let data = random_dataset(seed, 8, 5, 3);
        let model = model5(t1, t2, t3, t4, sigma2, nugget);
        let beta = DVector::from_vec(vec![b0, b1]);
        let ours = log_likelihood(&data, &model, &beta).unwrap();
        let dense = dense_loglik(&data, &model, &beta);
        prop_assert!((ours - dense).abs() < 1e-8 * (1.0 + dense.abs()), "{ours} vs {dense}");
    }

    #[test]
    fn covariance_peaks_at_the_origin(
        d in 0.0f64..50.0, u in 0.0f64..50.0,
        c in 0.1f64..5.0, nu in 0.05f64..1.0, kappa in 0.1f64..5.0, beta in 0.0f64..1.0, extra in 0.0f64..2.0, b in 0.05f64..1.0,
        t1 in 0.1f64..20.0, t2 in 0.1f64..20.0, t3 in 0.05f64..2.0, t4 in 0.1f64..5.0,
        sigma2 in 0.1f64..5.0, nugget in 0.0f64..1.0,
    ) {
        let models = [
            CovModel::new(ModelKind::Model1 { c, nu, kappa, beta, tau: beta / 2.0 + extra, b }, sigma2, nugget),
            CovModel::new(ModelKind::Model2 { a: nu, alpha: 0.5 + extra, b, c, nu: kappa }, sigma2, nugget),
            model5(t1, t2, t3, t4, sigma2, nugget),
        ];
        for m in &models {
            let origin = full_covariance(m, &SpaceTimeSeparation { same_site: true, ..SpaceTimeSeparation::isotropic(0.0, 0.0) }).unwrap();
            let here = full_covariance(m, &SpaceTimeSeparation::isotropic(d, u)).unwrap();
            prop_assert!(here <= origin + 1e-15, "{m}: C({d},{u}) = {here} > {origin}");
            prop_assert!(here >= 0.0);
        }
    }

    #[test]
    fn model_spec_round_trips(
        t1 in 0.01f64..100.0, t2 in 0.01f64..100.0, t3 in 0.01f64..2.0, t4 in 0.01f64..10.0,
        sigma2 in 0.01f64..10.0, nugget in 0.0f64..5.0, fix_mask in 0u8..64,
    ) {
        let model = model5(t1, t2, t3, t4, sigma2, nugget);
        let free: Vec<bool> = (0..6).map(|i| fix_mask & (1 << i) == 0).collect();
        let spec = ModelSpec { model, free };
        let text = spec.to_string();
        let back = parse_model_spec(&text).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn kriging_a_constant_field_returns_the_constant(seed in 0u64..1000, level in -5.0f64..5.0) {
        let data = random_dataset(seed, 6, 4, 3);
        let n = data.len();
        let flat = Dataset::new(
            data.net.clone(),
            data.sites.clone(),
            data.records.clone(),
            DVector::from_element(n, level),
            DMatrix::from_element(n, 1, 1.0),
        ).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let targets: Vec<Target> = (0..3)
            .map(|i| Target { point: flat.net.random_point(&mut rng), time: 0.5 + i as f64, design: vec![1.0], observed: None })
            .collect();
        let pred = krige(&flat, &model5(5.0, 2.0, 1.0, 1.0, 1.0, 0.2), &targets).unwrap();
        for p in &pred.predictions {
            prop_assert!((p.mean - level).abs() < 1e-9, "{} vs {level}", p.mean);
            prop_assert!(p.variance >= 0.0);
        }
    }

    #[test]
    fn kriging_variance_does_not_grow_with_more_data(seed in 0u64..1000, drop in 0usize..12) {
        let full = random_dataset(seed, 6, 4, 3);
        let keep: Vec<usize> = (0..full.len()).filter(|&i| i != drop).collect();
        let fewer = Dataset::new(
            full.net.clone(),
            full.sites.clone(),
            keep.iter().map(|&i| full.records[i]).collect(),
            DVector::from_iterator(keep.len(), keep.iter().map(|&i| full.response[i])),
            DMatrix::from_fn(keep.len(), 2, |r, c| full.design[(keep[r], c)]),
        ).unwrap();
        let model = model5(4.0, 3.0, 1.2, 1.0, 1.5, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
        let targets = vec![Target { point: full.net.random_point(&mut rng), time: 2.5, design: vec![1.0, 0.3], observed: None }];
        let with_all = krige(&full, &model, &targets).unwrap().predictions[0].variance;
        let without = krige(&fewer, &model, &targets).unwrap().predictions[0].variance;
        prop_assert!(with_all <= without + 1e-10, "{with_all} > {without}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn fit_never_ends_below_its_start(seed in 0u64..1000) {
        let data = random_dataset(seed, 6, 5, 3);
        let start = model5(2.0, 2.0, 1.0, 1.0, 1.0, 0.5);
        let fit = fit_ml(&data, &FitSpec::all_free(start.clone()), &quick_fit()).unwrap();
        let (initial, _) = profile_loglik(&data, &start).unwrap();
        prop_assert!((fit.initial_loglik - initial).abs() < 1e-9);
        prop_assert!(fit.loglik >= initial - 1e-12);
        prop_assert_eq!(fit.n_params, 6 + 2);
        prop_assert_eq!(fit.n_obs, data.len());
        prop_assert!((fit.bic - bic(fit.loglik, fit.n_params, fit.n_obs)).abs() < 1e-12);
        prop_assert!((fit.bic - (-2.0 * fit.loglik + 8.0 * (data.len() as f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn convex_combinations_stay_positive_definite(w in 0.0f64..1.0, seed in 0u64..1000) {
        let a = CovModel::new(ModelKind::Model1 { c: 1.0, nu: 0.5, kappa: 2.0, beta: 0.8, tau: 0.6, b: 0.7 }, 1.0, 0.0);
        let b = model5(3.0, 2.0, 1.5, 1.0, 1.0, 0.0);
        let mix = WeightedSum { parts: vec![(w, &a as &dyn SpaceTimeCovariance), (1.0 - w, &b)] };
        let cfg = InstanceConfig { instances: 6, max_records: 20, seed, ..Default::default() };
        let r = check_pd(&mix, InstanceNetwork::RandomTrees { min_edges: 3, max_edges: 15 }, &cfg).unwrap();
        prop_assert!(r.pass, "{r}");
    }

    #[test]
    fn variogram_of_a_tree_covariance_is_cnd(scale in 0.1f64..10.0, power in 0.1f64..1.0, seed in 0u64..1000) {
        // exp(-(d/scale)^power) is positive definite on trees; f(0) - f(d) must then be CND.
        let f = |d: f64| (-(d / scale).powf(power)).exp();
        let cfg = InstanceConfig { instances: 8, max_records: 20, seed, ..Default::default() };
        let r = check_cnd(|d| f(0.0) - f(d), InstanceNetwork::RandomTrees { min_edges: 3, max_edges: 20 }, &cfg).unwrap();
        prop_assert!(r.pass, "{r}");
    }

    #[test]
    fn folds_ignore_row_order(seed in 0u64..1000, shuffle in 0u64..1000, k in 2usize..5) {
        let data = random_dataset(seed, 6, 6, 2);
        let mut obs: Vec<Observation> = data.observations();
        obs.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let permuted = Dataset::from_observations(data.net.clone(), &obs).unwrap();
        let fa = fold_assignment(&data, k, 42).unwrap();
        let fb = fold_assignment(&permuted, k, 42).unwrap();
        for (i, p) in data.sites.iter().enumerate() {
            let j = permuted.sites.iter().position(|q| q == p).unwrap();
            prop_assert_eq!(fa[i], fb[j]);
        }
        let mut sizes = vec![0; k];
        for &f in &fa {
            sizes[f] += 1;
        }
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

#[test]
fn simulation_is_reproducible_and_has_the_model_covariance() {
    let data = random_dataset(3, 6, 3, 2);
    let model = model5(4.0, 2.0, 1.0, 1.0, 2.0, 0.3);
    let beta = DVector::from_vec(vec![1.0, -0.5]);
    let a = simulate(&data, &model, &beta, 17).unwrap();
    assert_eq!(a, simulate(&data, &model, &beta, 17).unwrap());
    assert_ne!(a, simulate(&data, &model, &beta, 18).unwrap());

    let n = data.len();
    let draws = 20_000;
    let mean = &data.design * &beta;
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for seed in 0..draws {
        let r = simulate(&data, &model, &beta, seed).unwrap() - &mean;
        acc += &r * r.transpose();
    }
    acc /= draws as f64;
    let sigma = covariance_matrix(&data, &model).unwrap();
    // Sampling error of a covariance entry is about sqrt(2/draws) * variance.
    let err = (&acc - &sigma).amax();
    assert!(err < 6.0 * (2.0 / draws as f64).sqrt() * 2.3, "max deviation {err}");
}

#[test]
fn white_noise_simulation_has_unit_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Network::random_tree(&mut rng, 10, 1.0, 2.0);
    let sites: Vec<_> = (0..20).map(|_| net.random_point(&mut rng)).collect();
    let records: Vec<(usize, f64)> = (0..20).flat_map(|s| (0..20).map(move |t| (s, t as f64))).collect();
    let n = records.len();
    let data = Dataset::new(net, sites, records, DVector::zeros(n), DMatrix::from_element(n, 1, 1.0)).unwrap();
    let model = CovModel::new(ModelKind::WhiteNoise, 1.0, 0.0);
    let zero = DVector::from_vec(vec![0.0]);
    let mut sum_sq = 0.0;
    for seed in 0..25 {
        sum_sq += simulate(&data, &model, &zero, seed).unwrap().norm_squared();
    }
    let var = sum_sq / (25 * n) as f64;
    assert!((var - 1.0).abs() < 0.05, "sample variance {var}");
}
