use aetc::ensemble::{sample_joint, CostSchedule, RegressorLaw, SyntheticEnsemble, SyntheticLinearSpec};
use aetc::linalg::trace;
use aetc::regress::{fit_subset, ExplorationLog, IncrementalFit};
use aetc::rng::RandomStream;
use aetc::subset::Subset;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn ensemble() -> SyntheticEnsemble {
    SyntheticEnsemble::new(SyntheticLinearSpec {
        mean_x: vec![1.0, 2.0, -1.0],
        cov_x: vec![vec![1.0, 0.6, 0.5], vec![0.6, 1.0, 0.4], vec![0.5, 0.4, 1.0]],
        beta: vec![vec![1.0, 0.2, 1.0, 0.1]],
        noise_cov: vec![vec![0.3]],
        costs: CostSchedule::new(1.0, vec![0.2, 0.01, 0.05]).unwrap(),
        regressor_law: RegressorLaw::Gaussian,
        seed: 0,
    })
    .unwrap()
}

fn log_of(ens: &SyntheticEnsemble, t: usize, seed: u64, label: &str) -> ExplorationLog {
    let samples = sample_joint(ens, t, &mut RandomStream::derive(seed, label, 0)).unwrap();
    ExplorationLog::from_samples(ens.spec().mean_x.len(), 1, &samples).unwrap()
}

#[test]
fn coefficient_error_within_five_standard_radii() {
    let ens = ensemble();
    let s = Subset::from_one_based(&[2, 3]).unwrap();
    let oracle = ens.oracle_quantities(&s).unwrap();
    let t = 10_000;
    let lambda_inv = oracle.lambda.clone().try_inverse().unwrap();
    let radius = 5.0 * (trace(&lambda_inv) * oracle.sigma_sq().unwrap() / t as f64).sqrt();
    let mut errors: Vec<f64> = (0..100)
        .map(|r| {
            let fit = fit_subset(&log_of(&ens, t, r, "beta"), &s).unwrap();
            (&fit.beta_hat - &oracle.beta).norm()
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    assert!(errors[98] <= radius, "99th percentile {} vs {radius}", errors[98]);
}

#[test]
fn sample_covariance_converges_at_root_t() {
    let ens = ensemble();
    let s = Subset::full(3);
    let oracle = ens.oracle_quantities(&s).unwrap();
    let ts = [100usize, 1000, 10_000];
    let mut logs = Vec::new();
    for &t in &ts {
        let mean: f64 = (0..40)
            .map(|r| {
                let fit = fit_subset(&log_of(&ens, t, r, &format!("cov-{t}")), &s).unwrap();
                (&fit.sigma_hat - &oracle.sigma).singular_values().max()
            })
            .sum::<f64>()
            / 40.0;
        logs.push(((t as f64).ln(), mean.ln()));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.15, "slope {slope}");
}

#[test]
fn residual_variance_mean_in_band() {
    let ens = SyntheticEnsemble::new(SyntheticLinearSpec {
        mean_x: vec![0.0],
        cov_x: vec![vec![1.0]],
        beta: vec![vec![2.0, -1.0]],
        noise_cov: vec![vec![4.0]],
        costs: CostSchedule::new(1.0, vec![0.1]).unwrap(),
        regressor_law: RegressorLaw::Gaussian,
        seed: 0,
    })
    .unwrap();
    let mean = (0..1000)
        .map(|r| fit_subset(&log_of(&ens, 20, r, "sigma"), &Subset::full(1)).unwrap().sigma_hat_sq().unwrap())
        .sum::<f64>()
        / 1000.0;
    assert!((3.8..=4.2).contains(&mean), "{mean}");
}

#[test]
fn incremental_tracks_batch_through_a_long_run() {
    let ens = ensemble();
    let samples = sample_joint(&ens, 500, &mut RandomStream::from_seed(3)).unwrap();
    let s = Subset::from_one_based(&[1, 3]).unwrap();
    let mut inc = IncrementalFit::new(s.clone(), 1);
    let mut log = ExplorationLog::new(3, 1);
    for (i, smp) in samples.iter().enumerate() {
        log.push(&smp.regressors, &smp.response).unwrap();
        inc.push(&smp.regressors, &smp.response);
        if i >= 4 && i % 50 == 0 {
            let a = inc.stats(&log).unwrap();
            let b = fit_subset(&log, &s).unwrap();
            assert!((&a.beta_hat - &b.beta_hat).amax() < 1e-9);
            assert!((&a.gamma_hat - &b.gamma_hat).amax() < 1e-9);
            assert!((&a.lambda_inv - &b.lambda_inv).amax() < 1e-9 * b.lambda_inv.amax());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noiseless_rule_is_recovered(
        seed in any::<u64>(),
        coef in prop::collection::vec(-5.0f64..5.0, 4),
        extra in 0usize..20,
    ) {
        let mut rng = RandomStream::from_seed(seed);
        let n = 3;
        let t = n + 2 + extra;
        let mut log = ExplorationLog::new(n, 1);
        for _ in 0..t {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y = coef[0] + coef[1] * x[0] + coef[2] * x[1] + coef[3] * x[2];
            log.push(&x, &[y]).unwrap();
        }
        let fit = fit_subset(&log, &Subset::full(n)).unwrap();
        let truth = DMatrix::from_row_slice(1, 4, &coef);
        let scale = truth.amax().max(1.0);
        prop_assert!((&fit.beta_hat - &truth).amax() <= 1e-9 * scale);
        prop_assert!(fit.sigma_hat_sq().unwrap() <= 1e-14 * scale * scale);
        // Σ̂ symmetric with zero intercept row; Λ̂⁻¹ symmetric positive definite
        prop_assert!(fit.sigma_hat.row(0).iter().all(|&v| v == 0.0));
        prop_assert!((&fit.sigma_hat - fit.sigma_hat.transpose()).amax() == 0.0);
        prop_assert!(fit.lambda_inv.clone().cholesky().is_some());
    }
}
