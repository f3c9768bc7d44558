use aetc::ensemble::{sample_joint, CostSchedule, RegressorLaw, SyntheticEnsemble, SyntheticLinearSpec};
use aetc::linalg::quad_form;
use aetc::regress::{fit_subset, ExplorationLog};
use aetc::rng::RandomStream;
use aetc::subset::{enumerate_subsets, Subset};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn two_model(law: RegressorLaw) -> SyntheticEnsemble {
    SyntheticEnsemble::new(SyntheticLinearSpec {
        mean_x: vec![0.5, -1.5],
        cov_x: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        beta: vec![vec![0.0, 1.0, 1.0]],
        noise_cov: vec![vec![0.25]],
        costs: CostSchedule::new(1.0, vec![0.1, 0.1]).unwrap(),
        regressor_law: law,
        seed: 0,
    })
    .unwrap()
}

#[test]
fn dropped_regressor_against_large_sample_regression() {
    let ens = two_model(RegressorLaw::Gaussian);
    let s1 = Subset::from_one_based(&[1]).unwrap();
    let oracle = ens.oracle_quantities(&s1).unwrap();
    assert!((oracle.beta[(0, 0)] + 1.5).abs() < 1e-12);
    assert!((oracle.beta[(0, 1)] - 1.0).abs() < 1e-12);
    assert!((oracle.sigma_sq().unwrap() - 1.25).abs() < 1e-12);

    let t = 1_000_000;
    let samples = sample_joint(&ens, t, &mut RandomStream::from_seed(11)).unwrap();
    let log = ExplorationLog::from_samples(2, 1, &samples).unwrap();
    let fit = fit_subset(&log, &s1).unwrap();
    // slope SE is sqrt(σ² / t); the intercept's carries the extra factor sqrt(1 + x̄²/var)
    let se = (1.25f64 / t as f64).sqrt();
    assert!((fit.beta_hat[(0, 0)] - oracle.beta[(0, 0)]).abs() < 5.0 * se * 1.25f64.sqrt());
    assert!((fit.beta_hat[(0, 1)] - oracle.beta[(0, 1)]).abs() < 5.0 * se);
    assert!((fit.sigma_hat_sq().unwrap() - 1.25).abs() < 5.0 * 1.25 * (2.0 / t as f64).sqrt());
}

#[test]
fn uniform_law_matches_declared_moments() {
    let ens = SyntheticEnsemble::new(SyntheticLinearSpec {
        mean_x: vec![2.0, -1.0],
        cov_x: vec![vec![2.0, 0.6], vec![0.6, 0.5]],
        beta: vec![vec![0.0, 1.0, 1.0]],
        noise_cov: vec![vec![0.0]],
        costs: CostSchedule::new(1.0, vec![0.1, 0.1]).unwrap(),
        regressor_law: RegressorLaw::UniformAffine,
        seed: 0,
    })
    .unwrap();
    let t = 200_000;
    let samples = sample_joint(&ens, t, &mut RandomStream::from_seed(5)).unwrap();
    let log = ExplorationLog::from_samples(2, 1, &samples).unwrap();
    let fit = fit_subset(&log, &Subset::full(2)).unwrap();
    for i in 0..2 {
        assert!((fit.x_hat[i + 1] - ens.spec().mean_x[i]).abs() < 0.02, "mean {i}");
        for j in 0..2 {
            assert!((fit.sigma_hat[(i + 1, j + 1)] - ens.spec().cov_x[i][j]).abs() < 0.03, "cov {i}{j}");
        }
    }
    // bounded support: every coordinate lies within mean ± √3 Σ_j |L_ij|
    let bound = 3f64.sqrt() * (2.0f64.sqrt() + 0.5f64.sqrt()) + 1e-9;
    for s in &samples {
        assert!((s.regressors[0] - 2.0).abs() <= bound);
    }
}

#[test]
fn compliance_presets_weight_k1_by_table_costs() {
    for spec in [SyntheticLinearSpec::square_domain_compliance(), SyntheticLinearSpec::l_shape_compliance()] {
        let costs = spec.costs.clone();
        assert_eq!(costs.c0, 4096.0);
        assert_eq!(costs.c, vec![1024.0, 256.0, 64.0, 16.0, 4.0, 1.0]);
        let ens = SyntheticEnsemble::new(spec).unwrap();
        let sel = aetc::losscalc::oracle_best_subset(&ens, None, 6, 1e6).unwrap();
        assert_eq!(sel.profiles.len(), 63);
        for p in &sel.profiles {
            let o = ens.oracle_quantities(&p.subset).unwrap();
            let b: Vec<f64> = o.beta.row(0).iter().copied().collect();
            let expected = costs.c_ept(&p.subset) * quad_form(&b, &o.sigma);
            assert!((p.k1 - expected).abs() <= 1e-12 * expected.abs().max(1e-300));
        }
    }
}

fn arb_spec() -> impl Strategy<Value = SyntheticLinearSpec> {
    (1usize..=4).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(-1.0f64..1.0, n * n),
            prop::collection::vec(-2.0f64..2.0, n + 1),
            0.01f64..2.0,
        )
            .prop_map(move |(mean, a, beta, noise)| {
                let a = DMatrix::from_row_slice(n, n, &a);
                let cov = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
                SyntheticLinearSpec {
                    mean_x: mean,
                    cov_x: (0..n).map(|i| cov.row(i).iter().copied().collect()).collect(),
                    beta: vec![beta],
                    noise_cov: vec![vec![noise]],
                    costs: CostSchedule::new(1.0, vec![0.1; n]).unwrap(),
                    regressor_law: RegressorLaw::Gaussian,
                    seed: 0,
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residual_variance_and_explained_variance(spec in arb_spec()) {
        let n = spec.mean_x.len();
        let ens = SyntheticEnsemble::new(spec).unwrap();
        let full = ens.oracle_quantities(&Subset::full(n)).unwrap().sigma_sq().unwrap();
        let total = ens.response_cov()[(0, 0)];
        for s in enumerate_subsets(n, n) {
            let o = ens.oracle_quantities(&s).unwrap();
            let sigma_sq = o.sigma_sq().unwrap();
            prop_assert!(sigma_sq >= full - 1e-10 * total.max(1.0));
            let b: Vec<f64> = o.beta.row(0).iter().copied().collect();
            let explained = quad_form(&b, &o.sigma);
            prop_assert!(explained <= total + 1e-10 * total.max(1.0));
            prop_assert!((explained + sigma_sq - total).abs() <= 1e-9 * total.max(1.0));
        }
    }

    #[test]
    fn restriction_consistency(spec in arb_spec()) {
        let n = spec.mean_x.len();
        let ens = SyntheticEnsemble::new(spec).unwrap();
        let subsets = enumerate_subsets(n, n);
        for big in &subsets {
            let ob = ens.oracle_quantities(big).unwrap();
            for small in subsets.iter().filter(|s| s.is_subset_of(big)) {
                let os = ens.oracle_quantities(small).unwrap();
                // positions of `small` inside `big`, shifted past the intercept
                let pos: Vec<usize> = std::iter::once(0)
                    .chain(small.indices().iter().map(|i| 1 + big.indices().iter().position(|j| j == i).unwrap()))
                    .collect();
                for (a, &pa) in pos.iter().enumerate() {
                    prop_assert_eq!(os.x[a], ob.x[pa]);
                    for (b, &pb) in pos.iter().enumerate() {
                        prop_assert_eq!(os.sigma[(a, b)], ob.sigma[(pa, pb)]);
                    }
                }
            }
        }
    }
}
