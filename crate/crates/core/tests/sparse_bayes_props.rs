use gnmk::dynsys::{propagate_rows, IntegratorConfig, Lorenz84, SystemParams};
use gnmk::exec::Execution;
use gnmk::pce::{hermite_design, sample_germ, total_degree_index_set, BasisKind, PCExpansion};
use gnmk::rng::derive_seed;
use gnmk::sparse_bayes::{fit_pce, rvm_fit, rvm_predict, RvmConfig, EVIDENCE_SLACK};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn planted(seed: u64, sigma: f64) -> (DMatrix<f64>, DVector<f64>, Vec<usize>) {
    let set = total_degree_index_set(3, 4).unwrap();
    let design = hermite_design(&set, &sample_germ(100, 3, derive_seed(seed, &[1]))).unwrap();
    let support = vec![0, 1, 5, 12, 27];
    let mut w = DVector::zeros(set.len());
    for (&k, v) in support.iter().zip([1.0, -0.8, 0.5, 0.3, -0.2]) {
        w[k] = v;
    }
    let noise = sample_germ(100, 1, derive_seed(seed, &[2]))
        .column(0)
        .into_owned();
    (design.clone(), &design * w + noise * sigma, support)
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn result_invariants(seed in 0u64..10_000, sigma in 1e-3f64..1.0) {
        let (design, t, _) = planted(seed, sigma);
        let r = rvm_fit(&design, &t, &RvmConfig::default()).unwrap();
        prop_assert!(r.noise_var > 0.0);
        for k in 0..design.ncols() {
            if !r.active_set.contains(&k) {
                prop_assert_eq!(r.weights[k], 0.0);
            }
        }
        prop_assert_eq!(r.posterior_cov.nrows(), r.active_set.len());
        for w in r.log_evidence_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - EVIDENCE_SLACK * (1.0 + w[0].abs()));
        }
        let f = design.row(3).transpose();
        let (mean, var) = rvm_predict(&r, &f);
        prop_assert!((mean - f.dot(&r.weights)).abs() <= 1e-12 * (1.0 + mean.abs()));
        prop_assert!(var >= r.noise_var);
    }
}

#[test]
fn predict_with_zero_features_returns_noise() {
    let (design, t, _) = planted(0, 0.1);
    let r = rvm_fit(&design, &t, &RvmConfig::default()).unwrap();
    let (m, v) = rvm_predict(&r, &DVector::zeros(design.ncols()));
    assert_eq!(m, 0.0);
    assert_eq!(v, r.noise_var);
}

#[test]
fn exact_fit_replay() {
    let x = sample_germ(50, 1, 3);
    let design = DMatrix::from_fn(50, 1, |i, _| x[(i, 0)]);
    let t = design.column(0) * 3.0;
    let r = rvm_fit(&design, &t, &RvmConfig::default()).unwrap();
    assert!((r.weights[0] - 3.0).abs() < 1e-6);
    assert!(r.noise_var <= 1e-8);
    for i in 0..50 {
        let (m, _) = rvm_predict(&r, &design.row(i).transpose());
        assert!((m - t[i]).abs() < 1e-6);
    }
}

#[test]
fn planted_weights_within_three_posterior_std() {
    let (design, t, support) = planted(0, 0.01);
    let r = rvm_fit(&design, &t, &RvmConfig::default()).unwrap();
    let sub = DMatrix::from_fn(100, support.len(), |i, j| design[(i, support[j])]);
    let ls = (sub.transpose() * &sub).try_inverse().unwrap() * sub.transpose() * &t;
    for (j, &k) in support.iter().enumerate() {
        let pos = r
            .active_set
            .iter()
            .position(|&a| a == k)
            .expect("planted feature active");
        let sd = r.posterior_cov[(pos, pos)].sqrt();
        assert!((r.weights[k] - ls[j]).abs() <= 3.0 * sd, "feature {k}");
    }
}

#[test]
fn sparsity_does_not_grow_with_noise() {
    let mut sizes = [0usize; 2];
    for seed in 0..20 {
        for (slot, sigma) in [(0, 0.01), (1, 0.1)] {
            let (design, t, _) = planted(seed, sigma);
            sizes[slot] += rvm_fit(&design, &t, &RvmConfig::default())
                .unwrap()
                .active_set
                .len();
        }
    }
    assert!(sizes[1] <= sizes[0], "{sizes:?}");
}

#[test]
fn evidence_settles_faster_with_more_samples() {
    let sys = Lorenz84::new(SystemParams::default());
    let integ = IntegratorConfig::default();
    let set = total_degree_index_set(3, 4).unwrap();
    let mut medians = Vec::new();
    for n in [50, 100, 200] {
        let counts: Vec<usize> = (0..20u64)
            .map(|seed| {
                let germ = sample_germ(n, 3, derive_seed(seed, &[n as u64]));
                let x =
                    propagate_rows(Execution::Parallel, &sys, &germ, 0.0, 48.0, &integ).unwrap();
                let design = hermite_design(&set, &germ).unwrap();
                let r = rvm_fit(&design, &x.column(0).into_owned(), &RvmConfig::default()).unwrap();
                r.evidence_settling_iteration(1e-6)
            })
            .collect();
        medians.push(median(counts));
    }
    assert!(
        medians[1] <= medians[0] && medians[2] <= medians[1],
        "{medians:?}"
    );
}

#[test]
fn fit_pce_examples() {
    let set = total_degree_index_set(2, 2).unwrap();
    let truth = PCExpansion::hermite(
        DMatrix::from_row_slice(
            2,
            6,
            &[1.0, 0.5, -0.3, 0.2, 0.0, 0.1, -2.0, 0.0, 1.0, 0.0, 0.4, 0.0],
        ),
        set.clone(),
    )
    .unwrap();
    let germ = sample_germ(12, 2, 8);
    let states = truth.eval_many(&germ).unwrap();
    let fit = fit_pce(
        &germ,
        &states,
        BasisKind::Hermite,
        set.clone(),
        &RvmConfig::default(),
    )
    .unwrap();
    assert!((fit.coeffs() - truth.coeffs()).amax() < 1e-5);

    let constant = DMatrix::from_element(40, 1, 2.5);
    let germ = sample_germ(40, 2, 9);
    let fit = fit_pce(
        &germ,
        &constant,
        BasisKind::Hermite,
        set,
        &RvmConfig::default(),
    )
    .unwrap();
    assert!((fit.coeffs()[(0, 0)] - 2.5).abs() < 1e-8);
    assert!(fit.coeffs().columns(1, 5).iter().all(|&c| c == 0.0));
}

#[test]
fn lorenz_fit_degrades_with_time() {
    let sys = Lorenz84::new(SystemParams::default());
    let integ = IntegratorConfig::default();
    let set = total_degree_index_set(3, 4).unwrap();
    let train = sample_germ(100, 3, 21);
    let valid = sample_germ(1000, 3, 22);
    let rel = |t: f64| {
        let xt = propagate_rows(Execution::Parallel, &sys, &train, 0.0, t, &integ).unwrap();
        let xv = propagate_rows(Execution::Parallel, &sys, &valid, 0.0, t, &integ).unwrap();
        let fit = fit_pce(
            &train,
            &xt,
            BasisKind::Hermite,
            set.clone(),
            &RvmConfig::default(),
        )
        .unwrap();
        let pred = fit.eval_many(&valid).unwrap();
        let centered = DMatrix::from_fn(1000, 3, |i, j| xv[(i, j)] - xv.column(j).mean());
        (pred - &xv).norm() / centered.norm()
    };
    assert!(rel(12.0) < rel(96.0));
}
