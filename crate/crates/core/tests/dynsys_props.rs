use gnmk::dynsys::{
    flow_jacobian_fd, integrate, integrate_through, propagate_ensemble, propagate_ensemble_with,
    propagate_rows, IntegratorConfig, LinearSystem, Lorenz84, SystemParams,
};
use gnmk::exec::Execution;
use gnmk::pce::sample_germ;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn lorenz() -> Lorenz84 {
    Lorenz84::new(SystemParams::default())
}

fn perturbed_ensemble(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let g = sample_germ(n, 3, seed);
    (0..n)
        .map(|i| {
            vec![
                1.0 + 0.1 * g[(i, 0)],
                0.1 * g[(i, 1)],
                -0.75 + 0.1 * g[(i, 2)],
            ]
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn integration_is_time_consistent(
        x in prop::array::uniform3(-2.0f64..2.0),
        t1 in 0.0f64..12.0,
        dt in 0.0f64..12.0,
    ) {
        let cfg = IntegratorConfig::default();
        let sys = lorenz();
        let t2 = t1 + dt;
        let direct = integrate(&sys, &x, 0.0, t2, &cfg).unwrap();
        let mid = integrate(&sys, &x, 0.0, t1, &cfg).unwrap();
        let split = integrate(&sys, &mid, t1, t2, &cfg).unwrap();
        for i in 0..3 {
            let scale = 1.0 + direct[i].abs();
            prop_assert!(
                (direct[i] - split[i]).abs() <= 10.0 * cfg.rel_tol * scale,
                "component {}: {} vs {}", i, direct[i], split[i]
            );
        }
    }

    #[test]
    fn ensemble_commutes_with_permutation(seed in 0u64..1000, rot in 0usize..8) {
        let cfg = IntegratorConfig::default();
        let sys = lorenz();
        let xs = perturbed_ensemble(8, seed);
        let mut perm: Vec<usize> = (0..8).collect();
        perm.rotate_left(rot);
        perm.swap(0, 7);
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| xs[i].clone()).collect();
        let out = propagate_ensemble(&sys, &xs, 0.0, 6.0, &cfg).unwrap();
        let out_p = propagate_ensemble(&sys, &permuted, 0.0, 6.0, &cfg).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(&out_p[k], &out[i]);
        }
    }
}

#[test]
fn ensemble_matches_independent_calls_bit_for_bit() {
    let cfg = IntegratorConfig::default();
    let sys = lorenz();
    let xs = perturbed_ensemble(100, 7);
    let seq = propagate_ensemble_with(Execution::Sequential, &sys, &xs, 0.0, 6.0, &cfg).unwrap();
    let par = propagate_ensemble_with(Execution::Parallel, &sys, &xs, 0.0, 6.0, &cfg).unwrap();
    for (i, x) in xs.iter().enumerate() {
        let single = integrate(&sys, x, 0.0, 6.0, &cfg).unwrap();
        assert_eq!(seq[i], single);
        assert_eq!(par[i], single);
    }
}

#[test]
fn ensemble_trivial_cases() {
    let cfg = IntegratorConfig::default();
    let sys = lorenz();
    assert!(propagate_ensemble(&sys, &[], 0.0, 6.0, &cfg)
        .unwrap()
        .is_empty());
    let x = vec![1.0, 0.0, -0.75];
    let one = propagate_ensemble(&sys, std::slice::from_ref(&x), 0.0, 6.0, &cfg).unwrap();
    assert_eq!(one, vec![integrate(&sys, &x, 0.0, 6.0, &cfg).unwrap()]);
}

#[test]
fn rows_match_ensemble() {
    let cfg = IntegratorConfig::default();
    let sys = lorenz();
    let xs = perturbed_ensemble(10, 3);
    let m = DMatrix::from_fn(10, 3, |i, j| xs[i][j]);
    let rows = propagate_rows(Execution::Parallel, &sys, &m, 0.0, 12.0, &cfg).unwrap();
    let ens = propagate_ensemble(&sys, &xs, 0.0, 12.0, &cfg).unwrap();
    for i in 0..10 {
        for j in 0..3 {
            assert_eq!(rows[(i, j)], ens[i][j]);
        }
    }
}

#[test]
fn integrate_through_chains_intervals() {
    let cfg = IntegratorConfig::default();
    let sys = lorenz();
    let x0 = [1.0, 0.0, -0.75];
    let path = integrate_through(&sys, &x0, 0.0, &[6.0, 12.0, 18.0], &cfg).unwrap();
    let mid = integrate(&sys, &x0, 0.0, 6.0, &cfg).unwrap();
    assert_eq!(path[0], mid);
    assert_eq!(path[1], integrate(&sys, &mid, 6.0, 12.0, &cfg).unwrap());
}

#[test]
fn fd_jacobian_of_linear_flow_is_flow_matrix() {
    let a = DMatrix::from_row_slice(3, 3, &[-0.1, 0.5, 0.0, -0.4, -0.05, 0.2, 0.1, -0.3, -0.2]);
    let sys = LinearSystem::new(a).unwrap();
    let cfg = IntegratorConfig::with_tolerance(1e-11);
    let jac = flow_jacobian_fd(&sys, &[0.3, -0.2, 1.0], 0.0, 2.0, &cfg, 1e-3).unwrap();
    let phi = sys.flow_matrix(2.0);
    assert!((jac - phi).amax() < 1e-7);
}

#[test]
fn invalid_integrator_config_is_rejected() {
    let cfg = IntegratorConfig {
        min_step: 1.0,
        initial_step: 0.1,
        ..Default::default()
    };
    assert!(cfg.validate().is_err());
    assert!(IntegratorConfig::default().validate().is_ok());
    assert!(IntegratorConfig::with_tolerance(0.0).validate().is_err());
}
