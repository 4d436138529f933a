use gnmk::linalg::is_sym_psd;
use gnmk::pce::{
    gaussianize, hermite_eval, pce_cov, pce_eval, pce_mean, sample_germ, total_degree_index_set,
    GaussianDensity, MultiIndex, PCExpansion,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn expansion(d: usize, g: usize, order: u32, coeffs: &[f64]) -> PCExpansion {
    let set = total_degree_index_set(g, order).unwrap();
    let p = set.len();
    let c = DMatrix::from_fn(d, p, |i, j| coeffs[(i * p + j) % coeffs.len()]);
    PCExpansion::hermite(c, set).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_set_cardinality_and_order(g in 1usize..5, order in 0u32..6) {
        let set = total_degree_index_set(g, order).unwrap();
        prop_assert_eq!(set.len(), binomial(g + order as usize, order as usize));
        prop_assert!(set.get(0).is_zero());
        for w in set.indices().windows(2) {
            prop_assert!(w[0].degree() <= w[1].degree());
            prop_assert!(w[0] != w[1]);
        }
        prop_assert!(set.indices().iter().all(|a| a.degree() <= order));
    }

    #[test]
    fn eval_is_linear_in_coefficients(
        ca in prop::collection::vec(-3.0f64..3.0, 20),
        cb in prop::collection::vec(-3.0f64..3.0, 20),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        xi in prop::array::uniform2(-3.0f64..3.0),
    ) {
        let ea = expansion(2, 2, 3, &ca);
        let eb = expansion(2, 2, 3, &cb);
        let combo = PCExpansion::hermite(
            ea.coeffs() * a + eb.coeffs() * b,
            ea.index_set().clone(),
        ).unwrap();
        let lhs = pce_eval(&combo, &xi).unwrap();
        let rhs = pce_eval(&ea, &xi).unwrap() * a + pce_eval(&eb, &xi).unwrap() * b;
        prop_assert!((lhs - rhs).amax() <= 1e-10 * (1.0 + a.abs() + b.abs()));
    }

    #[test]
    fn auto_covariance_is_symmetric_psd(coeffs in prop::collection::vec(-3.0f64..3.0, 35)) {
        let e = expansion(3, 3, 4, &coeffs);
        let c = pce_cov(&e, &e).unwrap();
        prop_assert!(is_sym_psd(&c, 1e-10));
        prop_assert_eq!(c.clone(), c.transpose());
    }

    #[test]
    fn cross_covariance_is_transpose_symmetric(
        ca in prop::collection::vec(-3.0f64..3.0, 10),
        cb in prop::collection::vec(-3.0f64..3.0, 10),
    ) {
        let ea = expansion(2, 3, 2, &ca);
        let eb = expansion(3, 3, 2, &cb);
        let ab = pce_cov(&ea, &eb).unwrap();
        let ba = pce_cov(&eb, &ea).unwrap();
        prop_assert!((ab - ba.transpose()).amax() <= 1e-12);
    }

    #[test]
    fn text_round_trip_is_bit_exact(coeffs in prop::collection::vec(-1e6f64..1e6, 35)) {
        let e = expansion(3, 3, 4, &coeffs);
        let back = PCExpansion::from_text(&e.to_text()).unwrap();
        prop_assert_eq!(back.coeffs(), e.coeffs());
        prop_assert_eq!(back.index_set(), e.index_set());
    }
}

#[test]
fn hermite_eval_examples() {
    assert_eq!(
        hermite_eval(&MultiIndex(vec![0, 0, 0]), &[0.3, -1.0, 7.0]).unwrap(),
        1.0
    );
    assert_eq!(hermite_eval(&MultiIndex(vec![2]), &[2.0]).unwrap(), 3.0);
    assert_eq!(
        hermite_eval(&MultiIndex(vec![1, 2]), &[1.0, 2.0]).unwrap(),
        3.0
    );
    assert!(hermite_eval(&MultiIndex(vec![1, 2]), &[1.0]).is_err());
}

#[test]
fn one_dimensional_example() {
    let set = total_degree_index_set(1, 2).unwrap();
    let e = PCExpansion::hermite(DMatrix::from_row_slice(1, 3, &[2.0, 3.0, 1.0]), set).unwrap();
    assert_eq!(pce_eval(&e, &[1.0]).unwrap()[0], 5.0);
    assert_eq!(pce_mean(&e).unwrap()[0], 2.0);
    assert_eq!(pce_cov(&e, &e).unwrap()[(0, 0)], 11.0);
    let g = gaussianize(&e).unwrap();
    assert_eq!(g.mean[0], 2.0);
    assert_eq!(g.cov[(0, 0)], 11.0);
}

#[test]
fn gaussianize_constant_and_linear() {
    let c = DVector::from_vec(vec![1.5, -2.0]);
    let g = gaussianize(&PCExpansion::constant(&c, 2).unwrap()).unwrap();
    assert_eq!(g.mean, c);
    assert_eq!(g.cov, DMatrix::zeros(2, 2));

    let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let src = GaussianDensity::new(DVector::from_vec(vec![0.1, 0.2]), cov.clone()).unwrap();
    let g = gaussianize(&PCExpansion::from_gaussian(&src, 0, 2).unwrap()).unwrap();
    assert!((g.cov - cov).amax() < 1e-14);
    assert_eq!(g.mean, src.mean);
}

#[test]
fn moments_match_monte_carlo() {
    let n = 1_000_000;
    let coeffs: Vec<f64> = (0..35).map(|k| ((k * 7 % 11) as f64 - 5.0) / 5.0).collect();
    let e = expansion(2, 3, 4, &coeffs);
    let samples = e.eval_many(&sample_germ(n, 3, 77)).unwrap();
    let mean = e.mean().unwrap();
    let var = e.variance().unwrap();
    for j in 0..2 {
        let col = samples.column(j);
        let m = col.mean();
        let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let m4 = col.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
        let se_mean = (v / n as f64).sqrt();
        let se_var = ((m4 - v * v) / n as f64).sqrt();
        assert!(
            (m - mean[j]).abs() <= 3.0 * se_mean,
            "mean {j}: {m} vs {}",
            mean[j]
        );
        assert!(
            (v - var[j]).abs() <= 3.0 * se_var,
            "var {j}: {v} vs {}",
            var[j]
        );
    }
}

#[test]
fn germ_sampling_contract() {
    assert_eq!(sample_germ(0, 3, 1).nrows(), 0);
    assert_eq!(sample_germ(50, 3, 9), sample_germ(50, 3, 9));
    let g = sample_germ(100_000, 3, 4);
    for j in 0..3 {
        let col = g.column(j);
        let m = col.mean();
        let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (col.len() as f64 - 1.0);
        assert!(m.abs() <= 0.02 && (v - 1.0).abs() <= 0.03);
    }
}
