mod common;

use common::simpson;
use num_complex::Complex64;
use wishart_sum::charpoly::*;
use wishart_sum::linalg::{ComplexMatrix, Lu};
use wishart_sum::sampler::{sample_h_indexed, CovariancePair};
use wishart_sum::special::{log_factorial, monic_laguerre};

#[test]
fn degenerate_limit_up_to_ten() {
    for n in 1..=10 {
        let (n_a, n_b, sigma) = (n + 2, n + 3, 0.8);
        let c = CommutingCovariances::new(n_a, n_b, vec![sigma; n], vec![sigma; n]).unwrap();
        let coeffs = charpoly_coefficients(&c).unwrap();
        assert_eq!(coeffs[n], 1.0);
        for x in [0.1, 1.0, 4.0, 12.0, 30.0] {
            let want = sigma.powi(n as i32) * monic_laguerre(n, n_a + n_b - n, x / sigma);
            let got = expect_charpoly(&c, x).unwrap();
            let scale: f64 = coeffs.iter().enumerate().map(|(k, c)| (c * x.powi(k as i32)).abs()).sum();
            assert!((got - want).abs() <= 1e-10 * scale, "N = {n}, x = {x}: {got} vs {want}");
        }
    }
}

#[test]
fn single_channel_mean_shift() {
    let c = CommutingCovariances::new(4, 6, vec![1.3], vec![1.3]).unwrap();
    let coeffs = charpoly_coefficients(&c).unwrap();
    assert_eq!(coeffs.len(), 2);
    assert!((coeffs[0] + 1.3 * 10.0).abs() < 1e-12);
}

#[test]
fn charpoly_matches_monte_carlo() {
    let (sa, sb) = ([1.0, 2.0], [0.5, 1.5]);
    let c = CommutingCovariances::new(3, 4, sa.to_vec(), sb.to_vec()).unwrap();
    let pair = CovariancePair::diagonal(3, 4, &sa, &sb).unwrap();
    let n = 100_000u64;
    for x in [-5.0, 40.0] {
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                let h = sample_h_indexed(&pair, 99, i);
                let m = ComplexMatrix::identity(2).scale(Complex64::new(x, 0.0)).lincomb(
                    Complex64::new(1.0, 0.0),
                    &h,
                    Complex64::new(-1.0, 0.0),
                );
                Lu::factor(&m).unwrap().det().re
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let want = expect_charpoly(&c, x).unwrap();
        assert!((mean - want).abs() < 3.0 * se, "x = {x}: {mean} ± {se} vs {want}");
    }
}

#[test]
fn inverse_single_channel_is_gamma_resolvent() {
    // N = 1, unit covariances: H ~ Gamma(N_A + N_B)
    let (n_a, n_b) = (3usize, 4usize);
    let c = CommutingCovariances::new(n_a, n_b, vec![1.0], vec![1.0]).unwrap();
    let k = n_a + n_b;
    let dens = |t: f64| ((k - 1) as f64 * t.ln() - t - log_factorial(k - 1)).exp();
    for y in [Complex64::new(5.0, 1.0), Complex64::new(12.0, -0.5), Complex64::new(-3.0, 2.0)] {
        let re = simpson(0.0, 120.0, 60_000, |t| if t == 0.0 { 0.0 } else { (dens(t) / (y - t)).re });
        let im = simpson(0.0, 120.0, 60_000, |t| if t == 0.0 { 0.0 } else { (dens(t) / (y - t)).im });
        let want = Complex64::new(re, im);
        let got = expect_inverse_charpoly(&c, y, 64).unwrap().value;
        assert!((got - want).norm() < 1e-8 * want.norm(), "{y}: {got} vs {want}");
    }
}

#[test]
fn inverse_matches_monte_carlo() {
    let (sa, sb) = ([1.0, 2.0], [0.5, 1.5]);
    let c = CommutingCovariances::new(3, 4, sa.to_vec(), sb.to_vec()).unwrap();
    let pair = CovariancePair::diagonal(3, 4, &sa, &sb).unwrap();
    let y = Complex64::new(8.0, 6.0);
    let n = 40_000u64;
    let vals: Vec<Complex64> = (0..n)
        .map(|i| {
            let h = sample_h_indexed(&pair, 5, i);
            let m =
                ComplexMatrix::identity(2).scale(y).lincomb(Complex64::new(1.0, 0.0), &h, Complex64::new(-1.0, 0.0));
            1.0 / Lu::factor(&m).unwrap().det()
        })
        .collect();
    let mean: Complex64 = vals.iter().sum::<Complex64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let want = expect_inverse_charpoly(&c, y, 64).unwrap().value;
    assert!((mean - want).norm() < 4.0 * se, "{mean} ± {se} vs {want}");
}

#[test]
fn inverse_asymptotic_monic() {
    let c = CommutingCovariances::new(35, 40, vec![1.0; 4], vec![0.02, 0.20, 0.30, 1.50]).unwrap();
    let smax = 1.5;
    let r = 1e4 * (35.0 * smax + 40.0 * smax);
    for y in [Complex64::new(r, 1.0), Complex64::new(-r, 1.0), Complex64::new(0.0, r)] {
        let q = expect_inverse_charpoly(&c, y, 64).unwrap().value;
        let d = (y.powu(4) * q - 1.0).norm();
        assert!(d < 1e-3, "{y}: {d}");
    }
}
