use num_complex::Complex64;
use wishart_sum::linalg::*;
use wishart_sum::quadrature::gauss_laguerre;
use wishart_sum::special::*;

fn gamma_ratio(a: u32, b: u32) -> f64 {
    (log_factorial(b as usize - 1) - log_factorial(a as usize - 1)).exp()
}

#[test]
fn kummer_closed_cases() {
    let e = std::f64::consts::E;
    assert!((kummer_identity_1f1(1, 2, 1.0).unwrap() - (e - 1.0)).abs() < 1e-14);
    let want = 2.0 * (e * e - 1.0 - 2.0) / 4.0;
    assert!((kummer_identity_1f1(1, 3, 2.0).unwrap() - want).abs() < 1e-14 * want);
}

#[test]
fn kummer_large_argument() {
    // ₁F₁(a; b; x) = e^x x^{a−b} Γ(b)/Γ(a) Σ_k (1−a)_k (b−a)_k / (k! x^k) + O(x^{−a}),
    // and the sum terminates at k = a − 1 for integer a
    for (a, b) in [(1u32, 2u32), (2, 5), (3, 4), (6, 12)] {
        let x = 50.0f64;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 0..a - 1 {
            let kf = k as f64;
            term *= (1.0 - a as f64 + kf) * ((b - a) as f64 + kf) / ((kf + 1.0) * x);
            sum += term;
        }
        let want = x.exp() * x.powi(a as i32 - b as i32) * gamma_ratio(a, b) * sum;
        let got = kummer_identity_1f1(a, b, x).unwrap();
        assert!((got / want - 1.0).abs() < 1e-6, "({a},{b}): {}", got / want);
        let series = kummer_series(a as f64, b as f64, x).unwrap();
        assert!((got - series).abs() < 1e-9 * series);
    }
}

#[test]
fn laguerre_examples() {
    assert_eq!(monic_laguerre(0, 3, 1.7), 1.0);
    assert_eq!(monic_laguerre(1, 2, 0.0), -3.0);
    // orthogonality under x^α e^{−x}
    let rule = gauss_laguerre(40, 2).unwrap();
    let ip = rule.integrate(|x| monic_laguerre(3, 2, x) * monic_laguerre(5, 2, x));
    let norm = rule.integrate(|x| monic_laguerre(5, 2, x).powi(2));
    assert!(ip.abs() < 1e-10 * norm);
}

#[test]
fn factorial_examples() {
    assert_eq!(log_factorial(0), 0.0);
    assert!((log_factorial(5) - 120f64.ln()).abs() < 1e-14);
}

#[test]
fn weight_small_argument_limit() {
    let p = WeightParams { n: 2, n_a: 3, n_b: 4, sigma_a: 1.0, sigma_bj: 2.5 };
    assert_eq!(phi_weight(&p, 0.0).unwrap(), 0.0);
    let lam = 1e-6 * p.sigma_a;
    let r = (ln_phi_weight(&p, lam).unwrap() - p.m() as f64 * lam.ln()).exp();
    assert!((r - 1.0).abs() < 1e-4, "{r}");
}

#[test]
fn weight_is_scaled_gamma_convolution() {
    // φ_j = m! σ_A^{N_A} σ_Bj^{N_B−N+1} (f_A * f_B) with Gamma(N_A) and Gamma(N_B−N+1) densities
    let p = WeightParams { n: 2, n_a: 3, n_b: 4, sigma_a: 1.0, sigma_bj: 2.5 };
    let (ka, kb) = (3usize, 3usize);
    let f =
        |k: usize, s: f64, t: f64| ((k - 1) as f64 * t.ln() - t / s - log_factorial(k - 1) - k as f64 * s.ln()).exp();
    let lam = 4.0;
    let n = 4000;
    let h = lam / n as f64;
    let mut conv = 0.0;
    for i in 1..n {
        let t = i as f64 * h;
        conv += if i % 2 == 1 { 4.0 } else { 2.0 } * f(ka, 1.0, t) * f(kb, 2.5, lam - t);
    }
    conv *= h / 3.0;
    let want = (log_factorial(p.m()) + 3.0 * 2.5f64.ln()).exp() * conv;
    let got = phi_weight(&p, lam).unwrap();
    assert!((got - want).abs() < 1e-10 * want, "{got} vs {want}");
}

#[test]
fn eigen_examples() {
    let one = ComplexMatrix::new(1, 1, vec![Complex64::new(5.0, 0.0)]).unwrap();
    assert_eq!(hermitian_eigenvalues(&one, 1e-14).unwrap().eigenvalues, vec![5.0]);
    let d = ComplexMatrix::from_diag(&[3.0, 1.0, 2.0]);
    assert_eq!(hermitian_eigenvalues(&d, 1e-14).unwrap().eigenvalues, vec![1.0, 2.0, 3.0]);
}

#[test]
fn determinant_examples() {
    assert_eq!(Lu::factor(&ComplexMatrix::identity(4)).unwrap().det(), Complex64::new(1.0, 0.0));
    let m = ComplexMatrix::new(
        2,
        2,
        vec![Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 3.0)],
    )
    .unwrap();
    let (det, _) = lu_det_and_solve(&m, None).unwrap();
    assert_eq!(det, Complex64::new(0.0, 6.0));
}

#[test]
fn cholesky_examples() {
    assert_eq!(cholesky_sqrt(&ComplexMatrix::identity(3)).unwrap(), ComplexMatrix::identity(3));
    assert_eq!(cholesky_sqrt(&ComplexMatrix::from_diag(&[4.0, 9.0])).unwrap(), ComplexMatrix::from_diag(&[2.0, 3.0]));
}
