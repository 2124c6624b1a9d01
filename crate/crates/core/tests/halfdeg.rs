mod common;

use common::{nine_channel_sigma_b, random_model, rel, rng, simpson, tail_end};
use wishart_sum::charpoly::{charpoly_coefficients, CommutingCovariances};
use wishart_sum::curve::linear_grid;
use wishart_sum::halfdeg::*;
use wishart_sum::special::{log_factorial, phi_weight};
use wishart_sum::Error;

fn small() -> HalfDegenerateModel {
    HalfDegenerateModel::new(4, 5, 1.0, vec![0.5, 1.5, 2.5]).unwrap()
}

#[test]
fn single_channel_constant() {
    let m = HalfDegenerateModel::new(1, 1, 1.0, vec![2.0]).unwrap();
    let c = model_constants(&m).unwrap().c.value();
    assert!(rel(c, 0.5) < 1e-14, "{c}");
    let g = gram_matrix(&m).unwrap()[(0, 0)].re;
    assert!(rel(c * g, 1.0) < 1e-12);
}

#[test]
fn normalization_small_model() {
    let v = normalization_identity(&small()).unwrap();
    assert!((v - 1.0).abs() < 1e-8, "{v}");
    // and through the double-precision Gram determinant
    let g = gram_matrix(&small()).unwrap();
    let det = wishart_sum::linalg::Lu::factor(&g).unwrap().det().re;
    let c = model_constants(&small()).unwrap().c.value();
    assert!((6.0 * det * c - 1.0).abs() < 1e-8);
}

#[test]
fn constant_sign_under_permutation() {
    let a = small();
    let b = HalfDegenerateModel::new(4, 5, 1.0, vec![2.5, 0.5, 1.5]).unwrap();
    let vandermonde = |s: &[f64]| {
        let mut p = 1.0;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                p *= s[j] - s[i];
            }
        }
        p
    };
    let sa = model_constants(&a).unwrap().c.sign * vandermonde(&a.sigma_b).signum();
    let sb = model_constants(&b).unwrap().c.sign * vandermonde(&b.sigma_b).signum();
    assert_eq!(sa, sb);
}

#[test]
fn gram_matches_quadrature() {
    for model in [small(), HalfDegenerateModel::new(1, 1, 1.0, vec![2.0]).unwrap()] {
        let g = gram_matrix(&model).unwrap();
        let end = tail_end(&model);
        for i in 0..model.n {
            for j in 0..model.n {
                let w = model.weight(j);
                let q = simpson(0.0, end, 40_000, |x| x.powi(i as i32) * phi_weight(&w, x).unwrap());
                assert!(rel(g[(i, j)].re, q) < 1e-9, "g[{i}][{j}] = {} vs {q}", g[(i, j)].re);
            }
        }
    }
}

#[test]
fn gram_scaling() {
    let model = small();
    let t = 1.7;
    let g = gram_matrix(&model).unwrap();
    let gt = gram_matrix(&model.scaled(t)).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let want = t.powi((model.m() + i + 1) as i32) * g[(i, j)].re;
            assert!(rel(gt[(i, j)].re, want) < 1e-12);
        }
    }
}

/// Coefficients of P^{(j)} by expanding Π_{k≠j}(x − z1 σ_A − z2 σ_Bk) one
/// term choice at a time and applying z1^a → N_A!/(N_A−a)!, z2^b →
/// (N_B−1)!/(N_B−1−b)!.
fn brute_force_pj(model: &HalfDegenerateModel, j: usize) -> Vec<f64> {
    let others: Vec<f64> = (0..model.n).filter(|&k| k != j).map(|k| model.sigma_b[k]).collect();
    let d = others.len();
    let falling = |n: usize, k: usize| -> f64 {
        if k > n {
            0.0
        } else {
            (0..k).map(|i| (n - i) as f64).product()
        }
    };
    let mut out = vec![0.0; d + 1];
    for code in 0..3usize.pow(d as u32) {
        let (mut a, mut b, mut p, mut c) = (0, 0, 0, 1.0);
        let mut r = code;
        for &s in &others {
            match r % 3 {
                0 => p += 1,
                1 => {
                    a += 1;
                    c *= -model.sigma_a;
                }
                _ => {
                    b += 1;
                    c *= -s;
                }
            }
            r /= 3;
        }
        out[p] += c * falling(model.n_a, a) * falling(model.n_b - 1, b);
    }
    out
}

#[test]
fn pj_matches_enumeration() {
    // dyadic σ keep every product and partial sum exact
    let model = HalfDegenerateModel::new(5, 6, 1.5, vec![0.25, 0.75, 2.5, 3.25]).unwrap();
    for j in 0..4 {
        assert_eq!(poly_pj(&model, j + 1).unwrap(), brute_force_pj(&model, j), "j = {}", j + 1);
    }
    let two = HalfDegenerateModel::new(2, 2, 1.0, vec![0.5, 2.0]).unwrap();
    // x − 2σ_A − 1·σ_B2
    assert_eq!(poly_pj(&two, 1).unwrap(), vec![-4.0, 1.0]);
    assert_eq!(poly_pj(&two, 2).unwrap(), vec![-2.5, 1.0]);
}

#[test]
fn pj_is_reduced_charpoly() {
    let model = small();
    for j in 0..3 {
        let sb: Vec<f64> = (0..3).filter(|&k| k != j).map(|k| model.sigma_b[k]).collect();
        let c = CommutingCovariances::new(model.n_a, model.n_b - 1, vec![model.sigma_a; 2], sb).unwrap();
        let want = charpoly_coefficients(&c).unwrap();
        let got = poly_pj(&model, j + 1).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * w.abs(), "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn pj_index_checked() {
    assert_eq!(poly_pj(&small(), 0), Err(Error::IndexOutOfRange { index: 0, len: 3 }));
    assert_eq!(poly_pj(&small(), 4), Err(Error::IndexOutOfRange { index: 4, len: 3 }));
}

#[test]
fn biorthogonality_by_quadrature() {
    let model = small();
    let ev = KernelEvaluator::new(&model).unwrap();
    let end = tail_end(&model);
    for j in 0..3 {
        let gj = ev.constants.g[j].value();
        for k in 0..3 {
            let w = model.weight(k);
            let q = gj * simpson(0.0, end, 40_000, |x| ev.pj(j, x) * phi_weight(&w, x).unwrap());
            let want = if j == k { 1.0 } else { 0.0 };
            assert!((q - want).abs() < 1e-7, "M[{j}][{k}] = {q}");
        }
    }
}

#[test]
fn biorthogonality_up_to_eight() {
    let mut r = rng(3);
    for n in 1..=8 {
        let model = random_model(&mut r, n);
        let mat = biorthogonality_matrix(&model).unwrap();
        for (j, row) in mat.iter().enumerate() {
            assert!((row[j] - 1.0).abs() < 1e-8, "N = {n}: diagonal {}", row[j]);
            for (k, v) in row.iter().enumerate() {
                if k != j {
                    assert!(v.abs() < 1e-8 * row[j].abs(), "N = {n}: M[{j}][{k}] = {v}");
                }
            }
        }
    }
}

#[test]
fn reproducing_kernel() {
    let model = small();
    let ev = KernelEvaluator::new(&model).unwrap();
    let end = tail_end(&model);
    for &(x, y) in &[(3.0, 5.0), (8.0, 8.0), (12.0, 2.5)] {
        let q = simpson(0.0, end, 20_000, |t| ev.kernel(x, t).unwrap() * ev.kernel(t, y).unwrap());
        let k = ev.kernel(x, y).unwrap();
        assert!((q - k).abs() < 1e-6 * k.abs().max(ev.kernel(x, x).unwrap()), "{q} vs {k}");
    }
}

#[test]
fn single_eigenvalue_is_gamma_convolution() {
    // N = 1: H = σ_A a + σ_B b with a ~ Gamma(N_A), b ~ Gamma(N_B)
    let (n_a, n_b, sa, sb) = (3usize, 4usize, 1.0, 2.5);
    let model = HalfDegenerateModel::new(n_a, n_b, sa, vec![sb]).unwrap();
    let ev = KernelEvaluator::new(&model).unwrap();
    let gamma = |k: usize, s: f64, t: f64| {
        if t <= 0.0 {
            0.0
        } else {
            ((k - 1) as f64 * t.ln() - t / s - log_factorial(k - 1) - k as f64 * s.ln()).exp()
        }
    };
    for &x in &[0.5, 3.0, 9.0, 17.0, 30.0] {
        let want = simpson(0.0, x, 4000, |t| gamma(n_a, sa, t) * gamma(n_b, sb, x - t));
        let got = ev.kernel(x, x).unwrap();
        assert!(rel(got, want) < 1e-9, "x = {x}: {got} vs {want}");
    }
}

#[test]
fn top_correlation_is_joint_density() {
    // R_N(λ) = N! C Δ(λ) det[φ_j(λ_i)]
    let model = small();
    let ev = KernelEvaluator::new(&model).unwrap();
    let c = model_constants(&model).unwrap().c.value();
    let lam = [2.0, 6.5, 11.0];
    let phi: Vec<Vec<f64>> =
        lam.iter().map(|&l| (0..3).map(|j| phi_weight(&model.weight(j), l).unwrap()).collect()).collect();
    let det3 = phi[0][0] * (phi[1][1] * phi[2][2] - phi[1][2] * phi[2][1])
        - phi[0][1] * (phi[1][0] * phi[2][2] - phi[1][2] * phi[2][0])
        + phi[0][2] * (phi[1][0] * phi[2][1] - phi[1][1] * phi[2][0]);
    let vdm = (lam[1] - lam[0]) * (lam[2] - lam[0]) * (lam[2] - lam[1]);
    let want = 6.0 * c * vdm * det3;
    let got = correlation_rk(&ev, &lam).unwrap();
    assert!(want > 0.0);
    assert!(rel(got, want) < 1e-9, "{got} vs {want}");
}

#[test]
fn rk_single_point_is_density() {
    let ev = KernelEvaluator::new(&small()).unwrap();
    for &x in &[1.0, 7.0, 20.0] {
        assert_eq!(correlation_rk(&ev, &[x]).unwrap(), ev.kernel(x, x).unwrap());
    }
}

#[test]
fn rk_permutation_symmetric() {
    let model = small();
    let ev = KernelEvaluator::new(&model).unwrap();
    let a = correlation_rk(&ev, &[3.0, 7.0, 12.0]).unwrap();
    let b = correlation_rk(&ev, &[12.0, 3.0, 7.0]).unwrap();
    assert!(rel(b, a) < 1e-12);
    let a = andreief_rk(&model, &[3.0, 7.0]).unwrap().value;
    let b = andreief_rk(&model, &[7.0, 3.0]).unwrap().value;
    assert!(rel(b, a) < 1e-10);
}

#[test]
fn kernel_matches_gram_inverse() {
    let mut r = rng(11);
    for trial in 0..10 {
        let model = random_model(&mut r, 2 + trial % 5);
        let ev = KernelEvaluator::new(&model).unwrap();
        let end = 0.6 * tail_end(&model);
        for x in linear_grid(0.05 * end, end, 8) {
            for y in linear_grid(0.05 * end, end, 4) {
                let k = ev.kernel(x, y).unwrap();
                let g = gram_inverse_kernel(&model, x, y).unwrap();
                let scale = (ev.kernel(x, x).unwrap() * ev.kernel(y, y).unwrap()).sqrt();
                assert!((k - g).abs() < 1e-8 * k.abs().max(1e-6 * scale), "{model:?} ({x}, {y}): {k} vs {g}");
            }
        }
    }
}

#[test]
fn rk_matches_andreief() {
    let mut r = rng(5);
    for n in 2..=5 {
        let model = random_model(&mut r, n);
        let ev = KernelEvaluator::new(&model).unwrap();
        let end = 0.5 * tail_end(&model);
        for k in 1..=n.min(3) {
            let points: Vec<f64> = (0..k).map(|i| end * (0.15 + 0.2 * i as f64)).collect();
            let det = correlation_rk(&ev, &points).unwrap();
            let and = andreief_rk(&model, &points).unwrap();
            assert!(!and.ill_conditioned);
            assert!(rel(and.value, det) < 1e-7, "N = {n}, k = {k}: {} vs {det}", and.value);
        }
    }
}

#[test]
fn too_many_points_rejected() {
    let ev = KernelEvaluator::new(&small()).unwrap();
    let e = correlation_rk(&ev, &[1.0, 2.0, 3.0, 4.0]).unwrap_err();
    assert!(e.to_string().contains('3'), "{e}");
    assert!(andreief_rk(&small(), &[1.0, 2.0, 3.0, 4.0]).is_err());
}

#[test]
fn duplicate_sigma_names_indices() {
    let e = HalfDegenerateModel::new(4, 5, 1.0, vec![0.5, 1.5, 0.5]).unwrap_err();
    assert_eq!(e, Error::DegenerateSigma { i: 1, j: 3, a: 0.5, b: 0.5 });
    assert!(e.to_string().contains("1 and 3"));
}

#[test]
fn nine_channel_density() {
    let model = HalfDegenerateModel::new(35, 40, 1.0, nine_channel_sigma_b()).unwrap();
    let ev = KernelEvaluator::new(&model).unwrap();
    let curve = density(&ev, &linear_grid(0.0, 400.0, 8001)).unwrap();
    let integral = simpson_values(&curve.grid, &curve.values);
    assert!((integral - 9.0).abs() < 1e-6, "{integral}");
    assert!(curve.values.iter().all(|&v| v >= -1e-10));
    assert_eq!(curve.metadata.get("N"), Some("9"));
    let maxima = curve.local_maxima();
    assert!((3..=9).contains(&maxima.len()), "{maxima:?}");
}

fn simpson_values(x: &[f64], y: &[f64]) -> f64 {
    let h = x[1] - x[0];
    let n = y.len() - 1;
    let mut s = y[0] + y[n];
    for (k, v) in y.iter().enumerate().take(n).skip(1) {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * v;
    }
    s * h / 3.0
}

#[test]
fn density_rejects_unsorted_grid() {
    let ev = KernelEvaluator::new(&small()).unwrap();
    assert!(density(&ev, &[2.0, 1.0]).is_err());
    assert!(density(&ev, &[-1.0, 1.0]).is_err());
}
