mod common;

use num_complex::Complex64;
use wishart_sum::linalg::{hermitian_eigen, hermitian_eigenvalues, ComplexMatrix};
use wishart_sum::sampler::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pd_a() -> ComplexMatrix {
    ComplexMatrix::new(
        3,
        3,
        vec![
            c(2.0, 0.0),
            c(0.3, 0.4),
            c(-0.2, 0.1),
            c(0.3, -0.4),
            c(1.5, 0.0),
            c(0.25, 0.0),
            c(-0.2, -0.1),
            c(0.25, 0.0),
            c(1.0, 0.0),
        ],
    )
    .unwrap()
}

fn pd_b() -> ComplexMatrix {
    ComplexMatrix::new(
        3,
        3,
        vec![
            c(0.8, 0.0),
            c(0.0, -0.2),
            c(0.1, 0.0),
            c(0.0, 0.2),
            c(1.2, 0.0),
            c(0.3, 0.3),
            c(0.1, 0.0),
            c(0.3, -0.3),
            c(2.5, 0.0),
        ],
    )
    .unwrap()
}

fn unitary() -> ComplexMatrix {
    let m = ComplexMatrix::new(
        3,
        3,
        vec![
            c(1.0, 0.0),
            c(0.7, 0.2),
            c(0.1, -0.9),
            c(0.7, -0.2),
            c(-0.5, 0.0),
            c(0.4, 0.3),
            c(0.1, 0.9),
            c(0.4, -0.3),
            c(0.2, 0.0),
        ],
    )
    .unwrap();
    hermitian_eigen(&m, 1e-14).unwrap().1
}

#[test]
fn mean_is_weighted_covariance_sum() {
    let pair = CovariancePair::new(pd_a(), pd_b(), 4, 5).unwrap();
    let n = 100_000u64;
    let draws: Vec<ComplexMatrix> = (0..n).map(|i| sample_h_indexed(&pair, 17, i)).collect();
    for i in 0..3 {
        for j in 0..3 {
            let want = pd_a()[(i, j)] * 4.0 + pd_b()[(i, j)] * 5.0;
            for part in [|z: Complex64| z.re, |z: Complex64| z.im] {
                let v: Vec<f64> = draws.iter().map(|h| part(h[(i, j)])).collect();
                let mean = v.iter().sum::<f64>() / n as f64;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt().max(1e-12);
                assert!((mean - part(want)).abs() < 5.0 * se, "({i},{j}): {mean} vs {}", part(want));
            }
        }
    }
}

#[test]
fn samples_hermitian_positive() {
    let pair = CovariancePair::new(pd_a(), pd_b(), 3, 3).unwrap();
    for i in 0..200 {
        let h = sample_h_indexed(&pair, 1, i);
        assert!(h.hermitian_deviation() <= 1e-12 * h.norm_fro());
        assert!(hermitian_eigenvalues(&h, 1e-12).unwrap().eigenvalues[0] > 0.0);
    }
}

fn trace_moments(pair: &CovariancePair, seed: u64, n: u64) -> Vec<(f64, f64)> {
    let vals: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let ev = sample_eigenvalues(pair, seed, i).unwrap();
            let mut m = [0.0; 3];
            for (k, v) in m.iter_mut().enumerate() {
                *v = ev.iter().map(|x| x.powi(k as i32 + 1)).sum();
            }
            m
        })
        .collect();
    (0..3)
        .map(|k| {
            let mean = vals.iter().map(|v| v[k]).sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (mean, (var / n as f64).sqrt())
        })
        .collect()
}

#[test]
fn unitary_covariance() {
    let u = unitary();
    let rot = |m: &ComplexMatrix| u.matmul(m).matmul(&u.adjoint());
    let a = CovariancePair::new(pd_a(), pd_b(), 4, 5).unwrap();
    let b = CovariancePair::new(rot(&pd_a()), rot(&pd_b()), 4, 5).unwrap();
    let ma = trace_moments(&a, 3, 40_000);
    let mb = trace_moments(&b, 4, 40_000);
    for ((x, sx), (y, sy)) in ma.iter().zip(&mb) {
        assert!((x - y).abs() < 5.0 * (sx * sx + sy * sy).sqrt(), "{x} vs {y}");
    }
}

#[test]
fn degenerate_case_is_single_wishart() {
    // Σ_A = Σ_B = σ: a Wishart matrix with N_W = N_A + N_B channels
    let (n, n_a, n_b, s) = (3usize, 4usize, 5usize, 0.7);
    let pair = CovariancePair::diagonal(n_a, n_b, &[s; 3], &[s; 3]).unwrap();
    let nw = (n_a + n_b) as f64;
    let nf = n as f64;
    let m = trace_moments(&pair, 8, 50_000);
    let t1 = nf * nw * s;
    let t2 = nf * nw * (nf + nw) * s * s;
    assert!((m[0].0 - t1).abs() < 5.0 * m[0].1, "{:?} vs {t1}", m[0]);
    assert!((m[1].0 - t2).abs() < 5.0 * m[1].1, "{:?} vs {t2}", m[1]);
}

#[test]
fn fixed_seed_is_bit_identical() {
    let pair = CovariancePair::new(pd_a(), pd_b(), 4, 5).unwrap();
    assert_eq!(sample_h(&pair, 42), sample_h(&pair, 42));
    assert_ne!(sample_h(&pair, 42), sample_h(&pair, 43));
}

#[test]
fn histogram_independent_of_threads() {
    let pair = CovariancePair::new(pd_a(), pd_b(), 4, 5).unwrap();
    let spec = BinSpec { bins: 40, range: HistogramRange::Auto };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_density(&pair, 5000, &spec, 9).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one.counts.iter().sum::<u64>(), 5000 * 3);
    let widths: Vec<f64> = one.bin_edges.windows(2).map(|e| e[1] - e[0]).collect();
    let integral: f64 = one.density().iter().zip(&widths).map(|(d, w)| d * w).sum();
    assert!((integral - 3.0).abs() < 1e-12);
}

#[test]
fn clamped_eigenvalues_land_in_last_bin() {
    let pair = CovariancePair::diagonal(2, 2, &[1.0], &[1.0]).unwrap();
    let h = mc_density(&pair, 2000, &BinSpec { bins: 10, range: HistogramRange::Fixed(0.0, 2.0) }, 3).unwrap();
    assert!(h.clamped > 0);
    assert_eq!(h.counts.iter().sum::<u64>(), 2000);
    let p = h.probabilities();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn tv_of_identical_is_zero() {
    let p = [0.2, 0.3, 0.5];
    assert_eq!(tv_distance(&p, &p), 0.0);
    assert!((tv_distance(&p, &[0.5, 0.3, 0.2]) - 0.3).abs() < 1e-15);
}
