//! Self-check suites over a model spec, reported as JSON.

use anyhow::Result;
use num_complex::Complex64;
use serde::Serialize;
use wishart_sum::charpoly::{charpoly_coefficients, expect_charpoly, expect_inverse_charpoly, CommutingCovariances};
use wishart_sum::curve::linear_grid;
use wishart_sum::halfdeg::{
    andreief_rk, biorthogonality_matrix, correlation_rk, density, gram_inverse_kernel, normalization_identity,
    HalfDegenerateModel, KernelEvaluator,
};
use wishart_sum::saddle::{consistency_residual, saddle_from_infinity, DEFAULT_TOL};
use wishart_sum::sampler::{
    bin_masses, mc_density, sample_h_indexed, tv_distance, BinSpec, CovariancePair, HistogramRange,
};
use wishart_sum::special::monic_laguerre;
use wishart_sum::susy::{density_susy, generating_function_11, EpsilonPolicy, SusyQuadrature};

use crate::spec::{Mode, ModelSpecFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub check_name: String,
    pub status: Status,
    pub measured: Option<f64>,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub suite: &'static str,
    pub mode: Option<&'static str>,
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Seed for the Monte Carlo checks of the full suite.
const VALIDATE_SEED: u64 = 20240601;

fn run(name: &str, tolerance: f64, f: impl FnOnce() -> Result<f64>) -> Check {
    let (status, measured, detail) = match f() {
        Ok(m) if m <= tolerance => (Status::Pass, Some(m), None),
        Ok(m) => (Status::Fail, m.is_finite().then_some(m), None),
        Err(e) => (Status::Error, None, Some(format!("{e:#}"))),
    };
    Check { check_name: name.into(), status, measured, tolerance, detail }
}

fn skip(name: &str, tolerance: f64, why: &str) -> Check {
    Check { check_name: name.into(), status: Status::Skip, measured: None, tolerance, detail: Some(why.into()) }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Composite Simpson on an odd-length uniform grid.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1, "Simpson needs an odd number of points");
    let inner: f64 = values[1..n - 1].iter().enumerate().map(|(i, v)| if i % 2 == 0 { 4.0 * v } else { 2.0 * v }).sum();
    (values[0] + values[n - 1] + inner) * h / 3.0
}

/// Upper end of a grid that holds the whole spectrum to double precision.
fn wide_upper(n_a: usize, sa: f64, n_b: usize, sb: f64) -> f64 {
    let peak = n_a as f64 * sa + n_b as f64 * sb;
    let sd = (n_a as f64 * sa * sa + n_b as f64 * sb * sb).sqrt();
    2.0 * peak + 12.0 * sd
}

fn peaks(m: &HalfDegenerateModel) -> Vec<f64> {
    m.sigma_b.iter().map(|s| m.n_a as f64 * m.sigma_a + m.n_b as f64 * s).collect()
}

/// Largest deviation from the Laguerre limit, relative to the evaluation
/// scale Σ|c_k x^k|. The monic Laguerre coefficients alternate in sign, so
/// that scale is |L̂(−x)|.
pub fn laguerre_limit(n: usize, n_a: usize, n_b: usize, sigma: f64) -> Result<f64> {
    let c = CommutingCovariances::new(n_a, n_b, vec![sigma; n], vec![sigma; n])?;
    let alpha = n_a + n_b - n;
    let scale = (n_a + n_b) as f64 * sigma;
    let mut worst: f64 = 0.0;
    for x in linear_grid(0.05 * scale, 1.5 * scale, 7) {
        let sn = sigma.powi(n as i32);
        let want = sn * monic_laguerre(n, alpha, x / sigma);
        let size = sn * monic_laguerre(n, alpha, -x / sigma).abs();
        worst = worst.max((expect_charpoly(&c, x)? - want).abs() / size);
    }
    Ok(worst)
}

fn charpoly_trace(c: &CommutingCovariances) -> Result<f64> {
    let coeffs = charpoly_coefficients(c)?;
    let want: f64 =
        -c.sigma_a_eigs.iter().zip(&c.sigma_b_eigs).map(|(a, b)| c.n_a as f64 * a + c.n_b as f64 * b).sum::<f64>();
    Ok(rel(coeffs[c.n - 1], want))
}

fn inverse_asymptotic(c: &CommutingCovariances) -> Result<f64> {
    let y = Complex64::new(0.0, 1e4 * c.scale());
    let q = expect_inverse_charpoly(c, y, 64)?.value;
    Ok((y.powi(c.n as i32) * q - 1.0).norm())
}

fn susy_normalization(c: &CovariancePair) -> Result<f64> {
    let s = c.mean_scale();
    let y = Complex64::new(0.5 * s, 0.1 * s);
    Ok((generating_function_11(c, y, y, &SusyQuadrature::default_for(c))? - 1.0).norm())
}

fn saddle_consistency(c: &CovariancePair) -> Result<f64> {
    let s = c.mean_scale();
    let mut worst: f64 = 0.0;
    for x in [0.3 * s, 0.6 * s, 0.9 * s] {
        let st = saddle_from_infinity(c, Complex64::new(x, 1e-3 * s), DEFAULT_TOL)?;
        worst = worst.max(consistency_residual(c, &st)? / (c.n_a + c.n_b) as f64);
    }
    Ok(worst)
}

fn sampler_mean_trace(c: &CovariancePair) -> Result<f64> {
    let samples = 2000;
    let want = (c.n_a as f64 * c.sigma_a.trace().re) + (c.n_b as f64 * c.sigma_b.trace().re);
    let total: f64 = (0..samples).map(|i| sample_h_indexed(c, VALIDATE_SEED, i).trace().re).sum();
    Ok(rel(total / samples as f64, want))
}

/// TV between a histogram of `samples` draws and the bin masses of `curve`
/// evaluated on `sub` Simpson panels per bin.
fn mc_tv(
    c: &CovariancePair,
    hi: f64,
    bins: usize,
    samples: usize,
    masses: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<f64> {
    let hist = mc_density(c, samples, &BinSpec { bins, range: HistogramRange::Fixed(0.0, hi) }, VALIDATE_SEED)?;
    let n = c.n() as f64;
    let m: Vec<f64> = masses(&hist.bin_edges)?.iter().map(|v| v / n).collect();
    Ok(tv_distance(&hist.probabilities(), &m))
}

fn half_degenerate_checks(spec: &ModelSpecFile, m: &HalfDegenerateModel, suite: Suite) -> Vec<Check> {
    let n = m.n;
    let sb_max = m.sigma_b.iter().copied().fold(0.0, f64::max);
    let hi = wide_upper(m.n_a, m.sigma_a, m.n_b, sb_max);
    let mut out = Vec::new();
    let ev = match KernelEvaluator::new(m) {
        Ok(ev) => ev,
        Err(e) => return vec![run("kernel_setup", 0.0, || Err(e.into()))],
    };
    out.push(run("normalization_identity", 1e-8, || Ok((normalization_identity(m)? - 1.0).abs())));
    out.push(run("biorthogonality", 1e-8, || {
        let b = biorthogonality_matrix(m)?;
        let mut worst: f64 = 0.0;
        for (j, row) in b.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                worst = worst.max(if j == k { (v - 1.0).abs() } else { v.abs() });
            }
        }
        Ok(worst)
    }));
    let grid = linear_grid(0.0, hi, 8001);
    let curve = density(&ev, &grid);
    out.push(run("density_integral", 1e-6, || {
        let c = curve.as_ref().map_err(Clone::clone)?;
        Ok((simpson(&c.values, grid[1] - grid[0]) - n as f64).abs())
    }));
    out.push(run("density_nonnegative", 1e-10, || {
        let c = curve.as_ref().map_err(Clone::clone)?;
        let mx = c.values.iter().copied().fold(0.0, f64::max);
        let mn = c.values.iter().copied().fold(f64::INFINITY, f64::min);
        Ok((-mn).max(0.0) / mx)
    }));
    out.push(run("kernel_vs_gram_inverse", 1e-8, || {
        let p = peaks(m);
        let mut worst: f64 = 0.0;
        for &x in &p {
            for &y in p.iter().step_by(2) {
                worst = worst.max(rel(ev.kernel(x, y)?, gram_inverse_kernel(m, x, y)?));
            }
        }
        Ok(worst)
    }));
    out.push(run("kernel_scale_covariance", 1e-8, || {
        let t = 2.5;
        let evt = KernelEvaluator::new(&m.scaled(t))?;
        let p = peaks(m);
        let mut worst: f64 = 0.0;
        for (&x, &y) in p.iter().zip(p.iter().rev()) {
            worst = worst.max(rel(t * evt.kernel(t * x, t * y)?, ev.kernel(x, y)?));
        }
        Ok(worst)
    }));
    out.push(run("charpoly_trace", 1e-12, || charpoly_trace(&spec.commuting()?)));
    if suite == Suite::Fast {
        return out;
    }
    for k in 2..=3 {
        let name = format!("andreief_r{k}");
        if k > n {
            out.push(skip(&name, 1e-7, "k exceeds N"));
            continue;
        }
        out.push(run(&name, 1e-7, || {
            let p = peaks(m);
            let pts: Vec<f64> = (0..k).map(|i| p[(i * 2 + 1) % n] * (1.0 + 0.05 * i as f64)).collect();
            Ok(rel(correlation_rk(&ev, &pts)?, andreief_rk(m, &pts)?.value))
        }));
    }
    out.push(run("laguerre_limit", 1e-10, || laguerre_limit(n, m.n_a, m.n_b, m.sigma_a)));
    out.push(run("reproducing_kernel", 1e-6, || {
        let x = peaks(m)[n / 2];
        let h = grid[1] - grid[0];
        let f: Vec<f64> = grid.iter().map(|&z| Ok(ev.kernel(x, z)? * ev.kernel(z, x)?)).collect::<Result<_>>()?;
        Ok(rel(simpson(&f, h), ev.kernel(x, x)?))
    }));
    out.push(run("mc_total_variation", 0.03, || {
        let c = spec.covariance_pair()?;
        mc_tv(&c, hi, 100, 20000, |edges| Ok(bin_masses(edges, 16, |x| ev.kernel(x, x).unwrap_or(f64::NAN))))
    }));
    if n <= 6 {
        out.push(run("susy_vs_exact", 1e-4, || {
            let c = spec.covariance_pair()?;
            let pts = peaks(m);
            let lo = pts.iter().copied().fold(f64::INFINITY, f64::min);
            let pts = linear_grid(lo, pts.iter().copied().fold(0.0, f64::max), 5);
            let span = pts[4] - pts[0];
            let s =
                density_susy(&c, &pts, &EpsilonPolicy::default_for(span.max(lo), n), &SusyQuadrature::default_for(&c))?;
            let mut worst: f64 = 0.0;
            for (&x, &v) in pts.iter().zip(&s.values) {
                worst = worst.max(rel(v, ev.kernel(x, x)?));
            }
            Ok(worst)
        }));
    } else {
        out.push(skip("susy_vs_exact", 1e-4, "N > 6"));
    }
    out
}

fn commuting_checks(spec: &ModelSpecFile, c: &CommutingCovariances, suite: Suite) -> Vec<Check> {
    let mut out = vec![
        run("charpoly_trace", 1e-12, || charpoly_trace(c)),
        run("inverse_charpoly_asymptotic", 1e-3, || inverse_asymptotic(c)),
    ];
    out.extend(pair_checks(spec, suite));
    if suite == Suite::Full {
        let sigma = c.sigma_a_eigs.iter().chain(&c.sigma_b_eigs).copied().fold(0.0, f64::max);
        out.push(run("laguerre_limit", 1e-10, || laguerre_limit(c.n, c.n_a, c.n_b, sigma)));
    }
    out
}

fn pair_checks(spec: &ModelSpecFile, suite: Suite) -> Vec<Check> {
    let c = match spec.covariance_pair() {
        Ok(c) => c,
        Err(e) => return vec![run("covariances", 0.0, || Err(e))],
    };
    let mut out = vec![
        run("susy_normalization", 1e-6, || susy_normalization(&c)),
        run("saddle_consistency", 1e-9, || saddle_consistency(&c)),
        run("sampler_mean_trace", 0.02, || sampler_mean_trace(&c)),
    ];
    if suite == Suite::Full {
        out.push(run("susy_vs_mc_total_variation", 0.03, || {
            let (sa, sb) = spec.sigma_max()?;
            let hi = wide_upper(c.n_a, sa, c.n_b, sb);
            let grid = linear_grid(0.0, hi, 101);
            let s = density_susy(&c, &grid, &EpsilonPolicy::default_for(hi, c.n()), &SusyQuadrature::default_for(&c))?;
            // 25 bins of 4 grid intervals each
            let h = grid[1] - grid[0];
            mc_tv(&c, hi, 25, 20000, |_| Ok(s.values.windows(5).step_by(4).map(|w| simpson(w, h)).collect()))
        }));
    }
    out
}

pub fn validate(spec: &ModelSpecFile, suite: Suite) -> Report {
    let mut checks = Vec::new();
    match spec.mode {
        Mode::HalfDegenerate => match spec.half_degenerate() {
            Ok(m) => checks.extend(half_degenerate_checks(spec, &m, suite)),
            Err(e) => checks.push(run("model", 0.0, || Err(e))),
        },
        Mode::Commuting => match spec.commuting() {
            Ok(c) => checks.extend(commuting_checks(spec, &c, suite)),
            Err(e) => checks.push(run("model", 0.0, || Err(e))),
        },
        Mode::General => checks.extend(pair_checks(spec, suite)),
    }
    finish(suite, Some(spec.mode.as_str()), checks)
}

/// Report for a spec that did not load.
pub fn load_failure(suite: Suite, err: &anyhow::Error) -> Report {
    finish(
        suite,
        None,
        vec![Check {
            check_name: "spec".into(),
            status: Status::Error,
            measured: None,
            tolerance: 0.0,
            detail: Some(format!("{err:#}")),
        }],
    )
}

fn finish(suite: Suite, mode: Option<&'static str>, checks: Vec<Check>) -> Report {
    let passed = checks.iter().all(|c| matches!(c.status, Status::Pass | Status::Skip));
    Report { suite: if suite == Suite::Fast { "fast" } else { "full" }, mode, passed, checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_on_cubics() {
        let g = linear_grid(0.0, 2.0, 5);
        let v: Vec<f64> = g.iter().map(|x| x * x * x - x).collect();
        assert!((simpson(&v, 0.5) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn failing_check_reports_measurement() {
        let c = run("x", 1.0, || Ok(2.0));
        assert_eq!(c.status, Status::Fail);
        assert_eq!(c.measured, Some(2.0));
        let c = run("x", 1.0, || Ok(f64::NAN));
        assert_eq!(c.status, Status::Fail);
    }
}
