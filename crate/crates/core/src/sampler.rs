//! Monte Carlo sampling of H = AA† + BB† and eigenvalue histograms.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_sqrt, hermitian_eigenvalues, ComplexMatrix};

/// Full (possibly non-commuting) covariance pair with cached Cholesky factors.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    pub sigma_a: ComplexMatrix,
    pub sigma_b: ComplexMatrix,
    pub n_a: usize,
    pub n_b: usize,
    chol_a: ComplexMatrix,
    chol_b: ComplexMatrix,
}

impl CovariancePair {
    pub fn new(sigma_a: ComplexMatrix, sigma_b: ComplexMatrix, n_a: usize, n_b: usize) -> Result<Self> {
        if !sigma_a.is_square() || sigma_a.rows() != sigma_b.rows() || !sigma_b.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "sigma_A is {}x{}, sigma_B is {}x{}",
                sigma_a.rows(),
                sigma_a.cols(),
                sigma_b.rows(),
                sigma_b.cols()
            )));
        }
        let n = sigma_a.rows();
        if n_a < n || n_b < n {
            return Err(Error::InvalidParameter(format!(
                "need N_A >= N and N_B >= N (got N={n}, N_A={n_a}, N_B={n_b})"
            )));
        }
        let chol_a = cholesky_sqrt(&sigma_a)?;
        let chol_b = cholesky_sqrt(&sigma_b)?;
        Ok(Self { sigma_a, sigma_b, n_a, n_b, chol_a, chol_b })
    }

    /// Diagonal pair from eigenvalue lists.
    pub fn diagonal(n_a: usize, n_b: usize, sigma_a: &[f64], sigma_b: &[f64]) -> Result<Self> {
        Self::new(ComplexMatrix::from_diag(sigma_a), ComplexMatrix::from_diag(sigma_b), n_a, n_b)
    }

    pub fn n(&self) -> usize {
        self.sigma_a.rows()
    }

    /// Whether both covariances are diagonal.
    pub fn is_diagonal(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| {
            (0..n).all(|j| i == j || (self.sigma_a[(i, j)].norm() == 0.0 && self.sigma_b[(i, j)].norm() == 0.0))
        })
    }

    /// Upper bound on the largest eigenvalue of E[H] = N_A Σ_A + N_B Σ_B.
    pub fn mean_scale(&self) -> f64 {
        let n = self.n();
        let row = |m: &ComplexMatrix, i: usize| (0..n).map(|j| m[(i, j)].norm()).sum::<f64>();
        (0..n)
            .map(|i| self.n_a as f64 * row(&self.sigma_a, i) + self.n_b as f64 * row(&self.sigma_b, i))
            .fold(0.0, f64::max)
    }
}

fn gaussian_block(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = ComplexMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            g[(i, j)] = Complex64::new(s * re, s * im);
        }
    }
    g
}

/// Sample number `index` of the stream keyed by `seed`.
pub fn sample_h_indexed(c: &CovariancePair, seed: u64, index: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let n = c.n();
    let a = c.chol_a.matmul(&gaussian_block(&mut rng, n, c.n_a));
    let b = c.chol_b.matmul(&gaussian_block(&mut rng, n, c.n_b));
    let mut h =
        a.matmul(&a.adjoint()).lincomb(Complex64::new(1.0, 0.0), &b.matmul(&b.adjoint()), Complex64::new(1.0, 0.0));
    // exact Hermitian symmetry
    for i in 0..n {
        h[(i, i)].im = 0.0;
        for j in i + 1..n {
            h[(j, i)] = h[(i, j)].conj();
        }
    }
    h
}

pub fn sample_h(c: &CovariancePair, seed: u64) -> ComplexMatrix {
    sample_h_indexed(c, seed, 0)
}

/// Eigenvalues of sample `index`, ascending.
pub fn sample_eigenvalues(c: &CovariancePair, seed: u64, index: u64) -> Result<Vec<f64>> {
    let h = sample_h_indexed(c, seed, index);
    Ok(hermitian_eigenvalues(&h, 1e-12)?.eigenvalues)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HistogramRange {
    /// [0, 1.2 × largest eigenvalue over a pilot run].
    Auto,
    Fixed(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSpec {
    pub bins: usize,
    pub range: HistogramRange,
}

pub const PILOT_SAMPLES: usize = 1000;

/// Pooled eigenvalue histogram. Eigenvalues beyond the last edge are counted
/// in the last bin and tallied in `clamped`, so the counts always sum to
/// `n_samples · N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_samples: usize,
    pub n: usize,
    /// Multiplies a count to give the density estimate of a unit-width bin.
    pub normalization: f64,
    pub clamped: u64,
}

impl SpectrumHistogram {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    /// Step-function density; integrates to N.
    pub fn density(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(self.bin_edges.windows(2))
            .map(|(&k, e)| k as f64 * self.normalization / (e[1] - e[0]))
            .collect()
    }

    /// Fraction of all eigenvalues in each bin.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = (self.n_samples * self.n) as f64;
        self.counts.iter().map(|&k| k as f64 / total).collect()
    }
}

fn bin_index(edges: &[f64], x: f64) -> usize {
    let nb = edges.len() - 1;
    match edges.partition_point(|&e| e <= x) {
        0 => 0,
        p => (p - 1).min(nb - 1),
    }
}

fn pilot_max(c: &CovariancePair, seed: u64, count: usize) -> Result<f64> {
    let maxima = (0..count as u64)
        .into_par_iter()
        .map(|i| sample_eigenvalues(c, seed, i).map(|ev| ev.last().copied().unwrap_or(0.0)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(maxima.into_iter().fold(0.0, f64::max))
}

/// Histogram of the eigenvalues of `n_samples` independent draws.
pub fn mc_density(c: &CovariancePair, n_samples: usize, bins: &BinSpec, seed: u64) -> Result<SpectrumHistogram> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
    }
    if bins.bins == 0 {
        return Err(Error::InvalidParameter("need at least one bin".into()));
    }
    let (lo, hi) = match bins.range {
        HistogramRange::Fixed(lo, hi) => (lo, hi),
        HistogramRange::Auto => (0.0, 1.2 * pilot_max(c, seed, PILOT_SAMPLES.min(n_samples))?),
    };
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParameter(format!("histogram range [{lo}, {hi}] is empty")));
    }
    let edges: Vec<f64> = (0..=bins.bins).map(|i| lo + (hi - lo) * i as f64 / bins.bins as f64).collect();
    let nb = bins.bins;
    let (counts, clamped) = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| -> Result<(Vec<u64>, u64)> {
            let mut counts = vec![0u64; nb];
            let mut clamped = 0;
            for x in sample_eigenvalues(c, seed, i)? {
                if x >= hi {
                    clamped += 1;
                }
                counts[bin_index(&edges, x)] += 1;
            }
            Ok((counts, clamped))
        })
        .try_reduce(
            || (vec![0u64; nb], 0),
            |mut a, b| {
                a.0.iter_mut().zip(&b.0).for_each(|(x, y)| *x += y);
                Ok((a.0, a.1 + b.1))
            },
        )?;
    Ok(SpectrumHistogram {
        bin_edges: edges,
        counts,
        n_samples,
        n: c.n(),
        normalization: 1.0 / n_samples as f64,
        clamped,
    })
}

/// Mass of a density in each bin, by composite Simpson with `sub` (even)
/// panels per bin.
pub fn bin_masses<F: Fn(f64) -> f64>(edges: &[f64], sub: usize, f: F) -> Vec<f64> {
    let sub = sub.max(2).div_ceil(2) * 2;
    edges
        .windows(2)
        .map(|e| {
            let h = (e[1] - e[0]) / sub as f64;
            let mut s = f(e[0]) + f(e[1]);
            for k in 1..sub {
                s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(e[0] + k as f64 * h);
            }
            s * h / 3.0
        })
        .collect()
}

/// ½ Σ |p_i − q_i|.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
