//! Dense complex linear algebra: Hermitian eigenvalues, LU, Cholesky.

use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;

use crate::error::{Error, Result};

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const C1: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!("empty {rows}x{cols} matrix")));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        if let Some(k) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { row: k / cols, col: k % cols });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C1;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == C0 {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `a*self + b*other`, entrywise.
    pub fn lincomb(&self, a: Complex64, other: &Self, b: Complex64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(&x, &y)| a * x + b * y).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max |M_ij - conj(M_ji)|.
    pub fn hermitian_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    fn check_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!("expected square matrix, got {}x{}", self.rows, self.cols)))
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianSpectrum {
    pub eigenvalues: Vec<f64>,
}

impl HermitianSpectrum {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &ComplexMatrix, tol: f64) -> Result<HermitianSpectrum> {
    let (eigenvalues, _) = hermitian_eigen_impl(m, tol, false)?;
    Ok(HermitianSpectrum { eigenvalues })
}

/// Eigenvalues (ascending) and unit eigenvectors stored as columns.
pub fn hermitian_eigen(m: &ComplexMatrix, tol: f64) -> Result<(Vec<f64>, ComplexMatrix)> {
    let (vals, vecs) = hermitian_eigen_impl(m, tol, true)?;
    Ok((vals, vecs.expect("eigenvectors requested")))
}

fn hermitian_eigen_impl(m: &ComplexMatrix, tol: f64, want_vectors: bool) -> Result<(Vec<f64>, Option<ComplexMatrix>)> {
    m.check_square()?;
    let dev = m.hermitian_deviation();
    if dev > tol {
        return Err(Error::NotHermitian { max_dev: dev });
    }
    let n = m.rows;
    // Hermitian part
    let mut a = m.clone();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)].conj());
        }
    }

    let mut q = if want_vectors { Some(ComplexMatrix::identity(n)) } else { None };
    for k in 0..n.saturating_sub(2) {
        let mut v: Vec<Complex64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        let sigma = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if sigma == 0.0 {
            continue;
        }
        let x0 = v[0];
        let phase = if x0.norm() == 0.0 { C1 } else { x0 / x0.norm() };
        let alpha = -phase * sigma;
        v[0] -= alpha;
        let vn2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vn2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vn2;
        // left: rows k+1..n
        for c in 0..n {
            let s: Complex64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * a[(k + 1 + i, c)]).sum();
            let s = s * beta;
            for (i, vi) in v.iter().enumerate() {
                a[(k + 1 + i, c)] -= vi * s;
            }
        }
        // right: columns k+1..n
        apply_right(&mut a, k + 1, &v, beta);
        if let Some(q) = q.as_mut() {
            apply_right(q, k + 1, &v, beta);
        }
        // clean exact zeros below the subdiagonal
        for i in k + 2..n {
            a[(i, k)] = C0;
            a[(k, i)] = C0;
        }
    }

    let mut d: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    let mut e = vec![0.0; n];
    let mut phases = vec![C1; n];
    for k in 0..n.saturating_sub(1) {
        let ek = a[(k + 1, k)];
        let r = ek.norm();
        e[k] = r;
        phases[k + 1] = if r > 0.0 { phases[k] * (ek / r) } else { phases[k] };
    }

    let mut z = if want_vectors {
        let mut z = vec![0.0; n * n];
        for i in 0..n {
            z[i * n + i] = 1.0;
        }
        Some(z)
    } else {
        None
    };
    tql_implicit(&mut d, &mut e, z.as_deref_mut())?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let vals: Vec<f64> = order.iter().map(|&i| d[i]).collect();

    let vecs = match (q, z) {
        (Some(q), Some(z)) => {
            let mut out = ComplexMatrix::zeros(n, n);
            for (col, &src) in order.iter().enumerate() {
                for r in 0..n {
                    let mut acc = C0;
                    for t in 0..n {
                        acc += q[(r, t)] * phases[t] * z[t * n + src];
                    }
                    out[(r, col)] = acc;
                }
            }
            Some(out)
        }
        _ => None,
    };
    Ok((vals, vecs))
}

fn apply_right(a: &mut ComplexMatrix, off: usize, v: &[Complex64], beta: f64) {
    for r in 0..a.rows {
        let s: Complex64 = v.iter().enumerate().map(|(i, vi)| a[(r, off + i)] * vi).sum();
        let s = s * beta;
        for (i, vi) in v.iter().enumerate() {
            a[(r, off + i)] -= s * vi.conj();
        }
    }
}

/// Implicit QL on a real symmetric tridiagonal matrix; `e[i]` couples `i` and `i+1`.
/// `z`, when given, holds `rows` rows of length `n` that receive the rotations.
pub(crate) fn tql_implicit(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence(format!("implicit QL at index {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    for k in 0..z.len() / n {
                        let f = z[k * n + i + 1];
                        z[k * n + i + 1] = s * z[k * n + i] + c * f;
                        z[k * n + i] = c * z[k * n + i] - s * f;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Partial-pivot LU factorization `P M = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn factor(m: &ComplexMatrix) -> Result<Self> {
        m.check_square()?;
        let n = m.rows;
        let max_row = (0..n).map(|i| (0..n).map(|j| m[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max);
        let thresh = 1e-14 * max_row;
        let mut lu = m.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pmag) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].norm()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmag <= thresh || pmag == 0.0 {
                return Err(Error::SingularMatrix { pivot: pmag, index: k });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let piv = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / piv;
                lu[i * n + k] = f;
                if f == C0 {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= f * u;
                }
            }
        }
        Ok(Self { n, lu, perm, sign })
    }

    pub fn det(&self) -> Complex64 {
        let mut d = Complex64::new(self.sign, 0.0);
        for k in 0..self.n {
            d *= self.lu[k * self.n + k];
        }
        d
    }

    /// Determinant as (unit phase, ln |det|).
    pub fn log_det(&self) -> (Complex64, f64) {
        let mut phase = Complex64::new(self.sign, 0.0);
        let mut log_abs = 0.0;
        for k in 0..self.n {
            let u = self.lu[k * self.n + k];
            let r = u.norm();
            log_abs += r.ln();
            phase *= u / r;
        }
        (phase, log_abs)
    }

    pub fn solve(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        let n = self.n;
        if rhs.rows != n {
            return Err(Error::DimensionMismatch(format!("rhs has {} rows, expected {n}", rhs.rows)));
        }
        let mut x = ComplexMatrix::zeros(n, rhs.cols);
        for c in 0..rhs.cols {
            let mut y: Vec<Complex64> = (0..n).map(|i| rhs[(self.perm[i], c)]).collect();
            for i in 0..n {
                let mut s = y[i];
                for j in 0..i {
                    s -= self.lu[i * n + j] * y[j];
                }
                y[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = y[i];
                for j in i + 1..n {
                    s -= self.lu[i * n + j] * y[j];
                }
                y[i] = s / self.lu[i * n + i];
            }
            for i in 0..n {
                x[(i, c)] = y[i];
            }
        }
        Ok(x)
    }

    /// |U_kk| for each pivot.
    pub fn pivot_magnitudes(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.lu[k * self.n + k].norm()).collect()
    }

    pub fn inverse(&self) -> ComplexMatrix {
        self.solve(&ComplexMatrix::identity(self.n)).expect("square identity rhs")
    }
}

/// Determinant and, optionally, the solution of `M X = rhs`.
pub fn lu_det_and_solve(m: &ComplexMatrix, rhs: Option<&ComplexMatrix>) -> Result<(Complex64, Option<ComplexMatrix>)> {
    let lu = Lu::factor(m)?;
    let sol = rhs.map(|r| lu.solve(r)).transpose()?;
    Ok((lu.det(), sol))
}

/// Lower-triangular `L` with `L L^† = sigma`.
pub fn cholesky_sqrt(sigma: &ComplexMatrix) -> Result<ComplexMatrix> {
    sigma.check_square()?;
    let n = sigma.rows;
    let dev = sigma.hermitian_deviation();
    if dev > 1e-10 * sigma.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian { max_dev: dev });
    }
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut djj = sigma[(j, j)].re;
        for k in 0..j {
            djj -= l[(j, k)].norm_sqr();
        }
        if !(djj > 0.0) {
            return Err(Error::NotPositiveDefinite { index: j });
        }
        let ljj = djj.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = sigma[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}
