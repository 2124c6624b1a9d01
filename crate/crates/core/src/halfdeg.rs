//! Half-degenerate case Σ_A = σ_A·1, Σ_B = diag(σ_B1..σ_BN): constants, Gram
//! matrix, bi-orthogonal polynomials, kernel, correlation functions.

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use rayon::prelude::*;

use crate::curve::{CurveMetadata, DensityCurve, DensityMethod};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::special::{ln_phi_weight, log_factorial, WeightParams};

/// Relative σ_B gaps below this are rejected.
pub const SIGMA_GAP_REJECT: f64 = 1e-8;
/// Relative σ_B gaps below this produce a conditioning warning.
pub const SIGMA_GAP_WARN: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct HalfDegenerateModel {
    pub n: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub sigma_a: f64,
    pub sigma_b: Vec<f64>,
}

impl HalfDegenerateModel {
    pub fn new(n_a: usize, n_b: usize, sigma_a: f64, sigma_b: Vec<f64>) -> Result<Self> {
        let model = Self { n: sigma_b.len(), n_a, n_b, sigma_a, sigma_b };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.sigma_b.len() != self.n {
            return Err(Error::InvalidParameter("sigma_B must have N >= 1 entries".into()));
        }
        for j in 0..self.n {
            self.weight(j).validate().map_err(|e| match e {
                Error::DegenerateSigma { a, b, .. } => Error::DegenerateSigma { i: 0, j: j + 1, a, b },
                other => other,
            })?;
        }
        for i in 0..self.n {
            for j in i + 1..self.n {
                let (a, b) = (self.sigma_b[i], self.sigma_b[j]);
                if (a - b).abs() < SIGMA_GAP_REJECT * a.max(b) {
                    return Err(Error::DegenerateSigma { i: i + 1, j: j + 1, a, b });
                }
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.n_a + self.n_b - self.n
    }

    /// Weight parameters of φ_j, `j` zero-based.
    pub fn weight(&self, j: usize) -> WeightParams {
        WeightParams { n: self.n, n_a: self.n_a, n_b: self.n_b, sigma_a: self.sigma_a, sigma_bj: self.sigma_b[j] }
    }

    /// Warnings for nearly coincident σ_B pairs.
    pub fn conditioning_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                let (a, b) = (self.sigma_b[i], self.sigma_b[j]);
                let gap = (a - b).abs() / a.max(b);
                if gap < SIGMA_GAP_WARN {
                    out.push(format!("sigma_B entries {} and {} have relative gap {gap:.3e}", i + 1, j + 1));
                }
            }
        }
        out
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { sigma_a: self.sigma_a * t, sigma_b: self.sigma_b.iter().map(|s| s * t).collect(), ..self.clone() }
    }
}

/// Signed log-magnitude number `sign · exp(log_abs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub sign: f64,
    pub log_abs: f64,
}

impl SignedLog {
    pub fn value(&self) -> f64 {
        self.sign * self.log_abs.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConstants {
    /// Normalization constant C of the joint density.
    pub c: SignedLog,
    /// G_j, one per σ_Bj.
    pub g: Vec<SignedLog>,
    /// N_A!(N_B−N)!/(N_A+N_B−N)!.
    pub c_kernel: f64,
}

pub fn model_constants(model: &HalfDegenerateModel) -> Result<ModelConstants> {
    model.validate()?;
    let (n, n_a, n_b) = (model.n, model.n_a, model.n_b);
    let nbn = n_b - n;
    let m = model.m();
    let lf = log_factorial;
    let sb = &model.sigma_b;

    // C = σ_A^{−N_A N} Π σ_Bk^{N−N_B−1} / (N! Δ_N(σ_B)) · Π_l (N_B−N)!/((N_B−N+l)! m!)
    let mut log_c = -((n_a * n) as f64) * model.sigma_a.ln() - lf(n);
    log_c -= ((n_b + 1 - n) as f64) * sb.iter().map(|s| s.ln()).sum::<f64>();
    for l in 0..n {
        log_c += lf(nbn) - lf(nbn + l) - lf(m);
    }
    let mut sign_c = 1.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = sb[j] - sb[i];
            log_c -= d.abs().ln();
            sign_c *= d.signum();
        }
    }

    let base = lf(nbn) - lf(n_b - 1) - lf(m) - (n_a as f64) * model.sigma_a.ln();
    let g = (0..n)
        .map(|j| {
            let mut log_abs = base - ((nbn + 1) as f64) * sb[j].ln();
            let mut sign = 1.0;
            for l in (0..n).filter(|&l| l != j) {
                let d = sb[j] - sb[l];
                log_abs -= d.abs().ln();
                sign *= d.signum();
            }
            SignedLog { sign, log_abs }
        })
        .collect();

    Ok(ModelConstants { c: SignedLog { sign: sign_c, log_abs: log_c }, g, c_kernel: (lf(n_a) + lf(nbn) - lf(m)).exp() })
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// ln g_ij with g_ij = ∫ λ^{i−1} φ_j(λ) dλ, row-major `[i][j]`, zero-based.
///
/// φ_j is m! times the convolution of two Gamma densities, so every moment is
/// a positive binomial sum of Gamma moments.
pub fn log_gram_matrix(model: &HalfDegenerateModel) -> Result<Vec<Vec<f64>>> {
    model.validate()?;
    let (n, n_a) = (model.n, model.n_a);
    let nbn = model.n_b - n;
    let lf = log_factorial;
    let la = -model.sigma_a.ln();
    let lfm = lf(model.m());
    let mut out = vec![vec![0.0; n]; n];
    for j in 0..n {
        let lb = -model.sigma_b[j].ln();
        for (p, row) in out.iter_mut().enumerate() {
            let terms: Vec<f64> = (0..=p)
                .map(|r| {
                    let s = p - r;
                    let binom = lf(p) - lf(r) - lf(s);
                    let ma = lf(n_a - 1 + r) - lf(n_a - 1) - ((n_a + r) as f64) * la;
                    let mb = lf(nbn + s) - lf(nbn) - ((nbn + 1 + s) as f64) * lb;
                    binom + ma + mb
                })
                .collect();
            row[j] = lfm + log_sum_exp(&terms);
        }
    }
    Ok(out)
}

/// Gram matrix g_ij = ∫ λ^{i−1} φ_j(λ) dλ in closed form.
pub fn gram_matrix(model: &HalfDegenerateModel) -> Result<ComplexMatrix> {
    let lg = log_gram_matrix(model)?;
    let n = model.n;
    let data: Vec<f64> = lg.iter().flat_map(|row| row.iter().map(|l| l.exp())).collect();
    if data.iter().any(|v| !v.is_finite() || *v == 0.0) {
        return Err(Error::InvalidParameter("Gram entries leave double range; use log_gram_matrix".into()));
    }
    ComplexMatrix::from_real(n, n, &data)
}

/// Polynomial in (z1, z2) whose coefficients are polynomials in x:
/// `coeffs[a][b][p]` multiplies z1^a z2^b x^p.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariatePoly {
    pub coeffs: Vec<Vec<Vec<f64>>>,
}

impl BivariatePoly {
    /// Π_k (x − z1 s_Ak − z2 s_Bk).
    pub fn from_linear_factors(s_a: &[f64], s_b: &[f64]) -> Self {
        assert_eq!(s_a.len(), s_b.len());
        let d = s_a.len();
        let mut c = vec![vec![vec![0.0; d + 1]; d + 1]; d + 1];
        c[0][0][0] = 1.0;
        for (k, (&sa, &sb)) in s_a.iter().zip(s_b).enumerate() {
            let mut next = vec![vec![vec![0.0; d + 1]; d + 1]; d + 1];
            for a in 0..=k {
                for b in 0..=(k - a) {
                    for p in 0..=(k - a - b) {
                        let v = c[a][b][p];
                        if v == 0.0 {
                            continue;
                        }
                        next[a][b][p + 1] += v;
                        next[a + 1][b][p] -= sa * v;
                        next[a][b + 1][p] -= sb * v;
                    }
                }
            }
            c = next;
        }
        Self { coeffs: c }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Applies the residue rule N_a! ∮ e^z z^{a−N_a−1} dz/(2πi) = N_a!/(N_a−a)!
    /// in both variables; returns the x-coefficients, ascending.
    pub fn residue(&self, n_a: usize, n_b: usize) -> Vec<f64> {
        let d = self.degree();
        let mut out = vec![0.0; d + 1];
        for a in 0..=d.min(n_a) {
            let fa = falling(n_a, a);
            for b in 0..=(d - a).min(n_b) {
                let fb = falling(n_b, b);
                for (p, o) in out.iter_mut().enumerate().take(d - a - b + 1) {
                    *o += self.coeffs[a][b][p] * fa * fb;
                }
            }
        }
        out
    }
}

/// n!/(n−k)!.
fn falling(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

/// Horner evaluation of ascending coefficients.
pub fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Coefficients (ascending, length N) of the monic polynomial P^{(j)}_{N−1},
/// `j` one-based, correctly rounded.
pub fn poly_pj(model: &HalfDegenerateModel, j: usize) -> Result<Vec<f64>> {
    if j == 0 || j > model.n {
        return Err(Error::IndexOutOfRange { index: j, len: model.n });
    }
    model.validate()?;
    Ok(extended_pj(model, j - 1, extended_bits(model.n)).iter().map(|c| c.to_f64().value()).collect())
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

/// Horner with error-free transformations over double-double coefficients;
/// as accurate as evaluation in twice the working precision.
fn compensated_horner(hi: &[f64], lo: &[f64], x: f64) -> f64 {
    let n = hi.len();
    let mut s = hi[n - 1];
    let mut c = lo[n - 1];
    for i in (0..n - 1).rev() {
        let p = s * x;
        let pe = s.mul_add(x, -p);
        let (t, se) = two_sum(p, hi[i]);
        c = c * x + (pe + se + lo[i]);
        s = t;
    }
    s + c
}

/// Precomputed polynomials and constants for O(N²) kernel evaluation.
#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    pub model: HalfDegenerateModel,
    pub constants: ModelConstants,
    /// Rounded coefficients of each P^{(j)}, ascending.
    pub pj_coeffs: Vec<Vec<f64>>,
    /// Rounding residuals of `pj_coeffs`.
    pj_lo: Vec<Vec<f64>>,
}

impl KernelEvaluator {
    pub fn new(model: &HalfDegenerateModel) -> Result<Self> {
        let constants = model_constants(model)?;
        let bits = extended_bits(model.n);
        let (mut hi, mut lo) = (Vec::with_capacity(model.n), Vec::with_capacity(model.n));
        for j in 0..model.n {
            let exact = extended_pj(model, j, bits);
            let h: Vec<f64> = exact.iter().map(|c| c.to_f64().value()).collect();
            lo.push(exact.iter().zip(&h).map(|(c, &v)| (c.clone() - big(v, bits)).to_f64().value()).collect());
            hi.push(h);
        }
        Ok(Self { model: model.clone(), constants, pj_coeffs: hi, pj_lo: lo })
    }

    /// P^{(j)}_{N−1}(x), `j` zero-based. The monomial sum cancels heavily
    /// inside the spectrum, so it is evaluated with compensation.
    pub fn pj(&self, j: usize, x: f64) -> f64 {
        compensated_horner(&self.pj_coeffs[j], &self.pj_lo[j], x)
    }

    /// ln φ_j(y) for all j.
    pub fn ln_phis(&self, y: f64) -> Result<Vec<f64>> {
        (0..self.model.n).map(|j| ln_phi_weight(&self.model.weight(j), y)).collect()
    }

    fn combine(&self, pvals: &[f64], ln_phis: &[f64]) -> f64 {
        let logs: Vec<f64> =
            (0..self.model.n).map(|j| self.constants.g[j].log_abs + pvals[j].abs().ln() + ln_phis[j]).collect();
        let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if mx == f64::NEG_INFINITY {
            return 0.0;
        }
        let s: f64 =
            (0..self.model.n).map(|j| self.constants.g[j].sign * pvals[j].signum() * (logs[j] - mx).exp()).sum();
        s * mx.exp()
    }

    /// K_N(x, y) = Σ_j G_j P^{(j)}_{N−1}(x) φ_j(y).
    pub fn kernel(&self, x: f64, y: f64) -> Result<f64> {
        let pvals: Vec<f64> = (0..self.model.n).map(|j| self.pj(j, x)).collect();
        Ok(self.combine(&pvals, &self.ln_phis(y)?))
    }

    /// Matrix [K(λ_a, λ_b)], row-major.
    pub fn kernel_matrix(&self, points: &[f64]) -> Result<Vec<f64>> {
        let k = points.len();
        let pv: Vec<Vec<f64>> = points.iter().map(|&x| (0..self.model.n).map(|j| self.pj(j, x)).collect()).collect();
        let ph: Vec<Vec<f64>> = points.iter().map(|&y| self.ln_phis(y)).collect::<Result<_>>()?;
        let mut out = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                out[a * k + b] = self.combine(&pv[a], &ph[b]);
            }
        }
        Ok(out)
    }
}

pub fn kernel(ev: &KernelEvaluator, x: f64, y: f64) -> Result<f64> {
    if !(x >= 0.0 && y >= 0.0) {
        return Err(Error::InvalidParameter(format!("kernel arguments must be >= 0 (x={x}, y={y})")));
    }
    ev.kernel(x, y)
}

/// Determinant of a small real matrix by partial pivoting; exact zero on a
/// vanishing pivot.
fn det_real(mut a: Vec<f64>, n: usize) -> f64 {
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs())).unwrap();
        if a[p * n + k] == 0.0 {
            return 0.0;
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            det = -det;
        }
        let piv = a[k * n + k];
        det *= piv;
        for i in k + 1..n {
            let f = a[i * n + k] / piv;
            for c in k + 1..n {
                a[i * n + c] -= f * a[k * n + c];
            }
        }
    }
    det
}

fn check_points(n: usize, points: &[f64]) -> Result<()> {
    let k = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("number of points k = {k} must satisfy 1 <= k <= N = {n}")));
    }
    if let Some(p) = points.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidParameter(format!("points must be finite and >= 0 (got {p})")));
    }
    Ok(())
}

/// R_k(λ_1..λ_k) = det[K_N(λ_a, λ_b)].
pub fn correlation_rk(ev: &KernelEvaluator, points: &[f64]) -> Result<f64> {
    check_points(ev.model.n, points)?;
    Ok(det_real(ev.kernel_matrix(points)?, points.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AndreiefValue {
    pub value: f64,
    /// Ratio of extreme pivots in the elimination of the equilibrated block
    /// matrix.
    pub condition_estimate: f64,
    /// Condition estimate above 1e12 times the gain of the working
    /// precision over double.
    pub ill_conditioned: bool,
}

/// R_k from the (N+k)×(N+k) block determinant
/// (−1)^k N! C det[[gᵀ, Φ], [X, 0]], Φ_jb = φ_j(λ_b), X_ai = λ_a^{i−1},
/// in extended precision. N! C is taken as 1/det g.
pub fn andreief_rk(model: &HalfDegenerateModel, points: &[f64]) -> Result<AndreiefValue> {
    let n = model.n;
    check_points(n, points)?;
    let k = points.len();
    let bits = moment_bits(model);
    let ln_phi: Vec<Vec<f64>> = (0..n)
        .map(|j| points.iter().map(|&y| ln_phi_weight(&model.weight(j), y)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    // Φ columns scaled by exp(−shift_b)
    let shifts: Vec<f64> = (0..k).map(|b| (0..n).map(|j| ln_phi[j][b]).fold(f64::NEG_INFINITY, f64::max)).collect();
    if shifts.contains(&f64::NEG_INFINITY) {
        return Ok(AndreiefValue { value: 0.0, condition_estimate: f64::INFINITY, ill_conditioned: false });
    }
    // g = c0 M; dividing the first N columns by c0 leaves det(g) = c0^N det M
    let inv_c0 = big(1.0, bits)
        / (big_falling(model.m(), model.m(), bits) * big_pow(&big(model.sigma_a, bits), model.n_a, bits));
    let mom = reduced_moments(model, bits);
    let dim = n + k;
    let mut blk: Vec<Vec<BigF>> = vec![vec![big_int(0, bits); dim]; dim];
    for j in 0..n {
        for i in 0..n {
            blk[j][i] = mom[i][j].clone();
        }
        for b in 0..k {
            blk[j][n + b] = big_exp(ln_phi[j][b] - shifts[b], bits);
        }
    }
    for a in 0..k {
        let x = big(points[a], bits);
        let mut xp = inv_c0.clone();
        for i in 0..n {
            blk[n + a][i] = xp.clone();
            xp *= x.clone();
        }
    }
    let gt: Vec<Vec<BigF>> = (0..n).map(|j| (0..n).map(|i| mom[i][j].clone()).collect()).collect();
    let (sg, lg, _) = big_log_det(gt);
    let scaled = equilibrate(&mut blk, bits);
    let (sb, lb, log_cond) = big_log_det(blk);
    let lb = lb - scaled;
    if sb == 0.0 {
        return Ok(AndreiefValue { value: 0.0, condition_estimate: f64::INFINITY, ill_conditioned: false });
    }
    // N! C = 1/det g
    let parity = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let ln = lb - lg + shifts.iter().sum::<f64>();
    Ok(AndreiefValue {
        value: parity * sb * sg * ln.exp(),
        condition_estimate: log_cond.exp(),
        ill_conditioned: log_cond > 12.0 * std::f64::consts::LN_10 + (bits - 53) as f64 * std::f64::consts::LN_2,
    })
}

/// K_N(x, y) = Σ_ij x^{i−1} (g^{−T})_ij φ_j(y) through an explicit Gram solve,
/// carried out in extended precision since g is badly conditioned.
pub fn gram_inverse_kernel(model: &HalfDegenerateModel, x: f64, y: f64) -> Result<f64> {
    model.validate()?;
    let n = model.n;
    let bits = moment_bits(model);
    let ln_phi: Vec<f64> = (0..n).map(|j| ln_phi_weight(&model.weight(j), y)).collect::<Result<_>>()?;
    let shift = ln_phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    // gᵀ w = φ with g = m! σ_A^{N_A} × reduced moments
    let mom = reduced_moments(model, bits);
    let mut a: Vec<Vec<BigF>> = (0..n)
        .map(|j| {
            let mut row: Vec<BigF> = (0..n).map(|i| mom[i][j].clone()).collect();
            row.push(big_exp(ln_phi[j] - shift, bits));
            row
        })
        .collect();
    let w = big_solve(&mut a);
    let xb = big(x, bits);
    let mut acc = big_int(0, bits);
    for wi in w.iter().rev() {
        acc = acc * xb.clone() + wi.clone();
    }
    let scale = shift - log_factorial(model.m()) - model.n_a as f64 * model.sigma_a.ln();
    Ok(acc.to_f64().value() * scale.exp())
}

/// Solves the augmented system `a = [A | b]` in place by Gaussian
/// elimination with partial pivoting.
fn big_solve(a: &mut [Vec<BigF>]) -> Vec<BigF> {
    let n = a.len();
    let zero = BigF::ZERO;
    let abs = |v: &BigF| if *v < zero { -v.clone() } else { v.clone() };
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| abs(&a[i][k]).cmp(&abs(&a[j][k]))).unwrap();
        a.swap(p, k);
        let piv = a[k][k].clone();
        for i in k + 1..n {
            let f = a[i][k].clone() / piv.clone();
            for c in k + 1..=n {
                let t = f.clone() * a[k][c].clone();
                a[i][c] -= t;
            }
        }
    }
    let mut x = vec![BigF::ZERO; n];
    for k in (0..n).rev() {
        let mut s = a[k][n].clone();
        for c in k + 1..n {
            s -= a[k][c].clone() * x[c].clone();
        }
        x[k] = s / a[k][k].clone();
    }
    x
}

type BigF = FBig<HalfEven>;

/// Working precision wide enough to hold the moment and polynomial
/// coefficients of an N-dimensional model exactly.
fn extended_bits(n: usize) -> usize {
    256 + 128 * n
}

/// Precision for sums over Gram moments, whose terms span roughly
/// (σ_B,max/σ_B,min)^{N_B} on top of factorial growth.
fn moment_bits(model: &HalfDegenerateModel) -> usize {
    let lo = model.sigma_b.iter().copied().fold(f64::INFINITY, f64::min).min(model.sigma_a);
    let hi = model.sigma_b.iter().copied().fold(0.0, f64::max).max(model.sigma_a);
    let spread = (model.n_b + model.n) as f64 * (hi / lo).log2();
    let growth = 2.0 * model.n as f64 * ((model.n_a + model.n_b) as f64).log2();
    extended_bits(model.n) + (spread + growth).ceil() as usize
}

fn big(x: f64, bits: usize) -> BigF {
    BigF::try_from(x).expect("finite input").with_precision(bits).value()
}

/// e^x without underflow.
fn big_exp(x: f64, bits: usize) -> BigF {
    if x == f64::NEG_INFINITY {
        return big_int(0, bits);
    }
    big(x, bits).exp()
}

fn big_int(k: usize, bits: usize) -> BigF {
    BigF::from(k as u64).with_precision(bits).value()
}

fn big_falling(top: usize, k: usize, bits: usize) -> BigF {
    (0..k).fold(big_int(1, bits), |acc, i| acc * big_int(top - i, bits))
}

fn big_pow(x: &BigF, k: usize, bits: usize) -> BigF {
    (0..k).fold(big_int(1, bits), |acc, _| acc * x.clone())
}

/// g_pk / (m! σ_A^{N_A}) in extended precision.
fn reduced_moments(model: &HalfDegenerateModel, bits: usize) -> Vec<Vec<BigF>> {
    let (n, n_a) = (model.n, model.n_a);
    let nbn = model.n_b - n;
    let sa = big(model.sigma_a, bits);
    let moment = |p: usize, k: usize| -> BigF {
        let sb = big(model.sigma_b[k], bits);
        let mut acc = big_int(0, bits);
        for r in 0..=p {
            let s = p - r;
            let binom = big_falling(p, r, bits) / big_falling(r, r, bits);
            acc += binom
                * big_falling(n_a - 1 + r, r, bits)
                * big_pow(&sa, r, bits)
                * big_falling(nbn + s, s, bits)
                * big_pow(&sb, nbn + 1 + s, bits);
        }
        acc
    };
    (0..n).map(|p| (0..n).map(|k| moment(p, k)).collect()).collect()
}

/// ln|v|, through f64 when v is in double range.
fn ln_abs(v: &BigF) -> f64 {
    let zero = BigF::ZERO;
    if *v == zero {
        return f64::NEG_INFINITY;
    }
    let d = v.to_f64().value().abs();
    if d.is_finite() && d > f64::MIN_POSITIVE {
        return d.ln();
    }
    (if *v < zero { -v.clone() } else { v.clone() }).ln().to_f64().value()
}

/// Scales rows, then columns, to unit max-norm; returns ln of the product of
/// the scale factors.
fn equilibrate(a: &mut [Vec<BigF>], bits: usize) -> f64 {
    let n = a.len();
    let mut total = 0.0;
    for row in a.iter_mut() {
        let m = row.iter().map(ln_abs).fold(f64::NEG_INFINITY, f64::max);
        if m.is_finite() {
            let f = big_exp(-m, bits);
            row.iter_mut().for_each(|v| *v *= f.clone());
            total -= m;
        }
    }
    for c in 0..n {
        let m = (0..n).map(|r| ln_abs(&a[r][c])).fold(f64::NEG_INFINITY, f64::max);
        if m.is_finite() {
            let f = big_exp(-m, bits);
            (0..n).for_each(|r| a[r][c] *= f.clone());
            total -= m;
        }
    }
    total
}

/// (sign, ln|det|, ln of the extreme pivot ratio) by Gaussian elimination
/// in extended precision.
fn big_log_det(mut a: Vec<Vec<BigF>>) -> (f64, f64, f64) {
    let n = a.len();
    let zero = BigF::ZERO;
    let abs = |v: &BigF| if *v < zero { -v.clone() } else { v.clone() };
    let mut sign = 1.0;
    let mut log_abs = 0.0;
    let (mut lmin, mut lmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| abs(&a[i][k]).cmp(&abs(&a[j][k]))).unwrap();
        if a[p][k] == zero {
            return (0.0, f64::NEG_INFINITY, f64::INFINITY);
        }
        if p != k {
            a.swap(p, k);
            sign = -sign;
        }
        let piv = a[k][k].clone();
        if piv < zero {
            sign = -sign;
        }
        let lp = ln_abs(&piv);
        log_abs += lp;
        lmin = lmin.min(lp);
        lmax = lmax.max(lp);
        for i in k + 1..n {
            let f = a[i][k].clone() / piv.clone();
            for c in k + 1..n {
                let t = f.clone() * a[k][c].clone();
                a[i][c] -= t;
            }
        }
    }
    (sign, log_abs, lmax - lmin)
}

/// Coefficients of P^{(j)}_{N−1}, `j` zero-based, from the residues of
/// Π_{l≠j} (x − z1 σ_A − z2 σ_Bl) in extended precision.
fn extended_pj(model: &HalfDegenerateModel, j: usize, bits: usize) -> Vec<BigF> {
    let (n, n_a, n_b) = (model.n, model.n_a, model.n_b);
    let zero = || big_int(0, bits);
    let sa = big(model.sigma_a, bits);
    let d = n - 1;
    // coefficients [a][b][p] of z1^a z2^b x^p
    let mut c = vec![vec![vec![zero(); d + 1]; d + 1]; d + 1];
    c[0][0][0] = big_int(1, bits);
    for (k, l) in (0..n).filter(|&l| l != j).enumerate() {
        let sb = big(model.sigma_b[l], bits);
        let mut next = vec![vec![vec![zero(); d + 1]; d + 1]; d + 1];
        for a in 0..=k {
            for b in 0..=(k - a) {
                for p in 0..=(k - a - b) {
                    let v = c[a][b][p].clone();
                    next[a][b][p + 1] += v.clone();
                    next[a + 1][b][p] -= sa.clone() * v.clone();
                    next[a][b + 1][p] -= sb.clone() * v;
                }
            }
        }
        c = next;
    }
    let mut coeffs = vec![zero(); n];
    for a in 0..=d.min(n_a) {
        for b in 0..=(d - a).min(n_b - 1) {
            let f = big_falling(n_a, a, bits) * big_falling(n_b - 1, b, bits);
            for p in 0..=(d - a - b) {
                coeffs[p] += c[a][b][p].clone() * f.clone();
            }
        }
    }
    coeffs
}

/// N! det(g) C, which equals one. det(g) is taken in extended precision
/// because the Gram matrix is badly conditioned.
pub fn normalization_identity(model: &HalfDegenerateModel) -> Result<f64> {
    model.validate()?;
    let n = model.n;
    let (sign, ld, _) = big_log_det(reduced_moments(model, moment_bits(model)));
    let ld = ld + n as f64 * (log_factorial(model.m()) + model.n_a as f64 * model.sigma_a.ln());
    let c = model_constants(model)?.c;
    Ok(sign * c.sign * (log_factorial(n) + ld + c.log_abs).exp())
}

/// M_jk = G_j ∫ P^{(j)}_{N−1}(λ) φ_k(λ) dλ, the identity matrix.
///
/// The moment sums cancel by many orders of magnitude, so G_j, the
/// coefficients of P^{(j)} and the moments are all rebuilt from the σ's in
/// extended precision.
pub fn biorthogonality_matrix(model: &HalfDegenerateModel) -> Result<Vec<Vec<f64>>> {
    model.validate()?;
    let (n, n_b) = (model.n, model.n_b);
    let nbn = n_b - n;
    let bits = moment_bits(model);
    let sb: Vec<BigF> = model.sigma_b.iter().map(|&s| big(s, bits)).collect();
    let moments = reduced_moments(model, bits);
    let zero = || big_int(0, bits);

    let mut out = vec![vec![0.0; n]; n];
    for (j, row) in out.iter_mut().enumerate() {
        let coeffs = extended_pj(model, j, bits);
        // G_j without its 1/(m! σ_A^{N_A})
        let mut gj =
            big_falling(nbn, nbn, bits) / (big_falling(n_b - 1, n_b - 1, bits) * big_pow(&sb[j], nbn + 1, bits));
        for l in (0..n).filter(|&l| l != j) {
            gj /= sb[j].clone() - sb[l].clone();
        }
        for (k, v) in row.iter_mut().enumerate() {
            let mut acc = zero();
            for p in 0..n {
                acc += coeffs[p].clone() * moments[p][k].clone();
            }
            *v = (gj.clone() * acc).to_f64().value();
        }
    }
    Ok(out)
}

/// Exact density R_1(x) = K_N(x, x) on the grid.
pub fn density(ev: &KernelEvaluator, grid: &[f64]) -> Result<DensityCurve> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("grid must be strictly ascending".into()));
    }
    if let Some(x) = grid.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::InvalidParameter(format!("grid points must be >= 0 (got {x})")));
    }
    let values = grid.par_iter().map(|&x| ev.kernel(x, x)).collect::<Result<Vec<f64>>>()?;
    let mut metadata = CurveMetadata::default();
    metadata.set("N", ev.model.n);
    metadata.set("N_A", ev.model.n_a);
    metadata.set("N_B", ev.model.n_b);
    for w in ev.model.conditioning_warnings() {
        metadata.warn(w);
    }
    Ok(DensityCurve { grid: grid.to_vec(), values, method: DensityMethod::HalfdegKernel, metadata })
}
