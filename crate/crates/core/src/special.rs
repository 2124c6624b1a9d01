//! One-point weight, Kummer function identities, Laguerre polynomials, log-factorials.

use std::sync::OnceLock;

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;

use crate::error::{Error, Result};

/// Parameters of a single weight φ_j.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    pub n: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub sigma_a: f64,
    pub sigma_bj: f64,
}

impl WeightParams {
    pub fn m(&self) -> usize {
        self.n_a + self.n_b - self.n
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_a < self.n || self.n_b < self.n {
            return Err(Error::InvalidParameter(format!(
                "need N >= 1, N_A >= N, N_B >= N (got N={}, N_A={}, N_B={})",
                self.n, self.n_a, self.n_b
            )));
        }
        if !(self.sigma_a > 0.0 && self.sigma_a.is_finite() && self.sigma_bj > 0.0 && self.sigma_bj.is_finite()) {
            return Err(Error::InvalidParameter("sigma values must be positive and finite".into()));
        }
        let (a, b) = (1.0 / self.sigma_a, 1.0 / self.sigma_bj);
        if (a - b).abs() <= 1e-14 * a.max(b) {
            return Err(Error::DegenerateSigma { i: 0, j: 0, a: self.sigma_a, b: self.sigma_bj });
        }
        Ok(())
    }
}

const LOG_FACT_TABLE_MAX: usize = 170;

fn log_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LOG_FACT_TABLE_MAX + 1);
        let mut f = 1.0f64;
        t.push(0.0);
        for k in 1..=LOG_FACT_TABLE_MAX {
            f *= k as f64;
            t.push(f.ln());
        }
        t
    })
}

/// ln(n!).
pub fn log_factorial(n: usize) -> f64 {
    if n <= LOG_FACT_TABLE_MAX {
        return log_fact_table()[n];
    }
    let x = n as f64;
    let x2 = x * x;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x * x2 * x2)
}

/// (−1)^n n! L_n^α(x), the monic generalized Laguerre polynomial.
pub fn monic_laguerre(n: usize, alpha: usize, x: f64) -> f64 {
    let a = alpha as f64;
    let mut p0 = 1.0;
    if n == 0 {
        return p0;
    }
    let mut p1 = x - (a + 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p2 = (x - (2.0 * kf + a + 1.0)) * p1 - kf * (kf + a) * p0;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Natural log of ₁F₁(α; β; z) for z ≥ 0 and α, β > 0, by the positive-term series.
pub fn ln_kummer_series(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    if !(z >= 0.0) || !(alpha > 0.0) || !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("series needs z >= 0, alpha, beta > 0 (z={z})")));
    }
    // cap grows with z: the terms only start to decay past k ≈ z
    let cap = 10_000 + 2 * z.ceil() as usize;
    const RESCALE: f64 = 1e250;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut comp = 0.0f64;
    let mut log_scale = 0.0f64;
    for k in 0..cap {
        let kf = k as f64;
        term *= (alpha + kf) * z / ((beta + kf) * (kf + 1.0));
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if term < 1e-16 * sum && kf > z {
            return Ok(log_scale + sum.ln());
        }
        if sum > RESCALE {
            sum /= RESCALE;
            term /= RESCALE;
            comp /= RESCALE;
            log_scale += RESCALE.ln();
        }
    }
    Err(Error::SeriesNotConverged(cap))
}

/// ₁F₁(a; b; x) from its defining series, for real x and 0 < a < b.
pub fn kummer_series(a: f64, b: f64, x: f64) -> Result<f64> {
    if x >= 0.0 {
        ln_kummer_series(a, b, x).map(f64::exp)
    } else {
        // Kummer transformation keeps every term positive
        ln_kummer_series(b - a, b, -x).map(|l| (l + x).exp())
    }
}

/// Signed log-magnitude terms: (sign, ln|term|).
fn signed_log_sum(terms: &[(f64, f64)]) -> (f64, f64, f64) {
    let lmax = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    if lmax == f64::NEG_INFINITY {
        return (0.0, f64::NEG_INFINITY, 1.0);
    }
    let mut scaled: Vec<f64> = terms.iter().map(|&(s, l)| s * (l - lmax).exp()).collect();
    scaled.sort_by(|x, y| y.abs().total_cmp(&x.abs()));
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut abs_sum = 0.0f64;
    for v in scaled {
        abs_sum += v.abs();
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    let kappa = if sum == 0.0 { f64::INFINITY } else { abs_sum / sum.abs() };
    (sum.signum(), lmax + sum.abs().ln(), kappa)
}

fn kummer_identity_terms(a: u32, b: u32, x: f64) -> Vec<(f64, f64)> {
    let (au, bu) = (a as usize, b as usize);
    let lf = log_factorial;
    let lx = x.abs().ln();
    let sx = x.signum();
    let mut terms = Vec::with_capacity(bu);
    let sign_a = if a.is_multiple_of(2) { 1.0 } else { -1.0 };
    for j in 0..(bu - au) {
        let p = (au + j) as i32;
        let l = lf(bu - 1) + lf(au - 1 + j) - lf(j) - lf(bu - au - 1 - j) - lf(au - 1) - p as f64 * lx;
        terms.push((sign_a * sx.powi(-p), l));
    }
    for j in 0..au {
        let p = (bu - au + j) as i32;
        let l = lf(bu - 1) + lf(bu - au - 1 + j) - lf(j) - lf(au - 1 - j) - lf(bu - au - 1) - p as f64 * lx + x;
        let sj = if j % 2 == 0 { 1.0 } else { -1.0 };
        terms.push((sj * sx.powi(-p), l));
    }
    terms
}

/// Extended-precision evaluation; returns the value and log2 of the
/// cancellation factor Σ|terms| / |sum| observed at this precision.
fn kummer_identity_extended(a: u32, b: u32, x: f64, bits: usize) -> (f64, f64) {
    type F = FBig<HalfEven>;
    let prec = |v: F| v.with_precision(bits).value();
    let int = |k: usize| prec(F::from(k as u64));
    let fact = |n: usize| (1..=n).fold(int(1), |acc, k| acc * int(k));
    let zero = F::ZERO;
    let fabs = |v: F| if v < zero { -v } else { v };
    let fx = prec(F::try_from(x).expect("finite x"));
    let inv_x = int(1) / fx.clone();
    let (au, bu) = (a as usize, b as usize);
    let mut first = int(0);
    let mut first_abs = int(0);
    let mut inv_pow = (0..au).fold(int(1), |acc, _| acc * inv_x.clone());
    for j in 0..(bu - au) {
        let t = fact(bu - 1) * fact(au - 1 + j) / (fact(j) * fact(bu - au - 1 - j) * fact(au - 1)) * inv_pow.clone();
        first_abs += fabs(t.clone());
        first += t;
        inv_pow *= inv_x.clone();
    }
    if a % 2 == 1 {
        first = -first;
    }
    let mut second = int(0);
    let mut second_abs = int(0);
    let mut inv_pow = (0..(bu - au)).fold(int(1), |acc, _| acc * inv_x.clone());
    for j in 0..au {
        let t =
            fact(bu - 1) * fact(bu - au - 1 + j) / (fact(j) * fact(au - 1 - j) * fact(bu - au - 1)) * inv_pow.clone();
        second_abs += fabs(t.clone());
        if j % 2 == 0 {
            second += t;
        } else {
            second -= t;
        }
        inv_pow *= inv_x.clone();
    }
    let ex = fx.exp();
    let total = first + ex.clone() * second;
    let abs_total = first_abs + ex * second_abs;
    let v = total.to_f64().value();
    let mag = abs_total.to_f64().value();
    let log2_kappa = if v == 0.0 { f64::INFINITY } else { (mag / v.abs()).log2() };
    (v, log2_kappa)
}

/// ₁F₁(a; b; x) for integers b > a ≥ 1 through its two-sum elementary form.
///
/// Cancellation at small |x| is detected from the compensated sum; when the
/// double-precision estimate is too large the sums are redone in extended
/// precision sized from that estimate.
pub fn kummer_identity_1f1(a: u32, b: u32, x: f64) -> Result<f64> {
    if a < 1 || b <= a {
        return Err(Error::InvalidParameter(format!("need b > a >= 1 (a={a}, b={b})")));
    }
    if x == 0.0 || !x.is_finite() {
        return Err(Error::InvalidParameter(format!("x must be finite and nonzero (x={x})")));
    }
    let terms = kummer_identity_terms(a, b, x);
    let (sign, log_abs, kappa) = signed_log_sum(&terms);
    let max_log = terms.iter().map(|t| t.1.abs()).fold(0.0, f64::max);
    let est = kappa * (8.0 + max_log) * f64::EPSILON;
    if est <= 1e-10 {
        return Ok(sign * log_abs.exp());
    }
    if !kappa.is_finite() && max_log > 700.0 {
        return Err(Error::CancellationLoss(est));
    }
    // the double-precision cancellation factor is itself unreliable here, so
    // grow the precision until the observed factor leaves >= 96 spare bits
    let mut bits = 256usize;
    loop {
        let (v, log2_kappa) = kummer_identity_extended(a, b, x, bits);
        if v.is_finite() && log2_kappa.is_finite() && (bits as f64) >= log2_kappa + 96.0 {
            return Ok(v);
        }
        bits *= 2;
        if bits > 16_384 {
            return Err(Error::CancellationLoss(est));
        }
    }
}

/// Largest tolerated cancellation factor before the series path is used.
const PHI_KAPPA_MAX: f64 = 1e4;
/// Below this series argument the positive-term series is both cheap and
/// more accurate than the closed form.
const PHI_SERIES_ARG: f64 = 50.0;

/// ln φ_j(λ) from the two-sum elementary form; `None` when the sum cancels
/// by more than the tolerated factor.
pub fn ln_phi_closed(p: &WeightParams, lambda: f64) -> Option<f64> {
    let (a, b) = (1.0 / p.sigma_a, 1.0 / p.sigma_bj);
    let d = b - a;
    let ld = d.abs().ln();
    let sd = d.signum();
    let ll = lambda.ln();
    let nbn = p.n_b - p.n;
    let lf = log_factorial;
    let lfm = lf(p.m());
    let mut terms = Vec::with_capacity(p.n_a + nbn + 1);
    for k in 0..p.n_a {
        let pw = p.n_a - 1 - k;
        let q = (nbn + 1 + k) as i32;
        let l = lfm + lf(nbn + k) - lf(k) - lf(pw) - lf(nbn) + pw as f64 * ll - a * lambda - q as f64 * ld;
        let s = if k % 2 == 0 { 1.0 } else { -1.0 } * sd.powi(q);
        terms.push((s, l));
    }
    for k in 0..=nbn {
        let pw = nbn - k;
        let q = (p.n_a + k) as i32;
        let l = lfm + lf(p.n_a - 1 + k) - lf(k) - lf(pw) - lf(p.n_a - 1) + pw as f64 * ll - b * lambda - q as f64 * ld;
        let s = if k % 2 == 0 { 1.0 } else { -1.0 } * (-sd).powi(q);
        terms.push((s, l));
    }
    let (sign, log_abs, kappa) = signed_log_sum(&terms);
    (sign > 0.0 && kappa <= PHI_KAPPA_MAX).then_some(log_abs)
}

/// ln φ_j(λ) from the positive-term Kummer series.
pub fn ln_phi_series(p: &WeightParams, lambda: f64) -> Result<f64> {
    let (a, b) = (1.0 / p.sigma_a, 1.0 / p.sigma_bj);
    let m = p.m() as f64;
    let base = m * lambda.ln();
    if a >= b {
        let alpha = (p.n_b - p.n + 1) as f64;
        Ok(base - a * lambda + ln_kummer_series(alpha, m + 1.0, (a - b) * lambda)?)
    } else {
        Ok(base - b * lambda + ln_kummer_series(p.n_a as f64, m + 1.0, (b - a) * lambda)?)
    }
}

/// ln φ_j(λ); −∞ at λ = 0.
pub fn ln_phi_weight(p: &WeightParams, lambda: f64) -> Result<f64> {
    p.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0 (got {lambda})")));
    }
    if lambda == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let d = (1.0 / p.sigma_bj - 1.0 / p.sigma_a).abs();
    if d * lambda >= PHI_SERIES_ARG {
        if let Some(l) = ln_phi_closed(p, lambda) {
            return Ok(l);
        }
    }
    ln_phi_series(p, lambda)
}

/// φ_j(λ) = λ^m e^{−λ/σ_A} ₁F₁(N_B−N+1; m+1; (1/σ_A − 1/σ_Bj) λ).
pub fn phi_weight(p: &WeightParams, lambda: f64) -> Result<f64> {
    ln_phi_weight(p, lambda).map(f64::exp)
}
