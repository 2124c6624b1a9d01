//! Large-N limiting density from the coupled saddle-point equations
//!
//! 1 − N_A/q_A − Tr[(y − q_A Σ_A − q_B Σ_B)⁻¹ Σ_A] = 0 and the A ↔ B counterpart,
//! solved by damped Newton and tracked in y from the asymptotic branch
//! (q_A, q_B) → (N_A, N_B) at |y| → ∞.

use num_complex::Complex64;

use crate::curve::{CurveMetadata, DensityCurve, DensityMethod};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, Lu};
use crate::sampler::CovariancePair;

pub const MAX_NEWTON_ITERATIONS: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-10;
const NEGATIVE_DENSITY_FLOOR: f64 = -1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleState {
    pub y: Complex64,
    pub q_a: Complex64,
    pub q_b: Complex64,
    pub residual: f64,
    pub converged: bool,
    /// N_A + N_B − N.
    pub m: usize,
}

impl SaddleState {
    /// −(1/π) Im[(q_A + q_B − m)/y]. The m/y term only carries the m zero
    /// modes at the origin; dropping it removes their O(ε) tail at x > 0.
    pub fn density(&self) -> f64 {
        -((self.q_a + self.q_b - self.m as f64) / self.y).im / std::f64::consts::PI
    }
}

struct Eval {
    f: [Complex64; 2],
    jac: [[Complex64; 2]; 2],
    tr_r: Complex64,
}

fn evaluate(c: &CovariancePair, y: Complex64, qa: Complex64, qb: Complex64) -> Result<Eval> {
    let (na, nb) = (c.n_a as f64, c.n_b as f64);
    let n = c.n();
    let (ta, tb, taa, tab, tbb, tr_r) = if c.is_diagonal() {
        let mut t = [Complex64::new(0.0, 0.0); 6];
        for k in 0..n {
            let (a, b) = (c.sigma_a[(k, k)].re, c.sigma_b[(k, k)].re);
            let r = 1.0 / (y - qa * a - qb * b);
            if !r.is_finite() {
                return Err(Error::SingularMatrix { pivot: 0.0, index: k });
            }
            t[0] += r * a;
            t[1] += r * b;
            t[2] += r * r * a * a;
            t[3] += r * r * a * b;
            t[4] += r * r * b * b;
            t[5] += r;
        }
        (t[0], t[1], t[2], t[3], t[4], t[5])
    } else {
        let k = ComplexMatrix::identity(n).scale(y).lincomb(
            Complex64::new(1.0, 0.0),
            &c.sigma_a.scale(qa).lincomb(Complex64::new(1.0, 0.0), &c.sigma_b.scale(qb), Complex64::new(1.0, 0.0)),
            Complex64::new(-1.0, 0.0),
        );
        let lu = Lu::factor(&k)?;
        let ma = lu.solve(&c.sigma_a)?;
        let mb = lu.solve(&c.sigma_b)?;
        let r = lu.inverse();
        let tr2 = |x: &ComplexMatrix, z: &ComplexMatrix| -> Complex64 {
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    s += x[(i, j)] * z[(j, i)];
                }
            }
            s
        };
        (ma.trace(), mb.trace(), tr2(&ma, &ma), tr2(&ma, &mb), tr2(&mb, &mb), r.trace())
    };
    Ok(Eval {
        f: [1.0 - na / qa - ta, 1.0 - nb / qb - tb],
        jac: [[na / (qa * qa) - taa, -tab], [-tab, nb / (qb * qb) - tbb]],
        tr_r,
    })
}

fn residual_norm(f: &[Complex64; 2]) -> f64 {
    f[0].norm().max(f[1].norm())
}

/// Newton iteration from `warm_start`, or from the asymptotic branch.
pub fn solve_saddle(
    c: &CovariancePair,
    y: Complex64,
    warm_start: Option<&SaddleState>,
    tol: f64,
) -> Result<SaddleState> {
    if !(y.im > 0.0) {
        return Err(Error::InvalidParameter(format!("saddle point needs Im(y) > 0 (got {y})")));
    }
    let (mut qa, mut qb) = match warm_start {
        Some(s) => (s.q_a, s.q_b),
        None => (Complex64::new(c.n_a as f64, 0.0), Complex64::new(c.n_b as f64, 0.0)),
    };
    let mut ev = evaluate(c, y, qa, qb)?;
    let mut res = residual_norm(&ev.f);
    for _ in 0..MAX_NEWTON_ITERATIONS {
        if res < tol {
            break;
        }
        let [[j00, j01], [j10, j11]] = ev.jac;
        let det = j00 * j11 - j01 * j10;
        if det.norm() == 0.0 || !det.is_finite() {
            break;
        }
        let da = -(j11 * ev.f[0] - j01 * ev.f[1]) / det;
        let db = -(j00 * ev.f[1] - j10 * ev.f[0]) / det;
        let mut t = 1.0;
        loop {
            let (na, nb) = (qa + da * t, qb + db * t);
            if let Ok(next) = evaluate(c, y, na, nb) {
                let r = residual_norm(&next.f);
                if r.is_finite() && r <= (1.0 - 1e-4 * t) * res {
                    qa = na;
                    qb = nb;
                    ev = next;
                    res = r;
                    break;
                }
            }
            t *= 0.5;
            if t < 1.0 / 1024.0 {
                return Err(Error::NoConvergence(format!("line search stalled at y = {y}, residual {res:e}")));
            }
        }
    }
    if !(res < tol) {
        return Err(Error::NoConvergence(format!(
            "saddle point at y = {y}: residual {res:e} after {MAX_NEWTON_ITERATIONS} iterations"
        )));
    }
    let state = SaddleState { y, q_a: qa, q_b: qb, residual: res, converged: true, m: c.n_a + c.n_b - c.n() };
    let d = state.density();
    if d < NEGATIVE_DENSITY_FLOOR {
        return Err(Error::WrongBranch(d));
    }
    Ok(state)
}

/// q_A + q_B − (N_A + N_B − N) − y Tr[(y − q_A Σ_A − q_B Σ_B)⁻¹].
pub fn consistency_residual(c: &CovariancePair, s: &SaddleState) -> Result<f64> {
    let ev = evaluate(c, s.y, s.q_a, s.q_b)?;
    let m = (c.n_a + c.n_b - c.n()) as f64;
    Ok((s.q_a + s.q_b - m - s.y * ev.tr_r).norm())
}

/// Follows the branch through `from` along the straight segment to `target`,
/// with adaptive steps.
pub fn track_saddle(c: &CovariancePair, from: &SaddleState, target: Complex64, tol: f64) -> Result<SaddleState> {
    let mut cur = *from;
    let mut h = 1.0f64;
    let mut last_err = None;
    while cur.y != target {
        let step = (target - cur.y) * h;
        let y = if h >= 1.0 { target } else { cur.y + step };
        match solve_saddle(c, y, Some(&cur), tol) {
            Ok(s)
                if (s.q_a - cur.q_a).norm() + (s.q_b - cur.q_b).norm() <= 0.25 * (cur.q_a.norm() + cur.q_b.norm()) =>
            {
                cur = s;
                h = (2.0 * h).min(1.0);
            }
            Ok(_) => h *= 0.5,
            Err(e) => {
                last_err = Some(e);
                h *= 0.5;
            }
        }
        if h < 1e-12 {
            return Err(last_err.unwrap_or_else(|| {
                Error::NoConvergence(format!("continuation stalled between {} and {target}", cur.y))
            }));
        }
    }
    Ok(cur)
}

/// Solution at `y` reached by descending vertically from far above the spectrum.
pub fn saddle_from_infinity(c: &CovariancePair, y: Complex64, tol: f64) -> Result<SaddleState> {
    let far = Complex64::new(y.re, y.im.max(100.0 * c.mean_scale().max(1.0)));
    let start = solve_saddle(c, far, None, tol)?;
    track_saddle(c, &start, y, tol)
}

/// Limiting density on an ascending grid, tracked left to right at height
/// ε₀ = 1e-6 × span.
pub fn density_saddle(c: &CovariancePair, grid: &[f64], tol: f64) -> Result<DensityCurve> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("grid must be strictly ascending".into()));
    }
    let span = match (grid.first(), grid.last()) {
        (Some(&a), Some(&b)) if b > a => b - a,
        _ => c.mean_scale(),
    };
    let eps = 1e-6 * span;
    let mut meta = CurveMetadata::default();
    meta.set("N", c.n());
    meta.set("N_A", c.n_a);
    meta.set("N_B", c.n_b);
    meta.set("eps", format!("{eps:e}"));
    meta.set("tol", format!("{tol:e}"));
    let mut values = Vec::with_capacity(grid.len());
    let mut prev: Option<SaddleState> = None;
    for &x in grid {
        let y = Complex64::new(x, eps);
        let tracked = match &prev {
            Some(p) => track_saddle(c, p, y, tol),
            None => saddle_from_infinity(c, y, tol),
        };
        let state = match tracked {
            Ok(s) => Ok(s),
            Err(_) if prev.is_some() => saddle_from_infinity(c, y, tol),
            Err(e) => Err(e),
        };
        match state {
            Ok(s) => {
                values.push(s.density());
                prev = Some(s);
            }
            Err(e) => {
                meta.warn(format!("x = {x}: {e}"));
                values.push(f64::NAN);
                prev = None;
            }
        }
    }
    Ok(DensityCurve { grid: grid.to_vec(), values, method: DensityMethod::Saddle, metadata: meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymptotic_branch() {
        let c = CovariancePair::diagonal(5, 7, &[1.0, 2.0, 3.0], &[0.5, 1.0, 4.0]).unwrap();
        let scale = 5.0 * 2.0 + 7.0 * 1.833;
        let s = solve_saddle(&c, Complex64::new(0.0, 1e6 * scale), None, 1e-12).unwrap();
        assert!((s.q_a - 5.0).norm() < 5e-6 && (s.q_b - 7.0).norm() < 7e-6, "{s:?}");
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn conjugate_structure() {
        // the equations are real, so (conj q_A, conj q_B) solves at conj(y)
        let c = CovariancePair::diagonal(4, 6, &[1.0, 2.0], &[0.5, 3.0]).unwrap();
        let s = saddle_from_infinity(&c, Complex64::new(10.0, 0.5), 1e-12).unwrap();
        let ev = evaluate(&c, s.y.conj(), s.q_a.conj(), s.q_b.conj()).unwrap();
        assert!(residual_norm(&ev.f) < 1e-10);
    }

    #[test]
    fn consistency_identity() {
        let c = CovariancePair::diagonal(4, 6, &[1.0, 2.0], &[0.5, 3.0]).unwrap();
        let s = saddle_from_infinity(&c, Complex64::new(12.0, 0.01), 1e-12).unwrap();
        assert!(consistency_residual(&c, &s).unwrap() < 1e-9);
    }

    #[test]
    fn rejects_lower_half_plane() {
        let c = CovariancePair::diagonal(2, 2, &[1.0], &[1.0]).unwrap();
        assert!(solve_saddle(&c, Complex64::new(1.0, -1.0), None, 1e-10).is_err());
    }
}
