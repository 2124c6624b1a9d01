//! Exact finite-N density for general covariance pairs from the (1|1)
//! generating function Z(y, x) = E[det(x − H)/det(y − H)].
//!
//! After the Grassmann integration Z is a double radial integral over
//! s_A, s_B > 0 of rational functions of F_s = (y − s_A Σ_A − s_B Σ_B)⁻¹,
//! multiplied by double angular integrals over w_A = e^{iφ_A}, w_B = e^{iφ_B}
//! that depend only on x. The angular part is reduced to four moments
//! (a scalar, two N×N matrices and an N⁴ tensor) by the trapezoid rule on
//! circles |w_A| = N_A, |w_B| = N_B, where the integrand has no cancellation.
//! The radial part uses Gauss–Laguerre rules on a ray rotated away from the
//! poles of F_s, so Im y may be arbitrarily small.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::charpoly::rotation_angle;
use crate::curve::{CurveMetadata, DensityCurve, DensityMethod};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, Lu};
use crate::quadrature::{gauss_laguerre, RotatedRule};
use crate::sampler::CovariancePair;
use crate::special::log_factorial;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Radial (Gauss–Laguerre) and angular (trapezoid) node counts per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SusyQuadrature {
    pub radial: usize,
    pub angular: usize,
}

impl SusyQuadrature {
    pub fn default_for(c: &CovariancePair) -> Self {
        let n = c.n();
        Self { radial: (n + 20).max(32), angular: min_angular(c).max(32) }
    }
}

/// Smallest trapezoid size for which the angular integrals are exact up to
/// aliasing of the exponential series.
pub fn min_angular(c: &CovariancePair) -> usize {
    2 * (c.n() + c.n_a.max(c.n_b) + 2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonPolicy {
    pub initial_eps: f64,
    pub shrink_factor: f64,
    pub stability_tol: f64,
    pub max_halvings: usize,
}

impl EpsilonPolicy {
    /// ε₀ = 0.05 × span / N, halved until successive extrapolations agree
    /// to 1e-5.
    pub fn default_for(span: f64, n: usize) -> Self {
        Self { initial_eps: 0.05 * span / n as f64, shrink_factor: 0.5, stability_tol: 1e-5, max_halvings: 12 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_eps > 0.0 && self.shrink_factor > 0.0 && self.shrink_factor < 1.0 && self.stability_tol > 0.0)
        {
            return Err(Error::InvalidParameter(format!("invalid epsilon policy {self:?}")));
        }
        Ok(())
    }
}

/// Angular moments at fixed x, together with their x-derivatives.
#[derive(Debug, Clone)]
struct AngularMoments {
    c0: [Complex64; 2],
    l_b: [Vec<Complex64>; 2],
    l_a: [Vec<Complex64>; 2],
    q: [Vec<Complex64>; 2],
}

/// ν! r^{−ν} e^{r e^{iφ}} e^{−iνφ} at each trapezoid node.
fn angular_weights(nu: usize, r: f64, m: usize) -> Vec<Complex64> {
    let base = log_factorial(nu) - nu as f64 * r.ln();
    (0..m)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
            let w = Complex64::from_polar(r, phi);
            Complex64::from_polar((base + w.re).exp(), w.im - nu as f64 * phi) / m as f64
        })
        .collect()
}

fn mat(m: &ComplexMatrix) -> Vec<Complex64> {
    m.data().to_vec()
}

fn angular_moments(c: &CovariancePair, x: Complex64, m: usize) -> Result<AngularMoments> {
    let n = c.n();
    let (ra, rb) = (c.n_a.max(1) as f64, c.n_b.max(1) as f64);
    // weights for ν_A ∈ {N_A, N_A − 1} and ν_B ∈ {N_B, N_B − 1}
    let wa = [angular_weights(c.n_a, ra, m), angular_weights(c.n_a - 1, ra, m)];
    let wb = [angular_weights(c.n_b, rb, m), angular_weights(c.n_b - 1, rb, m)];
    let n2 = n * n;
    let n4 = n2 * n2;
    let one = Complex64::new(1.0, 0.0);

    let rows = (0..m)
        .into_par_iter()
        .map(|i| -> Result<AngularMoments> {
            let phi_a = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / m as f64;
            let w_a = Complex64::from_polar(ra, phi_a);
            let mut acc = AngularMoments {
                c0: [ZERO; 2],
                l_b: [vec![ZERO; n2], vec![ZERO; n2]],
                l_a: [vec![ZERO; n2], vec![ZERO; n2]],
                q: [vec![ZERO; n4], vec![ZERO; n4]],
            };
            for j in 0..m {
                let phi_b = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / m as f64;
                let w_b = Complex64::from_polar(rb, phi_b);
                let k = ComplexMatrix::identity(n).scale(x).lincomb(
                    one,
                    &c.sigma_a.scale(w_a).lincomb(one, &c.sigma_b.scale(w_b), one),
                    -one,
                );
                let lu = Lu::factor(&k)?;
                let d0 = lu.det();
                let f = lu.inverse();
                let tr_f = f.trace();
                let f_sa = f.matmul(&c.sigma_a);
                let f_sb = f.matmul(&c.sigma_b);
                let sa_f = c.sigma_a.matmul(&f);
                let sb_f = c.sigma_b.matmul(&f);
                // X_ab = Σ_b F Σ_a and ∂_x X_ab = −(Σ_b F)(F Σ_a)
                let x_aa = mat(&c.sigma_a.matmul(&f_sa));
                let x_ab = mat(&c.sigma_b.matmul(&f_sa));
                let x_ba = mat(&c.sigma_a.matmul(&f_sb));
                let x_bb = mat(&c.sigma_b.matmul(&f_sb));
                let dx_aa = mat(&sa_f.matmul(&f_sa).scale(-one));
                let dx_ab = mat(&sb_f.matmul(&f_sa).scale(-one));
                let dx_ba = mat(&sa_f.matmul(&f_sb).scale(-one));
                let dx_bb = mat(&sb_f.matmul(&f_sb).scale(-one));

                let w00 = wa[0][i] * wb[0][j] * d0;
                let w10 = wa[1][i] * wb[0][j] * d0;
                let w01 = wa[0][i] * wb[1][j] * d0;
                let w11 = wa[1][i] * wb[1][j] * d0;
                acc.c0[0] += w00;
                acc.c0[1] += w00 * tr_f;
                for p in 0..n2 {
                    acc.l_b[0][p] += w10 * x_aa[p];
                    acc.l_b[1][p] += w10 * (tr_f * x_aa[p] + dx_aa[p]);
                    acc.l_a[0][p] += w01 * x_bb[p];
                    acc.l_a[1][p] += w01 * (tr_f * x_bb[p] + dx_bb[p]);
                }
                for p in 0..n2 {
                    let (aa, ab, daa, dab) = (x_aa[p], x_ab[p], dx_aa[p], dx_ab[p]);
                    let base = p * n2;
                    for r in 0..n2 {
                        let v = aa * x_bb[r] - ab * x_ba[r];
                        let dv = daa * x_bb[r] + aa * dx_bb[r] - dab * x_ba[r] - ab * dx_ba[r];
                        acc.q[0][base + r] += w11 * v;
                        acc.q[1][base + r] += w11 * (tr_f * v + dv);
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = AngularMoments {
        c0: [ZERO; 2],
        l_b: [vec![ZERO; n2], vec![ZERO; n2]],
        l_a: [vec![ZERO; n2], vec![ZERO; n2]],
        q: [vec![ZERO; n4], vec![ZERO; n4]],
    };
    for row in rows {
        for d in 0..2 {
            total.c0[d] += row.c0[d];
            total.l_b[d].iter_mut().zip(&row.l_b[d]).for_each(|(t, v)| *t += v);
            total.l_a[d].iter_mut().zip(&row.l_a[d]).for_each(|(t, v)| *t += v);
            total.q[d].iter_mut().zip(&row.q[d]).for_each(|(t, v)| *t += v);
        }
    }
    Ok(total)
}

/// Σ_{ij} L_ij F_ji.
fn contract2(l: &[Complex64], f: &[Complex64], n: usize) -> Complex64 {
    let mut s = ZERO;
    for i in 0..n {
        for j in 0..n {
            s += l[i * n + j] * f[j * n + i];
        }
    }
    s
}

/// Σ_{ijkl} Q_ijkl (F_ji F_lk + F_jk F_li).
fn contract4(q: &[Complex64], f: &[Complex64], n: usize) -> Complex64 {
    let mut s = ZERO;
    for i in 0..n {
        for j in 0..n {
            let fji = f[j * n + i];
            for k in 0..n {
                let fjk = f[j * n + k];
                let base = ((i * n + j) * n + k) * n;
                for l in 0..n {
                    s += q[base + l] * (fji * f[l * n + k] + fjk * f[l * n + i]);
                }
            }
        }
    }
    s
}

/// E over the rotated radial rule with exponents (α_A, α_B) of g(F_s)/det(y − S),
/// returning [value with moments d = 0, value with moments d = 1].
fn radial_term<G>(c: &CovariancePair, y: Complex64, order: usize, alpha: (usize, usize), g: G) -> Result<[Complex64; 2]>
where
    G: Fn(&[Complex64]) -> [Complex64; 2] + Sync,
{
    let n = c.n();
    let theta = rotation_angle(c.n_a.min(c.n_b) - 1, y.im.signum());
    let ra = RotatedRule::new(&*gauss_laguerre(order, alpha.0)?, theta);
    let rb = RotatedRule::new(&*gauss_laguerre(order, alpha.1)?, theta);
    let one = Complex64::new(1.0, 0.0);
    let rows = ra
        .nodes
        .par_iter()
        .zip(&ra.weights)
        .map(|(&sa, &wa)| -> Result<[Complex64; 2]> {
            let mut acc = [ZERO; 2];
            for (&sb, &wb) in rb.nodes.iter().zip(&rb.weights) {
                let k = ComplexMatrix::identity(n).scale(y).lincomb(
                    one,
                    &c.sigma_a.scale(sa).lincomb(one, &c.sigma_b.scale(sb), one),
                    -one,
                );
                let lu = Lu::factor(&k)?;
                let w = wa * wb / lu.det();
                let v = g(lu.inverse().data());
                acc[0] += w * v[0];
                acc[1] += w * v[1];
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.iter().fold([ZERO; 2], |a, r| [a[0] + r[0], a[1] + r[1]]))
}

/// Returns (Z(y, x), ∂_x Z(y, x)).
fn generating_pair(
    c: &CovariancePair,
    y: Complex64,
    x: Complex64,
    quad: &SusyQuadrature,
) -> Result<(Complex64, Complex64)> {
    if y.im == 0.0 {
        return Err(Error::ZeroImaginaryPart);
    }
    let n = c.n();
    let (na, nb) = (c.n_a, c.n_b);
    let mom = angular_moments(c, x, quad.angular)?;
    let t1 = radial_term(c, y, quad.radial, (na - 1, nb - 1), |_| [mom.c0[0], mom.c0[1]])?;
    let t2 =
        radial_term(c, y, quad.radial, (na, nb - 1), |f| [contract2(&mom.l_b[0], f, n), contract2(&mom.l_b[1], f, n)])?;
    let t3 =
        radial_term(c, y, quad.radial, (na - 1, nb), |f| [contract2(&mom.l_a[0], f, n), contract2(&mom.l_a[1], f, n)])?;
    let t4 = if n >= 2 {
        radial_term(c, y, quad.radial, (na, nb), |f| [contract4(&mom.q[0], f, n), contract4(&mom.q[1], f, n)])?
    } else {
        [ZERO; 2]
    };
    let combine = |d: usize| t1[d] - na as f64 * t2[d] - nb as f64 * t3[d] + (na * nb) as f64 * t4[d];
    Ok((combine(0), combine(1)))
}

/// Z_{1|1}(y, x) at fixed quadrature orders.
pub fn generating_function_11(
    c: &CovariancePair,
    y: Complex64,
    x: Complex64,
    quad: &SusyQuadrature,
) -> Result<Complex64> {
    Ok(generating_pair(c, y, x, quad)?.0)
}

/// W₁(y) = ∂_x Z_{1|1}(y, x) at x = y.
pub fn resolvent(c: &CovariancePair, y: Complex64, quad: &SusyQuadrature) -> Result<Complex64> {
    Ok(generating_pair(c, y, y, quad)?.1)
}

pub const RADIAL_TOL: f64 = 1e-8;
pub const RADIAL_FAIL: f64 = 1e-6;
pub const RADIAL_MAX_ORDER: usize = 1024;

/// Doubles the radial order until W₁(y) is stable to 1e-8.
pub fn converge_radial(c: &CovariancePair, y: Complex64, quad: &SusyQuadrature) -> Result<SusyQuadrature> {
    let mut q = *quad;
    let mut prev = resolvent(c, y, &q)?;
    loop {
        let next = SusyQuadrature { radial: 2 * q.radial, ..q };
        let cur = resolvent(c, y, &next)?;
        let change = (cur - prev).norm() / cur.norm();
        if change <= RADIAL_TOL {
            return Ok(q);
        }
        if next.radial >= RADIAL_MAX_ORDER {
            if change <= RADIAL_FAIL {
                return Ok(next);
            }
            return Err(Error::QuadratureNotConverged { change, order: next.radial });
        }
        q = next;
        prev = cur;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonResult {
    pub value: f64,
    pub eps: f64,
    pub halvings: usize,
    pub stable: bool,
}

/// −(1/π) Im W₁(x + iε), shrinking ε and extrapolating linearly to ε = 0
/// until two successive extrapolations agree. `floor` is an absolute scale
/// below which changes count as agreement.
pub fn density_at(
    c: &CovariancePair,
    x: f64,
    policy: &EpsilonPolicy,
    quad: &SusyQuadrature,
    floor: f64,
) -> Result<EpsilonResult> {
    let eval = |eps: f64| -> Result<f64> { Ok(-resolvent(c, Complex64::new(x, eps), quad)?.im / std::f64::consts::PI) };
    let s = policy.shrink_factor;
    let mut eps = policy.initial_eps;
    let mut prev = eval(eps)?;
    let mut extrapolated = prev;
    for k in 1..=policy.max_halvings {
        eps *= s;
        let cur = eval(eps)?;
        let next = (cur - s * prev) / (1.0 - s);
        if k > 1 && (next - extrapolated).abs() <= policy.stability_tol * (next.abs() + floor) {
            return Ok(EpsilonResult { value: next, eps, halvings: k, stable: true });
        }
        extrapolated = next;
        prev = cur;
    }
    Ok(EpsilonResult { value: extrapolated, eps, halvings: policy.max_halvings, stable: false })
}

/// Density on a grid; points whose ε ladder did not stabilize are flagged in
/// the metadata warnings.
pub fn density_susy(
    c: &CovariancePair,
    grid: &[f64],
    eps: &EpsilonPolicy,
    quad: &SusyQuadrature,
) -> Result<DensityCurve> {
    eps.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid[0] < 0.0 {
        return Err(Error::InvalidParameter("grid must be ascending and nonnegative".into()));
    }
    let span = (grid[grid.len() - 1] - grid[0]).max(c.mean_scale());
    let floor = 1e-6 * c.n() as f64 / span;
    let probe = Complex64::new(grid[grid.len() / 2], eps.initial_eps);
    let quad = converge_radial(c, probe, quad)?;
    let results = grid.par_iter().map(|&x| density_at(c, x, eps, &quad, floor)).collect::<Result<Vec<_>>>()?;
    let mut meta = CurveMetadata::default();
    meta.set("N", c.n());
    meta.set("N_A", c.n_a);
    meta.set("N_B", c.n_b);
    meta.set("radial_order", quad.radial);
    meta.set("angular_order", quad.angular);
    meta.set("eps_initial", format!("{:e}", eps.initial_eps));
    meta.set("eps_shrink", eps.shrink_factor);
    meta.set("eps_tol", format!("{:e}", eps.stability_tol));
    meta.set("eps_max_halvings", eps.max_halvings);
    for (r, &x) in results.iter().zip(grid) {
        if !r.stable {
            meta.warn(format!("x = {x}: {}", Error::EpsilonNotStable { halvings: r.halvings }));
        }
    }
    Ok(DensityCurve {
        grid: grid.to_vec(),
        values: results.iter().map(|r| r.value).collect(),
        method: DensityMethod::Susy,
        metadata: meta,
    })
}
