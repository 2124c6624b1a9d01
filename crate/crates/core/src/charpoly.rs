//! Averages of a characteristic polynomial and of its inverse for commuting
//! covariances.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::halfdeg::{eval_poly, BivariatePoly};
use crate::quadrature::{gauss_laguerre, RotatedRule};

/// Simultaneous eigenvalues of commuting Σ_A and Σ_B, paired by index.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutingCovariances {
    pub n: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub sigma_a_eigs: Vec<f64>,
    pub sigma_b_eigs: Vec<f64>,
}

impl CommutingCovariances {
    pub fn new(n_a: usize, n_b: usize, sigma_a_eigs: Vec<f64>, sigma_b_eigs: Vec<f64>) -> Result<Self> {
        let c = Self { n: sigma_a_eigs.len(), n_a, n_b, sigma_a_eigs, sigma_b_eigs };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_a_eigs.len() != self.n || self.sigma_b_eigs.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "N = {} but {} sigma_A and {} sigma_B eigenvalues",
                self.n,
                self.sigma_a_eigs.len(),
                self.sigma_b_eigs.len()
            )));
        }
        if self.n == 0 || self.n_a < self.n || self.n_b < self.n {
            return Err(Error::InvalidParameter(format!(
                "need N >= 1, N_A >= N, N_B >= N (got N={}, N_A={}, N_B={})",
                self.n, self.n_a, self.n_b
            )));
        }
        if self.sigma_a_eigs.iter().chain(&self.sigma_b_eigs).any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("covariance eigenvalues must be positive and finite".into()));
        }
        Ok(())
    }

    /// Largest eigenvalue of N_A Σ_A + N_B Σ_B.
    pub fn scale(&self) -> f64 {
        self.sigma_a_eigs
            .iter()
            .zip(&self.sigma_b_eigs)
            .map(|(&a, &b)| self.n_a as f64 * a + self.n_b as f64 * b)
            .fold(0.0, f64::max)
    }
}

/// Ascending coefficients of the monic P_N(x) = E[det(x − H)].
pub fn charpoly_coefficients(c: &CommutingCovariances) -> Result<Vec<f64>> {
    c.validate()?;
    Ok(BivariatePoly::from_linear_factors(&c.sigma_a_eigs, &c.sigma_b_eigs).residue(c.n_a, c.n_b))
}

pub fn expect_charpoly(c: &CommutingCovariances, x: f64) -> Result<f64> {
    Ok(eval_poly(&charpoly_coefficients(c)?, x))
}

pub const INVERSE_QUAD_TOL: f64 = 1e-8;
pub const INVERSE_QUAD_FAIL: f64 = 1e-6;
pub const INVERSE_QUAD_MAX_ORDER: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseCharpoly {
    pub value: Complex64,
    pub order: usize,
    pub rel_change: f64,
}

/// Rotation angle for radial Laguerre integrals whose integrand has poles
/// on the side of the real axis given by `sign`.
pub(crate) fn rotation_angle(alpha_min: usize, sign: f64) -> f64 {
    let t = (2.0 / ((alpha_min + 1) as f64).sqrt()).min(1.0);
    sign * t.atan()
}

fn inverse_at_order(c: &CommutingCovariances, y: Complex64, order: usize) -> Result<Complex64> {
    let theta = rotation_angle(c.n_a.min(c.n_b) - 1, y.im.signum());
    let ra = RotatedRule::new(&*gauss_laguerre(order, c.n_a - 1)?, theta);
    let rb = RotatedRule::new(&*gauss_laguerre(order, c.n_b - 1)?, theta);
    let rows: Vec<Complex64> = ra
        .nodes
        .par_iter()
        .zip(&ra.weights)
        .map(|(&sa, &wa)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (&sb, &wb) in rb.nodes.iter().zip(&rb.weights) {
                let det: Complex64 =
                    c.sigma_a_eigs.iter().zip(&c.sigma_b_eigs).map(|(&a, &b)| y - sa * a - sb * b).product();
                acc += wb / det;
            }
            wa * acc
        })
        .collect();
    Ok(rows.iter().sum())
}

/// Q_N(y) = E[1/det(y − H)] by tensor Gauss–Laguerre quadrature, doubling
/// the order from `quad_order` until successive values agree.
pub fn expect_inverse_charpoly(c: &CommutingCovariances, y: Complex64, quad_order: usize) -> Result<InverseCharpoly> {
    c.validate()?;
    if y.im == 0.0 {
        return Err(Error::ZeroImaginaryPart);
    }
    if quad_order < 50 {
        return Err(Error::InvalidParameter(format!("quad_order must be >= 50 (got {quad_order})")));
    }
    let mut order = quad_order;
    let mut prev = inverse_at_order(c, y, order)?;
    loop {
        let next_order = (2 * order).min(INVERSE_QUAD_MAX_ORDER.max(quad_order));
        if next_order == order {
            return Err(Error::QuadratureNotConverged { change: f64::INFINITY, order });
        }
        let cur = inverse_at_order(c, y, next_order)?;
        let change = (cur - prev).norm() / cur.norm();
        if change <= INVERSE_QUAD_TOL || next_order >= INVERSE_QUAD_MAX_ORDER {
            if change > INVERSE_QUAD_FAIL {
                return Err(Error::QuadratureNotConverged { change, order: next_order });
            }
            return Ok(InverseCharpoly { value: cur, order: next_order, rel_change: change });
        }
        order = next_order;
        prev = cur;
    }
}
