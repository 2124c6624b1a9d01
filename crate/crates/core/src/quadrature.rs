//! Generalized Gauss–Laguerre rules for the weight x^α e^{−x}.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::tql_implicit;
use crate::special::log_factorial;

/// Nodes and weights normalized so that the weights sum to one; the
/// unnormalized total mass is `exp(log_mass) = Γ(α+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLaguerre {
    pub alpha: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_mass: f64,
}

impl GaussLaguerre {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Normalized ∫ f(x) x^α e^{−x} dx / Γ(α+1).
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

fn build(order: usize, alpha: usize) -> Result<GaussLaguerre> {
    let a = alpha as f64;
    let mut d: Vec<f64> = (0..order).map(|k| 2.0 * k as f64 + a + 1.0).collect();
    let mut e: Vec<f64> = (0..order)
        .map(|k| if k + 1 < order { (((k + 1) as f64) * ((k + 1) as f64 + a)).sqrt() } else { 0.0 })
        .collect();
    // only the first row of the eigenvector matrix is needed for the weights
    let mut z = vec![0.0; order];
    z[0] = 1.0;
    tql_implicit(&mut d, &mut e, Some(&mut z))?;
    let mut pairs: Vec<(f64, f64)> = d.into_iter().zip(z.into_iter().map(|v| v * v)).collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(GaussLaguerre {
        alpha,
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
        log_mass: log_factorial(alpha),
    })
}

/// Cached rule of the given order for weight x^α e^{−x}.
pub fn gauss_laguerre(order: usize, alpha: usize) -> Result<Arc<GaussLaguerre>> {
    type Cache = Mutex<HashMap<(usize, usize), Arc<GaussLaguerre>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&(order, alpha)) {
        return Ok(rule.clone());
    }
    let rule = Arc::new(build(order.max(1), alpha)?);
    cache.lock().expect("quadrature cache poisoned").insert((order, alpha), rule.clone());
    Ok(rule)
}

/// Rule for ∫₀^∞ s^α e^{−s} f(s) ds / Γ(α+1) along the ray
/// s = τ e^{−iθ}/cos θ, for f analytic in the sector swept from the real axis.
/// Positive θ rotates into the lower half-plane.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedRule {
    pub nodes: Vec<Complex64>,
    pub weights: Vec<Complex64>,
}

impl RotatedRule {
    pub fn new(rule: &GaussLaguerre, theta: f64) -> Self {
        let t = theta.tan();
        let dir = Complex64::from_polar(1.0 / theta.cos(), -theta);
        let jac = dir.powu(rule.alpha as u32 + 1);
        let nodes = rule.nodes.iter().map(|&x| dir * x).collect();
        let weights =
            rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| jac * Complex64::from_polar(w, x * t)).collect();
        Self { nodes, weights }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::monic_laguerre;

    #[test]
    fn moments_exact() {
        // E[x^k] under x^α e^{−x}/Γ(α+1) is (α+1)_k
        let rule = gauss_laguerre(20, 3).unwrap();
        for k in 0..30 {
            let got = rule.integrate(|x| x.powi(k));
            let want: f64 = (0..k).map(|i| (3 + 1 + i) as f64).product();
            assert!((got - want).abs() <= 1e-11 * want, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn laguerre_orthogonality() {
        let rule = gauss_laguerre(12, 3).unwrap();
        for k in 0..5 {
            let v = rule.integrate(|x| monic_laguerre(5, 3, x) * x.powi(k));
            let scale = rule.integrate(|x| (monic_laguerre(5, 3, x) * x.powi(k)).abs());
            assert!(v.abs() <= 1e-10 * scale, "k={k}: {v}");
        }
    }

    #[test]
    fn rotated_rule_matches_real_rule() {
        // 1/(y − s) with Im y > 0 is analytic below the real axis
        let y = Complex64::new(7.0, 4.0);
        let rule = gauss_laguerre(200, 4).unwrap();
        let flat: Complex64 = rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| w / (y - x)).sum();
        let rot = RotatedRule::new(&rule, 0.6);
        let turned: Complex64 = rot.nodes.iter().zip(&rot.weights).map(|(&s, &w)| w / (y - s)).sum();
        assert!((flat - turned).norm() < 1e-6 * flat.norm(), "{flat} vs {turned}");
        let mass: Complex64 = rot.weights.iter().sum();
        assert!((mass - 1.0).norm() < 1e-12);
    }

    #[test]
    fn cached_rule_is_shared() {
        let a = gauss_laguerre(33, 1).unwrap();
        let b = gauss_laguerre(33, 1).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }
}
