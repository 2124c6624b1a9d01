//! Density curves with provenance metadata.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityMethod {
    HalfdegKernel,
    Susy,
    Saddle,
    Mc,
}

impl DensityMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            DensityMethod::HalfdegKernel => "halfdeg-kernel",
            DensityMethod::Susy => "susy",
            DensityMethod::Saddle => "saddle",
            DensityMethod::Mc => "mc",
        }
    }
}

impl fmt::Display for DensityMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordered key/value provenance plus warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveMetadata {
    pub entries: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl CurveMetadata {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub method: DensityMethod,
    pub metadata: CurveMetadata,
}

impl DensityCurve {
    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        self.grid.windows(2).zip(self.values.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
    }

    /// Grid points at strict local maxima of the values.
    pub fn local_maxima(&self) -> Vec<f64> {
        let v = &self.values;
        (1..v.len().saturating_sub(1)).filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1]).map(|i| self.grid[i]).collect()
    }
}

/// `count` equally spaced points on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

pub const AUTO_GRID_POINTS: usize = 512;

/// Default grid: 512 points from 0 past the largest deterministic peak
/// position `N_A σ_A,max + N_B σ_B,max`, with room for the right tail.
pub fn auto_grid(n_a: usize, sigma_a_max: f64, n_b: usize, sigma_b_max: f64) -> Vec<f64> {
    let peak = n_a as f64 * sigma_a_max + n_b as f64 * sigma_b_max;
    let sd = (n_a as f64 * sigma_a_max * sigma_a_max + n_b as f64 * sigma_b_max * sigma_b_max).sqrt();
    linear_grid(0.0, 1.2 * peak + 8.0 * sd, AUTO_GRID_POINTS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = linear_grid(1.0, 2.0, 5);
        assert_eq!(g, vec![1.0, 1.25, 1.5, 1.75, 2.0]);
        assert_eq!(auto_grid(3, 1.0, 4, 2.0).len(), AUTO_GRID_POINTS);
    }

    #[test]
    fn metadata_overwrites() {
        let mut m = CurveMetadata::default();
        m.set("seed", 1);
        m.set("seed", 2);
        assert_eq!(m.get("seed"), Some("2"));
        assert_eq!(m.entries.len(), 1);
    }

    #[test]
    fn maxima_and_integral() {
        let grid = linear_grid(0.0, 4.0, 5);
        let c = DensityCurve {
            grid,
            values: vec![0.0, 1.0, 0.0, 2.0, 0.0],
            method: DensityMethod::Mc,
            metadata: CurveMetadata::default(),
        };
        assert_eq!(c.local_maxima(), vec![1.0, 3.0]);
        assert_eq!(c.integral(), 3.0);
    }
}
