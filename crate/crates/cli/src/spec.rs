//! JSON model specification files.

use std::path::Path;

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use wishart_sum::charpoly::CommutingCovariances;
use wishart_sum::halfdeg::HalfDegenerateModel;
use wishart_sum::linalg::{hermitian_eigen, hermitian_eigenvalues, ComplexMatrix};
use wishart_sum::sampler::CovariancePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "N_A")]
    pub n_a: usize,
    #[serde(rename = "N_B")]
    pub n_b: usize,
}

/// A covariance as written in the file: a multiple of the identity, a
/// diagonal, or a full Hermitian matrix of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<[f64; 2]>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    HalfDegenerate,
    Commuting,
    General,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::HalfDegenerate => "half-degenerate",
            Mode::Commuting => "commuting",
            Mode::General => "general",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpecFile {
    pub dims: Dims,
    #[serde(rename = "sigma_A")]
    pub sigma_a: SigmaValue,
    #[serde(rename = "sigma_B")]
    pub sigma_b: SigmaValue,
    pub mode: Mode,
}

const COMMUTATOR_TOL: f64 = 1e-10;

impl ModelSpecFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in spec file {}", path.display()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.check_shapes()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    fn check_shapes(&self) -> Result<()> {
        let Dims { n, n_a, n_b } = self.dims;
        if n == 0 || n_a < n || n_b < n {
            bail!("dims must satisfy 1 <= N <= N_A and N <= N_B (got N={n}, N_A={n_a}, N_B={n_b})");
        }
        for (name, s) in [("sigma_A", &self.sigma_a), ("sigma_B", &self.sigma_b)] {
            match s {
                SigmaValue::Scalar(_) => {}
                SigmaValue::Vector(v) if v.len() != n => bail!("{name} has {} entries, expected N = {n}", v.len()),
                SigmaValue::Matrix(m) if m.len() != n || m.iter().any(|r| r.len() != n) => {
                    bail!("{name} must be an {n}x{n} matrix")
                }
                _ => {}
            }
        }
        if self.mode == Mode::HalfDegenerate {
            if !matches!(self.sigma_a, SigmaValue::Scalar(_)) {
                bail!("half-degenerate mode needs a scalar sigma_A");
            }
            if !matches!(self.sigma_b, SigmaValue::Vector(_)) {
                bail!("half-degenerate mode needs sigma_B as a vector of N reals");
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.dims.n
    }

    pub fn sigma_matrix(s: &SigmaValue, n: usize) -> Result<ComplexMatrix> {
        Ok(match s {
            SigmaValue::Scalar(v) => ComplexMatrix::from_diag(&vec![*v; n]),
            SigmaValue::Vector(v) => ComplexMatrix::from_diag(v),
            SigmaValue::Matrix(rows) => {
                let data = rows.iter().flatten().map(|[re, im]| Complex64::new(*re, *im)).collect();
                ComplexMatrix::new(n, n, data)?
            }
        })
    }

    pub fn sigma_a_matrix(&self) -> Result<ComplexMatrix> {
        Self::sigma_matrix(&self.sigma_a, self.n())
    }

    pub fn sigma_b_matrix(&self) -> Result<ComplexMatrix> {
        Self::sigma_matrix(&self.sigma_b, self.n())
    }

    /// Requires half-degenerate mode; distinct σ_B entries are checked by the
    /// model constructor.
    pub fn half_degenerate(&self) -> Result<HalfDegenerateModel> {
        let (SigmaValue::Scalar(sa), SigmaValue::Vector(sb), Mode::HalfDegenerate) =
            (&self.sigma_a, &self.sigma_b, self.mode)
        else {
            bail!("this computation requires mode half-degenerate (spec mode is {})", self.mode.as_str());
        };
        Ok(HalfDegenerateModel::new(self.dims.n_a, self.dims.n_b, *sa, sb.clone())?)
    }

    pub fn covariance_pair(&self) -> Result<CovariancePair> {
        Ok(CovariancePair::new(self.sigma_a_matrix()?, self.sigma_b_matrix()?, self.dims.n_a, self.dims.n_b)?)
    }

    /// Paired simultaneous eigenvalues; requires commuting or half-degenerate
    /// mode and checks that the matrices actually commute.
    pub fn commuting(&self) -> Result<CommutingCovariances> {
        if self.mode == Mode::General {
            bail!("this computation requires mode commuting or half-degenerate (spec mode is general)");
        }
        let n = self.n();
        let diag = |s: &SigmaValue| match s {
            SigmaValue::Scalar(v) => Some(vec![*v; n]),
            SigmaValue::Vector(v) => Some(v.clone()),
            SigmaValue::Matrix(_) => None,
        };
        let (a, b) = match (diag(&self.sigma_a), diag(&self.sigma_b)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                let sa = self.sigma_a_matrix()?;
                let sb = self.sigma_b_matrix()?;
                let comm = sa.matmul(&sb).lincomb(Complex64::new(1.0, 0.0), &sb.matmul(&sa), Complex64::new(-1.0, 0.0));
                let bound = COMMUTATOR_TOL * sa.norm_fro() * sb.norm_fro();
                if comm.norm_fro() > bound {
                    bail!("mode commuting but sigma_A sigma_B - sigma_B sigma_A has norm {:e}", comm.norm_fro());
                }
                // a generic combination separates joint eigenspaces
                let mix =
                    sa.lincomb(Complex64::new(1.0, 0.0), &sb, Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
                let (_, v) = hermitian_eigen(&mix, 1e-8 * mix.max_abs())?;
                let rq = |m: &ComplexMatrix, k: usize| -> f64 {
                    let mut s = Complex64::new(0.0, 0.0);
                    for i in 0..n {
                        for j in 0..n {
                            s += v[(i, k)].conj() * m[(i, j)] * v[(j, k)];
                        }
                    }
                    s.re
                };
                ((0..n).map(|k| rq(&sa, k)).collect(), (0..n).map(|k| rq(&sb, k)).collect())
            }
        };
        Ok(CommutingCovariances::new(self.dims.n_a, self.dims.n_b, a, b)?)
    }

    /// Largest eigenvalues of Σ_A and Σ_B.
    pub fn sigma_max(&self) -> Result<(f64, f64)> {
        let top = |s: &SigmaValue| -> Result<f64> {
            Ok(match s {
                SigmaValue::Scalar(v) => *v,
                SigmaValue::Vector(v) => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                SigmaValue::Matrix(_) => {
                    let m = Self::sigma_matrix(s, self.n())?;
                    let ev = hermitian_eigenvalues(&m, 1e-8 * m.max_abs())?.eigenvalues;
                    ev.last().copied().unwrap_or(0.0)
                }
            })
        };
        Ok((top(&self.sigma_a)?, top(&self.sigma_b)?))
    }
}
