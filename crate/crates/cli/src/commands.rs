//! Subcommand definitions and dispatch.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use wishart_sum::charpoly::{charpoly_coefficients, expect_charpoly, expect_inverse_charpoly};
use wishart_sum::curve::{auto_grid, linear_grid, DensityCurve};
use wishart_sum::halfdeg::{andreief_rk, correlation_rk, density, kernel, KernelEvaluator};
use wishart_sum::saddle::{density_saddle, DEFAULT_TOL};
use wishart_sum::sampler::{bin_masses, mc_density, sample_eigenvalues, tv_distance, BinSpec, HistogramRange};
use wishart_sum::susy::{density_susy, EpsilonPolicy, SusyQuadrature};

use crate::csv::{fmt_g17, Table};
use crate::spec::ModelSpecFile;
use crate::validate::{load_failure, validate, Suite};

pub const THREADS_ENV: &str = "WISHART_SUM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "wishart-sum", version, about = "Spectral statistics of sums of correlated complex Wishart matrices")]
pub struct Cli {
    /// Worker threads (default: WISHART_SUM_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Exact,
    Susy,
    Saddle,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Oracle {
    Kernel,
    Andreief,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Fast,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridArg {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

fn parse_grid(s: &str) -> std::result::Result<GridArg, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, count] = parts[..] else {
        return Err("expected min:max:count".into());
    };
    let lo: f64 = lo.parse().map_err(|_| format!("bad grid minimum {lo:?}"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad grid maximum {hi:?}"))?;
    let count: usize = count.parse().map_err(|_| format!("bad grid count {count:?}"))?;
    if hi.is_nan() || lo.is_nan() || hi <= lo || count < 2 {
        return Err("grid needs max > min and count >= 2".into());
    }
    Ok(GridArg { lo, hi, count })
}

/// Parses `a+bi`, `a-bi`, `bi` or `a`.
pub fn parse_complex(s: &str) -> std::result::Result<Complex64, String> {
    let t = s.trim();
    let bad = || format!("bad complex number {s:?} (expected e.g. 10+0.5i)");
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split =
        (1..bytes.len()).rev().find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (body[..k].parse::<f64>().map_err(|_| bad())?, &body[k..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        v => v.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(Complex64::new(re, im))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalue density on a grid.
    Density {
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        method: Method,
        /// min:max:count (default: 512 points covering the spectrum).
        #[arg(long, value_parser = parse_grid)]
        grid: Option<GridArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Required for --method mc.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Histogram bins when no grid is given.
        #[arg(long, default_value_t = 100)]
        bins: usize,
    },
    /// Kernel K_N(x, y) for every pair of the given points.
    Kernel {
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        y: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-point correlation function R_k.
    Rk {
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        points: Vec<f64>,
        #[arg(long, value_enum, default_value = "kernel")]
        oracle: Oracle,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// E[det(x − H)] for commuting covariances.
    Charpoly {
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x: Vec<f64>,
        /// Print the ascending coefficients instead of values.
        #[arg(long)]
        coefficients: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// E[1/det(y − H)] for commuting covariances, Im y ≠ 0.
    InvCharpoly {
        spec: PathBuf,
        /// Complex points such as 10+0.5i; repeat or separate by commas.
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_complex, allow_hyphen_values = true)]
        y: Vec<Complex64>,
        /// Starting Gauss–Laguerre order (>= 50).
        #[arg(long, default_value_t = 64)]
        order: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalues of random draws of H.
    Sample {
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Self-checks; JSON report, exit 0 iff all pass.
    Validate {
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "fast")]
        suite: SuiteArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Total-variation distance between a Monte Carlo histogram and the
    /// exact (half-degenerate) or SUSY density.
    Compare {
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        bins: usize,
        /// Simpson panels per bin for the analytic bin masses.
        #[arg(long)]
        panels: Option<usize>,
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Rendered output plus the exit code it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub output: String,
    pub out: Option<PathBuf>,
    pub warnings: Vec<String>,
    pub code: i32,
}

impl Outcome {
    fn new(output: String, out: Option<PathBuf>, warnings: Vec<String>) -> Self {
        let code = if warnings.is_empty() { 0 } else { 2 };
        Self { output, out, warnings, code }
    }
}

pub fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            Ok(Some(v.trim().parse().with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?))
        }
        _ => Ok(None),
    }
}

fn curve_table(curve: &DensityCurve, extra: &[(&str, String)]) -> Table {
    let mut t = Table::new(&["x", "density"]);
    t.comment("method", curve.method);
    for (k, v) in extra {
        t.comment(k, v);
    }
    for (k, v) in &curve.metadata.entries {
        t.comment(k, v);
    }
    for w in &curve.metadata.warnings {
        t.comment("warning", w);
    }
    for (&x, &v) in curve.grid.iter().zip(&curve.values) {
        t.push(vec![x, v]);
    }
    t
}

fn spectrum_grid(spec: &ModelSpecFile, grid: Option<GridArg>) -> Result<Vec<f64>> {
    Ok(match grid {
        Some(g) => linear_grid(g.lo, g.hi, g.count),
        None => {
            let (sa, sb) = spec.sigma_max()?;
            auto_grid(spec.dims.n_a, sa, spec.dims.n_b, sb)
        }
    })
}

fn cmd_density(
    spec: &ModelSpecFile,
    method: Method,
    grid: Option<GridArg>,
    seed: Option<u64>,
    samples: usize,
    bins: usize,
) -> Result<(Table, Vec<String>)> {
    let curve = match method {
        Method::Exact => {
            let m =
                spec.half_degenerate().context("method exact needs a half-degenerate model; use susy, saddle or mc")?;
            density(&KernelEvaluator::new(&m)?, &spectrum_grid(spec, grid)?)?
        }
        Method::Susy => {
            let c = spec.covariance_pair()?;
            let g = spectrum_grid(spec, grid)?;
            let span = g[g.len() - 1] - g[0];
            density_susy(&c, &g, &EpsilonPolicy::default_for(span, c.n()), &SusyQuadrature::default_for(&c))?
        }
        Method::Saddle => density_saddle(&spec.covariance_pair()?, &spectrum_grid(spec, grid)?, DEFAULT_TOL)?,
        Method::Mc => {
            let seed = seed.ok_or_else(|| anyhow!("--method mc requires --seed"))?;
            if samples == 0 {
                bail!("--samples must be at least 1");
            }
            let c = spec.covariance_pair()?;
            let spec_bins = match grid {
                Some(g) => BinSpec { bins: g.count, range: HistogramRange::Fixed(g.lo, g.hi) },
                None => BinSpec { bins, range: HistogramRange::Auto },
            };
            let h = mc_density(&c, samples, &spec_bins, seed)?;
            let mut t = Table::new(&["x", "density"]);
            t.comment("method", "mc");
            t.comment("seed", seed);
            t.comment("samples", samples);
            t.comment("bins", h.counts.len());
            t.comment("clamped", h.clamped);
            for (x, v) in h.bin_centers().into_iter().zip(h.density()) {
                t.push(vec![x, v]);
            }
            return Ok((t, Vec::new()));
        }
    };
    let warnings = curve.metadata.warnings.clone();
    Ok((curve_table(&curve, &[]), warnings))
}

#[derive(Debug, Serialize)]
struct CompareReport {
    method: &'static str,
    reference: &'static str,
    seed: u64,
    samples: usize,
    bins: usize,
    range: [f64; 2],
    clamped: u64,
    total_variation: f64,
    tolerance: f64,
    status: &'static str,
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    spec: &ModelSpecFile,
    seed: u64,
    samples: usize,
    bins: usize,
    panels: Option<usize>,
    tolerance: f64,
) -> Result<(String, bool)> {
    if samples == 0 {
        bail!("--samples must be at least 1");
    }
    let c = spec.covariance_pair()?;
    let h = mc_density(&c, samples, &BinSpec { bins, range: HistogramRange::Auto }, seed)?;
    let n = spec.n() as f64;
    let (method, mut masses) = match spec.half_degenerate() {
        Ok(m) => {
            let ev = KernelEvaluator::new(&m)?;
            ("exact", bin_masses(&h.bin_edges, panels.unwrap_or(16), |x| ev.kernel(x, x).unwrap_or(f64::NAN)))
        }
        Err(_) => {
            let sub = panels.unwrap_or(4).max(2).div_ceil(2) * 2;
            let (lo, hi) = (h.bin_edges[0], h.bin_edges[bins]);
            let grid = linear_grid(lo, hi, bins * sub + 1);
            let curve =
                density_susy(&c, &grid, &EpsilonPolicy::default_for(hi - lo, c.n()), &SusyQuadrature::default_for(&c))?;
            let step = grid[1] - grid[0];
            let masses =
                curve.values.windows(sub + 1).step_by(sub).map(|w| crate::validate::simpson(w, step)).collect();
            ("susy", masses)
        }
    };
    // mass past the last edge lands in the last bin, as in the histogram
    let tail = n - masses.iter().sum::<f64>();
    if let Some(last) = masses.last_mut() {
        *last += tail.max(0.0);
    }
    let q: Vec<f64> = masses.iter().map(|m| m / n).collect();
    let tv = tv_distance(&h.probabilities(), &q);
    let pass = tv < tolerance;
    let report = CompareReport {
        method,
        reference: "mc",
        seed,
        samples,
        bins,
        range: [h.bin_edges[0], h.bin_edges[bins]],
        clamped: h.clamped,
        total_variation: tv,
        tolerance,
        status: if pass { "pass" } else { "fail" },
    };
    Ok((serde_json::to_string_pretty(&report)? + "\n", pass))
}

fn load(spec: &Path) -> Result<ModelSpecFile> {
    ModelSpecFile::load(spec)
}

pub fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Density { spec, method, grid, out, seed, samples, bins } => {
            let spec = load(&spec)?;
            let (table, warnings) = cmd_density(&spec, method, grid, seed, samples, bins)?;
            Ok(Outcome::new(table.render(), out, warnings))
        }
        Command::Kernel { spec, x, y, out } => {
            let m = load(&spec)?.half_degenerate()?;
            let ev = KernelEvaluator::new(&m)?;
            let mut t = Table::new(&["x", "y", "kernel"]);
            for &a in &x {
                for &b in &y {
                    t.push(vec![a, b, kernel(&ev, a, b)?]);
                }
            }
            Ok(Outcome::new(t.render(), out, m.conditioning_warnings()))
        }
        Command::Rk { spec, points, oracle, out } => {
            let m = load(&spec)?.half_degenerate()?;
            let mut text = String::from("oracle,value\n");
            let mut warnings = m.conditioning_warnings();
            let kv = match oracle {
                Oracle::Kernel | Oracle::Both => Some(correlation_rk(&KernelEvaluator::new(&m)?, &points)?),
                Oracle::Andreief => None,
            };
            let av = match oracle {
                Oracle::Andreief | Oracle::Both => {
                    let a = andreief_rk(&m, &points)?;
                    if a.ill_conditioned {
                        warnings.push(format!("block matrix condition estimate {:e}", a.condition_estimate));
                    }
                    Some(a.value)
                }
                Oracle::Kernel => None,
            };
            if let Some(v) = kv {
                text += &format!("kernel,{}\n", fmt_g17(v));
            }
            if let Some(v) = av {
                text += &format!("andreief,{}\n", fmt_g17(v));
            }
            if let (Some(a), Some(b)) = (kv, av) {
                let dev = if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
                text += &format!("relative_deviation,{}\n", fmt_g17(dev));
            }
            Ok(Outcome::new(text, out, warnings))
        }
        Command::Charpoly { spec, x, coefficients, out } => {
            let c = load(&spec)?.commuting()?;
            let t = if coefficients {
                let mut t = Table::new(&["power", "coefficient"]);
                for (p, v) in charpoly_coefficients(&c)?.into_iter().enumerate() {
                    t.push(vec![p as f64, v]);
                }
                t
            } else {
                if x.is_empty() {
                    bail!("give evaluation points with --x or use --coefficients");
                }
                let mut t = Table::new(&["x", "value"]);
                for &v in &x {
                    t.push(vec![v, expect_charpoly(&c, v)?]);
                }
                t
            };
            Ok(Outcome::new(t.render(), out, Vec::new()))
        }
        Command::InvCharpoly { spec, y, order, out } => {
            let c = load(&spec)?.commuting()?;
            let mut t = Table::new(&["y_re", "y_im", "value_re", "value_im", "order"]);
            for &p in &y {
                let q = expect_inverse_charpoly(&c, p, order)?;
                t.push(vec![p.re, p.im, q.value.re, q.value.im, q.order as f64]);
            }
            Ok(Outcome::new(t.render(), out, Vec::new()))
        }
        Command::Sample { spec, seed, samples, out } => {
            let c = load(&spec)?.covariance_pair()?;
            let mut header = vec!["sample".to_string()];
            header.extend((1..=c.n()).map(|k| format!("lambda_{k}")));
            let mut t = Table { header, ..Default::default() };
            t.comment("seed", seed);
            for i in 0..samples as u64 {
                let mut row = vec![i as f64];
                row.extend(sample_eigenvalues(&c, seed, i)?);
                t.push(row);
            }
            Ok(Outcome::new(t.render(), out, Vec::new()))
        }
        Command::Validate { spec, suite, out } => {
            let suite = if suite == SuiteArg::Fast { Suite::Fast } else { Suite::Full };
            let report = match load(&spec) {
                Ok(s) => validate(&s, suite),
                Err(e) => load_failure(suite, &e),
            };
            let text = serde_json::to_string_pretty(&report)? + "\n";
            Ok(Outcome { output: text, out, warnings: Vec::new(), code: if report.passed { 0 } else { 1 } })
        }
        Command::Compare { spec, seed, samples, bins, panels, tolerance, out } => {
            let spec = load(&spec)?;
            let (text, pass) = cmd_compare(&spec, seed, samples, bins, panels, tolerance)?;
            Ok(Outcome { output: text, out, warnings: Vec::new(), code: if pass { 0 } else { 2 } })
        }
    }
}
