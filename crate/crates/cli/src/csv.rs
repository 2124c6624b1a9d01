//! CSV emission with C-style `%.17g` numbers and `#` metadata lines.

use anyhow::{bail, Context, Result};

/// Formats like C's `%.17g`, which round-trips every finite f64.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Parses a number written by [`fmt_g17`].
pub fn parse_g17(s: &str) -> Result<f64> {
    match s {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().with_context(|| format!("bad number {s:?}")),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), ..Default::default() }
    }

    pub fn comment(&mut self, key: &str, value: impl std::fmt::Display) {
        self.comments.push(format!("{key}: {value}"));
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|&v| fmt_g17(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut t = Table::default();
        for line in text.lines() {
            if let Some(c) = line.strip_prefix('#') {
                t.comments.push(c.trim_start().to_string());
            } else if line.trim().is_empty() {
                continue;
            } else if t.header.is_empty() {
                t.header = line.split(',').map(str::to_string).collect();
            } else {
                let row = line.split(',').map(parse_g17).collect::<Result<Vec<_>>>()?;
                if row.len() != t.header.len() {
                    bail!("row has {} cells, header has {}", row.len(), t.header.len());
                }
                t.rows.push(row);
            }
        }
        if t.header.is_empty() {
            bail!("no header line");
        }
        Ok(t)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}
