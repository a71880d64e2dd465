//! Quote surfaces over `(y0, T, gamma)` and their CSV form.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use super::{Pricer, Quote};
use crate::claims::{RiskAversion, VolClaim};
use crate::error::{Error, Result};

/// First line of every CSV table written by this crate.
pub const CSV_SCHEMA: &str = "# volquote-schema 1";

/// Evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Axes of a quote surface.
///
/// Text form: comma-separated `axis=values`, where `axis` is `y0`, `T`,
/// `gamma` or `log2gamma` and `values` is `lo:hi:n`, a single number, or a
/// `;`-separated list. Example: `y0=0.01:0.5:50,T=0.1:1:10,log2gamma=-5:5:11`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpec {
    pub y0: Vec<f64>,
    pub maturities: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        SurfaceSpec {
            y0: linspace(0.01, 0.5, 50),
            maturities: linspace(0.1, 1.0, 10),
            gammas: vec![1.0],
        }
    }
}

fn parse_axis(name: &str, text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::GridSpec(format!("{name}: `{s}` is not a finite number")))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let values = match parts.as_slice() {
        [lo, hi, n] => {
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| Error::GridSpec(format!("{name}: `{n}` is not a point count")))?;
            if n == 0 || n > 100_000 {
                return Err(Error::GridSpec(format!("{name}: point count {n} out of range")));
            }
            let (lo, hi) = (num(lo)?, num(hi)?);
            if hi < lo || (n > 1 && hi == lo) {
                return Err(Error::GridSpec(format!("{name}: need lo < hi, got {lo}:{hi}")));
            }
            linspace(lo, hi, n)
        }
        [list] => list.split(';').map(num).collect::<Result<Vec<_>>>()?,
        _ => {
            return Err(Error::GridSpec(format!(
                "{name}: expected lo:hi:n or a ;-separated list, got `{text}`"
            )))
        }
    };
    Ok(values)
}

impl FromStr for SurfaceSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut spec = SurfaceSpec::default();
        let mut seen: Vec<&str> = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) = part
                .split_once('=')
                .ok_or_else(|| Error::GridSpec(format!("`{part}`: expected axis=values")))?;
            let key = key.trim();
            let axis = match key {
                "y0" | "T" | "gamma" => key,
                "log2gamma" => "gamma",
                _ => {
                    return Err(Error::GridSpec(format!(
                        "unknown axis `{key}` (expected y0, T, gamma or log2gamma)"
                    )))
                }
            };
            if seen.contains(&axis) {
                return Err(Error::GridSpec(format!("axis `{axis}` given twice")));
            }
            seen.push(axis);
            let v = parse_axis(key, values)?;
            match key {
                "y0" => spec.y0 = v,
                "T" => spec.maturities = v,
                "gamma" => spec.gammas = v,
                _ => spec.gammas = v.iter().map(|x| x.exp2()).collect(),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl SurfaceSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(y) = self.y0.iter().find(|&&y| !(y >= 1e-3)) {
            return Err(Error::GridSpec(format!("y0 = {y} is below the 1e-3 floor")));
        }
        if let Some(t) = self.maturities.iter().find(|&&t| !(t > 0.0)) {
            return Err(Error::GridSpec(format!("maturity T = {t} must be positive")));
        }
        if let Some(g) = self.gammas.iter().find(|&&g| !(g > 0.0)) {
            return Err(Error::GridSpec(format!("gamma = {g} must be positive")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y0.len() * self.maturities.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One surface cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceRow {
    pub y0: f64,
    pub maturity: f64,
    pub gamma: f64,
    pub quote: Quote,
}

/// Quotes at `t = 0`, `s = s0` for every `(y0, T, gamma)` cell.
///
/// The density pair depends on `(y0, T)` only, so it is built once per
/// such cell and shared by all risk aversions. Rows are ordered by `y0`,
/// then `T`, then `gamma`, independent of scheduling.
pub fn surface(pricer: &Pricer, claim: &VolClaim, spec: &SurfaceSpec, s0: f64) -> Result<Vec<SurfaceRow>> {
    spec.validate()?;
    let rho = pricer.model.params.rho;
    let ras: Vec<RiskAversion> = spec
        .gammas
        .iter()
        .map(|&g| RiskAversion::new(g, rho))
        .collect::<Result<_>>()?;
    let cells: Vec<(f64, f64)> = spec
        .y0
        .iter()
        .flat_map(|&y| spec.maturities.iter().map(move |&t| (y, t)))
        .collect();
    let blocks: Vec<Vec<SurfaceRow>> = cells
        .par_iter()
        .map(|&(y0, maturity)| {
            let state = pricer.model.state(0.0, maturity, y0, s0)?;
            let dp = pricer.densities(&state)?;
            spec.gammas
                .iter()
                .zip(&ras)
                .map(|(&gamma, ra)| {
                    Ok(SurfaceRow {
                        y0,
                        maturity,
                        gamma,
                        quote: pricer.quote_with(claim, ra, &state, &dp)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(blocks.into_iter().flatten().collect())
}

/// Writes rows under the versioned schema line and the standard header.
pub fn write_quotes_csv<W: Write>(out: W, rows: &[SurfaceRow]) -> Result<()> {
    let mut out = out;
    writeln!(out, "{CSV_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "y0",
        "T",
        "gamma",
        "pi",
        "davis",
        "h_claim",
        "h_merton",
        "excess_dollars",
        "lambda1",
        "lambda2",
        "bond",
        "residual_mass",
    ])?;
    for row in rows {
        let q = &row.quote;
        let fields = [
            row.y0,
            row.maturity,
            row.gamma,
            q.pi,
            q.davis,
            q.h_claim,
            q.h_merton,
            q.excess_dollars,
            q.lambda1,
            q.lambda2,
            q.bond,
            q.diagnostics.residual_mass,
        ];
        w.write_record(fields.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}
