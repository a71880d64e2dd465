//! Terminal payoffs on squared volatility `Y_T` and their exponential tilt.
//!
//! Only claims bounded above are representable: in this model a payoff that
//! grows without bound in `Y_T` has infinite certainty equivalent.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::TildeParams;

#[derive(Debug, Clone, PartialEq)]
pub enum ClaimKind {
    /// `(K - y)^+`.
    Put { strike: f64 },
    /// `(y - K1)^+ - (y - K2)^+`.
    CallSpread { k1: f64, k2: f64 },
    /// Pays `value` regardless of `y`.
    Constant { value: f64 },
    /// Piecewise-linear through `(ys[i], values[i])`, flat outside the grid.
    Tabulated { ys: Vec<f64>, values: Vec<f64> },
}

/// A pure volatility claim `B(Y_T)`, optionally shifted by a cash amount.
#[derive(Debug, Clone, PartialEq)]
pub struct VolClaim {
    kind: ClaimKind,
    offset: f64,
}

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::NonPositive { name, value })
    }
}

impl VolClaim {
    pub fn put(strike: f64) -> Result<Self> {
        Ok(VolClaim {
            kind: ClaimKind::Put {
                strike: positive("K", strike)?,
            },
            offset: 0.0,
        })
    }

    pub fn call_spread(k1: f64, k2: f64) -> Result<Self> {
        positive("K1", k1)?;
        positive("K2", k2)?;
        if k1 >= k2 {
            return Err(Error::InvalidClaim(format!(
                "call spread needs K1 < K2, got K1 = {k1}, K2 = {k2}"
            )));
        }
        Ok(VolClaim {
            kind: ClaimKind::CallSpread { k1, k2 },
            offset: 0.0,
        })
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                name: "k",
                value,
            });
        }
        Ok(VolClaim {
            kind: ClaimKind::Constant { value },
            offset: 0.0,
        })
    }

    /// The zero claim; pricing it yields the Merton problem.
    pub fn zero() -> Self {
        VolClaim {
            kind: ClaimKind::Constant { value: 0.0 },
            offset: 0.0,
        }
    }

    pub fn tabulated(ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if ys.is_empty() || ys.len() != values.len() {
            return Err(Error::InvalidClaim(format!(
                "table needs matching non-empty columns, got {} y-values and {} payoffs",
                ys.len(),
                values.len()
            )));
        }
        for &y in &ys {
            positive("y", y)?;
        }
        if ys.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidClaim(
                "table y-grid must be strictly increasing".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidClaim(format!("table payoff {v} is not finite")));
        }
        Ok(VolClaim {
            kind: ClaimKind::Tabulated { ys, values },
            offset: 0.0,
        })
    }

    /// Reads a two-column `y,value` CSV. A non-numeric first row is taken
    /// as a header; `#` starts a comment line.
    pub fn from_table_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut ys = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::InvalidClaim(format!(
                    "table row {} has {} columns, expected 2",
                    i + 1,
                    rec.len()
                )));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(y), Ok(v)) => {
                    ys.push(y);
                    values.push(v);
                }
                _ if i == 0 => continue,
                _ => {
                    return Err(Error::InvalidClaim(format!(
                        "table row {} is not numeric: {:?}",
                        i + 1,
                        rec
                    )))
                }
            }
        }
        Self::tabulated(ys, values)
    }

    pub fn from_table_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::InvalidClaim(format!("cannot read table {}: {e}", path.display())))?;
        Self::from_table_reader(file)
    }

    /// `B + k`.
    pub fn plus(&self, k: f64) -> Self {
        VolClaim {
            kind: self.kind.clone(),
            offset: self.offset + k,
        }
    }

    pub fn kind(&self) -> &ClaimKind {
        &self.kind
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `B(y)`.
    pub fn payoff(&self, y: f64) -> f64 {
        let raw = match &self.kind {
            ClaimKind::Put { strike } => (strike - y).max(0.0),
            ClaimKind::CallSpread { k1, k2 } => (y - k1).max(0.0) - (y - k2).max(0.0),
            ClaimKind::Constant { value } => *value,
            ClaimKind::Tabulated { ys, values } => interpolate(ys, values, y),
        };
        raw + self.offset
    }

    /// `lim_{y -> inf} B(y)`.
    pub fn payoff_at_infinity(&self) -> f64 {
        let raw = match &self.kind {
            ClaimKind::Put { .. } => 0.0,
            ClaimKind::CallSpread { k1, k2 } => k2 - k1,
            ClaimKind::Constant { value } => *value,
            ClaimKind::Tabulated { values, .. } => *values.last().expect("non-empty table"),
        };
        raw + self.offset
    }

    /// `B(c / R)`, with `R <= 0` read as `y = inf`.
    pub fn payoff_at_rate(&self, rate: f64, tp: &TildeParams) -> f64 {
        if rate > 0.0 {
            self.payoff(tp.c / rate)
        } else {
            self.payoff_at_infinity()
        }
    }

    /// Right derivative `dB/dy`.
    pub fn payoff_slope(&self, y: f64) -> f64 {
        match &self.kind {
            ClaimKind::Put { strike } => {
                if y < *strike {
                    -1.0
                } else {
                    0.0
                }
            }
            ClaimKind::CallSpread { k1, k2 } => {
                if y >= *k1 && y < *k2 {
                    1.0
                } else {
                    0.0
                }
            }
            ClaimKind::Constant { .. } => 0.0,
            ClaimKind::Tabulated { ys, values } => {
                let j = ys.partition_point(|&x| x <= y);
                if j == 0 || j == ys.len() {
                    0.0
                } else {
                    (values[j] - values[j - 1]) / (ys[j] - ys[j - 1])
                }
            }
        }
    }

    /// Points in `y` where the payoff has a kink.
    pub fn kinks_in_y(&self) -> Vec<f64> {
        match &self.kind {
            ClaimKind::Put { strike } => vec![*strike],
            ClaimKind::CallSpread { k1, k2 } => vec![*k1, *k2],
            ClaimKind::Constant { .. } => Vec::new(),
            ClaimKind::Tabulated { ys, .. } => ys.clone(),
        }
    }

    /// Kinks mapped to the shadow rate, ascending.
    pub fn kinks_in_rate(&self, tp: &TildeParams) -> Vec<f64> {
        let mut k: Vec<f64> = self.kinks_in_y().into_iter().map(|y| tp.c / y).collect();
        k.sort_by(f64::total_cmp);
        k
    }

    /// Tight `(inf B, sup B)`.
    pub fn payoff_bounds(&self) -> (f64, f64) {
        let (lo, hi) = match &self.kind {
            ClaimKind::Put { strike } => (0.0, *strike),
            ClaimKind::CallSpread { k1, k2 } => (0.0, k2 - k1),
            ClaimKind::Constant { value } => (*value, *value),
            ClaimKind::Tabulated { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                }),
        };
        (lo + self.offset, hi + self.offset)
    }

    /// `g(R) = exp(gamma (1 - rho^2) B(c / R))`.
    pub fn g_of_rate(&self, ra: &RiskAversion, tp: &TildeParams, rate: f64) -> f64 {
        (ra.gamma_eff * self.payoff_at_rate(rate, tp)).exp()
    }
}

fn interpolate(ys: &[f64], values: &[f64], y: f64) -> f64 {
    let j = ys.partition_point(|&x| x <= y);
    if j == 0 {
        values[0]
    } else if j == ys.len() {
        values[j - 1]
    } else {
        let w = (y - ys[j - 1]) / (ys[j] - ys[j - 1]);
        values[j - 1] + w * (values[j] - values[j - 1])
    }
}

impl fmt::Display for VolClaim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ClaimKind::Put { strike } => write!(f, "put:K={strike}")?,
            ClaimKind::CallSpread { k1, k2 } => write!(f, "spread:K1={k1},K2={k2}")?,
            ClaimKind::Constant { value } => write!(f, "const:k={value}")?,
            ClaimKind::Tabulated { ys, .. } => write!(f, "table[{} points]", ys.len())?,
        }
        if self.offset != 0.0 {
            write!(f, "{:+}", self.offset)?;
        }
        Ok(())
    }
}

/// Exponential-utility risk aversion together with the effective
/// coefficient `gamma (1 - rho^2)` that multiplies payoffs in the tilt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskAversion {
    pub gamma: f64,
    pub gamma_eff: f64,
}

impl RiskAversion {
    pub fn new(gamma: f64, rho: f64) -> Result<Self> {
        positive("gamma", gamma)?;
        if !(rho.abs() < 1.0) {
            return Err(Error::Correlation(rho));
        }
        Ok(RiskAversion {
            gamma,
            gamma_eff: gamma * (1.0 - rho * rho),
        })
    }
}

/// Parsed claim specification string, before any file is read.
#[derive(Debug, Clone, PartialEq)]
pub enum ClaimSpec {
    Put { strike: f64 },
    Spread { k1: f64, k2: f64 },
    Const { value: f64 },
    Table(PathBuf),
}

impl ClaimSpec {
    /// Parses `put:K=0.15`, `spread:K1=0.15,K2=0.3`, `const:k=0.1` or
    /// `table:path.csv`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (kind, rest) = text
            .split_once(':')
            .ok_or_else(|| Error::InvalidClaim(format!("`{text}`: expected <kind>:<args>")))?;
        let kind = kind.trim().to_ascii_lowercase();
        match kind.as_str() {
            "put" => {
                let args = parse_args(rest, &["K"])?;
                Ok(ClaimSpec::Put { strike: args[0] })
            }
            "spread" => {
                let args = parse_args(rest, &["K1", "K2"])?;
                Ok(ClaimSpec::Spread {
                    k1: args[0],
                    k2: args[1],
                })
            }
            "const" => {
                let args = parse_args(rest, &["k"])?;
                Ok(ClaimSpec::Const { value: args[0] })
            }
            "table" => {
                let path = rest.trim();
                if path.is_empty() {
                    return Err(Error::InvalidClaim("table: missing CSV path".into()));
                }
                Ok(ClaimSpec::Table(PathBuf::from(path)))
            }
            "call" | "forward" | "variance" => Err(Error::UnboundedClaim(text.to_string())),
            other => Err(Error::InvalidClaim(format!(
                "unknown claim kind `{other}` (expected put, spread, const or table)"
            ))),
        }
    }

    /// Builds the claim, reading the table file if needed.
    pub fn resolve(&self) -> Result<VolClaim> {
        match self {
            ClaimSpec::Put { strike } => VolClaim::put(*strike),
            ClaimSpec::Spread { k1, k2 } => VolClaim::call_spread(*k1, *k2),
            ClaimSpec::Const { value } => VolClaim::constant(*value),
            ClaimSpec::Table(path) => VolClaim::from_table_file(path),
        }
    }
}

/// Parses `A=1,B=2` into values ordered as `keys`; every key exactly once.
fn parse_args(text: &str, keys: &[&str]) -> Result<Vec<f64>> {
    let mut out: Vec<Option<f64>> = vec![None; keys.len()];
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidClaim(format!("`{part}`: expected key=value")))?;
        let key = key.trim();
        let idx = keys
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| Error::InvalidClaim(format!("unknown claim argument `{key}`")))?;
        if out[idx].is_some() {
            return Err(Error::InvalidClaim(format!("duplicate claim argument `{key}`")));
        }
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidClaim(format!("`{value}` is not a number")))?;
        out[idx] = Some(v);
    }
    out.into_iter()
        .zip(keys)
        .map(|(v, k)| v.ok_or_else(|| Error::InvalidClaim(format!("missing claim argument `{k}`"))))
        .collect()
}
