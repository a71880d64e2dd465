//! Quotes along one simulated volatility path.
//!
//! The shadow rate is simulated under the economic measure with exact
//! transitions and mapped back to `Y = c / R`; every grid time is then
//! priced afresh. The stock price is held at `s0`, so excess hedge dollars
//! are `(h_claim - h_merton) s0`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::claims::{RiskAversion, VolClaim};
use crate::error::{Error, Result};
use crate::oracle::mc::{simulate_path, CirParams, Measure, Scheme};
use crate::pricer::{Pricer, CSV_SCHEMA};

/// Where and how long to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerSpec {
    pub y0: f64,
    pub s0: f64,
    pub maturity: f64,
    pub dt: f64,
    pub seed: u64,
}

impl LedgerSpec {
    /// Number of steps; `dt` must divide the horizon into at least 50.
    pub fn n_steps(&self) -> Result<usize> {
        for (name, v) in [("y0", self.y0), ("s0", self.s0), ("T", self.maturity), ("dt", self.dt)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonPositive { name, value: v });
            }
        }
        let n = (self.maturity / self.dt).round();
        if n < 50.0 || ((n * self.dt - self.maturity) / self.maturity).abs() > 1e-9 {
            return Err(Error::SimSpec(format!(
                "dt = {} must divide T = {} into at least 50 equal steps",
                self.dt, self.maturity
            )));
        }
        Ok(n as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathRecord {
    pub t: f64,
    pub y: f64,
    pub r: f64,
    pub pi: f64,
    pub h_claim: f64,
    pub h_merton: f64,
    pub excess_dollars: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathLedger {
    pub claim: String,
    pub gamma: f64,
    pub seed: u64,
    pub dt: f64,
    pub records: Vec<PathRecord>,
}

impl PathLedger {
    /// Mean of `|excess_dollars|` over records with `t` in `[from, to]`.
    pub fn mean_abs_excess(&self, from: f64, to: f64) -> f64 {
        let sel: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.t >= from - 1e-12 && r.t <= to + 1e-12)
            .map(|r| r.excess_dollars.abs())
            .collect();
        sel.iter().sum::<f64>() / sel.len().max(1) as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(out, "{CSV_SCHEMA}")?;
        writeln!(
            out,
            "# claim={} gamma={} seed={} dt={}",
            self.claim, self.gamma, self.seed, self.dt
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "y", "r", "pi", "h_claim", "h_merton", "excess_dollars", "lambda1", "lambda2"])?;
        for r in &self.records {
            let f = [r.t, r.y, r.r, r.pi, r.h_claim, r.h_merton, r.excess_dollars, r.lambda1, r.lambda2];
            w.write_record(f.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Times and shadow rates of the path used by every ledger for `spec`.
fn simulate(pricer: &Pricer, spec: &LedgerSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = spec.n_steps()?;
    let model = &pricer.model;
    let r0 = model.vol_to_rate(spec.y0)?;
    let cir = CirParams::under(model, Measure::P);
    let rates = simulate_path(cir, r0, spec.maturity / n as f64, n, Scheme::ExactTransition, spec.seed)?;
    let times = (0..=n)
        .map(|j| if j == n { spec.maturity } else { spec.maturity * j as f64 / n as f64 })
        .collect();
    Ok((times, rates))
}

/// One ledger per risk aversion, all on the same simulated path.
fn ledgers(pricer: &Pricer, claim: &VolClaim, ras: &[RiskAversion], spec: &LedgerSpec) -> Result<Vec<PathLedger>> {
    let (times, rates) = simulate(pricer, spec)?;
    let model = &pricer.model;
    let rows: Vec<Vec<PathRecord>> = times
        .par_iter()
        .zip(&rates)
        .map(|(&t, &r)| {
            let y = model.rate_to_vol(r)?;
            let state = model.state(t, spec.maturity, y, spec.s0)?;
            let dp = if state.tau() > 0.0 {
                Some(pricer.densities(&state)?)
            } else {
                None
            };
            ras.iter()
                .map(|ra| {
                    let q = match &dp {
                        Some(dp) => pricer.quote_with(claim, ra, &state, dp)?,
                        None => pricer.quote(claim, ra, &state)?,
                    };
                    Ok(PathRecord {
                        t,
                        y,
                        r: state.r_shadow,
                        pi: q.pi,
                        h_claim: q.h_claim,
                        h_merton: q.h_merton,
                        excess_dollars: q.excess_dollars,
                        lambda1: q.lambda1,
                        lambda2: q.lambda2,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(ras
        .iter()
        .enumerate()
        .map(|(k, ra)| PathLedger {
            claim: claim.to_string(),
            gamma: ra.gamma,
            seed: spec.seed,
            dt: spec.maturity / (times.len() - 1) as f64,
            records: rows.iter().map(|row| row[k]).collect(),
        })
        .collect())
}

/// Simulates one path of `Y` under the economic measure and quotes the
/// claim at every step; deterministic per seed.
pub fn generate_ledger(pricer: &Pricer, claim: &VolClaim, ra: &RiskAversion, spec: &LedgerSpec) -> Result<PathLedger> {
    Ok(ledgers(pricer, claim, std::slice::from_ref(ra), spec)?.remove(0))
}

/// Per-step comparison across risk aversions on a common path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaSensitivity {
    pub gammas: Vec<f64>,
    pub ledgers: Vec<PathLedger>,
    /// Largest `(max - min) / mean` of `pi` across gammas over all steps.
    pub max_rel_pi_spread: f64,
    /// Whether `pi` is nondecreasing in gamma at every step.
    pub pi_monotone: bool,
}

pub fn gamma_sensitivity(
    pricer: &Pricer,
    claim: &VolClaim,
    gammas: &[f64],
    spec: &LedgerSpec,
) -> Result<GammaSensitivity> {
    if let Some(g) = gammas.iter().find(|&&g| !(g > 0.0 && g <= 10.0)) {
        return Err(Error::SimSpec(format!("gamma = {g} outside (0, 10]")));
    }
    let mut gammas = gammas.to_vec();
    gammas.sort_by(f64::total_cmp);
    let rho = pricer.model.params.rho;
    let ras: Vec<RiskAversion> = gammas
        .iter()
        .map(|&g| RiskAversion::new(g, rho))
        .collect::<Result<_>>()?;
    let ledgers = ledgers(pricer, claim, &ras, spec)?;
    let n = ledgers.first().map_or(0, |l| l.records.len());
    let mut spread: f64 = 0.0;
    let mut monotone = true;
    for j in 0..n {
        let pis: Vec<f64> = ledgers.iter().map(|l| l.records[j].pi).collect();
        monotone &= pis.windows(2).all(|w| w[0] <= w[1] + 1e-12);
        let (lo, hi) = pis.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
        let mean = pis.iter().sum::<f64>() / pis.len() as f64;
        if mean != 0.0 {
            spread = spread.max((hi - lo) / mean.abs());
        }
    }
    Ok(GammaSensitivity {
        gammas,
        ledgers,
        max_rel_pi_spread: spread,
        pi_monotone: monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> LedgerSpec {
        LedgerSpec {
            y0: 0.15,
            s0: 1.0,
            maturity: 1.0,
            dt: 0.01,
            seed: 3,
        }
    }

    #[test]
    fn zero_claim_has_no_excess() {
        let p = Pricer::reference();
        let ra = RiskAversion::new(1.0, 0.5).unwrap();
        let l = generate_ledger(&p, &VolClaim::zero(), &ra, &spec()).unwrap();
        assert_eq!(l.records.len(), 101);
        assert!(l.records.iter().all(|r| r.excess_dollars == 0.0 && r.pi == 0.0));
    }

    #[test]
    fn terminal_price_is_payoff_and_path_is_valid() {
        let p = Pricer::reference();
        let ra = RiskAversion::new(1.0, 0.5).unwrap();
        let put = VolClaim::put(0.15).unwrap();
        let l = generate_ledger(&p, &put, &ra, &spec()).unwrap();
        let last = l.records.last().unwrap();
        assert_eq!(last.t, 1.0);
        assert!((last.pi - put.payoff(last.y)).abs() < 1e-4);
        assert!(l.records.windows(2).all(|w| w[1].t > w[0].t));
        assert!(l.records.iter().all(|r| r.y > 0.0 && r.excess_dollars.is_finite()));
        assert_eq!(l, generate_ledger(&p, &put, &ra, &spec()).unwrap());
    }

    #[test]
    fn gamma_table_shares_the_path() {
        let p = Pricer::reference();
        let put = VolClaim::put(0.15).unwrap();
        let g = gamma_sensitivity(&p, &put, &[10.0, 0.1, 1.0], &spec()).unwrap();
        assert_eq!(g.gammas, vec![0.1, 1.0, 10.0]);
        assert!(g.pi_monotone);
        for l in &g.ledgers[1..] {
            assert!(l.records.iter().zip(&g.ledgers[0].records).all(|(a, b)| a.y == b.y));
        }
        let single = gamma_sensitivity(&p, &put, &[1.0], &spec()).unwrap();
        assert_eq!(single.max_rel_pi_spread, 0.0);
        assert!(gamma_sensitivity(&p, &put, &[11.0], &spec()).is_err());
    }

    #[test]
    fn rejects_coarse_steps() {
        let s = LedgerSpec { dt: 0.05, ..spec() };
        assert!(s.n_steps().is_err());
        let s = LedgerSpec { dt: 0.003, ..spec() };
        assert!(s.n_steps().is_err());
    }

    #[test]
    fn csv_export() {
        let p = Pricer::reference();
        let ra = RiskAversion::new(1.0, 0.5).unwrap();
        let l = generate_ledger(&p, &VolClaim::put(0.15).unwrap(), &ra, &spec()).unwrap();
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(CSV_SCHEMA));
        assert_eq!(text.lines().count(), 3 + 101);
    }
}
