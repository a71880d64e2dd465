//! Moment matching of simulated `Y = c / R` increments against the
//! closed-form drift `a(Y)` and diffusion `b(Y)`.

use serde::Serialize;

use super::mc::{path_rng, CirParams, CirStepper, Measure, Moments, Scheme};
use crate::error::{Error, Result};
use crate::model::{y_drift_diffusion, Model};

/// Squared-volatility levels probed by default.
pub const PROBE_LEVELS: [f64; 5] = [0.05, 0.1, 0.15, 0.3, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SdeLevel {
    pub y: f64,
    /// Model drift `a(y)`.
    pub drift: f64,
    /// Model diffusion `b(y)`.
    pub diffusion: f64,
    /// `E[dY] / dt` from the sample.
    pub drift_est: f64,
    pub drift_se: f64,
    pub drift_z: f64,
    /// `Var[dY] / dt` from the sample.
    pub var_est: f64,
    pub var_se: f64,
    pub var_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdeReport {
    pub dt: f64,
    pub n_samples: usize,
    pub levels: Vec<SdeLevel>,
}

impl SdeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.levels
            .iter()
            .flat_map(|l| [l.drift_z.abs(), l.var_z.abs()])
            .fold(0.0, f64::max)
    }
}

/// Draws `n_samples` exact one-step transitions of `R` under the economic
/// measure from each level `y`, maps them to `Y`, and z-scores the first
/// two increment moments against `a(y) dt` and `b(y)^2 dt`.
pub fn sde_consistency_report(
    model: &Model,
    levels: &[f64],
    dt: f64,
    n_samples: usize,
    seed: u64,
) -> Result<SdeReport> {
    if !(dt > 0.0 && dt <= 1e-4) {
        return Err(Error::SimSpec(format!("SDE check needs 0 < dt <= 1e-4, got {dt}")));
    }
    if n_samples < 2 {
        return Err(Error::SimSpec("SDE check needs at least two samples".into()));
    }
    let stepper = CirStepper::new(CirParams::under(model, Measure::P), dt, Scheme::ExactTransition)?;
    let c = model.tilde.c;
    let out = levels
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let (drift, diffusion) = y_drift_diffusion(y, &model.params, &model.tilde)?;
            let r0 = c / y;
            let mut rng = path_rng(seed, k as u64);
            let mut m = Moments::<1>::default();
            let mut m4 = 0.0;
            let mut incs = Vec::with_capacity(n_samples);
            for _ in 0..n_samples {
                let dy = c / stepper.step(r0, &mut rng) - y;
                m.push([dy]);
                incs.push(dy);
            }
            let n = n_samples as f64;
            let mean = m.mean[0];
            let var = m.cov(0, 0);
            for dy in &incs {
                m4 += (dy - mean).powi(4);
            }
            m4 /= n;
            let drift_est = mean / dt;
            let drift_se = (var / n).sqrt() / dt;
            let var_est = var / dt;
            let var_se = ((m4 - var * var).max(0.0) / n).sqrt() / dt;
            Ok(SdeLevel {
                y,
                drift,
                diffusion,
                drift_est,
                drift_se,
                drift_z: (drift_est - drift) / drift_se,
                var_est,
                var_se,
                var_z: (var_est - diffusion * diffusion) / var_se,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SdeReport {
        dt,
        n_samples,
        levels: out,
    })
}
