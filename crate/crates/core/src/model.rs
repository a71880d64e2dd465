//! Market and volatility parameters of the reciprocal affine model.
//!
//! The discounted stock follows `dS = S[(mu - r) dt + sqrt(Y) dW1]` and the
//! shadow rate `R = c / Y`, with `c = (1 - rho^2)(mu - r)^2 / 2`, is a CIR
//! process. Parameters are quoted under the economic measure `P`; the
//! pricing measure `P~` only shifts the mean-reversion speed and level while
//! keeping the product `alpha * kappa` fixed.

use crate::error::{Error, Result};

/// Economic-measure parameters. All rates per year.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ModelParams {
    /// Drift of the risky asset.
    pub mu: f64,
    /// Riskless rate.
    pub r: f64,
    /// Correlation between the stock and shadow-rate Brownian motions.
    pub rho: f64,
    /// CIR mean-reversion speed of `R` under `P`.
    pub alpha: f64,
    /// CIR long-run level of `R` under `P`.
    pub kappa: f64,
    /// CIR volatility coefficient of `R`.
    pub beta: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl ModelParams {
    /// The reference parameter set used throughout the numerical experiments.
    pub const fn reference() -> Self {
        ModelParams {
            mu: 0.04,
            r: 0.02,
            rho: 0.5,
            alpha: 5.0,
            kappa: 0.001,
            beta: 0.04,
        }
    }

    /// Checks the raw parameter domain (no measure change involved).
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("mu", self.mu), ("r", self.r), ("rho", self.rho)] {
            if !value.is_finite() {
                return Err(Error::NonFinite { name, value });
            }
        }
        if self.rho.abs() >= 1.0 {
            return Err(Error::Correlation(self.rho));
        }
        if self.mu == self.r {
            return Err(Error::DegenerateDrift(self.mu));
        }
        for (name, value) in [
            ("alpha", self.alpha),
            ("kappa", self.kappa),
            ("beta", self.beta),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositive { name, value });
            }
        }
        Ok(())
    }

    /// `beta * rho * sqrt(2 / (1 - rho^2))`, signed by `mu - r`.
    ///
    /// This is the drift shift `alpha_tilde - alpha` induced by the Sharpe
    /// ratio tilt of the stock Brownian motion.
    pub fn measure_shift(&self) -> f64 {
        let sign = (self.mu - self.r).signum();
        sign * self.beta * self.rho * (2.0 / (1.0 - self.rho * self.rho)).sqrt()
    }

    /// Excess return `mu - r`.
    pub fn excess_return(&self) -> f64 {
        self.mu - self.r
    }
}

/// Pricing-measure CIR parameters plus the `Y <-> R` conversion constant.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TildeParams {
    pub alpha_tilde: f64,
    pub kappa_tilde: f64,
    /// `c = (1 - rho^2)(mu - r)^2 / 2`, so that `R = c / Y`.
    pub c: f64,
}

/// Converts economic-measure parameters to the pricing measure.
///
/// Enforces `alpha_tilde > 0` and `4 alpha_tilde kappa_tilde > beta^2`.
pub fn derive_tilde_params(p: &ModelParams) -> Result<TildeParams> {
    p.validate()?;
    let alpha_tilde = p.alpha + p.measure_shift();
    if !(alpha_tilde > 0.0) {
        return Err(Error::MeanReversionInverted {
            alpha: p.alpha,
            alpha_tilde,
        });
    }
    let kappa_tilde = p.alpha * p.kappa / alpha_tilde;
    let lhs = 4.0 * alpha_tilde * kappa_tilde;
    let rhs = p.beta * p.beta;
    if !(lhs > rhs) {
        return Err(Error::Feller {
            alpha_tilde,
            kappa_tilde,
            lhs,
            rhs,
        });
    }
    let mr = p.excess_return();
    Ok(TildeParams {
        alpha_tilde,
        kappa_tilde,
        c: 0.5 * (1.0 - p.rho * p.rho) * mr * mr,
    })
}

/// Validated parameter bundle under both measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub tilde: TildeParams,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        let tilde = derive_tilde_params(&params)?;
        Ok(Model { params, tilde })
    }

    pub fn reference() -> Self {
        Model::new(ModelParams::reference()).expect("reference parameters are valid")
    }

    /// `alpha * kappa`, identical under both measures.
    pub fn alpha_kappa(&self) -> f64 {
        self.params.alpha * self.params.kappa
    }

    pub fn beta(&self) -> f64 {
        self.params.beta
    }

    pub fn vol_to_rate(&self, y: f64) -> Result<f64> {
        vol_to_rate(y, &self.tilde)
    }

    pub fn rate_to_vol(&self, rate: f64) -> Result<f64> {
        rate_to_vol(rate, &self.tilde)
    }

    /// Builds a state at calendar time `t` for maturity `maturity`.
    pub fn state(&self, t: f64, maturity: f64, y: f64, s: f64) -> Result<VolState> {
        VolState::new(t, maturity, y, s, &self.tilde)
    }
}

/// Shadow rate `R = c / y`.
pub fn vol_to_rate(y: f64, tp: &TildeParams) -> Result<f64> {
    if !(y.is_finite() && y > 0.0) {
        return Err(Error::NonPositive {
            name: "y",
            value: y,
        });
    }
    Ok(tp.c / y)
}

/// Squared volatility `y = c / R`.
pub fn rate_to_vol(rate: f64, tp: &TildeParams) -> Result<f64> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::NonPositive {
            name: "R",
            value: rate,
        });
    }
    Ok(tp.c / rate)
}

/// Drift `a(y)` and diffusion `b(y)` of the squared volatility under `P`,
/// obtained from Ito's formula applied to `Y = c / R`.
///
/// `b` carries the negative sign of the reciprocal map; the denominator uses
/// `|mu - r|`, which is `mu - r` in the usual `mu > r` setting.
pub fn y_drift_diffusion(y: f64, p: &ModelParams, tp: &TildeParams) -> Result<(f64, f64)> {
    if !(y.is_finite() && y > 0.0) {
        return Err(Error::NonPositive {
            name: "y",
            value: y,
        });
    }
    let one_m_rho2 = 1.0 - p.rho * p.rho;
    let mr = p.excess_return();
    // 2 / ((1 - rho^2)(mu - r)^2) == 1 / c
    let quad = (p.beta * p.beta - p.alpha * p.kappa) / tp.c;
    let a = p.alpha * y + quad * y * y;
    let b = -(2.0 / one_m_rho2).sqrt() * p.beta * y.powf(1.5) / mr.abs();
    Ok((a, b))
}

/// Point at which a quote is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolState {
    /// Calendar time in years.
    pub t: f64,
    /// Maturity in years.
    pub maturity: f64,
    /// Squared volatility `Y_t`.
    pub y: f64,
    /// Shadow rate `R_t = c / y`.
    pub r_shadow: f64,
    /// Discounted stock price.
    pub s: f64,
}

impl VolState {
    pub fn new(t: f64, maturity: f64, y: f64, s: f64, tp: &TildeParams) -> Result<Self> {
        if !(t.is_finite() && maturity.is_finite() && 0.0 <= t && t <= maturity) {
            return Err(Error::InvalidState(format!(
                "need 0 <= t <= T, got t = {t}, T = {maturity}"
            )));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::NonPositive {
                name: "s",
                value: s,
            });
        }
        let r_shadow = vol_to_rate(y, tp)?;
        Ok(VolState {
            t,
            maturity,
            y,
            r_shadow,
            s,
        })
    }

    /// Time to maturity.
    pub fn tau(&self) -> f64 {
        self.maturity - self.t
    }
}
