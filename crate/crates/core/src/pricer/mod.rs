//! Indifference and Davis prices, optimal hedges and the utility-induced
//! market price of volatility risk for pure volatility claims.
//!
//! With `g(R) = exp(gamma (1 - rho^2) B(c / R))` and the discounted density
//! `q0` of the shadow rate at maturity,
//!
//! ```text
//! pi    = log( int q0 g / int q0 ) / (gamma (1 - rho^2))
//! davis = int q0 B / int q0
//! ```
//!
//! and the hedge needs `d/dR log int q0 g = int q1 g / int q0 g`.

mod density;
mod surface;

pub use density::{build_densities, DensityPair, FourierGrid, GridConfig};
pub use surface::{linspace, surface, write_quotes_csv, SurfaceRow, SurfaceSpec, CSV_SCHEMA};

use serde::Serialize;

use crate::claims::{RiskAversion, VolClaim};
use crate::error::{Error, Result};
use crate::model::{Model, TildeParams, VolState};
use crate::transform::AffineTransform;

/// Lattice diagnostics attached to a quote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct Diagnostics {
    pub n_points: usize,
    pub du: f64,
    pub dr: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub residual_mass: f64,
    pub residual_mass1: f64,
    pub clipped: usize,
    pub tail: f64,
}

/// Everything the engine reports at one `(t, Y, S, gamma, T)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quote {
    /// Seller's indifference price.
    pub pi: f64,
    pub davis: f64,
    /// Shares held by the optimal hedger facing the claim.
    pub h_claim: f64,
    /// Shares held in the Merton portfolio.
    pub h_merton: f64,
    /// `(h_claim - h_merton) * s`.
    pub excess_dollars: f64,
    pub lambda1: f64,
    /// Claim-dependent volatility risk premium.
    pub lambda2: f64,
    /// `Psi(0)`.
    pub bond: f64,
    pub diagnostics: Diagnostics,
}

/// Both market-price-of-risk components plus the closed-form comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketPriceOfRisk {
    pub lambda1: f64,
    pub lambda2: f64,
    /// `beta / (Delta sqrt 2) (1 - e^{-Delta tau}) (mu - r) / sqrt(y)`.
    pub lambda2_closed: f64,
    /// `|lambda2 - lambda2_closed| / |lambda2_closed|`, claim-free case only.
    pub rel_gap: f64,
}

/// Transform-inversion pricer for one parameter set.
#[derive(Debug, Clone, Copy)]
pub struct Pricer {
    pub model: Model,
    pub transform: AffineTransform,
    pub grid: GridConfig,
}

impl Pricer {
    pub fn new(model: Model) -> Self {
        Pricer {
            model,
            transform: AffineTransform::new(&model),
            grid: GridConfig::default(),
        }
    }

    pub fn with_grid(mut self, grid: GridConfig) -> Self {
        self.grid = grid;
        self
    }

    pub fn reference() -> Self {
        Pricer::new(Model::reference())
    }

    pub fn densities(&self, state: &VolState) -> Result<DensityPair> {
        build_densities(&self.transform, state.r_shadow, state.tau(), &self.grid)
    }

    /// Full quote; `tau = 0` is evaluated from the payoff directly.
    pub fn quote(&self, claim: &VolClaim, ra: &RiskAversion, state: &VolState) -> Result<Quote> {
        if state.tau() <= 0.0 {
            return Ok(self.terminal_quote(claim, ra, state));
        }
        let dp = self.densities(state)?;
        self.quote_with(claim, ra, state, &dp)
    }

    /// Quote from a prebuilt density pair (which must belong to `state`).
    pub fn quote_with(
        &self,
        claim: &VolClaim,
        ra: &RiskAversion,
        state: &VolState,
        dp: &DensityPair,
    ) -> Result<Quote> {
        let tp = &self.model.tilde;
        let tilt = TiltIntegrals::new(claim, ra, tp, dp)?;
        let pi = tilt.log_ratio() / ra.gamma_eff;
        let davis = price_davis(claim, tp, dp);
        let excess_ratio = tilt.ratio() - dp.mass1 / dp.mass0;
        Ok(self.assemble(pi, davis, excess_ratio, dp.n0, dp.bond, ra, state, diagnostics(dp)))
    }

    fn terminal_quote(&self, claim: &VolClaim, ra: &RiskAversion, state: &VolState) -> Quote {
        let b = claim.payoff(state.y);
        // d/dR log g = gamma_eff B'(y) dy/dR, dy/dR = -y / R
        let excess_ratio = ra.gamma_eff * claim.payoff_slope(state.y) * (-state.y / state.r_shadow);
        self.assemble(b, b, excess_ratio, 0.0, 1.0, ra, state, Diagnostics::default())
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        pi: f64,
        davis: f64,
        excess_ratio: f64,
        n0: f64,
        bond: f64,
        ra: &RiskAversion,
        state: &VolState,
        diagnostics: Diagnostics,
    ) -> Quote {
        let p = &self.model.params;
        let h_merton = merton_from_n0(&self.model, ra, state, n0);
        let h_claim = h_merton + hedge_scale(&self.model, ra, state) * excess_ratio;
        let lambda1 = p.excess_return() / state.y.sqrt();
        let lambda2 = lambda2_from_ratio(&self.model, state, n0 + excess_ratio);
        Quote {
            pi,
            davis,
            h_claim,
            h_merton,
            excess_dollars: (h_claim - h_merton) * state.s,
            lambda1,
            lambda2,
            bond,
            diagnostics,
        }
    }
}

fn diagnostics(dp: &DensityPair) -> Diagnostics {
    Diagnostics {
        n_points: dp.grid.n_points,
        du: dp.grid.du,
        dr: dp.grid.dr,
        r_min: dp.grid.r_min,
        r_max: dp.grid.r_max,
        residual_mass: dp.residual_mass,
        residual_mass1: dp.residual_mass1,
        clipped: dp.clipped,
        tail: dp.tail,
    }
}

/// `int q0 g` and `int q1 g` for one claim and risk aversion.
#[derive(Debug, Clone, Copy)]
struct TiltIntegrals {
    i0: f64,
    i1: f64,
    mass0: f64,
}

impl TiltIntegrals {
    fn new(claim: &VolClaim, ra: &RiskAversion, tp: &TildeParams, dp: &DensityPair) -> Result<Self> {
        let kinks = claim.kinks_in_rate(tp);
        let (i0, i1) = dp.integrate(|r| claim.g_of_rate(ra, tp, r), &kinks);
        if !(i0 > 0.0) {
            return Err(Error::NonPositiveIntegral(i0));
        }
        Ok(TiltIntegrals {
            i0,
            i1,
            mass0: dp.mass0,
        })
    }

    fn log_ratio(&self) -> f64 {
        (self.i0 / self.mass0).ln()
    }

    /// `d/dR log I`.
    fn ratio(&self) -> f64 {
        self.i1 / self.i0
    }
}

/// Indifference price `log(I / Psi(0)) / (gamma (1 - rho^2))`, with `Psi(0)`
/// taken as the lattice mass of `q0` so the price is an exact weighted
/// log-mean-exp of the payoff.
pub fn price_indifference(
    claim: &VolClaim,
    ra: &RiskAversion,
    tp: &TildeParams,
    dp: &DensityPair,
) -> Result<f64> {
    Ok(TiltIntegrals::new(claim, ra, tp, dp)?.log_ratio() / ra.gamma_eff)
}

/// Davis price: the zero-risk-aversion limit `int q0 B / int q0`.
pub fn price_davis(claim: &VolClaim, tp: &TildeParams, dp: &DensityPair) -> f64 {
    let kinks = claim.kinks_in_rate(tp);
    let (b0, _) = dp.integrate(|r| claim.payoff_at_rate(r, tp), &kinks);
    b0 / dp.mass0
}

/// `|mu - r| beta rho / (gamma s y sqrt(2 (1 - rho^2)))`: converts
/// `d/dR log I` into shares.
fn hedge_scale(model: &Model, ra: &RiskAversion, state: &VolState) -> f64 {
    let p = &model.params;
    let coupling = p.beta * p.rho / (2.0 * (1.0 - p.rho * p.rho)).sqrt();
    p.excess_return().abs() * coupling / (ra.gamma * state.s * state.y)
}

fn merton_from_n0(model: &Model, ra: &RiskAversion, state: &VolState, n0: f64) -> f64 {
    let p = &model.params;
    p.excess_return() / (ra.gamma * state.s * state.y) + hedge_scale(model, ra, state) * n0
}

/// Shares held in the Merton portfolio; closed form in `N(0, tau)`.
pub fn merton_shares(model: &Model, tr: &AffineTransform, ra: &RiskAversion, state: &VolState) -> f64 {
    merton_from_n0(model, ra, state, tr.n0(state.tau()))
}

/// Shares held by the optimal hedger of `claim`.
pub fn hedge_shares(
    model: &Model,
    claim: &VolClaim,
    ra: &RiskAversion,
    state: &VolState,
    dp: &DensityPair,
) -> Result<f64> {
    let tilt = TiltIntegrals::new(claim, ra, &model.tilde, dp)?;
    let excess = tilt.ratio() - dp.mass1 / dp.mass0;
    Ok(merton_from_n0(model, ra, state, dp.n0) + hedge_scale(model, ra, state) * excess)
}

/// `lambda2 = -(beta / sqrt 2) |mu - r| / sqrt(y) * d/dR log f`.
fn lambda2_from_ratio(model: &Model, state: &VolState, ratio: f64) -> f64 {
    let p = &model.params;
    let v = -(p.beta / std::f64::consts::SQRT_2) * p.excess_return().abs() / state.y.sqrt() * ratio;
    // no negative zero at expiry
    v + 0.0
}

/// Closed-form claim-free `lambda2`, exact only when `alpha~ = Delta`.
pub fn lambda2_closed_form(model: &Model, tr: &AffineTransform, state: &VolState) -> f64 {
    lambda2_closed_raw(tr, model.params.excess_return(), state.y, state.tau())
}

fn lambda2_closed_raw(tr: &AffineTransform, excess_return: f64, y: f64, tau: f64) -> f64 {
    let d = tr.consts.delta;
    tr.beta / (d * std::f64::consts::SQRT_2) * (1.0 - (-d * tau).exp()) * excess_return / y.sqrt()
}

/// Relative gap between the general claim-free `lambda2` (via `N(0)`) and
/// the closed form, for raw pricing-measure inputs.
pub fn lambda2_gap(alpha_tilde: f64, beta: f64, tau: f64) -> f64 {
    let tr = AffineTransform::from_raw(alpha_tilde, 1.0, beta);
    // both sides scale with |mu - r| / sqrt(y); set that factor to one
    let general = -(beta / std::f64::consts::SQRT_2) * tr.n0(tau);
    let closed = lambda2_closed_raw(&tr, 1.0, 1.0, tau);
    ((general - closed) / closed).abs()
}

/// Market price of risk. With `claim = None` this is the claim-free
/// (Merton-dual) premium computed from `N(0)`; with a claim it uses the
/// tilted density ratio.
pub fn market_price_of_risk(
    pricer: &Pricer,
    claim: Option<(&VolClaim, &RiskAversion, &DensityPair)>,
    state: &VolState,
) -> Result<MarketPriceOfRisk> {
    let model = &pricer.model;
    let tr = &pricer.transform;
    let tau = state.tau();
    let n0 = tr.n0(tau);
    let ratio = match claim {
        None => n0,
        Some((claim, ra, dp)) => {
            let tilt = TiltIntegrals::new(claim, ra, &model.tilde, dp)?;
            n0 + tilt.ratio() - dp.mass1 / dp.mass0
        }
    };
    let lambda2 = lambda2_from_ratio(model, state, ratio);
    let lambda2_closed = lambda2_closed_form(model, tr, state);
    let rel_gap = if claim.is_none() && lambda2_closed != 0.0 {
        ((lambda2 - lambda2_closed) / lambda2_closed).abs()
    } else {
        0.0
    };
    Ok(MarketPriceOfRisk {
        lambda1: model.params.excess_return() / state.y.sqrt(),
        lambda2,
        lambda2_closed,
        rel_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use approx::assert_relative_eq;

    fn setup() -> (Pricer, VolState, RiskAversion) {
        let pricer = Pricer::reference();
        let state = pricer.model.state(0.0, 1.0, 0.15, 1.0).unwrap();
        let ra = RiskAversion::new(1.0, pricer.model.params.rho).unwrap();
        (pricer, state, ra)
    }

    #[test]
    fn zero_claim_is_merton() {
        let (pricer, state, ra) = setup();
        let q = pricer.quote(&VolClaim::zero(), &ra, &state).unwrap();
        assert_eq!(q.pi, 0.0);
        assert_eq!(q.davis, 0.0);
        assert_eq!(q.h_claim, q.h_merton);
        assert_eq!(q.excess_dollars, 0.0);
        let closed = merton_shares(&pricer.model, &pricer.transform, &ra, &state);
        assert_relative_eq!(q.h_merton, closed, max_relative = 1e-14);
    }

    #[test]
    fn constant_claim_cash_invariance() {
        let (pricer, state, ra) = setup();
        let dp = pricer.densities(&state).unwrap();
        let tp = &pricer.model.tilde;
        let k = VolClaim::constant(0.1).unwrap();
        for gamma in [0.03, 1.0, 30.0] {
            let ra = RiskAversion::new(gamma, 0.5).unwrap();
            assert!((price_indifference(&k, &ra, tp, &dp).unwrap() - 0.1).abs() < 1e-8);
        }
        assert!((price_davis(&k, tp, &dp) - 0.1).abs() < 1e-12);
        let q = pricer.quote_with(&k, &ra, &state, &dp).unwrap();
        assert!((q.h_claim - q.h_merton).abs() < 1e-12 * q.h_merton.abs());

        let put = VolClaim::put(0.15).unwrap();
        let base = price_indifference(&put, &ra, tp, &dp).unwrap();
        for shift in [-0.05, 0.02, 0.1] {
            let shifted = price_indifference(&put.plus(shift), &ra, tp, &dp).unwrap();
            assert!((shifted - base - shift).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_correlation_hedge_is_merton() {
        let model = Model::new(ModelParams {
            rho: 0.0,
            ..ModelParams::reference()
        })
        .unwrap();
        let pricer = Pricer::new(model);
        let state = model.state(0.0, 1.0, 0.15, 1.0).unwrap();
        let ra = RiskAversion::new(1.0, 0.0).unwrap();
        let q = pricer.quote(&VolClaim::put(0.15).unwrap(), &ra, &state).unwrap();
        assert_relative_eq!(q.h_claim, 0.02 / 0.15, max_relative = 1e-14);
        assert_relative_eq!(q.h_merton, 0.02 / 0.15, max_relative = 1e-14);
        // incompleteness survives zero correlation
        assert!(q.pi - q.davis > 1e-6);
    }

    #[test]
    fn merton_limits_and_scaling() {
        let (pricer, state, ra) = setup();
        let m = &pricer.model;
        let tr = &pricer.transform;
        let at_expiry = m.state(1.0, 1.0, 0.15, 1.0).unwrap();
        assert_relative_eq!(
            merton_shares(m, tr, &ra, &at_expiry),
            0.02 / 0.15,
            max_relative = 1e-14
        );
        let ra2 = RiskAversion::new(2.0, 0.5).unwrap();
        assert_eq!(
            merton_shares(m, tr, &ra2, &state),
            merton_shares(m, tr, &ra, &state) / 2.0
        );
    }

    #[test]
    fn market_price_of_risk_examples() {
        let (pricer, _, _) = setup();
        let st = pricer.model.state(0.0, 1.0, 0.04, 1.0).unwrap();
        let mpr = market_price_of_risk(&pricer, None, &st).unwrap();
        assert_relative_eq!(mpr.lambda1, 0.1, max_relative = 1e-14);
        assert!(mpr.rel_gap < 1e-3);
        assert!(mpr.lambda2 > 0.0 && mpr.lambda2 < mpr.lambda1);

        let end = pricer.model.state(1.0, 1.0, 0.04, 1.0).unwrap();
        let mpr = market_price_of_risk(&pricer, None, &end).unwrap();
        assert_eq!(mpr.lambda2, 0.0);
        assert_eq!(mpr.lambda2_closed, 0.0);
    }

    #[test]
    fn lambda2_gap_grows_with_beta() {
        let g: Vec<f64> = [0.04, 0.4, 2.0].iter().map(|&b| lambda2_gap(5.0326599, b, 1.0)).collect();
        assert!(g[0] < 1e-3);
        assert!(g[0] < g[1] && g[1] < g[2]);
    }

    #[test]
    fn quote_is_deterministic() {
        let (pricer, state, ra) = setup();
        let put = VolClaim::put(0.15).unwrap();
        let a = pricer.quote(&put, &ra, &state).unwrap();
        let b = pricer.quote(&put, &ra, &state).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn terminal_quote_is_payoff() {
        let (pricer, _, ra) = setup();
        let put = VolClaim::put(0.15).unwrap();
        let st = pricer.model.state(1.0, 1.0, 0.1, 1.0).unwrap();
        let q = pricer.quote(&put, &ra, &st).unwrap();
        assert_relative_eq!(q.pi, 0.05, max_relative = 1e-14);
        assert_eq!(q.pi, q.davis);
    }
}
