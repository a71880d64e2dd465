use thiserror::Error;

/// Errors raised by the pricing engine.
///
/// Variants split into two families: input validation (bad parameters,
/// malformed claim or config text) and numerical failures (grid too coarse,
/// corrupted quadrature). The CLI maps them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("correlation must satisfy |rho| < 1, got rho = {0}")]
    Correlation(f64),

    #[error("mu must differ from r (mu = r = {0}): the volatility/shadow-rate map degenerates")]
    DegenerateDrift(f64),

    #[error("parameter `{name}` must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("parameter `{name}` must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error(
        "measure change inverts mean reversion: alpha_tilde = {alpha_tilde} <= 0 \
         (alpha = {alpha}, beta*rho*sqrt(2/(1-rho^2)) too negative)"
    )]
    MeanReversionInverted { alpha: f64, alpha_tilde: f64 },

    #[error(
        "Feller condition 4*alpha_tilde*kappa_tilde > beta^2 violated: \
         4*{alpha_tilde}*{kappa_tilde} = {lhs} <= {rhs}"
    )]
    Feller {
        alpha_tilde: f64,
        kappa_tilde: f64,
        lhs: f64,
        rhs: f64,
    },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error(
        "claim `{0}` is unbounded above; such claims have an expected utility of \
         negative infinity in this model and cannot be priced"
    )]
    UnboundedClaim(String),

    #[error("invalid claim: {0}")]
    InvalidClaim(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid grid spec: {0}")]
    GridSpec(String),

    #[error("simulation spec: {0}")]
    SimSpec(String),

    #[error(
        "transform tail too heavy: |psi({u:.4e})| = {value:.3e} exceeds {tol:.0e}; \
         increase u_max (more lattice points)"
    )]
    TailDecay { u: f64, value: f64, tol: f64 },

    #[error(
        "rate window [{r_min:.4e}, {r_max:.4e}] misses discounted mass \
         (edge fraction {edge_fraction:.3e}); increase R_max"
    )]
    MassCoverage {
        r_min: f64,
        r_max: f64,
        edge_fraction: f64,
    },

    #[error("lattice mass {lattice:.12e} deviates from {target:.12e} (relative {rel:.3e} > {tol:.0e})")]
    MassMismatch {
        lattice: f64,
        target: f64,
        rel: f64,
        tol: f64,
    },

    #[error("discounted density negative beyond tolerance: min {min:.3e} vs peak {peak:.3e}")]
    NegativeDensity { min: f64, peak: f64 },

    #[error("transform integral I = {0:e} is not positive; lattice is corrupted")]
    NonPositiveIntegral(f64),

    #[error("N(u) denominator vanished at u = {u}, tau = {tau}")]
    VanishingDenominator { u: f64, tau: f64 },

    #[error("branch tracking failed: phase increment {jump:.3} at u = {u:.4e} is too large for the lattice")]
    BranchTracking { u: f64, jump: f64 },

    #[error("PDE solution left the maximum-principle envelope ({0}); refine the time grid")]
    Oscillation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Correlation(_)
                | Error::DegenerateDrift(_)
                | Error::NonPositive { .. }
                | Error::NonFinite { .. }
                | Error::MeanReversionInverted { .. }
                | Error::Feller { .. }
                | Error::InvalidState(_)
                | Error::UnboundedClaim(_)
                | Error::InvalidClaim(_)
                | Error::Config(_)
                | Error::GridSpec(_)
                | Error::SimSpec(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
