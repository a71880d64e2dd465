//! Monte Carlo simulation of the shadow rate and Monte Carlo prices.
//!
//! Every path owns a ChaCha8 stream selected by its index, and partial sums
//! are merged in a fixed order, so estimates are bit-reproducible for a
//! given seed regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::claims::{RiskAversion, VolClaim};
use crate::error::{Error, Result};
use crate::model::{Model, VolState};

/// Paths per parallel work unit.
const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scheme {
    /// Noncentral chi-square transition; exact at any step size.
    ExactTransition,
    /// Euler with `max(R, 0)` inside drift and diffusion.
    FullTruncationEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Measure {
    /// Economic measure: `(alpha, kappa, beta)`.
    P,
    /// Pricing measure: `(alpha~, kappa~, beta)`.
    PTilde,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimSpec {
    pub n_paths: usize,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub measure: Measure,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64) -> Self {
        SimSpec {
            n_paths,
            n_steps,
            scheme: Scheme::ExactTransition,
            measure: Measure::PTilde,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::SimSpec("n_paths must be at least 1".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::SimSpec("n_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Square-root process `dR = a (k - R) dt + b sqrt(R) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CirParams {
    pub a: f64,
    pub k: f64,
    pub b: f64,
}

impl CirParams {
    pub fn under(model: &Model, measure: Measure) -> Self {
        match measure {
            Measure::P => CirParams {
                a: model.params.alpha,
                k: model.params.kappa,
                b: model.params.beta,
            },
            Measure::PTilde => CirParams {
                a: model.tilde.alpha_tilde,
                k: model.tilde.kappa_tilde,
                b: model.params.beta,
            },
        }
    }

    /// Degrees of freedom `4 a k / b^2` of the transition law.
    pub fn dof(&self) -> f64 {
        4.0 * self.a * self.k / (self.b * self.b)
    }

    /// Conditional mean and variance of `R_{t+dt}` given `R_t = r`.
    pub fn moments(&self, r: f64, dt: f64) -> (f64, f64) {
        crate::transform::cir_moments(self.a, self.k, self.b, r, dt)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("k", self.k), ("b", self.b)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonPositive { name, value: v });
            }
        }
        Ok(())
    }
}

/// One-step transition sampler for a fixed step size.
#[derive(Debug, Clone)]
pub struct CirStepper {
    cir: CirParams,
    dt: f64,
    scheme: Scheme,
    decay: f64,
    /// Scale of the noncentral chi-square transition.
    scale: f64,
    dof: f64,
    chi_rest: Option<ChiSquared<f64>>,
    sqrt_dt: f64,
}

impl CirStepper {
    pub fn new(cir: CirParams, dt: f64, scheme: Scheme) -> Result<Self> {
        cir.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::SimSpec(format!("step size must be positive, got {dt}")));
        }
        let decay = (-cir.a * dt).exp();
        let scale = cir.b * cir.b * (-(-cir.a * dt).exp_m1()) / (4.0 * cir.a);
        let dof = cir.dof();
        let chi_rest = if dof > 1.0 {
            Some(ChiSquared::new(dof - 1.0).map_err(|e| Error::SimSpec(e.to_string()))?)
        } else {
            None
        };
        Ok(CirStepper {
            cir,
            dt,
            scheme,
            decay,
            scale,
            dof,
            chi_rest,
            sqrt_dt: dt.sqrt(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step<R: Rng + ?Sized>(&self, r: f64, rng: &mut R) -> f64 {
        match self.scheme {
            Scheme::ExactTransition => self.exact(r, rng),
            Scheme::FullTruncationEuler => {
                let rp = r.max(0.0);
                let z: f64 = rng.sample(StandardNormal);
                r + self.cir.a * (self.cir.k - rp) * self.dt + self.cir.b * (rp.sqrt() * self.sqrt_dt) * z
            }
        }
    }

    fn exact<R: Rng + ?Sized>(&self, r: f64, rng: &mut R) -> f64 {
        let lambda = r.max(0.0) * self.decay / self.scale;
        let x = match &self.chi_rest {
            Some(rest) => {
                let z: f64 = rng.sample(StandardNormal);
                let shifted = z + lambda.sqrt();
                shifted * shifted + rest.sample(rng)
            }
            None => {
                let mix = if lambda > 0.0 {
                    Poisson::new(0.5 * lambda).map(|p| p.sample(rng)).unwrap_or(0.0)
                } else {
                    0.0
                };
                let shape = 0.5 * self.dof + mix;
                Gamma::new(shape, 2.0).map(|g| g.sample(rng)).unwrap_or(0.0)
            }
        };
        self.scale * x
    }
}

/// Generator for the path with index `path`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Simulated paths on an equally spaced time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub times: Vec<f64>,
    /// `paths[i][j]` is path `i` at `times[j]`.
    pub paths: Vec<Vec<f64>>,
    /// Steps that ended at `R <= 0` (Euler only).
    pub zero_touches: usize,
}

/// Simulates `spec.n_paths` paths of `cir` from `r0` over `[0, horizon]`.
pub fn simulate_cir(spec: &SimSpec, cir: CirParams, r0: f64, horizon: f64) -> Result<PathSet> {
    spec.validate()?;
    check_start(r0, horizon)?;
    let dt = horizon / spec.n_steps as f64;
    let stepper = CirStepper::new(cir, dt, spec.scheme)?;
    let paths: Vec<Vec<f64>> = (0..spec.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(spec.seed, i as u64);
            let mut out = Vec::with_capacity(spec.n_steps + 1);
            let mut r = r0;
            out.push(r);
            for _ in 0..spec.n_steps {
                r = stepper.step(r, &mut rng);
                out.push(r);
            }
            out
        })
        .collect();
    let zero_touches = paths
        .iter()
        .map(|p| p[1..].iter().filter(|&&r| r <= 0.0).count())
        .sum();
    let times = (0..=spec.n_steps).map(|j| j as f64 * dt).collect();
    Ok(PathSet {
        times,
        paths,
        zero_touches,
    })
}

fn check_start(r0: f64, horizon: f64) -> Result<()> {
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(Error::NonPositive {
            name: "R0",
            value: r0,
        });
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::NonPositive {
            name: "horizon",
            value: horizon,
        });
    }
    Ok(())
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_effective: f64,
}

/// Streaming means and co-moments of a fixed-size vector of observables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<const K: usize> {
    pub n: f64,
    pub mean: [f64; K],
    /// Sums of centred cross products.
    pub co: [[f64; K]; K],
}

impl<const K: usize> Default for Moments<K> {
    fn default() -> Self {
        Moments {
            n: 0.0,
            mean: [0.0; K],
            co: [[0.0; K]; K],
        }
    }
}

impl<const K: usize> Moments<K> {
    pub fn push(&mut self, x: [f64; K]) {
        self.n += 1.0;
        let mut d = [0.0; K];
        for i in 0..K {
            d[i] = x[i] - self.mean[i];
            self.mean[i] += d[i] / self.n;
        }
        for i in 0..K {
            for j in 0..K {
                self.co[i][j] += d[i] * (x[j] - self.mean[j]);
            }
        }
    }

    /// Pairwise merge of two disjoint samples.
    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0.0 {
            return *other;
        }
        if other.n == 0.0 {
            return *self;
        }
        let n = self.n + other.n;
        let mut out = Moments {
            n,
            ..Default::default()
        };
        let mut d = [0.0; K];
        for i in 0..K {
            d[i] = other.mean[i] - self.mean[i];
            out.mean[i] = self.mean[i] + d[i] * other.n / n;
        }
        for i in 0..K {
            for j in 0..K {
                out.co[i][j] = self.co[i][j] + other.co[i][j] + d[i] * d[j] * self.n * other.n / n;
            }
        }
        out
    }

    /// Sample covariance of observables `i` and `j`.
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        if self.n > 1.0 {
            self.co[i][j] / (self.n - 1.0)
        } else {
            0.0
        }
    }

    pub fn estimate(&self, i: usize) -> McEstimate {
        McEstimate {
            mean: self.mean[i],
            std_error: (self.cov(i, i).max(0.0) / self.n).sqrt(),
            n_effective: self.n,
        }
    }
}

/// Runs `observe` for every path (in parallel blocks) and merges the
/// per-block moments in block order.
fn accumulate<const K: usize, F>(n_paths: usize, observe: F) -> Moments<K>
where
    F: Fn(u64) -> [f64; K] + Sync,
{
    let n_blocks = n_paths.div_ceil(BLOCK);
    let blocks: Vec<Moments<K>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut m = Moments::default();
            for i in b * BLOCK..((b + 1) * BLOCK).min(n_paths) {
                m.push(observe(i as u64));
            }
            m
        })
        .collect();
    blocks.iter().fold(Moments::default(), |acc, m| acc.merge(m))
}

/// Monte Carlo prices from paired discount and payoff samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McPrice {
    /// `E~[exp(-int R) g(R_T)]`.
    pub i: McEstimate,
    /// `E~[exp(-int R)]`.
    pub bond: McEstimate,
    pub pi: McEstimate,
    pub davis: McEstimate,
}

/// Prices `claim` by simulating the shadow rate under the pricing measure,
/// with the time integral of `R` by the trapezoid rule.
pub fn mc_price(
    model: &Model,
    claim: &VolClaim,
    ra: &RiskAversion,
    state: &VolState,
    spec: &SimSpec,
) -> Result<McPrice> {
    spec.validate()?;
    if spec.measure != Measure::PTilde {
        return Err(Error::SimSpec(
            "Monte Carlo prices are expectations under the pricing measure".into(),
        ));
    }
    let tau = state.tau();
    let r0 = state.r_shadow;
    check_start(r0, tau)?;
    let dt = tau / spec.n_steps as f64;
    let stepper = CirStepper::new(CirParams::under(model, Measure::PTilde), dt, spec.scheme)?;
    let tp = model.tilde;

    let m = accumulate(spec.n_paths, |i| {
        let mut rng = path_rng(spec.seed, i);
        let mut r = r0;
        let mut area = 0.5 * r;
        for _ in 0..spec.n_steps {
            r = stepper.step(r, &mut rng);
            area += r;
        }
        area -= 0.5 * r;
        let disc = (-area * dt).exp();
        let g = claim.g_of_rate(ra, &tp, r);
        let b = claim.payoff_at_rate(r, &tp);
        [disc, disc * g, disc * b]
    });

    let bond = m.estimate(0);
    let i = m.estimate(1);
    if !(i.mean > 0.0) {
        return Err(Error::NonPositiveIntegral(i.mean));
    }
    let n = m.n;
    let (d, dg) = (m.mean[0], m.mean[1]);
    // delta method for log(mean DG / mean D)
    let var_log = m.cov(1, 1) / (dg * dg) + m.cov(0, 0) / (d * d) - 2.0 * m.cov(0, 1) / (dg * d);
    let pi = McEstimate {
        mean: (dg / d).ln() / ra.gamma_eff,
        std_error: (var_log.max(0.0) / n).sqrt() / ra.gamma_eff,
        n_effective: n,
    };
    let davis_mean = m.mean[2] / d;
    // ratio estimator: Var(DB - davis D) / mean(D)^2
    let var_ratio = m.cov(2, 2) - 2.0 * davis_mean * m.cov(0, 2) + davis_mean * davis_mean * m.cov(0, 0);
    let davis = McEstimate {
        mean: davis_mean,
        std_error: (var_ratio.max(0.0) / n).sqrt() / d,
        n_effective: n,
    };
    Ok(McPrice { i, bond, pi, davis })
}

/// Terminal mean and variance of `R_T` with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TerminalMoments {
    pub mean: McEstimate,
    pub variance: McEstimate,
    /// Steps that ended at `R <= 0`, over all paths.
    pub zero_touches: usize,
    /// Smallest terminal value seen.
    pub min: f64,
}

pub fn terminal_moments(spec: &SimSpec, cir: CirParams, r0: f64, horizon: f64) -> Result<TerminalMoments> {
    spec.validate()?;
    check_start(r0, horizon)?;
    let dt = horizon / spec.n_steps as f64;
    let stepper = CirStepper::new(cir, dt, spec.scheme)?;
    let ends: Vec<(f64, usize)> = (0..spec.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(spec.seed, i);
            let mut r = r0;
            let mut touches = 0;
            for _ in 0..spec.n_steps {
                r = stepper.step(r, &mut rng);
                touches += usize::from(r <= 0.0);
            }
            (r, touches)
        })
        .collect();
    let n = ends.len() as f64;
    let mean = ends.iter().map(|e| e.0).sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &(r, _) in &ends {
        let d2 = (r - mean) * (r - mean);
        m2 += d2;
        m4 += d2 * d2;
    }
    let var = m2 / (n - 1.0).max(1.0);
    let (m2, m4) = (m2 / n, m4 / n);
    Ok(TerminalMoments {
        mean: McEstimate {
            mean,
            std_error: (var / n).sqrt(),
            n_effective: n,
        },
        variance: McEstimate {
            mean: var,
            std_error: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
            n_effective: n,
        },
        zero_touches: ends.iter().map(|e| e.1).sum(),
        min: ends.iter().map(|e| e.0).fold(f64::INFINITY, f64::min),
    })
}

/// A single long path with step `dt`, started at `r0`.
pub fn simulate_path(
    cir: CirParams,
    r0: f64,
    dt: f64,
    n_steps: usize,
    scheme: Scheme,
    seed: u64,
) -> Result<Vec<f64>> {
    check_start(r0, dt)?;
    let stepper = CirStepper::new(cir, dt, scheme)?;
    let mut rng = path_rng(seed, 0);
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut r = r0;
    out.push(r);
    for _ in 0..n_steps {
        r = stepper.step(r, &mut rng);
        out.push(r);
    }
    Ok(out)
}

/// Mean of a correlated series with a batch-means standard error.
pub fn batch_means(xs: &[f64], n_batches: usize) -> McEstimate {
    let n_batches = n_batches.clamp(1, xs.len().max(1));
    let size = xs.len() / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let mut m = Moments::<1>::default();
    for &x in &means {
        m.push([x]);
    }
    McEstimate {
        n_effective: n_batches as f64,
        ..m.estimate(0)
    }
}

/// Sample autocorrelation at lags `0..=max_lag`.
pub fn autocorrelation(xs: &[f64], max_lag: usize) -> Vec<f64> {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let c0 = dev.iter().map(|d| d * d).sum::<f64>();
    (0..=max_lag.min(n - 1))
        .map(|lag| dev[..n - lag].iter().zip(&dev[lag..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect()
}

/// Decay time `1/a` from a least-squares fit of `log acf(lag) = -a lag dt`
/// over the lags whose autocorrelation exceeds `floor`.
pub fn decay_time(acf: &[f64], dt: f64, floor: f64) -> f64 {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (lag, &c) in acf.iter().enumerate().skip(1) {
        if c <= floor {
            break;
        }
        let x = lag as f64 * dt;
        sxy += x * c.ln();
        sxx += x * x;
    }
    -sxx / sxy
}
