//! Fourier inversion of the discounted transform into the discounted
//! terminal density `q0` of `R_T` and its sensitivity `q1 = dq0/dR_t`.
//!
//! Both inversions share one complex FFT: `Psi` and `Psi * N` are Hermitian
//! in `u`, so their inverses are real and can be packed as the real and
//! imaginary parts of a single transform.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::transform::{cir_moments, AffineTransform};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Tolerances and sizing rules for the inversion lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    /// Lattice size, a power of two.
    pub n_points: usize,
    /// Maximum `|Psi|` accepted at the Nyquist frequency `u_max / 2`.
    pub tail_tol: f64,
    /// Rate window below the conditional mean, in standard deviations.
    pub sd_below: f64,
    /// Rate window above the conditional mean, in standard deviations.
    pub sd_above: f64,
    /// Negative density values above `-neg_tol * peak` are clipped to zero.
    pub neg_tol: f64,
    /// Largest mass fraction allowed in the outer 2% of the window.
    pub edge_tol: f64,
    /// Relative tolerance of `int q0` against `Psi(0)`.
    pub mass_tol: f64,
    /// Relative tolerance of `int q1` against `N(0) Psi(0)`.
    pub mass1_tol: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_points: 1 << 12,
            tail_tol: 1e-10,
            sd_below: 10.0,
            sd_above: 16.0,
            neg_tol: 1e-8,
            edge_tol: 1e-8,
            mass_tol: 1e-6,
            mass1_tol: 1e-5,
        }
    }
}

impl GridConfig {
    pub fn with_points(n_points: usize) -> Result<Self> {
        if n_points < 16 || !n_points.is_power_of_two() {
            return Err(Error::GridSpec(format!(
                "FFT size must be a power of two >= 16, got {n_points}"
            )));
        }
        Ok(GridConfig {
            n_points,
            ..GridConfig::default()
        })
    }
}

/// Dual lattices with `dr * du = 2 pi / n_points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierGrid {
    pub n_points: usize,
    pub du: f64,
    pub dr: f64,
    /// `n_points * du`; sampled frequencies cover `[-u_max/2, u_max/2)`.
    pub u_max: f64,
    /// Left edge of the rate window.
    pub r_min: f64,
    /// `r_min + n_points * dr`.
    pub r_max: f64,
}

impl FourierGrid {
    /// Sizes the rate window from the pricing-measure conditional moments of
    /// `R_T`; the frequency lattice follows from `dr du = 2 pi / n`.
    pub fn for_rate(tr: &AffineTransform, rate: f64, tau: f64, cfg: &GridConfig) -> Self {
        let kappa_tilde = tr.alpha_kappa / tr.alpha_tilde;
        let (mean, var) = cir_moments(tr.alpha_tilde, kappa_tilde, tr.beta, rate, tau);
        let sd = var.sqrt();
        let lo = (mean - cfg.sd_below * sd).max(0.0);
        let hi = mean + cfg.sd_above * sd;
        let width = (hi - lo).max(1e-12 * mean.max(f64::MIN_POSITIVE));
        let n = cfg.n_points;
        let dr = width / n as f64;
        let du = 2.0 * PI / (n as f64 * dr);
        FourierGrid {
            n_points: n,
            du,
            dr,
            u_max: n as f64 * du,
            r_min: lo,
            r_max: lo + n as f64 * dr,
        }
    }

    pub fn rate(&self, j: usize) -> f64 {
        self.r_min + j as f64 * self.dr
    }
}

/// Discounted density `q0` and its rate sensitivity `q1` on the rate lattice.
#[derive(Debug, Clone)]
pub struct DensityPair {
    pub grid: FourierGrid,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
    /// Trapezoid mass of `q0`.
    pub mass0: f64,
    /// Trapezoid mass of `q1`.
    pub mass1: f64,
    /// `Psi(0)`, the analytic bond.
    pub bond: f64,
    /// `N(0, tau)`.
    pub n0: f64,
    /// `|mass0 - Psi(0)| / Psi(0)`.
    pub residual_mass: f64,
    /// `|mass1 - N(0) Psi(0)| / |N(0) Psi(0)|` (zero when `N(0) = 0`).
    pub residual_mass1: f64,
    /// Number of slightly negative `q0` values clipped to zero.
    pub clipped: usize,
    /// `|Psi|` at the Nyquist frequency.
    pub tail: f64,
}

/// Inverts the transform at shadow rate `rate` and horizon `tau > 0`.
pub fn build_densities(
    tr: &AffineTransform,
    rate: f64,
    tau: f64,
    cfg: &GridConfig,
) -> Result<DensityPair> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidState(format!(
            "density lattice needs tau > 0, got {tau}"
        )));
    }
    let grid = FourierGrid::for_rate(tr, rate, tau, cfg);
    let n = grid.n_points;
    let half = n / 2;
    let evals = tr.eval_lattice(grid.du, half + 1, rate, tau)?;

    let tail = evals[half].psi.norm();
    if !(tail < cfg.tail_tol) {
        return Err(Error::TailDecay {
            u: half as f64 * grid.du,
            value: tail,
            tol: cfg.tail_tol,
        });
    }

    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (k, ev) in evals.iter().enumerate() {
        let shift = Complex64::from_polar(1.0, k as f64 * grid.du * grid.r_min);
        let a = ev.psi * shift;
        let b = ev.psi * ev.n * shift;
        if k == half {
            buf[k] = Complex64::new(a.re, b.re);
        } else {
            buf[k] = a + Complex64::i() * b;
            if k > 0 {
                buf[n - k] = a.conj() + Complex64::i() * b.conj();
            }
        }
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut buf));

    let scale = grid.du / (2.0 * PI);
    let mut q0: Vec<f64> = buf.iter().map(|c| c.re * scale).collect();
    let q1: Vec<f64> = buf.iter().map(|c| c.im * scale).collect();

    let peak = q0.iter().copied().fold(0.0, f64::max);
    let min = q0.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -cfg.neg_tol * peak {
        return Err(Error::NegativeDensity { min, peak });
    }
    let mut clipped = 0;
    for v in q0.iter_mut().filter(|v| **v < 0.0) {
        *v = 0.0;
        clipped += 1;
    }

    // a window clamped at R = 0 truncates nothing on the left
    let margin = (n / 50).max(1);
    let left = if grid.r_min > 0.0 { &q0[..margin] } else { &q0[..0] };
    let edge: f64 = left.iter().chain(&q0[n - margin..]).sum::<f64>();
    let total: f64 = q0.iter().sum();
    let edge_fraction = edge / total;
    if !(edge_fraction <= cfg.edge_tol) {
        return Err(Error::MassCoverage {
            r_min: grid.r_min,
            r_max: grid.r_max,
            edge_fraction,
        });
    }

    let bond = evals[0].psi.re;
    let n0 = evals[0].n.re;
    let mass0 = trapezoid(&q0, grid.dr);
    let mass1 = trapezoid(&q1, grid.dr);
    let residual_mass = ((mass0 - bond) / bond).abs();
    if !(residual_mass <= cfg.mass_tol) {
        return Err(Error::MassMismatch {
            lattice: mass0,
            target: bond,
            rel: residual_mass,
            tol: cfg.mass_tol,
        });
    }
    let target1 = n0 * bond;
    let residual_mass1 = if target1 != 0.0 {
        ((mass1 - target1) / target1).abs()
    } else {
        0.0
    };
    if !(residual_mass1 <= cfg.mass1_tol) {
        return Err(Error::MassMismatch {
            lattice: mass1,
            target: target1,
            rel: residual_mass1,
            tol: cfg.mass1_tol,
        });
    }

    Ok(DensityPair {
        grid,
        q0,
        q1,
        mass0,
        mass1,
        bond,
        n0,
        residual_mass,
        residual_mass1,
        clipped,
        tail,
    })
}

/// Same summation order as `DensityPair::integrate`, so integrating a
/// constant reproduces the mass bit for bit.
fn trapezoid(q: &[f64], dr: f64) -> f64 {
    let n = q.len();
    let mut s = 0.0;
    for (j, &v) in q.iter().enumerate() {
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        s += w * v;
    }
    s * dr
}

impl DensityPair {
    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.grid.n_points).map(|j| self.grid.rate(j))
    }

    /// `(int q0 h dR, int q1 h dR)` by the trapezoid rule, with every lattice
    /// cell that contains a kink of `h` split at the kink (`q` interpolated
    /// linearly inside the cell).
    pub fn integrate<F: Fn(f64) -> f64>(&self, h: F, kinks: &[f64]) -> (f64, f64) {
        let g = &self.grid;
        let n = g.n_points;
        let hv: Vec<f64> = self.rates().map(&h).collect();
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for j in 0..n {
            let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            s0 += w * self.q0[j] * hv[j];
            s1 += w * self.q1[j] * hv[j];
        }
        s0 *= g.dr;
        s1 *= g.dr;

        let mut kinks: Vec<f64> = kinks
            .iter()
            .copied()
            .filter(|&x| x > g.r_min && x < g.rate(n - 1))
            .collect();
        kinks.sort_by(f64::total_cmp);
        kinks.dedup();
        let mut k = 0;
        while k < kinks.len() {
            let j = (((kinks[k] - g.r_min) / g.dr).floor() as usize).min(n - 2);
            let (a, b) = (g.rate(j), g.rate(j + 1));
            // every kink inside this cell
            let mut pts = vec![a];
            let first = k;
            while k < kinks.len() && kinks[k] < b {
                if kinks[k] > a {
                    pts.push(kinks[k]);
                }
                k += 1;
            }
            if k == first {
                // rounding put the kink on the far node
                k += 1;
                continue;
            }
            if pts.len() == 1 {
                continue;
            }
            pts.push(b);
            let coarse0 = 0.5 * g.dr * (self.q0[j] * hv[j] + self.q0[j + 1] * hv[j + 1]);
            let coarse1 = 0.5 * g.dr * (self.q1[j] * hv[j] + self.q1[j + 1] * hv[j + 1]);
            let interp = |q: &[f64], x: f64| {
                let t = (x - a) / g.dr;
                q[j] * (1.0 - t) + q[j + 1] * t
            };
            let val = |x: f64, i: usize| {
                if i == 0 {
                    hv[j]
                } else if i == pts.len() - 1 {
                    hv[j + 1]
                } else {
                    h(x)
                }
            };
            let mut fine0 = 0.0;
            let mut fine1 = 0.0;
            for i in 0..pts.len() - 1 {
                let (x0, x1) = (pts[i], pts[i + 1]);
                let (h0, h1) = (val(x0, i), val(x1, i + 1));
                fine0 += 0.5 * (x1 - x0) * (interp(&self.q0, x0) * h0 + interp(&self.q0, x1) * h1);
                fine1 += 0.5 * (x1 - x0) * (interp(&self.q1, x0) * h0 + interp(&self.q1, x1) * h1);
            }
            s0 += fine0 - coarse0;
            s1 += fine1 - coarse1;
        }
        (s0, s1)
    }
}
