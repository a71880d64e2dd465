//! Finite-difference solution of the linear pricing equation in the shadow
//! rate,
//!
//! ```text
//! f_tau = a~ (k~ - R) f_R + 0.5 beta^2 R f_RR - R f,   f(0, R) = g(R),
//! ```
//!
//! with a theta scheme (Crank-Nicolson after implicit Rannacher start-up)
//! on a piecewise-uniform mesh that has nodes at `R0` and at every payoff
//! kink.

use serde::Serialize;

use crate::claims::{RiskAversion, VolClaim};
use crate::error::{Error, Result};
use crate::model::{Model, VolState};
use crate::transform::cir_moments;

/// Spatial and temporal resolution of a PDE solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdeGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub n_space: usize,
    pub n_time: usize,
    /// 0.5 is Crank-Nicolson, 1 is fully implicit.
    pub theta: f64,
    /// Leading time steps replaced by two implicit half steps each.
    pub rannacher_steps: usize,
}

impl PdeGrid {
    /// Default mesh for a state: `R_max` clears both the stationary bulk
    /// (`k~ + 12 beta sqrt(k~ / (2 a~))`) and the conditional law of `R_T`.
    pub fn for_state(model: &Model, state: &VolState) -> Self {
        let tp = &model.tilde;
        let beta = model.params.beta;
        let (at, kt) = (tp.alpha_tilde, tp.kappa_tilde);
        let r0 = state.r_shadow;
        let (mean, var) = cir_moments(at, kt, beta, r0, state.tau());
        let stationary = kt + 12.0 * beta * (kt / (2.0 * at)).sqrt();
        let r_max = stationary.max(mean + 16.0 * var.sqrt()).max(2.0 * r0);
        PdeGrid {
            r_min: 1e-3 * kt.min(r0),
            r_max,
            n_space: 2000,
            n_time: 400,
            theta: 0.5,
            rannacher_steps: 2,
        }
    }

    pub fn with_resolution(mut self, n_space: usize, n_time: usize) -> Self {
        self.n_space = n_space;
        self.n_time = n_time;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_max > self.r_min && self.r_max.is_finite()) {
            return Err(Error::GridSpec(format!(
                "PDE interval needs 0 < R_min < R_max, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        if self.n_space < 8 || self.n_time < 1 {
            return Err(Error::GridSpec(format!(
                "PDE grid too small: n_space = {}, n_time = {}",
                self.n_space, self.n_time
            )));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::GridSpec(format!("theta = {} outside [0.5, 1]", self.theta)));
        }
        Ok(())
    }
}

/// Piecewise-uniform nodes on `[lo, hi]` with every breakpoint a node.
fn mesh(lo: f64, hi: f64, breaks: &[f64], n: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = std::iter::once(lo)
        .chain(breaks.iter().copied().filter(|&b| b > lo && b < hi))
        .chain(std::iter::once(hi))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let total = hi - lo;
    let mut nodes = vec![lo];
    for w in pts.windows(2) {
        let cells = ((n as f64 * (w[1] - w[0]) / total).round() as usize).max(2);
        let h = (w[1] - w[0]) / cells as f64;
        for j in 1..cells {
            nodes.push(w[0] + j as f64 * h);
        }
        nodes.push(w[1]);
    }
    nodes
}

/// Tridiagonal rows of the spatial operator for unknowns `0..n-1`; the last
/// node is eliminated by linear extrapolation from its two neighbours.
struct Operator {
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
    /// `f_N = (1 + w) f_{N-1} - w f_{N-2}`.
    w: f64,
}

impl Operator {
    fn new(nodes: &[f64], at: f64, kt: f64, beta: f64) -> Self {
        let n = nodes.len() - 1;
        let mut lo = vec![0.0; n];
        let mut di = vec![0.0; n];
        let mut up = vec![0.0; n];
        // degenerate boundary: no second-order term, upwind drift
        let r = nodes[0];
        let h = nodes[1] - r;
        let mu = at * (kt - r);
        if mu >= 0.0 {
            di[0] = -mu / h - r;
            up[0] = mu / h;
        } else {
            di[0] = -r;
        }
        for i in 1..n {
            let r = nodes[i];
            let (hm, hp) = (r - nodes[i - 1], nodes[i + 1] - r);
            let mu = at * (kt - r);
            let s2 = 0.5 * beta * beta * r;
            let dl = 2.0 * s2 / (hm * (hm + hp));
            let du = 2.0 * s2 / (hp * (hm + hp));
            let dd = -2.0 * s2 / (hm * hp);
            let (cl, cd, cu) = (-mu * hp / (hm * (hm + hp)), mu * (hp - hm) / (hm * hp), mu * hm / (hp * (hm + hp)));
            if dl + cl >= 0.0 && du + cu >= 0.0 {
                lo[i] = dl + cl;
                di[i] = dd + cd - r;
                up[i] = du + cu;
            } else if mu > 0.0 {
                lo[i] = dl;
                di[i] = dd - mu / hp - r;
                up[i] = du + mu / hp;
            } else {
                lo[i] = dl - mu / hm;
                di[i] = dd + mu / hm - r;
                up[i] = du;
            }
        }
        let w = (nodes[n] - nodes[n - 1]) / (nodes[n - 1] - nodes[n - 2]);
        let last = n - 1;
        lo[last] -= up[last] * w;
        di[last] += up[last] * (1.0 + w);
        up[last] = 0.0;
        Operator { lo, di, up, w }
    }

    fn apply(&self, f: &[f64], out: &mut [f64]) {
        let n = self.di.len();
        for i in 0..n {
            let mut v = self.di[i] * f[i];
            if i > 0 {
                v += self.lo[i] * f[i - 1];
            }
            if i + 1 < n {
                v += self.up[i] * f[i + 1];
            }
            out[i] = v;
        }
    }

    /// One theta step of size `dt`, in place on `f[..n]`.
    fn step(&self, f: &mut [f64], dt: f64, theta: f64, scratch: &mut Scratch) {
        let n = self.di.len();
        self.apply(&f[..n], &mut scratch.lf);
        for i in 0..n {
            scratch.rhs[i] = f[i] + (1.0 - theta) * dt * scratch.lf[i];
            scratch.a[i] = -theta * dt * self.lo[i];
            scratch.b[i] = 1.0 - theta * dt * self.di[i];
            scratch.c[i] = -theta * dt * self.up[i];
        }
        thomas(&scratch.a, &scratch.b, &scratch.c, &mut scratch.rhs, &mut scratch.cp);
        f[..n].copy_from_slice(&scratch.rhs);
        f[n] = (1.0 + self.w) * f[n - 1] - self.w * f[n - 2];
    }
}

struct Scratch {
    lf: Vec<f64>,
    rhs: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    cp: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            lf: vec![0.0; n],
            rhs: vec![0.0; n],
            a: vec![0.0; n],
            b: vec![0.0; n],
            c: vec![0.0; n],
            cp: vec![0.0; n],
        }
    }
}

/// Solves `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = d_i`; `d` becomes `x`.
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64], cp: &mut [f64]) {
    let n = d.len();
    cp[0] = c[0] / b[0];
    d[0] /= b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        d[i] = (d[i] - a[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
}

/// Values of `f` and of the bond on the mesh at the valuation time.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub nodes: Vec<f64>,
    pub f: Vec<f64>,
    pub bond: Vec<f64>,
    /// Index of `R0` in `nodes`.
    pub origin: usize,
}

impl PdeSolution {
    /// `d/dR log f` at node `i` by the three-point stencil.
    pub fn log_derivative(&self, i: usize) -> f64 {
        let x = &self.nodes;
        let (hm, hp) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        let df = -hp / (hm * (hm + hp)) * self.f[i - 1]
            + (hp - hm) / (hm * hp) * self.f[i]
            + hm / (hp * (hm + hp)) * self.f[i + 1];
        df / self.f[i]
    }
}

/// PDE price and hedge at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdePrice {
    pub pi: f64,
    /// `f(R0)`.
    pub i: f64,
    pub bond: f64,
    /// `d/dR log f` at `R0`.
    pub log_derivative: f64,
    pub h_claim: f64,
}

/// Integrates the equation for terminal `g` and for the unit bond.
pub fn pde_solve(
    model: &Model,
    claim: &VolClaim,
    ra: &RiskAversion,
    state: &VolState,
    grid: &PdeGrid,
) -> Result<PdeSolution> {
    grid.validate()?;
    let tp = &model.tilde;
    let tau = state.tau();
    if !(tau > 0.0) {
        return Err(Error::InvalidState(format!("PDE solve needs tau > 0, got {tau}")));
    }
    let r0 = state.r_shadow;
    if !(r0 > grid.r_min && r0 < grid.r_max) {
        return Err(Error::GridSpec(format!(
            "R0 = {r0} outside the PDE interval [{}, {}]",
            grid.r_min, grid.r_max
        )));
    }
    let mut breaks = claim.kinks_in_rate(tp);
    breaks.push(r0);
    let nodes = mesh(grid.r_min, grid.r_max, &breaks, grid.n_space);
    let origin = nodes
        .iter()
        .position(|&x| x == r0)
        .expect("R0 is a mesh node");
    let op = Operator::new(&nodes, tp.alpha_tilde, tp.kappa_tilde, model.params.beta);

    let mut f: Vec<f64> = nodes.iter().map(|&r| claim.g_of_rate(ra, tp, r)).collect();
    let mut bond = vec![1.0; nodes.len()];
    let g_hi = f.iter().copied().fold(0.0, f64::max);
    let mut scratch = Scratch::new(nodes.len() - 1);
    let dt = tau / grid.n_time as f64;
    for k in 0..grid.n_time {
        for (vals, cap) in [(&mut f, g_hi), (&mut bond, 1.0)] {
            if k < grid.rannacher_steps {
                op.step(vals, 0.5 * dt, 1.0, &mut scratch);
                op.step(vals, 0.5 * dt, 1.0, &mut scratch);
            } else {
                op.step(vals, dt, grid.theta, &mut scratch);
            }
            check_envelope(vals, cap, k)?;
        }
    }
    Ok(PdeSolution {
        nodes,
        f,
        bond,
        origin,
    })
}

/// Discounting keeps `0 <= f <= sup g`; leaving that band means the scheme
/// is oscillating.
fn check_envelope(f: &[f64], cap: f64, step: usize) -> Result<()> {
    let tol = 1e-9 * cap;
    if let Some((i, v)) = f
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v >= -tol && v <= cap + tol))
    {
        return Err(Error::Oscillation(format!(
            "value {v:e} at node {i} after step {step}, envelope [0, {cap:e}]"
        )));
    }
    Ok(())
}

/// Price and finite-difference hedge from the PDE.
pub fn pde_price(
    model: &Model,
    claim: &VolClaim,
    ra: &RiskAversion,
    state: &VolState,
    grid: &PdeGrid,
) -> Result<PdePrice> {
    let sol = pde_solve(model, claim, ra, state, grid)?;
    let i0 = sol.origin;
    let (i, bond) = (sol.f[i0], sol.bond[i0]);
    let log_derivative = sol.log_derivative(i0);
    let p = &model.params;
    let coupling = p.beta * p.rho / (2.0 * (1.0 - p.rho * p.rho)).sqrt();
    let h_claim = (p.excess_return() + p.excess_return().abs() * coupling * log_derivative)
        / (ra.gamma * state.s * state.y);
    Ok(PdePrice {
        pi: (i / bond).ln() / ra.gamma_eff,
        i,
        bond,
        log_derivative,
        h_claim,
    })
}
