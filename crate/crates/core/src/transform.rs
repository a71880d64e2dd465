//! Discounted affine transform of the CIR shadow rate under the pricing
//! measure:
//!
//! ```text
//! Psi(u, R, tau) = E~[ exp(-int_t^T R_s ds) exp(-i u R_T) | R_t = R ]
//!                = exp(M(u, tau) + N(u, tau) R)
//! ```
//!
//! `N` solves the Riccati equation `N' = (beta^2 / 2)(N - b1)(N - b2)` with
//! `N(u, 0) = -iu`, and `M' = alpha kappa N` with `M(u, 0) = 0`, where
//! `b1 < 0 < b2` are the roots of `x^2 - (2 alpha~ / beta^2) x - 2 / beta^2`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::Model;

/// Roots of the Riccati fixed-point polynomial and the decay rate `Delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineConstants {
    /// Smaller (negative) root.
    pub b1: f64,
    /// Larger (positive) root.
    pub b2: f64,
    /// `sqrt(alpha~^2 + 2 beta^2)`.
    pub delta: f64,
}

impl AffineConstants {
    pub fn new(alpha_tilde: f64, beta: f64) -> Self {
        let delta = (alpha_tilde * alpha_tilde + 2.0 * beta * beta).sqrt();
        let beta2 = beta * beta;
        let b2 = (alpha_tilde + delta) / beta2;
        // (alpha~ - Delta) / beta^2 without the cancellation
        let b1 = -2.0 / (alpha_tilde + delta);
        AffineConstants { b1, b2, delta }
    }
}

/// `affine_constants(tp, beta)`.
pub fn affine_constants(model: &Model) -> AffineConstants {
    AffineConstants::new(model.tilde.alpha_tilde, model.beta())
}

/// `M`, `N` and `Psi` at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformEval {
    pub m: Complex64,
    pub n: Complex64,
    pub psi: Complex64,
}

/// Evaluator for the discounted transform of one parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub consts: AffineConstants,
    pub alpha_tilde: f64,
    /// `alpha kappa = alpha~ kappa~`.
    pub alpha_kappa: f64,
    pub beta: f64,
}

impl AffineTransform {
    pub fn new(model: &Model) -> Self {
        AffineTransform {
            consts: affine_constants(model),
            alpha_tilde: model.tilde.alpha_tilde,
            alpha_kappa: model.alpha_kappa(),
            beta: model.beta(),
        }
    }

    /// Builds an evaluator from raw pricing-measure inputs, bypassing the
    /// Feller check. Used for diagnostics over parameter sweeps.
    pub fn from_raw(alpha_tilde: f64, alpha_kappa: f64, beta: f64) -> Self {
        AffineTransform {
            consts: AffineConstants::new(alpha_tilde, beta),
            alpha_tilde,
            alpha_kappa,
            beta,
        }
    }

    /// `N(u, tau)`.
    pub fn coeff_n(&self, u: f64, tau: f64) -> Result<Complex64> {
        let AffineConstants { b1, b2, delta } = self.consts;
        let e = (-delta * tau).exp();
        let b2u = Complex64::new(b2, u);
        let b1u = Complex64::new(b1, u);
        let den = b2u - b1u * e;
        if den.norm() < 1e-14 {
            return Err(Error::VanishingDenominator { u, tau });
        }
        Ok((b2u * b1 - b1u * b2 * e) / den)
    }

    /// `(b2 + iu) / (b2 - N)`, simplified to `((b2 + iu) - (b1 + iu) e^{-Delta tau}) / (b2 - b1)`.
    ///
    /// Its real part is `(b2 - b1 e^{-Delta tau}) / (b2 - b1) > 0`, so the
    /// principal logarithm never crosses its cut.
    fn log_argument(&self, u: f64, tau: f64) -> Complex64 {
        let AffineConstants { b1, b2, delta } = self.consts;
        let e = (-delta * tau).exp();
        (Complex64::new(b2, u) - Complex64::new(b1, u) * e) / (b2 - b1)
    }

    fn m_from_log(&self, log_arg: Complex64, tau: f64) -> Complex64 {
        let scale = -2.0 * self.alpha_kappa / (self.beta * self.beta);
        log_arg * scale + self.alpha_kappa * self.consts.b1 * tau
    }

    /// `M(u, tau)` on the principal branch.
    pub fn coeff_m(&self, u: f64, tau: f64) -> Result<Complex64> {
        let z = self.log_argument(u, tau);
        Ok(self.m_from_log(z.ln(), tau))
    }

    pub fn eval(&self, u: f64, rate: f64, tau: f64) -> Result<TransformEval> {
        let n = self.coeff_n(u, tau)?;
        let m = self.coeff_m(u, tau)?;
        Ok(TransformEval {
            m,
            n,
            psi: (m + n * rate).exp(),
        })
    }

    /// `Psi(u, R, tau)`.
    pub fn psi(&self, u: f64, rate: f64, tau: f64) -> Result<Complex64> {
        Ok(self.eval(u, rate, tau)?.psi)
    }

    /// Zero-coupon "bond" `Psi(0, R, tau) = E~[exp(-int R)]`.
    pub fn bond(&self, rate: f64, tau: f64) -> Result<f64> {
        let psi = self.psi(0.0, rate, tau)?;
        assert!(
            psi.im.abs() < 1e-14,
            "bond transform has imaginary part {}",
            psi.im
        );
        Ok(psi.re)
    }

    /// `N(0, tau)`, real and non-positive.
    pub fn n0(&self, tau: f64) -> f64 {
        let AffineConstants { b1, b2, delta } = self.consts;
        let e = (-delta * tau).exp();
        b1 * b2 * (1.0 - e) / (b2 - b1 * e)
    }

    /// Evaluates the transform on `u_k = k du`, `k = 0..count`, tracking the
    /// phase of the logarithm continuously from `u = 0`.
    pub fn eval_lattice(
        &self,
        du: f64,
        count: usize,
        rate: f64,
        tau: f64,
    ) -> Result<Vec<TransformEval>> {
        let mut tracker = BranchTracker::default();
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let u = k as f64 * du;
            let n = self.coeff_n(u, tau)?;
            let log_arg = tracker.log(self.log_argument(u, tau), u)?;
            let m = self.m_from_log(log_arg, tau);
            out.push(TransformEval {
                m,
                n,
                psi: (m + n * rate).exp(),
            });
        }
        Ok(out)
    }
}

/// Continuous complex logarithm along a sequence of points (rotation count).
#[derive(Debug, Default, Clone, Copy)]
pub struct BranchTracker {
    last: Option<f64>,
    rotations: i64,
}

impl BranchTracker {
    /// Largest phase increment accepted between consecutive points.
    pub const MAX_STEP: f64 = 0.5 * PI;

    pub fn log(&mut self, z: Complex64, u: f64) -> Result<Complex64> {
        let arg = z.arg();
        if let Some(prev) = self.last {
            let mut jump = arg - prev;
            if jump > PI {
                self.rotations -= 1;
                jump -= 2.0 * PI;
            } else if jump < -PI {
                self.rotations += 1;
                jump += 2.0 * PI;
            }
            if jump.abs() > Self::MAX_STEP {
                return Err(Error::BranchTracking { u, jump });
            }
        }
        self.last = Some(arg);
        Ok(Complex64::new(
            z.norm().ln(),
            arg + 2.0 * PI * self.rotations as f64,
        ))
    }

    pub fn rotations(&self) -> i64 {
        self.rotations
    }
}

/// Conditional mean and variance of a CIR process
/// `dR = a (k - R) dt + b sqrt(R) dW` after time `tau`, started at `r0`.
pub fn cir_moments(a: f64, k: f64, b: f64, r0: f64, tau: f64) -> (f64, f64) {
    let e = (-a * tau).exp();
    let mean = k + (r0 - k) * e;
    let var = r0 * b * b / a * (e - e * e) + k * b * b / (2.0 * a) * (1.0 - e) * (1.0 - e);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> AffineTransform {
        AffineTransform::new(&Model::reference())
    }

    /// Classical CIR zero-coupon bond written in its textbook form.
    fn classical_bond(a: f64, ak: f64, b: f64, r: f64, tau: f64) -> f64 {
        let h = (a * a + 2.0 * b * b).sqrt();
        let ex = (h * tau).exp() - 1.0;
        let den = (h + a) * ex + 2.0 * h;
        let big_a = (2.0 * h * ((a + h) * tau / 2.0).exp() / den).powf(2.0 * ak / (b * b));
        let big_b = 2.0 * ex / den;
        big_a * (-big_b * r).exp()
    }

    #[test]
    fn constants_reference() {
        let k = reference().consts;
        let at = Model::reference().tilde.alpha_tilde;
        assert_relative_eq!(k.delta, 5.032978, epsilon = 1e-6);
        assert_relative_eq!(k.b2, 6291.0, epsilon = 0.5);
        assert_relative_eq!(k.b1, -0.198696, epsilon = 1e-6);
        assert_relative_eq!(k.b1 * k.b2, -1250.0, max_relative = 1e-10);
        assert_relative_eq!(k.b1 + k.b2, 2.0 * at / 0.0016, max_relative = 1e-10);
        assert_relative_eq!(k.b1 + k.b2, 6290.8, epsilon = 0.05);
        assert!(k.b1 < 0.0 && 0.0 < k.b2);
    }

    #[test]
    fn constants_large_beta_asymptote() {
        let beta = 1e4;
        let k = AffineConstants::new(5.0, beta);
        let s2 = 2f64.sqrt();
        assert_relative_eq!(k.delta, beta * s2, max_relative = 1e-6);
        assert_relative_eq!(k.b2, s2 / beta, max_relative = 1e-3);
        assert_relative_eq!(k.b1, -s2 / beta, max_relative = 1e-3);
    }

    #[test]
    fn n_terminal_and_long_horizon() {
        let t = reference();
        for u in [0.0, 1.0, -3.5, 250.0, 1e6] {
            let n = t.coeff_n(u, 0.0).unwrap();
            assert!((n - Complex64::new(0.0, -u)).norm() <= 1e-12 * u.abs().max(1.0));
        }
        let n_inf = t.coeff_n(0.0, 50.0).unwrap();
        assert_relative_eq!(n_inf.re, t.consts.b1, max_relative = 1e-12);
        assert_eq!(n_inf.im, 0.0);
        let n1 = t.coeff_n(0.0, 1.0).unwrap();
        assert!(n1.re <= 0.0 && n1.im == 0.0);
        assert_relative_eq!(n1.re, t.n0(1.0), max_relative = 1e-14);
    }

    #[test]
    fn n0_matches_cir_bond_exponent() {
        let t = reference();
        let a = t.alpha_tilde;
        let d = t.consts.delta;
        let tau = 1.0;
        let ex = (d * tau).exp() - 1.0;
        let expected = -2.0 * ex / ((d + a) * ex + 2.0 * d);
        assert_relative_eq!(t.n0(tau), expected, max_relative = 1e-12);
    }

    #[test]
    fn m_terminal_symmetry_and_bond_amplitude() {
        let t = reference();
        assert_eq!(t.coeff_m(7.0, 0.0).unwrap(), Complex64::new(0.0, 0.0));
        let m0 = t.coeff_m(0.0, 1.0).unwrap();
        assert_eq!(m0.im, 0.0);
        let log_a = classical_bond(t.alpha_tilde, t.alpha_kappa, t.beta, 0.0, 1.0).ln();
        assert_relative_eq!(m0.re, log_a, max_relative = 1e-10);

        let mp = t.coeff_m(17.3, 0.8).unwrap();
        let mm = t.coeff_m(-17.3, 0.8).unwrap();
        assert_relative_eq!(mp.re, mm.re, max_relative = 1e-14);
        assert_relative_eq!(mp.im, -mm.im, max_relative = 1e-14);
    }

    #[test]
    fn m_simplified_log_matches_literal_ratio() {
        let t = reference();
        for &(u, tau) in &[(0.5, 0.3), (1e3, 1.0), (5e4, 0.1), (2e6, 2.0)] {
            let n = t.coeff_n(u, tau).unwrap();
            let lit = Complex64::new(t.consts.b2, u) / (t.consts.b2 - n);
            let simp = t.log_argument(u, tau);
            assert!((lit - simp).norm() < 1e-10 * simp.norm());
        }
    }

    #[test]
    fn psi_terminal_and_bounds() {
        let t = reference();
        let p = t.psi(2.0, 0.001, 0.0).unwrap();
        assert!((p - Complex64::new(0.0, -0.002).exp()).norm() < 1e-15);
        assert_eq!(t.bond(0.001, 0.0).unwrap(), 1.0);
        let b1 = t.bond(0.001, 1.0).unwrap();
        let bh = t.bond(0.001, 0.5).unwrap();
        assert!(b1 < bh && bh < 1.0);
        for u in [1.0, 100.0, 1e4, 1e5] {
            assert!(t.psi(u, 0.001, 1.0).unwrap().norm() <= b1);
        }
        // zero rate everywhere
        let flat = AffineTransform::from_raw(5.0, 1e-14, 0.04);
        assert_relative_eq!(flat.bond(1e-14, 1.0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bond_matches_classical_closed_form() {
        let t = reference();
        for tau in [0.1, 0.5, 1.0, 5.0] {
            for r in [1e-4, 1e-3, 1e-2] {
                let ours = t.bond(r, tau).unwrap();
                let theirs = classical_bond(t.alpha_tilde, t.alpha_kappa, t.beta, r, tau);
                assert_relative_eq!(ours, theirs, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn lattice_tracking_agrees_with_principal_branch() {
        let t = reference();
        let lattice = t.eval_lattice(700.0, 2048, 0.001, 1.0).unwrap();
        for (k, ev) in lattice.iter().enumerate() {
            let direct = t.eval(k as f64 * 700.0, 0.001, 1.0).unwrap();
            assert!((ev.m - direct.m).norm() < 1e-9 * direct.m.norm().max(1.0));
            assert!((ev.psi - direct.psi).norm() < 1e-12);
        }
        assert_eq!(lattice[0].m.im, 0.0);
        assert_eq!(lattice[0].n.im, 0.0);
    }

    #[test]
    fn tracker_counts_rotations_and_rejects_coarse_steps() {
        let mut tr = BranchTracker::default();
        let mut last = Complex64::new(0.0, 0.0);
        for k in 0..=40 {
            let theta = k as f64 * 0.3;
            last = tr.log(Complex64::from_polar(2.0, theta), 0.0).unwrap();
        }
        assert_relative_eq!(last.im, 12.0, max_relative = 1e-12);
        assert_eq!(tr.rotations(), 2);

        let mut tr = BranchTracker::default();
        tr.log(Complex64::new(1.0, 0.0), 0.0).unwrap();
        assert!(matches!(
            tr.log(Complex64::from_polar(1.0, 2.0), 1.0),
            Err(Error::BranchTracking { .. })
        ));
    }

    #[test]
    fn tail_decay_power_law() {
        let t = reference();
        let exponent = 2.0 * t.alpha_kappa / (t.beta * t.beta);
        assert_relative_eq!(exponent, 6.25, max_relative = 1e-12);
        let a = t.psi(1e6, 0.001, 1.0).unwrap().norm();
        let b = t.psi(2e6, 0.001, 1.0).unwrap().norm();
        let slope = (a / b).log2();
        assert_relative_eq!(slope, exponent, epsilon = 0.01);
    }

    #[test]
    fn cir_moments_limits() {
        let (m, v) = cir_moments(5.0, 0.001, 0.04, 0.003, 0.0);
        assert_eq!(m, 0.003);
        assert_eq!(v, 0.0);
        let (m, v) = cir_moments(5.0, 0.001, 0.04, 0.003, 100.0);
        assert_relative_eq!(m, 0.001, max_relative = 1e-12);
        assert_relative_eq!(v, 0.001 * 0.0016 / 10.0, max_relative = 1e-12);
    }
}
