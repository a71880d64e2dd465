//! Test-side oracles and random draws shared by the integration suites.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use volquote::claims::{RiskAversion, VolClaim};
use volquote::model::{Model, ModelParams, VolState};

/// Zero-coupon bond `E[exp(-int_0^tau R)]` for `dR = a (k - R) dt + b sqrt(R) dW`,
/// written in the textbook `A exp(-B r)` form with `h = sqrt(a^2 + 2 b^2)`.
pub fn classical_bond(a: f64, k: f64, b: f64, r: f64, tau: f64) -> f64 {
    let h = (a * a + 2.0 * b * b).sqrt();
    let e = (h * tau).exp();
    let den = 2.0 * h + (a + h) * (e - 1.0);
    let big_a = (2.0 * h * ((a + h) * tau / 2.0).exp() / den).powf(2.0 * a * k / (b * b));
    let big_b = 2.0 * (e - 1.0) / den;
    big_a * (-big_b * r).exp()
}

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut s = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        s += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

/// Deterministic runner for `cases` random draws.
pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// A valid model, state and claim.
#[derive(Debug, Clone)]
pub struct Draw {
    pub model: Model,
    pub state: VolState,
    pub claim: VolClaim,
}

/// Parameters whose shadow-rate transition has `2 a k / b^2` in `[5, 12]`.
pub fn model_strategy() -> impl Strategy<Value = Model> {
    (
        1.0f64..10.0,
        5e-4f64..5e-3,
        5.0f64..12.0,
        0.01f64..0.08,
        prop::bool::ANY,
        -0.8f64..0.8,
        0.0f64..0.05,
    )
        .prop_map(|(alpha, kappa, nu, excess, up, rho, r)| {
            let beta = (2.0 * alpha * kappa / nu).sqrt();
            let mu = if up { r + excess } else { r - excess };
            Model::new(ModelParams {
                mu,
                r,
                rho,
                alpha,
                kappa,
                beta,
            })
            .expect("drawn parameters are valid")
        })
}

pub fn claim_strategy() -> impl Strategy<Value = VolClaim> {
    prop_oneof![
        (0.05f64..0.5).prop_map(|k| VolClaim::put(k).unwrap()),
        (0.05f64..0.4, 0.01f64..0.3).prop_map(|(k1, w)| VolClaim::call_spread(k1, k1 + w).unwrap()),
        (-0.2f64..0.2).prop_map(|v| VolClaim::constant(v).unwrap()),
        (2usize..7)
            .prop_flat_map(|n| (
                prop::collection::vec(0.02f64..0.15, n),
                prop::collection::vec(-0.2f64..0.3, n)
            ))
            .prop_map(|(gaps, values)| {
                let ys = gaps
                    .iter()
                    .scan(0.0, |acc, g| {
                        *acc += g;
                        Some(*acc)
                    })
                    .collect();
                VolClaim::tabulated(ys, values).unwrap()
            }),
    ]
}

pub fn draw_strategy() -> impl Strategy<Value = Draw> {
    (model_strategy(), 0.1f64..1.0, 0.05f64..0.5, claim_strategy()).prop_map(|(model, tau, y0, claim)| Draw {
        state: model.state(0.0, tau, y0, 1.0).unwrap(),
        model,
        claim,
    })
}

pub fn reference_put_point() -> (Model, VolState, RiskAversion, VolClaim) {
    let model = Model::reference();
    let state = model.state(0.0, 1.0, 0.15, 1.0).unwrap();
    (model, state, RiskAversion::new(1.0, 0.5).unwrap(), VolClaim::put(0.15).unwrap())
}
