//! Closed-form space-time correlation functions and the tail-up/tail-down
//! building blocks. These take raw parameters and do no validation.

use crate::functions::{ln_sech, Kernel, ScalarFamily};
use crate::network::FlowRelation;
use crate::quadrature::{integrate_to_infinity, QuadOptions};

use super::ModelError;

/// `(κ d^b + 1)^(-τ) · exp(-c (u² / (κ d^b + 1)^β)^ν)`
pub fn cov_model1(d: f64, u: f64, c: f64, nu: f64, kappa: f64, beta: f64, tau: f64, b: f64) -> f64 {
    let base = kappa * d.powf(b) + 1.0;
    let scaled = u * u / base.powf(beta);
    (-tau * base.ln() - c * scaled.powf(nu)).exp()
}

/// `(d^b + 1)^(-α) · sech(c u^a / √(d^b + 1))^ν`
pub fn cov_model2(d: f64, u: f64, a: f64, alpha: f64, b: f64, c: f64, nu: f64) -> f64 {
    let base = d.powf(b) + 1.0;
    let x = c * u.powf(a) / base.sqrt();
    (-alpha * base.ln() + nu * ln_sech(x)).exp()
}

/// `(1 - (d/α + u/β)^ν)_+^δ`
pub fn cov_model3(d: f64, u: f64, alpha: f64, beta: f64, nu: f64, delta: f64) -> f64 {
    let r = d / alpha + u / beta;
    if r >= 1.0 {
        return 0.0;
    }
    (1.0 - r.powf(nu)).powf(delta)
}

/// Mariah tail-up with cosine time plus exponential tail-down with
/// exponential time, evaluated branch by branch.
pub fn cov_model4(rel: &FlowRelation, weight: f64, u: f64, theta1: f64, theta2: f64, theta3: f64, theta4: f64) -> f64 {
    match *rel {
        FlowRelation::SamePoint => 0.5 * (u / theta2).cos() + 0.5 * (-u / theta4).exp(),
        FlowRelation::FlowConnected { d: 0.0 } => 0.5 * (u / theta2).cos() + 0.5 * (-u / theta4).exp(),
        FlowRelation::FlowConnected { d } => {
            weight * mariah_tailup(theta1, d) * (u / theta2).cos() + 0.5 * (-(d / theta3 + u / theta4)).exp()
        }
        FlowRelation::FlowUnconnected { d, .. } => 0.5 * (-(d / theta3 + u / theta4)).exp(),
    }
}

/// `(d/θ1 + u^θ3/θ2 + 1)^(-θ4)`
pub fn cov_model5(d: f64, u: f64, theta1: f64, theta2: f64, theta3: f64, theta4: f64) -> f64 {
    (d / theta1 + u.powf(theta3) / theta2 + 1.0).powf(-theta4)
}

/// `ψ(d^b)^(-α) · φ(u^(2a) / ψ(d^b))`
pub fn cov_gneiting(d: f64, u: f64, phi: &ScalarFamily, psi: &ScalarFamily, alpha: f64, a: f64, b: f64) -> f64 {
    let p = psi.value(d.powf(b));
    p.powf(-alpha) * phi.value(u.powf(2.0 * a) / p)
}

/// Normalised Mariah tail-up profile, `½ log(1 + d/θ) / (d/θ)` with value ½ at 0.
pub fn mariah_tailup(theta1: f64, d: f64) -> f64 {
    let x = d / theta1;
    if x < 1e-8 {
        0.5 * (1.0 - x / 2.0 + x * x / 3.0)
    } else {
        0.5 * x.ln_1p() / x
    }
}

/// Exponential-kernel convolution `(θ1² θ2 / 2) e^(-d/θ2)`, shared by tail-up and tail-down.
pub fn exponential_convolution(theta1: f64, theta2: f64, d: f64) -> f64 {
    0.5 * theta1 * theta1 * theta2 * (-d / theta2).exp()
}

/// Unweighted tail-up value at stream distance `d`.
pub fn tailup_profile(kernel: &Kernel, d: f64) -> f64 {
    match *kernel {
        Kernel::Exponential { theta1, theta2 } => exponential_convolution(theta1, theta2, d),
        Kernel::Mariah { theta1 } => mariah_tailup(theta1, d),
    }
}

/// Tail-up covariance: zero for flow-unconnected pairs, weighted profile otherwise.
pub fn cov_tailup(rel: &FlowRelation, weight: f64, kernel: &Kernel) -> f64 {
    match *rel {
        FlowRelation::SamePoint => tailup_profile(kernel, 0.0),
        FlowRelation::FlowConnected { d } => weight * tailup_profile(kernel, d),
        FlowRelation::FlowUnconnected { .. } => 0.0,
    }
}

/// Tail-down covariance. The exponential kernel is isotropic and closed form;
/// the Mariah kernel is integrated numerically in both branches.
pub fn cov_taildown(rel: &FlowRelation, kernel: &Kernel) -> Result<f64, ModelError> {
    match *kernel {
        Kernel::Exponential { theta1, theta2 } => Ok(exponential_convolution(theta1, theta2, rel.distance())),
        Kernel::Mariah { theta1 } => {
            let (lower, shift) = match *rel {
                FlowRelation::SamePoint => (0.0, 0.0),
                FlowRelation::FlowConnected { d } => (d, d),
                FlowRelation::FlowUnconnected { a, b, .. } => (a.max(b), (b - a).abs()),
            };
            mariah_taildown(theta1, lower, shift)
        }
    }
}

/// `(2/θ) ∫_lower^∞ g(y) g(y - shift) dy` for the Mariah kernel `g`, so that the
/// value at zero separation matches the tail-up normalisation of ½.
pub fn mariah_taildown(theta1: f64, lower: f64, shift: f64) -> Result<f64, ModelError> {
    let g = Kernel::Mariah { theta1 };
    let opts = QuadOptions { abs_tol: 1e-10, rel_tol: 1e-12, max_subdivisions: 2000 };
    let r = integrate_to_infinity(|y| g.eval(y) * g.eval(y - shift), lower, opts)?;
    Ok(2.0 / theta1 * r.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model1_hand_value() {
        let v = cov_model1(1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 1.0);
        let expected = (-1.0 / 2f64.sqrt()).exp() / 2f64.sqrt();
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn model2_marginals() {
        assert!((cov_model2(0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((cov_model2(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
        // huge time lags stay finite
        assert!(cov_model2(0.0, 1e6, 1.0, 1.0, 1.0, 1.0, 1.0) >= 0.0);
    }

    #[test]
    fn model3_support() {
        assert_eq!(cov_model3(0.5, 5.0, 1.0, 10.0, 1.0, 7.0), 0.0);
        assert!((cov_model3(0.25, 2.5, 1.0, 10.0, 1.0, 7.0) - 0.0078125).abs() < 1e-15);
    }

    #[test]
    fn mariah_series_is_continuous() {
        let at_cut = 0.5 * (1e-8f64).ln_1p() / 1e-8;
        assert!((mariah_tailup(1.0, 1e-8 * (1.0 - 1e-12)) - at_cut).abs() < 1e-15);
        assert_eq!(mariah_tailup(2.0, 0.0), 0.5);
    }

    #[test]
    fn mariah_taildown_partial_fractions() {
        // ∫_m^∞ ¼ / ((1 + y/θ)(1 + (y-h)/θ)) dy = (θ/4h') log((1+M)/(1+M-h'))
        let theta = 1.7;
        for &(m, h) in &[(0.0f64, 0.0f64), (2.0, 2.0), (1.5, 1.0), (3.0, 0.2)] {
            let (mm, hh) = (m / theta, h / theta);
            let raw = if hh == 0.0 { theta / 4.0 / (1.0 + mm) } else { theta / 4.0 / hh * ((1.0 + mm) / (1.0 + mm - hh)).ln() };
            let v = mariah_taildown(theta, m, h).unwrap();
            assert!((v - 2.0 / theta * raw).abs() < 1e-9, "m={m} h={h}");
        }
    }
}
