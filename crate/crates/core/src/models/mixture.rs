//! Scale mixtures `∫ C_S(d; a) C_T(u; a) dμ(a)` evaluated by quadrature.

use statrs::function::gamma::ln_gamma;

use crate::quadrature::{integrate, integrate_to_infinity, QuadOptions};

use super::ModelError;

/// Support of the mixing variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingSupport {
    /// `[lower, ∞)`
    HalfLine(f64),
    Interval(f64, f64),
}

/// Integrate `spatial(a) · temporal(a) · density(a)` over the mixing support
/// with absolute tolerance 1e-9.
pub fn cov_scale_mixture_quadrature<S, T, M>(
    spatial: S,
    temporal: T,
    density: M,
    support: MixingSupport,
) -> Result<f64, ModelError>
where
    S: Fn(f64) -> f64,
    T: Fn(f64) -> f64,
    M: Fn(f64) -> f64,
{
    let opts = QuadOptions { abs_tol: 1e-9, rel_tol: 0.0, max_subdivisions: 4000 };
    let f = |a: f64| {
        let w = density(a);
        if w == 0.0 {
            0.0
        } else {
            spatial(a) * temporal(a) * w
        }
    };
    let r = match support {
        MixingSupport::HalfLine(lo) => integrate_to_infinity(f, lo, opts),
        MixingSupport::Interval(lo, hi) => integrate(f, lo, hi, opts),
    }?;
    if !r.value.is_finite() {
        return Err(ModelError::Divergent);
    }
    Ok(r.value)
}

/// Exponential tail-down in `a²`, cosine in time, half-normal mixing.
pub fn half_normal_cosine_mixture(d: f64, u: f64, theta1: f64, theta2: f64) -> Result<f64, ModelError> {
    let norm = 2.0 / std::f64::consts::PI.sqrt();
    cov_scale_mixture_quadrature(
        |a| (-a * a / theta1 * d).exp(),
        |a| (a * 2.0 * theta2 * u).cos(),
        |a| norm * (-a * a).exp(),
        MixingSupport::HalfLine(0.0),
    )
}

/// Closed form of [`half_normal_cosine_mixture`].
pub fn half_normal_cosine_closed(d: f64, u: f64, theta1: f64, theta2: f64) -> f64 {
    let s = 1.0 + d / theta1;
    (-theta2 * theta2 * u * u / s).exp() / s.sqrt()
}

/// Exponential in space and powered exponential in time, both linear in the
/// mixing variable, mixed over a Gamma(shape θ4, rate θ5) law.
pub fn gamma_mixture(d: f64, u: f64, theta1: f64, theta2: f64, theta3: f64, theta4: f64, theta5: f64) -> Result<f64, ModelError> {
    let log_norm = theta4 * theta5.ln() - ln_gamma(theta4);
    let ut = u.powf(theta3);
    cov_scale_mixture_quadrature(
        |a| (-d / theta1 * a).exp(),
        |a| (-ut / theta2 * a).exp(),
        |a| {
            if a <= 0.0 {
                0.0
            } else {
                (log_norm + (theta4 - 1.0) * a.ln() - theta5 * a).exp()
            }
        },
        MixingSupport::HalfLine(0.0),
    )
}

/// Closed form of [`gamma_mixture`].
pub fn gamma_mixture_closed(d: f64, u: f64, theta1: f64, theta2: f64, theta3: f64, theta4: f64, theta5: f64) -> f64 {
    (d / (theta1 * theta5) + u.powf(theta3) / (theta2 * theta5) + 1.0).powf(-theta4)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_normal_at_zero_lag() {
        for d in [0.0, 0.5, 3.0] {
            let q = half_normal_cosine_mixture(d, 0.0, 2.0, 1.0).unwrap();
            assert!((q - (1.0 + d / 2.0).powf(-0.5)).abs() < 1e-8);
        }
    }

    #[test]
    fn gamma_matches_closed_form() {
        let q = gamma_mixture(3.0, 2.0, 10.0, 5.0, 1.5, 1.0, 2.0).unwrap();
        assert!((q - gamma_mixture_closed(3.0, 2.0, 10.0, 5.0, 1.5, 1.0, 2.0)).abs() < 1e-8);
    }

    #[test]
    fn divergent_density_is_reported() {
        let r = cov_scale_mixture_quadrature(|_| 1.0, |_| 1.0, |a| 1.0 / a, MixingSupport::Interval(0.0, 1.0));
        assert!(r.is_err());
    }
}
