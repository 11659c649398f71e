//! Asymptotic mean-squared error of the penalized estimator as a computable
//! functional of the regularization profile.
//!
//! With `r(t) = 1 / (q(t) I(t))` and a profile `ρ` constant on each group
//! `[a_j, a_{j+1})`, the functional is
//!
//! ```text
//! Σ_j  λ² ρ_j² ∫ r² (f*'')²  +  ρ_j^{-1/2} L0 ∫ r^{1/2}
//! ```
//!
//! The first sum is the bias term, the second the variance term. The overall
//! `n`-dependent scale is unknown, so reports are only comparable across
//! profiles at fixed `n` and `λ`. Jumps of `ρ f*'` at group boundaries are not
//! counted; only the within-group curvature enters the bias.

use serde::{Deserialize, Serialize};

use crate::domain::{GroupPartition, ProblemSpec};
use crate::error::{Error, Result};
use crate::gridfit::Regularizer;
use crate::quad;
use crate::regprofile::RegProfile;

/// Relative tolerance for every integral computed here.
pub const QUAD_REL_TOL: f64 = 1e-11;

/// `∫ (1/4) exp(-2|t|) dt` over the real line, in closed form.
pub fn l0_constant() -> f64 {
    0.25
}

/// Quadrature estimate of `L0` truncated to `[-half_width, half_width]`.
pub fn l0_quadrature(half_width: f64, rel_tol: f64) -> f64 {
    let kernel = |t: f64| 0.25 * (-2.0 * t.abs()).exp();
    quad::integrate(kernel, -half_width, half_width, &[0.0], rel_tol)
}

/// Mass of the `L0` integrand outside `[-t, t]`: `(1/4) exp(-2t)`.
pub fn l0_tail_bound(t: f64) -> f64 {
    0.25 * (-2.0 * t).exp()
}

/// `λ = C0 n^{-2/5}`.
pub fn lambda_from_c0(c0: f64, n: usize) -> f64 {
    c0 * (n as f64).powf(-0.4)
}

/// Inverse of [`lambda_from_c0`].
pub fn c0_from_lambda(lambda: f64, n: usize) -> f64 {
    lambda * (n as f64).powf(0.4)
}

/// Optimal ridge strength `d σ² / (n ‖θ*‖²)` for linear ridge regression.
pub fn ridge_lambda_opt(d: usize, sigma2: f64, n: usize, theta_norm2: f64) -> Result<f64> {
    if n == 0 || !(theta_norm2 > 0.0) || !(sigma2 >= 0.0) {
        return Err(Error::contract("ridge_lambda_opt needs n >= 1, sigma2 >= 0, theta_norm2 > 0"));
    }
    Ok(d as f64 * sigma2 / (n as f64 * theta_norm2))
}

/// `r(t) = 1 / (q(t) I(t))`, taken positive.
pub fn r_of(spec: &ProblemSpec, t: f64) -> f64 {
    1.0 / (spec.density(t) * spec.fisher_info(t))
}

/// Per-group integrals entering the functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupCoefficients {
    pub lo: f64,
    pub hi: f64,
    /// `A_j = ∫ r² (f*'')²` over the group.
    pub curvature: f64,
    /// `B_j = L0 ∫ r^{1/2}` over the group.
    pub spread: f64,
}

impl GroupCoefficients {
    pub fn bias(&self, rho: f64, lambda: f64) -> f64 {
        lambda * lambda * rho * rho * self.curvature
    }

    pub fn variance(&self, rho: f64) -> f64 {
        self.spread / rho.sqrt()
    }
}

fn integration_breaks(spec: &ProblemSpec, lo: f64, hi: f64) -> Vec<f64> {
    spec.breakpoints().into_iter().filter(|&b| b > lo && b < hi).collect()
}

/// Computes `A_j` and `B_j` on `[lo, hi]`.
pub fn coefficients_on(spec: &ProblemSpec, lo: f64, hi: f64) -> GroupCoefficients {
    let breaks = integration_breaks(spec, lo, hi);
    let curvature = quad::integrate(
        |t| {
            let r = r_of(spec, t);
            let c = spec.f_d2(t);
            r * r * c * c
        },
        lo,
        hi,
        &breaks,
        QUAD_REL_TOL,
    );
    let root = quad::integrate(|t| r_of(spec, t).sqrt(), lo, hi, &breaks, QUAD_REL_TOL);
    GroupCoefficients { lo, hi, curvature, spread: l0_constant() * root }
}

pub fn group_coefficients(spec: &ProblemSpec, partition: &GroupPartition) -> Vec<GroupCoefficients> {
    (0..partition.group_count())
        .map(|j| {
            let (lo, hi) = partition.bounds(j);
            coefficients_on(spec, lo, hi)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupContribution {
    pub lo: f64,
    pub hi: f64,
    pub curvature: f64,
    pub spread: f64,
    pub rho: f64,
    pub bias: f64,
    pub variance: f64,
}

impl GroupContribution {
    pub fn total(&self) -> f64 {
        self.bias + self.variance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub bias_term: f64,
    pub variance_term: f64,
    pub total: f64,
    pub lambda: f64,
    pub groups: Vec<GroupContribution>,
}

/// Evaluates the functional for a piecewise-constant profile.
pub fn asymptotic_mse(spec: &ProblemSpec, profile: &RegProfile, lambda: f64) -> Result<AsymptoticReport> {
    if !(lambda > 0.0) {
        return Err(Error::contract("lambda must be positive"));
    }
    let coeffs = group_coefficients(spec, profile.partition());
    Ok(report_from(&coeffs, profile.rho(), lambda))
}

/// Same as [`asymptotic_mse`] for a generic regularizer; only group profiles
/// are supported.
pub fn asymptotic_mse_for(spec: &ProblemSpec, reg: &Regularizer, lambda: f64) -> Result<AsymptoticReport> {
    match reg {
        Regularizer::Profile(p) => asymptotic_mse(spec, p, lambda),
        Regularizer::Weights(_) => Err(Error::UnsupportedProfile(
            "the asymptotic functional needs a piecewise-constant profile, not per-example weights".into(),
        )),
    }
}

/// Assembles a report from precomputed coefficients.
pub fn report_from(coeffs: &[GroupCoefficients], rho: &[f64], lambda: f64) -> AsymptoticReport {
    let groups: Vec<GroupContribution> = coeffs
        .iter()
        .zip(rho)
        .map(|(c, &r)| GroupContribution {
            lo: c.lo,
            hi: c.hi,
            curvature: c.curvature,
            spread: c.spread,
            rho: r,
            bias: c.bias(r, lambda),
            variance: c.variance(r),
        })
        .collect();
    let bias_term: f64 = groups.iter().map(|g| g.bias).sum();
    let variance_term: f64 = groups.iter().map(|g| g.variance).sum();
    AsymptoticReport { bias_term, variance_term, total: bias_term + variance_term, lambda, groups }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Expr, Piecewise, Segment, Task};
    use crate::regprofile::uniform_profile;

    fn linear_classification() -> ProblemSpec {
        let f = Piecewise::new(vec![Segment { lo: 0.0, hi: 1.0, expr: Expr::Polynomial(vec![0.0, 0.0]) }]).unwrap();
        ProblemSpec::new(Task::BinaryClassification, f, Piecewise::constant(1.0), None).unwrap()
    }

    #[test]
    fn l0_closed_form_and_quadrature_agree() {
        assert_eq!(l0_constant(), 0.25);
        let q = l0_quadrature(40.0, 1e-13);
        assert!((q - 0.25).abs() < 1e-10, "{q}");
        let q_fine = l0_quadrature(40.0, 1e-14);
        assert!((q - q_fine).abs() < 1e-10);
        assert!(l0_tail_bound(40.0) < 1e-34);
    }

    #[test]
    fn linear_truth_has_no_bias() {
        // f* ≡ 0 gives I = 1/4, r = 4, r^{1/2} = 2
        let spec = linear_classification();
        let part = GroupPartition::uniform(1).unwrap();
        let prof = uniform_profile(&part, 1.0).unwrap();
        for lambda in [1e-3, 1.0, 50.0] {
            let rep = asymptotic_mse(&spec, &prof, lambda).unwrap();
            assert_eq!(rep.bias_term, 0.0);
            assert!((rep.variance_term - 0.5).abs() < 1e-10);
            assert!((rep.total - rep.bias_term - rep.variance_term).abs() < 1e-12);
        }
    }

    #[test]
    fn ridge_examples() {
        assert_eq!(ridge_lambda_opt(1, 0.0, 10, 1.0).unwrap(), 0.0);
        assert!((ridge_lambda_opt(10, 1.0, 100, 1.0).unwrap() - 0.1).abs() < 1e-15);
        let a = ridge_lambda_opt(3, 2.0, 50, 0.7).unwrap();
        let b = ridge_lambda_opt(3, 2.0, 100, 0.7).unwrap();
        assert!((a / b - 2.0).abs() < 1e-14);
        assert!(ridge_lambda_opt(3, 2.0, 0, 0.7).is_err());
    }

    #[test]
    fn lambda_c0_mapping() {
        for n in [1usize, 7, 2000, 123_456] {
            let l = lambda_from_c0(1.3, n);
            assert!((l * (n as f64).powf(0.4) - 1.3).abs() < 1e-12);
            assert!((c0_from_lambda(l, n) - 1.3).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_are_rejected() {
        let spec = linear_classification();
        let reg = Regularizer::Weights(crate::regprofile::ExampleWeights::new(vec![1.0]).unwrap());
        assert!(matches!(asymptotic_mse_for(&spec, &reg, 1.0), Err(Error::UnsupportedProfile(_))));
    }
}
