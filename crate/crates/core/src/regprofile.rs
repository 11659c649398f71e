//! Regularization profiles: piecewise-constant densities `ρ` over a group
//! partition, and per-example weights `τ_i`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, GroupPartition, ProblemSpec};
use crate::error::{Error, Result};
use crate::quad;
use crate::theory::{self, GroupCoefficients, QUAD_REL_TOL};

/// Cap applied to groups whose curvature integral vanishes.
pub const RHO_MAX: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegProfile {
    partition: GroupPartition,
    rho: Vec<f64>,
    /// Groups whose value was capped at [`RHO_MAX`].
    #[serde(default)]
    capped: Vec<usize>,
}

impl RegProfile {
    pub fn new(partition: GroupPartition, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != partition.group_count() {
            return Err(Error::contract(format!(
                "profile has {} values for {} groups",
                rho.len(),
                partition.group_count()
            )));
        }
        if let Some(j) = rho.iter().position(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::contract(format!("rho[{j}] = {} is not positive", rho[j])));
        }
        Ok(RegProfile { partition, rho, capped: Vec::new() })
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn capped_groups(&self) -> &[usize] {
        &self.capped
    }

    pub fn at(&self, x: f64) -> f64 {
        self.rho[self.partition.group_of(x)]
    }

    /// Width-weighted mean `∫ ρ`.
    pub fn mean(&self) -> f64 {
        self.rho.iter().enumerate().map(|(j, r)| r * self.partition.width(j)).sum()
    }

    pub fn scaled(&self, c: f64) -> RegProfile {
        RegProfile {
            partition: self.partition.clone(),
            rho: self.rho.iter().map(|r| r * c).collect(),
            capped: self.capped.clone(),
        }
    }

    /// Rescales so that [`RegProfile::mean`] equals `target`.
    pub fn with_mean(&self, target: f64) -> RegProfile {
        self.scaled(target / self.mean())
    }

    /// Writes `group_lo,group_hi,rho` CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["group_lo", "group_hi", "rho"])?;
        for (j, r) in self.rho.iter().enumerate() {
            let (lo, hi) = self.partition.bounds(j);
            wtr.write_record([lo.to_string(), hi.to_string(), r.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Per-example regularization weights aligned with a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleWeights {
    tau: Vec<f64>,
}

impl ExampleWeights {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if let Some(i) = tau.iter().position(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::contract(format!("tau[{i}] = {} is not positive", tau[i])));
        }
        Ok(ExampleWeights { tau })
    }

    pub fn uniform(n: usize) -> Self {
        ExampleWeights { tau: vec![1.0; n] }
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.tau.iter().copied().fold(0.0, f64::max)
    }

    /// Writes `index,x,tau` CSV.
    pub fn write_csv<W: Write>(&self, dataset: &Dataset, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["index", "x", "tau"])?;
        for (i, (p, t)) in dataset.points.iter().zip(&self.tau).enumerate() {
            wtr.write_record([i.to_string(), p.x.to_string(), t.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Minimizer of `A ρ² + B ρ^{-1/2}` over `ρ > 0`: `(B / 4A)^{2/5}`.
///
/// Returns `(ρ, capped)`; a vanishing `A` (no curvature) caps at [`RHO_MAX`].
pub fn rho_from_coefficients(curvature: f64, spread: f64) -> (f64, bool) {
    if !(curvature > 0.0) {
        return (RHO_MAX, true);
    }
    let rho = (spread / (4.0 * curvature)).powf(0.4);
    if rho > RHO_MAX || !rho.is_finite() {
        (RHO_MAX, true)
    } else {
        (rho, false)
    }
}

/// Curvature-aware optimal profile.
///
/// Each group minimizes its own term of the asymptotic functional evaluated at
/// `λ = 1`; scale is otherwise carried by the global `λ`. See
/// [`optimal_rho_for_lambda`] for the minimizer at another `λ`.
pub fn optimal_rho(spec: &ProblemSpec, partition: &GroupPartition) -> RegProfile {
    let coeffs = theory::group_coefficients(spec, partition);
    optimal_from_coefficients(partition, &coeffs)
}

pub fn optimal_from_coefficients(partition: &GroupPartition, coeffs: &[GroupCoefficients]) -> RegProfile {
    let mut capped = Vec::new();
    let rho = coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let (r, cap) = rho_from_coefficients(c.curvature, c.spread);
            if cap {
                log::warn!(
                    "group {j} [{}, {}) has no curvature; rho capped at {RHO_MAX:e}",
                    c.lo,
                    c.hi
                );
                capped.push(j);
            }
            r
        })
        .collect();
    RegProfile { partition: partition.clone(), rho, capped }
}

/// Minimizer of the functional with the bias term weighted by `λ²`; equals
/// `optimal_rho · λ^{-4/5}`.
pub fn optimal_rho_for_lambda(spec: &ProblemSpec, partition: &GroupPartition, lambda: f64) -> RegProfile {
    optimal_rho(spec, partition).scaled(lambda.powf(-0.8))
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::contract(format!("{name} must be positive, got {v}")))
    }
}

/// `I^{3/5} q^{-2/5}`, the per-example weight for density `q` and uncertainty `I`.
pub fn tau_factor(q: f64, info: f64) -> Result<f64> {
    check_positive("q", q)?;
    check_positive("I", info)?;
    Ok(info.powf(0.6) * q.powf(-0.4))
}

/// Simplified group density `q^{3/5} I^{3/5}` (constant curvature assumed).
///
/// Computed as `tau_factor(q, I) * q` so that `τ_i q_j = ρ_j` holds bit for bit.
pub fn simplified_rho(q: f64, info: f64) -> Result<f64> {
    Ok(tau_factor(q, info)? * q)
}

/// Per-example weights `τ_i = I_j^{3/5} q_j^{-2/5}` from per-group estimates.
/// Estimates that are non-positive or non-finite count as missing; only groups
/// that actually contain examples need one.
pub fn tau_weights(
    dataset: &Dataset,
    partition: &GroupPartition,
    q_hat: &[f64],
    info_hat: &[f64],
) -> Result<ExampleWeights> {
    let k = partition.group_count();
    if q_hat.len() != k || info_hat.len() != k {
        return Err(Error::contract(format!("need {k} per-group estimates")));
    }
    let mut per_group: Vec<Option<f64>> = vec![None; k];
    let tau = dataset
        .points
        .iter()
        .map(|p| {
            let j = partition.group_of(p.x);
            if let Some(t) = per_group[j] {
                return Ok(t);
            }
            let t = tau_factor(q_hat[j], info_hat[j]).map_err(|_| {
                let (lo, hi) = partition.bounds(j);
                Error::MissingEstimate { group: j, lo, hi }
            })?;
            per_group[j] = Some(t);
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExampleWeights { tau })
}

/// Constant profile.
pub fn uniform_profile(partition: &GroupPartition, value: f64) -> Result<RegProfile> {
    check_positive("uniform value", value)?;
    RegProfile::new(partition.clone(), vec![value; partition.group_count()])
}

/// Group averages `(1/w_j) ∫ q` and `(1/w_j) ∫ I` of the true density and
/// Fisher information.
pub fn group_means(spec: &ProblemSpec, partition: &GroupPartition) -> (Vec<f64>, Vec<f64>) {
    (0..partition.group_count())
        .map(|j| {
            let (lo, hi) = partition.bounds(j);
            let breaks = spec.breakpoints();
            let w = hi - lo;
            let q = quad::integrate(|t| spec.density(t), lo, hi, &breaks, QUAD_REL_TOL) / w;
            let i = quad::integrate(|t| spec.fisher_info(t), lo, hi, &breaks, QUAD_REL_TOL) / w;
            (q, i)
        })
        .unzip()
}

/// `ρ_j ∝ (q_j I_j)^{exponent}` from true group means; `3/5` is the simplified
/// profile, `-3/5` its inverse.
pub fn power_law_profile(spec: &ProblemSpec, partition: &GroupPartition, exponent: f64) -> Result<RegProfile> {
    let (q, i) = group_means(spec, partition);
    let rho = q.iter().zip(&i).map(|(q, i)| (q * i).powf(exponent)).collect();
    RegProfile::new(partition.clone(), rho)
}

pub fn simplified_profile(spec: &ProblemSpec, partition: &GroupPartition) -> Result<RegProfile> {
    let (q, i) = group_means(spec, partition);
    let rho = q.iter().zip(&i).map(|(&q, &i)| simplified_rho(q, i)).collect::<Result<_>>()?;
    RegProfile::new(partition.clone(), rho)
}

pub fn inverse_profile(spec: &ProblemSpec, partition: &GroupPartition) -> Result<RegProfile> {
    power_law_profile(spec, partition, -0.6)
}

/// Per-example weights `τ_i = ρ(x_i) / q(x_i)` that match an integral profile
/// in expectation under the true density.
pub fn weights_for_profile(profile: &RegProfile, spec: &ProblemSpec, dataset: &Dataset) -> Result<ExampleWeights> {
    ExampleWeights::new(dataset.points.iter().map(|p| profile.at(p.x) / spec.density(p.x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{figure3_spec, Point, Task};

    fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = hi - g * (hi - lo);
        let mut d = lo + g * (hi - lo);
        for _ in 0..300 {
            if f(c) < f(d) {
                hi = d;
            } else {
                lo = c;
            }
            c = hi - g * (hi - lo);
            d = lo + g * (hi - lo);
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn closed_form_examples() {
        assert!((rho_from_coefficients(1.0, 4.0).0 - 1.0).abs() < 1e-15);
        let (r, capped) = rho_from_coefficients(1.0, 128.0);
        assert!((r - 4.0).abs() < 1e-12);
        assert!(!capped);
        let num = golden_section(|p| p * p + 128.0 / p.sqrt(), 1e-3, 100.0);
        assert!((num - 4.0).abs() / 4.0 < 1e-7, "{num}");
    }

    #[test]
    fn zero_curvature_is_capped() {
        assert_eq!(rho_from_coefficients(0.0, 1.0), (RHO_MAX, true));
        let part = GroupPartition::new(vec![0.0, 0.5, 1.0]).unwrap();
        let prof = optimal_rho(&figure3_spec(), &part);
        // right half of the demo spec is flat
        assert_eq!(prof.capped_groups(), &[1]);
        assert_eq!(prof.rho()[1], RHO_MAX);
    }

    #[test]
    fn simplified_examples() {
        assert_eq!(simplified_rho(1.0, 1.0).unwrap(), 1.0);
        let p = 2f64.powi(-5);
        assert_eq!(simplified_rho(p, p).unwrap(), 0.015625);
        assert!(simplified_rho(0.0, 1.0).is_err());
        assert!(simplified_rho(1.0, -1.0).is_err());
        let mut prev = 0.0;
        for k in 1..50 {
            let v = simplified_rho(0.7, k as f64 * 0.01).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    fn two_group_dataset() -> (Dataset, GroupPartition) {
        let pts = [0.1, 0.2, 0.6, 0.9].iter().map(|&x| Point { x, y: 0.0 }).collect();
        (Dataset::new(Task::Regression, pts, None).unwrap(), GroupPartition::new(vec![0.0, 0.5, 1.0]).unwrap())
    }

    #[test]
    fn tau_examples() {
        let (ds, part) = two_group_dataset();
        let p = 2f64.powi(-5);
        let w = tau_weights(&ds, &part, &[p, p], &[p, p]).unwrap();
        assert!(w.tau().iter().all(|&t| t == 0.5));

        // regression: I ≡ 1 gives q^{-2/5}
        let w = tau_weights(&ds, &part, &[1.8, 0.2], &[1.0, 1.0]).unwrap();
        assert!((w.tau()[0] - 1.8f64.powf(-0.4)).abs() < 1e-15);
        assert!((w.tau()[3] - 0.2f64.powf(-0.4)).abs() < 1e-15);
        // rarer group, equal I: strictly larger weight
        assert!(w.tau()[3] > w.tau()[0]);
    }

    #[test]
    fn tau_times_q_is_rho_exactly() {
        let (ds, part) = two_group_dataset();
        let q = [1.37, 0.2113];
        let i = [0.061, 0.2477];
        let w = tau_weights(&ds, &part, &q, &i).unwrap();
        for (p, t) in ds.points.iter().zip(w.tau()) {
            let j = part.group_of(p.x);
            assert_eq!(t * q[j], simplified_rho(q[j], i[j]).unwrap());
        }
    }

    #[test]
    fn missing_estimate_names_group() {
        let (ds, part) = two_group_dataset();
        match tau_weights(&ds, &part, &[1.0, f64::NAN], &[1.0, 1.0]) {
            Err(Error::MissingEstimate { group, .. }) => assert_eq!(group, 1),
            other => panic!("{other:?}"),
        }
        // a group without examples may lack an estimate
        let ds1 = ds.subset(&[0, 1]);
        assert!(tau_weights(&ds1, &part, &[1.0, 0.0], &[1.0, 0.0]).is_ok());
    }

    #[test]
    fn uniform_examples() {
        let part = GroupPartition::uniform(3).unwrap();
        let p = uniform_profile(&part, 1.0).unwrap();
        assert_eq!(p.rho(), &[1.0, 1.0, 1.0]);
        let single = uniform_profile(&GroupPartition::uniform(1).unwrap(), 2.5).unwrap();
        assert_eq!(single.rho(), &[2.5]);
        assert!(uniform_profile(&part, 0.0).is_err());

        let opt = RegProfile::new(part.clone(), vec![0.5, 3.0, 1.0]).unwrap();
        let u = p.with_mean(opt.mean());
        assert!((u.mean() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn profile_csv_layout() {
        let p = RegProfile::new(GroupPartition::new(vec![0.0, 0.25, 1.0]).unwrap(), vec![2.0, 0.5]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "group_lo,group_hi,rho\n0,0.25,2\n0.25,1,0.5\n");
    }
}
