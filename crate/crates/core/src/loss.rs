//! Per-example losses shared by the grid solver and the network trainer.
//!
//! Classification uses the logistic loss `log(1 + exp(-y a))` with labels in
//! `{-1, +1}`; regression uses `0.5 (y - a)^2`.

use crate::domain::Task;

/// Numerically stable `log(1 + exp(z))`.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Numerically stable logistic function `1 / (1 + exp(-z))`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn value(task: Task, a: f64, y: f64) -> f64 {
    match task {
        Task::BinaryClassification => softplus(-y * a),
        Task::Regression => 0.5 * (y - a) * (y - a),
    }
}

/// dℓ/da
#[inline]
pub fn grad(task: Task, a: f64, y: f64) -> f64 {
    match task {
        Task::BinaryClassification => -y * sigmoid(-y * a),
        Task::Regression => a - y,
    }
}

/// d²ℓ/da²
#[inline]
pub fn hess(task: Task, a: f64, y: f64) -> f64 {
    match task {
        Task::BinaryClassification => {
            let s = sigmoid(y * a);
            s * (1.0 - s)
        }
        Task::Regression => 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logistic_derivatives_match_finite_differences() {
        let h = 1e-6;
        for &(a, y) in &[(0.3, 1.0), (-2.0, 1.0), (1.7, -1.0), (0.0, -1.0)] {
            let t = Task::BinaryClassification;
            let fd1 = (value(t, a + h, y) - value(t, a - h, y)) / (2.0 * h);
            let fd2 = (grad(t, a + h, y) - grad(t, a - h, y)) / (2.0 * h);
            assert!((fd1 - grad(t, a, y)).abs() < 1e-8);
            assert!((fd2 - hess(t, a, y)).abs() < 1e-8);
        }
    }
}
