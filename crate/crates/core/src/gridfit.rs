//! Penalized likelihood on a uniform grid over `[0, 1]`.
//!
//! The estimator is a continuous piecewise-linear function with values `v_u`
//! at nodes `t_u = u / (m - 1)`. The objective is
//!
//! ```text
//! (1/n) Σ_i ℓ(g(x_i), y_i) + λ · penalty(v)
//! ```
//!
//! where the penalty is either `Σ_cells ρ(mid) (Δv/Δt)² Δt` (integral form)
//! or `(1/n) Σ_i τ_i slope(x_i)²` (per-example form). Both losses are convex
//! and both penalties are quadratic in cell differences, so the Hessian is
//! tridiagonal and each Newton step is one banded solve.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, ProblemSpec, Task};
use crate::error::{Error, Result};
use crate::loss;
use crate::quad;
use crate::regprofile::{ExampleWeights, RegProfile};

/// Grid size used when none is given.
pub const DEFAULT_GRID: usize = 257;
/// Floor for loss curvature and Hessian diagonal entries.
pub const HESSIAN_FLOOR: f64 = 1e-12;
/// Bound on |f| for classification fits, where separable data has no finite
/// minimizer.
pub const VALUE_CAP: f64 = 50.0;

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::contract("grid function needs at least two nodes"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("grid values must be finite"));
        }
        Ok(GridFunction { values })
    }

    pub fn constant(m: usize, value: f64) -> Result<Self> {
        GridFunction::new(vec![value; m])
    }

    /// Samples `f` at the nodes.
    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        GridFunction::new((0..m).map(|u| f(node(m, u))).collect())
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node(&self, u: usize) -> f64 {
        node(self.m(), u)
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.m() - 1) as f64
    }

    /// Linear interpolation; exact at nodes, clamped outside `[0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let (c, w) = locate(self.m(), x.clamp(0.0, 1.0));
        if w == 0.0 {
            self.values[c]
        } else {
            (1.0 - w) * self.values[c] + w * self.values[c + 1]
        }
    }

    pub fn slope_of_cell(&self, c: usize) -> f64 {
        (self.values[c + 1] - self.values[c]) / self.step()
    }

    pub fn slope_at(&self, x: f64) -> f64 {
        self.slope_of_cell(locate(self.m(), x.clamp(0.0, 1.0)).0)
    }

    /// `Σ |Δ slope|` across interior nodes.
    pub fn slope_total_variation(&self) -> f64 {
        (0..self.m() - 2)
            .map(|c| (self.slope_of_cell(c + 1) - self.slope_of_cell(c)).abs())
            .sum()
    }

    /// Writes `t,f` CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "f"])?;
        for (u, v) in self.values.iter().enumerate() {
            wtr.write_record([self.node(u).to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads `t,f` CSV and checks that nodes form the uniform grid.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows: Vec<(f64, f64)> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        let g = GridFunction::new(rows.iter().map(|r| r.1).collect())?;
        for (u, (t, _)) in rows.iter().enumerate() {
            if (t - g.node(u)).abs() > 1e-12 {
                return Err(Error::contract(format!("row {u}: node {t} is not on the uniform grid")));
            }
        }
        Ok(g)
    }
}

fn node(m: usize, u: usize) -> f64 {
    if u + 1 == m {
        1.0
    } else {
        u as f64 / (m - 1) as f64
    }
}

/// Cell index and interpolation weight for `x ∈ [0, 1]`.
fn locate(m: usize, x: f64) -> (usize, f64) {
    let cells = m - 1;
    let mut s = x * cells as f64;
    // u / (m - 1) * (m - 1) can land one ulp below u
    if (s - s.round()).abs() <= 4.0 * f64::EPSILON * s.max(1.0) {
        s = s.round();
    }
    let c = (s.floor() as usize).min(cells - 1);
    (c, (s - c as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyKind {
    IntegralRho,
    PerExampleTau,
}

/// What is penalized: a group profile (integral penalty) or per-example weights.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Profile(RegProfile),
    Weights(ExampleWeights),
}

impl Regularizer {
    pub fn kind(&self) -> PenaltyKind {
        match self {
            Regularizer::Profile(_) => PenaltyKind::IntegralRho,
            Regularizer::Weights(_) => PenaltyKind::PerExampleTau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub m: usize,
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once the objective gradient's sup-norm is at most this.
    pub grad_tol: f64,
    pub penalty_kind: PenaltyKind,
}

impl FitConfig {
    pub fn new(lambda: f64, penalty_kind: PenaltyKind) -> Self {
        FitConfig { m: DEFAULT_GRID, lambda, max_iters: 200, grad_tol: 1e-9, penalty_kind }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::contract("grid size m must be at least 2"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::contract("grad_tol must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::contract("lambda must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub function: GridFunction,
    pub log: Vec<IterRecord>,
    pub capped: bool,
}

impl FitOutcome {
    /// Writes `iteration,objective,grad_norm` CSV.
    pub fn write_log_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["iteration", "objective", "grad_norm"])?;
        for r in &self.log {
            wtr.write_record([r.iteration.to_string(), r.objective.to_string(), r.grad_norm.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Precomputed bookkeeping: each example's cell and weight, and the penalty
/// coefficient `κ_c` of each cell so that the penalty is `Σ κ_c (v_{c+1} - v_c)²`.
#[derive(Debug, Clone)]
pub struct GridProblem {
    task: Task,
    m: usize,
    cells: Vec<(usize, f64)>,
    labels: Vec<f64>,
    kappa: Vec<f64>,
    inv_n: f64,
}

impl GridProblem {
    pub fn new(dataset: &Dataset, reg: &Regularizer, config: &FitConfig) -> Result<Self> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(Error::contract("dataset is empty"));
        }
        if reg.kind() != config.penalty_kind {
            return Err(Error::contract(format!(
                "config asks for {:?} but the regularizer is {:?}",
                config.penalty_kind,
                reg.kind()
            )));
        }
        dataset.validate()?;
        let m = config.m;
        let n = dataset.len();
        let inv_n = 1.0 / n as f64;
        let dt = 1.0 / (m - 1) as f64;
        let cells: Vec<(usize, f64)> = dataset.points.iter().map(|p| locate(m, p.x)).collect();
        let kappa = match reg {
            Regularizer::Profile(profile) => (0..m - 1)
                .map(|c| config.lambda * profile.at((c as f64 + 0.5) * dt) / dt)
                .collect(),
            Regularizer::Weights(w) => {
                if w.len() != n {
                    return Err(Error::contract(format!(
                        "{} weights for {} examples",
                        w.len(),
                        n
                    )));
                }
                let mut k = vec![0.0; m - 1];
                for (&(c, _), &tau) in cells.iter().zip(w.tau()) {
                    k[c] += tau;
                }
                k.iter().map(|s| config.lambda * inv_n * s / (dt * dt)).collect()
            }
        };
        Ok(GridProblem {
            task: dataset.task,
            m,
            cells,
            labels: dataset.points.iter().map(|p| p.y).collect(),
            kappa,
            inv_n,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    fn predict(&self, v: &[f64], i: usize) -> f64 {
        let (c, w) = self.cells[i];
        if w == 0.0 {
            v[c]
        } else {
            (1.0 - w) * v[c] + w * v[c + 1]
        }
    }

    pub fn loss_term(&self, v: &[f64]) -> f64 {
        (0..self.labels.len())
            .map(|i| loss::value(self.task, self.predict(v, i), self.labels[i]))
            .sum::<f64>()
            * self.inv_n
    }

    /// `λ · penalty`.
    pub fn penalty_term(&self, v: &[f64]) -> f64 {
        self.kappa.iter().enumerate().map(|(c, k)| k * (v[c + 1] - v[c]).powi(2)).sum()
    }

    pub fn objective(&self, v: &[f64]) -> f64 {
        self.loss_term(v) + self.penalty_term(v)
    }

    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.m];
        for (i, &(c, w)) in self.cells.iter().enumerate() {
            let d = self.inv_n * loss::grad(self.task, self.predict(v, i), self.labels[i]);
            g[c] += (1.0 - w) * d;
            if w != 0.0 {
                g[c + 1] += w * d;
            }
        }
        for (c, k) in self.kappa.iter().enumerate() {
            let s = 2.0 * k * (v[c + 1] - v[c]);
            g[c] -= s;
            g[c + 1] += s;
        }
        g
    }

    /// Tridiagonal Hessian as `(diag, off)` with `off[c]` coupling `c` and `c+1`.
    pub fn hessian(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut diag = vec![0.0; self.m];
        let mut off = vec![0.0; self.m - 1];
        for (i, &(c, w)) in self.cells.iter().enumerate() {
            let h = self.inv_n * loss::hess(self.task, self.predict(v, i), self.labels[i]).max(HESSIAN_FLOOR);
            diag[c] += (1.0 - w) * (1.0 - w) * h;
            if w != 0.0 {
                diag[c + 1] += w * w * h;
                off[c] += w * (1.0 - w) * h;
            }
        }
        for (c, k) in self.kappa.iter().enumerate() {
            diag[c] += 2.0 * k;
            diag[c + 1] += 2.0 * k;
            off[c] -= 2.0 * k;
        }
        for d in &mut diag {
            *d = d.max(HESSIAN_FLOOR);
        }
        (diag, off)
    }
}

/// Solves a symmetric tridiagonal system by `LDLᵀ` elimination. Returns
/// `None` when a pivot is not positive.
pub fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let m = diag.len();
    let mut d = vec![0.0; m];
    let mut l = vec![0.0; m.saturating_sub(1)];
    let mut z = vec![0.0; m];
    d[0] = diag[0];
    z[0] = rhs[0];
    if !(d[0] > 0.0) {
        return None;
    }
    for u in 1..m {
        l[u - 1] = off[u - 1] / d[u - 1];
        d[u] = diag[u] - l[u - 1] * off[u - 1];
        if !(d[u] > 0.0) || !d[u].is_finite() {
            return None;
        }
        z[u] = rhs[u] - l[u - 1] * z[u - 1];
    }
    let mut x = vec![0.0; m];
    x[m - 1] = z[m - 1] / d[m - 1];
    for u in (0..m - 1).rev() {
        x[u] = z[u] / d[u] - l[u] * x[u + 1];
    }
    Some(x)
}

fn sup_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |a, &b| a.max(b.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits the grid function. See [`fit_with_log`].
pub fn fit(dataset: &Dataset, reg: &Regularizer, config: &FitConfig) -> Result<GridFunction> {
    Ok(fit_with_log(dataset, reg, config)?.function)
}

/// Damped Newton with Armijo backtracking; falls back to backtracking
/// gradient descent when the Newton direction fails to decrease the objective.
pub fn fit_with_log(dataset: &Dataset, reg: &Regularizer, config: &FitConfig) -> Result<FitOutcome> {
    let problem = GridProblem::new(dataset, reg, config)?;
    let start = match dataset.task {
        Task::Regression => dataset.mean_label(),
        Task::BinaryClassification => 0.0,
    };
    solve(&problem, vec![start; config.m], config)
}

pub fn solve(problem: &GridProblem, mut v: Vec<f64>, config: &FitConfig) -> Result<FitOutcome> {
    let cap = matches!(problem.task, Task::BinaryClassification);
    let mut capped = false;
    let mut f = problem.objective(&v);
    let mut log = Vec::new();
    for iteration in 0..=config.max_iters {
        let g = problem.gradient(&v);
        let gn = sup_norm(&g);
        log.push(IterRecord { iteration, objective: f, grad_norm: gn });
        if gn <= config.grad_tol {
            return Ok(FitOutcome { function: GridFunction { values: v }, log, capped });
        }
        if iteration == config.max_iters {
            break;
        }

        let (diag, off) = problem.hessian(&v);
        let neg_g: Vec<f64> = g.iter().map(|x| -x).collect();
        let newton = solve_tridiagonal(&diag, &off, &neg_g).filter(|d| dot(d, &g) < 0.0);
        let mut stepped = false;
        if let Some(d) = newton {
            if let Some((nv, nf, hit)) = backtrack(problem, &v, f, &g, &d, 1.0, cap) {
                v = nv;
                f = nf;
                capped |= hit;
                stepped = true;
            }
        }
        if !stepped {
            // Scale the gradient step by the largest curvature.
            let t0 = 1.0 / diag.iter().fold(0.0f64, |a, &b| a.max(b)).max(HESSIAN_FLOOR);
            match backtrack(problem, &v, f, &g, &neg_g, t0, cap) {
                Some((nv, nf, hit)) => {
                    v = nv;
                    f = nf;
                    capped |= hit;
                }
                None => {
                    return Err(Error::NotConverged {
                        iterations: iteration,
                        grad_norm: gn,
                        last: Box::new(GridFunction { values: v }),
                    })
                }
            }
        }
    }
    let gn = sup_norm(&problem.gradient(&v));
    Err(Error::NotConverged {
        iterations: config.max_iters,
        grad_norm: gn,
        last: Box::new(GridFunction { values: v }),
    })
}

fn backtrack(
    problem: &GridProblem,
    v: &[f64],
    f: f64,
    g: &[f64],
    d: &[f64],
    t0: f64,
    cap: bool,
) -> Option<(Vec<f64>, f64, bool)> {
    let slope = dot(g, d);
    let mut t = t0;
    for _ in 0..MAX_HALVINGS {
        let mut hit = false;
        let nv: Vec<f64> = v
            .iter()
            .zip(d)
            .map(|(a, b)| {
                let x = a + t * b;
                if cap && x.abs() > VALUE_CAP {
                    hit = true;
                    x.clamp(-VALUE_CAP, VALUE_CAP)
                } else {
                    x
                }
            })
            .collect();
        let nf = problem.objective(&nv);
        if nf.is_finite() && nf <= f + ARMIJO_C * t * slope && nf < f {
            if hit {
                log::warn!("classification fit reached the |f| <= {VALUE_CAP} cap");
            }
            return Some((nv, nf, hit));
        }
        t *= 0.5;
    }
    None
}

/// `∫_lo^hi (h(t) - f*(t))² dt` by adaptive quadrature split at `breaks` and
/// the spec's own breakpoints.
pub fn integrated_sq_error<H: Fn(f64) -> f64>(
    h: H,
    spec: &ProblemSpec,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    rel_tol: f64,
) -> f64 {
    let mut all = spec.breakpoints();
    all.extend_from_slice(breaks);
    quad::integrate(|t| (h(t) - spec.f(t)).powi(2), lo, hi, &all, rel_tol)
}

/// Unweighted `∫_0^1 (g - f*)²`, integrating cell by cell.
pub fn empirical_mse(g: &GridFunction, spec: &ProblemSpec) -> f64 {
    region_mse(g, spec, 0.0, 1.0)
}

/// `∫_lo^hi (g - f*)²`.
pub fn region_mse(g: &GridFunction, spec: &ProblemSpec, lo: f64, hi: f64) -> f64 {
    let nodes: Vec<f64> = (0..g.m()).map(|u| g.node(u)).collect();
    integrated_sq_error(|t| g.eval(t), spec, lo, hi, &nodes, 1e-11)
}
