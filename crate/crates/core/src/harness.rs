//! Monte-Carlo experiments and the two-stage adaptive pipeline.
//!
//! Every experiment derives per-repetition seeds from one root seed, so
//! results do not depend on scheduling: repetitions run in parallel and are
//! aggregated in index order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{figure3_spec, Dataset, GroupPartition, ProblemSpec, Task};
use crate::error::{Error, Result};
use crate::gridfit::{self, FitConfig, GridFunction, PenaltyKind, Regularizer, DEFAULT_GRID};
use crate::mlp::{self, MlpConfig, MlpModel, SgdConfig};
use crate::regprofile::{self, ExampleWeights, RegProfile};
use crate::theory;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `stream` of root `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream))
}

/// Fraction of a Monte-Carlo run allowed to fail before the run aborts.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

/// How a Monte-Carlo repetition regularizes its fit.
#[derive(Debug, Clone, PartialEq)]
pub enum McRegularizer {
    /// Integral penalty with the profile itself.
    Integral(RegProfile),
    /// Per-example penalty with `τ_i = ρ(x_i) / q(x_i)` under the true density.
    PerExample(RegProfile),
}

impl McRegularizer {
    fn for_dataset(&self, spec: &ProblemSpec, ds: &Dataset) -> Result<Regularizer> {
        Ok(match self {
            McRegularizer::Integral(p) => Regularizer::Profile(p.clone()),
            McRegularizer::PerExample(p) => Regularizer::Weights(regprofile::weights_for_profile(p, spec, ds)?),
        })
    }

    fn kind(&self) -> PenaltyKind {
        match self {
            McRegularizer::Integral(_) => PenaltyKind::IntegralRho,
            McRegularizer::PerExample(_) => PenaltyKind::PerExampleTau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n: usize,
    pub lambda: f64,
    pub reps: usize,
    pub seed: u64,
    pub grid: usize,
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl McConfig {
    pub fn new(n: usize, lambda: f64, reps: usize, seed: u64) -> Self {
        McConfig { n, lambda, reps, seed, grid: DEFAULT_GRID, grad_tol: 1e-9, max_iters: 200 }
    }

    fn fit_config(&self, kind: PenaltyKind) -> FitConfig {
        FitConfig { m: self.grid, lambda: self.lambda, max_iters: self.max_iters, grad_tol: self.grad_tol, penalty_kind: kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub profile: String,
    pub n: usize,
    pub lambda: f64,
    pub seed: u64,
    pub reps: usize,
    pub failures: usize,
    pub mean_mse: f64,
    /// Sample standard deviation over successful repetitions divided by
    /// the square root of their count.
    pub std_error: f64,
    pub per_rep_mse: Vec<f64>,
}

/// Mean and standard error of a sample (`n - 1` denominator).
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Estimates `E ∫ (f̂ - f*)²` by repeated sampling and fitting.
pub fn monte_carlo_mse(spec: &ProblemSpec, reg: &McRegularizer, name: &str, config: &McConfig) -> Result<McReport> {
    if config.reps < 2 {
        return Err(Error::contract("Monte-Carlo needs at least 2 repetitions"));
    }
    let fit_cfg = config.fit_config(reg.kind());
    let results: Vec<Result<f64>> = (0..config.reps)
        .into_par_iter()
        .map(|r| {
            let ds = spec.sample_dataset(config.n, derive_seed(config.seed, r as u64))?;
            let g = gridfit::fit(&ds, &reg.for_dataset(spec, &ds)?, &fit_cfg)?;
            Ok(gridfit::empirical_mse(&g, spec))
        })
        .collect();

    let mut per_rep = Vec::with_capacity(config.reps);
    let mut failures = 0;
    for r in results {
        match r {
            Ok(v) => per_rep.push(v),
            Err(e) if e.is_solver_failure() => {
                log::warn!("Monte-Carlo repetition failed: {e}");
                failures += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if failures as f64 > MAX_FAILURE_FRACTION * config.reps as f64 || per_rep.len() < 2 {
        return Err(Error::TooManyFailures { failures, reps: config.reps });
    }
    let (mean_mse, std_error) = mean_and_se(&per_rep);
    Ok(McReport {
        profile: name.to_string(),
        n: config.n,
        lambda: config.lambda,
        seed: config.seed,
        reps: config.reps,
        failures,
        mean_mse,
        std_error,
        per_rep_mse: per_rep,
    })
}

/// `(mean_b - mean_a) / sqrt(se_a² + se_b²)`; positive when `a` has the
/// lower mean.
pub fn z_score(a: &McReport, b: &McReport) -> f64 {
    (b.mean_mse - a.mean_mse) / (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub n: usize,
    /// `λ = C0 n^{-2/5}`; the functional is evaluated at `λ = C0`.
    pub c0: f64,
    pub reps: usize,
    pub seed: u64,
    pub grid: usize,
    /// Uniform candidates are `mean(optimal) · factor^k` for `k = -3..=3`.
    pub uniform_factor: f64,
}

impl CompareConfig {
    pub fn new(n: usize, reps: usize, seed: u64) -> Self {
        CompareConfig { n, c0: 1.0, reps, seed, grid: DEFAULT_GRID, uniform_factor: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileResult {
    pub name: String,
    pub rho: Vec<f64>,
    pub mc: McReport,
    pub theory_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairZ {
    pub better: String,
    pub worse: String,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n: usize,
    pub lambda: f64,
    pub c0: f64,
    pub reps: usize,
    pub seed: u64,
    /// optimal, simplified, best-uniform, inverse
    pub profiles: Vec<ProfileResult>,
    /// every uniform candidate, ascending level
    pub uniform_candidates: Vec<ProfileResult>,
    /// `z(a, b)` for every ordered pair of the main profiles
    pub z_scores: Vec<PairZ>,
    /// `argmin_c Σ (MC_p - c · theory_p)²`
    pub theory_scale: f64,
    pub spearman: f64,
}

impl ComparisonReport {
    pub fn profile(&self, name: &str) -> Option<&ProfileResult> {
        self.profiles.iter().find(|p| p.name == name)
    }

    pub fn z(&self, better: &str, worse: &str) -> Option<f64> {
        self.z_scores.iter().find(|p| p.better == better && p.worse == worse).map(|p| p.z)
    }

    /// Writes `profile,mean_mse,se,theory_total` CSV.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["profile", "mean_mse", "se", "theory_total"])?;
        for p in &self.profiles {
            wtr.write_record([
                p.name.clone(),
                p.mc.mean_mse.to_string(),
                p.mc.std_error.to_string(),
                p.theory_total.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Runs the Monte-Carlo MSE for the optimal, simplified, best-uniform, and
/// inverse-adaptive profiles on the same datasets, and relates the outcome to
/// the asymptotic functional.
///
/// The simplified and inverse profiles are rescaled to the optimal profile's
/// width-weighted mean so all three spend the same regularization budget.
pub fn compare_profiles(spec: &ProblemSpec, partition: &GroupPartition, config: &CompareConfig) -> Result<ComparisonReport> {
    let lambda = theory::lambda_from_c0(config.c0, config.n);
    let mc = McConfig { grid: config.grid, ..McConfig::new(config.n, lambda, config.reps, config.seed) };
    let coeffs = theory::group_coefficients(spec, partition);
    let optimal = regprofile::optimal_from_coefficients(partition, &coeffs);
    let budget = optimal.mean();
    let simplified = regprofile::simplified_profile(spec, partition)?.with_mean(budget);
    let inverse = regprofile::inverse_profile(spec, partition)?.with_mean(budget);

    let run = |name: String, profile: RegProfile| -> Result<ProfileResult> {
        let report = monte_carlo_mse(spec, &McRegularizer::Integral(profile.clone()), &name, &mc)?;
        let theory_total = theory::report_from(&coeffs, profile.rho(), config.c0).total;
        Ok(ProfileResult { name, rho: profile.rho().to_vec(), mc: report, theory_total })
    };

    let mut uniform_candidates = Vec::with_capacity(7);
    for k in -3..=3 {
        let level = budget * config.uniform_factor.powi(k);
        let p = regprofile::uniform_profile(partition, level)?;
        uniform_candidates.push(run(format!("uniform({level:.6e})"), p)?);
    }
    let best = uniform_candidates
        .iter()
        .min_by(|a, b| a.mc.mean_mse.total_cmp(&b.mc.mean_mse))
        .expect("seven candidates")
        .clone();
    let best_uniform = ProfileResult { name: "best-uniform".into(), ..best };

    let profiles = vec![
        run("optimal".into(), optimal)?,
        run("simplified".into(), simplified)?,
        best_uniform,
        run("inverse".into(), inverse)?,
    ];

    let mut z_scores = Vec::new();
    for a in &profiles {
        for b in &profiles {
            if a.name != b.name {
                z_scores.push(PairZ { better: a.name.clone(), worse: b.name.clone(), z: z_score(&a.mc, &b.mc) });
            }
        }
    }
    let mc_means: Vec<f64> = profiles.iter().map(|p| p.mc.mean_mse).collect();
    let totals: Vec<f64> = profiles.iter().map(|p| p.theory_total).collect();
    let theory_scale = mc_means.iter().zip(&totals).map(|(m, t)| m * t).sum::<f64>()
        / totals.iter().map(|t| t * t).sum::<f64>();
    let spearman = spearman(&mc_means, &totals);

    Ok(ComparisonReport {
        n: config.n,
        lambda,
        c0: config.c0,
        reps: config.reps,
        seed: config.seed,
        profiles,
        uniform_candidates,
        z_scores,
        theory_scale,
        spearman,
    })
}

/// `1 - max_k Pr[Y = k | X = x]` for the larger class probability `p_max`.
pub fn uncertainty_proxy(prob_max: f64) -> f64 {
    1.0 - prob_max
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PilotModel {
    GridFit,
    Mlp,
}

/// Per-group `(q, I)` values used in place of estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEstimates {
    pub q: Vec<f64>,
    pub info: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarConfig {
    pub seed: u64,
    pub model: PilotModel,
    pub grid: usize,
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Uniform-profile strength of the pilot grid fit.
    pub pilot_lambda: f64,
    /// Strength of the final fit; replaced when `lambda_cap` is set.
    pub final_lambda: f64,
    /// Choose `λ` so that `max_i λ τ_i` equals this value.
    pub lambda_cap: Option<f64>,
    /// Lower bound on estimated uncertainty.
    pub info_floor: f64,
    pub mlp: MlpConfig,
    pub sgd: SgdConfig,
    /// Replaces the estimated `(q, I)` when present.
    #[serde(default)]
    pub oracle: Option<GroupEstimates>,
}

impl Default for HarConfig {
    fn default() -> Self {
        HarConfig {
            seed: 0,
            model: PilotModel::GridFit,
            grid: DEFAULT_GRID,
            grad_tol: 1e-9,
            max_iters: 200,
            pilot_lambda: 1e-3,
            final_lambda: 1e-3,
            lambda_cap: None,
            info_floor: 0.01,
            mlp: MlpConfig::default(),
            sgd: SgdConfig::default(),
            oracle: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotMetrics {
    pub train_size: usize,
    pub val_size: usize,
    /// Misclassification rate (classification) or mean squared residual
    /// (regression) on the validation half.
    pub val_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarReport {
    pub partition: Vec<f64>,
    pub seed: u64,
    pub q_hat: Vec<f64>,
    pub i_hat: Vec<f64>,
    pub val_counts: Vec<usize>,
    pub tau: Vec<f64>,
    pub final_lambda: f64,
    pub pilot: PilotMetrics,
    /// `integrated_sq_error` when the truth is known, else `training_error`.
    pub group_error_kind: String,
    pub group_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FinalModel {
    Grid(GridFunction),
    Mlp(MlpModel),
}

impl FinalModel {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FinalModel::Grid(g) => g.eval(x),
            FinalModel::Mlp(m) => m.predict(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarOutcome {
    pub report: HarReport,
    pub model: FinalModel,
}

fn predicted_label(score: f64) -> f64 {
    if score >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn fit_model(
    ds: &Dataset,
    weights: &ExampleWeights,
    lambda: f64,
    config: &HarConfig,
    stream: u64,
    integral_uniform: bool,
) -> Result<FinalModel> {
    match config.model {
        PilotModel::GridFit => {
            let (reg, kind) = if integral_uniform {
                let p = regprofile::uniform_profile(&GroupPartition::uniform(1)?, 1.0)?;
                (Regularizer::Profile(p), PenaltyKind::IntegralRho)
            } else {
                (Regularizer::Weights(weights.clone()), PenaltyKind::PerExampleTau)
            };
            let cfg = FitConfig { m: config.grid, lambda, max_iters: config.max_iters, grad_tol: config.grad_tol, penalty_kind: kind };
            Ok(FinalModel::Grid(gridfit::fit(ds, &reg, &cfg)?))
        }
        PilotModel::Mlp => {
            let init = MlpModel::init(&config.mlp, derive_seed(config.seed, stream))?;
            let sgd = SgdConfig { seed: derive_seed(config.seed, stream + 1), ..config.sgd.clone() };
            Ok(FinalModel::Mlp(mlp::train(&init, ds, weights, lambda, &sgd)?.model))
        }
    }
}

/// Two-stage pipeline: split, pilot fit, estimate `(q, I)` per group, refit
/// on the full data with per-example weights `τ_i = Î^{3/5} q̂^{-2/5}`.
///
/// `truth`, when given, is used only to score the final model.
pub fn har_run(
    dataset: &Dataset,
    truth: Option<&ProblemSpec>,
    partition: &GroupPartition,
    config: &HarConfig,
) -> Result<HarOutcome> {
    if dataset.len() < 2 {
        return Err(Error::contract("need at least two examples to split"));
    }
    dataset.validate()?;
    let k = partition.group_count();
    let n = dataset.len();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1)));
    let half = n / 2;
    let (train_idx, val_idx) = order.split_at(half);
    let train = dataset.subset(train_idx);
    let val = dataset.subset(val_idx);

    let mut val_counts = vec![0usize; k];
    for p in &val.points {
        val_counts[partition.group_of(p.x)] += 1;
    }
    if let Some(j) = val_counts.iter().position(|&c| c == 0) {
        let (lo, hi) = partition.bounds(j);
        return Err(Error::EmptyValidationGroup { group: j, lo, hi });
    }

    // Pilot: uniform integral penalty for the grid model, plain SGD for the MLP.
    let pilot = match config.model {
        PilotModel::GridFit => fit_model(&train, &ExampleWeights::uniform(train.len()), config.pilot_lambda, config, 10, true)?,
        PilotModel::Mlp => fit_model(&train, &ExampleWeights::uniform(train.len()), 0.0, config, 10, false)?,
    };

    let mut group_err = vec![0.0; k];
    let mut val_err = 0.0;
    for p in &val.points {
        let s = pilot.eval(p.x);
        let e = match dataset.task {
            Task::BinaryClassification => (predicted_label(s) != p.y) as u8 as f64,
            Task::Regression => (s - p.y).powi(2),
        };
        group_err[partition.group_of(p.x)] += e;
        val_err += e;
    }
    let pilot_metrics = PilotMetrics { train_size: train.len(), val_size: val.len(), val_error: val_err / val.len() as f64 };

    let (q_hat, i_hat) = match &config.oracle {
        Some(o) => {
            if o.q.len() != k || o.info.len() != k {
                return Err(Error::contract(format!("oracle needs {k} values per quantity")));
            }
            (o.q.clone(), o.info.clone())
        }
        None => {
            let mut counts = vec![0usize; k];
            for p in &dataset.points {
                counts[partition.group_of(p.x)] += 1;
            }
            let q: Vec<f64> = (0..k).map(|j| counts[j] as f64 / (n as f64 * partition.width(j))).collect();
            let i: Vec<f64> = (0..k)
                .map(|j| match dataset.task {
                    Task::BinaryClassification => (group_err[j] / val_counts[j] as f64).max(config.info_floor),
                    Task::Regression => 1.0,
                })
                .collect();
            (q, i)
        }
    };

    let weights = regprofile::tau_weights(dataset, partition, &q_hat, &i_hat)?;
    let final_lambda = match config.lambda_cap {
        Some(cap) => cap / weights.max(),
        None => config.final_lambda,
    };
    let model = fit_model(dataset, &weights, final_lambda, config, 20, false)?;

    let (group_error_kind, group_errors) = match truth {
        Some(spec) => (
            "integrated_sq_error".to_string(),
            (0..k)
                .map(|j| {
                    let (lo, hi) = partition.bounds(j);
                    let breaks = match &model {
                        FinalModel::Grid(g) => (0..g.m()).map(|u| g.node(u)).collect(),
                        FinalModel::Mlp(_) => Vec::new(),
                    };
                    gridfit::integrated_sq_error(|t| model.eval(t), spec, lo, hi, &breaks, 1e-9)
                })
                .collect(),
        ),
        None => {
            let mut err = vec![0.0; k];
            let mut cnt = vec![0usize; k];
            for p in &dataset.points {
                let j = partition.group_of(p.x);
                let s = model.eval(p.x);
                err[j] += match dataset.task {
                    Task::BinaryClassification => (predicted_label(s) != p.y) as u8 as f64,
                    Task::Regression => (s - p.y).powi(2),
                };
                cnt[j] += 1;
            }
            ("training_error".to_string(), err.iter().zip(&cnt).map(|(e, &c)| if c == 0 { 0.0 } else { e / c as f64 }).collect())
        }
    };

    Ok(HarOutcome {
        report: HarReport {
            partition: partition.breakpoints().to_vec(),
            seed: config.seed,
            q_hat,
            i_hat,
            val_counts,
            tau: weights.tau().to_vec(),
            final_lambda,
            pilot: pilot_metrics,
            group_error_kind,
            group_errors,
        },
        model,
    })
}

/// Samples `n` examples from `spec` (seeded from `config.seed`) and runs
/// [`har_run`], scoring against the truth.
pub fn har_run_spec(spec: &ProblemSpec, n: usize, partition: &GroupPartition, config: &HarConfig) -> Result<HarOutcome> {
    let ds = spec.sample_dataset(n, derive_seed(config.seed, 0))?;
    har_run(&ds, Some(spec), partition, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure3Config {
    pub n: usize,
    pub seed: u64,
    pub lambda_weak: f64,
    pub lambda_strong: f64,
    /// The adaptive model uses `λ = lambda_cap / max_i τ_i`.
    pub lambda_cap: f64,
    pub mlp: MlpConfig,
    pub sgd: SgdConfig,
    /// Number of evenly spaced points in the emitted curves.
    pub curve_points: usize,
}

impl Default for Figure3Config {
    fn default() -> Self {
        Figure3Config {
            n: 200,
            seed: 0,
            lambda_weak: 0.003,
            lambda_strong: 0.3,
            lambda_cap: 0.3,
            mlp: MlpConfig::default(),
            sgd: SgdConfig::default(),
            curve_points: 501,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionErrors {
    pub model: String,
    pub lambda: f64,
    pub left_mse: f64,
    pub right_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure3Outcome {
    pub errors: Vec<RegionErrors>,
    pub weak: MlpModel,
    pub strong: MlpModel,
    pub adaptive: MlpModel,
    pub tau: ExampleWeights,
    pub dataset: Dataset,
}

impl Figure3Outcome {
    pub fn region(&self, model: &str) -> Option<&RegionErrors> {
        self.errors.iter().find(|e| e.model == model)
    }

    /// Writes `x,truth,weak,strong,adaptive` CSV on an even grid.
    pub fn write_curves_csv<W: std::io::Write>(&self, spec: &ProblemSpec, points: usize, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "truth", "weak", "strong", "adaptive"])?;
        let last = points.max(2) - 1;
        for i in 0..=last {
            let x = i as f64 / last as f64;
            wtr.write_record([
                x.to_string(),
                spec.f(x).to_string(),
                self.weak.predict(x).to_string(),
                self.strong.predict(x).to_string(),
                self.adaptive.predict(x).to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Trains the weak-uniform, strong-uniform, and adaptive MLPs on one sample
/// of the spec, from the same initialization and batch order.
///
/// The adaptive weights are `τ_i = I^{3/5} q^{-2/5}` with the true group
/// means of `q` and `I` over the halves `[0, 0.5]` and `(0.5, 1]`.
pub fn figure3_run(spec: &ProblemSpec, config: &Figure3Config) -> Result<Figure3Outcome> {
    let ds = spec.sample_dataset(config.n, derive_seed(config.seed, 0))?;
    let partition = GroupPartition::new(vec![0.0, 0.5, 1.0])?;
    let (q, info) = regprofile::group_means(spec, &partition);
    let tau = regprofile::tau_weights(&ds, &partition, &q, &info)?;
    let init = MlpModel::init(&config.mlp, derive_seed(config.seed, 1))?;
    let sgd = SgdConfig { seed: derive_seed(config.seed, 2), ..config.sgd.clone() };
    let uniform = ExampleWeights::uniform(ds.len());
    let lambda_adaptive = config.lambda_cap / tau.max();

    let runs = [
        ("weak", config.lambda_weak, &uniform),
        ("strong", config.lambda_strong, &uniform),
        ("adaptive", lambda_adaptive, &tau),
    ];
    let models: Vec<Result<MlpModel>> = runs
        .par_iter()
        .map(|(_, lambda, w)| Ok(mlp::train(&init, &ds, w, *lambda, &sgd)?.model))
        .collect();
    let mut models = models.into_iter().collect::<Result<Vec<_>>>()?;

    let errors = runs
        .iter()
        .zip(&models)
        .map(|((name, lambda, _), m)| RegionErrors {
            model: name.to_string(),
            lambda: *lambda,
            left_mse: gridfit::integrated_sq_error(|x| m.predict(x), spec, 0.0, 0.5, &[], 1e-8),
            right_mse: gridfit::integrated_sq_error(|x| m.predict(x), spec, 0.5, 1.0, &[], 1e-8),
        })
        .collect();
    let adaptive = models.pop().expect("three models");
    let strong = models.pop().expect("three models");
    let weak = models.pop().expect("three models");
    Ok(Figure3Outcome { errors, weak, strong, adaptive, tau, dataset: ds })
}

/// Figure-3 summary over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure3Summary {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<Vec<RegionErrors>>,
    /// Averages over seeds, one entry per model.
    pub mean: Vec<RegionErrors>,
}

pub fn figure3_experiment(spec: &ProblemSpec, config: &Figure3Config, seeds: &[u64]) -> Result<Figure3Summary> {
    let per_seed = seeds
        .iter()
        .map(|&s| Ok(figure3_run(spec, &Figure3Config { seed: s, ..config.clone() })?.errors))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_figure3(seeds, per_seed))
}

/// Averages per-seed region errors, model by model.
pub fn summarize_figure3(seeds: &[u64], per_seed: Vec<Vec<RegionErrors>>) -> Figure3Summary {
    let k = per_seed.len().max(1) as f64;
    let mean = ["weak", "strong", "adaptive"]
        .iter()
        .enumerate()
        .map(|(i, name)| RegionErrors {
            model: name.to_string(),
            lambda: per_seed.first().map_or(f64::NAN, |e| e[i].lambda),
            left_mse: per_seed.iter().map(|e| e[i].left_mse).sum::<f64>() / k,
            right_mse: per_seed.iter().map(|e| e[i].right_mse).sum::<f64>() / k,
        })
        .collect();
    Figure3Summary { seeds: seeds.to_vec(), per_seed, mean }
}

/// The default Figure-3 setup on the built-in spec.
pub fn figure3_default(seeds: &[u64]) -> Result<Figure3Summary> {
    figure3_experiment(&figure3_spec(), &Figure3Config::default(), seeds)
}
