//! Command-line front end.
//!
//! Every subcommand accepts `--config <file.json>`, a JSON object whose keys
//! are the subcommand's long flags in snake case. Unknown keys are rejected
//! and flags given on the command line override values from the file.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::domain::{builtin_spec, Dataset, GroupPartition, ProblemSpec, Task, BUILTIN_SPECS};
use crate::error::{Error, Result};
use crate::gridfit::{self, FitConfig, GridFunction, PenaltyKind, Regularizer, DEFAULT_GRID};
use crate::harness::{self, CompareConfig, Figure3Config, FinalModel, HarConfig, PilotModel};
use crate::mlp::{MlpConfig, SgdConfig};
use crate::regprofile::{self, RegProfile};
use crate::theory;

/// Environment variable consulted when no seed is given.
pub const SEED_ENV: &str = "HETEROREG_SEED";

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "heteroreg", version, about = "Heteroskedastic adaptive regularization experiments")]
pub struct Cli {
    /// JSON file with default values for the subcommand's options.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel experiments.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a dataset from a problem spec.
    Generate(GenerateArgs),
    /// Fit the grid estimator to a dataset.
    Fit(FitArgs),
    /// Score a fitted grid function against a spec.
    Eval(EvalArgs),
    /// Evaluate the asymptotic risk functional for a profile.
    Theory(TheoryArgs),
    /// Monte-Carlo comparison of regularization profiles.
    Compare(CompareArgs),
    /// Run the two-stage adaptive pipeline.
    Har(HarArgs),
    /// Weak, strong, and adaptive MLP fits on the Figure-3 problem.
    Figure3(Figure3Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskArg {
    Classification,
    Regression,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Classification => Task::BinaryClassification,
            TaskArg::Regression => Task::Regression,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileArg {
    Uniform,
    Optimal,
    Simplified,
    Inverse,
    /// Per-group values from `--rho`.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyArg {
    Integral,
    PerExample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Grid,
    Mlp,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateArgs {
    /// Built-in spec name or path to a spec JSON file.
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; the sidecar is written next to it with a `.json` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOpts {
    /// Group breakpoints, comma separated, from 0 to 1.
    #[arg(long, value_delimiter = ',')]
    pub partition: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
    /// Level of the uniform profile.
    #[arg(long)]
    pub level: Option<f64>,
    /// Per-group values for the explicit profile, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Spec providing the task, the density for per-example weights, and
    /// the inputs of model-based profiles.
    #[arg(long)]
    pub spec: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub profile: ProfileOpts,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyArg>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Fitted function CSV (`t,f`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Iteration log CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    /// Fitted function CSV written by `fit`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub partition: Option<Vec<f64>>,
    /// JSON output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryArgs {
    #[arg(long)]
    pub spec: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub profile: ProfileOpts,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// With `--n`, sets `λ = c0 n^{-2/5}`.
    #[arg(long)]
    pub c0: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Per-group table CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareArgs {
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub partition: Option<Vec<f64>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub c0: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpOpts {
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub input_scale: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

impl MlpOpts {
    fn configs(&self) -> (MlpConfig, SgdConfig) {
        let mut m = MlpConfig::default();
        let mut s = SgdConfig::default();
        if let Some(h) = &self.hidden {
            m.hidden = h.clone();
        }
        if let Some(v) = self.input_scale {
            m.input_scale = v;
        }
        if let Some(v) = self.epochs {
            s.epochs = v;
        }
        if let Some(v) = self.step {
            s.step = v;
        }
        if let Some(v) = self.batch_size {
            s.batch_size = v;
        }
        (m, s)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarArgs {
    /// Dataset CSV; alternatively sample `--n` points from `--spec`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub partition: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pilot_lambda: Option<f64>,
    #[arg(long)]
    pub final_lambda: Option<f64>,
    /// Scale λ so that `max_i λ τ_i` equals this value.
    #[arg(long)]
    pub lambda_cap: Option<f64>,
    #[arg(long)]
    pub info_floor: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub mlp: MlpOpts,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure3Args {
    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda_weak: Option<f64>,
    #[arg(long)]
    pub lambda_strong: Option<f64>,
    /// Scale the adaptive λ so that `max_i λ τ_i` equals this value.
    #[arg(long)]
    pub lambda_cap: Option<f64>,
    #[arg(long)]
    pub curve_points: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub mlp: MlpOpts,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_solver_failure() {
            EXIT_SOLVER
        } else if matches!(e, Error::Io(_)) {
            EXIT_RUNTIME
        } else {
            EXIT_CONFIG
        };
        CliError { code, message: e.to_string() }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError { code: EXIT_CONFIG, message: msg.into() }
}

/// Overlays the non-null command-line values onto the config file object.
fn merge_config<T: Serialize + DeserializeOwned>(cli: &T, file: Option<&Value>) -> Result<T, CliError> {
    let mut base = match file {
        None => serde_json::Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(config_error("config file must hold a JSON object")),
    };
    let flags = serde_json::to_value(cli).map_err(|e| config_error(e.to_string()))?;
    if let Value::Object(m) = flags {
        for (k, v) in m {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| config_error(format!("config: {e}")))
}

fn read_config(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_error(format!("parsing {}: {e}", path.display())))
}

fn resolve_seed(seed: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| config_error(format!("{SEED_ENV} is not an unsigned integer: {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn load_spec(name: &str) -> Result<ProblemSpec, CliError> {
    if let Some(s) = builtin_spec(name) {
        return Ok(s);
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(config_error(format!(
            "unknown spec {name:?}: not a built-in ({}) and no such file",
            BUILTIN_SPECS.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(Error::from)?;
    Ok(ProblemSpec::from_json(&text)?)
}

fn require<T>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| config_error(format!("missing required option --{}", name.replace('_', "-"))))
}

fn partition_of(p: &Option<Vec<f64>>) -> Result<GroupPartition, CliError> {
    Ok(GroupPartition::new(p.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0]))?)
}

fn build_profile(opts: &ProfileOpts, spec: Option<&ProblemSpec>) -> Result<RegProfile, CliError> {
    let partition = partition_of(&opts.partition)?;
    let kind = opts.profile.unwrap_or(ProfileArg::Uniform);
    let need_spec = || spec.ok_or_else(|| config_error(format!("profile {kind:?} needs --spec")));
    Ok(match kind {
        ProfileArg::Uniform => regprofile::uniform_profile(&partition, opts.level.unwrap_or(1.0))?,
        ProfileArg::Optimal => regprofile::optimal_rho(need_spec()?, &partition),
        ProfileArg::Simplified => regprofile::simplified_profile(need_spec()?, &partition)?,
        ProfileArg::Inverse => regprofile::inverse_profile(need_spec()?, &partition)?,
        ProfileArg::Explicit => RegProfile::new(partition, require(opts.rho.clone(), "rho")?)?,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::from)?;
    }
    Ok(BufWriter::new(File::create(path).map_err(Error::from)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    writeln!(w).map_err(Error::from)?;
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn out_dir(dir: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let d = dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&d).map_err(Error::from)?;
    Ok(d)
}

fn read_dataset(path: &Path, task: Task) -> Result<Dataset, CliError> {
    let f = File::open(path).map_err(Error::from)?;
    Ok(Dataset::read_csv(BufReader::new(f), task)?)
}

fn task_of(task: Option<TaskArg>, spec: Option<&ProblemSpec>) -> Result<Task, CliError> {
    match (task, spec) {
        (Some(t), _) => Ok(t.into()),
        (None, Some(s)) => Ok(s.task()),
        (None, None) => Err(config_error("missing --task (or --spec to take it from)")),
    }
}

/// Parses arguments, runs the command, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.workers == 0 {
        return Err(config_error("--workers must be at least 1"));
    }
    let file = cli.config.as_deref().map(read_config).transpose()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| CliError { code: EXIT_RUNTIME, message: e.to_string() })?;
    let file = file.as_ref();
    pool.install(|| match &cli.command {
        Command::Generate(a) => cmd_generate(&merge_config(a, file)?),
        Command::Fit(a) => cmd_fit(&merge_config(a, file)?),
        Command::Eval(a) => cmd_eval(&merge_config(a, file)?),
        Command::Theory(a) => cmd_theory(&merge_config(a, file)?),
        Command::Compare(a) => cmd_compare(&merge_config(a, file)?),
        Command::Har(a) => cmd_har(&merge_config(a, file)?),
        Command::Figure3(a) => cmd_figure3(&merge_config(a, file)?),
    })
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<(), CliError> {
    let spec_name = a.spec.clone().unwrap_or_else(|| "figure3".into());
    let spec = load_spec(&spec_name)?;
    let n = a.n.unwrap_or(1000);
    let seed = resolve_seed(a.seed)?;
    let out = require(a.out.clone(), "out")?;
    let ds = spec.sample_dataset(n, seed)?;
    let mut w = create(&out)?;
    ds.write_csv(&mut w)?;
    w.flush().map_err(Error::from)?;
    let spec_value: Value = serde_json::from_str(&spec.to_json()?).map_err(Error::from)?;
    write_json(&out.with_extension("json"), &json!({ "spec": spec_value, "seed": seed, "n": n }))?;
    Ok(())
}

pub fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let spec = a.spec.as_deref().map(load_spec).transpose()?;
    let task = task_of(a.task, spec.as_ref())?;
    let ds = read_dataset(&require(a.data.clone(), "data")?, task)?;
    let profile = build_profile(&a.profile, spec.as_ref())?;
    let (reg, kind) = match a.penalty.unwrap_or(PenaltyArg::Integral) {
        PenaltyArg::Integral => (Regularizer::Profile(profile), PenaltyKind::IntegralRho),
        PenaltyArg::PerExample => {
            let spec = spec.as_ref().ok_or_else(|| config_error("--penalty per-example needs --spec for the density"))?;
            (Regularizer::Weights(regprofile::weights_for_profile(&profile, spec, &ds)?), PenaltyKind::PerExampleTau)
        }
    };
    let mut cfg = FitConfig::new(require(a.lambda, "lambda")?, kind);
    cfg.m = a.grid.unwrap_or(DEFAULT_GRID);
    if let Some(v) = a.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = a.grad_tol {
        cfg.grad_tol = v;
    }
    let out = require(a.out.clone(), "out")?;
    let outcome = gridfit::fit_with_log(&ds, &reg, &cfg)?;
    let mut w = create(&out)?;
    outcome.function.write_csv(&mut w)?;
    w.flush().map_err(Error::from)?;
    if let Some(log) = &a.log {
        let mut w = create(log)?;
        outcome.write_log_csv(&mut w)?;
        w.flush().map_err(Error::from)?;
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let spec = load_spec(&require(a.spec.clone(), "spec")?)?;
    let path = require(a.fit.clone(), "fit")?;
    let g = GridFunction::read_csv(BufReader::new(File::open(&path).map_err(Error::from)?))?;
    let partition = partition_of(&a.partition)?;
    let groups: Vec<Value> = (0..partition.group_count())
        .map(|j| {
            let (lo, hi) = partition.bounds(j);
            json!({ "lo": lo, "hi": hi, "mse": gridfit::region_mse(&g, &spec, lo, hi) })
        })
        .collect();
    let report = json!({ "mse": gridfit::empirical_mse(&g, &spec), "groups": groups });
    match &a.out {
        Some(p) => write_json(p, &report),
        None => {
            println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
            Ok(())
        }
    }
}

pub fn cmd_theory(a: &TheoryArgs) -> Result<(), CliError> {
    let spec = load_spec(&a.spec.clone().unwrap_or_else(|| "hetero-classification".into()))?;
    let mut opts = a.profile.clone();
    opts.profile.get_or_insert(ProfileArg::Optimal);
    let profile = build_profile(&opts, Some(&spec))?;
    let (lambda, c0) = match (a.lambda, a.c0, a.n) {
        (Some(_), Some(_), _) => return Err(config_error("give either --lambda or --c0, not both")),
        (Some(l), None, n) => (l, n.map(|n| theory::c0_from_lambda(l, n))),
        (None, Some(c), Some(n)) => (theory::lambda_from_c0(c, n), Some(c)),
        (None, Some(_), None) => return Err(config_error("--c0 needs --n")),
        (None, None, _) => (1.0, None),
    };
    let report = theory::asymptotic_mse(&spec, &profile, lambda)?;

    let write_table = |w: &mut dyn Write| -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["group_lo", "group_hi", "rho", "curvature", "spread", "bias", "variance", "total"])?;
        for g in &report.groups {
            wtr.write_record(
                [g.lo, g.hi, g.rho, g.curvature, g.spread, g.bias, g.variance, g.total()].map(|v| v.to_string()),
            )?;
        }
        wtr.flush()?;
        Ok(())
    };
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            write_table(&mut w)?;
            w.flush().map_err(Error::from)?;
        }
        None => write_table(&mut std::io::stdout().lock())?,
    }
    if let Some(p) = &a.json {
        write_json(p, &json!({ "lambda": lambda, "c0": c0, "n": a.n, "report": report }))?;
    }
    Ok(())
}

pub fn cmd_compare(a: &CompareArgs) -> Result<(), CliError> {
    let spec = load_spec(&a.spec.clone().unwrap_or_else(|| "hetero-classification".into()))?;
    let partition = partition_of(&a.partition)?;
    let mut cfg = CompareConfig::new(a.n.unwrap_or(2000), a.reps.unwrap_or(200), resolve_seed(a.seed)?);
    if let Some(c) = a.c0 {
        cfg.c0 = c;
    }
    if let Some(m) = a.grid {
        cfg.grid = m;
    }
    let report = harness::compare_profiles(&spec, &partition, &cfg)?;
    let dir = out_dir(&a.out_dir)?;
    let mut w = create(&dir.join("compare.csv"))?;
    report.write_csv(&mut w)?;
    w.flush().map_err(Error::from)?;

    let mut w = create(&dir.join("compare_z.csv"))?;
    writeln!(w, "better,worse,z").map_err(Error::from)?;
    for z in &report.z_scores {
        writeln!(w, "{},{},{}", z.better, z.worse, z.z).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    write_json(&dir.join("compare.json"), &report)?;

    for p in &report.profiles {
        println!("{:<14} mean {:.6e}  se {:.3e}  theory {:.6e}", p.name, p.mc.mean_mse, p.mc.std_error, p.theory_total);
    }
    println!("spearman {:.4}  c* {:.6e}", report.spearman, report.theory_scale);
    Ok(())
}

pub fn cmd_har(a: &HarArgs) -> Result<(), CliError> {
    let spec = a.spec.as_deref().map(load_spec).transpose()?;
    let partition = partition_of(&a.partition)?;
    let (mlp, sgd) = a.mlp.configs();
    let defaults = HarConfig::default();
    let config = HarConfig {
        seed: resolve_seed(a.seed)?,
        model: match a.model.unwrap_or(ModelArg::Grid) {
            ModelArg::Grid => PilotModel::GridFit,
            ModelArg::Mlp => PilotModel::Mlp,
        },
        grid: a.grid.unwrap_or(DEFAULT_GRID),
        pilot_lambda: a.pilot_lambda.unwrap_or(defaults.pilot_lambda),
        final_lambda: a.final_lambda.unwrap_or(defaults.final_lambda),
        lambda_cap: a.lambda_cap,
        info_floor: a.info_floor.unwrap_or(defaults.info_floor),
        mlp,
        sgd,
        ..defaults
    };
    let outcome = match (&a.data, &spec) {
        (Some(path), _) => {
            let ds = read_dataset(path, task_of(a.task, spec.as_ref())?)?;
            harness::har_run(&ds, spec.as_ref(), &partition, &config)?
        }
        (None, Some(s)) => harness::har_run_spec(s, require(a.n, "n")?, &partition, &config)?,
        (None, None) => return Err(config_error("har needs --data or --spec")),
    };
    let dir = out_dir(&a.out_dir)?;
    write_json(&dir.join("har.json"), &outcome.report)?;
    let mut w = create(&dir.join("tau.csv"))?;
    writeln!(w, "index,tau").map_err(Error::from)?;
    for (i, t) in outcome.report.tau.iter().enumerate() {
        writeln!(w, "{i},{t}").map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    match &outcome.model {
        FinalModel::Grid(g) => {
            let mut w = create(&dir.join("fit.csv"))?;
            g.write_csv(&mut w)?;
            w.flush().map_err(Error::from)?;
        }
        FinalModel::Mlp(m) => {
            let mut w = create(&dir.join("model.json"))?;
            w.write_all(m.to_json()?.as_bytes()).map_err(Error::from)?;
            w.flush().map_err(Error::from)?;
        }
    }
    let r = &outcome.report;
    for j in 0..r.q_hat.len() {
        println!("group {j}: q_hat {:.4}  i_hat {:.4}  error {:.6e}", r.q_hat[j], r.i_hat[j], r.group_errors[j]);
    }
    Ok(())
}

pub fn cmd_figure3(a: &Figure3Args) -> Result<(), CliError> {
    let spec = crate::domain::figure3_spec();
    let (mlp, sgd) = a.mlp.configs();
    let d = Figure3Config::default();
    let base = Figure3Config {
        n: a.n.unwrap_or(d.n),
        seed: 0,
        lambda_weak: a.lambda_weak.unwrap_or(d.lambda_weak),
        lambda_strong: a.lambda_strong.unwrap_or(d.lambda_strong),
        lambda_cap: a.lambda_cap.unwrap_or(d.lambda_cap),
        mlp,
        sgd,
        curve_points: a.curve_points.unwrap_or(d.curve_points),
    };
    let seeds = a.seeds.clone().unwrap_or_else(|| vec![resolve_seed(None).unwrap_or(0)]);
    if seeds.is_empty() {
        return Err(config_error("--seeds must not be empty"));
    }
    let dir = out_dir(&a.out_dir)?;
    let mut errors = create(&dir.join("errors.csv"))?;
    writeln!(errors, "seed,model,lambda,left_mse,right_mse").map_err(Error::from)?;
    let mut per_seed = Vec::new();
    for &s in &seeds {
        let outcome = harness::figure3_run(&spec, &Figure3Config { seed: s, ..base.clone() })?;
        let mut w = create(&dir.join(format!("curves_seed{s}.csv")))?;
        outcome.write_curves_csv(&spec, base.curve_points, &mut w)?;
        w.flush().map_err(Error::from)?;
        for e in &outcome.errors {
            writeln!(errors, "{s},{},{},{},{}", e.model, e.lambda, e.left_mse, e.right_mse).map_err(Error::from)?;
            println!("seed {s} {:<9} lambda {:.4e}  left {:.4e}  right {:.4e}", e.model, e.lambda, e.left_mse, e.right_mse);
        }
        per_seed.push(outcome.errors);
    }
    errors.flush().map_err(Error::from)?;
    let summary = harness::summarize_figure3(&seeds, per_seed);
    write_json(&dir.join("figure3.json"), &summary)?;
    Ok(())
}
