//! Ground-truth problems on `[0, 1]`: the target function, the input density,
//! the label law, and the seeded sampler that draws datasets from them.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::sigmoid;
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    BinaryClassification,
    Regression,
}

/// A closed-form expression on one segment, with analytic first and second
/// derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Constant(f64),
    /// `c0 + c1 x + c2 x^2 + ...`
    Polynomial(Vec<f64>),
    /// `offset + amplitude * sin(2π frequency x + phase)`
    Sine {
        amplitude: f64,
        frequency: f64,
        phase: f64,
        offset: f64,
    },
}

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Constant(c) => *c,
            Expr::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &k| acc * x + k),
            Expr::Sine { amplitude, frequency, phase, offset } => {
                offset + amplitude * (2.0 * PI * frequency * x + phase).sin()
            }
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match self {
            Expr::Constant(_) => 0.0,
            Expr::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, &k)| acc * x + i as f64 * k),
            Expr::Sine { amplitude, frequency, phase, .. } => {
                let w = 2.0 * PI * frequency;
                amplitude * w * (w * x + phase).cos()
            }
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match self {
            Expr::Constant(_) => 0.0,
            Expr::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (i, &k)| acc * x + (i * (i - 1)) as f64 * k),
            Expr::Sine { amplitude, frequency, phase, .. } => {
                let w = 2.0 * PI * frequency;
                -amplitude * w * w * (w * x + phase).sin()
            }
        }
    }

    /// Polynomial degree, `None` for non-polynomial kinds.
    fn degree(&self) -> Option<usize> {
        match self {
            Expr::Constant(_) => Some(0),
            Expr::Polynomial(c) => Some(c.iter().rposition(|&k| k != 0.0).unwrap_or(0)),
            Expr::Sine { .. } => None,
        }
    }
}

/// One piece of a piecewise function, serialized as `{lo, hi, kind, params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSegment", into = "RawSegment")]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub expr: Expr,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    lo: f64,
    hi: f64,
    kind: String,
    params: Vec<f64>,
}

impl TryFrom<RawSegment> for Segment {
    type Error = String;

    fn try_from(raw: RawSegment) -> std::result::Result<Self, String> {
        let expr = match (raw.kind.as_str(), raw.params.as_slice()) {
            ("constant", [c]) => Expr::Constant(*c),
            ("polynomial", c) if !c.is_empty() => Expr::Polynomial(c.to_vec()),
            ("sine", [amplitude, frequency, phase, offset]) => Expr::Sine {
                amplitude: *amplitude,
                frequency: *frequency,
                phase: *phase,
                offset: *offset,
            },
            (kind, p) => {
                return Err(format!("segment kind {kind:?} does not accept {} parameters", p.len()))
            }
        };
        if raw.params.iter().any(|p| !p.is_finite()) {
            return Err("segment parameters must be finite".into());
        }
        Ok(Segment { lo: raw.lo, hi: raw.hi, expr })
    }
}

impl From<Segment> for RawSegment {
    fn from(s: Segment) -> Self {
        let (kind, params) = match s.expr {
            Expr::Constant(c) => ("constant", vec![c]),
            Expr::Polynomial(c) => ("polynomial", c),
            Expr::Sine { amplitude, frequency, phase, offset } => {
                ("sine", vec![amplitude, frequency, phase, offset])
            }
        };
        RawSegment { lo: s.lo, hi: s.hi, kind: kind.to_string(), params }
    }
}

/// Contiguous segments covering `[0, 1]`. A point on a shared boundary
/// belongs to the left segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Piecewise {
    segments: Vec<Segment>,
}

impl Piecewise {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let pw = Piecewise { segments };
        pw.check_cover()?;
        Ok(pw)
    }

    pub fn constant(value: f64) -> Self {
        Piecewise { segments: vec![Segment { lo: 0.0, hi: 1.0, expr: Expr::Constant(value) }] }
    }

    /// Step function with the given values on `[breaks[j], breaks[j+1]]`.
    pub fn steps(breaks: &[f64], values: &[f64]) -> Result<Self> {
        if breaks.len() != values.len() + 1 {
            return Err(Error::InvalidSpec("steps need one more breakpoint than values".into()));
        }
        Piecewise::new(
            breaks
                .windows(2)
                .zip(values)
                .map(|(w, &v)| Segment { lo: w[0], hi: w[1], expr: Expr::Constant(v) })
                .collect(),
        )
    }

    fn check_cover(&self) -> Result<()> {
        let segs = &self.segments;
        if segs.is_empty() {
            return Err(Error::InvalidSpec("piecewise function has no segments".into()));
        }
        if segs[0].lo != 0.0 || segs[segs.len() - 1].hi != 1.0 {
            return Err(Error::InvalidSpec("segments must cover exactly [0, 1]".into()));
        }
        for s in segs {
            if !(s.lo < s.hi) {
                return Err(Error::InvalidSpec(format!("empty segment [{}, {}]", s.lo, s.hi)));
            }
        }
        for w in segs.windows(2) {
            if w[0].hi != w[1].lo {
                return Err(Error::InvalidSpec(format!(
                    "segments are not contiguous at {} / {}",
                    w[0].hi, w[1].lo
                )));
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    fn segment_at(&self, x: f64) -> &Segment {
        self.segments
            .iter()
            .find(|s| x <= s.hi)
            .unwrap_or_else(|| self.segments.last().expect("nonempty"))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.segment_at(x).expr.eval(x)
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.segment_at(x).expr.d1(x)
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.segment_at(x).expr.d2(x)
    }

    /// Interior segment boundaries.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments[..self.segments.len() - 1].iter().map(|s| s.hi).collect()
    }
}

/// Ground truth for a synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ProblemSpec {
    task: Task,
    fstar: Piecewise,
    density: Piecewise,
    noise_sigma: Option<Piecewise>,
    /// Cumulative density mass at each density segment's upper end.
    cdf: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    task: Task,
    fstar: Piecewise,
    density: Piecewise,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_sigma: Option<Piecewise>,
}

impl TryFrom<RawSpec> for ProblemSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        for pw in [Some(&raw.fstar), Some(&raw.density), raw.noise_sigma.as_ref()].into_iter().flatten() {
            pw.check_cover()?;
        }
        ProblemSpec::new(raw.task, raw.fstar, raw.density, raw.noise_sigma)
    }
}

impl From<ProblemSpec> for RawSpec {
    fn from(s: ProblemSpec) -> Self {
        RawSpec { task: s.task, fstar: s.fstar, density: s.density, noise_sigma: s.noise_sigma }
    }
}

const DENSITY_MASS_TOL: f64 = 1e-9;
const DERIVATIVE_REL_TOL: f64 = 1e-6;
const FD_PROBES_PER_SEGMENT: usize = 7;

impl ProblemSpec {
    /// Validates and builds a spec. Densities must be piecewise constant or
    /// piecewise linear, strictly positive, and integrate to one; regression
    /// problems need a noise profile.
    pub fn new(
        task: Task,
        fstar: Piecewise,
        density: Piecewise,
        noise_sigma: Option<Piecewise>,
    ) -> Result<Self> {
        match (task, &noise_sigma) {
            (Task::Regression, None) => {
                return Err(Error::InvalidSpec("regression spec needs noise_sigma".into()))
            }
            (Task::BinaryClassification, Some(_)) => {
                return Err(Error::InvalidSpec("classification spec cannot carry noise_sigma".into()))
            }
            _ => {}
        }

        let mut cdf = Vec::with_capacity(density.segments.len());
        let mut mass = 0.0;
        for s in &density.segments {
            if !matches!(s.expr.degree(), Some(0) | Some(1)) {
                return Err(Error::InvalidSpec(
                    "density segments must be constant or linear".into(),
                ));
            }
            let (a, b) = (s.expr.eval(s.lo), s.expr.eval(s.hi));
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "density must be positive on [{}, {}]",
                    s.lo, s.hi
                )));
            }
            mass += 0.5 * (a + b) * (s.hi - s.lo);
            cdf.push(mass);
        }
        let quad_mass = quad::integrate(|t| density.eval(t), 0.0, 1.0, &density.breakpoints(), 1e-13);
        if (quad_mass - 1.0).abs() > DENSITY_MASS_TOL || (mass - 1.0).abs() > DENSITY_MASS_TOL {
            return Err(Error::InvalidSpec(format!("density integrates to {quad_mass}, not 1")));
        }

        check_derivatives(&fstar)?;

        if let Some(sigma) = &noise_sigma {
            for s in &sigma.segments {
                for p in 0..=FD_PROBES_PER_SEGMENT {
                    let x = s.lo + (s.hi - s.lo) * p as f64 / FD_PROBES_PER_SEGMENT as f64;
                    if !(s.expr.eval(x) >= 0.0) {
                        return Err(Error::InvalidSpec(format!("noise sigma negative at {x}")));
                    }
                }
            }
        }

        Ok(ProblemSpec { task, fstar, density, noise_sigma, cdf })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn fstar(&self) -> &Piecewise {
        &self.fstar
    }

    pub fn density_fn(&self) -> &Piecewise {
        &self.density
    }

    pub fn noise_sigma(&self) -> Option<&Piecewise> {
        self.noise_sigma.as_ref()
    }

    pub fn f(&self, x: f64) -> f64 {
        self.fstar.eval(x)
    }

    pub fn f_d2(&self, x: f64) -> f64 {
        self.fstar.d2(x)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.density.eval(x)
    }

    pub fn sigma(&self, x: f64) -> f64 {
        self.noise_sigma.as_ref().map_or(0.0, |s| s.eval(x))
    }

    /// Union of breakpoints of every piecewise component.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.fstar.breakpoints();
        b.extend(self.density.breakpoints());
        if let Some(s) = &self.noise_sigma {
            b.extend(s.breakpoints());
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// `Pr[Y = y | X = x]` under the logistic model.
    pub fn cond_prob(&self, x: f64, y: f64) -> Result<f64> {
        if self.task != Task::BinaryClassification {
            return Err(Error::contract("cond_prob is defined only for classification specs"));
        }
        if y != 1.0 && y != -1.0 {
            return Err(Error::contract(format!("label must be -1 or +1, got {y}")));
        }
        Ok(sigmoid(y * self.f(x)))
    }

    /// Fisher information of the label model at `x`: `Var(Y | X = x)` for
    /// the logistic model, identically one for square-loss regression.
    pub fn fisher_info(&self, x: f64) -> f64 {
        match self.task {
            Task::BinaryClassification => {
                let p = sigmoid(self.f(x));
                p * (1.0 - p)
            }
            Task::Regression => 1.0,
        }
    }

    /// Inverse-CDF draw from the input density for `u ∈ [0, 1)`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let total = *self.cdf.last().expect("nonempty");
        let target = u * total;
        let j = self.cdf.iter().position(|&c| target < c).unwrap_or(self.cdf.len() - 1);
        let seg = &self.density.segments[j];
        let before = if j == 0 { 0.0 } else { self.cdf[j - 1] };
        let rem = (target - before).max(0.0);
        let d0 = seg.expr.eval(seg.lo);
        let slope = seg.expr.d1(seg.lo);
        // Solve d0 s + slope s^2 / 2 = rem in its cancellation-free form.
        let disc = (d0 * d0 + 2.0 * slope * rem).max(0.0);
        let s = 2.0 * rem / (d0 + disc.sqrt());
        (seg.lo + s).clamp(seg.lo, seg.hi)
    }

    /// Draws `n` i.i.d. examples; the stream is fully determined by `seed`.
    pub fn sample_dataset(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::contract("sample size must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| {
                let x = self.inverse_cdf(rng.random::<f64>());
                let y = match self.task {
                    Task::BinaryClassification => {
                        let p_pos = sigmoid(self.f(x));
                        if rng.random::<f64>() < p_pos {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    Task::Regression => {
                        let z: f64 = rng.sample(StandardNormal);
                        self.f(x) + self.sigma(x) * z
                    }
                };
                Point { x, y }
            })
            .collect();
        Ok(Dataset { task: self.task, points, seed: Some(seed) })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidSpec(e.to_string()))
    }
}

fn check_derivatives(f: &Piecewise) -> Result<()> {
    for s in &f.segments {
        let width = s.hi - s.lo;
        let h = 1e-5 * width.min(1.0);
        for p in 1..=FD_PROBES_PER_SEGMENT {
            let x = s.lo + width * p as f64 / (FD_PROBES_PER_SEGMENT + 1) as f64;
            let fd1 = (s.expr.eval(x + h) - s.expr.eval(x - h)) / (2.0 * h);
            let fd2 = (s.expr.d1(x + h) - s.expr.d1(x - h)) / (2.0 * h);
            for (name, analytic, fd) in [("first", s.expr.d1(x), fd1), ("second", s.expr.d2(x), fd2)] {
                let scale = analytic.abs().max(fd.abs()).max(1.0);
                if (analytic - fd).abs() > DERIVATIVE_REL_TOL * scale {
                    return Err(Error::InvalidSpec(format!(
                        "{name} derivative of f* disagrees with finite differences at x = {x}: {analytic} vs {fd}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Breakpoints `0 = a_0 < a_1 < ... < a_k = 1` splitting the input space
/// into uncertainty groups `[a_j, a_{j+1})`; the last group is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GroupPartition {
    breakpoints: Vec<f64>,
}

impl TryFrom<Vec<f64>> for GroupPartition {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        GroupPartition::new(v)
    }
}

impl From<GroupPartition> for Vec<f64> {
    fn from(p: GroupPartition) -> Self {
        p.breakpoints
    }
}

impl GroupPartition {
    pub fn new(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidPartition("need at least two breakpoints".into()));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().expect("len >= 2") != 1.0 {
            return Err(Error::InvalidPartition("breakpoints must start at 0 and end at 1".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidPartition("breakpoints must be strictly ascending".into()));
        }
        Ok(GroupPartition { breakpoints })
    }

    /// `k` equal-width groups.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidPartition("need at least one group".into()));
        }
        let mut b: Vec<f64> = (0..=k).map(|j| j as f64 / k as f64).collect();
        b[k] = 1.0;
        GroupPartition::new(b)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn group_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.breakpoints[j], self.breakpoints[j + 1])
    }

    pub fn width(&self, j: usize) -> f64 {
        self.breakpoints[j + 1] - self.breakpoints[j]
    }

    pub fn group_of(&self, x: f64) -> usize {
        let k = self.group_count();
        // first breakpoint strictly greater than x, minus one
        let idx = self.breakpoints[1..k].partition_point(|&b| b <= x);
        idx.min(k - 1)
    }

    /// Interior breakpoints.
    pub fn interior(&self) -> &[f64] {
        &self.breakpoints[1..self.breakpoints.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub task: Task,
    pub points: Vec<Point>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(task: Task, points: Vec<Point>, seed: Option<u64>) -> Result<Self> {
        let ds = Dataset { task, points, seed };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.x) {
                return Err(Error::contract(format!("example {i} has x = {} outside [0, 1]", p.x)));
            }
            if !p.y.is_finite() {
                return Err(Error::contract(format!("example {i} has non-finite label")));
            }
            if self.task == Task::BinaryClassification && p.y != 1.0 && p.y != -1.0 {
                return Err(Error::contract(format!("example {i} has label {} (expected ±1)", p.y)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_label(&self) -> f64 {
        self.points.iter().map(|p| p.y).sum::<f64>() / self.points.len().max(1) as f64
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            task: self.task,
            points: indices.iter().map(|&i| self.points[i]).collect(),
            seed: self.seed,
        }
    }

    /// Writes `x,y` CSV. Floats use the shortest round-tripping representation.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "y"])?;
        for p in &self.points {
            wtr.write_record([p.x.to_string(), p.y.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads `x,y` CSV. For classification, a `0` label is read as `-1`.
    pub fn read_csv<R: Read>(r: R, task: Task) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
            return Err(Error::contract("dataset CSV header must be `x,y`"));
        }
        let mut points = Vec::new();
        for rec in rdr.deserialize() {
            let (x, mut y): (f64, f64) = rec?;
            if task == Task::BinaryClassification && y == 0.0 {
                y = -1.0;
            }
            points.push(Point { x, y });
        }
        Dataset::new(task, points, None)
    }
}

/// Demo regression problem: oscillating, frequent, low-noise left half and a
/// flat, rare, noisy right half.
///
/// The constants are an interpretation of the qualitative toy setting, not
/// published values: `f* = sin(12πx)` on `[0, 0.5]` and `0.5` on `(0.5, 1]`;
/// `q = 1.8 / 0.2`; `σ = 0.05 / 0.5`.
pub fn figure3_spec() -> ProblemSpec {
    let fstar = Piecewise::new(vec![
        Segment {
            lo: 0.0,
            hi: 0.5,
            expr: Expr::Sine { amplitude: 1.0, frequency: 6.0, phase: 0.0, offset: 0.0 },
        },
        Segment { lo: 0.5, hi: 1.0, expr: Expr::Constant(0.5) },
    ])
    .expect("valid segments");
    let density = Piecewise::steps(&[0.0, 0.5, 1.0], &[1.8, 0.2]).expect("valid steps");
    let sigma = Piecewise::steps(&[0.0, 0.5, 1.0], &[0.05, 0.5]).expect("valid steps");
    ProblemSpec::new(Task::Regression, fstar, density, Some(sigma)).expect("built-in spec is valid")
}

/// Heteroskedastic, imbalanced classification problem with two groups split
/// at 0.5.
///
/// The left half is frequent (`q = 5/3`) and noisy: `f* = 1.3 (1 - cos 2πx)`
/// rises from the decision boundary to 2.6. The right half is rare
/// (`q = 1/3`) and nearly deterministic: `f* = 2.6 + 0.7 (1 - cos 2π(x - 0.5))`.
/// The pieces join with matching value and slope. Group means of the Fisher
/// information differ by a factor of about 4.35.
pub fn hetero_classification_spec() -> ProblemSpec {
    use std::f64::consts::FRAC_PI_2;
    let (h, b) = (2.6, 0.7);
    let fstar = Piecewise::new(vec![
        Segment {
            lo: 0.0,
            hi: 0.5,
            expr: Expr::Sine { amplitude: h / 2.0, frequency: 1.0, phase: -FRAC_PI_2, offset: h / 2.0 },
        },
        Segment {
            lo: 0.5,
            hi: 1.0,
            // sin(2πx + π/2) = -1 at x = 0.5
            expr: Expr::Sine { amplitude: b, frequency: 1.0, phase: FRAC_PI_2, offset: h + b },
        },
    ])
    .expect("valid segments");
    let density = Piecewise::steps(&[0.0, 0.5, 1.0], &[5.0 / 3.0, 1.0 / 3.0]).expect("valid steps");
    ProblemSpec::new(Task::BinaryClassification, fstar, density, None).expect("built-in spec is valid")
}

/// Looks up a built-in spec by CLI name.
pub fn builtin_spec(name: &str) -> Option<ProblemSpec> {
    match name {
        "figure3" => Some(figure3_spec()),
        "hetero-classification" => Some(hetero_classification_spec()),
        _ => None,
    }
}

pub const BUILTIN_SPECS: &[&str] = &["figure3", "hetero-classification"];
