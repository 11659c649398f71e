//! Small fully connected network `1 → hidden… → 1` with a per-example
//! loss-Jacobian penalty.
//!
//! For hidden activations `h^(j)`, the penalty is
//! `R(x) = (Σ_j ‖∂ℓ/∂h^(j)‖²)^{1/2}` and the training objective is
//! `(1/n) Σ_i [ℓ(f(x_i), y_i) + λ τ_i R(x_i)]`. Parameter gradients of `R`
//! are computed by differentiating the backward pass itself (second-order
//! reverse accumulation), so no finite differences appear in training.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, Task};
use crate::error::{Error, Result};
use crate::loss;
use crate::regprofile::ExampleWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    /// Derivative at 0 taken as 0; second derivative is 0 everywhere.
    ReLU,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::ReLU => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// `(φ'(z), φ''(z))` given `z` and `φ(z)`.
    #[inline]
    fn derivs(self, z: f64, a: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let d = 1.0 - a * a;
                (d, -2.0 * a * d)
            }
            Activation::ReLU => (if z > 0.0 { 1.0 } else { 0.0 }, 0.0),
            Activation::Identity => (1.0, 0.0),
        }
    }
}

/// Which Jacobian the penalty measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum JacobianTarget {
    /// `∂ℓ(f(x), y) / ∂h^(j)`.
    #[default]
    Loss,
    /// `∂f(x) / ∂h^(j)`, independent of the label.
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct LayerShape {
    n_in: usize,
    n_out: usize,
    w_off: usize,
    b_off: usize,
}

/// Network parameters. Weights are row-major `n_out × n_in`; the flat
/// parameter vector stores each layer's weights followed by its biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Checkpoint", into = "Checkpoint")]
pub struct MlpModel {
    activation: Activation,
    widths: Vec<usize>,
    shapes: Vec<LayerShape>,
    params: Vec<f64>,
}

/// JSON checkpoint: architecture plus flattened parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

impl TryFrom<Checkpoint> for MlpModel {
    type Error = Error;
    fn try_from(c: Checkpoint) -> Result<Self> {
        let mut m = MlpModel::zeros(&c.widths, c.activation)?;
        m.set_params(&c.params)?;
        Ok(m)
    }
}

impl From<MlpModel> for Checkpoint {
    fn from(m: MlpModel) -> Self {
        Checkpoint { widths: m.widths, activation: m.activation, params: m.params }
    }
}

/// Architecture and initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// First-layer weights are drawn from `U(-s, s)`; each first-layer unit's
    /// transition point `-b/w` is drawn uniformly from `[0, 1]`.
    pub input_scale: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: vec![64, 64], activation: Activation::Tanh, input_scale: 30.0 }
    }
}

impl MlpModel {
    /// All-zero parameters for widths `[1, hidden…, 1]`.
    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths[0] != 1 || *widths.last().expect("len >= 2") != 1 {
            return Err(Error::contract("widths must start and end with 1"));
        }
        if widths.contains(&0) {
            return Err(Error::contract("layer widths must be positive"));
        }
        let mut shapes = Vec::with_capacity(widths.len() - 1);
        let mut off = 0;
        for w in widths.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            shapes.push(LayerShape { n_in, n_out, w_off: off, b_off: off + n_in * n_out });
            off += n_in * n_out + n_out;
        }
        Ok(MlpModel { activation, widths: widths.to_vec(), shapes, params: vec![0.0; off] })
    }

    pub fn init(config: &MlpConfig, seed: u64) -> Result<Self> {
        let mut widths = vec![1];
        widths.extend_from_slice(&config.hidden);
        widths.push(1);
        let mut model = MlpModel::zeros(&widths, config.activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = model.shapes.len();
        for (l, s) in model.shapes.clone().into_iter().enumerate() {
            if l == 0 && layers > 1 {
                for o in 0..s.n_out {
                    let w = config.input_scale * (2.0 * rng.random::<f64>() - 1.0);
                    let c: f64 = rng.random();
                    model.params[s.w_off + o] = w;
                    model.params[s.b_off + o] = -w * c;
                }
            } else {
                let limit = (6.0 / (s.n_in + s.n_out) as f64).sqrt();
                for k in 0..s.n_in * s.n_out {
                    model.params[s.w_off + k] = limit * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
        }
        Ok(model)
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.params.len() {
            return Err(Error::contract(format!("expected {} parameters, got {}", self.params.len(), p.len())));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("parameters must be finite"));
        }
        self.params.copy_from_slice(p);
        Ok(())
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.shapes.len()
    }

    /// Weight of layer `l` from input unit `k` to output unit `i`.
    pub fn weight(&self, l: usize, i: usize, k: usize) -> f64 {
        let s = self.shapes[l];
        self.params[s.w_off + i * s.n_in + k]
    }

    pub fn weight_mut(&mut self, l: usize, i: usize, k: usize) -> &mut f64 {
        let s = self.shapes[l];
        &mut self.params[s.w_off + i * s.n_in + k]
    }

    pub fn bias_mut(&mut self, l: usize, i: usize) -> &mut f64 {
        let s = self.shapes[l];
        &mut self.params[s.b_off + i]
    }

    pub fn predict(&self, x: f64) -> f64 {
        let mut ws = Workspace::new(self);
        ws.forward(self, x)
    }

    /// Prediction plus every layer's post-activation (index 0 is the input).
    pub fn forward(&self, x: f64) -> ForwardTrace {
        let mut ws = Workspace::new(self);
        let prediction = ws.forward(self, x);
        ForwardTrace { prediction, activations: ws.a.clone(), preactivations: ws.z.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub prediction: f64,
    /// `activations[l]` is the input to weight layer `l`; entries `1..` are
    /// the hidden layers `h^(j)`.
    pub activations: Vec<Vec<f64>>,
    pub preactivations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTermReport {
    /// `‖∂ℓ/∂h^(j)‖²` for each hidden layer, first hidden layer first.
    pub layer_sq_norms: Vec<f64>,
    pub r_value: f64,
}

/// Reusable buffers for one example's forward, backward, and
/// double-backward passes.
struct Workspace {
    /// a[l]: input to layer l (a[0] = [x])
    a: Vec<Vec<f64>>,
    /// z[l]: pre-activation output of layer l
    z: Vec<Vec<f64>>,
    /// φ'(z[l]) and φ''(z[l]) for hidden layers
    d1: Vec<Vec<f64>>,
    d2: Vec<Vec<f64>>,
    /// delta[l] = ∂ℓ/∂z[l]
    delta: Vec<Vec<f64>>,
    /// g[l] = ∂ℓ/∂a[l] for l >= 1
    g: Vec<Vec<f64>>,
    gbar: Vec<f64>,
    dbar: Vec<f64>,
    /// adjoint seeds for z[l]
    zbar: Vec<Vec<f64>>,
    abar: Vec<f64>,
}

impl Workspace {
    fn new(m: &MlpModel) -> Self {
        let widths = &m.widths;
        let layers = m.shapes.len();
        let maxw = *widths.iter().max().expect("nonempty");
        Workspace {
            a: (0..layers).map(|l| vec![0.0; widths[l]]).collect(),
            z: (0..layers).map(|l| vec![0.0; widths[l + 1]]).collect(),
            d1: (0..layers).map(|l| vec![0.0; widths[l + 1]]).collect(),
            d2: (0..layers).map(|l| vec![0.0; widths[l + 1]]).collect(),
            delta: (0..layers).map(|l| vec![0.0; widths[l + 1]]).collect(),
            g: (0..layers).map(|l| vec![0.0; widths[l]]).collect(),
            gbar: vec![0.0; maxw],
            dbar: vec![0.0; maxw],
            zbar: (0..layers).map(|l| vec![0.0; widths[l + 1]]).collect(),
            abar: vec![0.0; maxw],
        }
    }

    fn forward(&mut self, m: &MlpModel, x: f64) -> f64 {
        let layers = m.shapes.len();
        self.a[0][0] = x;
        for l in 0..layers {
            let s = m.shapes[l];
            let w = &m.params[s.w_off..s.w_off + s.n_in * s.n_out];
            let b = &m.params[s.b_off..s.b_off + s.n_out];
            for i in 0..s.n_out {
                let row = &w[i * s.n_in..(i + 1) * s.n_in];
                let zi = b[i] + row.iter().zip(&self.a[l]).map(|(wk, ak)| wk * ak).sum::<f64>();
                self.z[l][i] = zi;
            }
            if l + 1 < layers {
                for i in 0..s.n_out {
                    let zi = self.z[l][i];
                    let ai = m.activation.apply(zi);
                    let (p1, p2) = m.activation.derivs(zi, ai);
                    self.a[l + 1][i] = ai;
                    self.d1[l][i] = p1;
                    self.d2[l][i] = p2;
                }
            }
        }
        self.z[layers - 1][0]
    }

    /// First backward pass from seed `∂ℓ/∂f`; fills `delta` and `g`.
    /// Returns `S = Σ_j ‖g_j‖²`.
    fn backward(&mut self, m: &MlpModel, seed: f64) -> f64 {
        let layers = m.shapes.len();
        self.delta[layers - 1][0] = seed;
        let mut s_total = 0.0;
        for l in (1..layers).rev() {
            let s = m.shapes[l];
            let w = &m.params[s.w_off..s.w_off + s.n_in * s.n_out];
            let g = &mut self.g[l];
            g.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..s.n_out {
                let di = self.delta[l][i];
                if di != 0.0 {
                    let row = &w[i * s.n_in..(i + 1) * s.n_in];
                    for (gk, wk) in g.iter_mut().zip(row) {
                        *gk += wk * di;
                    }
                }
            }
            s_total += g.iter().map(|v| v * v).sum::<f64>();
            for ((d, gi), d1) in self.delta[l - 1].iter_mut().zip(g.iter()).zip(&self.d1[l - 1]) {
                *d = gi * d1;
            }
        }
        s_total
    }

    fn layer_sq_norms(&self, layers: usize) -> Vec<f64> {
        (1..layers).map(|l| self.g[l].iter().map(|v| v * v).sum()).collect()
    }

    /// Accumulates `∂ℓ/∂θ + c ∂S/∂θ` into `grad`, where `S = Σ ‖g_j‖²`.
    /// Requires a preceding `forward` and `backward`.
    #[allow(clippy::too_many_arguments)]
    fn accumulate_gradient(
        &mut self,
        m: &MlpModel,
        task: Task,
        target: JacobianTarget,
        prediction: f64,
        y: f64,
        c: f64,
        grad: &mut [f64],
    ) {
        let layers = m.shapes.len();
        for zb in &mut self.zbar {
            zb.iter_mut().for_each(|v| *v = 0.0);
        }

        if c != 0.0 {
            // reverse through the first backward pass
            for l in 1..layers {
                let s = m.shapes[l];
                let n_in = s.n_in;
                // g[l] feeds delta[l-1] = g[l] ⊙ φ'(z[l-1]); dbar holds delta[l-1]'s adjoint
                for k in 0..n_in {
                    let db = if l == 1 { 0.0 } else { self.dbar[k] };
                    self.gbar[k] = 2.0 * c * self.g[l][k] + db * self.d1[l - 1][k];
                    if db != 0.0 {
                        self.zbar[l - 1][k] += db * self.g[l][k] * self.d2[l - 1][k];
                    }
                }
                // g[l] = W_lᵀ delta[l]
                let w = &m.params[s.w_off..s.w_off + n_in * s.n_out];
                let gw = &mut grad[s.w_off..s.w_off + n_in * s.n_out];
                for i in 0..s.n_out {
                    let di = self.delta[l][i];
                    let row = &w[i * n_in..(i + 1) * n_in];
                    let grow = &mut gw[i * n_in..(i + 1) * n_in];
                    let mut acc = 0.0;
                    for k in 0..n_in {
                        grow[k] += di * self.gbar[k];
                        acc += row[k] * self.gbar[k];
                    }
                    self.dbar[i] = acc;
                }
            }
            // delta[L-1] = ℓ'(f) for the loss Jacobian, a constant otherwise
            if target == JacobianTarget::Loss {
                self.zbar[layers - 1][0] += self.dbar[0] * loss::hess(task, prediction, y);
            }
        }

        // reverse through the forward pass, seeded by ℓ'(f) plus the adjoints above
        self.zbar[layers - 1][0] += loss::grad(task, prediction, y);
        for l in (0..layers).rev() {
            let s = m.shapes[l];
            let n_in = s.n_in;
            {
                let zb = &self.zbar[l];
                let (gw, gb) = grad[s.w_off..s.b_off + s.n_out].split_at_mut(n_in * s.n_out);
                for i in 0..s.n_out {
                    let zi = zb[i];
                    if zi == 0.0 {
                        continue;
                    }
                    gb[i] += zi;
                    let grow = &mut gw[i * n_in..(i + 1) * n_in];
                    for (gk, ak) in grow.iter_mut().zip(&self.a[l]) {
                        *gk += zi * ak;
                    }
                }
            }
            if l > 0 {
                let w = &m.params[s.w_off..s.w_off + n_in * s.n_out];
                self.abar[..n_in].iter_mut().for_each(|v| *v = 0.0);
                for i in 0..s.n_out {
                    let zi = self.zbar[l][i];
                    if zi == 0.0 {
                        continue;
                    }
                    let row = &w[i * n_in..(i + 1) * n_in];
                    for (ab, wk) in self.abar[..n_in].iter_mut().zip(row) {
                        *ab += wk * zi;
                    }
                }
                for k in 0..n_in {
                    self.zbar[l - 1][k] += self.abar[k] * self.d1[l - 1][k];
                }
            }
        }
    }
}

fn backward_seed(task: Task, target: JacobianTarget, prediction: f64, y: f64) -> f64 {
    match target {
        JacobianTarget::Loss => loss::grad(task, prediction, y),
        JacobianTarget::Output => 1.0,
    }
}

/// Per-layer Jacobian norms and `R(x)` for one example.
pub fn jacobian_reg(model: &MlpModel, task: Task, x: f64, y: f64) -> RegTermReport {
    jacobian_reg_with(model, task, JacobianTarget::Loss, x, y)
}

pub fn jacobian_reg_with(model: &MlpModel, task: Task, target: JacobianTarget, x: f64, y: f64) -> RegTermReport {
    let mut ws = Workspace::new(model);
    let pred = ws.forward(model, x);
    let s = ws.backward(model, backward_seed(task, target, pred, y));
    let layer_sq_norms = ws.layer_sq_norms(model.depth());
    RegTermReport { layer_sq_norms, r_value: s.sqrt() }
}

/// Per-example loss, penalty `R`, and the gradient of `ℓ + weight · R`
/// accumulated into `grad`.
pub struct ExampleEval {
    pub loss: f64,
    pub r_value: f64,
}

/// Evaluates one example and adds `∇θ [ℓ + weight · R]` into `grad`.
pub fn example_gradient(
    model: &MlpModel,
    task: Task,
    target: JacobianTarget,
    x: f64,
    y: f64,
    weight: f64,
    grad: &mut [f64],
) -> ExampleEval {
    let mut ws = Workspace::new(model);
    example_gradient_ws(&mut ws, model, task, target, x, y, weight, grad)
}

#[allow(clippy::too_many_arguments)]
fn example_gradient_ws(
    ws: &mut Workspace,
    model: &MlpModel,
    task: Task,
    target: JacobianTarget,
    x: f64,
    y: f64,
    weight: f64,
    grad: &mut [f64],
) -> ExampleEval {
    let pred = ws.forward(model, x);
    let loss = loss::value(task, pred, y);
    if weight == 0.0 {
        // plain backprop: the penalty is neither needed nor evaluated
        ws.accumulate_gradient(model, task, target, pred, y, 0.0, grad);
        return ExampleEval { loss, r_value: 0.0 };
    }
    let s = ws.backward(model, backward_seed(task, target, pred, y));
    let r = s.sqrt();
    // dR/dθ = dS/dθ / (2R); at R = 0 the subgradient 0 is used
    let c = if r > 0.0 { weight / (2.0 * r) } else { 0.0 };
    ws.accumulate_gradient(model, task, target, pred, y, c, grad);
    ExampleEval { loss, r_value: r }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub loss: f64,
    /// `(1/n) Σ λ τ_i R(x_i)`
    pub reg: f64,
    pub objective: f64,
}

fn check_aligned(dataset: &Dataset, weights: &ExampleWeights) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::contract("dataset is empty"));
    }
    if weights.len() != dataset.len() {
        return Err(Error::contract(format!(
            "{} weights for {} examples",
            weights.len(),
            dataset.len()
        )));
    }
    Ok(())
}

/// Full-batch objective `(1/n) Σ [ℓ + λ τ_i R]`.
pub fn objective(
    model: &MlpModel,
    dataset: &Dataset,
    weights: &ExampleWeights,
    lambda: f64,
    target: JacobianTarget,
) -> Result<ObjectiveValue> {
    check_aligned(dataset, weights)?;
    let mut ws = Workspace::new(model);
    let (mut l_sum, mut r_sum) = (0.0, 0.0);
    for (p, &tau) in dataset.points.iter().zip(weights.tau()) {
        let pred = ws.forward(model, p.x);
        l_sum += loss::value(dataset.task, pred, p.y);
        let w = lambda * tau;
        if w != 0.0 {
            let s = ws.backward(model, backward_seed(dataset.task, target, pred, p.y));
            r_sum += w * s.sqrt();
        }
    }
    let n = dataset.len() as f64;
    Ok(ObjectiveValue { loss: l_sum / n, reg: r_sum / n, objective: (l_sum + r_sum) / n })
}

/// Full-batch gradient of [`objective`].
pub fn objective_gradient(
    model: &MlpModel,
    dataset: &Dataset,
    weights: &ExampleWeights,
    lambda: f64,
    target: JacobianTarget,
) -> Result<Vec<f64>> {
    check_aligned(dataset, weights)?;
    let mut ws = Workspace::new(model);
    let mut grad = vec![0.0; model.num_params()];
    for (p, &tau) in dataset.points.iter().zip(weights.tau()) {
        example_gradient_ws(&mut ws, model, dataset.task, target, p.x, p.y, lambda * tau, &mut grad);
    }
    let inv_n = 1.0 / dataset.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv_n);
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub batch_size: usize,
    pub step: f64,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub target: JacobianTarget,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { batch_size: 32, step: 1e-2, epochs: 3000, seed: 0, target: JacobianTarget::Loss }
    }
}

/// One row of the training curve; values are averages over the epoch's
/// mini-batches, taken before each update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub loss: f64,
    pub reg: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub curve: Vec<CurvePoint>,
}

impl TrainOutcome {
    /// Writes `step,loss,reg,objective` CSV.
    pub fn write_curve_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["step", "loss", "reg", "objective"])?;
        for c in &self.curve {
            wtr.write_record([c.step.to_string(), c.loss.to_string(), c.reg.to_string(), c.objective.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Mini-batch SGD on `(1/n) Σ [ℓ + λ τ_i R(x_i)]`.
pub fn train(
    model: &MlpModel,
    dataset: &Dataset,
    weights: &ExampleWeights,
    lambda: f64,
    config: &SgdConfig,
) -> Result<TrainOutcome> {
    check_aligned(dataset, weights)?;
    if config.batch_size == 0 {
        return Err(Error::contract("batch size must be positive"));
    }
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut ws = Workspace::new(&model);
    let mut grad = vec![0.0; model.num_params()];
    let mut curve = Vec::with_capacity(config.epochs);
    let mut steps = 0usize;
    let mut last_finite = model.clone();

    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut l_sum, mut r_sum) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let p = dataset.points[i];
                let w = lambda * weights.tau()[i];
                let ev = example_gradient_ws(&mut ws, &model, dataset.task, config.target, p.x, p.y, w, &mut grad);
                l_sum += ev.loss;
                r_sum += w * ev.r_value;
            }
            let scale = config.step / batch.len() as f64;
            for (p, g) in model.params.iter_mut().zip(&grad) {
                *p -= scale * g;
            }
            steps += 1;
        }
        let obj = (l_sum + r_sum) / n as f64;
        if !obj.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { step: steps, last_finite: Box::new(last_finite) });
        }
        curve.push(CurvePoint { step: steps, loss: l_sum / n as f64, reg: r_sum / n as f64, objective: obj });
        last_finite.params.copy_from_slice(&model.params);
    }
    Ok(TrainOutcome { model, curve })
}

/// [`train`] with every `τ_i = 1`.
pub fn train_uniform(model: &MlpModel, dataset: &Dataset, lambda: f64, config: &SgdConfig) -> Result<TrainOutcome> {
    train(model, dataset, &ExampleWeights::uniform(dataset.len()), lambda, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_predicts_zero() {
        let m = MlpModel::zeros(&[1, 8, 8, 1], Activation::Tanh).unwrap();
        assert_eq!(m.predict(0.37), 0.0);
    }

    #[test]
    fn single_linear_layer() {
        let mut m = MlpModel::zeros(&[1, 1], Activation::Tanh).unwrap();
        m.set_params(&[2.5, -0.5]).unwrap();
        assert_eq!(m.predict(0.4), 2.5 * 0.4 - 0.5);
        let t = m.forward(0.4);
        assert_eq!(t, m.forward(0.4));
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(MlpModel::zeros(&[2, 4, 1], Activation::Tanh).is_err());
        assert!(MlpModel::zeros(&[1], Activation::Tanh).is_err());
        assert!(MlpModel::zeros(&[1, 0, 1], Activation::Tanh).is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let m = MlpModel::init(&MlpConfig { hidden: vec![3, 2], ..Default::default() }, 4).unwrap();
        let back = MlpModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn zero_residual_gives_zero_penalty() {
        let m = MlpModel::init(&MlpConfig { hidden: vec![5, 4], ..Default::default() }, 1).unwrap();
        let x = 0.3;
        let y = m.predict(x);
        let rep = jacobian_reg(&m, Task::Regression, x, y);
        assert_eq!(rep.r_value, 0.0);
        assert!(rep.layer_sq_norms.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_network_hand_computed_jacobian() {
        // one hidden unit layer of width 2, identity activation, output weights (3, 0)
        let mut m = MlpModel::zeros(&[1, 2, 1], Activation::Identity).unwrap();
        *m.weight_mut(0, 0, 0) = 1.0;
        *m.weight_mut(1, 0, 0) = 3.0;
        *m.bias_mut(1, 0) = 2.0;
        // prediction at x = 0 is 2, label 0: residual 2, ‖W_out‖ = 3
        let rep = jacobian_reg(&m, Task::Regression, 0.0, 0.0);
        assert_eq!(rep.layer_sq_norms.len(), 1);
        assert!((rep.layer_sq_norms[0].sqrt() - 6.0).abs() < 1e-14);
    }
}
