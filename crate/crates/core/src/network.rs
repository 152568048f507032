//! Fully connected ReLU networks with hand-written backpropagation and an
//! interpolation trainer.
//!
//! Training is full-batch SGD with momentum and decoupled weight decay. An
//! optional second phase ("refinement") takes damped Gauss-Newton steps on
//! the same parameters: each step is the minimum-norm parameter change that
//! fits the residuals of the linearized network, i.e. the end point of
//! gradient flow on the network's tangent model. Plain GD tends to stall a
//! little above tight tolerances because of the edge-of-stability
//! oscillation of the largest NTK eigenvalues; the refinement closes that
//! last gap without touching the architecture.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, solve_spd};
use crate::map::RealMap;
use crate::sampling::SampleSet;
use crate::textio::{fmt_f64, parse_f64};

/// Loss above which training is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e6;
/// Weight-norm trace period, in epochs.
pub const TRACE_EVERY: usize = 100;
/// Refinement aims this far below the interpolation tolerance.
pub const REFINE_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    /// Derivative with the subgradient `relu'(0) = 0`.
    fn deriv(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
}

/// How the first layer's biases are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// Zero biases everywhere.
    #[default]
    ZeroBias,
    /// First-layer rows are rescaled to unit norm (random directions) and
    /// unit `j` gets `b_j = -w_j . p_j` with `p_j` uniform on `[-pi, pi]^d`,
    /// so its kink hyperplane passes through the domain. Unit norm keeps the
    /// kink position `-b/|w|` from being hypersensitive to bias updates.
    /// With zero biases every first-layer kink sits at the origin and the
    /// network starts out nearly linear on each side of it.
    SpreadKinks,
}

impl FromStr for InitScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero-bias" | "zero" => Ok(InitScheme::ZeroBias),
            "spread-kinks" | "spread" => Ok(InitScheme::SpreadKinks),
            other => Err(Error::Parse(format!("unknown init scheme `{other}`"))),
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitScheme::ZeroBias => "zero-bias",
            InitScheme::SpreadKinks => "spread-kinks",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Parameter gradients, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

/// Cached batch forward pass.
struct Tape {
    /// `pre[l]`: pre-activations of layer `l`, `n x out_l`.
    pre: Vec<Array2<f64>>,
    /// `z[0]` is the input; `z[l + 1]` the output of layer `l`.
    z: Vec<Array2<f64>>,
}

impl Mlp {
    /// `N(0, 1/fan_in)` weights, zero biases, ReLU hidden layers, identity output.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        Self::init_with(sizes, seed, InitScheme::ZeroBias)
    }

    pub fn init_with(sizes: &[usize], seed: u64, scheme: InitScheme) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Domain("a network needs at least an input and an output size".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::Domain(format!("layer sizes must be positive, got {sizes:?}")));
        }
        if sizes[sizes.len() - 1] != 1 {
            return Err(Error::Domain(format!(
                "output size must be 1, got {}",
                sizes[sizes.len() - 1]
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = sizes.len() - 2;
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("finite scale");
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| normal.sample(&mut rng));
            let b = Array1::zeros(fan_out);
            let act = if l == last { Activation::Identity } else { Activation::Relu };
            layers.push(Layer { w, b, act });
        }
        if scheme == InitScheme::SpreadKinks {
            let first = &mut layers[0];
            for (mut row, b) in first.w.rows_mut().into_iter().zip(first.b.iter_mut()) {
                let norm = row.dot(&row).sqrt();
                if norm > 0.0 {
                    row /= norm;
                }
                let mut dot = 0.0;
                for w in row.iter() {
                    dot += w * rng.random_range(-std::f64::consts::PI..=std::f64::consts::PI);
                }
                *b = -dot;
            }
        }
        Ok(Self { layers })
    }

    /// Builds a network from explicit layers, checking shapes and finiteness.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Domain("network has no layers".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.w.nrows() != layer.b.len() {
                return Err(Error::Dimension(format!(
                    "layer {l}: weight has {} rows, bias has {} entries",
                    layer.w.nrows(),
                    layer.b.len()
                )));
            }
            if l > 0 && layers[l - 1].w.nrows() != layer.w.ncols() {
                return Err(Error::Dimension(format!(
                    "layer {l} expects {} inputs, previous layer gives {}",
                    layer.w.ncols(),
                    layers[l - 1].w.nrows()
                )));
            }
            if layer.w.iter().chain(layer.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(Self { layers })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_size()];
        s.extend(self.layers.iter().map(|l| l.w.nrows()));
        s
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].w.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.input_size(), "input dimension");
        let mut z = Array1::from(x.to_vec());
        for layer in &self.layers {
            let mut pre = layer.w.dot(&z);
            pre += &layer.b;
            pre.mapv_inplace(|v| layer.act.apply(v));
            z = pre;
        }
        z[0]
    }

    /// Outputs for every row of `x` (`n x d`).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut z = x.to_owned();
        for layer in &self.layers {
            let mut pre = z.dot(&layer.w.t());
            pre += &layer.b;
            pre.mapv_inplace(|v| layer.act.apply(v));
            z = pre;
        }
        z.column(0).to_owned()
    }

    fn tape(&self, x: ArrayView2<f64>) -> Tape {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut z = Vec::with_capacity(self.layers.len() + 1);
        z.push(x.to_owned());
        for layer in &self.layers {
            let mut p = z[z.len() - 1].dot(&layer.w.t());
            p += &layer.b;
            let a = p.mapv(|v| layer.act.apply(v));
            pre.push(p);
            z.push(a);
        }
        Tape { pre, z }
    }

    /// Backpropagates per-sample output sensitivities `g` (`n`) through the
    /// tape; returns `delta[l]` = d(sum_i g_i phi(x_i)) / d pre[l], row `i`
    /// holding sample `i`'s contribution.
    fn backward(&self, tape: &Tape, g: ArrayView1<f64>) -> Vec<Array2<f64>> {
        let n_layers = self.layers.len();
        let mut deltas: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        let mut d = g.to_owned().insert_axis(Axis(1));
        let last = &self.layers[n_layers - 1];
        Zip::from(&mut d)
            .and(&tape.pre[n_layers - 1])
            .for_each(|dv, &p| *dv *= last.act.deriv(p));
        deltas.push(d);
        for l in (0..n_layers - 1).rev() {
            let mut d = deltas[deltas.len() - 1].dot(&self.layers[l + 1].w);
            let act = self.layers[l].act;
            Zip::from(&mut d)
                .and(&tape.pre[l])
                .for_each(|dv, &p| *dv *= act.deriv(p));
            deltas.push(d);
        }
        deltas.reverse();
        deltas
    }

    /// Exact gradient of `0.5 * mean_i (phi(x_i) - y_i)^2`.
    pub fn grad(&self, x: ArrayView2<f64>, y: &[f64]) -> Result<Gradients> {
        if x.nrows() == 0 || x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "gradient needs a nonempty batch with matching targets ({} points, {} targets)",
                x.nrows(),
                y.len()
            )));
        }
        let tape = self.tape(x);
        let out = tape.z[tape.z.len() - 1].column(0).to_owned();
        let n = y.len() as f64;
        let g: Array1<f64> = out
            .iter()
            .zip(y)
            .map(|(o, t)| (o - t) / n)
            .collect();
        Ok(self.param_grads(&tape, &self.backward(&tape, g.view())))
    }

    fn param_grads(&self, tape: &Tape, deltas: &[Array2<f64>]) -> Gradients {
        let w = deltas
            .iter()
            .zip(&tape.z)
            .map(|(d, z)| d.t().dot(z))
            .collect();
        let b = deltas.iter().map(|d| d.sum_axis(Axis(0))).collect();
        Gradients { w, b }
    }

    /// `dphi/dx` at `x` as a length-`d` row, and whether `x` sits exactly on
    /// a ReLU kink (where the subgradient `relu'(0) = 0` was used).
    pub fn jacobian(&self, x: &[f64]) -> (Vec<f64>, bool) {
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let tape = self.tape(xs);
        let at_kink = self
            .layers
            .iter()
            .zip(&tape.pre)
            .any(|(l, p)| l.act == Activation::Relu && p.iter().any(|&v| v == 0.0));
        let deltas = self.backward(&tape, Array1::ones(1).view());
        let j = deltas[0].dot(&self.layers[0].w);
        (j.row(0).to_vec(), at_kink)
    }

    /// Input gradients for every row of `x`, `n x d`.
    pub fn input_gradients(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let tape = self.tape(x);
        let deltas = self.backward(&tape, Array1::ones(x.nrows()).view());
        deltas[0].dot(&self.layers[0].w)
    }

    /// Empirical NTK `G = J J^T` on the rows of `x`, where `J` is the
    /// Jacobian of the outputs with respect to all parameters:
    /// `G = sum_l (Delta_l Delta_l^T) .* (Z_{l-1} Z_{l-1}^T + 1)`.
    /// Layer `l`'s parameter block is weighted by `scale[l]` (all ones for
    /// the plain kernel).
    fn ntk(&self, x: ArrayView2<f64>, scale: &[f64]) -> (Array2<f64>, Tape, Vec<Array2<f64>>) {
        let n = x.nrows();
        let tape = self.tape(x);
        let deltas = self.backward(&tape, Array1::ones(n).view());
        let mut g = Array2::<f64>::zeros((n, n));
        for ((d, z), s) in deltas.iter().zip(&tape.z).zip(scale) {
            let dd = d.dot(&d.t());
            let mut zz = z.dot(&z.t());
            zz += 1.0;
            g.scaled_add(*s, &(dd * zz));
        }
        (g, tape, deltas)
    }

    pub fn weight_norms(&self) -> WeightNorms {
        let frobenius: Vec<f64> = self
            .layers
            .iter()
            .map(|l| linalg::frobenius_norm_real(l.w.view()))
            .collect();
        let spectral: Vec<f64> = self
            .layers
            .iter()
            .map(|l| linalg::spectral_norm_real(l.w.view()))
            .collect();
        WeightNorms {
            frobenius_product: frobenius.iter().product(),
            spectral_product: spectral.iter().product(),
            frobenius_sq_sum: frobenius.iter().map(|f| f * f).sum(),
            frobenius,
            spectral,
        }
    }

    fn frobenius_product(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| linalg::frobenius_norm_real(l.w.view()))
            .product()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "mlp").unwrap();
        let sizes: Vec<String> = self.sizes().iter().map(|v| v.to_string()).collect();
        writeln!(s, "sizes = {}", sizes.join(" ")).unwrap();
        let acts: Vec<&str> = self.layers.iter().map(|l| l.act.as_str()).collect();
        writeln!(s, "activations = {}", acts.join(" ")).unwrap();
        for (l, layer) in self.layers.iter().enumerate() {
            writeln!(s, "weight {l}").unwrap();
            for row in layer.w.rows() {
                let vals: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
                writeln!(s, "{}", vals.join(" ")).unwrap();
            }
            writeln!(s, "bias {l}").unwrap();
            let vals: Vec<String> = layer.b.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(s, "{}", vals.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("checkpoint truncated before {what}")))
        };
        if next("magic")? != "mlp" {
            return Err(Error::Parse("not an mlp checkpoint".into()));
        }
        let sizes: Vec<usize> = key_value(next("sizes")?, "sizes")?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad layer size `{t}`"))))
            .collect::<Result<_>>()?;
        let acts: Vec<Activation> = key_value(next("activations")?, "activations")?
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_>>()?;
        if sizes.len() < 2 || acts.len() != sizes.len() - 1 {
            return Err(Error::Parse("sizes and activations disagree".into()));
        }
        let mut layers = Vec::with_capacity(acts.len());
        for (l, act) in acts.into_iter().enumerate() {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            if next("weight header")? != format!("weight {l}") {
                return Err(Error::Parse(format!("expected `weight {l}`")));
            }
            let mut flat = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_out {
                let row = parse_row(next("weight row")?)?;
                if row.len() != fan_in {
                    return Err(Error::Parse(format!("layer {l}: expected {fan_in} weights per row")));
                }
                flat.extend(row);
            }
            if next("bias header")? != format!("bias {l}") {
                return Err(Error::Parse(format!("expected `bias {l}`")));
            }
            let b = parse_row(next("bias row")?)?;
            if b.len() != fan_out {
                return Err(Error::Parse(format!("layer {l}: expected {fan_out} biases")));
            }
            let w = Array2::from_shape_vec((fan_out, fan_in), flat).expect("shape checked");
            layers.push(Layer {
                w,
                b: Array1::from(b),
                act,
            });
        }
        Self::from_layers(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn key_value<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("expected `{key} = ...`, got `{line}`")))?;
    if k.trim() != key {
        return Err(Error::Parse(format!("expected key `{key}`, got `{}`", k.trim())));
    }
    Ok(v.trim())
}

fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace().map(parse_f64).collect()
}

/// Rows per chunk when evaluating large point sets.
const EVAL_CHUNK: usize = 2048;

impl RealMap for Mlp {
    fn input_dim(&self) -> usize {
        self.input_size()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.forward(x)
    }

    fn eval_many(&self, points: ArrayView2<f64>) -> Array1<f64> {
        let n = points.nrows();
        let starts: Vec<usize> = (0..n).step_by(EVAL_CHUNK).collect();
        let parts: Vec<Array1<f64>> = starts
            .par_iter()
            .map(|&s| self.forward_batch(points.slice(s![s..(s + EVAL_CHUNK).min(n), ..])))
            .collect();
        let mut out = Vec::with_capacity(n);
        for p in parts {
            out.extend(p);
        }
        Array1::from(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightNorms {
    pub frobenius: Vec<f64>,
    pub spectral: Vec<f64>,
    pub frobenius_product: f64,
    pub spectral_product: f64,
    /// `sum_i ||W_i||_F^2`, which bounds the product via AM-GM.
    pub frobenius_sq_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// The tangent kernel grows with width under this parameterization,
    /// so the stable step shrinks as the net widens; the default suits
    /// width 1000 (5e-3 already blows up there).
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Max absolute training residual that counts as interpolation.
    pub tolerance: f64,
    pub seed: u64,
    /// Gauss-Newton steps per refinement stage after the SGD phase; 0
    /// leaves only the output-layer correction.
    pub refine_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.5,
            weight_decay: 1e-4,
            max_epochs: 2000,
            tolerance: 1e-3,
            seed: 0,
            refine_steps: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Domain(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Domain(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Domain(format!("weight decay must be >= 0, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// SGD epochs taken.
    pub epochs: usize,
    /// Accepted refinement steps.
    pub refine_steps: usize,
    pub final_max_residual: f64,
    pub interpolated: bool,
    /// `(epoch, prod_i ||W_i||_F)` every `TRACE_EVERY` epochs, plus a final
    /// entry after refinement.
    pub weight_norm_trace: Vec<(usize, f64)>,
}

fn max_abs_residual(out: &Array1<f64>, y: &[f64]) -> f64 {
    out.iter().zip(y).map(|(o, t)| (o - t).abs()).fold(0.0, f64::max)
}

/// Trains `net` until every training residual is within `cfg.tolerance`.
pub fn train_to_interpolation(net: &Mlp, samples: &SampleSet, cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Domain("cannot train on an empty sample set".into()));
    }
    if samples.dim != net.input_size() {
        return Err(Error::Dimension(format!(
            "samples are {}-dimensional, network expects {}",
            samples.dim,
            net.input_size()
        )));
    }
    let x = samples.points.view();
    let y = &samples.values;
    let n = y.len() as f64;
    let mut net = net.clone();
    let mut vel: Vec<(Array2<f64>, Array1<f64>)> = net
        .layers
        .iter()
        .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.len())))
        .collect();
    let mut trace = Vec::new();
    let shrink = 1.0 - cfg.learning_rate * cfg.weight_decay;
    let mut epochs = 0;
    let mut residual;
    loop {
        let tape = net.tape(x);
        let out = tape.z[tape.z.len() - 1].column(0).to_owned();
        let loss = 0.5 * out.iter().zip(y).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / n;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Divergence { epoch: epochs, loss });
        }
        if epochs % TRACE_EVERY == 0 {
            trace.push((epochs, net.frobenius_product()));
        }
        residual = max_abs_residual(&out, y);
        if residual <= cfg.tolerance || epochs >= cfg.max_epochs {
            break;
        }
        let g: Array1<f64> = out.iter().zip(y).map(|(o, t)| (o - t) / n).collect();
        let grads = net.param_grads(&tape, &net.backward(&tape, g.view()));
        for ((layer, (vw, vb)), (gw, gb)) in net
            .layers
            .iter_mut()
            .zip(vel.iter_mut())
            .zip(grads.w.iter().zip(&grads.b))
        {
            vw.zip_mut_with(gw, |v, g| *v = cfg.momentum * *v + g);
            vb.zip_mut_with(gb, |v, g| *v = cfg.momentum * *v + g);
            layer.w.scaled_add(-cfg.learning_rate, vw);
            layer.b.scaled_add(-cfg.learning_rate, vb);
            // Decoupled decay, weights only.
            layer.w *= shrink;
        }
        epochs += 1;
    }

    // Stage one keeps the first layer, and with it the kink positions,
    // fixed: moving kinks can empty a stretch of the domain that holds
    // three or more samples, after which the network is affine there and no
    // longer able to interpolate them. Stage two frees everything.
    let target = cfg.tolerance * REFINE_MARGIN;
    let mut refined = 0;
    for free_first in [false, true] {
        if residual <= target {
            break;
        }
        if cfg.refine_steps > 0 {
            let (r, steps) = refine(&mut net, x, y, target, cfg.refine_steps, free_first)?;
            residual = r;
            refined += steps;
        }
        if residual > target {
            residual = polish_output_layer(&mut net, x, y).unwrap_or(residual);
        }
    }
    if refined > 0 || trace.last().is_some_and(|&(e, _)| e != epochs) {
        trace.push((epochs, net.frobenius_product()));
    }
    let report = TrainReport {
        epochs,
        refine_steps: refined,
        final_max_residual: residual,
        interpolated: residual <= cfg.tolerance,
        weight_norm_trace: trace,
    };
    Ok((net, report))
}

/// Closes whatever residual is left with the minimum-norm change of the
/// output layer alone. That subproblem is linear: with hidden features
/// `Z` (`n x width`) augmented by a ones column for the bias, solve
/// `[Z 1][Z 1]^T a = r` and add `[Z 1]^T a`. For distinct points and
/// `n <= width` the ReLU features almost surely have full row rank, so this
/// interpolates to rounding, where the nonconvex full-network iteration can
/// stall on samples sitting next to a kink.
///
/// Returns the new max residual, or `None` (network untouched) if the
/// features are rank deficient or the correction does not help.
fn polish_output_layer(net: &mut Mlp, x: ArrayView2<f64>, y: &[f64]) -> Option<f64> {
    let tape = net.tape(x);
    let last = net.layers.len() - 1;
    let z = &tape.z[last];
    let out = tape.z[last + 1].column(0);
    let r: Array1<f64> = y.iter().zip(out).map(|(t, o)| t - o).collect();
    let before = max_abs_residual(&out.to_owned(), y);
    let mut gram = z.dot(&z.t());
    gram += 1.0;
    let trace = gram.diag().sum();
    gram.diag_mut().mapv_inplace(|v| v + 1e-14 * trace);
    let a = solve_spd(&gram, &r).ok()?;
    let mut trial = net.clone();
    let layer = &mut trial.layers[last];
    layer.w.row_mut(0).scaled_add(1.0, &z.t().dot(&a));
    layer.b[0] += a.sum();
    let after = max_abs_residual(&trial.forward_batch(x), y);
    (after < before).then(|| {
        *net = trial;
        after
    })
}

/// Halvings tried along one Gauss-Newton direction before giving up.
const MAX_BACKTRACK: usize = 40;

/// Gauss-Newton on the training residuals, written in sample space: with
/// `G = J J^T` (the empirical NTK, `n x n`), solve `G a = r` and move the
/// parameters along `J^T a`, the minimum-norm change that zeroes the
/// linearized residuals. The step length is halved until `||r||` drops.
///
/// Damping the system instead (Levenberg-Marquardt) does poorly here: after
/// SGD the leftover residual lives in the small-eigenvalue directions of
/// `G`, and a damped step turns toward the gradient, which barely moves
/// those. Backtracking keeps the full Gauss-Newton direction.
///
/// With `free_first == false` the first layer is held fixed (its block of
/// `J` is dropped).
///
/// Returns the final max residual and the number of accepted steps.
fn refine(
    net: &mut Mlp,
    x: ArrayView2<f64>,
    y: &[f64],
    target: f64,
    budget: usize,
    free_first: bool,
) -> Result<(f64, usize)> {
    let yv = ArrayView1::from(y);
    let resid = |net: &Mlp| -> Array1<f64> { &yv - &net.forward_batch(x) };
    let mut r = resid(net);
    let mut scale = vec![1.0; net.layers.len()];
    if !free_first && scale.len() > 1 {
        scale[0] = 0.0;
    }
    let mut accepted = 0;
    for _ in 0..budget {
        let max_r = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_r <= target {
            break;
        }
        let (g, tape, deltas) = net.ntk(x, &scale);
        let trace = g.diag().sum();
        if !(trace > 0.0) {
            break;
        }
        // Tiny ridge only to keep the Cholesky factorization well defined.
        let mut ridge = 1e-12 * trace;
        let coef = loop {
            let mut a_mat = g.clone();
            a_mat.diag_mut().mapv_inplace(|v| v + ridge);
            match solve_spd(&a_mat, &r) {
                Ok(a) => break Some(a),
                Err(_) if ridge < 1e-3 * trace => ridge *= 100.0,
                Err(_) => break None,
            }
        };
        let Some(coef) = coef else { break };
        let dirs: Vec<(Array2<f64>, Array1<f64>)> = deltas
            .iter()
            .zip(&tape.z)
            .zip(&scale)
            .map(|((d, z), s)| {
                let da = d * &coef.view().insert_axis(Axis(1)) * *s;
                (da.t().dot(z), da.sum_axis(Axis(0)))
            })
            .collect();
        let sse = r.dot(&r);
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..MAX_BACKTRACK {
            let mut trial = net.clone();
            for (layer, (dw, db)) in trial.layers.iter_mut().zip(&dirs) {
                layer.w.scaled_add(alpha, dw);
                layer.b.scaled_add(alpha, db);
            }
            let rt = resid(&trial);
            let sse_t = rt.dot(&rt);
            if sse_t.is_finite() && sse_t < sse {
                *net = trial;
                r = rt;
                improved = true;
                accepted += 1;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((r.iter().fold(0.0f64, |m, v| m.max(v.abs())), accepted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{equispaced_grid, Scheme};
    use ndarray::array;

    fn affine(w: f64, b: f64) -> Mlp {
        Mlp::from_layers(vec![Layer {
            w: array![[w]],
            b: array![b],
            act: Activation::Identity,
        }])
        .unwrap()
    }

    fn relu_unit(w: f64, b: f64) -> Mlp {
        Mlp::from_layers(vec![
            Layer {
                w: array![[w]],
                b: array![b],
                act: Activation::Relu,
            },
            Layer {
                w: array![[1.0]],
                b: array![0.0],
                act: Activation::Identity,
            },
        ])
        .unwrap()
    }

    #[test]
    fn parameter_count_of_wide_net() {
        let net = Mlp::init(&[1, 1000, 1000, 1], 0).unwrap();
        assert_eq!(net.param_count(), 1000 + 1000 + 1000 * 1000 + 1000 + 1000 + 1);
    }

    #[test]
    fn init_is_deterministic_and_validated() {
        let a = Mlp::init(&[2, 8, 8, 1], 4).unwrap();
        assert_eq!(a, Mlp::init(&[2, 8, 8, 1], 4).unwrap());
        assert_ne!(a, Mlp::init(&[2, 8, 8, 1], 5).unwrap());
        assert!(a.layers.iter().all(|l| l.b.iter().all(|&v| v == 0.0)));
        assert_eq!(a.layers[2].act, Activation::Identity);
        assert!(Mlp::init(&[1], 0).is_err());
        assert!(Mlp::init(&[1, 4, 2], 0).is_err());
        assert!(Mlp::init(&[1, 0, 1], 0).is_err());
    }

    #[test]
    fn spread_kinks_land_in_domain() {
        let net = Mlp::init_with(&[1, 64, 1], 2, InitScheme::SpreadKinks).unwrap();
        let l = &net.layers[0];
        for (w, b) in l.w.column(0).iter().zip(&l.b) {
            let kink = -b / w;
            assert!(kink.abs() <= std::f64::consts::PI + 1e-12);
        }
    }

    #[test]
    fn degenerate_nets() {
        assert_eq!(affine(2.0, 1.0).forward(&[3.0]), 7.0);
        assert_eq!(relu_unit(1.0, 0.0).forward(&[-1.0]), 0.0);
        let net = Mlp::init(&[3, 16, 16, 1], 9).unwrap();
        assert_eq!(net.forward(&[0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn batch_matches_pointwise() {
        let net = Mlp::init_with(&[2, 12, 7, 1], 1, InitScheme::SpreadKinks).unwrap();
        let x = Array2::from_shape_fn((9, 2), |(i, j)| (i as f64 * 0.7 - j as f64 * 1.3).sin() * 3.0);
        let batch = net.forward_batch(x.view());
        let many = net.eval_many(x.view());
        for (i, row) in x.rows().into_iter().enumerate() {
            let v = net.forward(&row.to_vec());
            assert!((batch[i] - v).abs() < 1e-12);
            assert_eq!(batch[i], many[i]);
        }
    }

    #[test]
    fn gradient_linear_regression_closed_form() {
        let net = affine(1.5, -0.5);
        let x = array![[2.0], [-1.0]];
        let y = [1.0, 0.25];
        let g = net.grad(x.view(), &y).unwrap();
        let r = [1.5 * 2.0 - 0.5 - 1.0, 1.5 * -1.0 - 0.5 - 0.25];
        let gw = (r[0] * 2.0 + r[1] * -1.0) / 2.0;
        let gb = (r[0] + r[1]) / 2.0;
        assert_eq!(g.w[0][(0, 0)], gw);
        assert_eq!(g.b[0][0], gb);
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let net = Mlp::init_with(&[1, 10, 10, 1], 3, InitScheme::SpreadKinks).unwrap();
        let x = array![[0.3], [-1.2], [2.0]];
        let y = net.forward_batch(x.view()).to_vec();
        let g = net.grad(x.view(), &y).unwrap();
        assert!(g.w.iter().all(|m| m.iter().all(|&v| v == 0.0)));
        assert!(g.b.iter().all(|m| m.iter().all(|&v| v == 0.0)));
        assert!(net.grad(Array2::zeros((0, 1)).view(), &[]).is_err());
    }

    #[test]
    fn jacobian_simple_cases() {
        assert_eq!(affine(-2.5, 1.0).jacobian(&[0.4]).0, vec![-2.5]);
        let unit = relu_unit(3.0, -1.0);
        assert_eq!(unit.jacobian(&[1.0]), (vec![3.0], false));
        assert_eq!(unit.jacobian(&[0.0]), (vec![0.0], false));
        assert_eq!(unit.jacobian(&[1.0 / 3.0]), (vec![0.0], true));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let net = Mlp::init_with(&[2, 20, 20, 1], 6, InitScheme::SpreadKinks).unwrap();
        let x = [0.37, -1.1];
        let (j, kink) = net.jacobian(&x);
        assert!(!kink);
        let h = 1e-6;
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (net.forward(&xp) - net.forward(&xm)) / (2.0 * h);
            assert!((fd - j[a]).abs() <= 1e-5 * j[a].abs().max(1.0));
        }
        let batch = net.input_gradients(array![[0.37, -1.1]].view());
        assert_eq!(batch.row(0).to_vec(), j);
    }

    fn flat(g: &Gradients) -> Vec<f64> {
        g.w.iter()
            .zip(&g.b)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    #[test]
    fn ntk_matches_explicit_jacobian() {
        let net = Mlp::init_with(&[1, 9, 7, 1], 5, InitScheme::SpreadKinks).unwrap();
        let x = array![[0.3], [-1.7], [2.2], [0.9]];
        // Per-sample dphi/dtheta: gradient of 0.5 (phi - y)^2 with y = phi - 1.
        let rows: Vec<Vec<f64>> = x
            .rows()
            .into_iter()
            .map(|r| {
                let xi = r.to_owned().insert_axis(Axis(0));
                let y = net.forward(&r.to_vec()) - 1.0;
                flat(&net.grad(xi.view(), &[y]).unwrap())
            })
            .collect();
        let (g, _, _) = net.ntk(x.view(), &[1.0; 3]);
        for i in 0..4 {
            for j in 0..4 {
                let e: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                assert!((g[(i, j)] - e).abs() <= 1e-12 * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn weight_norm_cases() {
        let zero = Mlp::from_layers(vec![Layer {
            w: Array2::zeros((1, 3)),
            b: array![0.0],
            act: Activation::Identity,
        }])
        .unwrap();
        let wn = zero.weight_norms();
        assert_eq!((wn.frobenius_product, wn.spectral_product), (0.0, 0.0));
        let diag = Mlp::from_layers(vec![
            Layer {
                w: array![[1.0, 0.0], [0.0, 2.0]],
                b: array![0.0, 0.0],
                act: Activation::Relu,
            },
            Layer {
                w: array![[1.0, 0.0]],
                b: array![0.0],
                act: Activation::Identity,
            },
        ])
        .unwrap();
        let wn = diag.weight_norms();
        assert!((wn.spectral[0] - 2.0).abs() < 1e-12);
        assert!((wn.frobenius[0] - 5f64.sqrt()).abs() < 1e-15);
        assert!((wn.frobenius_sq_sum - 6.0).abs() < 1e-12);
        let net = Mlp::init(&[1, 30, 30, 1], 1).unwrap();
        let wn = net.weight_norms();
        assert!(wn.spectral_product <= wn.frobenius_product);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let net = Mlp::init_with(&[2, 5, 4, 1], 8, InitScheme::SpreadKinks).unwrap();
        let back = Mlp::from_text(&net.to_text()).unwrap();
        assert_eq!(net, back);
        assert!(Mlp::from_text("mlp\nsizes = 1 1\n").is_err());
    }

    fn set(points: Array2<f64>, values: Vec<f64>) -> SampleSet {
        SampleSet::new(points, values, Scheme::UniformGrid, None).unwrap()
    }

    #[test]
    fn single_sample_interpolates() {
        let net = Mlp::init_with(&[1, 16, 16, 1], 0, InitScheme::SpreadKinks).unwrap();
        let s = set(array![[0.5]], vec![2.0]);
        let cfg = TrainConfig {
            refine_steps: 0,
            max_epochs: 5000,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let (trained, rep) = train_to_interpolation(&net, &s, &cfg).unwrap();
        assert!(rep.interpolated, "{rep:?}");
        assert!((trained.forward(&[0.5]) - 2.0).abs() <= cfg.tolerance);
    }

    #[test]
    fn constant_target_interpolates() {
        let net = Mlp::init_with(&[1, 32, 32, 1], 1, InitScheme::SpreadKinks).unwrap();
        let pts = equispaced_grid(1, 9);
        let s = set(pts, vec![3.0; 9]);
        let (_, rep) = train_to_interpolation(&net, &s, &TrainConfig::default()).unwrap();
        assert!(rep.interpolated, "{rep:?}");
        assert!(rep.final_max_residual <= 1e-3);
    }

    #[test]
    fn output_layer_correction_interpolates() {
        let mut net = Mlp::init_with(&[1, 64, 64, 1], 2, InitScheme::SpreadKinks).unwrap();
        let pts = crate::sampling::random_points(1, 12, 5).unwrap();
        let y: Vec<f64> = pts.column(0).iter().map(|x| (3.0 * x).sin() + 0.5).collect();
        let r = polish_output_layer(&mut net, pts.view(), &y).unwrap();
        assert!(r < 1e-8, "{r}");
        // Only the output layer moved.
        let fresh = Mlp::init_with(&[1, 64, 64, 1], 2, InitScheme::SpreadKinks).unwrap();
        assert_eq!(net.layers[..2], fresh.layers[..2]);
    }

    #[test]
    fn bandlimited_target_interpolates() {
        let f = crate::random_bandlimited(1, 5, crate::SpectrumProfile::flat(1)).unwrap();
        for seed in 0..3 {
            let pts = crate::sampling::random_points(1, 16, 100 + seed).unwrap();
            let s = SampleSet::from_map(&f, pts, Scheme::RandomIid, Some(seed)).unwrap();
            let net = Mlp::init_with(&[1, 64, 64, 1], seed, InitScheme::SpreadKinks).unwrap();
            let cfg = TrainConfig { max_epochs: 300, ..TrainConfig::default() };
            let (_, rep) = train_to_interpolation(&net, &s, &cfg).unwrap();
            assert!(rep.interpolated, "seed {seed}: {rep:?}");
            assert_eq!(rep.epochs, 300);
            assert_eq!(rep.weight_norm_trace.first().unwrap().0, 0);
            assert_eq!(rep.weight_norm_trace.last().unwrap().0, 300);
        }
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let net = Mlp::init(&[1, 32, 32, 1], 1).unwrap();
        let pts = equispaced_grid(1, 9);
        let vals = pts.column(0).iter().map(|x| 50.0 * x.sin()).collect();
        let cfg = TrainConfig {
            learning_rate: 10.0,
            ..TrainConfig::default()
        };
        match train_to_interpolation(&net, &set(pts, vals), &cfg) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let net = Mlp::init(&[1, 4, 1], 0).unwrap();
        let s = set(array![[0.0]], vec![1.0]);
        for cfg in [
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig { momentum: 1.0, ..TrainConfig::default() },
            TrainConfig { tolerance: 0.0, ..TrainConfig::default() },
        ] {
            assert!(matches!(train_to_interpolation(&net, &s, &cfg), Err(Error::Domain(_))));
        }
    }
}
