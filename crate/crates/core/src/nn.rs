//! Dense-network kernel: sequential affine layers with reverse-mode
//! gradients, an Adam optimizer, and the tanh-squashed Gaussian head used by
//! the stochastic policies.
//!
//! Everything operates on `f64` in row-major matrices. Batched forward and
//! backward passes are the training hot path; the single-sample entry points
//! wrap them.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::Write as _;
use std::path::Path;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Stabilizer inside the tanh change-of-variables log term.
pub const TANH_EPS: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("tape does not match this network (layer {layer})")]
    StaleTape { layer: usize },
    #[error("non-finite gradient encountered in {0}")]
    NonFiniteGradient(&'static str),
    #[error("cannot read parameter file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parameter file format error: {0}")]
    Format(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed in terms of the pre-activation.
    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    fn from_name(s: &str) -> Result<Self, NnError> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(NnError::Format(format!("unknown activation `{other}`"))),
        }
    }
}

/// Multilayer perceptron. Weight matrix `k` has shape (sizes[k+1], sizes[k]).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Cached intermediates of one forward pass: each layer's input batch and
/// pre-activation batch.
#[derive(Debug, Clone)]
pub struct GradientTape {
    inputs: Vec<Mat>,
    pre: Vec<Mat>,
}

/// Parameter gradients plus the gradient with respect to the network input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub dw: Vec<Mat>,
    pub db: Vec<Vec<f64>>,
    pub dx: Mat,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp, batch: usize) -> Self {
        Self {
            dw: net
                .weights
                .iter()
                .map(|w| Mat::zeros(w.rows, w.cols))
                .collect(),
            db: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            dx: Mat::zeros(batch, net.sizes[0]),
        }
    }

    /// Adds another gradient set in place (used to combine per-head terms).
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.dw.iter_mut().zip(&other.dw) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

impl Mlp {
    /// Uniform init in +-1/sqrt(fan_in) per layer.
    pub fn init(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for k in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut w = Mat::zeros(fan_out, fan_in);
            for v in w.data.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
            let mut b = vec![0.0; fan_out];
            for v in b.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
            weights.push(w);
            biases.push(b);
        }
        Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            hidden,
            output,
        }
    }

    /// Scales the final layer's parameters, used to start actors near zero.
    pub fn scale_last_layer(&mut self, factor: f64) {
        if let Some(w) = self.weights.last_mut() {
            for v in w.data.iter_mut() {
                *v *= factor;
            }
        }
        if let Some(b) = self.biases.last_mut() {
            for v in b.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layer_activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Batched forward pass with tape capture.
    pub fn forward_batch(&self, x: &Mat) -> Result<(Mat, GradientTape), NnError> {
        if x.cols != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.cols,
            });
        }
        let n = x.rows;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pres = Vec::with_capacity(self.weights.len());
        let mut cur = x.clone();
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut pre = Mat::zeros(n, w.rows);
            for i in 0..n {
                let xi = cur.row(i);
                let out = pre.row_mut(i);
                for (o, out_v) in out.iter_mut().enumerate() {
                    let wr = w.row(o);
                    let mut acc = b[o];
                    for (xv, wv) in xi.iter().zip(wr) {
                        acc += xv * wv;
                    }
                    *out_v = acc;
                }
            }
            let act = self.layer_activation(k);
            let mut post = Mat::zeros(n, w.rows);
            for (p, q) in pre.data.iter().zip(post.data.iter_mut()) {
                *q = act.apply(*p);
            }
            inputs.push(cur);
            pres.push(pre);
            cur = post;
        }
        Ok((cur, GradientTape { inputs, pre: pres }))
    }

    /// Single-sample forward pass with tape capture.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, GradientTape), NnError> {
        let m = Mat {
            rows: 1,
            cols: x.len(),
            data: x.to_vec(),
        };
        let (y, tape) = self.forward_batch(&m)?;
        Ok((y.data, tape))
    }

    /// Forward pass without tape capture, for rollouts.
    pub fn infer(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let act = self.layer_activation(k);
            let mut next = vec![0.0; w.rows];
            for (o, nv) in next.iter_mut().enumerate() {
                let wr = w.row(o);
                let mut acc = b[o];
                for (xv, wv) in cur.iter().zip(wr) {
                    acc += xv * wv;
                }
                *nv = act.apply(acc);
            }
            cur = next;
        }
        cur
    }

    /// Reverse-mode gradients of `<grad_y, y>` with respect to all parameters
    /// and the input batch. The tape must come from a matching forward pass.
    pub fn backward_batch(&self, tape: &GradientTape, grad_y: &Mat) -> Result<Gradients, NnError> {
        if tape.inputs.len() != self.weights.len() {
            return Err(NnError::StaleTape { layer: 0 });
        }
        let n = grad_y.rows;
        for (k, w) in self.weights.iter().enumerate() {
            if tape.inputs[k].cols != w.cols || tape.pre[k].cols != w.rows || tape.pre[k].rows != n
            {
                return Err(NnError::StaleTape { layer: k });
            }
        }
        if grad_y.cols != self.output_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.output_dim(),
                got: grad_y.cols,
            });
        }

        let mut grads = Gradients::zeros_like(self, n);
        let mut upstream = grad_y.clone();
        for k in (0..self.weights.len()).rev() {
            let w = &self.weights[k];
            let act = self.layer_activation(k);
            let pre = &tape.pre[k];
            let input = &tape.inputs[k];

            // delta = upstream (*) act'(pre)
            let mut delta = std::mem::replace(&mut upstream, Mat::zeros(0, 0));
            for (d, p) in delta.data.iter_mut().zip(&pre.data) {
                *d *= act.derivative(*p);
            }

            let dw = &mut grads.dw[k];
            let db = &mut grads.db[k];
            let mut dx = Mat::zeros(n, w.cols);
            for i in 0..n {
                let di = delta.row(i);
                let xi = input.row(i);
                let dxi = dx.row_mut(i);
                for (o, &d) in di.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    db[o] += d;
                    let dwr = dw.row_mut(o);
                    for (dv, xv) in dwr.iter_mut().zip(xi) {
                        *dv += d * xv;
                    }
                    let wr = w.row(o);
                    for (gv, wv) in dxi.iter_mut().zip(wr) {
                        *gv += d * wv;
                    }
                }
            }
            if k == 0 {
                grads.dx = dx;
            } else {
                upstream = dx;
            }
        }
        Ok(grads)
    }

    /// Single-sample backward pass.
    pub fn backward(&self, tape: &GradientTape, grad_y: &[f64]) -> Result<Gradients, NnError> {
        let g = Mat {
            rows: 1,
            cols: grad_y.len(),
            data: grad_y.to_vec(),
        };
        self.backward_batch(tape, &g)
    }

    /// Soft update toward `online`: `self = (1 - tau) * self + tau * online`.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) {
        for (tw, ow) in self.weights.iter_mut().zip(&online.weights) {
            for (t, o) in tw.data.iter_mut().zip(&ow.data) {
                *t = (1.0 - tau) * *t + tau * o;
            }
        }
        for (tb, ob) in self.biases.iter_mut().zip(&online.biases) {
            for (t, o) in tb.iter_mut().zip(ob) {
                *t = (1.0 - tau) * *t + tau * o;
            }
        }
    }

    /// Serializes to the decimal-text parameter format. Values use shortest
    /// round-trip precision, so load reproduces them exactly.
    pub fn save_string(&self) -> String {
        let mut out = String::from("mlp-text-v1\n");
        let _ = writeln!(
            out,
            "sizes: {}",
            self.sizes
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        );
        let _ = writeln!(out, "hidden: {}", self.hidden.name());
        let _ = writeln!(out, "output: {}", self.output.name());
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let _ = writeln!(out, "w{k}: {}", join_floats(&w.data));
            let _ = writeln!(out, "b{k}: {}", join_floats(b));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        std::fs::write(path, self.save_string())?;
        Ok(())
    }

    pub fn load_string(text: &str) -> Result<Self, NnError> {
        let mut lines = text.lines();
        let magic = lines.next().ok_or_else(|| NnError::Format("empty file".into()))?;
        if magic.trim() != "mlp-text-v1" {
            return Err(NnError::Format(format!("bad magic `{magic}`")));
        }
        let sizes_line = expect_field(lines.next(), "sizes")?;
        let sizes: Vec<usize> = sizes_line
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| NnError::Format(format!("sizes: {e}"))))
            .collect::<Result<_, _>>()?;
        if sizes.len() < 2 {
            return Err(NnError::Format("need at least two layer sizes".into()));
        }
        let hidden = Activation::from_name(expect_field(lines.next(), "hidden")?.trim())?;
        let output = Activation::from_name(expect_field(lines.next(), "output")?.trim())?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for k in 0..sizes.len() - 1 {
            let w_line = expect_field(lines.next(), &format!("w{k}"))?;
            let data = parse_floats(w_line)?;
            let (rows, cols) = (sizes[k + 1], sizes[k]);
            if data.len() != rows * cols {
                return Err(NnError::Format(format!(
                    "w{k}: expected {} values, got {}",
                    rows * cols,
                    data.len()
                )));
            }
            weights.push(Mat { rows, cols, data });
            let b_line = expect_field(lines.next(), &format!("b{k}"))?;
            let b = parse_floats(b_line)?;
            if b.len() != sizes[k + 1] {
                return Err(NnError::Format(format!(
                    "b{k}: expected {} values, got {}",
                    sizes[k + 1],
                    b.len()
                )));
            }
            biases.push(b);
        }
        Ok(Self {
            sizes,
            weights,
            biases,
            hidden,
            output,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        Self::load_string(&std::fs::read_to_string(path)?)
    }
}

fn join_floats(v: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x}");
    }
    s
}

fn parse_floats(s: &str) -> Result<Vec<f64>, NnError> {
    s.split_whitespace()
        .map(|t| t.parse().map_err(|e| NnError::Format(format!("{e}"))))
        .collect()
}

fn expect_field<'a>(line: Option<&'a str>, name: &str) -> Result<&'a str, NnError> {
    let line = line.ok_or_else(|| NnError::Format(format!("missing `{name}` line")))?;
    let (key, rest) = line
        .split_once(':')
        .ok_or_else(|| NnError::Format(format!("expected `{name}: ...`, got `{line}`")))?;
    if key.trim() != name {
        return Err(NnError::Format(format!("expected `{name}`, got `{key}`")));
    }
    Ok(rest)
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m_w: Vec<Mat>,
    v_w: Vec<Mat>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m_w: net
                .weights
                .iter()
                .map(|w| Mat::zeros(w.rows, w.cols))
                .collect(),
            v_w: net
                .weights
                .iter()
                .map(|w| Mat::zeros(w.rows, w.cols))
                .collect(),
            m_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// One scalar-parameter Adam update on flat slices.
#[allow(clippy::too_many_arguments)]
fn adam_update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
) -> Result<(), NnError> {
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        if !g.is_finite() {
            return Err(NnError::NonFiniteGradient("adam step"));
        }
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Bias-corrected adaptive-moment update of all network parameters.
/// Non-finite gradients abort with an error rather than being clipped.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState) -> Result<(), NnError> {
    state.step += 1;
    let (lr, b1, b2, eps, t) = (state.lr, state.beta1, state.beta2, state.eps, state.step);
    for k in 0..net.weights.len() {
        adam_update_slice(
            &mut net.weights[k].data,
            &grads.dw[k].data,
            &mut state.m_w[k].data,
            &mut state.v_w[k].data,
            lr,
            b1,
            b2,
            eps,
            t,
        )?;
        adam_update_slice(
            &mut net.biases[k],
            &grads.db[k],
            &mut state.m_b[k],
            &mut state.v_b[k],
            lr,
            b1,
            b2,
            eps,
            t,
        )?;
    }
    Ok(())
}

/// Adam state for a free parameter vector (log-std, entropy temperature).
#[derive(Debug, Clone)]
pub struct VecAdam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl VecAdam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        self.step += 1;
        adam_update_slice(
            params, grads, &mut self.m, &mut self.v, self.lr, self.beta1, self.beta2, self.eps,
            self.step,
        )
    }
}

/// Diagonal Gaussian whose samples are squashed through tanh.
#[derive(Debug, Clone)]
pub struct GaussianHead {
    pub mean: Vec<f64>,
    /// Clamped into [LOG_STD_MIN, LOG_STD_MAX] at construction.
    pub log_std: Vec<f64>,
}

impl GaussianHead {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_std.len());
        let log_std = log_std
            .into_iter()
            .map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Self { mean, log_std }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianSample {
    pub pre_squash: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    /// Standard-normal noise used for the draw (reparameterization handle).
    pub noise: Vec<f64>,
}

const LN_2PI: f64 = 1.8378770664093453;

/// Draws `action = tanh(mean + std * noise)` and returns the log density with
/// the tanh change-of-variables correction.
pub fn gaussian_sample(head: &GaussianHead, rng: &mut impl Rng) -> GaussianSample {
    let dim = head.mean.len();
    let mut pre = Vec::with_capacity(dim);
    let mut act = Vec::with_capacity(dim);
    let mut noise = Vec::with_capacity(dim);
    for i in 0..dim {
        let eps: f64 = StandardNormal.sample(rng);
        let std = head.log_std[i].exp();
        let u = head.mean[i] + std * eps;
        noise.push(eps);
        pre.push(u);
        act.push(u.tanh());
    }
    let log_prob = gaussian_log_prob(head, &pre);
    GaussianSample {
        pre_squash: pre,
        action: act,
        log_prob,
        noise,
    }
}

/// Log density of the squashed action identified by its pre-squash value.
pub fn gaussian_log_prob(head: &GaussianHead, pre_squash: &[f64]) -> f64 {
    let mut lp = 0.0;
    for i in 0..head.mean.len() {
        let std = head.log_std[i].exp();
        let z = (pre_squash[i] - head.mean[i]) / std;
        let a = pre_squash[i].tanh();
        lp += -0.5 * z * z - head.log_std[i] - 0.5 * LN_2PI;
        lp -= (1.0 - a * a + TANH_EPS).ln();
    }
    lp
}

/// Entropy of the pre-squash Gaussian (used for the exploration bonus).
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std
        .iter()
        .map(|l| l + 0.5 * (LN_2PI + 1.0))
        .sum()
}
