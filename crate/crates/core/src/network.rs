//! Multilayer perceptrons with reverse-mode parameter gradients and exact
//! forward-mode input Jacobians.
//!
//! Parameters are addressed through one flat ordering: for each layer, the
//! weight matrix (row-major, `out × in`) followed by the bias. Gradients and
//! optimizer state use the same ordering.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::{axpy, dot, Matrix, SeededRng};
use crate::{Error, Result};

/// Pointwise nonlinearity applied after each affine map.
///
/// `Elu` and `Tanh` are smooth and monotone, so decoders built from them are
/// immersions wherever their weights have full rank. `Relu` exists for
/// contrast experiments; its derivative at exactly 0 is taken to be 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Elu { alpha: f64 },
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub const ELU: Activation = Activation::Elu { alpha: 1.0 };

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu { alpha } => {
                if x > 0.0 {
                    x
                } else {
                    alpha * libm::expm1(x)
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => libm::tanh(x),
            Activation::Identity => x,
        }
    }

    /// Derivative at pre-activation `x`, given `y = apply(x)`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Elu { alpha } => {
                if x > 0.0 {
                    1.0
                } else {
                    y + alpha
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    /// Stable textual name, used in checkpoints and configs.
    pub fn name(self) -> String {
        match self {
            Activation::Elu { alpha } if alpha == 1.0 => "elu".to_string(),
            Activation::Elu { alpha } => format!("elu:{alpha:e}"),
            Activation::Relu => "relu".to_string(),
            Activation::Tanh => "tanh".to_string(),
            Activation::Identity => "identity".to_string(),
        }
    }

    pub fn parse(s: &str) -> Result<Activation> {
        match s {
            "elu" => Ok(Activation::ELU),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => match other.strip_prefix("elu:") {
                Some(a) => a
                    .parse::<f64>()
                    .ok()
                    .filter(|a| a.is_finite() && *a > 0.0)
                    .map(|alpha| Activation::Elu { alpha })
                    .ok_or_else(|| Error::Parse(format!("bad elu alpha in {other:?}"))),
                None => Err(Error::Parse(format!("unknown activation {other:?}"))),
            },
        }
    }

    fn init_limit(self, fan_in: usize) -> f64 {
        let fan_in = fan_in.max(1) as f64;
        match self {
            Activation::Elu { .. } | Activation::Relu => libm::sqrt(6.0 / fan_in),
            Activation::Tanh | Activation::Identity => libm::sqrt(3.0 / fan_in),
        }
    }
}

/// One affine map followed by an activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn param_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedForwardNet {
    layers: Vec<Layer>,
}

/// Intermediate values of a batched forward pass, kept for [`FeedForwardNet::backward`].
#[derive(Clone, Debug)]
pub struct Trace {
    /// input of each layer (`inputs[0]` is the batch itself)
    inputs: Vec<Matrix>,
    /// pre-activation of each layer
    pre: Vec<Matrix>,
    output: Matrix,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl FeedForwardNet {
    /// Validates that layer shapes chain and that every parameter is finite.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::shape("layer bias", l.out_dim(), l.bias.len()));
            }
            if !l.weight.is_finite() || l.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidInput(format!("layer {i} has non-finite parameters")));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::shape(
                    "layer chaining",
                    layers[i - 1].out_dim(),
                    l.in_dim(),
                ));
            }
        }
        Ok(FeedForwardNet { layers })
    }

    /// Randomly initialised MLP with layer widths `widths[0] → … → widths[last]`.
    ///
    /// Weights are uniform in `±sqrt(6 / fan_in)` for rectifier-like activations
    /// and `±sqrt(3 / fan_in)` otherwise; biases start at zero.
    pub fn init(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "network widths must have >= 2 positive entries, got {widths:?}"
            )));
        }
        let n_layers = widths.len() - 1;
        let layers = (0..n_layers)
            .map(|i| {
                let act = if i + 1 == n_layers { output } else { hidden };
                let (fan_in, fan_out) = (widths[i], widths[i + 1]);
                let limit = act.init_limit(fan_in);
                let weight =
                    Matrix::from_fn(fan_out, fan_in, |_, _| rng.uniform_range(-limit, limit));
                Layer {
                    weight,
                    bias: vec![0.0; fan_out],
                    activation: act,
                }
            })
            .collect();
        FeedForwardNet::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Widths `in → hidden… → out`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.in_dim()];
        w.extend(self.layers.iter().map(Layer::out_dim));
        w
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Flat copy of all parameters.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(l.weight.as_slice());
            p.extend_from_slice(&l.bias);
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape("set_params", self.param_count(), params.len()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weight.rows() * l.weight.cols();
            l.weight.as_mut_slice().copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Visits every parameter with its flat index.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut idx = 0;
        for l in &mut self.layers {
            for p in l.weight.as_mut_slice().iter_mut().chain(l.bias.iter_mut()) {
                f(idx, p);
                idx += 1;
            }
        }
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.in_dim() {
            return Err(Error::shape("forward", self.in_dim(), z.len()));
        }
        Ok(self.forward_unchecked(z))
    }

    pub(crate) fn forward_unchecked(&self, z: &[f64]) -> Vec<f64> {
        let mut h = z.to_vec();
        for l in &self.layers {
            h = l
                .weight
                .row_iter()
                .zip(&l.bias)
                .map(|(w, b)| l.activation.apply(dot(w, &h) + b))
                .collect();
        }
        h
    }

    /// Forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_trace(x)?.output)
    }

    pub fn forward_trace(&self, x: &Matrix) -> Result<Trace> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape("forward_batch", self.in_dim(), x.cols()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            let (a, y) = affine_act(l, &h);
            inputs.push(h);
            pre.push(a);
            h = y;
        }
        Ok(Trace {
            inputs,
            pre,
            output: h,
        })
    }

    /// Reverse pass. `adjoint` is ∂loss/∂output (one row per batch row);
    /// parameter gradients are *added* into `grads` (flat ordering) and the
    /// adjoint with respect to the network input is returned.
    pub fn backward(&self, trace: &Trace, adjoint: &Matrix, grads: &mut [f64]) -> Result<Matrix> {
        if adjoint.shape() != trace.output.shape() {
            return Err(Error::shape(
                "backward adjoint",
                format!("{:?}", trace.output.shape()),
                format!("{:?}", adjoint.shape()),
            ));
        }
        if grads.len() != self.param_count() {
            return Err(Error::shape("backward grads", self.param_count(), grads.len()));
        }
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.param_count();
        }

        let mut d_out = adjoint.clone();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let pre = &trace.pre[li];
            let post = if li + 1 < self.layers.len() {
                &trace.inputs[li + 1]
            } else {
                &trace.output
            };
            // d_pre = d_out ⊙ act'(pre), in place
            let mut d_pre = d_out;
            for ((d, &a), &y) in d_pre
                .as_mut_slice()
                .iter_mut()
                .zip(pre.as_slice())
                .zip(post.as_slice())
            {
                *d *= l.activation.derivative(a, y);
            }
            let input = &trace.inputs[li];
            let (n_out, n_in) = l.weight.shape();
            let g = &mut grads[offsets[li]..offsets[li] + l.param_count()];
            let (gw, gb) = g.split_at_mut(n_out * n_in);
            for r in 0..d_pre.rows() {
                let dr = d_pre.row(r);
                let xr = input.row(r);
                for (o, &d) in dr.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, xr, &mut gw[o * n_in..(o + 1) * n_in]);
                        gb[o] += d;
                    }
                }
            }
            let mut d_in = Matrix::zeros(d_pre.rows(), n_in);
            for r in 0..d_pre.rows() {
                let dr = d_pre.row(r);
                let out_row = d_in.row_mut(r);
                for (o, &d) in dr.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, l.weight.row(o), out_row);
                    }
                }
            }
            d_out = d_in;
        }
        Ok(d_out)
    }

    /// ∂f_i/∂z_j at `z`, as an `out_dim × in_dim` matrix, by the layer-wise
    /// chain rule `J = D_L W_L ⋯ D_1 W_1`.
    pub fn jacobian(&self, z: &[f64]) -> Result<Matrix> {
        if z.len() != self.in_dim() {
            return Err(Error::shape("jacobian", self.in_dim(), z.len()));
        }
        Ok(self.jacobian_unchecked(z))
    }

    pub(crate) fn jacobian_unchecked(&self, z: &[f64]) -> Matrix {
        let d = z.len();
        let mut h = z.to_vec();
        // rows of jt are ∂h/∂z_j, i.e. Jᵀ, so updates stay row-contiguous
        let mut jt = Matrix::identity(d);
        for l in &self.layers {
            let (n_out, _) = l.weight.shape();
            let mut next_h = Vec::with_capacity(n_out);
            let mut slope = Vec::with_capacity(n_out);
            for (w, b) in l.weight.row_iter().zip(&l.bias) {
                let a = dot(w, &h) + b;
                let y = l.activation.apply(a);
                next_h.push(y);
                slope.push(l.activation.derivative(a, y));
            }
            let mut next_jt = Matrix::zeros(d, n_out);
            for j in 0..d {
                let src = jt.row(j);
                let dst = next_jt.row_mut(j);
                for (o, w) in l.weight.row_iter().enumerate() {
                    dst[o] = slope[o] * dot(w, src);
                }
            }
            h = next_h;
            jt = next_jt;
        }
        jt.transpose()
    }

    /// Vector-Jacobian product `J(z)ᵀ v` by one reverse sweep.
    pub fn vjp(&self, z: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.in_dim() {
            return Err(Error::shape("vjp input", self.in_dim(), z.len()));
        }
        if v.len() != self.out_dim() {
            return Err(Error::shape("vjp cotangent", self.out_dim(), v.len()));
        }
        Ok(self.vjp_unchecked(z, v))
    }

    pub(crate) fn vjp_unchecked(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let mut slopes: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut h = z.to_vec();
        for l in &self.layers {
            let mut next = Vec::with_capacity(l.out_dim());
            let mut s = Vec::with_capacity(l.out_dim());
            for (w, b) in l.weight.row_iter().zip(&l.bias) {
                let a = dot(w, &h) + b;
                let y = l.activation.apply(a);
                next.push(y);
                s.push(l.activation.derivative(a, y));
            }
            slopes.push(s);
            h = next;
        }
        let mut adj = v.to_vec();
        for (l, s) in self.layers.iter().zip(&slopes).rev() {
            let mut prev = vec![0.0; l.in_dim()];
            for (o, w) in l.weight.row_iter().enumerate() {
                let d = adj[o] * s[o];
                if d != 0.0 {
                    axpy(d, w, &mut prev);
                }
            }
            adj = prev;
        }
        adj
    }
}

fn affine_act(l: &Layer, x: &Matrix) -> (Matrix, Matrix) {
    let n_out = l.out_dim();
    let mut pre = Matrix::zeros(x.rows(), n_out);
    let mut post = Matrix::zeros(x.rows(), n_out);
    for r in 0..x.rows() {
        let xr = x.row(r);
        let pr = pre.row_mut(r);
        for (o, (w, b)) in l.weight.row_iter().zip(&l.bias).enumerate() {
            pr[o] = dot(w, xr) + b;
        }
        let yr = post.row_mut(r);
        for (y, &a) in yr.iter_mut().zip(pre.row(r)) {
            *y = l.activation.apply(a);
        }
    }
    (pre, post)
}

/// Parameter gradients for a batch: one forward pass, one reverse pass.
pub fn backprop_grads(net: &FeedForwardNet, x: &Matrix, adjoint: &Matrix) -> Result<Vec<f64>> {
    let trace = net.forward_trace(x)?;
    let mut g = vec![0.0; net.param_count()];
    net.backward(&trace, adjoint, &mut g)?;
    Ok(g)
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    fn advance(&mut self) -> (f64, f64) {
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        (bc1, bc2)
    }

    #[inline]
    fn update(&mut self, i: usize, p: &mut f64, g: f64, bc1: f64, bc2: f64) {
        self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
        self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
        let m_hat = self.m[i] / bc1;
        let v_hat = self.v[i] / bc2;
        *p -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "adam state size");
        assert_eq!(grads.len(), self.m.len(), "adam grad size");
        let (bc1, bc2) = self.advance();
        for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            self.update(i, p, g, bc1, bc2);
        }
    }

    /// Updates a network in place; `grads` uses the network's flat ordering.
    pub fn step_net(&mut self, net: &mut FeedForwardNet, grads: &[f64]) {
        assert_eq!(grads.len(), self.m.len(), "adam grad size");
        assert_eq!(net.param_count(), self.m.len(), "adam state size");
        let (bc1, bc2) = self.advance();
        net.for_each_param_mut(|i, p| self.update(i, p, grads[i], bc1, bc2));
    }
}
