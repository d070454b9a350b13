//! Nonlinear convolution units: the classical linear filter and five
//! exponential-weight-matrix (EWM) variants, plus whole-layer application.
//!
//! Receptive fields are `k_h x k_w` with rows indexing time steps and columns
//! indexing sensor channels. Every variant computes a transformed patch `z`
//! and returns `sum(W1 * z) + b`:
//!
//! | variant       | exponents                 | `z`                                   |
//! |---------------|---------------------------|---------------------------------------|
//! | `Standard`    | none                      | `x`                                   |
//! | `Elementwise` | `W2` (`k_h x k_w`)        | `signed_pow(x, W2)`                   |
//! | `RowShared`   | `w` (`k_h`), one per row  | `signed_pow(x, w ⊗ 1)`                |
//! | `ColShared`   | `w` (`k_w`), one per col  | `signed_pow(x, 1 ⊗ w)`                |
//! | `Bilinear`    | `W3` (`k_h²`), `W4` (`k_w²`) | `sign(X) * exp(W3 · log|X| · W4)`  |
//! | `FullMatrix`  | `W5` (`n x n`)            | `sign(x) * exp(W5 · log|vec(X)|)`     |
//!
//! `log|x|` is always `ln(max(|x|, eps))` and `sign(0) = +1`. `FullMatrix`
//! acts on the column-major vectorization of the patch, so
//! `Bilinear(W3, W4)` equals `FullMatrix(kron(W4ᵀ, W3))`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{self, gather_patch, log_magnitude, matmul_into, sign, signed_pow, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantKind {
    Standard,
    Elementwise,
    RowShared,
    ColShared,
    Bilinear,
    FullMatrix,
}

impl VariantKind {
    pub const ALL: [VariantKind; 6] = [
        VariantKind::Standard,
        VariantKind::Elementwise,
        VariantKind::RowShared,
        VariantKind::ColShared,
        VariantKind::Bilinear,
        VariantKind::FullMatrix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Standard => "standard",
            VariantKind::Elementwise => "elementwise",
            VariantKind::RowShared => "row_shared",
            VariantKind::ColShared => "col_shared",
            VariantKind::Bilinear => "bilinear",
            VariantKind::FullMatrix => "full_matrix",
        }
    }

    /// Number of trainable exponents for a `k_h x k_w` kernel.
    pub fn exponent_count(self, k_h: usize, k_w: usize) -> usize {
        let n = k_h * k_w;
        match self {
            VariantKind::Standard => 0,
            VariantKind::Elementwise => n,
            VariantKind::RowShared => k_h,
            VariantKind::ColShared => k_w,
            VariantKind::Bilinear => k_h * k_h + k_w * k_w,
            VariantKind::FullMatrix => n * n,
        }
    }

    /// Bilinear and full-matrix variants are initialised to identity
    /// matrices, whose zero entries must lie inside the exponent bounds.
    pub fn is_matrix(self) -> bool {
        matches!(self, VariantKind::Bilinear | VariantKind::FullMatrix)
    }

    /// Shapes of the exponent payload tensors.
    pub fn payload_shapes(self, k_h: usize, k_w: usize) -> Vec<Vec<usize>> {
        let n = k_h * k_w;
        match self {
            VariantKind::Standard => vec![],
            VariantKind::Elementwise => vec![vec![k_h, k_w]],
            VariantKind::RowShared => vec![vec![k_h]],
            VariantKind::ColShared => vec![vec![k_w]],
            VariantKind::Bilinear => vec![vec![k_h, k_h], vec![k_w, k_w]],
            VariantKind::FullMatrix => vec![vec![n, n]],
        }
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Exponent payload of one output channel.
#[derive(Debug, Clone, PartialEq)]
pub enum Ewm {
    Standard,
    Elementwise(Tensor),
    RowShared(Tensor),
    ColShared(Tensor),
    Bilinear { w3: Tensor, w4: Tensor },
    FullMatrix(Tensor),
}

impl Ewm {
    pub fn kind(&self) -> VariantKind {
        match self {
            Ewm::Standard => VariantKind::Standard,
            Ewm::Elementwise(_) => VariantKind::Elementwise,
            Ewm::RowShared(_) => VariantKind::RowShared,
            Ewm::ColShared(_) => VariantKind::ColShared,
            Ewm::Bilinear { .. } => VariantKind::Bilinear,
            Ewm::FullMatrix(_) => VariantKind::FullMatrix,
        }
    }

    /// Rebuilds a payload of `kind` from tensors in [`Ewm::tensors`] order.
    pub fn from_tensors(kind: VariantKind, mut tensors: Vec<Tensor>) -> Result<Self> {
        let expected = kind.payload_shapes(1, 1).len();
        if tensors.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "{kind} expects {expected} exponent tensors, got {}",
                tensors.len()
            )));
        }
        Ok(match kind {
            VariantKind::Standard => Ewm::Standard,
            VariantKind::Elementwise => Ewm::Elementwise(tensors.remove(0)),
            VariantKind::RowShared => Ewm::RowShared(tensors.remove(0)),
            VariantKind::ColShared => Ewm::ColShared(tensors.remove(0)),
            VariantKind::Bilinear => {
                let w3 = tensors.remove(0);
                let w4 = tensors.remove(0);
                Ewm::Bilinear { w3, w4 }
            }
            VariantKind::FullMatrix => Ewm::FullMatrix(tensors.remove(0)),
        })
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        match self {
            Ewm::Standard => vec![],
            Ewm::Elementwise(t) | Ewm::RowShared(t) | Ewm::ColShared(t) | Ewm::FullMatrix(t) => {
                vec![t]
            }
            Ewm::Bilinear { w3, w4 } => vec![w3, w4],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Ewm::Standard => vec![],
            Ewm::Elementwise(t) | Ewm::RowShared(t) | Ewm::ColShared(t) | Ewm::FullMatrix(t) => {
                vec![t]
            }
            Ewm::Bilinear { w3, w4 } => vec![w3, w4],
        }
    }

    /// Same variant and shapes, all entries zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors().into_iter().flat_map(|t| t.data().iter().copied())
    }

    pub fn validate(&self, k_h: usize, k_w: usize) -> Result<()> {
        let shapes = self.kind().payload_shapes(k_h, k_w);
        for (t, s) in self.tensors().into_iter().zip(&shapes) {
            t.ensure_shape(s)?;
        }
        Ok(())
    }
}

/// Weights of one output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub w1: Tensor,
    pub bias: f64,
    pub ewm: Ewm,
}

/// One nonlinear convolutional layer. Every channel shares the same variant.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub k_h: usize,
    pub k_w: usize,
    pub stride_t: usize,
    pub stride_c: usize,
    pub activation: Activation,
    pub channels: Vec<Channel>,
}

impl LayerParams {
    pub fn out_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn kind(&self) -> VariantKind {
        self.channels.first().map_or(VariantKind::Standard, |c| c.ewm.kind())
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::InvalidArgument("layer needs at least one output channel".into()));
        }
        if self.stride_t == 0 || self.stride_c == 0 || self.k_h == 0 || self.k_w == 0 {
            return Err(Error::InvalidArgument("kernel sizes and strides must be >= 1".into()));
        }
        let kind = self.kind();
        for ch in &self.channels {
            if ch.ewm.kind() != kind {
                return Err(Error::InvalidArgument(
                    "all channels of a layer must use the same variant".into(),
                ));
            }
            ch.w1.ensure_shape(&[self.k_h, self.k_w])?;
            ch.ewm.validate(self.k_h, self.k_w)?;
        }
        Ok(())
    }

    /// Output dimensions `(grid_t, grid_c, M)` for a `rows x cols` input.
    pub fn output_dims(&self, rows: usize, cols: usize) -> Result<(usize, usize, usize)> {
        let g = numerics::PatchGrid::new(rows, cols, self.k_h, self.k_w, self.stride_t, self.stride_c)?;
        Ok((g.grid_t, g.grid_c, self.out_channels()))
    }
}

/// Layer output, shape `[grid_t, grid_c, M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub tensor: Tensor,
}

impl FeatureMap {
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.tensor.shape();
        (s[0], s[1], s[2])
    }

    /// Views the map as a `grid_t x (grid_c * M)` matrix, the input layout
    /// of a following layer (time stays on rows).
    pub fn as_matrix(&self) -> Tensor {
        let (t, c, m) = self.dims();
        self.tensor.clone().reshape(vec![t, c * m]).expect("same length")
    }
}

fn check_len(t: &Tensor, n: usize) -> Result<()> {
    if t.len() != n {
        return Err(Error::ShapeMismatch {
            expected: vec![n],
            actual: t.shape().to_vec(),
        });
    }
    Ok(())
}

fn check_pair(x: &Tensor, w1: &Tensor) -> Result<()> {
    if x.shape() != w1.shape() {
        return Err(Error::ShapeMismatch {
            expected: x.shape().to_vec(),
            actual: w1.shape().to_vec(),
        });
    }
    Ok(())
}

/// Classical linear filter: `sum(W1 * x) + b`.
pub fn unit_standard(x: &Tensor, w1: &Tensor, b: f64) -> Result<f64> {
    check_pair(x, w1)?;
    Ok(dot(w1.data(), x.data()) + b)
}

/// `sum(W1 * signed_pow(x, W2)) + b`, evaluated with `powf`.
pub fn unit_elementwise(x: &Tensor, w1: &Tensor, b: f64, w2: &Tensor, eps: f64) -> Result<f64> {
    check_pair(x, w1)?;
    check_pair(x, w2)?;
    Ok(elementwise_sum(x.data(), w1.data(), w2.data(), eps) + b)
}

/// The same unit as [`unit_elementwise`], evaluated as
/// `sign(x) * exp(diag(w2) · log|x|)`.
pub fn unit_elementwise_explog(x: &Tensor, w1: &Tensor, b: f64, w2: &Tensor, eps: f64) -> Result<f64> {
    check_pair(x, w1)?;
    check_pair(x, w2)?;
    let s: f64 = x
        .data()
        .iter()
        .zip(w1.data())
        .zip(w2.data())
        .map(|((&xi, &a), &w)| a * sign(xi) * (w * log_magnitude(xi, eps)).exp())
        .sum();
    Ok(s + b)
}

/// Expands a row- or column-shared exponent vector to a full `k_h x k_w`
/// exponent matrix.
pub fn expand_shared(ewm: &Ewm, k_h: usize, k_w: usize) -> Result<Tensor> {
    let mut out = Tensor::zeros(&[k_h, k_w]);
    match ewm {
        Ewm::RowShared(w) => {
            check_len(w, k_h)?;
            for i in 0..k_h {
                for j in 0..k_w {
                    out.set(i, j, w.data()[i]);
                }
            }
        }
        Ewm::ColShared(w) => {
            check_len(w, k_w)?;
            for i in 0..k_h {
                for j in 0..k_w {
                    out.set(i, j, w.data()[j]);
                }
            }
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "expand_shared needs a shared variant, got {}",
                other.kind()
            )))
        }
    }
    Ok(out)
}

/// Row-shared unit: row `i` of the patch is raised to `w[i]`.
pub fn unit_row_shared(x: &Tensor, w1: &Tensor, b: f64, w: &Tensor, eps: f64) -> Result<f64> {
    check_pair(x, w1)?;
    let (k_h, k_w) = x.dims2()?;
    check_len(w, k_h)?;
    Ok(row_shared_sum(x.data(), w1.data(), w.data(), k_w, eps) + b)
}

/// Column-shared unit: column `j` of the patch is raised to `w[j]`.
pub fn unit_col_shared(x: &Tensor, w1: &Tensor, b: f64, w: &Tensor, eps: f64) -> Result<f64> {
    check_pair(x, w1)?;
    let (_, k_w) = x.dims2()?;
    check_len(w, k_w)?;
    Ok(col_shared_sum(x.data(), w1.data(), w.data(), k_w, eps) + b)
}

/// `sum(W1 * sign(X) * exp(W3 · log|X| · W4)) + b`.
pub fn unit_bilinear(x: &Tensor, w1: &Tensor, b: f64, w3: &Tensor, w4: &Tensor, eps: f64) -> Result<f64> {
    check_pair(x, w1)?;
    let (k_h, k_w) = x.dims2()?;
    w3.ensure_shape(&[k_h, k_h])?;
    w4.ensure_shape(&[k_w, k_w])?;
    let mut scratch = Scratch::new(k_h, k_w);
    Ok(bilinear_sum(x.data(), w1.data(), w3.data(), w4.data(), k_h, k_w, eps, &mut scratch) + b)
}

/// `sum_j w1_j * sign(x_j) * exp((W5 · log|x|)_j) + b` on vectorized inputs.
///
/// `x` and `w1` are length-`n` vectors (column-major vectorizations of the
/// patch and the filter when used inside a layer).
pub fn unit_full(x: &Tensor, w1: &Tensor, b: f64, w5: &Tensor, eps: f64) -> Result<f64> {
    let n = x.len();
    check_len(w1, n)?;
    w5.ensure_shape(&[n, n])?;
    let logs: Vec<f64> = x.data().iter().map(|&v| log_magnitude(v, eps)).collect();
    let mut s = 0.0;
    for j in 0..n {
        let e = dot(&w5.data()[j * n..(j + 1) * n], &logs);
        s += w1.data()[j] * sign(x.data()[j]) * e.exp();
    }
    Ok(s + b)
}

/// Evaluates one channel's unit on a `k_h x k_w` patch.
pub fn unit_forward(x: &Tensor, channel: &Channel, eps: f64) -> Result<f64> {
    let (k_h, k_w) = x.dims2()?;
    channel.w1.ensure_shape(&[k_h, k_w])?;
    channel.ewm.validate(k_h, k_w)?;
    let mut scratch = Scratch::new(k_h, k_w);
    Ok(eval_channel(channel, k_h, k_w, x.data(), eps, &mut scratch))
}

/// Applies every channel's unit and the layer activation at every patch
/// position of a valid convolution.
pub fn layer_forward(input: &Tensor, params: &LayerParams, eps: f64) -> Result<FeatureMap> {
    params.validate()?;
    let (rows, cols) = input.dims2()?;
    let grid = numerics::PatchGrid::new(rows, cols, params.k_h, params.k_w, params.stride_t, params.stride_c)?;
    let m = params.out_channels();
    let mut out = vec![0.0; grid.len() * m];
    let mut patch = vec![0.0; params.k_h * params.k_w];
    let mut scratch = Scratch::new(params.k_h, params.k_w);
    for p in 0..grid.len() {
        gather_patch(input.data(), cols, &grid, p, &mut patch);
        for (c, ch) in params.channels.iter().enumerate() {
            let y = eval_channel(ch, params.k_h, params.k_w, &patch, eps, &mut scratch);
            out[p * m + c] = params.activation.apply(y);
        }
    }
    let tensor = Tensor::new(vec![grid.grid_t, grid.grid_c, m], out)?;
    Ok(FeatureMap { tensor })
}

// ---------------------------------------------------------------------------
// Slice kernels shared with the backward pass. Patches are row-major.

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Working buffers for the matrix variants.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    pub logs: Vec<f64>,
    pub tmp: Vec<f64>,
    pub expo: Vec<f64>,
    pub z: Vec<f64>,
}

impl Scratch {
    pub fn new(k_h: usize, k_w: usize) -> Self {
        let n = k_h * k_w;
        Self {
            logs: vec![0.0; n],
            tmp: vec![0.0; n],
            expo: vec![0.0; n],
            z: vec![0.0; n],
        }
    }
}

#[inline]
fn elementwise_sum(x: &[f64], w1: &[f64], w2: &[f64], eps: f64) -> f64 {
    x.iter()
        .zip(w1)
        .zip(w2)
        .map(|((&xi, &a), &w)| a * signed_pow(xi, w, eps))
        .sum()
}

#[inline]
fn row_shared_sum(x: &[f64], w1: &[f64], w: &[f64], k_w: usize, eps: f64) -> f64 {
    x.iter()
        .zip(w1)
        .enumerate()
        .map(|(idx, (&xi, &a))| a * signed_pow(xi, w[idx / k_w], eps))
        .sum()
}

#[inline]
fn col_shared_sum(x: &[f64], w1: &[f64], w: &[f64], k_w: usize, eps: f64) -> f64 {
    x.iter()
        .zip(w1)
        .enumerate()
        .map(|(idx, (&xi, &a))| a * signed_pow(xi, w[idx % k_w], eps))
        .sum()
}

/// Fills `s.logs` (row-major `log|X|`), `s.expo` (`W3 · L · W4`) and `s.z`.
pub(crate) fn bilinear_transform(x: &[f64], w3: &[f64], w4: &[f64], k_h: usize, k_w: usize, eps: f64, s: &mut Scratch) {
    for (l, &xi) in s.logs.iter_mut().zip(x) {
        *l = log_magnitude(xi, eps);
    }
    matmul_into(w3, &s.logs, &mut s.tmp, k_h, k_h, k_w);
    matmul_into(&s.tmp, w4, &mut s.expo, k_h, k_w, k_w);
    for ((z, &e), &xi) in s.z.iter_mut().zip(&s.expo).zip(x) {
        *z = sign(xi) * e.exp();
    }
}

#[allow(clippy::too_many_arguments)]
fn bilinear_sum(
    x: &[f64],
    w1: &[f64],
    w3: &[f64],
    w4: &[f64],
    k_h: usize,
    k_w: usize,
    eps: f64,
    s: &mut Scratch,
) -> f64 {
    bilinear_transform(x, w3, w4, k_h, k_w, eps, s);
    dot(w1, &s.z)
}

/// Fills `s.logs`, `s.expo` and `s.z` in column-major vector order.
pub(crate) fn full_transform(x: &[f64], w5: &[f64], k_h: usize, k_w: usize, eps: f64, s: &mut Scratch) {
    let n = k_h * k_w;
    for j in 0..k_w {
        for i in 0..k_h {
            s.logs[j * k_h + i] = log_magnitude(x[i * k_w + j], eps);
        }
    }
    for r in 0..n {
        s.expo[r] = dot(&w5[r * n..(r + 1) * n], &s.logs);
    }
    for j in 0..k_w {
        for i in 0..k_h {
            let v = j * k_h + i;
            s.z[v] = sign(x[i * k_w + j]) * s.expo[v].exp();
        }
    }
}

fn full_sum(x: &[f64], w1: &[f64], w5: &[f64], k_h: usize, k_w: usize, eps: f64, s: &mut Scratch) -> f64 {
    full_transform(x, w5, k_h, k_w, eps, s);
    let mut acc = 0.0;
    for j in 0..k_w {
        for i in 0..k_h {
            acc += w1[i * k_w + j] * s.z[j * k_h + i];
        }
    }
    acc
}

pub(crate) fn eval_channel(ch: &Channel, k_h: usize, k_w: usize, x: &[f64], eps: f64, scratch: &mut Scratch) -> f64 {
    let w1 = ch.w1.data();
    let s = match &ch.ewm {
        Ewm::Standard => dot(w1, x),
        Ewm::Elementwise(w2) => elementwise_sum(x, w1, w2.data(), eps),
        Ewm::RowShared(w) => row_shared_sum(x, w1, w.data(), k_w, eps),
        Ewm::ColShared(w) => col_shared_sum(x, w1, w.data(), k_w, eps),
        Ewm::Bilinear { w3, w4 } => bilinear_sum(x, w1, w3.data(), w4.data(), k_h, k_w, eps, scratch),
        Ewm::FullMatrix(w5) => full_sum(x, w1, w5.data(), k_h, k_w, eps, scratch),
    };
    s + ch.bias
}
