//! Closed-form backward passes for every unit variant, a central
//! finite-difference oracle, and a gradient-check harness comparing the two.

use std::fmt;

use crate::error::{Error, Result};
use crate::nlconv::{
    bilinear_transform, full_transform, layer_forward, Activation, Channel, Ewm, FeatureMap, LayerParams, Scratch,
    VariantKind,
};
use crate::numerics::{gather_patch, matmul_into, PatchGrid, SeededRng, Tensor, DEFAULT_EPS};

/// Gradients of one channel's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGrad {
    pub dw1: Tensor,
    pub db: f64,
    /// Same variant and shapes as the channel's exponent payload.
    pub dewm: Ewm,
}

impl ChannelGrad {
    pub fn zeros_like(ch: &Channel) -> Self {
        Self {
            dw1: Tensor::zeros(ch.w1.shape()),
            db: 0.0,
            dewm: ch.ewm.zeros_like(),
        }
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.dw1
            .data()
            .iter()
            .copied()
            .chain(std::iter::once(self.db))
            .chain(self.dewm.values())
    }
}

/// Gradients of a layer (or a single unit) and of its input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub channels: Vec<ChannelGrad>,
    pub d_input: Tensor,
}

impl GradBundle {
    pub fn all_finite(&self) -> bool {
        self.d_input.all_finite() && self.channels.iter().all(|c| c.values().all(f64::is_finite))
    }

    pub fn is_zero(&self) -> bool {
        self.d_input.data().iter().all(|&v| v == 0.0) && self.channels.iter().all(|c| c.values().all(|v| v == 0.0))
    }
}

/// Gradient of one unit's pre-activation output, scaled by `upstream`.
/// `d_input` has the patch's shape.
pub fn unit_backward(x: &Tensor, channel: &Channel, upstream: f64, eps: f64) -> Result<GradBundle> {
    let (k_h, k_w) = x.dims2()?;
    channel.w1.ensure_shape(&[k_h, k_w])?;
    channel.ewm.validate(k_h, k_w)?;
    let mut acc = ChannelGrad::zeros_like(channel);
    let mut dx = vec![0.0; k_h * k_w];
    let mut scratch = Scratch::new(k_h, k_w);
    let mut work = BackScratch::new(k_h, k_w);
    accumulate_channel(
        channel,
        k_h,
        k_w,
        x.data(),
        upstream,
        eps,
        &mut acc,
        &mut dx,
        &mut scratch,
        &mut work,
    );
    Ok(GradBundle {
        channels: vec![acc],
        d_input: Tensor::matrix(k_h, k_w, dx)?,
    })
}

/// Backward pass of a whole layer.
///
/// `output` is the layer's forward result and `d_output` the loss gradient
/// with respect to it (same `[grid_t, grid_c, M]` shape).
pub fn layer_backward(
    input: &Tensor,
    params: &LayerParams,
    output: &FeatureMap,
    d_output: &Tensor,
    eps: f64,
) -> Result<GradBundle> {
    params.validate()?;
    let (rows, cols) = input.dims2()?;
    let grid = PatchGrid::new(rows, cols, params.k_h, params.k_w, params.stride_t, params.stride_c)?;
    let m = params.out_channels();
    d_output.ensure_shape(&[grid.grid_t, grid.grid_c, m])?;
    output.tensor.ensure_shape(d_output.shape())?;

    let (k_h, k_w) = (params.k_h, params.k_w);
    let mut grads: Vec<ChannelGrad> = params.channels.iter().map(ChannelGrad::zeros_like).collect();
    let mut d_input = vec![0.0; rows * cols];
    let mut patch = vec![0.0; k_h * k_w];
    let mut dx = vec![0.0; k_h * k_w];
    let mut scratch = Scratch::new(k_h, k_w);
    let mut work = BackScratch::new(k_h, k_w);
    for p in 0..grid.len() {
        let mut gathered = false;
        dx.iter_mut().for_each(|v| *v = 0.0);
        for (c, ch) in params.channels.iter().enumerate() {
            let idx = p * m + c;
            let g = d_output.data()[idx] * params.activation.derivative_from_output(output.tensor.data()[idx]);
            if g == 0.0 {
                continue;
            }
            if !gathered {
                gather_patch(input.data(), cols, &grid, p, &mut patch);
                gathered = true;
            }
            accumulate_channel(
                ch,
                k_h,
                k_w,
                &patch,
                g,
                eps,
                &mut grads[c],
                &mut dx,
                &mut scratch,
                &mut work,
            );
        }
        if gathered {
            let (r0, c0) = grid.origin(p);
            for i in 0..k_h {
                for j in 0..k_w {
                    d_input[(r0 + i) * cols + c0 + j] += dx[i * k_w + j];
                }
            }
        }
    }
    Ok(GradBundle {
        channels: grads,
        d_input: Tensor::matrix(rows, cols, d_input)?,
    })
}

struct BackScratch {
    ge: Vec<f64>,
    a: Vec<f64>,
    dl: Vec<f64>,
    tmp: Vec<f64>,
}

impl BackScratch {
    fn new(k_h: usize, k_w: usize) -> Self {
        let n = k_h * k_w;
        Self {
            ge: vec![0.0; n],
            a: vec![0.0; n],
            dl: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

/// Adds `g * d(unit)/d(·)` into `acc` and `dx` for one patch.
///
/// Input derivatives vanish where `|x| <= eps` (the clamped magnitude is
/// locally constant).
#[allow(clippy::too_many_arguments)]
fn accumulate_channel(
    ch: &Channel,
    k_h: usize,
    k_w: usize,
    x: &[f64],
    g: f64,
    eps: f64,
    acc: &mut ChannelGrad,
    dx: &mut [f64],
    s: &mut Scratch,
    work: &mut BackScratch,
) {
    let w1 = ch.w1.data();
    acc.db += g;
    let dw1 = acc.dw1.data_mut();
    match (&ch.ewm, &mut acc.dewm) {
        (Ewm::Standard, Ewm::Standard) => {
            for i in 0..x.len() {
                dw1[i] += g * x[i];
                dx[i] += g * w1[i];
            }
        }
        (Ewm::Elementwise(w), Ewm::Elementwise(dw)) => {
            power_grads(x, w1, g, eps, dw1, dx, w.data(), dw.data_mut(), |i| i);
        }
        (Ewm::RowShared(w), Ewm::RowShared(dw)) => {
            power_grads(x, w1, g, eps, dw1, dx, w.data(), dw.data_mut(), |i| i / k_w);
        }
        (Ewm::ColShared(w), Ewm::ColShared(dw)) => {
            power_grads(x, w1, g, eps, dw1, dx, w.data(), dw.data_mut(), |i| i % k_w);
        }
        (Ewm::Bilinear { w3, w4 }, Ewm::Bilinear { w3: dw3, w4: dw4 }) => {
            let (w3, w4) = (w3.data(), w4.data());
            bilinear_transform(x, w3, w4, k_h, k_w, eps, s);
            for i in 0..x.len() {
                dw1[i] += g * s.z[i];
                work.ge[i] = g * w1[i] * s.z[i];
            }
            // E = W3 · L · W4, with s.tmp = W3 · L.
            // dW3 = GE · (L · W4)ᵀ
            matmul_into(&s.logs, w4, &mut work.a, k_h, k_w, k_w);
            let dw3 = dw3.data_mut();
            for a in 0..k_h {
                for b in 0..k_h {
                    let mut v = 0.0;
                    for j in 0..k_w {
                        v += work.ge[a * k_w + j] * work.a[b * k_w + j];
                    }
                    dw3[a * k_h + b] += v;
                }
            }
            // dW4 = (W3 · L)ᵀ · GE
            let dw4 = dw4.data_mut();
            for a in 0..k_w {
                for b in 0..k_w {
                    let mut v = 0.0;
                    for i in 0..k_h {
                        v += s.tmp[i * k_w + a] * work.ge[i * k_w + b];
                    }
                    dw4[a * k_w + b] += v;
                }
            }
            // dL = W3ᵀ · GE · W4ᵀ
            for i in 0..k_h {
                for j in 0..k_w {
                    let mut v = 0.0;
                    for q in 0..k_w {
                        v += work.ge[i * k_w + q] * w4[j * k_w + q];
                    }
                    work.tmp[i * k_w + j] = v;
                }
            }
            for i in 0..k_h {
                for j in 0..k_w {
                    let mut v = 0.0;
                    for r in 0..k_h {
                        v += w3[r * k_h + i] * work.tmp[r * k_w + j];
                    }
                    work.dl[i * k_w + j] = v;
                }
            }
            for i in 0..x.len() {
                if x[i].abs() > eps {
                    dx[i] += work.dl[i] / x[i];
                }
            }
        }
        (Ewm::FullMatrix(w5), Ewm::FullMatrix(dw5)) => {
            let n = k_h * k_w;
            let w5 = w5.data();
            full_transform(x, w5, k_h, k_w, eps, s);
            // Vector index v = j * k_h + i  <->  patch index i * k_w + j.
            for j in 0..k_w {
                for i in 0..k_h {
                    let (v, r) = (j * k_h + i, i * k_w + j);
                    dw1[r] += g * s.z[v];
                    work.ge[v] = g * w1[r] * s.z[v];
                }
            }
            let dw5 = dw5.data_mut();
            for r in 0..n {
                let ge = work.ge[r];
                if ge == 0.0 {
                    continue;
                }
                for c in 0..n {
                    dw5[r * n + c] += ge * s.logs[c];
                }
            }
            for c in 0..n {
                let mut v = 0.0;
                for r in 0..n {
                    v += w5[r * n + c] * work.ge[r];
                }
                work.dl[c] = v;
            }
            for j in 0..k_w {
                for i in 0..k_h {
                    let r = i * k_w + j;
                    if x[r].abs() > eps {
                        dx[r] += work.dl[j * k_h + i] / x[r];
                    }
                }
            }
        }
        _ => unreachable!("gradient payload built from the same channel"),
    }
}

/// Shared body of the elementwise and tied-exponent variants; `slot` maps
/// a patch index to its exponent index.
#[allow(clippy::too_many_arguments)]
#[inline]
fn power_grads(
    x: &[f64],
    w1: &[f64],
    g: f64,
    eps: f64,
    dw1: &mut [f64],
    dx: &mut [f64],
    w: &[f64],
    dw: &mut [f64],
    slot: impl Fn(usize) -> usize,
) {
    for i in 0..x.len() {
        let e = w[slot(i)];
        let mag = x[i].abs().max(eps);
        let p = mag.powf(e);
        let z = if x[i] >= 0.0 { p } else { -p };
        dw1[i] += g * z;
        dw[slot(i)] += g * w1[i] * z * mag.ln();
        if x[i].abs() > eps {
            dx[i] += g * w1[i] * e * p / mag;
        }
    }
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

/// Central differences `(f(θ + h e_i) − f(θ − h e_i)) / 2h` per coordinate.
pub fn finite_diff(mut f: impl FnMut(&Tensor) -> f64, theta: &Tensor, h: f64) -> Result<Tensor> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h must be > 0, got {h}")));
    }
    let mut probe = theta.clone();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = theta.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        out.push((fp - fm) / (2.0 * h));
    }
    Tensor::new(theta.shape().to_vec(), out)
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

// ---------------------------------------------------------------------------
// Gradient check harness

/// Scalar reduction of a feature map used as the check objective.
#[derive(Debug, Clone, PartialEq)]
pub enum LossReduction {
    Sum,
    /// `0.5 * sum(y²)`
    HalfSumSquares,
    /// `sum(c * y)` with fixed coefficients of the feature-map shape.
    Weighted(Tensor),
}

impl LossReduction {
    pub fn value(&self, fm: &FeatureMap) -> f64 {
        let y = fm.tensor.data();
        match self {
            LossReduction::Sum => y.iter().sum(),
            LossReduction::HalfSumSquares => 0.5 * y.iter().map(|v| v * v).sum::<f64>(),
            LossReduction::Weighted(c) => y.iter().zip(c.data()).map(|(a, b)| a * b).sum(),
        }
    }

    pub fn gradient(&self, fm: &FeatureMap) -> Tensor {
        match self {
            LossReduction::Sum => Tensor::filled(fm.tensor.shape(), 1.0),
            LossReduction::HalfSumSquares => fm.tensor.clone(),
            LossReduction::Weighted(c) => c.clone(),
        }
    }
}

/// Parameter group of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    W1,
    Bias,
    /// The `slot`-th exponent tensor of the variant payload.
    Exponent(usize),
    Input,
}

impl ParamGroup {
    pub fn label(self, params: &LayerParams) -> String {
        use crate::nlconv::VariantKind as K;
        match self {
            ParamGroup::W1 => "w1".into(),
            ParamGroup::Bias => "bias".into(),
            ParamGroup::Input => "input".into(),
            ParamGroup::Exponent(slot) => match (params.kind(), slot) {
                (K::Elementwise, _) => "w2".into(),
                (K::RowShared, _) => "w2_row".into(),
                (K::ColShared, _) => "w2_col".into(),
                (K::Bilinear, 0) => "w3".into(),
                (K::Bilinear, _) => "w4".into(),
                (K::FullMatrix, _) => "w5".into(),
                (K::Standard, _) => "none".into(),
            },
        }
    }

    /// Groups present for a layer's variant.
    pub fn all_for(params: &LayerParams) -> Vec<ParamGroup> {
        let slots = params.kind().payload_shapes(1, 1).len();
        let mut groups = vec![ParamGroup::W1, ParamGroup::Bias];
        groups.extend((0..slots).map(ParamGroup::Exponent));
        groups.push(ParamGroup::Input);
        groups
    }
}

/// Worst coordinate of one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub group: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub argmax: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tol: f64,
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.groups.iter().all(|g| g.pass)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>6} {:>12} {:>8} {:>14} {:>14}  result",
            "group", "coords", "max_rel_err", "argmax", "analytic", "numeric"
        )?;
        for g in &self.groups {
            writeln!(
                f,
                "{:<8} {:>6} {:>12.3e} {:>8} {:>14.6e} {:>14.6e}  {}",
                g.group,
                g.coordinates,
                g.max_rel_error,
                g.argmax,
                g.analytic,
                g.numeric,
                if g.pass { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Flattened values of a parameter group, channel by channel.
pub fn group_values(params: &LayerParams, input: &Tensor, group: ParamGroup) -> Tensor {
    let data: Vec<f64> = match group {
        ParamGroup::W1 => params
            .channels
            .iter()
            .flat_map(|c| c.w1.data().iter().copied())
            .collect(),
        ParamGroup::Bias => params.channels.iter().map(|c| c.bias).collect(),
        ParamGroup::Exponent(slot) => params
            .channels
            .iter()
            .flat_map(|c| c.ewm.tensors()[slot].data().iter().copied())
            .collect(),
        ParamGroup::Input => input.data().to_vec(),
    };
    let n = data.len();
    Tensor::new(vec![n], data).expect("finite parameters")
}

fn set_group_values(params: &mut LayerParams, input: &mut Tensor, group: ParamGroup, values: &[f64]) {
    let mut it = values.iter().copied();
    match group {
        ParamGroup::W1 => {
            for c in &mut params.channels {
                c.w1.data_mut().iter_mut().for_each(|v| *v = it.next().unwrap());
            }
        }
        ParamGroup::Bias => {
            for c in &mut params.channels {
                c.bias = it.next().unwrap();
            }
        }
        ParamGroup::Exponent(slot) => {
            for c in &mut params.channels {
                c.ewm.tensors_mut()[slot]
                    .data_mut()
                    .iter_mut()
                    .for_each(|v| *v = it.next().unwrap());
            }
        }
        ParamGroup::Input => input.data_mut().copy_from_slice(values),
    }
}

fn bundle_group(bundle: &GradBundle, group: ParamGroup) -> Vec<f64> {
    match group {
        ParamGroup::W1 => bundle
            .channels
            .iter()
            .flat_map(|c| c.dw1.data().iter().copied())
            .collect(),
        ParamGroup::Bias => bundle.channels.iter().map(|c| c.db).collect(),
        ParamGroup::Exponent(slot) => bundle
            .channels
            .iter()
            .flat_map(|c| c.dewm.tensors()[slot].data().iter().copied())
            .collect(),
        ParamGroup::Input => bundle.d_input.data().to_vec(),
    }
}

/// Step used by [`grad_check`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Compares the analytic layer gradient of `loss(layer_forward(input))`
/// against central finite differences for every parameter group.
///
/// Inputs should stay clear of the `eps` clamp and of `x = 0`.
pub fn grad_check(
    params: &LayerParams,
    input: &Tensor,
    loss: &LossReduction,
    tol: f64,
    eps: f64,
) -> Result<GradCheckReport> {
    let out = layer_forward(input, params, eps)?;
    if let LossReduction::Weighted(c) = loss {
        c.ensure_shape(out.tensor.shape())?;
    }
    let bundle = layer_backward(input, params, &out, &loss.gradient(&out), eps)?;

    let mut groups = Vec::new();
    for group in ParamGroup::all_for(params) {
        let theta = group_values(params, input, group);
        let mut p = params.clone();
        let mut x = input.clone();
        let numeric = finite_diff(
            |th| {
                set_group_values(&mut p, &mut x, group, th.data());
                layer_forward(&x, &p, eps).map_or(f64::NAN, |fm| loss.value(&fm))
            },
            &theta,
            DEFAULT_FD_STEP,
        )?;
        let analytic = bundle_group(&bundle, group);
        let mut worst = GroupCheck {
            group: group.label(params),
            coordinates: analytic.len(),
            max_rel_error: 0.0,
            argmax: 0,
            analytic: analytic.first().copied().unwrap_or(0.0),
            numeric: numeric.data().first().copied().unwrap_or(0.0),
            pass: true,
        };
        for (i, (&a, &n)) in analytic.iter().zip(numeric.data()).enumerate() {
            let err = relative_error(a, n);
            if err > worst.max_rel_error {
                worst.max_rel_error = err;
                worst.argmax = i;
                worst.analytic = a;
                worst.numeric = n;
            }
        }
        worst.pass = worst.max_rel_error <= tol;
        groups.push(worst);
    }
    Ok(GradCheckReport { tol, groups })
}

/// Kernel shapes exercised by [`check_suite`].
pub const SUITE_SHAPES: [(usize, usize); 3] = [(1, 1), (2, 2), (3, 2)];

fn signed_uniform(rng: &mut SeededRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.uniform(lo, hi);
            if rng.unit() < 0.5 {
                -m
            } else {
                m
            }
        })
        .collect()
}

/// A random single-receptive-field check instance.
///
/// The input has the kernel's shape with `|x|` in `[0.1, 3]`. Filter weights
/// have magnitudes in `[0.5, 1.5]`, the bias is uniform in `[-1, 1]`, power
/// exponents are uniform in `[-2, 4]` and matrix exponents are the identity
/// plus uniform noise in `[-0.5, 0.5]`. The activation is the identity.
pub fn random_instance(
    kind: VariantKind,
    k_h: usize,
    k_w: usize,
    rng: &mut SeededRng,
) -> Result<(LayerParams, Tensor)> {
    let n = k_h * k_w;
    let w1 = Tensor::matrix(k_h, k_w, signed_uniform(rng, n, 0.5, 1.5))?;
    let bias = rng.uniform(-1.0, 1.0);
    let payload = kind
        .payload_shapes(k_h, k_w)
        .into_iter()
        .map(|shape| {
            let len = shape.iter().product();
            let data = if kind.is_matrix() {
                let cols = shape[1];
                (0..len)
                    .map(|i| f64::from(u8::from(i / cols == i % cols)) + rng.uniform(-0.5, 0.5))
                    .collect()
            } else {
                rng.uniform_vec(len, -2.0, 4.0)
            };
            Tensor::new(shape, data)
        })
        .collect::<Result<Vec<_>>>()?;
    let params = LayerParams {
        k_h,
        k_w,
        stride_t: 1,
        stride_c: 1,
        activation: Activation::Identity,
        channels: vec![Channel {
            w1,
            bias,
            ewm: Ewm::from_tensors(kind, payload)?,
        }],
    };
    let input = Tensor::matrix(k_h, k_w, signed_uniform(rng, n, 0.1, 3.0))?;
    Ok((params, input))
}

/// One instance of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCase {
    pub kind: VariantKind,
    pub k_h: usize,
    pub k_w: usize,
    pub seed: u64,
    pub report: GradCheckReport,
}

/// Worst relative error per variant and group over a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSummary {
    pub tol: f64,
    pub cases: usize,
    /// `(variant, group, worst error, failing instances)`
    pub rows: Vec<(VariantKind, String, f64, usize)>,
}

impl SuiteSummary {
    pub fn from_cases(cases: &[SuiteCase], tol: f64) -> Self {
        let mut rows: Vec<(VariantKind, String, f64, usize)> = Vec::new();
        for case in cases {
            for g in &case.report.groups {
                let idx = match rows.iter().position(|r| r.0 == case.kind && r.1 == g.group) {
                    Some(i) => i,
                    None => {
                        rows.push((case.kind, g.group.clone(), 0.0, 0));
                        rows.len() - 1
                    }
                };
                rows[idx].2 = rows[idx].2.max(g.max_rel_error);
                rows[idx].3 += usize::from(!g.pass);
            }
        }
        Self {
            tol,
            cases: cases.len(),
            rows,
        }
    }

    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.3 == 0)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.rows.iter().map(|r| r.2).fold(0.0, f64::max)
    }
}

impl fmt::Display for SuiteSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} instances, tolerance {:e}", self.cases, self.tol)?;
        writeln!(
            f,
            "{:<12} {:<8} {:>12} {:>8}  result",
            "variant", "group", "max_rel_err", "failed"
        )?;
        for (kind, group, err, failed) in &self.rows {
            writeln!(
                f,
                "{:<12} {:<8} {:>12.3e} {:>8}  {}",
                kind.name(),
                group,
                err,
                failed,
                if *failed == 0 { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Runs [`grad_check`] on `seeds` random instances of every kind and every
/// shape in [`SUITE_SHAPES`], with a summed-output objective.
pub fn check_suite(kinds: &[VariantKind], seeds: std::ops::Range<u64>, tol: f64) -> Result<Vec<SuiteCase>> {
    let mut cases = Vec::new();
    for &kind in kinds {
        for (s, &(k_h, k_w)) in SUITE_SHAPES.iter().enumerate() {
            for seed in seeds.clone() {
                let mut rng = SeededRng::new(seed).derive((kind as u64) << 8 | s as u64);
                let (params, input) = random_instance(kind, k_h, k_w, &mut rng)?;
                let report = grad_check(&params, &input, &LossReduction::Sum, tol, DEFAULT_EPS)?;
                cases.push(SuiteCase {
                    kind,
                    k_h,
                    k_w,
                    seed,
                    report,
                });
            }
        }
    }
    Ok(cases)
}
