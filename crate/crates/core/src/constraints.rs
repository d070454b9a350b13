//! Exponent bounds: clipping, projected steps, reparameterization maps and
//! the neutral (standard-convolution) initialization.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nlconv::{Ewm, VariantKind};
use crate::numerics::Tensor;

pub const DEFAULT_V_MIN: f64 = -2.0;
pub const DEFAULT_V_MAX: f64 = 4.0;

/// Slope of the hard-sigmoid map outside its linear segment.
pub const HARD_SIGMOID_LEAK: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReparamKind {
    ScaledSigmoid,
    ScaledTanh,
    HardSigmoidClip,
}

impl ReparamKind {
    pub const ALL: [ReparamKind; 3] = [
        ReparamKind::ScaledSigmoid,
        ReparamKind::ScaledTanh,
        ReparamKind::HardSigmoidClip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReparamKind::ScaledSigmoid => "scaled_sigmoid",
            ReparamKind::ScaledTanh => "scaled_tanh",
            ReparamKind::HardSigmoidClip => "hard_sigmoid_clip",
        }
    }
}

impl FromStr for ReparamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReparamKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown reparameterization kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnforceMode {
    /// Clamp exponents into the bounds after every step.
    ClipParams,
    /// Zero gradient components that push a bound-resting exponent outward,
    /// step, then clamp.
    ProjectAfterStep,
    /// Train an unconstrained value mapped into the bounds.
    Reparam(ReparamKind),
}

impl EnforceMode {
    pub fn name(self) -> String {
        match self {
            EnforceMode::ClipParams => "clip".into(),
            EnforceMode::ProjectAfterStep => "project".into(),
            EnforceMode::Reparam(k) => format!("reparam:{}", k.name()),
        }
    }
}

impl fmt::Display for EnforceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for EnforceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clip" => Ok(EnforceMode::ClipParams),
            "project" => Ok(EnforceMode::ProjectAfterStep),
            other => match other.strip_prefix("reparam:") {
                Some(kind) => Ok(EnforceMode::Reparam(kind.parse()?)),
                None => Err(Error::InvalidArgument(format!("unknown constraint mode `{other}`"))),
            },
        }
    }
}

/// Per-layer exponent bounds and how they are enforced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintPolicy {
    pub v_min: f64,
    pub v_max: f64,
    pub mode: EnforceMode,
}

impl Default for ConstraintPolicy {
    fn default() -> Self {
        Self {
            v_min: DEFAULT_V_MIN,
            v_max: DEFAULT_V_MAX,
            mode: EnforceMode::ClipParams,
        }
    }
}

impl ConstraintPolicy {
    pub fn new(v_min: f64, v_max: f64, mode: EnforceMode) -> Result<Self> {
        let p = Self { v_min, v_max, mode };
        p.validate()?;
        Ok(p)
    }

    /// The neutral exponent 1 must lie strictly inside the bounds.
    pub fn validate(&self) -> Result<()> {
        if !(self.v_min.is_finite() && self.v_max.is_finite()) || !(self.v_min < 1.0 && 1.0 < self.v_max) {
            return Err(Error::InvalidArgument(format!(
                "exponent bounds [{}, {}] must satisfy v_min < 1 < v_max",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }

    /// Identity-initialized variants need 0 inside the bounds.
    pub fn validate_for(&self, kind: VariantKind) -> Result<()> {
        self.validate()?;
        if kind.is_matrix() && self.v_min >= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{kind} is initialized with identity matrices; v_min must be < 0, got {}",
                self.v_min
            )));
        }
        Ok(())
    }

    pub fn is_reparam(&self) -> bool {
        matches!(self.mode, EnforceMode::Reparam(_))
    }

    #[inline]
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.v_min, self.v_max)
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.v_min..=self.v_max).contains(&v)
    }

    fn mid(&self) -> f64 {
        0.5 * (self.v_min + self.v_max)
    }

    fn half_range(&self) -> f64 {
        0.5 * (self.v_max - self.v_min)
    }
}

/// Clamps every exponent into `[v_min, v_max]`. Idempotent.
pub fn clip_params(ewm: &Ewm, policy: &ConstraintPolicy) -> Ewm {
    let mut out = ewm.clone();
    clip_in_place(&mut out, policy);
    out
}

pub fn clip_in_place(ewm: &mut Ewm, policy: &ConstraintPolicy) {
    for t in ewm.tensors_mut() {
        clip_values(t.data_mut(), policy);
    }
}

pub fn clip_values(values: &mut [f64], policy: &ConstraintPolicy) {
    values.iter_mut().for_each(|v| *v = policy.clamp(*v));
}

/// Zeroes gradient components that would move an exponent sitting on a
/// bound further outside (descent direction is `-grad`).
pub fn project_gradient(ewm: &Ewm, grad: &mut Ewm, policy: &ConstraintPolicy) {
    for (w, g) in ewm.tensors().into_iter().zip(grad.tensors_mut()) {
        project_values(w.data(), g.data_mut(), policy);
    }
}

pub fn project_values(values: &[f64], grad: &mut [f64], policy: &ConstraintPolicy) {
    for (&v, d) in values.iter().zip(grad) {
        if (v >= policy.v_max && *d < 0.0) || (v <= policy.v_min && *d > 0.0) {
            *d = 0.0;
        }
    }
}

fn require_kind(policy: &ConstraintPolicy) -> Result<ReparamKind> {
    match policy.mode {
        EnforceMode::Reparam(kind) => Ok(kind),
        other => Err(Error::InvalidArgument(format!(
            "reparameterization requested under `{other}` mode"
        ))),
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Hard-sigmoid map before the final clamp: linear with slope
/// `range / 6` on `[-3, 3]`, slope [`HARD_SIGMOID_LEAK`] outside.
pub fn hard_sigmoid_raw(w_hat: f64, policy: &ConstraintPolicy) -> f64 {
    let slope = (policy.v_max - policy.v_min) / 6.0;
    if w_hat > 3.0 {
        policy.v_max + HARD_SIGMOID_LEAK * (w_hat - 3.0)
    } else if w_hat < -3.0 {
        policy.v_min + HARD_SIGMOID_LEAK * (w_hat + 3.0)
    } else {
        policy.mid() + slope * w_hat
    }
}

/// Effective exponent for an unconstrained value.
pub fn reparam_forward(w_hat: f64, policy: &ConstraintPolicy) -> Result<f64> {
    Ok(match require_kind(policy)? {
        ReparamKind::ScaledSigmoid => policy.v_min + (policy.v_max - policy.v_min) * logistic(w_hat),
        ReparamKind::ScaledTanh => policy.mid() + policy.half_range() * w_hat.tanh(),
        ReparamKind::HardSigmoidClip => policy.clamp(hard_sigmoid_raw(w_hat, policy)),
    })
}

/// Derivative of the map. For the hard sigmoid this is the derivative of
/// the leaky map, so saturated values keep a small positive gradient.
pub fn reparam_grad(w_hat: f64, policy: &ConstraintPolicy) -> Result<f64> {
    Ok(match require_kind(policy)? {
        ReparamKind::ScaledSigmoid => {
            // σ(1 − σ) = e^{−|x|} / (1 + e^{−|x|})², positive for all finite x
            let e = (-w_hat.abs()).exp();
            (policy.v_max - policy.v_min) * e / ((1.0 + e) * (1.0 + e))
        }
        ReparamKind::ScaledTanh => {
            // sech²(x) = 4 e^{−2|x|} / (1 + e^{−2|x|})²
            let e = (-2.0 * w_hat.abs()).exp();
            policy.half_range() * 4.0 * e / ((1.0 + e) * (1.0 + e))
        }
        ReparamKind::HardSigmoidClip => {
            if w_hat.abs() > 3.0 {
                HARD_SIGMOID_LEAK
            } else {
                (policy.v_max - policy.v_min) / 6.0
            }
        }
    })
}

/// Unconstrained value that maps to `target`, which must lie strictly
/// inside the bounds.
pub fn reparam_invert(target: f64, policy: &ConstraintPolicy) -> Result<f64> {
    let kind = require_kind(policy)?;
    if !(policy.v_min < target && target < policy.v_max) {
        return Err(Error::InvalidArgument(format!(
            "target {target} outside open interval ({}, {})",
            policy.v_min, policy.v_max
        )));
    }
    Ok(match kind {
        ReparamKind::ScaledSigmoid => {
            let u = (target - policy.v_min) / (policy.v_max - policy.v_min);
            (u / (1.0 - u)).ln()
        }
        ReparamKind::ScaledTanh => ((target - policy.mid()) / policy.half_range()).atanh(),
        ReparamKind::HardSigmoidClip => (target - policy.mid()) * 6.0 / (policy.v_max - policy.v_min),
    })
}

/// Neutral exponent payload: all-ones for the elementwise and shared
/// variants, identity matrices for the matrix variants.
pub fn neutral_exponents(kind: VariantKind, k_h: usize, k_w: usize) -> Ewm {
    match kind {
        VariantKind::Standard => Ewm::Standard,
        VariantKind::Elementwise => Ewm::Elementwise(Tensor::filled(&[k_h, k_w], 1.0)),
        VariantKind::RowShared => Ewm::RowShared(Tensor::filled(&[k_h], 1.0)),
        VariantKind::ColShared => Ewm::ColShared(Tensor::filled(&[k_w], 1.0)),
        VariantKind::Bilinear => Ewm::Bilinear {
            w3: Tensor::identity(k_h),
            w4: Tensor::identity(k_w),
        },
        VariantKind::FullMatrix => Ewm::FullMatrix(Tensor::identity(k_h * k_w)),
    }
}

/// Initial exponents and, under reparameterization, the stored
/// unconstrained payload that maps onto them.
#[derive(Debug, Clone, PartialEq)]
pub struct InitExponents {
    pub effective: Ewm,
    pub stored: Ewm,
}

pub fn init_exponents(kind: VariantKind, k_h: usize, k_w: usize, policy: &ConstraintPolicy) -> Result<InitExponents> {
    if k_h == 0 || k_w == 0 {
        return Err(Error::InvalidArgument("kernel dimensions must be >= 1".into()));
    }
    policy.validate_for(kind)?;
    let effective = neutral_exponents(kind, k_h, k_w);
    let stored = if policy.is_reparam() {
        map_payload(&effective, |v| reparam_invert(v, policy))?
    } else {
        effective.clone()
    };
    Ok(InitExponents { effective, stored })
}

/// Applies `f` to every exponent entry.
pub fn map_payload(ewm: &Ewm, f: impl Fn(f64) -> Result<f64>) -> Result<Ewm> {
    let mut out = ewm.clone();
    for t in out.tensors_mut() {
        for v in t.data_mut() {
            *v = f(*v)?;
        }
    }
    Ok(out)
}

/// Effective exponents for a stored payload under `policy`.
pub fn effective_exponents(stored: &Ewm, policy: &ConstraintPolicy) -> Result<Ewm> {
    if policy.is_reparam() {
        map_payload(stored, |v| reparam_forward(v, policy))
    } else {
        Ok(stored.clone())
    }
}
