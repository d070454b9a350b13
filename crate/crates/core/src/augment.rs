//! Label-preserving perturbations of `T x C` time-series windows.

use crate::error::{Error, Result};
use crate::numerics::{signed_pow, SeededRng, Tensor, DEFAULT_EPS};

pub const DEFAULT_EXP_LO: f64 = -2.0;
pub const DEFAULT_EXP_HI: f64 = 4.0;
pub const DEFAULT_PROBABILITY: f64 = 0.5;

/// Which axis an exponent draw is shared along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    PerPoint,
    PerRow,
    PerChannel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentOp {
    LeftRightFlip,
    BlockwiseFlip { block_len: usize },
    BiDirectionalFlip,
    ExponentAugment { granularity: Granularity, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    pub op: AugmentOp,
    pub probability: f64,
}

impl AugmentSpec {
    pub fn new(op: AugmentOp, probability: f64) -> Result<Self> {
        let spec = Self { op, probability };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::InvalidArgument(format!(
                "augmentation probability {} outside [0, 1]",
                self.probability
            )));
        }
        match self.op {
            AugmentOp::BlockwiseFlip { block_len: 0 } => Err(Error::InvalidArgument("block_len must be >= 1".into())),
            AugmentOp::ExponentAugment { lo, hi, .. } if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() => Err(
                Error::InvalidArgument(format!("exponent range [{lo}, {hi}] is invalid")),
            ),
            _ => Ok(()),
        }
    }
}

fn rows_of(x: &Tensor) -> (usize, usize) {
    x.dims2().expect("augmentations take T x C windows")
}

/// Reverses the time axis.
pub fn flip_lr(x: &Tensor) -> Tensor {
    let (t, _) = rows_of(x);
    flip_blockwise(x, t.max(1))
}

/// Reverses rows within consecutive blocks of `block_len` (the last block
/// may be shorter). Block order is kept.
pub fn flip_blockwise(x: &Tensor, block_len: usize) -> Tensor {
    let (t, c) = rows_of(x);
    let block_len = block_len.max(1);
    let mut out = x.clone();
    let src = x.data();
    let dst = out.data_mut();
    let mut start = 0;
    while start < t {
        let end = (start + block_len).min(t);
        for r in start..end {
            let mirrored = start + end - 1 - r;
            dst[r * c..(r + 1) * c].copy_from_slice(&src[mirrored * c..(mirrored + 1) * c]);
        }
        start = end;
    }
    out
}

/// Reverses both axes (180° rotation).
pub fn flip_bidirectional(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    out.data_mut().reverse();
    out
}

/// Draws one exponent per point, row or column from `U[lo, hi]`.
pub fn draw_exponents(
    rows: usize,
    cols: usize,
    granularity: Granularity,
    lo: f64,
    hi: f64,
    rng: &mut SeededRng,
) -> Vec<f64> {
    let n = match granularity {
        Granularity::PerPoint => rows * cols,
        Granularity::PerRow => rows,
        Granularity::PerChannel => cols,
    };
    rng.uniform_vec(n, lo, hi)
}

/// Raises each entry to its drawn exponent with [`signed_pow`].
pub fn apply_exponents(x: &Tensor, granularity: Granularity, exponents: &[f64]) -> Result<Tensor> {
    let (t, c) = x.dims2()?;
    let expected = match granularity {
        Granularity::PerPoint => t * c,
        Granularity::PerRow => t,
        Granularity::PerChannel => c,
    };
    if exponents.len() != expected {
        return Err(Error::ShapeMismatch {
            expected: vec![expected],
            actual: vec![exponents.len()],
        });
    }
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(idx, &v)| {
            let e = match granularity {
                Granularity::PerPoint => exponents[idx],
                Granularity::PerRow => exponents[idx / c],
                Granularity::PerChannel => exponents[idx % c],
            };
            signed_pow(v, e, DEFAULT_EPS)
        })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub fn exp_augment(x: &Tensor, granularity: Granularity, lo: f64, hi: f64, rng: &mut SeededRng) -> Result<Tensor> {
    if !(lo <= hi) {
        return Err(Error::InvalidArgument(format!(
            "exponent range [{lo}, {hi}] is invalid"
        )));
    }
    let (t, c) = x.dims2()?;
    let exps = draw_exponents(t, c, granularity, lo, hi, rng);
    apply_exponents(x, granularity, &exps)
}

/// Applies one operation unconditionally.
pub fn apply_op(x: &Tensor, op: &AugmentOp, rng: &mut SeededRng) -> Result<Tensor> {
    x.dims2()?;
    Ok(match *op {
        AugmentOp::LeftRightFlip => flip_lr(x),
        AugmentOp::BlockwiseFlip { block_len } => flip_blockwise(x, block_len),
        AugmentOp::BiDirectionalFlip => flip_bidirectional(x),
        AugmentOp::ExponentAugment { granularity, lo, hi } => exp_augment(x, granularity, lo, hi, rng)?,
    })
}

/// Applies each spec in order with its own probability.
///
/// One Bernoulli draw is consumed per spec regardless of `p`, so the stream
/// position does not depend on the probabilities.
pub fn apply_pipeline(x: &Tensor, specs: &[AugmentSpec], rng: &mut SeededRng) -> Result<Tensor> {
    let mut out = x.clone();
    for spec in specs {
        spec.validate()?;
        if rng.unit() < spec.probability {
            out = apply_op(&out, &spec.op, rng)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    fn sorted(x: &Tensor) -> Vec<f64> {
        let mut v = x.data().to_vec();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn flip_examples() {
        let x = t(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(flip_lr(&x), t(&[&[3.0, 4.0], &[1.0, 2.0]]));
        assert_eq!(flip_bidirectional(&x), t(&[&[4.0, 3.0], &[2.0, 1.0]]));
        let row = t(&[&[1.0, 2.0, 3.0]]);
        assert_eq!(flip_lr(&row), row);
        let one = t(&[&[5.0]]);
        assert_eq!(flip_bidirectional(&one), one);
    }

    #[test]
    fn blockwise_examples() {
        let x = t(&[&[1.0], &[2.0], &[3.0], &[4.0]]);
        assert_eq!(flip_blockwise(&x, 2), t(&[&[2.0], &[1.0], &[4.0], &[3.0]]));
        assert_eq!(flip_blockwise(&x, 1), x);
        assert_eq!(flip_blockwise(&x, 4), flip_lr(&x));
        assert_eq!(flip_blockwise(&x, 9), flip_lr(&x));
        let five = t(&[&[1.0], &[2.0], &[3.0], &[4.0], &[5.0]]);
        assert_eq!(flip_blockwise(&five, 2), t(&[&[2.0], &[1.0], &[4.0], &[3.0], &[5.0]]));
    }

    #[test]
    fn per_row_example() {
        let x = t(&[&[2.0, 3.0], &[4.0, 5.0]]);
        let out = apply_exponents(&x, Granularity::PerRow, &[2.0, 1.0]).unwrap();
        assert_eq!(out, t(&[&[4.0, 9.0], &[4.0, 5.0]]));
        assert!(apply_exponents(&x, Granularity::PerRow, &[2.0]).is_err());
    }

    #[test]
    fn neutral_range_is_identity() {
        let mut rng = SeededRng::new(1);
        let x = t(&[&[-2.5, 0.3], &[1.7, -0.01]]);
        for g in [Granularity::PerPoint, Granularity::PerRow, Granularity::PerChannel] {
            assert_eq!(exp_augment(&x, g, 1.0, 1.0, &mut rng).unwrap(), x);
        }
        assert!(exp_augment(&x, Granularity::PerRow, 2.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn pipeline_probabilities() {
        let x = t(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let mut rng = SeededRng::new(3);
        let never = [
            AugmentSpec::new(AugmentOp::LeftRightFlip, 0.0).unwrap(),
            AugmentSpec::new(
                AugmentOp::ExponentAugment {
                    granularity: Granularity::PerPoint,
                    lo: -2.0,
                    hi: 4.0,
                },
                0.0,
            )
            .unwrap(),
        ];
        assert_eq!(apply_pipeline(&x, &never, &mut rng).unwrap(), x);
        let always = [AugmentSpec::new(AugmentOp::LeftRightFlip, 1.0).unwrap()];
        assert_eq!(apply_pipeline(&x, &always, &mut rng).unwrap(), flip_lr(&x));
    }

    #[test]
    fn pipeline_is_deterministic() {
        let x = t(&[&[1.0, -2.0], &[3.0, 0.4], &[-5.0, 6.0]]);
        let specs = [
            AugmentSpec::new(AugmentOp::BlockwiseFlip { block_len: 2 }, 0.5).unwrap(),
            AugmentSpec::new(
                AugmentOp::ExponentAugment {
                    granularity: Granularity::PerRow,
                    lo: -2.0,
                    hi: 4.0,
                },
                0.5,
            )
            .unwrap(),
        ];
        let run = || {
            let mut rng = SeededRng::new(99);
            (0..20)
                .map(|_| apply_pipeline(&x, &specs, &mut rng).unwrap())
                .flat_map(|t| t.into_data())
                .map(f64::to_bits)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn spec_validation() {
        assert!(AugmentSpec::new(AugmentOp::BlockwiseFlip { block_len: 0 }, 0.5).is_err());
        assert!(AugmentSpec::new(AugmentOp::LeftRightFlip, 1.5).is_err());
        assert!(AugmentSpec::new(
            AugmentOp::ExponentAugment {
                granularity: Granularity::PerPoint,
                lo: 3.0,
                hi: 1.0
            },
            0.5
        )
        .is_err());
    }

    fn window() -> impl Strategy<Value = Tensor> {
        (1usize..12, 1usize..6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-10.0..10.0f64, r * c).prop_map(move |d| Tensor::matrix(r, c, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn flips_are_involutions(x in window(), b in 1usize..8) {
            prop_assert_eq!(flip_lr(&flip_lr(&x)), x.clone());
            prop_assert_eq!(flip_bidirectional(&flip_bidirectional(&x)), x.clone());
            prop_assert_eq!(flip_blockwise(&flip_blockwise(&x, b), b), x);
        }

        #[test]
        fn flips_preserve_values(x in window(), b in 1usize..8) {
            let s = sorted(&x);
            prop_assert_eq!(sorted(&flip_lr(&x)), s.clone());
            prop_assert_eq!(sorted(&flip_bidirectional(&x)), s.clone());
            prop_assert_eq!(sorted(&flip_blockwise(&x, b)), s);
        }

        #[test]
        fn exp_augment_preserves_sign(x in window(), seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            let out = exp_augment(&x, Granularity::PerPoint, -2.0, 4.0, &mut rng).unwrap();
            for (a, b) in x.data().iter().zip(out.data()) {
                if a.abs() >= DEFAULT_EPS {
                    prop_assert_eq!(a.signum(), b.signum());
                }
            }
        }
    }
}
