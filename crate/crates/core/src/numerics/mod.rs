//! Dense tensors plus the scalar and linear-algebra primitives the layers
//! are built from.

mod rng;
mod tensor;

pub use rng::SeededRng;
pub(crate) use tensor::matmul_into;
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Magnitude floor used by the signed power and logarithm.
pub const DEFAULT_EPS: f64 = 1e-6;

/// `+1` for `x >= 0`, `-1` otherwise.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `sign(x) * max(|x|, eps)^w`.
///
/// Total over signed inputs and odd in `x`; equals `x^w` for `x >= eps`.
#[inline]
pub fn signed_pow(x: f64, w: f64, eps: f64) -> f64 {
    sign(x) * x.abs().max(eps).powf(w)
}

/// `ln(max(|x|, eps))`.
#[inline]
pub fn log_magnitude(x: f64, eps: f64) -> f64 {
    x.abs().max(eps).ln()
}

/// Kronecker product of two matrices; block `(i, j)` is `a[i, j] * b`.
pub fn kron(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    let (p, q) = b.dims2()?;
    let cols = n * q;
    let mut out = vec![0.0; m * p * cols];
    for i in 0..m {
        for j in 0..n {
            let aij = a.at(i, j);
            for r in 0..p {
                for s in 0..q {
                    out[(i * p + r) * cols + j * q + s] = aij * b.at(r, s);
                }
            }
        }
    }
    Tensor::matrix(m * p, cols, out)
}

/// Column-major vectorization of a matrix.
pub fn vec_col(x: &Tensor) -> Result<Tensor> {
    let (m, n) = x.dims2()?;
    let mut out = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            out.push(x.at(i, j));
        }
    }
    Tensor::vector(out)
}

/// Inverse of [`vec_col`].
pub fn unvec_col(v: &Tensor, m: usize, n: usize) -> Result<Tensor> {
    if v.len() != m * n {
        return Err(Error::ShapeMismatch {
            expected: vec![m * n],
            actual: v.shape().to_vec(),
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    for j in 0..n {
        for i in 0..m {
            out.set(i, j, v.data()[j * m + i]);
        }
    }
    Ok(out)
}

/// Geometry of a valid (unpadded) sliding window over a `rows x cols` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub k_h: usize,
    pub k_w: usize,
    pub stride_t: usize,
    pub stride_c: usize,
    pub grid_t: usize,
    pub grid_c: usize,
}

impl PatchGrid {
    pub fn new(rows: usize, cols: usize, k_h: usize, k_w: usize, stride_t: usize, stride_c: usize) -> Result<Self> {
        if k_h == 0 || k_w == 0 || stride_t == 0 || stride_c == 0 {
            return Err(Error::InvalidArgument("kernel sizes and strides must be >= 1".into()));
        }
        if k_h > rows || k_w > cols {
            return Err(Error::KernelTooLarge { k_h, k_w, rows, cols });
        }
        Ok(Self {
            k_h,
            k_w,
            stride_t,
            stride_c,
            grid_t: (rows - k_h) / stride_t + 1,
            grid_c: (cols - k_w) / stride_c + 1,
        })
    }

    pub fn len(&self) -> usize {
        self.grid_t * self.grid_c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Top-left input coordinate of patch `p` (row-major grid order).
    #[inline]
    pub fn origin(&self, p: usize) -> (usize, usize) {
        ((p / self.grid_c) * self.stride_t, (p % self.grid_c) * self.stride_c)
    }
}

/// All receptive fields of a valid convolution, in row-major grid order.
#[derive(Debug, Clone)]
pub struct Patches {
    pub grid: PatchGrid,
    pub patches: Vec<Tensor>,
}

pub fn extract_patches(input: &Tensor, k_h: usize, k_w: usize, stride_t: usize, stride_c: usize) -> Result<Patches> {
    let (rows, cols) = input.dims2()?;
    let grid = PatchGrid::new(rows, cols, k_h, k_w, stride_t, stride_c)?;
    let mut patches = Vec::with_capacity(grid.len());
    let mut buf = vec![0.0; k_h * k_w];
    for p in 0..grid.len() {
        gather_patch(input.data(), cols, &grid, p, &mut buf);
        patches.push(Tensor::matrix(k_h, k_w, buf.clone())?);
    }
    Ok(Patches { grid, patches })
}

/// Copies patch `p` (row-major `k_h x k_w`) out of a row-major input.
#[inline]
pub(crate) fn gather_patch(input: &[f64], cols: usize, grid: &PatchGrid, p: usize, out: &mut [f64]) {
    let (r0, c0) = grid.origin(p);
    for i in 0..grid.k_h {
        let src = (r0 + i) * cols + c0;
        out[i * grid.k_w..(i + 1) * grid.k_w].copy_from_slice(&input[src..src + grid.k_w]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn signed_pow_examples() {
        assert_eq!(signed_pow(2.0, 3.0, 1e-6), 8.0);
        assert_eq!(signed_pow(-3.0, 2.0, 1e-6), -9.0);
        assert_eq!(signed_pow(0.37, 1.0, 1e-6), 0.37);
        assert_eq!(signed_pow(-0.37, 1.0, 1e-6), -0.37);
        // sign(0) = +1, magnitude clamped to eps
        assert!((signed_pow(0.0, 1.0, 1e-6) - 1e-6).abs() < 1e-20);
        assert!((signed_pow(0.0, -1.0, 1e-6) - 1e6).abs() < 1e-6);
    }

    #[test]
    fn kron_examples() {
        let a = m(&[&[2.0], &[3.0]]);
        let b = m(&[&[1.0, 1.0]]);
        assert_eq!(kron(&a, &b).unwrap(), m(&[&[2.0, 2.0], &[3.0, 3.0]]));
        assert_eq!(
            kron(&Tensor::identity(2), &Tensor::identity(2)).unwrap(),
            Tensor::identity(4)
        );
        let b = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        assert_eq!(kron(&m(&[&[1.0]]), &b).unwrap(), b);
        assert!(kron(&Tensor::zeros(&[3]), &b).is_err());
    }

    #[test]
    fn vec_examples() {
        let x = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(vec_col(&x).unwrap().data(), &[1.0, 3.0, 2.0, 4.0]);
        let row = m(&[&[5.0, 6.0, 7.0]]);
        assert_eq!(vec_col(&row).unwrap().data(), row.data());
        assert!(vec_col(&Tensor::zeros(&[2, 2, 2])).is_err());
        assert_eq!(unvec_col(&vec_col(&x).unwrap(), 2, 2).unwrap(), x);
    }

    #[test]
    fn patch_examples() {
        let x = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]);
        let p = extract_patches(&x, 2, 2, 1, 1).unwrap();
        assert_eq!(p.patches.len(), 4);
        assert_eq!(p.patches[0], m(&[&[1.0, 2.0], &[4.0, 5.0]]));
        assert_eq!(p.patches[3], m(&[&[5.0, 6.0], &[8.0, 9.0]]));

        let whole = extract_patches(&x, 3, 3, 1, 1).unwrap();
        assert_eq!(whole.patches.len(), 1);
        assert_eq!(whole.patches[0], x);

        let big = Tensor::zeros(&[480, 52]);
        let p = extract_patches(&big, 8, 52, 4, 1).unwrap();
        assert_eq!(p.patches.len(), 119);
        assert_eq!((p.grid.grid_t, p.grid.grid_c), (119, 1));

        assert!(matches!(
            extract_patches(&x, 4, 1, 1, 1),
            Err(Error::KernelTooLarge { .. })
        ));
    }

    #[test]
    fn patch_count_matches_enumeration() {
        for t in 1..=10 {
            for c in 1..=10 {
                for k_h in 1..=t {
                    for k_w in 1..=c {
                        for st in 1..=3 {
                            for sc in 1..=3 {
                                let grid = PatchGrid::new(t, c, k_h, k_w, st, sc).unwrap();
                                let mut count = 0;
                                let mut r = 0;
                                while r + k_h <= t {
                                    let mut q = 0;
                                    while q + k_w <= c {
                                        count += 1;
                                        q += sc;
                                    }
                                    r += st;
                                }
                                assert_eq!(grid.len(), count, "{t}x{c} k={k_h}x{k_w} s={st},{sc}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn kron_vec_identity() {
        let mut rng = SeededRng::new(11);
        for _ in 0..20 {
            let mut rand3 = || Tensor::matrix(3, 3, rng.uniform_vec(9, -2.0, 2.0)).unwrap();
            let (a, x, b) = (rand3(), rand3(), rand3());
            let lhs = vec_col(&a.matmul(&x).unwrap().matmul(&b).unwrap()).unwrap();
            let rhs = kron(&b.transpose().unwrap(), &a)
                .unwrap()
                .matvec(&vec_col(&x).unwrap())
                .unwrap();
            assert!(lhs.max_abs_diff(&rhs) <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn signed_pow_identity_exponent(x in prop_oneof![-1e6..-1e-6f64, 1e-6..1e6f64]) {
            prop_assert_eq!(signed_pow(x, 1.0, DEFAULT_EPS), x);
        }

        #[test]
        fn signed_pow_is_odd(x in 1e-9..100.0f64, w in -3.0..4.0f64) {
            prop_assert_eq!(signed_pow(-x, w, DEFAULT_EPS), -signed_pow(x, w, DEFAULT_EPS));
        }

        #[test]
        fn unvec_inverts_vec(m in 1usize..6, n in 1usize..6, seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            let x = Tensor::matrix(m, n, rng.uniform_vec(m * n, -5.0, 5.0)).unwrap();
            prop_assert_eq!(unvec_col(&vec_col(&x).unwrap(), m, n).unwrap(), x);
        }
    }
}
