//! Single-sample CHW building blocks: 3x3 and 1x1 convolutions via im2col and
//! GEMM, 2x2 max-pooling, nearest 2x upsampling, and their adjoints.

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign};

use num_traits::Float;

/// Scalar type of the network: `f32` for training, `f64` for gradient checks.
pub trait Real: Float + AddAssign + MulAssign + Default + Debug + Send + Sync + 'static {
    /// Row/column-strided `c = alpha * a b + beta * c`.
    ///
    /// # Safety
    /// The pointers and strides must describe valid matrices of the given dims.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        Self::from(v).expect("representable constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major `c[m x n] = op(a) op(b) + beta * c` where `op(a)` is `m x k`.
/// With `ta`, `a` is stored `k x m`; with `tb`, `b` is stored `n x k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(ta: bool, tb: bool, m: usize, k: usize, n: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too small");
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above, strides match the stated storage.
    unsafe {
        T::gemm_raw(m, k, n, T::one(), a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1)
    }
}

/// Border handling for 3x3 convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    #[default]
    Zero,
    /// wrap-around; only used to test translation equivariance
    #[cfg_attr(not(test), allow(dead_code))]
    Periodic,
}

#[inline]
fn src_index(i: usize, d: usize, n: usize, pad: Padding) -> Option<usize> {
    // i + d - 1 with d in 0..3
    let j = i as isize + d as isize - 1;
    if (0..n as isize).contains(&j) {
        Some(j as usize)
    } else {
        match pad {
            Padding::Zero => None,
            Padding::Periodic => Some(j.rem_euclid(n as isize) as usize),
        }
    }
}

/// `x` is `c x h x w`; `cols` becomes `(c*9) x (h*w)`.
pub(crate) fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, pad: Padding, cols: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let Some(sy) = src_index(y, ky, h, pad) else {
                        out.fill(T::zero());
                        continue;
                    };
                    let src = &plane[sy * w..(sy + 1) * w];
                    match kx {
                        1 => out.copy_from_slice(src),
                        0 => {
                            out[1..].copy_from_slice(&src[..w - 1]);
                            out[0] = src_index(0, 0, w, pad).map_or(T::zero(), |s| src[s]);
                        }
                        _ => {
                            out[..w - 1].copy_from_slice(&src[1..]);
                            out[w - 1] = src_index(w - 1, 2, w, pad).map_or(T::zero(), |s| src[s]);
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` back into `dx` (`c x h x w`).
pub(crate) fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, pad: Padding, dx: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let Some(sy) = src_index(y, ky, h, pad) else { continue };
                    let g = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy * w..(sy + 1) * w];
                    match kx {
                        1 => dst.iter_mut().zip(g).for_each(|(d, v)| *d += *v),
                        0 => {
                            dst[..w - 1].iter_mut().zip(&g[1..]).for_each(|(d, v)| *d += *v);
                            if let Some(s) = src_index(0, 0, w, pad) {
                                dst[s] += g[0];
                            }
                        }
                        _ => {
                            dst[1..].iter_mut().zip(&g[..w - 1]).for_each(|(d, v)| *d += *v);
                            if let Some(s) = src_index(w - 1, 2, w, pad) {
                                dst[s] += g[w - 1];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2x2 max-pool of `c x h x w`; returns the output and, per output element,
/// the flat input index that won.
pub(crate) fn maxpool2<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ci in 0..c {
        let base = ci * h * w;
        for y in 0..ho {
            for xo in 0..wo {
                let mut best = base + 2 * y * w + 2 * xo;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * w + 2 * xo + dx;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool2_backward<T: Real>(dy: &[T], arg: &[u32], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (g, &i) in dy.iter().zip(arg) {
        dx[i as usize] += *g;
    }
    dx
}

/// Nearest-neighbour 2x upsampling of `c x h x w`.
pub(crate) fn upsample2<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let w2 = 2 * w;
    let mut out = vec![T::zero(); c * 4 * h * w];
    for ci in 0..c {
        for y in 0..2 * h {
            let src = &x[ci * h * w + (y / 2) * w..][..w];
            let dst = &mut out[ci * 4 * h * w + y * w2..][..w2];
            for (k, v) in dst.iter_mut().enumerate() {
                *v = src[k / 2];
            }
        }
    }
    out
}

/// Adjoint of [`upsample2`]; `h`, `w` are the low-resolution dims.
pub(crate) fn upsample2_backward<T: Real>(dy: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let w2 = 2 * w;
    let mut dx = vec![T::zero(); c * h * w];
    for ci in 0..c {
        for y in 0..2 * h {
            let src = &dy[ci * 4 * h * w + y * w2..][..w2];
            let dst = &mut dx[ci * h * w + (y / 2) * w..][..w];
            for (k, g) in src.iter().enumerate() {
                dst[k / 2] += *g;
            }
        }
    }
    dx
}
