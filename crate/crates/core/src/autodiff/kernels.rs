//! Slice-level numeric kernels shared by the graph operations.

use super::tensor::Real;

#[inline]
pub(crate) fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Output range `[t0, t1)` for which `t + shift` stays inside `[0, len)`.
#[inline]
pub(crate) fn tap_range(len: usize, shift: isize) -> (usize, usize) {
    let len_i = len as isize;
    if shift.abs() >= len_i {
        return (0, 0);
    }
    let t0 = (-shift).max(0) as usize;
    let t1 = (len_i - shift).min(len_i) as usize;
    (t0, t1)
}

/// Dimensions of a "same"-padded dilated 1-D convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub len: usize,
    pub dilation: usize,
}

impl ConvDims {
    #[inline]
    fn shift(&self, k: usize) -> isize {
        (k as isize - (self.kernel / 2) as isize) * self.dilation as isize
    }
}

pub(crate) fn conv1d_forward<F: Real>(x: &[F], w: &[F], bias: Option<&[F]>, d: ConvDims) -> Vec<F> {
    let t = d.len;
    let mut out = vec![F::zero(); d.c_out * t];
    for c in 0..d.c_out {
        let row = &mut out[c * t..(c + 1) * t];
        if let Some(b) = bias {
            row.fill(b[c]);
        }
        for i in 0..d.c_in {
            let xr = &x[i * t..(i + 1) * t];
            for k in 0..d.kernel {
                let wv = w[(c * d.c_in + i) * d.kernel + k];
                if wv == F::zero() {
                    continue;
                }
                let shift = d.shift(k);
                let (t0, t1) = tap_range(t, shift);
                if t0 >= t1 {
                    continue;
                }
                let s0 = (t0 as isize + shift) as usize;
                axpy(wv, &xr[s0..s0 + (t1 - t0)], &mut row[t0..t1]);
            }
        }
    }
    out
}

/// Gradients of a convolution with respect to input, weight and bias.
pub(crate) fn conv1d_backward<F: Real>(
    x: &[F],
    w: &[F],
    dy: &[F],
    d: ConvDims,
    need: [bool; 3],
) -> (Option<Vec<F>>, Option<Vec<F>>, Option<Vec<F>>) {
    let t = d.len;
    let mut dx = need[0].then(|| vec![F::zero(); d.c_in * t]);
    let mut dw = need[1].then(|| vec![F::zero(); w.len()]);
    let db = need[2].then(|| (0..d.c_out).map(|c| dy[c * t..(c + 1) * t].iter().copied().sum()).collect());
    for c in 0..d.c_out {
        let gr = &dy[c * t..(c + 1) * t];
        for i in 0..d.c_in {
            for k in 0..d.kernel {
                let shift = d.shift(k);
                let (t0, t1) = tap_range(t, shift);
                if t0 >= t1 {
                    continue;
                }
                let s0 = (t0 as isize + shift) as usize;
                let widx = (c * d.c_in + i) * d.kernel + k;
                if let Some(dx) = dx.as_mut() {
                    let wv = w[widx];
                    if wv != F::zero() {
                        axpy(wv, &gr[t0..t1], &mut dx[i * t + s0..i * t + s0 + (t1 - t0)]);
                    }
                }
                if let Some(dw) = dw.as_mut() {
                    dw[widx] += dot(&gr[t0..t1], &x[i * t + s0..i * t + s0 + (t1 - t0)]);
                }
            }
        }
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..19).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..19).map(|i| 3.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn tap_range_clips() {
        assert_eq!(tap_range(5, 2), (0, 3));
        assert_eq!(tap_range(5, -2), (2, 5));
        assert_eq!(tap_range(5, 5), (0, 0));
        assert_eq!(tap_range(5, -7), (0, 0));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }
}
