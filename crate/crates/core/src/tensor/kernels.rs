//! Raw loops behind the graph operations. All buffers are row-major and
//! outputs are accumulated into (`+=`), never overwritten.

use super::Real;

/// `out[r×t] += a[r×s] · b[s×t]`
pub(crate) fn matmul_acc<T: Real>(a: &[T], b: &[T], out: &mut [T], r: usize, s: usize, t: usize) {
    for i in 0..r {
        let out_row = &mut out[i * t..(i + 1) * t];
        for k in 0..s {
            let aik = a[i * s + k];
            let b_row = &b[k * t..(k + 1) * t];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
}

/// `da[r×s] += dc[r×t] · bᵀ`
pub(crate) fn matmul_grad_lhs<T: Real>(
    dc: &[T],
    b: &[T],
    da: &mut [T],
    r: usize,
    s: usize,
    t: usize,
) {
    for i in 0..r {
        let dc_row = &dc[i * t..(i + 1) * t];
        for k in 0..s {
            let b_row = &b[k * t..(k + 1) * t];
            let dot: T = dc_row.iter().zip(b_row).map(|(&x, &y)| x * y).sum();
            da[i * s + k] += dot;
        }
    }
}

/// `db[s×t] += aᵀ · dc[r×t]`
pub(crate) fn matmul_grad_rhs<T: Real>(
    a: &[T],
    dc: &[T],
    db: &mut [T],
    r: usize,
    s: usize,
    t: usize,
) {
    for i in 0..r {
        let dc_row = &dc[i * t..(i + 1) * t];
        for k in 0..s {
            let aik = a[i * s + k];
            let db_row = &mut db[k * t..(k + 1) * t];
            for (d, &g) in db_row.iter_mut().zip(dc_row) {
                *d += aik * g;
            }
        }
    }
}

/// Geometry of a sequence-major 1-D convolution with full-width kernels.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub len_in: usize,
    pub len_out: usize,
    pub window: usize,
    pub d_in: usize,
    pub d_out: usize,
    /// Number of zero rows virtually prepended to the input.
    pub offset: usize,
}

impl ConvGeom {
    /// Input row read by output row `i` at kernel tap `j`, if inside the input.
    #[inline]
    fn source(&self, i: usize, j: usize) -> Option<usize> {
        (i + j)
            .checked_sub(self.offset)
            .filter(|&src| src < self.len_in)
    }
}

pub(crate) fn conv1d_forward<T: Real>(x: &[T], w: &[T], b: &[T], out: &mut [T], g: ConvGeom) {
    let (d_in, d_out) = (g.d_in, g.d_out);
    for i in 0..g.len_out {
        let out_row = &mut out[i * d_out..(i + 1) * d_out];
        out_row.copy_from_slice(b);
        for j in 0..g.window {
            let Some(src) = g.source(i, j) else { continue };
            let x_row = &x[src * d_in..(src + 1) * d_in];
            let w_tap = &w[j * d_in * d_out..(j + 1) * d_in * d_out];
            for (c, &xv) in x_row.iter().enumerate() {
                let w_row = &w_tap[c * d_out..(c + 1) * d_out];
                for (o, &wv) in out_row.iter_mut().zip(w_row) {
                    *o += xv * wv;
                }
            }
        }
    }
}

pub(crate) struct ConvGrads<'a, T> {
    pub dx: Option<&'a mut [T]>,
    pub dw: Option<&'a mut [T]>,
    pub db: Option<&'a mut [T]>,
}

pub(crate) fn conv1d_backward<T: Real>(
    x: &[T],
    w: &[T],
    dout: &[T],
    grads: ConvGrads<'_, T>,
    g: ConvGeom,
) {
    let (d_in, d_out) = (g.d_in, g.d_out);
    let ConvGrads {
        mut dx,
        mut dw,
        mut db,
    } = grads;
    for i in 0..g.len_out {
        let dout_row = &dout[i * d_out..(i + 1) * d_out];
        if let Some(db) = db.as_deref_mut() {
            for (d, &v) in db.iter_mut().zip(dout_row) {
                *d += v;
            }
        }
        for j in 0..g.window {
            let Some(src) = g.source(i, j) else { continue };
            let tap = j * d_in * d_out;
            for c in 0..d_in {
                let w_row = &w[tap + c * d_out..tap + (c + 1) * d_out];
                if let Some(dx) = dx.as_deref_mut() {
                    let dot: T = dout_row.iter().zip(w_row).map(|(&a, &b)| a * b).sum();
                    dx[src * d_in + c] += dot;
                }
                if let Some(dw) = dw.as_deref_mut() {
                    let xv = x[src * d_in + c];
                    let dw_row = &mut dw[tap + c * d_out..tap + (c + 1) * d_out];
                    for (d, &v) in dw_row.iter_mut().zip(dout_row) {
                        *d += xv * v;
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable softmax over consecutive slices of width `d`.
pub(crate) fn softmax_rows<T: Real>(x: &[T], out: &mut [T], d: usize) {
    if d == 0 {
        return;
    }
    for (xs, ys) in x.chunks(d).zip(out.chunks_mut(d)) {
        let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for (y, &v) in ys.iter_mut().zip(xs) {
            *y = (v - max).exp();
            total += *y;
        }
        for y in ys.iter_mut() {
            *y = *y / total;
        }
    }
}
