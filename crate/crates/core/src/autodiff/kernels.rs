//! Value-level kernels behind the differentiable ops.

use super::float::Float;
use super::tensor::{numel, Tensor};

/// Broadcast result shape under right-aligned numpy rules.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed inside `out` (right aligned); broadcast axes get stride 0.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        let axis = rank - shape.len() + i;
        strides[axis] = if shape[i] == 1 && out[axis] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Visits every output index of `out` together with the matching flat
/// offsets into two broadcast operands.
fn for_each_broadcast(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let total = numel(out);
    if total == 0 {
        return;
    }
    if out.is_empty() {
        f(0, 0, 0);
        return;
    }
    let rank = out.len();
    let inner = out[rank - 1];
    let (ia, ib) = (sa[rank - 1], sb[rank - 1]);
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    let mut o = 0;
    while o < total {
        for j in 0..inner {
            f(o + j, oa + j * ia, ob + j * ib);
        }
        o += inner;
        // advance the outer counters
        let mut axis = rank - 1;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            oa += sa[axis];
            ob += sb[axis];
            if idx[axis] < out[axis] {
                break;
            }
            oa -= sa[axis] * idx[axis];
            ob -= sb[axis] * idx[axis];
            idx[axis] = 0;
        }
    }
}

pub fn binary<T: Float>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    if b.numel() == 1 && a.ndim() >= b.ndim() {
        let s = b.data()[0];
        return Tensor::new(a.shape(), a.data().iter().map(|&x| f(x, s)).collect());
    }
    let out = broadcast_shape(a.shape(), b.shape()).unwrap_or_else(|| {
        panic!(
            "shapes {:?} and {:?} do not broadcast",
            a.shape(),
            b.shape()
        )
    });
    let sa = broadcast_strides(a.shape(), &out);
    let sb = broadcast_strides(b.shape(), &out);
    let mut data = vec![T::zero(); numel(&out)];
    let (ad, bd) = (a.data(), b.data());
    for_each_broadcast(&out, &sa, &sb, |o, i, j| data[o] = f(ad[i], bd[j]));
    Tensor::new(&out, data)
}

/// Sums `x` down to `target`, which must broadcast to `x`'s shape.
pub fn sum_to<T: Float>(x: &Tensor<T>, target: &[usize]) -> Tensor<T> {
    if x.shape() == target {
        return x.clone();
    }
    let out = x.shape().to_vec();
    assert_eq!(
        broadcast_shape(target, &out).as_deref(),
        Some(out.as_slice()),
        "cannot sum {:?} down to {target:?}",
        x.shape()
    );
    let st = broadcast_strides(target, &out);
    let identity: Vec<usize> = broadcast_strides(&out, &out);
    let mut data = vec![T::zero(); numel(target)];
    let xd = x.data();
    for_each_broadcast(&out, &identity, &st, |_, i, j| data[j] += xd[i]);
    Tensor::new(target, data)
}

pub fn broadcast_to<T: Float>(x: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if x.shape() == shape {
        return x.clone();
    }
    let out = broadcast_shape(x.shape(), shape).expect("broadcast_to: incompatible shapes");
    assert_eq!(out, shape, "broadcast_to: {:?} -> {shape:?}", x.shape());
    let sx = broadcast_strides(x.shape(), shape);
    let zero = vec![0; shape.len()];
    let mut data = vec![T::zero(); numel(shape)];
    let xd = x.data();
    for_each_broadcast(shape, &sx, &zero, |o, i, _| data[o] = xd[i]);
    Tensor::new(shape, data)
}

/// `op(a) @ op(b)` for 2-d tensors, where `op` optionally transposes.
pub fn matmul<T: Float>(a: &Tensor<T>, b: &Tensor<T>, ta: bool, tb: bool) -> Tensor<T> {
    assert!(a.ndim() == 2 && b.ndim() == 2, "matmul needs 2-d operands");
    let (ar, ac) = (a.shape()[0], a.shape()[1]);
    let (br, bc) = (b.shape()[0], b.shape()[1]);
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "matmul inner dimension mismatch");
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    let mut out = vec![T::zero(); m * n];
    T::gemm(
        m,
        k,
        n,
        T::one(),
        a.data(),
        rsa,
        csa,
        b.data(),
        rsb,
        csb,
        T::zero(),
        &mut out,
        n as isize,
        1,
    );
    Tensor::new(&[m, n], out)
}

/// Geometry of a 2-d convolution with square kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_size(&self, input: usize, kernel: usize) -> usize {
        (input + 2 * self.pad - kernel) / self.stride + 1
    }
}

/// Upper bound on im2col buffer elements; larger batches are processed in chunks.
const COLS_BUDGET: usize = 1 << 16;

fn chunk_len(per_sample: usize, n: usize) -> usize {
    (COLS_BUDGET / per_sample.max(1)).clamp(1, n.max(1))
}

struct ConvDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    ho: usize,
    wo: usize,
}

impl ConvDims {
    fn ckk(&self) -> usize {
        self.c * self.k * self.k
    }
    fn hw_out(&self) -> usize {
        self.ho * self.wo
    }
}

/// Output columns `[lo, hi)` whose tap `kj` lands inside a row of width `w`.
fn valid_cols(wo: usize, w: usize, kj: usize, g: ConvGeom) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).div_ceil(g.stride).min(wo);
    let hi = if w + g.pad > kj {
        (w + g.pad - kj).div_ceil(g.stride).min(wo)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn im2col<T: Float>(x: &[T], d: &ConvDims, g: ConvGeom, n0: usize, nb: usize, cols: &mut [T]) {
    let width = nb * d.hw_out();
    let h = d.h as isize;
    for c in 0..d.c {
        for ki in 0..d.k {
            for kj in 0..d.k {
                let row = (c * d.k + ki) * d.k + kj;
                let dst = &mut cols[row * width..(row + 1) * width];
                let (lo, hi) = valid_cols(d.wo, d.w, kj, g);
                for nn in 0..nb {
                    let plane = &x[((n0 + nn) * d.c + c) * d.h * d.w..][..d.h * d.w];
                    let base = nn * d.hw_out();
                    for oh in 0..d.ho {
                        let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                        let drow = &mut dst[base + oh * d.wo..base + (oh + 1) * d.wo];
                        if ih < 0 || ih >= h {
                            drow.fill(T::zero());
                            continue;
                        }
                        let src = &plane[ih as usize * d.w..(ih as usize + 1) * d.w];
                        drow[..lo].fill(T::zero());
                        drow[hi..].fill(T::zero());
                        if lo == hi {
                            continue;
                        }
                        let first = lo * g.stride + kj - g.pad;
                        if g.stride == 1 {
                            drow[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                        } else {
                            for (i, v) in drow[lo..hi].iter_mut().enumerate() {
                                *v = src[first + i * g.stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Float>(cols: &[T], d: &ConvDims, g: ConvGeom, n0: usize, nb: usize, x: &mut [T]) {
    let width = nb * d.hw_out();
    let h = d.h as isize;
    for c in 0..d.c {
        for ki in 0..d.k {
            for kj in 0..d.k {
                let row = (c * d.k + ki) * d.k + kj;
                let src = &cols[row * width..(row + 1) * width];
                let (lo, hi) = valid_cols(d.wo, d.w, kj, g);
                if lo == hi {
                    continue;
                }
                let first = lo * g.stride + kj - g.pad;
                for nn in 0..nb {
                    let plane = &mut x[((n0 + nn) * d.c + c) * d.h * d.w..][..d.h * d.w];
                    let base = nn * d.hw_out();
                    for oh in 0..d.ho {
                        let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                        if ih < 0 || ih >= h {
                            continue;
                        }
                        let srow = &src[base + oh * d.wo + lo..base + oh * d.wo + hi];
                        let drow = &mut plane[ih as usize * d.w..(ih as usize + 1) * d.w];
                        if g.stride == 1 {
                            for (o, &v) in drow[first..first + hi - lo].iter_mut().zip(srow) {
                                *o += v;
                            }
                        } else {
                            for (i, &v) in srow.iter().enumerate() {
                                drow[first + i * g.stride] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_dims(x_shape: &[usize], w_shape: &[usize], g: ConvGeom) -> ConvDims {
    assert_eq!(x_shape.len(), 4, "conv input must be NCHW");
    assert_eq!(w_shape.len(), 4, "conv weight must be OCKK");
    assert_eq!(w_shape[2], w_shape[3], "square kernels only");
    assert_eq!(x_shape[1], w_shape[1], "conv channel mismatch");
    let k = w_shape[2];
    ConvDims {
        n: x_shape[0],
        c: x_shape[1],
        h: x_shape[2],
        w: x_shape[3],
        o: w_shape[0],
        k,
        ho: g.out_size(x_shape[2], k),
        wo: g.out_size(x_shape[3], k),
    }
}

/// Cross-correlation `y[n,o] = sum_c w[o,c] * x[n,c]`.
pub fn conv2d<T: Float>(x: &Tensor<T>, w: &Tensor<T>, g: ConvGeom) -> Tensor<T> {
    let d = conv_dims(x.shape(), w.shape(), g);
    let hw = d.hw_out();
    let mut y = vec![T::zero(); d.n * d.o * hw];
    let chunk = chunk_len(d.ckk() * hw, d.n);
    let mut cols = vec![T::zero(); d.ckk() * chunk * hw];
    let mut tmp = vec![T::zero(); d.o * chunk * hw];
    let mut n0 = 0;
    while n0 < d.n {
        let nb = chunk.min(d.n - n0);
        let width = nb * hw;
        im2col(x.data(), &d, g, n0, nb, &mut cols);
        T::gemm(
            d.o,
            d.ckk(),
            width,
            T::one(),
            w.data(),
            d.ckk() as isize,
            1,
            &cols,
            width as isize,
            1,
            T::zero(),
            &mut tmp,
            width as isize,
            1,
        );
        for nn in 0..nb {
            for o in 0..d.o {
                let dst = &mut y[((n0 + nn) * d.o + o) * hw..][..hw];
                dst.copy_from_slice(&tmp[o * width + nn * hw..][..hw]);
            }
        }
        n0 += nb;
    }
    Tensor::new(&[d.n, d.o, d.ho, d.wo], y)
}

/// Gradient of `conv2d` with respect to its input, given the output gradient.
pub fn conv2d_input_grad<T: Float>(
    gy: &Tensor<T>,
    w: &Tensor<T>,
    g: ConvGeom,
    input_hw: (usize, usize),
) -> Tensor<T> {
    let ws = w.shape();
    let x_shape = [gy.shape()[0], ws[1], input_hw.0, input_hw.1];
    let d = conv_dims(&x_shape, ws, g);
    assert_eq!(gy.shape(), &[d.n, d.o, d.ho, d.wo], "conv input-grad shape mismatch");
    let hw = d.hw_out();
    let mut dx = vec![T::zero(); numel(&x_shape)];
    let chunk = chunk_len(d.ckk() * hw, d.n);
    let mut cols = vec![T::zero(); d.ckk() * chunk * hw];
    let mut gperm = vec![T::zero(); d.o * chunk * hw];
    let mut n0 = 0;
    while n0 < d.n {
        let nb = chunk.min(d.n - n0);
        let width = nb * hw;
        for nn in 0..nb {
            for o in 0..d.o {
                gperm[o * width + nn * hw..][..hw]
                    .copy_from_slice(&gy.data()[((n0 + nn) * d.o + o) * hw..][..hw]);
            }
        }
        T::gemm(
            d.ckk(),
            d.o,
            width,
            T::one(),
            w.data(),
            1,
            d.ckk() as isize,
            &gperm,
            width as isize,
            1,
            T::zero(),
            &mut cols,
            width as isize,
            1,
        );
        col2im(&cols, &d, g, n0, nb, &mut dx);
        n0 += nb;
    }
    Tensor::new(&x_shape, dx)
}

/// Gradient of `conv2d` with respect to its weight.
pub fn conv2d_weight_grad<T: Float>(
    x: &Tensor<T>,
    gy: &Tensor<T>,
    g: ConvGeom,
    kernel: usize,
) -> Tensor<T> {
    let o = gy.shape()[1];
    let w_shape = [o, x.shape()[1], kernel, kernel];
    let d = conv_dims(x.shape(), &w_shape, g);
    assert_eq!(gy.shape(), &[d.n, d.o, d.ho, d.wo], "conv weight-grad shape mismatch");
    let hw = d.hw_out();
    let mut dw = vec![T::zero(); numel(&w_shape)];
    let chunk = chunk_len(d.ckk() * hw, d.n);
    let mut cols = vec![T::zero(); d.ckk() * chunk * hw];
    let mut gperm = vec![T::zero(); d.o * chunk * hw];
    let mut n0 = 0;
    while n0 < d.n {
        let nb = chunk.min(d.n - n0);
        let width = nb * hw;
        im2col(x.data(), &d, g, n0, nb, &mut cols);
        for nn in 0..nb {
            for oc in 0..d.o {
                gperm[oc * width + nn * hw..][..hw]
                    .copy_from_slice(&gy.data()[((n0 + nn) * d.o + oc) * hw..][..hw]);
            }
        }
        T::gemm(
            d.o,
            width,
            d.ckk(),
            T::one(),
            &gperm,
            width as isize,
            1,
            &cols,
            1,
            width as isize,
            T::one(),
            &mut dw,
            d.ckk() as isize,
            1,
        );
        n0 += nb;
    }
    Tensor::new(&w_shape, dw)
}

/// Separable linear resampling of the two trailing axes. Each output row
/// (column) is a sparse weighted sum of input rows (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePlan {
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
    rows: Vec<Vec<(usize, f64)>>,
    cols: Vec<Vec<(usize, f64)>>,
}

fn transpose_taps(taps: &[Vec<(usize, f64)>], in_len: usize) -> Vec<Vec<(usize, f64)>> {
    let mut out = vec![Vec::new(); in_len];
    for (o, list) in taps.iter().enumerate() {
        for &(i, wgt) in list {
            out[i].push((o, wgt));
        }
    }
    out
}

/// Taps of factor-2 bilinear upsampling with half-pixel centers and edge clamping.
fn bilinear_up2_taps(len: usize) -> Vec<Vec<(usize, f64)>> {
    (0..2 * len)
        .map(|o| {
            let src = (o as f64 + 0.5) / 2.0 - 0.5;
            let src = src.max(0.0);
            let i0 = src.floor() as usize;
            let frac = src - i0 as f64;
            let i1 = (i0 + 1).min(len - 1);
            if frac == 0.0 || i1 == i0 {
                vec![(i0.min(len - 1), 1.0)]
            } else {
                vec![(i0, 1.0 - frac), (i1, frac)]
            }
        })
        .collect()
}

fn avg2_taps(len: usize) -> Vec<Vec<(usize, f64)>> {
    (0..len / 2)
        .map(|o| vec![(2 * o, 0.5), (2 * o + 1, 0.5)])
        .collect()
}

impl ResamplePlan {
    /// Factor-2 bilinear upsampling (half-pixel centers).
    pub fn upsample2(h: usize, w: usize) -> Self {
        Self {
            in_hw: (h, w),
            out_hw: (2 * h, 2 * w),
            rows: bilinear_up2_taps(h),
            cols: bilinear_up2_taps(w),
        }
    }

    /// Factor-2 reduction; identical to half-pixel bilinear downsampling by 2.
    pub fn avg_pool2(h: usize, w: usize) -> Self {
        assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even sizes");
        Self {
            in_hw: (h, w),
            out_hw: (h / 2, w / 2),
            rows: avg2_taps(h),
            cols: avg2_taps(w),
        }
    }

    pub fn transposed(&self) -> Self {
        Self {
            in_hw: self.out_hw,
            out_hw: self.in_hw,
            rows: transpose_taps(&self.rows, self.in_hw.0),
            cols: transpose_taps(&self.cols, self.in_hw.1),
        }
    }

    /// Applies the plan to a plain row-major `h x w` plane.
    pub fn apply_plane(&self, src: &[f64], dst: &mut [f64]) {
        let (h, w) = self.in_hw;
        let (oh, ow) = self.out_hw;
        let mut tmp = vec![0.0; h * ow];
        for r in 0..h {
            for (c, taps) in self.cols.iter().enumerate() {
                tmp[r * ow + c] = taps.iter().map(|&(i, wt)| wt * src[r * w + i]).sum();
            }
        }
        for (r, taps) in self.rows.iter().enumerate() {
            for c in 0..ow {
                dst[r * ow + c] = taps.iter().map(|&(i, wt)| wt * tmp[i * ow + c]).sum();
            }
        }
        debug_assert_eq!(dst.len(), oh * ow);
    }
}

pub fn resample<T: Float>(x: &Tensor<T>, plan: &ResamplePlan) -> Tensor<T> {
    let s = x.shape();
    let r = s.len();
    assert!(r >= 2, "resample needs at least 2 axes");
    assert_eq!((s[r - 2], s[r - 1]), plan.in_hw, "resample input size mismatch");
    let (h, w) = plan.in_hw;
    let (oh, ow) = plan.out_hw;
    let planes = numel(&s[..r - 2]);
    let rows: Vec<Vec<(usize, T)>> = plan
        .rows
        .iter()
        .map(|t| t.iter().map(|&(i, v)| (i, T::of(v))).collect())
        .collect();
    let cols: Vec<Vec<(usize, T)>> = plan
        .cols
        .iter()
        .map(|t| t.iter().map(|&(i, v)| (i, T::of(v))).collect())
        .collect();
    let mut out = vec![T::zero(); planes * oh * ow];
    let mut tmp = vec![T::zero(); h * ow];
    let xd = x.data();
    for p in 0..planes {
        let src = &xd[p * h * w..(p + 1) * h * w];
        for rr in 0..h {
            let srow = &src[rr * w..(rr + 1) * w];
            for (c, taps) in cols.iter().enumerate() {
                let mut acc = T::zero();
                for &(i, wt) in taps {
                    acc += wt * srow[i];
                }
                tmp[rr * ow + c] = acc;
            }
        }
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for (rr, taps) in rows.iter().enumerate() {
            let drow = &mut dst[rr * ow..(rr + 1) * ow];
            for &(i, wt) in taps {
                let trow = &tmp[i * ow..(i + 1) * ow];
                for (d, &t) in drow.iter_mut().zip(trow) {
                    *d += wt * t;
                }
            }
        }
    }
    let mut shape = s[..r - 2].to_vec();
    shape.extend_from_slice(&[oh, ow]);
    Tensor::new(&shape, out)
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}

pub fn narrow<T: Float>(x: &Tensor<T>, axis: usize, start: usize, len: usize) -> Tensor<T> {
    let (outer, n, inner) = split_axis(x.shape(), axis);
    assert!(start + len <= n, "narrow out of range");
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        data.extend_from_slice(&x.data()[(o * n + start) * inner..(o * n + start + len) * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = len;
    Tensor::new(&shape, data)
}

/// Embeds `x` into a zero tensor whose `axis` has length `total`, at offset `start`.
pub fn pad_axis<T: Float>(x: &Tensor<T>, axis: usize, start: usize, total: usize) -> Tensor<T> {
    let (outer, n, inner) = split_axis(x.shape(), axis);
    assert!(start + n <= total, "pad_axis out of range");
    let mut data = vec![T::zero(); outer * total * inner];
    for o in 0..outer {
        data[(o * total + start) * inner..(o * total + start + n) * inner]
            .copy_from_slice(&x.data()[o * n * inner..(o + 1) * n * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = total;
    Tensor::new(&shape, data)
}

pub fn concat<T: Float>(xs: &[&Tensor<T>], axis: usize) -> Tensor<T> {
    assert!(!xs.is_empty(), "concat of nothing");
    let first = xs[0].shape();
    let total: usize = xs.iter().map(|t| t.shape()[axis]).sum();
    for t in xs {
        assert_eq!(t.ndim(), first.len(), "concat rank mismatch");
        for (i, (&a, &b)) in t.shape().iter().zip(first).enumerate() {
            assert!(i == axis || a == b, "concat shape mismatch on axis {i}");
        }
    }
    let (outer, _, inner) = split_axis(first, axis);
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for t in xs {
            let n = t.shape()[axis];
            data.extend_from_slice(&t.data()[o * n * inner..(o + 1) * n * inner]);
        }
    }
    let mut shape = first.to_vec();
    shape[axis] = total;
    Tensor::new(&shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, g: ConvGeom) -> Tensor<f64> {
        let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (o, k) = (w.shape()[0], w.shape()[2]);
        let (ho, wo) = (g.out_size(h, k), g.out_size(wd, k));
        let mut y = vec![0.0; n * o * ho * wo];
        for nn in 0..n {
            for oc in 0..o {
                for i in 0..ho {
                    for j in 0..wo {
                        let mut acc = 0.0;
                        for cc in 0..c {
                            for a in 0..k {
                                for b in 0..k {
                                    let ih = (i * g.stride + a) as isize - g.pad as isize;
                                    let iw = (j * g.stride + b) as isize - g.pad as isize;
                                    if ih >= 0 && iw >= 0 && (ih as usize) < h && (iw as usize) < wd {
                                        acc += w.data()[((oc * c + cc) * k + a) * k + b]
                                            * x.data()[((nn * c + cc) * h + ih as usize) * wd + iw as usize];
                                    }
                                }
                            }
                        }
                        y[((nn * o + oc) * ho + i) * wo + j] = acc;
                    }
                }
            }
        }
        Tensor::new(&[n, o, ho, wo], y)
    }

    fn ramp(shape: &[usize], seed: f64) -> Tensor<f64> {
        let n = numel(shape);
        Tensor::new(shape, (0..n).map(|i| (i as f64 * 0.37 + seed).sin()).collect())
    }

    #[test]
    fn conv_matches_naive() {
        for g in [ConvGeom { stride: 1, pad: 1 }, ConvGeom { stride: 2, pad: 1 }] {
            let x = ramp(&[2, 3, 6, 6], 0.1);
            let w = ramp(&[4, 3, 3, 3], 0.7);
            let y = conv2d(&x, &w, g);
            assert!(y.max_abs_diff(&naive_conv(&x, &w, g)) < 1e-12);
        }
    }

    #[test]
    fn conv_grads_are_adjoint() {
        // <conv(x, w), gy> == <x, input_grad(gy, w)> == <w, weight_grad(x, gy)>
        let g = ConvGeom { stride: 2, pad: 1 };
        let x = ramp(&[2, 3, 7, 7], 0.3);
        let w = ramp(&[4, 3, 3, 3], 1.1);
        let y = conv2d(&x, &w, g);
        let gy = ramp(y.shape(), 2.0);
        let lhs: f64 = y.data().iter().zip(gy.data()).map(|(a, b)| a * b).sum();
        let gx = conv2d_input_grad(&gy, &w, g, (7, 7));
        let gw = conv2d_weight_grad(&x, &gy, g, 3);
        let via_x: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
        let via_w: f64 = w.data().iter().zip(gw.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - via_x).abs() < 1e-10);
        assert!((lhs - via_w).abs() < 1e-10);
    }

    #[test]
    fn resample_transpose_is_adjoint() {
        let plan = ResamplePlan::upsample2(4, 5);
        let x = ramp(&[2, 4, 5], 0.0);
        let y = resample(&x, &plan);
        let gy = ramp(y.shape(), 1.0);
        let gx = resample(&gy, &plan.transposed());
        let a: f64 = y.data().iter().zip(gy.data()).map(|(a, b)| a * b).sum();
        let b: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn upsample_preserves_constants_and_pool_averages() {
        let x = Tensor::<f64>::full(&[1, 3, 3], 2.5);
        let y = resample(&x, &ResamplePlan::upsample2(3, 3));
        assert!(y.data().iter().all(|&v| (v - 2.5).abs() < 1e-15));
        let block = Tensor::<f64>::new(&[2, 2], vec![0.0, 2.0, 2.0, 4.0]);
        let p = resample(&block, &ResamplePlan::avg_pool2(2, 2));
        assert_eq!(p.data(), &[2.0]);
    }

    #[test]
    fn broadcast_and_sum_to() {
        let a = ramp(&[2, 3, 4], 0.0);
        let b = ramp(&[3, 1], 1.0);
        let c = binary(&a, &b, |x, y| x + y);
        assert_eq!(c.shape(), &[2, 3, 4]);
        assert!((c.data()[5] - (a.data()[5] + b.data()[1])).abs() < 1e-15);
        let s = sum_to(&c, &[3, 1]);
        let mut expect = [0.0; 3];
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    expect[j] += c.data()[(i * 3 + j) * 4 + k];
                }
            }
        }
        for j in 0..3 {
            assert!((s.data()[j] - expect[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn narrow_pad_concat() {
        let a = ramp(&[2, 3, 2], 0.0);
        let b = ramp(&[2, 1, 2], 5.0);
        let c = concat(&[&a, &b], 1);
        assert_eq!(c.shape(), &[2, 4, 2]);
        assert_eq!(narrow(&c, 1, 3, 1), b);
        let p = pad_axis(&b, 1, 3, 4);
        assert_eq!(narrow(&p, 1, 3, 1), b);
        assert_eq!(narrow(&p, 1, 0, 3).sum(), 0.0);
    }
}
