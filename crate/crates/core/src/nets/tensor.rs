//! Dense NCHW `f32` tensors and the numeric kernels behind the autograd ops.

use crate::error::{Error, Result};
use crate::raster::RasterImage;

pub type Shape = [usize; 4];

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        Self { shape, data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: f32) -> Self {
        Self { shape: [1, 1, 1, 1], data: vec![value] }
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f32 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
        assert_eq!(self.shape, other.shape, "elementwise shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Tensor { shape: self.shape, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sample `n` as a `[1, C, H, W]` tensor.
    pub fn sample(&self, n: usize) -> Tensor {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        Tensor {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    /// Stacks `[1, C, H, W]` tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or_else(|| Error::invalid("cannot stack zero tensors"))?;
        let [_, c, h, w] = first.shape;
        let mut data = Vec::with_capacity(items.len() * c * h * w);
        for t in items {
            if t.shape != [1, c, h, w] {
                return Err(Error::invalid(format!("cannot stack {:?} onto {:?}", t.shape, first.shape)));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor { shape: [items.len(), c, h, w], data })
    }
}

impl Tensor {
    /// A `[1, C, H, W]` tensor holding the image's planes.
    pub fn from_raster(img: &RasterImage) -> Tensor {
        let (w, h) = img.dims();
        let c = img.channels();
        let mut data = vec![0.0; c * h * w];
        for (i, px) in img.data().chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                data[ch * h * w + i] = v;
            }
        }
        Tensor { shape: [1, c, h, w], data }
    }

    /// Sample `n` as an interleaved image, values clamped into `[0, 1]`.
    pub fn to_raster(&self, n: usize) -> Result<RasterImage> {
        let [_, c, h, w] = self.shape;
        if c != 1 && c != 3 {
            return Err(Error::invalid(format!("cannot view {c} channels as an image")));
        }
        let src = &self.data[n * c * h * w..(n + 1) * c * h * w];
        let mut data = vec![0.0; c * h * w];
        for ch in 0..c {
            for i in 0..h * w {
                data[i * c + ch] = src[ch * h * w + i];
            }
        }
        Ok(RasterImage::from_raw_clamped(w, h, c, data))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_len(&self, len: usize, kernel: usize) -> usize {
        (len + 2 * self.pad - kernel) / self.stride + 1
    }
}

/// Output positions `o` in `0..out_len` whose input index `o * s + off - p`
/// falls inside `0..in_len`, as a half-open range.
fn valid_range(in_len: usize, out_len: usize, off: usize, s: usize, p: usize) -> (usize, usize) {
    let lo = p.saturating_sub(off).div_ceil(s);
    let hi = if in_len + p > off { (in_len + p - off - 1) / s + 1 } else { 0 };
    (lo.min(out_len), hi.min(out_len).max(lo.min(out_len)))
}

fn im2col(x: &[f32], c: usize, h: usize, w: usize, k: usize, geom: ConvGeom, cols: &mut [f32]) {
    let (ho, wo) = (geom.out_len(h, k), geom.out_len(w, k));
    let (s, p) = (geom.stride, geom.pad);
    let plane = ho * wo;
    for ci in 0..c {
        let xc = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            let (ylo, yhi) = valid_range(h, ho, ky, s, p);
            for kx in 0..k {
                let (xlo, xhi) = valid_range(w, wo, kx, s, p);
                let row = &mut cols[((ci * k + ky) * k + kx) * plane..][..plane];
                row[..ylo * wo].fill(0.0);
                row[yhi * wo..].fill(0.0);
                for oy in ylo..yhi {
                    let src = &xc[(oy * s + ky - p) * w..][..w];
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    dst[..xlo].fill(0.0);
                    dst[xhi..].fill(0.0);
                    if xlo == xhi {
                        continue;
                    }
                    let start = xlo * s + kx - p;
                    if s == 1 {
                        dst[xlo..xhi].copy_from_slice(&src[start..start + (xhi - xlo)]);
                    } else {
                        for (d, v) in dst[xlo..xhi].iter_mut().zip(src[start..].iter().step_by(s)) {
                            *d = *v;
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], c: usize, h: usize, w: usize, k: usize, geom: ConvGeom, x: &mut [f32]) {
    let (ho, wo) = (geom.out_len(h, k), geom.out_len(w, k));
    let (s, p) = (geom.stride, geom.pad);
    let plane = ho * wo;
    for ci in 0..c {
        let xc = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            let (ylo, yhi) = valid_range(h, ho, ky, s, p);
            for kx in 0..k {
                let (xlo, xhi) = valid_range(w, wo, kx, s, p);
                if xlo == xhi {
                    continue;
                }
                let row = &cols[((ci * k + ky) * k + kx) * plane..][..plane];
                for oy in ylo..yhi {
                    let dst = &mut xc[(oy * s + ky - p) * w..][..w];
                    let src = &row[oy * wo + xlo..oy * wo + xhi];
                    let start = xlo * s + kx - p;
                    if s == 1 {
                        for (d, v) in dst[start..start + src.len()].iter_mut().zip(src) {
                            *d += v;
                        }
                    } else {
                        for (d, v) in dst[start..].iter_mut().step_by(s).zip(src) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

/// `C = alpha * A * B + beta * C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
) {
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Cross-correlation of `x: [N, Cin, H, W]` with `w: [Cout, Cin, k, k]`, zero padding.
pub fn conv2d(x: &Tensor, w: &Tensor, geom: ConvGeom) -> Tensor {
    let [n, cin, h, wd] = x.shape;
    let [cout, wcin, k, k2] = w.shape;
    assert!(wcin == cin && k == k2, "conv2d: input {:?} vs weight {:?}", x.shape, w.shape);
    let (ho, wo) = (geom.out_len(h, k), geom.out_len(wd, k));
    let kk = cin * k * k;
    let mut cols = vec![0.0; kk * ho * wo];
    let mut out = Tensor::zeros([n, cout, ho, wo]);
    for b in 0..n {
        im2col(&x.data[b * cin * h * wd..(b + 1) * cin * h * wd], cin, h, wd, k, geom, &mut cols);
        let dst = &mut out.data[b * cout * ho * wo..(b + 1) * cout * ho * wo];
        gemm(cout, kk, ho * wo, &w.data, (kk, 1), &cols, (ho * wo, 1), 0.0, dst);
    }
    out
}

/// Adjoint of [`conv2d`] with respect to its input.
pub fn conv2d_input_grad(g: &Tensor, w: &Tensor, geom: ConvGeom, in_hw: (usize, usize)) -> Tensor {
    let [n, cout, ho, wo] = g.shape;
    let [wcout, cin, k, _] = w.shape;
    assert_eq!(wcout, cout, "conv2d_input_grad: gradient {:?} vs weight {:?}", g.shape, w.shape);
    let (h, wd) = in_hw;
    assert_eq!((geom.out_len(h, k), geom.out_len(wd, k)), (ho, wo));
    let kk = cin * k * k;
    let mut cols = vec![0.0; kk * ho * wo];
    let mut out = Tensor::zeros([n, cin, h, wd]);
    for b in 0..n {
        let gb = &g.data[b * cout * ho * wo..(b + 1) * cout * ho * wo];
        gemm(kk, cout, ho * wo, &w.data, (1, kk), gb, (ho * wo, 1), 0.0, &mut cols);
        col2im(&cols, cin, h, wd, k, geom, &mut out.data[b * cin * h * wd..(b + 1) * cin * h * wd]);
    }
    out
}

/// Adjoint of [`conv2d`] with respect to its weight, summed over the batch.
pub fn conv2d_weight_grad(x: &Tensor, g: &Tensor, geom: ConvGeom, kernel: usize) -> Tensor {
    let [n, cin, h, wd] = x.shape;
    let [gn, cout, ho, wo] = g.shape;
    assert_eq!(gn, n, "conv2d_weight_grad: batch mismatch");
    assert_eq!((geom.out_len(h, kernel), geom.out_len(wd, kernel)), (ho, wo));
    let kk = cin * kernel * kernel;
    let mut cols = vec![0.0; kk * ho * wo];
    let mut out = Tensor::zeros([cout, cin, kernel, kernel]);
    for b in 0..n {
        im2col(&x.data[b * cin * h * wd..(b + 1) * cin * h * wd], cin, h, wd, kernel, geom, &mut cols);
        let gb = &g.data[b * cout * ho * wo..(b + 1) * cout * ho * wo];
        let beta = if b == 0 { 0.0 } else { 1.0 };
        gemm(cout, ho * wo, kk, gb, (ho * wo, 1), &cols, (1, ho * wo), beta, &mut out.data);
    }
    out
}

/// Output shape after summing away every axis whose `keep` flag is false.
pub fn reduced_shape(shape: Shape, keep: [bool; 4]) -> Shape {
    let mut out = shape;
    for d in 0..4 {
        if !keep[d] {
            out[d] = 1;
        }
    }
    out
}

fn strides(shape: Shape) -> [usize; 4] {
    [shape[1] * shape[2] * shape[3], shape[2] * shape[3], shape[3], 1]
}

pub fn sum_to(x: &Tensor, keep: [bool; 4]) -> Tensor {
    let out_shape = reduced_shape(x.shape, keep);
    let os = strides(out_shape);
    let mut acc = vec![0.0f64; out_shape.iter().product()];
    let [n, c, h, w] = x.shape;
    let mut i = 0;
    for a in 0..n {
        let oa = if keep[0] { a * os[0] } else { 0 };
        for b in 0..c {
            let ob = oa + if keep[1] { b * os[1] } else { 0 };
            for y in 0..h {
                let oy = ob + if keep[2] { y * os[2] } else { 0 };
                for xx in 0..w {
                    acc[oy + if keep[3] { xx } else { 0 }] += x.data[i] as f64;
                    i += 1;
                }
            }
        }
    }
    Tensor { shape: out_shape, data: acc.into_iter().map(|v| v as f32).collect() }
}

/// Expands size-1 axes of `x` to `shape`.
pub fn broadcast(x: &Tensor, shape: Shape) -> Tensor {
    for d in 0..4 {
        assert!(
            x.shape[d] == shape[d] || x.shape[d] == 1,
            "cannot broadcast {:?} to {shape:?}",
            x.shape
        );
    }
    let xs = strides(x.shape);
    let keep = [x.shape[0] != 1, x.shape[1] != 1, x.shape[2] != 1, x.shape[3] != 1];
    let mut data = Vec::with_capacity(shape.iter().product());
    for a in 0..shape[0] {
        let ia = if keep[0] { a * xs[0] } else { 0 };
        for b in 0..shape[1] {
            let ib = ia + if keep[1] { b * xs[1] } else { 0 };
            for y in 0..shape[2] {
                let iy = ib + if keep[2] { y * xs[2] } else { 0 };
                if keep[3] {
                    data.extend_from_slice(&x.data[iy..iy + shape[3]]);
                } else {
                    data.extend(std::iter::repeat(x.data[iy]).take(shape[3]));
                }
            }
        }
    }
    Tensor { shape, data }
}

pub fn upsample2(x: &Tensor) -> Tensor {
    let [n, c, h, w] = x.shape;
    let mut data = Vec::with_capacity(n * c * h * w * 4);
    for plane in x.data.chunks_exact(h * w) {
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for _ in 0..2 {
                for &v in row {
                    data.push(v);
                    data.push(v);
                }
            }
        }
    }
    Tensor { shape: [n, c, 2 * h, 2 * w], data }
}

pub fn sum_pool2(x: &Tensor) -> Tensor {
    let [n, c, h, w] = x.shape;
    assert!(h % 2 == 0 && w % 2 == 0, "sum_pool2 needs even sides, got {:?}", x.shape);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for (src, dst) in x.data.chunks_exact(h * w).zip(out.data.chunks_exact_mut(oh * ow)) {
        for y in 0..h {
            for xx in 0..w {
                dst[(y / 2) * ow + xx / 2] += src[y * w + xx];
            }
        }
    }
    out
}

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    let [n, ca, h, w] = a.shape;
    let [nb, cb, hb, wb] = b.shape;
    assert!(n == nb && h == hb && w == wb, "concat {:?} with {:?}", a.shape, b.shape);
    let (pa, pb) = (ca * h * w, cb * h * w);
    let mut data = Vec::with_capacity(n * (pa + pb));
    for i in 0..n {
        data.extend_from_slice(&a.data[i * pa..(i + 1) * pa]);
        data.extend_from_slice(&b.data[i * pb..(i + 1) * pb]);
    }
    Tensor { shape: [n, ca + cb, h, w], data }
}

pub fn slice_channels(x: &Tensor, start: usize, len: usize) -> Tensor {
    let [n, c, h, w] = x.shape;
    assert!(start + len <= c);
    let plane = h * w;
    let mut data = Vec::with_capacity(n * len * plane);
    for i in 0..n {
        let base = (i * c + start) * plane;
        data.extend_from_slice(&x.data[base..base + len * plane]);
    }
    Tensor { shape: [n, len, h, w], data }
}

pub fn pad_channels(x: &Tensor, before: usize, after: usize) -> Tensor {
    let [n, c, h, w] = x.shape;
    let plane = h * w;
    let total = before + c + after;
    let mut out = Tensor::zeros([n, total, h, w]);
    for i in 0..n {
        out.data[(i * total + before) * plane..(i * total + before + c) * plane]
            .copy_from_slice(&x.data[i * c * plane..(i + 1) * c * plane]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn naive_conv(x: &Tensor, w: &Tensor, geom: ConvGeom) -> Tensor {
        let [n, cin, h, wd] = x.shape();
        let [cout, _, k, _] = w.shape();
        let (ho, wo) = (geom.out_len(h, k), geom.out_len(wd, k));
        let mut out = Tensor::zeros([n, cout, ho, wo]);
        for b in 0..n {
            for co in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0f64;
                        for ci in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * geom.stride + ky) as isize - geom.pad as isize;
                                    let ix = (ox * geom.stride + kx) as isize - geom.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    let xv = x.data()[((b * cin + ci) * h + iy as usize) * wd + ix as usize];
                                    let wv = w.data()[((co * cin + ci) * k + ky) * k + kx];
                                    acc += (xv * wv) as f64;
                                }
                            }
                        }
                        out.data_mut()[((b * cout + co) * ho + oy) * wo + ox] = acc as f32;
                    }
                }
            }
        }
        out
    }

    fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data()).map(|(&x, &y)| x as f64 * y as f64).sum()
    }

    #[test]
    fn conv_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (k, stride, pad) in [(3, 1, 1), (3, 2, 1), (4, 2, 1), (1, 1, 0)] {
            let x = random([2, 3, 9, 8], &mut rng);
            let w = random([4, 3, k, k], &mut rng);
            let geom = ConvGeom { stride, pad };
            let fast = conv2d(&x, &w, geom);
            let slow = naive_conv(&x, &w, geom);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn conv_adjoints() {
        // <g, conv(x, w)> = <conv_input_grad(g, w), x> = <conv_weight_grad(x, g), w>
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (k, stride, pad) in [(3, 1, 1), (4, 2, 1), (3, 2, 1)] {
            let geom = ConvGeom { stride, pad };
            let x = random([2, 3, 10, 7], &mut rng);
            let w = random([5, 3, k, k], &mut rng);
            let y = conv2d(&x, &w, geom);
            let g = random(y.shape(), &mut rng);
            let lhs = dot(&g, &y);
            let via_x = dot(&conv2d_input_grad(&g, &w, geom, (10, 7)), &x);
            let via_w = dot(&conv2d_weight_grad(&x, &g, geom, k), &w);
            assert!((lhs - via_x).abs() < 1e-3 * lhs.abs().max(1.0));
            assert!((lhs - via_w).abs() < 1e-3 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn reductions_and_broadcast_are_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random([2, 3, 4, 5], &mut rng);
        for keep in [[true, true, false, false], [false, true, false, false], [true, false, false, false], [false; 4]] {
            let s = sum_to(&x, keep);
            let u = random(s.shape(), &mut rng);
            let lhs = dot(&s, &u);
            let rhs = dot(&x, &broadcast(&u, x.shape()));
            assert!((lhs - rhs).abs() < 1e-4);
        }
        let up = upsample2(&x);
        let v = random(up.shape(), &mut rng);
        assert!((dot(&up, &v) - dot(&x, &sum_pool2(&v))).abs() < 1e-4);
    }

    #[test]
    fn raster_round_trip() {
        let img = RasterImage::from_fn(5, 3, 3, |x, y, c| (x + 2 * y + 7 * c) as f32 / 40.0).unwrap();
        let t = Tensor::from_raster(&img);
        assert_eq!(t.shape(), [1, 3, 3, 5]);
        assert_eq!(t.data()[2 * 15 + 5 + 1], img.get(1, 1, 2));
        assert_eq!(t.to_raster(0).unwrap(), img);
    }

    #[test]
    fn channel_concat_and_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random([2, 2, 3, 3], &mut rng);
        let b = random([2, 1, 3, 3], &mut rng);
        let c = concat_channels(&a, &b);
        assert_eq!(slice_channels(&c, 0, 2), a);
        assert_eq!(slice_channels(&c, 2, 1), b);
        let p = pad_channels(&b, 2, 0);
        assert_eq!(slice_channels(&p, 2, 1), b);
        assert!(slice_channels(&p, 0, 2).data().iter().all(|&v| v == 0.0));
    }
}
