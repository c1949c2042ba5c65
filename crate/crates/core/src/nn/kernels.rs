//! Forward and backward numeric kernels on `[C, H, W]` feature maps.
//!
//! Every kernel here is a pure function of its inputs; the graph in
//! [`super::graph`] decides what to keep around for the backward pass.

use crate::error::{Error, Result};
use crate::tensor::{ensure_same_shape, Tensor};

/// Variance floor inside instance normalization.
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Bounds-checked wrapper over `matrixmultiply::dgemm`:
/// `C <- alpha * A(m x k) * B(k x n) + beta * C(m x n)` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| {
        (rows.saturating_sub(1)) * rs + (cols.saturating_sub(1)) * cs
    };
    assert!(k == 0 || last(m, k, rsa, csa) < a.len(), "gemm: A out of bounds");
    assert!(k == 0 || last(k, n, rsb, csb) < b.len(), "gemm: B out of bounds");
    assert!(last(m, n, rsc, csc) < c.len(), "gemm: C out of bounds");
    // SAFETY: every element addressed by the strides lies inside the slices
    // (checked above), and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Stride/dilation of a square, odd-sized convolution with "same" zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
}

impl ConvGeometry {
    pub fn new(kernel: usize, stride: usize, dilation: usize) -> Result<Self> {
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("kernel size must be odd, got {kernel}")));
        }
        if stride == 0 || dilation == 0 {
            return Err(Error::InvalidInput("stride and dilation must be >= 1".into()));
        }
        Ok(Self { kernel, stride, dilation })
    }

    pub fn padding(&self) -> usize {
        self.dilation * (self.kernel - 1) / 2
    }

    pub fn output_len(&self, n: usize) -> usize {
        (n - 1) / self.stride + 1
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }

    /// Range of output indices whose tap at offset `off` lands inside `[0, n)`.
    fn valid_range(&self, off: isize, n: usize, n_out: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
        let hi = if (n as isize - 1 - off) < 0 { -1 } else { (n as isize - 1 - off) / s };
        let lo = lo.max(0) as usize;
        let hi = (hi + 1).clamp(0, n_out as isize) as usize;
        (lo.min(hi), hi)
    }
}

/// Collects, for one kernel tap, the input pixels every output pixel reads:
/// `buf[ci, oh, ow] = x[ci, oh*s + kh*d - p, ow*s + kw*d - p]` (zero outside).
#[allow(clippy::too_many_arguments)]
fn gather_tap(
    x: &[f64],
    (cin, h, w): (usize, usize, usize),
    (ho, wo): (usize, usize),
    geom: ConvGeometry,
    kh: usize,
    kw: usize,
    buf: &mut [f64],
) {
    let p = geom.padding() as isize;
    let s = geom.stride;
    let off_h = (kh * geom.dilation) as isize - p;
    let off_w = (kw * geom.dilation) as isize - p;
    let (r_lo, r_hi) = geom.valid_range(off_h, h, ho);
    let (c_lo, c_hi) = geom.valid_range(off_w, w, wo);
    for ci in 0..cin {
        let src = &x[ci * h * w..(ci + 1) * h * w];
        let dst = &mut buf[ci * ho * wo..(ci + 1) * ho * wo];
        for oh in 0..ho {
            let row = &mut dst[oh * wo..(oh + 1) * wo];
            if oh < r_lo || oh >= r_hi {
                row.fill(0.0);
                continue;
            }
            let ih = (oh * s) as isize + off_h;
            let src_row = &src[ih as usize * w..(ih as usize + 1) * w];
            row[..c_lo].fill(0.0);
            row[c_hi..].fill(0.0);
            if s == 1 {
                let start = (c_lo as isize + off_w) as usize;
                row[c_lo..c_hi].copy_from_slice(&src_row[start..start + (c_hi - c_lo)]);
            } else {
                for ow in c_lo..c_hi {
                    row[ow] = src_row[((ow * s) as isize + off_w) as usize];
                }
            }
        }
    }
}

/// Adjoint of [`gather_tap`]: accumulates `buf` back into `dx`.
#[allow(clippy::too_many_arguments)]
fn scatter_tap(
    buf: &[f64],
    (cin, h, w): (usize, usize, usize),
    (ho, wo): (usize, usize),
    geom: ConvGeometry,
    kh: usize,
    kw: usize,
    dx: &mut [f64],
) {
    let p = geom.padding() as isize;
    let s = geom.stride;
    let off_h = (kh * geom.dilation) as isize - p;
    let off_w = (kw * geom.dilation) as isize - p;
    let (r_lo, r_hi) = geom.valid_range(off_h, h, ho);
    let (c_lo, c_hi) = geom.valid_range(off_w, w, wo);
    for ci in 0..cin {
        let src = &buf[ci * ho * wo..(ci + 1) * ho * wo];
        let dst = &mut dx[ci * h * w..(ci + 1) * h * w];
        for oh in r_lo..r_hi {
            let ih = ((oh * s) as isize + off_h) as usize;
            let row = &src[oh * wo..(oh + 1) * wo];
            let dst_row = &mut dst[ih * w..(ih + 1) * w];
            for ow in c_lo..c_hi {
                dst_row[((ow * s) as isize + off_w) as usize] += row[ow];
            }
        }
    }
}

fn conv_dims(x: &Tensor, weight: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    let (cin, h, w) = x.chw()?;
    let [cout, wcin, kh, kw] = weight.shape()[..] else {
        return Err(Error::Shape(format!(
            "conv weight must be [C_out, C_in, K, K], got {:?}",
            weight.shape()
        )));
    };
    if wcin != cin || kh != kw {
        return Err(Error::Shape(format!(
            "conv weight {:?} does not fit input {:?}",
            weight.shape(),
            x.shape()
        )));
    }
    Ok((cin, h, w, cout, kh))
}

/// 2-D convolution with "same" zero padding.
pub fn conv2d_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    dilation: usize,
) -> Result<Tensor> {
    let (cin, h, w, cout, k) = conv_dims(x, weight)?;
    let geom = ConvGeometry::new(k, stride, dilation)?;
    let (ho, wo) = (geom.output_len(h), geom.output_len(w));
    let hwo = ho * wo;
    let mut out = Tensor::zeros(&[cout, ho, wo]);
    let kk = k * k;
    if geom.is_pointwise() {
        gemm(cout, cin, hwo, 1.0, weight.data(), (cin, 1), x.data(), (hwo, 1), 0.0, out.data_mut(), (hwo, 1));
    } else {
        let mut buf = vec![0.0; cin * hwo];
        for kh in 0..k {
            for kw in 0..k {
                gather_tap(x.data(), (cin, h, w), (ho, wo), geom, kh, kw, &mut buf);
                gemm(
                    cout,
                    cin,
                    hwo,
                    1.0,
                    &weight.data()[kh * k + kw..],
                    (cin * kk, kk),
                    &buf,
                    (hwo, 1),
                    1.0,
                    out.data_mut(),
                    (hwo, 1),
                );
            }
        }
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::Shape(format!("conv bias must be [{cout}], got {:?}", b.shape())));
        }
        for (plane, &bv) in out.data_mut().chunks_mut(hwo).zip(b.data()) {
            plane.iter_mut().for_each(|v| *v += bv);
        }
    }
    Ok(out)
}

pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    dilation: usize,
) -> Result<ConvGrads> {
    let (cin, h, w, cout, k) = conv_dims(x, weight)?;
    let geom = ConvGeometry::new(k, stride, dilation)?;
    let (ho, wo) = (geom.output_len(h), geom.output_len(w));
    if grad_out.shape() != [cout, ho, wo] {
        return Err(Error::Shape(format!(
            "conv grad {:?} does not match output [{cout}, {ho}, {wo}]",
            grad_out.shape()
        )));
    }
    let hwo = ho * wo;
    let kk = k * k;
    let dy = grad_out.data();
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(weight.shape());
    let db: Vec<f64> = dy.chunks(hwo).map(|plane| plane.iter().sum()).collect();

    if geom.is_pointwise() {
        // dW = dY * X^T, dX = W^T * dY
        gemm(cout, hwo, cin, 1.0, dy, (hwo, 1), x.data(), (1, hwo), 0.0, dw.data_mut(), (cin, 1));
        gemm(cin, cout, hwo, 1.0, weight.data(), (1, cin), dy, (hwo, 1), 0.0, dx.data_mut(), (hwo, 1));
    } else {
        let mut buf = vec![0.0; cin * hwo];
        for kh in 0..k {
            for kw in 0..k {
                let off = kh * k + kw;
                gather_tap(x.data(), (cin, h, w), (ho, wo), geom, kh, kw, &mut buf);
                gemm(
                    cout,
                    hwo,
                    cin,
                    1.0,
                    dy,
                    (hwo, 1),
                    &buf,
                    (1, hwo),
                    1.0,
                    &mut dw.data_mut()[off..],
                    (cin * kk, kk),
                );
                gemm(
                    cin,
                    cout,
                    hwo,
                    1.0,
                    &weight.data()[off..],
                    (kk, cin * kk),
                    dy,
                    (hwo, 1),
                    0.0,
                    &mut buf,
                    (hwo, 1),
                );
                scatter_tap(&buf, (cin, h, w), (ho, wo), geom, kh, kw, dx.data_mut());
            }
        }
    }
    Ok(ConvGrads { input: dx, weight: dw, bias: Tensor::from_vec(&[cout], db)? })
}

/// Per-channel statistics kept from the forward pass of instance normalization.
#[derive(Debug, Clone)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub fn instance_norm_forward(
    x: &Tensor,
    scale: &Tensor,
    shift: &Tensor,
) -> Result<(Tensor, NormStats)> {
    let (c, h, w) = x.chw()?;
    if scale.shape() != [c] || shift.shape() != [c] {
        return Err(Error::Shape(format!(
            "instance norm affine parameters must be [{c}], got {:?} / {:?}",
            scale.shape(),
            shift.shape()
        )));
    }
    let n = (h * w) as f64;
    let mut out = Tensor::zeros(x.shape());
    let mut stats = NormStats { mean: Vec::with_capacity(c), inv_std: Vec::with_capacity(c) };
    for (ch, (src, dst)) in x.data().chunks(h * w).zip(out.data_mut().chunks_mut(h * w)).enumerate() {
        let mean = src.iter().sum::<f64>() / n;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + INSTANCE_NORM_EPS).sqrt();
        let (g, b) = (scale.data()[ch], shift.data()[ch]);
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = g * (s - mean) * inv_std + b;
        }
        stats.mean.push(mean);
        stats.inv_std.push(inv_std);
    }
    Ok((out, stats))
}

/// Returns `(d input, d scale, d shift)`.
pub fn instance_norm_backward(
    x: &Tensor,
    scale: &Tensor,
    stats: &NormStats,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    ensure_same_shape(x, grad_out)?;
    let (c, h, w) = x.chw()?;
    let hw = h * w;
    let n = hw as f64;
    let mut dx = Tensor::zeros(x.shape());
    let mut dscale = vec![0.0; c];
    let mut dshift = vec![0.0; c];
    for ch in 0..c {
        let src = &x.data()[ch * hw..(ch + 1) * hw];
        let dy = &grad_out.data()[ch * hw..(ch + 1) * hw];
        let (mean, inv_std) = (stats.mean[ch], stats.inv_std[ch]);
        let g = scale.data()[ch];
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for (&s, &d) in src.iter().zip(dy) {
            let xhat = (s - mean) * inv_std;
            sum_dy += d;
            sum_dy_xhat += d * xhat;
        }
        dscale[ch] = sum_dy_xhat;
        dshift[ch] = sum_dy;
        let dst = &mut dx.data_mut()[ch * hw..(ch + 1) * hw];
        let k = g * inv_std / n;
        for ((o, &s), &d) in dst.iter_mut().zip(src).zip(dy) {
            let xhat = (s - mean) * inv_std;
            *o = k * (n * d - sum_dy - xhat * sum_dy_xhat);
        }
    }
    Ok((dx, Tensor::from_vec(&[c], dscale)?, Tensor::from_vec(&[c], dshift)?))
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn upsample2x_forward(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = Tensor::zeros(&[c, h2, w2]);
    let src = x.data();
    let dst = out.data_mut();
    for ch in 0..c {
        for i in 0..h2 {
            let src_row = &src[ch * h * w + (i / 2) * w..ch * h * w + (i / 2 + 1) * w];
            let dst_row = &mut dst[ch * h2 * w2 + i * w2..ch * h2 * w2 + (i + 1) * w2];
            for (j, v) in dst_row.iter_mut().enumerate() {
                *v = src_row[j / 2];
            }
        }
    }
    Ok(out)
}

pub fn upsample2x_backward(grad_out: &Tensor) -> Result<Tensor> {
    let (c, h2, w2) = grad_out.chw()?;
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Tensor::zeros(&[c, h, w]);
    let src = grad_out.data();
    let dst = dx.data_mut();
    for ch in 0..c {
        for i in 0..h2 {
            for j in 0..w2 {
                dst[ch * h * w + (i / 2) * w + j / 2] += src[ch * h2 * w2 + i * w2 + j];
            }
        }
    }
    Ok(dx)
}

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ca, ha, wa) = a.chw()?;
    let (cb, hb, wb) = b.chw()?;
    if (ha, wa) != (hb, wb) {
        return Err(Error::Shape(format!(
            "cannot concatenate {:?} and {:?}: spatial sizes differ",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[ca + cb, ha, wa], data)
}

/// Mean of every channel over its spatial extent: `[C, H, W] -> [C]`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    let n = (h * w) as f64;
    let means = x.data().chunks(h * w).map(|p| p.iter().sum::<f64>() / n).collect();
    Tensor::from_vec(&[c], means)
}

/// Fully connected layer: `W [out, in] * x [in] + b [out]`.
pub fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [out_dim, in_dim] = weight.shape()[..] else {
        return Err(Error::Shape(format!("dense weight must be rank 2, got {:?}", weight.shape())));
    };
    if x.shape() != [in_dim] || bias.shape() != [out_dim] {
        return Err(Error::Shape(format!(
            "dense layer {:?} cannot take input {:?} with bias {:?}",
            weight.shape(),
            x.shape(),
            bias.shape()
        )));
    }
    let out = weight
        .data()
        .chunks(in_dim)
        .zip(bias.data())
        .map(|(row, b)| row.iter().zip(x.data()).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect();
    Tensor::from_vec(&[out_dim], out)
}

/// Scales channel `k` of `x` by `scales[k]`.
pub fn channel_scale(x: &Tensor, scales: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    if scales.shape() != [c] {
        return Err(Error::Shape(format!(
            "channel scales {:?} do not match {c} channels",
            scales.shape()
        )));
    }
    let mut out = x.clone();
    for (plane, &s) in out.data_mut().chunks_mut(h * w).zip(scales.data()) {
        plane.iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

/// Scales every channel of `x` at pixel `(i, j)` by `gate[0, i, j]`.
pub fn spatial_scale(x: &Tensor, gate: &Tensor) -> Result<Tensor> {
    let (_, h, w) = x.chw()?;
    if gate.shape() != [1, h, w] {
        return Err(Error::Shape(format!(
            "spatial gate {:?} does not match [1, {h}, {w}]",
            gate.shape()
        )));
    }
    let mut out = x.clone();
    for plane in out.data_mut().chunks_mut(h * w) {
        plane.iter_mut().zip(gate.data()).for_each(|(v, g)| *v *= g);
    }
    Ok(out)
}
