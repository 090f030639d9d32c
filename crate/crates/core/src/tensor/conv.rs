//! Convolution kernels (im2col + GEMM) and nearest-neighbour resampling.

use crate::error::{Error, Result};

/// Stride, dilation and zero padding of a square-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub const fn new(stride: usize, dilation: usize, padding: usize) -> Self {
        ConvGeometry {
            stride,
            dilation,
            padding,
        }
    }

    /// Output extent along one axis, or an error when the dilated kernel does
    /// not fit in the padded input.
    pub fn output_extent(&self, input: usize, kernel: usize) -> Result<usize> {
        if kernel == 0 || self.stride == 0 || self.dilation == 0 {
            return Err(Error::invalid(format!(
                "kernel {kernel}, stride {}, dilation {} must be positive",
                self.stride, self.dilation
            )));
        }
        let span = (kernel - 1) * self.dilation + 1;
        let padded = input + 2 * self.padding;
        if span > padded {
            return Err(Error::shape(format!(
                "effective kernel extent {span} exceeds padded input {padded}"
            )));
        }
        Ok((padded - span) / self.stride + 1)
    }
}

pub(crate) struct ConvDims {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvDims {
    pub fn new(x: &[usize], w: &[usize], geom: ConvGeometry) -> Result<Self> {
        let (&[batch, cin, h, wd], &[cout, wcin, k, k2]) = (x, w) else {
            return Err(Error::shape(format!(
                "conv2d expects input [B,C,H,W] and weights [Cout,Cin,k,k], got {x:?} and {w:?}"
            )));
        };
        if k != k2 {
            return Err(Error::shape(format!("non-square kernel {w:?}")));
        }
        if cin != wcin {
            return Err(Error::shape(format!(
                "conv2d input has {cin} channels but weights expect {wcin} (input {x:?}, weights {w:?})"
            )));
        }
        let ho = geom.output_extent(h, k)?;
        let wo = geom.output_extent(wd, k)?;
        Ok(ConvDims {
            batch,
            cin,
            h,
            w: wd,
            cout,
            k,
            ho,
            wo,
        })
    }

    fn patch(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }
}

/// `c = a · b + beta · c` for row-major `a: m×k`, `b: k×n` given explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
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

fn im2col(x: &[f64], d: &ConvDims, geom: ConvGeometry, col: &mut [f64]) {
    let p = d.positions();
    for ci in 0..d.cin {
        let plane = &x[ci * d.h * d.w..(ci + 1) * d.h * d.w];
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = (ci * d.k + ky) * d.k + kx;
                let out = &mut col[row * p..(row + 1) * p];
                for oy in 0..d.ho {
                    let iy = (oy * geom.stride + ky * geom.dilation) as isize - geom.padding as isize;
                    let dst = &mut out[oy * d.wo..(oy + 1) * d.wo];
                    if iy < 0 || iy >= d.h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for (ox, v) in dst.iter_mut().enumerate() {
                        let ix = (ox * geom.stride + kx * geom.dilation) as isize
                            - geom.padding as isize;
                        *v = if ix < 0 || ix >= d.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add(col: &[f64], d: &ConvDims, geom: ConvGeometry, x: &mut [f64]) {
    let p = d.positions();
    for ci in 0..d.cin {
        let plane = &mut x[ci * d.h * d.w..(ci + 1) * d.h * d.w];
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = (ci * d.k + ky) * d.k + kx;
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..d.ho {
                    let iy = (oy * geom.stride + ky * geom.dilation) as isize - geom.padding as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for ox in 0..d.wo {
                        let ix = (ox * geom.stride + kx * geom.dilation) as isize
                            - geom.padding as isize;
                        if ix >= 0 && ix < d.w as isize {
                            dst[ix as usize] += src[oy * d.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation without bias: `y[b,o] = Σ w[o,c] ⋆ x[b,c]`.
pub(crate) fn conv_forward(x: &[f64], w: &[f64], d: &ConvDims, geom: ConvGeometry) -> Vec<f64> {
    let (kk, p) = (d.patch(), d.positions());
    let mut col = vec![0.0; kk * p];
    let mut y = vec![0.0; d.batch * d.cout * p];
    let in_stride = d.cin * d.h * d.w;
    for b in 0..d.batch {
        im2col(&x[b * in_stride..(b + 1) * in_stride], d, geom, &mut col);
        gemm(
            d.cout,
            kk,
            p,
            w,
            (kk, 1),
            &col,
            (p, 1),
            0.0,
            &mut y[b * d.cout * p..(b + 1) * d.cout * p],
        );
    }
    y
}

/// Adjoint of `conv_forward` in its input: maps an output-shaped `gy` back to input shape.
pub(crate) fn conv_input_grad(gy: &[f64], w: &[f64], d: &ConvDims, geom: ConvGeometry) -> Vec<f64> {
    let (kk, p) = (d.patch(), d.positions());
    let mut col = vec![0.0; kk * p];
    let in_stride = d.cin * d.h * d.w;
    let mut gx = vec![0.0; d.batch * in_stride];
    for b in 0..d.batch {
        gemm(
            kk,
            d.cout,
            p,
            w,
            (1, kk),
            &gy[b * d.cout * p..(b + 1) * d.cout * p],
            (p, 1),
            0.0,
            &mut col,
        );
        col2im_add(&col, d, geom, &mut gx[b * in_stride..(b + 1) * in_stride]);
    }
    gx
}

/// Adjoint of `conv_forward` in its weights.
pub(crate) fn conv_weight_grad(x: &[f64], gy: &[f64], d: &ConvDims, geom: ConvGeometry) -> Vec<f64> {
    let (kk, p) = (d.patch(), d.positions());
    let mut col = vec![0.0; kk * p];
    let in_stride = d.cin * d.h * d.w;
    let mut gw = vec![0.0; d.cout * kk];
    for b in 0..d.batch {
        im2col(&x[b * in_stride..(b + 1) * in_stride], d, geom, &mut col);
        gemm(
            d.cout,
            p,
            kk,
            &gy[b * d.cout * p..(b + 1) * d.cout * p],
            (p, 1),
            &col,
            (1, p),
            1.0,
            &mut gw,
        );
    }
    gw
}

pub(crate) fn upsample_nearest(x: &[f64], planes: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (ho, wo) = (h * f, w * f);
    let mut out = vec![0.0; planes * ho * wo];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for i in 0..ho {
            let row = &src[(i / f) * w..(i / f + 1) * w];
            for j in 0..wo {
                dst[i * wo + j] = row[j / f];
            }
        }
    }
    out
}

/// Adjoint of nearest upsampling: sums each `f×f` block. `h, w` are the small extents.
pub(crate) fn upsample_adjoint(g: &[f64], planes: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (ho, wo) = (h * f, w * f);
    let mut out = vec![0.0; planes * h * w];
    for p in 0..planes {
        let src = &g[p * ho * wo..(p + 1) * ho * wo];
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for i in 0..ho {
            for j in 0..wo {
                dst[(i / f) * w + j / f] += src[i * wo + j];
            }
        }
    }
    out
}
