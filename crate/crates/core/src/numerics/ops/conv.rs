use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::graph::{Graph, Var};
use crate::numerics::kernels::{col2im, gemm, im2col, with_scratch, ConvGeometry, Trans};
use crate::tensor::Tensor;

fn out_extent(what: &str, size: usize, k: usize, pad: usize, stride: usize) -> Result<usize> {
    let padded = size + 2 * pad;
    if stride == 0 || k == 0 || k > padded {
        return Err(Error::shape("conv2d", format!("kernel {what} {k} does not fit padded extent {padded}")));
    }
    if (padded - k) % stride != 0 {
        return Err(Error::shape(
            "conv2d",
            format!("non-integer output {what}: ({size} + 2*{pad} - {k}) / {stride}"),
        ));
    }
    Ok((padded - k) / stride + 1)
}

impl Graph {
    /// Cross-correlation of `x [B x Cin x H x W]` with `kernel [Cout x Cin x kh x kw]`.
    pub fn conv2d(&self, x: Var, kernel: Var, stride: (usize, usize), pad: (usize, usize)) -> Result<Var> {
        let (xs, ks) = (self.shape(x), self.shape(kernel));
        if xs.len() != 4 || ks.len() != 4 || xs[1] != ks[1] {
            return Err(Error::shape("conv2d", format!("input {xs:?}, kernel {ks:?}")));
        }
        let (b, c_in, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (c_out, kh, kw) = (ks[0], ks[2], ks[3]);
        let geo = ConvGeometry {
            c_in,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            h_out: out_extent("height", h, kh, pad.0, stride.0)?,
            w_out: out_extent("width", w, kw, pad.1, stride.1)?,
        };
        let (rows, cols) = (geo.col_rows(), geo.col_cols());
        let img = c_in * h * w;
        let mut out = vec![0.0; b * c_out * cols];
        {
            let (xv, kv) = (self.value(x), self.value(kernel));
            let (xd, kd) = (xv.data(), kv.data());
            out.par_chunks_mut(c_out * cols).enumerate().for_each(|(i, o)| {
                with_scratch(rows * cols, |buf| {
                    im2col(&xd[i * img..(i + 1) * img], &geo, buf);
                    gemm(c_out, rows, cols, 1.0, kd, Trans::No, buf, Trans::No, 0.0, o);
                })
            });
        }
        let out = Tensor::from_parts(vec![b, c_out, geo.h_out, geo.w_out], out);
        Ok(self.push_op(out, &[x, kernel], move |c| {
            let (xd, kd, gd) = (c.inputs[0].data(), c.inputs[1].data(), c.grad.data());
            let (need_x, need_k) = (c.needs[0], c.needs[1]);
            let mut dx = if need_x { vec![0.0; b * img] } else { Vec::new() };
            let partial_dk: Vec<Vec<f64>> = if need_x {
                dx.par_chunks_mut(img)
                    .enumerate()
                    .map(|(i, dxi)| {
                        with_scratch(rows * cols, |buf| conv_backward_one(i, xd, kd, gd, &geo, c_out, Some(dxi), need_k, buf))
                    })
                    .collect()
            } else {
                (0..b)
                    .into_par_iter()
                    .map(|i| with_scratch(rows * cols, |buf| conv_backward_one(i, xd, kd, gd, &geo, c_out, None, need_k, buf)))
                    .collect()
            };
            let dk = need_k.then(|| {
                let mut acc = vec![0.0; c_out * rows];
                for p in &partial_dk {
                    for (a, v) in acc.iter_mut().zip(p) {
                        *a += v;
                    }
                }
                Tensor::from_parts(c.inputs[1].shape().to_vec(), acc)
            });
            let dx = need_x.then(|| Tensor::from_parts(c.inputs[0].shape().to_vec(), dx));
            vec![dx, dk]
        }))
    }

    /// Non-overlapping max pooling over the last two axes of a rank-4 tensor.
    ///
    /// The gradient goes to the first maximum in row-major window order.
    pub fn max_pool2d(&self, x: Var, window: (usize, usize)) -> Result<Var> {
        let xs = self.shape(x);
        let (ph, pw) = window;
        if xs.len() != 4 || ph == 0 || pw == 0 || xs[2] % ph != 0 || xs[3] % pw != 0 {
            return Err(Error::shape("max_pool2d", format!("window {window:?} does not tile {xs:?}")));
        }
        let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
        let (ho, wo) = (h / ph, w / pw);
        let mut out = Vec::with_capacity(planes * ho * wo);
        let mut argmax = Vec::with_capacity(planes * ho * wo);
        {
            let xv = self.value(x);
            let xd = xv.data();
            for p in 0..planes {
                let base = p * h * w;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_at = base + oy * ph * w + ox * pw;
                        for dy in 0..ph {
                            for dx in 0..pw {
                                let at = base + (oy * ph + dy) * w + ox * pw + dx;
                                if xd[at] > best {
                                    best = xd[at];
                                    best_at = at;
                                }
                            }
                        }
                        out.push(best);
                        argmax.push(best_at);
                    }
                }
            }
        }
        let out = Tensor::from_parts(vec![xs[0], xs[1], ho, wo], out);
        Ok(self.push_op(out, &[x], move |c| {
            let mut dx = Tensor::zeros(c.inputs[0].shape());
            let d = dx.data_mut();
            for (&at, g) in argmax.iter().zip(c.grad.data()) {
                d[at] += g;
            }
            vec![Some(dx)]
        }))
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward_one(
    i: usize,
    xd: &[f64],
    kd: &[f64],
    gd: &[f64],
    geo: &ConvGeometry,
    c_out: usize,
    dx: Option<&mut [f64]>,
    need_k: bool,
    buf: &mut [f64],
) -> Vec<f64> {
    let (rows, cols) = (geo.col_rows(), geo.col_cols());
    let img = geo.c_in * geo.h * geo.w;
    let gi = &gd[i * c_out * cols..(i + 1) * c_out * cols];
    let mut dk = Vec::new();
    if need_k {
        im2col(&xd[i * img..(i + 1) * img], geo, buf);
        dk = vec![0.0; c_out * rows];
        gemm(c_out, cols, rows, 1.0, gi, Trans::No, buf, Trans::Yes, 0.0, &mut dk);
    }
    if let Some(dx) = dx {
        // beta = 0 overwrites whatever the buffer held.
        gemm(rows, c_out, cols, 1.0, kd, Trans::Yes, gi, Trans::No, 0.0, buf);
        col2im(buf, geo, dx);
    }
    dk
}
