//! Raw compute kernels shared by the differentiable ops.

use std::cell::RefCell;

thread_local! {
    static SCRATCH: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

/// Runs `f` on a per-thread buffer of `len` values with unspecified contents.
/// Callers must overwrite every entry they read (as `im2col` and `gemm` with `beta = 0` do).
pub fn with_scratch<T>(len: usize, f: impl FnOnce(&mut [f64]) -> T) -> T {
    SCRATCH.with(|cell| match cell.try_borrow_mut() {
        Ok(mut buf) => {
            if buf.len() < len {
                buf.resize(len, 0.0);
            }
            f(&mut buf[..len])
        }
        // Re-entrant use on the same thread falls back to a fresh buffer.
        Err(_) => f(&mut vec![0.0; len]),
    })
}

/// Row-major matrix view flags for [`gemm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

/// `c = alpha * op(a) * op(b) + beta * c` where `op(a)` is `m x k` and `op(b)` is `k x n`.
///
/// `a` is stored row-major as `m x k` (or `k x m` when transposed), likewise `b`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    ta: Trans,
    b: &[f64],
    tb: Trans,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "gemm lhs size");
    assert_eq!(b.len(), k * n, "gemm rhs size");
    assert_eq!(c.len(), m * n, "gemm out size");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = match ta {
        Trans::No => (k as isize, 1),
        Trans::Yes => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Trans::No => (n as isize, 1),
        Trans::Yes => (1, k as isize),
    };
    // SAFETY: the slice lengths were checked against the strides above, so every
    // element address the kernel forms stays in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a 2D cross-correlation over a single image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeometry {
    pub fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.h_out * self.w_out
    }
}

/// Output columns `lo..hi` whose input column `ox + kj - pw` lies inside `0..w`.
fn unit_stride_span(w: usize, w_out: usize, kj: usize, pw: usize) -> (usize, usize) {
    let lo = pw.saturating_sub(kj).min(w_out);
    let hi = (w + pw).saturating_sub(kj).min(w_out).max(lo);
    (lo, hi)
}

/// Unfolds one `c_in x h x w` image into a `(c_in*kh*kw) x (h_out*w_out)` matrix.
pub fn im2col(img: &[f64], g: &ConvGeometry, cols: &mut [f64]) {
    let n_cols = g.col_cols();
    debug_assert_eq!(cols.len(), g.col_rows() * n_cols);
    let (sh, sw) = g.stride;
    let (ph, pw) = g.pad;
    for c in 0..g.c_in {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * n_cols..(row + 1) * n_cols];
                for oy in 0..g.h_out {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    let dst_row = &mut dst[oy * g.w_out..(oy + 1) * g.w_out];
                    if iy < 0 || iy >= g.h as isize {
                        dst_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if sw == 1 {
                        let (lo, hi) = unit_stride_span(g.w, g.w_out, kj, pw);
                        dst_row[..lo].fill(0.0);
                        dst_row[hi..].fill(0.0);
                        if lo < hi {
                            let s0 = lo + kj - pw;
                            dst_row[lo..hi].copy_from_slice(&src[s0..s0 + hi - lo]);
                        }
                        continue;
                    }
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        *d = if ix < 0 || ix >= g.w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into an image.
pub fn col2im(cols: &[f64], g: &ConvGeometry, img: &mut [f64]) {
    let n_cols = g.col_cols();
    let (sh, sw) = g.stride;
    let (ph, pw) = g.pad;
    for c in 0..g.c_in {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * n_cols..(row + 1) * n_cols];
                for oy in 0..g.h_out {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if sw == 1 {
                        let (lo, hi) = unit_stride_span(g.w, g.w_out, kj, pw);
                        if lo < hi {
                            let s0 = lo + kj - pw;
                            let row = &src[oy * g.w_out + lo..oy * g.w_out + hi];
                            for (d, v) in dst[s0..s0 + hi - lo].iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        continue;
                    }
                    for ox in 0..g.w_out {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.w_out + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(r: usize, c: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = x[i * c + j];
            }
        }
        t
    }

    #[test]
    fn gemm_transpose_flags_agree_with_naive_product() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let want = naive(m, k, n, &a, &b);
        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        for (aa, ta) in [(&a, Trans::No), (&at, Trans::Yes)] {
            for (bb, tb) in [(&b, Trans::No), (&bt, Trans::Yes)] {
                let mut c = vec![1.0; m * n];
                gemm(m, k, n, 1.0, aa, ta, bb, tb, 0.0, &mut c);
                for (x, y) in c.iter().zip(&want) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeometry { c_in: 2, h: 5, w: 4, kh: 3, kw: 2, stride: (2, 1), pad: (1, 1), h_out: 3, w_out: 5 };
        let img: Vec<f64> = (0..2 * 5 * 4).map(|i| (i as f64 * 0.3).sin()).collect();
        let y: Vec<f64> = (0..g.col_rows() * g.col_cols()).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&img, &g, &mut cols);
        let mut back = vec![0.0; img.len()];
        col2im(&y, &g, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = img.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    fn naive_im2col(img: &[f64], g: &ConvGeometry) -> Vec<f64> {
        let mut out = vec![0.0; g.col_rows() * g.col_cols()];
        for c in 0..g.c_in {
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let row = (c * g.kh + ki) * g.kw + kj;
                    for oy in 0..g.h_out {
                        for ox in 0..g.w_out {
                            let iy = (oy * g.stride.0 + ki) as isize - g.pad.0 as isize;
                            let ix = (ox * g.stride.1 + kj) as isize - g.pad.1 as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                                out[row * g.col_cols() + oy * g.w_out + ox] = img[(c * g.h + iy as usize) * g.w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn unit_stride_path_matches_reference() {
        for (w, kw, pw, sw) in [(4, 3, 1, 1), (6, 5, 2, 1), (3, 5, 4, 1), (2, 1, 0, 1), (7, 3, 1, 2), (5, 5, 0, 1)] {
            let (h, kh, ph) = (3, 3, 1);
            let h_out = h + 2 * ph - kh + 1;
            let w_out = (w + 2 * pw - kw) / sw + 1;
            let g = ConvGeometry { c_in: 2, h, w, kh, kw, stride: (1, sw), pad: (ph, pw), h_out, w_out };
            let img: Vec<f64> = (0..2 * h * w).map(|i| i as f64 + 1.0).collect();
            let mut cols = vec![f64::NAN; g.col_rows() * g.col_cols()];
            im2col(&img, &g, &mut cols);
            let want = naive_im2col(&img, &g);
            assert_eq!(cols, want, "w {w} kw {kw} pw {pw} sw {sw}");
            let y: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.7).cos()).collect();
            let mut back = vec![0.0; img.len()];
            col2im(&y, &g, &mut back);
            let lhs: f64 = want.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = img.iter().zip(&back).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }
}
