//! Slice-level numeric kernels behind the tape operations. Layouts are
//! row-major NCHW for images and `[batch, features]` for dense data.

/// `c = a * b + beta * c` for row/column-strided matrices.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= last(m, k, rsa, csa));
    assert!(b.len() >= last(k, n, rsb, csb));
    assert!(c.len() >= last(m, n, rsc, csc));
    // SAFETY: the asserts above bound every index the kernel touches.
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
            rsc as isize,
            csc as isize,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    /// Same padding; even kernels put the extra row/column on the top/left.
    pub fn pad_top(&self) -> usize {
        self.kh / 2
    }

    pub fn pad_left(&self) -> usize {
        self.kw / 2
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }

    pub fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }
}

/// Unfolds one image `[c_in, h, w]` into `[c_in*kh*kw, h*w]` patch columns.
fn im2col(g: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let (h, w, pt, pl) = (g.h, g.w, g.pad_top(), g.pad_left());
    for ci in 0..g.c_in {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * h * w..(row + 1) * h * w];
                // output column j reads input column j + kj - pl
                let j_lo = pl.saturating_sub(kj);
                let j_hi = (w + pl).saturating_sub(kj).min(w);
                for i in 0..h {
                    let out_row = &mut dst[i * w..(i + 1) * w];
                    let src_i = i + ki;
                    if src_i < pt || src_i - pt >= h || j_lo >= j_hi {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[(src_i - pt) * w..(src_i - pt + 1) * w];
                    out_row[..j_lo].fill(0.0);
                    out_row[j_hi..].fill(0.0);
                    let s0 = j_lo + kj - pl;
                    out_row[j_lo..j_hi].copy_from_slice(&src[s0..s0 + (j_hi - j_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch columns back onto an image.
fn col2im_add(g: &ConvGeom, cols: &[f64], dx: &mut [f64]) {
    let (h, w, pt, pl) = (g.h, g.w, g.pad_top(), g.pad_left());
    for ci in 0..g.c_in {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * h * w..(row + 1) * h * w];
                let j_lo = pl.saturating_sub(kj);
                let j_hi = (w + pl).saturating_sub(kj).min(w);
                if j_lo >= j_hi {
                    continue;
                }
                for i in 0..h {
                    let src_i = i + ki;
                    if src_i < pt || src_i - pt >= h {
                        continue;
                    }
                    let s0 = j_lo + kj - pl;
                    let dst = &mut plane[(src_i - pt) * w + s0..(src_i - pt) * w + s0 + (j_hi - j_lo)];
                    for (d, s) in dst.iter_mut().zip(&src[i * w + j_lo..i * w + j_hi]) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(
    g: &ConvGeom,
    batch: usize,
    x: &[f64],
    kernel: &[f64],
    bias: &[f64],
    y: &mut [f64],
) {
    let (hw, patch) = (g.hw(), g.patch());
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![0.0; patch * hw]
    };
    for b in 0..batch {
        let xb = &x[b * g.c_in * hw..(b + 1) * g.c_in * hw];
        let yb = &mut y[b * g.c_out * hw..(b + 1) * g.c_out * hw];
        for (co, row) in yb.chunks_exact_mut(hw).enumerate() {
            row.fill(bias[co]);
        }
        let src: &[f64] = if g.is_pointwise() {
            xb
        } else {
            im2col(g, xb, &mut cols);
            &cols
        };
        gemm(g.c_out, patch, hw, kernel, patch, 1, src, hw, 1, 1.0, yb, hw, 1);
    }
}

/// Accumulates kernel, bias and (optionally) input gradients.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    g: &ConvGeom,
    batch: usize,
    x: &[f64],
    kernel: &[f64],
    dy: &[f64],
    dkernel: Option<&mut [f64]>,
    dbias: Option<&mut [f64]>,
    dx: Option<&mut [f64]>,
) {
    let (hw, patch) = (g.hw(), g.patch());
    if let Some(db) = dbias {
        for b in 0..batch {
            let dyb = &dy[b * g.c_out * hw..(b + 1) * g.c_out * hw];
            for (co, row) in dyb.chunks_exact(hw).enumerate() {
                db[co] += row.iter().sum::<f64>();
            }
        }
    }
    let mut cols = vec![0.0; patch * hw];
    if let Some(dk) = dkernel {
        for b in 0..batch {
            let xb = &x[b * g.c_in * hw..(b + 1) * g.c_in * hw];
            let dyb = &dy[b * g.c_out * hw..(b + 1) * g.c_out * hw];
            let src: &[f64] = if g.is_pointwise() {
                xb
            } else {
                im2col(g, xb, &mut cols);
                &cols
            };
            // dK[co, p] += sum_s dy[co, s] * cols[p, s]
            gemm(g.c_out, hw, patch, dyb, hw, 1, src, 1, hw, 1.0, dk, patch, 1);
        }
    }
    if let Some(dx) = dx {
        for b in 0..batch {
            let dyb = &dy[b * g.c_out * hw..(b + 1) * g.c_out * hw];
            let dxb = &mut dx[b * g.c_in * hw..(b + 1) * g.c_in * hw];
            if g.is_pointwise() {
                gemm(g.c_in, g.c_out, hw, kernel, 1, patch, dyb, hw, 1, 1.0, dxb, hw, 1);
            } else {
                gemm(g.c_in * g.kh * g.kw, g.c_out, hw, kernel, 1, patch, dyb, hw, 1, 0.0, &mut cols, hw, 1);
                col2im_add(g, &cols, dxb);
            }
        }
    }
}
