//! Raw numeric kernels behind the tape primitives. Everything here works on
//! flat row-major slices; shape checking happens in the tape layer.

/// Strided matrix view: element `(i, j)` lives at `i * rs + j * cs`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rs: isize,
    pub cs: isize,
}

impl<'a> View<'a> {
    pub fn rows(data: &'a [f64], cols: usize) -> Self {
        View {
            data,
            rs: cols as isize,
            cs: 1,
        }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        View {
            data,
            rs: 1,
            cs: cols as isize,
        }
    }
}

/// `c[m×n] = a[m×k] · b[k×n] + beta · c`, with `c` row-major.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: View<'_>,
    b: View<'_>,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: strides describe in-bounds elements of the given slices for the
    // stated extents; callers construct views from buffers of matching size.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    pub fn patch(&self) -> usize {
        self.c_in * self.k * self.k
    }

    pub fn positions(&self) -> usize {
        self.h_out * self.w_out
    }
}

pub(crate) fn conv_out_extent(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Column buffers are capped at this many values so a chunk of samples
/// stays cache resident.
const COLS_BUDGET: usize = 1 << 17;

fn chunk_samples(g: &ConvGeom) -> usize {
    (COLS_BUDGET / (g.patch() * g.positions()).max(1)).clamp(1, g.n)
}

/// Copies samples `n0..n1` into a zero-bordered buffer `[n, C_in, H+2p, W+2p]`.
fn pad_chunk(x: &[f64], g: &ConvGeom, n0: usize, n1: usize, out: &mut Vec<f64>) {
    let (hp, wp) = (g.h + 2 * g.pad, g.w + 2 * g.pad);
    out.clear();
    out.resize((n1 - n0) * g.c_in * hp * wp, 0.0);
    for (pi, plane) in x[n0 * g.c_in * g.h * g.w..n1 * g.c_in * g.h * g.w]
        .chunks_exact(g.h * g.w)
        .enumerate()
    {
        let dst = &mut out[pi * hp * wp..(pi + 1) * hp * wp];
        for (y, row) in plane.chunks_exact(g.w).enumerate() {
            let at = (y + g.pad) * wp + g.pad;
            dst[at..at + g.w].copy_from_slice(row);
        }
    }
}

/// Lays out the receptive fields of samples `n0..n1` as a
/// `[C_in·K·K, (n1−n0)·H_out·W_out]` matrix. `padded` is scratch space.
pub(crate) fn im2col(
    x: &[f64],
    g: &ConvGeom,
    n0: usize,
    n1: usize,
    padded: &mut Vec<f64>,
    cols: &mut Vec<f64>,
) {
    let p = g.positions();
    let np = (n1 - n0) * p;
    let (hp, wp) = (g.h + 2 * g.pad, g.w + 2 * g.pad);
    pad_chunk(x, g, n0, n1, padded);
    cols.resize(g.patch() * np, 0.0);
    for ci in 0..g.c_in {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * np..(row + 1) * np];
                for n in 0..n1 - n0 {
                    let plane = &padded[(n * g.c_in + ci) * hp * wp..][..hp * wp];
                    for oy in 0..g.h_out {
                        let src = &plane[(oy * g.stride + ky) * wp + kx..];
                        let out = &mut dst[n * p + oy * g.w_out..][..g.w_out];
                        if g.stride == 1 {
                            out.copy_from_slice(&src[..g.w_out]);
                        } else {
                            out.iter_mut()
                                .zip(src.iter().step_by(g.stride))
                                .for_each(|(o, v)| *o = *v);
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: adds column gradients of samples `n0..n1` onto
/// the input gradient. `padded` is scratch space.
pub(crate) fn col2im(
    cols: &[f64],
    g: &ConvGeom,
    n0: usize,
    n1: usize,
    padded: &mut Vec<f64>,
    dx: &mut [f64],
) {
    let p = g.positions();
    let np = (n1 - n0) * p;
    let (hp, wp) = (g.h + 2 * g.pad, g.w + 2 * g.pad);
    padded.clear();
    padded.resize((n1 - n0) * g.c_in * hp * wp, 0.0);
    for ci in 0..g.c_in {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * np..(row + 1) * np];
                for n in 0..n1 - n0 {
                    let plane = &mut padded[(n * g.c_in + ci) * hp * wp..][..hp * wp];
                    for oy in 0..g.h_out {
                        let dst = &mut plane[(oy * g.stride + ky) * wp + kx..];
                        let grad = &src[n * p + oy * g.w_out..][..g.w_out];
                        if g.stride == 1 {
                            dst[..g.w_out]
                                .iter_mut()
                                .zip(grad)
                                .for_each(|(d, v)| *d += v);
                        } else {
                            dst.iter_mut()
                                .step_by(g.stride)
                                .zip(grad)
                                .for_each(|(d, v)| *d += v);
                        }
                    }
                }
            }
        }
    }
    let planes = &mut dx[n0 * g.c_in * g.h * g.w..n1 * g.c_in * g.h * g.w];
    for (pi, plane) in planes.chunks_exact_mut(g.h * g.w).enumerate() {
        let src = &padded[pi * hp * wp..(pi + 1) * hp * wp];
        for (y, row) in plane.chunks_exact_mut(g.w).enumerate() {
            let at = (y + g.pad) * wp + g.pad;
            row.iter_mut()
                .zip(&src[at..at + g.w])
                .for_each(|(d, s)| *d += s);
        }
    }
}

pub(crate) fn conv2d_forward(x: &[f64], w: &[f64], b: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.positions();
    let chunk = chunk_samples(g);
    let mut out = vec![0.0; g.n * g.c_out * p];
    let mut cols = Vec::new();
    let mut padded = Vec::new();
    let mut mat = Vec::new();
    for n0 in (0..g.n).step_by(chunk) {
        let n1 = (n0 + chunk).min(g.n);
        let np = (n1 - n0) * p;
        im2col(x, g, n0, n1, &mut padded, &mut cols);
        mat.resize(g.c_out * np, 0.0);
        gemm(
            g.c_out,
            g.patch(),
            np,
            View::rows(w, g.patch()),
            View::rows(&cols, np),
            0.0,
            &mut mat,
        );
        for co in 0..g.c_out {
            let src = &mat[co * np..(co + 1) * np];
            for n in n0..n1 {
                let dst = &mut out[(n * g.c_out + co) * p..][..p];
                for (d, s) in dst.iter_mut().zip(&src[(n - n0) * p..(n - n0 + 1) * p]) {
                    *d = s + b[co];
                }
            }
        }
    }
    out
}

/// Returns `(dx, dw, db)` for an output gradient `dy` shaped `[N, C_out, H_out, W_out]`.
/// `dx` is skipped when the input does not need a gradient.
pub(crate) fn conv2d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &ConvGeom,
    need_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let p = g.positions();
    let chunk = chunk_samples(g);
    let mut db = vec![0.0; g.c_out];
    let mut dw = vec![0.0; g.c_out * g.patch()];
    let mut dx = need_dx.then(|| vec![0.0; x.len()]);
    let mut cols = Vec::new();
    let mut padded = Vec::new();
    let mut dy_mat = Vec::new();
    let mut dcols = Vec::new();
    for n0 in (0..g.n).step_by(chunk) {
        let n1 = (n0 + chunk).min(g.n);
        let np = (n1 - n0) * p;
        dy_mat.resize(g.c_out * np, 0.0);
        for n in n0..n1 {
            for co in 0..g.c_out {
                let src = &dy[(n * g.c_out + co) * p..][..p];
                let at = co * np + (n - n0) * p;
                dy_mat[at..at + p].copy_from_slice(src);
                db[co] += src.iter().sum::<f64>();
            }
        }
        im2col(x, g, n0, n1, &mut padded, &mut cols);
        gemm(
            g.c_out,
            np,
            g.patch(),
            View::rows(&dy_mat, np),
            View::transposed(&cols, np),
            1.0,
            &mut dw,
        );
        if let Some(dx) = dx.as_mut() {
            dcols.resize(g.patch() * np, 0.0);
            gemm(
                g.patch(),
                g.c_out,
                np,
                View::transposed(w, g.patch()),
                View::rows(&dy_mat, np),
                0.0,
                &mut dcols,
            );
            col2im(&dcols, g, n0, n1, &mut padded, dx);
        }
    }
    (dx, dw, db)
}

/// `y[N×out] = x[N×in] · wᵀ + b` with `w` shaped `[out, in]`.
pub(crate) fn dense_forward(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    n: usize,
    d_in: usize,
    d_out: usize,
) -> Vec<f64> {
    let mut y = Vec::with_capacity(n * d_out);
    for _ in 0..n {
        y.extend_from_slice(b);
    }
    gemm(
        n,
        d_in,
        d_out,
        View::rows(x, d_in),
        View::transposed(w, d_in),
        1.0,
        &mut y,
    );
    y
}

pub(crate) fn dense_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    n: usize,
    d_in: usize,
    d_out: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; n * d_in];
    gemm(
        n,
        d_out,
        d_in,
        View::rows(dy, d_out),
        View::rows(w, d_in),
        0.0,
        &mut dx,
    );
    let mut dw = vec![0.0; d_out * d_in];
    gemm(
        d_out,
        n,
        d_in,
        View::transposed(dy, d_out),
        View::rows(x, d_in),
        0.0,
        &mut dw,
    );
    let mut db = vec![0.0; d_out];
    for row in dy.chunks_exact(d_out) {
        db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    (dx, dw, db)
}

/// Non-overlapping max pooling (stride = window). Returns values and the flat
/// input index of each maximum.
pub(crate) fn maxpool_forward(
    x: &[f64],
    planes: usize,
    h: usize,
    w: usize,
    window: usize,
) -> (Vec<f64>, Vec<usize>) {
    let (ho, wo) = (h / window, w / window);
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut arg = Vec::with_capacity(planes * ho * wo);
    for pl in 0..planes {
        let base = pl * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = base + oy * window * w + ox * window;
                for ky in 0..window {
                    for kx in 0..window {
                        let i = base + (oy * window + ky) * w + ox * window + kx;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    (out, arg)
}
