//! Raw forward/adjoint kernels over flat slices. Shapes are validated by the
//! graph before any of these run.

/// Unfolds `[ci,h,w]` into the `[ci*kh*kw, h*w]` patch matrix of a zero-padded
/// "same" correlation.
fn im2col(x: &[f64], (ci, h, w): (usize, usize, usize), (kh, kw): (usize, usize)) -> Vec<f64> {
    let hw = h * w;
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut cols = vec![0.0; ci * kh * kw * hw];
    for i in 0..ci {
        let xi = &x[i * hw..(i + 1) * hw];
        for ky in 0..kh {
            let dy = ky as isize - ph;
            let (y0, y1) = valid_range(h, dy);
            for kx in 0..kw {
                let dx = kx as isize - pw;
                let (x0, x1) = valid_range(w, dx);
                let row = &mut cols[((i * kh + ky) * kw + kx) * hw..][..hw];
                for y in y0..y1 {
                    let s0 = ((((y as isize + dy) as usize) * w + x0) as isize + dx) as usize;
                    row[y * w + x0..y * w + x1].copy_from_slice(&xi[s0..s0 + (x1 - x0)]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im(cols: &[f64], (ci, h, w): (usize, usize, usize), (kh, kw): (usize, usize)) -> Vec<f64> {
    let hw = h * w;
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut x = vec![0.0; ci * hw];
    for i in 0..ci {
        let xi = &mut x[i * hw..(i + 1) * hw];
        for ky in 0..kh {
            let dy = ky as isize - ph;
            let (y0, y1) = valid_range(h, dy);
            for kx in 0..kw {
                let dx = kx as isize - pw;
                let (x0, x1) = valid_range(w, dx);
                let row = &cols[((i * kh + ky) * kw + kx) * hw..][..hw];
                for y in y0..y1 {
                    let s0 = ((((y as isize + dy) as usize) * w + x0) as isize + dx) as usize;
                    for (d, v) in xi[s0..s0 + (x1 - x0)].iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *d += v;
                    }
                }
            }
        }
    }
    x
}

/// Row-major `c = a^T? * b^T?`, with `a` m x k and `b` k x n after transposition.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64]) {
    // strides for the (possibly transposed) row-major operands
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slices are sized m*k, k*n and m*n by every caller; strides
    // address exactly those extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `[ci,h,w] x [co,ci,kh,kw] -> [co,h,w]`, cross-correlation with zero padding.
pub(crate) fn conv_same_forward(
    x: &[f64],
    k: &[f64],
    (ci, h, w): (usize, usize, usize),
    (co, kh, kw): (usize, usize, usize),
) -> Vec<f64> {
    let hw = h * w;
    let kdim = ci * kh * kw;
    let mut out = vec![0.0; co * hw];
    if kh == 1 && kw == 1 {
        gemm(co, kdim, hw, k, false, x, false, &mut out);
    } else {
        let cols = im2col(x, (ci, h, w), (kh, kw));
        gemm(co, kdim, hw, k, false, &cols, false, &mut out);
    }
    out
}

/// Adjoints of [`conv_same_forward`] with respect to input and kernel.
pub(crate) fn conv_same_backward(
    x: &[f64],
    k: &[f64],
    g: &[f64],
    (ci, h, w): (usize, usize, usize),
    (co, kh, kw): (usize, usize, usize),
) -> (Vec<f64>, Vec<f64>) {
    let hw = h * w;
    let kdim = ci * kh * kw;
    let mut gk = vec![0.0; k.len()];
    let mut gcols = vec![0.0; kdim * hw];
    if kh == 1 && kw == 1 {
        gemm(co, hw, kdim, g, false, x, true, &mut gk);
        gemm(kdim, co, hw, k, true, g, false, &mut gcols);
        return (gcols, gk);
    }
    let cols = im2col(x, (ci, h, w), (kh, kw));
    gemm(co, hw, kdim, g, false, &cols, true, &mut gk);
    gemm(kdim, co, hw, k, true, g, false, &mut gcols);
    (col2im(&gcols, (ci, h, w), (kh, kw)), gk)
}

/// Output positions `p` in `0..n` for which `p + shift` stays inside `0..n`.
fn valid_range(n: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (n as isize - shift).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

/// Complex circular convolution with a centred kernel:
/// `out[a*B+b][n] = sum_m x[a][n + c - m] * k[b][m]`, `c = (kh/2, kw/2)`.
/// `x` is `[2A,h,w]`, `k` is `[2B,kh,kw]`, output `[2AB,h,w]`.
pub(crate) fn cconv_forward(
    x: &[f64],
    k: &[f64],
    (a_n, h, w): (usize, usize, usize),
    (b_n, kh, kw): (usize, usize, usize),
) -> Vec<f64> {
    let hw = h * w;
    let kk = kh * kw;
    let mut out = vec![0.0; 2 * a_n * b_n * hw];
    let (cy, cx) = ((kh / 2) as isize, (kw / 2) as isize);
    for a in 0..a_n {
        let xr = &x[2 * a * hw..(2 * a + 1) * hw];
        let xi = &x[(2 * a + 1) * hw..(2 * a + 2) * hw];
        for b in 0..b_n {
            let kr = &k[2 * b * kk..(2 * b + 1) * kk];
            let ki = &k[(2 * b + 1) * kk..(2 * b + 2) * kk];
            let oc = a * b_n + b;
            let (or, oi) = out[2 * oc * hw..(2 * oc + 2) * hw].split_at_mut(hw);
            for my in 0..kh {
                let sy = cy - my as isize;
                for mx in 0..kw {
                    let (wr, wi) = (kr[my * kw + mx], ki[my * kw + mx]);
                    if wr == 0.0 && wi == 0.0 {
                        continue;
                    }
                    let sx = cx - mx as isize;
                    for y in 0..h {
                        let ys = wrap(y as isize + sy, h);
                        shifted_row_apply(&mut or[y * w..(y + 1) * w], &xr[ys * w..(ys + 1) * w], &xi[ys * w..(ys + 1) * w], sx, wr, -wi);
                        shifted_row_apply(&mut oi[y * w..(y + 1) * w], &xr[ys * w..(ys + 1) * w], &xi[ys * w..(ys + 1) * w], sx, wi, wr);
                    }
                }
            }
        }
    }
    out
}

/// Adjoints of [`cconv_forward`]: `gx = g (*) conj(k)` correlated, `gk = g . conj(x)` correlated.
pub(crate) fn cconv_backward(
    x: &[f64],
    k: &[f64],
    g: &[f64],
    (a_n, h, w): (usize, usize, usize),
    (b_n, kh, kw): (usize, usize, usize),
) -> (Vec<f64>, Vec<f64>) {
    let hw = h * w;
    let kk = kh * kw;
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; k.len()];
    let (cy, cx) = ((kh / 2) as isize, (kw / 2) as isize);
    for a in 0..a_n {
        let xr = &x[2 * a * hw..(2 * a + 1) * hw];
        let xi = &x[(2 * a + 1) * hw..(2 * a + 2) * hw];
        for b in 0..b_n {
            let oc = a * b_n + b;
            let gr = &g[2 * oc * hw..(2 * oc + 1) * hw];
            let gi = &g[(2 * oc + 1) * hw..(2 * oc + 2) * hw];
            for my in 0..kh {
                let sy = cy - my as isize;
                for mx in 0..kw {
                    let sx = cx - mx as isize;
                    let kidx = my * kw + mx;
                    let (wr, wi) = (k[2 * b * kk + kidx], k[(2 * b + 1) * kk + kidx]);
                    // gk[m] = sum_n g[n] * conj(x[n + s])
                    let (mut accr, mut acci) = (0.0, 0.0);
                    for y in 0..h {
                        let ys = wrap(y as isize + sy, h);
                        let grow_r = &gr[y * w..(y + 1) * w];
                        let grow_i = &gi[y * w..(y + 1) * w];
                        let xrow_r = &xr[ys * w..(ys + 1) * w];
                        let xrow_i = &xi[ys * w..(ys + 1) * w];
                        for xx in 0..w {
                            let xs = wrap(xx as isize + sx, w);
                            let (pr, pi) = (xrow_r[xs], xrow_i[xs]);
                            accr += grow_r[xx] * pr + grow_i[xx] * pi;
                            acci += grow_i[xx] * pr - grow_r[xx] * pi;
                        }
                    }
                    gk[2 * b * kk + kidx] += accr;
                    gk[(2 * b + 1) * kk + kidx] += acci;
                    if wr == 0.0 && wi == 0.0 {
                        continue;
                    }
                    // gx[n + s] += g[n] * conj(k[m])
                    let (gxr, gxi) = gx[2 * a * hw..(2 * a + 2) * hw].split_at_mut(hw);
                    for y in 0..h {
                        let ys = wrap(y as isize + sy, h);
                        let grow_r = &gr[y * w..(y + 1) * w];
                        let grow_i = &gi[y * w..(y + 1) * w];
                        for xx in 0..w {
                            let xs = wrap(xx as isize + sx, w);
                            gxr[ys * w + xs] += grow_r[xx] * wr + grow_i[xx] * wi;
                            gxi[ys * w + xs] += grow_i[xx] * wr - grow_r[xx] * wi;
                        }
                    }
                }
            }
        }
    }
    (gx, gk)
}

/// `dst[x] += cr * re[x + s] + ci * im[x + s]` with circular indexing.
#[inline]
fn shifted_row_apply(dst: &mut [f64], re: &[f64], im: &[f64], s: isize, cr: f64, ci: f64) {
    let w = dst.len();
    let s = wrap(s, w);
    // split at the wrap point so both halves are contiguous
    let split = w - s;
    {
        let (d, r, i) = (&mut dst[..split], &re[s..], &im[s..]);
        for ((d, r), i) in d.iter_mut().zip(r).zip(i) {
            *d += cr * r + ci * i;
        }
    }
    let (d, r, i) = (&mut dst[split..], &re[..s], &im[..s]);
    for ((d, r), i) in d.iter_mut().zip(r).zip(i) {
        *d += cr * r + ci * i;
    }
}

#[inline]
pub(crate) fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// 2x bilinear upsampling along one axis (half-pixel centres, edge clamped).
fn upsample_axis(src: &[f64], n: usize, stride: usize, dst: &mut [f64], dst_stride: usize) {
    for j in 0..n {
        let v = src[j * stride];
        let prev = src[j.saturating_sub(1) * stride];
        let next = src[(j + 1).min(n - 1) * stride];
        dst[2 * j * dst_stride] = 0.75 * v + 0.25 * prev;
        dst[(2 * j + 1) * dst_stride] = 0.75 * v + 0.25 * next;
    }
}

fn upsample_axis_adjoint(g: &[f64], n: usize, stride: usize, gx: &mut [f64], gx_stride: usize) {
    for j in 0..n {
        let (ge, go) = (g[2 * j * stride], g[(2 * j + 1) * stride]);
        gx[j * gx_stride] += 0.75 * (ge + go);
        gx[j.saturating_sub(1) * gx_stride] += 0.25 * ge;
        gx[(j + 1).min(n - 1) * gx_stride] += 0.25 * go;
    }
}

pub(crate) fn upsample_forward(x: &[f64], (c, h, w): (usize, usize, usize)) -> Vec<f64> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut rows = vec![0.0; c * h * w2];
    for ch in 0..c {
        for y in 0..h {
            let src = &x[(ch * h + y) * w..];
            let dst = &mut rows[(ch * h + y) * w2..];
            upsample_axis(src, w, 1, dst, 1);
        }
    }
    let mut out = vec![0.0; c * h2 * w2];
    for ch in 0..c {
        for xx in 0..w2 {
            let src = &rows[ch * h * w2 + xx..];
            let dst = &mut out[ch * h2 * w2 + xx..];
            upsample_axis(src, h, w2, dst, w2);
        }
    }
    out
}

pub(crate) fn upsample_backward(g: &[f64], (c, h, w): (usize, usize, usize)) -> Vec<f64> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut rows = vec![0.0; c * h * w2];
    for ch in 0..c {
        for xx in 0..w2 {
            let src = &g[ch * h2 * w2 + xx..];
            let dst = &mut rows[ch * h * w2 + xx..];
            upsample_axis_adjoint(src, h, w2, dst, w2);
        }
    }
    let mut gx = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            let src = &rows[(ch * h + y) * w2..];
            let dst = &mut gx[(ch * h + y) * w..];
            upsample_axis_adjoint(src, w, 1, dst, 1);
        }
    }
    gx
}

/// Index map of the 2-D reflection `n -> -n mod N` applied per channel.
pub(crate) fn conj_reflect(x: &[f64], (c, h, w): (usize, usize, usize)) -> Vec<f64> {
    let hw = h * w;
    let mut out = vec![0.0; x.len()];
    for ch in 0..c {
        let sign = if ch % 2 == 1 { -1.0 } else { 1.0 };
        for y in 0..h {
            let ry = (h - y) % h;
            for xx in 0..w {
                let rx = (w - xx) % w;
                out[ch * hw + y * w + xx] = sign * x[ch * hw + ry * w + rx];
            }
        }
    }
    out
}
