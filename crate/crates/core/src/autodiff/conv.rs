//! 1-D convolution and transposed convolution over `[batch, channels, time]`.

use super::graph::{numel, Graph, Op, Sink, Var};
use crate::error::{Error, Result};
use crate::linalg::gemm;

pub(crate) struct Conv1dSaved {
    x: Var,
    w: Var,
    b: Option<Var>,
    batch: usize,
    c_in: usize,
    c_out: usize,
    len_in: usize,
    len_out: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    groups: usize,
}

pub(crate) struct ConvTranspose1dSaved {
    x: Var,
    w: Var,
    b: Option<Var>,
    batch: usize,
    c_in: usize,
    c_out: usize,
    len_in: usize,
    len_out: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

/// Fills `col[(ci*k + j) * len_out + to] = x[ci, to*stride + j - padding]`.
fn im2col(x: &[f64], channels: usize, len_in: usize, kernel: usize, stride: usize, padding: usize, len_out: usize, col: &mut [f64]) {
    for ci in 0..channels {
        let xrow = &x[ci * len_in..(ci + 1) * len_in];
        for j in 0..kernel {
            let crow = &mut col[(ci * kernel + j) * len_out..(ci * kernel + j + 1) * len_out];
            for (to, c) in crow.iter_mut().enumerate() {
                let ti = (to * stride + j) as isize - padding as isize;
                *c = if ti >= 0 && (ti as usize) < len_in { xrow[ti as usize] } else { 0.0 };
            }
        }
    }
}

fn col2im(col: &[f64], channels: usize, len_in: usize, kernel: usize, stride: usize, padding: usize, len_out: usize, x: &mut [f64]) {
    for ci in 0..channels {
        let xrow = &mut x[ci * len_in..(ci + 1) * len_in];
        for j in 0..kernel {
            let crow = &col[(ci * kernel + j) * len_out..(ci * kernel + j + 1) * len_out];
            for (to, c) in crow.iter().enumerate() {
                let ti = (to * stride + j) as isize - padding as isize;
                if ti >= 0 && (ti as usize) < len_in {
                    xrow[ti as usize] += c;
                }
            }
        }
    }
}

/// A 1x1 convolution reads its input directly as the im2col matrix.
fn is_pointwise(kernel: usize, stride: usize, padding: usize) -> bool {
    kernel == 1 && stride == 1 && padding == 0
}

impl Graph {
    /// `x: [B, C_in, T]`, `w: [C_out, C_in / groups, k]`, `b: [C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize, groups: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 3 || sw.len() != 3 {
            return Err(Error::shape("conv1d", format!("input {sx:?}, weight {sw:?}")));
        }
        if stride == 0 || groups == 0 {
            return Err(Error::InvalidArgument("conv1d stride and groups must be positive".into()));
        }
        let (batch, c_in, len_in) = (sx[0], sx[1], sx[2]);
        let (c_out, cg_in, kernel) = (sw[0], sw[1], sw[2]);
        if c_in % groups != 0 || c_out % groups != 0 || cg_in * groups != c_in {
            return Err(Error::shape(
                "conv1d",
                format!("channels {c_in} -> {c_out} with weight {sw:?} and {groups} groups"),
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(Error::shape("conv1d", format!("bias {:?}", self.shape(b))));
            }
        }
        if len_in + 2 * padding < kernel {
            return Err(Error::InvalidArgument(format!(
                "conv1d: input length {len_in} with padding {padding} shorter than kernel {kernel}"
            )));
        }
        let len_out = (len_in + 2 * padding - kernel) / stride + 1;
        let cg_out = c_out / groups;
        let xv = self.value(x);
        let wv = self.value(w);
        let mut y = vec![0.0; batch * c_out * len_out];
        if cg_in == 1 && cg_out == 1 {
            // depthwise
            for bi in 0..batch {
                for c in 0..c_out {
                    let xrow = &xv[(bi * c_in + c) * len_in..(bi * c_in + c + 1) * len_in];
                    let wrow = &wv[c * kernel..(c + 1) * kernel];
                    let yrow = &mut y[(bi * c_out + c) * len_out..(bi * c_out + c + 1) * len_out];
                    for (to, out) in yrow.iter_mut().enumerate() {
                        let base = (to * stride) as isize - padding as isize;
                        let mut acc = 0.0;
                        for (j, wj) in wrow.iter().enumerate() {
                            let ti = base + j as isize;
                            if ti >= 0 && (ti as usize) < len_in {
                                acc += wj * xrow[ti as usize];
                            }
                        }
                        *out = acc;
                    }
                }
            }
        } else {
            let pointwise = is_pointwise(kernel, stride, padding);
            let mut col = if pointwise { Vec::new() } else { vec![0.0; cg_in * kernel * len_out] };
            for bi in 0..batch {
                for g in 0..groups {
                    let xg = &xv[(bi * c_in + g * cg_in) * len_in..(bi * c_in + (g + 1) * cg_in) * len_in];
                    let cols: &[f64] = if pointwise {
                        xg
                    } else {
                        im2col(xg, cg_in, len_in, kernel, stride, padding, len_out, &mut col);
                        &col
                    };
                    let wg = &wv[g * cg_out * cg_in * kernel..(g + 1) * cg_out * cg_in * kernel];
                    let yg = &mut y[(bi * c_out + g * cg_out) * len_out..(bi * c_out + (g + 1) * cg_out) * len_out];
                    gemm(cg_out, cg_in * kernel, len_out, wg, false, cols, false, yg, 0.0);
                }
            }
        }
        if let Some(b) = b {
            let bv = self.value(b).to_vec();
            for (i, row) in y.chunks_mut(len_out).enumerate() {
                let bias = bv[i % c_out];
                row.iter_mut().for_each(|v| *v += bias);
            }
        }
        let rg = self.requires_grad(x) || self.requires_grad(w) || b.is_some_and(|b| self.requires_grad(b));
        let saved = Conv1dSaved {
            x,
            w,
            b,
            batch,
            c_in,
            c_out,
            len_in,
            len_out,
            kernel,
            stride,
            padding,
            groups,
        };
        Ok(self.push(vec![batch, c_out, len_out], y, Op::Conv1d(saved), rg))
    }

    /// `x: [B, C_in, T]`, `w: [C_in, C_out, k]`, `b: [C_out]`; output length
    /// `(T - 1) * stride - 2 * padding + k`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 3 || sw.len() != 3 || sw[0] != sx[1] {
            return Err(Error::shape("conv_transpose1d", format!("input {sx:?}, weight {sw:?}")));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv_transpose1d stride must be positive".into()));
        }
        let (batch, c_in, len_in) = (sx[0], sx[1], sx[2]);
        let (c_out, kernel) = (sw[1], sw[2]);
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(Error::shape("conv_transpose1d", format!("bias {:?}", self.shape(b))));
            }
        }
        let full = (len_in - 1) * stride + kernel;
        if full <= 2 * padding {
            return Err(Error::InvalidArgument("conv_transpose1d: padding consumes the output".into()));
        }
        let len_out = full - 2 * padding;
        let xv = self.value(x);
        let wv = self.value(w);
        let mut y = vec![0.0; batch * c_out * len_out];
        let mut z = vec![0.0; c_out * kernel * len_in];
        for bi in 0..batch {
            let xb = &xv[bi * c_in * len_in..(bi + 1) * c_in * len_in];
            gemm(c_out * kernel, c_in, len_in, wv, true, xb, false, &mut z, 0.0);
            let yb = &mut y[bi * c_out * len_out..(bi + 1) * c_out * len_out];
            col2im(&z, c_out, len_out, kernel, stride, padding, len_in, yb);
        }
        if let Some(b) = b {
            let bv = self.value(b).to_vec();
            for (i, row) in y.chunks_mut(len_out).enumerate() {
                let bias = bv[i % c_out];
                row.iter_mut().for_each(|v| *v += bias);
            }
        }
        let rg = self.requires_grad(x) || self.requires_grad(w) || b.is_some_and(|b| self.requires_grad(b));
        let saved = ConvTranspose1dSaved {
            x,
            w,
            b,
            batch,
            c_in,
            c_out,
            len_in,
            len_out,
            kernel,
            stride,
            padding,
        };
        Ok(self.push(vec![batch, c_out, len_out], y, Op::ConvTranspose1d(saved), rg))
    }
}

fn bias_grad(g: &[f64], c_out: usize, len: usize) -> Vec<f64> {
    let mut gb = vec![0.0; c_out];
    for (i, row) in g.chunks(len).enumerate() {
        gb[i % c_out] += row.iter().sum::<f64>();
    }
    gb
}

pub(crate) fn conv1d_backward(graph: &Graph, s: &Conv1dSaved, g: &[f64], sink: &mut Sink<'_>) {
    let xv = graph.value(s.x);
    let wv = graph.value(s.w);
    let cg_in = s.c_in / s.groups;
    let cg_out = s.c_out / s.groups;
    let (k, lo, li) = (s.kernel, s.len_out, s.len_in);
    if let Some(b) = s.b {
        sink.add_with(b, || bias_grad(g, s.c_out, lo));
    }
    let want_x = sink.wants(s.x);
    let want_w = sink.wants(s.w);
    if !want_x && !want_w {
        return;
    }
    let mut gx = if want_x { vec![0.0; xv.len()] } else { Vec::new() };
    let mut gw = if want_w { vec![0.0; wv.len()] } else { Vec::new() };
    if cg_in == 1 && cg_out == 1 {
        for bi in 0..s.batch {
            for c in 0..s.c_out {
                let xoff = (bi * s.c_in + c) * li;
                let grow = &g[(bi * s.c_out + c) * lo..(bi * s.c_out + c + 1) * lo];
                for (to, gy) in grow.iter().enumerate() {
                    let base = (to * s.stride) as isize - s.padding as isize;
                    for j in 0..k {
                        let ti = base + j as isize;
                        if ti >= 0 && (ti as usize) < li {
                            if want_w {
                                gw[c * k + j] += gy * xv[xoff + ti as usize];
                            }
                            if want_x {
                                gx[xoff + ti as usize] += gy * wv[c * k + j];
                            }
                        }
                    }
                }
            }
        }
    } else {
        let pointwise = is_pointwise(k, s.stride, s.padding);
        let scratch = if pointwise { 0 } else { cg_in * k * lo };
        let mut col = vec![0.0; scratch];
        let mut dcol = vec![0.0; scratch];
        for bi in 0..s.batch {
            for grp in 0..s.groups {
                let xr = (bi * s.c_in + grp * cg_in) * li..(bi * s.c_in + (grp + 1) * cg_in) * li;
                let wr = grp * cg_out * cg_in * k..(grp + 1) * cg_out * cg_in * k;
                let gy = &g[(bi * s.c_out + grp * cg_out) * lo..(bi * s.c_out + (grp + 1) * cg_out) * lo];
                if want_w {
                    let cols: &[f64] = if pointwise {
                        &xv[xr.clone()]
                    } else {
                        im2col(&xv[xr.clone()], cg_in, li, k, s.stride, s.padding, lo, &mut col);
                        &col
                    };
                    gemm(cg_out, lo, cg_in * k, gy, false, cols, true, &mut gw[wr.clone()], 1.0);
                }
                if want_x {
                    if pointwise {
                        gemm(cg_in, cg_out, lo, &wv[wr], true, gy, false, &mut gx[xr], 0.0);
                    } else {
                        gemm(cg_in * k, cg_out, lo, &wv[wr], true, gy, false, &mut dcol, 0.0);
                        col2im(&dcol, cg_in, li, k, s.stride, s.padding, lo, &mut gx[xr]);
                    }
                }
            }
        }
    }
    if want_w {
        sink.add(s.w, &gw);
    }
    if want_x {
        sink.add(s.x, &gx);
    }
}

pub(crate) fn conv_transpose1d_backward(graph: &Graph, s: &ConvTranspose1dSaved, g: &[f64], sink: &mut Sink<'_>) {
    let xv = graph.value(s.x);
    let wv = graph.value(s.w);
    let (k, lo, li) = (s.kernel, s.len_out, s.len_in);
    if let Some(b) = s.b {
        sink.add_with(b, || bias_grad(g, s.c_out, lo));
    }
    let want_x = sink.wants(s.x);
    let want_w = sink.wants(s.w);
    if !want_x && !want_w {
        return;
    }
    let mut gx = if want_x { vec![0.0; xv.len()] } else { Vec::new() };
    let mut gw = if want_w { vec![0.0; numel(&[s.c_in, s.c_out, k])] } else { Vec::new() };
    let mut dz = vec![0.0; s.c_out * k * li];
    for bi in 0..s.batch {
        let gy = &g[bi * s.c_out * lo..(bi + 1) * s.c_out * lo];
        // dz is the im2col of the output cotangent, laid out like the forward scratch
        im2col(gy, s.c_out, lo, k, s.stride, s.padding, li, &mut dz);
        let xb = &xv[bi * s.c_in * li..(bi + 1) * s.c_in * li];
        if want_x {
            gemm(s.c_in, s.c_out * k, li, wv, false, &dz, false, &mut gx[bi * s.c_in * li..(bi + 1) * s.c_in * li], 0.0);
        }
        if want_w {
            gemm(s.c_in, li, s.c_out * k, xb, false, &dz, true, &mut gw, 1.0);
        }
    }
    if want_w {
        sink.add(s.w, &gw);
    }
    if want_x {
        sink.add(s.x, &gx);
    }
}
