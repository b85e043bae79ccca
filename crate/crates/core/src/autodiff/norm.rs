//! Channel layer norm, global response normalization and 2-D average pooling.

use super::graph::{Graph, Op, Sink, Var};
use crate::error::{Error, Result};

pub(crate) struct LayerNormSaved {
    x: Var,
    gamma: Var,
    beta: Var,
    dims: [usize; 3],
    xhat: Vec<f64>,
    /// One entry per `(batch, time)` position.
    rstd: Vec<f64>,
}

pub(crate) struct GrnSaved {
    x: Var,
    gamma: Var,
    beta: Var,
    dims: [usize; 3],
    /// `‖x[b, c, :]‖₂`, `[B, C]`.
    norms: Vec<f64>,
    /// `mean_c norms + eps`, `[B]`.
    denom: Vec<f64>,
}

/// GRN divisor offset.
pub const GRN_EPS: f64 = 1e-6;

fn rank3(graph: &Graph, op: &'static str, x: Var) -> Result<[usize; 3]> {
    match graph.shape(x) {
        &[a, b, c] => Ok([a, b, c]),
        s => Err(Error::shape(op, format!("expected [B, C, T], got {s:?}"))),
    }
}

fn channel_params(graph: &Graph, op: &'static str, c: usize, gamma: Var, beta: Var) -> Result<()> {
    if graph.shape(gamma) != [c] || graph.shape(beta) != [c] {
        return Err(Error::shape(
            op,
            format!("gain {:?} / bias {:?} for {c} channels", graph.shape(gamma), graph.shape(beta)),
        ));
    }
    Ok(())
}

impl Graph {
    /// Normalizes `[B, C, T]` over the channel axis at every `(b, t)`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let dims = rank3(self, "layer_norm", x)?;
        let [b, c, t] = dims;
        channel_params(self, "layer_norm", c, gamma, beta)?;
        let xv = self.value(x);
        let gv = self.value(gamma);
        let bv = self.value(beta);
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = vec![0.0; b * t];
        let mut y = vec![0.0; xv.len()];
        for bi in 0..b {
            let base = bi * c * t;
            for ti in 0..t {
                let mut mean = 0.0;
                for ci in 0..c {
                    mean += xv[base + ci * t + ti];
                }
                mean /= c as f64;
                let mut var = 0.0;
                for ci in 0..c {
                    let d = xv[base + ci * t + ti] - mean;
                    var += d * d;
                }
                var /= c as f64;
                let r = 1.0 / (var + eps).sqrt();
                rstd[bi * t + ti] = r;
                for ci in 0..c {
                    let i = base + ci * t + ti;
                    let xh = (xv[i] - mean) * r;
                    xhat[i] = xh;
                    y[i] = xh * gv[ci] + bv[ci];
                }
            }
        }
        let rg = self.requires_grad(x) || self.requires_grad(gamma) || self.requires_grad(beta);
        let saved = LayerNormSaved {
            x,
            gamma,
            beta,
            dims,
            xhat,
            rstd,
        };
        Ok(self.push(dims.to_vec(), y, Op::LayerNorm(saved), rg))
    }

    /// Global response normalization on `[B, C, T]` with an identity path:
    /// `y = gamma_c · x · N_c + beta_c + x`, where
    /// `N_c = ‖x_c‖₂ / (mean_c' ‖x_c'‖₂ + 1e-6)` and norms run over time.
    pub fn grn(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let dims = rank3(self, "grn", x)?;
        let [b, c, t] = dims;
        channel_params(self, "grn", c, gamma, beta)?;
        let xv = self.value(x);
        let gv = self.value(gamma);
        let bv = self.value(beta);
        let mut norms = vec![0.0; b * c];
        let mut denom = vec![0.0; b];
        for bi in 0..b {
            for ci in 0..c {
                let row = &xv[(bi * c + ci) * t..(bi * c + ci + 1) * t];
                norms[bi * c + ci] = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            }
            denom[bi] = norms[bi * c..(bi + 1) * c].iter().sum::<f64>() / c as f64 + GRN_EPS;
        }
        let mut y = vec![0.0; xv.len()];
        for bi in 0..b {
            for ci in 0..c {
                let n = norms[bi * c + ci] / denom[bi];
                let off = (bi * c + ci) * t;
                for ti in 0..t {
                    let v = xv[off + ti];
                    y[off + ti] = gv[ci] * v * n + bv[ci] + v;
                }
            }
        }
        let rg = self.requires_grad(x) || self.requires_grad(gamma) || self.requires_grad(beta);
        let saved = GrnSaved {
            x,
            gamma,
            beta,
            dims,
            norms,
            denom,
        };
        Ok(self.push(dims.to_vec(), y, Op::Grn(saved), rg))
    }

    /// Stride-1, same-size average pooling over the last two axes. Windows
    /// are clipped at the borders and averaged over valid entries only.
    pub fn avg_pool2d(&mut self, x: Var, kh: usize, kw: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(Error::shape("avg_pool2d", format!("need rank >= 2, got {shape:?}")));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::InvalidArgument(format!("avg_pool2d kernel ({kh}, {kw}) must be odd")));
        }
        let value = avg_pool2d_forward(self.value(x), &shape, kh, kw);
        let rg = self.requires_grad(x);
        Ok(self.push(shape, value, Op::AvgPool2d { x, kh, kw }, rg))
    }
}

pub(crate) fn avg_pool2d_forward(x: &[f64], shape: &[usize], kh: usize, kw: usize) -> Vec<f64> {
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let (rh, rw) = (kh / 2, kw / 2);
    let mut out = vec![0.0; x.len()];
    for (plane, o) in x.chunks(h * w).zip(out.chunks_mut(h * w)) {
        for i in 0..h {
            let (i0, i1) = (i.saturating_sub(rh), (i + rh).min(h - 1));
            for j in 0..w {
                let (j0, j1) = (j.saturating_sub(rw), (j + rw).min(w - 1));
                let mut acc = 0.0;
                for ii in i0..=i1 {
                    for jj in j0..=j1 {
                        acc += plane[ii * w + jj];
                    }
                }
                o[i * w + j] = acc / ((i1 - i0 + 1) * (j1 - j0 + 1)) as f64;
            }
        }
    }
    out
}

pub(crate) fn avg_pool2d_adjoint(g: &[f64], shape: &[usize], kh: usize, kw: usize) -> Vec<f64> {
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let (rh, rw) = (kh / 2, kw / 2);
    let mut gx = vec![0.0; g.len()];
    for (gp, xp) in g.chunks(h * w).zip(gx.chunks_mut(h * w)) {
        for i in 0..h {
            let (i0, i1) = (i.saturating_sub(rh), (i + rh).min(h - 1));
            for j in 0..w {
                let (j0, j1) = (j.saturating_sub(rw), (j + rw).min(w - 1));
                let share = gp[i * w + j] / ((i1 - i0 + 1) * (j1 - j0 + 1)) as f64;
                for ii in i0..=i1 {
                    for jj in j0..=j1 {
                        xp[ii * w + jj] += share;
                    }
                }
            }
        }
    }
    gx
}

pub(crate) fn layer_norm_backward(graph: &Graph, s: &LayerNormSaved, g: &[f64], sink: &mut Sink<'_>) {
    let [b, c, t] = s.dims;
    let gv = graph.value(s.gamma);
    sink.add_with(s.gamma, || {
        let mut gg = vec![0.0; c];
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * t;
                for ti in 0..t {
                    gg[ci] += g[off + ti] * s.xhat[off + ti];
                }
            }
        }
        gg
    });
    sink.add_with(s.beta, || {
        let mut gb = vec![0.0; c];
        for (i, row) in g.chunks(t).enumerate() {
            gb[i % c] += row.iter().sum::<f64>();
        }
        gb
    });
    sink.add_with(s.x, || {
        let mut gx = vec![0.0; g.len()];
        for bi in 0..b {
            let base = bi * c * t;
            for ti in 0..t {
                let mut mean_d = 0.0;
                let mut mean_dx = 0.0;
                for ci in 0..c {
                    let i = base + ci * t + ti;
                    let d = g[i] * gv[ci];
                    mean_d += d;
                    mean_dx += d * s.xhat[i];
                }
                mean_d /= c as f64;
                mean_dx /= c as f64;
                let r = s.rstd[bi * t + ti];
                for ci in 0..c {
                    let i = base + ci * t + ti;
                    let d = g[i] * gv[ci];
                    gx[i] = r * (d - mean_d - s.xhat[i] * mean_dx);
                }
            }
        }
        gx
    });
}

pub(crate) fn grn_backward(graph: &Graph, s: &GrnSaved, g: &[f64], sink: &mut Sink<'_>) {
    let [b, c, t] = s.dims;
    let xv = graph.value(s.x);
    let gv = graph.value(s.gamma);
    sink.add_with(s.gamma, || {
        let mut gg = vec![0.0; c];
        for bi in 0..b {
            for ci in 0..c {
                let n = s.norms[bi * c + ci] / s.denom[bi];
                let off = (bi * c + ci) * t;
                let dot: f64 = (0..t).map(|ti| g[off + ti] * xv[off + ti]).sum();
                gg[ci] += dot * n;
            }
        }
        gg
    });
    sink.add_with(s.beta, || {
        let mut gb = vec![0.0; c];
        for (i, row) in g.chunks(t).enumerate() {
            gb[i % c] += row.iter().sum::<f64>();
        }
        gb
    });
    sink.add_with(s.x, || {
        let mut gx = vec![0.0; g.len()];
        for bi in 0..b {
            let m = s.denom[bi];
            // dL/dN_c
            let dn: Vec<f64> = (0..c)
                .map(|ci| {
                    let off = (bi * c + ci) * t;
                    gv[ci] * (0..t).map(|ti| g[off + ti] * xv[off + ti]).sum::<f64>()
                })
                .collect();
            let cross: f64 = (0..c).map(|ci| dn[ci] * s.norms[bi * c + ci]).sum::<f64>() / (m * m * c as f64);
            for ci in 0..c {
                let off = (bi * c + ci) * t;
                let norm = s.norms[bi * c + ci];
                let n = norm / m;
                // dL/d‖x_c‖
                let dnorm = dn[ci] / m - cross;
                let radial = if norm > 0.0 { dnorm / norm } else { 0.0 };
                for ti in 0..t {
                    gx[off + ti] = g[off + ti] * (1.0 + gv[ci] * n) + radial * xv[off + ti];
                }
            }
        }
        gx
    });
}
