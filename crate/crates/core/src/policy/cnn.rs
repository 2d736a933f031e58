use super::{pooled, Architecture, ForwardRecord};

#[derive(Debug, Clone, Copy)]
pub(super) struct Dims {
    channels: usize,
    h: usize,
    w: usize,
    f1: usize,
    f2: usize,
    k: usize,
    outputs: usize,
}

impl From<&Architecture> for Dims {
    fn from(arch: &Architecture) -> Self {
        match arch {
            Architecture::Cnn { channels, height, width, filters, kernel, outputs } => Dims {
                channels: *channels,
                h: *height,
                w: *width,
                f1: filters[0],
                f2: filters[1],
                k: *kernel,
                outputs: *outputs,
            },
            Architecture::Mlp { .. } => unreachable!("not a convolutional architecture"),
        }
    }
}

struct Params<'a> {
    c1w: &'a [f64],
    c1b: &'a [f64],
    c2w: &'a [f64],
    c2b: &'a [f64],
    fcw: &'a [f64],
    fcb: &'a [f64],
}

/// Offsets of the six tensors in the flat layout.
fn offsets(d: &Dims) -> [usize; 7] {
    let (h2, w2) = (pooled(pooled(d.h)), pooled(pooled(d.w)));
    let sizes = [
        d.f1 * d.channels * d.k * d.k,
        d.f1,
        d.f2 * d.f1 * d.k * d.k,
        d.f2,
        d.outputs * d.f2 * h2 * w2,
        d.outputs,
    ];
    let mut off = [0; 7];
    for i in 0..6 {
        off[i + 1] = off[i] + sizes[i];
    }
    off
}

fn split<'a>(d: &Dims, p: &'a [f64]) -> Params<'a> {
    let o = offsets(d);
    Params {
        c1w: &p[o[0]..o[1]],
        c1b: &p[o[1]..o[2]],
        c2w: &p[o[2]..o[3]],
        c2b: &p[o[3]..o[4]],
        fcw: &p[o[4]..o[5]],
        fcb: &p[o[5]..o[6]],
    }
}

/// Same-padded stride-1 convolution; bias added first, taps in `(c, dy, dx)` order.
fn conv(x: &[f64], cin: usize, h: usize, w: usize, wt: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let pad = k / 2;
    let cout = b.len();
    let mut out = vec![0.0; cout * h * w];
    // Each output still sums bias first, then taps in (c, dy, dx) order; the
    // loops are arranged so the innermost one runs over a contiguous row.
    for f in 0..cout {
        let plane = &mut out[f * h * w..(f + 1) * h * w];
        plane.iter_mut().for_each(|o| *o = b[f]);
        for c in 0..cin {
            let input = &x[c * h * w..(c + 1) * h * w];
            for dy in 0..k {
                let (y0, y1) = valid_range(dy, pad, h);
                for dx in 0..k {
                    let (x0, x1) = valid_range(dx, pad, w);
                    let tap = wt[((f * cin + c) * k + dy) * k + dx];
                    for y in y0..y1 {
                        let iy = y + dy - pad;
                        let src = &input[iy * w + x0 + dx - pad..iy * w + x1 + dx - pad];
                        let dst = &mut plane[y * w + x0..y * w + x1];
                        for (o, v) in dst.iter_mut().zip(src) {
                            *o += tap * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Output coordinates `o` for which `o + d − pad` lands inside `0..n`.
fn valid_range(d: usize, pad: usize, n: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(d);
    let hi = (n + pad).saturating_sub(d).min(n);
    (lo, hi.max(lo))
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x <= 0.0 {
            *x = 0.0;
        }
    }
}

/// 2×2 max-pool with ceil sizing; ties go to the first index in scan order.
fn pool(x: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (ph, pw) = (pooled(h), pooled(w));
    let mut out = Vec::with_capacity(c * ph * pw);
    let mut arg = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        for py in 0..ph {
            for px in 0..pw {
                let mut best = usize::MAX;
                for y in 2 * py..(2 * py + 2).min(h) {
                    for xx in 2 * px..(2 * px + 2).min(w) {
                        let i = (ch * h + y) * w + xx;
                        if best == usize::MAX || x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

fn fc(x: &[f64], wt: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(o, bo)| {
            let mut acc = *bo;
            for (wk, xk) in wt[o * n..(o + 1) * n].iter().zip(x) {
                acc += wk * xk;
            }
            acc
        })
        .collect()
}

type Recording = (Vec<Vec<f64>>, Vec<Vec<usize>>);

/// Layers after the first convolution's pre-activation.
fn tail(d: &Dims, p: &Params, mut a1: Vec<f64>, record: bool) -> (Vec<f64>, Option<Recording>) {
    relu_in_place(&mut a1);
    let (p1, arg1) = pool(&a1, d.f1, d.h, d.w);
    let (h1, w1) = (pooled(d.h), pooled(d.w));
    let mut a2 = conv(&p1, d.f1, h1, w1, p.c2w, p.c2b, d.k);
    relu_in_place(&mut a2);
    let (p2, arg2) = pool(&a2, d.f2, h1, w1);
    let out = fc(&p2, p.fcw, p.fcb);
    if record {
        let acts = vec![a1, p1, a2, p2, out.clone()];
        (out, Some((acts, vec![arg1, arg2])))
    } else {
        (out, None)
    }
}

pub(super) fn forward(d: &Dims, params: &[f64], input: &[f64], record: bool) -> (Vec<f64>, Option<Recording>) {
    let p = split(d, params);
    let a1 = conv(input, d.channels, d.h, d.w, p.c1w, p.c1b, d.k);
    tail(d, &p, a1, record)
}

pub(super) fn sparse_forward(d: &Dims, params: &[f64]) -> Vec<Vec<f64>> {
    let p = split(d, params);
    let pad = d.k / 2;
    let plane = d.h * d.w;
    let mut base = vec![0.0; d.f1 * plane];
    for f in 0..d.f1 {
        base[f * plane..(f + 1) * plane].iter_mut().for_each(|v| *v = p.c1b[f]);
    }
    (0..d.channels * plane)
        .map(|j| {
            let (c, iy, ix) = (j / plane, (j % plane) / d.w, j % d.w);
            let mut a1 = base.clone();
            // Only outputs whose receptive field covers (iy, ix) pick up a tap.
            for f in 0..d.f1 {
                for dy in 0..d.k {
                    let y = iy + pad;
                    if y < dy || y - dy >= d.h {
                        continue;
                    }
                    let y = y - dy;
                    for dx in 0..d.k {
                        let x = ix + pad;
                        if x < dx || x - dx >= d.w {
                            continue;
                        }
                        let x = x - dx;
                        a1[(f * d.h + y) * d.w + x] += p.c1w[((f * d.channels + c) * d.k + dy) * d.k + dx];
                    }
                }
            }
            tail(d, &p, a1, false).0
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    wt: &[f64],
    k: usize,
    cout: usize,
    dout: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    let pad = k / 2;
    for f in 0..cout {
        for y in 0..h {
            for xx in 0..w {
                let d = dout[(f * h + y) * w + xx];
                if d == 0.0 {
                    continue;
                }
                gb[f] += d;
                for c in 0..cin {
                    for ky in 0..k {
                        let iy = y + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let iy = iy - pad;
                        for kx in 0..k {
                            let ix = xx + kx;
                            if ix < pad || ix - pad >= w {
                                continue;
                            }
                            let xi = (c * h + iy) * w + ix - pad;
                            let wi = ((f * cin + c) * k + ky) * k + kx;
                            gw[wi] += d * x[xi];
                            if let Some(dx) = dx.as_deref_mut() {
                                dx[xi] += d * wt[wi];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(super) fn backward(
    d: &Dims,
    params: &[f64],
    rec: &ForwardRecord,
    upstream: &[f64],
    grad: &mut [f64],
    input_grad: Option<&mut [f64]>,
) {
    let p = split(d, params);
    let o = offsets(d);
    let [a1, p1, a2, p2, _] = [0, 1, 2, 3, 4].map(|i| rec.activations[i].as_slice());
    let (h1, w1) = (pooled(d.h), pooled(d.w));

    let (g_head, g_fc) = grad.split_at_mut(o[4]);
    let (gfcw, gfcb) = g_fc.split_at_mut(o[5] - o[4]);
    let nfeat = p2.len();
    let mut dp2 = vec![0.0; nfeat];
    for (out, &u) in upstream.iter().enumerate() {
        if u == 0.0 {
            continue;
        }
        gfcb[out] += u;
        for k in 0..nfeat {
            gfcw[out * nfeat + k] += u * p2[k];
            dp2[k] += u * p.fcw[out * nfeat + k];
        }
    }

    let mut da2 = vec![0.0; a2.len()];
    for (i, &src) in rec.argmax[1].iter().enumerate() {
        da2[src] += dp2[i];
    }
    for (g, a) in da2.iter_mut().zip(a2) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }

    let (g_c1, g_c2) = g_head.split_at_mut(o[2]);
    let (gc1w, gc1b) = g_c1.split_at_mut(o[1]);
    let (gc2w, gc2b) = g_c2.split_at_mut(o[3] - o[2]);
    let mut dp1 = vec![0.0; p1.len()];
    conv_backward(p1, d.f1, h1, w1, p.c2w, d.k, d.f2, &da2, gc2w, gc2b, Some(&mut dp1));

    let mut da1 = vec![0.0; a1.len()];
    for (i, &src) in rec.argmax[0].iter().enumerate() {
        da1[src] += dp1[i];
    }
    for (g, a) in da1.iter_mut().zip(a1) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
    conv_backward(&rec.input, d.channels, d.h, d.w, p.c1w, d.k, d.f1, &da1, gc1w, gc1b, input_grad);
}
