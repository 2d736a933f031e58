use super::ForwardRecord;

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `out = b + W x`, bias first so single-column evaluation is bitwise equal.
fn dense(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let n_in = x.len();
    for (i, bi) in b.iter().enumerate() {
        let row = &w[i * n_in..(i + 1) * n_in];
        let mut acc = *bi;
        for (wk, xk) in row.iter().zip(x) {
            acc += wk * xk;
        }
        out.push(acc);
    }
}

fn layer_slices<'a>(sizes: &[usize], params: &'a [f64]) -> Vec<(&'a [f64], &'a [f64])> {
    let mut off = 0;
    sizes
        .windows(2)
        .map(|s| {
            let w = &params[off..off + s[0] * s[1]];
            off += s[0] * s[1];
            let b = &params[off..off + s[1]];
            off += s[1];
            (w, b)
        })
        .collect()
}

fn finish(layers: &[(&[f64], &[f64])], mut h: Vec<f64>, from: usize) -> Vec<f64> {
    let last = layers.len() - 1;
    let mut next = Vec::new();
    for (l, (w, b)) in layers.iter().enumerate().skip(from) {
        dense(w, b, &h, &mut next);
        if l < last {
            next.iter_mut().for_each(|v| *v = relu(*v));
        }
        std::mem::swap(&mut h, &mut next);
    }
    h
}

pub(super) fn forward(sizes: &[usize], params: &[f64], input: &[f64]) -> Vec<f64> {
    finish(&layer_slices(sizes, params), input.to_vec(), 0)
}

pub(super) fn forward_all(sizes: &[usize], params: &[f64], input: &[f64]) -> Vec<Vec<f64>> {
    let layers = layer_slices(sizes, params);
    let last = layers.len() - 1;
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    for (l, (w, b)) in layers.iter().enumerate() {
        let x = if l == 0 { input } else { acts[l - 1].as_slice() };
        let mut out = Vec::new();
        dense(w, b, x, &mut out);
        if l < last {
            out.iter_mut().for_each(|v| *v = relu(*v));
        }
        acts.push(out);
    }
    acts
}

pub(super) fn backward(
    sizes: &[usize],
    params: &[f64],
    rec: &ForwardRecord,
    upstream: &[f64],
    grad: &mut [f64],
    input_grad: Option<&mut [f64]>,
) {
    let layers = layer_slices(sizes, params);
    let mut offsets = Vec::with_capacity(layers.len());
    let mut off = 0;
    for s in sizes.windows(2) {
        offsets.push(off);
        off += s[0] * s[1] + s[1];
    }
    let mut delta = upstream.to_vec();
    let mut input_grad = input_grad;
    for l in (0..layers.len()).rev() {
        let (w, _) = layers[l];
        let x = if l == 0 { rec.input.as_slice() } else { rec.activations[l - 1].as_slice() };
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let (gw, gb) = grad[offsets[l]..offsets[l] + n_in * n_out + n_out].split_at_mut(n_in * n_out);
        for i in 0..n_out {
            let d = delta[i];
            if d == 0.0 {
                continue;
            }
            gb[i] += d;
            for (g, xk) in gw[i * n_in..(i + 1) * n_in].iter_mut().zip(x) {
                *g += d * xk;
            }
        }
        if l == 0 && input_grad.is_none() {
            break;
        }
        let mut prev = vec![0.0; n_in];
        for i in 0..n_out {
            let d = delta[i];
            if d == 0.0 {
                continue;
            }
            for (p, wk) in prev.iter_mut().zip(&w[i * n_in..(i + 1) * n_in]) {
                *p += d * wk;
            }
        }
        if l == 0 {
            if let Some(g) = input_grad.as_deref_mut() {
                for (gi, p) in g.iter_mut().zip(&prev) {
                    *gi += p;
                }
            }
        } else {
            // ReLU with subgradient 0 at the kink.
            for (p, a) in prev.iter_mut().zip(&rec.activations[l - 1]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
        }
        delta = prev;
    }
}

pub(super) fn sparse_forward(sizes: &[usize], params: &[f64]) -> Vec<Vec<f64>> {
    let layers = layer_slices(sizes, params);
    let (w, b) = layers[0];
    let n_in = sizes[0];
    let single = layers.len() == 1;
    (0..n_in)
        .map(|j| {
            let mut h: Vec<f64> = b.iter().enumerate().map(|(i, bi)| bi + w[i * n_in + j]).collect();
            if single {
                return h;
            }
            h.iter_mut().for_each(|v| *v = relu(*v));
            finish(&layers, h, 1)
        })
        .collect()
}
