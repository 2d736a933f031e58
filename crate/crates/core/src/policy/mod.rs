//! Policy networks with hand-written reverse mode.
//!
//! Parameters live in one flat `Vec<f64>`; an [`Architecture`] knows the
//! tensor layout. Every parameter mutation stamps the policy with a fresh
//! generation number, and a [`ForwardRecord`] remembers the generation it was
//! taken under, so a backward pass against changed parameters is rejected.

mod cnn;
mod mlp;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StsoError};
use crate::field::{Grid, StateVector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    /// Dense layers; `sizes = [input, hidden.., output]`. ReLU between
    /// layers, linear output.
    Mlp { sizes: Vec<usize> },
    /// conv → ReLU → pool → conv → ReLU → pool → dense (linear output).
    /// Same-padded odd kernels, 2×2 max-pool with ceil sizing.
    Cnn { channels: usize, height: usize, width: usize, filters: [usize; 2], kernel: usize, outputs: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorShape {
    fn new(name: &str, shape: Vec<usize>) -> Self {
        Self { name: name.to_string(), shape }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Xavier fan-in and fan-out; `None` for bias vectors.
    fn fans(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [out, inp] => Some((*inp, *out)),
            [out, inp, kh, kw] => Some((inp * kh * kw, out * kh * kw)),
            _ => None,
        }
    }
}

pub(crate) fn pooled(n: usize) -> usize {
    n.div_ceil(2)
}

impl Architecture {
    pub fn mlp(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Architecture::Mlp { sizes }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(StsoError::InvalidArgument(m.to_string()));
        match self {
            Architecture::Mlp { sizes } => {
                if sizes.len() < 2 || sizes.contains(&0) {
                    return bad("mlp needs at least input and output sizes, all positive");
                }
            }
            Architecture::Cnn { channels, height, width, filters, kernel, outputs } => {
                if [*channels, *height, *width, filters[0], filters[1], *outputs].contains(&0) {
                    return bad("cnn dimensions must be positive");
                }
                if kernel % 2 == 0 {
                    return bad("cnn kernel size must be odd");
                }
            }
        }
        Ok(())
    }

    pub fn shapes(&self) -> Vec<TensorShape> {
        match self {
            Architecture::Mlp { sizes } => sizes
                .windows(2)
                .enumerate()
                .flat_map(|(l, w)| {
                    [
                        TensorShape::new(&format!("w{}", l + 1), vec![w[1], w[0]]),
                        TensorShape::new(&format!("b{}", l + 1), vec![w[1]]),
                    ]
                })
                .collect(),
            Architecture::Cnn { channels, height, width, filters, kernel, outputs } => {
                let feat = filters[1] * pooled(pooled(*height)) * pooled(pooled(*width));
                vec![
                    TensorShape::new("conv1_w", vec![filters[0], *channels, *kernel, *kernel]),
                    TensorShape::new("conv1_b", vec![filters[0]]),
                    TensorShape::new("conv2_w", vec![filters[1], filters[0], *kernel, *kernel]),
                    TensorShape::new("conv2_b", vec![filters[1]]),
                    TensorShape::new("fc_w", vec![*outputs, feat]),
                    TensorShape::new("fc_b", vec![*outputs]),
                ]
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(TensorShape::len).sum()
    }

    pub fn input_len(&self) -> usize {
        match self {
            Architecture::Mlp { sizes } => sizes[0],
            Architecture::Cnn { channels, height, width, .. } => channels * height * width,
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            Architecture::Mlp { sizes } => *sizes.last().unwrap(),
            Architecture::Cnn { outputs, .. } => *outputs,
        }
    }
}

/// Uniform `±√(6/(fan_in + fan_out))` for weight tensors, zero for biases.
pub fn xavier_init<R: Rng + ?Sized>(shapes: &[TensorShape], rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(shapes.iter().map(TensorShape::len).sum());
    for s in shapes {
        match s.fans() {
            Some((fan_in, fan_out)) => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                out.extend((0..s.len()).map(|_| rng.random_range(-bound..=bound)));
            }
            None => out.extend(std::iter::repeat_n(0.0, s.len())),
        }
    }
    out
}

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct Policy {
    arch: Architecture,
    params: Vec<f64>,
    generation: u64,
}

impl PartialEq for Policy {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.params == other.params
    }
}

/// Intermediate values of one forward pass, needed for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardRecord {
    generation: u64,
    pub(crate) input: Vec<f64>,
    /// Post-activation outputs per layer (the last entry is the network output).
    pub(crate) activations: Vec<Vec<f64>>,
    /// Winning input index per pooled cell, one table per pool stage.
    pub(crate) argmax: Vec<Vec<usize>>,
}

impl ForwardRecord {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradients of a scalar with respect to parameters (flat, same layout as the
/// policy) and to the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

impl Policy {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let params = vec![0.0; arch.param_count()];
        Ok(Self { arch, params, generation: next_generation() })
    }

    /// Xavier weights; with `zero_output` the final layer starts at zero.
    pub fn xavier<R: Rng + ?Sized>(arch: Architecture, zero_output: bool, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.shapes();
        let mut params = xavier_init(&shapes, rng);
        if zero_output {
            let tail: usize = shapes[shapes.len() - 2..].iter().map(TensorShape::len).sum();
            let n = params.len();
            params[n - tail..].iter_mut().for_each(|p| *p = 0.0);
        }
        Ok(Self { arch, params, generation: next_generation() })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(StsoError::ShapeMismatch { expected: arch.param_count(), got: params.len() });
        }
        Ok(Self { arch, params, generation: next_generation() })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Mutate parameters in place; invalidates earlier forward records.
    pub fn update_params(&mut self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.params);
        self.generation = next_generation();
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.arch.input_len() {
            return Err(StsoError::ShapeMismatch { expected: self.arch.input_len(), got: input.len() });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(match &self.arch {
            Architecture::Mlp { sizes } => mlp::forward(sizes, &self.params, input),
            Architecture::Cnn { .. } => cnn::forward(&cnn::Dims::from(&self.arch), &self.params, input, false).0,
        })
    }

    pub fn forward_state(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.forward(&state.flatten())
    }

    pub fn forward_recorded(&self, input: &[f64]) -> Result<ForwardRecord> {
        self.check_input(input)?;
        let (activations, argmax) = match &self.arch {
            Architecture::Mlp { sizes } => (mlp::forward_all(sizes, &self.params, input), Vec::new()),
            Architecture::Cnn { .. } => {
                let (_, rec) = cnn::forward(&cnn::Dims::from(&self.arch), &self.params, input, true);
                let rec = rec.expect("recording requested");
                (rec.0, rec.1)
            }
        };
        Ok(ForwardRecord { generation: self.generation, input: input.to_vec(), activations, argmax })
    }

    /// Add `upstreamᵀ ∂output/∂θ` into `grad` (flat parameter layout).
    pub fn accumulate_param_gradient(&self, record: &ForwardRecord, upstream: &[f64], grad: &mut [f64]) -> Result<()> {
        self.check_record(record, upstream)?;
        if grad.len() != self.params.len() {
            return Err(StsoError::ShapeMismatch { expected: self.params.len(), got: grad.len() });
        }
        match &self.arch {
            Architecture::Mlp { sizes } => mlp::backward(sizes, &self.params, record, upstream, grad, None),
            Architecture::Cnn { .. } => {
                cnn::backward(&cnn::Dims::from(&self.arch), &self.params, record, upstream, grad, None)
            }
        }
        Ok(())
    }

    pub fn backward(&self, record: &ForwardRecord, upstream: &[f64]) -> Result<ParameterGradients> {
        self.check_record(record, upstream)?;
        let mut params = vec![0.0; self.params.len()];
        let mut input = vec![0.0; self.arch.input_len()];
        match &self.arch {
            Architecture::Mlp { sizes } => mlp::backward(sizes, &self.params, record, upstream, &mut params, Some(&mut input)),
            Architecture::Cnn { .. } => cnn::backward(
                &cnn::Dims::from(&self.arch),
                &self.params,
                record,
                upstream,
                &mut params,
                Some(&mut input),
            ),
        }
        Ok(ParameterGradients { params, input })
    }

    fn check_record(&self, record: &ForwardRecord, upstream: &[f64]) -> Result<()> {
        if record.generation != self.generation {
            return Err(StsoError::StaleRecording(format!(
                "recorded under generation {}, policy is at {}",
                record.generation, self.generation
            )));
        }
        if upstream.len() != self.arch.output_len() {
            return Err(StsoError::ShapeMismatch { expected: self.arch.output_len(), got: upstream.len() });
        }
        Ok(())
    }

    /// Network outputs for every one-hot input: row `j` equals
    /// `forward(e_j)`. Only the column of the first layer that `e_j` activates
    /// is touched; later layers run densely.
    pub fn sparse_forward_pass(&self) -> Vec<Vec<f64>> {
        match &self.arch {
            Architecture::Mlp { sizes } => mlp::sparse_forward(sizes, &self.params),
            Architecture::Cnn { .. } => cnn::sparse_forward(&cnn::Dims::from(&self.arch), &self.params),
        }
    }

    /// Raw little-endian f64 stream plus the JSON header describing it.
    pub fn to_blob(&self) -> (BlobHeader, Vec<u8>) {
        let header = BlobHeader {
            format: "f64-le".to_string(),
            architecture: self.arch.clone(),
            tensors: self.arch.shapes(),
            count: self.params.len(),
        };
        (header, f64s_to_le_bytes(&self.params))
    }

    pub fn from_blob(header: &BlobHeader, bytes: &[u8]) -> Result<Self> {
        if header.format != "f64-le" {
            return Err(StsoError::InvalidArgument(format!("unsupported blob format {}", header.format)));
        }
        if header.tensors != header.architecture.shapes() {
            return Err(StsoError::InvalidArgument("blob tensor list does not match its architecture".into()));
        }
        let params = le_bytes_to_f64s(bytes)?;
        if params.len() != header.count {
            return Err(StsoError::ShapeMismatch { expected: header.count, got: params.len() });
        }
        Self::from_params(header.architecture.clone(), params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobHeader {
    pub format: String,
    pub architecture: Architecture,
    pub tensors: Vec<TensorShape>,
    pub count: usize,
}

pub fn f64s_to_le_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn le_bytes_to_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(StsoError::InvalidArgument(format!("blob length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// `Σ_j table[j] · f[j] · cell_volume`: the pixel-wise quadrature of the
/// network response against `f`, one value per output.
pub fn pixelwise_quadrature(table: &[Vec<f64>], f: &[f64], grid: &Grid) -> Vec<f64> {
    let outputs = table.first().map_or(0, Vec::len);
    let dv = grid.cell_volume();
    let mut acc = vec![0.0; outputs];
    for (row, fj) in table.iter().zip(f) {
        for (a, t) in acc.iter_mut().zip(row) {
            *a += t * fj * dv;
        }
    }
    acc
}

#[cfg(test)]
mod tests;
