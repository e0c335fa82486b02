//! Fully connected network over a flat parameter vector.
//!
//! Parameters are stored layer by layer; each layer holds its weight matrix
//! (`out x in`, row-major) followed by its bias vector. Hidden layers use a
//! softplus activation; the last layer is linear and callers apply their own
//! output activation.

use thiserror::Error;

use crate::sampler::SampleRng;

#[derive(Debug, Error, PartialEq)]
pub enum MlpError {
    #[error("network needs at least an input and an output layer, got dims {0:?}")]
    TooFewLayers(Vec<usize>),
    #[error("layer widths must be non-zero: {0:?}")]
    ZeroWidth(Vec<usize>),
    #[error("dims {dims:?} need {expected} parameters, got {got}")]
    ParamCount {
        dims: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("network expects {expected} inputs, got {got}")]
    InputDim { expected: usize, got: usize },
    #[error("network outputs {got} values, expected {expected}")]
    OutputDim { expected: usize, got: usize },
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for positive arguments.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpWeights {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    /// Input followed by every layer's post-activation output.
    activations: Vec<Vec<f64>>,
    /// Pre-activation values of each layer.
    pre: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl MlpWeights {
    pub fn param_count_for(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn check_dims(dims: &[usize]) -> Result<(), MlpError> {
        if dims.len() < 2 {
            return Err(MlpError::TooFewLayers(dims.to_vec()));
        }
        if dims.contains(&0) {
            return Err(MlpError::ZeroWidth(dims.to_vec()));
        }
        Ok(())
    }

    pub fn new(dims: Vec<usize>, params: Vec<f64>) -> Result<Self, MlpError> {
        Self::check_dims(&dims)?;
        let expected = Self::param_count_for(&dims);
        if params.len() != expected {
            return Err(MlpError::ParamCount {
                dims,
                expected,
                got: params.len(),
            });
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(MlpError::NonFinite(i));
        }
        Ok(Self { dims, params })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self, MlpError> {
        Self::check_dims(&dims)?;
        let n = Self::param_count_for(&dims);
        Ok(Self {
            dims,
            params: vec![0.0; n],
        })
    }

    /// Uniform Glorot-style initialisation with zero biases.
    pub fn random(dims: Vec<usize>, seed: u64) -> Result<Self, MlpError> {
        let mut w = Self::zeros(dims)?;
        let mut rng = SampleRng::from_seed(seed);
        let mut off = 0;
        for l in 0..w.dims.len() - 1 {
            let (fan_in, fan_out) = (w.dims[l], w.dims[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut w.params[off..off + fan_in * fan_out] {
                *p = (2.0 * rng.uniform() - 1.0) * limit;
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(w)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Offsets of the weight matrix and bias vector of layer `l`.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let before: usize = self.dims[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        (before, before + self.dims[l] * self.dims[l + 1])
    }

    /// Index of the bias of unit `j` in the last layer.
    pub fn output_bias_index(&self, j: usize) -> usize {
        self.layer_offsets(self.layers() - 1).1 + j
    }

    pub fn check_io(&self, input: usize, output: usize) -> Result<(), MlpError> {
        if self.input_dim() != input {
            return Err(MlpError::InputDim {
                expected: self.input_dim(),
                got: input,
            });
        }
        if self.output_dim() != output {
            return Err(MlpError::OutputDim {
                expected: output,
                got: self.output_dim(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).activations.pop().unwrap()
    }

    pub fn forward_trace(&self, x: &[f64]) -> MlpTrace {
        assert_eq!(x.len(), self.input_dim(), "mlp input width");
        let layers = self.layers();
        let mut activations = Vec::with_capacity(layers + 1);
        let mut pre = Vec::with_capacity(layers);
        activations.push(x.to_vec());
        for l in 0..layers {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let w = &self.params[w_off..w_off + n_in * n_out];
            let b = &self.params[b_off..b_off + n_out];
            let a = &activations[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    b[o] + row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>()
                })
                .collect();
            let out = if l + 1 < layers {
                z.iter().map(|&v| softplus(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            activations.push(out);
        }
        MlpTrace { activations, pre }
    }

    /// Accumulate `d_out^T J` into `grad` (parameter layout) and return the
    /// gradient with respect to the input.
    pub fn backward(&self, trace: &MlpTrace, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer length");
        assert_eq!(d_out.len(), self.output_dim(), "output adjoint width");
        let mut delta = d_out.to_vec();
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let a = &trace.activations[l];
            for o in 0..n_out {
                let dl = delta[o];
                if dl == 0.0 {
                    continue;
                }
                grad[b_off + o] += dl;
                let row = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
                for (g, ai) in row.iter_mut().zip(a) {
                    *g += dl * ai;
                }
            }
            let w = &self.params[w_off..w_off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let dl = delta[o];
                if dl == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += dl * wi;
                }
            }
            if l > 0 {
                for (p, z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                    *p *= sigmoid(*z);
                }
            }
            delta = prev;
        }
        delta
    }
}
