use super::VelocityField;
use crate::num::{Matrix, RngStream};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
        }
    }
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Fully connected velocity field `b(x, t)` taking the state concatenated
/// with `t` as input. Hidden layers use the configured activation; the output
/// layer is linear. Derivative products are hand-rolled layerwise passes with
/// respect to the state block only.
#[derive(Debug, Clone)]
pub struct NeuralMlpField {
    pub(crate) layers: Vec<Layer>,
    dim: usize,
    activation: Activation,
}

impl NeuralMlpField {
    /// Zero-initialized network with the given hidden widths.
    pub fn zeros(dim: usize, hidden: &[usize], activation: Activation) -> Self {
        let mut layers = Vec::new();
        let mut fan_in = dim + 1;
        for &width in hidden {
            layers.push(Layer { weight: Matrix::zeros(width, fan_in), bias: vec![0.0; width] });
            fan_in = width;
        }
        layers.push(Layer { weight: Matrix::zeros(dim, fan_in), bias: vec![0.0; dim] });
        NeuralMlpField { layers, dim, activation }
    }

    /// Glorot-uniform weights (`+-ated sqrt(6 / (fan_in + fan_out))`), zero biases.
    pub fn glorot(dim: usize, hidden: &[usize], activation: Activation, rng: &mut RngStream) -> Self {
        let mut net = Self::zeros(dim, hidden, activation);
        for layer in &mut net.layers {
            let bound = (6.0 / (layer.weight.cols() + layer.weight.rows()) as f64).sqrt();
            for w in layer.weight.data_mut().iter_mut() {
                *w = rng.uniform_in(-bound, bound);
            }
        }
        net
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.weight.rows()).collect()
    }

    pub(crate) fn from_parts(dim: usize, activation: Activation, layers: Vec<Layer>) -> Self {
        NeuralMlpField { layers, dim, activation }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.data().len() + l.bias.len()).sum()
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count());
        let mut offset = 0;
        for l in &mut self.layers {
            let wlen = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&params[offset..offset + wlen]);
            offset += wlen;
            let blen = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + blen]);
            offset += blen;
        }
    }

    fn input(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut a = Vec::with_capacity(self.dim + 1);
        a.extend_from_slice(x);
        a.push(t);
        a
    }

    /// Forward pass keeping every post-activation; index 0 is the input.
    pub(crate) fn forward_trace(&self, x: &[f64], t: f64) -> Vec<Vec<f64>> {
        let mut trace = vec![self.input(x, t)];
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weight.matvec(trace.last().unwrap());
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            if idx != last {
                for zi in z.iter_mut() {
                    *zi = self.activation.apply(*zi);
                }
            }
            trace.push(z);
        }
        trace
    }

    /// Backward pass through the state block: given the output cotangent,
    /// returns (input gradient restricted to x, per-layer parameter
    /// cotangents). The parameter part is used by the flow-matching trainer.
    pub(crate) fn backward(
        &self,
        trace: &[Vec<f64>],
        out_grad: &[f64],
        want_params: bool,
    ) -> (Vec<f64>, Vec<(Matrix, Vec<f64>)>) {
        let last = self.layers.len() - 1;
        let mut upstream = out_grad.to_vec();
        let mut param_grads: Vec<(Matrix, Vec<f64>)> = Vec::new();
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            // Output layer is linear; hidden layers need the activation chain.
            let delta: Vec<f64> = if idx == last {
                upstream.clone()
            } else {
                trace[idx + 1]
                    .iter()
                    .zip(&upstream)
                    .map(|(a, u)| u * self.activation.derivative_from_output(*a))
                    .collect()
            };
            if want_params {
                let input = &trace[idx];
                let mut wgrad = Matrix::zeros(layer.weight.rows(), layer.weight.cols());
                for r in 0..layer.weight.rows() {
                    let d = delta[r];
                    for c in 0..layer.weight.cols() {
                        wgrad[(r, c)] = d * input[c];
                    }
                }
                param_grads.push((wgrad, delta.clone()));
            }
            upstream = layer.weight.matvec_t(&delta);
        }
        param_grads.reverse();
        upstream.truncate(self.dim);
        (upstream, param_grads)
    }
}

impl VelocityField for NeuralMlpField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut a = self.input(x, t);
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weight.matvec(&a);
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            if idx != last {
                for zi in z.iter_mut() {
                    *zi = self.activation.apply(*zi);
                }
            }
            a = z;
        }
        a
    }

    fn jvp(&self, x: &[f64], t: f64, v: &[f64]) -> Vec<f64> {
        // Forward-mode: perturb the state block, hold t fixed.
        let trace = self.forward_trace(x, t);
        let mut dv = v.to_vec();
        dv.push(0.0);
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut dz = layer.weight.matvec(&dv);
            if idx != last {
                for (d, a) in dz.iter_mut().zip(&trace[idx + 1]) {
                    *d *= self.activation.derivative_from_output(*a);
                }
            }
            dv = dz;
        }
        dv
    }

    fn vjp(&self, x: &[f64], t: f64, u: &[f64]) -> Vec<f64> {
        let trace = self.forward_trace(x, t);
        self.backward(&trace, u, false).0
    }
}
