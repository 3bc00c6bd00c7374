use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::Parameterized;
use crate::error::{invalid, Result};

/// Default leaky-ReLU slope for hidden layers.
pub const DEFAULT_SLOPE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    fn affine(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights * x;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        z
    }
}

/// Feed-forward network: affine layers with leaky-ReLU between them and a
/// linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    slope: f64,
}

/// Activations kept by [`Mlp::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<DMatrix<f64>>,
    shapes: Vec<(usize, usize)>,
}

/// Gradients shaped like the parameters of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (DMatrix::zeros(l.outputs(), l.inputs()), DVector::zeros(l.outputs())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|(w, b)| [w.as_slice(), b.as_slice()]).collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `sizes` lists input, hidden and
    /// output widths.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], slope: f64, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                Dense {
                    weights: DMatrix::from_fn(fan_out, fan_in, |_, _| dist.sample(rng)),
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers, slope })
    }

    pub fn from_layers(layers: Vec<Dense>, slope: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("network needs at least one layer"));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].outputs() != w[1].inputs() {
                return Err(invalid(format!("layer {i} outputs {} but layer {} expects {}", w[0].outputs(), i + 1, w[1].inputs())));
            }
        }
        if layers.iter().any(|l| l.bias.len() != l.outputs()) {
            return Err(invalid("bias length does not match layer outputs"));
        }
        Ok(Self { layers, slope })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(Dense::outputs)).collect()
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.input_dim() {
            return Err(invalid(format!("network expects input dim {}, got {}", self.input_dim(), x.nrows())));
        }
        Ok(())
    }

    /// Output only, without keeping activations.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut a = self.layers[0].affine(x);
        for layer in &self.layers[1..=last] {
            leaky_relu_in_place(&mut a, self.slope);
            a = layer.affine(&a);
        }
        Ok(a)
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&a);
            inputs.push(a);
            if i + 1 == self.layers.len() {
                a = z;
            } else {
                let mut act = z.clone();
                leaky_relu_in_place(&mut act, self.slope);
                pre.push(z);
                a = act;
            }
        }
        let shapes = self.layers.iter().map(|l| l.weights.shape()).collect();
        Ok((a, ForwardCache { inputs, pre, shapes }))
    }

    /// Reverse-mode gradients of `sum(grad_output ⊙ output)` with respect to
    /// every parameter and to the network input.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &DMatrix<f64>) -> Result<(MlpGrads, DMatrix<f64>)> {
        let shapes: Vec<_> = self.layers.iter().map(|l| l.weights.shape()).collect();
        let batch = cache.inputs.first().map_or(0, |x| x.ncols());
        if shapes != cache.shapes || cache.inputs.len() != self.layers.len() {
            return Err(invalid("forward cache does not belong to this network"));
        }
        if grad_output.shape() != (self.output_dim(), batch) {
            return Err(invalid(format!(
                "grad_output has shape {:?}, expected {:?}",
                grad_output.shape(),
                (self.output_dim(), batch)
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_output.clone();
        for i in (0..self.layers.len()).rev() {
            let gw = &delta * cache.inputs[i].transpose();
            let gb = delta.column_sum();
            grads.push((gw, gb));
            let mut upstream = self.layers[i].weights.transpose() * &delta;
            if i > 0 {
                let z = &cache.pre[i - 1];
                for (g, &zv) in upstream.iter_mut().zip(z.iter()) {
                    if zv < 0.0 {
                        *g *= self.slope;
                    }
                }
            }
            delta = upstream;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }
}

impl Parameterized for Mlp {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()]).collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

fn leaky_relu_in_place(m: &mut DMatrix<f64>, slope: f64) {
    for v in m.iter_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
}
