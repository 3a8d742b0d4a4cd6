use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::DenseMatrix;

/// Encoder trunk sizes used for both models.
pub const ENCODER_HIDDEN: [usize; 4] = [32, 64, 128, 32];
/// Decoder trunk sizes for the VAE baseline.
pub const DECODER_HIDDEN: [usize; 4] = [32, 128, 64, 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }
}

/// Layer layout of a fully connected network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl NetworkSpec {
    /// Relu hidden layers and a linear output layer.
    pub fn new(input_dim: usize, hidden_sizes: &[usize], output_dim: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_sizes: hidden_sizes.to_vec(),
            output_dim,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_sizes.contains(&0) {
            return Err(Error::config(format!(
                "layer sizes must be >= 1: {} -> {:?} -> {}",
                self.input_dim, self.hidden_sizes, self.output_dim
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer in order.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut sizes = Vec::with_capacity(self.hidden_sizes.len() + 2);
        sizes.push(self.input_dim);
        sizes.extend_from_slice(&self.hidden_sizes);
        sizes.push(self.output_dim);
        sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer == self.hidden_sizes.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Weights (`fan_in × fan_out`) and bias of one affine layer. Also used for
/// gradients and Adam moments, which share the shape.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: DenseMatrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.as_slice().iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .as_mut_slice()
            .iter_mut()
            .chain(self.bias.iter_mut())
    }
}

/// Gradient of a scalar loss with respect to every layer's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerParams>,
}

impl ParamGrads {
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.values().all(|v| v.is_finite()))
    }
}

/// Layer parameters plus the Adam moment estimates and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
    pub first_moment: Vec<LayerParams>,
    pub second_moment: Vec<LayerParams>,
    pub step: u64,
}

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers: Vec<_> = spec
            .layer_dims()
            .into_iter()
            .map(|(i, o)| LayerParams::zeros(i, o))
            .collect();
        Self {
            first_moment: layers.clone(),
            second_moment: layers.clone(),
            layers,
            step: 0,
        }
    }

    /// All weights and biases, layer by layer, weights before bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values().copied()).collect()
    }

    /// Overwrites parameters from a buffer laid out like [`Self::flatten`].
    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        let count: usize = self
            .layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum();
        if values.len() != count {
            return Err(Error::shape(format!(
                "expected {count} parameters, got {}",
                values.len()
            )));
        }
        let mut src = values.iter();
        for l in &mut self.layers {
            for v in l.values_mut() {
                *v = *src.next().unwrap();
            }
        }
        Ok(())
    }
}

/// Activations cached by [`Network::forward`] for the reverse pass.
#[derive(Clone, Debug)]
pub struct Tape {
    inputs: Vec<DenseMatrix>,
    pre_activations: Vec<DenseMatrix>,
    step: u64,
}

/// A fully connected network: layout plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: NetworkParams,
}

impl Network {
    /// He-normal weights (variance 2/fan_in) on relu layers, variance
    /// 1/fan_in on the linear output layer, zero biases, zeroed Adam state.
    pub fn init(spec: NetworkSpec, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        let mut params = NetworkParams::zeros(&spec);
        for (l, layer) in params.layers.iter_mut().enumerate() {
            let fan_in = layer.weights.rows() as f64;
            let gain = match spec.activation(l) {
                Activation::Relu => 2.0,
                Activation::Linear => 1.0,
            };
            let std = (gain / fan_in).sqrt();
            let draws = rng.standard_normal(layer.weights.as_slice().len());
            for (w, z) in layer.weights.as_mut_slice().iter_mut().zip(draws) {
                *w = z * std;
            }
        }
        Ok(Self { spec, params })
    }

    pub fn from_parts(spec: NetworkSpec, params: NetworkParams) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        let consistent = |ls: &[LayerParams]| {
            ls.len() == dims.len()
                && ls.iter().zip(&dims).all(|(l, &(i, o))| {
                    l.weights.shape() == (i, o) && l.bias.len() == o
                })
        };
        if !consistent(&params.layers)
            || !consistent(&params.first_moment)
            || !consistent(&params.second_moment)
        {
            return Err(Error::shape("parameters do not match network layout"));
        }
        Ok(Self { spec, params })
    }

    /// Runs the batch through every layer, keeping what the reverse pass needs.
    pub fn forward(&self, batch: &DenseMatrix) -> Result<(DenseMatrix, Tape)> {
        if batch.cols() != self.spec.input_dim {
            return Err(Error::shape(format!(
                "network expects {} input columns, batch has {}",
                self.spec.input_dim,
                batch.cols()
            )));
        }
        let n_layers = self.params.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre_activations = Vec::with_capacity(n_layers);
        let mut h = batch.clone();
        for (l, layer) in self.params.layers.iter().enumerate() {
            let mut z = h.matmul(&layer.weights)?;
            z.add_row_vector(&layer.bias);
            let act = self.spec.activation(l);
            let out = match act {
                Activation::Linear => z.clone(),
                _ => z.map(|x| act.apply(x)),
            };
            inputs.push(h);
            pre_activations.push(z);
            h = out;
        }
        let tape = Tape {
            inputs,
            pre_activations,
            step: self.params.step,
        };
        Ok((h, tape))
    }

    /// Output only, for inference.
    pub fn predict(&self, batch: &DenseMatrix) -> Result<DenseMatrix> {
        self.forward(batch).map(|(out, _)| out)
    }

    /// Reverse pass: given dL/d(output), returns dL/d(params) and dL/d(input).
    pub fn backward(
        &self,
        tape: &Tape,
        output_grad: &DenseMatrix,
    ) -> Result<(ParamGrads, DenseMatrix)> {
        let n_layers = self.params.layers.len();
        if tape.inputs.len() != n_layers || tape.pre_activations.len() != n_layers {
            return Err(Error::State(format!(
                "tape holds {} layers, network has {n_layers}",
                tape.inputs.len()
            )));
        }
        if tape.step != self.params.step {
            return Err(Error::State(format!(
                "tape recorded at optimiser step {}, parameters are at step {}",
                tape.step, self.params.step
            )));
        }
        let last = &tape.pre_activations[n_layers - 1];
        if output_grad.shape() != last.shape() {
            return Err(Error::shape(format!(
                "output gradient is {:?}, forward output was {:?}",
                output_grad.shape(),
                last.shape()
            )));
        }

        let mut grads: Vec<LayerParams> = Vec::with_capacity(n_layers);
        let mut g = output_grad.clone();
        for l in (0..n_layers).rev() {
            if self.spec.activation(l) == Activation::Relu {
                let pre = tape.pre_activations[l].as_slice();
                for (gv, &z) in g.as_mut_slice().iter_mut().zip(pre) {
                    if z <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let layer = &self.params.layers[l];
            let weights = tape.inputs[l].matmul_tn(&g)?;
            let bias = g.column_sums();
            let g_in = g.matmul_nt(&layer.weights)?;
            grads.push(LayerParams { weights, bias });
            g = g_in;
        }
        grads.reverse();
        Ok((ParamGrads { layers: grads }, g))
    }
}
