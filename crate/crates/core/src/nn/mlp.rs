use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A parameter block with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
            grad: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_values(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            grad: vec![T::zero(); values.len()],
            values,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn matrix(&self) -> Matrix<T> {
        Matrix::from_vec(self.rows, self.cols, self.values.clone()).expect("consistent shape")
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn accumulate(&mut self, delta: &Matrix<T>) {
        debug_assert_eq!(delta.shape(), self.shape());
        for (g, &d) in self.grad.iter_mut().zip(delta.data()) {
            *g += d;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().chain(&self.grad).all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    None,
    Tanh,
}

/// Fully connected network. Layer `i` maps `layer_sizes[i]` to
/// `layer_sizes[i + 1]` with a weight block of shape `in × out` followed by a
/// `1 × out` bias row.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layer_sizes: Vec<usize>,
    activation: Activation,
    output_activation: OutputActivation,
    params: Vec<ParamTensor<T>>,
}

/// Tape handles for one binding of an [`Mlp`]'s parameters.
#[derive(Clone, Debug)]
pub struct MlpVars {
    vars: Vec<Var>,
    tracked: bool,
}

impl MlpVars {
    /// Parameter handles in [`Mlp::params`] order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl<T: Scalar> Mlp<T> {
    /// Uniform init in `±1/√fan_in` for weights and biases.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        activation: Activation,
        output_activation: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, activation, output_activation)?;
        for (i, p) in net.params.iter_mut().enumerate() {
            let fan_in = layer_sizes[i / 2] as f64;
            let bound = 1.0 / fan_in.sqrt();
            for v in &mut p.values {
                *v = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(net)
    }

    pub fn zeros(
        layer_sizes: &[usize],
        activation: Activation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "an mlp needs at least one layer of positive width, got {layer_sizes:?}"
            )));
        }
        let params = layer_sizes
            .windows(2)
            .flat_map(|w| [ParamTensor::zeros(w[0], w[1]), ParamTensor::zeros(1, w[1])])
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            output_activation,
            params,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn params(&self) -> &[ParamTensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.params
    }

    pub fn weight(&self, layer: usize) -> &ParamTensor<T> {
        &self.params[2 * layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut ParamTensor<T> {
        &mut self.params[2 * layer]
    }

    pub fn bias(&self, layer: usize) -> &ParamTensor<T> {
        &self.params[2 * layer + 1]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut ParamTensor<T> {
        &mut self.params[2 * layer + 1]
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(ParamTensor::len).sum()
    }

    /// Records the parameters as gradient-tracked leaves.
    pub fn bind(&self, tape: &mut Tape<T>) -> MlpVars {
        MlpVars {
            vars: self.params.iter().map(|p| tape.param(p.matrix())).collect(),
            tracked: true,
        }
    }

    /// Records the parameters as constants: gradients still flow to the
    /// network input but not into the weights.
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> MlpVars {
        MlpVars {
            vars: self.params.iter().map(|p| tape.constant(p.matrix())).collect(),
            tracked: false,
        }
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: cols,
            });
        }
        Ok(())
    }

    /// Forward pass recorded on `tape`; `x` is `batch × input_dim`.
    pub fn forward(&self, tape: &mut Tape<T>, vars: &MlpVars, x: Var) -> Result<Var> {
        self.check_input(tape.value(x).cols())?;
        let mut h = x;
        let last = self.num_layers() - 1;
        for layer in 0..self.num_layers() {
            let z = tape.matmul(h, vars.vars[2 * layer])?;
            let z = tape.add_row(z, vars.vars[2 * layer + 1])?;
            h = if layer < last {
                match self.activation {
                    Activation::Relu => tape.relu(z),
                    Activation::Tanh => tape.tanh(z),
                }
            } else {
                match self.output_activation {
                    OutputActivation::None => z,
                    OutputActivation::Tanh => tape.tanh(z),
                }
            };
        }
        Ok(h)
    }

    /// Binds the parameters and runs a recorded forward pass on `input`.
    pub fn forward_recorded(&self, tape: &mut Tape<T>, input: Matrix<T>) -> Result<(Var, MlpVars)> {
        let vars = self.bind(tape);
        let x = tape.constant(input);
        let out = self.forward(tape, &vars, x)?;
        Ok((out, vars))
    }

    /// Forward pass without recording. Produces the same bits as
    /// [`Mlp::forward`] on the same input.
    pub fn predict(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(input.cols())?;
        let last = self.num_layers() - 1;
        let mut h: Option<Matrix<T>> = None;
        for layer in 0..self.num_layers() {
            let src = h.as_ref().unwrap_or(input);
            let z = src
                .matmul(&self.weight(layer).matrix())
                .add_row_broadcast(&self.bias(layer).matrix());
            let act = if layer < last {
                match self.activation {
                    Activation::Relu => z.map(|x| if x > T::zero() { x } else { T::zero() }),
                    Activation::Tanh => z.map(|x| x.tanh()),
                }
            } else {
                match self.output_activation {
                    OutputActivation::None => z,
                    OutputActivation::Tanh => z.map(|x| x.tanh()),
                }
            };
            h = Some(act);
        }
        Ok(h.expect("at least one layer"))
    }

    /// Adds the gradients of a backward pass into the parameter `grad` fields.
    pub fn accumulate_grads(&mut self, grads: &Gradients<T>, vars: &MlpVars) {
        if !vars.tracked {
            return;
        }
        for (p, &v) in self.params.iter_mut().zip(&vars.vars) {
            if let Some(g) = grads.get(v) {
                p.accumulate(g);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(ParamTensor::zero_grad);
    }

    /// `self ← tau·online + (1 − tau)·self`, parameter by parameter.
    pub fn soft_update_from(&mut self, online: &Self, tau: T) {
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            for (tv, &ov) in t.values.iter_mut().zip(&o.values) {
                *tv = tau * ov + (T::one() - tau) * *tv;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(ParamTensor::is_finite)
    }
}
