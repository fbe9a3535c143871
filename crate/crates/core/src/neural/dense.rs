use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Affine map followed by an activation. `weight` is `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetRecord", into = "NetRecord")]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

/// Gradients of a scalar loss with respect to every parameter and the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub input: Array2<f64>,
}

impl DenseLayer {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.nrows() {
            return Err(Error::Shape {
                context: "layer bias",
                expected: weight.nrows(),
                found: bias.len(),
            });
        }
        Ok(DenseLayer {
            weight,
            bias,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

impl DenseNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::arg("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape {
                    context: "layer chaining",
                    expected: pair[0].outputs(),
                    found: pair[1].inputs(),
                });
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::Shape {
                    context: "layer bias",
                    expected: layer.outputs(),
                    found: layer.bias.len(),
                });
            }
        }
        Ok(DenseNet { layers })
    }

    /// ReLU hidden layers with He-normal weights and a linear output layer.
    pub fn mlp<R: Rng + ?Sized>(
        inputs: usize,
        hidden: &[usize],
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let mut widths = vec![inputs];
        widths.extend_from_slice(hidden);
        widths.push(outputs);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let (activation, gain) = if i == last {
                    (Activation::Identity, 1.0)
                } else {
                    (Activation::Relu, 2.0)
                };
                let normal =
                    Normal::new(0.0, (gain / fan_in.max(1) as f64).sqrt()).expect("finite std");
                let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || normal.sample(rng));
                DenseLayer {
                    weight,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        DenseNet { layers }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.input_width() {
            return Err(Error::Shape {
                context: "network input",
                expected: self.input_width(),
                found: batch.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&batch)?;
        let mut current = batch.to_owned();
        for layer in &self.layers {
            let mut z = current.dot(&layer.weight.t());
            z += &layer.bias;
            if layer.activation == Activation::Relu {
                z.mapv_inplace(|v| v.max(0.0));
            }
            current = z;
        }
        Ok(current)
    }

    pub fn forward_trace(&self, batch: ArrayView2<f64>) -> Result<ForwardTrace> {
        self.check_input(&batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = batch.to_owned();
        for layer in &self.layers {
            let mut z = current.dot(&layer.weight.t());
            z += &layer.bias;
            let a = match layer.activation {
                Activation::Relu => z.mapv(|v| v.max(0.0)),
                Activation::Identity => z.clone(),
            };
            inputs.push(current);
            pre_activations.push(z);
            current = a;
        }
        Ok(ForwardTrace {
            inputs,
            pre_activations,
            output: current,
        })
    }

    /// Gradients given dLoss/dOutput, recomputing the forward pass.
    pub fn backward(
        &self,
        batch: ArrayView2<f64>,
        loss_gradient: ArrayView2<f64>,
    ) -> Result<Gradients> {
        let trace = self.forward_trace(batch)?;
        self.backward_trace(&trace, loss_gradient)
    }

    pub fn backward_trace(
        &self,
        trace: &ForwardTrace,
        loss_gradient: ArrayView2<f64>,
    ) -> Result<Gradients> {
        if loss_gradient.dim() != trace.output.dim() {
            return Err(Error::Shape {
                context: "loss gradient",
                expected: trace.output.len(),
                found: loss_gradient.len(),
            });
        }
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut delta = loss_gradient.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                ndarray::Zip::from(&mut delta)
                    .and(&trace.pre_activations[i])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            // `dot` on a transposed view may hand back column-major storage.
            weights.push(
                delta
                    .t()
                    .dot(&trace.inputs[i])
                    .as_standard_layout()
                    .into_owned(),
            );
            biases.push(delta.sum_axis(Axis(0)));
            delta = delta.dot(&layer.weight);
        }
        weights.reverse();
        biases.reverse();
        Ok(Gradients {
            weights,
            biases,
            input: delta,
        })
    }

    /// Mutable parameter slices in a fixed order: weight then bias per layer.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn parameter_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.len(), l.bias.len()])
            .collect()
    }
}

impl Gradients {
    /// Slices in the order of [`DenseNet::parameters_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| {
                [
                    w.as_slice().expect("standard layout"),
                    b.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    inputs: usize,
    outputs: usize,
    activation: Activation,
    /// Row-major, `outputs x inputs`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetRecord {
    layers: Vec<LayerRecord>,
}

impl From<DenseNet> for NetRecord {
    fn from(net: DenseNet) -> Self {
        NetRecord {
            layers: net
                .layers
                .into_iter()
                .map(|l| LayerRecord {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    activation: l.activation,
                    weights: l.weight.iter().copied().collect(),
                    biases: l.bias.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetRecord> for DenseNet {
    type Error = Error;

    fn try_from(record: NetRecord) -> Result<Self> {
        let layers = record
            .layers
            .into_iter()
            .map(|l| {
                let weight =
                    Array2::from_shape_vec((l.outputs, l.inputs), l.weights).map_err(|_| {
                        Error::Shape {
                            context: "checkpoint weights",
                            expected: l.outputs * l.inputs,
                            found: 0,
                        }
                    })?;
                DenseLayer::new(weight, Array1::from(l.biases), l.activation)
            })
            .collect::<Result<Vec<_>>>()?;
        DenseNet::new(layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    fn single(w: f64, b: f64, activation: Activation) -> DenseNet {
        DenseNet::new(vec![
            DenseLayer::new(array![[w]], array![b], activation).unwrap()
        ])
        .unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let layer = DenseLayer::new(
            Array2::zeros((3, 4)),
            Array1::zeros(3),
            Activation::Identity,
        )
        .unwrap();
        let net = DenseNet::new(vec![layer]).unwrap();
        let out = net.forward(Array2::from_elem((5, 4), 3.7).view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn affine_hand_case() {
        let out = single(2.0, 1.0, Activation::Identity)
            .forward(array![[3.0]].view())
            .unwrap();
        assert_eq!(out, array![[7.0]]);
    }

    #[test]
    fn relu_clamps_negative() {
        let layer = DenseLayer::new(Array2::eye(3), Array1::zeros(3), Activation::Relu).unwrap();
        let net = DenseNet::new(vec![layer]).unwrap();
        assert_eq!(
            net.forward(array![[-1.0, 0.0, 2.0]].view()).unwrap(),
            array![[0.0, 0.0, 2.0]]
        );
    }

    #[test]
    fn width_mismatch_is_a_shape_error() {
        let net = single(1.0, 0.0, Activation::Identity);
        assert!(matches!(
            net.forward(Array2::zeros((2, 3)).view()),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            net.backward(Array2::zeros((2, 1)).view(), Array2::zeros((2, 2)).view()),
            Err(Error::Shape { .. })
        ));
        let a = DenseLayer::new(Array2::zeros((3, 2)), Array1::zeros(3), Activation::Relu).unwrap();
        let b = DenseLayer::new(
            Array2::zeros((1, 4)),
            Array1::zeros(1),
            Activation::Identity,
        )
        .unwrap();
        assert!(DenseNet::new(vec![a, b]).is_err());
    }

    #[test]
    fn zero_loss_gradient_gives_zero_gradients() {
        let mut rng = rng::from_seed(3);
        let net = DenseNet::mlp(4, &[8, 8], 2, &mut rng);
        let x = Array2::from_shape_simple_fn((5, 4), || rng.random::<f64>());
        let g = net
            .backward(x.view(), Array2::zeros((5, 2)).view())
            .unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn squared_error_hand_gradient() {
        // L = mean_b (w x_b + b - t_b)^2, dL/dw = 2 (w x + b - t) x / batch
        let (w, b) = (1.5, -0.5);
        let net = single(w, b, Activation::Identity);
        let x = array![[2.0], [-1.0]];
        let t = array![[1.0], [0.0]];
        let out = net.forward(x.view()).unwrap();
        let grad_out = (&out - &t) * 2.0 / 2.0;
        let g = net.backward(x.view(), grad_out.view()).unwrap();
        let expected_w =
            (2.0 * (w * 2.0 + b - 1.0) * 2.0 + 2.0 * (w * -1.0 + b - 0.0) * -1.0) / 2.0;
        let expected_b = (2.0 * (w * 2.0 + b - 1.0) + 2.0 * (w * -1.0 + b)) / 2.0;
        assert!((g.weights[0][[0, 0]] - expected_w).abs() < 1e-12);
        assert!((g.biases[0][0] - expected_b).abs() < 1e-12);
    }

    #[test]
    fn forward_is_row_permutation_equivariant() {
        let mut rng = rng::from_seed(9);
        let net = DenseNet::mlp(3, &[16], 2, &mut rng);
        let x = Array2::from_shape_simple_fn((6, 3), || rng.random::<f64>() - 0.5);
        let out = net.forward(x.view()).unwrap();
        let order = [4, 1, 5, 0, 3, 2];
        let permuted = x.select(Axis(0), &order);
        let out_p = net.forward(permuted.view()).unwrap();
        assert_eq!(out_p, out.select(Axis(0), &order));
        assert_eq!(out, net.forward(x.view()).unwrap());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = rng::from_seed(5);
        let net = DenseNet::mlp(5, &[7, 3], 2, &mut rng);
        let json = serde_json::to_string(&net).unwrap();
        let back: DenseNet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn gradients_are_contiguous_for_single_row_batches() {
        let mut rng = rng::from_seed(6);
        for (inputs, outputs) in [(1, 1), (4, 1), (1, 3)] {
            let net = DenseNet::mlp(inputs, &[5], outputs, &mut rng);
            let x = Array2::from_elem((1, inputs), 0.5);
            let g = net
                .backward(x.view(), Array2::ones((1, outputs)).view())
                .unwrap();
            let sizes: Vec<usize> = g.slices().iter().map(|s| s.len()).collect();
            assert_eq!(sizes, net.parameter_sizes());
        }
    }
}
