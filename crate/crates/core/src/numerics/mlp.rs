use super::matrix::{gemm, Matrix};
use super::rng::RngStream;
use crate::error::{Result, SlacError};

/// Anything that can be viewed as an ordered list of flat parameter tensors.
///
/// The order is the declaration order used by checkpoints and by [`super::Adam`].
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// `target <- (1 - tau) * target + tau * online`.
pub fn polyak<P: ParamSet>(target: &mut P, online: &P, tau: f64) {
    for (t, o) in target.tensors_mut().into_iter().zip(online.tensors()) {
        for (tv, ov) in t.iter_mut().zip(o) {
            *tv = (1.0 - tau) * *tv + tau * ov;
        }
    }
}

/// Fully connected layer computing `x W + b`; `weight` is `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn fan_in(&self) -> usize {
        self.weight.rows
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols
    }
}

/// ReLU multilayer perceptron with a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Activations retained by a forward pass; `inputs[l]` feeds layer `l`.
#[derive(Clone, Debug)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
}

impl MlpCache {
    pub fn batch(&self) -> usize {
        self.inputs.first().map_or(0, |m| m.rows)
    }
}

impl Mlp {
    /// Layer widths `sizes = [in, h1, ..., out]`, weights and biases uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(sizes: &[usize], rng: &mut RngStream) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least an input and output width");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let weight = Matrix {
                    rows: fan_in,
                    cols: fan_out,
                    data: (0..fan_in * fan_out)
                        .map(|_| rng.uniform_range(-bound, bound))
                        .collect(),
                };
                let bias = (0..fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
                Linear { weight, bias }
            })
            .collect();
        Mlp { layers }
    }

    /// Build from explicit layers, checking that shapes compose.
    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(SlacError::config("MLP needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.data.len() != l.weight.rows * l.weight.cols || l.bias.len() != l.weight.cols {
                return Err(SlacError::config(format!("layer {i} has inconsistent bias/weight shapes")));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].fan_out() != w[1].fan_in() {
                return Err(SlacError::config(format!(
                    "layer {i} output width {} does not feed layer {} input width {}",
                    w[0].fan_out(),
                    i + 1,
                    w[1].fan_in()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    weight: Matrix::zeros(l.weight.rows, l.weight.cols),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    /// Widths `[in, h1, ..., out]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.fan_out()));
        s
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        if x.cols != self.input_dim() {
            return Err(SlacError::config(format!(
                "MLP input width {} does not match expected {}",
                x.cols,
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Matrix::zeros(h.rows, layer.fan_out());
            for r in 0..out.rows {
                out.row_mut(r).copy_from_slice(&layer.bias);
            }
            gemm(1.0, &h, false, &layer.weight, false, 1.0, &mut out);
            if i != last {
                for v in out.data.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            inputs.push(std::mem::replace(&mut h, out));
        }
        Ok((h, MlpCache { inputs }))
    }

    /// Forward pass without retaining activations.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Single-vector forward pass.
    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict(&Matrix::row_vector(x)).map(|m| m.data)
    }

    fn check_cache(&self, cache: &MlpCache, grad_out: &Matrix) -> Result<()> {
        if cache.inputs.len() != self.layers.len() {
            return Err(SlacError::Usage(
                "backward called without a forward cache for this network".into(),
            ));
        }
        for (l, inp) in self.layers.iter().zip(&cache.inputs) {
            if inp.cols != l.fan_in() || inp.rows != grad_out.rows {
                return Err(SlacError::Usage(
                    "forward cache does not match this network or batch".into(),
                ));
            }
        }
        if grad_out.cols != self.output_dim() {
            return Err(SlacError::Usage(format!(
                "upstream gradient width {} does not match output width {}",
                grad_out.cols,
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Reverse-mode gradients of `sum(grad_out * y)` with respect to the
    /// parameters and the input.
    pub fn backward(&self, cache: &MlpCache, grad_out: &Matrix) -> Result<(Mlp, Matrix)> {
        self.check_cache(cache, grad_out)?;
        let mut grads = self.zeros_like();
        let mut delta = grad_out.clone();
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            gemm(1.0, input, true, &delta, false, 0.0, &mut grads.layers[l].weight);
            grads.layers[l].bias = delta.column_sums();
            let mut d_in = Matrix::zeros(delta.rows, self.layers[l].fan_in());
            gemm(1.0, &delta, false, &self.layers[l].weight, true, 0.0, &mut d_in);
            if l > 0 {
                relu_mask(&mut d_in, input);
            }
            delta = d_in;
        }
        Ok((grads, delta))
    }

    /// Input gradient only; skips the weight-gradient products.
    pub fn backward_input(&self, cache: &MlpCache, grad_out: &Matrix) -> Result<Matrix> {
        self.check_cache(cache, grad_out)?;
        let mut delta = grad_out.clone();
        for l in (0..self.layers.len()).rev() {
            let mut d_in = Matrix::zeros(delta.rows, self.layers[l].fan_in());
            gemm(1.0, &delta, false, &self.layers[l].weight, true, 0.0, &mut d_in);
            if l > 0 {
                relu_mask(&mut d_in, &cache.inputs[l]);
            }
            delta = d_in;
        }
        Ok(delta)
    }

    pub fn add_scaled(&mut self, other: &Mlp, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

// Zero the gradient wherever the post-ReLU activation was clamped.
fn relu_mask(grad: &mut Matrix, activation: &Matrix) {
    for (g, a) in grad.data.iter_mut().zip(&activation.data) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

impl ParamSet for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

impl<P: ParamSet> ParamSet for Vec<P> {
    fn tensors(&self) -> Vec<&[f64]> {
        self.iter().flat_map(|p| p.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.iter_mut().flat_map(|p| p.tensors_mut()).collect()
    }
}
