//! Dense feedforward networks without bias vectors, exact reverse-mode
//! gradients, gradient reversal and an Adam optimizer.
//!
//! A stack computes `f_1 = W_1 x`, `f_k = W_k tanh(f_{k-1})`, and applies the
//! configured output activation to the last layer. Weight matrices are stored
//! as `(out × in)`; batched inputs are `(rows × in)`.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenActivation {
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

impl OutputActivation {
    fn name(self) -> &'static str {
        match self {
            OutputActivation::Identity => "identity",
            OutputActivation::Sigmoid => "sigmoid",
        }
    }

    fn from_name(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(OutputActivation::Identity),
            "sigmoid" => Ok(OutputActivation::Sigmoid),
            other => Err(Error::Format(format!(
                "unknown output activation `{other}`"
            ))),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    layer_dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    hidden_activation: HiddenActivation,
    output_activation: OutputActivation,
}

/// One gradient matrix per layer, shaped like the owning weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet(pub Vec<Array2<f64>>);

impl GradientSet {
    pub fn zeros_like(weights: &[Array2<f64>]) -> Self {
        GradientSet(weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect())
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.0 {
            g.mapv_inplace(|v| v * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0f64, |a, &b| a.max(b.abs()))
    }
}

/// Activations cached by a batched forward pass, consumed by `backward_batch`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input, `activations[k]` the output of layer `k`.
    activations: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations
            .last()
            .expect("trace always holds the input")
    }

    /// Post-activation outputs of the hidden layers.
    pub fn hidden(&self) -> &[Array2<f64>] {
        &self.activations[1..self.activations.len() - 1]
    }
}

/// Result of a batched backward pass.
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: GradientSet,
    /// Gradient with respect to the input rows.
    pub input_grad: Array2<f64>,
}

impl LayerStack {
    /// Builds a stack from explicit weights, checking shapes and finiteness.
    pub fn from_weights(
        weights: Vec<Array2<f64>>,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config(
                "a layer stack needs at least one layer".into(),
            ));
        }
        let mut layer_dims = vec![weights[0].ncols()];
        for w in &weights {
            let expected = *layer_dims.last().unwrap();
            if w.ncols() != expected {
                return Err(Error::Shape {
                    context: "LayerStack::from_weights",
                    expected,
                    got: w.ncols(),
                });
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite weight".into()));
            }
            layer_dims.push(w.nrows());
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("layer dimensions must be positive".into()));
        }
        Ok(LayerStack {
            layer_dims,
            weights,
            hidden_activation: HiddenActivation::Tanh,
            output_activation,
        })
    }

    /// Uniform initialization in `[-1/sqrt(in_k), 1/sqrt(in_k)]` per layer.
    pub fn init<R: rand::Rng + ?Sized>(
        layer_dims: &[usize],
        output_activation: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Config("need at least input and output dims".into()));
        }
        let weights = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..=bound))
            })
            .collect();
        Self::from_weights(weights, output_activation)
    }

    /// Single linear layer `W`.
    pub fn linear(weights: Array2<f64>) -> Result<Self> {
        Self::from_weights(vec![weights], OutputActivation::Identity)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn hidden_activation(&self) -> HiddenActivation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    /// Largest `‖W_k‖_{1,∞}` (max absolute row sum) over all layers.
    pub fn max_weight_norm(&self) -> f64 {
        self.weights.iter().map(row_abs_sum_max).fold(0.0, f64::max)
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let batch = x.insert_axis(Axis(0));
        Ok(self.forward_batch(batch)?.index_axis_move(Axis(0), 0))
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        crate::error::check_len("LayerStack::forward", self.input_dim(), x.ncols())?;
        let mut a = x.dot(&self.weights[0].t());
        for w in &self.weights[1..] {
            a.mapv_inplace(f64::tanh);
            a = a.dot(&w.t());
        }
        if self.output_activation == OutputActivation::Sigmoid {
            a.mapv_inplace(sigmoid);
        }
        Ok(a)
    }

    /// Forward pass that keeps every layer's activation for backpropagation.
    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<ForwardTrace> {
        crate::error::check_len("LayerStack::forward", self.input_dim(), x.ncols())?;
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        activations.push(x.to_owned());
        for (k, w) in self.weights.iter().enumerate() {
            let mut z = activations[k].dot(&w.t());
            if k < last {
                z.mapv_inplace(f64::tanh);
            } else if self.output_activation == OutputActivation::Sigmoid {
                z.mapv_inplace(sigmoid);
            }
            activations.push(z);
        }
        Ok(ForwardTrace { activations })
    }

    /// Gradients of `sum_rows(upstream ⊙ output)` with respect to every
    /// weight matrix and to the inputs.
    pub fn backward_batch(
        &self,
        trace: &ForwardTrace,
        upstream: ArrayView2<f64>,
    ) -> Result<Backward> {
        let out = trace.output();
        if upstream.dim() != out.dim() {
            return Err(Error::Shape {
                context: "LayerStack::backward",
                expected: out.len(),
                got: upstream.len(),
            });
        }
        let mut delta = upstream.to_owned();
        if self.output_activation == OutputActivation::Sigmoid {
            Zip::from(&mut delta)
                .and(out)
                .for_each(|d, &p| *d *= p * (1.0 - p));
        }
        Ok(self.backpropagate(trace, delta))
    }

    /// Like [`LayerStack::backward_batch`], but `logit_grad` is taken with
    /// respect to the last pre-activation. For a sigmoid output with
    /// cross-entropy loss this is `p − label`, which stays accurate when the
    /// sigmoid saturates.
    pub fn backward_batch_logit(
        &self,
        trace: &ForwardTrace,
        logit_grad: ArrayView2<f64>,
    ) -> Result<Backward> {
        let out = trace.output();
        if logit_grad.dim() != out.dim() {
            return Err(Error::Shape {
                context: "LayerStack::backward",
                expected: out.len(),
                got: logit_grad.len(),
            });
        }
        Ok(self.backpropagate(trace, logit_grad.to_owned()))
    }

    fn backpropagate(&self, trace: &ForwardTrace, mut delta: Array2<f64>) -> Backward {
        let depth = self.weights.len();
        let mut grads = vec![Array2::zeros((0, 0)); depth];
        for k in (0..depth).rev() {
            let input = &trace.activations[k];
            grads[k] = delta.t().dot(input);
            delta = delta.dot(&self.weights[k]);
            if k > 0 {
                // input of layer k is tanh of the previous pre-activation
                Zip::from(&mut delta)
                    .and(input)
                    .for_each(|d, &a| *d *= 1.0 - a * a);
            }
        }
        Backward {
            grads: GradientSet(grads),
            input_grad: delta,
        }
    }

    /// Single-sample gradient of `upstream · forward(x)` with respect to the weights.
    pub fn backward(&self, x: ArrayView1<f64>, upstream: ArrayView1<f64>) -> Result<GradientSet> {
        crate::error::check_len("LayerStack::backward", self.output_dim(), upstream.len())?;
        let trace = self.forward_trace(x.insert_axis(Axis(0)))?;
        Ok(self
            .backward_batch(&trace, upstream.insert_axis(Axis(0)))?
            .grads)
    }

    /// Versioned plain-text serialization: header, activations, dims, then
    /// each matrix row-major with one row per line.
    pub fn to_text(&self) -> String {
        let mut s = String::from("cornet-net v1\n");
        let _ = writeln!(s, "activation tanh {}", self.output_activation.name());
        let dims: Vec<String> = self.layer_dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "dims {}", dims.join(" "));
        for w in &self.weights {
            for row in w.rows() {
                let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(s, "{}", vals.join(" "));
            }
        }
        s
    }

    /// Parses the format written by [`LayerStack::to_text`] from a line iterator.
    pub fn from_lines<'a, I: Iterator<Item = &'a str>>(lines: &mut I) -> Result<Self> {
        let mut next = || {
            lines
                .next()
                .ok_or_else(|| Error::Format("unexpected end of network block".into()))
        };
        let header = next()?;
        if header.trim() != "cornet-net v1" {
            return Err(Error::Format(format!(
                "unsupported network header `{header}`"
            )));
        }
        let act = next()?;
        let act: Vec<&str> = act.split_whitespace().collect();
        if act.len() != 3 || act[0] != "activation" || act[1] != "tanh" {
            return Err(Error::Format("malformed activation line".into()));
        }
        let output_activation = OutputActivation::from_name(act[2])?;
        let dims_line = next()?;
        let mut parts = dims_line.split_whitespace();
        if parts.next() != Some("dims") {
            return Err(Error::Format("missing dims line".into()));
        }
        let dims = parts
            .map(|p| p.parse::<usize>().map_err(|e| Error::Format(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if dims.len() < 2 {
            return Err(Error::Format("need at least two dims".into()));
        }
        let mut weights = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut w = Array2::zeros((fan_out, fan_in));
            for r in 0..fan_out {
                let line = next()?;
                let vals = parse_row(line)?;
                if vals.len() != fan_in {
                    return Err(Error::Format(format!(
                        "row has {} values, expected {fan_in}",
                        vals.len()
                    )));
                }
                w.row_mut(r).assign(&Array1::from(vals));
            }
            weights.push(w);
        }
        Self::from_weights(weights, output_activation)
    }
}

pub(crate) fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|e| Error::Format(format!("bad number `{p}`: {e}")))
        })
        .collect()
}

/// `‖W‖_{1,∞}`: maximum over rows of the absolute row sum.
pub fn row_abs_sum_max(w: &Array2<f64>) -> f64 {
    w.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Gradient reversal: identity on the forward pass, `-scale · upstream` on
/// the backward pass.
pub fn reverse_gradient(upstream: ArrayView1<f64>, scale: f64) -> Array1<f64> {
    debug_assert!(scale >= 0.0);
    upstream.mapv(|g| -scale * g)
}

pub fn reverse_gradient_batch(upstream: ArrayView2<f64>, scale: f64) -> Array2<f64> {
    debug_assert!(scale >= 0.0);
    upstream.mapv(|g| -scale * g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub first_moment: GradientSet,
    pub second_moment: GradientSet,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, weights: &[Array2<f64>]) -> Self {
        OptimizerState {
            config,
            first_moment: GradientSet::zeros_like(weights),
            second_moment: GradientSet::zeros_like(weights),
            step_count: 0,
        }
    }

    /// One bias-corrected Adam update of `weights` in place.
    pub fn step(&mut self, grads: &GradientSet, weights: &mut [Array2<f64>]) -> Result<()> {
        if grads.0.len() != weights.len() || grads.0.len() != self.first_moment.0.len() {
            return Err(Error::Shape {
                context: "adam_step",
                expected: weights.len(),
                got: grads.0.len(),
            });
        }
        for (g, w) in grads.0.iter().zip(weights.iter()) {
            if g.dim() != w.dim() {
                return Err(Error::Shape {
                    context: "adam_step",
                    expected: w.len(),
                    got: g.len(),
                });
            }
        }
        if !grads.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient at optimizer step {}",
                self.step_count + 1
            )));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((g, w), (m, v)) in grads.0.iter().zip(weights.iter_mut()).zip(
            self.first_moment
                .0
                .iter_mut()
                .zip(self.second_moment.0.iter_mut()),
        ) {
            Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            });
        }
        Ok(())
    }
}

/// Functional form of one Adam update on a layer stack.
pub fn adam_step(
    state: &mut OptimizerState,
    grads: &GradientSet,
    stack: &mut LayerStack,
) -> Result<()> {
    state.step(grads, stack.weights_mut())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn zero_weights_give_zero_output() {
        let stack = LayerStack::from_weights(
            vec![Array2::zeros((4, 3)), Array2::zeros((2, 4))],
            OutputActivation::Identity,
        )
        .unwrap();
        let out = stack.forward(array![0.3, -1.0, 2.0].view()).unwrap();
        assert_eq!(out, array![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let stack = LayerStack::linear(Array2::eye(2)).unwrap();
        let out = stack.forward(array![1.5, -2.0].view()).unwrap();
        assert_eq!(out, array![1.5, -2.0]);
    }

    #[test]
    fn odd_hand_network_is_zero() {
        let stack = LayerStack::from_weights(
            vec![array![[1.0], [-1.0]], array![[0.5, 0.5]]],
            OutputActivation::Identity,
        )
        .unwrap();
        let out = stack.forward(array![0.3].view()).unwrap();
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn input_shape_is_checked() {
        let stack = LayerStack::linear(Array2::eye(2)).unwrap();
        assert!(matches!(
            stack.forward(array![1.0].view()),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn mismatched_layers_rejected() {
        let err = LayerStack::from_weights(
            vec![Array2::zeros((4, 3)), Array2::zeros((2, 5))],
            OutputActivation::Identity,
        );
        assert!(err.is_err());
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let mut rng = seed::rng(3);
        let stack = LayerStack::init(&[3, 4, 2], OutputActivation::Identity, &mut rng).unwrap();
        let g = stack
            .backward(array![0.1, 0.2, 0.3].view(), array![0.0, 0.0].view())
            .unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let w = array![[0.3, -0.1, 0.7], [1.2, 0.4, -0.5]];
        let stack = LayerStack::linear(w).unwrap();
        let x = array![1.0, -2.0, 0.5];
        let up = array![0.25, -3.0];
        let g = stack.backward(x.view(), up.view()).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert!((g.0[0][[i, j]] - up[i] * x[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sigmoid_output_in_unit_interval() {
        let mut rng = seed::rng(11);
        let stack = LayerStack::init(&[2, 16, 1], OutputActivation::Sigmoid, &mut rng).unwrap();
        let x = Array2::from_shape_fn((50, 2), |(i, j)| (i as f64 - 25.0) * (j as f64 + 1.0));
        let p = stack.forward_batch(x.view()).unwrap();
        assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn hidden_units_are_bounded() {
        let mut rng = seed::rng(5);
        let stack = LayerStack::init(&[3, 6, 2], OutputActivation::Identity, &mut rng).unwrap();
        let x: Array2<f64> = Array2::from_shape_simple_fn((20, 3), || {
            50.0 * {
                let v: f64 = StandardNormal.sample(&mut rng);
                v
            }
        });
        let trace = stack.forward_trace(x.view()).unwrap();
        assert!(trace.activations[1].iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn reversal_examples() {
        assert_eq!(
            reverse_gradient(array![1.0, -2.0].view(), 1.0),
            array![-1.0, 2.0]
        );
        assert_eq!(
            reverse_gradient(array![3.0, -2.0].view(), 0.0),
            array![0.0, 0.0]
        );
        assert_eq!(reverse_gradient(array![0.4].view(), 2.5), array![-1.0]);
        let g = array![0.7, -0.2];
        assert_eq!(
            reverse_gradient(reverse_gradient(g.view(), 1.0).view(), 1.0),
            g
        );
    }

    #[test]
    fn adam_zero_gradient_keeps_weights() {
        let mut stack = LayerStack::linear(array![[1.0, 2.0]]).unwrap();
        let mut state = OptimizerState::new(AdamConfig::default(), stack.weights());
        let zeros = GradientSet::zeros_like(stack.weights());
        adam_step(&mut state, &zeros, &mut stack).unwrap();
        assert_eq!(stack.weights()[0], array![[1.0, 2.0]]);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn adam_zero_learning_rate_accumulates_moments() {
        let mut stack = LayerStack::linear(array![[1.0]]).unwrap();
        let cfg = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        let mut state = OptimizerState::new(cfg, stack.weights());
        let g = GradientSet(vec![array![[2.0]]]);
        adam_step(&mut state, &g, &mut stack).unwrap();
        assert_eq!(stack.weights()[0][[0, 0]], 1.0);
        assert!((state.first_moment.0[0][[0, 0]] - 0.2).abs() < 1e-15);
        assert!(state.second_moment.0[0][[0, 0]] > 0.0);
    }

    #[test]
    fn adam_first_step_moves_against_gradient() {
        let mut stack = LayerStack::linear(array![[1.0]]).unwrap();
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut state = OptimizerState::new(cfg, stack.weights());
        adam_step(&mut state, &GradientSet(vec![array![[1.0]]]), &mut stack).unwrap();
        let w = stack.weights()[0][[0, 0]];
        assert!(w < 1.0);
        // bias-corrected first step has magnitude ~ learning rate
        assert!((w - 0.9).abs() < 1e-6);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut stack = LayerStack::linear(array![[1.0]]).unwrap();
        let mut state = OptimizerState::new(AdamConfig::default(), stack.weights());
        let g = GradientSet(vec![array![[f64::NAN]]]);
        assert!(matches!(
            adam_step(&mut state, &g, &mut stack),
            Err(Error::Numeric(_))
        ));
        assert_eq!(state.step_count, 0);
    }

    #[test]
    fn text_round_trip() {
        let mut rng = seed::rng(9);
        let stack = LayerStack::init(&[3, 5, 2], OutputActivation::Sigmoid, &mut rng).unwrap();
        let text = stack.to_text();
        let back = LayerStack::from_lines(&mut text.lines()).unwrap();
        assert_eq!(back, stack);
    }
}

/// Appends a constant-1 column to the covariates.
pub fn augment(x: ArrayView2<f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut out = Array2::ones((n, d + 1));
    out.slice_mut(ndarray::s![.., ..d]).assign(&x);
    out
}

/// A network applied to covariates, optionally after appending a constant-1
/// input feature (the networks themselves carry no bias vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    net: LayerStack,
    intercept: bool,
}

impl Representation {
    pub fn new(net: LayerStack, intercept: bool) -> Result<Self> {
        if intercept && net.input_dim() < 2 {
            return Err(Error::Config(
                "an intercept representation needs at least one covariate".into(),
            ));
        }
        Ok(Representation { net, intercept })
    }

    pub fn net(&self) -> &LayerStack {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut LayerStack {
        &mut self.net
    }

    pub fn intercept(&self) -> bool {
        self.intercept
    }

    pub fn covariate_dim(&self) -> usize {
        self.net.input_dim() - usize::from(self.intercept)
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    /// Network input for covariate rows.
    pub fn prepare(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        crate::error::check_len("representation input", self.covariate_dim(), x.ncols())?;
        Ok(if self.intercept {
            augment(x)
        } else {
            x.to_owned()
        })
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.intercept {
            self.net.forward_batch(self.prepare(x)?.view())
        } else {
            self.net.forward_batch(x)
        }
    }

    pub fn apply_one(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self
            .apply(x.insert_axis(Axis(0)))?
            .index_axis_move(Axis(0), 0))
    }

    pub fn to_text(&self) -> String {
        format!(
            "intercept {}\n{}",
            u8::from(self.intercept),
            self.net.to_text()
        )
    }

    pub fn from_lines<'a, I: Iterator<Item = &'a str>>(lines: &mut I) -> Result<Self> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format("missing intercept line".into()))?;
        let intercept = match line.trim() {
            "intercept 1" => true,
            "intercept 0" => false,
            other => return Err(Error::Format(format!("bad intercept line `{other}`"))),
        };
        Self::new(LayerStack::from_lines(lines)?, intercept)
    }
}
