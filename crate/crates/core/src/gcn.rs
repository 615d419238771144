//! Stacked graph convolutions `L⁽ˡ⁺¹⁾ = σ(Φ L⁽ˡ⁾ W_l)` with hand-derived
//! backpropagation.
//!
//! The backward pass uses `∂/∂W_l = L⁽ˡ⁾ᵀ Φᵀ G` and `δ⁽ˡ⁾ = Φᵀ G W_lᵀ` where
//! `G = δ⁽ˡ⁺¹⁾ ⊙ σ'`, which equals `(Φ L⁽ˡ⁾)ᵀ G` without ever forming the
//! (possibly `n×n`) product `Φ L⁽⁰⁾` for one-hot features.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::graph::Operator;
use crate::numerics::{sigmoid, Matrix, RngState};

/// Elementwise layer nonlinearity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Activation {
    #[default]
    Sigmoid,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the layer output `y = act(x)`.
    #[inline]
    pub fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::InvalidArgument(format!("unknown activation {other:?}"))),
        }
    }
}

/// Node input features `X = L⁽⁰⁾`.
#[derive(Clone, Debug, PartialEq)]
pub enum Features {
    /// One-hot rows, `X = I_n`; never materialized.
    Identity(usize),
    Dense(Matrix),
}

/// How input features are produced for a graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FeatureMode {
    Identity,
    /// Seeded `n×dim` matrix of independent standard normals.
    RandomProjection { dim: usize, seed: u64 },
}

impl FeatureMode {
    pub fn build(self, n: usize) -> Features {
        match self {
            FeatureMode::Identity => Features::Identity(n),
            FeatureMode::RandomProjection { dim, seed } => {
                let mut rng = RngState::with_stream(seed, 0xfea7);
                Features::Dense(Matrix::from_fn(n, dim, |_, _| StandardNormal.sample(&mut rng)))
            }
        }
    }
}

impl Features {
    pub fn rows(&self) -> usize {
        match self {
            Features::Identity(n) => *n,
            Features::Dense(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Features::Identity(n) => *n,
            Features::Dense(m) => m.cols(),
        }
    }

    pub fn as_input(&self) -> LayerInput<'_> {
        match self {
            Features::Identity(n) => LayerInput::Identity(*n),
            Features::Dense(m) => LayerInput::Dense(m),
        }
    }
}

/// Borrowed left operand of a layer.
#[derive(Clone, Copy, Debug)]
pub enum LayerInput<'a> {
    Identity(usize),
    Dense(&'a Matrix),
}

impl LayerInput<'_> {
    fn cols(&self) -> usize {
        match self {
            LayerInput::Identity(n) => *n,
            LayerInput::Dense(m) => m.cols(),
        }
    }

    fn rows(&self) -> usize {
        match self {
            LayerInput::Identity(n) => *n,
            LayerInput::Dense(m) => m.rows(),
        }
    }

    /// `input · w`
    fn times(&self, w: &Matrix) -> Result<Matrix> {
        match self {
            LayerInput::Identity(_) => Ok(w.clone()),
            LayerInput::Dense(m) => m.matmul(w),
        }
    }

    /// `inputᵀ · h`
    fn t_times(&self, h: &Matrix) -> Result<Matrix> {
        match self {
            LayerInput::Identity(_) => Ok(h.clone()),
            LayerInput::Dense(m) => m.t_matmul(h),
        }
    }
}

/// One graph convolution: `act(Φ · input · w)`.
pub fn layer_forward(
    input: LayerInput<'_>,
    phi: &impl Operator,
    w: &Matrix,
    act: Activation,
) -> Result<Matrix> {
    if input.cols() != w.rows() {
        return Err(Error::Dimension(format!(
            "layer input has {} columns but weight has {} rows",
            input.cols(),
            w.rows()
        )));
    }
    if input.rows() != phi.dim() {
        return Err(Error::Dimension(format!(
            "{} input rows for a {}-node operator",
            input.rows(),
            phi.dim()
        )));
    }
    let mut z = phi.apply(&input.times(w)?)?;
    if act != Activation::Identity {
        z.map_inplace(|x| act.apply(x));
    }
    Ok(z)
}

/// Gradients of one layer given `∂loss/∂output`. Returns `(∂W, ∂input)`;
/// the input gradient is skipped when `need_input` is false.
pub fn layer_backward(
    input: LayerInput<'_>,
    output: &Matrix,
    phi: &impl Operator,
    w: &Matrix,
    act: Activation,
    upstream: &Matrix,
    need_input: bool,
) -> Result<(Matrix, Option<Matrix>)> {
    output.check_same_shape(upstream, "layer_backward upstream")?;
    let g = match act {
        Activation::Identity => upstream.clone(),
        _ => {
            let mut g = upstream.clone();
            for (gi, &y) in g.data_mut().iter_mut().zip(output.data()) {
                *gi *= act.derivative_at_output(y);
            }
            g
        }
    };
    let h = phi.apply_transpose(&g)?;
    let dw = input.t_times(&h)?;
    let dinput = if need_input { Some(h.matmul_t(w)?) } else { None };
    Ok((dw, dinput))
}

/// Weights and activations of an `m`-layer stack.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams {
    weights: Vec<Matrix>,
    activations: Vec<Activation>,
}

impl GcnParams {
    pub fn new(weights: Vec<Matrix>, activations: Vec<Activation>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("a GCN needs at least one layer".into()));
        }
        if weights.len() != activations.len() {
            return Err(Error::Dimension(format!(
                "{} weights but {} activations",
                weights.len(),
                activations.len()
            )));
        }
        for pair in weights.windows(2) {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::Dimension(format!(
                    "layer widths do not chain: {}x{} then {}x{}",
                    pair[0].rows(),
                    pair[0].cols(),
                    pair[1].rows(),
                    pair[1].cols()
                )));
            }
        }
        Ok(GcnParams { weights, activations })
    }

    /// Glorot-uniform initialization, `U[−a, a]` with `a = √(6/(fan_in+fan_out))`.
    pub fn init(layer_dims: &[usize], activations: &[Activation], rng: &mut RngState) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidArgument("need input and output widths".into()));
        }
        let weights = layer_dims
            .windows(2)
            .map(|d| glorot_uniform(d[0], d[1], rng))
            .collect();
        GcnParams::new(weights, activations.to_vec())
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.weights[0].rows()];
        dims.extend(self.weights.iter().map(Matrix::cols));
        dims
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map_or(0, Matrix::cols)
    }

    pub fn to_checkpoint(&self, prefix: &str, ck: &mut Checkpoint) {
        let acts: Vec<String> = self.activations.iter().map(ToString::to_string).collect();
        ck.set_meta(&format!("{prefix}.activations"), &acts.join(","));
        for (l, w) in self.weights.iter().enumerate() {
            ck.push_tensor(&format!("{prefix}.w{l}"), w.clone());
        }
    }

    pub fn from_checkpoint(prefix: &str, ck: &Checkpoint) -> Result<Self> {
        let acts = ck
            .meta(&format!("{prefix}.activations"))
            .ok_or_else(|| Error::Checkpoint(format!("missing {prefix}.activations")))?;
        let activations = acts.split(',').map(str::parse).collect::<Result<Vec<Activation>>>()?;
        let weights = (0..activations.len())
            .map(|l| ck.tensor(&format!("{prefix}.w{l}")).cloned())
            .collect::<Result<Vec<_>>>()?;
        GcnParams::new(weights, activations)
    }
}

pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut RngState) -> Matrix {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-a..=a))
}

/// Layer outputs `L⁽¹⁾ … L⁽ᵐ⁾` of one forward pass; `L⁽⁰⁾` is the features.
#[derive(Clone, Debug)]
pub struct GcnTrace {
    outputs: Vec<Matrix>,
}

impl GcnTrace {
    pub fn layers(&self) -> &[Matrix] {
        &self.outputs
    }

    /// Final layer, the per-node embedding table.
    pub fn embeddings(&self) -> &Matrix {
        self.outputs.last().expect("trace has at least one layer")
    }

    pub fn into_embeddings(mut self) -> Matrix {
        self.outputs.pop().expect("trace has at least one layer")
    }
}

pub fn gcn_forward(x: &Features, phi: &impl Operator, params: &GcnParams) -> Result<GcnTrace> {
    let mut outputs: Vec<Matrix> = Vec::with_capacity(params.depth());
    for (l, (w, &act)) in params.weights.iter().zip(&params.activations).enumerate() {
        let input = if l == 0 { x.as_input() } else { LayerInput::Dense(&outputs[l - 1]) };
        let out = layer_forward(input, phi, w, act)?;
        outputs.push(out);
    }
    Ok(GcnTrace { outputs })
}

/// Gradients of a scalar loss with respect to every `W_l`, given
/// `upstream = ∂loss/∂L⁽ᵐ⁾`.
pub fn gcn_backward(
    x: &Features,
    trace: &GcnTrace,
    phi: &impl Operator,
    params: &GcnParams,
    upstream: &Matrix,
) -> Result<Vec<Matrix>> {
    if trace.outputs.len() != params.depth() {
        return Err(Error::Dimension(format!(
            "trace has {} layers, params {}",
            trace.outputs.len(),
            params.depth()
        )));
    }
    for (out, w) in trace.outputs.iter().zip(&params.weights) {
        if out.cols() != w.cols() {
            return Err(Error::Dimension("trace was produced by different params".into()));
        }
    }
    let mut grads = vec![Matrix::zeros(0, 0); params.depth()];
    let mut delta = upstream.clone();
    for l in (0..params.depth()).rev() {
        let input = if l == 0 { x.as_input() } else { LayerInput::Dense(&trace.outputs[l - 1]) };
        let (dw, dinput) = layer_backward(
            input,
            &trace.outputs[l],
            phi,
            &params.weights[l],
            params.activations[l],
            &delta,
            l > 0,
        )?;
        grads[l] = dw;
        if let Some(d) = dinput {
            delta = d;
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{renormalized_laplacian, KnowledgeGraph};
    use crate::numerics::finite_difference_check;

    fn path4() -> Matrix {
        renormalized_laplacian(&KnowledgeGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap())
    }

    #[test]
    fn zero_weights_give_half() {
        let phi = path4();
        let p = GcnParams::new(
            vec![Matrix::zeros(4, 3), Matrix::zeros(3, 2)],
            vec![Activation::Sigmoid; 2],
        )
        .unwrap();
        let t = gcn_forward(&Features::Identity(4), &phi, &p).unwrap();
        for layer in t.layers() {
            assert!(layer.data().iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn isolated_node_single_layer() {
        let phi = Matrix::identity(1);
        let w = 0.7;
        let p = GcnParams::new(vec![Matrix::filled(1, 1, w)], vec![Activation::Sigmoid]).unwrap();
        let t = gcn_forward(&Features::Dense(Matrix::filled(1, 1, 1.0)), &phi, &p).unwrap();
        assert!((t.embeddings().get(0, 0) - sigmoid(w)).abs() < 1e-15);
    }

    #[test]
    fn zero_upstream_zero_gradient_and_linearity() {
        let phi = path4();
        let mut rng = RngState::new(3);
        let p = GcnParams::init(&[4, 3, 2], &[Activation::Sigmoid; 2], &mut rng).unwrap();
        let x = Features::Identity(4);
        let t = gcn_forward(&x, &phi, &p).unwrap();
        let g0 = gcn_backward(&x, &t, &phi, &p, &Matrix::zeros(4, 2)).unwrap();
        assert!(g0.iter().all(|g| g.max_abs() == 0.0));
        let up = Matrix::from_fn(4, 2, |i, j| i as f64 - j as f64 * 0.3);
        let g1 = gcn_backward(&x, &t, &phi, &p, &up).unwrap();
        let g3 = gcn_backward(&x, &t, &phi, &p, &up.scale(3.0)).unwrap();
        for (a, b) in g1.iter().zip(&g3) {
            assert!(a.scale(3.0).max_abs_diff(b).unwrap() < 1e-12);
        }
    }

    #[test]
    fn path_graph_gradient_matches_finite_differences() {
        let phi = path4();
        let mut rng = RngState::new(17);
        let acts = [Activation::Sigmoid; 2];
        let p = GcnParams::init(&[4, 3, 3], &acts, &mut rng).unwrap();
        let x = Features::Identity(4);
        // loss = Σ c_ij · L2_ij
        let c = Matrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64).cos());
        let loss = |ws: &[Matrix]| {
            let q = GcnParams::new(ws.to_vec(), acts.to_vec())?;
            let t = gcn_forward(&x, &phi, &q)?;
            Ok(t.embeddings().hadamard(&c)?.sum())
        };
        let t = gcn_forward(&x, &phi, &p).unwrap();
        let g = gcn_backward(&x, &t, &phi, &p, &c).unwrap();
        let r = finite_difference_check(loss, p.weights(), &g, 1e-5, 1000).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn mismatched_trace_is_rejected() {
        let phi = path4();
        let mut rng = RngState::new(1);
        let a = GcnParams::init(&[4, 3, 2], &[Activation::Sigmoid; 2], &mut rng).unwrap();
        let b = GcnParams::init(&[4, 5], &[Activation::Sigmoid], &mut rng).unwrap();
        let x = Features::Identity(4);
        let t = gcn_forward(&x, &phi, &b).unwrap();
        assert!(gcn_backward(&x, &t, &phi, &a, &Matrix::zeros(4, 2)).is_err());
        assert!(GcnParams::new(vec![Matrix::zeros(2, 3), Matrix::zeros(2, 3)], vec![Activation::Relu; 2]).is_err());
    }

    #[test]
    fn activation_names_round_trip() {
        for a in [Activation::Sigmoid, Activation::Relu, Activation::Identity] {
            assert_eq!(a.to_string().parse::<Activation>().unwrap(), a);
        }
    }
}
