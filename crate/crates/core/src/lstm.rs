//! Stacked LSTM network with a dense output head.
//!
//! One step of a layer computes
//!
//! ```text
//! f = g(W_f x + U_f h' + b_f)
//! i = g(W_i x + U_i h' + b_i)
//! k = tanh(W_k x + U_k h' + b_k)
//! c = f ⊙ c' + i ⊙ k
//! o = g(W_o x + U_o h' + b_o)
//! h = o ⊙ tanh(c)
//! ```
//!
//! where `g` is the configurable gate activation. The backward pass is the
//! exact derivative of the above unrolled over the whole sequence (full BPTT,
//! no truncation).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dd::{forward_generic, DoubleF64};
use crate::error::{Error, Result};
use crate::tensor::{ActivationKind, Matrix, Vector};

/// Gate slot inside the per-gate parameter arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Candidate = 2,
    Output = 3,
}

pub const GATES: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output];

#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayerParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Input weights, `hidden_dim × input_dim`, indexed by [`Gate`].
    pub w: [Matrix; 4],
    /// Recurrent weights, `hidden_dim × hidden_dim`.
    pub u: [Matrix; 4],
    pub b: [Vector; 4],
    pub gate_activation: ActivationKind,
}

/// Everything one forward step produces, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmStepState {
    /// Gate pre-activations, indexed by [`Gate`].
    pub pre: [Vector; 4],
    /// Activated gates: `f`, `i`, `k`, `o`.
    pub act: [Vector; 4],
    pub c: Vector,
    pub h: Vector,
}

/// Gradients for one layer; same shapes as [`LstmLayerParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients {
    pub w: [Matrix; 4],
    pub u: [Matrix; 4],
    pub b: [Vector; 4],
}

#[derive(Clone, Debug)]
pub struct StepGradients {
    pub dx: Vector,
    pub dh_prev: Vector,
    pub dc_prev: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmNetwork {
    pub layers: Vec<LstmLayerParams>,
    /// `n × last hidden_dim`
    pub head_weights: Matrix,
    pub head_bias: Vector,
    pub head_activation: ActivationKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGradients {
    pub layers: Vec<LayerGradients>,
    pub head_weights: Matrix,
    pub head_bias: Vector,
}

/// Cached activations from [`net_forward`], consumed by [`net_backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Vector>,
    /// `states[layer][t]`
    states: Vec<Vec<LstmStepState>>,
    head_pre: Vector,
}

#[cfg(test)]
thread_local! {
    /// Flips the sign of the forget-gate pre-activation gradient. Test-only
    /// mutation used to show that `gradient_check` actually detects bugs.
    pub(crate) static CORRUPT_BACKWARD: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, gate_activation: ActivationKind) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w: std::array::from_fn(|_| Matrix::zeros(hidden_dim, input_dim)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden_dim, hidden_dim)),
            b: std::array::from_fn(|_| Vector::zeros(hidden_dim)),
            gate_activation,
        }
    }

    fn gate_kind(&self, gate: Gate) -> ActivationKind {
        match gate {
            Gate::Candidate => ActivationKind::Tanh,
            _ => self.gate_activation,
        }
    }

    fn check(&self) -> Result<()> {
        let (h, d) = (self.hidden_dim, self.input_dim);
        let ok = self.w.iter().all(|m| m.shape() == (h, d))
            && self.u.iter().all(|m| m.shape() == (h, h))
            && self.b.iter().all(|v| v.len() == h);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!("layer parameter blocks inconsistent with {d}->{h}")))
        }
    }

    pub fn param_count(&self) -> usize {
        4 * self.hidden_dim * (self.input_dim + self.hidden_dim + 1)
    }

    /// Parameter blocks in storage order: W_f..W_o, U_f..U_o, b_f..b_o.
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.w
            .iter()
            .map(Matrix::as_slice)
            .chain(self.u.iter().map(Matrix::as_slice))
            .chain(self.b.iter().map(|v| v.as_slice()))
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.w
            .iter_mut()
            .map(Matrix::as_mut_slice)
            .chain(self.u.iter_mut().map(Matrix::as_mut_slice))
            .chain(self.b.iter_mut().map(|v| v.as_mut_slice()))
    }
}

impl LstmStepState {
    pub fn f(&self) -> &Vector {
        &self.act[Gate::Forget as usize]
    }

    pub fn i(&self) -> &Vector {
        &self.act[Gate::Input as usize]
    }

    pub fn k(&self) -> &Vector {
        &self.act[Gate::Candidate as usize]
    }

    pub fn o(&self) -> &Vector {
        &self.act[Gate::Output as usize]
    }
}

impl LayerGradients {
    pub fn zeros_like(p: &LstmLayerParams) -> Self {
        Self {
            w: std::array::from_fn(|_| Matrix::zeros(p.hidden_dim, p.input_dim)),
            u: std::array::from_fn(|_| Matrix::zeros(p.hidden_dim, p.hidden_dim)),
            b: std::array::from_fn(|_| Vector::zeros(p.hidden_dim)),
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.w
            .iter()
            .map(Matrix::as_slice)
            .chain(self.u.iter().map(Matrix::as_slice))
            .chain(self.b.iter().map(|v| v.as_slice()))
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.w
            .iter_mut()
            .map(Matrix::as_mut_slice)
            .chain(self.u.iter_mut().map(Matrix::as_mut_slice))
            .chain(self.b.iter_mut().map(|v| v.as_mut_slice()))
    }
}

pub fn lstm_step_forward(p: &LstmLayerParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<LstmStepState> {
    if x.len() != p.input_dim || h_prev.len() != p.hidden_dim || c_prev.len() != p.hidden_dim {
        return Err(Error::Shape(format!(
            "lstm step expects x {}, h {}, c {}; got {}, {}, {}",
            p.input_dim,
            p.hidden_dim,
            p.hidden_dim,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    Ok(step_forward_unchecked(p, x, h_prev, c_prev))
}

fn step_forward_unchecked(p: &LstmLayerParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStepState {
    let pre: [Vector; 4] = std::array::from_fn(|g| {
        let mut z = p.b[g].clone();
        p.w[g].gemv_acc(x, &mut z);
        p.u[g].gemv_acc(h_prev, &mut z);
        z
    });
    let act: [Vector; 4] = std::array::from_fn(|g| {
        let kind = p.gate_kind(GATES[g]);
        Vector::from(pre[g].iter().map(|&z| kind.eval(z)).collect::<Vec<_>>())
    });
    let [f, i, k, o] = &act;
    let c: Vec<f64> = (0..p.hidden_dim).map(|j| f[j] * c_prev[j] + i[j] * k[j]).collect();
    let h: Vec<f64> = (0..p.hidden_dim).map(|j| o[j] * c[j].tanh()).collect();
    LstmStepState {
        pre,
        act,
        c: c.into(),
        h: h.into(),
    }
}

/// Backward through one step. Parameter gradients are added into `grads`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step_backward(
    p: &LstmLayerParams,
    state: &LstmStepState,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    dh: &[f64],
    dc: &[f64],
    grads: &mut LayerGradients,
) -> Result<StepGradients> {
    let hd = p.hidden_dim;
    if x.len() != p.input_dim
        || [h_prev.len(), c_prev.len(), dh.len(), dc.len(), state.h.len()]
            .iter()
            .any(|&l| l != hd)
    {
        return Err(Error::Shape("lstm step backward: inputs do not match layer".into()));
    }
    Ok(step_backward_unchecked(p, state, x, h_prev, c_prev, dh, dc, grads))
}

#[allow(clippy::too_many_arguments)]
fn step_backward_unchecked(
    p: &LstmLayerParams,
    state: &LstmStepState,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    dh: &[f64],
    dc: &[f64],
    grads: &mut LayerGradients,
) -> StepGradients {
    let hd = p.hidden_dim;
    let [f, i, k, o] = &state.act;
    let mut dz: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hd]);
    let mut dc_prev = vec![0.0; hd];
    for j in 0..hd {
        let tc = state.c[j].tanh();
        let dc_total = dc[j] + dh[j] * o[j] * (1.0 - tc * tc);
        let g = p.gate_activation;
        dz[Gate::Output as usize][j] = dh[j] * tc * g.derivative(state.pre[Gate::Output as usize][j]);
        dz[Gate::Forget as usize][j] = dc_total * c_prev[j] * g.derivative(state.pre[Gate::Forget as usize][j]);
        dz[Gate::Input as usize][j] = dc_total * k[j] * g.derivative(state.pre[Gate::Input as usize][j]);
        dz[Gate::Candidate as usize][j] = dc_total * i[j] * (1.0 - k[j] * k[j]);
        dc_prev[j] = dc_total * f[j];
    }
    #[cfg(test)]
    if CORRUPT_BACKWARD.with(|c| c.get()) {
        for v in dz[Gate::Forget as usize].iter_mut() {
            *v = -*v;
        }
    }
    let mut dx = vec![0.0; p.input_dim];
    let mut dh_prev = vec![0.0; hd];
    for g in 0..4 {
        grads.w[g].add_outer(&dz[g], x);
        grads.u[g].add_outer(&dz[g], h_prev);
        for (b, d) in grads.b[g].iter_mut().zip(&dz[g]) {
            *b += d;
        }
        p.w[g].gemv_t_acc(&dz[g], &mut dx);
        p.u[g].gemv_t_acc(&dz[g], &mut dh_prev);
    }
    StepGradients {
        dx: dx.into(),
        dh_prev: dh_prev.into(),
        dc_prev: dc_prev.into(),
    }
}

impl LstmNetwork {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.head_weights.rows()
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden_dim).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LstmLayerParams::param_count).sum::<usize>()
            + self.head_weights.as_slice().len()
            + self.head_bias.len()
    }

    /// All parameter blocks in serialization order.
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(LstmLayerParams::blocks)
            .chain(std::iter::once(self.head_weights.as_slice()))
            .chain(std::iter::once(self.head_bias.as_slice()))
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(LstmLayerParams::blocks_mut)
            .chain(std::iter::once(self.head_weights.as_mut_slice()))
            .chain(std::iter::once(self.head_bias.as_mut_slice()))
    }

    pub fn check(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        let mut expected = self.input_dim();
        for (j, layer) in self.layers.iter().enumerate() {
            layer.check()?;
            if layer.input_dim != expected {
                return Err(Error::Shape(format!(
                    "layer {j} takes {} inputs but previous layer emits {expected}",
                    layer.input_dim
                )));
            }
            expected = layer.hidden_dim;
        }
        if self.head_weights.cols() != expected || self.head_bias.len() != self.head_weights.rows() {
            return Err(Error::Shape(format!(
                "head {} with bias {} does not fit hidden width {expected}",
                self.head_weights,
                self.head_bias.len()
            )));
        }
        Ok(())
    }

    /// Forward pass without keeping the cache.
    pub fn predict(&self, seq: &[Vector]) -> Result<Vector> {
        net_forward(self, seq).map(|(p, _)| p)
    }
}

impl NetworkGradients {
    pub fn zeros_like(net: &LstmNetwork) -> Self {
        Self {
            layers: net.layers.iter().map(LayerGradients::zeros_like).collect(),
            head_weights: Matrix::zeros(net.head_weights.rows(), net.head_weights.cols()),
            head_bias: Vector::zeros(net.head_bias.len()),
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(LayerGradients::blocks)
            .chain(std::iter::once(self.head_weights.as_slice()))
            .chain(std::iter::once(self.head_bias.as_slice()))
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(LayerGradients::blocks_mut)
            .chain(std::iter::once(self.head_weights.as_mut_slice()))
            .chain(std::iter::once(self.head_bias.as_mut_slice()))
    }

    /// `self += other`, block by block in storage order.
    pub fn add_assign(&mut self, other: &NetworkGradients) {
        for (a, b) in self.blocks_mut().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            for x in block {
                *x *= factor;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.blocks().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks().flatten().all(|&g| g == 0.0)
    }
}

/// Runs `seq` through every layer (zero initial states) and applies the head
/// to the top layer's final hidden state.
pub fn net_forward(net: &LstmNetwork, seq: &[Vector]) -> Result<(Vector, ForwardCache)> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    net.check()?;
    if let Some((t, x)) = seq.iter().enumerate().find(|(_, x)| x.len() != net.input_dim()) {
        return Err(Error::Shape(format!(
            "sequence element {t} has length {}, network expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    let mut states: Vec<Vec<LstmStepState>> = Vec::with_capacity(net.layers.len());
    for (j, layer) in net.layers.iter().enumerate() {
        let zeros = vec![0.0; layer.hidden_dim];
        let mut out: Vec<LstmStepState> = Vec::with_capacity(seq.len());
        for t in 0..seq.len() {
            let x: &[f64] = if j == 0 { &seq[t] } else { &states[j - 1][t].h };
            let (h_prev, c_prev): (&[f64], &[f64]) = match out.last() {
                Some(s) => (&s.h, &s.c),
                None => (&zeros, &zeros),
            };
            let s = step_forward_unchecked(layer, x, h_prev, c_prev);
            out.push(s);
        }
        states.push(out);
    }
    let top = &states.last().expect("nonempty layers").last().expect("nonempty seq").h;
    let mut head_pre = net.head_bias.clone();
    net.head_weights.gemv_acc(top, &mut head_pre);
    let prediction = Vector::from(head_pre.iter().map(|&z| net.head_activation.eval(z)).collect::<Vec<_>>());
    Ok((
        prediction,
        ForwardCache {
            inputs: seq.to_vec(),
            states,
            head_pre,
        },
    ))
}

/// Exact gradient of a scalar loss whose derivative with respect to the
/// prediction is `dloss_dpred`.
pub fn net_backward(net: &LstmNetwork, cache: &ForwardCache, dloss_dpred: &[f64]) -> Result<NetworkGradients> {
    if cache.states.len() != net.layers.len()
        || cache.head_pre.len() != net.output_dim()
        || dloss_dpred.len() != net.output_dim()
        || cache
            .states
            .iter()
            .zip(&net.layers)
            .any(|(s, l)| s.len() != cache.inputs.len() || s.iter().any(|st| st.h.len() != l.hidden_dim))
    {
        return Err(Error::Shape("forward cache does not match network".into()));
    }
    let mut grads = NetworkGradients::zeros_like(net);
    let steps = cache.inputs.len();

    let dpre: Vec<f64> = dloss_dpred
        .iter()
        .zip(cache.head_pre.iter())
        .map(|(d, &z)| d * net.head_activation.derivative(z))
        .collect();
    let top_states = cache.states.last().expect("checked nonempty");
    let top_h = &top_states[steps - 1].h;
    grads.head_weights.add_outer(&dpre, top_h);
    for (b, d) in grads.head_bias.iter_mut().zip(&dpre) {
        *b += d;
    }

    // dh arriving from above: the head for the top layer, dx of the layer
    // above for lower ones.
    let top_width = net.layers.last().expect("checked").hidden_dim;
    let mut dh_from_above: Vec<Vec<f64>> = vec![vec![0.0; top_width]; steps];
    net.head_weights.gemv_t_acc(&dpre, &mut dh_from_above[steps - 1]);

    for j in (0..net.layers.len()).rev() {
        let layer = &net.layers[j];
        let states = &cache.states[j];
        let zeros = vec![0.0; layer.hidden_dim];
        let mut dh_next = vec![0.0; layer.hidden_dim];
        let mut dc_next = vec![0.0; layer.hidden_dim];
        let mut dx_seq: Vec<Vec<f64>> = vec![Vec::new(); steps];
        for t in (0..steps).rev() {
            let x: &[f64] = if j == 0 { &cache.inputs[t] } else { &cache.states[j - 1][t].h };
            let (h_prev, c_prev): (&[f64], &[f64]) = if t == 0 {
                (&zeros, &zeros)
            } else {
                (&states[t - 1].h, &states[t - 1].c)
            };
            let dh: Vec<f64> = dh_from_above[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let sg = step_backward_unchecked(layer, &states[t], x, h_prev, c_prev, &dh, &dc_next, &mut grads.layers[j]);
            dh_next = sg.dh_prev.into_inner();
            dc_next = sg.dc_prev.into_inner();
            dx_seq[t] = sg.dx.into_inner();
        }
        dh_from_above = dx_seq;
    }
    Ok(grads)
}

/// Largest relative disagreement between [`net_backward`] and central finite
/// differences of `½‖pred − target‖²`, over every parameter.
///
/// Relative error is `|a − fd| / max(1e-8, |a| + |fd|)`. The finite
/// differences are evaluated in double-double precision by an independent
/// forward pass, so rounding in the differenced losses stays far below the
/// tolerances this is checked against.
pub fn gradient_check(net: &LstmNetwork, seq: &[Vector], target: &[f64], eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
    }
    let (pred, cache) = net_forward(net, seq)?;
    if target.len() != pred.len() {
        return Err(Error::Shape(format!("target length {} vs output {}", target.len(), pred.len())));
    }
    let dpred: Vec<f64> = pred.iter().zip(target).map(|(p, t)| p - t).collect();
    let analytic: Vec<f64> = net_backward(net, &cache, &dpred)?.blocks().flatten().copied().collect();

    let raw: Vec<Vec<f64>> = seq.iter().map(|v| v.to_vec()).collect();
    let loss = |idx: usize, value: DoubleF64| -> DoubleF64 {
        forward_generic(net, &raw, Some((idx, value)))
            .into_iter()
            .zip(target)
            .fold(DoubleF64::ZERO, |acc, (p, &t)| {
                let e = p - DoubleF64::new(t);
                acc + DoubleF64::new(0.5) * e * e
            })
    };
    let step = DoubleF64::new(eps);
    let mut worst = 0.0f64;
    for (idx, (&theta, &a)) in net.blocks().flatten().zip(&analytic).enumerate() {
        let theta = DoubleF64::new(theta);
        let fd = ((loss(idx, theta + step) - loss(idx, theta - step)) / (step + step)).to_f64();
        let rel = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Outcome of [`random_gradient_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckSummary {
    pub networks: usize,
    pub max_rel_error: f64,
    /// `layers × hidden, n, sequence length` of the worst network.
    pub worst_shape: String,
}

/// Runs [`gradient_check`] on `networks` seeded random nets with up to two
/// layers, hidden width ≤ 8, `n ≤ 4` and sequence length ≤ 6. All
/// parameters, including biases, are perturbed away from their initial
/// values so every gradient entry is generic.
pub fn random_gradient_check(seed: u64, networks: usize, eps: f64) -> Result<GradCheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = GradCheckSummary {
        networks,
        max_rel_error: 0.0,
        worst_shape: String::new(),
    };
    for _ in 0..networks {
        let layers = rng.gen_range(1..=2);
        let hidden = rng.gen_range(1..=8);
        let n = rng.gen_range(1..=4);
        let len = rng.gen_range(1..=6);
        let mut net = init_params(&vec![hidden; layers], n, rng.gen())?;
        for v in net.blocks_mut().flatten() {
            *v += rng.gen_range(-0.3..0.3);
        }
        let seq: Vec<Vector> = (0..len)
            .map(|_| Vector::from((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect();
        let target: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let err = gradient_check(&net, &seq, &target, eps)?;
        if err >= summary.max_rel_error {
            summary.max_rel_error = err;
            summary.worst_shape = format!("{layers}x{hidden}, n={n}, len={len}");
        }
    }
    Ok(summary)
}

/// Deterministic initialization from a ChaCha8 stream seeded with `seed`.
///
/// Weights are uniform in `±1/√fan_in` (fan-in is the input width for `W`,
/// the hidden width for `U` and for the head). Draw order follows the
/// serialization order. Biases are zero except the forget gate, which is 1.
pub fn init_params(layer_dims: &[usize], n: usize, seed: u64) -> Result<LstmNetwork> {
    init_params_with(layer_dims, n, seed, ActivationKind::Sigmoid, ActivationKind::Identity)
}

pub fn init_params_with(
    layer_dims: &[usize],
    n: usize,
    seed: u64,
    gate_activation: ActivationKind,
    head_activation: ActivationKind,
) -> Result<LstmNetwork> {
    if layer_dims.is_empty() || layer_dims.contains(&0) || n == 0 {
        return Err(Error::Config(format!(
            "layer widths must be nonempty and positive (got {layer_dims:?}, n = {n})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |m: &mut Matrix, fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in m.as_mut_slice() {
            *v = rng.gen_range(-bound..=bound);
        }
    };
    let mut layers = Vec::with_capacity(layer_dims.len());
    let mut input_dim = n;
    for &hidden in layer_dims {
        let mut layer = LstmLayerParams::zeros(input_dim, hidden, gate_activation);
        for m in layer.w.iter_mut() {
            fill(m, input_dim);
        }
        for m in layer.u.iter_mut() {
            fill(m, hidden);
        }
        layer.b[Gate::Forget as usize].iter_mut().for_each(|b| *b = 1.0);
        layers.push(layer);
        input_dim = hidden;
    }
    let mut head_weights = Matrix::zeros(n, input_dim);
    fill(&mut head_weights, input_dim);
    Ok(LstmNetwork {
        layers,
        head_weights,
        head_bias: Vector::zeros(n),
        head_activation,
    })
}
