//! Fully connected Q-networks with explicit backpropagation.
//!
//! Two architectures are supported:
//!
//! * plain: two tanh hidden layers feeding a linear Q head;
//! * dueling: one tanh hidden layer shared by a scalar value head and an
//!   advantage head, combined as `Q = V + (G - mean G)` or
//!   `Q = V + (G - max G)`.
//!
//! Parameters have a fixed flat order used by [`Gradients`], SGD and the
//! binary snapshot format: each hidden layer's weights (row-major, one row per
//! output unit) then its bias, followed by the head (plain: Q weights, Q bias;
//! dueling: value weights, value bias, advantage weights, advantage bias).

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("expected {expected} input features, got {got}")]
    InputDim { expected: usize, got: usize },
    #[error("architecture mismatch: {0}")]
    Architecture(String),
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
}

/// How the dueling heads are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Plain,
    Dueling(Combine),
}

impl Mode {
    fn code(self) -> u32 {
        match self {
            Mode::Plain => 0,
            Mode::Dueling(Combine::Mean) => 1,
            Mode::Dueling(Combine::Max) => 2,
        }
    }

    fn from_code(code: u32) -> Option<Mode> {
        match code {
            0 => Some(Mode::Plain),
            1 => Some(Mode::Dueling(Combine::Mean)),
            2 => Some(Mode::Dueling(Combine::Max)),
            _ => None,
        }
    }

    fn hidden_layers(self) -> usize {
        match self {
            Mode::Plain => 2,
            Mode::Dueling(_) => 1,
        }
    }
}

/// Affine layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || rng.gen_range(-bound..=bound);
        let weights = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Self { inputs, outputs, weights, bias }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Writes `dW = dy x^T`, `db = dy` into `out` and returns `W^T dy`.
    fn backward(&self, x: &[f64], dy: &[f64], out: &mut Vec<f64>) -> Vec<f64> {
        for &g in dy {
            out.extend(x.iter().map(|v| g * v));
        }
        out.extend_from_slice(dy);
        let mut dx = vec![0.0; self.inputs];
        for (row, &g) in self.weights.chunks_exact(self.inputs).zip(dy) {
            for (d, w) in dx.iter_mut().zip(row) {
                *d += w * g;
            }
        }
        dx
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.bias)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Q(Dense),
    Dueling { value: Dense, advantage: Dense, combine: Combine },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: Vec<Dense>,
    pub head: Head,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Network input followed by each hidden layer's tanh output.
    pub activations: Vec<Vec<f64>>,
    /// Value head output (dueling only).
    pub value: f64,
    /// Raw advantage head outputs (dueling only).
    pub advantages: Vec<f64>,
    pub q: Vec<f64>,
}

/// Partial derivatives of a scalar loss, flat, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self(vec![0.0; net.param_count()])
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|g| *g *= factor);
    }
}

impl Mlp {
    /// Randomly initialized network.
    pub fn new<R: Rng + ?Sized>(mode: Mode, input_dim: usize, hidden: usize, actions: usize, rng: &mut R) -> Self {
        Self::build(mode, input_dim, hidden, actions, |i, o| Dense::random(i, o, rng))
    }

    /// Network with every parameter zero.
    pub fn zeros(mode: Mode, input_dim: usize, hidden: usize, actions: usize) -> Self {
        Self::build(mode, input_dim, hidden, actions, Dense::zeros)
    }

    fn build(
        mode: Mode,
        input_dim: usize,
        hidden: usize,
        actions: usize,
        mut layer: impl FnMut(usize, usize) -> Dense,
    ) -> Self {
        let mut layers = Vec::new();
        let mut fan_in = input_dim;
        for _ in 0..mode.hidden_layers() {
            layers.push(layer(fan_in, hidden));
            fan_in = hidden;
        }
        let head = match mode {
            Mode::Plain => Head::Q(layer(hidden, actions)),
            Mode::Dueling(combine) => {
                let value = layer(hidden, 1);
                let advantage = layer(hidden, actions);
                Head::Dueling { value, advantage, combine }
            }
        };
        Self { hidden: layers, head }
    }

    pub fn mode(&self) -> Mode {
        match &self.head {
            Head::Q(_) => Mode::Plain,
            Head::Dueling { combine, .. } => Mode::Dueling(*combine),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden[0].inputs
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden[0].outputs
    }

    pub fn action_count(&self) -> usize {
        match &self.head {
            Head::Q(q) => q.outputs,
            Head::Dueling { advantage, .. } => advantage.outputs,
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden.iter().map(Dense::param_count).sum::<usize>()
            + match &self.head {
                Head::Q(q) => q.param_count(),
                Head::Dueling { value, advantage, .. } => value.param_count() + advantage.param_count(),
            }
    }

    /// Parameters in flat order.
    pub fn params(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.hidden.iter().flat_map(Dense::params).copied().collect();
        match &self.head {
            Head::Q(q) => out.extend(q.params()),
            Head::Dueling { value, advantage, .. } => {
                out.extend(value.params());
                out.extend(advantage.params());
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        let (a, b) = match &mut self.head {
            Head::Q(q) => (q, None),
            Head::Dueling { value, advantage, .. } => (value, Some(advantage)),
        };
        let hidden = self.hidden.iter_mut().flat_map(Dense::params_mut);
        hidden.chain(a.params_mut()).chain(b.into_iter().flat_map(Dense::params_mut))
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.param_count() {
            return Err(NnError::Architecture(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        for (p, v) in self.params_mut().zip(flat) {
            *p = *v;
        }
        Ok(())
    }

    fn check_input(&self, features: &[f64]) -> Result<(), NnError> {
        if features.len() == self.input_dim() {
            Ok(())
        } else {
            Err(NnError::InputDim { expected: self.input_dim(), got: features.len() })
        }
    }

    /// Q value per action.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_pass(features)?.q)
    }

    pub fn forward_pass(&self, features: &[f64]) -> Result<ForwardPass, NnError> {
        self.check_input(features)?;
        let mut activations = vec![features.to_vec()];
        for layer in &self.hidden {
            let z = layer.forward(activations.last().expect("input present"));
            activations.push(z.into_iter().map(f64::tanh).collect());
        }
        let h = activations.last().expect("input present");
        let (value, advantages, q) = match &self.head {
            Head::Q(q) => (0.0, Vec::new(), q.forward(h)),
            Head::Dueling { value, advantage, combine } => {
                let v = value.forward(h)[0];
                let g = advantage.forward(h);
                let q = combine_heads(v, &g, *combine);
                (v, g, q)
            }
        };
        Ok(ForwardPass { activations, value, advantages, q })
    }

    /// Gradients of a loss whose derivative with respect to the Q outputs of
    /// `pass` is `dq`.
    pub fn backward(&self, pass: &ForwardPass, dq: &[f64]) -> Gradients {
        let h = pass.activations.last().expect("input present");
        let mut head_grads = Vec::new();
        let mut dh = match &self.head {
            Head::Q(q) => q.backward(h, dq, &mut head_grads),
            Head::Dueling { value, advantage, combine } => {
                let total: f64 = dq.iter().sum();
                let dg: Vec<f64> = match combine {
                    Combine::Mean => {
                        let share = total / dq.len() as f64;
                        dq.iter().map(|g| g - share).collect()
                    }
                    Combine::Max => {
                        let top = argmax(&pass.advantages);
                        dq.iter().enumerate().map(|(k, g)| if k == top { g - total } else { *g }).collect()
                    }
                };
                let dh_v = value.backward(h, &[total], &mut head_grads);
                let dh_g = advantage.backward(h, &dg, &mut head_grads);
                dh_v.iter().zip(&dh_g).map(|(a, b)| a + b).collect()
            }
        };

        let mut layer_grads: Vec<Vec<f64>> = Vec::with_capacity(self.hidden.len());
        for (k, layer) in self.hidden.iter().enumerate().rev() {
            let out = &pass.activations[k + 1];
            let dz: Vec<f64> = dh.iter().zip(out).map(|(d, y)| d * (1.0 - y * y)).collect();
            let mut grads = Vec::with_capacity(layer.param_count());
            dh = layer.backward(&pass.activations[k], &dz, &mut grads);
            layer_grads.push(grads);
        }

        let mut flat = Vec::with_capacity(self.param_count());
        for grads in layer_grads.into_iter().rev() {
            flat.extend(grads);
        }
        flat.extend(head_grads);
        Gradients(flat)
    }

    /// `params <- params - lr * grads`. Leaves the network untouched when any
    /// gradient is non-finite.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<(), NnError> {
        if grads.0.len() != self.param_count() {
            return Err(NnError::Architecture("gradient length does not match parameters".into()));
        }
        if let Some(index) = grads.0.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient { index });
        }
        for (p, g) in self.params_mut().zip(&grads.0) {
            *p -= lr * g;
        }
        Ok(())
    }

    fn same_architecture(&self, other: &Mlp) -> bool {
        self.mode() == other.mode()
            && self.hidden.len() == other.hidden.len()
            && self.hidden.iter().zip(&other.hidden).all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
            && self.action_count() == other.action_count()
    }

    /// Copies every parameter of `self` into `dst`.
    pub fn clone_into(&self, dst: &mut Mlp) -> Result<(), NnError> {
        if !self.same_architecture(dst) {
            return Err(NnError::Architecture("source and destination differ".into()));
        }
        dst.clone_from(self);
        Ok(())
    }

    /// Little-endian snapshot: `u32` header `(input_dim, hidden, mode,
    /// actions)` with mode 0 = plain, 1 = dueling/mean, 2 = dueling/max,
    /// then every parameter as `f64` in flat order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = [self.input_dim() as u32, self.hidden_width() as u32, self.mode().code(), self.action_count() as u32];
        let mut out = Vec::with_capacity(16 + 8 * self.param_count());
        for h in header {
            out.extend_from_slice(&h.to_le_bytes());
        }
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Mlp, NnError> {
        if bytes.len() < 16 {
            return Err(NnError::Snapshot("truncated header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize;
        let (input_dim, hidden, actions) = (word(0), word(1), word(3));
        let mode = Mode::from_code(word(2) as u32).ok_or_else(|| NnError::Snapshot(format!("unknown mode {}", word(2))))?;
        if input_dim == 0 || hidden == 0 || actions == 0 {
            return Err(NnError::Snapshot("zero-sized layer".into()));
        }
        let mut net = Mlp::zeros(mode, input_dim, hidden, actions);
        let body = &bytes[16..];
        if body.len() != 8 * net.param_count() {
            return Err(NnError::Snapshot(format!(
                "expected {} parameter bytes, got {}",
                8 * net.param_count(),
                body.len()
            )));
        }
        let flat: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        net.set_params(&flat)?;
        Ok(net)
    }
}

/// `V + (G - mean G)` or `V + (G - max G)`.
pub fn combine_heads(value: f64, advantages: &[f64], combine: Combine) -> Vec<f64> {
    let baseline = match combine {
        Combine::Mean => advantages.iter().sum::<f64>() / advantages.len() as f64,
        Combine::Max => advantages.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    advantages.iter().map(|g| value + (g - baseline)).collect()
}

/// Index of the largest entry, lowest index on ties.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}
