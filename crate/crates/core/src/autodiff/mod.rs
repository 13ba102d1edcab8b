//! Reverse-mode automatic differentiation over scalar computation graphs.
//!
//! A [`Tape`] records an expression once; the recorded structure is then
//! replayed over arbitrary input points. Second spatial derivatives are
//! obtained by running both the forward replay and the reverse sweep in
//! [`DualScalar`] arithmetic (forward-over-reverse), which is enough for the
//! pure second derivatives needed by the strong-form residual loss — no
//! mixed partials are required.
//!
//! Tapes are append-only while recording and immutable afterwards, so a
//! finished tape can be shared across threads; each evaluation uses its own
//! scratch buffers.

mod dual;
pub mod instrumentation;

pub use dual::DualScalar;

use thiserror::Error;

/// Errors from tape construction and evaluation.
#[derive(Debug, Error)]
pub enum TapeError {
    #[error("node index {index} is not on the tape (length {len})")]
    NodeOutOfRange { index: usize, len: usize },
    #[error("expected {expected} inputs, got {got}")]
    InputCountMismatch { expected: usize, got: usize },
    #[error("second derivative requested through non-smooth primitive `{0}`")]
    NonSmoothPrimitive(&'static str),
    #[error("unsupported primitive `{0}`")]
    UnsupportedPrimitive(String),
}

/// Recorded primitive. Operand fields are indices of earlier tape nodes, so
/// the tape is topologically ordered by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    /// Root node: the k-th entry of the input vector.
    Input(u32),
    Const(f64),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    /// Integer power with fixed exponent.
    PowI(u32, i32),
    Tanh(u32),
    Relu(u32),
    Abs(u32),
    Max(u32, u32),
}

impl Op {
    fn smooth(&self) -> Result<(), TapeError> {
        match self {
            Op::Relu(_) => Err(TapeError::NonSmoothPrimitive("relu")),
            Op::Abs(_) => Err(TapeError::NonSmoothPrimitive("abs")),
            Op::Max(_, _) => Err(TapeError::NonSmoothPrimitive("max")),
            _ => Ok(()),
        }
    }
}

/// Handle to a node on a tape under construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Node(pub(crate) u32);

impl Node {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Append-only recorder. Values are evaluated eagerly at the recording
/// inputs so the finished tape carries cached forward values.
pub struct TapeBuilder {
    ops: Vec<Op>,
    values: Vec<f64>,
    inputs: Vec<f64>,
}

impl TapeBuilder {
    fn new(inputs: &[f64]) -> Self {
        let mut b = TapeBuilder {
            ops: Vec::new(),
            values: Vec::new(),
            inputs: inputs.to_vec(),
        };
        for (k, &v) in inputs.iter().enumerate() {
            b.push(Op::Input(k as u32), v);
        }
        b
    }

    fn push(&mut self, op: Op, value: f64) -> Node {
        let id = self.ops.len() as u32;
        self.ops.push(op);
        self.values.push(value);
        Node(id)
    }

    fn val(&self, n: Node) -> f64 {
        self.values[n.index()]
    }

    /// Handles to the input nodes, in input order.
    pub fn inputs(&self) -> Vec<Node> {
        (0..self.inputs.len() as u32).map(Node).collect()
    }

    pub fn constant(&mut self, c: f64) -> Node {
        self.push(Op::Const(c), c)
    }

    pub fn add(&mut self, a: Node, b: Node) -> Node {
        let v = self.val(a) + self.val(b);
        self.push(Op::Add(a.0, b.0), v)
    }

    pub fn sub(&mut self, a: Node, b: Node) -> Node {
        let v = self.val(a) - self.val(b);
        self.push(Op::Sub(a.0, b.0), v)
    }

    pub fn mul(&mut self, a: Node, b: Node) -> Node {
        let v = self.val(a) * self.val(b);
        self.push(Op::Mul(a.0, b.0), v)
    }

    pub fn div(&mut self, a: Node, b: Node) -> Node {
        let v = self.val(a) / self.val(b);
        self.push(Op::Div(a.0, b.0), v)
    }

    pub fn neg(&mut self, a: Node) -> Node {
        let v = -self.val(a);
        self.push(Op::Neg(a.0), v)
    }

    pub fn powi(&mut self, a: Node, n: i32) -> Node {
        let v = self.val(a).powi(n);
        self.push(Op::PowI(a.0, n), v)
    }

    pub fn tanh(&mut self, a: Node) -> Node {
        let v = self.val(a).tanh();
        self.push(Op::Tanh(a.0), v)
    }

    pub fn relu(&mut self, a: Node) -> Node {
        let v = self.val(a).max(0.0);
        self.push(Op::Relu(a.0), v)
    }

    pub fn abs(&mut self, a: Node) -> Node {
        let v = self.val(a).abs();
        self.push(Op::Abs(a.0), v)
    }

    pub fn max(&mut self, a: Node, b: Node) -> Node {
        let v = self.val(a).max(self.val(b));
        self.push(Op::Max(a.0, b.0), v)
    }

    /// Scale by a compile-time constant, `c * a`.
    pub fn scale(&mut self, c: f64, a: Node) -> Node {
        let cn = self.constant(c);
        self.mul(cn, a)
    }

    /// Dot product plus offset: `sum_i w[i]*x[i] + b`.
    pub fn affine(&mut self, w: &[f64], xs: &[Node], b: f64) -> Node {
        assert_eq!(w.len(), xs.len());
        let mut acc = self.constant(b);
        for (&wi, &xi) in w.iter().zip(xs) {
            let t = self.scale(wi, xi);
            acc = self.add(acc, t);
        }
        acc
    }
}

/// An immutable recorded computation graph.
///
/// Node values from recording are cached; `gradient` may be called any
/// number of times and always reproduces the same bits. Replays over new
/// inputs use caller-provided scratch so a shared tape stays read-only.
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<f64>,
    n_inputs: usize,
}

impl Tape {
    /// Records `f` over the given inputs. `f` receives the builder and the
    /// input node handles and returns the output node.
    pub fn record(inputs: &[f64], f: impl FnOnce(&mut TapeBuilder) -> Node) -> (Tape, Node) {
        let mut b = TapeBuilder::new(inputs);
        let out = f(&mut b);
        (
            Tape {
                ops: b.ops,
                values: b.values,
                n_inputs: b.inputs.len(),
            },
            out,
        )
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    /// Cached value of a node from the recording pass.
    pub fn value(&self, node: Node) -> f64 {
        self.values[node.index()]
    }

    fn check_node(&self, node: Node) -> Result<(), TapeError> {
        if node.index() >= self.ops.len() {
            return Err(TapeError::NodeOutOfRange {
                index: node.index(),
                len: self.ops.len(),
            });
        }
        Ok(())
    }

    fn check_inputs(&self, inputs: &[f64]) -> Result<(), TapeError> {
        if inputs.len() != self.n_inputs {
            return Err(TapeError::InputCountMismatch {
                expected: self.n_inputs,
                got: inputs.len(),
            });
        }
        Ok(())
    }

    /// Replays the recorded structure over a new input point, writing all
    /// node values into `scratch`. Returns the value of `node`.
    pub fn replay_into(
        &self,
        inputs: &[f64],
        node: Node,
        scratch: &mut Vec<f64>,
    ) -> Result<f64, TapeError> {
        self.check_node(node)?;
        self.check_inputs(inputs)?;
        scratch.clear();
        scratch.reserve(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Input(k) => inputs[k as usize],
                Op::Const(c) => c,
                Op::Add(a, b) => scratch[a as usize] + scratch[b as usize],
                Op::Sub(a, b) => scratch[a as usize] - scratch[b as usize],
                Op::Mul(a, b) => scratch[a as usize] * scratch[b as usize],
                Op::Div(a, b) => scratch[a as usize] / scratch[b as usize],
                Op::Neg(a) => -scratch[a as usize],
                Op::PowI(a, n) => scratch[a as usize].powi(n),
                Op::Tanh(a) => scratch[a as usize].tanh(),
                Op::Relu(a) => scratch[a as usize].max(0.0),
                Op::Abs(a) => scratch[a as usize].abs(),
                Op::Max(a, b) => scratch[a as usize].max(scratch[b as usize]),
            };
            scratch.push(v);
        }
        Ok(scratch[node.index()])
    }

    /// Convenience replay that allocates its own scratch.
    pub fn eval(&self, inputs: &[f64], node: Node) -> Result<f64, TapeError> {
        let mut scratch = Vec::new();
        self.replay_into(inputs, node, &mut scratch)
    }

    /// Reverse-mode adjoints of every input for a scalar `output`, using the
    /// node values cached at recording time.
    pub fn gradient(&self, output: Node) -> Result<Vec<f64>, TapeError> {
        self.check_node(output)?;
        Ok(self.reverse(&self.values, output))
    }

    /// Reverse-mode adjoints at a fresh input point (replay + backward).
    pub fn gradient_at(&self, output: Node, inputs: &[f64]) -> Result<Vec<f64>, TapeError> {
        self.check_node(output)?;
        let mut scratch = Vec::new();
        self.replay_into(inputs, output, &mut scratch)?;
        Ok(self.reverse(&scratch, output))
    }

    fn reverse(&self, values: &[f64], output: Node) -> Vec<f64> {
        let mut adj = vec![0.0; self.ops.len()];
        adj[output.index()] = 1.0;
        let mut grads = vec![0.0; self.n_inputs];
        for idx in (0..=output.index()).rev() {
            let w = adj[idx];
            if w == 0.0 {
                continue;
            }
            match self.ops[idx] {
                Op::Input(k) => grads[k as usize] += w,
                Op::Const(_) => {}
                Op::Add(a, b) => {
                    adj[a as usize] += w;
                    adj[b as usize] += w;
                }
                Op::Sub(a, b) => {
                    adj[a as usize] += w;
                    adj[b as usize] -= w;
                }
                Op::Mul(a, b) => {
                    adj[a as usize] += w * values[b as usize];
                    adj[b as usize] += w * values[a as usize];
                }
                Op::Div(a, b) => {
                    let vb = values[b as usize];
                    adj[a as usize] += w / vb;
                    adj[b as usize] -= w * values[a as usize] / (vb * vb);
                }
                Op::Neg(a) => adj[a as usize] -= w,
                Op::PowI(a, n) => {
                    adj[a as usize] += w * n as f64 * values[a as usize].powi(n - 1);
                }
                Op::Tanh(a) => {
                    let t = values[idx];
                    adj[a as usize] += w * (1.0 - t * t);
                }
                Op::Relu(a) => {
                    if values[a as usize] > 0.0 {
                        adj[a as usize] += w;
                    }
                }
                Op::Abs(a) => {
                    let va = values[a as usize];
                    // subgradient 0 at the kink
                    adj[a as usize] += w * if va > 0.0 { 1.0 } else if va < 0.0 { -1.0 } else { 0.0 };
                }
                Op::Max(a, b) => {
                    if values[a as usize] >= values[b as usize] {
                        adj[a as usize] += w;
                    } else {
                        adj[b as usize] += w;
                    }
                }
            }
        }
        grads
    }

    /// Pure second derivative of `output` with respect to the input on
    /// `axis`, by forward-over-reverse: the replay and the reverse sweep both
    /// run in dual arithmetic with the tangent seeded on that input.
    ///
    /// Every primitive reachable from `output` must be twice differentiable;
    /// `relu`, `abs` and `max` on the active path are rejected rather than
    /// silently contributing a zero curvature.
    pub fn second_input_derivative(
        &self,
        output: Node,
        inputs: &[f64],
        axis: usize,
    ) -> Result<f64, TapeError> {
        self.check_node(output)?;
        self.check_inputs(inputs)?;
        if axis >= self.n_inputs {
            return Err(TapeError::NodeOutOfRange {
                index: axis,
                len: self.n_inputs,
            });
        }
        for idx in self.active_nodes(output) {
            self.ops[idx].smooth()?;
        }
        instrumentation::record_second_order_eval();

        // Dual forward replay.
        let mut vals: Vec<DualScalar> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Input(k) => DualScalar::new(
                    inputs[k as usize],
                    if k as usize == axis { 1.0 } else { 0.0 },
                ),
                Op::Const(c) => DualScalar::constant(c),
                Op::Add(a, b) => vals[a as usize] + vals[b as usize],
                Op::Sub(a, b) => vals[a as usize] - vals[b as usize],
                Op::Mul(a, b) => vals[a as usize] * vals[b as usize],
                Op::Div(a, b) => vals[a as usize] / vals[b as usize],
                Op::Neg(a) => -vals[a as usize],
                Op::PowI(a, n) => vals[a as usize].powi(n),
                Op::Tanh(a) => vals[a as usize].tanh(),
                // rejected above; unreachable on the active path
                Op::Relu(a) => vals[a as usize].relu(),
                Op::Abs(a) => vals[a as usize].abs(),
                Op::Max(a, b) => vals[a as usize].max(vals[b as usize]),
            };
            vals.push(v);
        }

        // Dual reverse sweep: the tangent part of the seeded input's adjoint
        // is d/dx (dF/dx).
        let mut adj = vec![DualScalar::constant(0.0); self.ops.len()];
        adj[output.index()] = DualScalar::constant(1.0);
        let mut grad_axis = DualScalar::constant(0.0);
        for idx in (0..=output.index()).rev() {
            let w = adj[idx];
            if w.value == 0.0 && w.tangent == 0.0 {
                continue;
            }
            match self.ops[idx] {
                Op::Input(k) => {
                    if k as usize == axis {
                        grad_axis = grad_axis + w;
                    }
                }
                Op::Const(_) => {}
                Op::Add(a, b) => {
                    adj[a as usize] = adj[a as usize] + w;
                    adj[b as usize] = adj[b as usize] + w;
                }
                Op::Sub(a, b) => {
                    adj[a as usize] = adj[a as usize] + w;
                    adj[b as usize] = adj[b as usize] - w;
                }
                Op::Mul(a, b) => {
                    adj[a as usize] = adj[a as usize] + w * vals[b as usize];
                    adj[b as usize] = adj[b as usize] + w * vals[a as usize];
                }
                Op::Div(a, b) => {
                    let vb = vals[b as usize];
                    adj[a as usize] = adj[a as usize] + w / vb;
                    adj[b as usize] = adj[b as usize] - w * vals[a as usize] / (vb * vb);
                }
                Op::Neg(a) => adj[a as usize] = adj[a as usize] - w,
                Op::PowI(a, n) => {
                    let d = vals[a as usize].powi(n - 1) * DualScalar::constant(n as f64);
                    adj[a as usize] = adj[a as usize] + w * d;
                }
                Op::Tanh(a) => {
                    let t = vals[idx];
                    let d = DualScalar::constant(1.0) - t * t;
                    adj[a as usize] = adj[a as usize] + w * d;
                }
                Op::Relu(_) | Op::Abs(_) | Op::Max(_, _) => unreachable!("rejected above"),
            }
        }
        Ok(grad_axis.tangent)
    }

    /// Indices of nodes reachable from `output` (the active subgraph).
    fn active_nodes(&self, output: Node) -> Vec<usize> {
        let mut active = vec![false; self.ops.len()];
        active[output.index()] = true;
        for idx in (0..=output.index()).rev() {
            if !active[idx] {
                continue;
            }
            match self.ops[idx] {
                Op::Input(_) | Op::Const(_) => {}
                Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::Max(a, b) => {
                    active[a as usize] = true;
                    active[b as usize] = true;
                }
                Op::Neg(a) | Op::PowI(a, _) | Op::Tanh(a) | Op::Relu(a) | Op::Abs(a) => {
                    active[a as usize] = true;
                }
            }
        }
        active
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
            .collect()
    }
}
