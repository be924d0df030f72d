//! Minimal reverse-mode differentiation over the operations the models use.
//!
//! A `Tape` records an append-only SSA graph whose values are computed
//! eagerly during construction; `backward` walks it once in reverse order,
//! so gradients are bit-reproducible across identical runs. The op set is
//! deliberately small: elementwise arithmetic, sigmoid/tanh, dense and
//! sparse convolution, the delta-threshold pair, and the scalar reductions
//! feeding the composite loss.
//!
//! The delta threshold uses a straight-through rule: the fired mask recorded
//! during the forward pass is treated as a constant while the value path
//! `mask * (x - x_hat)` and the reference update
//! `mask * x + (1 - mask) * x_hat` are differentiated exactly. Thresholds
//! themselves receive gradient only through the smooth fired-fraction
//! surrogate, never through the discontinuous mask.

use std::rc::Rc;

use crate::conv::{
    conv2d_grad_input, conv2d_grad_input_at_sites, conv2d_grad_weights, dense_conv2d,
    sparse_conv2d_dense_out, sparse_conv2d_grad_weights, ConvKernel,
};
use crate::delta::soft_fire_from_abs_diff;
use crate::objectives::{stch_gradient, ObjectiveVector, ScalarizationConfig};
use crate::tensor::{to_sparse, DenseTensor, SparseTensor2D};
use crate::{Error, Result};

/// A runtime value on the tape: spatial tensor, convolution kernel, or
/// scalar.
#[derive(Debug, Clone)]
pub enum Value {
    Tensor(DenseTensor),
    Kernel(ConvKernel),
    Scalar(f64),
}

impl Value {
    pub fn zeros_like(&self) -> Value {
        match self {
            Value::Tensor(t) => {
                let (c, h, w) = t.dims();
                Value::Tensor(DenseTensor::zeros(c, h, w))
            }
            Value::Kernel(k) => Value::Kernel(ConvKernel::zeros(k.c_out(), k.c_in(), k.size())),
            Value::Scalar(_) => Value::Scalar(0.0),
        }
    }

    pub fn as_tensor(&self) -> Result<&DenseTensor> {
        match self {
            Value::Tensor(t) => Ok(t),
            _ => Err(Error::shape("expected a tensor value".to_string())),
        }
    }

    pub fn as_kernel(&self) -> Result<&ConvKernel> {
        match self {
            Value::Kernel(k) => Ok(k),
            _ => Err(Error::shape("expected a kernel value".to_string())),
        }
    }

    pub fn as_scalar(&self) -> Result<f64> {
        match self {
            Value::Scalar(s) => Ok(*s),
            _ => Err(Error::shape("expected a scalar value".to_string())),
        }
    }

    pub fn flat(&self) -> &[f64] {
        match self {
            Value::Tensor(t) => t.values(),
            Value::Kernel(k) => k.weights(),
            Value::Scalar(s) => std::slice::from_ref(s),
        }
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        match self {
            Value::Tensor(t) => t.values_mut(),
            Value::Kernel(k) => k.weights_mut(),
            Value::Scalar(s) => std::slice::from_mut(s),
        }
    }

    fn add_into(&mut self, inc: &Value) {
        for (a, b) in self.flat_mut().iter_mut().zip(inc.flat()) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }
}

/// A trainable parameter: value, gradient accumulator, and an optional
/// lower clamp applied after optimizer steps (thresholds clamp at zero).
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Value,
    pub grad: Value,
    pub trainable: bool,
    pub clamp_min: Option<f64>,
    /// Per-parameter multiplier on the optimizer's learning rate.
    pub lr_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// Owns every parameter of a model plus its gradient accumulators.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Value) -> ParamId {
        let grad = value.zeros_like();
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
            trainable: true,
            clamp_min: None,
            lr_scale: 1.0,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn add_clamped(&mut self, name: impl Into<String>, value: Value, min: f64) -> ParamId {
        let id = self.add(name, value);
        self.params[id.0].clamp_min = Some(min);
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Value {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Value {
        &self.params[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            for g in p.grad.flat_mut() {
                *g = 0.0;
            }
        }
    }

    /// 32-bit snapshot of all parameter values (the checkpoint payload
    /// precision), restorable with [`ParamStore::restore_f32`].
    pub fn snapshot_f32(&self) -> Vec<Vec<f32>> {
        self.params
            .iter()
            .map(|p| p.value.flat().iter().map(|&v| v as f32).collect())
            .collect()
    }

    pub fn restore_f32(&mut self, snapshot: &[Vec<f32>]) {
        assert_eq!(snapshot.len(), self.params.len());
        for (p, s) in self.params.iter_mut().zip(snapshot) {
            for (v, &x) in p.value.flat_mut().iter_mut().zip(s) {
                *v = x as f64;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Const,
    Param(ParamId),
    Add(NodeId, NodeId),
    AddN(Vec<NodeId>),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Conv { x: NodeId, w: NodeId },
    SparseConv { delta: NodeId, w: NodeId, sparse: SparseTensor2D },
    DeltaOut { x: NodeId, x_hat: NodeId, mask: Rc<Vec<f64>> },
    XhatNext { x: NodeId, x_hat: NodeId, mask: Rc<Vec<f64>> },
    SoftFire { theta: NodeId, abs_diff: Rc<Vec<f64>>, tau: f64 },
    SumElems(NodeId),
    MseFrames { preds: Vec<NodeId>, targets: Vec<DenseTensor> },
    MeanScalars(Vec<NodeId>),
    StchLoss { mse: NodeId, occ: NodeId, cfg: ScalarizationConfig },
}

struct Node {
    op: Op,
    value: Value,
}

/// Output of recording one delta-threshold step on the tape.
pub struct DeltaGate {
    /// The thresholded delta tensor (zero off its fired support).
    pub delta: NodeId,
    /// The advanced reference for the next step.
    pub x_hat_next: NodeId,
    /// Per-element change magnitudes, for the threshold surrogate.
    pub abs_diff: Rc<Vec<f64>>,
    /// Fraction of sites where any channel fired (hard metric).
    pub hard_occupancy: f64,
    /// Number of active sites in the emitted delta.
    pub active_sites: usize,
}

/// Append-only reverse-mode tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Value {
        &self.nodes[id.0].value
    }

    pub fn tensor(&self, id: NodeId) -> Result<&DenseTensor> {
        self.value(id).as_tensor()
    }

    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        self.value(id).as_scalar()
    }

    fn push(&mut self, op: Op, value: Value) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Value) -> NodeId {
        self.push(Op::Const, value)
    }

    pub fn constant_tensor(&mut self, t: DenseTensor) -> NodeId {
        self.push(Op::Const, Value::Tensor(t))
    }

    /// Bind a parameter as a leaf; its current value is copied onto the
    /// tape, and `backward` accumulates into the store's gradient slot.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(Op::Param(id), store.value(id).clone())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = match (self.value(a), self.value(b)) {
            (Value::Tensor(x), Value::Tensor(y)) => Value::Tensor(x.add(y)?),
            (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(x + y),
            _ => return Err(Error::shape("add kind mismatch".to_string())),
        };
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn add_n(&mut self, ids: Vec<NodeId>) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(Error::shape("add_n of nothing".to_string()));
        }
        let mut acc = self.tensor(ids[0])?.clone();
        for &id in &ids[1..] {
            acc.add_assign(self.tensor(id)?)?;
        }
        Ok(self.push(Op::AddN(ids), Value::Tensor(acc)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = match (self.value(a), self.value(b)) {
            (Value::Tensor(x), Value::Tensor(y)) => Value::Tensor(x.sub(y)?),
            (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(x - y),
            _ => return Err(Error::shape("sub kind mismatch".to_string())),
        };
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = match (self.value(a), self.value(b)) {
            (Value::Tensor(x), Value::Tensor(y)) => Value::Tensor(x.hadamard(y)?),
            (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(x * y),
            _ => return Err(Error::shape("mul kind mismatch".to_string())),
        };
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> Result<NodeId> {
        let v = match self.value(a) {
            Value::Tensor(x) => Value::Tensor(x.scale(k)),
            Value::Scalar(x) => Value::Scalar(x * k),
            Value::Kernel(_) => return Err(Error::shape("scale of kernel".to_string())),
        };
        Ok(self.push(Op::Scale(a, k), v))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Value::Tensor(self.tensor(a)?.map(crate::delta::sigmoid));
        Ok(self.push(Op::Sigmoid(a), v))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Value::Tensor(self.tensor(a)?.map(f64::tanh));
        Ok(self.push(Op::Tanh(a), v))
    }

    /// Dense convolution of a tensor node by a kernel node.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let y = dense_conv2d(self.tensor(x)?, self.value(w).as_kernel()?)?;
        Ok(self.push(Op::Conv { x, w }, Value::Tensor(y)))
    }

    /// Sparse convolution of a delta tensor node (zero off its support). The
    /// forward pass runs the gather-scatter path over the delta's active
    /// sites; the result is stored dense for the downstream accumulations.
    pub fn sparse_conv_delta(&mut self, delta: NodeId, w: NodeId) -> Result<NodeId> {
        let sparse = to_sparse(self.tensor(delta)?, 0.0);
        let (y, _) = sparse_conv2d_dense_out(&sparse, self.value(w).as_kernel()?)?;
        Ok(self.push(Op::SparseConv { delta, w, sparse }, Value::Tensor(y)))
    }

    /// Record one delta-threshold step: given the incoming tensor node and
    /// the current reference node, compute the fired mask against `theta`
    /// and emit the delta and advanced-reference nodes.
    pub fn delta_gate(&mut self, x: NodeId, x_hat: NodeId, theta: f64) -> Result<DeltaGate> {
        let xv = self.tensor(x)?.clone();
        let hv = self.tensor(x_hat)?;
        if !xv.same_dims(hv) {
            return Err(Error::shape("delta gate dim mismatch".to_string()));
        }
        let (c, h, w) = xv.dims();
        let n = xv.len();
        let mut mask = vec![0.0; n];
        let mut abs_diff = vec![0.0; n];
        let mut delta = DenseTensor::zeros(c, h, w);
        let mut x_hat_next = hv.clone();
        {
            let xs = xv.values();
            let hs = x_hat_next.values_mut();
            let dv = delta.values_mut();
            for i in 0..n {
                let d = xs[i] - hs[i];
                abs_diff[i] = d.abs();
                if d.abs() > theta {
                    mask[i] = 1.0;
                    dv[i] = d;
                    hs[i] = xs[i];
                }
            }
        }
        // Hard occupancy: sites where any channel fired.
        let hw = h * w;
        let mut active = 0usize;
        for site in 0..hw {
            for ch in 0..c {
                if mask[ch * hw + site] == 1.0 {
                    active += 1;
                    break;
                }
            }
        }
        let mask = Rc::new(mask);
        let abs_diff = Rc::new(abs_diff);
        let delta_node = self.push(
            Op::DeltaOut { x, x_hat, mask: Rc::clone(&mask) },
            Value::Tensor(delta),
        );
        let next_node = self.push(Op::XhatNext { x, x_hat, mask }, Value::Tensor(x_hat_next));
        Ok(DeltaGate {
            delta: delta_node,
            x_hat_next: next_node,
            abs_diff,
            hard_occupancy: active as f64 / hw as f64,
            active_sites: active,
        })
    }

    /// Smooth fired-fraction surrogate; gradient flows only into theta.
    pub fn soft_fire(&mut self, theta: NodeId, abs_diff: Rc<Vec<f64>>, tau: f64) -> Result<NodeId> {
        let th = self.scalar(theta)?;
        let (value, _) = soft_fire_from_abs_diff(&abs_diff, th, tau);
        Ok(self.push(Op::SoftFire { theta, abs_diff, tau }, Value::Scalar(value)))
    }

    pub fn sum_elems(&mut self, x: NodeId) -> Result<NodeId> {
        let s: f64 = self.tensor(x)?.values().iter().sum();
        Ok(self.push(Op::SumElems(x), Value::Scalar(s)))
    }

    /// Mean squared error between predicted frame nodes and fixed targets.
    pub fn mse_frames(&mut self, preds: Vec<NodeId>, targets: Vec<DenseTensor>) -> Result<NodeId> {
        if preds.len() != targets.len() || preds.is_empty() {
            return Err(Error::shape(
                "mse_frames needs matching nonempty frames".to_string(),
            ));
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for (p, t) in preds.iter().zip(&targets) {
            let pv = self.tensor(*p)?;
            if !pv.same_dims(t) {
                return Err(Error::shape("mse frame dim mismatch".to_string()));
            }
            for (a, b) in pv.values().iter().zip(t.values()) {
                sum += (a - b) * (a - b);
            }
            count += t.len();
        }
        Ok(self.push(
            Op::MseFrames { preds, targets },
            Value::Scalar(sum / count as f64),
        ))
    }

    pub fn mean_scalars(&mut self, ids: Vec<NodeId>) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(Error::shape("mean of no scalars".to_string()));
        }
        let mut sum = 0.0;
        for &id in &ids {
            sum += self.scalar(id)?;
        }
        let n = ids.len() as f64;
        Ok(self.push(Op::MeanScalars(ids), Value::Scalar(sum / n)))
    }

    /// Smooth-Tchebycheff composite over an MSE scalar node and a soft
    /// occupancy scalar node.
    pub fn stch_loss(
        &mut self,
        mse: NodeId,
        occ: NodeId,
        cfg: ScalarizationConfig,
    ) -> Result<NodeId> {
        let f = ObjectiveVector {
            mse: self.scalar(mse)?,
            occupancy: self.scalar(occ)?,
        };
        let value = crate::objectives::stch_scalarize(&f, &cfg);
        Ok(self.push(Op::StchLoss { mse, occ, cfg }, Value::Scalar(value)))
    }

    /// Reverse pass from a scalar loss node. Gradients of `Param` leaves are
    /// accumulated into the store; everything else stays internal. Fails if
    /// any parameter gradient comes out non-finite.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        if !matches!(self.value(loss), Value::Scalar(_)) {
            return Err(Error::shape("loss must be scalar".to_string()));
        }
        let mut grads: Vec<Option<Value>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Value::Scalar(1.0));

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Const => {}
                Op::Param(pid) => {
                    store.param_mut(*pid).grad.add_into(&g);
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, &g);
                    self.accumulate(&mut grads, *b, &g);
                }
                Op::AddN(ids) => {
                    for &id in ids {
                        self.accumulate(&mut grads, id, &g);
                    }
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, &g);
                    let neg = scale_value(&g, -1.0);
                    self.accumulate(&mut grads, *b, &neg);
                }
                Op::Mul(a, b) => {
                    let ga = mul_values(&g, &self.nodes[b.0].value);
                    let gb = mul_values(&g, &self.nodes[a.0].value);
                    self.accumulate(&mut grads, *a, &ga);
                    self.accumulate(&mut grads, *b, &gb);
                }
                Op::Scale(a, k) => {
                    let ga = scale_value(&g, *k);
                    self.accumulate(&mut grads, *a, &ga);
                }
                Op::Sigmoid(a) => {
                    let y = self.nodes[idx].value.as_tensor().unwrap();
                    let gt = g.as_tensor().unwrap();
                    let ga = Value::Tensor(gt.zip_with(y, |gv, yv| gv * yv * (1.0 - yv)).unwrap());
                    self.accumulate(&mut grads, *a, &ga);
                }
                Op::Tanh(a) => {
                    let y = self.nodes[idx].value.as_tensor().unwrap();
                    let gt = g.as_tensor().unwrap();
                    let ga =
                        Value::Tensor(gt.zip_with(y, |gv, yv| gv * (1.0 - yv * yv)).unwrap());
                    self.accumulate(&mut grads, *a, &ga);
                }
                Op::Conv { x, w } => {
                    let gy = g.as_tensor().unwrap();
                    let kernel = self.nodes[w.0].value.as_kernel().unwrap();
                    let gx = conv2d_grad_input(gy, kernel)?;
                    self.accumulate(&mut grads, *x, &Value::Tensor(gx));
                    let xv = self.nodes[x.0].value.as_tensor().unwrap();
                    let gw = conv2d_grad_weights(xv, gy, kernel.size())?;
                    let gk = ConvKernel::new(kernel.c_out(), kernel.c_in(), kernel.size(), gw)?;
                    self.accumulate(&mut grads, *w, &Value::Kernel(gk));
                }
                Op::SparseConv { delta, w, sparse } => {
                    let gy = g.as_tensor().unwrap();
                    let kernel = self.nodes[w.0].value.as_kernel().unwrap();
                    // The delta is zero off its active sites and the fired
                    // mask zeroes those positions downstream, so the input
                    // gradient is only needed on the active-site support.
                    // Above half occupancy the slice-vectorized dense
                    // routines win; the extra off-support values they
                    // produce are masked away by the delta node.
                    let n = sparse.active_sites();
                    let hw = sparse.height() * sparse.width();
                    let (gx, gw) = if 2 * n > hw {
                        let dense_delta = self.nodes[delta.0].value.as_tensor().unwrap();
                        (
                            conv2d_grad_input(gy, kernel)?,
                            conv2d_grad_weights(dense_delta, gy, kernel.size())?,
                        )
                    } else {
                        (
                            conv2d_grad_input_at_sites(gy, kernel, sparse.coords(), kernel.c_in())?,
                            sparse_conv2d_grad_weights(sparse, gy, kernel.size())?,
                        )
                    };
                    self.accumulate(&mut grads, *delta, &Value::Tensor(gx));
                    let gk = ConvKernel::new(kernel.c_out(), kernel.c_in(), kernel.size(), gw)?;
                    self.accumulate(&mut grads, *w, &Value::Kernel(gk));
                }
                Op::DeltaOut { x, x_hat, mask } => {
                    let gt = g.as_tensor().unwrap();
                    let gx = masked(gt, mask, false);
                    self.accumulate(&mut grads, *x, &Value::Tensor(gx.clone()));
                    self.accumulate(&mut grads, *x_hat, &Value::Tensor(gx.scale(-1.0)));
                }
                Op::XhatNext { x, x_hat, mask } => {
                    let gt = g.as_tensor().unwrap();
                    let gx = masked(gt, mask, false);
                    self.accumulate(&mut grads, *x, &Value::Tensor(gx));
                    let gh = masked(gt, mask, true);
                    self.accumulate(&mut grads, *x_hat, &Value::Tensor(gh));
                }
                Op::SoftFire { theta, abs_diff, tau } => {
                    let gs = g.as_scalar().unwrap();
                    let th = self.nodes[theta.0].value.as_scalar().unwrap();
                    let (_, dtheta) = soft_fire_from_abs_diff(abs_diff, th, *tau);
                    self.accumulate(&mut grads, *theta, &Value::Scalar(gs * dtheta));
                }
                Op::SumElems(x) => {
                    let gs = g.as_scalar().unwrap();
                    let xv = self.nodes[x.0].value.as_tensor().unwrap();
                    let ones = xv.map(|_| gs);
                    self.accumulate(&mut grads, *x, &Value::Tensor(ones));
                }
                Op::MseFrames { preds, targets } => {
                    let gs = g.as_scalar().unwrap();
                    let total: usize = targets.iter().map(|t| t.len()).sum();
                    let scale = 2.0 * gs / total as f64;
                    for (p, t) in preds.iter().zip(targets) {
                        let pv = self.nodes[p.0].value.as_tensor().unwrap();
                        let gp = pv.zip_with(t, |a, b| scale * (a - b)).unwrap();
                        self.accumulate(&mut grads, *p, &Value::Tensor(gp));
                    }
                }
                Op::MeanScalars(ids) => {
                    let gs = g.as_scalar().unwrap() / ids.len() as f64;
                    for &id in ids {
                        self.accumulate(&mut grads, id, &Value::Scalar(gs));
                    }
                }
                Op::StchLoss { mse, occ, cfg } => {
                    let gs = g.as_scalar().unwrap();
                    let f = ObjectiveVector {
                        mse: self.nodes[mse.0].value.as_scalar().unwrap(),
                        occupancy: self.nodes[occ.0].value.as_scalar().unwrap(),
                    };
                    let grad = stch_gradient(&f, cfg);
                    self.accumulate(&mut grads, *mse, &Value::Scalar(gs * grad[0]));
                    self.accumulate(&mut grads, *occ, &Value::Scalar(gs * grad[1]));
                }
            }
        }

        for p in store.iter() {
            if !p.grad.all_finite() {
                return Err(Error::numeric(format!(
                    "non-finite gradient for parameter {}",
                    p.name
                )));
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Value>], id: NodeId, inc: &Value) {
        match &mut grads[id.0] {
            Some(acc) => acc.add_into(inc),
            slot @ None => {
                let mut acc = self.nodes[id.0].value.zeros_like();
                acc.add_into(inc);
                *slot = Some(acc);
            }
        }
    }
}

fn scale_value(v: &Value, k: f64) -> Value {
    let mut out = v.clone();
    for x in out.flat_mut() {
        *x *= k;
    }
    out
}

fn mul_values(g: &Value, other: &Value) -> Value {
    match (g, other) {
        (Value::Tensor(a), Value::Tensor(b)) => Value::Tensor(a.hadamard(b).unwrap()),
        (Value::Scalar(a), Value::Scalar(b)) => Value::Scalar(a * b),
        _ => panic!("mul backward kind mismatch"),
    }
}

fn masked(g: &DenseTensor, mask: &[f64], invert: bool) -> DenseTensor {
    let mut out = g.clone();
    for (v, &m) in out.values_mut().iter_mut().zip(mask) {
        *v *= if invert { 1.0 - m } else { m };
    }
    out
}
