use std::collections::HashMap;

use super::ops::Op;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Read-only view of node values handed to backward rules.
pub struct Values<'a> {
    values: &'a [Vec<f64>],
    shapes: &'a [Vec<usize>],
}

impl Values<'_> {
    pub fn get(&self, v: Var) -> &[f64] {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.shapes[v.0]
    }
}

/// Backward rule for operations defined outside this module.
pub trait CustomOp {
    fn name(&self) -> &'static str;

    fn inputs(&self) -> Vec<Var>;

    /// Gradient contributions for (a subset of) the inputs given the
    /// upstream gradient of this node's output.
    fn backward(&self, values: &Values<'_>, grad_out: &[f64]) -> Result<Vec<(Var, Vec<f64>)>>;
}

pub(crate) enum NodeOp {
    Leaf,
    Builtin(Op),
    Custom(Box<dyn CustomOp>),
}

/// Arena-based reverse-mode recorder.
///
/// Every forward operation appends a node holding its output values. A
/// [`Tape::backward`] call walks the nodes in reverse and accumulates
/// `∂loss/∂node` for everything that depends on a trainable leaf.
pub struct Tape {
    ops: Vec<NodeOp>,
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
    grads: Vec<Option<Vec<f64>>>,
    needs_grad: Vec<bool>,
    params: HashMap<u64, Var>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            shapes: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            needs_grad: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push_node(&mut self, shape: Vec<usize>, values: Vec<f64>, op: NodeOp, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.ops.push(op);
        self.shapes.push(shape);
        self.values.push(values);
        self.grads.push(None);
        self.needs_grad.push(needs_grad);
        Var(self.ops.len() - 1)
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op) -> Var {
        let needs = op.inputs().iter().any(|v| self.needs_grad[v.0]);
        self.push_node(shape, values, NodeOp::Builtin(op), needs)
    }

    pub fn push_custom(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Box<dyn CustomOp>) -> Var {
        let needs = op.inputs().iter().any(|v| self.needs_grad[v.0]);
        self.push_node(shape, values, NodeOp::Custom(op), needs)
    }

    /// A constant input; gradients are still accumulated for it when
    /// `track` is set (useful for gradient checks on inputs).
    pub fn input(&mut self, shape: Vec<usize>, values: Vec<f64>, track: bool) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::Shape(format!("shape {shape:?} needs {n} values, got {}", values.len())));
        }
        Ok(self.push_node(shape, values, NodeOp::Leaf, track))
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push_node(t.shape().to_vec(), t.values().to_vec(), NodeOp::Leaf, false)
    }

    /// Registers a trainable tensor. Registering the same tensor twice
    /// returns the existing node.
    pub fn param(&mut self, t: &Tensor) -> Var {
        if t.requires_grad() {
            if let Some(&v) = self.params.get(&t.param_id()) {
                return v;
            }
        }
        let v = self.push_node(
            t.shape().to_vec(),
            t.values().to_vec(),
            NodeOp::Leaf,
            t.requires_grad(),
        );
        if t.requires_grad() {
            self.params.insert(t.param_id(), v);
        }
        v
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.shapes[v.0]
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.needs_grad[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// `∂loss/∂t` for a registered parameter, if it was reached.
    pub fn param_grad(&self, t: &Tensor) -> Option<&[f64]> {
        self.params.get(&t.param_id()).and_then(|v| self.grad(*v))
    }

    /// Adds this tape's gradient for `t` into `t`'s gradient storage.
    pub fn accumulate_into(&self, t: &mut Tensor) {
        if let Some(g) = self.param_grad(t) {
            let g = g.to_vec();
            t.accumulate_grad(&g);
        }
    }

    pub fn values_view(&self) -> Values<'_> {
        Values { values: &self.values, shapes: &self.shapes }
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.values[loss.0].len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shapes[loss.0]
            )));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        self.grads[loss.0] = Some(vec![1.0]);

        let Tape { ops, shapes, values, grads, needs_grad, .. } = self;
        let view = Values { values, shapes };
        for i in (0..=loss.0).rev() {
            if !needs_grad[i] {
                continue;
            }
            let Some(grad_out) = grads[i].take() else { continue };
            let contributions = match &ops[i] {
                NodeOp::Leaf => Vec::new(),
                NodeOp::Builtin(op) => op.backward(&view, Var(i), &grad_out, needs_grad)?,
                NodeOp::Custom(op) => op.backward(&view, &grad_out)?,
            };
            for (v, g) in contributions {
                if !needs_grad[v.0] {
                    continue;
                }
                debug_assert_eq!(g.len(), values[v.0].len(), "gradient shape for node {}", v.0);
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
            grads[i] = Some(grad_out);
        }
        Ok(())
    }
}
