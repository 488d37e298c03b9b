//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward pass. Values stay on the
//! tape until the graph is dropped, so backward closures only capture what the
//! inputs and output cannot provide (argmax indices, masks, neighbor tables).

use std::any::Any;
use std::cell::{Cell, Ref, RefCell};
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::param::{BufferId, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a value on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// What a backward closure sees for one node.
pub struct BackwardCtx<'a> {
    pub grad: &'a Tensor,
    pub inputs: Vec<&'a Tensor>,
    pub output: &'a Tensor,
    /// Whether each input wants a gradient; closures may skip work for `false`.
    pub needs: Vec<bool>,
}

type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
    param: Option<ParamId>,
}

pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    mode: Mode,
    rng: RefCell<ChaCha8Rng>,
    buffer_updates: RefCell<Vec<(BufferId, Tensor)>>,
    pins: Option<Rc<RefCell<PinnedChoices>>>,
    pin_cursor: Cell<usize>,
}

/// Data-dependent discrete choices (neighbor tables) recorded by one forward pass and
/// replayed by later ones, so that repeated evaluations differ only smoothly.
#[derive(Default)]
pub struct PinnedChoices {
    recorded: Vec<Rc<dyn Any>>,
    replay: bool,
}

impl PinnedChoices {
    pub fn new() -> Rc<RefCell<Self>> {
        Rc::new(RefCell::new(Self::default()))
    }

    /// Switches from recording to replaying.
    pub fn freeze(&mut self) {
        self.replay = true;
    }

    pub fn len(&self) -> usize {
        self.recorded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recorded.is_empty()
    }

    /// Recorded choices of type `T`, in recording order.
    pub fn recorded<T: 'static>(&self) -> Vec<&T> {
        self.recorded.iter().filter_map(|v| v.downcast_ref::<T>()).collect()
    }
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

impl Graph {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
            mode,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
            buffer_updates: RefCell::new(Vec::new()),
            pins: None,
            pin_cursor: Cell::new(0),
        }
    }

    pub fn with_pinned_choices(mut self, pins: Rc<RefCell<PinnedChoices>>) -> Self {
        self.pins = Some(pins);
        self
    }

    /// Runs `compute`, or replays its recorded result when choices are pinned and frozen.
    pub(crate) fn pinned<T: Clone + 'static>(&self, compute: impl FnOnce() -> Result<T>) -> Result<T> {
        let Some(pins) = &self.pins else { return compute() };
        let i = self.pin_cursor.get();
        self.pin_cursor.set(i + 1);
        if pins.borrow().replay {
            let pins = pins.borrow();
            let v = pins
                .recorded
                .get(i)
                .and_then(|v| v.downcast_ref::<T>())
                .ok_or_else(|| Error::InvalidArgument(format!("pinned choice {i} missing or of another type")))?;
            return Ok(v.clone());
        }
        let v = compute()?;
        pins.borrow_mut().recorded.push(Rc::new(v.clone()));
        Ok(v)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn training(&self) -> bool {
        self.mode == Mode::Train
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn rng(&self) -> std::cell::RefMut<'_, ChaCha8Rng> {
        self.rng.borrow_mut()
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push_leaf(value, false, None)
    }

    /// A free leaf that receives a gradient but is not tied to a parameter.
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push_leaf(value, true, None)
    }

    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var {
        self.push_leaf(store.get(id).value.clone(), true, Some(id))
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.value(v).shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    fn push_leaf(&self, value: Tensor, requires_grad: bool, param: Option<ParamId>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, parents: Vec::new(), backward: None, requires_grad, param });
        Var(nodes.len() - 1)
    }

    /// Records an operation. The closure is dropped when no input needs a gradient.
    pub(crate) fn push_op<F>(&self, value: Tensor, inputs: &[Var], backward: F) -> Var
    where
        F: Fn(&BackwardCtx<'_>) -> Vec<Option<Tensor>> + 'static,
    {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = inputs.iter().any(|v| nodes[v.0].requires_grad);
        let backward: Option<BackwardFn> = if requires_grad { Some(Box::new(backward)) } else { None };
        nodes.push(Node {
            value,
            parents: inputs.iter().map(|v| v.0).collect(),
            backward,
            requires_grad,
            param: None,
        });
        Var(nodes.len() - 1)
    }

    pub(crate) fn queue_buffer_update(&self, id: BufferId, value: Tensor) {
        self.buffer_updates.borrow_mut().push((id, value));
    }

    /// Writes running statistics gathered during a training forward pass.
    pub fn apply_buffer_updates(&self, store: &mut ParamStore) {
        for (id, value) in self.buffer_updates.borrow_mut().drain(..) {
            store.set_buffer(id, value);
        }
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[loss.0].value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", nodes[loss.0].value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(nodes[loss.0].value.shape()));
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            let Some(backward) = node.backward.as_ref() else { continue };
            let Some(grad) = grads[i].take() else { continue };
            let ctx = BackwardCtx {
                grad: &grad,
                inputs: node.parents.iter().map(|&p| &nodes[p].value).collect(),
                output: &node.value,
                needs: node.parents.iter().map(|&p| nodes[p].requires_grad).collect(),
            };
            let parent_grads = backward(&ctx);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[p].value.shape(), "grad shape for node {p}");
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
            grads[i] = Some(grad);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Graph::gradients`] and accumulates into every reachable parameter.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        let nodes = self.nodes.borrow();
        for (i, node) in nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Some(id), Some(g)) = (node.param, grads.grads[i].as_ref()) {
                store.get_mut(id).grad.add_assign(g);
            }
        }
        Ok(grads)
    }
}
