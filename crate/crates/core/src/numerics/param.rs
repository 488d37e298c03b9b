use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BufferId(pub(crate) usize);

/// A learnable tensor together with its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Non-learnable state such as batch-norm running statistics.
#[derive(Clone, Debug)]
pub struct Buffer {
    pub name: String,
    pub value: Tensor,
}

/// Owns every parameter and buffer of a model, in creation order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    buffers: Vec<Buffer>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter { name: name.into(), value, grad });
        ParamId(self.params.len() - 1)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> BufferId {
        self.buffers.push(Buffer { name: name.into(), value });
        BufferId(self.buffers.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor {
        &self.buffers[id.0].value
    }

    pub fn set_buffer(&mut self, id: BufferId, value: Tensor) {
        assert_eq!(value.shape(), self.buffers[id.0].value.shape(), "buffer shape");
        self.buffers[id.0].value = value;
    }

    /// Replaces a parameter value, keeping the gradient shape invariant.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::shape(
                "set_value",
                format!("{}: {:?} vs {:?}", p.name, p.value.shape(), value.shape()),
            ));
        }
        p.value = value;
        Ok(())
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Buffer] {
        &self.buffers
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Every tensor (parameters, then buffers) in storage order, for checkpointing.
    pub fn tensors(&self) -> Vec<(&str, &Tensor)> {
        self.params
            .iter()
            .map(|p| (p.name.as_str(), &p.value))
            .chain(self.buffers.iter().map(|b| (b.name.as_str(), &b.value)))
            .collect()
    }

    /// Loads values produced by [`ParamStore::tensors`] from a store of identical layout.
    pub fn load_tensors(&mut self, named: &[(String, Tensor)]) -> Result<()> {
        let expected = self.params.len() + self.buffers.len();
        if named.len() != expected {
            return Err(Error::Format {
                what: "checkpoint",
                detail: format!("expected {expected} tensors, found {}", named.len()),
            });
        }
        let slots = self
            .params
            .iter_mut()
            .map(|p| (&p.name, &mut p.value))
            .chain(self.buffers.iter_mut().map(|b| (&b.name, &mut b.value)));
        for ((name, slot), (got_name, t)) in slots.zip(named) {
            if name != got_name || slot.shape() != t.shape() {
                return Err(Error::Format {
                    what: "checkpoint",
                    detail: format!(
                        "expected {name} {:?}, found {got_name} {:?}",
                        slot.shape(),
                        t.shape()
                    ),
                });
            }
            *slot = t.clone();
        }
        Ok(())
    }
}
