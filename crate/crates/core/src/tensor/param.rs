use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Index of a [`Parameter`] inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a parameter is for. Complexity accounting counts only
/// [`ParamKind::ConvWeight`] and [`ParamKind::WaveletFilter`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamKind {
    ConvWeight,
    WaveletFilter,
    /// Batchnorm scale/shift.
    Affine,
    /// Learnable subband scores.
    Score,
    /// Aggregation window of the spatial alignment layer.
    AlignWeight,
    LinearWeight,
    LinearBias,
    /// Batchnorm running statistics (never trained).
    RunningStat,
}

#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<T>,
    pub trainable: bool,
}

impl<T: Scalar> Parameter<T> {
    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// Flat registry of every parameter of a model, in creation order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        kind: ParamKind,
        value: Tensor<T>,
        trainable: bool,
    ) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        self.params.push(Parameter {
            name,
            kind,
            value,
            trainable,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn trainable(
        &mut self,
        name: impl Into<String>,
        kind: ParamKind,
        value: Tensor<T>,
    ) -> ParamId {
        self.add(name, kind, value, true)
    }

    pub fn fixed(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor<T>) -> ParamId {
        self.add(name, kind, value, false)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::shape(format!(
                "parameter `{}` is {}, got {}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries over parameters of the given kinds.
    pub fn count(&self, kinds: &[ParamKind]) -> usize {
        self.params
            .iter()
            .filter(|p| kinds.contains(&p.kind))
            .map(|p| p.numel())
            .sum()
    }

    pub fn count_trainable(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.numel())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.value.clear_grad();
        }
    }

    /// Same registry with every value converted to another element type.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    kind: p.kind,
                    value: p.value.cast(),
                    trainable: p.trainable,
                })
                .collect(),
        }
    }
}
