use crate::num::Real;

use super::tensor::Tensor;
use super::NumError;

/// Role of a named tensor inside a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Weight,
    Bias,
    /// Batch-norm γ.
    Scale,
    /// Batch-norm β.
    Shift,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }

    /// Only weight matrices carry the L2 penalty.
    pub fn regularized(self) -> bool {
        self == ParamKind::Weight
    }

    pub fn code(self) -> u8 {
        match self {
            ParamKind::Weight => 0,
            ParamKind::Bias => 1,
            ParamKind::Scale => 2,
            ParamKind::Shift => 3,
            ParamKind::RunningMean => 4,
            ParamKind::RunningVar => 5,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => ParamKind::Weight,
            1 => ParamKind::Bias,
            2 => ParamKind::Scale,
            3 => ParamKind::Shift,
            4 => ParamKind::RunningMean,
            5 => ParamKind::RunningVar,
            _ => return None,
        })
    }
}

/// Handle into a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<T>,
}

/// Ordered collection of uniquely named tensors with fixed shapes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    entries: Vec<Param<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor<T>) -> Result<ParamId, NumError> {
        let name = name.into();
        if self.entries.iter().any(|p| p.name == name) {
            return Err(NumError::Shape(format!("duplicate parameter name '{name}'")));
        }
        self.entries.push(Param { name, kind, value });
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id_of(name).map(|id| self.get(id))
    }

    /// Replaces a tensor's values; the shape may not change.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<(), NumError> {
        let slot = &mut self.entries[id.0];
        if slot.value.shape() != value.shape() {
            return Err(NumError::Shape(format!(
                "parameter '{}' has shape {:?}, got {:?}",
                slot.name,
                slot.value.shape(),
                value.shape()
            )));
        }
        slot.value = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Same names, kinds and shapes, all zeros. Used as a gradient buffer.
    pub fn zeros_like(&self) -> ParamSet<T> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|p| Param { name: p.name.clone(), kind: p.kind, value: Tensor::zeros(p.value.shape()) })
                .collect(),
        }
    }

    /// Trainable scalar coordinates as (entry, offset) pairs.
    pub fn trainable_coords(&self) -> Vec<(ParamId, usize)> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, p)| p.kind.trainable())
            .flat_map(|(i, p)| (0..p.value.len()).map(move |j| (ParamId(i), j)))
            .collect()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn kind(&self, id: ParamId) -> ParamKind {
        self.entries[id.0].kind
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    kind: p.kind,
                    value: Tensor::from_vec(
                        p.value.shape(),
                        p.value.data().iter().map(|v| U::lit(v.as_f64())).collect(),
                    )
                    .expect("cast preserves shape"),
                })
                .collect(),
        }
    }
}
