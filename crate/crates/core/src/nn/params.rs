use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::tensor::DenseMatrix;

/// Handle to an entry of a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    /// An id that refers to no entry, for structs filled in before their
    /// parameters exist.
    pub(crate) fn placeholder() -> Self {
        ParamId(usize::MAX)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: DenseMatrix,
    #[serde(skip)]
    pub grad: Option<DenseMatrix>,
    /// Whether weight decay applies (weights yes, biases no).
    pub decay: bool,
}

impl Param {
    pub fn grad(&self) -> &DenseMatrix {
        self.grad
            .as_ref()
            .expect("gradient slot is allocated at insertion")
    }
}

/// Named trainable tensors with gradient slots of equal shape.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        value: DenseMatrix,
        decay: bool,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return input_err(format!("duplicate parameter name {name:?}"));
        }
        let grad = Some(DenseMatrix::zeros(value.rows(), value.cols()));
        self.params.push(Param {
            name,
            value,
            grad,
            decay,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &DenseMatrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut DenseMatrix {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &DenseMatrix {
        self.params[id.0].grad()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    /// Adds `g` into the gradient slot of `id`.
    pub fn accumulate(&mut self, id: ParamId, g: &DenseMatrix) -> Result<()> {
        let p = &mut self.params[id.0];
        p.grad
            .get_or_insert_with(|| DenseMatrix::zeros(p.value.rows(), p.value.cols()))
            .add_assign(g)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            match &mut p.grad {
                Some(g) => g.fill(0.0),
                None => p.grad = Some(DenseMatrix::zeros(p.value.rows(), p.value.cols())),
            }
        }
    }

    /// Copies every value from `other`, which must hold the same names and
    /// shapes in the same order.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return input_err("parameter stores differ in size");
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return input_err(format!(
                    "parameter {:?} does not match {:?}",
                    a.name, b.name
                ));
            }
            a.value.as_mut_slice().copy_from_slice(b.value.as_slice());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("parameter store serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut store: ParamStore = serde_json::from_str(s)
            .map_err(|e| crate::Error::Input(format!("bad parameter file: {e}")))?;
        store.zero_grads();
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_shapes_match() {
        let mut ps = ParamStore::new();
        let id = ps.add("w", DenseMatrix::zeros(2, 3), true).unwrap();
        assert!(ps.add("w", DenseMatrix::zeros(1, 1), true).is_err());
        assert_eq!(ps.grad(id).shape(), (2, 3));
        assert!(ps.accumulate(id, &DenseMatrix::zeros(3, 2)).is_err());
        assert_eq!(ps.num_scalars(), 6);
    }

    #[test]
    fn json_round_trip_keeps_values() {
        let mut ps = ParamStore::new();
        ps.add("a", DenseMatrix::filled(1, 2, 0.1 + 0.2), false)
            .unwrap();
        let back = ParamStore::from_json(&ps.to_json()).unwrap();
        assert_eq!(back.value(ParamId(0)), ps.value(ParamId(0)));
        assert_eq!(back.grad(ParamId(0)).shape(), (1, 2));
    }
}
