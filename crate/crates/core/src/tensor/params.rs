use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::array::Tensor;
use super::tape::Gradients;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named learnable tensors with their accumulated gradients, in
/// registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

/// Xavier (Glorot) uniform limit for a weight of the given shape.
pub fn xavier_limit(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [] => (1, 1),
        [n] => (*n, *n),
        [rows, cols] => (*rows, *cols),
        [out, inp, rest @ ..] => {
            let field: usize = rest.iter().product();
            (inp * field, out * field)
        }
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Model(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            grad: Tensor::zeros(value.shape()),
            value,
        });
        Ok(id)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    /// Uniform Xavier initialization drawn from `rng`.
    pub fn add_xavier(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let limit = xavier_limit(shape);
        let value = Tensor::from_fn(shape, |_| rng.gen_range(-limit..=limit));
        self.add(name, value)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Adds a backward result into the gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in grads.iter() {
            self.params[id.0].grad.add_assign(g);
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Copies values from another set with the same names and shapes.
    pub fn copy_values_from(&mut self, other: &ParamSet) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Model("parameter sets differ in size".into()));
        }
        for (mine, theirs) in self.params.iter_mut().zip(&other.params) {
            if mine.name != theirs.name || mine.value.shape() != theirs.value.shape() {
                return Err(Error::Model(format!(
                    "parameter {} does not match {}",
                    mine.name, theirs.name
                )));
            }
            mine.value = theirs.value.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_are_unique() {
        let mut ps = ParamSet::new();
        ps.add_zeros("w", &[2]).unwrap();
        assert!(ps.add_zeros("w", &[3]).is_err());
        assert_eq!(ps.id("w"), Some(ParamId(0)));
    }

    #[test]
    fn xavier_is_bounded_and_seeded() {
        let draw = |seed| {
            let mut ps = ParamSet::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let id = ps.add_xavier("w", &[10, 20], &mut rng).unwrap();
            ps.value(id).clone()
        };
        let a = draw(1);
        assert_eq!(a, draw(1));
        assert_ne!(a, draw(2));
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(a.data().iter().all(|x| x.abs() <= limit));
        assert!(a.max_abs() > limit * 0.5);
    }
}
