//! Named parameter collections and their binding into a [`Graph`].

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use crate::error::Error;
use crate::graph::{Graph, Gradients, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

/// An ordered set of named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Name-sorted view, the order used by serialized containers.
    pub fn to_named(&self) -> BTreeMap<String, Tensor> {
        self.iter().map(|(n, t)| (n.to_string(), t.clone())).collect()
    }

    /// Overwrite every parameter from `named`, which must contain exactly
    /// this set's names with matching shapes.
    pub fn load_named(&mut self, named: &BTreeMap<String, Tensor>) -> Result<(), Error> {
        if named.len() != self.len() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "expected {} parameter arrays, found {}",
                self.len(),
                named.len()
            )));
        }
        for (name, slot) in self.names.iter().zip(self.tensors.iter_mut()) {
            let t = named
                .get(name)
                .ok_or_else(|| Error::ShapeMismatch(alloc::format!("missing parameter {name}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::ShapeMismatch(alloc::format!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    slot.shape(),
                    t.shape()
                )));
            }
            *slot = t.clone();
        }
        Ok(())
    }

    /// Insert every parameter into `g`. Frozen bindings become constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    g.variable(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// Collect gradients for every parameter, zero-filled where absent.
    pub fn gradients(&self, bound: &Bound, grads: &Gradients) -> Vec<Tensor> {
        bound
            .vars
            .iter()
            .zip(&self.tensors)
            .map(|(&v, t)| grads.get_or_zeros(v, t))
            .collect()
    }

    /// Cheap fingerprint of all parameter bits (FNV-1a), used to assert
    /// that a parameter set was left untouched.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tensors {
            for v in t.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Graph variables for a bound [`ParamSet`].
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

/// Kaiming-uniform fan-in initialization for a layer followed by a
/// leaky activation of negative slope `slope`.
pub fn kaiming_uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize, slope: f64) -> Tensor {
    let bound = libm::sqrt(6.0 / ((1.0 + slope * slope) * fan_in as f64));
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_vec(shape, data)
}
