use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::scalar::Scalar;

use super::NnError;

/// Row-major matrix; vectors are stored as `rows x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Index of a tensor inside a [`ParameterSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named trainable tensors plus a version counter bumped on every update.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<T>>,
    pub version: u64,
}

impl<T: Scalar> Default for ParameterSet<T> {
    fn default() -> Self {
        ParameterSet {
            names: Vec::new(),
            tensors: Vec::new(),
            version: 0,
        }
    }
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a zero tensor. Names must be unique.
    pub fn add(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        assert!(self.find(name).is_none(), "duplicate parameter name {name}");
        self.names.push(name.to_string());
        self.tensors.push(Tensor::zeros(rows, cols));
        ParamId(self.tensors.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Uniform Glorot initialization of a weight matrix.
    pub fn init_glorot<R: Rng>(&mut self, id: ParamId, rng: &mut R) {
        let t = &mut self.tensors[id.0];
        let limit = (6.0 / (t.rows + t.cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        for v in t.data.iter_mut() {
            *v = T::lit(dist.sample(rng));
        }
    }

    pub fn fill(&mut self, id: ParamId, value: T) {
        self.tensors[id.0].data.iter_mut().for_each(|v| *v = value);
    }

    pub fn zero_all(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Checks that `other` has the same names and shapes.
    pub fn check_layout(&self, other: &ParameterSet<T>) -> Result<(), NnError> {
        if self.names != other.names {
            return Err(NnError::Shape("parameter names differ".into()));
        }
        for (k, (a, b)) in self.tensors.iter().zip(&other.tensors).enumerate() {
            if (a.rows, a.cols) != (b.rows, b.cols) {
                return Err(NnError::Shape(format!(
                    "{}: {}x{} vs {}x{}",
                    self.names[k], a.rows, a.cols, b.rows, b.cols
                )));
            }
        }
        Ok(())
    }

    /// Same layout, every entry zero (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.rows, t.cols))
                .collect(),
            version: 0,
        }
    }
}
