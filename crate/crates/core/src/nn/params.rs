use rand::Rng;

use crate::error::{RamError, Result};

/// Handle to one parameter tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a freshly registered parameter is filled.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    Glorot {
        fan_in: usize,
        fan_out: usize,
    },
}

/// Named, row-major parameter tensors with a parallel gradient slot for each.
///
/// Network modules only hold [`ParamId`]s, so the same module layout can be
/// evaluated against an evaluation store or its target copy.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
    steps: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        let n = rows * cols;
        let values = match init {
            Init::Zeros => vec![0.0; n],
            Init::Glorot { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-limit..=limit)).collect()
            }
        };
        self.push(name.into(), rows, cols, values)
    }

    pub(crate) fn push(
        &mut self,
        name: String,
        rows: usize,
        cols: usize,
        values: Vec<f64>,
    ) -> ParamId {
        debug_assert_eq!(values.len(), rows * cols);
        let id = ParamId(self.values.len());
        self.names.push(name);
        self.shapes.push((rows, cols));
        self.grads.push(vec![0.0; values.len()]);
        self.values.push(values);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn shape(&self, id: ParamId) -> (usize, usize) {
        self.shapes[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    /// Borrow all values immutably and all gradients mutably at once.
    pub(crate) fn split(&mut self) -> (&[Vec<f64>], &mut [Vec<f64>]) {
        (&self.values, &mut self.grads)
    }

    pub(crate) fn values_and_grads_mut(&mut self) -> (&mut [Vec<f64>], &[Vec<f64>]) {
        (&mut self.values, &self.grads)
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub(crate) fn set_steps(&mut self, steps: u64) {
        self.steps = steps;
    }

    pub(crate) fn bump_step(&mut self) {
        self.steps += 1;
    }

    /// Scalar view used by finite-difference checks: flat index across all tensors.
    pub fn scalar(&self, flat: usize) -> f64 {
        let (t, i) = self.locate(flat);
        self.values[t][i]
    }

    pub fn set_scalar(&mut self, flat: usize, v: f64) {
        let (t, i) = self.locate(flat);
        self.values[t][i] = v;
    }

    pub fn grad_scalar(&self, flat: usize) -> f64 {
        let (t, i) = self.locate(flat);
        self.grads[t][i]
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (t, v) in self.values.iter().enumerate() {
            if flat < v.len() {
                return (t, flat);
            }
            flat -= v.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
            && self.grads.iter().flatten().all(|g| g.is_finite())
    }

    fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        if self.shapes != other.shapes || self.names != other.names {
            return Err(RamError::Config(
                "parameter stores have different layouts".into(),
            ));
        }
        Ok(())
    }

    /// Overwrite this store's values with `source`'s (target-network sync).
    /// Gradients and the step counter of `self` are left alone.
    pub fn copy_values_from(&mut self, source: &ParamStore) -> Result<()> {
        self.check_compatible(source)?;
        for (dst, src) in self.values.iter_mut().zip(&source.values) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }

    /// Bitwise equality of all parameter values.
    pub fn values_bit_equal(&self, other: &ParamStore) -> bool {
        self.shapes == other.shapes
            && self
                .values
                .iter()
                .flatten()
                .zip(other.values.iter().flatten())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Hard target update: `target := eval`.
pub fn sync_target(eval: &ParamStore, target: &mut ParamStore) -> Result<()> {
    target.copy_values_from(eval)
}
