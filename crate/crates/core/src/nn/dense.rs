use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops;
use super::params::{Init, ParamId, ParamStore};
use crate::error::{check_dim, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// `y = act(W x + b)` with `W: out × in`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub act: Activation,
}

/// What a dense forward pass leaves behind for its backward pass.
#[derive(Clone, Debug)]
pub struct DenseTrace {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        act: Activation,
        rng: &mut R,
    ) -> Self {
        let w = store.add(
            format!("{name}.w"),
            out_dim,
            in_dim,
            Init::Glorot {
                fan_in: in_dim,
                fan_out: out_dim,
            },
            rng,
        );
        let b = store.add(format!("{name}.b"), out_dim, 1, Init::Zeros, rng);
        Dense {
            w,
            b,
            in_dim,
            out_dim,
            act,
        }
    }

    /// Pre-activation contribution of the input columns starting at `col_off`.
    /// Callers that evaluate many inputs sharing a prefix accumulate the prefix
    /// once and reuse it.
    pub fn accumulate(&self, store: &ParamStore, col_off: usize, x: &[f64], acc: &mut [f64]) {
        debug_assert!(col_off + x.len() <= self.in_dim);
        ops::matvec_cols_acc(store.value(self.w), self.in_dim, col_off, x, acc);
    }

    /// Adds the bias to an accumulated pre-activation and applies the activation.
    pub fn finish(&self, store: &ParamStore, mut acc: Vec<f64>) -> Vec<f64> {
        for (a, b) in acc.iter_mut().zip(store.value(self.b)) {
            *a = self.act.apply(*a + b);
        }
        acc
    }

    /// Forward over an input given as consecutive segments; equivalent to
    /// feeding their concatenation.
    pub fn forward_segments(&self, store: &ParamStore, segments: &[&[f64]]) -> Result<DenseTrace> {
        let total: usize = segments.iter().map(|s| s.len()).sum();
        check_dim("dense input", self.in_dim, total)?;
        let mut acc = vec![0.0; self.out_dim];
        let mut off = 0;
        for seg in segments {
            self.accumulate(store, off, seg, &mut acc);
            off += seg.len();
        }
        let output = self.finish(store, acc);
        Ok(DenseTrace {
            input: ops::concat(segments),
            output,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<DenseTrace> {
        self.forward_segments(store, &[x])
    }

    /// Output only, no trace.
    pub fn eval(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("dense input", self.in_dim, x.len())?;
        let mut acc = vec![0.0; self.out_dim];
        self.accumulate(store, 0, x, &mut acc);
        Ok(self.finish(store, acc))
    }

    /// Accumulates parameter gradients for `dL/dy = dy` and returns `dL/dx`.
    pub fn backward(&self, store: &mut ParamStore, trace: &DenseTrace, dy: &[f64]) -> Vec<f64> {
        debug_assert_eq!(dy.len(), self.out_dim);
        let da: Vec<f64> = dy
            .iter()
            .zip(&trace.output)
            .map(|(&d, &y)| d * self.act.grad_from_output(y))
            .collect();
        let (values, grads) = store.split();
        ops::outer_acc(&mut grads[self.w.0], self.in_dim, &da, &trace.input);
        ops::add_assign(&mut grads[self.b.0], &da);
        let mut dx = vec![0.0; self.in_dim];
        ops::matvec_t_acc(&values[self.w.0], self.in_dim, &da, &mut dx);
        dx
    }
}

/// A stack of dense layers; hidden layers use `hidden_act`, the last layer is linear.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[derive(Clone, Debug)]
pub struct MlpTrace {
    pub layers: Vec<DenseTrace>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        &self.layers.last().expect("mlp has layers").output
    }
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        hidden_act: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = in_dim;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(Dense::new(
                store,
                &format!("{name}.{i}"),
                prev,
                h,
                hidden_act,
                rng,
            ));
            prev = h;
        }
        layers.push(Dense::new(
            store,
            &format!("{name}.{}", hidden.len()),
            prev,
            out_dim,
            Activation::Identity,
            rng,
        ));
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn forward_segments(&self, store: &ParamStore, segments: &[&[f64]]) -> Result<MlpTrace> {
        let mut traces = Vec::with_capacity(self.layers.len());
        traces.push(self.layers[0].forward_segments(store, segments)?);
        for layer in &self.layers[1..] {
            let x = &traces.last().expect("non-empty").output;
            let t = layer.forward(store, x)?;
            traces.push(t);
        }
        Ok(MlpTrace { layers: traces })
    }

    /// Evaluate the layers after the first, given the first layer's accumulated
    /// pre-activation (see [`Dense::accumulate`]).
    pub fn eval_from_first_acc(&self, store: &ParamStore, acc: Vec<f64>) -> Vec<f64> {
        let mut h = self.layers[0].finish(store, acc);
        for layer in &self.layers[1..] {
            let mut next = vec![0.0; layer.out_dim];
            layer.accumulate(store, 0, &h, &mut next);
            h = layer.finish(store, next);
        }
        h
    }

    pub fn backward(&self, store: &mut ParamStore, trace: &MlpTrace, dy: &[f64]) -> Vec<f64> {
        let mut d = dy.to_vec();
        for (layer, t) in self.layers.iter().zip(&trace.layers).rev() {
            d = layer.backward(store, t, &d);
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(in_dim: usize, out_dim: usize, act: Activation) -> (ParamStore, Dense) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let d = Dense::new(&mut store, "d", in_dim, out_dim, act, &mut rng);
        (store, d)
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let (mut store, d) = layer(2, 2, Activation::Identity);
        store.value_mut(d.w).copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let y = d.eval(&store, &[1.0, 2.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0]);
    }

    #[test]
    fn bias_only_relu() {
        let (mut store, d) = layer(3, 1, Activation::Relu);
        store.value_mut(d.w).iter_mut().for_each(|w| *w = 0.0);
        store.value_mut(d.b)[0] = 0.5;
        assert_eq!(d.eval(&store, &[7.0, -3.0, 1e6]).unwrap(), vec![0.5]);
    }

    #[test]
    fn random_layer_matches_scalar_loop() {
        let (store, d) = layer(2, 3, Activation::Identity);
        let x = [1.0, -1.0];
        let y = d.eval(&store, &x).unwrap();
        let w = store.value(d.w);
        let b = store.value(d.b);
        for r in 0..3 {
            let mut acc = b[r];
            for c in 0..2 {
                acc += w[r * 2 + c] * x[c];
            }
            assert!((y[r] - acc).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (store, d) = layer(2, 3, Activation::Tanh);
        assert!(d.eval(&store, &[1.0]).is_err());
        assert!(d.forward(&store, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn segments_equal_concatenation() {
        let (store, d) = layer(5, 4, Activation::Tanh);
        let a = [0.1, -0.4];
        let b = [0.3, 0.9, -1.2];
        let split = d.forward_segments(&store, &[&a, &b]).unwrap();
        let whole = d.forward(&store, &[0.1, -0.4, 0.3, 0.9, -1.2]).unwrap();
        for (x, y) in split.output.iter().zip(&whole.output) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
