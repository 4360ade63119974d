use rand::Rng;

use super::ops::{self, sigmoid};
use super::params::{Init, ParamId, ParamStore};
use crate::error::{check_dim, Result};

/// Gated recurrent unit:
///
/// ```text
/// z  = σ(Wz x + Uz h + bz)
/// r  = σ(Wr x + Ur h + br)
/// h~ = tanh(Wh x + Uh (r ⊙ h) + bh)
/// h' = (1 − z) ⊙ h + z ⊙ h~
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    wz: ParamId,
    uz: ParamId,
    bz: ParamId,
    wr: ParamId,
    ur: ParamId,
    br: ParamId,
    wh: ParamId,
    uh: ParamId,
    bh: ParamId,
}

#[derive(Clone, Debug)]
pub struct GruTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
    pub h: Vec<f64>,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let (d, h) = (input_dim, hidden_dim);
        let w = |suffix: &str, cols: usize, store: &mut ParamStore, rng: &mut R| {
            store.add(
                format!("{name}.{suffix}"),
                h,
                cols,
                Init::Glorot {
                    fan_in: cols,
                    fan_out: h,
                },
                rng,
            )
        };
        let wz = w("wz", d, store, rng);
        let uz = w("uz", h, store, rng);
        let wr = w("wr", d, store, rng);
        let ur = w("ur", h, store, rng);
        let wh = w("wh", d, store, rng);
        let uh = w("uh", h, store, rng);
        let bz = store.add(format!("{name}.bz"), h, 1, Init::Zeros, rng);
        let br = store.add(format!("{name}.br"), h, 1, Init::Zeros, rng);
        let bh = store.add(format!("{name}.bh"), h, 1, Init::Zeros, rng);
        GruCell {
            input_dim,
            hidden_dim,
            wz,
            uz,
            bz,
            wr,
            ur,
            br,
            wh,
            uh,
            bh,
        }
    }

    /// Update-gate bias, exposed for gate-saturation experiments.
    pub fn update_bias(&self) -> ParamId {
        self.bz
    }

    /// All parameter handles in declaration order (Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh).
    pub fn param_ids(&self) -> [ParamId; 9] {
        [
            self.wz, self.uz, self.bz, self.wr, self.ur, self.br, self.wh, self.uh, self.bh,
        ]
    }

    fn gate(
        &self,
        store: &ParamStore,
        w: ParamId,
        u: ParamId,
        b: ParamId,
        x: &[f64],
        h: &[f64],
    ) -> Vec<f64> {
        let mut a = store.value(b).to_vec();
        ops::matvec_acc(store.value(w), self.input_dim, x, &mut a);
        ops::matvec_acc(store.value(u), self.hidden_dim, h, &mut a);
        a
    }

    pub fn step_traced(&self, store: &ParamStore, h_prev: &[f64], x: &[f64]) -> Result<GruTrace> {
        check_dim("gru input", self.input_dim, x.len())?;
        check_dim("gru hidden", self.hidden_dim, h_prev.len())?;
        let z: Vec<f64> = self
            .gate(store, self.wz, self.uz, self.bz, x, h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<f64> = self
            .gate(store, self.wr, self.ur, self.br, x, h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let cand: Vec<f64> = self
            .gate(store, self.wh, self.uh, self.bh, x, &rh)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let h = (0..self.hidden_dim)
            .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * cand[i])
            .collect();
        Ok(GruTrace {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            z,
            r,
            cand,
            h,
        })
    }

    pub fn step(&self, store: &ParamStore, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.step_traced(store, h_prev, x)?.h)
    }

    /// Runs the cell over `inputs` from a zero hidden state. An empty sequence
    /// yields the zero vector.
    pub fn unroll<'a, I>(&self, store: &ParamStore, inputs: I) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut h = vec![0.0; self.hidden_dim];
        for x in inputs {
            h = self.step(store, &h, x)?;
        }
        Ok(h)
    }

    pub fn unroll_traced<'a, I>(&self, store: &ParamStore, inputs: I) -> Result<Vec<GruTrace>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut traces: Vec<GruTrace> = Vec::new();
        for x in inputs {
            let h_prev = traces
                .last()
                .map(|t| t.h.clone())
                .unwrap_or_else(|| vec![0.0; self.hidden_dim]);
            traces.push(self.step_traced(store, &h_prev, x)?);
        }
        Ok(traces)
    }

    /// Accumulates parameter gradients for `dL/dh' = dh` and returns
    /// `(dL/dx, dL/dh_prev)`.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        t: &GruTrace,
        dh: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let (d, hd) = (self.input_dim, self.hidden_dim);
        let (values, grads) = store.split();

        let mut dx = vec![0.0; d];
        let mut dh_prev: Vec<f64> = dh.iter().zip(&t.z).map(|(g, z)| g * (1.0 - z)).collect();

        // candidate branch
        let da_h: Vec<f64> = (0..hd)
            .map(|i| dh[i] * t.z[i] * (1.0 - t.cand[i] * t.cand[i]))
            .collect();
        let rh: Vec<f64> = t.r.iter().zip(&t.h_prev).map(|(a, b)| a * b).collect();
        ops::outer_acc(&mut grads[self.wh.0], d, &da_h, &t.x);
        ops::outer_acc(&mut grads[self.uh.0], hd, &da_h, &rh);
        ops::add_assign(&mut grads[self.bh.0], &da_h);
        ops::matvec_t_acc(&values[self.wh.0], d, &da_h, &mut dx);
        let mut drh = vec![0.0; hd];
        ops::matvec_t_acc(&values[self.uh.0], hd, &da_h, &mut drh);
        for i in 0..hd {
            dh_prev[i] += drh[i] * t.r[i];
        }

        // update gate
        let da_z: Vec<f64> = (0..hd)
            .map(|i| dh[i] * (t.cand[i] - t.h_prev[i]) * t.z[i] * (1.0 - t.z[i]))
            .collect();
        // reset gate
        let da_r: Vec<f64> = (0..hd)
            .map(|i| drh[i] * t.h_prev[i] * t.r[i] * (1.0 - t.r[i]))
            .collect();

        for (w, u, b, da) in [
            (self.wz, self.uz, self.bz, &da_z),
            (self.wr, self.ur, self.br, &da_r),
        ] {
            ops::outer_acc(&mut grads[w.0], d, da, &t.x);
            ops::outer_acc(&mut grads[u.0], hd, da, &t.h_prev);
            ops::add_assign(&mut grads[b.0], da);
            ops::matvec_t_acc(&values[w.0], d, da, &mut dx);
            ops::matvec_t_acc(&values[u.0], hd, da, &mut dh_prev);
        }
        (dx, dh_prev)
    }

    /// Backward through an unrolled sequence given `dL/dh_final`. Returns the
    /// input gradients in sequence order.
    pub fn backward_unroll(
        &self,
        store: &mut ParamStore,
        traces: &[GruTrace],
        dh_final: &[f64],
    ) -> Vec<Vec<f64>> {
        let mut dxs = vec![Vec::new(); traces.len()];
        let mut dh = dh_final.to_vec();
        for (i, t) in traces.iter().enumerate().rev() {
            let (dx, dprev) = self.backward(store, t, &dh);
            dxs[i] = dx;
            dh = dprev;
        }
        dxs
    }
}
