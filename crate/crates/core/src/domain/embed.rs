use rand::Rng;

use super::{AdItem, FeatureSchema, RegularItem};
use crate::error::Result;
use crate::nn::ops;
use crate::nn::{Init, ParamId, ParamStore};

pub const ITEM_EMBED_DIM: usize = 60;

/// Linear map over a concatenation of one-hot blocks. Inputs are given as the
/// list of active (hot) positions, which is all a one-hot concatenation holds.
#[derive(Clone, Debug)]
pub struct OneHotLinear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl OneHotLinear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        // each input has one hot component per block, so fan-in is the block count
        let w = store.add(
            format!("{name}.w"),
            out_dim,
            in_dim,
            Init::Glorot {
                fan_in: 5,
                fan_out: out_dim,
            },
            rng,
        );
        let b = store.add(format!("{name}.b"), out_dim, 1, Init::Zeros, rng);
        OneHotLinear {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, store: &ParamStore, active: &[usize]) -> Vec<f64> {
        let w = store.value(self.w);
        let mut out = store.value(self.b).to_vec();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &w[r * self.in_dim..(r + 1) * self.in_dim];
            for &i in active {
                *o += row[i];
            }
        }
        out
    }

    /// Same map applied to an explicit dense input vector.
    pub fn forward_dense(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_dim("embedding input", self.in_dim, x.len())?;
        let mut out = store.value(self.b).to_vec();
        ops::matvec_acc(store.value(self.w), self.in_dim, x, &mut out);
        Ok(out)
    }

    pub fn backward(&self, store: &mut ParamStore, active: &[usize], dy: &[f64]) {
        let (_, grads) = store.split();
        let gw = &mut grads[self.w.0];
        for (r, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for &i in active {
                gw[r * self.in_dim + i] += d;
            }
        }
        ops::add_assign(&mut grads[self.b.0], dy);
    }
}

/// Learned item and ad embedding maps of one agent.
#[derive(Clone, Debug)]
pub struct EmbeddingTables {
    pub items: OneHotLinear,
    pub ads: OneHotLinear,
}

impl EmbeddingTables {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        schema: &FeatureSchema,
        rng: &mut R,
    ) -> Self {
        EmbeddingTables {
            items: OneHotLinear::new(
                store,
                &format!("{prefix}.item_embed"),
                schema.item_dim(),
                ITEM_EMBED_DIM,
                rng,
            ),
            ads: OneHotLinear::new(
                store,
                &format!("{prefix}.ad_embed"),
                schema.ad_dim(),
                ITEM_EMBED_DIM,
                rng,
            ),
        }
    }

    pub fn embed_item(
        &self,
        store: &ParamStore,
        schema: &FeatureSchema,
        item: &RegularItem,
    ) -> Result<Vec<f64>> {
        self.items
            .forward_dense(store, &schema.item_features(item)?)
    }

    pub fn embed_ad(
        &self,
        store: &ParamStore,
        schema: &FeatureSchema,
        ad: &AdItem,
    ) -> Result<Vec<f64>> {
        self.ads.forward_dense(store, &schema.ad_features(ad)?)
    }
}

/// Positions of the nonzero entries of a one-hot concatenation.
pub fn active_positions(features: &[f64]) -> Vec<usize> {
    features
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| i)
        .collect()
}
