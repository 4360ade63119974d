//! First level: cascading DQN that builds a rec-list one position at a time.
//!
//! `Q^j(s, a(1:j))` is a scoring tower over `(s, prefix summary, candidate)`,
//! where the prefix summary is a GRU run over the embeddings of the already
//! chosen items `a(1:j-1)`. The same weights serve every position.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Catalog, ItemId, ITEM_EMBED_DIM};
use crate::error::{check_dim, RamError, Result};
use crate::nn::{
    sync_target, Activation, GruCell, GruTrace, Mlp, Optimizer, OptimizerConfig, ParamStore,
};
use crate::state::{RawState, StateEncoder, STATE_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RsNetConfig {
    pub prefix_hidden: usize,
    pub head_hidden: Vec<usize>,
}

impl Default for RsNetConfig {
    fn default() -> Self {
        RsNetConfig {
            prefix_hidden: 64,
            head_hidden: vec![128, 64],
        }
    }
}

/// Greedy cascade outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeSelection {
    pub items: Vec<ItemId>,
    /// Winning `Q^j` at each position; the last entry is the full-list value.
    pub position_values: Vec<f64>,
    /// Number of Q evaluations spent.
    pub evaluations: usize,
}

impl CascadeSelection {
    pub fn full_list_value(&self) -> f64 {
        *self.position_values.last().expect("k >= 1")
    }
}

/// Sequential argmax: at position `j`, pick the remaining candidate with the
/// highest `q(prefix, candidate)`; ties go to the lowest item id. Candidates in
/// `exclude` are never considered.
pub fn cascade_select<F>(
    candidates: &[ItemId],
    k: usize,
    exclude: &HashSet<ItemId>,
    mut q: F,
) -> Result<CascadeSelection>
where
    F: FnMut(&[ItemId], ItemId) -> Result<f64>,
{
    let mut pool: Vec<ItemId> = candidates
        .iter()
        .copied()
        .filter(|c| !exclude.contains(c))
        .collect();
    pool.sort_unstable();
    pool.dedup();
    if pool.len() < k {
        return Err(RamError::Environment(format!(
            "need {k} candidates after exclusions, have {}",
            pool.len()
        )));
    }
    let mut items = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    let mut evaluations = 0;
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for (i, &c) in pool.iter().enumerate() {
            let v = q(&items, c)?;
            evaluations += 1;
            if best.map(|(_, bv)| v > bv).unwrap_or(true) {
                best = Some((i, v));
            }
        }
        let (i, v) = best.expect("pool non-empty");
        items.push(pool.remove(i));
        values.push(v);
    }
    Ok(CascadeSelection {
        items,
        position_values: values,
        evaluations,
    })
}

/// One regression sample for the cascade loss: all `k` heads fit `target`.
#[derive(Clone, Copy, Debug)]
pub struct RsSample<'a> {
    pub state: &'a RawState,
    pub rec_list: &'a [ItemId],
    pub target: f64,
}

/// Prediction/target pair of one cascade head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadTerm {
    pub q: f64,
    pub y: f64,
}

#[derive(Clone, Debug)]
pub struct CascadeQNet {
    pub encoder: StateEncoder,
    pub prefix_gru: GruCell,
    pub head: Mlp,
    pub k: usize,
}

impl CascadeQNet {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        catalog: &Catalog,
        k: usize,
        cfg: &RsNetConfig,
        rng: &mut R,
    ) -> Self {
        let encoder = StateEncoder::new(store, "rs", catalog, rng);
        let prefix_gru = GruCell::new(
            store,
            "rs.prefix_gru",
            ITEM_EMBED_DIM,
            cfg.prefix_hidden,
            rng,
        );
        let head = Mlp::new(
            store,
            "rs.head",
            STATE_DIM + cfg.prefix_hidden + ITEM_EMBED_DIM,
            &cfg.head_hidden,
            1,
            Activation::Relu,
            rng,
        );
        CascadeQNet {
            encoder,
            prefix_gru,
            head,
            k,
        }
    }

    fn first_layer_prefix_acc(&self, store: &ParamStore, s: &[f64], h: &[f64]) -> Vec<f64> {
        let first = &self.head.layers[0];
        let mut acc = vec![0.0; first.out_dim];
        first.accumulate(store, 0, s, &mut acc);
        first.accumulate(store, STATE_DIM, h, &mut acc);
        acc
    }

    fn score_from_prefix_acc(&self, store: &ParamStore, acc: &[f64], candidate: &[f64]) -> f64 {
        let mut a = acc.to_vec();
        self.head.layers[0].accumulate(
            store,
            STATE_DIM + self.prefix_gru.hidden_dim,
            candidate,
            &mut a,
        );
        self.head.eval_from_first_acc(store, a)[0]
    }

    /// `Q^j(s, prefix ++ [candidate])` with `j = prefix.len() + 1`.
    pub fn q_value(
        &self,
        store: &ParamStore,
        s: &[f64],
        prefix: &[Vec<f64>],
        candidate: &[f64],
    ) -> Result<f64> {
        check_dim("state", STATE_DIM, s.len())?;
        check_dim("candidate embedding", ITEM_EMBED_DIM, candidate.len())?;
        if prefix.len() >= self.k {
            return Err(RamError::Usage(format!(
                "prefix of length {} leaves no position in a list of {}",
                prefix.len(),
                self.k
            )));
        }
        let h = self
            .prefix_gru
            .unroll(store, prefix.iter().map(Vec::as_slice))?;
        let acc = self.first_layer_prefix_acc(store, s, &h);
        Ok(self.score_from_prefix_acc(store, &acc, candidate))
    }

    pub fn encode(
        &self,
        store: &ParamStore,
        catalog: &Catalog,
        raw: &RawState,
    ) -> Result<Vec<f64>> {
        Ok(self.encoder.encode(store, catalog, raw)?.to_vec())
    }

    pub fn embed(&self, store: &ParamStore, catalog: &Catalog, id: ItemId) -> Vec<f64> {
        self.encoder.item_embedding(store, catalog, id)
    }

    /// Greedy cascade over `candidates` for an encoded state `s`.
    pub fn select_rec_list(
        &self,
        store: &ParamStore,
        catalog: &Catalog,
        s: &[f64],
        candidates: &[ItemId],
        exclude: &HashSet<ItemId>,
    ) -> Result<CascadeSelection> {
        check_dim("state", STATE_DIM, s.len())?;
        let embeds: Vec<(ItemId, Vec<f64>)> = candidates
            .iter()
            .map(|&c| (c, self.embed(store, catalog, c)))
            .collect();
        let lookup = |id: ItemId| -> &Vec<f64> {
            &embeds
                .iter()
                .find(|(c, _)| *c == id)
                .expect("candidate embedded")
                .1
        };

        // prefix summary and first-layer partial sums are advanced once per position
        let mut h = vec![0.0; self.prefix_gru.hidden_dim];
        let mut acc = self.first_layer_prefix_acc(store, s, &h);
        let mut prefix_len = 0;
        cascade_select(candidates, self.k, exclude, |prefix, cand| {
            if prefix.len() != prefix_len {
                debug_assert_eq!(prefix.len(), prefix_len + 1);
                h = self
                    .prefix_gru
                    .step(store, &h, lookup(prefix[prefix_len]))?;
                acc = self.first_layer_prefix_acc(store, s, &h);
                prefix_len += 1;
            }
            Ok(self.score_from_prefix_acc(store, &acc, lookup(cand)))
        })
    }

    /// Prediction/target pairs for every head of every sample.
    pub fn loss_terms(
        &self,
        store: &ParamStore,
        catalog: &Catalog,
        samples: &[RsSample<'_>],
    ) -> Result<Vec<Vec<HeadTerm>>> {
        samples
            .iter()
            .map(|smp| {
                let s = self.encode(store, catalog, smp.state)?;
                let embeds: Vec<Vec<f64>> = smp
                    .rec_list
                    .iter()
                    .map(|&id| self.embed(store, catalog, id))
                    .collect();
                self.check_list(smp.rec_list)?;
                let mut h = vec![0.0; self.prefix_gru.hidden_dim];
                let mut terms = Vec::with_capacity(self.k);
                for (j, e) in embeds.iter().enumerate() {
                    if j > 0 {
                        h = self.prefix_gru.step(store, &h, &embeds[j - 1])?;
                    }
                    let q = self.head.forward_segments(store, &[&s, &h, e])?.output()[0];
                    terms.push(HeadTerm { q, y: smp.target });
                }
                Ok(terms)
            })
            .collect()
    }

    fn check_list(&self, list: &[ItemId]) -> Result<()> {
        if list.len() != self.k {
            return Err(RamError::Config(format!(
                "rec-list has {} items, expected {}",
                list.len(),
                self.k
            )));
        }
        Ok(())
    }

    /// Mean over samples and heads of `(y − Q^j)²`.
    pub fn loss(
        &self,
        store: &ParamStore,
        catalog: &Catalog,
        samples: &[RsSample<'_>],
    ) -> Result<f64> {
        let terms = self.loss_terms(store, catalog, samples)?;
        let n = (samples.len() * self.k) as f64;
        Ok(terms
            .iter()
            .flatten()
            .map(|t| (t.y - t.q).powi(2))
            .sum::<f64>()
            / n)
    }

    /// Accumulates `∇ loss` into `store`'s gradient slots and returns the loss.
    pub fn accumulate_gradients(
        &self,
        store: &mut ParamStore,
        catalog: &Catalog,
        samples: &[RsSample<'_>],
    ) -> Result<f64> {
        if samples.is_empty() {
            return Err(RamError::Usage("empty batch".into()));
        }
        let n = (samples.len() * self.k) as f64;
        let hp = self.prefix_gru.hidden_dim;
        let mut total = 0.0;
        for smp in samples {
            self.check_list(smp.rec_list)?;
            let st = self.encoder.encode_traced(store, catalog, smp.state)?;
            let embeds: Vec<Vec<f64>> = smp
                .rec_list
                .iter()
                .map(|&id| self.embed(store, catalog, id))
                .collect();
            // prefix states h_0 = 0, h_j = gru(h_{j-1}, e_j) for j < k
            let mut prefix_steps: Vec<GruTrace> = Vec::with_capacity(self.k - 1);
            let mut heads = Vec::with_capacity(self.k);
            for (j, e) in embeds.iter().enumerate() {
                let h = if j == 0 {
                    vec![0.0; hp]
                } else {
                    let prev = prefix_steps
                        .last()
                        .map(|t| t.h.clone())
                        .unwrap_or_else(|| vec![0.0; hp]);
                    let t = self.prefix_gru.step_traced(store, &prev, &embeds[j - 1])?;
                    let h = t.h.clone();
                    prefix_steps.push(t);
                    h
                };
                heads.push(self.head.forward_segments(store, &[&st.state, &h, e])?);
            }

            let mut ds = vec![0.0; STATE_DIM];
            let mut dh_from_head: Vec<Vec<f64>> = vec![vec![0.0; hp]; self.k];
            let mut de: Vec<Vec<f64>> = vec![vec![0.0; ITEM_EMBED_DIM]; self.k];
            for (j, tr) in heads.iter().enumerate() {
                let q = tr.output()[0];
                total += (q - smp.target).powi(2);
                let dq = 2.0 * (q - smp.target) / n;
                let dx = self.head.backward(store, tr, &[dq]);
                for (a, b) in ds.iter_mut().zip(&dx[..STATE_DIM]) {
                    *a += b;
                }
                dh_from_head[j].copy_from_slice(&dx[STATE_DIM..STATE_DIM + hp]);
                de[j].copy_from_slice(&dx[STATE_DIM + hp..]);
            }
            // prefix step i (0-based) produced h_{i+1}, consumed by head i+1 and step i+1
            let mut dh_carry = vec![0.0; hp];
            for i in (0..prefix_steps.len()).rev() {
                let dh: Vec<f64> = dh_from_head[i + 1]
                    .iter()
                    .zip(&dh_carry)
                    .map(|(a, b)| a + b)
                    .collect();
                let (dx, dprev) = self.prefix_gru.backward(store, &prefix_steps[i], &dh);
                for (a, b) in de[i].iter_mut().zip(&dx) {
                    *a += b;
                }
                dh_carry = dprev;
            }
            for (id, g) in smp.rec_list.iter().zip(&de) {
                self.encoder
                    .embed
                    .items
                    .backward(store, catalog.item_active(*id), g);
            }
            self.encoder.backward(store, catalog, &st, &ds);
        }
        Ok(total / n)
    }
}

/// Evaluation network, frozen target copy and optimizer of the first level.
#[derive(Clone, Debug)]
pub struct RsAgent {
    pub net: CascadeQNet,
    pub eval: ParamStore,
    pub target: ParamStore,
    optimizer: Optimizer,
}

impl RsAgent {
    pub fn new<R: Rng + ?Sized>(
        catalog: &Catalog,
        k: usize,
        cfg: &RsNetConfig,
        optimizer: OptimizerConfig,
        rng: &mut R,
    ) -> Self {
        let mut eval = ParamStore::new();
        let net = CascadeQNet::new(&mut eval, catalog, k, cfg, rng);
        let target = eval.clone();
        let optimizer = Optimizer::new(optimizer, &eval);
        RsAgent {
            net,
            eval,
            target,
            optimizer,
        }
    }

    pub fn sync_target(&mut self) -> Result<()> {
        sync_target(&self.eval, &mut self.target)
    }

    /// Greedy rec-list under the evaluation network.
    pub fn act(
        &self,
        catalog: &Catalog,
        raw: &RawState,
        candidates: &[ItemId],
        exclude: &HashSet<ItemId>,
    ) -> Result<CascadeSelection> {
        let s = self.net.encode(&self.eval, catalog, raw)?;
        self.net
            .select_rec_list(&self.eval, catalog, &s, candidates, exclude)
    }

    /// Target-network cascade for `s'`; its last-position value is the
    /// bootstrap value `Q*(s', a'(1:k))`.
    pub fn target_selection(
        &self,
        catalog: &Catalog,
        next: &RawState,
        candidates: &[ItemId],
        exclude: &HashSet<ItemId>,
    ) -> Result<CascadeSelection> {
        let s = self.net.encode(&self.target, catalog, next)?;
        self.net
            .select_rec_list(&self.target, catalog, &s, candidates, exclude)
    }

    /// One optimizer step on the shared-target cascade loss. Returns the
    /// pre-update mean loss.
    pub fn update(&mut self, catalog: &Catalog, samples: &[RsSample<'_>], lr: f64) -> Result<f64> {
        self.eval.zero_grads();
        let loss = self
            .net
            .accumulate_gradients(&mut self.eval, catalog, samples)?;
        self.optimizer.step(&mut self.eval, lr);
        Ok(loss)
    }
}

/// `y = r` at a terminal transition, else `r + γ·Q*` for the bootstrap value.
pub fn rs_target(r: f64, gamma: f64, bootstrap: Option<f64>) -> f64 {
    match bootstrap {
        None => r,
        Some(q) => r + gamma * q,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_one_is_plain_argmax() {
        let vals = [0.3, 0.9, -0.2, 0.5];
        let cands: Vec<ItemId> = (0..4).map(ItemId).collect();
        let sel =
            cascade_select(&cands, 1, &HashSet::new(), |_, c| Ok(vals[c.0 as usize])).unwrap();
        assert_eq!(sel.items, vec![ItemId(1)]);
        assert_eq!(sel.evaluations, 4);
    }

    #[test]
    fn additive_values_pick_top_two_in_order() {
        // i1 = 3, i2 = 2, i3 = 1
        let v = |id: ItemId| [0.0, 3.0, 2.0, 1.0][id.0 as usize];
        let cands = [ItemId(1), ItemId(2), ItemId(3)];
        let sel = cascade_select(&cands, 2, &HashSet::new(), |p, c| {
            Ok(p.iter().map(|&i| v(i)).sum::<f64>() + v(c))
        })
        .unwrap();
        assert_eq!(sel.items, vec![ItemId(1), ItemId(2)]);
        assert_eq!(sel.full_list_value(), 5.0);
        assert!(sel.evaluations <= 2 * 3);
    }

    #[test]
    fn ties_go_to_lowest_id_and_exclusions_hold() {
        let cands = [ItemId(9), ItemId(4), ItemId(7)];
        let sel = cascade_select(&cands, 1, &HashSet::new(), |_, _| Ok(1.0)).unwrap();
        assert_eq!(sel.items, vec![ItemId(4)]);
        let ex: HashSet<_> = [ItemId(4)].into();
        let sel = cascade_select(&cands, 2, &ex, |_, _| Ok(1.0)).unwrap();
        assert_eq!(sel.items, vec![ItemId(7), ItemId(9)]);
        assert!(matches!(
            cascade_select(&cands, 3, &ex, |_, _| Ok(1.0)),
            Err(RamError::Environment(_))
        ));
    }

    #[test]
    fn target_arithmetic() {
        assert_eq!(rs_target(2.5, 0.95, None), 2.5);
        assert_eq!(rs_target(0.7, 0.0, Some(12.0)), 0.7);
        assert!((rs_target(0.5, 0.95, Some(1.0)) - 1.45).abs() < 1e-15);
    }
}
