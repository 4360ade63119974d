//! Second level: dueling DQN over (ad, insertion head) pairs.
//!
//! `Q(s, ad)[h] = V(s, list) + A(s, list, ad)[h]` with `k + 2` heads; head 0
//! means "no insert" and the no-ad action is the all-zero ad vector.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auction::{BiddingRule, Choice, QRow, QTable, RevenueModel};
use crate::domain::{encode_rec_action, AdDecision, AdId, Catalog, ItemId, ITEM_EMBED_DIM};
use crate::error::{check_dim, RamError, Result};
use crate::nn::{sync_target, Activation, Mlp, Optimizer, OptimizerConfig, ParamStore};
use crate::state::{RawState, StateEncoder, STATE_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsNetConfig {
    pub value_hidden: Vec<usize>,
    pub advantage_hidden: Vec<usize>,
}

impl Default for AsNetConfig {
    fn default() -> Self {
        AsNetConfig {
            value_hidden: vec![128, 64],
            advantage_hidden: vec![128, 64],
        }
    }
}

/// Row-evaluation counter; shareable across threads.
#[derive(Debug, Default)]
struct Counter(AtomicUsize);

impl Clone for Counter {
    fn clone(&self) -> Self {
        Counter(AtomicUsize::new(self.0.load(Ordering::Relaxed)))
    }
}

#[derive(Clone, Debug)]
pub struct AdQNet {
    pub encoder: StateEncoder,
    pub value: Mlp,
    pub advantage: Mlp,
    pub k: usize,
    row_evals: Counter,
}

/// One regression sample: the executed ad action's Q fits `target`.
#[derive(Clone, Copy, Debug)]
pub struct AsSample<'a> {
    pub state: &'a RawState,
    pub rec_list: &'a [ItemId],
    pub decision: AdDecision,
    pub target: f64,
}

impl AdQNet {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        catalog: &Catalog,
        k: usize,
        cfg: &AsNetConfig,
        rng: &mut R,
    ) -> Self {
        let encoder = StateEncoder::new(store, "as", catalog, rng);
        let list = k * ITEM_EMBED_DIM;
        let value = Mlp::new(
            store,
            "as.value",
            STATE_DIM + list,
            &cfg.value_hidden,
            1,
            Activation::Relu,
            rng,
        );
        let advantage = Mlp::new(
            store,
            "as.advantage",
            STATE_DIM + list + ITEM_EMBED_DIM,
            &cfg.advantage_hidden,
            k + 2,
            Activation::Relu,
            rng,
        );
        AdQNet {
            encoder,
            value,
            advantage,
            k,
            row_evals: Counter::default(),
        }
    }

    pub fn heads(&self) -> usize {
        self.k + 2
    }

    /// Number of `q_row` evaluations since construction.
    pub fn row_evaluations(&self) -> usize {
        self.row_evals.0.load(Ordering::Relaxed)
    }

    pub fn encode(
        &self,
        store: &ParamStore,
        catalog: &Catalog,
        raw: &RawState,
    ) -> Result<Vec<f64>> {
        Ok(self.encoder.encode(store, catalog, raw)?.to_vec())
    }

    /// The `k·60` concatenation of the list items' embeddings.
    pub fn encode_list(
        &self,
        store: &ParamStore,
        catalog: &Catalog,
        list: &[ItemId],
    ) -> Result<Vec<f64>> {
        let embeds: Vec<Vec<f64>> = list
            .iter()
            .map(|&id| self.encoder.item_embedding(store, catalog, id))
            .collect();
        encode_rec_action(&embeds, self.k)
    }

    /// Ad embedding, or the zero vector for no ad.
    pub fn ad_input(&self, store: &ParamStore, catalog: &Catalog, ad: Option<AdId>) -> Vec<f64> {
        match ad {
            Some(id) => self.encoder.ad_embedding(store, catalog, id),
            None => vec![0.0; ITEM_EMBED_DIM],
        }
    }

    fn check_inputs(&self, s: &[f64], list_enc: &[f64]) -> Result<()> {
        check_dim("state", STATE_DIM, s.len())?;
        check_dim("rec-list encoding", self.k * ITEM_EMBED_DIM, list_enc.len())
    }

    fn value_of(&self, store: &ParamStore, s: &[f64], list_enc: &[f64]) -> f64 {
        let first = &self.value.layers[0];
        let mut acc = vec![0.0; first.out_dim];
        first.accumulate(store, 0, s, &mut acc);
        first.accumulate(store, STATE_DIM, list_enc, &mut acc);
        self.value.eval_from_first_acc(store, acc)[0]
    }

    fn advantage_prefix(&self, store: &ParamStore, s: &[f64], list_enc: &[f64]) -> Vec<f64> {
        let first = &self.advantage.layers[0];
        let mut acc = vec![0.0; first.out_dim];
        first.accumulate(store, 0, s, &mut acc);
        first.accumulate(store, STATE_DIM, list_enc, &mut acc);
        acc
    }

    fn row_from_prefix(&self, store: &ParamStore, v: f64, prefix: &[f64], ad: &[f64]) -> Vec<f64> {
        self.row_evals.0.fetch_add(1, Ordering::Relaxed);
        let mut acc = prefix.to_vec();
        self.advantage.layers[0].accumulate(
            store,
            STATE_DIM + self.k * ITEM_EMBED_DIM,
            ad,
            &mut acc,
        );
        self.advantage
            .eval_from_first_acc(store, acc)
            .into_iter()
            .map(|a| v + a)
            .collect()
    }

    /// `V + A` for one ad input (all `k + 2` heads).
    pub fn q_row(
        &self,
        store: &ParamStore,
        s: &[f64],
        list_enc: &[f64],
        ad: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_inputs(s, list_enc)?;
        check_dim("ad embedding", ITEM_EMBED_DIM, ad.len())?;
        let v = self.value_of(store, s, list_enc);
        let prefix = self.advantage_prefix(store, s, list_enc);
        Ok(self.row_from_prefix(store, v, &prefix, ad))
    }

    /// No-ad row first, then one row per candidate ad in the given order.
    /// Costs exactly `|ads| + 1` row evaluations; the shared value and the
    /// shared part of the advantage tower's first layer are computed once.
    pub fn q_table(
        &self,
        store: &ParamStore,
        catalog: &Catalog,
        s: &[f64],
        list_enc: &[f64],
        ads: &[AdId],
    ) -> Result<QTable> {
        self.check_inputs(s, list_enc)?;
        let v = self.value_of(store, s, list_enc);
        let prefix = self.advantage_prefix(store, s, list_enc);
        let mut rows = Vec::with_capacity(ads.len() + 1);
        for ad in std::iter::once(None).chain(ads.iter().copied().map(Some)) {
            let input = self.ad_input(store, catalog, ad);
            rows.push(QRow {
                ad,
                values: self.row_from_prefix(store, v, &prefix, &input),
            });
        }
        Ok(QTable { rows })
    }

    fn check_decision(&self, d: AdDecision) -> Result<()> {
        match d {
            AdDecision::NoAd => Ok(()),
            AdDecision::Insert { head, .. } if (1..=self.k + 1).contains(&head) => Ok(()),
            AdDecision::Insert { head, .. } => Err(RamError::Input(format!(
                "insert head {head} outside 1..={}",
                self.k + 1
            ))),
        }
    }

    /// `Q(s, a)` of the executed action for each sample.
    pub fn predictions(
        &self,
        store: &ParamStore,
        catalog: &Catalog,
        samples: &[AsSample<'_>],
    ) -> Result<Vec<f64>> {
        samples
            .iter()
            .map(|smp| {
                self.check_decision(smp.decision)?;
                let s = self.encode(store, catalog, smp.state)?;
                let list = self.encode_list(store, catalog, smp.rec_list)?;
                let ad = self.ad_input(store, catalog, smp.decision.ad());
                let v = self.value.forward_segments(store, &[&s, &list])?.output()[0];
                let a = self.advantage.forward_segments(store, &[&s, &list, &ad])?;
                Ok(v + a.output()[smp.decision.head()])
            })
            .collect()
    }

    /// Mean of `(y − Q(s, a))²`.
    pub fn loss(
        &self,
        store: &ParamStore,
        catalog: &Catalog,
        samples: &[AsSample<'_>],
    ) -> Result<f64> {
        let q = self.predictions(store, catalog, samples)?;
        Ok(q.iter()
            .zip(samples)
            .map(|(q, s)| (s.target - q).powi(2))
            .sum::<f64>()
            / samples.len() as f64)
    }

    /// Accumulates `∇ loss` into `store`'s gradient slots and returns the loss.
    pub fn accumulate_gradients(
        &self,
        store: &mut ParamStore,
        catalog: &Catalog,
        samples: &[AsSample<'_>],
    ) -> Result<f64> {
        if samples.is_empty() {
            return Err(RamError::Usage("empty batch".into()));
        }
        let n = samples.len() as f64;
        let list_dim = self.k * ITEM_EMBED_DIM;
        let mut total = 0.0;
        for smp in samples {
            self.check_decision(smp.decision)?;
            let st = self.encoder.encode_traced(store, catalog, smp.state)?;
            let list = self.encode_list(store, catalog, smp.rec_list)?;
            let ad = self.ad_input(store, catalog, smp.decision.ad());
            let vt = self.value.forward_segments(store, &[&st.state, &list])?;
            let at = self
                .advantage
                .forward_segments(store, &[&st.state, &list, &ad])?;
            let head = smp.decision.head();
            let q = vt.output()[0] + at.output()[head];
            total += (q - smp.target).powi(2);
            let dq = 2.0 * (q - smp.target) / n;

            let dxv = self.value.backward(store, &vt, &[dq]);
            let mut da = vec![0.0; self.heads()];
            da[head] = dq;
            let dxa = self.advantage.backward(store, &at, &da);

            let ds: Vec<f64> = dxv[..STATE_DIM]
                .iter()
                .zip(&dxa[..STATE_DIM])
                .map(|(a, b)| a + b)
                .collect();
            let dlist: Vec<f64> = dxv[STATE_DIM..]
                .iter()
                .zip(&dxa[STATE_DIM..STATE_DIM + list_dim])
                .map(|(a, b)| a + b)
                .collect();
            for (id, g) in smp.rec_list.iter().zip(dlist.chunks(ITEM_EMBED_DIM)) {
                self.encoder
                    .embed
                    .items
                    .backward(store, catalog.item_active(*id), g);
            }
            if let Some(id) = smp.decision.ad() {
                self.encoder.embed.ads.backward(
                    store,
                    catalog.ad_active(id),
                    &dxa[STATE_DIM + list_dim..],
                );
            }
            self.encoder.backward(store, catalog, &st, &ds);
        }
        Ok(total / n)
    }
}

/// Evaluation network, frozen target copy and optimizer of the second level.
#[derive(Clone, Debug)]
pub struct AsAgent {
    pub net: AdQNet,
    pub eval: ParamStore,
    pub target: ParamStore,
    optimizer: Optimizer,
}

impl AsAgent {
    pub fn new<R: Rng + ?Sized>(
        catalog: &Catalog,
        k: usize,
        cfg: &AsNetConfig,
        optimizer: OptimizerConfig,
        rng: &mut R,
    ) -> Self {
        let mut eval = ParamStore::new();
        let net = AdQNet::new(&mut eval, catalog, k, cfg, rng);
        let target = eval.clone();
        let optimizer = Optimizer::new(optimizer, &eval);
        AsAgent {
            net,
            eval,
            target,
            optimizer,
        }
    }

    pub fn sync_target(&mut self) -> Result<()> {
        sync_target(&self.eval, &mut self.target)
    }

    fn table_with(
        &self,
        store: &ParamStore,
        catalog: &Catalog,
        raw: &RawState,
        list: &[ItemId],
        ads: &[AdId],
    ) -> Result<QTable> {
        let s = self.net.encode(store, catalog, raw)?;
        let enc = self.net.encode_list(store, catalog, list)?;
        self.net.q_table(store, catalog, &s, &enc, ads)
    }

    /// Evaluation-network Q-table for the current state and rec-list.
    pub fn table(
        &self,
        catalog: &Catalog,
        raw: &RawState,
        list: &[ItemId],
        ads: &[AdId],
    ) -> Result<QTable> {
        self.table_with(&self.eval, catalog, raw, list, ads)
    }

    pub fn target_table(
        &self,
        catalog: &Catalog,
        raw: &RawState,
        list: &[ItemId],
        ads: &[AdId],
    ) -> Result<QTable> {
        self.table_with(&self.target, catalog, raw, list, ads)
    }

    /// Executed ad action under the bidding rule.
    pub fn act(
        &self,
        catalog: &Catalog,
        raw: &RawState,
        list: &[ItemId],
        ads: &[AdId],
        rule: &BiddingRule,
        rev: &RevenueModel,
    ) -> Result<Choice> {
        Ok(rule.select(&self.table(catalog, raw, list, ads)?, rev))
    }

    /// Bootstrap choice at `s'`: the bidding rule applied to the target
    /// network's table for the next rec-list. Its `q` is `Q_T(s', BS(·))`.
    pub fn target_choice(
        &self,
        catalog: &Catalog,
        next: &RawState,
        next_list: &[ItemId],
        next_ads: &[AdId],
        rule: &BiddingRule,
        rev: &RevenueModel,
    ) -> Result<Choice> {
        Ok(rule.select(&self.target_table(catalog, next, next_list, next_ads)?, rev))
    }

    pub fn update(&mut self, catalog: &Catalog, samples: &[AsSample<'_>], lr: f64) -> Result<f64> {
        self.eval.zero_grads();
        let loss = self
            .net
            .accumulate_gradients(&mut self.eval, catalog, samples)?;
        self.optimizer.step(&mut self.eval, lr);
        Ok(loss)
    }
}

/// `y = r` at a terminal transition, else `r + γ·Q_T(s', BS(Q_T(s', ·)))`;
/// only the Q-value of the chosen cell bootstraps, never its revenue.
pub fn as_target(r: f64, gamma: f64, bootstrap: Option<&Choice>) -> f64 {
    match bootstrap {
        None => r,
        Some(c) => r + gamma * c.q,
    }
}
