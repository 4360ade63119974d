//! Browsing histories and the recurrent state encoder.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{AdId, Catalog, Context, EmbeddingTables, ItemId, CONTEXT_DIM, ITEM_EMBED_DIM};
use crate::error::{check_dim, Result};
use crate::nn::{GruCell, GruTrace, ParamStore};

pub const PREFERENCE_DIM: usize = 64;
pub const STATE_DIM: usize = 2 * PREFERENCE_DIM + CONTEXT_DIM;

/// Browsed regular items and ads in chronological order, each capped FIFO at `cap`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowsingHistory {
    pub recs: VecDeque<ItemId>,
    pub ads: VecDeque<AdId>,
    pub cap: usize,
}

impl BrowsingHistory {
    pub fn new(cap: usize) -> Self {
        BrowsingHistory {
            recs: VecDeque::new(),
            ads: VecDeque::new(),
            cap,
        }
    }

    pub fn from_parts(recs: &[ItemId], ads: &[AdId], cap: usize) -> Self {
        let mut h = BrowsingHistory::new(cap);
        h.push(recs, ads.iter().copied());
        h
    }

    fn push(&mut self, recs: &[ItemId], ads: impl IntoIterator<Item = AdId>) {
        for &r in recs {
            self.recs.push_back(r);
            if self.recs.len() > self.cap {
                self.recs.pop_front();
            }
        }
        for a in ads {
            self.ads.push_back(a);
            if self.ads.len() > self.cap {
                self.ads.pop_front();
            }
        }
    }

    /// Appends the browsed items at the bottom of the histories. `None` for the ad
    /// leaves the ad history untouched.
    pub fn transition(&self, browsed_recs: &[ItemId], browsed_ad: Option<AdId>) -> BrowsingHistory {
        let mut next = self.clone();
        next.push(browsed_recs, browsed_ad);
        next
    }

    pub fn rec_ids(&self) -> Vec<ItemId> {
        self.recs.iter().copied().collect()
    }

    pub fn ad_ids(&self) -> Vec<AdId> {
        self.ads.iter().copied().collect()
    }
}

/// Free-function form of the transition.
pub fn transition_state(
    hist: &BrowsingHistory,
    browsed_recs: &[ItemId],
    browsed_ad: Option<AdId>,
) -> BrowsingHistory {
    hist.transition(browsed_recs, browsed_ad)
}

/// `s = (p_rec, p_ad, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedState {
    pub p_rec: Vec<f64>,
    pub p_ad: Vec<f64>,
    pub context: Vec<f64>,
}

impl EncodedState {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.p_rec.len() + self.p_ad.len() + self.context.len());
        s.extend_from_slice(&self.p_rec);
        s.extend_from_slice(&self.p_ad);
        s.extend_from_slice(&self.context);
        s
    }

    pub fn dim(&self) -> usize {
        self.p_rec.len() + self.p_ad.len() + self.context.len()
    }
}

/// Runs each GRU over its (already embedded) history from a zero hidden state.
pub fn encode_state(
    store: &ParamStore,
    rec_history: &[Vec<f64>],
    ad_history: &[Vec<f64>],
    context: &[f64],
    rec_gru: &GruCell,
    ad_gru: &GruCell,
) -> Result<EncodedState> {
    check_dim("context", CONTEXT_DIM, context.len())?;
    Ok(EncodedState {
        p_rec: rec_gru.unroll(store, rec_history.iter().map(Vec::as_slice))?,
        p_ad: ad_gru.unroll(store, ad_history.iter().map(Vec::as_slice))?,
        context: context.to_vec(),
    })
}

/// The raw ingredients of a state before encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct RawState {
    pub history: BrowsingHistory,
    pub context: Context,
}

/// Embedding tables plus the two history GRUs owned by one agent.
#[derive(Clone, Debug)]
pub struct StateEncoder {
    pub embed: EmbeddingTables,
    pub rec_gru: GruCell,
    pub ad_gru: GruCell,
}

pub struct StateTrace {
    rec_ids: Vec<ItemId>,
    ad_ids: Vec<AdId>,
    rec_steps: Vec<GruTrace>,
    ad_steps: Vec<GruTrace>,
    pub state: Vec<f64>,
}

impl StateEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        catalog: &Catalog,
        rng: &mut R,
    ) -> Self {
        let embed = EmbeddingTables::new(store, prefix, &catalog.schema, rng);
        let rec_gru = GruCell::new(
            store,
            &format!("{prefix}.rec_gru"),
            ITEM_EMBED_DIM,
            PREFERENCE_DIM,
            rng,
        );
        let ad_gru = GruCell::new(
            store,
            &format!("{prefix}.ad_gru"),
            ITEM_EMBED_DIM,
            PREFERENCE_DIM,
            rng,
        );
        StateEncoder {
            embed,
            rec_gru,
            ad_gru,
        }
    }

    pub fn item_embedding(&self, store: &ParamStore, catalog: &Catalog, id: ItemId) -> Vec<f64> {
        self.embed.items.forward(store, catalog.item_active(id))
    }

    pub fn ad_embedding(&self, store: &ParamStore, catalog: &Catalog, id: AdId) -> Vec<f64> {
        self.embed.ads.forward(store, catalog.ad_active(id))
    }

    pub fn encode(
        &self,
        store: &ParamStore,
        catalog: &Catalog,
        raw: &RawState,
    ) -> Result<EncodedState> {
        let recs: Vec<Vec<f64>> = raw
            .history
            .recs
            .iter()
            .map(|&id| self.item_embedding(store, catalog, id))
            .collect();
        let ads: Vec<Vec<f64>> = raw
            .history
            .ads
            .iter()
            .map(|&id| self.ad_embedding(store, catalog, id))
            .collect();
        encode_state(
            store,
            &recs,
            &ads,
            &raw.context.to_vector(),
            &self.rec_gru,
            &self.ad_gru,
        )
    }

    pub fn encode_traced(
        &self,
        store: &ParamStore,
        catalog: &Catalog,
        raw: &RawState,
    ) -> Result<StateTrace> {
        let rec_ids = raw.history.rec_ids();
        let ad_ids = raw.history.ad_ids();
        let recs: Vec<Vec<f64>> = rec_ids
            .iter()
            .map(|&id| self.item_embedding(store, catalog, id))
            .collect();
        let ads: Vec<Vec<f64>> = ad_ids
            .iter()
            .map(|&id| self.ad_embedding(store, catalog, id))
            .collect();
        let rec_steps = self
            .rec_gru
            .unroll_traced(store, recs.iter().map(Vec::as_slice))?;
        let ad_steps = self
            .ad_gru
            .unroll_traced(store, ads.iter().map(Vec::as_slice))?;
        let zero = vec![0.0; PREFERENCE_DIM];
        let mut state = Vec::with_capacity(STATE_DIM);
        state.extend_from_slice(rec_steps.last().map(|t| t.h.as_slice()).unwrap_or(&zero));
        state.extend_from_slice(ad_steps.last().map(|t| t.h.as_slice()).unwrap_or(&zero));
        state.extend(raw.context.to_vector());
        Ok(StateTrace {
            rec_ids,
            ad_ids,
            rec_steps,
            ad_steps,
            state,
        })
    }

    /// Propagates `dL/ds` into the GRUs and embedding tables.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        catalog: &Catalog,
        trace: &StateTrace,
        ds: &[f64],
    ) {
        let (d_rec, rest) = ds.split_at(PREFERENCE_DIM);
        let d_ad = &rest[..PREFERENCE_DIM];
        let dx = self.rec_gru.backward_unroll(store, &trace.rec_steps, d_rec);
        for (id, g) in trace.rec_ids.iter().zip(&dx) {
            self.embed
                .items
                .backward(store, catalog.item_active(*id), g);
        }
        let dx = self.ad_gru.backward_unroll(store, &trace.ad_steps, d_ad);
        for (id, g) in trace.ad_ids.iter().zip(&dx) {
            self.embed.ads.backward(store, catalog.ad_active(*id), g);
        }
    }
}
