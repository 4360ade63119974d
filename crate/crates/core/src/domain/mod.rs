//! Item and ad schemas, one-hot feature encoding, action encodings and the
//! session log format.

pub mod catalog;
pub mod embed;
pub mod log;

use serde::{Deserialize, Serialize};

use crate::error::{RamError, Result};

pub use catalog::Catalog;
pub use embed::{EmbeddingTables, ITEM_EMBED_DIM};
pub use log::{read_log, validate_log, write_log, SessionLogRecord, ValidationReport};

/// Number of items in a rec-list unless configured otherwise.
pub const DEFAULT_K: usize = 6;
pub const CONTEXT_DIM: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdId(pub u32);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularItem {
    pub id: ItemId,
    pub like_score: f64,
    pub finish_score: f64,
    pub comment_score: f64,
    pub follow_score: f64,
    pub group_score: f64,
}

impl RegularItem {
    pub fn scores(&self) -> [f64; 5] {
        [
            self.like_score,
            self.finish_score,
            self.comment_score,
            self.follow_score,
            self.group_score,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageSize {
    Small,
    Medium,
    Large,
    #[serde(other)]
    Unknown,
}

impl ImageSize {
    pub const LEVELS: usize = 4;

    pub fn index(self) -> usize {
        match self {
            ImageSize::Small => 0,
            ImageSize::Medium => 1,
            ImageSize::Large => 2,
            ImageSize::Unknown => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdItem {
    pub id: AdId,
    pub image_size: ImageSize,
    pub bid_price: f64,
    pub hidden_cost: f64,
    pub predicted_ctr: f64,
    pub predicted_recall: f64,
}

/// Position in `[0, bins)` of `value` on an equal-width grid over `[lo, hi]`.
// Negated comparisons also reject NaN.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn bin_index(value: f64, lo: f64, hi: f64, bins: usize) -> Result<usize> {
    if !value.is_finite() {
        return Err(RamError::Input(format!(
            "cannot discretize non-finite value {value}"
        )));
    }
    if bins < 2 || !(lo < hi) {
        return Err(RamError::Config(format!(
            "discretize needs bins >= 2 and lo < hi (got bins={bins}, lo={lo}, hi={hi})"
        )));
    }
    let raw = ((value - lo) / (hi - lo) * bins as f64).floor();
    Ok(raw.clamp(0.0, (bins - 1) as f64) as usize)
}

pub fn discretize(value: f64, lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    let idx = bin_index(value, lo, hi, bins)?;
    Ok(one_hot(idx, bins))
}

pub fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

/// Discretization layout for item and ad features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSchema {
    pub score_bins: usize,
    pub money_bins: usize,
    /// Range for log-scaled bid prices, `ln(1 + v)` is binned.
    pub bid_range: (f64, f64),
    pub cost_range: (f64, f64),
}

impl Default for FeatureSchema {
    fn default() -> Self {
        FeatureSchema {
            score_bins: 10,
            money_bins: 10,
            bid_range: (0.0, 5.0),
            cost_range: (0.0, 2.0),
        }
    }
}

impl FeatureSchema {
    pub fn item_dim(&self) -> usize {
        5 * self.score_bins
    }

    pub fn ad_dim(&self) -> usize {
        ImageSize::LEVELS + 2 * self.money_bins + 2 * self.score_bins
    }

    pub fn item_features(&self, item: &RegularItem) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.item_dim());
        for s in item.scores() {
            out.extend(discretize(s, 0.0, 1.0, self.score_bins)?);
        }
        Ok(out)
    }

    fn log_bin(&self, v: f64, range: (f64, f64)) -> Result<Vec<f64>> {
        discretize(v.ln_1p(), range.0.ln_1p(), range.1.ln_1p(), self.money_bins)
    }

    pub fn ad_features(&self, ad: &AdItem) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.ad_dim());
        out.extend(one_hot(ad.image_size.index(), ImageSize::LEVELS));
        out.extend(self.log_bin(ad.bid_price, self.bid_range)?);
        out.extend(self.log_bin(ad.hidden_cost, self.cost_range)?);
        out.extend(discretize(ad.predicted_ctr, 0.0, 1.0, self.score_bins)?);
        out.extend(discretize(ad.predicted_recall, 0.0, 1.0, self.score_bins)?);
        Ok(out)
    }
}

/// Request context: four one-hot blocks (app version 5, OS 2, feed type 2,
/// session phase 4), 13 components in total.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub app_version: u8,
    pub os: u8,
    pub feed_type: u8,
    pub phase: u8,
}

impl Context {
    pub const BLOCKS: [usize; 4] = [5, 2, 2, 4];

    pub fn new(app_version: u8, os: u8, feed_type: u8, phase: u8) -> Result<Self> {
        let c = Context {
            app_version,
            os,
            feed_type,
            phase,
        };
        c.check()?;
        Ok(c)
    }

    fn levels(&self) -> [u8; 4] {
        [self.app_version, self.os, self.feed_type, self.phase]
    }

    pub fn check(&self) -> Result<()> {
        for (v, n) in self.levels().iter().zip(Self::BLOCKS) {
            if *v as usize >= n {
                return Err(RamError::Input(format!(
                    "context level {v} out of range 0..{n}"
                )));
            }
        }
        Ok(())
    }

    /// Phase bucket for request `t` of a session capped at `t_max` requests.
    pub fn phase_of(t: usize, t_max: usize) -> u8 {
        ((t * 4) / t_max.max(1)).min(3) as u8
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(CONTEXT_DIM);
        for (v, n) in self.levels().iter().zip(Self::BLOCKS) {
            out.extend(one_hot((*v as usize).min(n - 1), n));
        }
        out
    }
}

/// The executed second-level decision. `head` follows the output-layer
/// convention: 0 means no insertion, `h >= 1` inserts before rec slot `h`
/// (`h = k + 1` appends at the end).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdDecision {
    NoAd,
    Insert { ad: AdId, head: usize },
}

impl AdDecision {
    pub fn head(&self) -> usize {
        match self {
            AdDecision::NoAd => 0,
            AdDecision::Insert { head, .. } => *head,
        }
    }

    pub fn ad(&self) -> Option<AdId> {
        match self {
            AdDecision::NoAd => None,
            AdDecision::Insert { ad, .. } => Some(*ad),
        }
    }

    pub fn is_insert(&self) -> bool {
        matches!(self, AdDecision::Insert { .. })
    }

    /// Log encoding: `(-1, 0)` for no ad.
    pub fn to_log(&self) -> (i64, usize) {
        match self {
            AdDecision::NoAd => (-1, 0),
            AdDecision::Insert { ad, head } => (ad.0 as i64, *head),
        }
    }

    pub fn from_log(ad_id: i64, slot: usize, k: usize) -> Result<Self> {
        match (ad_id, slot) {
            (-1, 0) => Ok(AdDecision::NoAd),
            (-1, s) => Err(RamError::Input(format!(
                "no-ad decision must use slot 0, got {s}"
            ))),
            (id, 0) => Err(RamError::Input(format!("ad {id} inserted with slot 0"))),
            (id, s) if id >= 0 && s <= k + 1 => Ok(AdDecision::Insert {
                ad: AdId(id as u32),
                head: s,
            }),
            (id, s) => Err(RamError::Input(format!("invalid ad decision ({id}, {s})"))),
        }
    }
}

/// One-hot location vector of length `k + 1` for insertion slot `head >= 1`.
pub fn slot_one_hot(head: usize, k: usize) -> Result<Vec<f64>> {
    if head == 0 || head > k + 1 {
        return Err(RamError::Input(format!(
            "slot {head} outside 1..={}",
            k + 1
        )));
    }
    Ok(one_hot(head - 1, k + 1))
}

/// Order-preserving concatenation of the `k` item embeddings of a rec-list.
pub fn encode_rec_action(items: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    if items.len() != k {
        return Err(RamError::Config(format!(
            "rec-list must have {k} items, got {}",
            items.len()
        )));
    }
    let mut out = Vec::with_capacity(k * ITEM_EMBED_DIM);
    for e in items {
        crate::error::check_dim("item embedding", ITEM_EMBED_DIM, e.len())?;
        out.extend_from_slice(e);
    }
    Ok(out)
}
