use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{AdId, AdItem, Catalog, FeatureSchema, ImageSize, ItemId, RegularItem};
use crate::error::{RamError, Result};

/// Sizes and distributions of a synthetic catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogConfig {
    pub items: usize,
    pub ads: usize,
    /// Beta parameters of each item score.
    pub score_beta: (f64, f64),
    /// Log-normal bid: `ln bid ~ N(bid_log_mean + bid_size_step·size, bid_log_sd)`,
    /// with size 0, 1, 2 for small, medium, large.
    pub bid_log_mean: f64,
    pub bid_size_step: f64,
    pub bid_log_sd: f64,
    pub ctr_beta: (f64, f64),
    pub recall_beta: (f64, f64),
}

impl Default for CatalogConfig {
    fn default() -> Self {
        CatalogConfig {
            items: 400,
            ads: 40,
            score_beta: (2.0, 2.0),
            bid_log_mean: 1.0,
            bid_size_step: 0.3,
            bid_log_sd: 0.4,
            ctr_beta: (2.0, 18.0),
            recall_beta: (2.0, 2.0),
        }
    }
}

fn beta(p: (f64, f64), what: &str) -> Result<Beta<f64>> {
    Beta::new(p.0, p.1).map_err(|e| RamError::Config(format!("{what}: {e}")))
}

/// Deterministic catalog for `seed`. Bids are clamped into the schema's bid range.
pub fn generate_catalog(cfg: &CatalogConfig, schema: &FeatureSchema, seed: u64) -> Result<Catalog> {
    if cfg.items == 0 || cfg.ads == 0 {
        return Err(RamError::Config(
            "catalog needs at least one item and one ad".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let score = beta(cfg.score_beta, "score_beta")?;
    let items = (0..cfg.items as u32)
        .map(|i| RegularItem {
            id: ItemId(i),
            like_score: score.sample(&mut rng),
            finish_score: score.sample(&mut rng),
            comment_score: score.sample(&mut rng),
            follow_score: score.sample(&mut rng),
            group_score: score.sample(&mut rng),
        })
        .collect();
    let ctr = beta(cfg.ctr_beta, "ctr_beta")?;
    let recall = beta(cfg.recall_beta, "recall_beta")?;
    let max_bid = schema.bid_range.1.exp() - 1.0;
    let mut ads = Vec::with_capacity(cfg.ads);
    for i in 0..cfg.ads as u32 {
        let size_idx = rng.random_range(0..3usize);
        let image_size = [ImageSize::Small, ImageSize::Medium, ImageSize::Large][size_idx];
        let bid_dist = LogNormal::new(
            cfg.bid_log_mean + cfg.bid_size_step * size_idx as f64,
            cfg.bid_log_sd,
        )
        .map_err(|e| RamError::Config(format!("bid distribution: {e}")))?;
        let bid_price = bid_dist.sample(&mut rng).min(max_bid);
        let hidden_cost = bid_price * rng.random_range(0.1..0.3);
        ads.push(AdItem {
            id: AdId(i),
            image_size,
            bid_price,
            hidden_cost,
            predicted_ctr: ctr.sample(&mut rng),
            predicted_recall: recall.sample(&mut rng),
        });
    }
    Catalog::new(schema.clone(), items, ads)
}
