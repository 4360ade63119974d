#![allow(dead_code)]

pub mod oracles;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ram_core::domain::{AdId, Catalog, Context, FeatureSchema, ItemId};
use ram_core::env::{generate_catalog, CatalogConfig};
use ram_core::state::{BrowsingHistory, RawState};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn catalog(seed: u64) -> Catalog {
    let cfg = CatalogConfig {
        items: 150,
        ads: 12,
        ..CatalogConfig::default()
    };
    generate_catalog(&cfg, &FeatureSchema::default(), seed).unwrap()
}

pub fn random_items(cat: &Catalog, n: usize, rng: &mut ChaCha8Rng) -> Vec<ItemId> {
    let ids: Vec<ItemId> = cat.items().iter().map(|i| i.id).collect();
    ids.choose_multiple(rng, n).copied().collect()
}

pub fn random_ads(cat: &Catalog, n: usize, rng: &mut ChaCha8Rng) -> Vec<AdId> {
    let ids: Vec<AdId> = cat.ads().iter().map(|a| a.id).collect();
    ids.choose_multiple(rng, n).copied().collect()
}

pub fn raw_state(cat: &Catalog, recs: usize, ads: usize, rng: &mut ChaCha8Rng) -> RawState {
    let r = random_items(cat, recs, rng);
    let a = random_ads(cat, ads, rng);
    RawState {
        history: BrowsingHistory::from_parts(&r, &a, 20),
        context: Context::new(
            rng.random_range(0..5),
            rng.random_range(0..2),
            rng.random_range(0..2),
            rng.random_range(0..4),
        )
        .unwrap(),
    }
}

/// Flat indices spread over every parameter tensor of `store`.
pub fn spread_indices(
    store: &ram_core::nn::ParamStore,
    per_tensor: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut out = Vec::new();
    let mut off = 0;
    for id in store.ids() {
        let (r, c) = store.shape(id);
        let n = r * c;
        for _ in 0..per_tensor.min(n) {
            out.push(off + rng.random_range(0..n));
        }
        off += n;
    }
    out
}

/// Moves every parameter by a small random amount, so biases are not all zero.
pub fn jitter(store: &mut ram_core::nn::ParamStore, scale: f64, rng: &mut ChaCha8Rng) {
    for i in 0..store.num_scalars() {
        let v = store.scalar(i) + rng.random_range(-scale..scale);
        store.set_scalar(i, v);
    }
}
