use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, Policy, Request};
use crate::domain::{AdDecision, ItemId};
use crate::error::{RamError, Result};

/// Logging policy: rec items drawn without replacement with probability
/// proportional to their mean platform score; with probability `p_ad` one ad,
/// drawn proportionally to its bid, is inserted at a uniform slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorPolicy {
    pub p_ad: f64,
}

impl Default for BehaviorPolicy {
    fn default() -> Self {
        BehaviorPolicy { p_ad: 0.5523 }
    }
}

fn weighted_draw<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    // a pool of all-zero weights falls back to uniform
    let w: Vec<f64> = if weights.iter().all(|w| *w <= 0.0) {
        vec![1.0; weights.len()]
    } else {
        weights.to_vec()
    };
    let dist =
        WeightedIndex::new(&w).map_err(|e| RamError::Input(format!("sampling weights: {e}")))?;
    Ok(dist.sample(rng))
}

impl BehaviorPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_ad) {
            return Err(RamError::Config(format!(
                "p_ad must lie in [0, 1], got {}",
                self.p_ad
            )));
        }
        Ok(())
    }
}

impl Policy for BehaviorPolicy {
    fn decide(
        &mut self,
        env: &Environment,
        req: &Request,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<ItemId>, AdDecision)> {
        let k = env.config.k;
        let mut pool = req.rec_candidates.clone();
        let mut weights = pool
            .iter()
            .map(|&id| {
                env.catalog
                    .item(id)
                    .map(|it| it.scores().iter().sum::<f64>() / 5.0)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut list = Vec::with_capacity(k);
        for _ in 0..k {
            let i = weighted_draw(&weights, rng)?;
            list.push(pool.remove(i));
            weights.remove(i);
        }
        let decision = if !req.ad_candidates.is_empty() && rng.random::<f64>() < self.p_ad {
            let bids = req
                .ad_candidates
                .iter()
                .map(|&a| env.catalog.ad(a).map(|ad| ad.bid_price))
                .collect::<Result<Vec<_>>>()?;
            let ad = req.ad_candidates[weighted_draw(&bids, rng)?];
            AdDecision::Insert {
                ad,
                head: rng.random_range(1..=k + 1),
            }
        } else {
            AdDecision::NoAd
        };
        Ok((list, decision))
    }
}
