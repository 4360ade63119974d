use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::RamAgents;
use crate::auction::{BiddingRule, RevenueSettings};
use crate::domain::{AdDecision, ItemId};
use crate::env::{Environment, Policy, Request};
use crate::error::Result;

/// Greedy cascade for the rec-list, bidding rule over the AS Q-table.
pub struct RamPolicy<'a> {
    pub agents: &'a RamAgents,
    pub rule: BiddingRule,
    pub revenue: RevenueSettings,
}

impl Policy for RamPolicy<'_> {
    fn decide(
        &mut self,
        env: &Environment,
        req: &Request,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<ItemId>, AdDecision)> {
        let sel = self.agents.rs.act(
            &env.catalog,
            &req.state,
            &req.rec_candidates,
            &HashSet::new(),
        )?;
        let rev = self.revenue.model(&env.catalog, &req.ad_candidates)?;
        let choice = self.agents.ads.act(
            &env.catalog,
            &req.state,
            &sel.items,
            &req.ad_candidates,
            &self.rule,
            &rev,
        )?;
        Ok((sel.items, choice.decision))
    }
}

/// Uniform rec-list; uniform over the admissible ad cells (no-ad, or any
/// candidate ad at any of the `k + 1` slots).
#[derive(Clone, Copy, Debug, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn decide(
        &mut self,
        env: &Environment,
        req: &Request,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<ItemId>, AdDecision)> {
        let k = env.config.k;
        let list: Vec<ItemId> = req
            .rec_candidates
            .choose_multiple(rng, k)
            .copied()
            .collect();
        let cells = 1 + req.ad_candidates.len() * (k + 1);
        let c = rng.random_range(0..cells);
        let decision = if c == 0 {
            AdDecision::NoAd
        } else {
            AdDecision::Insert {
                ad: req.ad_candidates[(c - 1) / (k + 1)],
                head: (c - 1) % (k + 1) + 1,
            }
        };
        Ok((list, decision))
    }
}

/// Myopic baseline: the `k` candidates with the highest mean platform score,
/// and always the ad with the highest immediate revenue at the first slot
/// (revenue is slot-independent, so every slot ties and the lowest wins).
#[derive(Clone, Copy, Debug)]
pub struct GreedyPolicy {
    pub revenue: RevenueSettings,
}

impl Policy for GreedyPolicy {
    fn decide(
        &mut self,
        env: &Environment,
        req: &Request,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<ItemId>, AdDecision)> {
        let mut scored = req
            .rec_candidates
            .iter()
            .map(|&id| {
                env.catalog
                    .item(id)
                    .map(|it| (it.scores().iter().sum::<f64>() / 5.0, id))
            })
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let list = scored
            .into_iter()
            .take(env.config.k)
            .map(|(_, id)| id)
            .collect();
        let rev = self.revenue.model(&env.catalog, &req.ad_candidates)?;
        let mut best: Option<(f64, usize)> = None;
        for (i, &r) in rev.ad_revenues().iter().enumerate() {
            let better = match best {
                None => true,
                Some((br, bi)) => {
                    r > br || (r == br && req.ad_candidates[i] < req.ad_candidates[bi])
                }
            };
            if better {
                best = Some((r, i));
            }
        }
        let decision = match best {
            Some((_, i)) => AdDecision::Insert {
                ad: req.ad_candidates[i],
                head: 1,
            },
            None => AdDecision::NoAd,
        };
        Ok((list, decision))
    }
}
