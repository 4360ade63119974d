//! Independent oracles shared by the integration tests and the acceptance
//! target. Each check returns a one-line detail on success and the first
//! mismatch on failure.

use std::collections::HashSet;

use ram_core::as_agent::{AdQNet, AsNetConfig, AsSample};
use ram_core::auction::{
    gsp_payment, ram_l_select, ram_n_select, BiddingRule, Choice, QRow, QTable, RevenueConvention,
    RevenueModel, RevenueSettings,
};
use ram_core::domain::{AdDecision, AdId, Catalog, FeatureSchema, ItemId};
use ram_core::env::{
    generate_catalog, generate_log, BehaviorPolicy, CatalogConfig, EnvConfig, Environment,
};
use ram_core::nn::gradcheck::{check, GradCheckTolerance};
use ram_core::nn::ParamStore;
use ram_core::rs_agent::{cascade_select, CascadeQNet, RsNetConfig, RsSample};
use ram_core::state::RawState;
use ram_core::trainer::{
    train_offpolicy, transitions_from_log, RamAgents, TargetRecord, TrainConfig, Transition,
};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{catalog, jitter, random_ads, random_items, raw_state, rng, spread_indices};

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- gradients -------------------------------------------------------------

pub fn gradcheck_cascade(points: u64) -> Check {
    let cat = catalog(1);
    let cfg = RsNetConfig {
        prefix_hidden: 8,
        head_hidden: vec![12, 6],
    };
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut nontrivial = 0;
    for point in 0..points {
        let mut r = rng(100 + point);
        let mut store = ParamStore::new();
        let net = CascadeQNet::new(&mut store, &cat, 3, &cfg, &mut r);
        jitter(&mut store, 0.05, &mut r);
        let states: Vec<_> = (0..2).map(|_| raw_state(&cat, 4, 2, &mut r)).collect();
        let lists: Vec<_> = (0..2).map(|_| random_items(&cat, 3, &mut r)).collect();
        let samples: Vec<RsSample> = states
            .iter()
            .zip(&lists)
            .enumerate()
            .map(|(i, (s, l))| RsSample {
                state: s,
                rec_list: l,
                target: 0.7 + i as f64,
            })
            .collect();
        store.zero_grads();
        net.accumulate_gradients(&mut store, &cat, &samples)
            .map_err(|e| e.to_string())?;
        let idx = spread_indices(&store, 6, &mut r);
        let rep = check(&mut store, &idx, GradCheckTolerance::default(), |s| {
            net.loss(s, &cat, &samples).unwrap()
        });
        ensure(rep.passed(), || {
            format!("point {point}: {:?}", rep.failures.first())
        })?;
        worst = worst.max(rep.max_rel_err);
        checked += rep.checked;
        nontrivial += rep.nontrivial;
    }
    ensure(nontrivial * 2 >= checked, || {
        format!("only {nontrivial} of {checked} gradients are non-negligible")
    })?;
    Ok(format!(
        "{points} points, {checked} coordinates ({nontrivial} non-negligible), max rel err {worst:.2e}"
    ))
}

pub fn gradcheck_ad(points: u64) -> Check {
    let cat = catalog(2);
    let cfg = AsNetConfig {
        value_hidden: vec![10, 5],
        advantage_hidden: vec![12, 6],
    };
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut nontrivial = 0;
    for point in 0..points {
        let mut r = rng(200 + point);
        let mut store = ParamStore::new();
        let net = AdQNet::new(&mut store, &cat, 3, &cfg, &mut r);
        jitter(&mut store, 0.05, &mut r);
        let states: Vec<_> = (0..3).map(|_| raw_state(&cat, 3, 2, &mut r)).collect();
        let lists: Vec<_> = (0..3).map(|_| random_items(&cat, 3, &mut r)).collect();
        let ads = random_ads(&cat, 2, &mut r);
        let decisions = [
            AdDecision::NoAd,
            AdDecision::Insert {
                ad: ads[0],
                head: 1,
            },
            AdDecision::Insert {
                ad: ads[1],
                head: 4,
            },
        ];
        let samples: Vec<AsSample> = (0..3)
            .map(|i| AsSample {
                state: &states[i],
                rec_list: &lists[i],
                decision: decisions[i],
                target: 1.0 - 0.3 * i as f64,
            })
            .collect();
        store.zero_grads();
        net.accumulate_gradients(&mut store, &cat, &samples)
            .map_err(|e| e.to_string())?;
        let idx = spread_indices(&store, 6, &mut r);
        let rep = check(&mut store, &idx, GradCheckTolerance::default(), |s| {
            net.loss(s, &cat, &samples).unwrap()
        });
        ensure(rep.passed(), || {
            format!("point {point}: {:?}", rep.failures.first())
        })?;
        worst = worst.max(rep.max_rel_err);
        checked += rep.checked;
        nontrivial += rep.nontrivial;
    }
    ensure(nontrivial * 2 >= checked, || {
        format!("only {nontrivial} of {checked} gradients are non-negligible")
    })?;
    Ok(format!(
        "{points} points, {checked} coordinates ({nontrivial} non-negligible), max rel err {worst:.2e}"
    ))
}

// ---- cascade ---------------------------------------------------------------

/// Position-weighted additive list value; weights strictly decrease.
pub struct Additive {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Additive {
    pub fn list_value(&self, list: &[ItemId]) -> f64 {
        list.iter()
            .zip(&self.weights)
            .map(|(i, w)| w * self.values[i.0 as usize])
            .sum()
    }

    /// `Q^j`: value of the prefix plus its best completion, by search.
    pub fn consistent_q(&self, prefix: &[ItemId], pool: &[ItemId], k: usize) -> f64 {
        if prefix.len() == k {
            return self.list_value(prefix);
        }
        pool.iter()
            .filter(|c| !prefix.contains(c))
            .map(|&c| {
                let mut p = prefix.to_vec();
                p.push(c);
                self.consistent_q(&p, pool, k)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn best_ordered_subset(f: &Additive, pool: &[ItemId], k: usize) -> Vec<ItemId> {
    fn rec(
        f: &Additive,
        pool: &[ItemId],
        k: usize,
        cur: &mut Vec<ItemId>,
        best: &mut (f64, Vec<ItemId>),
    ) {
        if cur.len() == k {
            let v = f.list_value(cur);
            if v > best.0 {
                *best = (v, cur.clone());
            }
            return;
        }
        for &c in pool {
            if !cur.contains(&c) {
                cur.push(c);
                rec(f, pool, k, cur, best);
                cur.pop();
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    rec(f, pool, k, &mut Vec::new(), &mut best);
    best.1
}

pub fn cascade_vs_brute_force(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut evals = 0;
    for inst in 0..instances {
        let n = r.random_range(1..=7usize);
        let k = r.random_range(1..=3usize.min(n));
        let values: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut weights: Vec<f64> = (0..k).map(|_| r.random_range(0.1..1.0)).collect();
        weights.sort_by(|a, b| b.total_cmp(a));
        let f = Additive { values, weights };
        let pool: Vec<ItemId> = (0..n as u32).map(ItemId).collect();
        let mut shuffled = pool.clone();
        shuffled.shuffle(&mut r);
        let sel = cascade_select(&shuffled, k, &HashSet::new(), |prefix, c| {
            let mut p = prefix.to_vec();
            p.push(c);
            Ok(f.consistent_q(&p, &pool, k))
        })
        .map_err(|e| e.to_string())?;
        let brute = best_ordered_subset(&f, &pool, k);
        ensure(sel.items == brute, || {
            format!(
                "instance {inst}: cascade {:?} vs brute force {brute:?}",
                sel.items
            )
        })?;
        ensure(sel.evaluations <= k * n, || {
            format!("instance {inst}: {} evaluations", sel.evaluations)
        })?;
        ensure(
            (sel.full_list_value() - f.list_value(&sel.items)).abs() < 1e-12,
            || format!("instance {inst}: list value"),
        )?;
        evals += sel.evaluations;
    }
    Ok(format!(
        "{instances} instances agree, {evals} Q evaluations"
    ))
}

// ---- ad table semantics ----------------------------------------------------

/// Random states, rec-lists and candidate ads through a k = 6 ad network and
/// both bidding rules. A positive reserve makes every inserted ad earn.
pub fn ad_table_semantics(decisions: usize, seed: u64) -> Check {
    let cat = catalog(5);
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let net = AdQNet::new(&mut store, &cat, 6, &AsNetConfig::default(), &mut r);
    jitter(&mut store, 0.2, &mut r);
    let settings = RevenueSettings {
        convention: RevenueConvention::ExpectedPerClick,
        reserve: 0.05,
    };
    let (mut inserts, mut none) = (0, 0);
    for d in 0..decisions {
        let raw = raw_state(&cat, r.random_range(0..8), r.random_range(0..3), &mut r);
        let list = random_items(&cat, 6, &mut r);
        let ads = random_ads(&cat, r.random_range(0..=5), &mut r);
        let s = net.encode(&store, &cat, &raw).map_err(|e| e.to_string())?;
        let enc = net
            .encode_list(&store, &cat, &list)
            .map_err(|e| e.to_string())?;
        let table = net
            .q_table(&store, &cat, &s, &enc, &ads)
            .map_err(|e| e.to_string())?;
        ensure(table.shape() == (ads.len() + 1, 8), || {
            format!("decision {d}: shape {:?}", table.shape())
        })?;
        let rev = settings.model(&cat, &ads).map_err(|e| e.to_string())?;
        let rule = if d % 2 == 0 {
            BiddingRule::RamL {
                alpha: r.random_range(0.0..3.0),
            }
        } else {
            BiddingRule::RamN {
                n: r.random_range(1..=40),
            }
        };
        let c: Choice = rule.select(&table, &rev);
        let no_ad = c.decision == AdDecision::NoAd;
        ensure(no_ad == (c.cell.head == 0), || {
            format!("decision {d}: {:?} at head {}", c.decision, c.cell.head)
        })?;
        ensure(no_ad == (c.revenue == 0.0), || {
            format!("decision {d}: {:?} earns {}", c.decision, c.revenue)
        })?;
        ensure(no_ad == (c.cell.row == 0), || {
            format!("decision {d}: row {}", c.cell.row)
        })?;
        if no_ad {
            none += 1;
        } else {
            inserts += 1;
        }
    }
    Ok(format!(
        "{decisions} decisions ({inserts} inserts, {none} no-ad), all tables (|ads|+1)x8"
    ))
}

// ---- auction laws ----------------------------------------------------------

pub fn random_table<R: Rng>(r: &mut R, ads: usize) -> (QTable, RevenueModel) {
    let mut rows = vec![QRow {
        ad: None,
        values: (0..8).map(|_| r.random_range(-1.0..1.0)).collect(),
    }];
    let mut ids: Vec<u32> = (0..40).collect();
    ids.shuffle(r);
    for &id in &ids[..ads] {
        rows.push(QRow {
            ad: Some(AdId(id)),
            values: (0..8).map(|_| r.random_range(-1.0..1.0)).collect(),
        });
    }
    let rev = (0..ads).map(|_| r.random_range(0.01..1.0)).collect();
    (QTable { rows }, RevenueModel::new(rev).unwrap())
}

fn permutations(v: &[f64]) -> Vec<Vec<f64>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

pub fn auction_laws(tables: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for t_i in 0..tables {
        let n_ads = r.random_range(0..=5usize);
        let (t, rev) = random_table(&mut r, n_ads);
        let cells = t.admissible();
        ensure(cells.len() == 1 + n_ads * 7, || {
            format!("table {t_i}: {} admissible cells", cells.len())
        })?;
        let q_best = *cells
            .iter()
            .max_by(|a, b| t.q(**a).total_cmp(&t.q(**b)))
            .unwrap();
        ensure(ram_n_select(&t, &rev, 1).cell == q_best, || {
            format!("table {t_i}: N=1 is not the Q argmax")
        })?;
        let all = ram_n_select(&t, &rev, cells.len());
        let max_rev = cells
            .iter()
            .map(|&c| rev.rev(c))
            .fold(f64::NEG_INFINITY, f64::max);
        ensure(all.revenue == max_rev, || {
            format!("table {t_i}: N=all revenue {} vs {max_rev}", all.revenue)
        })?;
        if n_ads > 0 {
            ensure(all.decision.is_insert(), || {
                format!("table {t_i}: N=all chose no ad")
            })?;
        }

        let alpha = r.random_range(0.0..3.0);
        let lambda = r.random_range(0.1..10.0);
        let scaled = QTable {
            rows: t
                .rows
                .iter()
                .map(|row| QRow {
                    ad: row.ad,
                    values: row.values.iter().map(|v| v * lambda).collect(),
                })
                .collect(),
        };
        let scaled_rev =
            RevenueModel::new(rev.ad_revenues().iter().map(|v| v * lambda).collect()).unwrap();
        ensure(
            ram_l_select(&t, &rev, alpha).cell == ram_l_select(&scaled, &scaled_rev, alpha).cell,
            || format!("table {t_i}: RAM-l argmax changed under scaling by {lambda}"),
        )?;
    }
    let mut perms = 0;
    for v in 0..5 {
        let bids: Vec<f64> = (0..5).map(|_| r.random_range(0.0..5.0)).collect();
        let mut sorted = bids.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        for p in permutations(&bids) {
            let winner = (0..5).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
            let pay = gsp_payment(&p, winner, 0.0).map_err(|e| e.to_string())?;
            ensure(pay == sorted[1], || {
                format!("bid vector {v}: payment {pay} vs second bid {}", sorted[1])
            })?;
            perms += 1;
        }
    }
    Ok(format!(
        "{tables} tables; GSP second price on {perms} permutations"
    ))
}

// ---- Algorithm-1 hand trace ------------------------------------------------

pub fn trace_env(t_max: usize) -> Environment {
    let cfg = EnvConfig {
        history_cap: 5,
        t_max,
        ..EnvConfig::default()
    };
    let cat = generate_catalog(&CatalogConfig::default(), &FeatureSchema::default(), 21).unwrap();
    Environment::new(cfg, cat).unwrap()
}

pub fn tiny_train_config(rule: BiddingRule) -> TrainConfig {
    TrainConfig {
        batch_size: 1,
        update_every: 1,
        epochs: 1,
        log_interval: 5,
        rule,
        rs_net: RsNetConfig {
            prefix_hidden: 8,
            head_hidden: vec![16],
        },
        as_net: AsNetConfig {
            value_hidden: vec![16],
            advantage_hidden: vec![16],
        },
        ..TrainConfig::default()
    }
}

/// Transitions of the first behavior session that lasts exactly three steps.
pub fn three_step_session(env: &Environment) -> Vec<Transition> {
    let log = generate_log(env, &BehaviorPolicy::default(), 60, 5).unwrap();
    for s in 0..60 {
        let recs: Vec<_> = log.iter().filter(|r| r.session == s).cloned().collect();
        if recs.len() == 3 {
            return transitions_from_log(&recs, env.config.k, env.config.history_cap).unwrap();
        }
    }
    panic!("no three-step session");
}

/// Greedy cascade recomputed from scratch: every score unrolls the prefix GRU anew.
pub fn hand_cascade(
    agents: &RamAgents,
    cat: &Catalog,
    raw: &RawState,
    cands: &[ItemId],
) -> (Vec<ItemId>, f64) {
    let net = &agents.rs.net;
    let store = &agents.rs.target;
    let s = net.encode(store, cat, raw).unwrap();
    let mut sorted = cands.to_vec();
    sorted.sort();
    let mut chosen: Vec<ItemId> = Vec::new();
    let mut last = 0.0;
    for _ in 0..net.k {
        let prefix: Vec<Vec<f64>> = chosen.iter().map(|&i| net.embed(store, cat, i)).collect();
        let mut best: Option<(f64, ItemId)> = None;
        for &c in sorted.iter().filter(|c| !chosen.contains(c)) {
            let q = net
                .q_value(store, &s, &prefix, &net.embed(store, cat, c))
                .unwrap();
            if best.is_none_or(|(b, _)| q > b) {
                best = Some((q, c));
            }
        }
        let (q, c) = best.unwrap();
        chosen.push(c);
        last = q;
    }
    (chosen, last)
}

/// Expected revenue per click of candidate `i`: price paid if it wins the
/// slot (highest competing bid not above its own, reserve 0) times its CTR.
pub fn hand_revenue(cat: &Catalog, ads: &[AdId], i: usize) -> f64 {
    let own = cat.ad(ads[i]).unwrap().bid_price;
    let price = ads
        .iter()
        .enumerate()
        .filter(|&(j, a)| j != i && cat.ad(*a).unwrap().bid_price <= own)
        .map(|(_, a)| cat.ad(*a).unwrap().bid_price)
        .fold(0.0, f64::max);
    price * cat.ad(ads[i]).unwrap().predicted_ctr
}

/// The bidding rule applied to a target-network table built row by row.
pub fn hand_bid(
    agents: &RamAgents,
    cat: &Catalog,
    raw: &RawState,
    list: &[ItemId],
    ads: &[AdId],
    rule: BiddingRule,
) -> (AdDecision, f64) {
    let net = &agents.ads.net;
    let store = &agents.ads.target;
    let s = net.encode(store, cat, raw).unwrap();
    let enc = net.encode_list(store, cat, list).unwrap();
    // (key, decision, q, revenue); NO_AD keyed first
    let mut cells = Vec::new();
    let none = net
        .q_row(store, &s, &enc, &net.ad_input(store, cat, None))
        .unwrap();
    cells.push(((-1i64, 0usize), AdDecision::NoAd, none[0], 0.0));
    let mut sorted: Vec<(usize, AdId)> = ads.iter().copied().enumerate().collect();
    sorted.sort_by_key(|&(_, a)| a);
    for (i, ad) in sorted {
        let row = net
            .q_row(store, &s, &enc, &net.ad_input(store, cat, Some(ad)))
            .unwrap();
        let rev = hand_revenue(cat, ads, i);
        for (head, &q) in row.iter().enumerate().skip(1) {
            cells.push(((ad.0 as i64, head), AdDecision::Insert { ad, head }, q, rev));
        }
    }
    let pick = match rule {
        BiddingRule::RamL { alpha } => {
            let mut best = 0;
            for (j, c) in cells.iter().enumerate() {
                if c.2 + alpha * c.3 > cells[best].2 + alpha * cells[best].3 {
                    best = j;
                }
            }
            best
        }
        BiddingRule::RamN { n } => {
            let mut idx: Vec<usize> = (0..cells.len()).collect();
            idx.sort_by(|&a, &b| {
                cells[b]
                    .2
                    .total_cmp(&cells[a].2)
                    .then(cells[a].0.cmp(&cells[b].0))
            });
            let top = &idx[..n.min(idx.len())];
            let mut best = top[0];
            for &j in top {
                if cells[j].3 > cells[best].3
                    || (cells[j].3 == cells[best].3 && cells[j].2 > cells[best].2)
                {
                    best = j;
                }
            }
            best
        }
    };
    (cells[pick].1, cells[pick].2)
}

/// Trains frozen (lr 0) tiny networks on a three-step session and compares
/// every target the trainer formed with a hand execution of the same step.
pub fn hand_trace(rule: BiddingRule) -> Check {
    let env = trace_env(3);
    let trs = three_step_session(&env);
    ensure(trs.iter().filter(|t| t.terminal()).count() == 1, || {
        "expected one terminal transition".into()
    })?;
    let cfg = TrainConfig {
        lr_rs: 0.0,
        lr_as: 0.0,
        epochs: 12,
        ..tiny_train_config(rule)
    };
    let gamma = cfg.gamma;
    let mut agents = RamAgents::new(&env.catalog, 6, &cfg);
    let reference = agents.clone();
    let mut records: Vec<TargetRecord> = Vec::new();
    let mut hook = |r: &TargetRecord| records.push(r.clone());
    let rep = train_offpolicy(
        &mut agents,
        &env.catalog,
        &trs,
        &cfg,
        &env.config.revenue_settings(),
        Some(&mut hook),
    )
    .map_err(|e| e.to_string())?;
    ensure(rep.updates == 36 && records.len() == 36, || {
        format!("{} updates, {} targets", rep.updates, records.len())
    })?;
    ensure(
        agents.rs.eval.values_bit_equal(&reference.rs.eval)
            && agents.ads.eval.values_bit_equal(&reference.ads.eval),
        || "frozen networks changed".into(),
    )?;

    let (mut terminal, mut bootstrapped) = (0, 0);
    let mut visited = HashSet::new();
    for (u, rec) in records.iter().enumerate() {
        ensure(rec.update == u as u64, || {
            format!("record {u} belongs to update {}", rec.update)
        })?;
        visited.insert(rec.transition);
        let tr = &trs[rec.transition];
        match &tr.next {
            None => {
                ensure(rec.y_rs == tr.r_rs && rec.y_as == tr.r_as, || {
                    format!("update {u}: terminal targets")
                })?;
                ensure(rec.next_rec_list.is_none() && rec.next_ad.is_none(), || {
                    format!("update {u}: terminal bootstrap")
                })?;
                terminal += 1;
            }
            Some(next) => {
                let (list, q_rs) =
                    hand_cascade(&reference, &env.catalog, &next.state, &next.rec_candidates);
                ensure(rec.next_rec_list.as_ref() == Some(&list), || {
                    format!("update {u}: next rec-list")
                })?;
                let y_rs = tr.r_rs + gamma * q_rs;
                ensure((rec.y_rs - y_rs).abs() < 1e-9, || {
                    format!("update {u}: y_rs {} vs {y_rs}", rec.y_rs)
                })?;
                let (decision, q_as) = hand_bid(
                    &reference,
                    &env.catalog,
                    &next.state,
                    &list,
                    &next.ad_candidates,
                    rule,
                );
                ensure(rec.next_ad == Some(decision), || {
                    format!("update {u}: next ad {:?} vs {decision:?}", rec.next_ad)
                })?;
                let y_as = tr.r_as + gamma * q_as;
                ensure((rec.y_as - y_as).abs() < 1e-9, || {
                    format!("update {u}: y_as {} vs {y_as}", rec.y_as)
                })?;
                bootstrapped += 1;
            }
        }
    }
    ensure(visited.len() == 3, || {
        format!("only {} transitions sampled", visited.len())
    })?;
    Ok(format!(
        "{} targets ({terminal} terminal, {bootstrapped} bootstrapped) match",
        records.len()
    ))
}
