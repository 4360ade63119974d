//! Off-policy training from logged sessions and the online test loop.

mod metrics;
mod policies;
mod replay;

use std::collections::HashSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{compute_session_metrics, summarize, MetricSummary, SessionMetrics, Summary};
pub use policies::{GreedyPolicy, RamPolicy, RandomPolicy};
pub use replay::ReplayBuffer;

use crate::as_agent::{as_target, AsAgent, AsNetConfig, AsSample};
use crate::auction::{BiddingRule, RevenueSettings};
use crate::domain::{validate_log, AdDecision, AdId, Catalog, ItemId, SessionLogRecord};
use crate::env::{Environment, Policy};
use crate::error::{RamError, Result};
use crate::nn::{checkpoint, OptimizerConfig};
use crate::rs_agent::{rs_target, RsAgent, RsNetConfig, RsSample};
use crate::state::RawState;

/// What follows a non-terminal transition.
#[derive(Clone, Debug, PartialEq)]
pub struct NextState {
    pub state: RawState,
    pub rec_candidates: Vec<ItemId>,
    pub ad_candidates: Vec<AdId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: RawState,
    pub rec_candidates: Vec<ItemId>,
    pub ad_candidates: Vec<AdId>,
    pub rec_list: Vec<ItemId>,
    pub decision: AdDecision,
    pub r_rs: f64,
    pub r_as: f64,
    pub revenue: f64,
    /// `None` exactly when the transition is terminal.
    pub next: Option<NextState>,
}

impl Transition {
    pub fn terminal(&self) -> bool {
        self.next.is_none()
    }
}

/// Rebuilds transitions from a log. The log must validate; the last record
/// of a partial session is treated as terminal.
pub fn transitions_from_log(
    records: &[SessionLogRecord],
    k: usize,
    history_cap: usize,
) -> Result<Vec<Transition>> {
    validate_log(records, k, history_cap).into_result()?;
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let state = RawState {
            history: r.history(history_cap),
            context: r.context,
        };
        let decision = r.ad_decision(k)?;
        let next = match records.get(i + 1) {
            Some(n) if !r.terminal && n.session == r.session => Some(NextState {
                state: RawState {
                    history: state.history.transition(&r.rec_list, decision.ad()),
                    context: n.context,
                },
                rec_candidates: n.rec_candidates.clone(),
                ad_candidates: n.ad_candidates.clone(),
            }),
            _ => None,
        };
        out.push(Transition {
            state,
            rec_candidates: r.rec_candidates.clone(),
            ad_candidates: r.ad_candidates.clone(),
            rec_list: r.rec_list.clone(),
            decision,
            r_rs: r.r_rs,
            r_as: r.r_as as f64,
            revenue: r.revenue,
            next,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub lr_rs: f64,
    pub lr_as: f64,
    /// Hard target sync every this many updates.
    pub target_sync: usize,
    /// Passes over the log.
    pub epochs: usize,
    /// One minibatch update per this many logged steps.
    pub update_every: usize,
    pub buffer_capacity: usize,
    /// Updates per training-curve record.
    pub log_interval: usize,
    pub seed: u64,
    pub rule: BiddingRule,
    pub rs_net: RsNetConfig,
    pub as_net: AsNetConfig,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.95,
            batch_size: 32,
            lr_rs: 1e-3,
            lr_as: 1e-3,
            target_sync: 100,
            epochs: 3,
            update_every: 1,
            buffer_capacity: 10_000,
            log_interval: 50,
            seed: 0,
            rule: BiddingRule::RamL { alpha: 0.5 },
            rs_net: RsNetConfig::default(),
            as_net: AsNetConfig::default(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(0.0..=1.0).contains(&self.gamma) {
            bad.push(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("target_sync", self.target_sync),
            ("update_every", self.update_every),
            ("buffer_capacity", self.buffer_capacity),
            ("log_interval", self.log_interval),
        ] {
            if v == 0 {
                bad.push(format!("{name} must be >= 1"));
            }
        }
        for (name, v) in [("lr_rs", self.lr_rs), ("lr_as", self.lr_as)] {
            if !(v >= 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be finite and >= 0"));
            }
        }
        if let Err(e) = self.rule.validate() {
            bad.push(e.to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(RamError::Config(bad.join("; ")))
        }
    }
}

/// Both levels.
#[derive(Clone, Debug)]
pub struct RamAgents {
    pub rs: RsAgent,
    pub ads: AsAgent,
}

pub const CHECKPOINT_FILES: [&str; 4] = [
    "rs_eval.ckpt",
    "rs_target.ckpt",
    "as_eval.ckpt",
    "as_target.ckpt",
];

impl RamAgents {
    pub fn new(catalog: &Catalog, k: usize, cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let rs = RsAgent::new(catalog, k, &cfg.rs_net, cfg.optimizer, &mut rng);
        let ads = AsAgent::new(catalog, k, &cfg.as_net, cfg.optimizer, &mut rng);
        RamAgents { rs, ads }
    }

    /// Writes the four parameter stores into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| RamError::io(dir, e))?;
        let stores = [
            &self.rs.eval,
            &self.rs.target,
            &self.ads.eval,
            &self.ads.target,
        ];
        for (name, store) in CHECKPOINT_FILES.iter().zip(stores) {
            checkpoint::save(store, &dir.join(name))?;
        }
        Ok(())
    }

    /// Loads parameters saved by [`RamAgents::save`] into networks of the same
    /// architecture. Optimizer moments restart from zero.
    pub fn load(&mut self, dir: &Path) -> Result<()> {
        let stores = [
            &mut self.rs.eval,
            &mut self.rs.target,
            &mut self.ads.eval,
            &mut self.ads.target,
        ];
        for (name, store) in CHECKPOINT_FILES.iter().zip(stores) {
            checkpoint::load_into(store, &dir.join(name))?;
        }
        Ok(())
    }

    pub fn updates(&self) -> u64 {
        self.rs.eval.steps()
    }
}

/// Targets formed for one sampled transition.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetRecord {
    pub update: u64,
    /// Index of the transition in the training sequence.
    pub transition: usize,
    pub y_rs: f64,
    pub y_as: f64,
    /// Target-network rec-list for `s'` (non-terminal only).
    pub next_rec_list: Option<Vec<ItemId>>,
    pub next_ad: Option<AdDecision>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss_rs: f64,
    pub loss_as: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub updates: usize,
    pub loss_rs: f64,
    pub loss_as: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub curve: Vec<CurveRecord>,
    pub epochs: Vec<EpochSummary>,
    pub updates: u64,
    pub target_syncs: u64,
    pub max_buffer_len: usize,
}

/// `(y_rs, y_as, next selection)`; the selection is `None` for terminals.
pub type Targets = (f64, f64, Option<(Vec<ItemId>, AdDecision)>);

/// Targets for one transition under the agents' target networks.
pub fn compute_targets(
    agents: &RamAgents,
    catalog: &Catalog,
    tr: &Transition,
    gamma: f64,
    rule: &BiddingRule,
    revenue: &RevenueSettings,
) -> Result<Targets> {
    match &tr.next {
        None => Ok((
            rs_target(tr.r_rs, gamma, None),
            as_target(tr.r_as, gamma, None),
            None,
        )),
        Some(next) => {
            let sel = agents.rs.target_selection(
                catalog,
                &next.state,
                &next.rec_candidates,
                &HashSet::new(),
            )?;
            let rev = revenue.model(catalog, &next.ad_candidates)?;
            let choice = agents.ads.target_choice(
                catalog,
                &next.state,
                &sel.items,
                &next.ad_candidates,
                rule,
                &rev,
            )?;
            let y_rs = rs_target(tr.r_rs, gamma, Some(sel.full_list_value()));
            let y_as = as_target(tr.r_as, gamma, Some(&choice));
            Ok((y_rs, y_as, Some((sel.items, choice.decision))))
        }
    }
}

/// Off-policy training: for every logged step, push the transition, and
/// (once the buffer holds a batch) every `update_every` steps sample a
/// minibatch, form targets on the target networks and update both levels.
/// `on_targets` sees every target before the update that uses it.
pub fn train_offpolicy(
    agents: &mut RamAgents,
    catalog: &Catalog,
    transitions: &[Transition],
    cfg: &TrainConfig,
    revenue: &RevenueSettings,
    mut on_targets: Option<&mut dyn FnMut(&TargetRecord)>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if transitions.is_empty() {
        return Err(RamError::Input("training log is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut buffer: ReplayBuffer<usize> = ReplayBuffer::new(cfg.buffer_capacity);
    let mut report = TrainReport::default();
    let (mut win_rs, mut win_as, mut win_n) = (0.0, 0.0, 0usize);
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let (mut ep_rs, mut ep_as, mut ep_n) = (0.0, 0.0, 0usize);
        for idx in 0..transitions.len() {
            buffer.push(idx);
            report.max_buffer_len = report.max_buffer_len.max(buffer.len());
            step += 1;
            if buffer.len() < cfg.batch_size || !step.is_multiple_of(cfg.update_every) {
                continue;
            }
            let batch: Vec<usize> = buffer
                .sample(&mut rng, cfg.batch_size)
                .into_iter()
                .copied()
                .collect();
            let update = agents.updates();
            let mut ys = Vec::with_capacity(batch.len());
            for &i in &batch {
                let (y_rs, y_as, next) = compute_targets(
                    agents,
                    catalog,
                    &transitions[i],
                    cfg.gamma,
                    &cfg.rule,
                    revenue,
                )?;
                if let Some(hook) = on_targets.as_mut() {
                    let (next_rec_list, next_ad) = match next {
                        Some((l, d)) => (Some(l), Some(d)),
                        None => (None, None),
                    };
                    hook(&TargetRecord {
                        update,
                        transition: i,
                        y_rs,
                        y_as,
                        next_rec_list,
                        next_ad,
                    });
                }
                ys.push((y_rs, y_as));
            }
            let rs_samples: Vec<RsSample<'_>> = batch
                .iter()
                .zip(&ys)
                .map(|(&i, &(y, _))| RsSample {
                    state: &transitions[i].state,
                    rec_list: &transitions[i].rec_list,
                    target: y,
                })
                .collect();
            let as_samples: Vec<AsSample<'_>> = batch
                .iter()
                .zip(&ys)
                .map(|(&i, &(_, y))| AsSample {
                    state: &transitions[i].state,
                    rec_list: &transitions[i].rec_list,
                    decision: transitions[i].decision,
                    target: y,
                })
                .collect();
            let loss_rs = agents.rs.update(catalog, &rs_samples, cfg.lr_rs)?;
            let loss_as = agents.ads.update(catalog, &as_samples, cfg.lr_as)?;
            if !(loss_rs.is_finite() && loss_as.is_finite()) {
                return Err(RamError::Input(format!(
                    "training diverged at update {update} (loss_rs {loss_rs}, loss_as {loss_as})"
                )));
            }
            report.updates += 1;
            ep_rs += loss_rs;
            ep_as += loss_as;
            ep_n += 1;
            win_rs += loss_rs;
            win_as += loss_as;
            win_n += 1;
            if agents.updates().is_multiple_of(cfg.target_sync as u64) {
                agents.rs.sync_target()?;
                agents.ads.sync_target()?;
                report.target_syncs += 1;
            }
            if win_n == cfg.log_interval {
                report.curve.push(CurveRecord {
                    epoch,
                    step: agents.updates(),
                    loss_rs: win_rs / win_n as f64,
                    loss_as: win_as / win_n as f64,
                });
                (win_rs, win_as, win_n) = (0.0, 0.0, 0);
            }
        }
        let n = ep_n.max(1) as f64;
        report.epochs.push(EpochSummary {
            epoch,
            updates: ep_n,
            loss_rs: ep_rs / n,
            loss_as: ep_as / n,
        });
    }
    Ok(report)
}

/// Runs `sessions` test sessions (indices `0..sessions` under `seed`) with a
/// fixed policy; no learning happens here.
pub fn run_online_test(
    env: &Environment,
    policy: &mut dyn Policy,
    warmup: &mut dyn Policy,
    sessions: u64,
    seed: u64,
) -> Result<Vec<SessionMetrics>> {
    (0..sessions)
        .map(|i| {
            Ok(compute_session_metrics(
                &env.run_session(seed, i, policy, warmup)?,
            ))
        })
        .collect()
}
