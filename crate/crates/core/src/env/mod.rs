//! Synthetic user environment.
//!
//! A transparent parametric stand-in for a learned simulator, chosen so that
//! every response has a closed-form expectation:
//!
//! ```text
//! m_i    = w_u · scores_i                      item match, in [0, 1]
//! match  = Σ_j π_j m_{list_j}                  position weights π sum to 1
//! dwell  = base · match · G,  G ~ Gamma(κ, 1/κ)
//! z      = b0 + w_q·match − w_ad·(1 − aff)·size·slot(h)·(1 + f·ads_seen)
//! p_cont = p_max · σ(z) / σ(b0 + w_q)
//! rev    = gsp price · Bernoulli(ctr)          0 without an ad
//! ```

mod behavior;
mod catalog_gen;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Dirichlet, Distribution, Gamma, Gumbel};
use serde::{Deserialize, Serialize};

pub use behavior::BehaviorPolicy;
pub use catalog_gen::{generate_catalog, CatalogConfig};

use crate::auction::{price_if_selected, RevenueConvention, RevenueSettings};
use crate::domain::{
    AdDecision, AdId, AdItem, Catalog, Context, ImageSize, ItemId, RegularItem, SessionLogRecord,
};
use crate::error::{RamError, Result};
use crate::nn::ops::sigmoid;
use crate::state::{BrowsingHistory, RawState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub k: usize,
    pub rec_pool: usize,
    pub ad_pool: usize,
    /// Recorded requests per session at most.
    pub t_max: usize,
    /// Unrecorded behavior-policy requests that seed the history.
    pub warmup: usize,
    pub history_cap: usize,
    /// Mean user preference over the five item scores.
    pub population_weights: [f64; 5],
    /// Dirichlet concentration around `population_weights`.
    pub weight_concentration: f64,
    /// Beta parameters of the per-user ad tolerance.
    pub ad_tolerance: (f64, f64),
    pub recall_temperature: f64,
    pub ad_recall_temperature: f64,
    pub position_decay: f64,
    /// Minutes of dwell for a perfectly matched list.
    pub dwell_base: f64,
    pub dwell_shape: f64,
    pub p_max: f64,
    pub leave_bias: f64,
    pub quality_weight: f64,
    pub ad_weight: f64,
    /// Intrusiveness falls linearly from slot 1 to `1 − slot_decay` at the end.
    pub slot_decay: f64,
    pub fatigue: f64,
    /// Intrusiveness of small, medium, large and unknown images.
    pub size_factors: [f64; 4],
    pub reserve_price: f64,
    pub revenue_convention: RevenueConvention,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            k: crate::domain::DEFAULT_K,
            rec_pool: 15,
            ad_pool: 5,
            t_max: 12,
            warmup: 3,
            history_cap: 20,
            population_weights: [0.1, 0.45, 0.05, 0.1, 0.3],
            weight_concentration: 20.0,
            ad_tolerance: (2.0, 2.0),
            recall_temperature: 3.0,
            ad_recall_temperature: 2.0,
            position_decay: 0.15,
            dwell_base: 4.0,
            dwell_shape: 4.0,
            p_max: 0.97,
            leave_bias: 1.0,
            quality_weight: 3.0,
            ad_weight: 2.0,
            slot_decay: 0.6,
            fatigue: 0.1,
            size_factors: [0.6, 0.8, 1.0, 0.8],
            reserve_price: 0.0,
            revenue_convention: RevenueConvention::ExpectedPerClick,
        }
    }
}

impl EnvConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.k == 0 {
            bad.push("k must be >= 1".to_string());
        }
        if self.rec_pool < self.k {
            bad.push(format!(
                "rec_pool {} is smaller than k {}",
                self.rec_pool, self.k
            ));
        }
        if self.ad_pool == 0 {
            bad.push("ad_pool must be >= 1".into());
        }
        if self.t_max == 0 {
            bad.push("t_max must be >= 1".into());
        }
        if self.history_cap == 0 {
            bad.push("history_cap must be >= 1".into());
        }
        if self.population_weights.iter().any(|w| !(*w > 0.0)) {
            bad.push("population_weights must be positive".into());
        }
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            bad.push(format!("p_max must lie in (0, 1], got {}", self.p_max));
        }
        if !(0.0..=1.0).contains(&self.slot_decay) {
            bad.push("slot_decay must lie in [0, 1]".into());
        }
        for (name, v) in [
            ("weight_concentration", self.weight_concentration),
            ("dwell_shape", self.dwell_shape),
            ("ad_tolerance.0", self.ad_tolerance.0),
            ("ad_tolerance.1", self.ad_tolerance.1),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be positive and finite"));
            }
        }
        for (name, v) in [
            ("dwell_base", self.dwell_base),
            ("ad_weight", self.ad_weight),
            ("fatigue", self.fatigue),
            ("position_decay", self.position_decay),
            ("reserve_price", self.reserve_price),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be non-negative and finite"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(RamError::Config(bad.join("; ")))
        }
    }

    /// Position weights of a rec-list, normalized to sum to 1.
    pub fn position_weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.k)
            .map(|j| 1.0 / (1.0 + self.position_decay * j as f64))
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    pub fn slot_factor(&self, head: usize) -> f64 {
        1.0 - self.slot_decay * (head.saturating_sub(1)) as f64 / self.k as f64
    }

    pub fn size_factor(&self, size: ImageSize) -> f64 {
        self.size_factors[size.index()]
    }

    pub fn revenue_settings(&self) -> RevenueSettings {
        RevenueSettings {
            convention: self.revenue_convention,
            reserve: self.reserve_price,
        }
    }
}

/// Hidden per-session user.
#[derive(Clone, Debug, PartialEq)]
pub struct UserModel {
    /// Preference over the five item scores; non-negative, sums to 1.
    pub weights: [f64; 5],
    pub ad_tolerance: f64,
    pub context: Context,
}

impl UserModel {
    pub fn sample<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Result<Self> {
        let alpha = cfg.population_weights.map(|w| w * cfg.weight_concentration);
        let dir = Dirichlet::new(alpha)
            .map_err(|e| RamError::Config(format!("population weights: {e}")))?;
        let weights = dir.sample(rng);
        let beta = Beta::new(cfg.ad_tolerance.0, cfg.ad_tolerance.1)
            .map_err(|e| RamError::Config(format!("ad tolerance: {e}")))?;
        let ad_tolerance = beta.sample(rng);
        let context = Context::new(
            rng.random_range(0..5),
            rng.random_range(0..2),
            rng.random_range(0..2),
            0,
        )?;
        Ok(UserModel {
            weights,
            ad_tolerance,
            context,
        })
    }

    pub fn item_match(&self, item: &RegularItem) -> f64 {
        self.weights
            .iter()
            .zip(item.scores())
            .map(|(w, s)| w * s)
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    pub fn ad_affinity(&self, ad: &AdItem) -> f64 {
        (self.ad_tolerance * ad.predicted_recall).clamp(0.0, 1.0)
    }
}

/// Position-weighted match of a rec-list.
pub fn list_match(
    cfg: &EnvConfig,
    catalog: &Catalog,
    user: &UserModel,
    list: &[ItemId],
) -> Result<f64> {
    let pw = cfg.position_weights();
    let mut m = 0.0;
    for (w, &id) in pw.iter().zip(list) {
        m += w * user.item_match(catalog.item(id)?);
    }
    Ok(m)
}

/// Closed-form response model for one hybrid list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResponseModel {
    pub expected_dwell: f64,
    pub continue_probability: f64,
    /// Price the advertiser pays on a click (0 without an ad).
    pub price: f64,
    pub click_probability: f64,
}

impl ResponseModel {
    pub fn expected_revenue(&self) -> f64 {
        self.price * self.click_probability
    }
}

#[allow(clippy::too_many_arguments)]
pub fn response_model(
    cfg: &EnvConfig,
    catalog: &Catalog,
    user: &UserModel,
    ads_seen: usize,
    list: &[ItemId],
    decision: AdDecision,
    ad_candidates: &[AdId],
) -> Result<ResponseModel> {
    let m = list_match(cfg, catalog, user, list)?;
    let full = cfg.leave_bias + cfg.quality_weight;
    let mut z = cfg.leave_bias + cfg.quality_weight * m;
    let (mut price, mut click) = (0.0, 0.0);
    if let AdDecision::Insert { ad, head } = decision {
        let item = catalog.ad(ad)?;
        let intrusiveness = cfg.size_factor(item.image_size)
            * cfg.slot_factor(head)
            * (1.0 + cfg.fatigue * ads_seen as f64);
        z -= cfg.ad_weight * (1.0 - user.ad_affinity(item)) * intrusiveness;
        let bids = ad_candidates
            .iter()
            .map(|&a| catalog.ad(a).map(|x| x.bid_price))
            .collect::<Result<Vec<_>>>()?;
        let i = ad_candidates
            .iter()
            .position(|&a| a == ad)
            .ok_or_else(|| RamError::Input(format!("ad {} is not among the candidates", ad.0)))?;
        price = price_if_selected(&bids, i, cfg.reserve_price);
        click = item.predicted_ctr.clamp(0.0, 1.0);
    }
    Ok(ResponseModel {
        expected_dwell: cfg.dwell_base * m,
        continue_probability: (cfg.p_max * sigmoid(z) / sigmoid(full)).clamp(0.0, cfg.p_max),
        price,
        click_probability: click,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Response {
    pub dwell: f64,
    pub cont: bool,
    pub revenue: f64,
    pub model: ResponseModel,
}

/// Draws dwell, continue and revenue for one hybrid list.
#[allow(clippy::too_many_arguments)]
pub fn simulate_response<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    catalog: &Catalog,
    user: &UserModel,
    ads_seen: usize,
    list: &[ItemId],
    decision: AdDecision,
    ad_candidates: &[AdId],
    rng: &mut R,
) -> Result<Response> {
    let model = response_model(cfg, catalog, user, ads_seen, list, decision, ad_candidates)?;
    let g = Gamma::new(cfg.dwell_shape, 1.0 / cfg.dwell_shape)
        .map_err(|e| RamError::Config(format!("dwell shape: {e}")))?;
    let dwell = model.expected_dwell * g.sample(rng);
    let cont = rng.random::<f64>() < model.continue_probability;
    let clicked = rng.random::<f64>() < model.click_probability;
    let revenue = if decision.is_insert() && clicked {
        model.price
    } else {
        0.0
    };
    Ok(Response {
        dwell,
        cont,
        revenue,
        model,
    })
}

/// Preference-biased candidate pools: Gumbel-top-n over `temperature · affinity`,
/// returned sorted by id. Items in `exclude` are never recalled.
pub fn recall_candidates<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    catalog: &Catalog,
    user: &UserModel,
    exclude: &HashSet<ItemId>,
    rng: &mut R,
) -> Result<(Vec<ItemId>, Vec<AdId>)> {
    let gumbel = Gumbel::new(0.0, 1.0).expect("standard gumbel");
    let mut keyed: Vec<(f64, ItemId)> = catalog
        .items()
        .iter()
        .filter(|it| !exclude.contains(&it.id))
        .map(|it| {
            (
                cfg.recall_temperature * user.item_match(it) + gumbel.sample(rng),
                it.id,
            )
        })
        .collect();
    if keyed.len() < cfg.rec_pool {
        return Err(RamError::Config(format!(
            "only {} unseen items left for a pool of {}",
            keyed.len(),
            cfg.rec_pool
        )));
    }
    if catalog.ads().len() < cfg.ad_pool {
        return Err(RamError::Config(format!(
            "catalog has {} ads for a pool of {}",
            catalog.ads().len(),
            cfg.ad_pool
        )));
    }
    let mut ads: Vec<(f64, AdId)> = catalog
        .ads()
        .iter()
        .map(|ad| {
            (
                cfg.ad_recall_temperature * user.ad_affinity(ad) + gumbel.sample(rng),
                ad.id,
            )
        })
        .collect();
    keep_top(&mut keyed, cfg.rec_pool);
    keep_top(&mut ads, cfg.ad_pool);
    let mut items: Vec<ItemId> = keyed.into_iter().map(|(_, id)| id).collect();
    let mut ads: Vec<AdId> = ads.into_iter().map(|(_, id)| id).collect();
    items.sort_unstable();
    ads.sort_unstable();
    Ok((items, ads))
}

fn keep_top<T>(v: &mut Vec<(f64, T)>, n: usize) {
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v.truncate(n);
}

/// What a policy sees at one request.
#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub t: usize,
    pub state: RawState,
    pub rec_candidates: Vec<ItemId>,
    pub ad_candidates: Vec<AdId>,
}

/// A policy for the hybrid list. `rng` is the session's policy stream.
pub trait Policy {
    fn decide(
        &mut self,
        env: &Environment,
        req: &Request,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<ItemId>, AdDecision)>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub request: Request,
    pub rec_list: Vec<ItemId>,
    pub decision: AdDecision,
    pub response: Response,
    pub terminal: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SessionTrace {
    pub index: u64,
    pub steps: Vec<Step>,
}

/// Catalog plus response model.
#[derive(Clone, Debug)]
pub struct Environment {
    pub config: EnvConfig,
    pub catalog: Catalog,
}

impl Environment {
    pub fn new(config: EnvConfig, catalog: Catalog) -> Result<Self> {
        config.validate()?;
        let needed = config.rec_pool + (config.warmup + config.t_max) * config.k;
        if catalog.items().len() < needed {
            return Err(RamError::Config(format!(
                "catalog has {} items; sessions of {} requests need at least {needed}",
                catalog.items().len(),
                config.warmup + config.t_max
            )));
        }
        if catalog.ads().len() < config.ad_pool {
            return Err(RamError::Config(format!(
                "catalog has {} ads for a pool of {}",
                catalog.ads().len(),
                config.ad_pool
            )));
        }
        Ok(Environment { config, catalog })
    }

    /// Starts session `index` of the run seeded by `seed`. The user, the
    /// environment draws and the policy draws use separate ChaCha streams so
    /// that different policies face the same users.
    pub fn start_session(
        &self,
        seed: u64,
        index: u64,
        warmup_policy: &mut dyn Policy,
    ) -> Result<Session<'_>> {
        let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
        env_rng.set_stream(2 * index);
        let mut policy_rng = ChaCha8Rng::seed_from_u64(seed);
        policy_rng.set_stream(2 * index + 1);
        let user = UserModel::sample(&self.config, &mut env_rng)?;
        let mut s = Session {
            env: self,
            user,
            history: BrowsingHistory::new(self.config.history_cap),
            shown: HashSet::new(),
            ads_seen: 0,
            t: 0,
            pending: None,
            done: false,
            env_rng,
            policy_rng,
        };
        for _ in 0..self.config.warmup {
            let req = s.draw_request()?;
            let (list, decision) = warmup_policy.decide(self, &req, &mut s.policy_rng)?;
            s.check_action(&req, &list, decision)?;
            s.advance(&list, decision);
        }
        Ok(s)
    }

    /// Runs one session to its end.
    pub fn run_session(
        &self,
        seed: u64,
        index: u64,
        policy: &mut dyn Policy,
        behavior: &mut dyn Policy,
    ) -> Result<SessionTrace> {
        let mut s = self.start_session(seed, index, behavior)?;
        let mut trace = SessionTrace {
            index,
            steps: Vec::new(),
        };
        while !s.done() {
            let req = s.request()?;
            let (list, decision) = policy.decide(self, &req, &mut s.policy_rng)?;
            let (response, terminal) = s.step(&list, decision)?;
            trace.steps.push(Step {
                request: req,
                rec_list: list,
                decision,
                response,
                terminal,
            });
        }
        Ok(trace)
    }
}

pub struct Session<'e> {
    env: &'e Environment,
    pub user: UserModel,
    history: BrowsingHistory,
    shown: HashSet<ItemId>,
    ads_seen: usize,
    t: usize,
    pending: Option<Request>,
    done: bool,
    env_rng: ChaCha8Rng,
    pub policy_rng: ChaCha8Rng,
}

impl Session<'_> {
    pub fn done(&self) -> bool {
        self.done
    }

    pub fn ads_seen(&self) -> usize {
        self.ads_seen
    }

    fn draw_request(&mut self) -> Result<Request> {
        let cfg = &self.env.config;
        let (rec_candidates, ad_candidates) = recall_candidates(
            cfg,
            &self.env.catalog,
            &self.user,
            &self.shown,
            &mut self.env_rng,
        )?;
        let mut context = self.user.context;
        context.phase = Context::phase_of(self.t, cfg.t_max);
        Ok(Request {
            t: self.t,
            state: RawState {
                history: self.history.clone(),
                context,
            },
            rec_candidates,
            ad_candidates,
        })
    }

    /// The current request; repeated calls return the same request until
    /// [`Session::step`] consumes it.
    pub fn request(&mut self) -> Result<Request> {
        if self.done {
            return Err(RamError::Usage("session already ended".into()));
        }
        if self.pending.is_none() {
            self.pending = Some(self.draw_request()?);
        }
        Ok(self.pending.clone().expect("just set"))
    }

    fn check_action(&self, req: &Request, list: &[ItemId], decision: AdDecision) -> Result<()> {
        let k = self.env.config.k;
        if list.len() != k {
            return Err(RamError::Input(format!(
                "rec-list has {} items, expected {k}",
                list.len()
            )));
        }
        let uniq: HashSet<_> = list.iter().collect();
        if uniq.len() != k || list.iter().any(|id| !req.rec_candidates.contains(id)) {
            return Err(RamError::Input(
                "rec-list must be distinct candidates".into(),
            ));
        }
        if let AdDecision::Insert { ad, head } = decision {
            if !req.ad_candidates.contains(&ad) {
                return Err(RamError::Input(format!(
                    "ad {} is not among the candidates",
                    ad.0
                )));
            }
            if head == 0 || head > k + 1 {
                return Err(RamError::Input(format!(
                    "insert head {head} outside 1..={}",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    fn advance(&mut self, list: &[ItemId], decision: AdDecision) {
        self.history = self.history.transition(list, decision.ad());
        self.shown.extend(list.iter().copied());
        if decision.is_insert() {
            self.ads_seen += 1;
        }
    }

    /// Executes the hybrid list; returns the response and whether the
    /// session ended (user left or the request cap was reached).
    pub fn step(&mut self, list: &[ItemId], decision: AdDecision) -> Result<(Response, bool)> {
        let req = self.request()?;
        self.check_action(&req, list, decision)?;
        let env = self.env;
        let resp = simulate_response(
            &env.config,
            &env.catalog,
            &self.user,
            self.ads_seen,
            list,
            decision,
            &req.ad_candidates,
            &mut self.env_rng,
        )?;
        self.advance(list, decision);
        self.pending = None;
        self.t += 1;
        let terminal = !resp.cont || self.t >= env.config.t_max;
        self.done = terminal;
        Ok((resp, terminal))
    }
}

impl Step {
    pub fn to_record(&self, session: u64) -> SessionLogRecord {
        let (ad_id, ad_slot) = self.decision.to_log();
        SessionLogRecord {
            session,
            t: self.request.t as u32,
            rec_history: self.request.state.history.rec_ids(),
            ad_history: self.request.state.history.ad_ids(),
            context: self.request.state.context,
            rec_candidates: self.request.rec_candidates.clone(),
            ad_candidates: self.request.ad_candidates.clone(),
            rec_list: self.rec_list.clone(),
            ad_id,
            ad_slot,
            r_rs: self.response.dwell,
            r_as: self.response.cont as u8,
            revenue: self.response.revenue,
            terminal: self.terminal,
        }
    }
}

/// `sessions` behavior-policy sessions, indices `0..sessions`, as log records.
pub fn generate_log(
    env: &Environment,
    behavior: &BehaviorPolicy,
    sessions: u64,
    seed: u64,
) -> Result<Vec<SessionLogRecord>> {
    let mut out = Vec::new();
    for index in 0..sessions {
        let mut policy = behavior.clone();
        let mut warm = behavior.clone();
        let trace = env.run_session(seed, index, &mut policy, &mut warm)?;
        out.extend(trace.steps.iter().map(|s| s.to_record(index)));
    }
    Ok(out)
}
