use std::fs;
use std::io::Write;
use std::path::Path;

use ram_core::auction::BiddingRule;
use ram_core::domain::{read_log, write_log, Catalog, SessionLogRecord};
use ram_core::env::{generate_catalog, generate_log, Environment};
use ram_core::trainer::{
    run_online_test, summarize, train_offpolicy, transitions_from_log, GreedyPolicy, RamAgents,
    RamPolicy, RandomPolicy, Summary, TrainReport,
};
use ram_core::RamError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{PolicyKind, RunConfig, SweepParam};
use crate::error::{reading, CliError, Result};

pub const LOG_FILE: &str = "sessions.jsonl";
pub const CURVE_FILE: &str = "curve.jsonl";
pub const EPOCHS_FILE: &str = "epochs.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const METRICS_FILE: &str = "metrics.json";
pub const METRICS_TABLE: &str = "metrics.txt";
pub const SWEEP_FILE: &str = "sweep.jsonl";
pub const SWEEP_TABLE: &str = "sweep.txt";

/// Statistics printed after data generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub sessions: u64,
    pub records: usize,
    pub mean_length: f64,
    pub ad_fraction: f64,
    pub mean_dwell_per_list: f64,
}

impl DataSummary {
    pub fn of(log: &[SessionLogRecord], sessions: u64) -> Self {
        let n = log.len().max(1) as f64;
        DataSummary {
            sessions,
            records: log.len(),
            mean_length: log.len() as f64 / sessions.max(1) as f64,
            ad_fraction: log.iter().filter(|r| r.ad_id >= 0).count() as f64 / n,
            mean_dwell_per_list: log.iter().map(|r| r.r_rs).sum::<f64>() / n,
        }
    }
}

/// One line of an evaluation or sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub policy: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub parameter: Option<SweepParam>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value: Option<f64>,
    #[serde(flatten)]
    pub summary: Summary,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Runtime(format!(
            "cannot create output directory {}: {e}",
            dir.display()
        ))
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).expect("records always serialize");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    f.write_all(&out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Log seed derived from the data seed, so the catalog and the sessions do
/// not share a random stream.
pub fn log_seed(data_seed: u64) -> u64 {
    data_seed.wrapping_add(1)
}

/// Catalog, behavior log and snapshot into `out`.
pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<DataSummary> {
    cfg.validate()?;
    ensure_dir(out)?;
    let catalog = generate_catalog(&cfg.catalog, &cfg.schema, cfg.data.seed)?;
    let env = Environment::new(cfg.env.clone(), catalog)?;
    let log = generate_log(
        &env,
        &cfg.behavior,
        cfg.data.sessions,
        log_seed(cfg.data.seed),
    )
    .map_err(runtime)?;
    env.catalog.write_csv(out)?;
    write_log(&out.join(LOG_FILE), &log)?;
    cfg.write_snapshot(out)?;
    Ok(DataSummary::of(&log, cfg.data.sessions))
}

fn runtime(e: RamError) -> CliError {
    match e {
        RamError::Config(_) => CliError::Config(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    }
}

pub fn load_environment(cfg: &RunConfig, data: &Path) -> Result<Environment> {
    let catalog = Catalog::read_csv(data, cfg.schema.clone()).map_err(reading)?;
    Ok(Environment::new(cfg.env.clone(), catalog)?)
}

/// Trains both levels on the log in `data`; writes checkpoints, the loss
/// curve and per-epoch summaries into `out`.
pub fn train(
    cfg: &RunConfig,
    data: &Path,
    out: &Path,
    resume: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let env = load_environment(cfg, data)?;
    let log = read_log(&data.join(LOG_FILE)).map_err(reading)?;
    let transitions =
        transitions_from_log(&log, env.config.k, env.config.history_cap).map_err(reading)?;
    let mut agents = RamAgents::new(&env.catalog, env.config.k, &cfg.train);
    if let Some(dir) = resume {
        agents.load(dir).map_err(reading)?;
    }
    ensure_dir(out)?;
    let report = train_offpolicy(
        &mut agents,
        &env.catalog,
        &transitions,
        &cfg.train,
        &env.config.revenue_settings(),
        None,
    )
    .map_err(runtime)?;
    agents.save(&out.join(CHECKPOINT_DIR))?;
    write_jsonl(&out.join(CURVE_FILE), &report.curve)?;
    write_jsonl(&out.join(EPOCHS_FILE), &report.epochs)?;
    cfg.write_snapshot(out)?;
    Ok(report)
}

fn load_agents(cfg: &RunConfig, env: &Environment, checkpoint: Option<&Path>) -> Result<RamAgents> {
    let dir = checkpoint
        .ok_or_else(|| CliError::Config("the ram policy needs a checkpoint directory".into()))?;
    let mut agents = RamAgents::new(&env.catalog, env.config.k, &cfg.train);
    agents.load(dir).map_err(reading)?;
    Ok(agents)
}

fn evaluate(
    cfg: &RunConfig,
    env: &Environment,
    agents: Option<&RamAgents>,
    rule: BiddingRule,
) -> Result<(String, Summary)> {
    let mut warm = cfg.behavior.clone();
    let revenue = env.config.revenue_settings();
    let (label, metrics) = match (cfg.eval.policy, agents) {
        (PolicyKind::Ram, Some(agents)) => {
            let mut p = RamPolicy {
                agents,
                rule,
                revenue,
            };
            (
                rule.label(),
                run_online_test(env, &mut p, &mut warm, cfg.eval.sessions, cfg.eval.seed),
            )
        }
        (PolicyKind::Ram, None) => {
            return Err(CliError::Config(
                "the ram policy needs a checkpoint directory".into(),
            ))
        }
        (PolicyKind::Random, _) => (
            "random".into(),
            run_online_test(
                env,
                &mut RandomPolicy,
                &mut warm,
                cfg.eval.sessions,
                cfg.eval.seed,
            ),
        ),
        (PolicyKind::Greedy, _) => {
            let mut p = GreedyPolicy { revenue };
            (
                "greedy".into(),
                run_online_test(env, &mut p, &mut warm, cfg.eval.sessions, cfg.eval.seed),
            )
        }
        (PolicyKind::Behavior, _) => {
            let mut p = cfg.behavior.clone();
            (
                "behavior".into(),
                run_online_test(env, &mut p, &mut warm, cfg.eval.sessions, cfg.eval.seed),
            )
        }
    };
    Ok((label, summarize(&metrics.map_err(runtime)?)))
}

/// Mean ± std of the three session metrics for the configured policy.
pub fn eval(
    cfg: &RunConfig,
    data: &Path,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<EvalRow> {
    cfg.validate()?;
    let env = load_environment(cfg, data)?;
    let agents = match cfg.eval.policy {
        PolicyKind::Ram => Some(load_agents(cfg, &env, checkpoint)?),
        _ => None,
    };
    let (policy, summary) = evaluate(cfg, &env, agents.as_ref(), cfg.train.rule)?;
    let row = EvalRow {
        policy,
        parameter: None,
        value: None,
        summary,
    };
    ensure_dir(out)?;
    write_text(
        &out.join(METRICS_FILE),
        &(serde_json::to_string_pretty(&row).expect("rows always serialize") + "\n"),
    )?;
    write_text(
        &out.join(METRICS_TABLE),
        &format_table(std::slice::from_ref(&row)),
    )?;
    cfg.write_snapshot(out)?;
    Ok(row)
}

/// One evaluation per sweep value of α or N; values run in parallel.
pub fn sweep(
    cfg: &RunConfig,
    data: &Path,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<Vec<EvalRow>> {
    cfg.validate()?;
    if cfg.eval.policy != PolicyKind::Ram {
        return Err(CliError::Config("sweeps evaluate the ram policy".into()));
    }
    if cfg.sweep.values.is_empty() {
        return Err(CliError::Config("sweep.values is empty".into()));
    }
    let rules = cfg
        .sweep
        .values
        .iter()
        .map(|&v| cfg.sweep.parameter.rule(v))
        .collect::<Result<Vec<_>>>()?;
    let env = load_environment(cfg, data)?;
    let agents = load_agents(cfg, &env, checkpoint)?;
    let rows = rules
        .par_iter()
        .zip(&cfg.sweep.values)
        .map(|(&rule, &value)| {
            let (policy, summary) = evaluate(cfg, &env, Some(&agents), rule)?;
            Ok(EvalRow {
                policy,
                parameter: Some(cfg.sweep.parameter),
                value: Some(value),
                summary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ensure_dir(out)?;
    write_jsonl(&out.join(SWEEP_FILE), &rows)?;
    write_text(&out.join(SWEEP_TABLE), &format_table(&rows))?;
    cfg.write_snapshot(out)?;
    Ok(rows)
}

/// Human-readable table: one row per policy, `mean ± std` per metric.
pub fn format_table(rows: &[EvalRow]) -> String {
    let cell = |m: &ram_core::trainer::MetricSummary| format!("{:.3} ± {:.3}", m.mean, m.std);
    let mut out = format!(
        "{:<22} {:>20} {:>20} {:>20} {:>9}\n",
        "policy", "R_rs", "R_as", "R_rev", "sessions"
    );
    for r in rows {
        out += &format!(
            "{:<22} {:>20} {:>20} {:>20} {:>9}\n",
            r.policy,
            cell(&r.summary.r_rs),
            cell(&r.summary.r_as),
            cell(&r.summary.r_rev),
            r.summary.sessions
        );
    }
    out
}
