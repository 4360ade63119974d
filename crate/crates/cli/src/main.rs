use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ram_cli::commands::format_table;
use ram_cli::{CliError, PolicyKind, Result, RunConfig, SweepParam};
use ram_core::auction::BiddingRule;

#[derive(Parser)]
#[command(
    name = "ram",
    version,
    about = "Two-level recommendation + ad insertion agents"
)]
struct Cli {
    /// Relative output directories are resolved against this root.
    #[arg(long, env = "RAM_OUTPUT_ROOT", global = true)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults are used for absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    RamL,
    RamN,
}

#[derive(Args)]
struct RuleArgs {
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
    /// RAM-l revenue weight (implies --rule ram-l).
    #[arg(long)]
    alpha: Option<f64>,
    /// RAM-n candidate count (implies --rule ram-n).
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a catalog and a behavior-policy session log.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sessions: Option<u64>,
    },
    /// Off-policy training on a generated log.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Checkpoint directory to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Online test: mean ± std of R_rs, R_as, R_rev.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long)]
        sessions: Option<u64>,
        #[command(flatten)]
        rule: RuleArgs,
    },
    /// Evaluate a trained checkpoint over several alpha or N values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        param: Option<ParamArg>,
        /// Comma-separated values, e.g. 0,0.5,1,2.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        sessions: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Ram,
    Random,
    Greedy,
    Behavior,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    Alpha,
    N,
}

fn apply_rule(cfg: &mut RunConfig, r: &RuleArgs) -> Result<()> {
    let current = cfg.train.rule;
    let kind = match (r.rule, r.alpha, r.n) {
        (Some(k), _, _) => k,
        (None, Some(_), None) => RuleArg::RamL,
        (None, None, Some(_)) => RuleArg::RamN,
        (None, Some(_), Some(_)) => {
            return Err(CliError::Config(
                "--alpha and --n need an explicit --rule".into(),
            ))
        }
        (None, None, None) => return Ok(()),
    };
    cfg.train.rule = match kind {
        RuleArg::RamL => BiddingRule::RamL {
            alpha: r.alpha.unwrap_or(match current {
                BiddingRule::RamL { alpha } => alpha,
                _ => 0.5,
            }),
        },
        RuleArg::RamN => BiddingRule::RamN {
            n: r.n.unwrap_or(match current {
                BiddingRule::RamN { n } => n,
                _ => 2,
            }),
        },
    };
    Ok(())
}

fn resolve(root: &Option<PathBuf>, p: &Path) -> PathBuf {
    match root {
        Some(r) if p.is_relative() => r.join(p),
        _ => p.to_path_buf(),
    }
}

fn run(cli: Cli) -> Result<()> {
    let root = &cli.output_root;
    match cli.command {
        Command::GenData { common, sessions } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.data.seed = s;
            }
            if let Some(s) = sessions {
                cfg.data.sessions = s;
            }
            let out = resolve(root, &common.out);
            let s = ram_cli::gen_data(&cfg, &out)?;
            println!(
                "wrote {}: {} sessions, {} lists, mean length {:.3}, ad fraction {:.4}, mean dwell per list {:.3}",
                out.display(),
                s.sessions,
                s.records,
                s.mean_length,
                s.ad_fraction,
                s.mean_dwell_per_list
            );
        }
        Command::Train {
            common,
            data,
            rule,
            gamma,
            epochs,
            resume,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            if let Some(g) = gamma {
                cfg.train.gamma = g;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            apply_rule(&mut cfg, &rule)?;
            let out = resolve(root, &common.out);
            let rep = ram_cli::train(&cfg, &data, &out, resume.as_deref())?;
            for e in &rep.epochs {
                println!(
                    "epoch {} updates {} loss_rs {:.5} loss_as {:.5}",
                    e.epoch, e.updates, e.loss_rs, e.loss_as
                );
            }
            println!(
                "{} updates, {} target syncs; checkpoint in {}",
                rep.updates,
                rep.target_syncs,
                out.display()
            );
        }
        Command::Eval {
            common,
            data,
            checkpoint,
            policy,
            sessions,
            rule,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.eval.seed = s;
            }
            if let Some(s) = sessions {
                cfg.eval.sessions = s;
            }
            if let Some(p) = policy {
                cfg.eval.policy = match p {
                    PolicyArg::Ram => PolicyKind::Ram,
                    PolicyArg::Random => PolicyKind::Random,
                    PolicyArg::Greedy => PolicyKind::Greedy,
                    PolicyArg::Behavior => PolicyKind::Behavior,
                };
            }
            apply_rule(&mut cfg, &rule)?;
            let out = resolve(root, &common.out);
            let row = ram_cli::eval(&cfg, &data, checkpoint.as_deref(), &out)?;
            print!("{}", format_table(&[row]));
        }
        Command::Sweep {
            common,
            data,
            checkpoint,
            param,
            values,
            sessions,
        } => {
            let mut cfg = RunConfig::load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.eval.seed = s;
            }
            if let Some(s) = sessions {
                cfg.eval.sessions = s;
            }
            if let Some(p) = param {
                cfg.sweep.parameter = match p {
                    ParamArg::Alpha => SweepParam::Alpha,
                    ParamArg::N => SweepParam::N,
                };
            }
            if let Some(v) = values {
                cfg.sweep.values = v;
            }
            let out = resolve(root, &common.out);
            let rows = ram_cli::sweep(&cfg, &data, Some(&checkpoint), &out)?;
            print!("{}", format_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ram: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
