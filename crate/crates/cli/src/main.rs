use std::path::PathBuf;
use std::process::ExitCode;

use addnet_cli::config::RunConfig;
use addnet_cli::output::{resolve_out, OutDir};
use addnet_cli::{commands, CliError, Result};
use clap::{Parser, Subcommand};

/// Transport-equation demos and adaptive-diffusion network experiments.
#[derive(Debug, Parser)]
#[command(name = "addnet", version)]
struct Cli {
    /// TOML run config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default `$ADDNET_OUT/<command>` or `runs/<command>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Checkpoint file, or a directory of checkpoints for `coverage`.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the 2-D transport equation for a diffusion ladder and probe smoothness.
    TeDemo,
    /// Train a network and write its checkpoint and epoch log.
    Train,
    /// Score a checkpoint on clean and corrupted test data.
    Eval,
    /// Fixed-diffusion ladder versus adaptive diffusion across corruptions.
    Sweep,
    /// Distance-σ coverage along a checkpoint trail.
    Coverage,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TeDemo => "te-demo",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Sweep => "sweep",
            Command::Coverage => "coverage",
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let (mut cfg, src) = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Config)?,
        None => (RunConfig::default(), String::new()),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let res = cfg.validate(&src).map_err(CliError::Config)?;
    let checkpoint = || {
        cli.checkpoint
            .clone()
            .ok_or_else(|| CliError::config("--checkpoint", "required for this command"))
    };
    let needs_checkpoint = matches!(cli.command, Command::Eval | Command::Coverage);
    let ck = if needs_checkpoint { Some(checkpoint()?) } else { None };
    if let Some(p) = &ck {
        if !p.exists() {
            return Err(CliError::config("--checkpoint", format!("{} does not exist", p.display())));
        }
    }
    let out = OutDir::create(resolve_out(cli.out.as_deref(), cli.command.name()))?;
    match cli.command {
        Command::TeDemo => {
            for v in commands::te_demo(&cfg, &out)? {
                println!("{:>12}  sup {:.6}  mean {:.6}", v.label, v.modulus.sup, v.modulus.mean);
            }
        }
        Command::Train => {
            let s = commands::train(&cfg, &res, &out)?;
            if let Some(a) = s.final_train_acc {
                println!("final train accuracy {a:.4}");
            }
        }
        Command::Eval => {
            for r in commands::eval(&cfg, &res, &out, ck.as_deref().expect("checked"))? {
                match &r.report {
                    Some(m) => println!(
                        "E={:<3} clean {:.4}  corrupted {:.4}  mCE {:.2}  rmCE {:.2}",
                        r.ensemble, r.clean_accuracy, m.accuracy, m.mce.value, m.rmce.value
                    ),
                    None => println!("E={:<3} clean {:.4}", r.ensemble, r.clean_accuracy),
                }
            }
        }
        Command::Sweep => {
            let s = commands::sweep(&cfg, &res, &out)?;
            println!(
                "distinct best fixed scales {}, adaptive margin {:+.4}: dilemma {}",
                s.dilemma.distinct_winners(),
                s.dilemma.adaptive_margin(),
                if s.holds { "holds" } else { "absent" }
            );
        }
        Command::Coverage => {
            let r = commands::coverage(&cfg, &res, &out, ck.as_deref().expect("checked"))?;
            for p in r.probes() {
                if let Some((a, b)) = r.quartile_trend(&p) {
                    println!("{p:>14}  first quartile {a:.4}  last quartile {b:.4}");
                }
            }
        }
    }
    println!("wrote {}", out.path().display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
