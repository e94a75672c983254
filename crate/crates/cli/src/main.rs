mod commands;
mod opts;
mod output;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use opts::{resolve_system, Cli, Command, Resolved, RunConfig};

fn workers(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("DYNLAB_WORKERS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("invalid input `workers`: DYNLAB_WORKERS=`{v}`"))?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let common = cli.common.or(cfg.run.clone());
    if let Some(n) = workers(common.workers)? {
        if n == 0 {
            anyhow::bail!("invalid input `workers`: must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let r = Resolved::from(&common);
    let system = || resolve_system(r.system.as_deref(), cfg.system_def.as_ref());
    let outcome = match cli.command {
        Command::Systems => commands::systems()?,
        Command::Entropy(o) => commands::entropy(&system()?, &r, &o.or(cfg.entropy.clone()))?,
        Command::Gamma(o) => commands::gamma(&system()?, &r, &o.or(cfg.gamma.clone()))?,
        Command::TailEntropy => commands::tail(&system()?, &r)?,
        Command::Domination(o) => {
            commands::domination(&system()?, &r, &o.or(cfg.domination.clone()))?
        }
        Command::Pliss(o) => {
            let o = o.or(cfg.pliss.clone());
            let sys = if o.input.is_some() {
                None
            } else {
                Some(system()?)
            };
            commands::pliss(sys.as_ref(), &r, &o)?
        }
        Command::Curve(o) => commands::curve(&system()?, &r, &o.or(cfg.curve.clone()))?,
        Command::VerifyTheorem(o) => {
            commands::verify_theorem(&system()?, &r, &o.or(cfg.curve.clone()))?
        }
    };
    outcome.emit(common.out.as_deref())?;
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
