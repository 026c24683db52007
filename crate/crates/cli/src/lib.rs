//! Command-line runner for the csl-turb simulations.
//!
//! Every subcommand resolves its configuration, computes all outputs in
//! memory, then writes them with atomic renames into
//! `<out>/<command>-<run_id>/` followed by `manifest.json`.

pub mod commands;
pub mod csv;
pub mod manifest;
pub mod settings;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::Outcome;
use crate::manifest::{run_id, unix_time, write_run, RunManifest, VERSION};
use crate::settings::{KeyTable, Settings, Sources};

#[derive(Debug, Parser)]
#[command(
    name = "csl-turb",
    version,
    about = "Collapse-noise tracer, beable and Burgers simulations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = true)]
pub struct Source {
    /// Parameter preset: grw_micro or grw_macro.
    #[arg(long)]
    pub preset: Option<String>,
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Common {
    #[command(flatten)]
    pub source: Source,
    /// Directory receiving the per-run output directories.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Master seed, decimal or 0x-prefixed hex.
    #[arg(long)]
    pub seed: Option<String>,
    /// Override one configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derived dictionary quantities.
    Params(Common),
    /// Tracer ensemble moments and sample paths.
    Simulate(Common),
    /// Lattice beable walkers against the free packet.
    Beable(Common),
    /// Stochastically forced Burgers run, or the Hopf-Cole refinement study.
    Burgers {
        #[command(flatten)]
        common: Common,
        /// Run the deterministic Burgers vs heat-equation refinement study.
        #[arg(long)]
        deterministic_hopfcole: bool,
    },
    /// Analytic moment solution, optionally against a tracer ensemble.
    Fpe {
        #[command(flatten)]
        common: Common,
        /// Also run the ensemble and report z-scores.
        #[arg(long)]
        compare: bool,
    },
    /// Scaling exponents of the momentum and position variances.
    Scaling {
        #[command(flatten)]
        common: Common,
        /// Fractional noise exponent.
        #[arg(long = "A", value_name = "A")]
        a: Option<f64>,
    },
}

/// Result of one invocation.
#[derive(Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub summary: Vec<String>,
}

fn sources(common: &Common, flags: Vec<(String, String)>) -> Result<Sources> {
    let config_text = match &common.source.config {
        Some(p) => {
            Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
        }
        None => None,
    };
    Ok(Sources {
        config_text,
        preset: common.source.preset.clone(),
        overrides: common.overrides.clone(),
        seed: common.seed.clone(),
        flags,
    })
}

type Body<'a> = Box<dyn FnOnce(&mut Settings, &csl_turb::CslParameters) -> Result<Outcome> + 'a>;

/// Executes a parsed command line and writes its outputs.
pub fn run(cli: Cli) -> Result<RunReport> {
    let (name, common, keys, flags, setting_flags, body): (
        &str,
        &Common,
        KeyTable,
        Vec<String>,
        _,
        Body,
    ) = match &cli.command {
        Command::Params(c) => (
            "params",
            c,
            commands::PARAMS_KEYS,
            vec![],
            vec![],
            Box::new(commands::params),
        ),
        Command::Simulate(c) => (
            "simulate",
            c,
            commands::SIMULATE_KEYS,
            vec![],
            vec![],
            Box::new(commands::simulate),
        ),
        Command::Beable(c) => (
            "beable",
            c,
            commands::BEABLE_KEYS,
            vec![],
            vec![],
            Box::new(commands::beable),
        ),
        Command::Burgers {
            common,
            deterministic_hopfcole,
        } => {
            let det = *deterministic_hopfcole;
            (
                "burgers",
                common,
                commands::BURGERS_KEYS,
                if det {
                    vec!["deterministic-hopfcole".to_string()]
                } else {
                    vec![]
                },
                vec![],
                Box::new(move |s: &mut Settings, p: &csl_turb::CslParameters| {
                    commands::burgers(s, p, det)
                }),
            )
        }
        Command::Fpe { common, compare } => {
            let cmp = *compare;
            (
                "fpe",
                common,
                commands::FPE_KEYS,
                if cmp {
                    vec!["compare".to_string()]
                } else {
                    vec![]
                },
                vec![],
                Box::new(move |s: &mut Settings, p: &csl_turb::CslParameters| {
                    commands::fpe(s, p, cmp)
                }),
            )
        }
        Command::Scaling { common, a } => (
            "scaling",
            common,
            commands::SCALING_KEYS,
            vec![],
            a.map(|a| vec![("fractional_a".to_string(), a.to_string())])
                .unwrap_or_default(),
            Box::new(commands::scaling),
        ),
    };
    let (mut settings, params) = Settings::resolve(keys, &sources(common, setting_flags)?)?;
    let outcome = body(&mut settings, &params)?;

    let id = run_id(name, settings.map(), &flags);
    let dir = common.out.join(format!("{name}-{id}"));
    let mut files: Vec<String> = outcome.files.iter().map(|(n, _)| n.clone()).collect();
    files.push("manifest.json".to_string());
    let manifest = RunManifest {
        run_id: id,
        command: std::iter::once(name.to_string())
            .chain(flags.iter().map(|f| format!("--{f}")))
            .collect::<Vec<_>>()
            .join(" "),
        timestamp: unix_time(),
        version: VERSION.to_string(),
        master_seed: settings.seed(),
        config: settings.map().clone(),
        files,
        all_passed: outcome.checks.iter().all(|c| c.passed),
        checks: outcome.checks,
        diagnostics: outcome.diagnostics,
    };
    write_run(&dir, &outcome.files, &manifest)?;
    Ok(RunReport {
        dir,
        manifest,
        summary: outcome.summary,
    })
}
