//! `roamsim`: run handover scenarios, print closed-form budgets and check
//! the simulator against them.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use roamsim::runner::{budget, compare, rows, run_trials};
use roamsim::scenario::{parse_duration, Scenario};
use roamsim::time::Micros;

#[derive(Parser)]
#[command(name = "roamsim", version, about = "Discrete-event simulator for mobile IPv6 handovers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every trial and emit one row per handover.
    Run(Common),
    /// Closed-form handover budget for each scripted move.
    Budget(Common),
    /// Simulate and compare each handover with its closed form.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Largest accepted |simulated - predicted|, e.g. `1us` or `2ms`.
        #[arg(long, default_value = "1us", value_parser = parse_duration)]
        tolerance: Micros,
    },
    /// Parse and validate a scenario.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's trial count.
    #[arg(long)]
    trials: Option<u32>,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Common {
    fn load(&self) -> Result<Scenario> {
        let mut sc = Scenario::load(&self.scenario)?;
        if let Some(t) = self.trials {
            sc.trials = t;
        }
        if let Some(s) = self.seed {
            sc.seed = s;
        }
        Ok(sc)
    }

    fn emit<T: Serialize>(&self, items: &[T]) -> Result<()> {
        let sink: Box<dyn Write> = match &self.out {
            Some(p) => Box::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
            None => Box::new(io::stdout().lock()),
        };
        match self.format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(sink);
                for item in items {
                    w.serialize(item)?;
                }
                w.flush()?;
            }
            Format::Json => {
                let mut sink = sink;
                serde_json::to_writer_pretty(&mut sink, items)?;
                writeln!(sink)?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Summary {
    nodes: usize,
    fixed_nodes: usize,
    links: usize,
    moves: usize,
    probes: usize,
    groups: usize,
    variant: &'static str,
    multicast: &'static str,
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(c) => {
            let sc = c.load()?;
            let results = run_trials(&sc)?;
            c.emit(&rows(&sc, &results))?;
            Ok(true)
        }
        Command::Budget(c) => {
            let sc = c.load()?;
            c.emit(&budget(&sc)?)?;
            Ok(true)
        }
        Command::Compare { common, tolerance } => {
            let sc = common.load()?;
            let results = run_trials(&sc)?;
            let report = compare(&sc, &results, tolerance)?;
            common.emit(&report)?;
            let flagged = report.iter().filter(|r| r.flagged).count();
            if flagged > 0 {
                eprintln!("{flagged} of {} handovers outside tolerance", report.len());
            }
            Ok(flagged == 0)
        }
        Command::Validate(c) => {
            let sc = c.load()?;
            c.emit(&[Summary {
                nodes: sc.topology.nodes().len(),
                fixed_nodes: sc.fixed_node_count(),
                links: sc.topology.links().len(),
                moves: sc.moves.len(),
                probes: sc.probes.len(),
                groups: sc.groups.len(),
                variant: sc.variant.name(),
                multicast: sc.multicast.name(),
            }])?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
