//! `fdwlan`: solve, sweep and simulate the full-duplex WLAN model and write
//! the datasets behind the figures as CSV.

mod commands;
mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fdwlan_core::{ApSuccessTerm, HiddenNormalization, PayloadMode, Regime, RhoSource, TopologyMode};
use serde::de::DeserializeOwned;

use commands::Preset;
use config::{RunConfig, SweepSpec, SweepVariable};

#[derive(Parser)]
#[command(name = "fdwlan", version, about = "Full-duplex WLAN saturation model and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fixed point for one network and print per-annulus results.
    Solve(Common),
    /// Solve over a range of station counts, annulus counts or distances.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Swept variable: n, M or d. Overrides the config's [sweep] section.
        #[arg(long, value_parser = parse_enum::<SweepVariable>)]
        variable: Option<SweepVariable>,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',', conflicts_with = "range")]
        values: Option<Vec<f64>>,
        /// Inclusive range as START:STOP or START:STOP:STEP.
        #[arg(long)]
        range: Option<String>,
    },
    /// Monte Carlo simulation next to the analytical values.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Virtual slots per replication.
        #[arg(long)]
        horizon: Option<u64>,
        /// Station placement: sampled or pinned.
        #[arg(long, value_parser = parse_enum::<TopologyMode>)]
        topology: Option<TopologyMode>,
        /// Also write a per-slot trace of a single run to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Canned sweep presets: fig4 to fig7, or all of them.
    Figures {
        #[arg(value_enum)]
        preset: Preset,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeChoice {
    Fd,
    Hd,
    Both,
}

impl RegimeChoice {
    fn regimes(self) -> Vec<Regime> {
        match self {
            RegimeChoice::Fd => vec![Regime::Fd],
            RegimeChoice::Hd => vec![Regime::Hd],
            RegimeChoice::Both => vec![Regime::Fd, Regime::Hd],
        }
    }
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults to the built-in 802.11ac profile.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    regime: Option<RegimeChoice>,
    /// Output file (a directory for `figures all`); stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// literal or rescaled.
    #[arg(long, value_parser = parse_enum::<HiddenNormalization>)]
    h_normalization: Option<HiddenNormalization>,
    /// payload (MPDU minus header and FCS) or mpdu.
    #[arg(long, value_parser = parse_enum::<PayloadMode>)]
    payload_mode: Option<PayloadMode>,
    /// slot or delay: unit that converts the RTS airtime into slots.
    #[arg(long, value_parser = parse_enum::<RhoSource>)]
    rho_source: Option<RhoSource>,
    /// RTS length in slots; wins over --rho-source.
    #[arg(long)]
    rho: Option<u32>,
    /// weighted or literal form of the AP's full-duplex success term.
    #[arg(long, value_parser = parse_enum::<ApSuccessTerm>)]
    ap_term: Option<ApSuccessTerm>,
    /// Number of stations n.
    #[arg(long, short = 'n')]
    stations: Option<usize>,
    /// Number of annuli M.
    #[arg(long, short = 'm')]
    annuli: Option<usize>,
    /// Print the effective configuration as TOML instead of running.
    #[arg(long)]
    dump_config: bool,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    use serde::de::value::{Error, StrDeserializer};
    use serde::de::IntoDeserializer;
    let de: StrDeserializer<'_, Error> = s.into_deserializer();
    T::deserialize(de).map_err(|e| e.to_string())
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let m = &mut cfg.model;
        m.h_normalization = self.h_normalization.unwrap_or(m.h_normalization);
        m.payload = self.payload_mode.unwrap_or(m.payload);
        m.rho_source = self.rho_source.unwrap_or(m.rho_source);
        m.ap_term = self.ap_term.unwrap_or(m.ap_term);
        if self.rho.is_some() {
            m.rho = self.rho;
        }
        let g = &mut cfg.geometry;
        g.stations = self.stations.unwrap_or(g.stations);
        g.annuli = self.annuli.unwrap_or(g.annuli);
        let s = &mut cfg.simulation;
        s.seed = self.seed.unwrap_or(s.seed);
        s.replications = self.replications.unwrap_or(s.replications);
        if self.out.is_some() {
            cfg.output = self.out.clone();
        }
        Ok(cfg)
    }

    fn regimes(&self, default: RegimeChoice) -> Vec<Regime> {
        self.regime.unwrap_or(default).regimes()
    }
}

fn parse_range(text: &str) -> Result<(f64, f64, Option<f64>)> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .with_context(|| format!("bad number {s:?} in --range"))
    };
    match parts.as_slice() {
        [a, b] => Ok((num(a)?, num(b)?, None)),
        [a, b, c] => Ok((num(a)?, num(b)?, Some(num(c)?))),
        _ => bail!("--range takes START:STOP or START:STOP:STEP"),
    }
}

fn finish(cfg: &RunConfig, common: &Common) -> Result<bool> {
    cfg.validate()?;
    if common.dump_config {
        let text = cfg.to_toml()?;
        output::emit(text.as_bytes(), common.out.as_deref())?;
        return Ok(true);
    }
    Ok(false)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(common) => {
            let cfg = common.resolve()?;
            if finish(&cfg, &common)? {
                return Ok(());
            }
            let table = commands::solve(&cfg, &common.regimes(RegimeChoice::Both))?;
            output::emit(&table.render()?, cfg.output.as_deref())
        }
        Command::Sweep {
            common,
            variable,
            values,
            range,
        } => {
            let mut cfg = common.resolve()?;
            if variable.is_some() || values.is_some() || range.is_some() {
                let base = cfg.sweep.take();
                let mut spec = SweepSpec {
                    variable: variable
                        .or(base.as_ref().map(|s| s.variable))
                        .context("--variable is required without a [sweep] section")?,
                    values,
                    start: None,
                    stop: None,
                    step: None,
                };
                if let Some(text) = &range {
                    let (start, stop, step) = parse_range(text)?;
                    (spec.start, spec.stop, spec.step) = (Some(start), Some(stop), step);
                }
                if spec.values.is_none() && spec.start.is_none() {
                    let base = base.context("give --values or --range")?;
                    (spec.values, spec.start, spec.stop, spec.step) = (base.values, base.start, base.stop, base.step);
                }
                cfg.sweep = Some(spec);
            }
            if finish(&cfg, &common)? {
                return Ok(());
            }
            let spec = cfg
                .sweep
                .clone()
                .context("no sweep given: use --variable with --values or --range")?;
            let table = commands::sweep(&cfg, &spec, &common.regimes(RegimeChoice::Both))?;
            output::emit(&table.render()?, cfg.output.as_deref())
        }
        Command::Simulate {
            common,
            horizon,
            topology,
            trace,
        } => {
            let mut cfg = common.resolve()?;
            cfg.simulation.horizon = horizon.unwrap_or(cfg.simulation.horizon);
            cfg.simulation.topology = topology.unwrap_or(cfg.simulation.topology);
            if finish(&cfg, &common)? {
                return Ok(());
            }
            let regimes = common.regimes(RegimeChoice::Both);
            let trace_bytes = trace.as_ref().map(|_| commands::trace(&cfg, &regimes)).transpose()?;
            let (table, low_samples) = commands::simulate(&cfg, &regimes)?;
            if low_samples {
                eprintln!("warning: some nodes made fewer than 30 attempts per batch; intervals are unreliable");
            }
            if let (Some(path), Some(bytes)) = (&trace, trace_bytes) {
                output::emit(&bytes, Some(path))?;
            }
            output::emit(&table.render()?, cfg.output.as_deref())
        }
        Command::Figures { preset, common } => {
            let cfg = common.resolve()?;
            if finish(&cfg, &common)? {
                return Ok(());
            }
            let default = if matches!(preset, Preset::Fig5 | Preset::Fig6) {
                RegimeChoice::Fd
            } else {
                RegimeChoice::Both
            };
            let regimes = common.regimes(default);
            if preset == Preset::All {
                let dir = cfg.output.as_deref().context("`figures all` needs --out DIR")?;
                let presets = [Preset::Fig4, Preset::Fig5, Preset::Fig6, Preset::Fig7];
                let rendered = presets
                    .iter()
                    .map(|&p| {
                        let regimes = common.regimes(if matches!(p, Preset::Fig5 | Preset::Fig6) {
                            RegimeChoice::Fd
                        } else {
                            RegimeChoice::Both
                        });
                        commands::figure(&cfg, p, &regimes)?.render()
                    })
                    .collect::<Result<Vec<_>>>()?;
                write_dir(dir, &presets, &rendered)
            } else {
                let table = commands::figure(&cfg, preset, &regimes)?;
                output::emit(&table.render()?, cfg.output.as_deref())
            }
        }
    }
}

fn write_dir(dir: &Path, presets: &[Preset], rendered: &[Vec<u8>]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (p, bytes) in presets.iter().zip(rendered) {
        output::emit(bytes, Some(&dir.join(p.file_name())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fdwlan: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
