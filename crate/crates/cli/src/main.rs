//! `iaxrsw`: simulate, sweep, relay and inspect IAX/RSW media translation.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::commands::ParseFormat;
use crate::config::{parse_override, Settings};
use crate::error::{exit, CliError};

#[derive(Parser, Debug)]
#[command(name = "iaxrsw", version, about = "IAX mini-frame <-> RTP media translation gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Config file (flat key = value with [section] headers).
    #[arg(long, env = "IAXRSW_CONFIG")]
    config: Option<PathBuf>,
    /// Override any config key, e.g. --set sim.buffer_capacity=10.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug, Default)]
struct ScenarioArgs {
    #[arg(long)]
    seed: Option<String>,
    /// iax-to-rsw, rsw-to-iax or both.
    #[arg(long)]
    direction: Option<String>,
    /// Base delay of both access links (ms).
    #[arg(long)]
    link_base_ms: Option<String>,
    /// Uniform jitter span of both access links (ms).
    #[arg(long)]
    link_span_ms: Option<String>,
    #[arg(long)]
    processing_ms: Option<String>,
    #[arg(long)]
    buffer_capacity: Option<String>,
    #[arg(long)]
    codec: Option<String>,
}

impl ScenarioArgs {
    fn push(&self, out: &mut Vec<(String, String)>) {
        let pairs = [
            ("sim.seed", &self.seed),
            ("sim.direction", &self.direction),
            ("sim.link_base_ms", &self.link_base_ms),
            ("sim.link_span_ms", &self.link_span_ms),
            ("sim.processing_delay_ms", &self.processing_ms),
            ("sim.buffer_capacity", &self.buffer_capacity),
            ("sim.codec", &self.codec),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                out.push((k.to_owned(), v.clone()));
            }
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulated scenario; exit 0 iff all thresholds pass.
    Sim {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Packets per direction.
        #[arg(long)]
        packets: Option<String>,
        /// Trace CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary CSV destination.
        #[arg(long)]
        summary_out: Option<PathBuf>,
    },
    /// Sweep packet counts and summarize each point.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// start:end:step (inclusive) or a single count.
        #[arg(long)]
        packets: Option<String>,
        /// Summary CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relay live UDP media between an IAX peer and an RSW peer.
    Relay {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        iax_listen: Option<String>,
        #[arg(long)]
        rsw_listen: Option<String>,
        #[arg(long)]
        iax_peer: Option<String>,
        #[arg(long)]
        rsw_peer: Option<String>,
        #[arg(long)]
        call_number: Option<String>,
        /// Stop after this many milliseconds instead of waiting for ctrl-c.
        #[arg(long)]
        duration_ms: Option<u64>,
    },
    /// Print frame size, rate and per-side on-wire cost of codec profiles.
    CodecInfo {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        codec: Option<String>,
        #[arg(long)]
        csv: bool,
    },
    /// Decode a hex dump of a UDP payload.
    Parse {
        #[arg(long, value_enum, default_value = "auto")]
        format: ParseFormat,
        #[arg(required = true, num_args = 1..)]
        hex: Vec<String>,
    },
}

fn load(cfg: &ConfigArgs, extra: Vec<(String, String)>) -> Result<Settings, CliError> {
    let mut overrides = cfg
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    overrides.extend(extra);
    Settings::load(cfg.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Sim {
            cfg,
            scenario,
            packets,
            out,
            summary_out,
        } => {
            let mut extra = Vec::new();
            scenario.push(&mut extra);
            if let Some(p) = packets {
                extra.push(("sim.packets".into(), p));
            }
            let settings = load(&cfg, extra)?;
            commands::run_sim(&settings, out.as_deref(), summary_out.as_deref())
        }
        Command::Sweep {
            cfg,
            scenario,
            packets,
            out,
        } => {
            let mut extra = Vec::new();
            scenario.push(&mut extra);
            if let Some(p) = packets {
                extra.push(("sweep.packets".into(), p));
            }
            let settings = load(&cfg, extra)?;
            commands::run_sweep(&settings, out.as_deref())
        }
        Command::Relay {
            cfg,
            iax_listen,
            rsw_listen,
            iax_peer,
            rsw_peer,
            call_number,
            duration_ms,
        } => {
            let extra = [
                ("relay.iax_listen", iax_listen),
                ("relay.rsw_listen", rsw_listen),
                ("relay.iax_peer", iax_peer),
                ("relay.rsw_peer", rsw_peer),
                ("relay.call_number", call_number),
            ]
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_owned(), v)))
            .collect();
            let settings = load(&cfg, extra)?;
            commands::run_relay(&settings, duration_ms.map(Duration::from_millis))
        }
        Command::CodecInfo { cfg, codec, csv } => {
            let settings = load(&cfg, Vec::new())?;
            print!("{}", commands::codec_info(&settings, codec.as_deref(), csv)?);
            Ok(exit::OK)
        }
        Command::Parse { format, hex } => {
            println!("{}", commands::parse_datagram(format, &hex)?);
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("iaxrsw: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
