use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::info;
use tempfile::NamedTempFile;

use iaxrsw_core::codec::{self, IaxFrameKind};
use iaxrsw_core::framing::{self, CodecProfile, Side};
use iaxrsw_core::metrics::{self, check_acceptance};
use iaxrsw_core::sim::{self, simulate};
use iaxrsw_core::{relay, Summary};

use crate::config::{parse_range, Settings};
use crate::error::{exit, CliError};

/// Writes through a temporary file in the destination directory and renames
/// it into place only when `fill` succeeds.
pub fn write_atomically<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path)
        .map_err(|e| CliError::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn write_summary_csv(path: &Path, preamble: &[String], summaries: &[Summary]) -> Result<(), CliError> {
    write_atomically(path, |w| {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        metrics::write_csv(summaries, w)?;
        Ok(())
    })
}

fn report(summaries: &[Summary]) -> bool {
    print!("{}", metrics::render_table(summaries));
    let mut all = true;
    for s in summaries {
        let r = check_acceptance(s);
        print!("{}", r.render());
        all &= r.pass;
    }
    all
}

pub fn run_sim(settings: &Settings, out: Option<&Path>, summary_out: Option<&Path>) -> Result<i32, CliError> {
    let config = &settings.sim;
    let outcome = simulate(config, &settings.codecs)?;
    let summaries: Vec<Summary> = config
        .direction
        .directions()
        .iter()
        .map(|&d| metrics::summarize(d, &outcome.trace))
        .collect::<Result<_, _>>()?;
    let preamble = settings.sim_provenance();

    if let Some(path) = out {
        write_atomically(path, |w| Ok(sim::write_trace_csv(&outcome.trace, &preamble, w)?))?;
        info!("trace written to {}", path.display());
    }
    if let Some(path) = summary_out {
        write_summary_csv(path, &preamble, &summaries)?;
    }
    Ok(if report(&summaries) { exit::OK } else { exit::NEGATIVE })
}

pub fn run_sweep(settings: &Settings, out: Option<&Path>) -> Result<i32, CliError> {
    let counts = parse_range(&settings.sweep_packets)?;
    let summaries = sim::run_sweep(&settings.sim, &counts, &settings.codecs)?;
    if let Some(path) = out {
        let mut preamble = settings.sim_provenance();
        preamble.retain(|l| !l.starts_with("sim.packets"));
        preamble.insert(0, format!("sweep.packets = {}", settings.sweep_packets));
        write_summary_csv(path, &preamble, &summaries)?;
    }
    let all = summaries.iter().all(|s| check_acceptance(s).pass);
    print!("{}", metrics::render_table(&summaries));
    println!("{}", if all { "all points PASS" } else { "some points FAIL" });
    Ok(if all { exit::OK } else { exit::NEGATIVE })
}

struct CodecRow {
    codec: String,
    bitrate: u32,
    interval: u32,
    fps: u32,
    payload: usize,
    payload_bps: u64,
    side: &'static str,
    header: usize,
    wire: usize,
    wire_bps: u64,
}

fn codec_rows(profile: &CodecProfile) -> Result<Vec<CodecRow>, CliError> {
    let cfg = |e: framing::FramingError| CliError::Config(e.to_string());
    let fps = framing::frames_per_second(profile).map_err(cfg)?;
    let payload_bps = framing::payload_bandwidth_bps(profile).map_err(cfg)?;
    [(Side::Rsw, "rsw"), (Side::Iax, "iax")]
        .into_iter()
        .map(|(side, label)| {
            Ok(CodecRow {
                codec: profile.name.clone(),
                bitrate: profile.bitrate_bps,
                interval: profile.frame_interval_ms,
                fps,
                payload: profile.frame_payload_bytes,
                payload_bps,
                side: label,
                header: side.header_len(),
                wire: framing::on_wire_bytes(profile, side),
                wire_bps: framing::on_wire_bandwidth_bps(profile, side).map_err(cfg)?,
            })
        })
        .collect()
}

pub const CODEC_CSV_HEADER: &str = "codec,bitrate_bps,frame_interval_ms,frames_per_second,payload_bytes,payload_bps,side,media_header_bytes,on_wire_bytes,on_wire_bps";

pub fn codec_info(settings: &Settings, only: Option<&str>, csv: bool) -> Result<String, CliError> {
    let profiles: Vec<&CodecProfile> = match only {
        Some(name) => vec![settings.codec(name)?],
        None => settings.codecs.profiles().iter().collect(),
    };
    let mut rows = Vec::new();
    for p in profiles {
        rows.extend(codec_rows(p)?);
    }
    let mut s = String::new();
    if csv {
        let _ = writeln!(s, "{CODEC_CSV_HEADER}");
        for r in &rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.codec, r.bitrate, r.interval, r.fps, r.payload, r.payload_bps, r.side, r.header, r.wire, r.wire_bps
            );
        }
    } else {
        let _ = writeln!(
            s,
            "{:<8} {:>11} {:>11} {:>4} {:>9} {:>11} {:>4} {:>8} {:>9} {:>11}",
            "codec",
            "bitrate_bps",
            "interval_ms",
            "fps",
            "payload_B",
            "payload_bps",
            "side",
            "header_B",
            "on_wire_B",
            "on_wire_bps"
        );
        for r in &rows {
            let _ = writeln!(
                s,
                "{:<8} {:>11} {:>11} {:>4} {:>9} {:>11} {:>4} {:>8} {:>9} {:>11}",
                r.codec, r.bitrate, r.interval, r.fps, r.payload, r.payload_bps, r.side, r.header, r.wire, r.wire_bps
            );
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ParseFormat {
    Rtp,
    Mini,
    Auto,
}

fn decode_hex(parts: &[String]) -> Result<Vec<u8>, CliError> {
    let joined: String = parts
        .iter()
        .flat_map(|p| p.chars())
        .filter(|c| !c.is_whitespace() && *c != ':')
        .collect();
    let joined = joined.strip_prefix("0x").unwrap_or(&joined);
    hex::decode(joined).map_err(|e| CliError::Config(format!("bad hex input: {e}")))
}

fn describe_rtp(bytes: &[u8]) -> Result<String, CliError> {
    let (h, payload) = codec::parse_rtp(bytes).map_err(|e| CliError::Decode(e.to_string()))?;
    Ok(format!(
        "format=rtp version={} padding={} extension={} cc={} marker={} pt={} seq={} ts={} ssrc={:#010x} payload_len={}",
        h.version,
        h.padding,
        h.extension,
        h.csrc_count,
        h.marker,
        h.payload_type,
        h.sequence_number,
        h.timestamp,
        h.ssrc,
        payload.len()
    ))
}

fn describe_mini(bytes: &[u8]) -> Result<String, CliError> {
    let (h, payload) = codec::parse_mini(bytes).map_err(|e| CliError::Decode(e.to_string()))?;
    Ok(format!(
        "format=mini call={} ts={} payload_len={}",
        h.source_call_number,
        h.timestamp_low16,
        payload.len()
    ))
}

/// Decodes a hex dump and describes it in one line.
pub fn parse_datagram(format: ParseFormat, hex_parts: &[String]) -> Result<String, CliError> {
    let bytes = decode_hex(hex_parts)?;
    match format {
        ParseFormat::Rtp => describe_rtp(&bytes),
        ParseFormat::Mini => describe_mini(&bytes),
        ParseFormat::Auto => match codec::classify_iax_datagram(&bytes) {
            IaxFrameKind::Mini => describe_mini(&bytes),
            IaxFrameKind::Full if bytes[0] >> 6 == codec::RTP_VERSION => describe_rtp(&bytes),
            IaxFrameKind::Full => Err(CliError::Decode(
                "IAX full frame (signaling); only media frames are decoded".into(),
            )),
            IaxFrameKind::Invalid => Err(CliError::Decode(format!(
                "{} bytes is too short for either header",
                bytes.len()
            ))),
        },
    }
}

pub fn run_relay(settings: &Settings, duration: Option<Duration>) -> Result<i32, CliError> {
    let config = settings.relay_config()?;
    let interval = Duration::from_millis(config.stats_interval_ms.max(1));
    let mut handle = relay::start_relay(config)?;
    println!(
        "relay up: iax {} <-> rsw {} (ctrl-c to stop)",
        handle.iax_addr(),
        handle.rsw_addr()
    );

    let interrupted = Arc::new(AtomicBool::new(false));
    {
        let flag = Arc::clone(&interrupted);
        // a second relay in the same process (tests) finds the handler already set
        let _ = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst));
    }
    let started = Instant::now();
    let mut next_stats = started + interval;
    loop {
        if interrupted.load(Ordering::SeqCst) || duration.is_some_and(|d| started.elapsed() >= d) {
            break;
        }
        thread::sleep(Duration::from_millis(10));
        if Instant::now() >= next_stats {
            println!("{}", handle.snapshot_stats()?.render());
            next_stats += interval;
        }
    }
    let fin = handle.stop_relay()?;
    println!("final {}", fin.render());
    Ok(exit::OK)
}
