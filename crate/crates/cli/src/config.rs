//! Flat `key = value` configuration with `[section]` headers.
//!
//! ```text
//! [sim]
//! packets = 100
//! seed = 42
//!
//! [codec.gsm-lite]
//! bitrate_bps = 6600
//! frame_interval_ms = 20
//! frame_payload_bytes = 17
//! rtp_payload_type = 96
//! sample_rate_hz = 8000
//! ```
//!
//! Keys are addressed as `section.key` on the command line. Later layers
//! win: built-in defaults, then the config file, then `--set` overrides,
//! then dedicated flags.

use std::net::SocketAddr;
use std::path::Path;
use std::str::FromStr;

use iaxrsw_core::framing::CodecProfile;
use iaxrsw_core::relay::RelayConfig;
use iaxrsw_core::sim::{CodecRegistry, DirectionSpec, LinkModel, ScenarioConfig, RNG_IDENTITY};
use iaxrsw_core::translator::DEFAULT_BUFFER_CAPACITY;

use crate::error::CliError;

const CODEC_KEYS: [&str; 5] = [
    "bitrate_bps",
    "frame_interval_ms",
    "frame_payload_bytes",
    "rtp_payload_type",
    "sample_rate_hz",
];

/// Parses config text into `(section.key, value)` pairs in file order.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| CliError::Config(format!("line {}: unterminated section header", lineno + 1)))?;
            section = name.trim().to_owned();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", lineno + 1)));
        }
        let full = if section.is_empty() {
            key.to_owned()
        } else {
            format!("{section}.{key}")
        };
        out.push((full, value.trim().to_owned()));
    }
    Ok(out)
}

/// Parses a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {s:?} is not key=value")))?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

/// Parses `start:end:step` (inclusive) or a single count.
pub fn parse_range(spec: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Config(format!("malformed packet range {spec:?}; expected N or start:end:step"));
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse::<usize>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let counts: Vec<usize> = match nums.as_slice() {
        [n] => vec![*n],
        [start, end] => (*start..=*end).collect(),
        [start, end, step] if *step > 0 => (*start..=*end).step_by(*step).collect(),
        _ => return Err(bad()),
    };
    if counts.is_empty() || counts.contains(&0) {
        return Err(CliError::Config(format!(
            "packet range {spec:?} must contain only counts >= 1"
        )));
    }
    Ok(counts)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| CliError::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_seed(key: &str, value: &str) -> Result<u64, CliError> {
    match value.strip_prefix("0x").or_else(|| value.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).map_err(|e| CliError::Config(format!("{key} = {value:?}: {e}"))),
        None => parse_value(key, value),
    }
}

#[derive(Debug, Clone)]
pub struct RelaySettings {
    pub iax_listen: SocketAddr,
    pub rsw_listen: SocketAddr,
    pub iax_peer: SocketAddr,
    pub rsw_peer: SocketAddr,
    pub codec: String,
    pub call_number: u16,
    pub seed: u64,
    pub stats_interval_ms: u64,
    pub buffer_capacity: usize,
}

impl Default for RelaySettings {
    fn default() -> Self {
        let addr = |s: &str| s.parse().expect("valid literal address");
        Self {
            iax_listen: addr("0.0.0.0:4569"),
            rsw_listen: addr("0.0.0.0:5004"),
            iax_peer: addr("127.0.0.1:14569"),
            rsw_peer: addr("127.0.0.1:15004"),
            codec: "gsm".to_owned(),
            call_number: 1,
            seed: 1,
            stats_interval_ms: 1000,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
        }
    }
}

/// Every tunable of every subcommand.
#[derive(Debug, Clone)]
pub struct Settings {
    pub sim: ScenarioConfig,
    pub sweep_packets: String,
    pub relay: RelaySettings,
    pub codecs: CodecRegistry,
    custom_codecs: Vec<(String, [Option<String>; 5])>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            sim: ScenarioConfig::default(),
            sweep_packets: "10:100:10".to_owned(),
            relay: RelaySettings::default(),
            codecs: CodecRegistry::builtin(),
            custom_codecs: Vec::new(),
        }
    }
}

impl Settings {
    /// Loads defaults, then the optional file, then the overrides in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut settings = Settings::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            for (k, v) in parse_pairs(&text)? {
                settings.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            settings.set(k, v)?;
        }
        settings.finish_codecs()?;
        Ok(settings)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let sim = &mut self.sim;
        let relay = &mut self.relay;
        match key {
            "sim.direction" => sim.direction = value.parse::<DirectionSpec>().map_err(CliError::Config)?,
            "sim.packets" => sim.packet_count = parse_value(key, value)?,
            "sim.seed" => sim.seed = parse_seed(key, value)?,
            "sim.call_number" => sim.call_number = parse_value(key, value)?,
            "sim.codec" => sim.codec = value.to_owned(),
            "sim.buffer_capacity" => sim.buffer_capacity = parse_value(key, value)?,
            "sim.processing_delay_ms" => sim.gateway_processing_delay_ms = parse_value(key, value)?,
            "sim.ingress_base_ms" => sim.ingress_link.base_ms = parse_value(key, value)?,
            "sim.ingress_span_ms" => sim.ingress_link.span_ms = parse_value(key, value)?,
            "sim.egress_base_ms" => sim.egress_link.base_ms = parse_value(key, value)?,
            "sim.egress_span_ms" => sim.egress_link.span_ms = parse_value(key, value)?,
            "sim.link_base_ms" => {
                let v = parse_value(key, value)?;
                sim.ingress_link.base_ms = v;
                sim.egress_link.base_ms = v;
            }
            "sim.link_span_ms" => {
                let v = parse_value(key, value)?;
                sim.ingress_link.span_ms = v;
                sim.egress_link.span_ms = v;
            }
            "sweep.packets" => {
                parse_range(value)?;
                self.sweep_packets = value.to_owned();
            }
            "relay.iax_listen" => relay.iax_listen = parse_value(key, value)?,
            "relay.rsw_listen" => relay.rsw_listen = parse_value(key, value)?,
            "relay.iax_peer" => relay.iax_peer = parse_value(key, value)?,
            "relay.rsw_peer" => relay.rsw_peer = parse_value(key, value)?,
            "relay.codec" => relay.codec = value.to_owned(),
            "relay.call_number" => relay.call_number = parse_value(key, value)?,
            "relay.seed" => relay.seed = parse_seed(key, value)?,
            "relay.stats_interval_ms" => relay.stats_interval_ms = parse_value(key, value)?,
            "relay.buffer_capacity" => relay.buffer_capacity = parse_value(key, value)?,
            other => return self.set_codec_key(other, value),
        }
        Ok(())
    }

    fn set_codec_key(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let unknown = || CliError::Config(format!("unknown config key {key:?}"));
        let rest = key.strip_prefix("codec.").ok_or_else(unknown)?;
        let (name, field) = rest.rsplit_once('.').ok_or_else(unknown)?;
        let idx = CODEC_KEYS.iter().position(|k| *k == field).ok_or_else(unknown)?;
        if name.is_empty() {
            return Err(unknown());
        }
        let slot = match self.custom_codecs.iter_mut().position(|(n, _)| n == name) {
            Some(i) => &mut self.custom_codecs[i].1,
            None => {
                self.custom_codecs.push((name.to_owned(), Default::default()));
                &mut self.custom_codecs.last_mut().expect("just pushed").1
            }
        };
        slot[idx] = Some(value.to_owned());
        Ok(())
    }

    fn finish_codecs(&mut self) -> Result<(), CliError> {
        for (name, fields) in &self.custom_codecs {
            let base = self.codecs.get(name).cloned();
            let get = |i: usize| -> Result<Option<&String>, CliError> {
                match (&fields[i], &base) {
                    (Some(v), _) => Ok(Some(v)),
                    (None, Some(_)) => Ok(None),
                    (None, None) => Err(CliError::Config(format!("codec {name:?} is missing {}", CODEC_KEYS[i]))),
                }
            };
            let mut profile = base.clone().unwrap_or_else(|| CodecProfile {
                name: name.clone(),
                ..CodecProfile::gsm()
            });
            let key = |i: usize| format!("codec.{name}.{}", CODEC_KEYS[i]);
            if let Some(v) = get(0)? {
                profile.bitrate_bps = parse_value(&key(0), v)?;
            }
            if let Some(v) = get(1)? {
                profile.frame_interval_ms = parse_value(&key(1), v)?;
            }
            if let Some(v) = get(2)? {
                profile.frame_payload_bytes = parse_value(&key(2), v)?;
            }
            if let Some(v) = get(3)? {
                profile.rtp_payload_type = parse_value(&key(3), v)?;
            }
            if let Some(v) = get(4)? {
                profile.sample_rate_hz = parse_value(&key(4), v)?;
            }
            self.codecs
                .register(profile)
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.custom_codecs.clear();
        Ok(())
    }

    pub fn codec(&self, name: &str) -> Result<&CodecProfile, CliError> {
        self.codecs
            .get(name)
            .ok_or_else(|| CliError::Config(format!("unknown codec profile {name:?}")))
    }

    pub fn relay_config(&self) -> Result<RelayConfig, CliError> {
        let r = &self.relay;
        Ok(RelayConfig {
            codec: self.codec(&r.codec)?.clone(),
            iax_call_number: r.call_number,
            seed: r.seed,
            stats_interval_ms: r.stats_interval_ms,
            buffer_capacity: r.buffer_capacity,
            ..RelayConfig::new(r.iax_listen, r.rsw_listen, r.iax_peer, r.rsw_peer)
        })
    }

    /// Effective simulation settings, one `key = value` per line.
    pub fn sim_provenance(&self) -> Vec<String> {
        let s = &self.sim;
        let link = |name: &str, l: &LinkModel| {
            vec![
                format!("sim.{name}_base_ms = {}", l.base_ms),
                format!("sim.{name}_span_ms = {}", l.span_ms),
            ]
        };
        let mut lines = vec![
            format!("sim.direction = {}", s.direction.label()),
            format!("sim.packets = {}", s.packet_count),
            format!("sim.seed = {}", s.seed),
            format!("sim.call_number = {}", s.call_number),
            format!("sim.codec = {}", s.codec),
            format!("sim.buffer_capacity = {}", s.buffer_capacity),
            format!("sim.processing_delay_ms = {}", s.gateway_processing_delay_ms),
        ];
        lines.extend(link("ingress", &s.ingress_link));
        lines.extend(link("egress", &s.egress_link));
        if let Some(p) = self.codecs.get(&s.codec) {
            lines.push(format!(
                "codec = {} bitrate_bps={} frame_interval_ms={} frame_payload_bytes={} rtp_payload_type={} sample_rate_hz={}",
                p.name, p.bitrate_bps, p.frame_interval_ms, p.frame_payload_bytes, p.rtp_payload_type, p.sample_rate_hz
            ));
        }
        lines.push(format!("rng = {RNG_IDENTITY}"));
        lines
    }
}
