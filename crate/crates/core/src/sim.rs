//! Discrete-event simulation of the one-to-one topology: a talking client,
//! an access link to the gateway, the gateway's translation buffer, and an
//! access link to the listening client.
//!
//! Virtual time is kept in whole microseconds. Each link draws its delay as
//! `base + floor(u * span)` with `u = (x >> 11) * 2^-53` and `x` the next
//! output of a xoshiro256++ stream. All streams start from
//! `Xoshiro256PlusPlus::seed_from_u64(seed)` (SplitMix64 state expansion)
//! followed by `k` jumps:
//!
//! | k | stream |
//! |---|--------|
//! | 0 | IAX→RSW ingress link |
//! | 1 | IAX→RSW egress link |
//! | 2 | RSW→IAX ingress link |
//! | 3 | RSW→IAX egress link |
//! | 4 | RSW client RTP identity (SSRC, sequence, timestamp origin) |
//!
//! Talkspurt payloads for direction `d` (0 = IAX→RSW, 1 = RSW→IAX) use seed
//! `seed + (d + 1) * 0x9E3779B97F4A7C15` (wrapping).

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use thiserror::Error;

use crate::codec::{self, IaxMiniHeader, MediaPacket, RtpHeader};
use crate::framing::{generate_talkspurt, CodecProfile, FramingError};
use crate::metrics::{self, MetricsError, MetricsSummary};
use crate::translator::{ConferenceGateway, TranslateError, DEFAULT_BUFFER_CAPACITY};

/// Identity of the generator behind every simulated random draw.
pub const RNG_IDENTITY: &str = "xoshiro256++ seeded via splitmix64, jump() per stream";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown codec profile {0:?}")]
    UnknownCodec(String),
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Framing(#[from] FramingError),
    #[error("translation failed inside the simulation: {0}")]
    Translate(#[from] TranslateError),
    #[error("receiver could not decode packet {packet_id}: {source}")]
    Decode { packet_id: u64, source: codec::CodecError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    IaxToRsw,
    RswToIax,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::IaxToRsw, Direction::RswToIax];

    pub fn label(self) -> &'static str {
        match self {
            Direction::IaxToRsw => "iax-to-rsw",
            Direction::RswToIax => "rsw-to-iax",
        }
    }

    fn index(self) -> usize {
        match self {
            Direction::IaxToRsw => 0,
            Direction::RswToIax => 1,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Which directions a scenario exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionSpec {
    IaxToRsw,
    RswToIax,
    Both,
}

impl DirectionSpec {
    pub fn directions(self) -> &'static [Direction] {
        match self {
            DirectionSpec::IaxToRsw => &Direction::ALL[..1],
            DirectionSpec::RswToIax => &Direction::ALL[1..],
            DirectionSpec::Both => &Direction::ALL,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DirectionSpec::IaxToRsw => "iax-to-rsw",
            DirectionSpec::RswToIax => "rsw-to-iax",
            DirectionSpec::Both => "both",
        }
    }
}

impl FromStr for DirectionSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iax-to-rsw" | "iax2rsw" => Ok(DirectionSpec::IaxToRsw),
            "rsw-to-iax" | "rsw2iax" => Ok(DirectionSpec::RswToIax),
            "both" => Ok(DirectionSpec::Both),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// Delay model of one access link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub base_ms: f64,
    pub span_ms: f64,
}

impl LinkModel {
    pub const DEFAULT: LinkModel = LinkModel {
        base_ms: 1.0,
        span_ms: 5.0,
    };

    pub const IDEAL: LinkModel = LinkModel {
        base_ms: 0.0,
        span_ms: 0.0,
    };

    pub fn max_delay_ms(&self) -> f64 {
        self.base_ms + self.span_ms
    }
}

impl Default for LinkModel {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Named codec profiles available to scenarios.
#[derive(Debug, Clone)]
pub struct CodecRegistry {
    profiles: Vec<CodecProfile>,
}

impl CodecRegistry {
    pub fn builtin() -> Self {
        Self {
            profiles: vec![CodecProfile::gsm()],
        }
    }

    /// Adds or replaces a profile.
    pub fn register(&mut self, profile: CodecProfile) -> Result<(), FramingError> {
        profile.validate()?;
        match self.profiles.iter_mut().find(|p| p.name == profile.name) {
            Some(slot) => *slot = profile,
            None => self.profiles.push(profile),
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&CodecProfile> {
        self.profiles.iter().find(|p| p.name.eq_ignore_ascii_case(name))
    }

    pub fn profiles(&self) -> &[CodecProfile] {
        &self.profiles
    }
}

impl Default for CodecRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub direction: DirectionSpec,
    pub packet_count: usize,
    /// Talker to gateway.
    pub ingress_link: LinkModel,
    /// Gateway to listener.
    pub egress_link: LinkModel,
    pub gateway_processing_delay_ms: f64,
    pub buffer_capacity: usize,
    pub codec: String,
    pub call_number: u16,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            direction: DirectionSpec::Both,
            packet_count: 100,
            ingress_link: LinkModel::DEFAULT,
            egress_link: LinkModel::DEFAULT,
            gateway_processing_delay_ms: 0.5,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
            codec: "gsm".to_owned(),
            call_number: 1,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.packet_count == 0 {
            return bad("packet_count must be at least 1".into());
        }
        let delays = [
            ("ingress base", self.ingress_link.base_ms),
            ("ingress span", self.ingress_link.span_ms),
            ("egress base", self.egress_link.base_ms),
            ("egress span", self.egress_link.span_ms),
            ("gateway processing", self.gateway_processing_delay_ms),
        ];
        for (name, v) in delays {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} delay must be a finite nonnegative number, got {v}"));
            }
        }
        if self.call_number == 0 || self.call_number > codec::MAX_CALL_NUMBER {
            return bad(format!("call number {} outside 1..=32767", self.call_number));
        }
        Ok(())
    }

    /// Worst-case end-to-end delay excluding buffer queueing.
    pub fn delay_bound_ms(&self) -> f64 {
        self.ingress_link.max_delay_ms() + self.egress_link.max_delay_ms() + self.gateway_processing_delay_ms
    }
}

fn ms_to_us(ms: f64) -> u64 {
    (ms * 1000.0).round() as u64
}

fn us_to_ms(us: u64) -> f64 {
    us as f64 / 1000.0
}

fn unit_interval(rng: &mut Xoshiro256PlusPlus) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn sample_link_delay_us(base_us: u64, span_us: u64, rng: &mut Xoshiro256PlusPlus) -> u64 {
    if span_us == 0 {
        return base_us;
    }
    let extra = (unit_interval(rng) * span_us as f64).floor() as u64;
    base_us + extra.min(span_us - 1)
}

/// Draws one link delay in milliseconds, quantized to microseconds.
///
/// Lies in `[base_ms, base_ms + span_ms)`, or equals `base_ms` when the span
/// is zero.
pub fn sample_link_delay(base_ms: f64, span_ms: f64, rng: &mut Xoshiro256PlusPlus) -> f64 {
    us_to_ms(sample_link_delay_us(ms_to_us(base_ms), ms_to_us(span_ms), rng))
}

/// Generator for stream `k` of a scenario seed (see module docs).
pub fn stream_rng(seed: u64, k: u32) -> Xoshiro256PlusPlus {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    for _ in 0..k {
        rng.jump();
    }
    rng
}

/// Per-packet timing record.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketTraceEvent {
    pub packet_id: u64,
    pub direction: Direction,
    pub send_time_ms: f64,
    pub gateway_in_ms: f64,
    /// `None` when the packet was dropped by the gateway buffer.
    pub gateway_out_ms: Option<f64>,
    pub receive_time_ms: Option<f64>,
    pub size_bytes_in: usize,
    pub size_bytes_out: usize,
}

impl PacketTraceEvent {
    /// send <= gateway_in <= gateway_out <= receive over the stages present.
    pub fn is_causal(&self) -> bool {
        let mut last = self.send_time_ms;
        if self.gateway_in_ms < last {
            return false;
        }
        last = self.gateway_in_ms;
        if let Some(out) = self.gateway_out_ms {
            if out < last {
                return false;
            }
            last = out;
        }
        match self.receive_time_ms {
            Some(recv) => recv >= last && self.gateway_out_ms.is_some(),
            None => true,
        }
    }

    pub fn end_to_end_ms(&self) -> Option<f64> {
        self.receive_time_ms.map(|r| r - self.send_time_ms)
    }

    pub fn delivered(&self) -> bool {
        self.receive_time_ms.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    FrameCaptured,
    LinkDeliver,
    GatewayTranslate,
    Received,
}

/// One executed simulation event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time_ms: f64,
    pub kind: EventKind,
    pub packet_id: u64,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct QueuedEvent {
    time_us: u64,
    kind: EventKind,
    packet_id: u64,
    direction: Direction,
}

/// Full result of a run: the trace plus the executed event log.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub trace: Vec<PacketTraceEvent>,
    pub events: Vec<SimEvent>,
}

impl SimOutcome {
    pub fn sent(&self, direction: Direction) -> usize {
        self.trace.iter().filter(|e| e.direction == direction).count()
    }

    pub fn delivered(&self, direction: Direction) -> usize {
        self.trace
            .iter()
            .filter(|e| e.direction == direction && e.delivered())
            .count()
    }

    pub fn dropped(&self, direction: Direction) -> usize {
        self.sent(direction) - self.delivered(direction)
    }
}

struct DirectionState {
    direction: Direction,
    ingress: Xoshiro256PlusPlus,
    egress: Xoshiro256PlusPlus,
    /// Serialized datagram currently on a link or at the receiver, per packet.
    datagrams: Vec<Vec<u8>>,
    in_service: Option<(u64, MediaPacket)>,
}

struct Simulator<'a> {
    config: &'a ScenarioConfig,
    profile: &'a CodecProfile,
    gateway: ConferenceGateway<u64>,
    dirs: Vec<DirectionState>,
    trace: Vec<PacketTraceEvent>,
    heap: BinaryHeap<Reverse<QueuedEvent>>,
    events: Vec<SimEvent>,
    ingress_us: (u64, u64),
    egress_us: (u64, u64),
    processing_us: u64,
}

impl<'a> Simulator<'a> {
    fn new(config: &'a ScenarioConfig, profile: &'a CodecProfile) -> Result<Self, SimError> {
        let gateway = ConferenceGateway::new(profile.clone(), config.call_number, config.seed, config.buffer_capacity)?;
        let dirs = config
            .direction
            .directions()
            .iter()
            .map(|&d| {
                let k = 2 * d.index() as u32;
                DirectionState {
                    direction: d,
                    ingress: stream_rng(config.seed, k),
                    egress: stream_rng(config.seed, k + 1),
                    datagrams: Vec::new(),
                    in_service: None,
                }
            })
            .collect();
        Ok(Self {
            config,
            profile,
            gateway,
            dirs,
            trace: Vec::new(),
            heap: BinaryHeap::new(),
            events: Vec::new(),
            ingress_us: (
                ms_to_us(config.ingress_link.base_ms),
                ms_to_us(config.ingress_link.span_ms),
            ),
            egress_us: (
                ms_to_us(config.egress_link.base_ms),
                ms_to_us(config.egress_link.span_ms),
            ),
            processing_us: ms_to_us(config.gateway_processing_delay_ms),
        })
    }

    fn schedule(&mut self, time_us: u64, kind: EventKind, packet_id: u64, direction: Direction) {
        self.heap.push(Reverse(QueuedEvent {
            time_us,
            kind,
            packet_id,
            direction,
        }));
    }

    fn slot(&self, direction: Direction) -> usize {
        self.dirs
            .iter()
            .position(|d| d.direction == direction)
            .expect("direction is part of the scenario")
    }

    fn trace_index(&self, direction: Direction, packet_id: u64) -> usize {
        self.slot(direction) * self.config.packet_count + packet_id as usize
    }

    fn build_sources(&mut self) -> Result<(), SimError> {
        let n = self.config.packet_count;
        let mut identity = stream_rng(self.config.seed, 4);
        let rsw_ssrc = (identity.next_u64() >> 32) as u32;
        let rsw_seq0 = (identity.next_u64() >> 48) as u16;
        let rsw_ts0 = (identity.next_u64() >> 32) as u32;
        let per_ms = self.profile.samples_per_ms();

        for slot in 0..self.dirs.len() {
            let direction = self.dirs[slot].direction;
            let talk_seed = self
                .config
                .seed
                .wrapping_add(GOLDEN_GAMMA.wrapping_mul(direction.index() as u64 + 1));
            let frames = generate_talkspurt(self.profile, n, talk_seed);
            let mut datagrams = Vec::with_capacity(n);
            for frame in frames {
                let packet = match direction {
                    Direction::IaxToRsw => MediaPacket::mini(
                        IaxMiniHeader::new(self.config.call_number, frame.capture_time_ms as u16),
                        frame.payload,
                    ),
                    Direction::RswToIax => {
                        let ts = rsw_ts0.wrapping_add((frame.capture_time_ms as u32).wrapping_mul(per_ms));
                        let mut h = RtpHeader::new(
                            self.profile.rtp_payload_type,
                            rsw_seq0.wrapping_add(frame.frame_index as u16),
                            ts,
                            rsw_ssrc,
                        );
                        h.marker = frame.frame_index == 0;
                        MediaPacket::rtp(h, frame.payload)
                    }
                };
                let bytes = packet.to_datagram().map_err(|source| SimError::Decode {
                    packet_id: frame.frame_index,
                    source,
                })?;
                let send_ms = frame.capture_time_ms as f64;
                self.trace.push(PacketTraceEvent {
                    packet_id: frame.frame_index,
                    direction,
                    send_time_ms: send_ms,
                    gateway_in_ms: send_ms,
                    gateway_out_ms: None,
                    receive_time_ms: None,
                    size_bytes_in: bytes.len(),
                    size_bytes_out: 0,
                });
                datagrams.push(bytes);
                self.schedule(
                    frame.capture_time_ms * 1000,
                    EventKind::FrameCaptured,
                    frame.frame_index,
                    direction,
                );
            }
            self.dirs[slot].datagrams = datagrams;
        }
        Ok(())
    }

    fn decode(direction: Direction, packet_id: u64, bytes: &[u8], into_gateway: bool) -> Result<MediaPacket, SimError> {
        let iax_side = (direction == Direction::IaxToRsw) == into_gateway;
        let decoded = if iax_side {
            codec::parse_mini(bytes).map(|(h, p)| MediaPacket::mini(h, p.to_vec()))
        } else {
            codec::parse_rtp(bytes).map(|(h, p)| MediaPacket::rtp(h, p.to_vec()))
        };
        decoded.map_err(|source| SimError::Decode { packet_id, source })
    }

    fn start_service(&mut self, slot: usize, now_us: u64) -> Result<(), SimError> {
        if self.dirs[slot].in_service.is_some() {
            return Ok(());
        }
        let direction = self.dirs[slot].direction;
        let next = match direction {
            Direction::IaxToRsw => self.gateway.next_for_rsw(),
            Direction::RswToIax => self.gateway.next_for_iax(),
        };
        if let Some((id, translated)) = next {
            self.dirs[slot].in_service = Some((id, translated?));
            self.schedule(now_us + self.processing_us, EventKind::GatewayTranslate, id, direction);
        }
        Ok(())
    }

    fn run(mut self) -> Result<SimOutcome, SimError> {
        self.build_sources()?;
        while let Some(Reverse(ev)) = self.heap.pop() {
            self.events.push(SimEvent {
                time_ms: us_to_ms(ev.time_us),
                kind: ev.kind,
                packet_id: ev.packet_id,
                direction: ev.direction,
            });
            let slot = self.slot(ev.direction);
            let ti = self.trace_index(ev.direction, ev.packet_id);
            let now = ev.time_us;
            match ev.kind {
                EventKind::FrameCaptured => {
                    let (base, span) = self.ingress_us;
                    let delay = sample_link_delay_us(base, span, &mut self.dirs[slot].ingress);
                    self.schedule(now + delay, EventKind::LinkDeliver, ev.packet_id, ev.direction);
                }
                EventKind::LinkDeliver => {
                    self.trace[ti].gateway_in_ms = us_to_ms(now);
                    let bytes = &self.dirs[slot].datagrams[ev.packet_id as usize];
                    let packet = Self::decode(ev.direction, ev.packet_id, bytes, true)?;
                    // Evicted packets stay marked undelivered in the trace.
                    let _evicted = match ev.direction {
                        Direction::IaxToRsw => self.gateway.accept_iax(ev.packet_id, packet),
                        Direction::RswToIax => self.gateway.accept_rsw(ev.packet_id, packet),
                    };
                    self.start_service(slot, now)?;
                }
                EventKind::GatewayTranslate => {
                    let (id, packet) = self.dirs[slot]
                        .in_service
                        .take()
                        .expect("translate event without packet in service");
                    debug_assert_eq!(id, ev.packet_id);
                    let bytes = packet
                        .to_datagram()
                        .map_err(|source| SimError::Decode { packet_id: id, source })?;
                    self.trace[ti].gateway_out_ms = Some(us_to_ms(now));
                    self.trace[ti].size_bytes_out = bytes.len();
                    self.dirs[slot].datagrams[id as usize] = bytes;
                    let (base, span) = self.egress_us;
                    let delay = sample_link_delay_us(base, span, &mut self.dirs[slot].egress);
                    self.schedule(now + delay, EventKind::Received, id, ev.direction);
                    self.start_service(slot, now)?;
                }
                EventKind::Received => {
                    let bytes = &self.dirs[slot].datagrams[ev.packet_id as usize];
                    Self::decode(ev.direction, ev.packet_id, bytes, false)?;
                    self.trace[ti].receive_time_ms = Some(us_to_ms(now));
                }
            }
        }
        Ok(SimOutcome {
            trace: self.trace,
            events: self.events,
        })
    }
}

/// Runs a scenario and returns the trace together with the event log.
pub fn simulate(config: &ScenarioConfig, registry: &CodecRegistry) -> Result<SimOutcome, SimError> {
    config.validate()?;
    let profile = registry
        .get(&config.codec)
        .ok_or_else(|| SimError::UnknownCodec(config.codec.clone()))?;
    profile.validate()?;
    Simulator::new(config, profile)?.run()
}

/// Runs a scenario against the built-in codec profiles.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Vec<PacketTraceEvent>, SimError> {
    simulate(config, &CodecRegistry::builtin()).map(|o| o.trace)
}

/// One summary per (direction, packet count).
pub fn run_sweep(
    base: &ScenarioConfig,
    packet_counts: &[usize],
    registry: &CodecRegistry,
) -> Result<Vec<MetricsSummary<f64>>, SimError> {
    if packet_counts.is_empty() {
        return Err(SimError::InvalidConfig("sweep needs at least one packet count".into()));
    }
    let mut out = Vec::new();
    for &count in packet_counts {
        let config = ScenarioConfig {
            packet_count: count,
            ..base.clone()
        };
        let outcome = simulate(&config, registry)?;
        for &direction in config.direction.directions() {
            out.push(metrics::summarize(direction, &outcome.trace)?);
        }
    }
    out.sort_by_key(|s| (s.direction, s.packet_count));
    Ok(out)
}

pub const TRACE_CSV_HEADER: &str = "packet_id,direction,send_ms,gw_in_ms,gw_out_ms,recv_ms,bytes_in,bytes_out";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

/// Writes the trace as CSV, ordered by direction then packet id. Each
/// `preamble` line is emitted first as a `# ` comment.
pub fn write_trace_csv<W: Write>(trace: &[PacketTraceEvent], preamble: &[String], mut out: W) -> io::Result<()> {
    for line in preamble {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    let mut rows: Vec<&PacketTraceEvent> = trace.iter().collect();
    rows.sort_by_key(|e| (e.direction, e.packet_id));
    for e in rows {
        writeln!(
            out,
            "{},{},{:.3},{:.3},{},{},{},{}",
            e.packet_id,
            e.direction.label(),
            e.send_time_ms,
            e.gateway_in_ms,
            fmt_opt(e.gateway_out_ms),
            fmt_opt(e.receive_time_ms),
            e.size_bytes_in,
            e.size_bytes_out
        )?;
    }
    out.flush()
}
