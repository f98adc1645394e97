//! Codec framing model and per-side bandwidth accounting.
//!
//! Payloads are opaque fixed-size frames; no speech coding happens here.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use thiserror::Error;

use crate::codec::{MINI_HEADER_LEN, RTP_HEADER_LEN};

pub const IP_HEADER_LEN: usize = 20;
pub const UDP_HEADER_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FramingError {
    #[error("frame interval of {0} ms does not divide one second")]
    NonIntegralRate(u32),
    #[error("invalid codec profile: {0}")]
    InvalidProfile(String),
}

/// Which media plane a packet travels on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Iax,
    Rsw,
}

impl Side {
    /// Media header length on this side.
    pub fn header_len(self) -> usize {
        match self {
            Side::Iax => MINI_HEADER_LEN,
            Side::Rsw => RTP_HEADER_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodecProfile {
    pub name: String,
    pub bitrate_bps: u32,
    pub frame_interval_ms: u32,
    pub frame_payload_bytes: usize,
    pub rtp_payload_type: u8,
    pub sample_rate_hz: u32,
}

impl CodecProfile {
    /// GSM framing: 13.2 kb/s in 20 ms frames of 33 bytes, RTP static type 3.
    pub fn gsm() -> Self {
        Self {
            name: "gsm".to_owned(),
            bitrate_bps: 13_200,
            frame_interval_ms: 20,
            frame_payload_bytes: 33,
            rtp_payload_type: 3,
            sample_rate_hz: 8_000,
        }
    }

    /// Checks the structural invariants every profile must satisfy.
    pub fn validate(&self) -> Result<(), FramingError> {
        let bad = |m: &str| Err(FramingError::InvalidProfile(format!("{}: {m}", self.name)));
        if self.frame_interval_ms == 0 {
            return bad("frame_interval_ms must be positive");
        }
        if self.frame_payload_bytes == 0 {
            return bad("frame_payload_bytes must be positive");
        }
        if self.rtp_payload_type > 0x7F {
            return bad("rtp_payload_type exceeds 7 bits");
        }
        if self.sample_rate_hz == 0 || !self.sample_rate_hz.is_multiple_of(1000) {
            return bad("sample_rate_hz must be a positive multiple of 1000");
        }
        Ok(())
    }

    /// RTP clock ticks per millisecond.
    pub fn samples_per_ms(&self) -> u32 {
        self.sample_rate_hz / 1000
    }

    /// Payload bytes implied by bitrate and frame interval, when integral.
    pub fn implied_payload_bytes(&self) -> Option<usize> {
        let bits = u64::from(self.bitrate_bps) * u64::from(self.frame_interval_ms);
        bits.is_multiple_of(8000).then_some((bits / 8000) as usize)
    }
}

pub fn frames_per_second(profile: &CodecProfile) -> Result<u32, FramingError> {
    let interval = profile.frame_interval_ms;
    if interval == 0 || 1000 % interval != 0 {
        return Err(FramingError::NonIntegralRate(interval));
    }
    Ok(1000 / interval)
}

/// Bytes per packet on the wire including IP, UDP and the side's media header.
pub fn on_wire_bytes(profile: &CodecProfile, side: Side) -> usize {
    IP_HEADER_LEN + UDP_HEADER_LEN + side.header_len() + profile.frame_payload_bytes
}

pub fn on_wire_bandwidth_bps(profile: &CodecProfile, side: Side) -> Result<u64, FramingError> {
    let fps = frames_per_second(profile)?;
    Ok(on_wire_bytes(profile, side) as u64 * 8 * u64::from(fps))
}

/// Bandwidth of the codec payload alone.
pub fn payload_bandwidth_bps(profile: &CodecProfile) -> Result<u64, FramingError> {
    let fps = frames_per_second(profile)?;
    Ok(profile.frame_payload_bytes as u64 * 8 * u64::from(fps))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioFrame {
    pub payload: Vec<u8>,
    pub capture_time_ms: u64,
    pub frame_index: u64,
}

/// Deterministic stream of opaque frames.
///
/// Payload bytes come from xoshiro256++ seeded through SplitMix64 with
/// `seed`, consumed eight bytes at a time little-endian.
pub fn generate_talkspurt(profile: &CodecProfile, n_frames: usize, seed: u64) -> Vec<AudioFrame> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..n_frames as u64)
        .map(|i| {
            let mut payload = vec![0u8; profile.frame_payload_bytes];
            rng.fill_bytes(&mut payload);
            AudioFrame {
                payload,
                capture_time_ms: i * u64::from(profile.frame_interval_ms),
                frame_index: i,
            }
        })
        .collect()
}
