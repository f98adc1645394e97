//! Header translation between IAX mini frames and RTP.
//!
//! Mini frames carry a 16-bit millisecond timestamp; RTP carries a 32-bit
//! sample clock. One millisecond maps to `sample_rate_hz / 1000` RTP ticks
//! (8 for GSM). Mini frames have no sequence number, so the IAX→RSW path
//! synthesizes a wrapping counter and the RSW→IAX path only uses the RTP
//! sequence for loss and reorder accounting.

use std::collections::VecDeque;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use thiserror::Error;

use crate::codec::{IaxMiniHeader, MediaHeader, MediaPacket, RtpHeader, MAX_CALL_NUMBER};
use crate::framing::CodecProfile;

/// One second of GSM audio.
pub const DEFAULT_BUFFER_CAPACITY: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranslateError {
    #[error("invalid call number {0}; must be in 1..=32767")]
    InvalidCallNumber(u16),
    #[error("mini frame call number {got} does not match session call {expected}")]
    CallNumberMismatch { expected: u16, got: u16 },
    #[error("RTP SSRC {got:#010x} does not match session SSRC {expected:#010x}")]
    SsrcMismatch { expected: u32, got: u32 },
    #[error("payload is {got} bytes, codec frame is {expected}")]
    PayloadSizeMismatch { expected: usize, got: usize },
    #[error("RTP timestamp delta {delta} is not a whole number of milliseconds")]
    NonIntegralTimestamp { delta: u32 },
    #[error("expected a {expected} packet")]
    UnexpectedHeader { expected: &'static str },
}

/// Extends a 16-bit millisecond timestamp against the last extended value.
///
/// Returns the nonnegative value whose low 16 bits are `low16` and which is
/// nearest to `last_extended_ms`. An exact half-range tie resolves upward.
pub fn extend_timestamp(low16: u16, last_extended_ms: u64) -> u64 {
    const RANGE: u64 = 1 << 16;
    const HALF: u64 = RANGE / 2;
    let forward = u64::from(low16.wrapping_sub(last_extended_ms as u16));
    if forward <= HALF {
        return last_extended_ms + forward;
    }
    let backward = RANGE - forward;
    match last_extended_ms.checked_sub(backward) {
        Some(v) => v,
        None => last_extended_ms + forward,
    }
}

/// Loss and reorder accounting for an inbound RTP stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SequenceTracker {
    pub highest: Option<u16>,
    pub received: u64,
    pub gaps: u64,
    pub late: u64,
}

impl SequenceTracker {
    pub fn observe(&mut self, seq: u16) {
        self.received += 1;
        match self.highest {
            None => self.highest = Some(seq),
            Some(prev) => {
                let step = seq.wrapping_sub(prev) as i16;
                if step > 0 {
                    self.gaps += (step - 1) as u64;
                    self.highest = Some(seq);
                } else {
                    self.late += 1;
                }
            }
        }
    }
}

/// Per-call translation state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionBinding {
    pub iax_call_number: u16,
    pub rtp_ssrc: u32,
    pub next_rtp_seq: u16,
    pub rtp_ts_base: u32,
    pub session_epoch_ms: u64,
    pub last_extended_ms: u64,
    pub first_packet_sent: bool,
    pub inbound_seq: SequenceTracker,
}

/// Opens a binding whose SSRC and initial sequence number are drawn from
/// xoshiro256++ seeded with `ssrc_seed`: the upper 32 bits of the first
/// output become the SSRC, the upper 16 bits of the second the sequence.
pub fn open_binding(iax_call_number: u16, ssrc_seed: u64) -> Result<SessionBinding, TranslateError> {
    if iax_call_number == 0 || iax_call_number > MAX_CALL_NUMBER {
        return Err(TranslateError::InvalidCallNumber(iax_call_number));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(ssrc_seed);
    let rtp_ssrc = (rng.next_u64() >> 32) as u32;
    let next_rtp_seq = (rng.next_u64() >> 48) as u16;
    Ok(SessionBinding {
        iax_call_number,
        rtp_ssrc,
        next_rtp_seq,
        rtp_ts_base: 0,
        session_epoch_ms: 0,
        last_extended_ms: 0,
        first_packet_sent: false,
        inbound_seq: SequenceTracker::default(),
    })
}

fn check_payload(payload: &[u8], profile: &CodecProfile) -> Result<(), TranslateError> {
    if payload.len() != profile.frame_payload_bytes {
        return Err(TranslateError::PayloadSizeMismatch {
            expected: profile.frame_payload_bytes,
            got: payload.len(),
        });
    }
    Ok(())
}

/// Replaces a mini header with an RTP header.
pub fn iax_to_rsw(
    packet: &MediaPacket,
    binding: &mut SessionBinding,
    profile: &CodecProfile,
) -> Result<MediaPacket, TranslateError> {
    let MediaHeader::Mini(mini) = packet.header else {
        return Err(TranslateError::UnexpectedHeader { expected: "mini" });
    };
    if mini.source_call_number != binding.iax_call_number {
        return Err(TranslateError::CallNumberMismatch {
            expected: binding.iax_call_number,
            got: mini.source_call_number,
        });
    }
    check_payload(&packet.payload, profile)?;

    let extended = extend_timestamp(mini.timestamp_low16, binding.last_extended_ms);
    let ticks = extended.wrapping_mul(u64::from(profile.samples_per_ms())) as u32;
    let mut header = RtpHeader::new(
        profile.rtp_payload_type,
        binding.next_rtp_seq,
        binding.rtp_ts_base.wrapping_add(ticks),
        binding.rtp_ssrc,
    );
    header.marker = !binding.first_packet_sent;

    binding.first_packet_sent = true;
    binding.next_rtp_seq = binding.next_rtp_seq.wrapping_add(1);
    binding.last_extended_ms = binding.last_extended_ms.max(extended);

    Ok(MediaPacket::rtp(header, packet.payload.clone()))
}

/// Replaces an RTP header with a mini header.
pub fn rsw_to_iax(
    packet: &MediaPacket,
    binding: &mut SessionBinding,
    profile: &CodecProfile,
) -> Result<MediaPacket, TranslateError> {
    let MediaHeader::Rtp(rtp) = packet.header else {
        return Err(TranslateError::UnexpectedHeader { expected: "RTP" });
    };
    if rtp.ssrc != binding.rtp_ssrc {
        return Err(TranslateError::SsrcMismatch {
            expected: binding.rtp_ssrc,
            got: rtp.ssrc,
        });
    }
    check_payload(&packet.payload, profile)?;

    let delta = rtp.timestamp.wrapping_sub(binding.rtp_ts_base);
    let per_ms = profile.samples_per_ms();
    if delta % per_ms != 0 {
        return Err(TranslateError::NonIntegralTimestamp { delta });
    }
    binding.inbound_seq.observe(rtp.sequence_number);
    let header = IaxMiniHeader::new(binding.iax_call_number, (delta / per_ms) as u16);
    Ok(MediaPacket::mini(header, packet.payload.clone()))
}

/// Bounded FIFO with drop-oldest overflow.
#[derive(Debug, Clone)]
pub struct TranslationBuffer<T = MediaPacket> {
    queue: VecDeque<T>,
    capacity: usize,
    dropped: u64,
    pushed: u64,
    popped: u64,
}

impl<T> TranslationBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            queue: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
            dropped: 0,
            pushed: 0,
            popped: 0,
        }
    }

    /// Enqueues `item`, evicting the oldest entry when full. Returns the
    /// evicted entry, or `item` itself when capacity is zero.
    pub fn push_evicting(&mut self, item: T) -> Option<T> {
        self.pushed += 1;
        if self.capacity == 0 {
            self.dropped += 1;
            return Some(item);
        }
        let evicted = if self.queue.len() == self.capacity {
            self.dropped += 1;
            self.queue.pop_front()
        } else {
            None
        };
        self.queue.push_back(item);
        evicted
    }

    /// Enqueues `item`; returns true when a packet had to be dropped.
    pub fn push(&mut self, item: T) -> bool {
        self.push_evicting(item).is_some()
    }

    pub fn pop(&mut self) -> Option<T> {
        let item = self.queue.pop_front();
        if item.is_some() {
            self.popped += 1;
        }
        item
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn popped(&self) -> u64 {
        self.popped
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.queue.iter()
    }
}

/// The translation server: one buffer and one binding per direction.
///
/// Buffers hold packets in their source format, each tagged with a caller
/// key; translation happens when a packet is taken out. The inbound RTP
/// source (SSRC and timestamp origin) is latched from the first RSW packet
/// that reaches translation.
#[derive(Debug, Clone)]
pub struct ConferenceGateway<K = ()> {
    profile: CodecProfile,
    outbound: SessionBinding,
    inbound: SessionBinding,
    inbound_latched: bool,
    iax_to_rsw_buf: TranslationBuffer<(K, MediaPacket)>,
    rsw_to_iax_buf: TranslationBuffer<(K, MediaPacket)>,
}

impl<K> ConferenceGateway<K> {
    pub fn new(
        profile: CodecProfile,
        call_number: u16,
        seed: u64,
        buffer_capacity: usize,
    ) -> Result<Self, TranslateError> {
        let outbound = open_binding(call_number, seed)?;
        let inbound = open_binding(call_number, seed)?;
        Ok(Self {
            profile,
            outbound,
            inbound,
            inbound_latched: false,
            iax_to_rsw_buf: TranslationBuffer::new(buffer_capacity),
            rsw_to_iax_buf: TranslationBuffer::new(buffer_capacity),
        })
    }

    pub fn profile(&self) -> &CodecProfile {
        &self.profile
    }

    /// Binding used to stamp RTP headers toward the RSW client.
    pub fn outbound_binding(&self) -> &SessionBinding {
        &self.outbound
    }

    /// Binding used to strip RTP headers arriving from the RSW client.
    pub fn inbound_binding(&self) -> &SessionBinding {
        &self.inbound
    }

    pub fn iax_to_rsw_buffer(&self) -> &TranslationBuffer<(K, MediaPacket)> {
        &self.iax_to_rsw_buf
    }

    pub fn rsw_to_iax_buffer(&self) -> &TranslationBuffer<(K, MediaPacket)> {
        &self.rsw_to_iax_buf
    }

    /// Stores a packet received from the IAX client. Returns the key of the
    /// packet dropped on overflow, if any.
    pub fn accept_iax(&mut self, key: K, packet: MediaPacket) -> Option<K> {
        self.iax_to_rsw_buf.push_evicting((key, packet)).map(|(k, _)| k)
    }

    /// Stores a packet received from the RSW client. Returns the key of the
    /// packet dropped on overflow, if any.
    pub fn accept_rsw(&mut self, key: K, packet: MediaPacket) -> Option<K> {
        self.rsw_to_iax_buf.push_evicting((key, packet)).map(|(k, _)| k)
    }

    /// Takes the oldest IAX packet and converts it to RTP.
    pub fn next_for_rsw(&mut self) -> Option<(K, Result<MediaPacket, TranslateError>)> {
        let (key, packet) = self.iax_to_rsw_buf.pop()?;
        Some((key, iax_to_rsw(&packet, &mut self.outbound, &self.profile)))
    }

    /// Takes the oldest RSW packet and converts it to a mini frame.
    pub fn next_for_iax(&mut self) -> Option<(K, Result<MediaPacket, TranslateError>)> {
        let (key, packet) = self.rsw_to_iax_buf.pop()?;
        if let MediaHeader::Rtp(h) = packet.header {
            if !self.inbound_latched {
                self.inbound.rtp_ssrc = h.ssrc;
                self.inbound.rtp_ts_base = h.timestamp;
                self.inbound_latched = true;
            }
        }
        Some((key, rsw_to_iax(&packet, &mut self.inbound, &self.profile)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh_binding(call: u16) -> SessionBinding {
        SessionBinding {
            iax_call_number: call,
            rtp_ssrc: 0xAABB_CCDD,
            next_rtp_seq: 0,
            rtp_ts_base: 0,
            session_epoch_ms: 0,
            last_extended_ms: 0,
            first_packet_sent: false,
            inbound_seq: SequenceTracker::default(),
        }
    }

    #[test]
    fn extend_examples() {
        assert_eq!(extend_timestamp(5, 0), 5);
        assert_eq!(extend_timestamp(1, 65534), 65537);
        assert_eq!(extend_timestamp(65535, 65537), 65535);
    }

    #[test]
    fn extend_tie_goes_up() {
        assert_eq!(extend_timestamp(32768, 0), 32768);
        assert_eq!(extend_timestamp(0, 100_000 + 32768 - (100_000 % 65536)), 131072);
    }

    #[test]
    fn extend_never_negative() {
        assert_eq!(extend_timestamp(65000, 10), 65000);
    }

    #[test]
    fn iax_to_rsw_first_and_second() {
        let gsm = CodecProfile::gsm();
        let mut b = fresh_binding(1);
        let payload = vec![0x5A; 33];
        let out = iax_to_rsw(
            &MediaPacket::mini(IaxMiniHeader::new(1, 20), payload.clone()),
            &mut b,
            &gsm,
        )
        .unwrap();
        let MediaHeader::Rtp(h) = out.header else { panic!() };
        assert_eq!(
            (h.payload_type, h.sequence_number, h.timestamp, h.ssrc),
            (3, 0, 160, 0xAABB_CCDD)
        );
        assert!(h.marker);
        assert_eq!(out.payload, payload);

        let out = iax_to_rsw(&MediaPacket::mini(IaxMiniHeader::new(1, 40), payload), &mut b, &gsm).unwrap();
        let MediaHeader::Rtp(h) = out.header else { panic!() };
        assert_eq!((h.sequence_number, h.timestamp, h.marker), (1, 320, false));
    }

    #[test]
    fn iax_to_rsw_errors() {
        let gsm = CodecProfile::gsm();
        let mut b = fresh_binding(1);
        let wrong_call = MediaPacket::mini(IaxMiniHeader::new(2, 0), vec![0; 33]);
        assert_eq!(
            iax_to_rsw(&wrong_call, &mut b, &gsm),
            Err(TranslateError::CallNumberMismatch { expected: 1, got: 2 })
        );
        let short = MediaPacket::mini(IaxMiniHeader::new(1, 0), vec![0; 32]);
        assert_eq!(
            iax_to_rsw(&short, &mut b, &gsm),
            Err(TranslateError::PayloadSizeMismatch { expected: 33, got: 32 })
        );
        let rtp = MediaPacket::rtp(RtpHeader::new(3, 0, 0, 0), vec![0; 33]);
        assert!(matches!(
            iax_to_rsw(&rtp, &mut b, &gsm),
            Err(TranslateError::UnexpectedHeader { .. })
        ));
        // failed attempts leave state untouched
        assert_eq!(b, fresh_binding(1));
    }

    #[test]
    fn rsw_to_iax_examples() {
        let gsm = CodecProfile::gsm();
        let mut b = fresh_binding(7);
        let rtp = MediaPacket::rtp(RtpHeader::new(3, 9, 160, 0xAABB_CCDD), vec![1; 33]);
        let out = rsw_to_iax(&rtp, &mut b, &gsm).unwrap();
        assert_eq!(out.header, MediaHeader::Mini(IaxMiniHeader::new(7, 20)));
        assert_eq!(out.payload, vec![1; 33]);

        let rtp = MediaPacket::rtp(RtpHeader::new(3, 10, 0, 0xAABB_CCDD), vec![1; 33]);
        assert_eq!(
            rsw_to_iax(&rtp, &mut b, &gsm).unwrap().header,
            MediaHeader::Mini(IaxMiniHeader::new(7, 0))
        );
    }

    #[test]
    fn rsw_to_iax_errors() {
        let gsm = CodecProfile::gsm();
        let mut b = fresh_binding(7);
        let foreign = MediaPacket::rtp(RtpHeader::new(3, 0, 0, 1), vec![0; 33]);
        assert!(matches!(
            rsw_to_iax(&foreign, &mut b, &gsm),
            Err(TranslateError::SsrcMismatch { .. })
        ));
        let odd = MediaPacket::rtp(RtpHeader::new(3, 0, 161, 0xAABB_CCDD), vec![0; 33]);
        assert_eq!(
            rsw_to_iax(&odd, &mut b, &gsm),
            Err(TranslateError::NonIntegralTimestamp { delta: 161 })
        );
    }

    #[test]
    fn rsw_to_iax_wraps_base() {
        let gsm = CodecProfile::gsm();
        let mut b = fresh_binding(7);
        b.rtp_ts_base = u32::MAX - 7;
        let rtp = MediaPacket::rtp(RtpHeader::new(3, 0, 8, 0xAABB_CCDD), vec![0; 33]);
        assert_eq!(
            rsw_to_iax(&rtp, &mut b, &gsm).unwrap().header,
            MediaHeader::Mini(IaxMiniHeader::new(7, 2))
        );
    }

    #[test]
    fn sequence_tracking() {
        let mut t = SequenceTracker::default();
        for s in [65534u16, 65535, 1, 0, 2] {
            t.observe(s);
        }
        assert_eq!(t.received, 5);
        assert_eq!(t.gaps, 1);
        assert_eq!(t.late, 1);
        assert_eq!(t.highest, Some(2));
    }

    #[test]
    fn open_binding_rules() {
        assert_eq!(open_binding(0, 1), Err(TranslateError::InvalidCallNumber(0)));
        assert!(open_binding(32767, 1).is_ok());
        assert!(open_binding(32768, 1).is_err());
        let a = open_binding(5, 42).unwrap();
        assert_eq!(a, open_binding(5, 42).unwrap());
        assert!(!a.first_packet_sent);
        assert_eq!((a.rtp_ts_base, a.last_extended_ms), (0, 0));
    }

    #[test]
    fn buffer_drop_oldest() {
        let mut buf = TranslationBuffer::new(2);
        assert!(!buf.push('a'));
        assert!(!buf.push('b'));
        assert!(buf.push('c'));
        assert_eq!(buf.iter().copied().collect::<Vec<_>>(), vec!['b', 'c']);
        assert_eq!(buf.dropped(), 1);
    }

    #[test]
    fn buffer_zero_capacity() {
        let mut buf = TranslationBuffer::new(0);
        for i in 0..5 {
            assert!(buf.push(i));
        }
        assert!(buf.is_empty());
        assert_eq!(buf.dropped(), 5);
    }

    #[test]
    fn buffer_fifo() {
        let mut buf = TranslationBuffer::new(100);
        for i in 0..10 {
            buf.push(i);
        }
        assert_eq!(buf.dropped(), 0);
        assert_eq!(buf.pop(), Some(0));
        buf.push(10);
        let rest: Vec<_> = std::iter::from_fn(|| buf.pop()).collect();
        assert_eq!(rest, (1..=10).collect::<Vec<_>>());
        assert_eq!(buf.pop(), None);
        assert_eq!(buf.pushed(), buf.popped() + buf.len() as u64 + buf.dropped());
    }

    #[test]
    fn gateway_latches_inbound_source() {
        let gsm = CodecProfile::gsm();
        let mut gw = ConferenceGateway::new(gsm, 4, 1, 8).unwrap();
        gw.accept_rsw(0, MediaPacket::rtp(RtpHeader::new(3, 100, 5000, 0x1234), vec![0; 33]));
        gw.accept_rsw(1, MediaPacket::rtp(RtpHeader::new(3, 101, 5160, 0x1234), vec![0; 33]));
        let (k0, first) = gw.next_for_iax().unwrap();
        let (k1, second) = gw.next_for_iax().unwrap();
        let (first, second) = (first.unwrap(), second.unwrap());
        assert_eq!((k0, k1), (0, 1));
        assert_eq!(first.header, MediaHeader::Mini(IaxMiniHeader::new(4, 0)));
        assert_eq!(second.header, MediaHeader::Mini(IaxMiniHeader::new(4, 20)));
        assert!(gw.next_for_iax().is_none());
    }

    #[test]
    fn gateway_reports_evicted_key() {
        let mut gw = ConferenceGateway::new(CodecProfile::gsm(), 4, 1, 1).unwrap();
        let pkt = || MediaPacket::mini(IaxMiniHeader::new(4, 0), vec![0; 33]);
        assert_eq!(gw.accept_iax(10u64, pkt()), None);
        assert_eq!(gw.accept_iax(11, pkt()), Some(10));
        assert_eq!(gw.next_for_rsw().map(|(k, _)| k), Some(11));
    }
}
