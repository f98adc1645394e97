//! Wire formats for the two media planes.
//!
//! The RSW side carries audio in plain RTP (12-byte fixed header, no CSRC
//! list). The IAX side carries audio in IAX2 mini frames: a 4-byte header
//! made of a 16-bit word holding the F bit plus a 15-bit source call number,
//! followed by the low 16 bits of the millisecond timestamp.
//!
//! Everything here works on UDP payloads. All multi-byte fields are
//! big-endian.

use thiserror::Error;

pub const RTP_VERSION: u8 = 2;
pub const RTP_HEADER_LEN: usize = 12;
pub const MINI_HEADER_LEN: usize = 4;

/// Largest IAX2 source call number (15 bits).
pub const MAX_CALL_NUMBER: u16 = 0x7FFF;

const F_BIT: u16 = 0x8000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("datagram too short: {len} bytes, need at least {need}")]
    TooShort { len: usize, need: usize },
    #[error("unsupported RTP version {0}")]
    UnsupportedVersion(u8),
    #[error("RTP header carries {0} CSRC entries; only csrc_count = 0 is supported")]
    CsrcPresent(u8),
    #[error("full frame (F bit set) is not a media frame")]
    NotMediaFrame,
    #[error("mini frame carries call number 0")]
    ZeroCallNumber,
    #[error("invalid header: {0}")]
    InvalidHeader(&'static str),
}

/// RTP fixed header as produced and accepted by the gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RtpHeader {
    pub version: u8,
    pub padding: bool,
    pub extension: bool,
    pub csrc_count: u8,
    pub marker: bool,
    pub payload_type: u8,
    pub sequence_number: u16,
    pub timestamp: u32,
    pub ssrc: u32,
}

impl RtpHeader {
    pub fn new(payload_type: u8, sequence_number: u16, timestamp: u32, ssrc: u32) -> Self {
        Self {
            version: RTP_VERSION,
            padding: false,
            extension: false,
            csrc_count: 0,
            marker: false,
            payload_type,
            sequence_number,
            timestamp,
            ssrc,
        }
    }

    fn validate(&self) -> Result<(), CodecError> {
        if self.version != RTP_VERSION {
            return Err(CodecError::InvalidHeader("version must be 2"));
        }
        if self.csrc_count != 0 {
            return Err(CodecError::InvalidHeader("csrc_count must be 0"));
        }
        if self.payload_type > 0x7F {
            return Err(CodecError::InvalidHeader("payload type exceeds 7 bits"));
        }
        Ok(())
    }

    /// Writes the 12 header bytes into `out`.
    pub fn write_to(&self, out: &mut Vec<u8>) -> Result<(), CodecError> {
        self.validate()?;
        let b0 =
            (self.version << 6) | (u8::from(self.padding) << 5) | (u8::from(self.extension) << 4) | self.csrc_count;
        let b1 = (u8::from(self.marker) << 7) | self.payload_type;
        out.push(b0);
        out.push(b1);
        out.extend_from_slice(&self.sequence_number.to_be_bytes());
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out.extend_from_slice(&self.ssrc.to_be_bytes());
        Ok(())
    }
}

/// IAX2 mini-frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IaxMiniHeader {
    pub source_call_number: u16,
    pub timestamp_low16: u16,
}

impl IaxMiniHeader {
    pub fn new(source_call_number: u16, timestamp_low16: u16) -> Self {
        Self {
            source_call_number,
            timestamp_low16,
        }
    }

    pub fn write_to(&self, out: &mut Vec<u8>) -> Result<(), CodecError> {
        if self.source_call_number == 0 {
            return Err(CodecError::InvalidHeader("call number must be nonzero"));
        }
        if self.source_call_number > MAX_CALL_NUMBER {
            return Err(CodecError::InvalidHeader("call number exceeds 15 bits"));
        }
        out.extend_from_slice(&self.source_call_number.to_be_bytes());
        out.extend_from_slice(&self.timestamp_low16.to_be_bytes());
        Ok(())
    }
}

/// Header of either media plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MediaHeader {
    Rtp(RtpHeader),
    Mini(IaxMiniHeader),
}

/// A media header plus its opaque codec payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MediaPacket {
    pub header: MediaHeader,
    pub payload: Vec<u8>,
}

impl MediaPacket {
    pub fn rtp(header: RtpHeader, payload: Vec<u8>) -> Self {
        Self {
            header: MediaHeader::Rtp(header),
            payload,
        }
    }

    pub fn mini(header: IaxMiniHeader, payload: Vec<u8>) -> Self {
        Self {
            header: MediaHeader::Mini(header),
            payload,
        }
    }

    /// Serializes the packet with whichever header it carries.
    pub fn to_datagram(&self) -> Result<Vec<u8>, CodecError> {
        match &self.header {
            MediaHeader::Rtp(h) => serialize_rtp(h, &self.payload),
            MediaHeader::Mini(h) => serialize_mini(h, &self.payload),
        }
    }

    /// Size of the serialized datagram (header plus payload).
    pub fn datagram_len(&self) -> usize {
        let header = match self.header {
            MediaHeader::Rtp(_) => RTP_HEADER_LEN,
            MediaHeader::Mini(_) => MINI_HEADER_LEN,
        };
        header + self.payload.len()
    }
}

pub fn parse_rtp(datagram: &[u8]) -> Result<(RtpHeader, &[u8]), CodecError> {
    if datagram.len() < RTP_HEADER_LEN {
        return Err(CodecError::TooShort {
            len: datagram.len(),
            need: RTP_HEADER_LEN,
        });
    }
    let b0 = datagram[0];
    let b1 = datagram[1];
    let version = b0 >> 6;
    if version != RTP_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let csrc_count = b0 & 0x0F;
    if csrc_count != 0 {
        return Err(CodecError::CsrcPresent(csrc_count));
    }
    let header = RtpHeader {
        version,
        padding: b0 & 0x20 != 0,
        extension: b0 & 0x10 != 0,
        csrc_count,
        marker: b1 & 0x80 != 0,
        payload_type: b1 & 0x7F,
        sequence_number: u16::from_be_bytes([datagram[2], datagram[3]]),
        timestamp: u32::from_be_bytes([datagram[4], datagram[5], datagram[6], datagram[7]]),
        ssrc: u32::from_be_bytes([datagram[8], datagram[9], datagram[10], datagram[11]]),
    };
    Ok((header, &datagram[RTP_HEADER_LEN..]))
}

pub fn serialize_rtp(header: &RtpHeader, payload: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(RTP_HEADER_LEN + payload.len());
    header.write_to(&mut out)?;
    out.extend_from_slice(payload);
    Ok(out)
}

pub fn parse_mini(datagram: &[u8]) -> Result<(IaxMiniHeader, &[u8]), CodecError> {
    if datagram.len() < MINI_HEADER_LEN {
        return Err(CodecError::TooShort {
            len: datagram.len(),
            need: MINI_HEADER_LEN,
        });
    }
    let word = u16::from_be_bytes([datagram[0], datagram[1]]);
    if word & F_BIT != 0 {
        return Err(CodecError::NotMediaFrame);
    }
    if word == 0 {
        return Err(CodecError::ZeroCallNumber);
    }
    let header = IaxMiniHeader {
        source_call_number: word,
        timestamp_low16: u16::from_be_bytes([datagram[2], datagram[3]]),
    };
    Ok((header, &datagram[MINI_HEADER_LEN..]))
}

pub fn serialize_mini(header: &IaxMiniHeader, payload: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(MINI_HEADER_LEN + payload.len());
    header.write_to(&mut out)?;
    out.extend_from_slice(payload);
    Ok(out)
}

/// What an IAX-side datagram looks like at first glance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IaxFrameKind {
    Mini,
    Full,
    Invalid,
}

pub fn classify_iax_datagram(datagram: &[u8]) -> IaxFrameKind {
    if datagram.len() < MINI_HEADER_LEN {
        IaxFrameKind::Invalid
    } else if datagram[0] & 0x80 != 0 {
        IaxFrameKind::Full
    } else {
        IaxFrameKind::Mini
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rtp_minimal_header_decodes() {
        let bytes = [0x80, 0x03, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
        let (h, payload) = parse_rtp(&bytes).unwrap();
        assert_eq!(h.version, 2);
        assert_eq!(h.payload_type, 3);
        assert_eq!(h.sequence_number, 0);
        assert_eq!(h.timestamp, 0);
        assert_eq!(h.ssrc, 0);
        assert!(!h.marker && !h.padding && !h.extension);
        assert!(payload.is_empty());
    }

    #[test]
    fn rtp_serialize_known_bytes() {
        let h = RtpHeader::new(3, 0, 0, 0);
        assert_eq!(
            serialize_rtp(&h, &[]).unwrap(),
            vec![0x80, 0x03, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]
        );
    }

    #[test]
    fn rtp_field_positions() {
        let mut h = RtpHeader::new(0x7F, 0x1234, 0xDEADBEEF, 0x0102_0304);
        h.marker = true;
        h.padding = true;
        let bytes = serialize_rtp(&h, &[9]).unwrap();
        assert_eq!(
            bytes,
            vec![0xA0, 0xFF, 0x12, 0x34, 0xDE, 0xAD, 0xBE, 0xEF, 0x01, 0x02, 0x03, 0x04, 9]
        );
    }

    #[test]
    fn rtp_too_short() {
        assert_eq!(parse_rtp(&[0x80; 11]), Err(CodecError::TooShort { len: 11, need: 12 }));
    }

    #[test]
    fn rtp_rejects_bad_version_and_csrc() {
        let mut bytes = [0u8; 12];
        bytes[0] = 0x40;
        assert_eq!(parse_rtp(&bytes), Err(CodecError::UnsupportedVersion(1)));
        bytes[0] = 0x81;
        assert_eq!(parse_rtp(&bytes), Err(CodecError::CsrcPresent(1)));
    }

    #[test]
    fn rtp_zero_header_is_invalid() {
        let h = RtpHeader {
            version: 0,
            padding: false,
            extension: false,
            csrc_count: 0,
            marker: false,
            payload_type: 0,
            sequence_number: 0,
            timestamp: 0,
            ssrc: 0,
        };
        assert!(matches!(serialize_rtp(&h, &[]), Err(CodecError::InvalidHeader(_))));
    }

    #[test]
    fn rtp_gsm_datagram_is_45_bytes() {
        let h = RtpHeader::new(3, 1, 160, 7);
        assert_eq!(serialize_rtp(&h, &[0u8; 33]).unwrap().len(), 45);
    }

    #[test]
    fn mini_decodes_call_and_timestamp() {
        let mut bytes = vec![0x00, 0x01, 0x00, 0x14];
        bytes.extend_from_slice(&[0xAB; 33]);
        let (h, payload) = parse_mini(&bytes).unwrap();
        assert_eq!(h.source_call_number, 1);
        assert_eq!(h.timestamp_low16, 20);
        assert_eq!(payload.len(), 33);
    }

    #[test]
    fn mini_full_frame_rejected() {
        assert_eq!(parse_mini(&[0x80, 0x01, 0, 0]), Err(CodecError::NotMediaFrame));
    }

    #[test]
    fn mini_zero_call_rejected() {
        assert_eq!(parse_mini(&[0, 0, 0, 5]), Err(CodecError::ZeroCallNumber));
        assert!(matches!(
            serialize_mini(&IaxMiniHeader::new(0, 0), &[]),
            Err(CodecError::InvalidHeader(_))
        ));
    }

    #[test]
    fn mini_serialize_known_bytes() {
        let h = IaxMiniHeader::new(1, 0);
        assert_eq!(serialize_mini(&h, &[]).unwrap(), vec![0, 1, 0, 0]);
        assert_eq!(serialize_mini(&h, &[0; 33]).unwrap().len(), 37);
        let top = IaxMiniHeader::new(MAX_CALL_NUMBER, 0xFFFF);
        assert_eq!(serialize_mini(&top, &[]).unwrap(), vec![0x7F, 0xFF, 0xFF, 0xFF]);
        assert!(serialize_mini(&IaxMiniHeader::new(0x8000, 0), &[]).is_err());
    }

    #[test]
    fn classify() {
        assert_eq!(classify_iax_datagram(&[0, 1, 0, 0]), IaxFrameKind::Mini);
        assert_eq!(classify_iax_datagram(&[0x80, 1, 0, 0, 6]), IaxFrameKind::Full);
        assert_eq!(classify_iax_datagram(&[0, 1, 0]), IaxFrameKind::Invalid);
        assert_eq!(classify_iax_datagram(&[]), IaxFrameKind::Invalid);
    }

    #[test]
    fn media_packet_len_law() {
        let p = MediaPacket::mini(IaxMiniHeader::new(3, 9), vec![1; 33]);
        assert_eq!(p.datagram_len(), p.to_datagram().unwrap().len());
        let p = MediaPacket::rtp(RtpHeader::new(3, 0, 0, 0), vec![1; 33]);
        assert_eq!(p.datagram_len(), p.to_datagram().unwrap().len());
    }
}
