//! Media-plane interworking between IAX2 mini frames and RTP (the RSW side).
//!
//! The crate is organized bottom-up:
//!
//! * [`codec`] parses and serializes the two media headers,
//! * [`framing`] models fixed-size codec frames and per-side bandwidth,
//! * [`translator`] rewrites headers in both directions and owns the
//!   gateway buffers,
//! * [`sim`] runs the one-to-one topology in virtual time,
//! * [`metrics`] turns traces into delay and jitter figures,
//! * [`relay`] does the same translation on live UDP sockets.
//!
//! Metric computations are generic over the float type; [`Summary`] and
//! [`Report`] are the `f64` instantiations used throughout the tooling.

pub mod codec;
pub mod framing;
pub mod metrics;
pub mod relay;
pub mod scalar;
pub mod sim;
pub mod translator;

pub use codec::{CodecError, IaxMiniHeader, MediaHeader, MediaPacket, RtpHeader};
pub use framing::{CodecProfile, Side};
pub use relay::{start_relay, RelayConfig, RelayError, RelayHandle, RelayStats};
pub use scalar::Scalar;
pub use sim::{CodecRegistry, Direction, DirectionSpec, LinkModel, PacketTraceEvent, ScenarioConfig, SimError};
pub use translator::{ConferenceGateway, SessionBinding, TranslateError, TranslationBuffer};

/// Metrics summary in double precision.
pub type Summary = metrics::MetricsSummary<f64>;
/// Metrics summary in single precision.
pub type Summary32 = metrics::MetricsSummary<f32>;
/// Acceptance report in double precision.
pub type Report = metrics::PassFailReport<f64>;
/// Acceptance report in single precision.
pub type Report32 = metrics::PassFailReport<f32>;
