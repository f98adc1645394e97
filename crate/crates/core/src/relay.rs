//! Live UDP relay between an IAX peer and an RSW peer.
//!
//! One socket per side. Datagrams arriving on the IAX socket are classified,
//! mini frames are translated to RTP and sent from the RSW socket to the RSW
//! peer; RTP arriving on the RSW socket goes the other way. Full frames and
//! anything that fails to decode or translate are counted as rejects.

use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, warn};
use thiserror::Error;

use crate::codec::{self, IaxFrameKind, MediaPacket, MAX_CALL_NUMBER};
use crate::framing::CodecProfile;
use crate::sim::Direction;
use crate::translator::{ConferenceGateway, DEFAULT_BUFFER_CAPACITY};

const POLL_INTERVAL: Duration = Duration::from_millis(20);
const MAX_DATAGRAM: usize = 2048;

#[derive(Debug, Error)]
pub enum RelayError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: SocketAddr, source: io::Error },
    #[error("invalid relay configuration: {0}")]
    InvalidConfig(String),
    #[error("relay is not running")]
    NotRunning,
    #[error("socket setup failed: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayConfig {
    pub iax_listen: SocketAddr,
    pub rsw_listen: SocketAddr,
    pub iax_peer: SocketAddr,
    pub rsw_peer: SocketAddr,
    pub codec: CodecProfile,
    pub iax_call_number: u16,
    pub seed: u64,
    pub stats_interval_ms: u64,
    pub buffer_capacity: usize,
}

impl RelayConfig {
    pub fn new(iax_listen: SocketAddr, rsw_listen: SocketAddr, iax_peer: SocketAddr, rsw_peer: SocketAddr) -> Self {
        Self {
            iax_listen,
            rsw_listen,
            iax_peer,
            rsw_peer,
            codec: CodecProfile::gsm(),
            iax_call_number: 1,
            seed: 1,
            stats_interval_ms: 1000,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
        }
    }

    pub fn validate(&self) -> Result<(), RelayError> {
        if self.iax_listen == self.rsw_listen && self.iax_listen.port() != 0 {
            return Err(RelayError::InvalidConfig(format!(
                "IAX and RSW listen endpoints are both {}",
                self.iax_listen
            )));
        }
        if self.iax_call_number == 0 || self.iax_call_number > MAX_CALL_NUMBER {
            return Err(RelayError::InvalidConfig(format!(
                "call number {} outside 1..=32767",
                self.iax_call_number
            )));
        }
        self.codec
            .validate()
            .map_err(|e| RelayError::InvalidConfig(e.to_string()))
    }
}

/// Counters for one relay direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DirectionStats {
    pub packets_in: u64,
    pub packets_out: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    /// Malformed, full-frame, or untranslatable datagrams.
    pub rejects: u64,
    /// Buffer overflow or send failure.
    pub drops: u64,
}

impl DirectionStats {
    /// in == out + rejects + drops
    pub fn reconciles(&self) -> bool {
        self.packets_in == self.packets_out + self.rejects + self.drops
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RelayStats {
    pub iax_to_rsw: DirectionStats,
    pub rsw_to_iax: DirectionStats,
    pub uptime_ms: u64,
}

impl RelayStats {
    pub fn direction(&self, d: Direction) -> &DirectionStats {
        match d {
            Direction::IaxToRsw => &self.iax_to_rsw,
            Direction::RswToIax => &self.rsw_to_iax,
        }
    }

    /// Same counters, ignoring uptime.
    pub fn same_counters(&self, other: &RelayStats) -> bool {
        self.iax_to_rsw == other.iax_to_rsw && self.rsw_to_iax == other.rsw_to_iax
    }

    pub fn render(&self) -> String {
        let line = |d: &DirectionStats| {
            format!(
                "in={} out={} bytes_out={} rejects={} drops={}",
                d.packets_in, d.packets_out, d.bytes_out, d.rejects, d.drops
            )
        };
        format!(
            "uptime={}ms iax-to-rsw[{}] rsw-to-iax[{}]",
            self.uptime_ms,
            line(&self.iax_to_rsw),
            line(&self.rsw_to_iax)
        )
    }
}

struct Shared {
    gateway: ConferenceGateway,
    stats: RelayStats,
}

struct Worker {
    direction: Direction,
    rx: UdpSocket,
    tx: UdpSocket,
    peer: SocketAddr,
    shared: Arc<Mutex<Shared>>,
    stop: Arc<AtomicBool>,
}

fn lock(shared: &Mutex<Shared>) -> MutexGuard<'_, Shared> {
    shared.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl Worker {
    fn decode(&self, datagram: &[u8]) -> Result<MediaPacket, String> {
        match self.direction {
            Direction::IaxToRsw => match codec::classify_iax_datagram(datagram) {
                IaxFrameKind::Mini => codec::parse_mini(datagram)
                    .map(|(h, p)| MediaPacket::mini(h, p.to_vec()))
                    .map_err(|e| e.to_string()),
                IaxFrameKind::Full => Err("full frame (signaling) ignored".into()),
                IaxFrameKind::Invalid => Err("runt IAX datagram".into()),
            },
            Direction::RswToIax => codec::parse_rtp(datagram)
                .map(|(h, p)| MediaPacket::rtp(h, p.to_vec()))
                .map_err(|e| e.to_string()),
        }
    }

    fn handle(&self, datagram: &[u8]) {
        let decoded = self.decode(datagram);
        let mut guard = lock(&self.shared);
        let Shared { gateway, stats } = &mut *guard;
        let counters = match self.direction {
            Direction::IaxToRsw => &mut stats.iax_to_rsw,
            Direction::RswToIax => &mut stats.rsw_to_iax,
        };
        counters.packets_in += 1;
        counters.bytes_in += datagram.len() as u64;

        let packet = match decoded {
            Ok(p) => p,
            Err(reason) => {
                debug!("{}: rejected datagram: {reason}", self.direction);
                counters.rejects += 1;
                return;
            }
        };
        let overflowed = match self.direction {
            Direction::IaxToRsw => gateway.accept_iax((), packet),
            Direction::RswToIax => gateway.accept_rsw((), packet),
        };
        if overflowed.is_some() {
            counters.drops += 1;
        }
        loop {
            let next = match self.direction {
                Direction::IaxToRsw => gateway.next_for_rsw(),
                Direction::RswToIax => gateway.next_for_iax(),
            };
            let Some(((), translated)) = next else { break };
            let bytes = match translated
                .map_err(|e| e.to_string())
                .and_then(|p| p.to_datagram().map_err(|e| e.to_string()))
            {
                Ok(b) => b,
                Err(reason) => {
                    debug!("{}: translation rejected: {reason}", self.direction);
                    counters.rejects += 1;
                    continue;
                }
            };
            match self.tx.send_to(&bytes, self.peer) {
                Ok(_) => {
                    counters.packets_out += 1;
                    counters.bytes_out += bytes.len() as u64;
                }
                Err(e) => {
                    warn!("{}: send to {} failed: {e}", self.direction, self.peer);
                    counters.drops += 1;
                }
            }
        }
    }

    fn run(self) {
        let mut buf = [0u8; MAX_DATAGRAM];
        while !self.stop.load(Ordering::Acquire) {
            match self.rx.recv_from(&mut buf) {
                Ok((n, _from)) => {
                    if self.stop.load(Ordering::Acquire) {
                        break;
                    }
                    self.handle(&buf[..n]);
                }
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                // ICMP port-unreachable from an earlier send surfaces here on some platforms
                Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => {}
                Err(e) => {
                    warn!("{}: receive failed: {e}", self.direction);
                    thread::sleep(POLL_INTERVAL);
                }
            }
        }
    }
}

/// A running relay.
pub struct RelayHandle {
    shared: Arc<Mutex<Shared>>,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
    started: Instant,
    iax_addr: SocketAddr,
    rsw_addr: SocketAddr,
    running: bool,
}

fn bind(addr: SocketAddr) -> Result<UdpSocket, RelayError> {
    let sock = UdpSocket::bind(addr).map_err(|source| RelayError::BindFailure { addr, source })?;
    sock.set_read_timeout(Some(POLL_INTERVAL))?;
    Ok(sock)
}

pub fn start_relay(config: RelayConfig) -> Result<RelayHandle, RelayError> {
    config.validate()?;
    let iax_sock = bind(config.iax_listen)?;
    let rsw_sock = bind(config.rsw_listen)?;
    let iax_addr = iax_sock.local_addr()?;
    let rsw_addr = rsw_sock.local_addr()?;

    let gateway = ConferenceGateway::new(
        config.codec.clone(),
        config.iax_call_number,
        config.seed,
        config.buffer_capacity,
    )
    .map_err(|e| RelayError::InvalidConfig(e.to_string()))?;
    let shared = Arc::new(Mutex::new(Shared {
        gateway,
        stats: RelayStats::default(),
    }));
    let stop = Arc::new(AtomicBool::new(false));

    let workers = [
        Worker {
            direction: Direction::IaxToRsw,
            rx: iax_sock.try_clone()?,
            tx: rsw_sock.try_clone()?,
            peer: config.rsw_peer,
            shared: Arc::clone(&shared),
            stop: Arc::clone(&stop),
        },
        Worker {
            direction: Direction::RswToIax,
            rx: rsw_sock,
            tx: iax_sock,
            peer: config.iax_peer,
            shared: Arc::clone(&shared),
            stop: Arc::clone(&stop),
        },
    ];
    let workers = workers
        .into_iter()
        .map(|w| {
            thread::Builder::new()
                .name(format!("relay-{}", w.direction))
                .spawn(move || w.run())
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(RelayHandle {
        shared,
        stop,
        workers,
        started: Instant::now(),
        iax_addr,
        rsw_addr,
        running: true,
    })
}

impl RelayHandle {
    /// Bound address of the IAX-side socket.
    pub fn iax_addr(&self) -> SocketAddr {
        self.iax_addr
    }

    /// Bound address of the RSW-side socket.
    pub fn rsw_addr(&self) -> SocketAddr {
        self.rsw_addr
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    fn read_stats(&self) -> RelayStats {
        let mut stats = lock(&self.shared).stats;
        stats.uptime_ms = self.started.elapsed().as_millis() as u64;
        stats
    }

    pub fn snapshot_stats(&self) -> Result<RelayStats, RelayError> {
        if !self.running {
            return Err(RelayError::NotRunning);
        }
        Ok(self.read_stats())
    }

    /// Stops both workers and closes the sockets. No datagram is processed
    /// after this returns.
    pub fn stop_relay(&mut self) -> Result<RelayStats, RelayError> {
        if !self.running {
            return Err(RelayError::NotRunning);
        }
        self.shutdown();
        Ok(self.read_stats())
    }

    fn shutdown(&mut self) {
        self.running = false;
        self.stop.store(true, Ordering::Release);
        for w in self.workers.drain(..) {
            if w.join().is_err() {
                warn!("relay worker panicked");
            }
        }
    }
}

impl Drop for RelayHandle {
    fn drop(&mut self) {
        if self.running {
            self.shutdown();
        }
    }
}
