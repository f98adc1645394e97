use std::net::{SocketAddr, UdpSocket};
use std::thread;
use std::time::{Duration, Instant};

use iaxrsw_core::codec::{parse_mini, parse_rtp, serialize_mini, serialize_rtp, IaxMiniHeader, RtpHeader};
use iaxrsw_core::framing::{generate_talkspurt, CodecProfile};
use iaxrsw_core::relay::{start_relay, RelayConfig};

fn peer() -> UdpSocket {
    let s = UdpSocket::bind("127.0.0.1:0").unwrap();
    s.set_read_timeout(Some(Duration::from_millis(500))).unwrap();
    s
}

fn any_port() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn drain(sock: &UdpSocket, want: usize) -> Vec<Vec<u8>> {
    let mut got = Vec::new();
    let mut buf = [0u8; 2048];
    let deadline = Instant::now() + Duration::from_secs(3);
    while got.len() < want && Instant::now() < deadline {
        match sock.recv_from(&mut buf) {
            Ok((n, _)) => got.push(buf[..n].to_vec()),
            Err(_) => break,
        }
    }
    got
}

#[test]
fn mini_frames_become_rtp() {
    let iax_peer = peer();
    let rsw_peer = peer();
    let mut config = RelayConfig::new(
        any_port(),
        any_port(),
        iax_peer.local_addr().unwrap(),
        rsw_peer.local_addr().unwrap(),
    );
    config.iax_call_number = 42;
    let mut relay = start_relay(config).unwrap();

    let frames = generate_talkspurt(&CodecProfile::gsm(), 20, 5);
    for f in &frames {
        let dgram = serialize_mini(&IaxMiniHeader::new(42, f.capture_time_ms as u16), &f.payload).unwrap();
        iax_peer.send_to(&dgram, relay.iax_addr()).unwrap();
    }
    // a full frame and a runt are rejected, not forwarded
    iax_peer
        .send_to(&[0x80, 0x2A, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0], relay.iax_addr())
        .unwrap();
    iax_peer.send_to(&[0x00, 0x2A], relay.iax_addr()).unwrap();

    let got = drain(&rsw_peer, frames.len());
    assert_eq!(got.len(), frames.len());
    let mut seqs = Vec::new();
    for (dgram, f) in got.iter().zip(&frames) {
        let (h, payload) = parse_rtp(dgram).unwrap();
        assert_eq!(h.payload_type, 3);
        assert_eq!(h.timestamp, f.capture_time_ms as u32 * 8);
        assert_eq!(payload, &f.payload[..]);
        seqs.push(h.sequence_number);
    }
    assert!(seqs.windows(2).all(|w| w[1] == w[0].wrapping_add(1)));

    thread::sleep(Duration::from_millis(100));
    let stats = relay.stop_relay().unwrap();
    assert_eq!(stats.iax_to_rsw.packets_in, 22);
    assert_eq!(stats.iax_to_rsw.packets_out, 20);
    assert_eq!(stats.iax_to_rsw.rejects, 2);
    assert!(stats.iax_to_rsw.reconciles());
    assert_eq!(stats.iax_to_rsw.bytes_out, 20 * 45);
}

#[test]
fn rtp_becomes_mini_frames() {
    let iax_peer = peer();
    let rsw_peer = peer();
    let mut config = RelayConfig::new(
        any_port(),
        any_port(),
        iax_peer.local_addr().unwrap(),
        rsw_peer.local_addr().unwrap(),
    );
    config.iax_call_number = 7;
    let mut relay = start_relay(config).unwrap();

    let frames = generate_talkspurt(&CodecProfile::gsm(), 10, 8);
    for f in &frames {
        let h = RtpHeader::new(
            3,
            500 + f.frame_index as u16,
            90_000 + f.capture_time_ms as u32 * 8,
            0xFEED,
        );
        rsw_peer
            .send_to(&serialize_rtp(&h, &f.payload).unwrap(), relay.rsw_addr())
            .unwrap();
    }
    let got = drain(&iax_peer, frames.len());
    assert_eq!(got.len(), frames.len());
    for (dgram, f) in got.iter().zip(&frames) {
        let (h, payload) = parse_mini(dgram).unwrap();
        assert_eq!(h, IaxMiniHeader::new(7, f.capture_time_ms as u16));
        assert_eq!(payload, &f.payload[..]);
    }
    // snapshots never go backwards
    let a = relay.snapshot_stats().unwrap();
    let b = relay.snapshot_stats().unwrap();
    assert!(b.rsw_to_iax.packets_in >= a.rsw_to_iax.packets_in);
    assert!(b.uptime_ms >= a.uptime_ms);
    let fin = relay.stop_relay().unwrap();
    assert_eq!(fin.rsw_to_iax.packets_out, 10);
    assert!(fin.rsw_to_iax.reconciles());
}

#[test]
fn nothing_processed_after_stop() {
    let iax_peer = peer();
    let rsw_peer = peer();
    let config = RelayConfig::new(
        any_port(),
        any_port(),
        iax_peer.local_addr().unwrap(),
        rsw_peer.local_addr().unwrap(),
    );
    let mut relay = start_relay(config).unwrap();
    let target = relay.iax_addr();
    let sender = thread::spawn(move || {
        let dgram = serialize_mini(&IaxMiniHeader::new(1, 0), &[0; 33]).unwrap();
        let end = Instant::now() + Duration::from_millis(300);
        while Instant::now() < end {
            let _ = iax_peer.send_to(&dgram, target);
            // stay below the listener's socket buffer
            thread::sleep(Duration::from_micros(500));
        }
    });
    thread::sleep(Duration::from_millis(100));
    let fin = relay.stop_relay().unwrap();
    sender.join().unwrap();
    assert!(fin.iax_to_rsw.reconciles());
    // everything the relay forwarded was sent before stop returned
    let got = drain(&rsw_peer, usize::MAX);
    assert_eq!(got.len() as u64, fin.iax_to_rsw.packets_out);
}
