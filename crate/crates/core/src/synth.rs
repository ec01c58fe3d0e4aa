//! Synthetic IoT traffic: per-device TCP sessions with distinct payload
//! byte distributions, written as ordinary Ethernet pcaps.
//!
//! Each device talks to its own server. Its requests carry constant
//! high-valued fields at device-specific offsets over printable filler
//! with a device-specific value range and length. Captures also carry
//! UDP, ARP and handshake-only TCP noise so the ingestion filters have
//! something to drop.

use std::net::Ipv4Addr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capture::frame::{
    build_arp_frame, build_tcp_frame, build_udp_frame, TcpFrameSpec, TCP_ACK, TCP_FIN, TCP_PSH, TCP_SYN,
};
use crate::capture::{write_pcap, Endpoint, MacAddr, MacMap, Timestamp};

/// Fixed bytes a device writes at one offset of every request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub offset: usize,
    pub bytes: Vec<u8>,
}

/// Payload generator parameters for one synthetic device.
///
/// Requests are filler drawn from `alphabet` with the device's `fields`
/// stamped over it, so devices differ both in value mix and in where their
/// constant protocol bytes sit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub mac: MacAddr,
    pub ip: Ipv4Addr,
    pub server: Endpoint,
    pub fields: Vec<Field>,
    /// Inclusive byte range filler is drawn from.
    pub alphabet: (u8, u8),
    /// Inclusive request length range.
    pub request_len: (usize, usize),
    pub reply_preamble: Vec<u8>,
    pub exchanges: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub devices: usize,
    pub sessions_per_device: usize,
    /// Capture files the sessions are spread over.
    pub files: usize,
    /// Handshake-only sessions per device (no payload).
    pub empty_sessions_per_device: usize,
    pub udp_flows: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { devices: 5, sessions_per_device: 1200, files: 2, empty_sessions_per_device: 10, udp_flows: 20, seed: 7 }
    }
}

const MAX_DEVICES: usize = 16;

/// Deterministic device table for `count` devices (at most 16).
pub fn device_profiles(count: usize, seed: u64) -> Vec<DeviceProfile> {
    assert!(count <= MAX_DEVICES, "at most {MAX_DEVICES} synthetic devices");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d0e5);
    // deal disjoint slots so no two devices put constant bytes at one offset
    let mut slots: Vec<usize> = (0..FIELD_SLOTS).collect();
    slots.shuffle(&mut rng);
    (0..count)
        .map(|i| {
            let i8 = i as u8;
            let mut mine = slots[i * FIELDS_PER_DEVICE..(i + 1) * FIELDS_PER_DEVICE].to_vec();
            mine.sort_unstable();
            let fields: Vec<Field> = mine
                .into_iter()
                .map(|slot| Field {
                    offset: slot * SLOT_LEN,
                    bytes: (0..rng.random_range(4..=SLOT_LEN)).map(|_| rng.random_range(128..=255)).collect(),
                })
                .collect();
            let min_len = fields.iter().map(|f| f.offset + f.bytes.len()).max().unwrap_or(0);
            let lo = 0x20 + rng.random_range(0..16u8);
            let hi = 0x7e - rng.random_range(0..16u8);
            let extra = rng.random_range(40..400);
            DeviceProfile {
                name: format!("synthetic device {i}"),
                mac: MacAddr([0x02, 0x1a, 0x00, 0x00, 0x10, i8]),
                ip: Ipv4Addr::new(192, 168, 1, 10 + i8),
                server: Endpoint::new([52, 20, i8, 1], [443, 80, 1883, 8883, 8080][i % 5]),
                fields,
                alphabet: (lo, hi),
                request_len: (min_len, min_len + extra),
                reply_preamble: (0..4).map(|_| rng.random()).collect(),
                exchanges: (1, 1 + i % 3),
            }
        })
        .collect()
}

const SLOT_LEN: usize = 8;
const FIELDS_PER_DEVICE: usize = 4;
/// Field offsets are multiples of `SLOT_LEN` below `FIELD_SLOTS * SLOT_LEN`.
const FIELD_SLOTS: usize = MAX_DEVICES * FIELDS_PER_DEVICE;

pub fn mac_map(profiles: &[DeviceProfile]) -> MacMap {
    MacMap::from_pairs(profiles.iter().map(|p| (p.mac.to_string(), p.name.clone())))
        .expect("synthetic MACs are distinct")
}

const GATEWAY_MAC: MacAddr = MacAddr([0x02, 0x00, 0x5e, 0x00, 0x00, 0x01]);

struct Packet {
    ts: u64,
    frame: Vec<u8>,
}

fn session_packets(
    rng: &mut ChaCha8Rng,
    dev: &DeviceProfile,
    client_port: u16,
    start_us: u64,
    with_payload: bool,
) -> Vec<Packet> {
    let client = Endpoint::new(dev.ip, client_port);
    let server = dev.server;
    let mut out = Vec::new();
    let mut ts = start_us;
    let (mut cseq, mut sseq) = (rng.random::<u32>(), rng.random::<u32>());
    let mut push = |from_client: bool, flags: u8, payload: &[u8], seq: u32, ack: u32, ts: u64| {
        let (src_mac, dst_mac, src, dst) =
            if from_client { (dev.mac, GATEWAY_MAC, client, server) } else { (GATEWAY_MAC, dev.mac, server, client) };
        let options: &[u8] = if flags & TCP_SYN != 0 { &[2, 4, 5, 0xb4] } else { &[] };
        out.push(Packet {
            ts,
            frame: build_tcp_frame(&TcpFrameSpec { src_mac, dst_mac, src, dst, seq, ack, flags, options, payload }),
        });
    };
    push(true, TCP_SYN, &[], cseq, 0, ts);
    ts += rng.random_range(200..3000);
    push(false, TCP_SYN | TCP_ACK, &[], sseq, cseq.wrapping_add(1), ts);
    cseq = cseq.wrapping_add(1);
    sseq = sseq.wrapping_add(1);
    ts += rng.random_range(50..500);
    push(true, TCP_ACK, &[], cseq, sseq, ts);

    if with_payload {
        let exchanges = rng.random_range(dev.exchanges.0..=dev.exchanges.1);
        for _ in 0..exchanges {
            let len = rng.random_range(dev.request_len.0..=dev.request_len.1);
            let mut req: Vec<u8> = (0..len).map(|_| rng.random_range(dev.alphabet.0..=dev.alphabet.1)).collect();
            for f in &dev.fields {
                req[f.offset..f.offset + f.bytes.len()].copy_from_slice(&f.bytes);
            }
            ts += rng.random_range(1000..50_000);
            push(true, TCP_PSH | TCP_ACK, &req, cseq, sseq, ts);
            cseq = cseq.wrapping_add(req.len() as u32);

            let mut reply = dev.reply_preamble.clone();
            let reply_len = rng.random_range(8..64);
            reply.extend((0..reply_len).map(|_| rng.random_range(dev.alphabet.0..=dev.alphabet.1)));
            ts += rng.random_range(1000..80_000);
            push(false, TCP_PSH | TCP_ACK, &reply, sseq, cseq, ts);
            sseq = sseq.wrapping_add(reply.len() as u32);
        }
    }
    ts += rng.random_range(1000..10_000);
    push(true, TCP_FIN | TCP_ACK, &[], cseq, sseq, ts);
    ts += rng.random_range(200..3000);
    push(false, TCP_FIN | TCP_ACK, &[], sseq, cseq.wrapping_add(1), ts);
    out
}

/// A generated capture set: one pcap byte buffer per file.
#[derive(Debug, Clone)]
pub struct SyntheticCapture {
    pub profiles: Vec<DeviceProfile>,
    pub files: Vec<Vec<u8>>,
    /// TCP sessions per device that carry payload.
    pub payload_sessions: usize,
}

pub fn generate(cfg: &SynthConfig) -> SyntheticCapture {
    let profiles = device_profiles(cfg.devices, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let files = cfg.files.max(1);
    let mut per_file: Vec<Vec<Packet>> = (0..files).map(|_| Vec::new()).collect();
    let window_us: u64 = 3_600 * 1_000_000;

    for dev in &profiles {
        let total = cfg.sessions_per_device + cfg.empty_sessions_per_device;
        for s in 0..total {
            let with_payload = s < cfg.sessions_per_device;
            // unique client port per session keeps 5-tuples distinct
            let port = 20_000 + s as u16;
            let start = rng.random_range(0..window_us);
            let file = rng.random_range(0..files);
            per_file[file].extend(session_packets(&mut rng, dev, port, start, with_payload));
        }
    }
    for f in 0..cfg.udp_flows {
        let dev = &profiles[f % profiles.len()];
        let client = Endpoint::new(dev.ip, 40_000 + f as u16);
        let dns = Endpoint::new([192, 168, 1, 1], 53);
        let start = rng.random_range(0..window_us);
        let file = rng.random_range(0..files);
        let q: Vec<u8> = (0..rng.random_range(20..40)).map(|_| rng.random()).collect();
        per_file[file].push(Packet { ts: start, frame: build_udp_frame(dev.mac, GATEWAY_MAC, client, dns, &q) });
        per_file[file].push(Packet {
            ts: start + 900,
            frame: build_udp_frame(GATEWAY_MAC, dev.mac, dns, client, &q),
        });
        per_file[file].push(Packet {
            ts: start + 1500,
            frame: build_arp_frame(dev.mac, dev.ip, Ipv4Addr::new(192, 168, 1, 1)),
        });
    }

    let files = per_file
        .into_iter()
        .map(|mut pkts| {
            pkts.sort_by_key(|p| p.ts);
            write_pcap(pkts.iter().map(|p| {
                (
                    Timestamp { secs: 1_500_000_000 + (p.ts / 1_000_000) as u32, frac: (p.ts % 1_000_000) as u32 },
                    p.frame.as_slice(),
                )
            }))
        })
        .collect();
    SyntheticCapture { profiles, files, payload_sessions: cfg.sessions_per_device }
}
