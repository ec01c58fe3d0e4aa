use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::frame::{decode_frame, Endpoint, Frame, MacAddr, IPPROTO_TCP, IPPROTO_UDP};
use super::pcap::RawPacket;

/// A directed 5-tuple as seen on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowTuple {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub protocol: u8,
}

impl FlowTuple {
    pub fn reverse(self) -> Self {
        Self { src: self.dst, dst: self.src, protocol: self.protocol }
    }
}

/// Direction-free session identity: `endpoint_lo <= endpoint_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionKey {
    pub endpoint_lo: Endpoint,
    pub endpoint_hi: Endpoint,
    pub protocol: u8,
}

impl SessionKey {
    pub fn canonical(flow: FlowTuple) -> Self {
        let (lo, hi) = if flow.src <= flow.dst { (flow.src, flow.dst) } else { (flow.dst, flow.src) };
        Self { endpoint_lo: lo, endpoint_hi: hi, protocol: flow.protocol }
    }
}

impl fmt::Display for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let proto = match self.protocol {
            IPPROTO_TCP => "TCP".to_string(),
            IPPROTO_UDP => "UDP".to_string(),
            p => p.to_string(),
        };
        write!(f, "{}_{}_{}", proto, self.endpoint_lo, self.endpoint_hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    FromInitiator,
    ToInitiator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPacket {
    pub direction: Direction,
    pub payload: Vec<u8>,
    pub capture_order: u64,
}

/// One bidirectional TCP session within a single capture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub key: SessionKey,
    /// Source MAC of the earliest packet in the session.
    pub initiator_mac: MacAddr,
    /// Source endpoint of the earliest packet; anchors `Direction`.
    pub initiator: Endpoint,
    pub packets: Vec<SessionPacket>,
}

impl SessionRecord {
    pub fn payload_len(&self) -> usize {
        self.packets.iter().map(|p| p.payload.len()).sum()
    }
}

/// Counters for everything `split_sessions` saw, including what it dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub total_packets: u64,
    pub tcp_packets: u64,
    pub udp_packets: u64,
    /// Distinct bidirectional UDP flows discarded.
    pub udp_flows: u64,
    pub ipv6_packets: u64,
    pub non_ip_packets: u64,
    pub other_transport_packets: u64,
    pub fragment_packets: u64,
    pub malformed_packets: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionSplit {
    pub sessions: Vec<SessionRecord>,
    pub stats: SplitStats,
}

/// Group TCP packets into bidirectional sessions keyed by canonical 5-tuple.
///
/// Sessions are ordered by their first packet. There is no timeout and no
/// sequence-number reassembly: payloads stay in capture order. Everything
/// that is not IPv4/TCP is counted in the stats and dropped.
pub fn split_sessions(packets: &[RawPacket]) -> SessionSplit {
    let mut stats = SplitStats::default();
    let mut index: HashMap<SessionKey, usize> = HashMap::new();
    let mut sessions: Vec<SessionRecord> = Vec::new();
    let mut udp_keys: HashSet<SessionKey> = HashSet::new();

    for raw in packets {
        stats.total_packets += 1;
        match decode_frame(&raw.link_bytes) {
            Frame::Tcp(seg) => {
                stats.tcp_packets += 1;
                let flow = FlowTuple { src: seg.src, dst: seg.dst, protocol: IPPROTO_TCP };
                let key = SessionKey::canonical(flow);
                let slot = *index.entry(key).or_insert_with(|| {
                    sessions.push(SessionRecord {
                        key,
                        initiator_mac: seg.src_mac,
                        initiator: seg.src,
                        packets: Vec::new(),
                    });
                    sessions.len() - 1
                });
                let session = &mut sessions[slot];
                let direction = if seg.src == session.initiator {
                    Direction::FromInitiator
                } else {
                    Direction::ToInitiator
                };
                session.packets.push(SessionPacket {
                    direction,
                    payload: seg.payload.to_vec(),
                    capture_order: raw.capture_order,
                });
            }
            Frame::Udp { src, dst } => {
                stats.udp_packets += 1;
                udp_keys.insert(SessionKey::canonical(FlowTuple { src, dst, protocol: IPPROTO_UDP }));
            }
            Frame::Ipv6 => stats.ipv6_packets += 1,
            Frame::NonIp(_) => stats.non_ip_packets += 1,
            Frame::OtherTransport(_) => stats.other_transport_packets += 1,
            Frame::Fragment => stats.fragment_packets += 1,
            Frame::Malformed(_) => stats.malformed_packets += 1,
        }
    }
    stats.udp_flows = udp_keys.len() as u64;
    SessionSplit { sessions, stats }
}
