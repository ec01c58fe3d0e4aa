//! Ethernet / IPv4 / TCP / UDP decoding, plus a small frame builder used by
//! the synthetic traffic generator and test fixtures.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const ETHERNET_HEADER_LEN: usize = 14;
pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_IPV6: u16 = 0x86DD;
pub const IPPROTO_TCP: u8 = 6;
pub const IPPROTO_UDP: u8 = 17;

pub const TCP_FIN: u8 = 0x01;
pub const TCP_SYN: u8 = 0x02;
pub const TCP_PSH: u8 = 0x08;
pub const TCP_ACK: u8 = 0x10;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddr(pub [u8; 6]);

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid MAC address {0:?}")]
pub struct ParseMacError(pub String);

impl FromStr for MacAddr {
    type Err = ParseMacError;

    /// Accepts six hex octets separated by `:` or `-`, case-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split([':', '-']).collect();
        if parts.len() != 6 {
            return Err(ParseMacError(s.to_string()));
        }
        let mut out = [0u8; 6];
        for (o, p) in out.iter_mut().zip(parts) {
            if p.len() != 2 {
                return Err(ParseMacError(s.to_string()));
            }
            *o = u8::from_str_radix(p, 16).map_err(|_| ParseMacError(s.to_string()))?;
        }
        Ok(MacAddr(out))
    }
}

impl Serialize for MacAddr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An IPv4 address and transport port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub ip: Ipv4Addr,
    pub port: u16,
}

impl Endpoint {
    pub fn new(ip: impl Into<Ipv4Addr>, port: u16) -> Self {
        Self { ip: ip.into(), port }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ip, self.port)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpSegment<'a> {
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub flags: u8,
    pub payload: &'a [u8],
}

/// Classification of a single link-layer frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame<'a> {
    Tcp(TcpSegment<'a>),
    Udp { src: Endpoint, dst: Endpoint },
    Ipv6,
    /// IPv4 carrying neither TCP nor UDP.
    OtherTransport(u8),
    /// Non-IP ethertype (ARP, LLDP, ...).
    NonIp(u16),
    /// Non-initial IPv4 fragment; no transport header to read.
    Fragment,
    Malformed(&'static str),
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

pub fn decode_frame(bytes: &[u8]) -> Frame<'_> {
    if bytes.len() < ETHERNET_HEADER_LEN {
        return Frame::Malformed("short ethernet header");
    }
    let mut dst_mac = [0u8; 6];
    let mut src_mac = [0u8; 6];
    dst_mac.copy_from_slice(&bytes[0..6]);
    src_mac.copy_from_slice(&bytes[6..12]);
    let ethertype = be16(bytes, 12);
    match ethertype {
        ETHERTYPE_IPV4 => {}
        ETHERTYPE_IPV6 => return Frame::Ipv6,
        other => return Frame::NonIp(other),
    }

    let ip = &bytes[ETHERNET_HEADER_LEN..];
    if ip.len() < 20 {
        return Frame::Malformed("short ipv4 header");
    }
    if ip[0] >> 4 != 4 {
        return Frame::Malformed("ipv4 ethertype with wrong version");
    }
    let ihl = usize::from(ip[0] & 0x0f) * 4;
    if ihl < 20 || ip.len() < ihl {
        return Frame::Malformed("bad ipv4 header length");
    }
    let total_len = usize::from(be16(ip, 2));
    if total_len < ihl {
        return Frame::Malformed("ipv4 total length below header length");
    }
    // Ethernet trailer padding lies beyond total_len; snaplen may cut short.
    let ip = &ip[..total_len.min(ip.len())];
    let frag = be16(ip, 6);
    if frag & 0x1fff != 0 {
        return Frame::Fragment;
    }
    let proto = ip[9];
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let l4 = &ip[ihl..];

    match proto {
        IPPROTO_TCP => {
            if l4.len() < 20 {
                return Frame::Malformed("short tcp header");
            }
            let data_offset = usize::from(l4[12] >> 4) * 4;
            if data_offset < 20 || l4.len() < data_offset {
                return Frame::Malformed("bad tcp data offset");
            }
            Frame::Tcp(TcpSegment {
                src_mac: MacAddr(src_mac),
                dst_mac: MacAddr(dst_mac),
                src: Endpoint::new(src_ip, be16(l4, 0)),
                dst: Endpoint::new(dst_ip, be16(l4, 2)),
                flags: l4[13],
                payload: &l4[data_offset..],
            })
        }
        IPPROTO_UDP => {
            if l4.len() < 8 {
                return Frame::Malformed("short udp header");
            }
            Frame::Udp {
                src: Endpoint::new(src_ip, be16(l4, 0)),
                dst: Endpoint::new(dst_ip, be16(l4, 2)),
            }
        }
        other => Frame::OtherTransport(other),
    }
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .map(|c| u32::from(u16::from_be_bytes([c[0], *c.get(1).unwrap_or(&0)])))
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

fn ipv4_packet(src: Ipv4Addr, dst: Ipv4Addr, proto: u8, ident: u16, l4: &[u8]) -> Vec<u8> {
    let total = 20 + l4.len();
    let mut ip = Vec::with_capacity(total);
    ip.extend_from_slice(&[0x45, 0]);
    ip.extend_from_slice(&(total as u16).to_be_bytes());
    ip.extend_from_slice(&ident.to_be_bytes());
    ip.extend_from_slice(&[0x40, 0, 64, proto, 0, 0]);
    ip.extend_from_slice(&src.octets());
    ip.extend_from_slice(&dst.octets());
    let csum = ipv4_checksum(&ip);
    ip[10..12].copy_from_slice(&csum.to_be_bytes());
    ip.extend_from_slice(l4);
    ip
}

fn ethernet(src: MacAddr, dst: MacAddr, ethertype: u16, body: &[u8]) -> Vec<u8> {
    let mut f = Vec::with_capacity(ETHERNET_HEADER_LEN + body.len());
    f.extend_from_slice(&dst.0);
    f.extend_from_slice(&src.0);
    f.extend_from_slice(&ethertype.to_be_bytes());
    f.extend_from_slice(body);
    f
}

/// Parameters for a synthetic TCP/IPv4 Ethernet frame.
#[derive(Debug, Clone)]
pub struct TcpFrameSpec<'a> {
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub seq: u32,
    pub ack: u32,
    pub flags: u8,
    /// Raw TCP option bytes; padded with NOPs to a 4-byte multiple.
    pub options: &'a [u8],
    pub payload: &'a [u8],
}

pub fn build_tcp_frame(spec: &TcpFrameSpec<'_>) -> Vec<u8> {
    let mut opts = spec.options.to_vec();
    while !opts.len().is_multiple_of(4) {
        opts.push(1);
    }
    let header_len = 20 + opts.len();
    let mut tcp = Vec::with_capacity(header_len + spec.payload.len());
    tcp.extend_from_slice(&spec.src.port.to_be_bytes());
    tcp.extend_from_slice(&spec.dst.port.to_be_bytes());
    tcp.extend_from_slice(&spec.seq.to_be_bytes());
    tcp.extend_from_slice(&spec.ack.to_be_bytes());
    tcp.push(((header_len / 4) as u8) << 4);
    tcp.push(spec.flags);
    tcp.extend_from_slice(&64240u16.to_be_bytes());
    // checksum and urgent pointer left zero
    tcp.extend_from_slice(&[0, 0, 0, 0]);
    tcp.extend_from_slice(&opts);
    tcp.extend_from_slice(spec.payload);
    let ip = ipv4_packet(spec.src.ip, spec.dst.ip, IPPROTO_TCP, spec.seq as u16, &tcp);
    ethernet(spec.src_mac, spec.dst_mac, ETHERTYPE_IPV4, &ip)
}

pub fn build_udp_frame(
    src_mac: MacAddr,
    dst_mac: MacAddr,
    src: Endpoint,
    dst: Endpoint,
    payload: &[u8],
) -> Vec<u8> {
    let mut udp = Vec::with_capacity(8 + payload.len());
    udp.extend_from_slice(&src.port.to_be_bytes());
    udp.extend_from_slice(&dst.port.to_be_bytes());
    udp.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
    udp.extend_from_slice(&[0, 0]);
    udp.extend_from_slice(payload);
    let ip = ipv4_packet(src.ip, dst.ip, IPPROTO_UDP, 0, &udp);
    ethernet(src_mac, dst_mac, ETHERTYPE_IPV4, &ip)
}

/// An ARP request frame, handy as non-IP noise.
pub fn build_arp_frame(src_mac: MacAddr, sender: Ipv4Addr, target: Ipv4Addr) -> Vec<u8> {
    let mut arp = vec![0, 1, 0x08, 0, 6, 4, 0, 1];
    arp.extend_from_slice(&src_mac.0);
    arp.extend_from_slice(&sender.octets());
    arp.extend_from_slice(&[0; 6]);
    arp.extend_from_slice(&target.octets());
    ethernet(src_mac, MacAddr([0xff; 6]), 0x0806, &arp)
}
