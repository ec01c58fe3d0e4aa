//! Classic libpcap file reading and writing.
//!
//! See <https://wiki.wireshark.org/Development/LibpcapFileFormat>. Only the
//! original format is handled; pcapng is detected and rejected.

use std::io::{self, Write};

use super::CaptureError;

pub const MAGIC_MICROS: u32 = 0xA1B2_C3D4;
pub const MAGIC_NANOS: u32 = 0xA1B2_3C4D;
const PCAPNG_MAGIC: u32 = 0x0A0D_0D0A;

pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;
pub const LINKTYPE_ETHERNET: u32 = 1;

/// Capture timestamp as stored in the record header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp {
    pub secs: u32,
    /// Microseconds, or nanoseconds for nanosecond-resolution files.
    pub frac: u32,
}

/// One captured frame together with its position in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPacket {
    pub timestamp: Timestamp,
    pub link_bytes: Vec<u8>,
    pub capture_order: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Little => u32::from_le_bytes(a),
            Endian::Big => u32::from_be_bytes(a),
        }
    }
}

/// Parsed global header fields that matter downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcapHeader {
    pub nanosecond: bool,
    pub snaplen: u32,
    pub linktype: u32,
}

fn parse_header(data: &[u8]) -> Result<(PcapHeader, Endian), CaptureError> {
    if data.len() < 4 {
        return Err(CaptureError::Format(format!(
            "file too short for a pcap header ({} bytes)",
            data.len()
        )));
    }
    let le = u32::from_le_bytes([data[0], data[1], data[2], data[3]]);
    let be = u32::from_be_bytes([data[0], data[1], data[2], data[3]]);
    if le == PCAPNG_MAGIC {
        return Err(CaptureError::Unsupported("pcapng".into()));
    }
    let (endian, nanosecond) = match (le, be) {
        (MAGIC_MICROS, _) => (Endian::Little, false),
        (MAGIC_NANOS, _) => (Endian::Little, true),
        (_, MAGIC_MICROS) => (Endian::Big, false),
        (_, MAGIC_NANOS) => (Endian::Big, true),
        _ => {
            return Err(CaptureError::Format(format!(
                "bad pcap magic {:02x}{:02x}{:02x}{:02x}",
                data[0], data[1], data[2], data[3]
            )))
        }
    };
    if data.len() < GLOBAL_HEADER_LEN {
        return Err(CaptureError::Format("truncated pcap global header".into()));
    }
    let header = PcapHeader {
        nanosecond,
        snaplen: endian.u32(&data[16..20]),
        linktype: endian.u32(&data[20..24]),
    };
    Ok((header, endian))
}

/// Parse a whole pcap file held in memory.
///
/// Records are returned in file order with `capture_order` counting from 0.
/// Header endianness follows the magic number; link type must be Ethernet.
pub fn parse_pcap(data: &[u8]) -> Result<Vec<RawPacket>, CaptureError> {
    let (header, endian) = parse_header(data)?;
    if header.linktype != LINKTYPE_ETHERNET {
        return Err(CaptureError::Unsupported(format!(
            "link type {} (only Ethernet is handled)",
            header.linktype
        )));
    }
    let mut packets = Vec::new();
    let mut offset = GLOBAL_HEADER_LEN;
    let mut index = 0u64;
    while offset < data.len() {
        let rest = &data[offset..];
        if rest.len() < RECORD_HEADER_LEN {
            return Err(CaptureError::TruncatedRecord {
                index,
                reason: format!("record header has {} of 16 bytes", rest.len()),
            });
        }
        let secs = endian.u32(&rest[0..4]);
        let frac = endian.u32(&rest[4..8]);
        let caplen = endian.u32(&rest[8..12]) as usize;
        let body = &rest[RECORD_HEADER_LEN..];
        if body.len() < caplen {
            return Err(CaptureError::TruncatedRecord {
                index,
                reason: format!("captured length {caplen} but only {} bytes remain", body.len()),
            });
        }
        packets.push(RawPacket {
            timestamp: Timestamp { secs, frac },
            link_bytes: body[..caplen].to_vec(),
            capture_order: index,
        });
        offset += RECORD_HEADER_LEN + caplen;
        index += 1;
    }
    Ok(packets)
}

/// Writes a little-endian, microsecond-resolution, Ethernet pcap stream.
pub struct PcapWriter<W: Write> {
    inner: W,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W) -> io::Result<Self> {
        inner.write_all(&MAGIC_MICROS.to_le_bytes())?;
        inner.write_all(&2u16.to_le_bytes())?;
        inner.write_all(&4u16.to_le_bytes())?;
        inner.write_all(&0i32.to_le_bytes())?;
        inner.write_all(&0u32.to_le_bytes())?;
        inner.write_all(&65535u32.to_le_bytes())?;
        inner.write_all(&LINKTYPE_ETHERNET.to_le_bytes())?;
        Ok(Self { inner })
    }

    pub fn write_packet(&mut self, ts: Timestamp, frame: &[u8]) -> io::Result<()> {
        let len = frame.len() as u32;
        self.inner.write_all(&ts.secs.to_le_bytes())?;
        self.inner.write_all(&ts.frac.to_le_bytes())?;
        self.inner.write_all(&len.to_le_bytes())?;
        self.inner.write_all(&len.to_le_bytes())?;
        self.inner.write_all(frame)
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

/// Serialize frames into an in-memory pcap file.
pub fn write_pcap<'a, I>(frames: I) -> Vec<u8>
where
    I: IntoIterator<Item = (Timestamp, &'a [u8])>,
{
    let mut w = PcapWriter::new(Vec::new()).expect("writing to Vec cannot fail");
    for (ts, frame) in frames {
        w.write_packet(ts, frame).expect("writing to Vec cannot fail");
    }
    w.into_inner()
}
