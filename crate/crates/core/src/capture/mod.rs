//! Capture ingestion: pcap parsing, TCP session splitting and MAC grouping.

pub mod frame;
pub mod macmap;
pub mod pcap;
pub mod session;

pub use frame::{decode_frame, Endpoint, Frame, MacAddr};
pub use macmap::{group_by_mac, MacMap, UnmappedPolicy, NON_IOT_LABEL, UNMAPPED_LABEL};
pub use pcap::{parse_pcap, write_pcap, PcapWriter, RawPacket, Timestamp};
pub use session::{split_sessions, Direction, FlowTuple, SessionKey, SessionRecord, SessionSplit, SplitStats};

#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error("malformed pcap: {0}")]
    Format(String),
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("truncated pcap record #{index}: {reason}")]
    TruncatedRecord { index: u64, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
}
