//! Session payload fingerprints: header stripping, deduplication and the
//! fixed 784-byte trim/pad normalization.

mod image;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::capture::{SessionKey, SessionRecord};

pub use image::{to_image, GrayImage};

/// Bytes in one fingerprint (one 28x28 raster).
pub const FINGERPRINT_LEN: usize = 784;
pub const IMAGE_SIDE: usize = 28;

pub type Digest = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FingerprintError {
    #[error("cannot build a fingerprint from an empty payload")]
    EmptyPayload,
    #[error("expected {FINGERPRINT_LEN} bytes, got {0}")]
    WrongLength(usize),
}

pub fn payload_digest(payload: &[u8]) -> Digest {
    Sha256::digest(payload).into()
}

/// Where a fingerprint came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub file_id: String,
    pub key: SessionKey,
}

/// Exactly 784 bytes taken from the front of a session payload.
///
/// Equality compares the bytes only; digest and origin are provenance.
#[derive(Clone)]
pub struct PayloadFingerprint {
    bytes: Box<[u8; FINGERPRINT_LEN]>,
    source_digest: Option<Digest>,
    origin: Option<Origin>,
}

impl PayloadFingerprint {
    /// Trim to the first 784 bytes or zero-pad up to 784.
    pub fn normalize(payload: &[u8]) -> Result<Self, FingerprintError> {
        if payload.is_empty() {
            return Err(FingerprintError::EmptyPayload);
        }
        let mut bytes = Box::new([0u8; FINGERPRINT_LEN]);
        let n = payload.len().min(FINGERPRINT_LEN);
        bytes[..n].copy_from_slice(&payload[..n]);
        Ok(Self { bytes, source_digest: Some(payload_digest(payload)), origin: None })
    }

    /// Wrap bytes that are already normalized (e.g. read back from IDX).
    pub fn from_normalized(bytes: &[u8]) -> Result<Self, FingerprintError> {
        let arr: [u8; FINGERPRINT_LEN] =
            bytes.try_into().map_err(|_| FingerprintError::WrongLength(bytes.len()))?;
        Ok(Self { bytes: Box::new(arr), source_digest: None, origin: None })
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn bytes(&self) -> &[u8; FINGERPRINT_LEN] {
        &self.bytes
    }

    /// Digest of the full pre-trim payload, when known.
    pub fn source_digest(&self) -> Option<&Digest> {
        self.source_digest.as_ref()
    }

    /// Digest of the 784 normalized bytes.
    pub fn content_digest(&self) -> Digest {
        payload_digest(&self.bytes[..])
    }

    pub fn origin(&self) -> Option<&Origin> {
        self.origin.as_ref()
    }

    /// Bytes scaled into `[0, 1]` for the classifier.
    pub fn scaled(&self) -> impl Iterator<Item = f64> + '_ {
        self.bytes.iter().map(|&b| f64::from(b) / 255.0)
    }
}

impl PartialEq for PayloadFingerprint {
    fn eq(&self, other: &Self) -> bool {
        self.bytes == other.bytes
    }
}

impl Eq for PayloadFingerprint {}

impl fmt::Debug for PayloadFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let used = FINGERPRINT_LEN - self.bytes.iter().rev().take_while(|&&b| b == 0).count();
        f.debug_struct("PayloadFingerprint")
            .field("head", &hex::encode(&self.bytes[..16]))
            .field("nonzero_prefix", &used)
            .field("origin", &self.origin)
            .finish()
    }
}

/// Concatenate the TCP payloads of every packet, both directions, in capture
/// order. Headers never reach `SessionRecord`, so this is a plain join.
pub fn extract_payload(session: &SessionRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(session.payload_len());
    for p in &session.packets {
        out.extend_from_slice(&p.payload);
    }
    out
}

/// Remembers full-payload digests and reports whether each payload is new.
#[derive(Debug, Default, Clone)]
pub struct Deduper {
    seen: HashSet<Digest>,
}

impl Deduper {
    pub fn new() -> Self {
        Self::default()
    }

    /// True if the payload is non-empty and was not seen before.
    pub fn admit(&mut self, payload: &[u8]) -> bool {
        !payload.is_empty() && self.seen.insert(payload_digest(payload))
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// Drop empty payloads and repeated payloads, keeping first occurrences.
pub fn dedupe(payloads: Vec<Vec<u8>>) -> Vec<Vec<u8>> {
    let mut d = Deduper::new();
    payloads.into_iter().filter(|p| d.admit(p)).collect()
}
