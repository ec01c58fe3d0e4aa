//! MNIST-style IDX containers: a big-endian magic (two zero bytes, a type
//! code, a dimension count), one big-endian u32 per dimension, then raw data.

use std::fs;
use std::path::Path;

use super::{DatasetError, LabeledDataset, SplitTag};
use crate::fingerprint::{PayloadFingerprint, FINGERPRINT_LEN, IMAGE_SIDE};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
const UBYTE: u8 = 0x08;

/// Magic and dimension sizes of an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<u32>,
}

impl IdxHeader {
    pub fn byte_len(&self) -> usize {
        4 + 4 * self.dims.len()
    }

    pub fn item_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.magic.to_be_bytes().to_vec();
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out
    }

    /// Parse the header at the front of `data`. Only unsigned-byte payloads
    /// are accepted.
    pub fn parse(data: &[u8]) -> Result<Self, DatasetError> {
        if data.len() < 4 {
            return Err(DatasetError::Format(format!("IDX file too short ({} bytes)", data.len())));
        }
        if data[0] != 0 || data[1] != 0 {
            return Err(DatasetError::Format(format!(
                "bad IDX magic {:02x}{:02x}{:02x}{:02x}",
                data[0], data[1], data[2], data[3]
            )));
        }
        if data[2] != UBYTE {
            return Err(DatasetError::Format(format!("unsupported IDX element type 0x{:02x}", data[2])));
        }
        let ndims = usize::from(data[3]);
        let need = 4 + 4 * ndims;
        if data.len() < need {
            return Err(DatasetError::Format("truncated IDX dimension list".into()));
        }
        let dims = data[4..need]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { magic: u32::from_be_bytes([data[0], data[1], data[2], data[3]]), dims })
    }
}

pub fn encode_images(ds: &LabeledDataset) -> Vec<u8> {
    let header = IdxHeader {
        magic: IMAGE_MAGIC,
        dims: vec![ds.len() as u32, IMAGE_SIDE as u32, IMAGE_SIDE as u32],
    };
    let mut out = header.encode();
    out.reserve(ds.len() * FINGERPRINT_LEN);
    for fp in ds.fingerprints() {
        out.extend_from_slice(fp.bytes());
    }
    out
}

pub fn encode_labels(ds: &LabeledDataset) -> Result<Vec<u8>, DatasetError> {
    let header = IdxHeader { magic: LABEL_MAGIC, dims: vec![ds.len() as u32] };
    let mut out = header.encode();
    for &l in ds.labels() {
        let b = u8::try_from(l)
            .map_err(|_| DatasetError::Invalid(format!("label {l} does not fit an IDX label byte")))?;
        out.push(b);
    }
    Ok(out)
}

/// Decode image and label file contents into an unsplit dataset whose label
/// names are the decimal class indices.
pub fn decode_pair(images: &[u8], labels: &[u8]) -> Result<LabeledDataset, DatasetError> {
    let ih = IdxHeader::parse(images)?;
    if ih.magic == LABEL_MAGIC {
        return Err(DatasetError::Consistency("image slot holds an IDX label file".into()));
    }
    if ih.magic != IMAGE_MAGIC || ih.dims.len() != 3 || ih.dims[1..] != [IMAGE_SIDE as u32, IMAGE_SIDE as u32] {
        return Err(DatasetError::Format(format!(
            "expected 0x{IMAGE_MAGIC:08x} with dims (N, 28, 28), found 0x{:08x} {:?}",
            ih.magic, ih.dims
        )));
    }
    let lh = IdxHeader::parse(labels)?;
    if lh.magic == IMAGE_MAGIC {
        return Err(DatasetError::Consistency("label slot holds an IDX image file".into()));
    }
    if lh.magic != LABEL_MAGIC || lh.dims.len() != 1 {
        return Err(DatasetError::Format(format!("expected label magic, found 0x{:08x}", lh.magic)));
    }
    let n = ih.dims[0] as usize;
    if lh.dims[0] as usize != n {
        return Err(DatasetError::Consistency(format!(
            "image file has {n} items but label file has {}",
            lh.dims[0]
        )));
    }
    let img_body = &images[ih.byte_len()..];
    let lbl_body = &labels[lh.byte_len()..];
    if img_body.len() != n * FINGERPRINT_LEN {
        return Err(DatasetError::Format(format!(
            "image data is {} bytes, expected {}",
            img_body.len(),
            n * FINGERPRINT_LEN
        )));
    }
    if lbl_body.len() != n {
        return Err(DatasetError::Format(format!("label data is {} bytes, expected {n}", lbl_body.len())));
    }
    let fingerprints = img_body
        .chunks_exact(FINGERPRINT_LEN)
        .map(|c| PayloadFingerprint::from_normalized(c).expect("chunk is 784 bytes"))
        .collect();
    let labels: Vec<usize> = lbl_body.iter().map(|&b| usize::from(b)).collect();
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let names = (0..classes).map(|i| i.to_string()).collect();
    LabeledDataset::new(fingerprints, labels, names, SplitTag::Unsplit)
}

pub fn write_idx(ds: &LabeledDataset, image_path: &Path, label_path: &Path) -> Result<(), DatasetError> {
    if ds.is_empty() {
        return Err(DatasetError::Invalid("refusing to write an empty dataset".into()));
    }
    let labels = encode_labels(ds)?;
    fs::write(image_path, encode_images(ds)).map_err(|e| DatasetError::io(image_path, e))?;
    fs::write(label_path, labels).map_err(|e| DatasetError::io(label_path, e))?;
    Ok(())
}

pub fn read_idx(image_path: &Path, label_path: &Path) -> Result<LabeledDataset, DatasetError> {
    let images = fs::read(image_path).map_err(|e| DatasetError::io(image_path, e))?;
    let labels = fs::read(label_path).map_err(|e| DatasetError::io(label_path, e))?;
    decode_pair(&images, &labels)
}
