use std::io;

use super::{FingerprintError, PayloadFingerprint, FINGERPRINT_LEN, IMAGE_SIDE};

/// 28x28 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pixels: [u8; FINGERPRINT_LEN],
}

pub fn to_image(fp: &PayloadFingerprint) -> GrayImage {
    GrayImage { pixels: *fp.bytes() }
}

impl GrayImage {
    pub fn from_pixels(pixels: [u8; FINGERPRINT_LEN]) -> Self {
        Self { pixels }
    }

    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        assert!(row < IMAGE_SIDE && col < IMAGE_SIDE, "pixel ({row},{col}) out of range");
        self.pixels[row * IMAGE_SIDE + col]
    }

    pub fn pixels(&self) -> &[u8; FINGERPRINT_LEN] {
        &self.pixels
    }

    pub fn to_fingerprint(&self) -> PayloadFingerprint {
        PayloadFingerprint::from_normalized(&self.pixels).expect("raster is always 784 bytes")
    }

    /// Binary PGM (P5, maxval 255).
    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n").into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parse the P5 files written by [`GrayImage::encode_pgm`].
    pub fn decode_pgm(data: &[u8]) -> Result<Self, FingerprintError> {
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(FingerprintError::WrongLength(0));
            }
            fields.push(&data[start..pos]);
        }
        // single whitespace byte separates header from raster
        pos += 1;
        if fields[0] != b"P5" || fields[1] != b"28" || fields[2] != b"28" || fields[3] != b"255" {
            return Err(FingerprintError::WrongLength(0));
        }
        let body = data.get(pos..).unwrap_or(&[]);
        let pixels: [u8; FINGERPRINT_LEN] =
            body.try_into().map_err(|_| FingerprintError::WrongLength(body.len()))?;
        Ok(Self { pixels })
    }

    pub fn encode_png(&self) -> io::Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, IMAGE_SIDE as u32, IMAGE_SIDE as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(io::Error::from)?;
            w.write_image_data(&self.pixels).map_err(io::Error::from)?;
        }
        Ok(out)
    }
}
