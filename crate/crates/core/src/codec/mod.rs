//! Visibility bitmap compression and the datagram wire format.

mod reassembly;
pub mod wire;

use thiserror::Error;

use crate::visibility::{words_per_pixel, BitmapError, VisibilityBitmap};

pub use reassembly::{reassemble, CompleteFrame, Reassembler, REASSEMBLY_TIMEOUT_US};
pub use wire::{
    chunk_frame, decode_packet, CameraUpdatePacket, Packet, VisibilityChunkPacket, WireError,
    CAMERA_PACKET_LEN, CHUNK_HEADER_LEN, MAX_CHUNK_PAYLOAD, TYPE_CAMERA, TYPE_CHUNK,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("corrupt LZ4 block: {0}")]
    Corrupt(String),
    #[error("decompressed {actual} bytes, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Bitmap(#[from] BitmapError),
}

/// LZ4 block-format compression of the bitmap's little-endian data words.
/// Dimensions and frame number travel in packet headers, not in the block.
pub fn compress_bitmap(bitmap: &VisibilityBitmap) -> Vec<u8> {
    lz4_flex::block::compress(&bitmap.to_le_bytes())
}

/// Worst-case compressed size for `raw_len` input bytes.
pub fn max_compressed_len(raw_len: usize) -> usize {
    lz4_flex::block::get_maximum_output_size(raw_len)
}

pub fn expected_raw_len(width: u32, height: u32, num_lights: u32) -> usize {
    (width * height) as usize * words_per_pixel(num_lights) * 4
}

pub fn decompress_bitmap(
    bytes: &[u8],
    width: u32,
    height: u32,
    num_lights: u32,
    frame: u32,
) -> Result<VisibilityBitmap, CodecError> {
    let expected = expected_raw_len(width, height, num_lights);
    let mut raw = vec![0u8; expected];
    let actual = lz4_flex::block::decompress_into(bytes, &mut raw)
        .map_err(|e| CodecError::Corrupt(e.to_string()))?;
    if actual != expected {
        return Err(CodecError::LengthMismatch { expected, actual });
    }
    let words = raw
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(VisibilityBitmap::from_words(
        width, height, num_lights, frame, words,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_bitmap(seed: u64, w: u32, h: u32, lights: u32) -> VisibilityBitmap {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut b = VisibilityBitmap::new(w, h, lights, 0);
        for y in 0..h {
            for x in 0..w {
                for l in 0..lights {
                    b.set_bit(x, y, l, rng.random_bool(0.5)).unwrap();
                }
            }
        }
        b
    }

    #[test]
    fn round_trip_is_lossless() {
        for seed in 0..5 {
            let b = random_bitmap(seed, 37, 11, 5);
            let c = compress_bitmap(&b);
            assert_eq!(decompress_bitmap(&c, 37, 11, 5, 0).unwrap(), b);
        }
    }

    #[test]
    fn blank_bitmap_compresses_below_five_percent() {
        let b = VisibilityBitmap::new(256, 144, 1, 0);
        let c = compress_bitmap(&b);
        // Measured once with lz4_flex 0.11: 590 of 147456 bytes (0.40%).
        assert!(c.len() * 20 < b.byte_len(), "{} bytes", c.len());
    }

    #[test]
    fn random_bitmap_stays_within_worst_case_bound() {
        let b = random_bitmap(7, 64, 64, 32);
        let c = compress_bitmap(&b);
        assert!(c.len() <= max_compressed_len(b.byte_len()));
    }

    #[test]
    fn truncated_stream_is_rejected() {
        let b = random_bitmap(3, 20, 20, 3);
        let c = compress_bitmap(&b);
        assert!(decompress_bitmap(&c[..c.len() / 2], 20, 20, 3, 0).is_err());
    }

    #[test]
    fn wrong_expected_length_is_rejected() {
        let b = random_bitmap(4, 20, 20, 3);
        let c = compress_bitmap(&b);
        assert!(decompress_bitmap(&c, 20, 21, 3, 0).is_err());
        assert!(decompress_bitmap(&c, 20, 19, 3, 0).is_err());
    }
}
