//! Bit-exact datagram layouts. All integers and floats are little-endian.
//!
//! Camera update (46 bytes):
//!
//! | offset | size | field                  |
//! |--------|------|------------------------|
//! | 0      | 4    | magic `DHRC`           |
//! | 4      | 1    | version = 1            |
//! | 5      | 1    | type = 0x01            |
//! | 6      | 4    | frame (u32)            |
//! | 10     | 12   | position (3 x f32)     |
//! | 22     | 12   | target (3 x f32)       |
//! | 34     | 12   | up (3 x f32)           |
//!
//! Visibility chunk (20-byte header + payload):
//!
//! | offset | size | field                  |
//! |--------|------|------------------------|
//! | 0      | 4    | magic `DHRC`           |
//! | 4      | 1    | version = 1            |
//! | 5      | 1    | type = 0x02            |
//! | 6      | 4    | frame (u32)            |
//! | 10     | 2    | chunk_index (u16)      |
//! | 12     | 2    | chunk_count (u16)      |
//! | 14     | 4    | uncompressed_len (u32) |
//! | 18     | 2    | payload_len (u16)      |
//! | 20     | n    | payload (n <= 1200)    |

use glam::Vec3;
use thiserror::Error;

use crate::camera::CameraPose;

pub const MAGIC: [u8; 4] = *b"DHRC";
pub const VERSION: u8 = 1;
pub const TYPE_CAMERA: u8 = 0x01;
pub const TYPE_CHUNK: u8 = 0x02;
pub const CAMERA_PACKET_LEN: usize = 46;
pub const CHUNK_HEADER_LEN: usize = 20;
pub const MAX_CHUNK_PAYLOAD: usize = 1200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("datagram too short ({0} bytes)")]
    Truncated(usize),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown packet type {0:#04x}")]
    UnknownType(u8),
    #[error("malformed packet: {0}")]
    Malformed(String),
    #[error("chunks from different frames or layouts: {0}")]
    MixedFrames(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraUpdatePacket {
    pub frame: u32,
    pub position: Vec3,
    pub target: Vec3,
    pub up: Vec3,
}

impl CameraUpdatePacket {
    pub fn from_pose(pose: &CameraPose) -> Self {
        Self {
            frame: pose.frame_index,
            position: pose.position.as_vec3(),
            target: pose.target.as_vec3(),
            up: pose.up.as_vec3(),
        }
    }

    pub fn pose(&self) -> CameraPose {
        CameraPose::new(
            self.position.as_dvec3(),
            self.target.as_dvec3(),
            self.up.as_dvec3(),
            self.frame,
        )
    }

    pub fn encode(&self) -> [u8; CAMERA_PACKET_LEN] {
        let mut out = [0u8; CAMERA_PACKET_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4] = VERSION;
        out[5] = TYPE_CAMERA;
        out[6..10].copy_from_slice(&self.frame.to_le_bytes());
        let floats = [self.position, self.target, self.up].map(|v| v.to_array());
        for (i, v) in floats.iter().flatten().enumerate() {
            out[10 + 4 * i..14 + 4 * i].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    fn decode_body(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() != CAMERA_PACKET_LEN {
            return Err(WireError::Malformed(format!(
                "camera update is {} bytes, expected {CAMERA_PACKET_LEN}",
                bytes.len()
            )));
        }
        let f = |i: usize| f32::from_le_bytes(bytes[10 + 4 * i..14 + 4 * i].try_into().unwrap());
        let v = |k: usize| Vec3::new(f(3 * k), f(3 * k + 1), f(3 * k + 2));
        Ok(Self {
            frame: u32::from_le_bytes(bytes[6..10].try_into().unwrap()),
            position: v(0),
            target: v(1),
            up: v(2),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityChunkPacket {
    pub frame: u32,
    pub chunk_index: u16,
    pub chunk_count: u16,
    pub uncompressed_len: u32,
    pub payload: Vec<u8>,
}

impl VisibilityChunkPacket {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CHUNK_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(TYPE_CHUNK);
        out.extend_from_slice(&self.frame.to_le_bytes());
        out.extend_from_slice(&self.chunk_index.to_le_bytes());
        out.extend_from_slice(&self.chunk_count.to_le_bytes());
        out.extend_from_slice(&self.uncompressed_len.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    fn decode_body(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < CHUNK_HEADER_LEN {
            return Err(WireError::Truncated(bytes.len()));
        }
        let u16_at = |i: usize| u16::from_le_bytes(bytes[i..i + 2].try_into().unwrap());
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let payload_len = u16_at(18) as usize;
        if payload_len > MAX_CHUNK_PAYLOAD {
            return Err(WireError::Malformed(format!("payload of {payload_len} bytes")));
        }
        if bytes.len() != CHUNK_HEADER_LEN + payload_len {
            return Err(WireError::Malformed(format!(
                "payload_len {payload_len} but {} bytes follow the header",
                bytes.len() - CHUNK_HEADER_LEN
            )));
        }
        let packet = Self {
            frame: u32_at(6),
            chunk_index: u16_at(10),
            chunk_count: u16_at(12),
            uncompressed_len: u32_at(14),
            payload: bytes[CHUNK_HEADER_LEN..].to_vec(),
        };
        if packet.chunk_index >= packet.chunk_count {
            return Err(WireError::Malformed(format!(
                "chunk {} of {}",
                packet.chunk_index, packet.chunk_count
            )));
        }
        Ok(packet)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Camera(CameraUpdatePacket),
    Chunk(VisibilityChunkPacket),
}

pub fn decode_packet(bytes: &[u8]) -> Result<Packet, WireError> {
    if bytes.len() < 6 {
        return Err(WireError::Truncated(bytes.len()));
    }
    if bytes[0..4] != MAGIC {
        return Err(WireError::BadMagic);
    }
    if bytes[4] != VERSION {
        return Err(WireError::BadVersion(bytes[4]));
    }
    match bytes[5] {
        TYPE_CAMERA => CameraUpdatePacket::decode_body(bytes).map(Packet::Camera),
        TYPE_CHUNK => VisibilityChunkPacket::decode_body(bytes).map(Packet::Chunk),
        other => Err(WireError::UnknownType(other)),
    }
}

/// Splits one compressed bitmap into datagram-sized chunks.
pub fn chunk_frame(
    compressed: &[u8],
    frame: u32,
    uncompressed_len: u32,
) -> Result<Vec<VisibilityChunkPacket>, WireError> {
    let count = compressed.len().div_ceil(MAX_CHUNK_PAYLOAD).max(1);
    let chunk_count = u16::try_from(count)
        .map_err(|_| WireError::Malformed(format!("{count} chunks exceed the u16 limit")))?;
    if compressed.is_empty() {
        return Ok(vec![VisibilityChunkPacket {
            frame,
            chunk_index: 0,
            chunk_count: 1,
            uncompressed_len,
            payload: Vec::new(),
        }]);
    }
    Ok(compressed
        .chunks(MAX_CHUNK_PAYLOAD)
        .enumerate()
        .map(|(i, payload)| VisibilityChunkPacket {
            frame,
            chunk_index: i as u16,
            chunk_count,
            uncompressed_len,
            payload: payload.to_vec(),
        })
        .collect())
}
