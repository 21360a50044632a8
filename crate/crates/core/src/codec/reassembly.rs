//! Reassembly of chunked visibility frames.

use std::collections::BTreeMap;

use super::wire::{VisibilityChunkPacket, WireError};

/// Partial frames older than this are dropped.
pub const REASSEMBLY_TIMEOUT_US: u64 = 250_000;

/// A fully reassembled compressed bitmap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompleteFrame {
    pub frame: u32,
    pub uncompressed_len: u32,
    pub compressed: Vec<u8>,
}

fn concat(chunks: Vec<Option<Vec<u8>>>) -> Vec<u8> {
    chunks.into_iter().flatten().flatten().collect()
}

/// Reassembles one frame's chunks, in any order, ignoring duplicates.
///
/// Returns `Ok(None)` while chunks are missing and an error when the set mixes
/// frames or disagrees on the frame layout.
pub fn reassemble(packets: &[VisibilityChunkPacket]) -> Result<Option<Vec<u8>>, WireError> {
    let Some(first) = packets.first() else {
        return Ok(None);
    };
    let mut slots: Vec<Option<Vec<u8>>> = vec![None; first.chunk_count as usize];
    for p in packets {
        if p.frame != first.frame
            || p.chunk_count != first.chunk_count
            || p.uncompressed_len != first.uncompressed_len
        {
            return Err(WireError::MixedFrames(format!(
                "frame {} ({} chunks) mixed with frame {} ({} chunks)",
                first.frame, first.chunk_count, p.frame, p.chunk_count
            )));
        }
        let slot = slots
            .get_mut(p.chunk_index as usize)
            .ok_or_else(|| WireError::Malformed(format!("chunk index {}", p.chunk_index)))?;
        if slot.is_none() {
            *slot = Some(p.payload.clone());
        }
    }
    Ok(slots.iter().all(Option::is_some).then(|| concat(slots)))
}

#[derive(Debug)]
struct Partial {
    chunk_count: u16,
    uncompressed_len: u32,
    chunks: Vec<Option<Vec<u8>>>,
    received: u16,
    first_seen_us: u64,
}

/// Receive-side reassembly table. Owned by the receive path only.
///
/// Once a frame completes, it and every older frame are forgotten: chunks of
/// frames at or below the newest completed frame are ignored.
#[derive(Debug, Default)]
pub struct Reassembler {
    partial: BTreeMap<u32, Partial>,
    newest_complete: Option<u32>,
}

impl Reassembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn newest_complete(&self) -> Option<u32> {
        self.newest_complete
    }

    pub fn pending_frames(&self) -> usize {
        self.partial.len()
    }

    pub fn accept(
        &mut self,
        packet: VisibilityChunkPacket,
        now_us: u64,
    ) -> Result<Option<CompleteFrame>, WireError> {
        if self.newest_complete.is_some_and(|n| packet.frame <= n) {
            return Ok(None);
        }
        let entry = self.partial.entry(packet.frame).or_insert_with(|| Partial {
            chunk_count: packet.chunk_count,
            uncompressed_len: packet.uncompressed_len,
            chunks: vec![None; packet.chunk_count as usize],
            received: 0,
            first_seen_us: now_us,
        });
        if entry.chunk_count != packet.chunk_count || entry.uncompressed_len != packet.uncompressed_len {
            return Err(WireError::MixedFrames(format!(
                "frame {} announced {} chunks, packet claims {}",
                packet.frame, entry.chunk_count, packet.chunk_count
            )));
        }
        let slot = &mut entry.chunks[packet.chunk_index as usize];
        if slot.is_some() {
            return Ok(None);
        }
        *slot = Some(packet.payload);
        entry.received += 1;
        if entry.received < entry.chunk_count {
            return Ok(None);
        }

        let frame = packet.frame;
        let done = self.partial.remove(&frame).expect("entry exists");
        self.partial = self.partial.split_off(&frame);
        self.newest_complete = Some(frame);
        Ok(Some(CompleteFrame {
            frame,
            uncompressed_len: done.uncompressed_len,
            compressed: concat(done.chunks),
        }))
    }

    /// Drops partial frames first seen more than the timeout before `now_us`.
    pub fn expire(&mut self, now_us: u64) {
        self.partial
            .retain(|_, p| now_us.saturating_sub(p.first_seen_us) <= REASSEMBLY_TIMEOUT_US);
    }
}
