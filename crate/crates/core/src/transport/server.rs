//! Server role: trace visibility for the newest camera update and stream it back.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::camera::Intrinsics;
use crate::codec::{chunk_frame, compress_bitmap, decode_packet, CameraUpdatePacket, Packet};
use crate::scene::Scene;
use crate::visibility::trace_visibility;

use super::Transport;

/// Summary of one rendered response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServedFrame {
    pub frame: u32,
    pub chunks: usize,
    pub raw_len: usize,
    pub compressed_len: usize,
    /// Camera updates received in the same service tick and skipped.
    pub skipped: usize,
}

pub struct VisibilityServer {
    scene: Arc<Scene>,
    intrinsics: Intrinsics,
    server_delay_us: u64,
    last_served: Option<u32>,
}

impl VisibilityServer {
    pub fn new(scene: Arc<Scene>, intrinsics: Intrinsics, server_delay_us: u64) -> Self {
        Self {
            scene,
            intrinsics,
            server_delay_us,
            last_served: None,
        }
    }

    pub fn last_served(&self) -> Option<u32> {
        self.last_served
    }

    /// One service tick: drain the port, render only the highest-numbered
    /// camera update newer than anything served so far, and send its chunks.
    ///
    /// Responses are stamped `arrival + server_delay`, so on a simulated link
    /// the server behaves as if it reacted the moment the request landed.
    pub fn service(&mut self, port: &mut dyn Transport, now_us: u64) -> Option<ServedFrame> {
        let mut newest: Option<(CameraUpdatePacket, u64)> = None;
        let mut received = 0usize;
        for delivery in port.poll(now_us) {
            match decode_packet(&delivery.bytes) {
                Ok(Packet::Camera(update)) => {
                    received += 1;
                    if newest.as_ref().is_none_or(|(n, _)| update.frame > n.frame) {
                        newest = Some((update, delivery.at_us));
                    }
                }
                Ok(Packet::Chunk(_)) => log::warn!("server ignoring a visibility chunk"),
                Err(e) => log::warn!("server dropping malformed datagram: {e}"),
            }
        }
        let (update, arrived_us) = newest?;
        if self.last_served.is_some_and(|last| update.frame <= last) {
            return None;
        }
        let pose = update.pose();
        let bitmap = match trace_visibility(&self.scene, &pose, &self.intrinsics) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("server cannot render frame {}: {e}", update.frame);
                return None;
            }
        };
        let compressed = compress_bitmap(&bitmap);
        let chunks = match chunk_frame(&compressed, update.frame, bitmap.byte_len() as u32) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("server cannot packetize frame {}: {e}", update.frame);
                return None;
            }
        };
        let send_us = arrived_us + self.server_delay_us;
        for chunk in &chunks {
            if let Err(e) = port.send(&chunk.encode(), send_us) {
                log::warn!("server send failed for frame {}: {e}", update.frame);
            }
        }
        self.last_served = Some(update.frame);
        Some(ServedFrame {
            frame: update.frame,
            chunks: chunks.len(),
            raw_len: bitmap.byte_len(),
            compressed_len: compressed.len(),
            skipped: received - 1,
        })
    }
}

/// Serves on a real transport until `stop` is raised.
pub fn server_loop(server: &mut VisibilityServer, port: &mut dyn Transport, stop: &AtomicBool) {
    let start = Instant::now();
    while !stop.load(Ordering::Relaxed) {
        let now_us = start.elapsed().as_micros() as u64;
        if let Some(served) = server.service(port, now_us) {
            log::debug!(
                "served frame {} in {} chunks ({} -> {} bytes)",
                served.frame,
                served.chunks,
                served.raw_len,
                served.compressed_len
            );
        } else {
            std::thread::sleep(Duration::from_millis(1));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraPose;
    use crate::codec::{decompress_bitmap, reassemble, VisibilityChunkPacket};
    use crate::scene::{PointLight, Triangle};
    use crate::transport::{NetworkConditions, SimNetwork, SimPort};
    use glam::DVec3;

    fn scene() -> Arc<Scene> {
        let h = 20.0;
        let (a, b, c, d) = (
            DVec3::new(-h, 0.0, -h),
            DVec3::new(h, 0.0, -h),
            DVec3::new(h, 0.0, h),
            DVec3::new(-h, 0.0, h),
        );
        let tris = vec![Triangle::flat([a, c, b], 0).unwrap(), Triangle::flat([a, d, c], 0).unwrap()];
        let light = PointLight {
            position: DVec3::new(0.0, 3.0, 0.0),
            intensity: DVec3::ONE,
        };
        Arc::new(Scene::new(tris, vec![DVec3::splat(0.7)], vec![light], DVec3::ZERO, 32).unwrap())
    }

    fn intr() -> Intrinsics {
        Intrinsics {
            vertical_fov: 1.0,
            near: 0.05,
            far: 100.0,
            display_width: 32,
            display_height: 18,
            guard_x: 4,
            guard_y: 2,
        }
    }

    fn pose(frame: u32) -> CameraPose {
        CameraPose::new(DVec3::new(0.0, 2.0, 5.0), DVec3::new(0.0, 0.0, 0.0), DVec3::Y, frame)
    }

    fn chunks_for(port: &mut SimPort, now: u64) -> Vec<VisibilityChunkPacket> {
        port.poll(now)
            .into_iter()
            .map(|d| match decode_packet(&d.bytes).unwrap() {
                Packet::Chunk(c) => c,
                other => panic!("unexpected {other:?}"),
            })
            .collect()
    }

    #[test]
    fn response_carries_request_frame() {
        let (mut client, mut server_port) = SimPort::pair(SimNetwork::new(NetworkConditions::default()));
        let mut server = VisibilityServer::new(scene(), intr(), 0);
        client.send(&CameraUpdatePacket::from_pose(&pose(7)).encode(), 0).unwrap();
        let served = server.service(&mut server_port, 0).unwrap();
        assert_eq!(served.frame, 7);
        let chunks = chunks_for(&mut client, 0);
        assert!(chunks.iter().all(|c| c.frame == 7));
        let bytes = reassemble(&chunks).unwrap().unwrap();
        let bitmap = decompress_bitmap(&bytes, 36, 20, 1, 7).unwrap();
        assert_eq!(bitmap, trace_visibility(&scene(), &pose(7), &intr()).unwrap());
    }

    #[test]
    fn backlog_renders_only_the_latest_update() {
        let (mut client, mut server_port) = SimPort::pair(SimNetwork::new(NetworkConditions::default()));
        let mut server = VisibilityServer::new(scene(), intr(), 0);
        for f in [3, 5, 4] {
            client.send(&CameraUpdatePacket::from_pose(&pose(f)).encode(), 0).unwrap();
        }
        let served = server.service(&mut server_port, 0).unwrap();
        assert_eq!(served.frame, 5);
        assert_eq!(served.skipped, 2);
        assert!(chunks_for(&mut client, 0).iter().all(|c| c.frame == 5));
        // An older update arriving late is not rendered.
        client.send(&CameraUpdatePacket::from_pose(&pose(4)).encode(), 1).unwrap();
        assert!(server.service(&mut server_port, 1).is_none());
    }

    #[test]
    fn malformed_datagrams_are_skipped() {
        let (mut client, mut server_port) = SimPort::pair(SimNetwork::new(NetworkConditions::default()));
        let mut server = VisibilityServer::new(scene(), intr(), 0);
        client.send(b"garbage", 0).unwrap();
        assert!(server.service(&mut server_port, 0).is_none());
        client.send(&CameraUpdatePacket::from_pose(&pose(1)).encode(), 0).unwrap();
        assert_eq!(server.service(&mut server_port, 0).unwrap().frame, 1);
    }

    #[test]
    fn server_delay_shifts_the_reply() {
        let net = SimNetwork::new(NetworkConditions::default());
        let (mut client, mut server_port) = SimPort::pair(net);
        let mut server = VisibilityServer::new(scene(), intr(), 5_000);
        client.send(&CameraUpdatePacket::from_pose(&pose(2)).encode(), 100).unwrap();
        server.service(&mut server_port, 200).unwrap();
        assert!(client.poll(5_099).is_empty());
        assert!(!client.poll(5_100).is_empty());
    }
}
