//! Real UDP transport. A background thread drains the socket into a queue so
//! `poll` never blocks the render loop.

use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, TryRecvError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::{Delivery, Transport, TransportError, MAX_DATAGRAM};

pub struct UdpTransport {
    socket: UdpSocket,
    peer: Option<SocketAddr>,
    /// Replies go to whoever sent the most recent datagram.
    follow_sender: bool,
    incoming: Receiver<(Vec<u8>, SocketAddr)>,
    stop: Arc<AtomicBool>,
    receiver: Option<JoinHandle<()>>,
}

impl UdpTransport {
    /// Client side: bound locally, sending to a fixed peer.
    pub fn connect(bind: impl ToSocketAddrs, peer: impl ToSocketAddrs) -> Result<Self, TransportError> {
        let peer = peer.to_socket_addrs()?.next().ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "peer address resolves to nothing")
        })?;
        Self::start(UdpSocket::bind(bind)?, Some(peer), false)
    }

    /// Server side: replies to the source of the latest datagram.
    pub fn listen(bind: impl ToSocketAddrs) -> Result<Self, TransportError> {
        Self::start(UdpSocket::bind(bind)?, None, true)
    }

    fn start(socket: UdpSocket, peer: Option<SocketAddr>, follow_sender: bool) -> Result<Self, TransportError> {
        let rx_socket = socket.try_clone()?;
        rx_socket.set_read_timeout(Some(Duration::from_millis(20)))?;
        let (tx, incoming) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = stop.clone();
        let receiver = std::thread::Builder::new()
            .name("udp-recv".into())
            .spawn(move || {
                let mut buf = vec![0u8; 65536];
                while !stop_flag.load(Ordering::Relaxed) {
                    match rx_socket.recv_from(&mut buf) {
                        Ok((n, from)) => {
                            if tx.send((buf[..n].to_vec(), from)).is_err() {
                                break;
                            }
                        }
                        Err(e)
                            if matches!(
                                e.kind(),
                                std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                            ) => {}
                        // ICMP port-unreachable surfaces here on some platforms.
                        Err(e) if e.kind() == std::io::ErrorKind::ConnectionRefused => {}
                        Err(e) => {
                            log::warn!("udp receive failed: {e}");
                            std::thread::sleep(Duration::from_millis(5));
                        }
                    }
                }
            })?;
        Ok(Self {
            socket,
            peer,
            follow_sender,
            incoming,
            stop,
            receiver: Some(receiver),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, TransportError> {
        Ok(self.socket.local_addr()?)
    }

    pub fn peer(&self) -> Option<SocketAddr> {
        self.peer
    }
}

impl Transport for UdpTransport {
    fn send(&mut self, datagram: &[u8], _now_us: u64) -> Result<(), TransportError> {
        if datagram.len() > MAX_DATAGRAM {
            return Err(TransportError::Oversize(datagram.len()));
        }
        let peer = self.peer.ok_or(TransportError::NoPeer)?;
        match self.socket.send_to(datagram, peer) {
            Ok(_) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::ConnectionRefused => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn poll(&mut self, now_us: u64) -> Vec<Delivery> {
        let mut out = Vec::new();
        loop {
            match self.incoming.try_recv() {
                Ok((bytes, from)) => {
                    if self.follow_sender {
                        self.peer = Some(from);
                    }
                    out.push(Delivery { at_us: now_us, bytes });
                }
                Err(TryRecvError::Empty | TryRecvError::Disconnected) => break,
            }
        }
        out
    }
}

impl Drop for UdpTransport {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(handle) = self.receiver.take() {
            let _ = handle.join();
        }
    }
}
