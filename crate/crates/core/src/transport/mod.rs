//! Datagram transports: real UDP sockets and a deterministic simulated link.
//!
//! All times are microseconds on the caller's clock. In simulation that clock
//! is the virtual frame clock; over UDP it is wall time since session start.

mod server;
mod sim;
mod udp;

use thiserror::Error;

pub use server::{server_loop, ServedFrame, VisibilityServer};
pub use sim::{ms_to_us, NetworkConditions, Side, SimNetwork, SimPort, TraceEvent, VirtualClock};
pub use udp::UdpTransport;

/// Largest datagram either transport accepts.
pub const MAX_DATAGRAM: usize = 1472;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("socket error: {0}")]
    Io(#[from] std::io::Error),
    #[error("datagram of {0} bytes exceeds the {MAX_DATAGRAM}-byte limit")]
    Oversize(usize),
    #[error("no peer address known yet")]
    NoPeer,
}

/// A datagram handed to the receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    /// Arrival time: exact simulated delivery time, or the poll time over UDP.
    pub at_us: u64,
    pub bytes: Vec<u8>,
}

/// One end of a best-effort datagram link.
pub trait Transport {
    fn send(&mut self, datagram: &[u8], now_us: u64) -> Result<(), TransportError>;

    /// Everything that arrived by `now_us`, in arrival order. Never blocks.
    fn poll(&mut self, now_us: u64) -> Vec<Delivery>;
}
