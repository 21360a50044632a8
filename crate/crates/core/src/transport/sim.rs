//! In-process network with seeded delay, jitter and loss.

use std::cell::RefCell;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Delivery, Transport, TransportError, MAX_DATAGRAM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConditions {
    /// One-way delay applied in each direction.
    #[serde(default)]
    pub base_delay_ms: f64,
    /// Uniform jitter bound: each packet's delay is offset by a sample of
    /// `[-jitter_ms, +jitter_ms]`, clamped so the total stays non-negative.
    #[serde(default)]
    pub jitter_ms: f64,
    #[serde(default)]
    pub loss_prob: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NetworkConditions {
    fn default() -> Self {
        Self {
            base_delay_ms: 0.0,
            jitter_ms: 0.0,
            loss_prob: 0.0,
            seed: 0,
        }
    }
}

impl NetworkConditions {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.base_delay_ms >= 0.0 && self.base_delay_ms.is_finite()) {
            return Err(format!("base_delay_ms {} must be >= 0", self.base_delay_ms));
        }
        if !(self.jitter_ms >= 0.0 && self.jitter_ms.is_finite()) {
            return Err(format!("jitter_ms {} must be >= 0", self.jitter_ms));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(format!("loss_prob {} outside [0, 1]", self.loss_prob));
        }
        Ok(())
    }
}

pub fn ms_to_us(ms: f64) -> u64 {
    (ms * 1000.0).round() as u64
}

/// Frame-indexed virtual time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VirtualClock {
    pub frame_time_us: u64,
    pub current_frame: u32,
}

impl VirtualClock {
    pub fn new(frame_time_ms: f64) -> Self {
        Self {
            frame_time_us: ms_to_us(frame_time_ms).max(1),
            current_frame: 0,
        }
    }

    /// Start of frame `frame` in microseconds.
    pub fn frame_start_us(&self, frame: u32) -> u64 {
        frame as u64 * self.frame_time_us
    }

    pub fn now_us(&self) -> u64 {
        self.frame_start_us(self.current_frame)
    }

    pub fn advance(&mut self) {
        self.current_frame += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Client,
    Server,
}

impl Side {
    fn peer(self) -> Side {
        match self {
            Side::Client => Side::Server,
            Side::Server => Side::Client,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// One sent datagram as the link saw it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub from: Side,
    pub sent_us: u64,
    /// `None` when the link dropped the datagram.
    pub deliver_us: Option<u64>,
    pub len: usize,
    /// Up to the first 20 bytes of the datagram (enough for any packet header).
    pub head: Vec<u8>,
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct InFlight {
    deliver_us: u64,
    seq: u64,
    bytes: Vec<u8>,
}

/// Both directions of a simulated link. Single-threaded; share through
/// [`SimPort`] handles.
#[derive(Debug)]
pub struct SimNetwork {
    conditions: NetworkConditions,
    rng: ChaCha8Rng,
    queues: [BinaryHeap<Reverse<InFlight>>; 2],
    next_seq: u64,
    trace: Vec<TraceEvent>,
}

impl SimNetwork {
    pub fn new(conditions: NetworkConditions) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(conditions.seed),
            conditions,
            queues: [BinaryHeap::new(), BinaryHeap::new()],
            next_seq: 0,
            trace: Vec::new(),
        }
    }

    pub fn conditions(&self) -> &NetworkConditions {
        &self.conditions
    }

    pub fn send(&mut self, from: Side, datagram: &[u8], now_us: u64) -> Result<(), TransportError> {
        if datagram.len() > MAX_DATAGRAM {
            return Err(TransportError::Oversize(datagram.len()));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let lost = self.conditions.loss_prob > 0.0 && self.rng.random::<f64>() < self.conditions.loss_prob;
        let base = ms_to_us(self.conditions.base_delay_ms) as i64;
        let jitter_bound = ms_to_us(self.conditions.jitter_ms) as i64;
        let jitter = if jitter_bound > 0 {
            self.rng.random_range(-jitter_bound..=jitter_bound)
        } else {
            0
        };
        let deliver_us = now_us + (base + jitter).max(0) as u64;
        self.trace.push(TraceEvent {
            seq,
            from,
            sent_us: now_us,
            deliver_us: (!lost).then_some(deliver_us),
            len: datagram.len(),
            head: datagram[..datagram.len().min(20)].to_vec(),
        });
        if !lost {
            self.queues[from.peer().index()].push(Reverse(InFlight {
                deliver_us,
                seq,
                bytes: datagram.to_vec(),
            }));
        }
        Ok(())
    }

    /// Datagrams for `to` due by `now_us`, by delivery time then send order.
    pub fn poll(&mut self, to: Side, now_us: u64) -> Vec<Delivery> {
        let queue = &mut self.queues[to.index()];
        let mut out = Vec::new();
        while queue.peek().is_some_and(|p| p.0.deliver_us <= now_us) {
            let Reverse(p) = queue.pop().expect("peeked");
            out.push(Delivery {
                at_us: p.deliver_us,
                bytes: p.bytes,
            });
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.queues.iter().map(BinaryHeap::len).sum()
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }
}

/// Handle on one side of a shared [`SimNetwork`].
#[derive(Debug, Clone)]
pub struct SimPort {
    net: Rc<RefCell<SimNetwork>>,
    side: Side,
}

impl SimPort {
    pub fn pair(net: SimNetwork) -> (SimPort, SimPort) {
        let net = Rc::new(RefCell::new(net));
        (
            SimPort {
                net: net.clone(),
                side: Side::Client,
            },
            SimPort {
                net,
                side: Side::Server,
            },
        )
    }

    pub fn network(&self) -> std::cell::Ref<'_, SimNetwork> {
        self.net.borrow()
    }
}

impl Transport for SimPort {
    fn send(&mut self, datagram: &[u8], now_us: u64) -> Result<(), TransportError> {
        self.net.borrow_mut().send(self.side, datagram, now_us)
    }

    fn poll(&mut self, now_us: u64) -> Vec<Delivery> {
        self.net.borrow_mut().poll(self.side, now_us)
    }
}
