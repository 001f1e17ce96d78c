//! Message transport: wire codec, latency/loss model, the simulated network
//! on a shared event queue, and a loopback TCP transport using the same
//! framing.

pub mod codec;
pub mod episode;
pub mod qos;
pub mod queue;
pub mod tcp;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use codec::{decode_frame, encode_frame, Content, DecodeError, EncodeError, Envelope, MsgType};
pub use qos::{sample_latency, QosConfig, QosError};
pub use queue::{EventQueue, QueueError, ScheduleError};

use crate::topology::CommGraph;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetsimError {
    #[error("protocol violation: no link from node {from} to node {to}")]
    NotAnEdge { from: usize, to: usize },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Qos(#[from] QosError),
}

/// A frame in flight between two nodes (0-based).
#[derive(Clone, PartialEq, Eq)]
pub struct Delivery {
    pub from: usize,
    pub to: usize,
    pub frame: Vec<u8>,
}

impl std::fmt::Debug for Delivery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Delivery({}->{}, {})", self.from + 1, self.to + 1, String::from_utf8_lossy(&self.frame[codec::HEADER_LEN.min(self.frame.len())..]))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetStats {
    pub sent: u64,
    pub retransmissions: u64,
}

/// Simulated network over a fixed topology.
///
/// Losses never drop a message: each lost attempt adds one retransmission
/// timeout before the successful attempt's latency.
#[derive(Debug, Clone)]
pub struct Network {
    qos: QosConfig,
    graph: CommGraph,
    rng: ChaCha8Rng,
    next_id: Vec<u64>,
    stats: NetStats,
}

impl Network {
    pub fn new(graph: CommGraph, qos: QosConfig) -> Result<Self, NetsimError> {
        qos.validate()?;
        let n = graph.len();
        Ok(Self { rng: ChaCha8Rng::seed_from_u64(qos.seed), qos, graph, next_id: vec![1; n], stats: NetStats::default() })
    }

    pub fn qos(&self) -> &QosConfig {
        &self.qos
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    /// Next message id for `sender`, starting at 1.
    pub fn next_msg_id(&mut self, sender: usize) -> u64 {
        let id = self.next_id[sender];
        self.next_id[sender] += 1;
        id
    }

    /// Delay of one send, including retransmissions.
    pub fn transit_delay(&mut self) -> f64 {
        let retries = qos::sample_retransmissions(&self.qos, &mut self.rng);
        self.stats.sent += 1;
        self.stats.retransmissions += u64::from(retries);
        f64::from(retries) * self.qos.retransmit_timeout + sample_latency(&self.qos, &mut self.rng)
    }

    /// Encodes `env` and schedules its arrival at `to`. Returns the arrival time.
    pub fn deliver<E: From<Delivery>>(
        &mut self,
        queue: &mut EventQueue<E>,
        env: &Envelope,
        from: usize,
        to: usize,
    ) -> Result<f64, NetsimError> {
        if !self.graph.has_edge(from, to) {
            return Err(NetsimError::NotAnEdge { from: from + 1, to: to + 1 });
        }
        let frame = encode_frame(env)?;
        let at = queue.now() + self.transit_delay();
        queue.schedule_at(at, Delivery { from, to, frame }.into())?;
        Ok(at)
    }
}
