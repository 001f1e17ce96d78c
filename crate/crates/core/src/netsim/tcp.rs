//! Consensus over real loopback TCP sockets.
//!
//! One connection per graph edge; node `i` listens on `base_port + i`
//! (`base_port = 0` lets the OS pick free ports). Every socket end has a
//! reader thread feeding the owning node's mailbox and a writer thread that
//! holds each frame until its sampled QoS delay has elapsed. Agents stay
//! single-actor: during an episode each one runs on its own thread and only
//! touches its own endpoint.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::{Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::codec::{self, Content, Envelope, FrameIoError};
use super::qos::{sample_latency, sample_retransmissions, QosConfig};
use crate::consensus::{AgentState, ConsensusError, EpisodeResult, StateMsg};
use crate::topology::{CommGraph, WeightMatrix};

#[derive(Debug, Error)]
pub enum TcpError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("port {base} + {node} overflows the port range")]
    PortRange { base: u16, node: usize },
    #[error("node {node}: link failure: {reason}")]
    Link { node: usize, reason: String },
    #[error("node {node}: timed out waiting in round {round}")]
    Timeout { node: usize, round: u64 },
    #[error("node {node}: unexpected message {content:?}")]
    Protocol { node: usize, content: Content },
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Frame(#[from] FrameIoError),
    #[error("initial vector has {found} entries for {expected} nodes")]
    Dimension { expected: usize, found: usize },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> TcpError {
    let context = context.into();
    move |source| TcpError::Io { context, source }
}

struct Outgoing {
    due: Instant,
    frame: Vec<u8>,
}

type Inbound = Result<Envelope, String>;

struct Endpoint {
    id: usize,
    mailbox: Receiver<Inbound>,
    outboxes: BTreeMap<usize, Sender<Outgoing>>,
    next_id: u64,
    rng: ChaCha8Rng,
}

impl Endpoint {
    fn broadcast(&mut self, qos: &QosConfig, msg: StateMsg) -> Result<(), TcpError> {
        for (&peer, tx) in &self.outboxes {
            let env = Envelope::state(self.next_id, msg);
            self.next_id += 1;
            let frame = codec::encode_frame(&env).map_err(FrameIoError::from)?;
            let retries = sample_retransmissions(qos, &mut self.rng);
            let delay = f64::from(retries) * qos.retransmit_timeout + sample_latency(qos, &mut self.rng);
            let due = Instant::now() + Duration::from_secs_f64(delay);
            tx.send(Outgoing { due, frame })
                .map_err(|_| TcpError::Link { node: self.id + 1, reason: format!("writer to node {} closed", peer + 1) })?;
        }
        Ok(())
    }

    fn run_agent(
        &mut self,
        qos: &QosConfig,
        weights: &WeightMatrix,
        value: f64,
        rounds: u64,
        timeout: Duration,
    ) -> Result<f64, TcpError> {
        let mut agent = AgentState::new(self.id, weights, value, rounds)?;
        if let Some(m) = agent.initial_broadcast() {
            self.broadcast(qos, m)?;
        }
        for m in agent.drain(weights)? {
            self.broadcast(qos, m)?;
        }
        while !agent.is_done() {
            let inbound = match self.mailbox.recv_timeout(timeout) {
                Ok(v) => v,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(TcpError::Timeout { node: self.id + 1, round: agent.round })
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(TcpError::Link { node: self.id + 1, reason: "mailbox closed".into() })
                }
            };
            let env = inbound.map_err(|reason| TcpError::Link { node: self.id + 1, reason })?;
            let Content::State(msg) = env.content else {
                return Err(TcpError::Protocol { node: self.id + 1, content: env.content });
            };
            agent.handle_message(msg)?;
            for m in agent.drain(weights)? {
                self.broadcast(qos, m)?;
            }
        }
        Ok(agent.value)
    }
}

/// A connected set of loopback agents.
pub struct TcpCluster {
    endpoints: Vec<Endpoint>,
    addrs: Vec<SocketAddr>,
    sockets: Vec<TcpStream>,
    threads: Vec<JoinHandle<()>>,
    qos: QosConfig,
    timeout: Duration,
}

impl TcpCluster {
    pub fn connect(graph: &CommGraph, base_port: u16, qos: QosConfig) -> Result<Self, TcpError> {
        let n = graph.len();
        let mut listeners = Vec::with_capacity(n);
        for i in 0..n {
            let port = if base_port == 0 {
                0
            } else {
                u16::try_from(usize::from(base_port) + i).map_err(|_| TcpError::PortRange { base: base_port, node: i })?
            };
            let l = TcpListener::bind((Ipv4Addr::LOCALHOST, port))
                .map_err(io_err(format!("binding node {} on port {port}", i + 1)))?;
            listeners.push(l);
        }
        let addrs: Vec<SocketAddr> = listeners
            .iter()
            .map(|l| l.local_addr())
            .collect::<Result<_, _>>()
            .map_err(io_err("reading listener address"))?;

        let mut inboxes: Vec<(Sender<Inbound>, Receiver<Inbound>)> = (0..n).map(|_| mpsc::channel()).collect();
        let mut endpoints: Vec<Endpoint> = Vec::with_capacity(n);
        let mut mailbox_tx = Vec::with_capacity(n);
        for (i, (tx, rx)) in inboxes.drain(..).enumerate() {
            mailbox_tx.push(tx);
            endpoints.push(Endpoint {
                id: i,
                mailbox: rx,
                outboxes: BTreeMap::new(),
                next_id: 1,
                rng: ChaCha8Rng::seed_from_u64(qos.seed.wrapping_add(i as u64)),
            });
        }

        let mut cluster = Self { endpoints, addrs, sockets: Vec::new(), threads: Vec::new(), qos, timeout: Duration::from_secs(10) };
        for (i, j) in graph.edges() {
            let a = TcpStream::connect(cluster.addrs[j]).map_err(io_err(format!("connecting node {} to {}", i + 1, j + 1)))?;
            let (b, _) = listeners[j].accept().map_err(io_err(format!("node {} accepting", j + 1)))?;
            cluster.attach(i, j, a, mailbox_tx[i].clone())?;
            cluster.attach(j, i, b, mailbox_tx[j].clone())?;
        }
        Ok(cluster)
    }

    fn attach(&mut self, owner: usize, peer: usize, stream: TcpStream, mailbox: Sender<Inbound>) -> Result<(), TcpError> {
        stream.set_nodelay(true).map_err(io_err("set_nodelay"))?;
        let mut reader = stream.try_clone().map_err(io_err("cloning socket"))?;
        let mut writer = stream.try_clone().map_err(io_err("cloning socket"))?;
        self.sockets.push(stream);

        self.threads.push(thread::spawn(move || loop {
            match codec::read_frame(&mut reader) {
                Ok(Some(env)) => {
                    if mailbox.send(Ok(env)).is_err() {
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    let _ = mailbox.send(Err(format!("from node {}: {e}", peer + 1)));
                    break;
                }
            }
        }));

        let (tx, rx) = mpsc::channel::<Outgoing>();
        self.endpoints[owner].outboxes.insert(peer, tx);
        self.threads.push(thread::spawn(move || {
            for out in rx {
                let now = Instant::now();
                if out.due > now {
                    thread::sleep(out.due - now);
                }
                if writer.write_all(&out.frame).is_err() {
                    break;
                }
            }
            let _ = writer.shutdown(Shutdown::Write);
        }));
        Ok(())
    }

    pub fn addrs(&self) -> &[SocketAddr] {
        &self.addrs
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    /// Runs one consensus episode with every agent on its own thread.
    /// `duration` in the result is wall-clock seconds.
    pub fn run_episode(&mut self, weights: &WeightMatrix, initial: &[f64], rounds: u64) -> Result<EpisodeResult, TcpError> {
        if initial.len() != self.endpoints.len() {
            return Err(TcpError::Dimension { expected: self.endpoints.len(), found: initial.len() });
        }
        let qos = self.qos;
        let timeout = self.timeout;
        let start = Instant::now();
        let values = thread::scope(|s| {
            let handles: Vec<_> = self
                .endpoints
                .iter_mut()
                .zip(initial)
                .map(|(ep, &x)| s.spawn(move || ep.run_agent(&qos, weights, x, rounds, timeout)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("agent thread panicked"))
                .collect::<Result<Vec<f64>, TcpError>>()
        })?;
        Ok(EpisodeResult { values, rounds, duration: start.elapsed().as_secs_f64() })
    }
}

impl Drop for TcpCluster {
    fn drop(&mut self) {
        for ep in &mut self.endpoints {
            ep.outboxes.clear();
        }
        for s in &self.sockets {
            let _ = s.shutdown(Shutdown::Both);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}
