//! Coupled plant / consensus / controller loop on one event timeline.
//!
//! Plant ticks are pre-scheduled every `dt`, so on equal timestamps a tick
//! always runs before anything scheduled later (episode starts, deliveries).
//! Episodes run back to back: an episode starts on the tick after the
//! previous result was handed to the controllers.

use thiserror::Error;

use super::config::{Scenario, Transport};
use super::summary::{summarize, EpisodeRecord, Summary};
use super::trace::TraceRecord;
use crate::consensus::{spread, AgentState, ConsensusError, StateMsg};
use crate::control::{ControlError, PiState};
use crate::netsim::tcp::{TcpCluster, TcpError};
use crate::netsim::{decode_frame, Content, Delivery, Envelope, EventQueue, NetStats, NetsimError, Network, QueueError};
use crate::plant::{measure_deviation, NoiseSampler, PlantError, PlantState};
use crate::topology::{metropolis_weights, WeightMatrix};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Net(#[from] NetsimError),
    #[error(transparent)]
    Tcp(#[from] TcpError),
    #[error("protocol violation: frame on link {from}->{to} claims sender {claimed}")]
    Spoofed { from: usize, to: usize, claimed: usize },
    #[error("protocol violation: unexpected content {0:?}")]
    UnexpectedContent(Content),
    #[error("empty trace")]
    EmptyTrace,
}

#[derive(Debug)]
pub enum Event {
    Tick(u64),
    EpisodeStart,
    Deliver(Delivery),
    /// TCP mode: result of the running episode becomes available.
    EpisodeDone,
}

impl From<Delivery> for Event {
    fn from(d: Delivery) -> Self {
        Event::Deliver(d)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep a textual log of every event popped from the queue.
    pub log_events: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub summary: Summary,
    pub episodes: Vec<EpisodeRecord>,
    pub net_stats: NetStats,
    pub event_log: Option<Vec<String>>,
}

#[allow(clippy::large_enum_variant)]
enum Link {
    Sim(Network),
    Tcp(TcpCluster),
}

struct Active {
    start: f64,
    snapshot: Vec<f64>,
    agents: Vec<AgentState>,
    remaining: usize,
    /// TCP mode: values computed over the sockets.
    result: Option<Vec<f64>>,
}

struct Runner<'a> {
    sc: &'a Scenario,
    weights: WeightMatrix,
    plant: PlantState,
    pis: Vec<PiState>,
    noise: NoiseSampler,
    transport: Link,
    active: Option<Active>,
    episodes: Vec<EpisodeRecord>,
    trace: Vec<TraceRecord>,
    last_residual: f64,
}

pub fn run_simulation(sc: &Scenario) -> Result<RunOutput, SimError> {
    run_simulation_with(sc, RunOptions::default())
}

pub fn run_simulation_with(sc: &Scenario, opts: RunOptions) -> Result<RunOutput, SimError> {
    let n = sc.graph.len();
    let transport = match sc.transport {
        Transport::Sim => Link::Sim(Network::new(sc.graph.clone(), sc.qos)?),
        Transport::Tcp => Link::Tcp(TcpCluster::connect(&sc.graph, sc.tcp_base_port, sc.qos)?),
    };
    let mut runner = Runner {
        sc,
        weights: metropolis_weights(&sc.graph),
        plant: PlantState::settled(&sc.dgs, &sc.schedule, vec![0.0; n]),
        pis: vec![PiState::default(); n],
        noise: NoiseSampler::new(sc.noise_sigma, sc.noise_seed())?,
        transport,
        active: None,
        episodes: Vec::new(),
        trace: Vec::with_capacity(sc.ticks() as usize + 1),
        last_residual: 0.0,
    };
    runner.record(0.0);

    let mut queue = if opts.log_events { EventQueue::with_log() } else { EventQueue::new() };
    let ticks = sc.ticks();
    for k in 1..=ticks {
        queue.schedule_at(k as f64 * sc.dt, Event::Tick(k)).map_err(NetsimError::from)?;
    }
    queue.schedule_at(0.0, Event::EpisodeStart).map_err(NetsimError::from)?;

    let t_end = ticks as f64 * sc.dt;
    queue.run_until(t_end, |q, t, ev| runner.handle(q, t, ev)).map_err(|e| match e {
        QueueError::Handler { source, .. } => source,
        QueueError::InThePast { at, now } => SimError::Net(NetsimError::Schedule(crate::netsim::ScheduleError { at, now })),
    })?;

    let event_times: Vec<f64> = sc.schedule.steps().iter().map(|s| s.time).collect();
    let summary = summarize(&runner.trace, &sc.dgs, &event_times, &runner.episodes).map_err(|_| SimError::EmptyTrace)?;
    let net_stats = match &runner.transport {
        Link::Sim(net) => net.stats(),
        Link::Tcp(_) => NetStats::default(),
    };
    Ok(RunOutput {
        event_log: queue.log().map(<[String]>::to_vec),
        trace: runner.trace,
        summary,
        episodes: runner.episodes,
        net_stats,
    })
}

impl Runner<'_> {
    fn record(&mut self, t: f64) {
        self.trace.push(TraceRecord {
            t,
            f_bus: self.plant.f_bus,
            p_out: self.plant.p_out.clone(),
            delta_f: self.pis.iter().map(|p| p.output).collect(),
            held: self.pis.iter().map(|p| p.held_input).collect(),
            episode: self.episodes.len() as u64,
            residual: self.last_residual,
        });
    }

    fn handle(&mut self, q: &mut EventQueue<Event>, t: f64, ev: &Event) -> Result<(), SimError> {
        match ev {
            Event::Tick(k) => self.tick(*k),
            Event::EpisodeStart => self.start_episode(q, t),
            Event::Deliver(d) => self.on_delivery(q, t, d),
            Event::EpisodeDone => {
                let active = self.active.take().expect("episode in progress");
                let values = active.result.clone().expect("tcp result");
                self.finish_episode(q, t, active.start, active.snapshot, values)
            }
        }
    }

    fn tick(&mut self, k: u64) -> Result<(), SimError> {
        let sc = self.sc;
        for pi in &mut self.pis {
            pi.step(&sc.gains, sc.dt);
        }
        self.plant.delta_f_cmd = self.pis.iter().map(|p| p.output).collect();
        self.plant.step(&sc.dgs, &sc.schedule, sc.dt)?;
        let t = k as f64 * sc.dt;
        self.plant.t = t;
        self.record(t);
        Ok(())
    }

    fn start_episode(&mut self, q: &mut EventQueue<Event>, t: f64) -> Result<(), SimError> {
        let sc = self.sc;
        let snapshot: Vec<f64> = sc.dgs.iter().map(|dg| measure_deviation(&self.plant, dg, &mut self.noise)).collect();
        match &mut self.transport {
            Link::Tcp(cluster) => {
                let result = cluster.run_episode(&self.weights, &snapshot, sc.rounds)?;
                self.active = Some(Active {
                    start: t,
                    snapshot,
                    agents: Vec::new(),
                    remaining: 0,
                    result: Some(result.values),
                });
                q.schedule_at(t + result.duration, Event::EpisodeDone).map_err(NetsimError::from)?;
                Ok(())
            }
            Link::Sim(_) => {
                let mut agents = snapshot
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| AgentState::new(i, &self.weights, x, sc.rounds))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut outgoing = Vec::new();
                for a in &mut agents {
                    outgoing.extend(a.initial_broadcast());
                    outgoing.extend(a.drain(&self.weights)?);
                }
                let remaining = agents.iter().filter(|a| !a.is_done()).count();
                self.active = Some(Active { start: t, snapshot, agents, remaining, result: None });
                for m in outgoing {
                    self.broadcast(q, m)?;
                }
                self.maybe_finish(q, t)
            }
        }
    }

    fn broadcast(&mut self, q: &mut EventQueue<Event>, msg: StateMsg) -> Result<(), SimError> {
        let Link::Sim(net) = &mut self.transport else {
            unreachable!("simulated transport only")
        };
        for &to in self.weights.neighbors(msg.sender) {
            let env = Envelope::state(net.next_msg_id(msg.sender), msg);
            net.deliver(q, &env, msg.sender, to)?;
        }
        Ok(())
    }

    fn on_delivery(&mut self, q: &mut EventQueue<Event>, t: f64, d: &Delivery) -> Result<(), SimError> {
        let env = decode_frame(&d.frame).map_err(NetsimError::from)?;
        let Content::State(msg) = env.content else {
            return Err(SimError::UnexpectedContent(env.content));
        };
        if msg.sender != d.from {
            return Err(SimError::Spoofed { from: d.from + 1, to: d.to + 1, claimed: msg.sender + 1 });
        }
        let weights = &self.weights;
        let active = self.active.as_mut().expect("delivery outside an episode");
        let agent = &mut active.agents[d.to];
        let was_done = agent.is_done();
        agent.handle_message(msg)?;
        let out = agent.drain(weights)?;
        if !was_done && agent.is_done() {
            active.remaining -= 1;
        }
        for m in out {
            self.broadcast(q, m)?;
        }
        self.maybe_finish(q, t)
    }

    fn maybe_finish(&mut self, q: &mut EventQueue<Event>, t: f64) -> Result<(), SimError> {
        if self.active.as_ref().is_some_and(|a| a.remaining == 0) {
            let active = self.active.take().expect("checked");
            let values = active.agents.iter().map(|a| a.value).collect();
            self.finish_episode(q, t, active.start, active.snapshot, values)?;
        }
        Ok(())
    }

    fn finish_episode(
        &mut self,
        q: &mut EventQueue<Event>,
        t: f64,
        start: f64,
        snapshot: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<(), SimError> {
        for (pi, &v) in self.pis.iter_mut().zip(&values) {
            pi.set_input(v)?;
        }
        self.last_residual = spread(&values);
        self.episodes.push(EpisodeRecord { index: self.episodes.len() as u64, start, end: t, snapshot, values });

        let dt = self.sc.dt;
        let mut k = (t / dt).floor() as u64 + 1;
        while (k as f64 * dt) <= t {
            k += 1;
        }
        q.schedule_at(k as f64 * dt, Event::EpisodeStart).map_err(NetsimError::from)?;
        Ok(())
    }
}
