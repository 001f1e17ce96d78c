//! A single consensus episode over the simulated network, outside any
//! scenario. Records every agent's value after every round.

use std::fmt;

use thiserror::Error;

use super::{decode_frame, Content, Delivery, Envelope, EventQueue, NetsimError, Network, QueueError};
use crate::consensus::{AgentState, ConsensusError, EpisodeResult, StateMsg};
use crate::topology::WeightMatrix;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Net(#[from] NetsimError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error("unexpected content {0:?}")]
    Content(Content),
    #[error("episode stalled with {0} agents unfinished")]
    Stalled(usize),
}

pub struct EpisodeTrace {
    pub result: EpisodeResult,
    /// `history[k][i]`: agent `i`'s value after `k` rounds.
    pub history: Vec<Vec<f64>>,
}

struct Ev(Delivery);

impl From<Delivery> for Ev {
    fn from(d: Delivery) -> Self {
        Ev(d)
    }
}

impl fmt::Debug for Ev {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

fn send(net: &mut Network, q: &mut EventQueue<Ev>, weights: &WeightMatrix, msg: StateMsg) -> Result<(), NetsimError> {
    for &to in weights.neighbors(msg.sender) {
        let env = Envelope::state(net.next_msg_id(msg.sender), msg);
        net.deliver(q, &env, msg.sender, to)?;
    }
    Ok(())
}

pub fn run_networked_episode(
    net: &mut Network,
    weights: &WeightMatrix,
    initial: &[f64],
    rounds: u64,
) -> Result<EpisodeTrace, EpisodeError> {
    let n = initial.len();
    let mut history = vec![vec![f64::NAN; n]; rounds as usize + 1];
    history[0].copy_from_slice(initial);

    let mut q: EventQueue<Ev> = EventQueue::new();
    let mut agents = initial
        .iter()
        .enumerate()
        .map(|(i, &x)| AgentState::new(i, weights, x, rounds))
        .collect::<Result<Vec<_>, _>>()?;

    for a in &mut agents {
        let mut out: Vec<StateMsg> = a.initial_broadcast().into_iter().collect();
        let before = a.round;
        out.extend(a.drain(weights)?);
        // single-node graphs advance without traffic
        for k in before + 1..=a.round {
            history[k as usize][a.id] = a.value;
        }
        for m in out {
            send(net, &mut q, weights, m)?;
        }
    }

    let mut last = 0.0;
    q.run_until(f64::INFINITY, |q, t, Ev(d)| -> Result<(), EpisodeError> {
        let env = decode_frame(&d.frame).map_err(NetsimError::from)?;
        let Content::State(msg) = env.content else {
            return Err(EpisodeError::Content(env.content));
        };
        let agent = &mut agents[d.to];
        agent.handle_message(msg)?;
        loop {
            let before = agent.round;
            let out = agent.try_advance(weights)?;
            if agent.round == before {
                break;
            }
            history[agent.round as usize][agent.id] = agent.value;
            if let Some(m) = out {
                send(net, q, weights, m)?;
            }
        }
        last = t;
        Ok(())
    })
    .map_err(|e| match e {
        QueueError::Handler { source, .. } => source,
        QueueError::InThePast { at, now } => EpisodeError::Net(super::ScheduleError { at, now }.into()),
    })?;

    let unfinished = agents.iter().filter(|a| !a.is_done()).count();
    if unfinished > 0 {
        return Err(EpisodeError::Stalled(unfinished));
    }
    Ok(EpisodeTrace {
        result: EpisodeResult { values: agents.iter().map(|a| a.value).collect(), rounds, duration: last },
        history,
    })
}
