//! Synchronous-round average consensus.
//!
//! [`AgentState`] is the per-agent state machine driven by messages;
//! [`run_episode_sync`] is the batch form used as its oracle. Both go through
//! [`local_update`], so a lossless message-driven run reproduces the batch
//! vectors exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::WeightMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsensusError {
    #[error("node {node}: missing value from neighbor {neighbor}")]
    MissingNeighbor { node: usize, neighbor: usize },
    #[error("node {node}: unexpected value from non-neighbor {sender}")]
    UnexpectedNeighbor { node: usize, sender: usize },
    #[error("node {node}: message from {sender} which is not a neighbor (topology mismatch)")]
    NotNeighbor { node: usize, sender: usize },
    #[error("node {node}: non-finite value {value}")]
    NonFinite { node: usize, value: f64 },
}

/// One state broadcast: `sender`'s value after `round` updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateMsg {
    pub sender: usize,
    pub round: u64,
    pub value: f64,
}

/// Applies one averaging step at node `i`.
///
/// `neighbor_values` must name every neighbor of `i` exactly once, in any
/// order. Summation runs over neighbors in ascending index, self term last.
pub fn local_update(
    weights: &WeightMatrix,
    i: usize,
    self_value: f64,
    neighbor_values: &[(usize, f64)],
) -> Result<f64, ConsensusError> {
    let expected = weights.neighbors(i);
    if let Some(&(sender, _)) = neighbor_values.iter().find(|(j, _)| !expected.contains(j)) {
        return Err(ConsensusError::UnexpectedNeighbor { node: i, sender });
    }
    let mut acc = 0.0;
    for &j in expected {
        let mut found = neighbor_values.iter().filter(|(s, _)| *s == j);
        let Some(&(_, v)) = found.next() else {
            return Err(ConsensusError::MissingNeighbor { node: i, neighbor: j });
        };
        if found.next().is_some() {
            return Err(ConsensusError::UnexpectedNeighbor { node: i, sender: j });
        }
        acc += weights.get(i, j) * v;
    }
    Ok(acc + weights.get(i, i) * self_value)
}

/// Result of one consensus episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub values: Vec<f64>,
    pub rounds: u64,
    /// Simulated seconds from snapshot to the last agent finishing.
    pub duration: f64,
}

impl EpisodeResult {
    pub fn residual(&self) -> f64 {
        spread(&self.values)
    }
}

/// `max - min` over the vector; zero for empty input.
pub fn spread(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Every round's vector, starting with `initial` (length `rounds + 1`).
pub fn sync_trajectory(initial: &[f64], weights: &WeightMatrix, rounds: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(rounds as usize + 1);
    out.push(initial.to_vec());
    for _ in 0..rounds {
        let next = weights.apply(out.last().expect("non-empty"));
        out.push(next);
    }
    out
}

/// Batch oracle: `W^rounds · initial`, evaluated one product at a time.
pub fn run_episode_sync(initial: &[f64], weights: &WeightMatrix, rounds: u64) -> EpisodeResult {
    let mut x = initial.to_vec();
    for _ in 0..rounds {
        x = weights.apply(&x);
    }
    EpisodeResult { values: x, rounds, duration: 0.0 }
}

/// Per-agent consensus state machine with a per-round barrier.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: usize,
    pub round: u64,
    pub value: f64,
    /// Final round for this episode; the agent is idle once reached.
    pub target: u64,
    neighbors: Vec<usize>,
    inbox: BTreeMap<(u64, usize), f64>,
}

impl AgentState {
    pub fn new(id: usize, weights: &WeightMatrix, value: f64, target: u64) -> Result<Self, ConsensusError> {
        if !value.is_finite() {
            return Err(ConsensusError::NonFinite { node: id, value });
        }
        Ok(Self {
            id,
            round: 0,
            value,
            target,
            neighbors: weights.neighbors(id).to_vec(),
            inbox: BTreeMap::new(),
        })
    }

    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    pub fn is_done(&self) -> bool {
        self.round >= self.target
    }

    /// Buffered `(round, sender) -> value` entries.
    pub fn inbox(&self) -> &BTreeMap<(u64, usize), f64> {
        &self.inbox
    }

    /// The round-0 broadcast, or `None` when the episode has zero rounds.
    pub fn initial_broadcast(&self) -> Option<StateMsg> {
        (!self.is_done()).then_some(StateMsg { sender: self.id, round: self.round, value: self.value })
    }

    /// Buffers `msg`. Returns `false` if it was a duplicate or refers to a
    /// round this agent has already consumed.
    pub fn handle_message(&mut self, msg: StateMsg) -> Result<bool, ConsensusError> {
        if !self.neighbors.contains(&msg.sender) {
            return Err(ConsensusError::NotNeighbor { node: self.id, sender: msg.sender });
        }
        if !msg.value.is_finite() {
            return Err(ConsensusError::NonFinite { node: msg.sender, value: msg.value });
        }
        if msg.round < self.round {
            return Ok(false);
        }
        let key = (msg.round, msg.sender);
        if self.inbox.contains_key(&key) {
            return Ok(false);
        }
        self.inbox.insert(key, msg.value);
        Ok(true)
    }

    /// Advances one round if every neighbor's value for the current round is
    /// buffered. Returns the broadcast for the new round, unless the new round
    /// is the target (nobody needs it).
    pub fn try_advance(&mut self, weights: &WeightMatrix) -> Result<Option<StateMsg>, ConsensusError> {
        if self.is_done() {
            return Ok(None);
        }
        let round = self.round;
        if !self.neighbors.iter().all(|&j| self.inbox.contains_key(&(round, j))) {
            return Ok(None);
        }
        let collected: Vec<(usize, f64)> = self
            .neighbors
            .iter()
            .map(|&j| (j, self.inbox.remove(&(round, j)).expect("checked above")))
            .collect();
        self.value = local_update(weights, self.id, self.value, &collected)?;
        self.round += 1;
        if self.is_done() {
            Ok(None)
        } else {
            Ok(Some(StateMsg { sender: self.id, round: self.round, value: self.value }))
        }
    }

    /// Advances as far as buffered messages allow, collecting broadcasts.
    pub fn drain(&mut self, weights: &WeightMatrix) -> Result<Vec<StateMsg>, ConsensusError> {
        let mut out = Vec::new();
        let mut last = self.round;
        loop {
            let emitted = self.try_advance(weights)?;
            if self.round == last {
                break;
            }
            last = self.round;
            out.extend(emitted);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{metropolis_weights, CommGraph};

    fn w() -> WeightMatrix {
        metropolis_weights(&CommGraph::reference())
    }

    #[test]
    fn local_update_examples() {
        let w = w();
        // node 3 (index 2): self weight 0, neighbors 2,4,5 at 1/3
        let v = local_update(&w, 2, 3.0, &[(1, 2.0), (3, 4.0), (4, 5.0)]).unwrap();
        assert!((v - 11.0 / 3.0).abs() < 1e-15);
        let v = local_update(&w, 0, 1.0, &[(3, 4.0)]).unwrap();
        assert_eq!(v, 2.5);
        let v = local_update(&w, 2, 7.0, &[(4, 7.0), (1, 7.0), (3, 7.0)]).unwrap();
        assert!((v - 7.0).abs() < 1e-15);
    }

    #[test]
    fn local_update_rejects_bad_neighbor_sets() {
        let w = w();
        assert_eq!(
            local_update(&w, 0, 1.0, &[]),
            Err(ConsensusError::MissingNeighbor { node: 0, neighbor: 3 })
        );
        assert_eq!(
            local_update(&w, 0, 1.0, &[(3, 4.0), (2, 1.0)]),
            Err(ConsensusError::UnexpectedNeighbor { node: 0, sender: 2 })
        );
        assert!(local_update(&w, 0, 1.0, &[(3, 4.0), (3, 4.0)]).is_err());
    }

    #[test]
    fn sync_zero_rounds_is_identity() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = run_episode_sync(&x, &w(), 0);
        assert_eq!(r.values, x);
        assert_eq!(r.rounds, 0);
    }

    #[test]
    fn buffering_and_idempotence() {
        let w = w();
        let mut a = AgentState::new(0, &w, 1.0, 50).unwrap();
        let msg = StateMsg { sender: 3, round: 0, value: 4.0 };
        assert!(a.handle_message(msg).unwrap());
        assert_eq!(a.inbox().len(), 1);
        assert!(!a.handle_message(msg).unwrap());
        assert_eq!(a.inbox().len(), 1);
        assert_eq!(
            a.handle_message(StateMsg { sender: 2, round: 0, value: 3.0 }),
            Err(ConsensusError::NotNeighbor { node: 0, sender: 2 })
        );
    }

    #[test]
    fn advance_emits_next_round() {
        let w = w();
        let mut a = AgentState::new(0, &w, 1.0, 50).unwrap();
        a.handle_message(StateMsg { sender: 3, round: 0, value: 4.0 }).unwrap();
        let out = a.try_advance(&w).unwrap();
        assert_eq!(a.round, 1);
        assert_eq!(a.value, 2.5);
        assert_eq!(out, Some(StateMsg { sender: 0, round: 1, value: 2.5 }));
        assert!(a.inbox().is_empty());
    }

    #[test]
    fn barrier_holds_until_all_neighbors_report() {
        let w = w();
        let mut a = AgentState::new(2, &w, 3.0, 50).unwrap();
        a.handle_message(StateMsg { sender: 1, round: 0, value: 2.0 }).unwrap();
        a.handle_message(StateMsg { sender: 3, round: 0, value: 4.0 }).unwrap();
        // a future-round message stays buffered
        a.handle_message(StateMsg { sender: 4, round: 1, value: 9.0 }).unwrap();
        assert_eq!(a.try_advance(&w).unwrap(), None);
        assert_eq!(a.round, 0);
        assert_eq!(a.inbox().len(), 3);
    }

    #[test]
    fn single_agent_advances_every_call() {
        let g = CommGraph::new(vec![vec![true]]).unwrap();
        let w = metropolis_weights(&g);
        let mut a = AgentState::new(0, &w, 0.25, 3).unwrap();
        for k in 1..=3 {
            a.try_advance(&w).unwrap();
            assert_eq!(a.round, k);
            assert_eq!(a.value, 0.25);
        }
        assert!(a.is_done());
        assert_eq!(a.try_advance(&w).unwrap(), None);
        assert_eq!(a.round, 3);
    }

    #[test]
    fn stale_messages_are_ignored() {
        let w = w();
        let mut a = AgentState::new(0, &w, 1.0, 50).unwrap();
        a.handle_message(StateMsg { sender: 3, round: 0, value: 4.0 }).unwrap();
        a.try_advance(&w).unwrap();
        assert!(!a.handle_message(StateMsg { sender: 3, round: 0, value: 4.0 }).unwrap());
        assert!(a.inbox().is_empty());
    }

    #[test]
    fn rejects_non_finite() {
        let w = w();
        assert!(AgentState::new(0, &w, f64::NAN, 5).is_err());
        let mut a = AgentState::new(0, &w, 0.0, 5).unwrap();
        assert!(a.handle_message(StateMsg { sender: 3, round: 0, value: f64::INFINITY }).is_err());
    }

    #[test]
    fn spread_of_values() {
        assert_eq!(spread(&[]), 0.0);
        assert_eq!(spread(&[1.0, -2.0, 0.5]), 3.0);
    }
}
