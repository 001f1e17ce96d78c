//! Deterministic discrete-event queue.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::panic::{self, AssertUnwindSafe};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QueueError<H: std::error::Error + 'static> {
    #[error("cannot schedule at t={at} before now={now}")]
    InThePast { at: f64, now: f64 },
    #[error("t={time:.6}: handler failed on {event}: {source}")]
    Handler {
        time: f64,
        event: String,
        #[source]
        source: H,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("cannot schedule at t={at} before now={now}")]
pub struct ScheduleError {
    pub at: f64,
    pub now: f64,
}

struct Entry<E> {
    time: f64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

/// Events pop in time order; equal times pop in insertion order.
pub struct EventQueue<E> {
    now: f64,
    seq: u64,
    heap: BinaryHeap<Reverse<Entry<E>>>,
    log: Option<Vec<String>>,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self { now: 0.0, seq: 0, heap: BinaryHeap::new(), log: None }
    }

    /// Also records every popped event as `"<time> <event>"`.
    pub fn with_log() -> Self {
        Self { log: Some(Vec::new()), ..Self::new() }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn log(&self) -> Option<&[String]> {
        self.log.as_deref()
    }

    pub fn schedule_at(&mut self, time: f64, event: E) -> Result<(), ScheduleError> {
        if !(time >= self.now) {
            return Err(ScheduleError { at: time, now: self.now });
        }
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Reverse(Entry { time, seq, event }));
        Ok(())
    }

    pub fn schedule_in(&mut self, delay: f64, event: E) -> Result<(), ScheduleError> {
        self.schedule_at(self.now + delay, event)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    /// Pops the next event if it is due at or before `t_end`.
    pub fn pop_until(&mut self, t_end: f64) -> Option<(f64, E)> {
        if self.peek_time()? > t_end {
            return None;
        }
        let Reverse(e) = self.heap.pop()?;
        self.now = e.time;
        Some((e.time, e.event))
    }
}

impl<E: fmt::Debug> EventQueue<E> {
    /// Runs every event due by `t_end`, then moves the clock to `t_end`.
    ///
    /// Handler errors and panics are reported with the event's time and
    /// description.
    pub fn run_until<H, F>(&mut self, t_end: f64, mut handler: F) -> Result<(), QueueError<H>>
    where
        H: std::error::Error + 'static,
        F: FnMut(&mut Self, f64, &E) -> Result<(), H>,
    {
        if t_end < self.now {
            return Err(QueueError::InThePast { at: t_end, now: self.now });
        }
        while let Some((time, event)) = self.pop_until(t_end) {
            if let Some(log) = &mut self.log {
                log.push(format!("{time:?} {event:?}"));
            }
            match panic::catch_unwind(AssertUnwindSafe(|| handler(self, time, &event))) {
                Ok(Ok(())) => {}
                Ok(Err(source)) => {
                    return Err(QueueError::Handler { time, event: format!("{event:?}"), source })
                }
                Err(payload) => {
                    let msg = payload
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| payload.downcast_ref::<String>().cloned())
                        .unwrap_or_default();
                    panic!("event handler panicked at t={time:.6} on {event:?}: {msg}");
                }
            }
        }
        self.now = t_end;
        Ok(())
    }
}
