use std::fmt::{self, Write as _};

use thiserror::Error;

use super::trace::{fmt_num, TraceRecord};
use crate::plant::DgParams;

/// Half-width of the frequency band counted as restored, Hz.
pub const SETTLING_BAND: f64 = 0.005;
/// Per-step output change below which a row counts as settled, kW.
pub const STEADY_POWER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot summarize an empty trace")]
pub struct EmptyTrace;

/// Duration of one consensus episode on the simulated clock.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub index: u64,
    pub start: f64,
    pub end: f64,
    /// Measurements the agents started from.
    pub snapshot: Vec<f64>,
    /// Values each agent handed to its controller.
    pub values: Vec<f64>,
}

impl EpisodeRecord {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeStats {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl EpisodeStats {
    pub fn from_episodes(episodes: &[EpisodeRecord]) -> Self {
        if episodes.is_empty() {
            return Self::default();
        }
        let d: Vec<f64> = episodes.iter().map(EpisodeRecord::duration).collect();
        Self {
            count: d.len(),
            min: d.iter().copied().fold(f64::INFINITY, f64::min),
            mean: d.iter().sum::<f64>() / d.len() as f64,
            max: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Restoration after one load event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSettling {
    pub event_time: f64,
    /// Largest |f_bus - f0| in the event's window, Hz.
    pub peak_deviation: f64,
    /// Seconds from the event until f_bus stays inside the band; `None` if
    /// it never does before the next event or the end of the run.
    pub settling: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub nadir: f64,
    pub nadir_time: f64,
    pub events: Vec<EventSettling>,
    /// Largest spread of `(p_out_i - P0_i)·kp_i` over settled rows after the
    /// first event, Hz.
    pub sharing_mismatch: Option<f64>,
    pub episodes: EpisodeStats,
    pub final_residual: f64,
    pub final_f_bus: f64,
}

impl Summary {
    /// Settling time after the first event.
    pub fn settling_time(&self) -> Option<f64> {
        self.events.first().and_then(|e| e.settling)
    }

    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "not-settled".to_string(), fmt_num);
        let mut s = String::new();
        let _ = writeln!(s, "nadir_hz={}", fmt_num(self.nadir));
        let _ = writeln!(s, "nadir_time_s={}", fmt_num(self.nadir_time));
        let _ = writeln!(s, "settling_s={}", opt(self.settling_time()));
        for (k, e) in self.events.iter().enumerate() {
            let _ = writeln!(s, "event_{}_time_s={}", k + 1, fmt_num(e.event_time));
            let _ = writeln!(s, "event_{}_peak_deviation_hz={}", k + 1, fmt_num(e.peak_deviation));
            let _ = writeln!(s, "event_{}_settling_s={}", k + 1, opt(e.settling));
        }
        let _ = writeln!(
            s,
            "sharing_mismatch_hz={}",
            self.sharing_mismatch.map_or_else(|| "none".to_string(), fmt_num)
        );
        let _ = writeln!(s, "episodes={}", self.episodes.count);
        let _ = writeln!(s, "episode_min_s={}", fmt_num(self.episodes.min));
        let _ = writeln!(s, "episode_mean_s={}", fmt_num(self.episodes.mean));
        let _ = writeln!(s, "episode_max_s={}", fmt_num(self.episodes.max));
        let _ = writeln!(s, "final_residual_hz={}", fmt_num(self.final_residual));
        let _ = writeln!(s, "final_f_bus_hz={}", fmt_num(self.final_f_bus));
        s
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frequency nadir     {:.6} Hz at t = {:.2} s", self.nadir, self.nadir_time)?;
        for (k, e) in self.events.iter().enumerate() {
            match e.settling {
                Some(s) => writeln!(
                    f,
                    "event {} @ {:>6.2} s  peak {:+.2} mHz, settled (±{} mHz) after {:.2} s",
                    k + 1,
                    e.event_time,
                    e.peak_deviation * 1e3,
                    SETTLING_BAND * 1e3,
                    s
                )?,
                None => writeln!(
                    f,
                    "event {} @ {:>6.2} s  peak {:+.2} mHz, not settled",
                    k + 1,
                    e.event_time,
                    e.peak_deviation * 1e3
                )?,
            }
        }
        if let Some(m) = self.sharing_mismatch {
            writeln!(f, "sharing mismatch    {m:.3e} Hz")?;
        }
        writeln!(
            f,
            "consensus episodes  {} (min {:.3} s, mean {:.3} s, max {:.3} s)",
            self.episodes.count, self.episodes.min, self.episodes.mean, self.episodes.max
        )?;
        writeln!(f, "final residual      {:.3e} Hz", self.final_residual)?;
        write!(f, "final f_bus         {:.9} Hz", self.final_f_bus)
    }
}

/// Reduces a trace to restoration metrics.
///
/// `event_times` are the load step times; with none, the whole trace is one
/// window starting at its first row.
pub fn summarize(
    trace: &[TraceRecord],
    dgs: &[DgParams],
    event_times: &[f64],
    episodes: &[EpisodeRecord],
) -> Result<Summary, EmptyTrace> {
    let first = trace.first().ok_or(EmptyTrace)?;
    let last = trace.last().ok_or(EmptyTrace)?;
    let f0 = dgs.first().map_or(crate::plant::RATED_FREQUENCY, |d| d.f0);
    let eps = 1e-9;

    let windows: Vec<f64> = if event_times.is_empty() { vec![first.t] } else { event_times.to_vec() };
    let after_first = |r: &&TraceRecord| r.t >= windows[0] - eps;

    let (nadir, nadir_time) = trace
        .iter()
        .filter(after_first)
        .fold((f64::INFINITY, first.t), |(m, mt), r| if r.f_bus < m { (r.f_bus, r.t) } else { (m, mt) });
    let (nadir, nadir_time) = if nadir.is_finite() { (nadir, nadir_time) } else { (first.f_bus, first.t) };

    let events = windows
        .iter()
        .enumerate()
        .map(|(k, &start)| {
            let end = windows.get(k + 1).copied().unwrap_or(f64::INFINITY);
            let rows: Vec<&TraceRecord> =
                trace.iter().filter(|r| r.t >= start - eps && r.t < end - eps).collect();
            let peak_deviation = rows
                .iter()
                .map(|r| r.f_bus - f0)
                .fold(0.0, |acc: f64, d| if d.abs() > acc.abs() { d } else { acc });
            let last_out = rows.iter().rposition(|r| (r.f_bus - f0).abs() > SETTLING_BAND);
            let settling = match last_out {
                None => Some(0.0),
                Some(i) if i + 1 < rows.len() => Some(rows[i + 1].t - start),
                Some(_) => None,
            };
            EventSettling { event_time: start, peak_deviation, settling }
        })
        .collect();

    let mut sharing_mismatch: Option<f64> = None;
    for pair in trace.windows(2) {
        let (prev, row) = (&pair[0], &pair[1]);
        if row.t < windows[0] - eps {
            continue;
        }
        let settled = row.p_out.iter().zip(&prev.p_out).all(|(a, b)| (a - b).abs() <= STEADY_POWER_TOL);
        if !settled {
            continue;
        }
        let scaled: Vec<f64> = row.p_out.iter().zip(dgs).map(|(p, d)| (p - d.p0) * d.kp).collect();
        let spread = crate::consensus::spread(&scaled);
        sharing_mismatch = Some(sharing_mismatch.map_or(spread, |m| m.max(spread)));
    }

    Ok(Summary {
        nadir,
        nadir_time,
        events,
        sharing_mismatch,
        episodes: EpisodeStats::from_episodes(episodes),
        final_residual: last.residual,
        final_f_bus: last.f_bus,
    })
}
