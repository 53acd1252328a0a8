//! Simulation clock, pending-event queue, time-driven stepping harness,
//! maintained counters and the CSV event log.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use crate::error::{Result, SimError};

/// Simulated time in seconds. Always finite and nonnegative.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(SimTime(value))
        } else {
            Err(SimError::InvalidParameter(format!(
                "simulation time must be finite and nonnegative, got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Scheduled instant of a possibly postponed event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventTime {
    At(SimTime),
    /// Postponed to the infinite future.
    Never,
}

impl EventTime {
    pub fn at(value: f64) -> Result<Self> {
        SimTime::new(value).map(EventTime::At)
    }

    pub fn time(self) -> Option<SimTime> {
        match self {
            EventTime::At(t) => Some(t),
            EventTime::Never => None,
        }
    }

    pub fn is_never(self) -> bool {
        matches!(self, EventTime::Never)
    }
}

/// Time stamp plus the state-change record of one event.
#[derive(Clone, Debug, PartialEq)]
pub struct EventDescriptor<P> {
    pub time: SimTime,
    pub subject: usize,
    pub payload: P,
}

impl<P> EventDescriptor<P> {
    pub fn new(time: SimTime, subject: usize, payload: P) -> Self {
        Self {
            time,
            subject,
            payload,
        }
    }
}

struct QueueEntry<P> {
    key: (SimTime, usize, u64),
    event: EventDescriptor<P>,
}

impl<P> PartialEq for QueueEntry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<P> Eq for QueueEntry<P> {}

impl<P> PartialOrd for QueueEntry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for QueueEntry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

/// Binary-heap event queue ordered by `(time, subject, insertion order)`.
///
/// The queue tracks the committed time (time of the last popped event) and
/// refuses insertions that would travel into the past.
pub struct EventQueue<P> {
    heap: BinaryHeap<Reverse<QueueEntry<P>>>,
    seq: u64,
    committed: SimTime,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            seq: 0,
            committed: SimTime::ZERO,
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn committed(&self) -> SimTime {
        self.committed
    }

    pub fn insert(&mut self, event: EventDescriptor<P>) -> Result<()> {
        if event.time < self.committed {
            return Err(SimError::CausalityViolation {
                event: event.time.value(),
                committed: self.committed.value(),
            });
        }
        let key = (event.time, event.subject, self.seq);
        self.seq += 1;
        self.heap.push(Reverse(QueueEntry { key, event }));
        Ok(())
    }

    /// Convenience wrapper around [`EventQueue::insert`].
    pub fn schedule(&mut self, time: SimTime, subject: usize, payload: P) -> Result<()> {
        self.insert(EventDescriptor::new(time, subject, payload))
    }

    /// Removes the minimal event. `None` means no pending events.
    pub fn pop_min(&mut self) -> Option<EventDescriptor<P>> {
        let Reverse(entry) = self.heap.pop()?;
        self.committed = entry.event.time;
        Some(entry.event)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(e)| e.event.time)
    }
}

/// A model that can be integrated by fixed time steps.
pub trait TimeStepped {
    /// Advance every component by `dt` assuming no interaction.
    fn advance(&mut self, dt: f64);
    /// Detect and resolve interactions at the end of the step ending at `t`.
    fn detect_and_resolve(&mut self, t: f64);
}

/// Runs `model` to `horizon` in `ceil(horizon / dt)` steps; the final step is
/// shortened so the model lands exactly on the horizon. Returns the step count.
pub fn timedriven_run<M: TimeStepped + ?Sized>(model: &mut M, dt: f64, horizon: f64) -> Result<u64> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SimError::InvalidParameter(format!(
            "time step must be positive, got {dt}"
        )));
    }
    SimTime::new(horizon)?;
    let steps = time_steps(dt, horizon);
    let mut t = 0.0;
    for k in 1..=steps {
        let end = if k == steps { horizon } else { k as f64 * dt };
        model.advance(end - t);
        model.detect_and_resolve(end);
        t = end;
    }
    Ok(steps)
}

/// `ceil(horizon / dt)` with slack for representation error.
pub fn time_steps(dt: f64, horizon: f64) -> u64 {
    let ratio = horizon / dt;
    let steps = ratio.ceil();
    if steps - ratio > 1.0 - 1e-9 {
        (steps - 1.0).max(0.0) as u64
    } else {
        steps as u64
    }
}

/// An integer statistic maintained incrementally by event hooks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MaintainedCounter {
    value: i64,
}

impl MaintainedCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn increment(&mut self) {
        self.value += 1;
    }

    pub fn decrement(&mut self) {
        self.value -= 1;
    }

    pub fn apply(&mut self, delta: i64) {
        self.value += delta;
    }

    pub fn value(&self) -> i64 {
        self.value
    }
}

/// Recomputes a counter by scanning the current model state.
pub trait LazyCount {
    fn lazy_count(&self) -> i64;
}

/// CSV event log with a `time,subject,event_kind,...` layout.
#[derive(Clone, Debug, PartialEq)]
pub struct EventLog {
    header: String,
    body: String,
    rows: usize,
}

impl EventLog {
    pub fn new(payload_columns: &[&str]) -> Self {
        let mut header = String::from("time,subject,event_kind");
        for c in payload_columns {
            header.push(',');
            header.push_str(c);
        }
        Self {
            header,
            body: String::new(),
            rows: 0,
        }
    }

    pub fn push(&mut self, time: f64, subject: usize, kind: &str, payload: &[String]) {
        let _ = write!(self.body, "{time},{subject},{kind}");
        for p in payload {
            self.body.push(',');
            self.body.push_str(p);
        }
        self.body.push('\n');
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", self.header, self.body)
    }
}
