//! Synthetic relaxation workloads on a ring of Poisson components.
//!
//! * decoupled: every event only mixes a private draw into its own value;
//! * token ring: a single token travels around the ring, handed on at the
//!   holder's next arrival;
//! * sprinkled: every event reads the value of a random ring neighbor.
//!
//! Events record which external event they read, so the dependency graph of a
//! committed strip can be rebuilt from the trajectories alone.

use super::levels::EventGraph;
use super::syncrelax::{ExternalView, RelaxModel, RelaxRun, Strip, Trajectory};
use crate::rng::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkloadKind {
    Decoupled,
    TokenRing,
    Sprinkled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub kind: WorkloadKind,
    pub n: usize,
    pub rate: f64,
    pub seed: u64,
}

/// Event of a synthetic workload. Only `value` takes part in equality; `read`
/// is dependency bookkeeping.
#[derive(Clone, Copy, Debug)]
pub struct WorkloadEvent {
    pub value: u64,
    /// `(component, events of that component before this one in the strip)`
    /// for the state read by this event.
    pub read: Option<(usize, usize)>,
}

impl PartialEq for WorkloadEvent {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadState {
    pub last_time: Vec<f64>,
    pub count: Vec<u64>,
    pub value: Vec<u64>,
    /// Token ownership at the start of the strip (token ring only).
    pub holding: Vec<bool>,
}

/// Decoupled workload constructor.
pub struct Decoupled;

impl Decoupled {
    #[allow(clippy::new_ret_no_self)]
    pub fn new(n: usize, rate: f64, seed: u64) -> Workload {
        Workload {
            kind: WorkloadKind::Decoupled,
            n,
            rate,
            seed,
        }
    }
}

impl Workload {
    pub fn token_ring(n: usize, rate: f64, seed: u64) -> Self {
        Self {
            kind: WorkloadKind::TokenRing,
            n,
            rate,
            seed,
        }
    }

    pub fn sprinkled(n: usize, rate: f64, seed: u64) -> Self {
        Self {
            kind: WorkloadKind::Sprinkled,
            n,
            rate,
            seed,
        }
    }

    fn pred(&self, c: usize) -> usize {
        (c + self.n - 1) % self.n
    }
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.rotate_left(29) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Local {
    c: usize,
    last_time: f64,
    count: u64,
    value: u64,
    next: Option<(f64, RandomStream)>,
    events: Trajectory<WorkloadEvent>,
    passes: usize,
    received: usize,
}

impl Workload {
    fn arrival(&self, c: usize, last_time: f64, count: u64, end: f64) -> Option<(f64, RandomStream)> {
        let mut stream = RandomStream::keyed(self.seed, c as u64, count + 1);
        let t = last_time + stream.exp(self.rate).expect("positive workload rate");
        (t < end).then_some((t, stream))
    }
}

impl RelaxModel for Workload {
    type State = WorkloadState;
    type Event = WorkloadEvent;

    fn num_components(&self) -> usize {
        self.n
    }

    fn initial_state(&self) -> WorkloadState {
        WorkloadState {
            last_time: vec![0.0; self.n],
            count: vec![0; self.n],
            value: (0..self.n as u64).collect(),
            holding: (0..self.n).map(|c| c == 0 && self.kind == WorkloadKind::TokenRing).collect(),
        }
    }

    fn simulate(
        &self,
        state: &WorkloadState,
        strip: Strip,
        part: &[usize],
        ext: &ExternalView<'_, WorkloadEvent>,
    ) -> Vec<Trajectory<WorkloadEvent>> {
        let mut slot = vec![usize::MAX; self.n];
        let mut locals: Vec<Local> = part
            .iter()
            .enumerate()
            .map(|(pos, &c)| {
                slot[c] = pos;
                Local {
                    c,
                    last_time: state.last_time[c],
                    count: state.count[c],
                    value: state.value[c],
                    next: self.arrival(c, state.last_time[c], state.count[c], strip.end),
                    events: Vec::new(),
                    passes: 0,
                    received: 0,
                }
            })
            .collect();
        loop {
            let mut best: Option<(f64, usize)> = None;
            for (pos, l) in locals.iter().enumerate() {
                if let Some((t, _)) = &l.next {
                    if best.is_none_or(|(bt, bp)| super::precedes(*t, l.c, bt, locals[bp].c)) {
                        best = Some((*t, pos));
                    }
                }
            }
            let Some((t, pos)) = best else {
                break;
            };
            let c = locals[pos].c;
            let (_, mut stream) = locals[pos].next.take().expect("selected arrival");
            let draw = stream.next_u64();
            let event = match self.kind {
                WorkloadKind::Decoupled => WorkloadEvent {
                    value: mix(locals[pos].value, draw),
                    read: None,
                },
                WorkloadKind::Sprinkled => {
                    let j = if draw & 1 == 0 {
                        self.pred(c)
                    } else {
                        (c + 1) % self.n
                    };
                    let (jval, cnt) = if slot[j] != usize::MAX {
                        let lj = &locals[slot[j]];
                        (lj.value, lj.events.len())
                    } else {
                        let prefix = ext.before(j, t, c);
                        (prefix.last().map_or(state.value[j], |e| e.1.value), prefix.len())
                    };
                    WorkloadEvent {
                        value: mix(mix(locals[pos].value, jval), draw),
                        read: Some((j, cnt)),
                    }
                }
                WorkloadKind::TokenRing => {
                    let start = usize::from(state.holding[c]);
                    let mut read = None;
                    let holding = |l: &Local| start + l.received > l.passes;
                    if !holding(&locals[pos]) {
                        let p = self.pred(c);
                        let (received, cnt) = if slot[p] != usize::MAX {
                            let lp = &locals[slot[p]];
                            (lp.passes, lp.events.len())
                        } else {
                            let prefix = ext.before(p, t, c);
                            (prefix.iter().filter(|e| e.1.value == 1).count(), prefix.len())
                        };
                        locals[pos].received = received;
                        read = Some((p, cnt));
                    }
                    let pass = holding(&locals[pos]);
                    if pass {
                        locals[pos].passes += 1;
                    }
                    WorkloadEvent {
                        value: u64::from(pass),
                        read,
                    }
                }
            };
            let l = &mut locals[pos];
            l.value = if self.kind == WorkloadKind::TokenRing {
                l.value.wrapping_add(event.value)
            } else {
                event.value
            };
            l.events.push((t, event));
            l.last_time = t;
            l.count += 1;
            l.next = self.arrival(c, t, l.count, strip.end);
        }
        locals.into_iter().map(|l| l.events).collect()
    }

    fn commit(&self, state: &mut WorkloadState, _strip: Strip, trajectories: &[Trajectory<WorkloadEvent>]) {
        let passes: Vec<usize> = trajectories
            .iter()
            .map(|t| t.iter().filter(|e| e.1.value == 1).count())
            .collect();
        for (c, traj) in trajectories.iter().enumerate() {
            if let Some(&(t, e)) = traj.last() {
                state.last_time[c] = t;
                state.count[c] += traj.len() as u64;
                state.value[c] = if self.kind == WorkloadKind::TokenRing {
                    state.value[c].wrapping_add(passes[c] as u64)
                } else {
                    e.value
                };
            }
        }
        if self.kind == WorkloadKind::TokenRing {
            let before = state.holding.clone();
            for c in 0..self.n {
                let held = usize::from(before[c]) + passes[self.pred(c)];
                state.holding[c] = held > passes[c];
            }
        }
    }
}

/// Dependency graph of one strip: every event depends on its own predecessor
/// and on the external event it read.
pub fn strip_graph(trajectories: &[&[(f64, WorkloadEvent)]]) -> EventGraph {
    let mut graph = EventGraph::new();
    let mut base = Vec::with_capacity(trajectories.len());
    let mut total = 0;
    for t in trajectories {
        base.push(total);
        total += t.len();
    }
    for (c, traj) in trajectories.iter().enumerate() {
        for (k, (t, e)) in traj.iter().enumerate() {
            let mut causes = Vec::new();
            if k > 0 {
                causes.push(base[c] + k - 1);
            }
            if let Some((j, cnt)) = e.read {
                if cnt > 0 {
                    causes.push(base[j] + cnt - 1);
                }
            }
            graph.add(*t, causes);
        }
    }
    graph
}

/// Per-strip slices of a relaxation run's committed trajectories.
pub fn strip_slices<E>(run: &RelaxRun<E>, k: usize) -> Vec<&[(f64, E)]> {
    let strip = run.strips[k];
    run.trajectories
        .iter()
        .map(|t| {
            let lo = t.partition_point(|e| e.0 < strip.start);
            let hi = t.partition_point(|e| e.0 < strip.end);
            &t[lo..hi]
        })
        .collect()
}

/// Level count of every committed strip of a workload run.
pub fn levels_per_strip(run: &RelaxRun<WorkloadEvent>) -> crate::error::Result<Vec<usize>> {
    (0..run.strips.len())
        .map(|k| super::levels::count_levels(&strip_graph(&strip_slices(run, k)), run.strips[k]))
        .collect()
}
