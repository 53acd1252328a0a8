//! Cautious advancement.
//!
//! Every component carries its own Poisson clock. A component may apply the
//! update for its next arrival at `t_i` only once every neighbor `j` has a
//! published next arrival ordered after it, i.e. `(t_j, j) > (t_i, i)`. The
//! component holding the globally smallest arrival is therefore never blocked.

use std::fmt::Debug;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use super::{partition, precedes, wait_sets};
use crate::error::{Result, SimError};
use crate::rng::RandomStream;

/// A component model driven by independent per-component Poisson clocks.
pub trait CautiousModel: Sync {
    type State: Send + Sync;
    type Record: Clone + Debug + PartialEq + Send;

    fn num_components(&self) -> usize;
    /// Components whose state an update of `i` may read.
    fn neighbors(&self, i: usize) -> Vec<usize>;
    /// Poisson rate of component `i`.
    fn rate(&self, i: usize) -> f64;
    fn seed(&self) -> u64;
    fn initial_state(&self, i: usize) -> Self::State;
    /// Applies the arrival of component `i` at `time`. `stream` is keyed by
    /// `(seed, i, event index)` and has already produced the interarrival draw.
    fn update(
        &self,
        i: usize,
        time: f64,
        own: &mut Self::State,
        view: &NeighborView<'_, Self::State>,
        stream: &mut RandomStream,
    ) -> Self::Record;
}

/// Read-only access to the declared neighbors of the updating component.
pub struct NeighborView<'a, S> {
    owner: usize,
    entries: Vec<(usize, &'a S)>,
}

impl<'a, S> NeighborView<'a, S> {
    pub fn new(owner: usize, entries: Vec<(usize, &'a S)>) -> Self {
        Self { owner, entries }
    }

    /// State of neighbor `j`.
    ///
    /// # Panics
    /// Reading a component outside the declared neighbor set is a contract
    /// violation and halts the run.
    pub fn get(&self, j: usize) -> &'a S {
        self.entries
            .iter()
            .find(|(k, _)| *k == j)
            .map(|(_, s)| *s)
            .unwrap_or_else(|| {
                panic!(
                    "contract violation: component {} read undeclared component {j}",
                    self.owner
                )
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &'a S)> + '_ {
        self.entries.iter().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CautiousEvent<R> {
    pub time: f64,
    pub component: usize,
    /// 1-based index of the event within its component.
    pub index: u64,
    pub record: R,
}

/// Next arrival of one component together with the stream that drew it.
pub(crate) struct Clock {
    pub time: f64,
    pub index: u64,
    pub stream: RandomStream,
}

impl Clock {
    /// First arrival of component `i`, or `None` when it lies past `horizon`.
    pub fn first<M: CautiousModel + ?Sized>(model: &M, i: usize, horizon: f64) -> Result<Option<Self>> {
        Self::after(model, i, 0.0, 0, horizon)
    }

    pub fn after<M: CautiousModel + ?Sized>(
        model: &M,
        i: usize,
        time: f64,
        index: u64,
        horizon: f64,
    ) -> Result<Option<Self>> {
        let rate = model.rate(i);
        if rate == 0.0 {
            return Ok(None);
        }
        let mut stream = RandomStream::keyed(model.seed(), i as u64, index + 1);
        let next = time + stream.exp(rate)?;
        Ok((next <= horizon).then_some(Clock {
            time: next,
            index: index + 1,
            stream,
        }))
    }
}

pub(crate) fn merge_sorted<R>(mut events: Vec<CautiousEvent<R>>) -> Vec<CautiousEvent<R>> {
    events.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.component.cmp(&b.component))
    });
    events
}

pub(crate) fn check_model<M: CautiousModel + ?Sized>(model: &M) -> Result<()> {
    for i in 0..model.num_components() {
        let r = model.rate(i);
        if !(r >= 0.0 && r.is_finite()) {
            return Err(SimError::NegativeRate(r));
        }
        for j in model.neighbors(i) {
            if j >= model.num_components() {
                return Err(SimError::IndexOutOfRange {
                    index: j,
                    len: model.num_components(),
                });
            }
        }
    }
    Ok(())
}

/// Runs the model to `horizon` with `workers` threads, each owning a
/// contiguous block of components. Returns the committed events in
/// `(time, component)` order, which does not depend on `workers`.
pub fn cautious_run<M: CautiousModel>(
    model: &M,
    horizon: f64,
    workers: usize,
) -> Result<Vec<CautiousEvent<M::Record>>> {
    check_model(model)?;
    let n = model.num_components();
    let waits = wait_sets(n, |i| model.neighbors(i));
    let reads: Vec<Vec<usize>> = (0..n).map(|i| model.neighbors(i)).collect();
    let states: Vec<RwLock<M::State>> = (0..n).map(|i| RwLock::new(model.initial_state(i))).collect();
    let published: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(f64::INFINITY.to_bits())).collect();
    let mut clocks: Vec<Option<Clock>> = Vec::with_capacity(n);
    for (i, slot) in published.iter().enumerate() {
        let c = Clock::first(model, i, horizon)?;
        if let Some(c) = &c {
            slot.store(c.time.to_bits(), Ordering::Release);
        }
        clocks.push(c);
    }
    let parts = partition(n, workers);
    let mut owned: Vec<Vec<(usize, Option<Clock>)>> = Vec::with_capacity(parts.len());
    let mut iter = clocks.into_iter().enumerate();
    for p in &parts {
        owned.push(iter.by_ref().take(p.len()).collect());
    }

    let results: Vec<Result<Vec<CautiousEvent<M::Record>>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = owned
            .into_iter()
            .map(|mut mine| {
                let (waits, reads, states, published) = (&waits, &reads, &states, &published);
                scope.spawn(move || -> Result<Vec<CautiousEvent<M::Record>>> {
                    let mut out = Vec::new();
                    while let Some(pos) = partition_minimum(&mine) {
                        let i = mine[pos].0;
                        let t = mine[pos].1.as_ref().map(|c| c.time).unwrap_or(f64::INFINITY);
                        for &j in &waits[i] {
                            loop {
                                let tj = f64::from_bits(published[j].load(Ordering::Acquire));
                                if precedes(t, i, tj, j) {
                                    break;
                                }
                                std::thread::yield_now();
                            }
                        }
                        let mut clock = mine[pos].1.take().expect("partition minimum has a clock");
                        let record = {
                            let guards: Vec<_> = reads[i]
                                .iter()
                                .filter(|&&j| j != i)
                                .map(|&j| (j, states[j].read().expect("state lock poisoned")))
                                .collect();
                            let view = NeighborView::new(i, guards.iter().map(|(j, g)| (*j, &**g)).collect());
                            let mut own = states[i].write().expect("state lock poisoned");
                            model.update(i, t, &mut own, &view, &mut clock.stream)
                        };
                        out.push(CautiousEvent {
                            time: t,
                            component: i,
                            index: clock.index,
                            record,
                        });
                        let next = Clock::after(model, i, t, clock.index, horizon)?;
                        let bits = next.as_ref().map_or(f64::INFINITY, |c| c.time).to_bits();
                        mine[pos].1 = next;
                        published[i].store(bits, Ordering::Release);
                    }
                    Ok(out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
            .collect()
    });
    let mut events = Vec::new();
    for r in results {
        events.extend(r?);
    }
    Ok(merge_sorted(events))
}

fn partition_minimum(mine: &[(usize, Option<Clock>)]) -> Option<usize> {
    let mut best: Option<(f64, usize, usize)> = None;
    for (pos, (i, c)) in mine.iter().enumerate() {
        if let Some(c) = c {
            if best.is_none_or(|(bt, bi, _)| precedes(c.time, *i, bt, bi)) {
                best = Some((c.time, *i, pos));
            }
        }
    }
    best.map(|b| b.2)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Ring of counters; each update adds a draw to the mix of both neighbors.
    pub struct MixRing {
        pub n: usize,
        pub coupled: bool,
        pub seed: u64,
    }

    impl CautiousModel for MixRing {
        type State = u64;
        type Record = u64;

        fn num_components(&self) -> usize {
            self.n
        }

        fn neighbors(&self, i: usize) -> Vec<usize> {
            if self.coupled && self.n > 1 {
                vec![(i + self.n - 1) % self.n, (i + 1) % self.n]
            } else {
                Vec::new()
            }
        }

        fn rate(&self, i: usize) -> f64 {
            1.0 + (i % 3) as f64
        }

        fn seed(&self) -> u64 {
            self.seed
        }

        fn initial_state(&self, i: usize) -> u64 {
            i as u64
        }

        fn update(
            &self,
            _i: usize,
            _time: f64,
            own: &mut u64,
            view: &NeighborView<'_, u64>,
            stream: &mut RandomStream,
        ) -> u64 {
            let mut acc = own.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            for (_, s) in view.iter() {
                acc = acc.rotate_left(17) ^ s;
            }
            *own = acc ^ stream.next_u64();
            *own
        }
    }

    #[test]
    fn single_component_is_plain_poisson_stream() {
        let model = MixRing {
            n: 1,
            coupled: true,
            seed: 4,
        };
        let events = cautious_run(&model, 1000.0, 1).unwrap();
        let mean_gap = events.last().unwrap().time / events.len() as f64;
        assert!((mean_gap - 1.0).abs() < 0.1, "{mean_gap}");
        assert!(events.windows(2).all(|w| w[0].time < w[1].time));
    }

    #[test]
    fn worker_count_does_not_change_trajectory() {
        for coupled in [false, true] {
            let model = MixRing {
                n: 12,
                coupled,
                seed: 9,
            };
            let reference = cautious_run(&model, 50.0, 1).unwrap();
            for workers in [2, 3, 4, 8] {
                assert_eq!(cautious_run(&model, 50.0, workers).unwrap(), reference);
            }
        }
    }

    struct Cheater;

    impl CautiousModel for Cheater {
        type State = ();
        type Record = ();
        fn num_components(&self) -> usize {
            3
        }
        fn neighbors(&self, _i: usize) -> Vec<usize> {
            Vec::new()
        }
        fn rate(&self, _i: usize) -> f64 {
            1.0
        }
        fn seed(&self) -> u64 {
            0
        }
        fn initial_state(&self, _i: usize) {}
        fn update(&self, i: usize, _t: f64, _own: &mut (), view: &NeighborView<'_, ()>, _s: &mut RandomStream) {
            view.get((i + 1) % 3);
        }
    }

    #[test]
    #[should_panic(expected = "contract violation")]
    fn undeclared_read_halts() {
        let _ = cautious_run(&Cheater, 10.0, 1);
    }
}
