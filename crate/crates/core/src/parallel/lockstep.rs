//! Deterministic lockstep emulation of cautious advancement.
//!
//! In every cycle each component whose next arrival precedes all of its
//! neighbors' next arrivals applies its update; the others wait. The fraction
//! of components advancing in a cycle is the non-waiting fraction.

use super::cautious::{check_model, merge_sorted, CautiousEvent, CautiousModel, Clock, NeighborView};
use super::{precedes, wait_sets};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct LockstepRun<R> {
    /// Committed events in `(time, component)` order.
    pub events: Vec<CautiousEvent<R>>,
    /// Cycle (1-based) in which each event of `events` was applied.
    pub cycles: Vec<u64>,
    /// Non-waiting fraction of every cycle.
    pub non_waiting: Vec<f64>,
}

impl<R> LockstepRun<R> {
    pub fn mean_non_waiting(&self) -> f64 {
        if self.non_waiting.is_empty() {
            return 0.0;
        }
        self.non_waiting.iter().sum::<f64>() / self.non_waiting.len() as f64
    }
}

pub fn lockstep_emulate<M: CautiousModel>(model: &M, horizon: f64) -> Result<LockstepRun<M::Record>> {
    lockstep_emulate_cycles(model, horizon, None)
}

/// As [`lockstep_emulate`], optionally stopping after `max_cycles` cycles.
pub fn lockstep_emulate_cycles<M: CautiousModel>(
    model: &M,
    horizon: f64,
    max_cycles: Option<u64>,
) -> Result<LockstepRun<M::Record>> {
    check_model(model)?;
    let n = model.num_components();
    let waits = wait_sets(n, |i| model.neighbors(i));
    let reads: Vec<Vec<usize>> = (0..n).map(|i| model.neighbors(i)).collect();
    let mut states: Vec<M::State> = (0..n).map(|i| model.initial_state(i)).collect();
    let mut clocks: Vec<Option<Clock>> = (0..n)
        .map(|i| Clock::first(model, i, horizon))
        .collect::<Result<_>>()?;
    let mut tagged = Vec::new();
    let mut non_waiting = Vec::new();
    let mut cycle = 0u64;
    loop {
        if max_cycles.is_some_and(|m| cycle >= m) {
            break;
        }
        let time_of = |c: &Option<Clock>| c.as_ref().map_or(f64::INFINITY, |c| c.time);
        let ready: Vec<usize> = (0..n)
            .filter(|&i| {
                clocks[i].is_some()
                    && waits[i]
                        .iter()
                        .all(|&j| precedes(time_of(&clocks[i]), i, time_of(&clocks[j]), j))
            })
            .collect();
        if ready.is_empty() {
            break;
        }
        cycle += 1;
        non_waiting.push(ready.len() as f64 / n as f64);
        for &i in &ready {
            let mut clock = clocks[i].take().expect("ready component has a clock");
            let mut own = std::mem::replace(&mut states[i], model.initial_state(i));
            let record = {
                let view = NeighborView::new(
                    i,
                    reads[i]
                        .iter()
                        .filter(|&&j| j != i)
                        .map(|&j| (j, &states[j]))
                        .collect(),
                );
                model.update(i, clock.time, &mut own, &view, &mut clock.stream)
            };
            states[i] = own;
            tagged.push((
                CautiousEvent {
                    time: clock.time,
                    component: i,
                    index: clock.index,
                    record,
                },
                cycle,
            ));
            clocks[i] = Clock::after(model, i, clock.time, clock.index, horizon)?;
        }
    }
    tagged.sort_by(|(a, _), (b, _)| a.time.total_cmp(&b.time).then(a.component.cmp(&b.component)));
    let cycles = tagged.iter().map(|(_, c)| *c).collect();
    let events = merge_sorted(tagged.into_iter().map(|(e, _)| e).collect());
    Ok(LockstepRun {
        events,
        cycles,
        non_waiting,
    })
}

#[cfg(test)]
mod tests {
    use super::super::cautious::tests::MixRing;
    use super::super::cautious::cautious_run;
    use super::*;
    use crate::rng::RandomStream;

    #[test]
    fn matches_threaded_engine() {
        let model = MixRing {
            n: 10,
            coupled: true,
            seed: 21,
        };
        let emulated = lockstep_emulate(&model, 40.0).unwrap();
        for workers in [1, 2, 4] {
            assert_eq!(cautious_run(&model, 40.0, workers).unwrap(), emulated.events);
        }
    }

    #[test]
    fn decoupled_components_never_wait() {
        let model = MixRing {
            n: 6,
            coupled: false,
            seed: 2,
        };
        let run = lockstep_emulate(&model, 5.0).unwrap();
        // Without neighbors every component with a pending arrival advances.
        let first = run.non_waiting[0];
        assert_eq!(first, 1.0);
    }

    /// Ring of three with fixed first arrivals at 1, 2, 3.
    struct Fixed;

    impl CautiousModel for Fixed {
        type State = ();
        type Record = ();
        fn num_components(&self) -> usize {
            3
        }
        fn neighbors(&self, i: usize) -> Vec<usize> {
            vec![(i + 2) % 3, (i + 1) % 3]
        }
        fn rate(&self, _i: usize) -> f64 {
            1.0
        }
        fn seed(&self) -> u64 {
            0
        }
        fn initial_state(&self, _i: usize) {}
        fn update(&self, _i: usize, _t: f64, _o: &mut (), _v: &NeighborView<'_, ()>, _s: &mut RandomStream) {}
    }

    #[test]
    fn global_minimum_advances_first_cycle() {
        let run = lockstep_emulate(&Fixed, 3.0).unwrap();
        assert_eq!(run.cycles[0], 1);
        assert!(run.non_waiting.iter().all(|&f| f > 0.0));
        // In a fully connected triple exactly one component advances per cycle.
        assert!(run.non_waiting.iter().all(|&f| (f - 1.0 / 3.0).abs() < 1e-12));
    }
}
