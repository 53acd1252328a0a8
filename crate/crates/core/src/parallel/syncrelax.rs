//! Synchronous relaxation.
//!
//! Simulated time is cut into strips `[T_c, T_c + dt)`. Within a strip every
//! partition regenerates its trajectories against the other partitions'
//! trajectories from the previous iteration, starting from empty ones, until
//! nothing read in the last iteration changed. The strip is then committed.

use std::cell::RefCell;
use std::fmt::Debug;

use super::partition;
use crate::error::{Result, SimError};

/// Events of one component inside a strip, in time order.
pub type Trajectory<E> = Vec<(f64, E)>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Strip {
    pub start: f64,
    pub end: f64,
}

impl Strip {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// A model whose partitions can be simulated independently against assumed
/// trajectories of the remaining components.
pub trait RelaxModel: Sync {
    /// Committed state of the whole model at the start of a strip.
    type State: Clone + Send + Sync;
    type Event: Clone + Debug + PartialEq + Send + Sync;

    fn num_components(&self) -> usize;
    fn initial_state(&self) -> Self::State;
    /// Trajectories of the components in `part` (in that order) over `strip`.
    /// Events of components outside `part` must be obtained through `ext`.
    fn simulate(
        &self,
        state: &Self::State,
        strip: Strip,
        part: &[usize],
        ext: &ExternalView<'_, Self::Event>,
    ) -> Vec<Trajectory<Self::Event>>;
    /// Folds the converged trajectories of all components into `state`.
    fn commit(&self, state: &mut Self::State, strip: Strip, trajectories: &[Trajectory<Self::Event>]);
}

/// Read key: events `(t_e, j)` ordered strictly before `(time, reader)`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct ReadKey {
    time: f64,
    reader: usize,
}

fn before_key(t_e: f64, j: usize, key: ReadKey) -> bool {
    super::precedes(t_e, j, key.time, key.reader)
}

fn prefix_len<E>(traj: &[(f64, E)], j: usize, key: ReadKey) -> usize {
    traj.partition_point(|(t, _)| before_key(*t, j, key))
}

/// Previous-iteration trajectories of components outside a partition. Every
/// read is logged so convergence can be decided on what was actually used.
pub struct ExternalView<'a, E> {
    trajectories: &'a [Trajectory<E>],
    inside: Vec<bool>,
    reads: RefCell<Vec<Option<ReadKey>>>,
}

impl<'a, E> ExternalView<'a, E> {
    pub fn new(trajectories: &'a [Trajectory<E>], part: &[usize]) -> Self {
        let mut inside = vec![false; trajectories.len()];
        for &i in part {
            inside[i] = true;
        }
        Self {
            trajectories,
            inside,
            reads: RefCell::new(vec![None; trajectories.len()]),
        }
    }

    /// Events of external component `j` ordered before `(time, reader)` in
    /// the global `(time, component)` order.
    ///
    /// # Panics
    /// Reading a component of the own partition is a contract violation.
    pub fn before(&self, j: usize, time: f64, reader: usize) -> &'a [(f64, E)] {
        assert!(
            !self.inside[j],
            "contract violation: component {j} belongs to the reading partition"
        );
        let key = ReadKey { time, reader };
        let mut reads = self.reads.borrow_mut();
        let slot = &mut reads[j];
        if slot.is_none_or(|k| super::precedes(k.time, k.reader, time, reader)) {
            *slot = Some(key);
        }
        let traj = &self.trajectories[j];
        &traj[..prefix_len(traj, j, key)]
    }

    fn into_reads(self) -> Vec<Option<ReadKey>> {
        self.reads.into_inner()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelaxRun<E> {
    /// Committed trajectory of every component over the whole run.
    pub trajectories: Vec<Trajectory<E>>,
    /// Iterations needed by every strip.
    pub iterations: Vec<usize>,
    pub strips: Vec<Strip>,
}

/// `10 * ceil(log2 N) + 16`.
pub fn default_iteration_cap(n: usize) -> usize {
    let log = if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    };
    10 * log + 16
}

/// Runs synchronous relaxation with `workers` partitions. `cap` bounds the
/// iterations of any single strip.
pub fn syncrelax_run<M: RelaxModel>(
    model: &M,
    horizon: f64,
    step: f64,
    workers: usize,
    cap: Option<usize>,
) -> Result<RelaxRun<M::Event>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(SimError::InvalidParameter(format!(
            "relaxation step must be positive, got {step}"
        )));
    }
    let n = model.num_components();
    let cap = cap.unwrap_or_else(|| default_iteration_cap(n));
    let parts: Vec<Vec<usize>> = partition(n, workers).into_iter().map(|r| r.collect()).collect();
    let mut state = model.initial_state();
    let mut run = RelaxRun {
        trajectories: vec![Vec::new(); n],
        iterations: Vec::new(),
        strips: Vec::new(),
    };
    let mut k = 0u64;
    loop {
        let start = k as f64 * step;
        if start >= horizon {
            break;
        }
        let strip = Strip {
            start,
            end: ((k + 1) as f64 * step).min(horizon),
        };
        let (trajs, iters) = relax_strip(model, &state, strip, &parts, cap)?;
        model.commit(&mut state, strip, &trajs);
        for (all, t) in run.trajectories.iter_mut().zip(trajs) {
            all.extend(t);
        }
        run.iterations.push(iters);
        run.strips.push(strip);
        k += 1;
    }
    Ok(run)
}

type PartitionResult<E> = (Vec<Trajectory<E>>, Vec<Option<ReadKey>>);

fn relax_strip<M: RelaxModel>(
    model: &M,
    state: &M::State,
    strip: Strip,
    parts: &[Vec<usize>],
    cap: usize,
) -> Result<(Vec<Trajectory<M::Event>>, usize)> {
    let n = model.num_components();
    let mut prev: Vec<Trajectory<M::Event>> = vec![Vec::new(); n];
    let mut iteration = 0;
    loop {
        iteration += 1;
        if iteration > cap {
            return Err(SimError::IterationCapExceeded {
                cap,
                step_start: strip.start,
            });
        }
        let results: Vec<PartitionResult<M::Event>> = if parts.len() == 1 {
            vec![simulate_part(model, state, strip, &parts[0], &prev)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = parts
                    .iter()
                    .map(|part| {
                        let prev = &prev;
                        scope.spawn(move || simulate_part(model, state, strip, part, prev))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
                    .collect()
            })
        };
        let mut next = prev.clone();
        let mut all_reads = Vec::with_capacity(parts.len());
        for (part, (trajs, reads)) in parts.iter().zip(results) {
            for (&i, t) in part.iter().zip(trajs) {
                next[i] = t;
            }
            all_reads.push(reads);
        }
        let converged = all_reads.iter().all(|reads| {
            reads.iter().enumerate().all(|(j, key)| match key {
                None => true,
                Some(key) => {
                    let a = &prev[j][..prefix_len(&prev[j], j, *key)];
                    let b = &next[j][..prefix_len(&next[j], j, *key)];
                    a == b
                }
            })
        });
        prev = next;
        if converged {
            return Ok((prev, iteration));
        }
    }
}

fn simulate_part<M: RelaxModel>(
    model: &M,
    state: &M::State,
    strip: Strip,
    part: &[usize],
    prev: &[Trajectory<M::Event>],
) -> PartitionResult<M::Event> {
    let view = ExternalView::new(prev, part);
    let trajs = model.simulate(state, strip, part, &view);
    assert_eq!(trajs.len(), part.len(), "one trajectory per partition member");
    (trajs, view.into_reads())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_formula() {
        assert_eq!(default_iteration_cap(1), 16);
        assert_eq!(default_iteration_cap(2), 26);
        assert_eq!(default_iteration_cap(10), 56);
        assert_eq!(default_iteration_cap(16), 56);
        assert_eq!(default_iteration_cap(17), 66);
    }

    #[test]
    fn reads_are_strictly_before_in_global_order() {
        let trajs: Vec<Trajectory<u8>> = vec![vec![(1.0, 0), (2.0, 1), (3.0, 2)], vec![]];
        let view = ExternalView::new(&trajs, &[1]);
        assert_eq!(view.before(0, 2.0, 1).len(), 2);
        assert_eq!(view.before(0, 2.5, 1).len(), 2);
        let trajs2: Vec<Trajectory<u8>> = vec![vec![], vec![(2.0, 0)]];
        let view2 = ExternalView::new(&trajs2, &[0]);
        // Component 1 at t=2 is ordered after component 0 at t=2.
        assert!(view2.before(1, 2.0, 0).is_empty());
    }

    #[test]
    #[should_panic(expected = "contract violation")]
    fn own_partition_reads_rejected() {
        let trajs: Vec<Trajectory<u8>> = vec![vec![], vec![]];
        let view = ExternalView::new(&trajs, &[0, 1]);
        view.before(1, 1.0, 0);
    }

    #[test]
    fn rejects_bad_step() {
        let model = super::super::workloads::Decoupled::new(4, 1.0, 1);
        assert!(syncrelax_run(&model, 1.0, 0.0, 2, None).is_err());
    }
}
