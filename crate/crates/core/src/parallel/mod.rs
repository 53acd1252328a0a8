//! Parallel execution engines over generic component models.
//!
//! [`cautious`] implements conservative cautious advancement with one worker
//! thread per component partition, [`lockstep`] its deterministic single
//! threaded cycle emulation, and [`syncrelax`] speculative synchronous
//! relaxation over committed time strips. [`levels`] counts dependency levels
//! of committed strips and [`workloads`] holds synthetic relaxation models.

pub mod cautious;
pub mod levels;
pub mod lockstep;
pub mod syncrelax;
pub mod workloads;

use std::ops::Range;

pub use cautious::{cautious_run, CautiousEvent, CautiousModel, NeighborView};
pub use levels::{count_levels, EventGraph};
pub use lockstep::{lockstep_emulate, LockstepRun};
pub use syncrelax::{
    default_iteration_cap, syncrelax_run, ExternalView, RelaxModel, RelaxRun, Strip, Trajectory,
};

/// Splits `0..n` into `workers` contiguous blocks of near-equal size.
pub fn partition(n: usize, workers: usize) -> Vec<Range<usize>> {
    let workers = workers.clamp(1, n.max(1));
    let base = n / workers;
    let extra = n % workers;
    let mut start = 0;
    (0..workers)
        .map(|w| {
            let len = base + usize::from(w < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Global event order: time first, then component index.
pub(crate) fn precedes(t_a: f64, a: usize, t_b: f64, b: usize) -> bool {
    t_a < t_b || (t_a == t_b && a < b)
}

/// Symmetric closure of a neighbor relation: `i` waits on `j` whenever either
/// reads the other.
pub(crate) fn wait_sets(n: usize, neighbors: impl Fn(usize) -> Vec<usize>) -> Vec<Vec<usize>> {
    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in neighbors(i) {
            if j != i {
                sets[i].push(j);
                sets[j].push(i);
            }
        }
    }
    for s in &mut sets {
        s.sort_unstable();
        s.dedup();
    }
    sets
}
