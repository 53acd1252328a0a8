//! Dependency levels of a committed strip.
//!
//! An event's level is one more than the highest level among its immediate
//! causes inside the strip; causes outside the strip count as level 0. The
//! number of nonempty levels bounds the iterations synchronous relaxation
//! needs for the strip.

use super::syncrelax::Strip;
use crate::error::{Result, SimError};

/// Event dependency graph recorded during a sequential run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventGraph {
    times: Vec<f64>,
    causes: Vec<Vec<usize>>,
}

impl EventGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an event and returns its node id.
    pub fn add(&mut self, time: f64, causes: Vec<usize>) -> usize {
        self.times.push(time);
        self.causes.push(causes);
        self.times.len() - 1
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn time(&self, node: usize) -> f64 {
        self.times[node]
    }

    pub fn causes(&self, node: usize) -> &[usize] {
        &self.causes[node]
    }
}

/// Number of nonempty dependency levels among the events inside `strip`.
pub fn count_levels(graph: &EventGraph, strip: Strip) -> Result<usize> {
    let n = graph.len();
    let mut level: Vec<Option<usize>> = vec![None; n];
    let mut on_stack = vec![false; n];
    let mut deepest = 0;
    for root in 0..n {
        if level[root].is_some() || !strip.contains(graph.times[root]) {
            continue;
        }
        // Iterative depth-first evaluation; (node, next cause position).
        let mut stack = vec![(root, 0usize)];
        on_stack[root] = true;
        while let Some(&mut (node, ref mut pos)) = stack.last_mut() {
            let causes = &graph.causes[node];
            if *pos < causes.len() {
                let c = causes[*pos];
                *pos += 1;
                if c >= n {
                    return Err(SimError::IndexOutOfRange { index: c, len: n });
                }
                if !strip.contains(graph.times[c]) || level[c].is_some() {
                    continue;
                }
                if on_stack[c] {
                    return Err(SimError::CyclicDependency);
                }
                on_stack[c] = true;
                stack.push((c, 0));
            } else {
                let l = 1 + causes
                    .iter()
                    .filter(|&&c| strip.contains(graph.times[c]))
                    .map(|&c| level[c].expect("cause evaluated first"))
                    .max()
                    .unwrap_or(0);
                level[node] = Some(l);
                deepest = deepest.max(l);
                on_stack[node] = false;
                stack.pop();
            }
        }
    }
    Ok(deepest)
}
