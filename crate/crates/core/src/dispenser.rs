//! Poisson dispenser: delegation of aggregate arrivals to component processes.
//!
//! Three interchangeable delegation structures are provided:
//! [`linear_scan_select`] (the O(N) prefix-sum scan), [`RateTree`] (binary sum
//! tree, O(log N)), and [`RateClassTable`] (constant-time selection when the
//! component rates take only a few distinct values). [`UniformizedSampler`]
//! turns heterogeneous rates into uniform random sequential update.

use std::cell::Cell;

use crate::error::{Result, SimError};
use crate::rng::RandomStream;

/// Number of updates between full rebuilds of the sum tree.
pub const REBUILD_INTERVAL: u64 = 1 << 20;

/// Common interface of the rate structures the dispenser loop delegates to.
pub trait Delegator {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn rate(&self, i: usize) -> f64;
    fn set_rate(&mut self, i: usize, rate: f64) -> Result<()>;
    /// Aggregate rate R.
    fn total(&self) -> f64;
    /// Component receiving the arrival for uniform draw `q` in (0, 1).
    fn select(&self, q: f64) -> Result<usize>;
}

fn check_rate(rate: f64) -> Result<()> {
    if rate >= 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(SimError::NegativeRate(rate))
    }
}

/// Selects `i` with `V_{i-1} <= R q < V_i` over the prefix sums of `rates`.
pub fn linear_scan_select(rates: &[f64], q: f64) -> Result<usize> {
    let total: f64 = rates.iter().sum();
    if !(total > 0.0) {
        return Err(SimError::NoActiveComponents);
    }
    let target = total * q;
    let mut prefix = 0.0;
    let mut last_positive = 0;
    for (i, &r) in rates.iter().enumerate() {
        prefix += r;
        if r > 0.0 {
            last_positive = i;
            if target < prefix {
                return Ok(i);
            }
        }
    }
    // Rq can only reach V_N through rounding.
    Ok(last_positive)
}

/// Plain rate vector delegating by linear scan; the reference delegator.
#[derive(Clone, Debug, Default)]
pub struct LinearRates {
    rates: Vec<f64>,
}

impl LinearRates {
    pub fn new(n: usize) -> Self {
        Self {
            rates: vec![0.0; n],
        }
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

impl Delegator for LinearRates {
    fn len(&self) -> usize {
        self.rates.len()
    }

    fn rate(&self, i: usize) -> f64 {
        self.rates[i]
    }

    fn set_rate(&mut self, i: usize, rate: f64) -> Result<()> {
        check_rate(rate)?;
        let len = self.rates.len();
        *self
            .rates
            .get_mut(i)
            .ok_or(SimError::IndexOutOfRange { index: i, len })? = rate;
        Ok(())
    }

    fn total(&self) -> f64 {
        self.rates.iter().sum()
    }

    fn select(&self, q: f64) -> Result<usize> {
        linear_scan_select(&self.rates, q)
    }
}

/// Binary sum tree over component rates.
///
/// Nodes are stored heap-style: the root at index 1, the children of node `k`
/// at `2k` and `2k + 1`, leaves at `capacity..2 * capacity`. The leaf count is
/// padded to a power of two with zero-rate leaves.
#[derive(Clone, Debug)]
pub struct RateTree {
    len: usize,
    capacity: usize,
    nodes: Vec<f64>,
    updates_since_rebuild: u64,
    node_writes: u64,
    node_visits: Cell<u64>,
    selections: Cell<u64>,
}

impl RateTree {
    pub fn new(len: usize) -> Self {
        let capacity = len.max(1).next_power_of_two();
        Self {
            len,
            capacity,
            nodes: vec![0.0; 2 * capacity],
            updates_since_rebuild: 0,
            node_writes: 0,
            node_visits: Cell::new(0),
            selections: Cell::new(0),
        }
    }

    pub fn from_rates(rates: &[f64]) -> Result<Self> {
        let mut tree = Self::new(rates.len());
        for (i, &r) in rates.iter().enumerate() {
            check_rate(r)?;
            tree.nodes[tree.capacity + i] = r;
        }
        tree.rebuild();
        Ok(tree)
    }

    /// Number of descent steps per selection, `ceil(log2 N)`.
    pub fn depth(&self) -> usize {
        self.capacity.trailing_zeros() as usize
    }

    pub fn leaves(&self) -> &[f64] {
        &self.nodes[self.capacity..self.capacity + self.len]
    }

    /// Sets leaf `i` and refreshes its ancestors. Returns the number of node
    /// writes, always `depth() + 1`.
    pub fn update(&mut self, i: usize, rate: f64) -> Result<usize> {
        check_rate(rate)?;
        if i >= self.len {
            return Err(SimError::IndexOutOfRange {
                index: i,
                len: self.len,
            });
        }
        let mut node = self.capacity + i;
        self.nodes[node] = rate;
        let mut writes = 1;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
            writes += 1;
        }
        self.node_writes += writes as u64;
        self.updates_since_rebuild += 1;
        if self.updates_since_rebuild >= REBUILD_INTERVAL {
            self.rebuild();
        }
        Ok(writes)
    }

    /// Recomputes every internal node from the leaves.
    pub fn rebuild(&mut self) {
        for node in (1..self.capacity).rev() {
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
        self.updates_since_rebuild = 0;
    }

    /// Descends from the root with `theta = R q`, going left while
    /// `theta < left sum` and otherwise right with `theta -= left sum`.
    pub fn select_leaf(&self, q: f64) -> Result<usize> {
        let total = self.nodes[1];
        if !(total > 0.0) {
            return Err(SimError::NoActiveComponents);
        }
        let mut theta = total * q;
        let mut node = 1;
        while node < self.capacity {
            let left = self.nodes[2 * node];
            node = if theta < left {
                2 * node
            } else {
                theta -= left;
                2 * node + 1
            };
        }
        self.node_visits
            .set(self.node_visits.get() + self.depth() as u64);
        self.selections.set(self.selections.get() + 1);
        let mut leaf = node - self.capacity;
        // Rounding can carry theta past the last positive leaf.
        while leaf > 0 && (leaf >= self.len || self.nodes[self.capacity + leaf] <= 0.0) {
            leaf -= 1;
        }
        Ok(leaf)
    }

    /// Internal nodes visited by all selections so far.
    pub fn node_visits(&self) -> u64 {
        self.node_visits.get()
    }

    pub fn selections(&self) -> u64 {
        self.selections.get()
    }

    pub fn node_writes(&self) -> u64 {
        self.node_writes
    }

    pub fn reset_counters(&mut self) {
        self.node_visits.set(0);
        self.selections.set(0);
        self.node_writes = 0;
    }

    /// True when every internal node equals the sum of its children within
    /// `rel_tol` relative tolerance.
    pub fn is_consistent(&self, rel_tol: f64) -> bool {
        (1..self.capacity).all(|node| {
            let sum = self.nodes[2 * node] + self.nodes[2 * node + 1];
            let stored = self.nodes[node];
            (stored - sum).abs() <= rel_tol * sum.abs().max(stored.abs()).max(f64::MIN_POSITIVE)
        })
    }

    /// Corrupts the left child of the root. Used to check that the
    /// verification suites catch a broken tree.
    #[doc(hidden)]
    pub fn inject_fault(&mut self) {
        if self.capacity > 1 {
            self.nodes[2] = self.nodes[2] * 0.5 + 1.0;
        }
    }
}

impl Delegator for RateTree {
    fn len(&self) -> usize {
        self.len
    }

    fn rate(&self, i: usize) -> f64 {
        self.nodes[self.capacity + i]
    }

    fn set_rate(&mut self, i: usize, rate: f64) -> Result<()> {
        self.update(i, rate).map(|_| ())
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn select(&self, q: f64) -> Result<usize> {
        self.select_leaf(q)
    }
}

#[derive(Clone, Debug)]
struct RateClass {
    rate: f64,
    members: Vec<usize>,
}

/// Components grouped by a small fixed set of rate values.
#[derive(Clone, Debug)]
pub struct RateClassTable {
    classes: Vec<RateClass>,
    /// (class, position within the member list) per component.
    slot: Vec<(usize, usize)>,
    class_visits: Cell<u64>,
    selections: Cell<u64>,
}

impl RateClassTable {
    /// `assignment[i]` is the class of component `i`.
    pub fn new(class_rates: &[f64], assignment: &[usize]) -> Result<Self> {
        let mut classes = class_rates
            .iter()
            .map(|&rate| {
                check_rate(rate)?;
                Ok(RateClass {
                    rate,
                    members: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut slot = Vec::with_capacity(assignment.len());
        for (i, &c) in assignment.iter().enumerate() {
            let class = classes.get_mut(c).ok_or(SimError::UnknownClass(c))?;
            slot.push((c, class.members.len()));
            class.members.push(i);
        }
        Ok(Self {
            classes,
            slot,
            class_visits: Cell::new(0),
            selections: Cell::new(0),
        })
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_of(&self, i: usize) -> usize {
        self.slot[i].0
    }

    pub fn class_rate(&self, c: usize) -> f64 {
        self.classes[c].rate
    }

    pub fn members(&self, c: usize) -> &[usize] {
        &self.classes[c].members
    }

    pub fn total(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| c.rate * c.members.len() as f64)
            .sum()
    }

    /// Moves component `i` to `new_class` by swap-remove; O(1).
    pub fn class_move(&mut self, i: usize, new_class: usize) -> Result<()> {
        if new_class >= self.classes.len() {
            return Err(SimError::UnknownClass(new_class));
        }
        let len = self.slot.len();
        let (old, pos) = *self
            .slot
            .get(i)
            .ok_or(SimError::IndexOutOfRange { index: i, len })?;
        if old == new_class {
            return Ok(());
        }
        let members = &mut self.classes[old].members;
        members.swap_remove(pos);
        if let Some(&moved) = members.get(pos) {
            self.slot[moved].1 = pos;
        }
        let dest = &mut self.classes[new_class].members;
        self.slot[i] = (new_class, dest.len());
        dest.push(i);
        Ok(())
    }

    /// Picks a class proportionally to `rate * members` with `q1`, then a
    /// uniform member with `q2`.
    pub fn select(&self, q1: f64, q2: f64) -> Result<usize> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(SimError::NoActiveComponents);
        }
        let target = total * q1;
        let mut prefix = 0.0;
        let mut chosen = None;
        let mut visits = 0u64;
        for (c, class) in self.classes.iter().enumerate() {
            visits += 1;
            let weight = class.rate * class.members.len() as f64;
            if weight <= 0.0 {
                continue;
            }
            chosen = Some(c);
            prefix += weight;
            if target < prefix {
                break;
            }
        }
        self.class_visits.set(self.class_visits.get() + visits);
        self.selections.set(self.selections.get() + 1);
        let class = &self.classes[chosen.ok_or(SimError::NoActiveComponents)?];
        let n = class.members.len();
        let idx = ((q2 * n as f64) as usize).min(n - 1);
        Ok(class.members[idx])
    }

    /// Class slots visited by all selections so far.
    pub fn class_visits(&self) -> u64 {
        self.class_visits.get()
    }

    pub fn selections(&self) -> u64 {
        self.selections.get()
    }
}

/// Uniformization of component rates under a common bound `r_*`.
#[derive(Clone, Debug)]
pub struct UniformizedSampler {
    bound: f64,
    rates: Vec<f64>,
}

impl UniformizedSampler {
    pub fn new(bound: f64, rates: Vec<f64>) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(SimError::NonPositiveRate(bound));
        }
        let sampler = Self { bound, rates };
        for i in 0..sampler.rates.len() {
            sampler.check(i)?;
        }
        Ok(sampler)
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    fn check(&self, i: usize) -> Result<()> {
        let r = self.rates[i];
        check_rate(r)?;
        if r > self.bound {
            return Err(SimError::ContractViolation(format!(
                "rate {r} of component {i} exceeds uniform bound {}",
                self.bound
            )));
        }
        Ok(())
    }

    pub fn set_rate(&mut self, i: usize, rate: f64) -> Result<()> {
        let len = self.rates.len();
        *self
            .rates
            .get_mut(i)
            .ok_or(SimError::IndexOutOfRange { index: i, len })? = rate;
        self.check(i)
    }

    /// Picks a component uniformly and accepts it with probability `r_i / r_*`.
    pub fn step(&self, stream: &mut RandomStream) -> Result<(usize, bool)> {
        let i = stream.below(self.rates.len());
        self.check(i)?;
        let accepted = stream.uniform() * self.bound < self.rates[i];
        Ok((i, accepted))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_nonzero_leaf_sets_root() {
        let mut tree = RateTree::new(8);
        let writes = tree.update(3, 5.0).unwrap();
        assert_eq!(tree.total(), 5.0);
        assert_eq!(writes, 4);
    }

    #[test]
    fn write_count_is_depth_plus_one() {
        for n in [1usize, 2, 3, 5, 8, 100, 1024, 1025] {
            let mut tree = RateTree::new(n);
            let expected = (n as f64).log2().ceil() as usize + 1;
            assert_eq!(tree.update(n - 1, 1.0).unwrap(), expected, "n={n}");
        }
    }

    #[test]
    fn rejects_negative_and_out_of_range() {
        let mut tree = RateTree::new(4);
        assert_eq!(tree.update(0, -1.0), Err(SimError::NegativeRate(-1.0)));
        assert!(matches!(
            tree.update(4, 1.0),
            Err(SimError::IndexOutOfRange { .. })
        ));
        assert_eq!(tree.select(0.5), Err(SimError::NoActiveComponents));
    }

    #[test]
    fn reset_leaf_equals_rebuild() {
        let mut tree = RateTree::from_rates(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        tree.update(2, 7.5).unwrap();
        tree.update(2, 0.25).unwrap();
        let fresh = RateTree::from_rates(&[1.0, 2.0, 0.25, 4.0, 5.0]).unwrap();
        assert_eq!(tree.nodes, fresh.nodes);
    }

    #[test]
    fn random_updates_keep_root_equal_to_leaf_sum() {
        let mut rng = RandomStream::new(3, 0);
        let mut tree = RateTree::new(1000);
        for _ in 0..10_000 {
            let i = rng.below(1000);
            tree.update(i, rng.uniform() * 10.0).unwrap();
        }
        let direct: f64 = tree.leaves().iter().sum();
        assert!((tree.total() - direct).abs() <= 1e-9 * direct);
        assert!(tree.is_consistent(1e-9));
    }

    #[test]
    fn uniform_prefix_example() {
        let tree = RateTree::from_rates(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(tree.select(0.625).unwrap(), 2);
        assert_eq!(linear_scan_select(&[1.0, 1.0, 1.0, 1.0], 0.625).unwrap(), 2);
    }

    #[test]
    fn single_support_always_selected() {
        let tree = RateTree::from_rates(&[0.0, 5.0, 0.0, 0.0]).unwrap();
        for q in [1e-12, 0.3, 0.999_999] {
            assert_eq!(tree.select(q).unwrap(), 1);
            assert_eq!(linear_scan_select(&[0.0, 5.0, 0.0, 0.0], q).unwrap(), 1);
        }
    }

    #[test]
    fn linear_scan_examples() {
        assert_eq!(linear_scan_select(&[2.0, 3.0], 0.5).unwrap(), 1);
        assert_eq!(linear_scan_select(&[1.0], 0.01).unwrap(), 0);
        assert_eq!(linear_scan_select(&[1.0], 0.99).unwrap(), 0);
        assert_eq!(
            linear_scan_select(&[0.0, 0.0], 0.5),
            Err(SimError::NoActiveComponents)
        );
    }

    #[test]
    fn select_visits_depth_nodes() {
        let tree = RateTree::from_rates(&vec![1.0; 1000]).unwrap();
        tree.select(0.3).unwrap();
        assert_eq!(tree.node_visits(), 10);
    }

    proptest! {
        #[test]
        fn tree_matches_linear_scan(
            rates in proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..100.0], 1..300),
            q in 1e-12f64..1.0,
        ) {
            prop_assume!(rates.iter().any(|&r| r > 0.0));
            let tree = RateTree::from_rates(&rates).unwrap();
            prop_assert_eq!(tree.select(q).unwrap(), linear_scan_select(&rates, q).unwrap());
        }

        #[test]
        fn tree_stays_consistent(ops in proptest::collection::vec((0usize..37, 0.0f64..1e3), 1..400)) {
            let mut tree = RateTree::new(37);
            for (i, r) in ops {
                tree.update(i, r).unwrap();
            }
            prop_assert!(tree.is_consistent(1e-9));
        }
    }

    #[test]
    fn class_single_class_member_pick() {
        let table = RateClassTable::new(&[1.0], &[0, 0, 0, 0]).unwrap();
        assert_eq!(table.select(0.3, 0.6).unwrap(), 2);
    }

    #[test]
    fn class_two_class_prefix() {
        // Class 0: rate 1, members {0, 1}; class 1: rate 3, member {2}.
        let table = RateClassTable::new(&[1.0, 3.0], &[0, 0, 1]).unwrap();
        assert_eq!(table.select(0.5, 0.0).unwrap(), 2);
        assert_eq!(table.class_visits(), 2);
    }

    #[test]
    fn class_move_sole_member_and_back() {
        let mut table = RateClassTable::new(&[1.0, 2.0], &[0, 1, 1]).unwrap();
        table.class_move(0, 1).unwrap();
        assert!(table.members(0).is_empty());
        table.class_move(0, 0).unwrap();
        let mut m1 = table.members(1).to_vec();
        m1.sort();
        assert_eq!(table.members(0), &[0]);
        assert_eq!(m1, vec![1, 2]);
        assert_eq!(table.class_move(0, 5), Err(SimError::UnknownClass(5)));
    }

    #[test]
    fn class_moves_match_naive_lists() {
        let k = 5;
        let n = 200;
        let mut rng = RandomStream::new(11, 0);
        let assignment: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let mut table = RateClassTable::new(&[1.0, 2.0, 3.0, 4.0, 5.0], &assignment).unwrap();
        let mut naive: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &c) in assignment.iter().enumerate() {
            naive[c].push(i);
        }
        for _ in 0..10_000 {
            let i = rng.below(n);
            let c = rng.below(k);
            table.class_move(i, c).unwrap();
            for list in naive.iter_mut() {
                list.retain(|&x| x != i);
            }
            naive[c].push(i);
        }
        for (c, want) in naive.iter().enumerate() {
            let mut got = table.members(c).to_vec();
            got.sort();
            let mut want = want.clone();
            want.sort();
            assert_eq!(got, want);
            for &i in table.members(c) {
                assert_eq!(table.class_of(i), c);
            }
        }
    }

    #[test]
    fn class_select_frequencies() {
        let class_rates = [0.5, 1.0, 4.0];
        let assignment = [0, 0, 1, 2, 1, 0, 2];
        let table = RateClassTable::new(&class_rates, &assignment).unwrap();
        let rates: Vec<f64> = assignment.iter().map(|&c| class_rates[c]).collect();
        let total: f64 = rates.iter().sum();
        let draws = 1_000_000;
        let mut counts = vec![0u64; rates.len()];
        let mut rng = RandomStream::new(5, 0);
        for _ in 0..draws {
            let i = table
                .select(rng.uniform_open(), rng.uniform_open())
                .unwrap();
            counts[i] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let p = rates[i] / total;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let freq = c as f64 / draws as f64;
            assert!((freq - p).abs() < 4.0 * se, "component {i}: {freq} vs {p}");
        }
    }

    #[test]
    fn uniformized_extremes() {
        let mut rng = RandomStream::new(1, 0);
        let all = UniformizedSampler::new(2.0, vec![2.0; 10]).unwrap();
        let none = UniformizedSampler::new(2.0, vec![0.0; 10]).unwrap();
        for _ in 0..1000 {
            assert!(all.step(&mut rng).unwrap().1);
            assert!(!none.step(&mut rng).unwrap().1);
        }
    }

    #[test]
    fn uniformized_rejects_rate_above_bound() {
        assert!(matches!(
            UniformizedSampler::new(1.0, vec![0.5, 1.5]),
            Err(SimError::ContractViolation(_))
        ));
        let mut s = UniformizedSampler::new(1.0, vec![0.5]).unwrap();
        assert!(s.set_rate(0, 2.0).is_err());
    }

    #[test]
    fn uniformized_accepted_distribution_matches_dispenser() {
        let rates = vec![0.1, 0.5, 1.0, 0.25, 0.75, 0.0, 0.9, 0.3];
        let sampler = UniformizedSampler::new(1.0, rates.clone()).unwrap();
        let tree = RateTree::from_rates(&rates).unwrap();
        let mut a = vec![0.0; rates.len()];
        let mut b = vec![0.0; rates.len()];
        let mut rng = RandomStream::new(8, 0);
        let mut accepted = 0;
        while accepted < 100_000 {
            let (i, ok) = sampler.step(&mut rng).unwrap();
            if ok {
                a[i] += 1.0;
                accepted += 1;
            }
        }
        for _ in 0..100_000 {
            b[tree.select(rng.uniform_open()).unwrap()] += 1.0;
        }
        let (stat, dof) = crate::stats::chi_square_two_sample(&a, &b);
        assert!(stat < crate::stats::chi_square_critical(dof, 0.001), "chi2={stat}");
    }
}
