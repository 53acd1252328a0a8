//! Fully connected circuit-switched network with alternate routing.
//!
//! A call between `a` and `b` takes the direct link when it has an idle
//! trunk. Otherwise it overflows to a two-link path through a via node:
//! LBA picks the via maximizing `min(idle(a, v), idle(v, b))`, ALBA the via
//! whose path load class `min(class(a, v), class(v, b))` is smallest. Ties go
//! to the smallest via index. Both policies can be evaluated lazily, by
//! scanning every via, or through indexes maintained on each trunk change.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Result, SimError};
use crate::event::{EventQueue, SimTime};
use crate::parallel::levels::EventGraph;
use crate::parallel::syncrelax::{syncrelax_run, ExternalView, RelaxModel, Strip, Trajectory};
use crate::rng::RandomStream;

/// Index of the link (or node pair) `{a, b}` among the `n (n - 1) / 2` links.
pub fn link_index(n: usize, a: usize, b: usize) -> usize {
    debug_assert!(a != b && a < n && b < n);
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

/// Endpoints `(a, b)` with `a < b` of every link, in index order.
pub fn link_endpoints(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            out.push((a, b));
        }
    }
    out
}

/// Occupancy bands `0 = g_0 < g_1 < ... < g_K = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadClasses {
    /// Interior boundaries `g_1 .. g_{K-1}`.
    boundaries: Vec<f64>,
}

impl LoadClasses {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        let mut prev = 0.0;
        for &g in &boundaries {
            if !(g > prev && g < 1.0) {
                return Err(SimError::InvalidParameter(format!(
                    "load class boundaries must increase strictly inside (0, 1), got {boundaries:?}"
                )));
            }
            prev = g;
        }
        Ok(Self { boundaries })
    }

    /// One class per trunk count: class `o + 1` for occupancy `o` of `c`.
    pub fn per_trunk(capacity: u32) -> Self {
        Self {
            boundaries: (1..capacity).map(|o| f64::from(o) / f64::from(capacity)).collect(),
        }
    }

    /// Number of classes `K`.
    pub fn count(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Class in `1..=K` of a link with `occupied` of `capacity` trunks busy;
    /// a link without idle trunks is in class `K`.
    pub fn class(&self, occupied: u32, capacity: u32) -> usize {
        if occupied >= capacity {
            return self.count();
        }
        let g = f64::from(occupied) / f64::from(capacity);
        1 + self.boundaries.partition_point(|&b| b <= g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    Lba,
    Alba(LoadClasses),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Evaluation {
    Lazy,
    Anticipatory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Route {
    Direct,
    Via(usize),
    Blocked,
}

impl Route {
    fn links(self, n: usize, a: usize, b: usize) -> Vec<usize> {
        match self {
            Route::Direct => vec![link_index(n, a, b)],
            Route::Via(v) => vec![link_index(n, a, v), link_index(n, v, b)],
            Route::Blocked => Vec::new(),
        }
    }

    pub fn label(self) -> String {
        match self {
            Route::Direct => "direct".into(),
            Route::Via(v) => format!("via{v}"),
            Route::Blocked => "blocked".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Network {
    n: usize,
    capacity: Vec<u32>,
    occupied: Vec<u32>,
}

impl Network {
    pub fn uniform(n: usize, trunks: u32) -> Result<Self> {
        Self::with_capacities(n, vec![trunks; n * n.saturating_sub(1) / 2])
    }

    pub fn with_capacities(n: usize, capacity: Vec<u32>) -> Result<Self> {
        if n < 2 {
            return Err(SimError::InvalidParameter("network needs at least two nodes".into()));
        }
        if capacity.len() != n * (n - 1) / 2 {
            return Err(SimError::InvalidParameter(format!(
                "expected {} link capacities, got {}",
                n * (n - 1) / 2,
                capacity.len()
            )));
        }
        let occupied = vec![0; capacity.len()];
        Ok(Self {
            n,
            capacity,
            occupied,
        })
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn links(&self) -> usize {
        self.capacity.len()
    }

    pub fn capacity(&self, l: usize) -> u32 {
        self.capacity[l]
    }

    pub fn occupied(&self, l: usize) -> u32 {
        self.occupied[l]
    }

    pub fn occupancy(&self) -> &[u32] {
        &self.occupied
    }

    pub fn idle(&self, a: usize, b: usize) -> u32 {
        let l = link_index(self.n, a, b);
        self.capacity[l].saturating_sub(self.occupied[l])
    }

    /// Sets occupancies directly, e.g. to build test states.
    pub fn set_occupancy(&mut self, occupied: Vec<u32>) -> Result<()> {
        if occupied.len() != self.capacity.len() || occupied.iter().zip(&self.capacity).any(|(o, c)| o > c) {
            return Err(SimError::InvalidParameter("occupancy exceeds capacity".into()));
        }
        self.occupied = occupied;
        Ok(())
    }
}

/// LBA by scanning all vias. Returns the via and the number of vias scanned.
pub fn lba_select_via(net: &Network, a: usize, b: usize) -> (Option<usize>, u64) {
    let mut best: Option<(u32, usize)> = None;
    let mut scanned = 0;
    for v in (0..net.n).filter(|&v| v != a && v != b) {
        scanned += 1;
        let key = net.idle(a, v).min(net.idle(v, b));
        if key > 0 && best.is_none_or(|(k, _)| key > k) {
            best = Some((key, v));
        }
    }
    (best.map(|(_, v)| v), scanned)
}

/// ALBA by scanning all vias. Only paths with an idle trunk on both links
/// are candidates.
pub fn alba_select_via(net: &Network, scheme: &LoadClasses, a: usize, b: usize) -> (Option<usize>, u64) {
    let mut best: Option<(usize, usize)> = None;
    let mut scanned = 0;
    for v in (0..net.n).filter(|&v| v != a && v != b) {
        scanned += 1;
        if net.idle(a, v) == 0 || net.idle(v, b) == 0 {
            continue;
        }
        let (l1, l2) = (link_index(net.n, a, v), link_index(net.n, v, b));
        let key = scheme
            .class(net.occupied[l1], net.capacity[l1])
            .min(scheme.class(net.occupied[l2], net.capacity[l2]));
        if best.is_none_or(|(k, _)| key < k) {
            best = Some((key, v));
        }
    }
    (best.map(|(_, v)| v), scanned)
}

fn lazy_select(net: &Network, policy: &Policy, a: usize, b: usize) -> (Option<usize>, u64) {
    match policy {
        Policy::Lba => lba_select_via(net, a, b),
        Policy::Alba(scheme) => alba_select_via(net, scheme, a, b),
    }
}

/// Work counters of a router.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RouterCounters {
    /// Overflow queries answered.
    pub queries: u64,
    /// Vias inspected by lazy scans.
    pub scan_visits: u64,
    /// Trunk allocations and releases.
    pub trunk_changes: u64,
    /// Trunk changes that changed the key a link contributes to the index.
    pub key_changes: u64,
    /// Index entries re-ranked.
    pub index_updates: u64,
}

/// Per-pair via index keyed by the policy's path key.
#[derive(Clone, Debug)]
struct ViaIndex {
    n: usize,
    /// Current key of every (pair, via) entry, `pair * n + via`.
    keys: Vec<u32>,
    /// Sorted entries `(rank, via)` per pair; smallest rank is best.
    sets: Vec<BTreeSet<(u32, usize)>>,
    /// Key contributed by every link.
    link_keys: Vec<u32>,
    policy: Policy,
}

const INELIGIBLE: u32 = u32::MAX;

impl ViaIndex {
    fn new(net: &Network, policy: Policy) -> Self {
        let n = net.n;
        let mut index = Self {
            n,
            keys: vec![INELIGIBLE; net.links() * n],
            sets: vec![BTreeSet::new(); net.links()],
            link_keys: (0..net.links()).map(|l| Self::link_key(&policy, net, l)).collect(),
            policy,
        };
        for (p, (a, b)) in link_endpoints(n).into_iter().enumerate() {
            for v in (0..n).filter(|&v| v != a && v != b) {
                let k = index.path_key(a, b, v);
                index.keys[p * n + v] = k;
                index.sets[p].insert((k, v));
            }
        }
        index
    }

    /// LBA: idle trunks. ALBA: load class, or 0 when the link is full.
    fn link_key(policy: &Policy, net: &Network, l: usize) -> u32 {
        let idle = net.capacity[l].saturating_sub(net.occupied[l]);
        match policy {
            Policy::Lba => idle,
            Policy::Alba(scheme) => {
                if idle == 0 {
                    0
                } else {
                    scheme.class(net.occupied[l], net.capacity[l]) as u32
                }
            }
        }
    }

    /// Rank of via `v` for pair `{a, b}`; `INELIGIBLE` when a link is full.
    fn path_key(&self, a: usize, b: usize, v: usize) -> u32 {
        let k1 = self.link_keys[link_index(self.n, a, v)];
        let k2 = self.link_keys[link_index(self.n, v, b)];
        match self.policy {
            Policy::Lba => {
                let m = k1.min(k2);
                if m == 0 {
                    INELIGIBLE
                } else {
                    u32::MAX - 1 - m
                }
            }
            Policy::Alba(_) => {
                if k1 == 0 || k2 == 0 {
                    INELIGIBLE
                } else {
                    k1.min(k2)
                }
            }
        }
    }

    /// Refreshes the entries that use link `l`. Returns the entries re-ranked.
    fn on_link_change(&mut self, net: &Network, l: usize, endpoints: (usize, usize)) -> u64 {
        let key = Self::link_key(&self.policy, net, l);
        if key == self.link_keys[l] {
            return 0;
        }
        self.link_keys[l] = key;
        let (x, y) = endpoints;
        let mut touched = 0;
        for z in (0..self.n).filter(|&z| z != x && z != y) {
            for (end, via) in [(x, y), (y, x)] {
                let p = link_index(self.n, end, z);
                let k = self.path_key(end, z, via);
                let slot = p * self.n + via;
                let old = self.keys[slot];
                self.sets[p].remove(&(old, via));
                self.sets[p].insert((k, via));
                self.keys[slot] = k;
                touched += 1;
            }
        }
        touched
    }

    fn best(&self, a: usize, b: usize) -> Option<usize> {
        let p = link_index(self.n, a, b);
        self.sets[p]
            .first()
            .filter(|(k, _)| *k != INELIGIBLE)
            .map(|&(_, v)| v)
    }
}

/// Routing decisions plus the optional anticipatory index.
#[derive(Clone, Debug)]
pub struct Router {
    policy: Policy,
    index: Option<ViaIndex>,
    endpoints: Vec<(usize, usize)>,
    pub counters: RouterCounters,
}

impl Router {
    pub fn new(net: &Network, policy: Policy, eval: Evaluation) -> Self {
        let index = (eval == Evaluation::Anticipatory).then(|| ViaIndex::new(net, policy.clone()));
        Self {
            policy,
            index,
            endpoints: link_endpoints(net.n),
            counters: RouterCounters::default(),
        }
    }

    pub fn evaluation(&self) -> Evaluation {
        if self.index.is_some() {
            Evaluation::Anticipatory
        } else {
            Evaluation::Lazy
        }
    }

    /// Route for a new call on the current state, without allocating.
    pub fn route(&mut self, net: &Network, a: usize, b: usize) -> Route {
        if net.idle(a, b) > 0 {
            return Route::Direct;
        }
        self.counters.queries += 1;
        let via = match &self.index {
            Some(index) => index.best(a, b),
            None => {
                let (via, scanned) = lazy_select(net, &self.policy, a, b);
                self.counters.scan_visits += scanned;
                via
            }
        };
        via.map_or(Route::Blocked, Route::Via)
    }

    fn change(&mut self, net: &mut Network, links: &[usize], delta: i32) {
        for &l in links {
            let before = ViaIndex::link_key(&self.policy, net, l);
            net.occupied[l] = net.occupied[l].checked_add_signed(delta).expect("trunk count underflow");
            assert!(net.occupied[l] <= net.capacity[l], "trunk count exceeds capacity");
            self.counters.trunk_changes += 1;
            if ViaIndex::link_key(&self.policy, net, l) != before {
                self.counters.key_changes += 1;
            }
            if let Some(index) = &mut self.index {
                self.counters.index_updates += index.on_link_change(net, l, self.endpoints[l]);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Call {
    pub a: usize,
    pub b: usize,
    pub route: Route,
}

/// Network, router and the ledger of carried calls.
#[derive(Clone, Debug)]
pub struct Switchboard {
    net: Network,
    router: Router,
    calls: BTreeMap<u64, Call>,
    next_id: u64,
}

impl Switchboard {
    pub fn new(net: Network, policy: Policy, eval: Evaluation) -> Self {
        let router = Router::new(&net, policy, eval);
        Self {
            net,
            router,
            calls: BTreeMap::new(),
            next_id: 0,
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn counters(&self) -> RouterCounters {
        self.router.counters
    }

    pub fn active_calls(&self) -> usize {
        self.calls.len()
    }

    /// Routes and allocates a call. Returns its id unless blocked.
    pub fn place_call(&mut self, a: usize, b: usize) -> Result<(Route, Option<u64>)> {
        let n = self.net.n;
        if a == b || a >= n || b >= n {
            return Err(SimError::InvalidParameter(format!("invalid endpoints ({a}, {b})")));
        }
        let route = self.router.route(&self.net, a, b);
        if route == Route::Blocked {
            return Ok((route, None));
        }
        self.router.change(&mut self.net, &route.links(n, a, b), 1);
        let id = self.next_id;
        self.next_id += 1;
        self.calls.insert(id, Call { a, b, route });
        Ok((route, Some(id)))
    }

    pub fn release_call(&mut self, id: u64) -> Result<Call> {
        let call = self.calls.remove(&id).ok_or(SimError::UnknownCall(id))?;
        let links = call.route.links(self.net.n, call.a, call.b);
        self.router.change(&mut self.net, &links, -1);
        Ok(call)
    }

    /// Occupancy of every link equals the number of carried calls using it.
    pub fn ledger_consistent(&self) -> bool {
        let mut counts = vec![0u32; self.net.links()];
        for c in self.calls.values() {
            for l in c.route.links(self.net.n, c.a, c.b) {
                counts[l] += 1;
            }
        }
        counts == self.net.occupied
    }
}

/// Poisson call arrivals on every node pair with exponential holding times.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Traffic {
    pub rate_per_pair: f64,
    pub mean_holding: f64,
}

impl Traffic {
    pub fn new(rate_per_pair: f64, mean_holding: f64) -> Result<Self> {
        if !(rate_per_pair >= 0.0) || !rate_per_pair.is_finite() {
            return Err(SimError::InvalidParameter(format!(
                "arrival rate {rate_per_pair} must be nonnegative"
            )));
        }
        if !(mean_holding > 0.0) || !mean_holding.is_finite() {
            return Err(SimError::InvalidParameter(format!(
                "mean holding time {mean_holding} must be positive"
            )));
        }
        Ok(Self {
            rate_per_pair,
            mean_holding,
        })
    }

    /// Arrival `k` (1-based) of `pair` following one at `last`: its time and
    /// holding time, both drawn from the stream keyed `(seed, pair, k)`.
    pub fn arrival(&self, seed: u64, pair: usize, k: u64, last: f64) -> Option<(f64, f64)> {
        if self.rate_per_pair == 0.0 {
            return None;
        }
        let mut s = RandomStream::keyed(seed, pair as u64, k);
        let t = last + s.exp(self.rate_per_pair).expect("positive rate");
        let hold = s.exp(1.0 / self.mean_holding).expect("positive holding rate");
        Some((t, hold))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub time: f64,
    pub pair: usize,
    pub route: Route,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkRun {
    pub offered: Vec<u64>,
    pub blocked: Vec<u64>,
    pub decisions: Vec<Decision>,
    pub counters: RouterCounters,
}

impl NetworkRun {
    fn from_decisions(pairs: usize, decisions: Vec<Decision>, counters: RouterCounters) -> Self {
        let mut offered = vec![0; pairs];
        let mut blocked = vec![0; pairs];
        for d in &decisions {
            offered[d.pair] += 1;
            if d.route == Route::Blocked {
                blocked[d.pair] += 1;
            }
        }
        Self {
            offered,
            blocked,
            decisions,
            counters,
        }
    }

    pub fn total_offered(&self) -> u64 {
        self.offered.iter().sum()
    }

    pub fn total_blocked(&self) -> u64 {
        self.blocked.iter().sum()
    }

    pub fn blocking(&self) -> f64 {
        let offered = self.total_offered();
        if offered == 0 {
            0.0
        } else {
            self.total_blocked() as f64 / offered as f64
        }
    }

    pub fn blocking_csv(&self, n: usize) -> String {
        let mut out = String::from("a,b,offered,blocked,blocking\n");
        for (p, (a, b)) in link_endpoints(n).into_iter().enumerate() {
            let frac = if self.offered[p] == 0 {
                0.0
            } else {
                self.blocked[p] as f64 / self.offered[p] as f64
            };
            out.push_str(&format!("{a},{b},{},{},{frac}\n", self.offered[p], self.blocked[p]));
        }
        out.push_str(&format!(
            "all,all,{},{},{}\n",
            self.total_offered(),
            self.total_blocked(),
            self.blocking()
        ));
        out
    }

    pub fn counters_csv(&self) -> String {
        let c = &self.counters;
        format!(
            "counter,value\nqueries,{}\nscan_visits,{}\ntrunk_changes,{}\nkey_changes,{}\nindex_updates,{}\n",
            c.queries, c.scan_visits, c.trunk_changes, c.key_changes, c.index_updates
        )
    }
}

#[derive(Clone, Copy, Debug)]
enum NetEvent {
    Arrival { k: u64, hold: f64 },
    Departure { call: u64 },
}

/// Sequential event-driven run to `horizon`.
pub fn run_network(
    net: &Network,
    traffic: &Traffic,
    policy: &Policy,
    eval: Evaluation,
    horizon: f64,
    seed: u64,
) -> Result<NetworkRun> {
    let n = net.n;
    let pairs = net.links();
    let mut board = Switchboard::new(net.clone(), policy.clone(), eval);
    let mut queue = EventQueue::new();
    for p in 0..pairs {
        if let Some((t, hold)) = traffic.arrival(seed, p, 1, 0.0) {
            if t <= horizon {
                queue.schedule(SimTime::new(t)?, p, NetEvent::Arrival { k: 1, hold })?;
            }
        }
    }
    let endpoints = link_endpoints(n);
    let mut decisions = Vec::new();
    while let Some(ev) = queue.pop_min() {
        let t = ev.time.value();
        let p = ev.subject;
        match ev.payload {
            NetEvent::Arrival { k, hold } => {
                let (a, b) = endpoints[p];
                let (route, id) = board.place_call(a, b)?;
                decisions.push(Decision { time: t, pair: p, route });
                if let Some(call) = id {
                    if t + hold <= horizon {
                        queue.schedule(SimTime::new(t + hold)?, p, NetEvent::Departure { call })?;
                    }
                }
                if let Some((next, hold)) = traffic.arrival(seed, p, k + 1, t) {
                    if next <= horizon {
                        queue.schedule(SimTime::new(next)?, p, NetEvent::Arrival { k: k + 1, hold })?;
                    }
                }
            }
            NetEvent::Departure { call } => {
                board.release_call(call)?;
            }
        }
    }
    Ok(NetworkRun::from_decisions(pairs, decisions, board.counters()))
}

/// Event of one node-pair component in a relaxation strip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CallEvent {
    Arrival { route: Route, departs: f64 },
    Departure { route: Route },
}

impl CallEvent {
    fn delta(&self) -> (Route, i32) {
        match *self {
            CallEvent::Arrival { route, .. } => (route, 1),
            CallEvent::Departure { route } => (route, -1),
        }
    }
}

/// Committed state of the network at a strip boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitState {
    occupied: Vec<u32>,
    arrivals: Vec<u64>,
    last_arrival: Vec<f64>,
    /// Carried calls of every pair: `(departure time, route)`.
    active: Vec<Vec<(f64, Route)>>,
}

/// The network as a relaxation model whose components are node pairs.
#[derive(Clone, Debug)]
pub struct CircuitRelax {
    pub net: Network,
    pub traffic: Traffic,
    pub policy: Policy,
    pub seed: u64,
    pub horizon: f64,
    endpoints: Vec<(usize, usize)>,
    /// Pairs sharing an endpoint with each pair, itself excluded.
    touching: Vec<Vec<usize>>,
}

impl CircuitRelax {
    pub fn new(net: Network, traffic: Traffic, policy: Policy, seed: u64, horizon: f64) -> Self {
        let endpoints = link_endpoints(net.n);
        let touching = endpoints
            .iter()
            .enumerate()
            .map(|(p, &(a, b))| {
                endpoints
                    .iter()
                    .enumerate()
                    .filter(|&(q, &(c, d))| q != p && (c == a || c == b || d == a || d == b))
                    .map(|(q, _)| q)
                    .collect()
            })
            .collect();
        Self {
            net,
            traffic,
            policy,
            seed,
            horizon,
            endpoints,
            touching,
        }
    }

    /// Components whose events a decision with `route` on pair `p` read.
    pub fn read_set(&self, p: usize, route: Route) -> Vec<usize> {
        if route == Route::Direct {
            self.touching[p].clone()
        } else {
            (0..self.endpoints.len()).filter(|&q| q != p).collect()
        }
    }

    fn apply(&self, occ: &mut [u32], p: usize, route: Route, delta: i32) {
        let (a, b) = self.endpoints[p];
        for l in route.links(self.net.n, a, b) {
            occ[l] = occ[l].checked_add_signed(delta).expect("trunk count underflow");
        }
    }
}

struct PairLocal {
    p: usize,
    arrivals: u64,
    next: Option<(f64, f64)>,
    /// Pending departures `(time, route)`, sorted by time.
    departures: Vec<(f64, Route)>,
    events: Trajectory<CallEvent>,
}

impl PairLocal {
    fn next_time(&self) -> Option<(f64, bool)> {
        let dep = self.departures.first().map(|d| d.0);
        match (dep, self.next.map(|a| a.0)) {
            (Some(d), Some(a)) => Some(if d <= a { (d, true) } else { (a, false) }),
            (Some(d), None) => Some((d, true)),
            (None, Some(a)) => Some((a, false)),
            (None, None) => None,
        }
    }
}

impl RelaxModel for CircuitRelax {
    type State = CircuitState;
    type Event = CallEvent;

    fn num_components(&self) -> usize {
        self.endpoints.len()
    }

    fn initial_state(&self) -> CircuitState {
        let pairs = self.endpoints.len();
        CircuitState {
            occupied: vec![0; pairs],
            arrivals: vec![0; pairs],
            last_arrival: vec![0.0; pairs],
            active: vec![Vec::new(); pairs],
        }
    }

    fn simulate(
        &self,
        state: &CircuitState,
        strip: Strip,
        part: &[usize],
        ext: &ExternalView<'_, CallEvent>,
    ) -> Vec<Trajectory<CallEvent>> {
        let n = self.net.n;
        let mut inside = vec![false; self.endpoints.len()];
        for &p in part {
            inside[p] = true;
        }
        let arrival = |p: usize, k: u64, last: f64| {
            self.traffic
                .arrival(self.seed, p, k, last)
                .filter(|&(t, _)| t < strip.end && t <= self.horizon)
        };
        let mut locals: Vec<PairLocal> = part
            .iter()
            .map(|&p| PairLocal {
                p,
                arrivals: state.arrivals[p],
                next: arrival(p, state.arrivals[p] + 1, state.last_arrival[p]),
                departures: state.active[p]
                    .iter()
                    .copied()
                    .filter(|d| d.0 < strip.end && d.0 <= self.horizon)
                    .collect(),
                events: Vec::new(),
            })
            .collect();
        let mut occ = state.occupied.clone();
        loop {
            let mut best: Option<(f64, usize, bool)> = None;
            for (pos, l) in locals.iter().enumerate() {
                if let Some((t, dep)) = l.next_time() {
                    if best.is_none_or(|(bt, bp, _)| {
                        crate::parallel::precedes(t, l.p, bt, locals[bp].p)
                    }) {
                        best = Some((t, pos, dep));
                    }
                }
            }
            let Some((t, pos, is_departure)) = best else {
                break;
            };
            let p = locals[pos].p;
            if is_departure {
                let (_, route) = locals[pos].departures.remove(0);
                self.apply(&mut occ, p, route, -1);
                locals[pos].events.push((t, CallEvent::Departure { route }));
                continue;
            }
            let (_, hold) = locals[pos].next.take().expect("arrival pending");
            let (a, b) = self.endpoints[p];
            let direct = link_index(n, a, b);
            let external = |q: usize, occ: &mut [u32]| {
                for (_, e) in ext.before(q, t, p) {
                    let (route, d) = e.delta();
                    self.apply(occ, q, route, d);
                }
            };
            let mut view = occ.clone();
            for &q in self.touching[p].iter().filter(|&&q| !inside[q]) {
                external(q, &mut view);
            }
            let route = if self.net.capacity[direct] > view[direct] {
                Route::Direct
            } else {
                let mut full = occ.clone();
                for q in (0..self.endpoints.len()).filter(|&q| !inside[q]) {
                    external(q, &mut full);
                }
                let mut snapshot = self.net.clone();
                snapshot.occupied = full;
                lazy_select(&snapshot, &self.policy, a, b)
                    .0
                    .map_or(Route::Blocked, Route::Via)
            };
            let departs = t + hold;
            if route != Route::Blocked {
                self.apply(&mut occ, p, route, 1);
                let deps = &mut locals[pos].departures;
                let at = deps.partition_point(|d| d.0 <= departs);
                if departs < strip.end && departs <= self.horizon {
                    deps.insert(at, (departs, route));
                }
            }
            let l = &mut locals[pos];
            l.events.push((t, CallEvent::Arrival { route, departs }));
            l.arrivals += 1;
            l.next = arrival(p, l.arrivals + 1, t);
        }
        locals.into_iter().map(|l| l.events).collect()
    }

    fn commit(&self, state: &mut CircuitState, _strip: Strip, trajectories: &[Trajectory<CallEvent>]) {
        for (p, traj) in trajectories.iter().enumerate() {
            for &(t, e) in traj {
                match e {
                    CallEvent::Arrival { route, departs } => {
                        state.arrivals[p] += 1;
                        state.last_arrival[p] = t;
                        if route != Route::Blocked {
                            self.apply(&mut state.occupied, p, route, 1);
                            state.active[p].push((departs, route));
                        }
                    }
                    CallEvent::Departure { route } => {
                        self.apply(&mut state.occupied, p, route, -1);
                        let pos = state.active[p]
                            .iter()
                            .position(|&(d, r)| d == t && r == route)
                            .expect("departing call is active");
                        state.active[p].remove(pos);
                    }
                }
            }
            state.active[p].sort_by(|x, y| x.0.total_cmp(&y.0));
        }
    }
}

/// Runs the network under synchronous relaxation and returns its decisions
/// together with the iterations of every strip.
pub fn run_network_relaxed(
    model: &CircuitRelax,
    step: f64,
    workers: usize,
) -> Result<(NetworkRun, crate::parallel::RelaxRun<CallEvent>)> {
    let run = syncrelax_run(model, model.horizon, step, workers, None)?;
    let mut decisions: Vec<Decision> = run
        .trajectories
        .iter()
        .enumerate()
        .flat_map(|(p, traj)| {
            traj.iter().filter_map(move |&(time, e)| match e {
                CallEvent::Arrival { route, .. } => Some(Decision { time, pair: p, route }),
                CallEvent::Departure { .. } => None,
            })
        })
        .collect();
    decisions.sort_by(|x, y| x.time.total_cmp(&y.time).then(x.pair.cmp(&y.pair)));
    let net_run = NetworkRun::from_decisions(model.num_components(), decisions, RouterCounters::default());
    Ok((net_run, run))
}

/// Dependency graph of one committed strip: every event depends on its own
/// predecessor, and an arrival on the latest earlier event of every
/// component it read.
pub fn circuit_strip_graph(model: &CircuitRelax, slices: &[&[(f64, CallEvent)]]) -> EventGraph {
    let mut graph = EventGraph::new();
    let mut base = Vec::with_capacity(slices.len());
    let mut total = 0;
    for s in slices {
        base.push(total);
        total += s.len();
    }
    for (p, traj) in slices.iter().enumerate() {
        for (k, &(t, e)) in traj.iter().enumerate() {
            let mut causes = Vec::new();
            if k > 0 {
                causes.push(base[p] + k - 1);
            }
            if let CallEvent::Arrival { route, .. } = e {
                for q in model.read_set(p, route) {
                    let cnt = slices[q].partition_point(|&(tq, _)| crate::parallel::precedes(tq, q, t, p));
                    if cnt > 0 {
                        causes.push(base[q] + cnt - 1);
                    }
                }
            }
            graph.add(t, causes);
        }
    }
    graph
}

/// Level count of every committed strip of a relaxed network run.
pub fn circuit_levels(model: &CircuitRelax, run: &crate::parallel::RelaxRun<CallEvent>) -> Result<Vec<usize>> {
    (0..run.strips.len())
        .map(|k| {
            let slices = crate::parallel::workloads::strip_slices(run, k);
            crate::parallel::count_levels(&circuit_strip_graph(model, &slices), run.strips[k])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_indexing_is_a_bijection() {
        let n = 7;
        let ends = link_endpoints(n);
        for (l, &(a, b)) in ends.iter().enumerate() {
            assert_eq!(link_index(n, a, b), l);
            assert_eq!(link_index(n, b, a), l);
        }
        assert_eq!(ends.len(), 21);
    }

    #[test]
    fn load_class_boundaries() {
        let s = LoadClasses::new(vec![0.8, 0.9]).unwrap();
        assert_eq!(s.count(), 3);
        assert_eq!(s.class(85, 100), 2);
        assert_eq!(s.class(80, 100), 2);
        assert_eq!(s.class(79, 100), 1);
        assert_eq!(s.class(95, 100), 3);
        assert_eq!(s.class(100, 100), 3);
        assert_eq!(s.class(0, 0), 3);
        assert!(LoadClasses::new(vec![0.9, 0.8]).is_err());
        assert!(LoadClasses::new(vec![1.0]).is_err());
        let t = LoadClasses::per_trunk(4);
        assert_eq!((0..=4).map(|o| t.class(o, 4)).collect::<Vec<_>>(), vec![1, 2, 3, 4, 4]);
    }

    fn four_node(occ: &[(usize, usize, u32)], cap: u32) -> Network {
        let mut net = Network::uniform(4, cap).unwrap();
        let mut o = vec![0; net.links()];
        for &(a, b, v) in occ {
            o[link_index(4, a, b)] = v;
        }
        net.set_occupancy(o).unwrap();
        net
    }

    #[test]
    fn lba_picks_most_idle_path() {
        // Direct 0-1 full; via 2 has min-idle 5, via 3 has min-idle 7.
        let net = four_node(&[(0, 1, 10), (0, 2, 5), (1, 2, 0), (0, 3, 3), (1, 3, 1)], 10);
        assert_eq!(lba_select_via(&net, 0, 1).0, Some(3));
        let full = four_node(&[(0, 1, 10), (0, 2, 10), (0, 3, 10)], 10);
        assert_eq!(lba_select_via(&full, 0, 1).0, None);
    }

    #[test]
    fn alba_picks_lowest_path_class() {
        let scheme = LoadClasses::new(vec![0.5]).unwrap();
        // Via 2: classes (2, 2); via 3: classes (1, 2).
        let net = four_node(&[(0, 1, 10), (0, 2, 6), (1, 2, 7), (0, 3, 2), (1, 3, 8)], 10);
        assert_eq!(alba_select_via(&net, &scheme, 0, 1).0, Some(3));
    }

    #[test]
    fn direct_route_preferred_and_release_restores() {
        let net = Network::uniform(5, 2).unwrap();
        let mut board = Switchboard::new(net.clone(), Policy::Lba, Evaluation::Anticipatory);
        let (r, id) = board.place_call(0, 1).unwrap();
        assert_eq!(r, Route::Direct);
        board.release_call(id.unwrap()).unwrap();
        assert_eq!(board.network(), &net);
        assert_eq!(board.release_call(7), Err(SimError::UnknownCall(7)));
    }

    #[test]
    fn overflow_uses_single_via() {
        let mut board = Switchboard::new(Network::uniform(3, 1).unwrap(), Policy::Lba, Evaluation::Lazy);
        assert_eq!(board.place_call(0, 1).unwrap().0, Route::Direct);
        assert_eq!(board.place_call(0, 1).unwrap().0, Route::Via(2));
        assert_eq!(board.place_call(0, 1).unwrap().0, Route::Blocked);
        assert!(board.ledger_consistent());
    }

    #[test]
    fn alba_within_band_needs_no_index_update() {
        let scheme = LoadClasses::new(vec![0.5]).unwrap();
        let mut board = Switchboard::new(Network::uniform(5, 10).unwrap(), Policy::Alba(scheme), Evaluation::Anticipatory);
        board.place_call(0, 1).unwrap();
        assert_eq!(board.counters().index_updates, 0);
        let mut lba = Switchboard::new(Network::uniform(5, 10).unwrap(), Policy::Lba, Evaluation::Anticipatory);
        lba.place_call(0, 1).unwrap();
        assert_eq!(lba.counters().index_updates, 2 * 3);
    }

    #[test]
    fn index_matches_scan_on_random_states() {
        let mut rng = RandomStream::new(11, 0);
        let scheme = LoadClasses::new(vec![0.3, 0.6, 0.9]).unwrap();
        for policy in [Policy::Lba, Policy::Alba(scheme)] {
            let mut lazy = Switchboard::new(Network::uniform(8, 6).unwrap(), policy.clone(), Evaluation::Lazy);
            let mut eager = Switchboard::new(Network::uniform(8, 6).unwrap(), policy.clone(), Evaluation::Anticipatory);
            let mut ids = Vec::new();
            for _ in 0..5000 {
                if !ids.is_empty() && rng.uniform() < 0.45 {
                    let id = ids.swap_remove(rng.below(ids.len()));
                    lazy.release_call(id).unwrap();
                    eager.release_call(id).unwrap();
                } else {
                    let a = rng.below(8);
                    let b = (a + 1 + rng.below(7)) % 8;
                    let (r1, id1) = lazy.place_call(a, b).unwrap();
                    let (r2, id2) = eager.place_call(a, b).unwrap();
                    assert_eq!(r1, r2);
                    assert_eq!(id1, id2);
                    ids.extend(id1);
                }
            }
            assert!(lazy.ledger_consistent() && eager.ledger_consistent());
        }
    }

    #[test]
    fn simple_traffic_cases() {
        let net = Network::uniform(5, 3).unwrap();
        let none = Traffic::new(0.0, 1.0).unwrap();
        let run = run_network(&net, &none, &Policy::Lba, Evaluation::Lazy, 10.0, 1).unwrap();
        assert_eq!(run.total_offered(), 0);
        assert_eq!(run.blocking(), 0.0);
        let zero = Network::uniform(5, 0).unwrap();
        let busy = Traffic::new(1.0, 1.0).unwrap();
        let run = run_network(&zero, &busy, &Policy::Lba, Evaluation::Lazy, 10.0, 1).unwrap();
        assert!(run.total_offered() > 0);
        assert_eq!(run.blocking(), 1.0);
    }

    #[test]
    fn lazy_and_anticipatory_runs_agree() {
        let net = Network::uniform(10, 20).unwrap();
        let traffic = Traffic::new(1.0, 18.0).unwrap();
        let scheme = LoadClasses::new(vec![0.8, 0.9]).unwrap();
        for policy in [Policy::Lba, Policy::Alba(scheme)] {
            let a = run_network(&net, &traffic, &policy, Evaluation::Lazy, 60.0, 4).unwrap();
            let b = run_network(&net, &traffic, &policy, Evaluation::Anticipatory, 60.0, 4).unwrap();
            assert_eq!(a.decisions, b.decisions);
            assert!(a.total_blocked() > 0);
        }
    }

    #[test]
    fn relaxed_run_matches_sequential() {
        let net = Network::uniform(6, 4).unwrap();
        let traffic = Traffic::new(0.6, 4.0).unwrap();
        let model = CircuitRelax::new(net.clone(), traffic, Policy::Lba, 3, 30.0);
        let reference = run_network(&net, &traffic, &Policy::Lba, Evaluation::Lazy, 30.0, 3).unwrap();
        for workers in [1, 3, 5] {
            let (run, relax) = run_network_relaxed(&model, 2.0, workers).unwrap();
            assert_eq!(run.decisions, reference.decisions);
            let levels = circuit_levels(&model, &relax).unwrap();
            for (it, lv) in relax.iterations.iter().zip(&levels) {
                assert!(*it <= (*lv).max(1));
            }
        }
    }
}
