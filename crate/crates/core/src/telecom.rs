//! Two-provider telephone market.
//!
//! Customer `i` calls customer `j` for `v_ij` minutes per month. Its bill
//! under provider `k` charges the in-network price for minutes to
//! subscribers of `k` and the out-of-network price for the rest. A customer
//! whose alternative bill is strictly lower switches at rate `alpha * gap`.
//!
//! Bills are derived from integer minute tallies per provider, kept
//! up to date on every switch. Rates are rounded up to multiples of
//! [`RATE_QUANTUM`], which keeps every partial sum of rates exact so that tree
//! and linear-scan delegation select the same customer for the same draw.

use std::path::Path;

use crate::dispenser::{Delegator, LinearRates, RateTree};
use crate::error::{Result, SimError};
use crate::event::{time_steps, LazyCount, MaintainedCounter};
use crate::rng::RandomStream;

/// Granularity of pull rates, `2^-20` attempts per month.
pub const RATE_QUANTUM: f64 = 1.0 / (1u64 << 20) as f64;

/// Provider 1 or 2.
pub type Provider = u8;

pub fn other(k: Provider) -> Provider {
    3 - k
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plan {
    pub p_same: f64,
    pub p_other: f64,
}

impl Plan {
    pub fn flat(price: f64) -> Result<Self> {
        Self::friends_and_family(price, price)
    }

    pub fn friends_and_family(p_same: f64, p_other: f64) -> Result<Self> {
        for p in [p_same, p_other] {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(SimError::InvalidParameter(format!("price {p} must be nonnegative")));
            }
        }
        Ok(Self { p_same, p_other })
    }

    pub fn is_flat(&self) -> bool {
        self.p_same == self.p_other
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TelecomParams {
    /// Plans of providers 1 and 2.
    pub plans: [Plan; 2],
    /// Slope of the pull function, attempts per month per dollar.
    pub alpha: f64,
}

impl TelecomParams {
    pub fn new(plan1: Plan, plan2: Plan, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(SimError::InvalidParameter(format!("alpha {alpha} must be nonnegative")));
        }
        Ok(Self {
            plans: [plan1, plan2],
            alpha,
        })
    }

    pub fn plan(&self, k: Provider) -> &Plan {
        &self.plans[usize::from(k - 1)]
    }
}

/// Pull rate `alpha * saving` for `saving = current bill - alternative bill`,
/// zero unless the saving is strictly positive.
pub fn pull_rate(saving: f64, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(SimError::InvalidParameter(format!("alpha {alpha} must be nonnegative")));
    }
    if !(saving > 0.0) || alpha == 0.0 {
        return Ok(0.0);
    }
    Ok((alpha * saving / RATE_QUANTUM).ceil() * RATE_QUANTUM)
}

/// Customers, calling volumes and subscriptions.
#[derive(Clone, Debug, PartialEq)]
pub struct Market {
    subs: Vec<Provider>,
    /// `calls[i]`: `(j, v_ij)` with `v_ij > 0`.
    calls: Vec<Vec<(usize, u64)>>,
    /// `callers[j]`: `(i, v_ij)` with `v_ij > 0`.
    callers: Vec<Vec<(usize, u64)>>,
    /// Union of callers and callees of each customer.
    contacts: Vec<Vec<usize>>,
    /// `tally[i][k - 1]`: minutes `i` calls subscribers of `k`.
    tally: Vec<[u64; 2]>,
    /// Subscribers of provider 1.
    provider1: usize,
}

impl Market {
    /// `volumes` are `(i, j, minutes)` triples; repeated pairs add up.
    pub fn new(subs: Vec<Provider>, volumes: &[(usize, usize, u64)]) -> Result<Self> {
        let n = subs.len();
        if let Some(&k) = subs.iter().find(|&&k| k != 1 && k != 2) {
            return Err(SimError::InvalidParameter(format!("provider {k} is not 1 or 2")));
        }
        let mut dense: std::collections::BTreeMap<(usize, usize), u64> = Default::default();
        for &(i, j, v) in volumes {
            for idx in [i, j] {
                if idx >= n {
                    return Err(SimError::IndexOutOfRange { index: idx, len: n });
                }
            }
            if i == j {
                return Err(SimError::InvalidParameter(format!("customer {i} calls itself")));
            }
            if v > 0 {
                *dense.entry((i, j)).or_default() += v;
            }
        }
        let mut calls = vec![Vec::new(); n];
        let mut callers = vec![Vec::new(); n];
        let mut contacts = vec![Vec::new(); n];
        for (&(i, j), &v) in &dense {
            calls[i].push((j, v));
            callers[j].push((i, v));
            contacts[i].push(j);
            contacts[j].push(i);
        }
        for c in &mut contacts {
            c.sort_unstable();
            c.dedup();
        }
        let provider1 = subs.iter().filter(|&&k| k == 1).count();
        let mut market = Self {
            subs,
            provider1,
            calls,
            callers,
            contacts,
            tally: vec![[0, 0]; n],
        };
        market.tally = market.fresh_tallies();
        Ok(market)
    }

    /// Random sparse market: `n * avg_degree / 2` random pairs, each calling
    /// both ways with volumes uniform in `1..=max_minutes`, and uniformly
    /// random initial providers.
    pub fn random_sparse(n: usize, avg_degree: f64, max_minutes: u64, seed: u64) -> Result<Self> {
        if n < 2 || !(avg_degree >= 0.0) || max_minutes == 0 {
            return Err(SimError::InvalidParameter(
                "random market needs n >= 2, nonnegative degree and positive volumes".into(),
            ));
        }
        let mut rng = RandomStream::new(seed, 0);
        let subs = (0..n).map(|_| 1 + (rng.next_u64() & 1) as Provider).collect();
        let pairs = (n as f64 * avg_degree / 2.0).round() as usize;
        let mut volumes = Vec::with_capacity(2 * pairs);
        for _ in 0..pairs {
            let i = rng.below(n);
            let mut j = rng.below(n - 1);
            if j >= i {
                j += 1;
            }
            volumes.push((i, j, 1 + rng.next_u64() % max_minutes));
            volumes.push((j, i, 1 + rng.next_u64() % max_minutes));
        }
        Self::new(subs, &volumes)
    }

    /// Reads `i,j,minutes` lines (a header line is allowed) and assigns
    /// uniformly random initial providers.
    pub fn from_csv_file(path: &Path, seed: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut volumes = Vec::new();
        let mut n = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = (|| -> Option<(usize, usize, u64)> {
                if fields.len() != 3 {
                    return None;
                }
                Some((fields[0].parse().ok()?, fields[1].parse().ok()?, fields[2].parse().ok()?))
            })();
            match parsed {
                Some((i, j, v)) => {
                    n = n.max(i + 1).max(j + 1);
                    volumes.push((i, j, v));
                }
                None if lineno == 0 => {}
                None => {
                    return Err(SimError::Config(format!(
                        "{}:{}: expected i,j,minutes",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        let mut rng = RandomStream::new(seed, 0);
        let subs = (0..n).map(|_| 1 + (rng.next_u64() & 1) as Provider).collect();
        Self::new(subs, &volumes)
    }

    pub fn len(&self) -> usize {
        self.subs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subs.is_empty()
    }

    pub fn subscription(&self, i: usize) -> Provider {
        self.subs[i]
    }

    pub fn subscriptions(&self) -> &[Provider] {
        &self.subs
    }

    pub fn contacts(&self, i: usize) -> &[usize] {
        &self.contacts[i]
    }

    pub fn volume(&self, i: usize, j: usize) -> u64 {
        self.calls[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0, |&(_, v)| v)
    }

    /// Subscribers of providers 1 and 2.
    pub fn shares(&self) -> (usize, usize) {
        (self.provider1, self.subs.len() - self.provider1)
    }

    fn fresh_tallies(&self) -> Vec<[u64; 2]> {
        self.calls
            .iter()
            .map(|row| {
                let mut t = [0, 0];
                for &(j, v) in row {
                    t[usize::from(self.subs[j] - 1)] += v;
                }
                t
            })
            .collect()
    }

    /// Incremental tallies agree with a full recomputation.
    pub fn tallies_consistent(&self) -> bool {
        self.tally == self.fresh_tallies() && self.provider1 == self.subs.iter().filter(|&&k| k == 1).count()
    }

    /// Monthly bill of `i` under provider `k`, from the maintained tallies.
    pub fn bill(&self, i: usize, k: Provider, params: &TelecomParams) -> f64 {
        let plan = params.plan(k);
        let same = self.tally[i][usize::from(k - 1)];
        let diff = self.tally[i][usize::from(other(k) - 1)];
        plan.p_same * same as f64 + plan.p_other * diff as f64
    }

    /// Bill recomputed from the volume lists and current subscriptions.
    pub fn bill_fresh(&self, i: usize, k: Provider, params: &TelecomParams) -> f64 {
        let plan = params.plan(k);
        let (mut same, mut diff) = (0u64, 0u64);
        for &(j, v) in &self.calls[i] {
            if self.subs[j] == k {
                same += v;
            } else {
                diff += v;
            }
        }
        plan.p_same * same as f64 + plan.p_other * diff as f64
    }

    pub fn rate(&self, i: usize, params: &TelecomParams) -> f64 {
        let k = self.subs[i];
        let saving = self.bill(i, k, params) - self.bill(i, other(k), params);
        pull_rate(saving, params.alpha).expect("alpha validated by TelecomParams")
    }

    pub fn rates(&self, params: &TelecomParams) -> Vec<f64> {
        (0..self.len()).map(|i| self.rate(i, params)).collect()
    }

    /// Flips `i` to the other provider and updates the callers' tallies.
    /// Returns the customers whose rates must be refreshed, `i` included.
    pub fn switch_customer(&mut self, i: usize) -> Vec<usize> {
        let from = usize::from(self.subs[i] - 1);
        self.subs[i] = other(self.subs[i]);
        if from == 0 {
            self.provider1 -= 1;
        } else {
            self.provider1 += 1;
        }
        for &(c, v) in &self.callers[i] {
            self.tally[c][from] -= v;
            self.tally[c][1 - from] += v;
        }
        let mut refresh = Vec::with_capacity(self.contacts[i].len() + 1);
        refresh.push(i);
        refresh.extend_from_slice(&self.contacts[i]);
        refresh
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchEvent {
    pub time: f64,
    pub customer: usize,
    pub provider: Provider,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TelecomRun {
    pub events: Vec<SwitchEvent>,
    /// `(time, n1, n2)`, starting with the initial shares.
    pub shares: Vec<(f64, usize, usize)>,
    /// Time at which the aggregate rate dropped to zero, if it did.
    pub quiesced_at: Option<f64>,
    pub final_market: Market,
    /// Number of unhappy customers, maintained by event hooks.
    pub unhappy: i64,
}

impl TelecomRun {
    pub fn events_csv(&self) -> String {
        let mut out = String::from("time,customer,provider\n");
        for e in &self.events {
            out.push_str(&format!("{},{},{}\n", e.time, e.customer, e.provider));
        }
        out
    }

    pub fn shares_csv(&self) -> String {
        let mut out = String::from("time,provider1,provider2\n");
        for (t, a, b) in &self.shares {
            out.push_str(&format!("{t},{a},{b}\n"));
        }
        out
    }

    pub fn final_shares(&self) -> (usize, usize) {
        self.final_market.shares()
    }
}

/// Customers with a positive pull rate, recounted from scratch.
pub struct UnhappyScan<'a> {
    pub market: &'a Market,
    pub params: &'a TelecomParams,
}

impl LazyCount for UnhappyScan<'_> {
    fn lazy_count(&self) -> i64 {
        (0..self.market.len())
            .filter(|&i| self.market.rate(i, self.params) > 0.0)
            .count() as i64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delegation {
    Tree,
    Linear,
}

/// Event-driven run through the dispenser.
pub fn run_event_driven(
    market: &Market,
    params: &TelecomParams,
    horizon: f64,
    stream: &mut RandomStream,
    delegation: Delegation,
) -> Result<TelecomRun> {
    match delegation {
        Delegation::Tree => run_with(market, params, horizon, stream, RateTree::new(market.len())),
        Delegation::Linear => run_with(market, params, horizon, stream, LinearRates::new(market.len())),
    }
}

fn run_with<D: Delegator>(
    market: &Market,
    params: &TelecomParams,
    horizon: f64,
    stream: &mut RandomStream,
    mut rates: D,
) -> Result<TelecomRun> {
    let mut market = market.clone();
    let mut unhappy = MaintainedCounter::new();
    for i in 0..market.len() {
        let r = market.rate(i, params);
        rates.set_rate(i, r)?;
        if r > 0.0 {
            unhappy.increment();
        }
    }
    let (a, b) = market.shares();
    let mut run = TelecomRun {
        events: Vec::new(),
        shares: vec![(0.0, a, b)],
        quiesced_at: None,
        final_market: market.clone(),
        unhappy: 0,
    };
    let mut t = 0.0;
    loop {
        let total = rates.total();
        if !(total > 0.0) {
            run.quiesced_at = Some(t);
            break;
        }
        t += stream.exp(total)?;
        if t > horizon {
            break;
        }
        let i = rates.select(stream.uniform())?;
        for j in market.switch_customer(i) {
            let before = rates.rate(j) > 0.0;
            let r = market.rate(j, params);
            rates.set_rate(j, r)?;
            match (before, r > 0.0) {
                (false, true) => unhappy.increment(),
                (true, false) => unhappy.decrement(),
                _ => {}
            }
        }
        let (a, b) = market.shares();
        run.events.push(SwitchEvent {
            time: t,
            customer: i,
            provider: market.subscription(i),
        });
        run.shares.push((t, a, b));
    }
    run.unhappy = unhappy.value();
    run.final_market = market;
    Ok(run)
}

/// Time-driven run: in each step every unhappy customer switches with
/// probability `r_i dt`, using the rates at the start of the step.
pub fn run_time_driven(
    market: &Market,
    params: &TelecomParams,
    dt: f64,
    horizon: f64,
    stream: &mut RandomStream,
) -> Result<TelecomRun> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SimError::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let mut market = market.clone();
    let mut rates = market.rates(params);
    let (a, b) = market.shares();
    let mut run = TelecomRun {
        events: Vec::new(),
        shares: vec![(0.0, a, b)],
        quiesced_at: None,
        final_market: market.clone(),
        unhappy: 0,
    };
    let steps = time_steps(dt, horizon);
    for k in 1..=steps {
        let t = if k == steps { horizon } else { k as f64 * dt };
        let h = t - (k - 1) as f64 * dt;
        if rates.iter().all(|&r| r == 0.0) {
            run.quiesced_at = Some((k - 1) as f64 * dt);
            break;
        }
        let mut switching = Vec::new();
        for (i, &r) in rates.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            if r * h >= 1.0 {
                return Err(SimError::InvalidParameter(format!(
                    "rate {r} of customer {i} times step {h} is not below 1"
                )));
            }
            if stream.uniform() < r * h {
                switching.push(i);
            }
        }
        if switching.is_empty() {
            continue;
        }
        let mut refresh = Vec::new();
        for &i in &switching {
            refresh.extend(market.switch_customer(i));
            run.events.push(SwitchEvent {
                time: t,
                customer: i,
                provider: market.subscription(i),
            });
        }
        for j in refresh {
            rates[j] = market.rate(j, params);
        }
        let (a, b) = market.shares();
        run.shares.push((t, a, b));
    }
    run.unhappy = rates.iter().filter(|&&r| r > 0.0).count() as i64;
    run.final_market = market;
    Ok(run)
}
