//! Cross-oracle verification suites.
//!
//! Each suite compares a fast structure or engine with a simple reference on
//! seeded inputs and reports one row per check. Reports contain no timings,
//! so the same seed always yields the same bytes.

use std::fmt;
use std::str::FromStr;

use crate::billiards::{self, GutterConfig, RunLimits};
use crate::circuitnet::{self, CircuitRelax, Evaluation, LoadClasses, Network, Policy, Traffic};
use crate::deposition::{self, DepositionRing, Substrate};
use crate::dispenser::{linear_scan_select, RateTree};
use crate::error::{Result, SimError};
use crate::ising::{self, IsingParams, KmcVariant, SpinLattice};
use crate::parallel::workloads::{levels_per_strip, Decoupled, Workload};
use crate::parallel::{cautious_run, lockstep_emulate, syncrelax_run};
use crate::rng::RandomStream;
use crate::telecom::{self, Delegation, Market, Plan, TelecomParams, UnhappyScan};
use crate::event::LazyCount;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Dispenser,
    Billiards,
    Deposition,
    Parallel,
    Ising,
    Telecom,
    Circuitnet,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Dispenser,
        Suite::Billiards,
        Suite::Deposition,
        Suite::Parallel,
        Suite::Ising,
        Suite::Telecom,
        Suite::Circuitnet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Dispenser => "dispenser",
            Suite::Billiards => "billiards",
            Suite::Deposition => "deposition",
            Suite::Parallel => "parallel",
            Suite::Ising => "ising",
            Suite::Telecom => "telecom",
            Suite::Circuitnet => "circuitnet",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| SimError::Config(format!("unknown suite '{s}'")))
    }
}

/// Deliberate defects, used to check that the suites notice them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Corrupts an internal node of the dispenser tree.
    DispenserTree,
}

impl FromStr for Fault {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dispenser" | "dispenser-tree" => Ok(Fault::DispenserTree),
            other => Err(SimError::Config(format!("unknown fault '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: Suite,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn suite_passed(&self, suite: Suite) -> bool {
        self.checks.iter().filter(|c| c.suite == suite).all(|c| c.passed)
    }

    /// `suite,check,result,detail` rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# seed {}\nsuite,check,result,detail\n", self.seed);
        for c in &self.checks {
            let result = if c.passed { "pass" } else { "fail" };
            out.push_str(&format!("{},{},{result},{}\n", c.suite, c.name, c.detail));
        }
        out
    }
}

struct Collector {
    suite: Suite,
    checks: Vec<Check>,
}

impl Collector {
    fn check(&mut self, name: &'static str, outcome: Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(Check {
            suite: self.suite,
            name,
            passed,
            detail: detail.replace(',', ";"),
        });
    }
}

pub fn run_suites(suites: &[Suite], seed: u64, fault: Option<Fault>) -> Report {
    let mut checks = Vec::new();
    for &suite in suites {
        let mut c = Collector {
            suite,
            checks: Vec::new(),
        };
        match suite {
            Suite::Dispenser => dispenser_suite(&mut c, seed, fault),
            Suite::Billiards => billiards_suite(&mut c, seed),
            Suite::Deposition => deposition_suite(&mut c, seed),
            Suite::Parallel => parallel_suite(&mut c, seed),
            Suite::Ising => ising_suite(&mut c, seed),
            Suite::Telecom => telecom_suite(&mut c, seed),
            Suite::Circuitnet => circuitnet_suite(&mut c, seed),
        }
        checks.extend(c.checks);
    }
    Report { seed, checks }
}

fn dispenser_suite(c: &mut Collector, seed: u64, fault: Option<Fault>) {
    let mut rng = RandomStream::new(seed, 100);
    c.check("tree-vs-scan", (|| {
        let mut mismatches = 0;
        let trials = 2000;
        for _ in 0..trials {
            let n = 1 + rng.below(256);
            let rates: Vec<f64> = (0..n).map(|_| if rng.uniform() < 0.2 { 0.0 } else { rng.uniform() * 10.0 }).collect();
            if rates.iter().all(|&r| r == 0.0) {
                continue;
            }
            let mut tree = RateTree::from_rates(&rates)?;
            if fault == Some(Fault::DispenserTree) {
                tree.inject_fault();
            }
            for _ in 0..5 {
                let q = rng.uniform();
                if tree.select_leaf(q)? != linear_scan_select(&rates, q)? {
                    mismatches += 1;
                }
            }
        }
        Ok((mismatches == 0, format!("{mismatches} mismatches")))
    })());
    c.check("root-consistency", (|| {
        let mut tree = RateTree::new(500);
        let mut leaves = vec![0.0; 500];
        for _ in 0..10_000 {
            let i = rng.below(500);
            let r = rng.uniform() * 3.0;
            tree.update(i, r)?;
            leaves[i] = r;
        }
        if fault == Some(Fault::DispenserTree) {
            tree.inject_fault();
        }
        let sum: f64 = leaves.iter().sum();
        let ok = tree.is_consistent(1e-9) && ((tree.leaves().iter().sum::<f64>() - sum).abs() <= 1e-9 * sum);
        Ok((ok, format!("leaf sum {sum:.6}")))
    })());
}

fn billiards_suite(c: &mut Collector, seed: u64) {
    c.check("lazy-vs-anticipatory", (|| {
        let mut events = 0;
        for k in 0..5 {
            let cfg = GutterConfig::random(30, 1.0, 90.0, seed.wrapping_add(k))?;
            let a = billiards::run_anticipatory(&cfg, RunLimits::horizon(40.0))?;
            let l = billiards::run_lazy(&cfg, RunLimits::horizon(40.0))?;
            if a.events != l.events || a.final_balls != l.final_balls {
                return Ok((false, format!("logs differ for configuration {k}")));
            }
            events += a.events.len();
        }
        Ok((true, format!("{events} identical collisions")))
    })());
    c.check("speeds-conserved", (|| {
        let cfg = GutterConfig::random(50, 1.0, 150.0, seed)?;
        let run = billiards::run_anticipatory(&cfg, RunLimits::horizon(60.0))?;
        let initial: Vec<billiards::Ball> = cfg.balls.iter().map(|&(x, v)| billiards::Ball::new(x, v)).collect();
        let ok = billiards::speed_multiset(&initial) == billiards::speed_multiset(&run.final_balls);
        Ok((ok, format!("{} collisions", run.events.len())))
    })());
    c.check("timedriven-convergence", (|| {
        let cfg = GutterConfig::random(10, 1.0, 40.0, seed)?;
        let reference = billiards::run_anticipatory(&cfg, RunLimits::horizon(5.0))?;
        let mut errors = Vec::new();
        for dt in [1e-2, 1e-3, 1e-4] {
            let run = billiards::run_timedriven(&cfg, dt, 5.0)?;
            let err = run
                .final_balls
                .iter()
                .zip(&reference.final_balls)
                .map(|(a, b)| (a.x - b.position_at(5.0)).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        let ok = errors.windows(2).all(|w| w[1] <= w[0]);
        Ok((ok, format!("max position errors {:.3e} {:.3e} {:.3e}", errors[0], errors[1], errors[2])))
    })());
}

fn deposition_suite(c: &mut Collector, seed: u64) {
    c.check("sectorized-vs-exhaustive", (|| {
        let mut sub = Substrate::new(50.0, 50)?;
        let mut rng = RandomStream::new(seed, 200);
        let mut mismatches = 0;
        for _ in 0..3000 {
            let x = rng.uniform() * 50.0;
            if sub.landing_height(x) != sub.landing_height_exhaustive(x) {
                mismatches += 1;
            }
            sub.deposit(x)?;
        }
        let overlaps = deposition::overlap_violations(sub.particles(), 50.0);
        let unsupported = deposition::unsupported(sub.particles(), 50.0);
        let ok = mismatches == 0 && overlaps == 0 && unsupported == 0;
        Ok((ok, format!("{mismatches} mismatches {overlaps} overlaps {unsupported} unsupported")))
    })());
    c.check("cautious-vs-lockstep", (|| {
        let ring = DepositionRing::new(10.0, 10, seed)?;
        let reference = lockstep_emulate(&ring, 40.0)?;
        for workers in [1, 2, 4] {
            if cautious_run(&ring, 40.0, workers)? != reference.events {
                return Ok((false, format!("{workers} workers differ")));
            }
        }
        Ok((true, format!("{} events; mean non-waiting {:.4}", reference.events.len(), reference.mean_non_waiting())))
    })());
}

fn parallel_suite(c: &mut Collector, seed: u64) {
    c.check("decoupled-one-iteration", (|| {
        let run = syncrelax_run(&Decoupled::new(16, 1.0, seed), 20.0, 4.0, 4, None)?;
        let ok = run.iterations.iter().all(|&i| i == 1);
        Ok((ok, format!("{} strips", run.strips.len())))
    })());
    c.check("relaxed-vs-sequential", (|| {
        let w = Workload::sprinkled(16, 1.0, seed);
        let reference = syncrelax_run(&w, 12.0, 3.0, 1, None)?;
        for workers in [2, 4, 16] {
            if syncrelax_run(&w, 12.0, 3.0, workers, None)?.trajectories != reference.trajectories {
                return Ok((false, format!("{workers} workers differ")));
            }
        }
        Ok((true, "2 4 16 workers identical".into()))
    })());
    c.check("iterations-within-levels", (|| {
        let w = Workload::sprinkled(16, 1.0, seed);
        let run = syncrelax_run(&w, 12.0, 3.0, 4, None)?;
        let levels = levels_per_strip(&run)?;
        let ok = run.iterations.iter().zip(&levels).all(|(i, l)| *i <= (*l).max(1));
        Ok((ok, format!("iterations {:?} levels {:?}", run.iterations, levels)))
    })());
}

fn ising_suite(c: &mut Collector, seed: u64) {
    c.check("ten-rate-classes", (|| {
        let params = IsingParams::new(2.0, 0.3)?;
        let mut table = ising::class_rates(&params)?.to_vec();
        table.sort_by(f64::total_cmp);
        table.dedup();
        Ok((table.len() <= 10, format!("{} distinct rates", table.len())))
    })());
    c.check("five-refreshes-per-flip", (|| {
        let lattice = SpinLattice::random(16, seed)?;
        let params = IsingParams::new(2.5, 0.0)?;
        let mut ok = true;
        let mut flips = 0;
        for variant in [KmcVariant::Tree, KmcVariant::Class] {
            let t = ising::run_dispenser_kmc(&lattice, &params, 2.0, &mut RandomStream::new(seed, 1), variant)?;
            ok &= t.rate_updates == 5 * t.flips() as u64
                && t.final_lattice.magnetization() == *t.magnetization.last().unwrap_or(&t.initial_magnetization);
            flips += t.flips();
        }
        Ok((ok, format!("{flips} flips")))
    })());
    c.check("spin-flip-symmetry", (|| {
        let lattice = SpinLattice::random(8, seed)?;
        let params = IsingParams::new(1.8, 0.0)?;
        let a = ising::run_dispenser_kmc(&lattice, &params, 5.0, &mut RandomStream::new(seed, 2), KmcVariant::Tree)?;
        let b = ising::run_dispenser_kmc(&lattice.negated(), &params, 5.0, &mut RandomStream::new(seed, 2), KmcVariant::Tree)?;
        let ok = a.magnetization.iter().zip(&b.magnetization).all(|(x, y)| *x == -*y)
            && a.magnetization.len() == b.magnetization.len();
        Ok((ok, format!("{} flips", a.flips())))
    })());
}

fn telecom_suite(c: &mut Collector, seed: u64) {
    let params = TelecomParams::new(
        Plan::friends_and_family(0.08, 0.30).expect("valid prices"),
        Plan::friends_and_family(0.12, 0.22).expect("valid prices"),
        0.05,
    )
    .expect("valid alpha");
    c.check("tree-vs-linear", (|| {
        let market = Market::random_sparse(300, 4.0, 120, seed)?;
        let a = telecom::run_event_driven(&market, &params, 40.0, &mut RandomStream::new(seed, 1), Delegation::Tree)?;
        let b = telecom::run_event_driven(&market, &params, 40.0, &mut RandomStream::new(seed, 1), Delegation::Linear)?;
        Ok((a.events == b.events, format!("{} switches", a.events.len())))
    })());
    c.check("maintained-state", (|| {
        let market = Market::random_sparse(300, 4.0, 120, seed)?;
        let run = telecom::run_event_driven(&market, &params, 40.0, &mut RandomStream::new(seed, 3), Delegation::Tree)?;
        let scan = UnhappyScan {
            market: &run.final_market,
            params: &params,
        }
        .lazy_count();
        let ok = run.unhappy == scan && run.final_market.tallies_consistent();
        Ok((ok, format!("unhappy {} scan {scan}", run.unhappy)))
    })());
}

fn circuitnet_suite(c: &mut Collector, seed: u64) {
    let net = Network::uniform(10, 20).expect("valid network");
    let traffic = Traffic::new(1.0, 18.0).expect("valid traffic");
    let scheme = LoadClasses::new(vec![0.8, 0.9]).expect("valid boundaries");
    c.check("lazy-vs-anticipatory", (|| {
        let mut decisions = 0;
        for policy in [Policy::Lba, Policy::Alba(scheme.clone())] {
            let a = circuitnet::run_network(&net, &traffic, &policy, Evaluation::Lazy, 40.0, seed)?;
            let b = circuitnet::run_network(&net, &traffic, &policy, Evaluation::Anticipatory, 40.0, seed)?;
            if a.decisions != b.decisions {
                return Ok((false, "decisions differ".into()));
            }
            decisions += a.decisions.len();
        }
        Ok((true, format!("{decisions} identical decisions")))
    })());
    c.check("relaxed-vs-sequential", (|| {
        let traffic = Traffic::new(0.5, 8.0)?;
        let model = CircuitRelax::new(net.clone(), traffic, Policy::Lba, seed, 20.0);
        let reference = circuitnet::run_network(&net, &traffic, &Policy::Lba, Evaluation::Lazy, 20.0, seed)?;
        let (run, relax) = circuitnet::run_network_relaxed(&model, 4.0, 4)?;
        let ok = run.decisions == reference.decisions;
        Ok((ok, format!("{} calls; {} blocked; iterations {:?}", run.total_offered(), run.total_blocked(), relax.iterations)))
    })());
}
