//! One-dimensional gutter billiards.
//!
//! Equal-mass balls of diameter `D(t) = D0 + g t` move on a line between two
//! walls. Three drivers are provided: a fixed-step time-driven baseline, an
//! event-driven anticipatory scheduler that keeps a prediction for every
//! contact, and an event-driven lazy scheduler that keeps a single event per
//! ball and uses advancement events for preempted partners.
//!
//! Contacts are numbered `0..=N`: contact 0 is ball 0 against the left wall,
//! contact `k` for `0 < k < N` is the pair `(k - 1, k)`, and contact `N` is the
//! last ball against the right wall. Simultaneous events are ordered by
//! contact index.
//!
//! Each ball stores its position at the instant of its last velocity change.
//! Predictions are evaluated from those base states only, so both event-driven
//! schedulers compute bit-identical event times.

use crate::error::{Result, SimError};
use crate::event::{timedriven_run, EventLog, EventQueue, EventTime, SimTime, TimeStepped};
use crate::rng::RandomStream;

/// Absolute tolerance for the no-overlap invariant.
pub const OVERLAP_TOLERANCE: f64 = 1e-9;

/// Closing speeds below this value at contact are treated as grazing.
const GRAZING_SPEED: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball {
    /// Center position at `last_update`.
    pub x: f64,
    pub v: f64,
    pub last_update: f64,
}

impl Ball {
    pub fn new(x: f64, v: f64) -> Self {
        Self {
            x,
            v,
            last_update: 0.0,
        }
    }

    pub fn position_at(&self, t: f64) -> f64 {
        self.x + self.v * (t - self.last_update)
    }

    /// Free motion to time `t`.
    pub fn free_advance(&mut self, t: f64) -> Result<()> {
        if t < self.last_update {
            return Err(SimError::TimeInPast {
                requested: t,
                last: self.last_update,
            });
        }
        self.x = self.position_at(t);
        self.last_update = t;
        Ok(())
    }
}

/// Velocity exchange of two equal-mass balls in contact.
pub fn resolve_collision(a: &mut Ball, b: &mut Ball) {
    std::mem::swap(&mut a.v, &mut b.v);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GutterConfig {
    /// Initial `(x, v)` per ball, ordered by position.
    pub balls: Vec<(f64, f64)>,
    /// Diameter at t = 0.
    pub d0: f64,
    /// Diameter growth rate; zero disables swelling.
    pub growth: f64,
    pub x_left: f64,
    pub x_right: f64,
}

impl GutterConfig {
    pub fn new(balls: Vec<(f64, f64)>, diameter: f64, x_left: f64, x_right: f64) -> Self {
        Self {
            balls,
            d0: diameter,
            growth: 0.0,
            x_left,
            x_right,
        }
    }

    /// `n` balls placed with uniformly random free spacings and velocities
    /// uniform in [-1, 1].
    pub fn random(n: usize, diameter: f64, width: f64, seed: u64) -> Result<Self> {
        let free = width - n as f64 * diameter;
        if !(free > 0.0) {
            return Err(SimError::InvalidParameter(format!(
                "{n} balls of diameter {diameter} do not fit in width {width}"
            )));
        }
        let mut rng = RandomStream::new(seed, 0);
        let spacings: Vec<f64> = (0..=n).map(|_| rng.exp(1.0)).collect::<Result<_>>()?;
        let total: f64 = spacings.iter().sum();
        let mut balls = Vec::with_capacity(n);
        let mut edge = 0.0;
        for s in spacings.iter().take(n) {
            edge += s / total * free;
            let x = edge + diameter / 2.0;
            edge += diameter;
            balls.push((x, 2.0 * rng.uniform() - 1.0));
        }
        Ok(Self::new(balls, diameter, 0.0, width))
    }

    pub fn with_growth(mut self, growth: f64) -> Self {
        self.growth = growth;
        self
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn diameter(&self, t: f64) -> f64 {
        self.d0 + self.growth * t
    }

    pub fn width(&self) -> f64 {
        self.x_right - self.x_left
    }

    /// Time at which the balls fill the gutter exactly; `None` without growth.
    pub fn jam_time(&self) -> Option<f64> {
        if self.growth > 0.0 && !self.balls.is_empty() {
            let n = self.balls.len() as f64;
            Some((self.width() - n * self.d0) / (n * self.growth))
        } else {
            None
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0) || !(self.growth >= 0.0) || !(self.x_right > self.x_left) {
            return Err(SimError::InvalidParameter(
                "gutter needs positive diameter, nonnegative growth and x_left < x_right".into(),
            ));
        }
        if self.balls.len() as f64 * self.d0 >= self.width() {
            return Err(SimError::InvalidParameter(
                "balls do not fit in the gutter".into(),
            ));
        }
        let balls: Vec<Ball> = self.balls.iter().map(|&(x, v)| Ball::new(x, v)).collect();
        for k in 0..=balls.len() {
            if !balls.is_empty() {
                let gap = contact_gap(self, &balls, k, 0.0);
                if gap < -OVERLAP_TOLERANCE {
                    return Err(overlap(self, k, 0.0, gap));
                }
            }
        }
        Ok(())
    }
}

/// Kind of a committed billiards event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CollisionKind {
    /// Balls `left` and `left + 1`.
    Pair { left: usize },
    Wall { ball: usize, side: Side },
    /// Ball moved to the instant of a discarded candidate event.
    Advance { ball: usize },
}

impl CollisionKind {
    fn contact(n: usize, k: usize) -> Self {
        if k == 0 {
            CollisionKind::Wall {
                ball: 0,
                side: Side::Left,
            }
        } else if k == n {
            CollisionKind::Wall {
                ball: n - 1,
                side: Side::Right,
            }
        } else {
            CollisionKind::Pair { left: k - 1 }
        }
    }

    /// Contact index, `None` for advancement events.
    pub fn contact_index(&self, n: usize) -> Option<usize> {
        match *self {
            CollisionKind::Pair { left } => Some(left + 1),
            CollisionKind::Wall {
                side: Side::Left, ..
            } => Some(0),
            CollisionKind::Wall {
                side: Side::Right, ..
            } => Some(n),
            CollisionKind::Advance { .. } => None,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            CollisionKind::Pair { .. } => "pair",
            CollisionKind::Wall { .. } => "wall",
            CollisionKind::Advance { .. } => "advance",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionEvent {
    pub time: f64,
    pub kind: CollisionKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    /// Horizon reached.
    Completed,
    /// Free length exhausted under swelling.
    Jammed { time: f64 },
    /// Collision budget used up before the horizon or jam.
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilliardsRun {
    /// Committed collisions in processing order.
    pub events: Vec<CollisionEvent>,
    /// Committed advancement events (lazy scheduler only).
    pub advancements: Vec<CollisionEvent>,
    /// Every advancement event ever scheduled, including superseded ones.
    pub scheduled_advancements: Vec<CollisionEvent>,
    /// State at `end_time`.
    pub final_balls: Vec<Ball>,
    pub end_time: f64,
    pub outcome: Outcome,
}

impl BilliardsRun {
    pub fn event_log(&self) -> EventLog {
        let mut log = EventLog::new(&["partner"]);
        let mut all: Vec<&CollisionEvent> =
            self.events.iter().chain(self.advancements.iter()).collect();
        all.sort_by(|a, b| a.time.total_cmp(&b.time));
        for e in all {
            let (subject, partner) = match e.kind {
                CollisionKind::Pair { left } => (left, (left + 1).to_string()),
                CollisionKind::Wall { ball, side } => (
                    ball,
                    match side {
                        Side::Left => "left-wall".to_string(),
                        Side::Right => "right-wall".to_string(),
                    },
                ),
                CollisionKind::Advance { ball } => (ball, String::new()),
            };
            log.push(e.time, subject, e.kind.label(), &[partner]);
        }
        log
    }

    pub fn final_state_csv(&self) -> String {
        let mut out = String::from("ball,x,v\n");
        for (i, b) in self.final_balls.iter().enumerate() {
            out.push_str(&format!("{i},{},{}\n", b.x, b.v));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunLimits {
    pub horizon: f64,
    /// Maximum number of committed collisions.
    pub max_events: Option<u64>,
}

impl RunLimits {
    pub fn horizon(horizon: f64) -> Self {
        Self {
            horizon,
            max_events: None,
        }
    }
}

fn overlap(cfg: &GutterConfig, k: usize, time: f64, gap: f64) -> SimError {
    let n = cfg.balls.len();
    let (left, right) = if k == 0 {
        (0, 0)
    } else if k == n {
        (n - 1, n - 1)
    } else {
        (k - 1, k)
    };
    SimError::Overlap {
        left,
        right,
        time,
        gap,
    }
}

/// Surface gap at contact `k` at time `t`.
fn contact_gap(cfg: &GutterConfig, balls: &[Ball], k: usize, t: f64) -> f64 {
    let n = balls.len();
    let d = cfg.diameter(t);
    if k == 0 {
        balls[0].position_at(t) - cfg.x_left - d / 2.0
    } else if k == n {
        cfg.x_right - d / 2.0 - balls[n - 1].position_at(t)
    } else {
        balls[k].position_at(t) - balls[k - 1].position_at(t) - d
    }
}

/// Rate at which contact `k` closes.
fn closing_speed(cfg: &GutterConfig, balls: &[Ball], k: usize) -> f64 {
    let n = balls.len();
    let g = cfg.growth;
    if k == 0 {
        g / 2.0 - balls[0].v
    } else if k == n {
        balls[n - 1].v + g / 2.0
    } else {
        balls[k - 1].v - balls[k].v + g
    }
}

/// Reference instant for contact `k`: the later of the base times involved.
fn reference_time(balls: &[Ball], k: usize) -> f64 {
    let n = balls.len();
    if k == 0 {
        balls[0].last_update
    } else if k == n {
        balls[n - 1].last_update
    } else {
        balls[k - 1].last_update.max(balls[k].last_update)
    }
}

/// Predicted time of contact `k`, or `None` if the contact is opening.
fn contact_time(cfg: &GutterConfig, balls: &[Ball], k: usize) -> Result<Option<f64>> {
    let tau = reference_time(balls, k);
    let mut gap = contact_gap(cfg, balls, k, tau);
    if gap < -OVERLAP_TOLERANCE {
        return Err(overlap(cfg, k, tau, gap));
    }
    gap = gap.max(0.0);
    let closing = closing_speed(cfg, balls, k);
    if closing <= 0.0 || (gap == 0.0 && closing < GRAZING_SPEED) {
        return Ok(None);
    }
    Ok(Some(tau + gap / closing))
}

/// Collision time of adjacent balls `i` (left) and `j` (right).
///
/// The gap and closing speed are evaluated at the later of the two update
/// times; swelling adds `g` to the closing speed.
pub fn predict_pair_collision(bi: &Ball, bj: &Ball, cfg: &GutterConfig) -> Result<EventTime> {
    let tau = bi.last_update.max(bj.last_update);
    let gap = bj.position_at(tau) - bi.position_at(tau) - cfg.diameter(tau);
    if gap < -OVERLAP_TOLERANCE {
        return Err(SimError::Overlap {
            left: 0,
            right: 1,
            time: tau,
            gap,
        });
    }
    let closing = bi.v - bj.v + cfg.growth;
    if closing <= 0.0 {
        return Ok(EventTime::Never);
    }
    EventTime::at(tau + gap.max(0.0) / closing)
}

/// Shared mutable state of both event-driven schedulers.
struct Gutter<'a> {
    cfg: &'a GutterConfig,
    balls: Vec<Ball>,
    events: Vec<CollisionEvent>,
    jam_time: Option<f64>,
}

impl<'a> Gutter<'a> {
    fn new(cfg: &'a GutterConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            balls: cfg.balls.iter().map(|&(x, v)| Ball::new(x, v)).collect(),
            events: Vec::new(),
            jam_time: cfg.jam_time(),
        })
    }

    fn n(&self) -> usize {
        self.balls.len()
    }

    fn predict(&self, k: usize, now: f64) -> Result<Option<f64>> {
        Ok(contact_time(self.cfg, &self.balls, k)?.map(|t| t.max(now)))
    }

    fn is_jammed(&self, t: f64) -> bool {
        match self.jam_time {
            Some(tj) => {
                let free = self.cfg.width() - self.n() as f64 * self.cfg.diameter(t);
                t >= tj || free <= OVERLAP_TOLERANCE
            }
            None => false,
        }
    }

    /// Applies the collision at contact `k` at time `t`.
    fn resolve(&mut self, k: usize, t: f64) -> Result<()> {
        let n = self.n();
        let g = self.cfg.growth;
        if k == 0 {
            self.balls[0].free_advance(t)?;
            self.balls[0].v = g - self.balls[0].v;
        } else if k == n {
            self.balls[n - 1].free_advance(t)?;
            self.balls[n - 1].v = -self.balls[n - 1].v - g;
        } else {
            let (lo, hi) = self.balls.split_at_mut(k);
            let (a, b) = (&mut lo[k - 1], &mut hi[0]);
            a.free_advance(t)?;
            b.free_advance(t)?;
            if g == 0.0 {
                resolve_collision(a, b);
            } else {
                let (va, vb) = (a.v, b.v);
                a.v = vb - g;
                b.v = va + g;
            }
        }
        for kk in k.saturating_sub(1)..=(k + 1).min(n) {
            let gap = contact_gap(self.cfg, &self.balls, kk, t);
            if gap < -OVERLAP_TOLERANCE {
                return Err(overlap(self.cfg, kk, t, gap));
            }
        }
        self.events.push(CollisionEvent {
            time: t,
            kind: CollisionKind::contact(n, k),
        });
        Ok(())
    }

    fn finish(
        self,
        end_time: f64,
        outcome: Outcome,
        advancements: (Vec<CollisionEvent>, Vec<CollisionEvent>),
    ) -> BilliardsRun {
        let final_balls = self
            .balls
            .iter()
            .map(|b| Ball {
                x: b.position_at(end_time),
                v: b.v,
                last_update: end_time,
            })
            .collect();
        BilliardsRun {
            events: self.events,
            advancements: advancements.0,
            scheduled_advancements: advancements.1,
            final_balls,
            end_time,
            outcome,
        }
    }

    /// Stop check before committing a contact event at `t`.
    fn stop_before(&self, t: f64, limits: &RunLimits, last: f64) -> Option<(f64, Outcome)> {
        if t > limits.horizon {
            return Some((limits.horizon, Outcome::Completed));
        }
        if self.is_jammed(t) {
            return Some((t, Outcome::Jammed { time: t }));
        }
        if let Some(max) = limits.max_events {
            if self.events.len() as u64 >= max {
                return Some((last, Outcome::BudgetExhausted));
            }
        }
        None
    }
}

fn sim_time(t: f64) -> Result<SimTime> {
    SimTime::new(t)
}

/// Event-driven run keeping one prediction per contact.
///
/// After a collision only the contacts touching the two involved balls are
/// re-predicted; the others keep their (still valid) next-best predictions.
pub fn run_anticipatory(cfg: &GutterConfig, limits: RunLimits) -> Result<BilliardsRun> {
    let mut gutter = Gutter::new(cfg)?;
    let n = gutter.n();
    if n == 0 {
        return Ok(gutter.finish(limits.horizon, Outcome::Completed, Default::default()));
    }
    let mut version = vec![0u64; n + 1];
    let mut queue: EventQueue<u64> = EventQueue::new();
    for k in 0..=n {
        if let Some(t) = gutter.predict(k, 0.0)? {
            queue.schedule(sim_time(t)?, k, 0)?;
        }
    }
    let mut last = 0.0;
    while let Some(e) = queue.pop_min() {
        let k = e.subject;
        if e.payload != version[k] {
            continue;
        }
        let t = e.time.value();
        if let Some((end, outcome)) = gutter.stop_before(t, &limits, last) {
            return Ok(gutter.finish(end, outcome, Default::default()));
        }
        gutter.resolve(k, t)?;
        last = t;
        #[allow(clippy::needless_range_loop)]
        for kk in k.saturating_sub(1)..=(k + 1).min(n) {
            version[kk] += 1;
            if let Some(tp) = gutter.predict(kk, t)? {
                queue.schedule(sim_time(tp)?, kk, version[kk])?;
            }
        }
    }
    Ok(gutter.finish(limits.horizon, Outcome::Completed, Default::default()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Idle,
    Contact { time: f64, k: usize },
    Advance { time: f64, k: usize },
}

impl Slot {
    fn key(&self) -> Option<(f64, usize)> {
        match *self {
            Slot::Idle => None,
            Slot::Contact { time, k } | Slot::Advance { time, k } => Some((time, k)),
        }
    }
}

fn key_le(a: (f64, usize), b: (f64, usize)) -> bool {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Equal => a.1 <= b.1,
        std::cmp::Ordering::Greater => false,
    }
}

struct LazyScheduler<'a> {
    gutter: Gutter<'a>,
    slots: Vec<Slot>,
    version: Vec<u64>,
    queue: EventQueue<(usize, u64)>,
    advancements: Vec<CollisionEvent>,
    scheduled_advancements: Vec<CollisionEvent>,
}

impl LazyScheduler<'_> {
    fn take_advancements(&mut self) -> (Vec<CollisionEvent>, Vec<CollisionEvent>) {
        (
            std::mem::take(&mut self.advancements),
            std::mem::take(&mut self.scheduled_advancements),
        )
    }

    fn partner(&self, b: usize, k: usize) -> Option<usize> {
        let n = self.gutter.n();
        if k == 0 || k == n {
            None
        } else if k == b {
            Some(b - 1)
        } else {
            Some(b + 1)
        }
    }

    fn set_slot(&mut self, b: usize, slot: Slot) -> Result<()> {
        self.slots[b] = slot;
        self.version[b] += 1;
        if let Slot::Advance { time, .. } = slot {
            self.scheduled_advancements.push(CollisionEvent {
                time,
                kind: CollisionKind::Advance { ball: b },
            });
        }
        if let Some((t, k)) = slot.key() {
            self.queue.schedule(sim_time(t)?, k, (b, self.version[b]))?;
        }
        Ok(())
    }

    /// Picks the earliest admissible candidate of ball `b` (its left and right
    /// contacts). A pair candidate is admissible when it is not later than the
    /// partner's current event; claiming it demotes the partner's previous
    /// partner to an advancement event.
    fn schedule(&mut self, b: usize, now: f64) -> Result<()> {
        let mut best: Option<(f64, usize)> = None;
        for k in [b, b + 1] {
            let Some(t) = self.gutter.predict(k, now)? else {
                continue;
            };
            if let Some(p) = self.partner(b, k) {
                if let Some(pk) = self.slots[p].key() {
                    if !key_le((t, k), pk) {
                        continue;
                    }
                }
            }
            if best.is_none_or(|bk| key_le((t, k), bk) && (t, k) != bk) {
                best = Some((t, k));
            }
        }
        let chosen = match best {
            Some((time, k)) => Slot::Contact { time, k },
            None => Slot::Idle,
        };
        let old = self.slots[b];
        if old == chosen {
            return Ok(());
        }
        if let Slot::Contact { time: old_t, k: old_k } = old {
            if let Some(q) = self.partner(b, old_k) {
                self.set_slot(q, Slot::Advance { time: old_t, k: old_k })?;
            }
        }
        self.set_slot(b, chosen)?;
        let Some((t, k)) = best else {
            return Ok(());
        };
        if let Some(p) = self.partner(b, k) {
            if self.slots[p] != (Slot::Contact { time: t, k }) {
                if let Slot::Contact { time: old_t, k: old_k } = self.slots[p] {
                    if let Some(q) = self.partner(p, old_k) {
                        self.set_slot(q, Slot::Advance { time: old_t, k: old_k })?;
                    }
                }
                self.set_slot(p, Slot::Contact { time: t, k })?;
            }
        }
        Ok(())
    }
}

/// Event-driven run keeping a single scheduled event per ball.
pub fn run_lazy(cfg: &GutterConfig, limits: RunLimits) -> Result<BilliardsRun> {
    let gutter = Gutter::new(cfg)?;
    let n = gutter.n();
    if n == 0 {
        return Ok(gutter.finish(limits.horizon, Outcome::Completed, Default::default()));
    }
    let mut s = LazyScheduler {
        gutter,
        slots: vec![Slot::Idle; n],
        version: vec![0; n],
        queue: EventQueue::new(),
        advancements: Vec::new(),
        scheduled_advancements: Vec::new(),
    };
    for b in 0..n {
        s.schedule(b, 0.0)?;
    }
    let mut last = 0.0;
    while let Some(e) = s.queue.pop_min() {
        let (b, ver) = e.payload;
        if ver != s.version[b] {
            continue;
        }
        let t = e.time.value();
        match s.slots[b] {
            Slot::Idle => continue,
            Slot::Advance { .. } => {
                if t > limits.horizon {
                    let adv = s.take_advancements();
                    return Ok(s.gutter.finish(limits.horizon, Outcome::Completed, adv));
                }
                s.advancements.push(CollisionEvent {
                    time: t,
                    kind: CollisionKind::Advance { ball: b },
                });
                s.slots[b] = Slot::Idle;
                s.schedule(b, t)?;
            }
            Slot::Contact { k, .. } => {
                if let Some((end, outcome)) = s.gutter.stop_before(t, &limits, last) {
                    let adv = s.take_advancements();
                    return Ok(s.gutter.finish(end, outcome, adv));
                }
                s.gutter.resolve(k, t)?;
                last = t;
                if k == 0 || k == n {
                    s.set_slot(b, Slot::Idle)?;
                    s.schedule(b, t)?;
                } else {
                    s.set_slot(k - 1, Slot::Idle)?;
                    s.set_slot(k, Slot::Idle)?;
                    s.schedule(k - 1, t)?;
                    s.schedule(k, t)?;
                }
            }
        }
    }
    let adv = s.take_advancements();
    Ok(s.gutter.finish(limits.horizon, Outcome::Completed, adv))
}

/// Fixed-step gutter: free motion for `dt`, then velocity exchange for every
/// contact whose gap turned negative while still closing.
pub struct TimeDrivenGutter<'a> {
    cfg: &'a GutterConfig,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub events: Vec<CollisionEvent>,
}

impl<'a> TimeDrivenGutter<'a> {
    pub fn new(cfg: &'a GutterConfig) -> Self {
        Self {
            cfg,
            x: cfg.balls.iter().map(|b| b.0).collect(),
            v: cfg.balls.iter().map(|b| b.1).collect(),
            events: Vec::new(),
        }
    }
}

impl TimeStepped for TimeDrivenGutter<'_> {
    fn advance(&mut self, dt: f64) {
        for (x, v) in self.x.iter_mut().zip(&self.v) {
            *x += v * dt;
        }
    }

    fn detect_and_resolve(&mut self, t: f64) {
        let n = self.x.len();
        if n == 0 {
            return;
        }
        let g = self.cfg.growth;
        let d = self.cfg.diameter(t);
        if self.x[0] - self.cfg.x_left - d / 2.0 < 0.0 && g / 2.0 - self.v[0] > 0.0 {
            self.v[0] = g - self.v[0];
            self.events.push(CollisionEvent {
                time: t,
                kind: CollisionKind::contact(n, 0),
            });
        }
        for k in 1..n {
            if self.x[k] - self.x[k - 1] - d < 0.0 && self.v[k - 1] - self.v[k] + g > 0.0 {
                let (va, vb) = (self.v[k - 1], self.v[k]);
                self.v[k - 1] = vb - g;
                self.v[k] = va + g;
                self.events.push(CollisionEvent {
                    time: t,
                    kind: CollisionKind::contact(n, k),
                });
            }
        }
        if self.cfg.x_right - d / 2.0 - self.x[n - 1] < 0.0 && self.v[n - 1] + g / 2.0 > 0.0 {
            self.v[n - 1] = -self.v[n - 1] - g;
            self.events.push(CollisionEvent {
                time: t,
                kind: CollisionKind::contact(n, n),
            });
        }
    }
}

/// Time-driven baseline run to `horizon`.
pub fn run_timedriven(cfg: &GutterConfig, dt: f64, horizon: f64) -> Result<BilliardsRun> {
    cfg.validate()?;
    let mut model = TimeDrivenGutter::new(cfg);
    timedriven_run(&mut model, dt, horizon)?;
    let final_balls = model
        .x
        .iter()
        .zip(&model.v)
        .map(|(&x, &v)| Ball {
            x,
            v,
            last_update: horizon,
        })
        .collect();
    Ok(BilliardsRun {
        events: model.events,
        advancements: Vec::new(),
        scheduled_advancements: Vec::new(),
        final_balls,
        end_time: horizon,
        outcome: Outcome::Completed,
    })
}

/// Per-contact collision counts of a run; the comparison key between
/// time-driven and event-driven logs.
pub fn contact_counts(run: &BilliardsRun, n: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n + 1];
    for e in &run.events {
        if let Some(k) = e.kind.contact_index(n) {
            counts[k] += 1;
        }
    }
    counts
}

/// Sorted multiset of ball speeds, the quantity conserved without swelling
/// (pair collisions permute velocities, wall bounces flip signs).
pub fn speed_multiset(balls: &[Ball]) -> Vec<f64> {
    let mut s: Vec<f64> = balls.iter().map(|b| b.v.abs()).collect();
    s.sort_by(f64::total_cmp);
    s
}

/// Smallest contact gap of a state at its update time.
pub fn min_gap(cfg: &GutterConfig, balls: &[Ball], t: f64) -> f64 {
    (0..=balls.len())
        .filter(|_| !balls.is_empty())
        .map(|k| contact_gap(cfg, balls, k, t))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_ball(x: f64, v: f64) -> GutterConfig {
        GutterConfig::new(vec![(x, v)], 1.0, 0.0, 10.0)
    }

    #[test]
    fn free_advance_examples() {
        let mut b = Ball::new(0.0, 1.0);
        b.free_advance(1.0).unwrap();
        assert_eq!(b.x, 1.0);
        let mut still = Ball::new(3.0, 0.0);
        still.free_advance(7.5).unwrap();
        assert_eq!(still.x, 3.0);
        let mut twice = Ball::new(0.5, 0.25);
        twice.free_advance(1.0).unwrap();
        twice.free_advance(3.0).unwrap();
        let mut once = Ball::new(0.5, 0.25);
        once.free_advance(3.0).unwrap();
        assert_eq!(twice.x, once.x);
        assert!(matches!(
            once.free_advance(1.0),
            Err(SimError::TimeInPast { .. })
        ));
    }

    #[test]
    fn head_on_prediction() {
        let cfg = GutterConfig::new(vec![], 1.0, -10.0, 10.0);
        let a = Ball::new(0.0, 1.0);
        let b = Ball::new(3.0, -1.0);
        assert_eq!(predict_pair_collision(&a, &b, &cfg).unwrap(), EventTime::at(1.0).unwrap());
        let c = Ball::new(3.0, 1.0);
        assert_eq!(predict_pair_collision(&a, &c, &cfg).unwrap(), EventTime::Never);
        let overlapping = Ball::new(0.5, -1.0);
        assert!(predict_pair_collision(&a, &overlapping, &cfg).is_err());
    }

    #[test]
    fn prediction_matches_bisection() {
        let mut rng = RandomStream::new(17, 0);
        let cfg = GutterConfig::new(vec![], 1.0, -1e6, 1e6).with_growth(0.0);
        let swelling = GutterConfig::new(vec![], 1.0, -1e6, 1e6).with_growth(0.3);
        for trial in 0..1000 {
            let c = if trial % 2 == 0 { &cfg } else { &swelling };
            let xi = rng.uniform() * 10.0;
            let gap0 = rng.uniform() * 5.0;
            let vi = rng.uniform() * 4.0 - 2.0;
            let vj = rng.uniform() * 4.0 - 2.0;
            let a = Ball::new(xi, vi);
            let b = Ball::new(xi + 1.0 + gap0, vj);
            let gap = |t: f64| b.position_at(t) - a.position_at(t) - c.diameter(t);
            match predict_pair_collision(&a, &b, c).unwrap() {
                EventTime::Never => assert!(vi - vj + c.growth <= 0.0),
                EventTime::At(t) => {
                    let (mut lo, mut hi) = (0.0, 1.0);
                    while gap(hi) > 0.0 {
                        hi *= 2.0;
                    }
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if gap(mid) > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    assert!((t.value() - 0.5 * (lo + hi)).abs() < 1e-10 * t.value().max(1.0));
                }
            }
        }
    }

    #[test]
    fn velocity_exchange() {
        let mut a = Ball::new(0.0, 2.0);
        let mut b = Ball::new(1.0, -3.0);
        resolve_collision(&mut a, &mut b);
        assert_eq!((a.v, b.v), (-3.0, 2.0));
        let mut c = Ball::new(0.0, 1.5);
        let mut d = Ball::new(1.0, 1.5);
        resolve_collision(&mut c, &mut d);
        assert_eq!((c.v, d.v), (1.5, 1.5));
        let (p0, e0) = (a.v + b.v, a.v * a.v + b.v * b.v);
        resolve_collision(&mut a, &mut b);
        assert_eq!((a.v + b.v, a.v * a.v + b.v * b.v), (p0, e0));
    }

    #[test]
    fn single_ball_wall_period() {
        let cfg = one_ball(5.0, 1.0);
        let run = run_anticipatory(&cfg, RunLimits::horizon(100.0)).unwrap();
        let times: Vec<f64> = run.events.iter().map(|e| e.time).collect();
        // Travel length between walls is width - D = 9, period 18.
        assert_eq!(times[0], 4.5);
        assert_eq!(times[1], 13.5);
        assert_eq!(times[2], 22.5);
        for w in run.events.windows(3) {
            assert_eq!(w[2].time - w[0].time, 18.0);
            assert_ne!(w[0].kind, w[1].kind);
        }
        let lazy = run_lazy(&cfg, RunLimits::horizon(100.0)).unwrap();
        assert_eq!(lazy.events, run.events);
        assert!(lazy.scheduled_advancements.is_empty());
    }

    #[test]
    fn empty_gutter_is_noop() {
        let cfg = GutterConfig::new(vec![], 1.0, 0.0, 10.0);
        assert!(run_anticipatory(&cfg, RunLimits::horizon(5.0)).unwrap().events.is_empty());
        assert!(run_lazy(&cfg, RunLimits::horizon(5.0)).unwrap().events.is_empty());
        assert!(run_timedriven(&cfg, 0.1, 5.0).unwrap().events.is_empty());
    }

    #[test]
    fn three_ball_preemption_gives_advancement() {
        // Ball 0 and ball 1 would meet at t=4; ball 2 arrives at ball 1 at t=1.
        let cfg = GutterConfig::new(
            vec![(10.0, 0.5), (19.0, 0.0), (22.0, -2.0)],
            1.0,
            0.0,
            100.0,
        );
        let lazy = run_lazy(&cfg, RunLimits::horizon(3.0)).unwrap();
        // Ball 0 schedules its pair with ball 1 first (t=16), then ball 2
        // claims ball 1 at t=1 and ball 0 is demoted to an advancement.
        assert_eq!(lazy.events[0].kind, CollisionKind::Pair { left: 1 });
        assert_eq!(lazy.events[0].time, 1.0);
        assert!(!lazy.scheduled_advancements.is_empty());
        assert!(lazy
            .scheduled_advancements
            .iter()
            .all(|a| a.kind == CollisionKind::Advance { ball: 0 }));
        let anticipatory = run_anticipatory(&cfg, RunLimits::horizon(3.0)).unwrap();
        assert_eq!(lazy.events, anticipatory.events);
    }

    #[test]
    fn preempted_partner_advanced_at_old_time() {
        let cfg = GutterConfig::new(
            vec![(10.0, 0.5), (19.0, 0.0), (22.0, -2.0)],
            1.0,
            0.0,
            100.0,
        );
        let lazy = run_lazy(&cfg, RunLimits::horizon(20.0)).unwrap();
        let old_t = (19.0 - 10.0 - 1.0) / 0.5;
        assert_eq!(
            lazy.scheduled_advancements[0],
            CollisionEvent {
                time: old_t,
                kind: CollisionKind::Advance { ball: 0 }
            }
        );
    }

    #[test]
    fn figure_one_topology() {
        // Balls 0-1 collide, ball 3 bounces off the right wall, and together
        // these cause the 2-3 collision.
        let cfg = GutterConfig::new(
            vec![(1.0, 0.0), (2.4, -1.0), (6.0, 1.0), (8.4, 1.0)],
            1.0,
            -10.0,
            10.0,
        );
        let run = run_anticipatory(&cfg, RunLimits::horizon(2.4)).unwrap();
        let kinds: Vec<CollisionKind> = run.events.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![
                CollisionKind::Pair { left: 0 },
                CollisionKind::Wall {
                    ball: 3,
                    side: Side::Right
                },
                CollisionKind::Pair { left: 2 },
            ]
        );
        let t_wall = run.events[1].time;
        let b2 = Ball::new(6.0, 1.0);
        let b3 = Ball {
            x: 8.4 + t_wall,
            v: -1.0,
            last_update: t_wall,
        };
        let t = predict_pair_collision(&b2, &b3, &cfg).unwrap();
        assert_eq!(t, EventTime::at(run.events[2].time).unwrap());
        assert!((run.events[2].time - 1.8).abs() < 1e-12);
        let td = run_timedriven(&cfg, 1e-4, 2.4).unwrap();
        let td_kinds: Vec<CollisionKind> = td.events.iter().map(|e| e.kind).collect();
        assert_eq!(td_kinds, kinds, "{:?}", td.events);
    }

    #[test]
    fn schedulers_agree_on_random_gutters() {
        for seed in 0..20 {
            let cfg = GutterConfig::random(30, 1.0, 60.0, seed).unwrap();
            let a = run_anticipatory(&cfg, RunLimits::horizon(50.0)).unwrap();
            let l = run_lazy(&cfg, RunLimits::horizon(50.0)).unwrap();
            assert!(!a.events.is_empty());
            assert_eq!(a.events, l.events, "seed {seed}");
            assert_eq!(a.final_balls, l.final_balls);
            let initial: Vec<Ball> = cfg.balls.iter().map(|&(x, v)| Ball::new(x, v)).collect();
            assert_eq!(speed_multiset(&a.final_balls), speed_multiset(&initial));
            assert!(min_gap(&cfg, &a.final_balls, 50.0) >= -OVERLAP_TOLERANCE);
        }
    }

    #[test]
    fn timedriven_single_ball_free_motion() {
        let cfg = GutterConfig::new(vec![(2.0, 1.0)], 1.0, 0.0, 100.0);
        let run = run_timedriven(&cfg, 0.1, 1.0).unwrap();
        assert!((run.final_balls[0].x - 3.0).abs() < 1e-12);
        assert!(run_timedriven(&cfg, 0.0, 1.0).is_err());
    }

    #[test]
    fn timedriven_head_on_swaps_on_contact_step() {
        let cfg = GutterConfig::new(vec![(0.0, 1.0), (3.0, -1.0)], 1.0, -50.0, 50.0);
        let run = run_timedriven(&cfg, 0.3, 1.5).unwrap();
        // Contact at t=1 falls in the step (0.9, 1.2].
        assert_eq!(run.events.len(), 1);
        assert!((run.events[0].time - 1.2).abs() < 1e-12);
        assert_eq!(run.final_balls[0].v, -1.0);
        assert_eq!(run.final_balls[1].v, 1.0);
        // A coarse step overshooting the gap still detects the contact.
        let coarse = run_timedriven(&cfg, 2.0, 2.0).unwrap();
        assert_eq!(coarse.events.len(), 1);
    }

    #[test]
    fn swelling_reaches_jam() {
        let cfg = GutterConfig::random(8, 0.5, 10.0, 3).unwrap().with_growth(0.05);
        let tj = cfg.jam_time().unwrap();
        let limits = RunLimits {
            horizon: 1e6,
            max_events: Some(2_000_000),
        };
        let a = run_anticipatory(&cfg, limits).unwrap();
        match a.outcome {
            Outcome::Jammed { time } => assert!(time <= tj + 1e-9),
            Outcome::BudgetExhausted => {}
            Outcome::Completed => panic!("swelling run must not complete"),
        }
        let l = run_lazy(&cfg, limits).unwrap();
        assert_eq!(a.events, l.events);
        assert_eq!(a.outcome, l.outcome);
    }

    #[test]
    fn rejects_overlapping_initial_state() {
        let cfg = GutterConfig::new(vec![(1.0, 0.0), (1.5, 0.0)], 1.0, 0.0, 10.0);
        assert!(matches!(
            run_anticipatory(&cfg, RunLimits::horizon(1.0)),
            Err(SimError::Overlap { .. })
        ));
    }
}
