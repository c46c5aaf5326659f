//! Exact sample-path constructions of many-server Markovian queues.
//!
//! Three constructions are provided:
//!
//! * [`construct_time_change`]: arrivals, service completions and
//!   abandonments are unit-rate Poisson streams run on the random clocks
//!   `λt`, `μ∫(Q∧n)` and `θ∫(Q−n)⁺`;
//! * [`construct_thinning`]: one rate-μ stream per occupied server level,
//!   thinned by the indicator `1{Q(s−) ≥ k}`;
//! * [`construct_service_times`]: explicit arrival and service times for the
//!   infinite-server queue with arbitrary service laws.
//!
//! The first two produce the same law for identical specs; the third is the
//! only one that supports non-exponential service.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::dist::{InitialLaw, Law};
use crate::error::{domain, invalid, Error, Result};
use crate::paths::{Cadlag, LinearPath, StepPath};
use crate::rng::{StreamRole, StreamSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `M/M/∞`; `n` is only the scale index.
    InfiniteServer,
    /// `M/M/n+M` with unlimited waiting room.
    ErlangA,
    /// `M/M/n/m_n+M`.
    FiniteRoom,
    /// `G/M/n/m_n+M`: renewal arrivals, Markovian service and abandonment.
    GeneralArrival,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalLaw {
    Poisson,
    /// Renewal arrivals whose interarrival times follow this law rescaled to
    /// mean `1/λ`; the shape (and so the squared coefficient of variation) is
    /// kept.
    Renewal(Law),
}

impl ArrivalLaw {
    /// Squared coefficient of variation of the interarrival times.
    pub fn scv(&self) -> f64 {
        match self {
            ArrivalLaw::Poisson => 1.0,
            ArrivalLaw::Renewal(law) => law.scv(),
        }
    }
}

/// Parameters of one queue in the sequence indexed by `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub n: u64,
    pub mu: f64,
    pub theta: f64,
    pub lambda: f64,
    /// Waiting-room size `m_n`; `None` is unlimited.
    pub room: Option<u64>,
    pub arrival: ArrivalLaw,
    pub service: Law,
    pub initial_service: Law,
    pub initial: InitialLaw,
}

impl ModelSpec {
    fn base(family: Family, n: u64, mu: f64, theta: f64, lambda: f64, room: Option<u64>) -> Self {
        ModelSpec {
            family,
            n,
            mu,
            theta,
            lambda,
            room,
            arrival: ArrivalLaw::Poisson,
            service: Law::exponential(mu),
            initial_service: Law::exponential(mu),
            initial: InitialLaw::Fixed(n),
        }
    }

    pub fn infinite_server(n: u64, mu: f64, lambda: f64) -> Self {
        Self::base(Family::InfiniteServer, n, mu, 0.0, lambda, None)
    }

    pub fn erlang_a(n: u64, mu: f64, theta: f64, lambda: f64) -> Self {
        Self::base(Family::ErlangA, n, mu, theta, lambda, None)
    }

    pub fn finite_room(n: u64, mu: f64, theta: f64, lambda: f64, room: u64) -> Self {
        Self::base(Family::FiniteRoom, n, mu, theta, lambda, Some(room))
    }

    pub fn general_arrival(
        n: u64,
        mu: f64,
        theta: f64,
        lambda: f64,
        room: Option<u64>,
        interarrival: Law,
    ) -> Self {
        let mut s = Self::base(Family::GeneralArrival, n, mu, theta, lambda, room);
        s.arrival = ArrivalLaw::Renewal(interarrival);
        s
    }

    pub fn with_initial(mut self, initial: InitialLaw) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_service(mut self, service: Law, initial_service: Law) -> Self {
        self.service = service;
        self.initial_service = initial_service;
        self
    }

    pub fn with_arrival(mut self, arrival: ArrivalLaw) -> Self {
        self.arrival = arrival;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(invalid("mu", format!("{} is not a positive rate", self.mu)));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(invalid("theta", format!("{} is negative", self.theta)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid(
                "lambda_n",
                format!("{} is not a positive rate", self.lambda),
            ));
        }
        match self.family {
            Family::InfiniteServer if self.room.is_some() => {
                return Err(invalid("m_n", "infinite-server model has no waiting room"));
            }
            Family::ErlangA if self.room.is_some() => {
                return Err(invalid("m_n", "Erlang A has an unlimited waiting room"));
            }
            Family::FiniteRoom if self.room.is_none() => {
                return Err(invalid("m_n", "finite-room model needs a room size"));
            }
            _ => {}
        }
        match (self.family, self.arrival) {
            (Family::GeneralArrival, ArrivalLaw::Poisson) => {}
            (Family::GeneralArrival, ArrivalLaw::Renewal(law)) => law.validate("arrival")?,
            (Family::InfiniteServer, ArrivalLaw::Renewal(law)) => law.validate("arrival")?,
            (_, ArrivalLaw::Renewal(_)) => {
                return Err(invalid("arrival", "renewal arrivals need the general-arrival family"));
            }
            _ => {}
        }
        self.service.validate("service")?;
        self.initial_service.validate("initial_service")?;
        self.initial.validate()?;
        if let (Some(cap), InitialLaw::Fixed(q0)) = (self.capacity(), self.initial) {
            if q0 > cap {
                return Err(invalid(
                    "initial",
                    format!("Q(0) = {q0} exceeds capacity {cap}"),
                ));
            }
        }
        Ok(())
    }

    /// Number of servers; `None` for the infinite-server model.
    pub fn servers(&self) -> Option<u64> {
        match self.family {
            Family::InfiniteServer => None,
            _ => Some(self.n),
        }
    }

    /// System capacity `n + m_n`, if finite.
    pub fn capacity(&self) -> Option<u64> {
        match (self.servers(), self.room) {
            (Some(n), Some(m)) => Some(n + m),
            _ => None,
        }
    }

    /// Number of busy servers `Q ∧ n` at content `q`.
    pub fn busy(&self, q: f64) -> f64 {
        match self.servers() {
            Some(n) => q.min(n as f64),
            None => q,
        }
    }

    /// Number waiting `(Q − n)⁺` at content `q`.
    pub fn waiting(&self, q: f64) -> f64 {
        match self.servers() {
            Some(n) => (q - n as f64).max(0.0),
            None => 0.0,
        }
    }

    fn markovian_check(&self) -> Result<()> {
        if !self.service.is_exponential() {
            return Err(Error::Unsupported(
                "Markovian constructions need exponential service".to_string(),
            ));
        }
        if let Law::Exponential { rate } = self.service {
            if rate != self.mu {
                return Err(invalid("service", "exponential service rate must equal mu"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Construction {
    TimeChange,
    Thinning,
    ServiceTimes,
}

/// Event types; the declaration order is the tie-breaking order for
/// simultaneous events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Arrival,
    Departure,
    Abandonment,
    Blocked,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Departure => "departure",
            EventKind::Abandonment => "abandonment",
            EventKind::Blocked => "blocked",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub q_after: u64,
}

/// Arrival and service times behind a service-times realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRecord {
    /// Service times `η̄_i` of the customers present at time 0.
    pub initial_service: Vec<f64>,
    /// Arrival epochs `τ_i` in `(0, T]`.
    pub arrival_times: Vec<f64>,
    /// Service times `η_i` of the arrivals.
    pub service: Vec<f64>,
}

/// One sample path of a queue with all of its event streams.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueRealization {
    pub spec: ModelSpec,
    pub horizon: f64,
    pub construction: Construction,
    pub seed: StreamSeed,
    /// Number in system `Q`.
    pub queue: StepPath,
    /// All arrivals `A`, including blocked ones.
    pub arrivals: StepPath,
    pub departures: StepPath,
    pub abandonments: StepPath,
    /// Arrivals turned away because the system was full.
    pub blocked: StepPath,
    pub events: Vec<Event>,
    pub service_record: Option<ServiceRecord>,
}

impl QueueRealization {
    pub fn initial_count(&self) -> u64 {
        self.queue.initial() as u64
    }

    /// Checks conservation `Q = Q(0) + A − D − L − U` at every event together
    /// with the state constraints on each event type.
    pub fn audit(&self) -> Result<()> {
        let cap = self.spec.capacity();
        let servers = self.spec.servers();
        let mut q = self.initial_count();
        let (mut a, mut d, mut l, mut u) = (0u64, 0u64, 0u64, 0u64);
        let mut last_t = 0.0;
        for ev in &self.events {
            if ev.t < last_t || ev.t > self.horizon {
                return Err(Error::Contract(format!("event at {} out of order", ev.t)));
            }
            last_t = ev.t;
            match ev.kind {
                EventKind::Arrival => {
                    a += 1;
                    if cap == Some(q) {
                        return Err(Error::Contract(format!("admission at full system, t = {}", ev.t)));
                    }
                    q += 1;
                }
                EventKind::Blocked => {
                    a += 1;
                    u += 1;
                    if cap != Some(q) {
                        return Err(Error::Contract(format!("blocking below capacity, t = {}", ev.t)));
                    }
                }
                EventKind::Departure => {
                    if q == 0 {
                        return Err(Error::Contract(format!("departure from empty system, t = {}", ev.t)));
                    }
                    d += 1;
                    q -= 1;
                }
                EventKind::Abandonment => {
                    if servers.is_none_or(|n| q <= n) {
                        return Err(Error::Contract(format!("abandonment with no one waiting, t = {}", ev.t)));
                    }
                    l += 1;
                    q -= 1;
                }
            }
            if ev.q_after != q {
                return Err(Error::Contract(format!(
                    "logged Q = {} but conservation gives {q} at t = {}",
                    ev.q_after, ev.t
                )));
            }
            let t = ev.t;
            let lhs = self.queue.value(t);
            let rhs = self.queue.initial() + self.arrivals.value(t)
                - self.departures.value(t)
                - self.abandonments.value(t)
                - self.blocked.value(t);
            if lhs != rhs {
                return Err(Error::Contract(format!("flow conservation fails at t = {t}")));
            }
        }
        let totals = [
            (self.arrivals.terminal(), a),
            (self.departures.terminal(), d),
            (self.abandonments.terminal(), l),
            (self.blocked.terminal(), u),
        ];
        if totals.iter().any(|&(path, count)| path != count as f64) {
            return Err(Error::Contract("event counts disagree with paths".into()));
        }
        Ok(())
    }
}

/// Builds the five paths and the event log from a time-ordered event list.
struct PathRecorder {
    queue: crate::paths::StepPathBuilder,
    arrivals: crate::paths::StepPathBuilder,
    departures: crate::paths::StepPathBuilder,
    abandonments: crate::paths::StepPathBuilder,
    blocked: crate::paths::StepPathBuilder,
    counts: [u64; 4],
    events: Vec<Event>,
}

impl PathRecorder {
    fn new(q0: u64, horizon: f64) -> Self {
        PathRecorder {
            queue: StepPath::builder(q0 as f64, horizon),
            arrivals: StepPath::builder(0.0, horizon),
            departures: StepPath::builder(0.0, horizon),
            abandonments: StepPath::builder(0.0, horizon),
            blocked: StepPath::builder(0.0, horizon),
            counts: [0; 4],
            events: Vec::new(),
        }
    }

    fn record(&mut self, t: f64, kind: EventKind, q_after: u64) {
        let push = |b: &mut crate::paths::StepPathBuilder, v: u64| {
            b.push(t, v as f64).expect("events are time ordered");
        };
        match kind {
            EventKind::Arrival => {
                self.counts[0] += 1;
                push(&mut self.arrivals, self.counts[0]);
            }
            EventKind::Departure => {
                self.counts[1] += 1;
                push(&mut self.departures, self.counts[1]);
            }
            EventKind::Abandonment => {
                self.counts[2] += 1;
                push(&mut self.abandonments, self.counts[2]);
            }
            EventKind::Blocked => {
                self.counts[0] += 1;
                self.counts[3] += 1;
                push(&mut self.arrivals, self.counts[0]);
                push(&mut self.blocked, self.counts[3]);
            }
        }
        if kind != EventKind::Blocked {
            push(&mut self.queue, q_after);
        }
        self.events.push(Event { t, kind, q_after });
    }

    fn finish(
        self,
        spec: &ModelSpec,
        horizon: f64,
        construction: Construction,
        seed: StreamSeed,
        service_record: Option<ServiceRecord>,
    ) -> QueueRealization {
        QueueRealization {
            spec: spec.clone(),
            horizon,
            construction,
            seed,
            queue: self.queue.finish(),
            arrivals: self.arrivals.finish(),
            departures: self.departures.finish(),
            abandonments: self.abandonments.finish(),
            blocked: self.blocked.finish(),
            events: self.events,
            service_record,
        }
    }
}

fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    Exp1.sample(rng)
}

/// Successive arrival epochs of a Poisson or renewal stream.
struct ArrivalStream {
    rng: ChaCha8Rng,
    law: Option<Law>,
    scale: f64,
    count: u64,
    unit_clock: f64,
    last: f64,
}

impl ArrivalStream {
    fn new(arrival: ArrivalLaw, lambda: f64, rng: ChaCha8Rng) -> Self {
        let (law, scale) = match arrival {
            ArrivalLaw::Poisson => (None, 1.0 / lambda),
            ArrivalLaw::Renewal(law) => (Some(law), 1.0 / (lambda * law.mean())),
        };
        ArrivalStream {
            rng,
            law,
            scale,
            count: 0,
            unit_clock: 0.0,
            last: 0.0,
        }
    }

    fn next_epoch(&mut self) -> f64 {
        self.count += 1;
        match self.law {
            // points of the unit-rate stream A, read through the clock λt
            None => {
                self.unit_clock += exp1(&mut self.rng);
                self.last = self.unit_clock * self.scale;
            }
            Some(Law::Deterministic { .. }) => {
                self.last = self.count as f64 * self.scale * self.law.map_or(1.0, |l| l.mean());
            }
            Some(law) => {
                self.last += law.sample(&mut self.rng) * self.scale;
            }
        }
        self.last
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(domain("horizon", format!("{horizon}")));
    }
    Ok(())
}

fn initial_count(spec: &ModelSpec, seed: &StreamSeed) -> u64 {
    let q0 = spec.initial.sample(&mut seed.stream(StreamRole::Initial));
    match spec.capacity() {
        Some(cap) => q0.min(cap),
        None => q0,
    }
}

/// Random-time-change construction.
///
/// `A`, `S` and `R` are independent unit-rate Poisson streams. The content
/// evolves as `Q(t) = Q(0) + A(λt) − S(I_S(t)) − R(I_R(t)) − U(t)` with
/// clocks `I_S = μ∫(Q∧n)` and `I_R = θ∫(Q−n)⁺`. Each next event is the first
/// of: the next arrival epoch, the time at which `I_S` reaches the next
/// point of `S`, and the time at which `I_R` reaches the next point of `R`.
pub fn construct_time_change(
    spec: &ModelSpec,
    seed: StreamSeed,
    horizon: f64,
) -> Result<QueueRealization> {
    spec.validate()?;
    spec.markovian_check()?;
    check_horizon(horizon)?;
    let cap = spec.capacity();
    let mut q = initial_count(spec, &seed);
    let mut rec = PathRecorder::new(q, horizon);
    let mut arrivals = ArrivalStream::new(spec.arrival, spec.lambda, seed.stream(StreamRole::Arrivals));
    let mut s_rng = seed.stream(StreamRole::Services);
    let mut r_rng = seed.stream(StreamRole::Abandonments);

    let mut t = 0.0f64;
    let mut next_arrival = arrivals.next_epoch();
    let (mut clock_s, mut next_s) = (0.0f64, exp1(&mut s_rng));
    let (mut clock_r, mut next_r) = (0.0f64, exp1(&mut r_rng));
    loop {
        let qf = q as f64;
        let rate_s = spec.mu * spec.busy(qf);
        let rate_r = spec.theta * spec.waiting(qf);
        let t_s = if rate_s > 0.0 {
            t + (next_s - clock_s) / rate_s
        } else {
            f64::INFINITY
        };
        let t_r = if rate_r > 0.0 {
            t + (next_r - clock_r) / rate_r
        } else {
            f64::INFINITY
        };
        let t_next = next_arrival.min(t_s).min(t_r);
        if t_next > horizon {
            break;
        }
        clock_s += rate_s * (t_next - t);
        clock_r += rate_r * (t_next - t);
        t = t_next;
        if next_arrival == t_next {
            if cap == Some(q) {
                rec.record(t, EventKind::Blocked, q);
            } else {
                q += 1;
                rec.record(t, EventKind::Arrival, q);
            }
            next_arrival = arrivals.next_epoch();
        } else if t_s == t_next {
            clock_s = next_s;
            next_s += exp1(&mut s_rng);
            q -= 1;
            rec.record(t, EventKind::Departure, q);
        } else {
            clock_r = next_r;
            next_r += exp1(&mut r_rng);
            q -= 1;
            rec.record(t, EventKind::Abandonment, q);
        }
    }
    Ok(rec.finish(spec, horizon, Construction::TimeChange, seed, None))
}

/// Pending point of one stream in the thinning construction.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    t: f64,
    kind: EventKind,
    level: u32,
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.kind.cmp(&other.kind))
            .then(self.level.cmp(&other.level))
    }
}

/// A rate-`rate` Poisson stream started at time 0.
struct LevelStream {
    rng: ChaCha8Rng,
    rate: f64,
    next: f64,
}

impl LevelStream {
    /// Instantiates the stream and skips its points up to `now`; they would
    /// all have been thinned out.
    fn start(rng: ChaCha8Rng, rate: f64, now: f64) -> Self {
        let mut s = LevelStream { rng, rate, next: 0.0 };
        s.advance();
        while s.next <= now {
            s.advance();
        }
        s
    }

    fn advance(&mut self) {
        self.next += exp1(&mut self.rng) / self.rate;
    }
}

/// Thinning construction.
///
/// Departures are `D(t) = Σ_k ∫ 1{Q(s−) ≥ k} dS_{μ,k}(s)` over server levels
/// `k ≤ n`; abandonments thin rate-θ streams attached to waiting positions in
/// the same way. Level streams are instantiated when the content first
/// reaches them.
pub fn construct_thinning(
    spec: &ModelSpec,
    seed: StreamSeed,
    horizon: f64,
) -> Result<QueueRealization> {
    spec.validate()?;
    spec.markovian_check()?;
    check_horizon(horizon)?;
    let cap = spec.capacity();
    let servers = spec.servers();
    let mut q = initial_count(spec, &seed);
    let mut rec = PathRecorder::new(q, horizon);
    let mut arrivals = ArrivalStream::new(spec.arrival, spec.lambda, seed.stream(StreamRole::Arrivals));
    let mut service_levels: Vec<LevelStream> = Vec::new();
    let mut abandon_levels: Vec<LevelStream> = Vec::new();
    let mut heap: BinaryHeap<Reverse<Pending>> = BinaryHeap::new();

    heap.push(Reverse(Pending {
        t: arrivals.next_epoch(),
        kind: EventKind::Arrival,
        level: 0,
    }));

    let ensure_levels = |q: u64,
                             now: f64,
                             service_levels: &mut Vec<LevelStream>,
                             abandon_levels: &mut Vec<LevelStream>,
                             heap: &mut BinaryHeap<Reverse<Pending>>| {
        let busy = servers.map_or(q, |n| q.min(n));
        while (service_levels.len() as u64) < busy {
            let k = service_levels.len() as u32 + 1;
            let s = LevelStream::start(seed.stream(StreamRole::ServiceLevel(k)), spec.mu, now);
            heap.push(Reverse(Pending {
                t: s.next,
                kind: EventKind::Departure,
                level: k,
            }));
            service_levels.push(s);
        }
        if spec.theta > 0.0 {
            let waiting = servers.map_or(0, |n| q.saturating_sub(n));
            while (abandon_levels.len() as u64) < waiting {
                let j = abandon_levels.len() as u32 + 1;
                let s = LevelStream::start(seed.stream(StreamRole::AbandonLevel(j)), spec.theta, now);
                heap.push(Reverse(Pending {
                    t: s.next,
                    kind: EventKind::Abandonment,
                    level: j,
                }));
                abandon_levels.push(s);
            }
        }
    };
    ensure_levels(q, 0.0, &mut service_levels, &mut abandon_levels, &mut heap);

    while let Some(Reverse(p)) = heap.pop() {
        if p.t > horizon {
            break;
        }
        let t = p.t;
        match p.kind {
            EventKind::Arrival => {
                if cap == Some(q) {
                    rec.record(t, EventKind::Blocked, q);
                } else {
                    q += 1;
                    rec.record(t, EventKind::Arrival, q);
                    ensure_levels(q, t, &mut service_levels, &mut abandon_levels, &mut heap);
                }
                heap.push(Reverse(Pending {
                    t: arrivals.next_epoch(),
                    kind: EventKind::Arrival,
                    level: 0,
                }));
            }
            EventKind::Departure => {
                // q is Q(t−): no other event has been applied at this epoch yet
                // unless a tie occurred, in which case the tie order applies.
                let k = p.level;
                if q >= u64::from(k) {
                    q -= 1;
                    rec.record(t, EventKind::Departure, q);
                }
                let s = &mut service_levels[k as usize - 1];
                s.advance();
                heap.push(Reverse(Pending {
                    t: s.next,
                    kind: EventKind::Departure,
                    level: k,
                }));
            }
            EventKind::Abandonment => {
                let j = p.level;
                let n = servers.expect("abandonment streams need finite servers");
                if q >= n + u64::from(j) {
                    q -= 1;
                    rec.record(t, EventKind::Abandonment, q);
                }
                let s = &mut abandon_levels[j as usize - 1];
                s.advance();
                heap.push(Reverse(Pending {
                    t: s.next,
                    kind: EventKind::Abandonment,
                    level: j,
                }));
            }
            EventKind::Blocked => unreachable!("blocking is decided at arrivals"),
        }
    }
    Ok(rec.finish(spec, horizon, Construction::Thinning, seed, None))
}

/// Counting path of a renewal (or Poisson) arrival stream with long-run rate
/// `rate`; the interarrival law is rescaled to mean `1/rate`.
pub fn renewal_arrivals(law: &Law, rate: f64, seed: StreamSeed, horizon: f64) -> Result<StepPath> {
    if !(law.mean() > 0.0 && law.mean().is_finite()) {
        return Err(domain("interarrival mean", format!("{}", law.mean())));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(domain("arrival rate", format!("{rate}")));
    }
    check_horizon(horizon)?;
    let epochs = arrival_epochs(ArrivalLaw::Renewal(*law), rate, seed, horizon);
    StepPath::counting(&epochs, horizon)
}

fn arrival_epochs(arrival: ArrivalLaw, rate: f64, seed: StreamSeed, horizon: f64) -> Vec<f64> {
    let mut stream = ArrivalStream::new(arrival, rate, seed.stream(StreamRole::Arrivals));
    let mut out = Vec::new();
    loop {
        let t = stream.next_epoch();
        if t > horizon {
            return out;
        }
        out.push(t);
    }
}

/// Construction from arrival and service times for the infinite-server
/// queue: `Q(t) = Σ_{i≤Q(0)} 1(η̄_i > t) + Σ_{i≤A(t)} 1(τ_i + η_i > t)`.
pub fn construct_service_times(
    spec: &ModelSpec,
    seed: StreamSeed,
    horizon: f64,
) -> Result<QueueRealization> {
    spec.validate()?;
    if spec.family != Family::InfiniteServer {
        return Err(Error::Unsupported(
            "service-times construction is for the infinite-server model".to_string(),
        ));
    }
    check_horizon(horizon)?;
    let q0 = initial_count(spec, &seed);
    let mut init_rng = seed.stream(StreamRole::InitialServiceTimes);
    let initial_service: Vec<f64> = (0..q0)
        .map(|_| spec.initial_service.sample(&mut init_rng))
        .collect();
    let arrival_times = arrival_epochs(spec.arrival, spec.lambda, seed, horizon);
    let mut svc_rng = seed.stream(StreamRole::ServiceTimes);
    let service: Vec<f64> = arrival_times
        .iter()
        .map(|_| spec.service.sample(&mut svc_rng))
        .collect();
    let record = ServiceRecord {
        initial_service,
        arrival_times,
        service,
    };
    Ok(realize_service_record(spec, seed, horizon, record))
}

/// Builds the realization determined by explicit arrival and service times.
pub fn realize_service_record(
    spec: &ModelSpec,
    seed: StreamSeed,
    horizon: f64,
    record: ServiceRecord,
) -> QueueRealization {
    let q0 = record.initial_service.len() as u64;
    let mut events: Vec<(f64, EventKind)> = Vec::with_capacity(
        record.initial_service.len() + 2 * record.arrival_times.len(),
    );
    events.extend(
        record
            .initial_service
            .iter()
            .filter(|&&d| d <= horizon)
            .map(|&d| (d, EventKind::Departure)),
    );
    for (&tau, &eta) in record.arrival_times.iter().zip(&record.service) {
        events.push((tau, EventKind::Arrival));
        if tau + eta <= horizon {
            events.push((tau + eta, EventKind::Departure));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut q = q0;
    let mut rec = PathRecorder::new(q0, horizon);
    for (t, kind) in events {
        match kind {
            EventKind::Arrival => q += 1,
            _ => q -= 1,
        }
        rec.record(t, kind, q);
    }
    rec.finish(spec, horizon, Construction::ServiceTimes, seed, Some(record))
}

/// `Q(t, y)` on a grid of elapsed-service thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoParamSnapshot {
    pub t: f64,
    pub y: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Number of customers in system at `t` whose elapsed service time is at
/// least `y`, for each `y` in `y_grid`. Initial customers count as having
/// started service at time 0.
pub fn two_param_counts(r: &QueueRealization, t: f64, y_grid: &[f64]) -> Result<TwoParamSnapshot> {
    let record = r.service_record.as_ref().ok_or_else(|| {
        Error::Unsupported("two-parameter counts need the service-times construction".into())
    })?;
    if !(0.0..=r.horizon).contains(&t) {
        return Err(domain("time", format!("t = {t} not in [0, {}]", r.horizon)));
    }
    let initial_alive = record.initial_service.iter().filter(|&&d| d > t).count() as u64;
    let counts = y_grid
        .iter()
        .map(|&y| {
            if y > t {
                return 0;
            }
            let cutoff = t - y;
            let recent = record
                .arrival_times
                .iter()
                .zip(&record.service)
                .take_while(|(&tau, _)| tau <= cutoff)
                .filter(|(&tau, &eta)| tau + eta > t)
                .count() as u64;
            initial_alive + recent
        })
        .collect();
    Ok(TwoParamSnapshot {
        t,
        y: y_grid.to_vec(),
        counts,
    })
}

/// Compensators of the arrival, departure and abandonment counting paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Compensators {
    /// `λt`. For renewal arrivals this is the deterministic centering rather
    /// than a compensator.
    pub arrival: LinearPath,
    /// `μ∫₀ᵗ (Q(s) ∧ n) ds`.
    pub departure: LinearPath,
    /// `θ∫₀ᵗ (Q(s) − n)⁺ ds`.
    pub abandonment: LinearPath,
}

pub fn compensators(r: &QueueRealization) -> Result<Compensators> {
    if r.construction == Construction::ServiceTimes {
        return Err(Error::Unsupported(
            "compensators need a Markovian construction".into(),
        ));
    }
    let spec = &r.spec;
    let mu = spec.mu;
    let theta = spec.theta;
    Ok(Compensators {
        arrival: LinearPath::affine(0.0, spec.lambda, r.horizon),
        departure: LinearPath::integral_of(&r.queue, |q| mu * spec.busy(q)),
        abandonment: if theta > 0.0 && spec.servers().is_some() {
            LinearPath::integral_of(&r.queue, |q| theta * spec.waiting(q))
        } else {
            LinearPath::zero(r.horizon)
        },
    })
}

/// Points of the unit-rate driving streams consumed by a time-change
/// realization: the clock values `I_S` at departures and `I_R` at
/// abandonments. Under the construction these are the first points of
/// independent unit-rate Poisson processes.
pub fn driving_stream_points(r: &QueueRealization) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = compensators(r)?;
    let at = |path: &StepPath, clock: &LinearPath| -> Vec<f64> {
        path.epochs().iter().map(|&t| clock.value(t)).collect()
    };
    Ok((
        at(&r.departures, &c.departure),
        at(&r.abandonments, &c.abandonment),
    ))
}
