use std::collections::{BTreeMap, HashMap, VecDeque};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::billing::{self, BillRecord, BillingError, ChargingSession};
use crate::energy::{self, BessState, EnergyError, EnergyLedger, MicrogridMode};
use crate::fabric::{self, Content, Message, Payload, PayloadKind, Route};
use crate::topology::{validate_topology, Mode, NodeId, Tier};

use super::event::{EventKind, EventQueue, SessionPhase, Subject};
use super::rng::stream;
use super::trace::{TraceDigest, TraceEntry};
use super::{
    MessageCounts, PrivacyAudit, QueueStats, RunConfig, RunError, RunOutput, SupplyRecord,
    SupplySource,
};

const SERVICE_STREAM: u32 = 0;
const ARRIVAL_STREAM_BASE: u32 = 1;

/// A fog or cloud server plus its post-warmup accumulators.
struct Station {
    service: Exp<f64>,
    rng: ChaCha8Rng,
    backlog: VecDeque<u64>,
    busy: bool,
    in_system: u64,
    last_t: f64,
    area: f64,
    busy_time: f64,
    arrivals: u64,
    sojourn_sum: f64,
    samples: u64,
}

impl Station {
    fn new(mu: f64, rng: ChaCha8Rng) -> Result<Self, RunError> {
        let service =
            Exp::new(mu).map_err(|_| RunError::InvalidConfig(format!("bad service rate {mu}")))?;
        Ok(Station {
            service,
            rng,
            backlog: VecDeque::new(),
            busy: false,
            in_system: 0,
            last_t: 0.0,
            area: 0.0,
            busy_time: 0.0,
            arrivals: 0,
            sojourn_sum: 0.0,
            samples: 0,
        })
    }

    /// Integrates population and busy time up to `t`, counting only the
    /// part after `warmup`.
    fn advance(&mut self, t: f64, warmup: f64) {
        let from = self.last_t.max(warmup);
        if t > from {
            let dt = t - from;
            self.area += self.in_system as f64 * dt;
            if self.busy {
                self.busy_time += dt;
            }
        }
        self.last_t = t;
    }
}

#[derive(Debug, Clone, Copy)]
enum Purpose {
    Workload(usize),
    OwnerRequest(u64),
    OwnerAck(u64),
}

struct InFlight {
    msg: Message,
    route: Route,
    hop: usize,
    arrived_at: f64,
    purpose: Purpose,
}

struct Source {
    src: NodeId,
    dst: NodeId,
    kind: PayloadKind,
    size: u32,
    route: Route,
    interarrival: Option<Exp<f64>>,
    rng: ChaCha8Rng,
}

struct Engine<'a> {
    cfg: &'a RunConfig,
    queue: EventQueue,
    now: f64,
    stations: BTreeMap<NodeId, Station>,
    inflight: HashMap<u64, InFlight>,
    next_msg: u64,
    sources: Vec<Source>,
    sessions: Vec<Option<ChargingSession>>,
    reservations: Vec<Option<(f64, SupplySource)>>,
    bills: Vec<BillRecord>,
    supplies: Vec<SupplyRecord>,
    counts: MessageCounts,
    privacy: PrivacyAudit,
    grid_mode: MicrogridMode,
    bess: Option<BessState>,
    solar_next: usize,
    solar_spilled_kwh: f64,
    trace: Vec<TraceEntry>,
    digest: TraceDigest,
    events: u64,
}

/// Runs the configured scenario to its horizon.
///
/// Identical configurations produce identical outputs, trace digest included.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    check_config(cfg)?;
    let mut engine = Engine::new(cfg)?;
    engine.prime();
    engine.run_loop()?;
    Ok(engine.finish())
}

fn check_config(cfg: &RunConfig) -> Result<(), RunError> {
    let report = validate_topology(&cfg.topology);
    if !report.is_valid() {
        return Err(RunError::InvalidTopology(report));
    }
    let bad = |m: String| Err(RunError::InvalidConfig(m));
    if !(cfg.horizon_s.is_finite() && cfg.horizon_s > 0.0) {
        return bad(format!("horizon_s must be positive, got {}", cfg.horizon_s));
    }
    if !(cfg.warmup_s >= 0.0 && cfg.warmup_s < cfg.horizon_s) {
        return bad(format!(
            "warmup_s must lie in [0, horizon_s), got {}",
            cfg.warmup_s
        ));
    }
    if !(cfg.hop_delay_s.is_finite() && cfg.hop_delay_s >= 0.0) {
        return bad(format!(
            "hop_delay_s must be nonnegative, got {}",
            cfg.hop_delay_s
        ));
    }
    if !(cfg.tariff_per_kwh.is_finite() && cfg.tariff_per_kwh > 0.0) {
        return bad(format!(
            "tariff_per_kwh must be positive, got {}",
            cfg.tariff_per_kwh
        ));
    }
    if !(cfg.microgrid.charge_power_kw.is_finite() && cfg.microgrid.charge_power_kw > 0.0) {
        return bad("charge_power_kw must be positive".to_owned());
    }
    if let Some(b) = &cfg.microgrid.bess {
        b.check()?;
    }
    for s in &cfg.microgrid.solar {
        if !(s.energy_kwh >= 0.0 && s.at_s >= 0.0) {
            return bad(format!("bad solar charge {s:?}"));
        }
    }
    for o in &cfg.microgrid.outages {
        if o.start_s.is_nan() || o.end_s.is_nan() || o.start_s > o.end_s {
            return bad(format!("bad outage {o:?}"));
        }
    }
    for (i, p) in cfg.sessions.iter().enumerate() {
        if !(p.energy_kwh.is_finite() && p.energy_kwh >= 0.0) {
            return bad(format!("session {i}: energy_kwh must be nonnegative"));
        }
        if !(p.at_s.is_finite() && p.at_s >= 0.0) {
            return bad(format!("session {i}: at_s must be nonnegative"));
        }
        match cfg.topology.node(p.outlet_meter) {
            Some(n) if n.tier == Tier::Device => {}
            _ => return Err(BillingError::UnknownOutlet(p.outlet_meter).into()),
        }
    }
    Ok(())
}

/// Destination of an arrival process without an explicit target.
fn processing_server(cfg: &RunConfig, source: NodeId) -> Option<NodeId> {
    let t = &cfg.topology;
    match (t.mode, t.node(source)?.tier) {
        (_, Tier::Cloud) => None,
        (Mode::CloudOnly, _) | (Mode::FogAugmented, Tier::Fog) => t.cloud_id(),
        (Mode::FogAugmented, Tier::Device) => t.fog_of(source),
    }
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, RunError> {
        let t = &cfg.topology;
        let mut stations = BTreeMap::new();
        for n in t.nodes().filter(|n| n.tier != Tier::Device) {
            let rng = stream(cfg.seed, n.id, SERVICE_STREAM);
            stations.insert(n.id, Station::new(n.service_rate_per_s, rng)?);
        }

        let mut per_node: BTreeMap<NodeId, u32> = BTreeMap::new();
        let mut sources = Vec::with_capacity(cfg.arrivals.len());
        for (i, p) in cfg.arrivals.iter().enumerate() {
            if t.node(p.source).is_none() {
                return Err(RunError::InvalidConfig(format!(
                    "arrival {i}: unknown source {}",
                    p.source
                )));
            }
            let dst = match p.target {
                Some(d) => d,
                None => processing_server(cfg, p.source).ok_or_else(|| {
                    RunError::InvalidConfig(format!(
                        "arrival {i}: source {} has no processing server",
                        p.source
                    ))
                })?,
            };
            if !(p.rate_per_s.is_finite() && p.rate_per_s >= 0.0) {
                return Err(RunError::InvalidConfig(format!(
                    "arrival {i}: rate_per_s must be nonnegative"
                )));
            }
            // Fails early on unknown kinds and empty payloads.
            let probe = Payload::new(p.payload_kind.clone(), p.size_bytes, Vec::new())?;
            fabric::classify(&probe, &cfg.classification)?;
            let route = fabric::resolve_route(p.source, dst, t)?;
            let slot = per_node.entry(p.source).or_default();
            let rng = stream(cfg.seed, p.source, ARRIVAL_STREAM_BASE + *slot);
            *slot += 1;
            let interarrival = if p.rate_per_s > 0.0 {
                Some(Exp::new(p.rate_per_s).expect("positive finite rate"))
            } else {
                None
            };
            sources.push(Source {
                src: p.source,
                dst,
                kind: p.payload_kind.clone(),
                size: p.size_bytes,
                route,
                interarrival,
                rng,
            });
        }

        Ok(Engine {
            cfg,
            queue: EventQueue::default(),
            now: 0.0,
            stations,
            inflight: HashMap::new(),
            next_msg: 0,
            sources,
            sessions: vec![None; cfg.sessions.len()],
            reservations: vec![None; cfg.sessions.len()],
            bills: Vec::new(),
            supplies: Vec::new(),
            counts: MessageCounts::default(),
            privacy: PrivacyAudit::default(),
            grid_mode: MicrogridMode::GridConnected,
            bess: cfg.microgrid.bess,
            solar_next: 0,
            solar_spilled_kwh: 0.0,
            trace: Vec::new(),
            digest: TraceDigest::default(),
            events: 0,
        })
    }

    fn prime(&mut self) {
        for i in 0..self.sources.len() {
            self.schedule_generation(i);
        }
        for (sid, plan) in self.cfg.sessions.iter().enumerate() {
            if plan.at_s <= self.cfg.horizon_s {
                self.queue.schedule(
                    plan.at_s,
                    EventKind::SessionStep,
                    Subject::Session(sid as u64, SessionPhase::Start),
                    plan.outlet_meter,
                );
            }
        }
    }

    fn run_loop(&mut self) -> Result<(), RunError> {
        while let Some(ev) = self.queue.pop() {
            if ev.time > self.cfg.horizon_s {
                break;
            }
            debug_assert!(ev.time >= self.now, "event out of order");
            self.now = ev.time;
            self.events += 1;
            let entry = TraceEntry::from(&ev);
            self.digest.push(&entry);
            if self.cfg.record_trace {
                self.trace.push(entry);
            }
            match (ev.kind, ev.subject) {
                (EventKind::Arrival, Subject::Message(id)) => self.on_arrival(id, ev.node)?,
                (EventKind::ServiceStart, Subject::Message(id)) => {
                    self.on_service_start(id, ev.node)
                }
                (EventKind::ServiceEnd, Subject::Message(id)) => {
                    self.on_service_end(id, ev.node)?
                }
                (EventKind::SessionStep, Subject::Session(sid, SessionPhase::Start)) => {
                    self.on_session_start(sid)?
                }
                (EventKind::SessionStep, Subject::Session(sid, SessionPhase::Finish)) => {
                    self.on_session_finish(sid)?
                }
                (kind, subject) => unreachable!("{kind:?} scheduled for {subject:?}"),
            }
        }
        Ok(())
    }

    fn schedule_generation(&mut self, i: usize) {
        let src = &mut self.sources[i];
        let Some(exp) = src.interarrival else { return };
        let t = self.now + exp.sample(&mut src.rng);
        if t > self.cfg.horizon_s {
            return;
        }
        let (from, to, route) = (src.src, src.dst, src.route.clone());
        let payload =
            Payload::new(src.kind.clone(), src.size, Vec::new()).expect("validated at setup");
        let id = self.next_msg;
        let msg = Message::compose(
            id,
            from,
            to,
            payload,
            &self.cfg.classification,
            &self.cfg.topology,
            t,
        )
        .expect("validated at setup");
        self.launch(msg, route, Purpose::Workload(i), t);
    }

    fn launch(&mut self, msg: Message, route: Route, purpose: Purpose, at: f64) {
        let id = msg.id;
        debug_assert_eq!(id, self.next_msg);
        self.next_msg += 1;
        self.counts.generated += 1;
        let first = route.hops[0];
        self.inflight.insert(
            id,
            InFlight {
                msg,
                route,
                hop: 0,
                arrived_at: at,
                purpose,
            },
        );
        self.queue
            .schedule(at, EventKind::Arrival, Subject::Message(id), first);
    }

    fn on_arrival(&mut self, id: u64, node: NodeId) -> Result<(), RunError> {
        let f = self
            .inflight
            .get_mut(&id)
            .expect("arrival of unknown message");
        f.arrived_at = self.now;
        if f.hop == 0 {
            if let Purpose::Workload(i) = f.purpose {
                self.schedule_generation(i);
            }
        }
        let warmup = self.cfg.warmup_s;
        match self.stations.get_mut(&node) {
            Some(st) => {
                st.advance(self.now, warmup);
                st.in_system += 1;
                if self.now >= warmup {
                    st.arrivals += 1;
                }
                if st.busy {
                    st.backlog.push_back(id);
                } else {
                    st.busy = true;
                    self.queue.schedule(
                        self.now,
                        EventKind::ServiceStart,
                        Subject::Message(id),
                        node,
                    );
                }
                Ok(())
            }
            None => self.forward(id),
        }
    }

    fn on_service_start(&mut self, id: u64, node: NodeId) {
        let f = &self.inflight[&id];
        if self.cfg.topology.node(node).map(|n| n.tier) == Some(Tier::Fog) {
            if let Content::Sealed(env) = &f.msg.content {
                self.privacy.sealed_at_fog += 1;
                if fabric::open(env, node).is_ok() {
                    self.privacy.fog_private_reads += 1;
                }
            }
        }
        let st = self.stations.get_mut(&node).expect("service at non-server");
        let dt = st.service.sample(&mut st.rng);
        self.queue.schedule(
            self.now + dt,
            EventKind::ServiceEnd,
            Subject::Message(id),
            node,
        );
    }

    fn on_service_end(&mut self, id: u64, node: NodeId) -> Result<(), RunError> {
        let warmup = self.cfg.warmup_s;
        let arrived_at = self.inflight[&id].arrived_at;
        let st = self.stations.get_mut(&node).expect("service at non-server");
        st.advance(self.now, warmup);
        st.in_system -= 1;
        if arrived_at >= warmup {
            st.samples += 1;
            st.sojourn_sum += self.now - arrived_at;
        }
        match st.backlog.pop_front() {
            Some(next) => {
                self.queue.schedule(
                    self.now,
                    EventKind::ServiceStart,
                    Subject::Message(next),
                    node,
                );
            }
            None => st.busy = false,
        }
        self.forward(id)
    }

    fn forward(&mut self, id: u64) -> Result<(), RunError> {
        let f = self
            .inflight
            .get_mut(&id)
            .expect("forward of unknown message");
        f.hop += 1;
        if f.hop < f.route.hops.len() {
            let next = f.route.hops[f.hop];
            self.queue.schedule(
                self.now + self.cfg.hop_delay_s,
                EventKind::Arrival,
                Subject::Message(id),
                next,
            );
            return Ok(());
        }
        let f = self.inflight.remove(&id).expect("present");
        self.counts.delivered += 1;
        match f.purpose {
            Purpose::Workload(_) => Ok(()),
            Purpose::OwnerRequest(sid) => self.on_owner_reached(sid, f),
            Purpose::OwnerAck(sid) => self.begin_charging(sid),
        }
    }

    fn take_session(&mut self, sid: u64) -> ChargingSession {
        self.sessions[sid as usize]
            .take()
            .expect("session step for unknown session")
    }

    fn put_session(&mut self, s: ChargingSession) {
        let sid = s.session_id as usize;
        self.sessions[sid] = Some(s);
    }

    fn on_session_start(&mut self, sid: u64) -> Result<(), RunError> {
        let cfg = self.cfg;
        let plan = &cfg.sessions[sid as usize];
        let s = billing::initiate_session(
            sid,
            &plan.vehicle_id,
            plan.outlet_meter,
            &cfg.registry,
            &cfg.topology,
            self.now,
        )?;
        let req = billing::owner_request(
            &s,
            &cfg.registry,
            &cfg.topology,
            &cfg.classification,
            self.next_msg,
            self.now,
        );
        match req {
            Ok(Some(req)) => {
                self.put_session(s);
                self.launch(req.message, req.route, Purpose::OwnerRequest(sid), self.now);
                Ok(())
            }
            Ok(None) => {
                let outlet = s.outlet_meter;
                self.put_session(billing::confirm_owner(s, outlet, None)?);
                self.begin_charging(sid)
            }
            Err(BillingError::UnknownVehicle(_) | BillingError::Fabric(_)) => {
                self.put_session(billing::reject(s)?);
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }

    fn on_owner_reached(&mut self, sid: u64, request: InFlight) -> Result<(), RunError> {
        let s = self.take_session(sid);
        let owner = request.msg.dst;
        let outlet = request.msg.src;
        self.put_session(billing::confirm_owner(
            s,
            owner,
            Some(request.route.pattern),
        )?);

        // The owner's meter acknowledges with its identity.
        let t = &self.cfg.topology;
        let route = fabric::resolve_route(owner, outlet, t)?;
        let body = self.cfg.sessions[sid as usize]
            .vehicle_id
            .as_bytes()
            .to_vec();
        let size = u32::try_from(body.len().max(1)).unwrap_or(u32::MAX);
        let payload = Payload::new(PayloadKind::IDENTITY_TOKEN, size, body)?;
        let msg = Message::compose(
            self.next_msg,
            owner,
            outlet,
            payload,
            &self.cfg.classification,
            t,
            self.now,
        )?;
        self.launch(msg, route, Purpose::OwnerAck(sid), self.now);
        Ok(())
    }

    fn grid_available(&self, t: f64) -> bool {
        !self
            .cfg
            .microgrid
            .outages
            .iter()
            .any(|o| o.start_s <= t && t < o.end_s)
    }

    /// Applies every scheduled solar charge up to the current time.
    fn apply_solar(&mut self, until: f64) {
        let solar = &self.cfg.microgrid.solar;
        while self.solar_next < solar.len() && solar[self.solar_next].at_s <= until {
            let e = solar[self.solar_next].energy_kwh;
            self.solar_next += 1;
            let Some(b) = self.bess else {
                self.solar_spilled_kwh += e;
                continue;
            };
            self.bess = Some(match energy::bess_charge(&b, e) {
                Ok(n) => n,
                Err(_) => {
                    self.solar_spilled_kwh += e - b.headroom_input_kwh();
                    BessState {
                        soc_kwh: b.capacity_kwh,
                        ..b
                    }
                }
            });
        }
    }

    fn begin_charging(&mut self, sid: u64) -> Result<(), RunError> {
        let s = billing::authorize(self.take_session(sid))?;
        let plan = &self.cfg.sessions[sid as usize];
        let energy_kwh = plan.energy_kwh;

        self.grid_mode = energy::mode_transition(self.grid_mode, self.grid_available(self.now));
        let source = match self.grid_mode {
            MicrogridMode::GridConnected => Some(SupplySource::Grid),
            MicrogridMode::Autonomous => {
                self.apply_solar(self.now);
                match self.bess.map(|b| energy::bess_discharge(&b, energy_kwh)) {
                    Some(Ok(b)) => {
                        self.bess = Some(b);
                        Some(SupplySource::Bess)
                    }
                    Some(Err(EnergyError::Underflow { .. })) | None => None,
                    Some(Err(e)) => return Err(e.into()),
                }
            }
        };
        let Some(source) = source else {
            // Islanded with too little storage.
            self.put_session(billing::reject(s)?);
            return Ok(());
        };

        let s = billing::start_charging(s)?;
        let outlet = s.outlet_meter;
        self.put_session(s);
        self.reservations[sid as usize] = Some((energy_kwh, source));
        let duration = energy_kwh / self.cfg.microgrid.charge_power_kw * 3600.0;
        self.queue.schedule(
            self.now + duration,
            EventKind::SessionStep,
            Subject::Session(sid, SessionPhase::Finish),
            outlet,
        );
        Ok(())
    }

    fn on_session_finish(&mut self, sid: u64) -> Result<(), RunError> {
        let (energy_kwh, source) = self.reservations[sid as usize]
            .take()
            .expect("finish without reservation");
        self.supplies.push(SupplyRecord {
            session_id: sid,
            energy_kwh,
            source,
        });
        let s = billing::meter_energy(self.take_session(sid), energy_kwh, self.now)?;
        let (s, bill) = billing::settle_bill(s, self.cfg.tariff_per_kwh, &self.cfg.registry)?;
        self.bills.push(bill);
        self.put_session(s);
        Ok(())
    }

    fn finish(mut self) -> RunOutput {
        let horizon = self.cfg.horizon_s;
        let warmup = self.cfg.warmup_s;
        let window = horizon - warmup;
        self.apply_solar(horizon);

        let mut stats = Vec::new();
        let mut energy = Vec::new();
        for node in self.cfg.topology.nodes() {
            let (row, active) = match self.stations.get_mut(&node.id) {
                Some(st) => {
                    st.advance(horizon, warmup);
                    let row = QueueStats {
                        node: node.id,
                        lambda_hat: st.arrivals as f64 / window,
                        mean_wait_s: if st.samples > 0 {
                            st.sojourn_sum / st.samples as f64
                        } else {
                            0.0
                        },
                        mean_in_system: st.area / window,
                        utilization: st.busy_time / window,
                        samples: st.samples,
                    };
                    (row, st.busy_time.min(window))
                }
                None => (QueueStats::empty(node.id), 0.0),
            };
            stats.push(row);
            let ledger = energy::accrue_energy(
                &EnergyLedger::new(node.id),
                &node.spec,
                active,
                (window - active).max(0.0),
            )
            .expect("durations are nonnegative");
            energy.push(ledger);
        }

        let mut counts = self.counts;
        counts.in_system = self.inflight.len() as u64;

        RunOutput {
            stats,
            energy,
            sessions: self.sessions.into_iter().flatten().collect(),
            bills: self.bills,
            supplies: self.supplies,
            messages: counts,
            privacy: self.privacy,
            bess_final: self.bess,
            solar_spilled_kwh: self.solar_spilled_kwh,
            trace: self.trace,
            digest: self.digest.value(),
            events: self.events,
            window_s: window,
        }
    }
}
