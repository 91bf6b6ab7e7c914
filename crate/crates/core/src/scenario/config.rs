//! TOML scenario files.
//!
//! ```toml
//! [run]
//! seed = 7
//! horizon_s = 1e6
//! warmup_s = 1e4          # optional, defaults to 1% of the horizon
//! hop_delay_s = 0.0       # optional
//!
//! [topology]
//! mode = "fog_augmented"  # or "cloud_only"
//! fog_links = [[10, 20]]
//!
//! [[topology.nodes]]
//! id = 0
//! tier = "cloud"          # "device" | "fog" | "cloud"
//! service_rate_per_s = 0.0219858
//!
//! [[topology.nodes]]
//! id = 100
//! tier = "device"
//! role = "sensor"         # optional; defaults by tier
//! area = 1
//! account = "alice"       # optional billing account of this meter
//!
//! [workload]
//! classification = { MeterReading = "private", GridTelemetry = "public" }
//!
//! [[workload.arrivals]]
//! source = 100
//! target = 0              # optional; defaults to the processing server
//! rate_per_s = 0.0166667
//! payload_kind = "MeterReading"
//! size_bytes = 256
//!
//! [[workload.vehicles]]
//! vehicle_id = "ev-1"
//! owner_meter = 100
//!
//! [[workload.sessions]]
//! vehicle_id = "ev-1"
//! outlet_meter = 200
//! at_s = 3600
//! energy_kwh = 7.5
//!
//! [models]
//! tariff_per_kwh = 0.2
//! c_ms = 1.0
//! charge_power_kw = 7.0
//! fog_spec = { cpu_mhz = 500, cores = 2, memory_mb = 1024, power_active_mw = 199.0 }
//! bess = { capacity_kwh = 50.0, soc_kwh = 25.0, efficiency = 1.0 }
//! solar = [{ at_s = 0.0, energy_kwh = 10.0 }]
//! outages = [{ start_s = 1000.0, end_s = 5000.0 }]
//! calibration = { lambda_per_s = 0.0166667, cloud_wait_s = 188.0, fog_wait_s = 84.0 }
//! ```

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::billing::Registry;
use crate::energy::{BessState, ProcessingModel};
use crate::fabric::{ClassificationTable, DataClass, PayloadKind};
use crate::sim::{
    calibrate_service_rate, ArrivalProcess, MicrogridConfig, Outage, RunConfig, SessionPlan,
    SolarCharge,
};
use crate::topology::{
    default_cloud_spec, default_device_spec, default_fog_spec, validate_topology, DeviceRole,
    DeviceSpec, FogAreaId, Mode, Node, NodeId, Tier, Topology, ValidationReport,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    DanglingReference(String),
    #[error("{}", .0.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTopology(ValidationReport),
}

impl ConfigError {
    pub fn category(&self) -> &'static str {
        match self {
            ConfigError::Schema(_) => "schema",
            ConfigError::DanglingReference(_) => "dangling_reference",
            ConfigError::InvalidTopology(_) => "invalid_topology",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    run: RawRun,
    topology: RawTopology,
    #[serde(default)]
    workload: RawWorkload,
    #[serde(default)]
    models: RawModels,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    seed: u64,
    horizon_s: f64,
    warmup_s: Option<f64>,
    #[serde(default)]
    hop_delay_s: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    mode: Mode,
    nodes: Vec<RawNode>,
    #[serde(default)]
    fog_links: Vec<[u32; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: u32,
    tier: Tier,
    role: Option<DeviceRole>,
    area: Option<u32>,
    service_rate_per_s: Option<f64>,
    spec: Option<DeviceSpec>,
    account: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    #[serde(default)]
    arrivals: Vec<RawArrival>,
    classification: Option<BTreeMap<String, DataClass>>,
    #[serde(default)]
    vehicles: Vec<RawVehicle>,
    #[serde(default)]
    sessions: Vec<RawSession>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArrival {
    source: u32,
    target: Option<u32>,
    rate_per_s: f64,
    payload_kind: String,
    size_bytes: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVehicle {
    vehicle_id: String,
    owner_meter: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSession {
    vehicle_id: String,
    outlet_meter: u32,
    at_s: f64,
    energy_kwh: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModels {
    fog_spec: Option<DeviceSpec>,
    cloud_spec: Option<DeviceSpec>,
    device_spec: Option<DeviceSpec>,
    #[serde(default = "default_c_ms")]
    c_ms: f64,
    bess: Option<BessState>,
    #[serde(default)]
    solar: Vec<RawSolar>,
    #[serde(default)]
    outages: Vec<RawOutage>,
    #[serde(default = "default_charge_power")]
    charge_power_kw: f64,
    #[serde(default = "default_tariff")]
    tariff_per_kwh: f64,
    calibration: Option<RawCalibration>,
}

impl Default for RawModels {
    fn default() -> Self {
        RawModels {
            fog_spec: None,
            cloud_spec: None,
            device_spec: None,
            c_ms: default_c_ms(),
            bess: None,
            solar: Vec::new(),
            outages: Vec::new(),
            charge_power_kw: default_charge_power(),
            tariff_per_kwh: default_tariff(),
            calibration: None,
        }
    }
}

fn default_c_ms() -> f64 {
    1.0
}

fn default_charge_power() -> f64 {
    7.0
}

fn default_tariff() -> f64 {
    0.2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolar {
    at_s: f64,
    energy_kwh: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutage {
    start_s: f64,
    end_s: f64,
}

/// Derives fog and cloud service rates from target mean sojourn times.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCalibration {
    lambda_per_s: f64,
    cloud_wait_s: Option<f64>,
    fog_wait_s: Option<f64>,
}

/// A parsed and validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub run: RunConfig,
    /// Warmup as written in the file; `None` means 1% of the horizon.
    pub warmup_s: Option<f64>,
    pub processing: ProcessingModel,
    pub fog_spec: DeviceSpec,
    pub cloud_spec: DeviceSpec,
}

impl ScenarioConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }

    pub fn with_horizon(mut self, horizon_s: f64) -> Result<Self, ConfigError> {
        self.run.horizon_s = horizon_s;
        self.run.warmup_s = self.warmup_s.unwrap_or(horizon_s * 0.01);
        check_run(&self.run)?;
        Ok(self)
    }
}

fn schema(msg: impl Into<String>) -> ConfigError {
    ConfigError::Schema(msg.into())
}

fn dangling(msg: impl Into<String>) -> ConfigError {
    ConfigError::DanglingReference(msg.into())
}

fn check_run(run: &RunConfig) -> Result<(), ConfigError> {
    if !(run.horizon_s.is_finite() && run.horizon_s > 0.0) {
        return Err(schema(format!(
            "run.horizon_s must be positive, got {}",
            run.horizon_s
        )));
    }
    if !(run.warmup_s >= 0.0 && run.warmup_s < run.horizon_s) {
        return Err(schema(format!(
            "run.warmup_s must lie in [0, horizon_s), got {}",
            run.warmup_s
        )));
    }
    if !(run.hop_delay_s.is_finite() && run.hop_delay_s >= 0.0) {
        return Err(schema("run.hop_delay_s must be nonnegative"));
    }
    Ok(())
}

/// Parses and validates a scenario. Never panics on malformed input.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| schema(e.to_string()))?;

    let fog_spec = raw.models.fog_spec.unwrap_or_else(default_fog_spec);
    let cloud_spec = raw.models.cloud_spec.unwrap_or_else(default_cloud_spec);
    let device_spec = raw.models.device_spec.unwrap_or_else(default_device_spec);

    let calibrated = match &raw.models.calibration {
        Some(c) => {
            let rate = |target: Option<f64>, what: &str| -> Result<Option<f64>, ConfigError> {
                target
                    .map(|w| calibrate_service_rate(w, c.lambda_per_s))
                    .transpose()
                    .map_err(|e| schema(format!("models.calibration.{what}: {e}")))
            };
            (
                rate(c.cloud_wait_s, "cloud_wait_s")?,
                rate(c.fog_wait_s, "fog_wait_s")?,
            )
        }
        None => (None, None),
    };

    let mut topology = Topology::new(raw.topology.mode);
    let mut registry = Registry::default();
    for (i, n) in raw.topology.nodes.iter().enumerate() {
        let (default_role, spec, calibrated_rate) = match n.tier {
            Tier::Device => (DeviceRole::Sensor, device_spec, None),
            Tier::Fog => (DeviceRole::Gateway, fog_spec, calibrated.1),
            Tier::Cloud => (DeviceRole::Computing, cloud_spec, calibrated.0),
        };
        let rate = match (calibrated_rate, n.service_rate_per_s, n.tier) {
            (Some(r), _, _) => r,
            (None, Some(r), _) => r,
            // Devices never queue.
            (None, None, Tier::Device) => 1.0,
            (None, None, tier) => {
                return Err(schema(format!(
                    "topology.nodes[{i}] (id {}): {tier} node needs service_rate_per_s",
                    n.id
                )))
            }
        };
        topology.add_node(Node {
            id: NodeId(n.id),
            tier: n.tier,
            role: n.role.unwrap_or(default_role),
            area: n.area.map(FogAreaId),
            spec: n.spec.unwrap_or(spec),
            service_rate_per_s: rate,
        });
        if let Some(acct) = &n.account {
            registry.set_account(NodeId(n.id), acct.clone());
        }
    }
    fn exists(t: &Topology, id: u32) -> bool {
        t.node(NodeId(id)).is_some()
    }

    for [a, b] in &raw.topology.fog_links {
        for end in [a, b] {
            if !exists(&topology, *end) {
                return Err(dangling(format!("topology.fog_links: unknown node {end}")));
            }
        }
        topology.link(*a, *b);
    }

    let report = validate_topology(&topology);
    if !report.is_valid() {
        return Err(ConfigError::InvalidTopology(report));
    }

    let classification = match &raw.workload.classification {
        Some(map) => {
            ClassificationTable::new(map.iter().map(|(k, v)| (PayloadKind::new(k.clone()), *v)))
        }
        None => ClassificationTable::default(),
    };

    let mut arrivals = Vec::new();
    for (i, a) in raw.workload.arrivals.iter().enumerate() {
        if !exists(&topology, a.source) {
            return Err(dangling(format!(
                "workload.arrivals[{i}]: unknown source {}",
                a.source
            )));
        }
        if let Some(t) = a.target {
            if !exists(&topology, t) {
                return Err(dangling(format!(
                    "workload.arrivals[{i}]: unknown target {t}"
                )));
            }
            if t == a.source {
                return Err(schema(format!(
                    "workload.arrivals[{i}]: target equals source"
                )));
            }
        }
        let kind = PayloadKind::new(a.payload_kind.clone());
        if classification.get(&kind).is_none() {
            return Err(dangling(format!(
                "workload.arrivals[{i}]: payload kind {kind} missing from classification"
            )));
        }
        if !(a.rate_per_s.is_finite() && a.rate_per_s >= 0.0) {
            return Err(schema(format!(
                "workload.arrivals[{i}]: rate_per_s must be nonnegative"
            )));
        }
        if a.size_bytes == 0 {
            return Err(schema(format!(
                "workload.arrivals[{i}]: size_bytes must be positive"
            )));
        }
        arrivals.push(ArrivalProcess {
            source: NodeId(a.source),
            target: a.target.map(NodeId),
            rate_per_s: a.rate_per_s,
            payload_kind: kind,
            size_bytes: a.size_bytes,
        });
    }
    // The engine sends these for every roaming session.
    if !raw.workload.sessions.is_empty() {
        for kind in [PayloadKind::CHARGE_REQUEST, PayloadKind::IDENTITY_TOKEN] {
            if classification.get(&kind).is_none() {
                return Err(dangling(format!(
                    "workload.classification: sessions need payload kind {kind}"
                )));
            }
        }
    }

    for (i, v) in raw.workload.vehicles.iter().enumerate() {
        match topology.node(NodeId(v.owner_meter)) {
            Some(n) if n.tier == Tier::Device => {}
            Some(_) => {
                return Err(schema(format!(
                    "workload.vehicles[{i}]: owner_meter {} is not a device",
                    v.owner_meter
                )))
            }
            None => {
                return Err(dangling(format!(
                    "workload.vehicles[{i}]: unknown owner_meter {}",
                    v.owner_meter
                )))
            }
        }
        registry.register_vehicle(v.vehicle_id.clone(), NodeId(v.owner_meter));
    }

    let mut sessions = Vec::new();
    for (i, s) in raw.workload.sessions.iter().enumerate() {
        match topology.node(NodeId(s.outlet_meter)) {
            Some(n) if n.tier == Tier::Device => {}
            Some(_) => {
                return Err(schema(format!(
                    "workload.sessions[{i}]: outlet_meter {} is not a device",
                    s.outlet_meter
                )))
            }
            None => {
                return Err(dangling(format!(
                    "workload.sessions[{i}]: unknown outlet_meter {}",
                    s.outlet_meter
                )))
            }
        }
        if !(s.at_s.is_finite() && s.at_s >= 0.0) {
            return Err(schema(format!(
                "workload.sessions[{i}]: at_s must be nonnegative"
            )));
        }
        if !(s.energy_kwh.is_finite() && s.energy_kwh >= 0.0) {
            return Err(schema(format!(
                "workload.sessions[{i}]: energy_kwh must be nonnegative"
            )));
        }
        // Unregistered vehicles are allowed; their sessions are rejected.
        sessions.push(SessionPlan {
            vehicle_id: s.vehicle_id.clone(),
            outlet_meter: NodeId(s.outlet_meter),
            at_s: s.at_s,
            energy_kwh: s.energy_kwh,
        });
    }

    let m = &raw.models;
    if !(m.c_ms.is_finite() && m.c_ms > 0.0) {
        return Err(schema("models.c_ms must be positive"));
    }
    if !(m.tariff_per_kwh.is_finite() && m.tariff_per_kwh > 0.0) {
        return Err(schema("models.tariff_per_kwh must be positive"));
    }
    if !(m.charge_power_kw.is_finite() && m.charge_power_kw > 0.0) {
        return Err(schema("models.charge_power_kw must be positive"));
    }
    if let Some(b) = &m.bess {
        b.check().map_err(|e| schema(format!("models.bess: {e}")))?;
    }
    for (i, s) in m.solar.iter().enumerate() {
        if !(s.at_s >= 0.0 && s.energy_kwh >= 0.0) {
            return Err(schema(format!(
                "models.solar[{i}]: values must be nonnegative"
            )));
        }
    }
    for (i, o) in m.outages.iter().enumerate() {
        if !(o.start_s >= 0.0 && o.start_s <= o.end_s) {
            return Err(schema(format!(
                "models.outages[{i}]: need 0 <= start_s <= end_s"
            )));
        }
    }
    let mut solar: Vec<SolarCharge> = m
        .solar
        .iter()
        .map(|s| SolarCharge {
            at_s: s.at_s,
            energy_kwh: s.energy_kwh,
        })
        .collect();
    solar.sort_by(|a, b| a.at_s.total_cmp(&b.at_s));

    let run = RunConfig {
        seed: raw.run.seed,
        horizon_s: raw.run.horizon_s,
        warmup_s: raw.run.warmup_s.unwrap_or(raw.run.horizon_s * 0.01),
        hop_delay_s: raw.run.hop_delay_s,
        topology,
        arrivals,
        classification,
        registry,
        sessions,
        microgrid: MicrogridConfig {
            bess: m.bess,
            solar,
            outages: m
                .outages
                .iter()
                .map(|o| Outage {
                    start_s: o.start_s,
                    end_s: o.end_s,
                })
                .collect(),
            charge_power_kw: m.charge_power_kw,
        },
        tariff_per_kwh: m.tariff_per_kwh,
        record_trace: false,
    };
    check_run(&run)?;

    Ok(ScenarioConfig {
        run,
        warmup_s: raw.run.warmup_s,
        processing: ProcessingModel { c_ms: m.c_ms },
        fog_spec,
        cloud_spec,
    })
}
