//! Discrete-event queueing simulation.
//!
//! Every fog and cloud node is a single FIFO server with exponential service
//! times; devices forward at zero cost. Messages follow the routes produced
//! by [`crate::fabric::resolve_route`] and queue at each server hop.

mod analytic;
mod engine;
mod event;
mod rng;
mod trace;

use thiserror::Error;

use crate::billing::{BillRecord, BillingError, ChargingSession, Registry};
use crate::energy::{BessState, EnergyError, EnergyLedger};
use crate::fabric::{ClassificationTable, FabricError, PayloadKind};
use crate::topology::{NodeId, Topology, ValidationReport};

pub use analytic::{
    calibrate_service_rate, littles_law_residual, mm1_analytic, AnalyticError, Mm1,
};
pub use engine::run;
pub use event::{EventKind, EventQueue, SessionPhase, SimEvent, Subject};
pub use rng::stream;
pub use trace::{digest_of, format_digest, TraceDigest, TraceEntry};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid topology: {}", .0.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTopology(ValidationReport),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error(transparent)]
    Billing(#[from] BillingError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Poisson message source.
///
/// Messages go from `source` to `target`, or, when `target` is `None`, to
/// the source's processing server: its fog gateway in fog-augmented mode and
/// the cloud in cloud-only mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalProcess {
    pub source: NodeId,
    pub target: Option<NodeId>,
    pub rate_per_s: f64,
    pub payload_kind: PayloadKind,
    pub size_bytes: u32,
}

/// A vehicle plugging into `outlet_meter` at `at_s` wanting `energy_kwh`.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionPlan {
    pub vehicle_id: String,
    pub outlet_meter: NodeId,
    pub at_s: f64,
    pub energy_kwh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarCharge {
    pub at_s: f64,
    pub energy_kwh: f64,
}

/// Main-grid outage over `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outage {
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicrogridConfig {
    pub bess: Option<BessState>,
    pub solar: Vec<SolarCharge>,
    pub outages: Vec<Outage>,
    pub charge_power_kw: f64,
}

impl Default for MicrogridConfig {
    fn default() -> Self {
        MicrogridConfig {
            bess: None,
            solar: Vec::new(),
            outages: Vec::new(),
            charge_power_kw: 7.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon_s: f64,
    pub warmup_s: f64,
    pub hop_delay_s: f64,
    pub topology: Topology,
    pub arrivals: Vec<ArrivalProcess>,
    pub classification: ClassificationTable,
    pub registry: Registry,
    pub sessions: Vec<SessionPlan>,
    pub microgrid: MicrogridConfig,
    pub tariff_per_kwh: f64,
    /// Keep every trace entry in the output. The digest is always computed.
    pub record_trace: bool,
}

impl RunConfig {
    /// A run over `topology` with defaults everywhere else: warmup at 1% of
    /// the horizon, no delay, default classification, no sessions.
    pub fn new(seed: u64, horizon_s: f64, topology: Topology) -> Self {
        RunConfig {
            seed,
            horizon_s,
            warmup_s: horizon_s * 0.01,
            hop_delay_s: 0.0,
            topology,
            arrivals: Vec::new(),
            classification: ClassificationTable::default(),
            registry: Registry::default(),
            sessions: Vec::new(),
            microgrid: MicrogridConfig::default(),
            tariff_per_kwh: 0.2,
            record_trace: false,
        }
    }
}

/// Post-warmup queueing statistics of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueStats {
    pub node: NodeId,
    /// Observed arrivals per second.
    pub lambda_hat: f64,
    /// Mean sojourn time (queueing plus service) of completed visits.
    pub mean_wait_s: f64,
    /// Time-average number in system.
    pub mean_in_system: f64,
    /// Fraction of the window the server was busy.
    pub utilization: f64,
    pub samples: u64,
}

impl QueueStats {
    pub fn empty(node: NodeId) -> Self {
        QueueStats {
            node,
            lambda_hat: 0.0,
            mean_wait_s: 0.0,
            mean_in_system: 0.0,
            utilization: 0.0,
            samples: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupplySource {
    Grid,
    Bess,
}

/// Energy the microgrid handed to a session, recorded when charging ends.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplyRecord {
    pub session_id: u64,
    pub energy_kwh: f64,
    pub source: SupplySource,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageCounts {
    pub generated: u64,
    pub delivered: u64,
    pub in_system: u64,
}

/// Observations of private data at the fog tier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrivacyAudit {
    /// Sealed envelopes a fog node handled and failed to open.
    pub sealed_at_fog: u64,
    /// Successful opens of private envelopes at a fog node. Must stay zero.
    pub fog_private_reads: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// One row per node, ascending id.
    pub stats: Vec<QueueStats>,
    pub energy: Vec<EnergyLedger>,
    /// Sessions in plan order.
    pub sessions: Vec<ChargingSession>,
    pub bills: Vec<BillRecord>,
    pub supplies: Vec<SupplyRecord>,
    pub messages: MessageCounts,
    pub privacy: PrivacyAudit,
    pub bess_final: Option<BessState>,
    pub solar_spilled_kwh: f64,
    pub trace: Vec<TraceEntry>,
    pub digest: u64,
    pub events: u64,
    pub window_s: f64,
}
