//! Roaming EV charging sessions and billing.
//!
//! A vehicle plugs into an outlet meter it does not own. The outlet sends a
//! private charge request to the owner's home meter through the fog tier;
//! once the owner side acknowledges, the session is authorized, charged,
//! metered, and billed to the owner's account.
//!
//! ```text
//! Requested -> OwnerResolved -> Authorized -> Charging -> Metered -> Billed
//!     \______________\______________\____________\__________\-> Rejected
//! ```

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::fabric::{
    self, ClassificationTable, FabricError, Message, Pattern, Payload, PayloadKind, Route,
};
use crate::topology::{NodeId, Tier, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BillingError {
    #[error("outlet {0} is not a device-tier meter")]
    UnknownOutlet(NodeId),
    #[error("vehicle {0} is not registered")]
    UnknownVehicle(String),
    #[error("session {session}: cannot go from {from} to {to}")]
    InvalidState {
        session: u64,
        from: SessionState,
        to: SessionState,
    },
    #[error("delivered energy must be nonnegative, got {0}")]
    NegativeEnergy(f64),
    #[error("tariff must be positive, got {0}")]
    InvalidTariff(f64),
    #[error(transparent)]
    Fabric(#[from] FabricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SessionState {
    Requested,
    OwnerResolved,
    Authorized,
    Charging,
    Metered,
    Billed,
    Rejected,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Requested => "requested",
            SessionState::OwnerResolved => "owner_resolved",
            SessionState::Authorized => "authorized",
            SessionState::Charging => "charging",
            SessionState::Metered => "metered",
            SessionState::Billed => "billed",
            SessionState::Rejected => "rejected",
        }
    }

    /// The declared edges of the session state machine.
    pub fn can_transition_to(self, to: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, to),
            (Requested, OwnerResolved)
                | (OwnerResolved, Authorized)
                | (Authorized, Charging)
                | (Charging, Metered)
                | (Metered, Billed)
                | (
                    Requested | OwnerResolved | Authorized | Charging | Metered,
                    Rejected
                )
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Billed | SessionState::Rejected)
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Vehicle ownership and meter accounts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    vehicles: BTreeMap<String, NodeId>,
    accounts: BTreeMap<NodeId, String>,
}

/// A meter and the account it bills to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeterIdentity {
    pub meter: NodeId,
    pub owner_account: String,
}

impl Registry {
    pub fn register_vehicle(&mut self, vehicle_id: impl Into<String>, owner_meter: NodeId) {
        self.vehicles.insert(vehicle_id.into(), owner_meter);
    }

    pub fn set_account(&mut self, meter: NodeId, account: impl Into<String>) {
        self.accounts.insert(meter, account.into());
    }

    pub fn owner_meter(&self, vehicle_id: &str) -> Option<NodeId> {
        self.vehicles.get(vehicle_id).copied()
    }

    pub fn vehicles(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.vehicles.iter().map(|(v, m)| (v.as_str(), *m))
    }

    /// Every meter has exactly one account; unregistered meters bill to
    /// `meter-<id>`.
    pub fn identity(&self, meter: NodeId) -> MeterIdentity {
        let owner_account = self
            .accounts
            .get(&meter)
            .cloned()
            .unwrap_or_else(|| format!("meter-{meter}"));
        MeterIdentity {
            meter,
            owner_account,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargingSession {
    pub session_id: u64,
    pub vehicle_id: String,
    pub outlet_meter: NodeId,
    pub owner_meter: Option<NodeId>,
    state: SessionState,
    pub energy_kwh: f64,
    pub started_at: f64,
    pub ended_at: Option<f64>,
    /// Pattern of the route the charge request took; `None` for a vehicle
    /// charging at its own meter.
    pub route_pattern: Option<Pattern>,
    history: Vec<SessionState>,
}

impl ChargingSession {
    pub fn state(&self) -> SessionState {
        self.state
    }

    /// Every state the session has been in, oldest first.
    pub fn history(&self) -> &[SessionState] {
        &self.history
    }

    fn advance(mut self, to: SessionState) -> Result<Self, BillingError> {
        if !self.state.can_transition_to(to) {
            return Err(BillingError::InvalidState {
                session: self.session_id,
                from: self.state,
                to,
            });
        }
        self.state = to;
        self.history.push(to);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BillRecord {
    pub session_id: u64,
    pub debited_account: String,
    pub energy_kwh: f64,
    pub amount: f64,
    pub tariff_per_kwh: f64,
}

pub fn initiate_session(
    session_id: u64,
    vehicle_id: &str,
    outlet_meter: NodeId,
    registry: &Registry,
    t: &Topology,
    now: f64,
) -> Result<ChargingSession, BillingError> {
    match t.node(outlet_meter) {
        Some(n) if n.tier == Tier::Device => {}
        _ => return Err(BillingError::UnknownOutlet(outlet_meter)),
    }
    Ok(ChargingSession {
        session_id,
        vehicle_id: vehicle_id.to_owned(),
        outlet_meter,
        owner_meter: registry.owner_meter(vehicle_id),
        state: SessionState::Requested,
        energy_kwh: 0.0,
        started_at: now,
        ended_at: None,
        route_pattern: None,
        history: vec![SessionState::Requested],
    })
}

/// The private charge request an outlet sends to the owner's meter.
#[derive(Debug, Clone, PartialEq)]
pub struct OwnerRequest {
    pub owner_meter: NodeId,
    pub message: Message,
    pub route: Route,
}

/// Builds the charge request for a `Requested` session without changing its
/// state. `Ok(None)` means the vehicle is at its own meter and no request
/// is needed.
pub fn owner_request(
    s: &ChargingSession,
    registry: &Registry,
    t: &Topology,
    table: &ClassificationTable,
    message_id: u64,
    now: f64,
) -> Result<Option<OwnerRequest>, BillingError> {
    if s.state != SessionState::Requested {
        return Err(BillingError::InvalidState {
            session: s.session_id,
            from: s.state,
            to: SessionState::OwnerResolved,
        });
    }
    let owner = registry
        .owner_meter(&s.vehicle_id)
        .ok_or_else(|| BillingError::UnknownVehicle(s.vehicle_id.clone()))?;
    if owner == s.outlet_meter {
        return Ok(None);
    }
    let route = fabric::resolve_route(s.outlet_meter, owner, t)?;
    let body = s.vehicle_id.as_bytes().to_vec();
    let size = u32::try_from(body.len().max(1)).unwrap_or(u32::MAX);
    let payload = Payload::new(PayloadKind::CHARGE_REQUEST, size, body)?;
    let message = Message::compose(message_id, s.outlet_meter, owner, payload, table, t, now)?;
    Ok(Some(OwnerRequest {
        owner_meter: owner,
        message,
        route,
    }))
}

/// Marks the owner as reached over a route with `pattern`.
pub fn confirm_owner(
    mut s: ChargingSession,
    owner_meter: NodeId,
    pattern: Option<Pattern>,
) -> Result<ChargingSession, BillingError> {
    s.owner_meter = Some(owner_meter);
    s.route_pattern = pattern;
    s.advance(SessionState::OwnerResolved)
}

/// Resolves the owner's meter in one step. Unknown vehicles and unreachable
/// owners reject the session rather than failing.
pub fn resolve_owner(
    s: ChargingSession,
    registry: &Registry,
    t: &Topology,
    table: &ClassificationTable,
) -> Result<ChargingSession, BillingError> {
    match owner_request(&s, registry, t, table, s.session_id, s.started_at) {
        Ok(Some(req)) => confirm_owner(s, req.owner_meter, Some(req.route.pattern)),
        Ok(None) => {
            let own = s.outlet_meter;
            confirm_owner(s, own, None)
        }
        Err(BillingError::UnknownVehicle(_) | BillingError::Fabric(_)) => reject(s),
        Err(e) => Err(e),
    }
}

/// Identity match authorizes automatically.
pub fn authorize(s: ChargingSession) -> Result<ChargingSession, BillingError> {
    s.advance(SessionState::Authorized)
}

pub fn start_charging(s: ChargingSession) -> Result<ChargingSession, BillingError> {
    s.advance(SessionState::Charging)
}

/// Records the delivered energy. Accepts `Authorized` sessions by passing
/// through `Charging`.
pub fn meter_energy(
    s: ChargingSession,
    delivered_kwh: f64,
    now: f64,
) -> Result<ChargingSession, BillingError> {
    if delivered_kwh.is_nan() || delivered_kwh < 0.0 {
        return Err(BillingError::NegativeEnergy(delivered_kwh));
    }
    let mut s = if s.state == SessionState::Authorized {
        start_charging(s)?
    } else {
        s
    };
    s = s.advance(SessionState::Metered)?;
    s.energy_kwh = delivered_kwh;
    s.ended_at = Some(now);
    Ok(s)
}

pub fn settle_bill(
    s: ChargingSession,
    tariff_per_kwh: f64,
    registry: &Registry,
) -> Result<(ChargingSession, BillRecord), BillingError> {
    if !(tariff_per_kwh.is_finite() && tariff_per_kwh > 0.0) {
        return Err(BillingError::InvalidTariff(tariff_per_kwh));
    }
    let s = s.advance(SessionState::Billed)?;
    // Billed sessions always passed through OwnerResolved.
    let owner = s.owner_meter.unwrap_or(s.outlet_meter);
    let bill = BillRecord {
        session_id: s.session_id,
        debited_account: registry.identity(owner).owner_account,
        energy_kwh: s.energy_kwh,
        amount: s.energy_kwh * tariff_per_kwh,
        tariff_per_kwh,
    };
    Ok((s, bill))
}

pub fn reject(mut s: ChargingSession) -> Result<ChargingSession, BillingError> {
    s = s.advance(SessionState::Rejected)?;
    s.energy_kwh = 0.0;
    Ok(s)
}
