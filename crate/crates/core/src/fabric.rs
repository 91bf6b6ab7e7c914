//! Payload classification, sealed envelopes and tier-respecting routing.
//!
//! Private payloads travel inside a [`SealedEnvelope`] that only its keyholders
//! can open. Fog nodes may store and forward envelopes but are never
//! keyholders, so private plaintext never exists at the fog tier.
//!
//! Routes climb the hierarchy, take at most one lateral hop at their apex and
//! descend again:
//!
//! | pattern       | hops                                   |
//! |---------------|----------------------------------------|
//! | `ComA`        | device, device (same fog area)         |
//! | `ComB`        | device, own fog gateway                |
//! | `ComC`        | ..., fog, linked fog, ...              |
//! | `ComD`        | ..., fog, cloud, fog, ...              |
//! | `CloudDirect` | anything via the cloud, cloud-only mode |

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{Mode, NodeId, Tier, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FabricError {
    #[error("payload kind {0} is not in the classification table")]
    UnknownKind(PayloadKind),
    #[error("fog node {0} cannot be a keyholder for private data")]
    FogKeyholderForbidden(NodeId),
    #[error("envelope needs at least one keyholder")]
    EmptyKeyholders,
    #[error("node {0} is not a keyholder")]
    NotKeyholder(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no route from {0} to {1}")]
    NoRoute(NodeId, NodeId),
    #[error("route endpoints must differ (node {0})")]
    SameEndpoints(NodeId),
    #[error("payload size must be positive")]
    EmptyPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataClass {
    Private,
    Public,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PayloadKind(Cow<'static, str>);

impl PayloadKind {
    pub const METER_READING: PayloadKind = PayloadKind(Cow::Borrowed("MeterReading"));
    pub const BILLING_RECORD: PayloadKind = PayloadKind(Cow::Borrowed("BillingRecord"));
    pub const IDENTITY_TOKEN: PayloadKind = PayloadKind(Cow::Borrowed("IdentityToken"));
    pub const GRID_TELEMETRY: PayloadKind = PayloadKind(Cow::Borrowed("GridTelemetry"));
    pub const CHARGE_REQUEST: PayloadKind = PayloadKind(Cow::Borrowed("ChargeRequest"));

    pub fn new(name: impl Into<String>) -> Self {
        PayloadKind(Cow::Owned(name.into()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub kind: PayloadKind,
    bytes_size: u32,
    pub body: Vec<u8>,
}

impl Payload {
    pub fn new(kind: PayloadKind, bytes_size: u32, body: Vec<u8>) -> Result<Self, FabricError> {
        if bytes_size == 0 {
            return Err(FabricError::EmptyPayload);
        }
        Ok(Payload {
            kind,
            bytes_size,
            body,
        })
    }

    pub fn bytes_size(&self) -> u32 {
        self.bytes_size
    }
}

/// Payload kind to data class lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationTable {
    entries: BTreeMap<PayloadKind, DataClass>,
}

impl ClassificationTable {
    pub fn new(entries: impl IntoIterator<Item = (PayloadKind, DataClass)>) -> Self {
        ClassificationTable {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, kind: PayloadKind, class: DataClass) {
        self.entries.insert(kind, class);
    }

    pub fn get(&self, kind: &PayloadKind) -> Option<DataClass> {
        self.entries.get(kind).copied()
    }

    pub fn kinds(&self) -> impl Iterator<Item = &PayloadKind> {
        self.entries.keys()
    }
}

impl Default for ClassificationTable {
    /// Consumer data is private; grid telemetry is public.
    fn default() -> Self {
        ClassificationTable::new([
            (PayloadKind::METER_READING, DataClass::Private),
            (PayloadKind::BILLING_RECORD, DataClass::Private),
            (PayloadKind::IDENTITY_TOKEN, DataClass::Private),
            (PayloadKind::CHARGE_REQUEST, DataClass::Private),
            (PayloadKind::GRID_TELEMETRY, DataClass::Public),
        ])
    }
}

pub fn classify(p: &Payload, table: &ClassificationTable) -> Result<DataClass, FabricError> {
    table
        .get(&p.kind)
        .ok_or_else(|| FabricError::UnknownKind(p.kind.clone()))
}

/// A payload readable only by the nodes in `keyholders`.
///
/// Confidentiality is modeled, not enforced cryptographically: the inner
/// payload is unreachable except through [`open`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedEnvelope {
    inner: Payload,
    keyholders: BTreeSet<NodeId>,
    seal_tag: u64,
}

impl SealedEnvelope {
    pub fn keyholders(&self) -> &BTreeSet<NodeId> {
        &self.keyholders
    }

    pub fn seal_tag(&self) -> u64 {
        self.seal_tag
    }

    /// Size on the wire; visible without opening.
    pub fn bytes_size(&self) -> u32 {
        self.inner.bytes_size
    }
}

pub fn seal(
    p: Payload,
    keyholders: BTreeSet<NodeId>,
    t: &Topology,
) -> Result<SealedEnvelope, FabricError> {
    if keyholders.is_empty() {
        return Err(FabricError::EmptyKeyholders);
    }
    for k in &keyholders {
        match t.node(*k) {
            Some(n) if n.tier == Tier::Fog => return Err(FabricError::FogKeyholderForbidden(*k)),
            Some(_) => {}
            None => return Err(FabricError::UnknownNode(*k)),
        }
    }
    let mut tag = fnv1a(p.kind.as_str().as_bytes(), FNV_OFFSET);
    tag = fnv1a(&p.body, tag);
    for k in &keyholders {
        tag = fnv1a(&k.0.to_le_bytes(), tag);
    }
    Ok(SealedEnvelope {
        inner: p,
        keyholders,
        seal_tag: tag,
    })
}

pub fn open(e: &SealedEnvelope, opener: NodeId) -> Result<Payload, FabricError> {
    if e.keyholders.contains(&opener) {
        Ok(e.inner.clone())
    } else {
        Err(FabricError::NotKeyholder(opener))
    }
}

/// Keyholders for a private message: its endpoints and the cloud, excluding
/// any fog node.
pub fn default_keyholders(src: NodeId, dst: NodeId, t: &Topology) -> BTreeSet<NodeId> {
    [Some(src), Some(dst), t.cloud_id()]
        .into_iter()
        .flatten()
        .filter(|id| t.node(*id).is_some_and(|n| n.tier != Tier::Fog))
        .collect()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Content {
    Plain(Payload),
    Sealed(SealedEnvelope),
}

impl Content {
    pub fn bytes_size(&self) -> u32 {
        match self {
            Content::Plain(p) => p.bytes_size(),
            Content::Sealed(e) => e.bytes_size(),
        }
    }

    /// What `reader` can see of this content.
    pub fn read_at(&self, reader: NodeId) -> Result<Payload, FabricError> {
        match self {
            Content::Plain(p) => Ok(p.clone()),
            Content::Sealed(e) => open(e, reader),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub class: DataClass,
    pub content: Content,
    pub created_at: f64,
}

impl Message {
    /// Classifies `payload` and seals it when private.
    pub fn compose(
        id: u64,
        src: NodeId,
        dst: NodeId,
        payload: Payload,
        table: &ClassificationTable,
        t: &Topology,
        created_at: f64,
    ) -> Result<Message, FabricError> {
        let class = classify(&payload, table)?;
        let content = match class {
            DataClass::Public => Content::Plain(payload),
            DataClass::Private => {
                Content::Sealed(seal(payload, default_keyholders(src, dst, t), t)?)
            }
        };
        Ok(Message {
            id,
            src,
            dst,
            class,
            content,
            created_at,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    ComA,
    ComB,
    ComC,
    ComD,
    CloudDirect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub pattern: Pattern,
    pub hops: Vec<NodeId>,
}

impl Route {
    pub fn len(&self) -> usize {
        self.hops.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.hops.len() < 2
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.hops.contains(&node)
    }
}

/// Resolves the route from `src` to `dst` for the topology's mode.
pub fn resolve_route(src: NodeId, dst: NodeId, t: &Topology) -> Result<Route, FabricError> {
    let s = t.node(src).ok_or(FabricError::UnknownNode(src))?;
    let d = t.node(dst).ok_or(FabricError::UnknownNode(dst))?;
    if src == dst {
        return Err(FabricError::SameEndpoints(src));
    }
    let cloud = t.cloud_id().ok_or(FabricError::NoRoute(src, dst))?;

    if t.mode == Mode::CloudOnly {
        let hops = if src == cloud || dst == cloud {
            vec![src, dst]
        } else {
            vec![src, cloud, dst]
        };
        return Ok(Route {
            pattern: Pattern::CloudDirect,
            hops,
        });
    }

    if s.tier == Tier::Device && d.tier == Tier::Device && s.area == d.area {
        return Ok(Route {
            pattern: Pattern::ComA,
            hops: vec![src, dst],
        });
    }

    // Climb from each non-cloud endpoint to its gateway.
    let ascent = |id: NodeId, tier: Tier| -> Result<Vec<NodeId>, FabricError> {
        match tier {
            Tier::Cloud => Ok(Vec::new()),
            Tier::Fog => Ok(vec![id]),
            Tier::Device => {
                let fog = t.fog_of(id).ok_or(FabricError::NoRoute(src, dst))?;
                Ok(vec![id, fog])
            }
        }
    };
    let mut hops = ascent(src, s.tier)?;
    let mut down = ascent(dst, d.tier)?;
    down.reverse();

    let pattern = match (hops.last().copied(), down.first().copied()) {
        (Some(a), Some(b)) if a == b => {
            down.remove(0);
            Pattern::ComB
        }
        (Some(a), Some(b)) if t.linked(a, b) => Pattern::ComC,
        // Unlinked gateways, or a cloud endpoint (empty ascent).
        _ => {
            hops.push(cloud);
            Pattern::ComD
        }
    };
    hops.extend(down);
    Ok(Route { pattern, hops })
}

/// Whether the tier profile of `hops` rises, takes at most one lateral
/// step, and then falls.
pub fn is_tier_respecting(hops: &[NodeId], t: &Topology) -> bool {
    let tiers: Option<Vec<Tier>> = hops.iter().map(|h| t.node(*h).map(|n| n.tier)).collect();
    let Some(tiers) = tiers else { return false };
    let mut descending = false;
    let mut laterals = 0;
    for w in tiers.windows(2) {
        match w[0].cmp(&w[1]) {
            std::cmp::Ordering::Less if descending => return false,
            std::cmp::Ordering::Less => {}
            std::cmp::Ordering::Equal => laterals += 1,
            std::cmp::Ordering::Greater => descending = true,
        }
    }
    let unique: BTreeSet<_> = hops.iter().collect();
    laterals <= 1 && unique.len() == hops.len()
}
