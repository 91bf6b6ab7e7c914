//! Tiered network model: smart devices, fog gateways and a single cloud.
//!
//! A [`Topology`] is plain data. Structural rules are not enforced at
//! construction time; [`validate_topology`] reports every violation instead so
//! that scenario loaders can surface all problems at once.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Hierarchy level of a node. Ordered `Device < Fog < Cloud`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Device,
    Fog,
    Cloud,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Device => "device",
            Tier::Fog => "fog",
            Tier::Cloud => "cloud",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceRole {
    Connecting,
    Gateway,
    Sensor,
    Actuator,
    Computing,
}

impl DeviceRole {
    /// Whether a node of `tier` may carry this role.
    pub fn allowed_on(self, tier: Tier) -> bool {
        match tier {
            Tier::Device => matches!(
                self,
                DeviceRole::Sensor | DeviceRole::Actuator | DeviceRole::Connecting
            ),
            Tier::Fog => matches!(self, DeviceRole::Gateway | DeviceRole::Computing),
            // The cloud is a single simulated server; any role is accepted.
            Tier::Cloud => true,
        }
    }
}

/// Hardware description and power constants of a node.
///
/// CPU and memory figures are descriptive only; the simulator consumes the
/// two power values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub cpu_mhz: u32,
    pub cores: u32,
    pub memory_mb: u32,
    pub power_active_mw: f64,
    #[serde(default)]
    pub power_idle_mw: f64,
}

impl DeviceSpec {
    /// Problems with this spec, as human readable strings. Empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.cpu_mhz == 0 {
            out.push("cpu_mhz must be positive".to_owned());
        }
        if self.cores == 0 {
            out.push("cores must be positive".to_owned());
        }
        if self.memory_mb == 0 {
            out.push("memory_mb must be positive".to_owned());
        }
        if !(self.power_active_mw.is_finite() && self.power_active_mw > 0.0) {
            out.push("power_active_mw must be finite and positive".to_owned());
        }
        if !(self.power_idle_mw.is_finite() && self.power_idle_mw >= 0.0) {
            out.push("power_idle_mw must be finite and nonnegative".to_owned());
        }
        if self.power_idle_mw > self.power_active_mw {
            out.push("power_idle_mw exceeds power_active_mw".to_owned());
        }
        out
    }
}

/// Fog gateway built around a dual-core 500 MHz Atom board drawing 199 mW
/// when active. The 1 GB figure is RAM; the board's 4 GB flash is not modeled.
pub fn default_fog_spec() -> DeviceSpec {
    DeviceSpec {
        cpu_mhz: 500,
        cores: 2,
        memory_mb: 1024,
        power_active_mw: 199.0,
        power_idle_mw: 0.0,
    }
}

/// Cloud server drawing 489 mW when active.
pub fn default_cloud_spec() -> DeviceSpec {
    DeviceSpec {
        cpu_mhz: 2400,
        cores: 8,
        memory_mb: 16384,
        power_active_mw: 489.0,
        power_idle_mw: 0.0,
    }
}

/// Smart meter / sensor class device.
pub fn default_device_spec() -> DeviceSpec {
    DeviceSpec {
        cpu_mhz: 100,
        cores: 1,
        memory_mb: 64,
        power_active_mw: 50.0,
        power_idle_mw: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FogAreaId(pub u32);

impl fmt::Display for FogAreaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub tier: Tier,
    pub role: DeviceRole,
    /// Fog area membership; `None` for the cloud.
    pub area: Option<FogAreaId>,
    pub spec: DeviceSpec,
    pub service_rate_per_s: f64,
}

impl Node {
    pub fn device(id: u32, area: u32) -> Self {
        Node {
            id: NodeId(id),
            tier: Tier::Device,
            role: DeviceRole::Sensor,
            area: Some(FogAreaId(area)),
            spec: default_device_spec(),
            service_rate_per_s: 1.0,
        }
    }

    pub fn fog(id: u32, area: u32, service_rate_per_s: f64) -> Self {
        Node {
            id: NodeId(id),
            tier: Tier::Fog,
            role: DeviceRole::Gateway,
            area: Some(FogAreaId(area)),
            spec: default_fog_spec(),
            service_rate_per_s,
        }
    }

    pub fn cloud(id: u32, service_rate_per_s: f64) -> Self {
        Node {
            id: NodeId(id),
            tier: Tier::Cloud,
            role: DeviceRole::Computing,
            area: None,
            spec: default_cloud_spec(),
            service_rate_per_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    CloudOnly,
    FogAugmented,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::CloudOnly => "cloud_only",
            Mode::FogAugmented => "fog_augmented",
        }
    }
}

/// Undirected fog-to-fog link, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FogLink(NodeId, NodeId);

impl FogLink {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            FogLink(a, b)
        } else {
            FogLink(b, a)
        }
    }

    pub fn ends(self) -> (NodeId, NodeId) {
        (self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: BTreeMap<NodeId, Node>,
    /// Nodes whose id collided with an earlier entry; kept only so that
    /// validation can report them.
    duplicates: Vec<NodeId>,
    pub fog_links: BTreeSet<FogLink>,
    pub mode: Mode,
}

impl Topology {
    pub fn new(mode: Mode) -> Self {
        Topology {
            nodes: BTreeMap::new(),
            duplicates: Vec::new(),
            fog_links: BTreeSet::new(),
            mode,
        }
    }

    pub fn with_nodes(mode: Mode, nodes: impl IntoIterator<Item = Node>) -> Self {
        let mut t = Topology::new(mode);
        for n in nodes {
            t.add_node(n);
        }
        t
    }

    pub fn add_node(&mut self, node: Node) {
        match self.nodes.entry(node.id) {
            Entry::Occupied(_) => self.duplicates.push(node.id),
            Entry::Vacant(v) => {
                v.insert(node);
            }
        }
    }

    pub fn link(&mut self, a: u32, b: u32) {
        self.fog_links.insert(FogLink::new(NodeId(a), NodeId(b)));
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.nodes.get_mut(&id)
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn nodes_mut(&mut self) -> impl Iterator<Item = &mut Node> {
        self.nodes.values_mut()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The cloud node, when exactly one exists.
    pub fn cloud_id(&self) -> Option<NodeId> {
        let mut clouds = self.nodes.values().filter(|n| n.tier == Tier::Cloud);
        match (clouds.next(), clouds.next()) {
            (Some(c), None) => Some(c.id),
            _ => None,
        }
    }

    /// The fog node serving `area`, the lowest id if several claim it.
    pub fn fog_of_area(&self, area: FogAreaId) -> Option<NodeId> {
        self.nodes
            .values()
            .find(|n| n.tier == Tier::Fog && n.area == Some(area))
            .map(|n| n.id)
    }

    /// The fog gateway responsible for `node`: itself for fog nodes, the
    /// area gateway for devices, nothing for the cloud.
    pub fn fog_of(&self, node: NodeId) -> Option<NodeId> {
        let n = self.node(node)?;
        match n.tier {
            Tier::Fog => Some(n.id),
            Tier::Device => self.fog_of_area(n.area?),
            Tier::Cloud => None,
        }
    }

    pub fn linked(&self, a: NodeId, b: NodeId) -> bool {
        self.fog_links.contains(&FogLink::new(a, b))
    }

    pub fn with_mode(&self, mode: Mode) -> Topology {
        let mut t = self.clone();
        t.mode = mode;
        t
    }
}

/// A single structural problem found by [`validate_topology`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateNode(NodeId),
    CloudCardinality {
        found: usize,
    },
    CloudHasArea(NodeId),
    MissingArea(NodeId),
    RoleTierMismatch {
        node: NodeId,
        tier: Tier,
        role: DeviceRole,
    },
    InvalidServiceRate(NodeId),
    InvalidSpec {
        node: NodeId,
        problem: String,
    },
    OrphanArea {
        area: FogAreaId,
        device: NodeId,
    },
    DuplicateFogForArea {
        area: FogAreaId,
        fogs: Vec<NodeId>,
    },
    LinkToNonFog {
        link: (NodeId, NodeId),
        node: NodeId,
    },
    SelfLink(NodeId),
}

impl Violation {
    /// Short machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            Violation::DuplicateNode(_) => "duplicate node",
            Violation::CloudCardinality { .. } => "cloud cardinality",
            Violation::CloudHasArea(_) => "cloud has area",
            Violation::MissingArea(_) => "missing area",
            Violation::RoleTierMismatch { .. } => "role tier mismatch",
            Violation::InvalidServiceRate(_) => "invalid service rate",
            Violation::InvalidSpec { .. } => "invalid spec",
            Violation::OrphanArea { .. } => "orphan area",
            Violation::DuplicateFogForArea { .. } => "duplicate fog for area",
            Violation::LinkToNonFog { .. } => "link to non-fog node",
            Violation::SelfLink(_) => "self link",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cat = self.category();
        match self {
            Violation::DuplicateNode(n) => write!(f, "{cat}: node {n} defined more than once"),
            Violation::CloudCardinality { found } => {
                write!(f, "{cat}: expected exactly one cloud node, found {found}")
            }
            Violation::CloudHasArea(n) => write!(f, "{cat}: cloud node {n} must not have an area"),
            Violation::MissingArea(n) => write!(f, "{cat}: node {n} has no fog area"),
            Violation::RoleTierMismatch { node, tier, role } => {
                write!(f, "{cat}: node {node} is {tier} tier but has role {role:?}")
            }
            Violation::InvalidServiceRate(n) => {
                write!(
                    f,
                    "{cat}: node {n} service_rate_per_s must be finite and positive"
                )
            }
            Violation::InvalidSpec { node, problem } => write!(f, "{cat}: node {node}: {problem}"),
            Violation::OrphanArea { area, device } => {
                write!(
                    f,
                    "{cat}: device {device} is in area {area} which has no fog node"
                )
            }
            Violation::DuplicateFogForArea { area, fogs } => {
                write!(f, "{cat}: area {area} has fog nodes {fogs:?}")
            }
            Violation::LinkToNonFog { link, node } => write!(
                f,
                "{cat}: link {}-{} references non-fog node {node}",
                link.0, link.1
            ),
            Violation::SelfLink(n) => write!(f, "{cat}: fog node {n} linked to itself"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every structural rule of `t`. Pure; never fails.
pub fn validate_topology(t: &Topology) -> ValidationReport {
    let mut v = Vec::new();

    for id in &t.duplicates {
        v.push(Violation::DuplicateNode(*id));
    }

    let clouds = t.nodes().filter(|n| n.tier == Tier::Cloud).count();
    if clouds != 1 {
        v.push(Violation::CloudCardinality { found: clouds });
    }

    for n in t.nodes() {
        match (n.tier, n.area) {
            (Tier::Cloud, Some(_)) => v.push(Violation::CloudHasArea(n.id)),
            (Tier::Device | Tier::Fog, None) => v.push(Violation::MissingArea(n.id)),
            _ => {}
        }
        if !n.role.allowed_on(n.tier) {
            v.push(Violation::RoleTierMismatch {
                node: n.id,
                tier: n.tier,
                role: n.role,
            });
        }
        if !(n.service_rate_per_s.is_finite() && n.service_rate_per_s > 0.0) {
            v.push(Violation::InvalidServiceRate(n.id));
        }
        for problem in n.spec.problems() {
            v.push(Violation::InvalidSpec {
                node: n.id,
                problem,
            });
        }
    }

    let mut fogs_by_area: BTreeMap<FogAreaId, Vec<NodeId>> = BTreeMap::new();
    for n in t.nodes().filter(|n| n.tier == Tier::Fog) {
        if let Some(a) = n.area {
            fogs_by_area.entry(a).or_default().push(n.id);
        }
    }
    for (area, fogs) in &fogs_by_area {
        if fogs.len() > 1 {
            v.push(Violation::DuplicateFogForArea {
                area: *area,
                fogs: fogs.clone(),
            });
        }
    }
    if t.mode == Mode::FogAugmented {
        for n in t.nodes().filter(|n| n.tier == Tier::Device) {
            if let Some(a) = n.area {
                if !fogs_by_area.contains_key(&a) {
                    v.push(Violation::OrphanArea {
                        area: a,
                        device: n.id,
                    });
                }
            }
        }
    }

    for link in &t.fog_links {
        let (a, b) = link.ends();
        if a == b {
            v.push(Violation::SelfLink(a));
        }
        for end in [a, b] {
            let is_fog = t.node(end).is_some_and(|n| n.tier == Tier::Fog);
            if !is_fog {
                v.push(Violation::LinkToNonFog {
                    link: (a, b),
                    node: end,
                });
            }
            if a == b {
                break;
            }
        }
    }

    ValidationReport { violations: v }
}
