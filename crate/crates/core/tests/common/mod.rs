#![allow(dead_code)]

use foggrid::fabric::Pattern;
use foggrid::topology::{validate_topology, Mode, Node, NodeId, Tier, Topology};
use rand::Rng;

/// A valid random topology with at most `max_nodes` nodes: one cloud (id 0),
/// one to four gateways (ids 10..) each owning an area, and devices (ids
/// 100..) spread over those areas. Gateways are linked at random.
pub fn random_topology(rng: &mut impl Rng, max_nodes: usize, mode: Mode) -> Topology {
    let fogs = rng.random_range(1..=4usize).min(max_nodes - 1);
    let devices = rng.random_range(0..=max_nodes - 1 - fogs);
    let mut nodes = vec![Node::cloud(0, 1.0)];
    for f in 0..fogs {
        nodes.push(Node::fog(10 + f as u32, f as u32 + 1, 1.0));
    }
    for d in 0..devices {
        let area = rng.random_range(1..=fogs as u32);
        nodes.push(Node::device(100 + d as u32, area));
    }
    let mut t = Topology::with_nodes(mode, nodes);
    for a in 0..fogs as u32 {
        for b in a + 1..fogs as u32 {
            if rng.random_bool(0.4) {
                t.link(10 + a, 10 + b);
            }
        }
    }
    let report = validate_topology(&t);
    assert!(report.is_valid(), "generator produced {report:?}");
    t
}

/// Whether a message may cross directly from `a` to `b`.
pub fn adjacent(t: &Topology, a: NodeId, b: NodeId) -> bool {
    let (Some(x), Some(y)) = (t.node(a), t.node(b)) else {
        return false;
    };
    if a == b {
        return false;
    }
    match t.mode {
        Mode::CloudOnly => (x.tier == Tier::Cloud) != (y.tier == Tier::Cloud),
        Mode::FogAugmented => match (x.tier, y.tier) {
            (Tier::Device, Tier::Device) => x.area == y.area,
            (Tier::Device, Tier::Fog) | (Tier::Fog, Tier::Device) => x.area == y.area,
            (Tier::Fog, Tier::Fog) => t.linked(a, b),
            (Tier::Fog, Tier::Cloud) | (Tier::Cloud, Tier::Fog) => true,
            _ => false,
        },
    }
}

fn rank(t: &Topology, n: NodeId) -> u8 {
    match t.node(n).expect("known node").tier {
        Tier::Device => 0,
        Tier::Fog => 1,
        Tier::Cloud => 2,
    }
}

/// Up, at most one sideways step at the peak, then down. Every prefix of
/// such a path has the same shape, so this also prunes the search.
pub fn unimodal(t: &Topology, path: &[NodeId]) -> bool {
    let mut falling = false;
    let mut sideways = false;
    for w in path.windows(2) {
        let (a, b) = (rank(t, w[0]), rank(t, w[1]));
        if a < b {
            if falling || sideways {
                return false;
            }
        } else if a == b {
            if falling || sideways {
                return false;
            }
            sideways = true;
        } else {
            falling = true;
        }
    }
    true
}

/// Every simple, adjacent, unimodal path from `src` to `dst`.
pub fn enumerate_paths(t: &Topology, src: NodeId, dst: NodeId) -> Vec<Vec<NodeId>> {
    fn go(
        t: &Topology,
        ids: &[NodeId],
        dst: NodeId,
        path: &mut Vec<NodeId>,
        out: &mut Vec<Vec<NodeId>>,
    ) {
        let last = *path.last().expect("nonempty");
        if last == dst {
            out.push(path.clone());
            return;
        }
        for &n in ids {
            if path.contains(&n) || !adjacent(t, last, n) {
                continue;
            }
            path.push(n);
            if unimodal(t, path) {
                go(t, ids, dst, path, out);
            }
            path.pop();
        }
    }
    let ids: Vec<NodeId> = t.nodes().map(|n| n.id).collect();
    let mut out = Vec::new();
    go(t, &ids, dst, &mut vec![src], &mut out);
    out
}

/// Pattern of a path judged by which tiers and links it uses.
pub fn pattern_of(t: &Topology, path: &[NodeId]) -> Pattern {
    if t.mode == Mode::CloudOnly {
        return Pattern::CloudDirect;
    }
    let tier = |n: &NodeId| t.node(*n).expect("known node").tier;
    if path.iter().any(|n| tier(n) == Tier::Cloud) {
        Pattern::ComD
    } else if path
        .windows(2)
        .any(|w| tier(&w[0]) == Tier::Fog && tier(&w[1]) == Tier::Fog)
    {
        Pattern::ComC
    } else if path.iter().any(|n| tier(n) == Tier::Fog) {
        Pattern::ComB
    } else {
        Pattern::ComA
    }
}
