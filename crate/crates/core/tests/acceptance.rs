//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use foggrid::billing::{Registry, SessionState};
use foggrid::energy::{processing_time, BessState, ProcessingModel};
use foggrid::fabric::ClassificationTable;
use foggrid::fabric::{resolve_route, Content, DataClass, Message, Pattern, Payload, PayloadKind};
use foggrid::scenario::{compare_frameworks, parse_config};
use foggrid::sim::{
    calibrate_service_rate, littles_law_residual, mm1_analytic, run, ArrivalProcess,
    MicrogridConfig, Outage, RunConfig, SessionPlan, SolarCharge, SupplySource,
};
use foggrid::topology::{default_cloud_spec, default_fog_spec, Mode, Node, NodeId, Tier, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

/// Result of one criterion: a one-line summary, or the failure reason.
type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Outcome {
    let text = fs::read_to_string(scenario("calibration.toml")).map_err(|e| e.to_string())?;
    let cfg = parse_config(&text).map_err(|e| e.to_string())?;
    let lambda = 1.0 / 60.0;
    let mu = |id| {
        cfg.run
            .topology
            .node(NodeId(id))
            .unwrap()
            .service_rate_per_s
    };
    ensure((mu(0) - (1.0 / 188.0 + lambda)).abs() <= 1e-15, || {
        format!("cloud rate {} not 1/188 + 1/60", mu(0))
    })?;
    ensure((mu(10) - 1.0 / 35.0).abs() <= 1e-15, || {
        format!("fog rate {} not 1/35", mu(10))
    })?;
    ensure(cfg.run.horizon_s == 1e6 && cfg.run.warmup_s == 1e4, || {
        "horizon/warmup not 1e6/1e4".into()
    })?;

    let seeds: Vec<u64> = (1..=20).collect();
    let rows: Vec<(u64, f64, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let c = compare_frameworks(&cfg.clone().with_seed(seed)).expect("run");
            (
                seed,
                c.cloud.aggregates.mean_wait_s.expect("cloud traffic"),
                c.fog.aggregates.mean_wait_s.expect("fog traffic"),
            )
        })
        .collect();
    let within = |w: f64, target: f64| (w - target).abs() <= 0.10 * target;
    let good = rows
        .iter()
        .filter(|(_, c, f)| within(*c, 188.0) && within(*f, 84.0))
        .count();
    let mean = |sel: fn(&(u64, f64, f64)) -> f64| rows.iter().map(sel).sum::<f64>() / 20.0;
    let detail = format!(
        "{good}/20 seeds within 10% (mean W cloud {:.2} s, fog {:.2} s)",
        mean(|r| r.1),
        mean(|r| r.2)
    );
    if good >= 18 {
        Ok(detail)
    } else {
        let bad: Vec<String> = rows
            .iter()
            .filter(|(_, c, f)| !(within(*c, 188.0) && within(*f, 84.0)))
            .map(|(s, c, f)| format!("seed {s}: {c:.1}/{f:.1}"))
            .collect();
        Err(format!("{detail}; misses: {}", bad.join(", ")))
    }
}

fn criterion_2() -> Outcome {
    let text = fs::read_to_string(scenario("calibration.toml")).map_err(|e| e.to_string())?;
    let cfg = parse_config(&text).map_err(|e| e.to_string())?;
    ensure(
        cfg.fog_spec == default_fog_spec() && cfg.cloud_spec == default_cloud_spec(),
        || "scenario does not use default specs".into(),
    )?;
    let c = compare_frameworks(&cfg.with_horizon(1e5).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let want = 199.0 / 489.0;
    ensure(c.energy_ratio == want, || {
        format!("ratio {} != {want}", c.energy_ratio)
    })?;
    Ok(format!(
        "fog/cloud energy ratio {} == 199/489",
        c.energy_ratio
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let configs: Vec<(u64, f64, f64)> = (0..50)
        .map(|i| {
            let rho = rng.random_range(0.1..=0.9);
            let lambda = rng.random_range(1.0..=2.0);
            (i, lambda, lambda / rho)
        })
        .collect();
    let results: Vec<(u64, f64, f64, f64)> = configs
        .par_iter()
        .map(|&(i, lambda, mu)| {
            let t = Topology::with_nodes(
                Mode::FogAugmented,
                [
                    Node::cloud(0, 1.0),
                    Node::fog(10, 1, mu),
                    Node::device(100, 1),
                ],
            );
            let mut cfg = RunConfig::new(1000 + i, 1e6, t);
            cfg.arrivals.push(ArrivalProcess {
                source: NodeId(100),
                target: None,
                rate_per_s: lambda,
                payload_kind: PayloadKind::GRID_TELEMETRY,
                size_bytes: 64,
            });
            let out = run(&cfg).expect("run");
            let s = out.stats.iter().find(|s| s.node == NodeId(10)).unwrap();
            let w = mm1_analytic(lambda, mu).unwrap().w;
            (
                i,
                lambda / mu,
                littles_law_residual(s),
                (s.mean_wait_s - w).abs() / w,
            )
        })
        .collect();
    let worst_res = results.iter().map(|r| r.2).fold(0.0, f64::max);
    let worst_w = results.iter().map(|r| r.3).fold(0.0, f64::max);
    let detail = format!(
        "50 configs, max Little residual {worst_res:.2e}, max W error vs analytic {:.2}%",
        worst_w * 100.0
    );
    let bad: Vec<String> = results
        .iter()
        .filter(|r| r.2 > 0.05 || r.3 > 0.05)
        .map(|r| {
            format!(
                "config {} rho {:.3}: residual {:.3}, W err {:.3}",
                r.0, r.1, r.2, r.3
            )
        })
        .collect();
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", bad.join("; ")))
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let lambda = rng.random_range(1e-4..10.0);
        let rho = rng.random_range(0.001..0.999);
        let mu = lambda / rho;
        let w = mm1_analytic(lambda, mu).map_err(|e| e.to_string())?.w;
        let back = calibrate_service_rate(w, lambda).map_err(|e| e.to_string())?;
        let rel = (back - mu).abs() / mu;
        worst = worst.max(rel);
        ensure(rel <= 1e-12, || {
            format!("lambda {lambda} mu {mu}: round trip gave {back} (rel {rel:e})")
        })?;
    }
    Ok(format!("1000 round trips, max relative error {worst:.2e}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pairs = 0usize;
    let mut by_pattern: BTreeMap<String, usize> = BTreeMap::new();
    for case in 0..100 {
        let mode = if rng.random_bool(0.8) {
            Mode::FogAugmented
        } else {
            Mode::CloudOnly
        };
        let t = common::random_topology(&mut rng, 20, mode);
        ensure(t.len() <= 20, || format!("case {case}: {} nodes", t.len()))?;
        let ids: Vec<NodeId> = t.nodes().map(|n| n.id).collect();
        for &src in &ids {
            for &dst in &ids {
                if src == dst {
                    continue;
                }
                pairs += 1;
                let paths = common::enumerate_paths(&t, src, dst);
                let got = resolve_route(src, dst, &t);
                let Some(best) = paths.iter().map(Vec::len).min() else {
                    ensure(got.is_err(), || {
                        format!("case {case} {src}->{dst}: oracle has no path, resolver {got:?}")
                    })?;
                    continue;
                };
                let route = got.map_err(|e| format!("case {case} {src}->{dst}: {e}"))?;
                let shortest: Vec<&Vec<NodeId>> =
                    paths.iter().filter(|p| p.len() == best).collect();
                ensure(route.hops.len() == best, || {
                    format!(
                        "case {case} {src}->{dst}: got {:?}, shortest {:?}",
                        route.hops, shortest
                    )
                })?;
                ensure(paths.contains(&route.hops), || {
                    format!(
                        "case {case} {src}->{dst}: {:?} is not a valid path",
                        route.hops
                    )
                })?;
                let oracle = common::pattern_of(&t, &route.hops);
                ensure(
                    route.pattern == oracle
                        && shortest.iter().all(|p| common::pattern_of(&t, p) == oracle),
                    || {
                        format!(
                            "case {case} {src}->{dst}: pattern {:?}, oracle {oracle:?}",
                            route.pattern
                        )
                    },
                )?;
                *by_pattern.entry(format!("{oracle:?}")).or_default() += 1;
            }
        }
    }
    Ok(format!(
        "100 topologies, {pairs} pairs agree; patterns {by_pattern:?}"
    ))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let table = ClassificationTable::default();
    let kinds = [
        PayloadKind::METER_READING,
        PayloadKind::BILLING_RECORD,
        PayloadKind::IDENTITY_TOKEN,
        PayloadKind::CHARGE_REQUEST,
        PayloadKind::GRID_TELEMETRY,
    ];

    // Messages composed and walked along their routes directly.
    let mut direct = 0u64;
    let mut private_at_fog = 0u64;
    while direct < 10_000 {
        let t = common::random_topology(&mut rng, 20, Mode::FogAugmented);
        let ids: Vec<NodeId> = t.nodes().map(|n| n.id).collect();
        for _ in 0..200 {
            let src = ids[rng.random_range(0..ids.len())];
            let dst = ids[rng.random_range(0..ids.len())];
            if src == dst {
                continue;
            }
            let kind = kinds[rng.random_range(0..kinds.len())].clone();
            let payload = Payload::new(kind, 32, vec![7; 32]).map_err(|e| e.to_string())?;
            let m = Message::compose(direct, src, dst, payload, &table, &t, 0.0)
                .map_err(|e| e.to_string())?;
            let route = resolve_route(src, dst, &t).map_err(|e| e.to_string())?;
            direct += 1;
            if matches!(route.pattern, Pattern::ComA | Pattern::ComB) {
                ensure(!route.contains(t.cloud_id().unwrap()), || {
                    format!(
                        "{:?} route {:?} passes the cloud",
                        route.pattern, route.hops
                    )
                })?;
            }
            for hop in &route.hops {
                if t.node(*hop).unwrap().tier != Tier::Fog {
                    continue;
                }
                if m.class == DataClass::Private {
                    private_at_fog += 1;
                    ensure(matches!(m.content, Content::Sealed(_)), || {
                        "private in clear".into()
                    })?;
                    ensure(m.content.read_at(*hop).is_err(), || {
                        format!("fog {hop} opened message {}", m.id)
                    })?;
                }
            }
            // Endpoints that are not fog nodes can read their own mail.
            if t.node(dst).unwrap().tier != Tier::Fog {
                ensure(m.content.read_at(dst).is_ok(), || {
                    format!("destination {dst} cannot open message {}", m.id)
                })?;
            }
        }
    }

    // Messages carried by the engine across mixed scenarios.
    let mut simulated = 0u64;
    let mut sealed_at_fog = 0u64;
    for scenario_seed in 0..10u64 {
        let t = common::random_topology(&mut rng, 20, Mode::FogAugmented);
        let ids: Vec<NodeId> = t.nodes().map(|n| n.id).collect();
        let mut cfg = RunConfig::new(scenario_seed, 1e5, t.clone());
        cfg.warmup_s = 0.0;
        for n in t.nodes().filter(|n| n.tier != Tier::Cloud) {
            let target = if rng.random_bool(0.5) {
                None
            } else {
                Some(ids[rng.random_range(0..ids.len())]).filter(|d| *d != n.id)
            };
            cfg.arrivals.push(ArrivalProcess {
                source: n.id,
                target,
                rate_per_s: 0.01,
                payload_kind: kinds[rng.random_range(0..kinds.len())].clone(),
                size_bytes: 128,
            });
        }
        let out = run(&cfg).map_err(|e| e.to_string())?;
        ensure(out.privacy.fog_private_reads == 0, || {
            format!(
                "scenario {scenario_seed}: {} fog reads",
                out.privacy.fog_private_reads
            )
        })?;
        simulated += out.messages.generated;
        sealed_at_fog += out.privacy.sealed_at_fog;
    }
    ensure(simulated >= 10_000, || {
        format!("only {simulated} simulated messages")
    })?;
    ensure(private_at_fog > 0 && sealed_at_fog > 0, || {
        "no private traffic met a fog".into()
    })?;
    Ok(format!(
        "{direct} composed + {simulated} simulated messages, {} sealed fog encounters, 0 fog opens",
        private_at_fog + sealed_at_fog
    ))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut nodes = vec![Node::cloud(0, 0.5)];
    let mut meters: Vec<(NodeId, u32)> = Vec::new();
    for area in 1..=4u32 {
        nodes.push(Node::fog(9 + area, area, 0.5));
        for j in 0..5 {
            let id = 100 * area + j;
            nodes.push(Node::device(id, area));
            meters.push((NodeId(id), area));
        }
    }
    let mut t = Topology::with_nodes(Mode::FogAugmented, nodes);
    t.link(10, 11);
    t.link(12, 13);

    let mut registry = Registry::default();
    for (m, _) in &meters {
        registry.set_account(*m, format!("acct-{}", m.0));
    }
    let mut vehicles = Vec::new();
    for v in 0..16 {
        let (owner, area) = meters[rng.random_range(0..meters.len())];
        let id = format!("ev-{v}");
        registry.register_vehicle(id.clone(), owner);
        vehicles.push((id, Some(area)));
    }
    vehicles.push(("ev-unknown-1".into(), None));
    vehicles.push(("ev-unknown-2".into(), None));

    let mut sessions = Vec::new();
    for _ in 0..150 {
        let (vehicle, home) = vehicles[rng.random_range(0..vehicles.len())].clone();
        let away: Vec<NodeId> = meters
            .iter()
            .filter(|(_, a)| Some(*a) != home)
            .map(|(m, _)| *m)
            .collect();
        sessions.push(SessionPlan {
            vehicle_id: vehicle,
            outlet_meter: away[rng.random_range(0..away.len())],
            at_s: rng.random_range(0.0..80_000.0),
            energy_kwh: rng.random_range(1.0..20.0),
        });
    }
    let mut cfg = RunConfig::new(77, 100_000.0, t);
    cfg.warmup_s = 0.0;
    cfg.registry = registry.clone();
    cfg.sessions = sessions;
    cfg.microgrid = MicrogridConfig {
        bess: Some(BessState::new(60.0, 30.0, 0.95).map_err(|e| e.to_string())?),
        solar: vec![
            SolarCharge {
                at_s: 20_000.0,
                energy_kwh: 25.0,
            },
            SolarCharge {
                at_s: 45_000.0,
                energy_kwh: 25.0,
            },
        ],
        outages: vec![
            Outage {
                start_s: 15_000.0,
                end_s: 30_000.0,
            },
            Outage {
                start_s: 50_000.0,
                end_s: 65_000.0,
            },
        ],
        charge_power_kw: 7.0,
    };
    let out = run(&cfg).map_err(|e| e.to_string())?;

    let roaming = out
        .sessions
        .iter()
        .filter(|s| s.owner_meter.is_none_or(|o| o != s.outlet_meter))
        .count();
    ensure(roaming >= 100, || {
        format!("only {roaming} roaming sessions")
    })?;
    let rejected_unknown = out
        .sessions
        .iter()
        .filter(|s| s.state() == SessionState::Rejected && s.owner_meter.is_none())
        .count();
    let rejected_supply = out
        .sessions
        .iter()
        .filter(|s| s.state() == SessionState::Rejected && s.owner_meter.is_some())
        .count();
    ensure(rejected_unknown > 0 && rejected_supply > 0, || {
        format!("rejections: {rejected_unknown} unknown vehicle, {rejected_supply} supply")
    })?;
    ensure(
        out.supplies.iter().any(|s| s.source == SupplySource::Bess),
        || "no session drew on the battery".into(),
    )?;

    for s in &out.sessions {
        let supply = out.supplies.iter().find(|r| r.session_id == s.session_id);
        let bill = out.bills.iter().find(|b| b.session_id == s.session_id);
        match s.state() {
            SessionState::Billed => {
                let (supply, bill) = (supply.unwrap(), bill.unwrap());
                ensure(
                    supply.energy_kwh == s.energy_kwh && bill.energy_kwh == s.energy_kwh,
                    || format!("session {}: energy mismatch", s.session_id),
                )?;
                let owner = registry.owner_meter(&s.vehicle_id).unwrap();
                ensure(s.owner_meter == Some(owner), || "owner mismatch".into())?;
                ensure(
                    bill.debited_account == registry.identity(owner).owner_account,
                    || format!("session {} debited {}", s.session_id, bill.debited_account),
                )?;
            }
            SessionState::Rejected => {
                ensure(
                    supply.is_none() && bill.is_none() && s.energy_kwh == 0.0,
                    || format!("rejected session {} has energy records", s.session_id),
                )?;
            }
            other => {
                ensure(supply.is_none() && bill.is_none(), || {
                    format!("session {} in {other} has records", s.session_id)
                })?;
            }
        }
    }
    let by_id = |id: u64| {
        out.sessions
            .iter()
            .position(|s| s.session_id == id)
            .unwrap()
    };
    let mut supplies = out.supplies.clone();
    supplies.sort_by_key(|r| by_id(r.session_id));
    let mut bills = out.bills.clone();
    bills.sort_by_key(|b| by_id(b.session_id));
    let delivered: f64 = supplies.iter().map(|r| r.energy_kwh).sum();
    let metered: f64 = out
        .sessions
        .iter()
        .filter(|s| matches!(s.state(), SessionState::Metered | SessionState::Billed))
        .map(|s| s.energy_kwh)
        .sum();
    let billed: f64 = bills.iter().map(|b| b.energy_kwh).sum();
    ensure(delivered == metered && metered == billed, || {
        format!("delivered {delivered}, metered {metered}, billed {billed}")
    })?;
    Ok(format!(
        "{} sessions ({roaming} roaming, {} billed, {} rejected): {delivered} kWh delivered = metered = billed",
        out.sessions.len(),
        out.bills.len(),
        rejected_unknown + rejected_supply
    ))
}

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                files.insert(rel, fs::read(&path).expect("readable file"));
            }
        }
    }
    files
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_foggrid"))
            .arg("compare")
            .arg(scenario("roaming.toml"))
            .args(["--seed", "9", "--out"])
            .arg(&dir)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            format!(
                "compare failed: {}",
                String::from_utf8_lossy(&status.stderr)
            )
        })?;
        trees.push(read_tree(&dir));
    }
    ensure(trees[0] == trees[1], || "output directories differ".into())?;
    let summary = String::from_utf8_lossy(&trees[0][Path::new("comparison.txt")]).into_owned();
    ensure(summary.contains("fog_trace_digest"), || {
        "no digest in comparison.txt".into()
    })?;
    Ok(format!(
        "{} files byte-identical across two compare runs",
        trees[0].len()
    ))
}

fn criterion_9() -> Outcome {
    let m = ProcessingModel::default();
    let t = |n| processing_time(&m, n).unwrap();
    let ratio = t(2048) / t(1024);
    ensure(ratio == 2.2, || format!("T(2048)/T(1024) = {ratio}"))?;
    ensure(t(1) == 0.0, || format!("T(1) = {}", t(1)))?;
    Ok(format!("T(2048)/T(1024) = {ratio}, T(1) = 0"))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "waiting-time reproduction", criterion_1),
        (2, "power reproduction", criterion_2),
        (3, "Little's Law suite", criterion_3),
        (4, "analytic round trip", criterion_4),
        (5, "routing oracle", criterion_5),
        (6, "privacy", criterion_6),
        (7, "billing conservation", criterion_7),
        (8, "determinism", criterion_8),
        (9, "N log N model", criterion_9),
    ];
    // Keep panic messages from interleaving with the report.
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
