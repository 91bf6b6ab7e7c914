//! Scenario files, framework comparison and report output.

mod config;
mod report;

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;

use crate::energy::{accrue_energy, EnergyLedger};
use crate::sim::{self, format_digest, RunError};
use crate::topology::{DeviceSpec, Mode, NodeId};

pub use config::{parse_config, ConfigError, ScenarioConfig};
pub use report::{
    emit_report, sig6, weighted_mean_wait, Aggregates, BillingTotals, NodeRow, RunReport,
    SessionRow, NODES_HEADER, SESSIONS_HEADER,
};

/// Runs the scenario once in the mode given by its topology.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    run_in_mode(cfg, cfg.run.topology.mode)
}

fn run_in_mode(cfg: &ScenarioConfig, mode: Mode) -> Result<RunReport, RunError> {
    let mut run = cfg.run.clone();
    run.topology = run.topology.with_mode(mode);
    let out = sim::run(&run)?;
    Ok(RunReport::build(
        &out,
        &run.topology,
        run.seed,
        run.horizon_s,
        run.warmup_s,
        &cfg.processing,
    ))
}

/// Energy ratio fog/cloud when both serving nodes are active for
/// `active_s` seconds and idle otherwise.
pub fn equal_activity_energy_ratio(fog: &DeviceSpec, cloud: &DeviceSpec, active_s: f64) -> f64 {
    let f = accrue_energy(&EnergyLedger::new(NodeId(0)), fog, active_s, 0.0)
        .expect("nonnegative duration");
    let c = accrue_energy(&EnergyLedger::new(NodeId(0)), cloud, active_s, 0.0)
        .expect("nonnegative duration");
    f.energy_mj / c.energy_mj
}

/// Reference activity period used in comparison output.
pub const REFERENCE_ACTIVE_S: f64 = 3600.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub cloud: RunReport,
    pub fog: RunReport,
    /// `W_fog - W_cloud`; absent when either run saw no traffic.
    pub delta_wait_s: Option<f64>,
    /// `E_fog - E_cloud`.
    pub delta_energy_mj: f64,
    /// Fog over cloud energy for equal active time.
    pub energy_ratio: f64,
}

/// Runs the same workload and seed cloud-only and fog-augmented.
pub fn compare_frameworks(cfg: &ScenarioConfig) -> Result<Comparison, RunError> {
    let cloud = run_in_mode(cfg, Mode::CloudOnly)?;
    let fog = run_in_mode(cfg, Mode::FogAugmented)?;
    let delta_wait_s = match (fog.aggregates.mean_wait_s, cloud.aggregates.mean_wait_s) {
        (Some(f), Some(c)) => Some(f - c),
        _ => None,
    };
    let delta_energy_mj = fog.aggregates.total_energy_mj - cloud.aggregates.total_energy_mj;
    Ok(Comparison {
        energy_ratio: equal_activity_energy_ratio(
            &cfg.fog_spec,
            &cfg.cloud_spec,
            REFERENCE_ACTIVE_S,
        ),
        cloud,
        fog,
        delta_wait_s,
        delta_energy_mj,
    })
}

impl Comparison {
    pub fn comparison_txt(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "absent".to_owned(), sig6);
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("cloud_mean_wait_s", opt(self.cloud.aggregates.mean_wait_s));
        kv("fog_mean_wait_s", opt(self.fog.aggregates.mean_wait_s));
        kv("delta_wait_s", opt(self.delta_wait_s));
        kv(
            "cloud_total_energy_mj",
            sig6(self.cloud.aggregates.total_energy_mj),
        );
        kv(
            "fog_total_energy_mj",
            sig6(self.fog.aggregates.total_energy_mj),
        );
        kv("delta_energy_mj", sig6(self.delta_energy_mj));
        kv(
            "equal_activity_energy_ratio",
            format!("{}", self.energy_ratio),
        );
        kv("cloud_trace_digest", format_digest(self.cloud.digest));
        kv("fog_trace_digest", format_digest(self.fog.digest));
        s
    }
}

/// Writes `cloud/`, `fog/` and `comparison.txt` into `dir`.
pub fn emit_comparison(c: &Comparison, dir: &Path) -> io::Result<()> {
    emit_report(&c.cloud, &dir.join("cloud"))?;
    emit_report(&c.fog, &dir.join("fog"))?;
    fs::write(dir.join("comparison.txt"), c.comparison_txt())
}

/// Compares frameworks for each seed. Results come back in seed order
/// whether or not the runs execute in parallel.
pub fn sweep(
    cfg: &ScenarioConfig,
    seeds: &[u64],
    parallel: bool,
) -> Result<Vec<(u64, Comparison)>, RunError> {
    let one = |&seed: &u64| compare_frameworks(&cfg.clone().with_seed(seed)).map(|c| (seed, c));
    if parallel {
        seeds.par_iter().map(one).collect()
    } else {
        seeds.iter().map(one).collect()
    }
}

pub const SWEEP_HEADER: &str =
    "seed,cloud_mean_wait_s,fog_mean_wait_s,cloud_energy_mj,fog_energy_mj,cloud_digest,fog_digest";

pub fn sweep_csv(rows: &[(u64, Comparison)]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    let opt = |v: Option<f64>| v.map_or_else(String::new, sig6);
    for (seed, c) in rows {
        let _ = writeln!(
            s,
            "{seed},{},{},{},{},{},{}",
            opt(c.cloud.aggregates.mean_wait_s),
            opt(c.fog.aggregates.mean_wait_s),
            sig6(c.cloud.aggregates.total_energy_mj),
            sig6(c.fog.aggregates.total_energy_mj),
            format_digest(c.cloud.digest),
            format_digest(c.fog.digest),
        );
    }
    s
}
