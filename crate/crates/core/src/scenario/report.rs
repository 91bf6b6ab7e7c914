//! Run reports and their on-disk form.
//!
//! A report directory holds:
//!
//! * `nodes.csv`: one row per node,
//!   `node_id,tier,lambda_hat,mean_wait_s,mean_in_system,utilization,active_time_s,idle_time_s,energy_mj`
//! * `sessions.csv`: one row per started charging session,
//!   `session_id,vehicle_id,outlet_meter,owner_meter,state,energy_kwh,amount`
//! * `summary.txt`: `key = value` lines with framework aggregates and the
//!   trace digest.
//!
//! Numbers are written with 6 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::billing::SessionState;
use crate::energy::{processing_time, EnergyLedger, ProcessingModel};
use crate::sim::{format_digest, PrivacyAudit, QueueStats, RunOutput};
use crate::topology::{Mode, NodeId, Tier, Topology};

pub const NODES_HEADER: &str =
    "node_id,tier,lambda_hat,mean_wait_s,mean_in_system,utilization,active_time_s,idle_time_s,energy_mj";
pub const SESSIONS_HEADER: &str =
    "session_id,vehicle_id,outlet_meter,owner_meter,state,energy_kwh,amount";

/// Six significant digits, `%g` style: fixed notation for exponents in
/// `-4..6`, otherwise `1.5e-7` (Rust exponent syntax, no `+` or padding).
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_owned()))
    }
}

fn trim_zeros(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRow {
    pub node_id: NodeId,
    pub tier: Tier,
    pub stats: QueueStats,
    pub energy: EnergyLedger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRow {
    pub session_id: u64,
    pub vehicle_id: String,
    pub outlet_meter: NodeId,
    pub owner_meter: Option<NodeId>,
    pub state: SessionState,
    pub energy_kwh: f64,
    pub amount: f64,
}

/// Totals over the whole framework.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    /// Arrival-weighted mean of per-server sojourn times; absent without
    /// traffic.
    pub mean_wait_s: Option<f64>,
    pub total_energy_mj: f64,
    pub total_messages: u64,
    pub delivered_messages: u64,
    pub in_system_messages: u64,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BillingTotals {
    pub sessions: usize,
    pub billed: usize,
    pub rejected: usize,
    pub delivered_kwh: f64,
    pub metered_kwh: f64,
    pub billed_kwh: f64,
    pub billed_amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub mode: Mode,
    pub seed: u64,
    pub horizon_s: f64,
    pub warmup_s: f64,
    pub nodes: Vec<NodeRow>,
    pub sessions: Vec<SessionRow>,
    pub aggregates: Aggregates,
    pub billing: BillingTotals,
    pub privacy: PrivacyAudit,
    /// Modeled processing time for the run's data set (one element per
    /// generated message).
    pub processing_time_ms: f64,
    pub digest: u64,
}

/// Arrival-weighted mean sojourn over the given rows.
pub fn weighted_mean_wait<'a>(rows: impl IntoIterator<Item = &'a QueueStats>) -> Option<f64> {
    let (num, den) = rows
        .into_iter()
        .filter(|s| s.samples > 0)
        .fold((0.0, 0.0), |(n, d), s| {
            (n + s.lambda_hat * s.mean_wait_s, d + s.lambda_hat)
        });
    (den > 0.0).then(|| num / den)
}

impl RunReport {
    pub fn build(
        out: &RunOutput,
        topology: &Topology,
        seed: u64,
        horizon_s: f64,
        warmup_s: f64,
        processing: &ProcessingModel,
    ) -> RunReport {
        let nodes: Vec<NodeRow> = out
            .stats
            .iter()
            .zip(&out.energy)
            .map(|(s, e)| NodeRow {
                node_id: s.node,
                tier: topology
                    .node(s.node)
                    .map(|n| n.tier)
                    .unwrap_or(Tier::Device),
                stats: s.clone(),
                energy: e.clone(),
            })
            .collect();

        let sessions: Vec<SessionRow> = out
            .sessions
            .iter()
            .map(|s| SessionRow {
                session_id: s.session_id,
                vehicle_id: s.vehicle_id.clone(),
                outlet_meter: s.outlet_meter,
                owner_meter: s.owner_meter,
                state: s.state(),
                energy_kwh: s.energy_kwh,
                amount: out
                    .bills
                    .iter()
                    .find(|b| b.session_id == s.session_id)
                    .map_or(0.0, |b| b.amount),
            })
            .collect();

        let aggregates = Aggregates {
            mean_wait_s: weighted_mean_wait(nodes.iter().map(|n| &n.stats)),
            total_energy_mj: nodes.iter().map(|n| n.energy.energy_mj).sum(),
            total_messages: out.messages.generated,
            delivered_messages: out.messages.delivered,
            in_system_messages: out.messages.in_system,
            samples: nodes.iter().map(|n| n.stats.samples).sum(),
        };

        let metered_kwh = out
            .sessions
            .iter()
            .filter(|s| matches!(s.state(), SessionState::Metered | SessionState::Billed))
            .map(|s| s.energy_kwh)
            .sum();
        let billing = BillingTotals {
            sessions: out.sessions.len(),
            billed: out
                .sessions
                .iter()
                .filter(|s| s.state() == SessionState::Billed)
                .count(),
            rejected: out
                .sessions
                .iter()
                .filter(|s| s.state() == SessionState::Rejected)
                .count(),
            delivered_kwh: out.supplies.iter().map(|s| s.energy_kwh).sum(),
            metered_kwh,
            billed_kwh: out.bills.iter().map(|b| b.energy_kwh).sum(),
            billed_amount: out.bills.iter().map(|b| b.amount).sum(),
        };

        RunReport {
            mode: topology.mode,
            seed,
            horizon_s,
            warmup_s,
            nodes,
            sessions,
            aggregates,
            billing,
            privacy: out.privacy,
            processing_time_ms: processing_time(processing, out.messages.generated.max(1))
                .expect("n >= 1"),
            digest: out.digest,
        }
    }

    pub fn nodes_csv(&self) -> String {
        let mut s = String::from(NODES_HEADER);
        s.push('\n');
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                n.node_id,
                n.tier,
                sig6(n.stats.lambda_hat),
                sig6(n.stats.mean_wait_s),
                sig6(n.stats.mean_in_system),
                sig6(n.stats.utilization),
                sig6(n.energy.active_time_s),
                sig6(n.energy.idle_time_s),
                sig6(n.energy.energy_mj),
            );
        }
        s
    }

    pub fn sessions_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(SESSIONS_HEADER.split(','))
            .expect("in-memory write");
        for r in &self.sessions {
            w.write_record([
                r.session_id.to_string(),
                r.vehicle_id.clone(),
                r.outlet_meter.to_string(),
                r.owner_meter.map(|m| m.to_string()).unwrap_or_default(),
                r.state.to_string(),
                sig6(r.energy_kwh),
                sig6(r.amount),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn summary_txt(&self) -> String {
        let a = &self.aggregates;
        let b = &self.billing;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("mode", self.mode.as_str().to_owned());
        kv("seed", self.seed.to_string());
        kv("horizon_s", sig6(self.horizon_s));
        kv("warmup_s", sig6(self.warmup_s));
        kv(
            "mean_wait_s",
            a.mean_wait_s.map_or_else(|| "absent".to_owned(), sig6),
        );
        kv("total_energy_mj", sig6(a.total_energy_mj));
        kv("total_messages", a.total_messages.to_string());
        kv("delivered_messages", a.delivered_messages.to_string());
        kv("in_system_messages", a.in_system_messages.to_string());
        kv("samples", a.samples.to_string());
        kv("sessions", b.sessions.to_string());
        kv("sessions_billed", b.billed.to_string());
        kv("sessions_rejected", b.rejected.to_string());
        kv("energy_delivered_kwh", sig6(b.delivered_kwh));
        kv("energy_metered_kwh", sig6(b.metered_kwh));
        kv("energy_billed_kwh", sig6(b.billed_kwh));
        kv("billed_amount", sig6(b.billed_amount));
        kv("sealed_at_fog", self.privacy.sealed_at_fog.to_string());
        kv(
            "fog_private_reads",
            self.privacy.fog_private_reads.to_string(),
        );
        kv("processing_time_ms", sig6(self.processing_time_ms));
        kv("trace_digest", format_digest(self.digest));
        s
    }
}

/// Writes `nodes.csv`, `sessions.csv` and `summary.txt` into `dir`.
pub fn emit_report(r: &RunReport, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("nodes.csv"), r.nodes_csv())?;
    fs::write(dir.join("sessions.csv"), r.sessions_csv())?;
    fs::write(dir.join("summary.txt"), r.summary_txt())?;
    Ok(())
}
