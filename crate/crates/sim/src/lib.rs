//! File formats and report emission for the `xchain-core` simulator.
//!
//! Configs are [`SimConfig`] documents in JSON. Reports come out as pretty
//! JSON or as a single CSV table with one row per node, one per transaction
//! and a final aggregate row (the `record` column says which).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use xchain_core::coordination::CoordinationEntry;
use xchain_core::ledger::ChainDump;
use xchain_core::perf_model::{
    amortized_rate, round_half_up, tx_rate, CostParams, Role, ScenarioKind,
};
use xchain_core::sim::{SimConfig, SimOutcome, SimReport};
use xchain_core::types::BlockchainId;

pub use xchain_core::sim::{run, scenario_description};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub fn parse_config(text: &str) -> Result<SimConfig> {
    let config: SimConfig = serde_json::from_str(text).context("parsing simulation config")?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

pub fn emit_report(report: &SimReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report)?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => report_csv(report),
    }
}

const CSV_HEADER: [&str; 21] = [
    "record",
    "node",
    "chain",
    "index",
    "role",
    "busy_time",
    "base_tx_count",
    "verify_count",
    "share_verify_count",
    "measured_tps",
    "tx_index",
    "tx_id",
    "instigator",
    "outcome",
    "reason",
    "latency",
    "chains_touched",
    "committed",
    "ignored",
    "atomicity_violations",
    "elapsed",
];

fn snake<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

fn report_csv(report: &SimReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    let blank = String::new;
    for n in &report.nodes {
        let mut row = vec![blank(); CSV_HEADER.len()];
        row[0] = "node".into();
        row[1] = n.node.clone();
        row[2] = n.chain.to_string();
        row[3] = n.index.to_string();
        row[4] = n.role.map(|r| snake(&r)).unwrap_or_default();
        row[5] = n.busy_time.to_string();
        row[6] = n.base_tx_count.to_string();
        row[7] = n.verify_count.to_string();
        row[8] = n.share_verify_count.to_string();
        row[9] = n.measured_tps.map(|t| t.to_string()).unwrap_or_default();
        w.write_record(&row)?;
    }
    for t in &report.transactions {
        let mut row = vec![blank(); CSV_HEADER.len()];
        row[0] = "transaction".into();
        row[10] = t.index.to_string();
        row[11] = t.id.to_string();
        row[12] = t.instigator.clone();
        row[13] = snake(&t.outcome);
        row[14] = t.reason.clone().unwrap_or_default();
        row[15] = t.latency.to_string();
        row[16] = t
            .chains_touched
            .iter()
            .map(BlockchainId::to_string)
            .collect::<Vec<_>>()
            .join(";");
        w.write_record(&row)?;
    }
    let a = &report.aggregate;
    let mut row = vec![blank(); CSV_HEADER.len()];
    row[0] = "aggregate".into();
    row[14] = a.violations.join("; ");
    row[17] = a.committed.to_string();
    row[18] = a.ignored.to_string();
    row[19] = a.atomicity_violations.to_string();
    row[20] = a.elapsed.to_string();
    w.write_record(&row)?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// One JSON object per charged event.
pub fn trace_jsonl(outcome: &SimOutcome) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for e in &outcome.trace {
        serde_json::to_writer(&mut out, e)?;
        out.push(b'\n');
    }
    Ok(out)
}

#[derive(Serialize)]
struct StateDump<'a> {
    chains: &'a std::collections::BTreeMap<BlockchainId, ChainDump>,
    coordination: &'a [CoordinationEntry],
}

/// Committed contract state of every chain plus the coordination entries.
pub fn state_dump_json(outcome: &SimOutcome) -> Result<Vec<u8>> {
    let dump = StateDump {
        chains: &outcome.final_state,
        coordination: &outcome.coordination_entries,
    };
    let mut out = serde_json::to_vec_pretty(&dump)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRow {
    pub scenario: ScenarioKind,
    /// Originating-chain rates, one decimal place.
    pub coordinating_node: f64,
    pub other_node: f64,
    /// Per-node rate with `instigators` rotating, one decimal place.
    pub amortized: f64,
    /// No published reference value exists for this one.
    pub coordination_chain_node: f64,
    pub raw: RawRates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawRates {
    pub coordinating_node: f64,
    pub other_node: f64,
    pub amortized: f64,
    pub coordination_chain_node: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelTable {
    pub base_tx_rate: f64,
    pub bls_verify_time: f64,
    pub instigators: u32,
    pub rows: Vec<ModelRow>,
}

/// Throughput table for `scenarios` (all of them when empty).
pub fn model_table(
    scenarios: &[ScenarioKind],
    params: &CostParams,
    instigators: u32,
) -> Result<ModelTable> {
    params.validate()?;
    let kinds = if scenarios.is_empty() {
        &ScenarioKind::ALL[..]
    } else {
        scenarios
    };
    let mut rows = Vec::new();
    for &s in kinds {
        let raw = RawRates {
            coordinating_node: tx_rate(s, Role::OriginatingCoordinator, params),
            other_node: tx_rate(s, Role::OriginatingOther, params),
            amortized: amortized_rate(s, instigators, params)?,
            coordination_chain_node: tx_rate(s, Role::CoordinationChainNode, params),
        };
        rows.push(ModelRow {
            scenario: s,
            coordinating_node: round_half_up(raw.coordinating_node, 1),
            other_node: round_half_up(raw.other_node, 1),
            amortized: round_half_up(raw.amortized, 1),
            coordination_chain_node: round_half_up(raw.coordination_chain_node, 1),
            raw,
        });
    }
    Ok(ModelTable {
        base_tx_rate: params.base_tx_rate,
        bls_verify_time: params.bls_verify_time,
        instigators,
        rows,
    })
}

pub fn model_csv(table: &ModelTable) -> String {
    let mut out = String::from(
        "scenario,coordinating_node,other_node,instigators,amortized,coordination_chain_node\n",
    );
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{:.1},{:.1},{},{:.1},{:.1}",
            r.scenario,
            r.coordinating_node,
            r.other_node,
            table.instigators,
            r.amortized,
            r.coordination_chain_node
        );
    }
    out
}

pub fn model_json(table: &ModelTable) -> Result<String> {
    Ok(serde_json::to_string_pretty(table)? + "\n")
}
