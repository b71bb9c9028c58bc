//! Analytical throughput model.
//!
//! A node's rate for one scenario/role is
//!
//! ```text
//! rate = 1 / (base_tx_count / base_tx_rate + verify_count * bls_verify_time)
//! ```
//!
//! Only the coordinating node's rate is worked through in the source
//! material. The other-node count for Hotel-Train (2) is back-solved from
//! the published 65.2 tps: `1 / (2/375 + 2 * 0.005) = 65.2`.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::TraceEvent;
use crate::protocol::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    /// Plain transactions per second a node sustains.
    pub base_tx_rate: f64,
    /// Seconds per BLS group-signature verification.
    pub bls_verify_time: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            base_tx_rate: 375.0,
            bls_verify_time: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PerfError {
    #[error("base transaction rate must be positive and finite")]
    BadBaseRate,
    #[error("verification time must be non-negative and finite")]
    BadVerifyTime,
    #[error("at least one instigator is required")]
    NoInstigators,
    #[error("the trace has no events for the requested node")]
    EmptyTrace,
    #[error("unknown scenario")]
    UnknownScenario,
}

impl CostParams {
    pub fn new(base_tx_rate: f64, bls_verify_time: f64) -> Result<Self, PerfError> {
        let p = CostParams {
            base_tx_rate,
            bls_verify_time,
        };
        p.validate()?;
        Ok(p)
    }

    /// Zero verify time is accepted so that the crypto cost can be switched off.
    pub fn validate(&self) -> Result<(), PerfError> {
        if !(self.base_tx_rate.is_finite() && self.base_tx_rate > 0.0) {
            return Err(PerfError::BadBaseRate);
        }
        if !(self.bls_verify_time.is_finite() && self.bls_verify_time >= 0.0) {
            return Err(PerfError::BadVerifyTime);
        }
        Ok(())
    }

    pub fn base_cost(&self) -> f64 {
        1.0 / self.base_tx_rate
    }

    pub fn base_cost_ns(&self) -> u64 {
        round_ns(1e9 / self.base_tx_rate)
    }

    pub fn verify_cost_ns(&self) -> u64 {
        round_ns(self.bls_verify_time * 1e9)
    }
}

fn round_ns(x: f64) -> u64 {
    (x + 0.5) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    HotelTrain,
    #[serde(alias = "supply_chain")]
    SupplyChainProvenance,
    Oracle,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::HotelTrain,
        ScenarioKind::SupplyChainProvenance,
        ScenarioKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::HotelTrain => "hotel_train",
            ScenarioKind::SupplyChainProvenance => "supply_chain_provenance",
            ScenarioKind::Oracle => "oracle",
        }
    }

    pub fn profile(self) -> ScenarioProfile {
        let (n_subordinate_tx, n_subordinate_views) = match self {
            ScenarioKind::HotelTrain => (2, 0),
            ScenarioKind::SupplyChainProvenance => (1, 0),
            ScenarioKind::Oracle => (0, 1),
        };
        ScenarioProfile {
            name: self,
            n_subordinate_tx,
            n_subordinate_views,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = PerfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: alloc::string::String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match norm.as_str() {
            "hoteltrain" => Ok(ScenarioKind::HotelTrain),
            "supplychainprovenance" | "supplychain" => Ok(ScenarioKind::SupplyChainProvenance),
            "oracle" => Ok(ScenarioKind::Oracle),
            _ => Err(PerfError::UnknownScenario),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    OriginatingCoordinator,
    OriginatingOther,
    CoordinationChainNode,
    SubordinateCoordinator,
    SubordinateViewServer,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::OriginatingCoordinator,
        Role::OriginatingOther,
        Role::CoordinationChainNode,
        Role::SubordinateCoordinator,
        Role::SubordinateViewServer,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioProfile {
    pub name: ScenarioKind,
    pub n_subordinate_tx: u32,
    pub n_subordinate_views: u32,
}

impl ScenarioProfile {
    /// Group-signature verifications per crosschain transaction.
    pub fn verify_count(&self, role: Role) -> u32 {
        let incoming = self.n_subordinate_tx + self.n_subordinate_views;
        match role {
            Role::OriginatingCoordinator => incoming + 2,
            Role::OriginatingOther => incoming,
            Role::CoordinationChainNode => 2,
            // Per hosted part; scenarios host at most one part per chain.
            Role::SubordinateCoordinator => u32::from(self.n_subordinate_tx > 0),
            Role::SubordinateViewServer => u32::from(self.n_subordinate_views > 0),
        }
    }

    /// Base-rate transactions per crosschain transaction.
    pub fn base_tx_count(&self, role: Role) -> u32 {
        match role {
            // Originating (or subordinate) transaction plus the Signalling Transaction.
            Role::OriginatingCoordinator | Role::OriginatingOther | Role::CoordinationChainNode => {
                2
            }
            Role::SubordinateCoordinator => {
                if self.n_subordinate_tx > 0 {
                    2
                } else {
                    0
                }
            }
            // The view call itself.
            Role::SubordinateViewServer => u32::from(self.n_subordinate_views > 0),
        }
    }
}

pub fn verify_count(scenario: ScenarioKind, role: Role) -> u32 {
    scenario.profile().verify_count(role)
}

pub fn base_tx_count(scenario: ScenarioKind, role: Role) -> u32 {
    scenario.profile().base_tx_count(role)
}

fn rate(base: f64, verifies: f64, params: &CostParams) -> f64 {
    1.0 / (base / params.base_tx_rate + verifies * params.bls_verify_time)
}

/// Transactions per second for a node in `role`. Infinite when the role
/// does no work in the scenario.
pub fn tx_rate(scenario: ScenarioKind, role: Role, params: &CostParams) -> f64 {
    let p = scenario.profile();
    rate(
        f64::from(p.base_tx_count(role)),
        f64::from(p.verify_count(role)),
        params,
    )
}

/// One row of the throughput table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub scenario: ScenarioKind,
    pub coordinating_node: f64,
    pub other_node: f64,
}

impl Table3Row {
    pub fn rounded(&self) -> Table3Row {
        Table3Row {
            scenario: self.scenario,
            coordinating_node: round_half_up(self.coordinating_node, 1),
            other_node: round_half_up(self.other_node, 1),
        }
    }
}

/// Raw (unrounded) originating-chain rates for every scenario.
pub fn table3(params: &CostParams) -> Vec<Table3Row> {
    ScenarioKind::ALL
        .iter()
        .map(|&s| Table3Row {
            scenario: s,
            coordinating_node: tx_rate(s, Role::OriginatingCoordinator, params),
            other_node: tx_rate(s, Role::OriginatingOther, params),
        })
        .collect()
}

/// Rounds to `decimals` places, halves upward.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = libm_pow10(decimals);
    // Nudge by a few ulps so values like 65.25 stored as 65.249999... round up.
    let y = x * scale;
    let nudged = y + y.abs() * 4.0 * f64::EPSILON;
    floor(nudged + 0.5) / scale
}

fn libm_pow10(d: u32) -> f64 {
    (0..d).fold(1.0, |acc, _| acc * 10.0)
}

fn floor(x: f64) -> f64 {
    let t = x as i64 as f64;
    if t > x {
        t - 1.0
    } else {
        t
    }
}

/// Per-node rate when `n` instigators take turns coordinating.
pub fn amortized_rate(
    scenario: ScenarioKind,
    n: u32,
    params: &CostParams,
) -> Result<f64, PerfError> {
    if n == 0 {
        return Err(PerfError::NoInstigators);
    }
    let p = scenario.profile();
    let other = f64::from(p.verify_count(Role::OriginatingOther));
    let extra = f64::from(p.verify_count(Role::OriginatingCoordinator)) - other;
    let base = f64::from(p.base_tx_count(Role::OriginatingOther));
    Ok(rate(base, other + extra / f64::from(n), params))
}

/// What a simulated node's rate is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    Role(ScenarioKind, Role),
    /// An originating-chain validator under `n` rotating instigators.
    Amortized(ScenarioKind, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub analytical: f64,
    pub measured: f64,
    pub relative_error: f64,
    pub transactions: u64,
    pub busy_time: f64,
}

/// Measured rate of `node` from its trace charges: distinct crosschain
/// transactions it worked on divided by the cost of the work, priced with
/// `params`.
pub fn compare_with_simulation(
    trace: &[TraceEvent],
    node: NodeId,
    expectation: Expectation,
    params: &CostParams,
) -> Result<Comparison, PerfError> {
    let mut txs = BTreeSet::new();
    let mut busy = 0.0;
    for e in trace.iter().filter(|e| e.node == node) {
        txs.insert(e.crosschain_tx_id);
        busy += f64::from(e.base_tx_charged) / params.base_tx_rate
            + f64::from(e.verifications_charged) * params.bls_verify_time;
    }
    if txs.is_empty() {
        return Err(PerfError::EmptyTrace);
    }
    let measured = txs.len() as f64 / busy;
    let analytical = match expectation {
        Expectation::Role(s, r) => tx_rate(s, r, params),
        Expectation::Amortized(s, n) => amortized_rate(s, n, params)?,
    };
    Ok(Comparison {
        analytical,
        measured,
        relative_error: (measured - analytical).abs() / analytical,
        transactions: txs.len() as u64,
        busy_time: busy,
    })
}
