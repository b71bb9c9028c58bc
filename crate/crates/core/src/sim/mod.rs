//! Simulation driver: configuration, scenario construction, fault
//! injection, the closed-loop transaction driver, atomicity checking and
//! reports.

mod scenario;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use ed25519_dalek::SigningKey;
use serde::{Deserialize, Serialize};

use crate::codec::sha256_parts;
use crate::coordination::{CoordinationEntry, EntryState};
use crate::engine::{Completed, Engine, TraceEvent};
use crate::ledger::{ChainDump, SignalOutcome};
use crate::perf_model::{CostParams, Role, ScenarioKind};
use crate::protocol::{
    build_crosschain_tx, ChainSetup, MultichainNode, Network, NodeId, Outcome, ProtocolError,
    SubmitOptions, TxContext, ValidatorBehavior,
};
use crate::types::{BlockchainId, TxId};

pub use scenario::{scenario_description, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub id: BlockchainId,
    pub n_validators: u32,
    pub threshold_m: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rotation {
    /// Every transaction is instigated by the first instigator.
    #[default]
    Fixed,
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultMode {
    BadShare,
    Silent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineFault {
    pub chain: BlockchainId,
    /// 1-based.
    pub validator_index: u32,
    pub mode: FaultMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    /// A subordinate part fails on its own chain.
    SubordinateFailure,
    /// The signed subordinate call differs from what the caller executes.
    ParameterTamper,
    /// The last subordinate's signed reply is held back past the timeout.
    ForceTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub kind: InjectionKind,
    /// Applied to transactions `every-1, 2*every-1, ...`.
    #[serde(default = "one")]
    pub every: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub scenario: ScenarioKind,
    /// All chains, the coordination chain included. Empty means the
    /// scenario default: ids 0.. with 4 validators and threshold 3.
    pub chains: Vec<ChainConfig>,
    pub coordination_chain: BlockchainId,
    /// Multichain node names. Instigator `i` runs validator `i + 1` on
    /// every chain.
    pub instigators: Vec<String>,
    pub rotation: Rotation,
    pub byzantine: Vec<ByzantineFault>,
    pub injection: Option<Injection>,
    pub tx_count: u64,
    pub timeout_blocks: u64,
    pub block_interval_ms: u64,
    /// Transactions kept in flight; defaults to the number of instigators.
    pub window: Option<u32>,
    pub cost: CostParams,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scenario: ScenarioKind::HotelTrain,
            chains: Vec::new(),
            coordination_chain: BlockchainId(0),
            instigators: alloc::vec![String::from("node1")],
            rotation: Rotation::Fixed,
            byzantine: Vec::new(),
            injection: None,
            tx_count: 100,
            timeout_blocks: 10,
            block_interval_ms: 1000,
            window: None,
            cost: CostParams::default(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("chain {chain} would have {honest} honest validators, below its threshold {m}")]
    ThresholdUnreachable {
        chain: BlockchainId,
        honest: u32,
        m: u32,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl SimConfig {
    pub fn for_scenario(scenario: ScenarioKind) -> Self {
        SimConfig {
            scenario,
            ..SimConfig::default()
        }
    }

    /// App chains needed by the scenario (coordination chain excluded).
    pub fn app_chain_count(&self) -> usize {
        match self.scenario {
            ScenarioKind::HotelTrain => 3,
            ScenarioKind::SupplyChainProvenance | ScenarioKind::Oracle => 2,
        }
    }

    /// `chains` with the default filled in.
    pub fn resolved_chains(&self) -> Vec<ChainConfig> {
        if !self.chains.is_empty() {
            return self.chains.clone();
        }
        let n = (self.instigators.len() as u32).max(4);
        (0..=self.app_chain_count() as u32)
            .map(|i| ChainConfig {
                id: BlockchainId(i),
                n_validators: n,
                threshold_m: 3.min(n),
            })
            .collect()
    }

    pub fn window(&self) -> u32 {
        self.window.unwrap_or(self.instigators.len() as u32).max(1)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(String::from(m)));
        self.cost
            .validate()
            .map_err(|e| SimError::InvalidConfig(format!("{e}")))?;
        if self.instigators.is_empty() {
            return bad("at least one instigator is required");
        }
        if self.block_interval_ms == 0 {
            return bad("block_interval_ms must be positive");
        }
        if self.timeout_blocks == 0 {
            return bad("timeout_blocks must be positive");
        }
        if self.injection.is_some_and(|i| i.every == 0) {
            return bad("injection.every must be positive");
        }
        let chains = self.resolved_chains();
        let ids: BTreeSet<BlockchainId> = chains.iter().map(|c| c.id).collect();
        if ids.len() != chains.len() {
            return bad("duplicate chain id");
        }
        if !ids.contains(&self.coordination_chain) {
            return bad("coordination_chain is not among chains");
        }
        if chains.len() != self.app_chain_count() + 1 {
            return Err(SimError::InvalidConfig(format!(
                "scenario {} needs {} chains besides the coordination chain",
                self.scenario,
                self.app_chain_count()
            )));
        }
        for c in &chains {
            if c.threshold_m == 0 || c.threshold_m > c.n_validators {
                return Err(SimError::InvalidConfig(format!(
                    "chain {}: need 1 <= threshold_m <= n_validators",
                    c.id
                )));
            }
            if (c.n_validators as usize) < self.instigators.len() {
                // Coverage: every instigator needs a validator on every chain.
                return Err(SimError::InvalidConfig(format!(
                    "chain {} has {} validators but there are {} instigators",
                    c.id,
                    c.n_validators,
                    self.instigators.len()
                )));
            }
        }
        for f in &self.byzantine {
            let Some(c) = chains.iter().find(|c| c.id == f.chain) else {
                return Err(SimError::InvalidConfig(format!(
                    "byzantine fault on unknown chain {}",
                    f.chain
                )));
            };
            if f.chain == self.coordination_chain {
                return bad(
                    "the coordination chain does not sign messages; faults there have no effect",
                );
            }
            if f.validator_index == 0 || f.validator_index > c.n_validators {
                return Err(SimError::InvalidConfig(format!(
                    "validator {} does not exist on chain {}",
                    f.validator_index, f.chain
                )));
            }
        }
        Ok(())
    }

    /// App chains in ascending id order.
    pub fn app_chains(&self) -> Vec<ChainConfig> {
        self.resolved_chains()
            .into_iter()
            .filter(|c| c.id != self.coordination_chain)
            .collect()
    }

    pub fn multichain_nodes(&self) -> Vec<MultichainNode> {
        let chains = self.resolved_chains();
        self.instigators
            .iter()
            .enumerate()
            .map(|(i, name)| MultichainNode {
                operator: name.clone(),
                validators: chains.iter().map(|c| (c.id, i as u32 + 1)).collect(),
            })
            .collect()
    }
}

/// Adds `faults` to `config`, refusing combinations that leave a chain
/// unable to reach its signing threshold.
pub fn inject_byzantine(
    config: &SimConfig,
    faults: &[ByzantineFault],
) -> Result<SimConfig, SimError> {
    let mut out = config.clone();
    out.byzantine.extend_from_slice(faults);
    out.validate()?;
    for c in out.resolved_chains() {
        let bad: BTreeSet<u32> = out
            .byzantine
            .iter()
            .filter(|f| f.chain == c.id)
            .map(|f| f.validator_index)
            .collect();
        let honest = c.n_validators - bad.len() as u32;
        if honest < c.threshold_m {
            return Err(SimError::ThresholdUnreachable {
                chain: c.id,
                honest,
                m: c.threshold_m,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node: String,
    pub chain: BlockchainId,
    pub index: u32,
    pub role: Option<Role>,
    /// Seconds.
    pub busy_time: f64,
    pub base_tx_count: u64,
    pub verify_count: u64,
    pub share_verify_count: u64,
    /// Completed crosschain transactions per second of busy time.
    pub measured_tps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxReport {
    pub index: u64,
    pub id: TxId,
    pub instigator: String,
    pub outcome: Outcome,
    pub reason: Option<String>,
    /// Seconds from submission to the last signalling transaction.
    pub latency: f64,
    pub chains_touched: Vec<BlockchainId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub committed: u64,
    pub ignored: u64,
    pub atomicity_violations: u64,
    /// Virtual seconds until the last transaction finished.
    pub elapsed: f64,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub nodes: Vec<NodeReport>,
    pub transactions: Vec<TxReport>,
    pub aggregate: Aggregate,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: SimReport,
    pub trace: Vec<TraceEvent>,
    pub final_state: BTreeMap<BlockchainId, ChainDump>,
    pub coordination_entries: Vec<CoordinationEntry>,
}

/// Builds the network and contracts for `config`.
pub fn build_scenario(config: &SimConfig) -> Result<Scenario, SimError> {
    config.validate()?;
    let chains = config.resolved_chains();
    let coord = chains
        .iter()
        .find(|c| c.id == config.coordination_chain)
        .expect("validated");
    let setup = |c: &ChainConfig| ChainSetup {
        id: c.id,
        n_validators: c.n_validators,
        threshold_m: c.threshold_m,
    };
    let apps: Vec<ChainSetup> = config.app_chains().iter().map(setup).collect();
    let mut network = Network::new(
        setup(coord),
        &apps,
        config.block_interval_ms * 1_000_000,
        config.seed,
    )?;
    for f in &config.byzantine {
        let behavior = match f.mode {
            FaultMode::BadShare => ValidatorBehavior::BadShare,
            FaultMode::Silent => ValidatorBehavior::Silent,
        };
        network.set_behavior(NodeId::new(f.chain, f.validator_index), behavior)?;
    }
    Ok(Scenario::deploy(config, network))
}

fn sender_key(seed: u64) -> SigningKey {
    SigningKey::from_bytes(&sha256_parts(b"xchain/sender", &[&seed.to_be_bytes()]))
}

fn nonce(seed: u64, k: u64) -> u64 {
    let h = sha256_parts(b"xchain/nonce", &[&seed.to_be_bytes(), &k.to_be_bytes()]);
    u64::from_be_bytes(h[..8].try_into().expect("8 bytes"))
}

struct Pending {
    index: u64,
    slot: u32,
    instigator: usize,
    before: Option<BTreeMap<BlockchainId, ChainDump>>,
}

/// Runs `config.tx_count` crosschain transactions to completion.
pub fn run(config: &SimConfig) -> Result<SimOutcome, SimError> {
    let mut scenario = build_scenario(config)?;
    let nodes = config.multichain_nodes();
    let signer = sender_key(config.seed);
    let mut engine = Engine::new(scenario.take_network(), &config.cost);
    let window = config.window();
    // With one transaction in flight, whole-state snapshots give an exact
    // per-transaction atomicity check.
    let snapshot = window == 1;
    let interval_ns = config.block_interval_ms * 1_000_000;

    let mut free: BTreeSet<u32> = (0..window).collect();
    let mut pending: BTreeMap<TxId, Pending> = BTreeMap::new();
    let mut next: u64 = 0;
    let mut txs: Vec<TxReport> = Vec::new();
    let mut violations: Vec<String> = Vec::new();
    let mut committed_slots: Vec<(u64, u32)> = Vec::new();
    let mut last_finish = 0u64;

    loop {
        while next < config.tx_count && !free.is_empty() {
            let slot = free.pop_first().expect("non-empty");
            let instigator = match config.rotation {
                Rotation::Fixed => 0,
                Rotation::RoundRobin => (next % nodes.len() as u64) as usize,
            };
            let injection = config
                .injection
                .filter(|i| (next + 1).is_multiple_of(i.every))
                .map(|i| i.kind);
            let spec = scenario.spec(next, slot, injection);
            let ctx = TxContext {
                coordination_chain: config.coordination_chain,
                coordination_contract: crate::protocol::COORDINATION_CONTRACT,
                timeout_block: engine.current_block() + config.timeout_blocks,
                nonce: nonce(config.seed, next),
            };
            let tx = build_crosschain_tx(&spec, &signer, ctx, &nodes[instigator])?;
            let mut options = SubmitOptions::default();
            if injection == Some(InjectionKind::ForceTimeout) {
                let last = tx.subordinates.len().saturating_sub(1);
                options.stall =
                    Some((alloc::vec![last], (config.timeout_blocks + 2) * interval_ns));
            }
            let before = snapshot.then(|| dump_all(&engine));
            pending.insert(
                tx.crosschain_tx_id,
                Pending {
                    index: next,
                    slot,
                    instigator,
                    before,
                },
            );
            engine.submit(tx, &nodes[instigator], options)?;
            next += 1;
        }
        if pending.is_empty() {
            break;
        }
        let done = engine.run_until_finished();
        if done.is_empty() {
            violations.push(format!("{} transactions never finished", pending.len()));
            break;
        }
        for c in done {
            let Some(p) = pending.remove(&c.finished.tx_id) else {
                continue;
            };
            free.insert(p.slot);
            last_finish = last_finish.max(c.finished_ns);
            check_transaction(&engine, &c, p.before.as_ref(), &mut violations);
            if c.finished.outcome == Outcome::Committed {
                committed_slots.push((p.index, p.slot));
            }
            txs.push(TxReport {
                index: p.index,
                id: c.finished.tx_id,
                instigator: nodes[p.instigator].operator.clone(),
                outcome: c.finished.outcome,
                reason: c.finished.reason.clone(),
                latency: (c.finished_ns - c.submitted_ns) as f64 / 1e9,
                chains_touched: c.finished.chains_touched.clone(),
            });
        }
    }
    // Late messages and timeout checks of finished transactions.
    engine.run_to_idle();

    let network = engine.network();
    for id in network.chain_ids() {
        let chain = network.chain(id).expect("listed");
        for contract in chain.contracts() {
            if let Some(by) = contract.lock() {
                violations.push(format!(
                    "contract {} on chain {id} still locked by {by}",
                    contract.address()
                ));
            }
        }
    }
    violations.extend(scenario.audit(network, &committed_slots));

    txs.sort_by_key(|t| t.index);
    let completed = txs.len() as u64;
    let committed = txs
        .iter()
        .filter(|t| t.outcome == Outcome::Committed)
        .count() as u64;
    let roles = scenario.roles(config);
    let node_reports = engine
        .stats()
        .iter()
        .map(|(node, s)| {
            let busy = s.busy_ns as f64 / 1e9;
            NodeReport {
                node: format!("{node}"),
                chain: node.chain,
                index: node.index,
                role: roles.get(node).copied(),
                busy_time: busy,
                base_tx_count: s.base_tx_count,
                verify_count: s.verify_count,
                share_verify_count: s.share_verify_count,
                measured_tps: (s.busy_ns > 0).then(|| completed as f64 / busy),
            }
        })
        .collect();

    let report = SimReport {
        scenario: config.scenario,
        seed: config.seed,
        nodes: node_reports,
        transactions: txs,
        aggregate: Aggregate {
            committed,
            ignored: completed - committed,
            atomicity_violations: violations.len() as u64,
            elapsed: last_finish as f64 / 1e9,
            violations,
        },
    };
    Ok(SimOutcome {
        report,
        trace: engine.trace().to_vec(),
        final_state: dump_all(&engine),
        coordination_entries: engine.network().coordination().entries().cloned().collect(),
    })
}

fn dump_all(engine: &Engine) -> BTreeMap<BlockchainId, ChainDump> {
    let n = engine.network();
    n.chain_ids()
        .map(|id| (id, n.chain(id).expect("listed").dump()))
        .collect()
}

fn check_transaction(
    engine: &Engine,
    c: &Completed,
    before: Option<&BTreeMap<BlockchainId, ChainDump>>,
    violations: &mut Vec<String>,
) {
    let f = &c.finished;
    let id = f.tx_id;
    let network = engine.network();
    for chain in network.chain_ids() {
        if !network
            .chain(chain)
            .expect("listed")
            .locked_by(id)
            .is_empty()
        {
            violations.push(format!(
                "{id}: locks left on chain {chain} after signalling"
            ));
        }
    }
    let entry = network.coordination().entry(id).map(|e| e.state).ok();
    match f.outcome {
        Outcome::Committed => {
            if f.signals
                .iter()
                .any(|s| s.outcome != SignalOutcome::Commit || !s.applied)
            {
                violations.push(format!(
                    "{id}: committed but not every chain applied a commit"
                ));
            }
            if entry != Some(EntryState::Committed) {
                violations.push(format!(
                    "{id}: committed without a committed coordination entry"
                ));
            }
            if f.executed != f.transaction_parts {
                violations.push(format!("{id}: committed but not every part executed"));
            }
        }
        Outcome::Ignored => {
            if f.signals.iter().any(|s| s.outcome == SignalOutcome::Commit) {
                violations.push(format!("{id}: ignored but a commit was signalled"));
            }
            if entry == Some(EntryState::Committed) {
                violations.push(format!(
                    "{id}: ignored but the coordination entry is committed"
                ));
            }
            if let Some(before) = before {
                if *before != dump_all(engine) {
                    violations.push(format!("{id}: ignored but committed state changed"));
                }
            }
        }
    }
}
