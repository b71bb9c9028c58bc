//! The simulated network of chains and the per-transaction protocol state
//! machine. [`Network::handle`] performs one [`Action`] at one node and
//! reports the work done and the follow-up actions; timing is left to the
//! caller.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    threshold_sign_round, CrosschainTransaction, MultichainNode, NodeId, ProtocolError, TxKind,
    ValidatorBehavior,
};
use crate::coordination::{CoordinationContract, EntryState};
use crate::ledger::{Chain, SignalOutcome, SubordinateCallRecord, ViewCall};
use crate::message::{MessageBody, MessageKind, ProtocolMessage};
use crate::threshold::{keygen, KeySet, MemoVerifier, ThresholdParams};
use crate::types::{Address, BlockchainId, TxId, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSetup {
    pub id: BlockchainId,
    pub n_validators: u32,
    pub threshold_m: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Committed,
    Ignored,
}

/// Signalling transaction delivered to one chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub chain: BlockchainId,
    pub outcome: SignalOutcome,
    /// False when the chain held no locks for the transaction.
    pub applied: bool,
}

/// A crosschain transaction that has run to completion, signalling included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finished {
    pub tx_id: TxId,
    pub outcome: Outcome,
    pub reason: Option<String>,
    pub chains_touched: Vec<BlockchainId>,
    pub signals: Vec<SignalRecord>,
    /// Paths of transaction parts that were mined and locked.
    pub executed: Vec<Vec<usize>>,
    /// Paths of every non-view part, in path order.
    pub transaction_parts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Node(NodeId),
    /// Observations that take no node time (timeout checks).
    Network,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Submit {
        tx_id: TxId,
    },
    CoordStart {
        tx_id: TxId,
        msg: ProtocolMessage,
    },
    ExecutePart {
        tx_id: TxId,
        path: Vec<usize>,
    },
    ViewResult {
        tx_id: TxId,
        path: Vec<usize>,
        msg: ProtocolMessage,
    },
    Ready {
        tx_id: TxId,
        path: Vec<usize>,
        msg: ProtocolMessage,
    },
    SubordinateFailed {
        tx_id: TxId,
        path: Vec<usize>,
        reason: String,
    },
    CoordDecide {
        tx_id: TxId,
        msg: ProtocolMessage,
    },
    TimeoutCheck {
        tx_id: TxId,
    },
    Signal {
        tx_id: TxId,
        chain: BlockchainId,
        outcome: SignalOutcome,
    },
}

/// Work charged to a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Charge {
    pub node: NodeId,
    pub tx_id: TxId,
    pub event: &'static str,
    pub base_tx: u32,
    pub verifications: u32,
    /// Individual signature-share verifications (Byzantine recovery).
    pub share_verifications: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Step {
    pub charges: Vec<Charge>,
    /// Sent when the acting node finishes its work.
    pub next: Vec<(Target, Action)>,
    /// Sent `delay` ns after the acting node finishes.
    pub delayed: Vec<(u64, Target, Action)>,
    /// Fired at an absolute virtual time (ns).
    pub at: Vec<(u64, Target, Action)>,
    pub finished: Vec<Finished>,
}

#[derive(Debug, Clone, Default)]
pub struct SubmitOptions {
    /// Holds back the signed Ready or view result of the part at `path`
    /// by the given number of ns.
    pub stall: Option<(Vec<usize>, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Starting,
    Running,
    Deciding,
    Signalling,
}

#[derive(Debug, Clone)]
struct Inflight {
    tx: CrosschainTransaction,
    instigator: MultichainNode,
    phase: Phase,
    view_results: BTreeMap<Vec<usize>, Value>,
    executed: BTreeSet<Vec<usize>>,
    pending_ready: BTreeSet<Vec<usize>>,
    root_done: bool,
    outcome: Option<Outcome>,
    reason: Option<String>,
    pending_signals: BTreeSet<BlockchainId>,
    signals: Vec<SignalRecord>,
    stall: Option<(Vec<usize>, u64)>,
}

#[derive(Debug, Clone)]
struct AppChain {
    ledger: Chain,
    keys: KeySet,
    behaviors: Vec<ValidatorBehavior>,
}

#[derive(Debug, Clone)]
pub struct Network {
    chains: BTreeMap<BlockchainId, AppChain>,
    coordination: CoordinationContract,
    coordination_validators: u32,
    block_interval_ns: u64,
    verifier: MemoVerifier,
    /// Per signing coordinator, validators it has seen produce bad shares.
    reputation: BTreeMap<NodeId, BTreeSet<u32>>,
    inflight: BTreeMap<TxId, Inflight>,
}

/// Address of the coordination contract on the coordination chain.
pub const COORDINATION_CONTRACT: Address = Address(1);

fn chain_seed(seed: u64, chain: BlockchainId) -> u64 {
    seed ^ (u64::from(chain.0) + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

impl Network {
    pub fn new(
        coordination: ChainSetup,
        chains: &[ChainSetup],
        block_interval_ns: u64,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        let mut contract = CoordinationContract::new(coordination.id, COORDINATION_CONTRACT);
        let mut map = BTreeMap::new();
        for c in chains {
            if c.id == coordination.id || map.contains_key(&c.id) {
                return Err(ProtocolError::Malformed("chain ids must be distinct"));
            }
            let params = ThresholdParams::new(c.n_validators, c.threshold_m)
                .map_err(|_| ProtocolError::Malformed("invalid threshold parameters"))?;
            let keys = keygen(params, chain_seed(seed, c.id));
            contract.register_public_key(c.id, keys.group_key);
            map.insert(
                c.id,
                AppChain {
                    ledger: Chain::new(c.id),
                    keys,
                    behaviors: vec![ValidatorBehavior::Honest; c.n_validators as usize],
                },
            );
        }
        Ok(Network {
            chains: map,
            coordination: contract,
            coordination_validators: coordination.n_validators,
            block_interval_ns: block_interval_ns.max(1),
            verifier: MemoVerifier::new(),
            reputation: BTreeMap::new(),
            inflight: BTreeMap::new(),
        })
    }

    pub fn coordination(&self) -> &CoordinationContract {
        &self.coordination
    }

    pub fn coordination_chain(&self) -> BlockchainId {
        self.coordination.chain()
    }

    pub fn block_interval_ns(&self) -> u64 {
        self.block_interval_ns
    }

    pub fn chain(&self, id: BlockchainId) -> Option<&Chain> {
        self.chains.get(&id).map(|c| &c.ledger)
    }

    pub fn chain_mut(&mut self, id: BlockchainId) -> Option<&mut Chain> {
        self.chains.get_mut(&id).map(|c| &mut c.ledger)
    }

    pub fn chain_ids(&self) -> impl Iterator<Item = BlockchainId> + '_ {
        self.chains.keys().copied()
    }

    pub fn keys(&self, id: BlockchainId) -> Option<&KeySet> {
        self.chains.get(&id).map(|c| &c.keys)
    }

    /// Every validator node, coordination chain first.
    pub fn nodes(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = (1..=self.coordination_validators)
            .map(|i| NodeId::new(self.coordination.chain(), i))
            .collect();
        for (id, c) in &self.chains {
            out.extend((1..=c.keys.params.n()).map(|i| NodeId::new(*id, i)));
        }
        out
    }

    pub fn validator_count(&self, chain: BlockchainId) -> Option<u32> {
        if chain == self.coordination.chain() {
            return Some(self.coordination_validators);
        }
        self.chains.get(&chain).map(|c| c.keys.params.n())
    }

    pub fn set_behavior(
        &mut self,
        node: NodeId,
        behavior: ValidatorBehavior,
    ) -> Result<(), ProtocolError> {
        let c = self
            .chains
            .get_mut(&node.chain)
            .ok_or(ProtocolError::UnknownChain(node.chain))?;
        let slot = (node.index as usize)
            .checked_sub(1)
            .and_then(|i| c.behaviors.get_mut(i))
            .ok_or(ProtocolError::Malformed("validator index out of range"))?;
        *slot = behavior;
        Ok(())
    }

    pub fn known_bad(&self, coordinator: NodeId) -> Option<&BTreeSet<u32>> {
        self.reputation.get(&coordinator)
    }

    pub fn in_flight(&self) -> usize {
        self.inflight.len()
    }

    /// Moves the coordination chain's clock to the block containing `now_ns`.
    pub fn set_time(&mut self, now_ns: u64) {
        self.coordination
            .advance_to(now_ns / self.block_interval_ns);
    }

    /// Accepts a signed transaction from `instigator`; the returned action
    /// starts it.
    pub fn submit(
        &mut self,
        tx: CrosschainTransaction,
        instigator: &MultichainNode,
        options: SubmitOptions,
    ) -> Result<(Target, Action), ProtocolError> {
        tx.verify_tree()?;
        for chain in tx.chains() {
            if !self.chains.contains_key(&chain) {
                return Err(ProtocolError::UnknownChain(chain));
            }
            if instigator.validator(chain).is_none() {
                return Err(ProtocolError::Coverage {
                    node: instigator.operator.clone(),
                    chain,
                });
            }
        }
        let coord = self.coordination.chain();
        if instigator.validator(coord).is_none() {
            return Err(ProtocolError::Coverage {
                node: instigator.operator.clone(),
                chain: coord,
            });
        }
        let id = tx.crosschain_tx_id;
        if self.inflight.contains_key(&id) {
            return Err(ProtocolError::InFlight(id));
        }
        let pending_ready = tx
            .paths()
            .into_iter()
            .filter(|p| tx.node_at(p).is_some_and(|n| n.kind == TxKind::Subordinate))
            .collect();
        let coordinator = instigator.validator(tx.chain).expect("coverage checked");
        self.inflight.insert(
            id,
            Inflight {
                tx,
                instigator: instigator.clone(),
                phase: Phase::Starting,
                view_results: BTreeMap::new(),
                executed: BTreeSet::new(),
                pending_ready,
                root_done: false,
                outcome: None,
                reason: None,
                pending_signals: BTreeSet::new(),
                signals: Vec::new(),
                stall: options.stall,
            },
        );
        Ok((Target::Node(coordinator), Action::Submit { tx_id: id }))
    }

    /// Performs `action` at `target` at virtual time `now_ns`.
    pub fn handle(&mut self, target: Target, action: Action, now_ns: u64) -> Step {
        self.set_time(now_ns);
        let mut step = Step::default();
        let node = match target {
            Target::Node(n) => n,
            Target::Network => {
                if let Action::TimeoutCheck { tx_id } = action {
                    self.on_timeout_check(tx_id, &mut step);
                }
                return step;
            }
        };
        match action {
            Action::Submit { tx_id } => self.on_submit(node, tx_id, &mut step),
            Action::CoordStart { tx_id, msg } => self.on_coord_start(node, tx_id, msg, &mut step),
            Action::ExecutePart { tx_id, path } => self.on_execute(node, tx_id, path, &mut step),
            Action::ViewResult { tx_id, path, msg } => {
                self.on_view_result(node, tx_id, path, msg, &mut step)
            }
            Action::Ready { tx_id, path, msg } => self.on_ready(node, tx_id, path, msg, &mut step),
            Action::SubordinateFailed {
                tx_id,
                path,
                reason,
            } => {
                if self
                    .inflight
                    .get(&tx_id)
                    .is_some_and(|f| f.phase == Phase::Running)
                {
                    let reason = format!("subordinate part {path:?} failed: {reason}");
                    self.decide(node, tx_id, Outcome::Ignored, reason, &mut step);
                }
            }
            Action::CoordDecide { tx_id, msg } => self.on_coord_decide(node, tx_id, msg, &mut step),
            Action::TimeoutCheck { tx_id } => self.on_timeout_check(tx_id, &mut step),
            Action::Signal {
                tx_id,
                chain,
                outcome,
            } => self.on_signal(node, tx_id, chain, outcome, &mut step),
        }
        step
    }

    fn chain_nodes(&self, chain: BlockchainId) -> impl Iterator<Item = NodeId> {
        let n = self.validator_count(chain).unwrap_or(0);
        (1..=n).map(move |i| NodeId::new(chain, i))
    }

    fn charge_all(
        &self,
        step: &mut Step,
        chain: BlockchainId,
        tx_id: TxId,
        event: &'static str,
        base: u32,
        verify: u32,
    ) {
        for node in self.chain_nodes(chain) {
            step.charges.push(Charge {
                node,
                tx_id,
                event,
                base_tx: base,
                verifications: verify,
                share_verifications: 0,
            });
        }
    }

    /// Runs a signing round coordinated by `node` and charges its cost.
    fn sign(
        &mut self,
        node: NodeId,
        tx_id: TxId,
        event: &'static str,
        body: MessageBody,
        step: &mut Step,
    ) -> Option<ProtocolMessage> {
        let chain = self.chains.get(&node.chain)?;
        let known_bad = self.reputation.get(&node).cloned().unwrap_or_default();
        let bytes = body.signing_bytes();
        let round = threshold_sign_round(
            &chain.keys,
            &chain.behaviors,
            node.index,
            &known_bad,
            &bytes,
        );
        if round.share_verifications > 0 {
            step.charges.push(Charge {
                node,
                tx_id,
                event: "share_verification",
                base_tx: 0,
                verifications: 0,
                share_verifications: round.share_verifications,
            });
        }
        step.charges.push(Charge {
            node,
            tx_id,
            event,
            base_tx: 0,
            verifications: round.group_verifications,
            share_verifications: 0,
        });
        if !round.bad_indices.is_empty() {
            self.reputation
                .entry(node)
                .or_default()
                .extend(round.bad_indices.iter().copied());
        }
        let sig = round.signature?;
        self.verifier
            .remember(&chain.keys.group_key, &bytes, &sig, true);
        Some(ProtocolMessage {
            body,
            group_signature: sig,
        })
    }

    fn verify_message(&mut self, msg: &ProtocolMessage) -> bool {
        match self.coordination.public_key(msg.body.chain) {
            Ok(entry) => {
                let key = entry.group_pk;
                msg.verify(&key, &mut self.verifier)
            }
            Err(_) => false,
        }
    }

    fn on_submit(&mut self, node: NodeId, tx_id: TxId, step: &mut Step) {
        let Some(f) = self.inflight.get(&tx_id) else {
            return;
        };
        let tx = &f.tx;
        let body = MessageBody::start(
            tx_id,
            tx.chain,
            tx.timeout_block,
            tx.coordination_chain,
            tx.coordination_contract,
        );
        let coord_node = f
            .instigator
            .validator(self.coordination.chain())
            .expect("coverage checked at submit");
        match self.sign(node, tx_id, "sign_start", body, step) {
            Some(msg) => step
                .next
                .push((Target::Node(coord_node), Action::CoordStart { tx_id, msg })),
            None => {
                self.finish_unstarted(tx_id, "start message could not be threshold signed", step)
            }
        }
    }

    fn finish_unstarted(&mut self, tx_id: TxId, reason: &str, step: &mut Step) {
        if let Some(f) = self.inflight.remove(&tx_id) {
            step.finished.push(Finished {
                tx_id,
                outcome: Outcome::Ignored,
                reason: Some(String::from(reason)),
                chains_touched: f.tx.chains().into_iter().collect(),
                signals: Vec::new(),
                executed: Vec::new(),
                transaction_parts: transaction_parts(&f.tx),
            });
        }
    }

    fn on_coord_start(&mut self, node: NodeId, tx_id: TxId, msg: ProtocolMessage, step: &mut Step) {
        if !self.inflight.contains_key(&tx_id) {
            return;
        }
        self.charge_all(step, node.chain, tx_id, "coord_start", 1, 1);
        let result = self
            .coordination
            .start(&msg, &mut self.verifier)
            .map(|e| e.timeout_block);
        match result {
            Ok(timeout_block) => {
                let f = self.inflight.get_mut(&tx_id).expect("checked above");
                f.phase = Phase::Running;
                let coordinator = f
                    .instigator
                    .validator(f.tx.chain)
                    .expect("coverage checked");
                step.next.push((
                    Target::Node(coordinator),
                    Action::ExecutePart {
                        tx_id,
                        path: Vec::new(),
                    },
                ));
                let fire = (timeout_block + 1).saturating_mul(self.block_interval_ns);
                step.at
                    .push((fire, Target::Network, Action::TimeoutCheck { tx_id }));
            }
            Err(e) => self.finish_unstarted(tx_id, &format!("start rejected: {e}"), step),
        }
    }

    fn part_node(&self, tx_id: TxId, path: &[usize]) -> Option<NodeId> {
        let f = self.inflight.get(&tx_id)?;
        f.instigator.validator(f.tx.node_at(path)?.chain)
    }

    fn send_to_coordinator(&self, tx_id: TxId, action: Action, path: &[usize], step: &mut Step) {
        let Some(f) = self.inflight.get(&tx_id) else {
            return;
        };
        let coordinator = f
            .instigator
            .validator(f.tx.chain)
            .expect("coverage checked");
        let to = Target::Node(coordinator);
        self.send(f, to, action, path, step);
    }

    fn send(&self, f: &Inflight, to: Target, action: Action, path: &[usize], step: &mut Step) {
        match &f.stall {
            Some((p, delay)) if p.as_slice() == path => step.delayed.push((*delay, to, action)),
            _ => step.next.push((to, action)),
        }
    }

    fn on_execute(&mut self, node: NodeId, tx_id: TxId, path: Vec<usize>, step: &mut Step) {
        let Some(f) = self.inflight.get(&tx_id) else {
            return;
        };
        if f.phase != Phase::Running {
            return;
        }
        // Parts only run while the coordination entry is live.
        if self.coordination.state_now(tx_id) != Ok(EntryState::Started) {
            return;
        }
        let part =
            f.tx.node_at(&path)
                .expect("paths come from the tree")
                .clone();

        let missing: Vec<usize> = (0..part.subordinates.len())
            .filter(|&i| part.subordinates[i].kind == TxKind::View)
            .filter(|&i| !f.view_results.contains_key(&child(&path, i)))
            .collect();
        if !missing.is_empty() {
            for i in missing {
                let p = child(&path, i);
                if let Some(to) = self.part_node(tx_id, &p) {
                    step.next
                        .push((Target::Node(to), Action::ExecutePart { tx_id, path: p }));
                }
            }
            return;
        }
        let records: Vec<SubordinateCallRecord> = part
            .subordinates
            .iter()
            .enumerate()
            .map(|(i, c)| c.call_record(f.view_results.get(&child(&path, i)).cloned()))
            .collect();

        if part.kind == TxKind::View {
            self.serve_view(node, tx_id, path, &part, &records, step);
            return;
        }

        let mut ledger_part = part.to_part();
        ledger_part.subordinates = records;
        let result = match self.chains.get_mut(&part.chain) {
            Some(c) => c.ledger.process_crosschain_part(&ledger_part),
            None => return,
        };
        match result {
            Ok(ready) => {
                self.charge_all(step, part.chain, tx_id, "execute_part", 1, 0);
                let f = self.inflight.get_mut(&tx_id).expect("checked above");
                f.executed.insert(path.clone());
                for i in ready.to_submit {
                    let p = child(&path, i);
                    if let Some(to) =
                        f.tx.node_at(&p)
                            .and_then(|c| f.instigator.validator(c.chain))
                    {
                        step.next
                            .push((Target::Node(to), Action::ExecutePart { tx_id, path: p }));
                    }
                }
                if path.is_empty() {
                    f.root_done = true;
                    self.maybe_commit(node, tx_id, step);
                } else {
                    let body = MessageBody::ready(tx_id, part.chain, part.hash());
                    // A chain that cannot produce a signature stays silent;
                    // the transaction then times out.
                    if let Some(msg) = self.sign(node, tx_id, "sign_ready", body, step) {
                        self.send_to_coordinator(
                            tx_id,
                            Action::Ready {
                                tx_id,
                                path: path.clone(),
                                msg,
                            },
                            &path,
                            step,
                        );
                    }
                }
            }
            Err(e) => {
                step.charges.push(Charge {
                    node,
                    tx_id,
                    event: "trial_failed",
                    base_tx: 1,
                    verifications: 0,
                    share_verifications: 0,
                });
                if path.is_empty() {
                    self.decide(
                        node,
                        tx_id,
                        Outcome::Ignored,
                        format!("originating part failed: {e}"),
                        step,
                    );
                } else {
                    let reason = e.to_string();
                    self.send_to_coordinator(
                        tx_id,
                        Action::SubordinateFailed {
                            tx_id,
                            path: path.clone(),
                            reason,
                        },
                        &[],
                        step,
                    );
                }
            }
        }
    }

    fn serve_view(
        &mut self,
        node: NodeId,
        tx_id: TxId,
        path: Vec<usize>,
        part: &CrosschainTransaction,
        records: &[SubordinateCallRecord],
        step: &mut Step,
    ) {
        let Some(c) = self.chains.get(&part.chain) else {
            return;
        };
        let call = ViewCall {
            target: part.target,
            function: part.function.clone(),
            args: part.args.clone(),
        };
        let result = c.ledger.execute_view_with(&call, None, records);
        step.charges.push(Charge {
            node,
            tx_id,
            event: "serve_view",
            base_tx: 1,
            verifications: 0,
            share_verifications: 0,
        });
        match result {
            Ok(value) => {
                let body = MessageBody::view_result(tx_id, part.chain, part.hash(), &value);
                if let Some(msg) = self.sign(node, tx_id, "sign_view_result", body, step) {
                    let parent = &path[..path.len() - 1];
                    if let (Some(to), Some(f)) =
                        (self.part_node(tx_id, parent), self.inflight.get(&tx_id))
                    {
                        let action = Action::ViewResult {
                            tx_id,
                            path: path.clone(),
                            msg,
                        };
                        self.send(f, Target::Node(to), action, &path, step);
                    }
                }
            }
            Err(e) => {
                let reason = e.to_string();
                self.send_to_coordinator(
                    tx_id,
                    Action::SubordinateFailed {
                        tx_id,
                        path: path.clone(),
                        reason,
                    },
                    &[],
                    step,
                );
            }
        }
    }

    fn on_view_result(
        &mut self,
        node: NodeId,
        tx_id: TxId,
        path: Vec<usize>,
        msg: ProtocolMessage,
        step: &mut Step,
    ) {
        let Some(f) = self.inflight.get(&tx_id) else {
            return;
        };
        if f.phase != Phase::Running || path.is_empty() {
            return;
        }
        let Some(view) = f.tx.node_at(&path) else {
            return;
        };
        let expected_hash = view.hash();
        let view_chain = view.chain;
        self.charge_all(step, node.chain, tx_id, "verify_view_result", 0, 1);
        let parsed = msg.body.view_result_parts().ok();
        let ok = msg.body.kind == MessageKind::SubordinateViewResult
            && msg.body.tx_id == tx_id
            && msg.body.chain == view_chain
            && parsed.as_ref().is_some_and(|(h, _)| *h == expected_hash)
            && self.verify_message(&msg);
        let coordinator = self.inflight[&tx_id]
            .instigator
            .validator(self.inflight[&tx_id].tx.chain)
            .expect("covered");
        let Some((_, value)) = parsed.filter(|_| ok) else {
            if node == coordinator {
                self.decide(
                    node,
                    tx_id,
                    Outcome::Ignored,
                    String::from("view result failed verification"),
                    step,
                );
            } else {
                let reason = String::from("view result failed verification");
                self.send_to_coordinator(
                    tx_id,
                    Action::SubordinateFailed {
                        tx_id,
                        path,
                        reason,
                    },
                    &[],
                    step,
                );
            }
            return;
        };
        let f = self.inflight.get_mut(&tx_id).expect("checked above");
        f.view_results.insert(path.clone(), value);
        let parent = path[..path.len() - 1].to_vec();
        let siblings = &f.tx.node_at(&parent).expect("parent exists").subordinates;
        let complete = (0..siblings.len())
            .filter(|&i| siblings[i].kind == TxKind::View)
            .all(|i| f.view_results.contains_key(&child(&parent, i)));
        if complete {
            step.next.push((
                Target::Node(node),
                Action::ExecutePart {
                    tx_id,
                    path: parent,
                },
            ));
        }
    }

    fn on_ready(
        &mut self,
        node: NodeId,
        tx_id: TxId,
        path: Vec<usize>,
        msg: ProtocolMessage,
        step: &mut Step,
    ) {
        let Some(f) = self.inflight.get(&tx_id) else {
            return;
        };
        if f.phase != Phase::Running {
            return;
        }
        let Some(sub) = f.tx.node_at(&path) else {
            return;
        };
        let expected = MessageBody::ready(tx_id, sub.chain, sub.hash());
        self.charge_all(step, node.chain, tx_id, "verify_ready", 0, 1);
        let ok = msg.body == expected && self.verify_message(&msg);
        if !ok {
            self.decide(
                node,
                tx_id,
                Outcome::Ignored,
                String::from("ready message failed verification"),
                step,
            );
            return;
        }
        self.inflight
            .get_mut(&tx_id)
            .expect("checked above")
            .pending_ready
            .remove(&path);
        self.maybe_commit(node, tx_id, step);
    }

    fn maybe_commit(&mut self, node: NodeId, tx_id: TxId, step: &mut Step) {
        let Some(f) = self.inflight.get(&tx_id) else {
            return;
        };
        if f.phase == Phase::Running && f.root_done && f.pending_ready.is_empty() {
            self.decide(node, tx_id, Outcome::Committed, String::new(), step);
        }
    }

    /// Signs Commit or Ignore at the originating coordinator and submits it.
    fn decide(
        &mut self,
        node: NodeId,
        tx_id: TxId,
        outcome: Outcome,
        reason: String,
        step: &mut Step,
    ) {
        let Some(f) = self.inflight.get_mut(&tx_id) else {
            return;
        };
        if f.phase != Phase::Running {
            return;
        }
        f.phase = Phase::Deciding;
        if outcome == Outcome::Ignored {
            f.reason = Some(reason);
        }
        let origin = f.tx.chain;
        let coord_node = f
            .instigator
            .validator(self.coordination.chain())
            .expect("coverage checked");
        let (body, event) = match outcome {
            Outcome::Committed => (MessageBody::commit(tx_id, origin), "sign_commit"),
            Outcome::Ignored => (MessageBody::ignore(tx_id, origin), "sign_ignore"),
        };
        // Without a signature the entry simply times out.
        if let Some(msg) = self.sign(node, tx_id, event, body, step) {
            step.next
                .push((Target::Node(coord_node), Action::CoordDecide { tx_id, msg }));
        }
    }

    fn on_coord_decide(
        &mut self,
        node: NodeId,
        tx_id: TxId,
        msg: ProtocolMessage,
        step: &mut Step,
    ) {
        let Some(f) = self.inflight.get(&tx_id) else {
            return;
        };
        if f.phase != Phase::Deciding {
            return;
        }
        let (event, outcome) = match msg.body.kind {
            MessageKind::Commit => ("coord_commit", Outcome::Committed),
            MessageKind::Ignore => ("coord_ignore", Outcome::Ignored),
            _ => return,
        };
        self.charge_all(step, node.chain, tx_id, event, 1, 1);
        let accepted = match outcome {
            Outcome::Committed => self.coordination.commit(&msg, &mut self.verifier).is_ok(),
            Outcome::Ignored => self.coordination.ignore(&msg, &mut self.verifier).is_ok(),
        };
        if accepted {
            self.begin_signalling(tx_id, outcome, step);
        }
    }

    fn on_timeout_check(&mut self, tx_id: TxId, step: &mut Step) {
        let Some(f) = self.inflight.get_mut(&tx_id) else {
            return;
        };
        if f.phase == Phase::Signalling {
            return;
        }
        if self.coordination.state_now(tx_id) == Ok(EntryState::Ignored) {
            f.reason = Some(String::from("timed out"));
            self.begin_signalling(tx_id, Outcome::Ignored, step);
        }
    }

    fn begin_signalling(&mut self, tx_id: TxId, outcome: Outcome, step: &mut Step) {
        let Some(f) = self.inflight.get_mut(&tx_id) else {
            return;
        };
        f.phase = Phase::Signalling;
        f.outcome = Some(outcome);
        let chains: BTreeSet<BlockchainId> =
            f.tx.paths()
                .iter()
                .filter_map(|p| f.tx.node_at(p))
                .filter(|n| n.kind != TxKind::View)
                .map(|n| n.chain)
                .collect();
        let signal = match outcome {
            Outcome::Committed => SignalOutcome::Commit,
            Outcome::Ignored => SignalOutcome::Ignore,
        };
        for chain in &chains {
            let to = f.instigator.validator(*chain).expect("coverage checked");
            step.next.push((
                Target::Node(to),
                Action::Signal {
                    tx_id,
                    chain: *chain,
                    outcome: signal,
                },
            ));
        }
        f.pending_signals = chains;
    }

    fn on_signal(
        &mut self,
        _node: NodeId,
        tx_id: TxId,
        chain: BlockchainId,
        outcome: SignalOutcome,
        step: &mut Step,
    ) {
        if !self
            .inflight
            .get(&tx_id)
            .is_some_and(|f| f.pending_signals.contains(&chain))
        {
            return;
        }
        let applied = match self.chains.get_mut(&chain) {
            Some(c) if !c.ledger.locked_by(tx_id).is_empty() => {
                c.ledger.apply_signalling(tx_id, outcome).is_ok()
            }
            _ => false,
        };
        if applied {
            self.charge_all(step, chain, tx_id, "signal", 1, 0);
        }
        let f = self.inflight.get_mut(&tx_id).expect("checked above");
        f.pending_signals.remove(&chain);
        f.signals.push(SignalRecord {
            chain,
            outcome,
            applied,
        });
        if f.pending_signals.is_empty() {
            let f = self.inflight.remove(&tx_id).expect("present");
            step.finished.push(Finished {
                tx_id,
                outcome: f.outcome.expect("set when signalling began"),
                reason: f.reason,
                chains_touched: f.tx.chains().into_iter().collect(),
                transaction_parts: transaction_parts(&f.tx),
                signals: f.signals,
                executed: f.executed.into_iter().collect(),
            });
        }
    }
}

fn transaction_parts(tx: &CrosschainTransaction) -> Vec<Vec<usize>> {
    let mut parts: Vec<Vec<usize>> = tx
        .paths()
        .into_iter()
        .filter(|p| tx.node_at(p).is_some_and(|n| n.kind != TxKind::View))
        .collect();
    parts.sort();
    parts
}

fn child(path: &[usize], i: usize) -> Vec<usize> {
    let mut p = path.to_vec();
    p.push(i);
    p
}
