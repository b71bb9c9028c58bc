//! Multichain nodes and the crosschain transaction protocol.
//!
//! [`CrosschainTransaction`] is the signed transaction tree. Its canonical
//! encoding (all integers big-endian, see [`crate::codec`]):
//!
//! ```text
//! signing bytes = "xchain/tx/v1"
//!     kind u8 (0 originating, 1 subordinate, 2 view)
//!     chain u32 | target u64 | function text | args (list of values) | caller text
//!     sender [32] | coordination_chain u32 | coordination_contract u64
//!     crosschain_tx_id [32] | timeout_block u64
//!     subordinates: u32 count, then each child's full encoding as a byte string
//! full encoding = signing bytes | sender_signature (byte string, 64 bytes)
//! ```
//!
//! Children are signed before their parent, so a parent's signature covers
//! its children's signatures.

mod network;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::codec::{sha256, sha256_parts, Encoder};
use crate::ledger::{CallKind, CrosschainPart, SubordinateCallRecord};
use crate::threshold::{
    combine_shares, hash_message, robust_combine_hashed, sign_share_hashed, verify_group_hashed,
    GroupSignature, KeySet, SignatureShare, ThresholdError,
};
use crate::types::{Address, BlockchainId, TxId, Value};

pub use network::{
    Action, ChainSetup, Charge, Finished, Network, Outcome, SignalRecord, Step, SubmitOptions,
    Target, COORDINATION_CONTRACT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Originating,
    Subordinate,
    View,
}

impl TxKind {
    fn tag(self) -> u8 {
        match self {
            TxKind::Originating => 0,
            TxKind::Subordinate => 1,
            TxKind::View => 2,
        }
    }
}

/// A validator node: validator `index` (1-based) of `chain`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub chain: BlockchainId,
    pub index: u32,
}

impl NodeId {
    pub fn new(chain: BlockchainId, index: u32) -> Self {
        NodeId { chain, index }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}.v{}", self.chain.0, self.index)
    }
}

/// A group of validator nodes, one per chain, run by one operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultichainNode {
    pub operator: String,
    /// Chain → index of this operator's validator on it.
    pub validators: BTreeMap<BlockchainId, u32>,
}

impl MultichainNode {
    pub fn validator(&self, chain: BlockchainId) -> Option<NodeId> {
        self.validators.get(&chain).map(|&i| NodeId::new(chain, i))
    }

    /// The first chain in `tree` this node has no validator on, if any.
    pub fn uncovered(&self, tree: &CallSpec) -> Option<BlockchainId> {
        let mut chains = BTreeSet::new();
        tree.collect_chains(&mut chains);
        chains
            .into_iter()
            .find(|c| !self.validators.contains_key(c))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("node `{node}` has no validator on chain {chain}")]
    Coverage { node: String, chain: BlockchainId },
    #[error("malformed transaction tree: {0}")]
    Malformed(&'static str),
    #[error("bad sender signature on part for chain {0}")]
    BadSenderSignature(BlockchainId),
    #[error("unknown chain {0}")]
    UnknownChain(BlockchainId),
    #[error("crosschain transaction {0} is already in flight")]
    InFlight(TxId),
}

/// Unsigned description of a transaction tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSpec {
    pub kind: TxKind,
    pub chain: BlockchainId,
    pub target: Address,
    pub function: String,
    pub args: Vec<Value>,
    pub caller: String,
    pub children: Vec<CallSpec>,
}

impl CallSpec {
    pub fn new(
        kind: TxKind,
        chain: BlockchainId,
        target: Address,
        function: &str,
        args: Vec<Value>,
    ) -> Self {
        CallSpec {
            kind,
            chain,
            target,
            function: String::from(function),
            args,
            caller: String::new(),
            children: Vec::new(),
        }
    }

    pub fn caller(mut self, caller: &str) -> Self {
        self.caller = String::from(caller);
        self
    }

    pub fn child(mut self, child: CallSpec) -> Self {
        self.children.push(child);
        self
    }

    fn collect_chains(&self, out: &mut BTreeSet<BlockchainId>) {
        out.insert(self.chain);
        for c in &self.children {
            c.collect_chains(out);
        }
    }

    fn check(&self, root: bool) -> Result<(), ProtocolError> {
        match (root, self.kind) {
            (true, TxKind::Originating) | (false, TxKind::Subordinate | TxKind::View) => {}
            (true, _) => {
                return Err(ProtocolError::Malformed(
                    "root must be an originating transaction",
                ))
            }
            (false, _) => return Err(ProtocolError::Malformed("only the root may be originating")),
        }
        if self.kind == TxKind::View && self.children.iter().any(|c| c.kind != TxKind::View) {
            return Err(ProtocolError::Malformed("a view may only call views"));
        }
        self.children.iter().try_for_each(|c| c.check(false))
    }

    fn encode_into(&self, e: &mut Encoder) {
        e.u8(self.kind.tag())
            .u32(self.chain.0)
            .u64(self.target.0)
            .text(&self.function)
            .values(&self.args)
            .text(&self.caller)
            .u32(self.children.len() as u32);
        for c in &self.children {
            c.encode_into(e);
        }
    }

    /// Crosschain transaction id: hash of the spec tree and a nonce.
    pub fn tx_id(&self, nonce: u64) -> TxId {
        let mut e = Encoder::new(b"xchain/spec/v1");
        self.encode_into(&mut e);
        TxId(sha256_parts(
            b"xchain/txid",
            &[&e.finish(), &nonce.to_be_bytes()],
        ))
    }
}

/// Crosschain context shared by every part of one transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxContext {
    pub coordination_chain: BlockchainId,
    pub coordination_contract: Address,
    pub timeout_block: u64,
    pub nonce: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrosschainTransaction {
    pub kind: TxKind,
    pub chain: BlockchainId,
    pub target: Address,
    pub function: String,
    pub args: Vec<Value>,
    /// Account name the contract sees as the caller.
    pub caller: String,
    /// Sender's Ed25519 public key.
    pub sender: [u8; 32],
    pub coordination_chain: BlockchainId,
    pub coordination_contract: Address,
    pub crosschain_tx_id: TxId,
    pub timeout_block: u64,
    pub subordinates: Vec<CrosschainTransaction>,
    pub sender_signature: [u8; 64],
}

impl CrosschainTransaction {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(b"xchain/tx/v1");
        e.u8(self.kind.tag())
            .u32(self.chain.0)
            .u64(self.target.0)
            .text(&self.function)
            .values(&self.args)
            .text(&self.caller)
            .fixed(&self.sender)
            .u32(self.coordination_chain.0)
            .u64(self.coordination_contract.0)
            .fixed(&self.crosschain_tx_id.0)
            .u64(self.timeout_block)
            .u32(self.subordinates.len() as u32);
        for s in &self.subordinates {
            e.bytes(&s.encode());
        }
        e.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.signing_bytes();
        out.extend_from_slice(&64u32.to_be_bytes());
        out.extend_from_slice(&self.sender_signature);
        out
    }

    /// Hash carried by a Subordinate Transaction Ready message.
    pub fn hash(&self) -> [u8; 32] {
        sha256(&self.encode())
    }

    pub fn node_at(&self, path: &[usize]) -> Option<&CrosschainTransaction> {
        match path.split_first() {
            None => Some(self),
            Some((&i, rest)) => self.subordinates.get(i)?.node_at(rest),
        }
    }

    /// Paths of every node in the tree, parents before children.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![Vec::new()];
        while let Some(p) = stack.pop() {
            let node = self.node_at(&p).expect("paths are generated from the tree");
            for i in (0..node.subordinates.len()).rev() {
                let mut c = p.clone();
                c.push(i);
                stack.push(c);
            }
            out.push(p);
        }
        out
    }

    pub fn chains(&self) -> BTreeSet<BlockchainId> {
        self.paths()
            .iter()
            .map(|p| self.node_at(p).expect("valid path").chain)
            .collect()
    }

    /// Checks every sender signature, the shared context, and tree shape.
    pub fn verify_tree(&self) -> Result<(), ProtocolError> {
        if self.kind != TxKind::Originating {
            return Err(ProtocolError::Malformed(
                "root must be an originating transaction",
            ));
        }
        self.verify_node(self)
    }

    fn verify_node(&self, root: &CrosschainTransaction) -> Result<(), ProtocolError> {
        if (
            self.coordination_chain,
            self.coordination_contract,
            self.crosschain_tx_id,
            self.timeout_block,
        ) != (
            root.coordination_chain,
            root.coordination_contract,
            root.crosschain_tx_id,
            root.timeout_block,
        ) {
            return Err(ProtocolError::Malformed(
                "crosschain context differs between parts",
            ));
        }
        if self.kind == TxKind::View && self.subordinates.iter().any(|c| c.kind != TxKind::View) {
            return Err(ProtocolError::Malformed("a view may only call views"));
        }
        if !core::ptr::eq(self, root) && self.kind == TxKind::Originating {
            return Err(ProtocolError::Malformed("only the root may be originating"));
        }
        // Deepest first, mirroring the signing order.
        self.subordinates
            .iter()
            .try_for_each(|c| c.verify_node(root))?;
        let key = VerifyingKey::from_bytes(&self.sender)
            .map_err(|_| ProtocolError::BadSenderSignature(self.chain))?;
        key.verify(
            &self.signing_bytes(),
            &Signature::from_bytes(&self.sender_signature),
        )
        .map_err(|_| ProtocolError::BadSenderSignature(self.chain))
    }

    /// The part as the executing ledger sees it.
    pub fn to_part(&self) -> CrosschainPart {
        CrosschainPart {
            tx_id: self.crosschain_tx_id,
            target: self.target,
            function: self.function.clone(),
            args: self.args.clone(),
            caller: self.caller.clone(),
            subordinates: self
                .subordinates
                .iter()
                .map(|c| c.call_record(None))
                .collect(),
        }
    }

    pub(crate) fn call_record(&self, cached_result: Option<Value>) -> SubordinateCallRecord {
        SubordinateCallRecord {
            chain: self.chain,
            target: self.target,
            function: self.function.clone(),
            expected_args: self.args.clone(),
            kind: if self.kind == TxKind::View {
                CallKind::View
            } else {
                CallKind::Transaction
            },
            cached_result,
        }
    }
}

/// Builds and signs a transaction tree, deepest parts first.
pub fn build_crosschain_tx(
    spec: &CallSpec,
    signer: &SigningKey,
    ctx: TxContext,
    instigator: &MultichainNode,
) -> Result<CrosschainTransaction, ProtocolError> {
    spec.check(true)?;
    if let Some(chain) = instigator.uncovered(spec) {
        return Err(ProtocolError::Coverage {
            node: instigator.operator.clone(),
            chain,
        });
    }
    let id = spec.tx_id(ctx.nonce);
    Ok(sign_node(spec, signer, &ctx, id))
}

fn sign_node(
    spec: &CallSpec,
    signer: &SigningKey,
    ctx: &TxContext,
    id: TxId,
) -> CrosschainTransaction {
    let subordinates = spec
        .children
        .iter()
        .map(|c| sign_node(c, signer, ctx, id))
        .collect();
    let mut tx = CrosschainTransaction {
        kind: spec.kind,
        chain: spec.chain,
        target: spec.target,
        function: spec.function.clone(),
        args: spec.args.clone(),
        caller: spec.caller.clone(),
        sender: signer.verifying_key().to_bytes(),
        coordination_chain: ctx.coordination_chain,
        coordination_contract: ctx.coordination_contract,
        crosschain_tx_id: id,
        timeout_block: ctx.timeout_block,
        subordinates,
        sender_signature: [0; 64],
    };
    tx.sender_signature = signer.sign(&tx.signing_bytes()).to_bytes();
    tx
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ValidatorBehavior {
    #[default]
    Honest,
    /// Returns a share over a different message.
    BadShare,
    /// Never answers signing requests.
    Silent,
}

/// Work done by one threshold-signing round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigningRound {
    pub signature: Option<GroupSignature>,
    pub error: Option<ThresholdError>,
    pub bad_indices: Vec<u32>,
    pub group_verifications: u32,
    pub share_verifications: u32,
}

/// One signing round coordinated by validator `coordinator`.
///
/// Shares are requested from every validator. The coordinator's own share
/// goes first, then the others in index order, with validators in
/// `known_bad` moved to the end.
pub fn threshold_sign_round(
    keys: &KeySet,
    behaviors: &[ValidatorBehavior],
    coordinator: u32,
    known_bad: &BTreeSet<u32>,
    message: &[u8],
) -> SigningRound {
    let n = keys.params.n();
    let mut order: Vec<u32> = Vec::with_capacity(n as usize);
    order.push(coordinator);
    order.extend((1..=n).filter(|&i| i != coordinator && !known_bad.contains(&i)));
    order.extend((1..=n).filter(|&i| i != coordinator && known_bad.contains(&i)));
    if known_bad.contains(&coordinator) {
        order.remove(0);
        order.push(coordinator);
    }

    let hashed = hash_message(message);
    let mut wrong = None;
    let mut sign = |i: u32| -> Option<SignatureShare> {
        let share = keys.share(i).expect("indices come from 1..=n");
        match behaviors.get(i as usize - 1).copied().unwrap_or_default() {
            ValidatorBehavior::Honest => Some(sign_share_hashed(share, &hashed)),
            ValidatorBehavior::BadShare => {
                let wrong = wrong.get_or_insert_with(|| {
                    let mut m = message.to_vec();
                    m.extend_from_slice(b"/byzantine");
                    hash_message(&m)
                });
                Some(sign_share_hashed(share, wrong))
            }
            ValidatorBehavior::Silent => None,
        }
    };

    // Shares past the first m only matter when the combined signature fails,
    // so they are produced on demand.
    let m = keys.params.m() as usize;
    let mut rest = order.into_iter();
    let mut shares = Vec::with_capacity(n as usize);
    for i in rest.by_ref() {
        shares.extend(sign(i));
        if shares.len() == m {
            break;
        }
    }
    if shares.len() == m {
        if let Ok(sig) = combine_shares(&shares, keys.params) {
            if verify_group_hashed(&keys.group_key, &hashed, &sig) {
                return SigningRound {
                    signature: Some(sig),
                    error: None,
                    bad_indices: Vec::new(),
                    group_verifications: 1,
                    share_verifications: 0,
                };
            }
        }
    }
    shares.extend(rest.filter_map(&mut sign));

    let public = keys.public_shares();
    match robust_combine_hashed(&shares, keys.params, &keys.group_key, &public, &hashed) {
        Ok(r) => SigningRound {
            signature: Some(r.signature),
            error: None,
            bad_indices: r.bad_indices,
            group_verifications: r.group_verifications,
            share_verifications: r.share_verifications,
        },
        Err(e) => {
            let bad = match &e {
                ThresholdError::InsufficientValidShares { bad, .. } => bad.clone(),
                _ => Vec::new(),
            };
            SigningRound {
                signature: None,
                error: Some(e),
                bad_indices: bad,
                group_verifications: u32::from(shares.len() >= keys.params.m() as usize),
                share_verifications: shares.len() as u32,
            }
        }
    }
}

#[cfg(test)]
mod tests;
