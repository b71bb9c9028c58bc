//! The Crosschain Coordination Contract.
//!
//! Holds the registry of blockchain public keys and one [`CoordinationEntry`]
//! per crosschain transaction. The contract keeps its own block counter;
//! callers advance it to model the passage of coordination-chain blocks.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::message::{MessageBody, MessageKind, ProtocolMessage};
use crate::threshold::{GroupPublicKey, GroupVerifier};
use crate::types::{Address, BlockchainId, TxId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryState {
    Started,
    Committed,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinationEntry {
    #[serde(rename = "id")]
    pub crosschain_tx_id: TxId,
    pub state: EntryState,
    pub timeout_block: u64,
    pub originating_chain: BlockchainId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRegistryEntry {
    pub chain: BlockchainId,
    pub group_pk: GroupPublicKey,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoordinationError {
    #[error("no public key registered for chain {0}")]
    UnknownChain(BlockchainId),
    #[error("crosschain transaction {0} already started")]
    Duplicate(TxId),
    #[error("unknown crosschain transaction {0}")]
    UnknownTransaction(TxId),
    #[error("message signature does not verify")]
    InvalidSignature,
    #[error("message is not a {0:?} message")]
    WrongMessage(MessageKind),
    #[error("timeout block {timeout_block} is not after current block {current}")]
    TimeoutInPast { timeout_block: u64, current: u64 },
    #[error("transaction is {0:?}, expected Started")]
    WrongState(EntryState),
    #[error("transaction timed out at block {timeout_block} (now {current})")]
    Expired { timeout_block: u64, current: u64 },
}

#[derive(Debug, Clone)]
pub struct CoordinationContract {
    chain: BlockchainId,
    address: Address,
    keys: BTreeMap<BlockchainId, Vec<KeyRegistryEntry>>,
    entries: BTreeMap<TxId, CoordinationEntry>,
    block: u64,
    verifications: u64,
}

impl CoordinationContract {
    pub fn new(chain: BlockchainId, address: Address) -> Self {
        CoordinationContract {
            chain,
            address,
            keys: BTreeMap::new(),
            entries: BTreeMap::new(),
            block: 0,
            verifications: 0,
        }
    }

    pub fn chain(&self) -> BlockchainId {
        self.chain
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn current_block(&self) -> u64 {
        self.block
    }

    /// Group-signature verifications performed by accepted or rejected calls.
    pub fn verifications(&self) -> u64 {
        self.verifications
    }

    pub fn advance_block(&mut self, n: u64) -> u64 {
        self.block += n;
        self.block
    }

    /// Moves the clock forward to `block`; never backwards.
    pub fn advance_to(&mut self, block: u64) -> u64 {
        self.block = self.block.max(block);
        self.block
    }

    pub fn register_public_key(&mut self, chain: BlockchainId, group_pk: GroupPublicKey) -> u32 {
        let versions = self.keys.entry(chain).or_default();
        let version = versions.len() as u32 + 1;
        versions.push(KeyRegistryEntry {
            chain,
            group_pk,
            version,
        });
        version
    }

    pub fn public_key(&self, chain: BlockchainId) -> Result<&KeyRegistryEntry, CoordinationError> {
        self.keys
            .get(&chain)
            .and_then(|v| v.last())
            .ok_or(CoordinationError::UnknownChain(chain))
    }

    pub fn entry(&self, id: TxId) -> Result<&CoordinationEntry, CoordinationError> {
        self.entries
            .get(&id)
            .ok_or(CoordinationError::UnknownTransaction(id))
    }

    pub fn entries(&self) -> impl Iterator<Item = &CoordinationEntry> {
        self.entries.values()
    }

    fn check_signature(
        &mut self,
        msg: &ProtocolMessage,
        kind: MessageKind,
        verifier: &mut impl GroupVerifier,
    ) -> Result<(), CoordinationError> {
        if msg.body.kind != kind {
            return Err(CoordinationError::WrongMessage(kind));
        }
        let key = self.public_key(msg.body.chain)?.group_pk;
        self.verifications += 1;
        if !msg.verify(&key, verifier) {
            return Err(CoordinationError::InvalidSignature);
        }
        Ok(())
    }

    /// Records a Start message. The entry fields are read from the signed
    /// body, so a signature over different fields cannot start anything.
    pub fn start(
        &mut self,
        msg: &ProtocolMessage,
        verifier: &mut impl GroupVerifier,
    ) -> Result<&CoordinationEntry, CoordinationError> {
        let id = msg.body.tx_id;
        if self.entries.contains_key(&id) {
            return Err(CoordinationError::Duplicate(id));
        }
        self.check_signature(msg, MessageKind::Start, verifier)?;
        let timeout_block =
            start_timeout(&msg.body).ok_or(CoordinationError::WrongMessage(MessageKind::Start))?;
        if timeout_block <= self.block {
            return Err(CoordinationError::TimeoutInPast {
                timeout_block,
                current: self.block,
            });
        }
        let entry = CoordinationEntry {
            crosschain_tx_id: id,
            state: EntryState::Started,
            timeout_block,
            originating_chain: msg.body.chain,
        };
        Ok(self.entries.entry(id).or_insert(entry))
    }

    pub fn commit(
        &mut self,
        msg: &ProtocolMessage,
        verifier: &mut impl GroupVerifier,
    ) -> Result<&CoordinationEntry, CoordinationError> {
        self.finish(msg, MessageKind::Commit, EntryState::Committed, verifier)
    }

    pub fn ignore(
        &mut self,
        msg: &ProtocolMessage,
        verifier: &mut impl GroupVerifier,
    ) -> Result<&CoordinationEntry, CoordinationError> {
        self.finish(msg, MessageKind::Ignore, EntryState::Ignored, verifier)
    }

    fn finish(
        &mut self,
        msg: &ProtocolMessage,
        kind: MessageKind,
        to: EntryState,
        verifier: &mut impl GroupVerifier,
    ) -> Result<&CoordinationEntry, CoordinationError> {
        let id = msg.body.tx_id;
        let entry = self.entry(id)?.clone();
        if entry.state != EntryState::Started {
            return Err(CoordinationError::WrongState(entry.state));
        }
        if msg.body.chain != entry.originating_chain {
            return Err(CoordinationError::InvalidSignature);
        }
        self.check_signature(msg, kind, verifier)?;
        if self.block > entry.timeout_block {
            return Err(CoordinationError::Expired {
                timeout_block: entry.timeout_block,
                current: self.block,
            });
        }
        let e = self.entries.get_mut(&id).expect("checked above");
        e.state = to;
        Ok(e)
    }

    /// Stored state, except that a Started entry past its timeout block reads
    /// as Ignored.
    pub fn effective_state(
        &self,
        id: TxId,
        current_block: u64,
    ) -> Result<EntryState, CoordinationError> {
        let e = self.entry(id)?;
        Ok(match e.state {
            EntryState::Started if current_block > e.timeout_block => EntryState::Ignored,
            s => s,
        })
    }

    /// [`Self::effective_state`] at the contract's own current block.
    pub fn state_now(&self, id: TxId) -> Result<EntryState, CoordinationError> {
        self.effective_state(id, self.block)
    }
}

fn start_timeout(body: &MessageBody) -> Option<u64> {
    let bytes: [u8; 8] = body.payload.get(..8)?.try_into().ok()?;
    Some(u64::from_be_bytes(bytes))
}
