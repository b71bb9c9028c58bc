//! A simulated single blockchain.
//!
//! Contracts are native implementations of a fixed set of [`Behavior`]s
//! rather than bytecode. Each contract is either lockable or not, fixed at
//! deployment. A crosschain part that updates contracts leaves them locked
//! by its crosschain transaction id with the updates held as a provisional
//! overlay; a later signalling transaction merges or discards the overlay
//! and releases the locks.

mod contracts;
mod exec;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::types::{Address, BlockchainId, TxId, Value};

pub use contracts::{init, provenance_digest, Behavior};
use exec::{Exec, Mode};

/// Key-value contract storage.
pub type State = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("no contract at {0}")]
    UnknownContract(Address),
    #[error("{behavior:?} has no function `{function}`")]
    UnknownFunction {
        behavior: Behavior,
        function: String,
    },
    #[error("bad arguments to `{function}`: {reason}")]
    BadArguments {
        function: String,
        reason: &'static str,
    },
    #[error("{account} holds {available}, needs {needed}")]
    InsufficientBalance {
        account: String,
        needed: i64,
        available: i64,
    },
    #[error("contract {address} is locked by {by}")]
    Locked { address: Address, by: TxId },
    #[error("contract {0} is not lockable")]
    NotLockable(Address),
    #[error("subordinate call #{index} arguments differ from the signed ones")]
    ParameterMismatch {
        index: usize,
        expected: Vec<Value>,
        actual: Vec<Value>,
    },
    #[error("unexpected subordinate call to {function} on chain {chain}")]
    UnexpectedSubordinateCall {
        chain: BlockchainId,
        target: Address,
        function: String,
    },
    #[error("{0} signed subordinate calls were never made")]
    MissingSubordinateCall(usize),
    #[error("subordinate view #{0} has no cached result")]
    ViewResultMissing(usize),
    #[error("subordinate calls are only possible inside a crosschain transaction")]
    NotCrosschain,
    #[error("state update attempted in a read-only call")]
    ReadOnly,
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("rejected: {0}")]
    Rejected(&'static str),
    #[error("router {0} has no unlocked item satisfying the request")]
    NoneAvailable(Address),
    #[error("no contract is locked by {0}")]
    NoSuchLock(TxId),
}

/// A deployed contract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contract {
    address: Address,
    behavior: Behavior,
    lockable: bool,
    lock: Option<TxId>,
    committed: State,
    provisional: Option<State>,
}

impl Contract {
    pub fn address(&self) -> Address {
        self.address
    }

    pub fn behavior(&self) -> Behavior {
        self.behavior
    }

    pub fn lockable(&self) -> bool {
        self.lockable
    }

    pub fn lock(&self) -> Option<TxId> {
        self.lock
    }

    pub fn committed(&self) -> &State {
        &self.committed
    }

    pub fn provisional(&self) -> Option<&State> {
        self.provisional.as_ref()
    }
}

/// Ordinary single-chain transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalTransaction {
    pub target: Address,
    pub function: String,
    pub args: Vec<Value>,
    pub caller: String,
}

/// A view function call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewCall {
    pub target: Address,
    pub function: String,
    pub args: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Transaction,
    View,
}

/// A signed subordinate call embedded in a crosschain part, as seen by the
/// chain executing that part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubordinateCallRecord {
    pub chain: BlockchainId,
    pub target: Address,
    pub function: String,
    pub expected_args: Vec<Value>,
    pub kind: CallKind,
    /// Filled in for views once the result has been dispatched and checked.
    pub cached_result: Option<Value>,
}

/// An originating or subordinate transaction, reduced to what the executing
/// chain needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrosschainPart {
    pub tx_id: TxId,
    pub target: Address,
    pub function: String,
    pub args: Vec<Value>,
    pub caller: String,
    pub subordinates: Vec<SubordinateCallRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub chain: BlockchainId,
    pub block: u64,
    pub output: Option<Value>,
    pub written: Vec<Address>,
    /// Base-rate transactions this receipt represents.
    pub base_units: u32,
}

/// Successful trial execution of a crosschain part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartReady {
    pub block: u64,
    pub output: Option<Value>,
    pub locked: Vec<Address>,
    /// Indices into `subordinates` of the transactions to submit onward.
    pub to_submit: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalOutcome {
    Commit,
    Ignore,
}

/// Canonical dump of one contract (provisional state is deliberately left out).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractDump {
    pub behavior: Behavior,
    pub lockable: bool,
    pub lock: Option<TxId>,
    pub committed: State,
}

pub type ChainDump = BTreeMap<Address, ContractDump>;

#[derive(Debug, Clone)]
pub struct Chain {
    id: BlockchainId,
    contracts: BTreeMap<Address, Contract>,
    next_address: u64,
    height: u64,
}

impl Chain {
    pub fn new(id: BlockchainId) -> Self {
        Chain {
            id,
            contracts: BTreeMap::new(),
            next_address: 1,
            height: 0,
        }
    }

    pub fn id(&self) -> BlockchainId {
        self.id
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn contract(&self, address: Address) -> Result<&Contract, LedgerError> {
        self.contracts
            .get(&address)
            .ok_or(LedgerError::UnknownContract(address))
    }

    pub fn contracts(&self) -> impl Iterator<Item = &Contract> {
        self.contracts.values()
    }

    pub fn deploy(&mut self, behavior: Behavior, lockable: bool, initial_state: State) -> Address {
        let address = Address(self.next_address);
        self.next_address += 1;
        self.contracts.insert(
            address,
            Contract {
                address,
                behavior,
                lockable,
                lock: None,
                committed: initial_state,
                provisional: None,
            },
        );
        address
    }

    /// Executes and mines a plain transaction, updating committed state directly.
    pub fn execute_local(&mut self, tx: &LocalTransaction) -> Result<Receipt, LedgerError> {
        let mut ex = Exec::new(self, Mode::Local);
        let output = ex.call_transaction(tx.target, &tx.function, &tx.args, &tx.caller)?;
        ex.finish()?;
        let overlay = ex.into_overlay();
        self.height += 1;
        let written: Vec<Address> = overlay.keys().copied().collect();
        for (addr, delta) in overlay {
            let c = self
                .contracts
                .get_mut(&addr)
                .expect("overlay only holds known contracts");
            c.committed.extend(delta);
        }
        Ok(Receipt {
            chain: self.id,
            block: self.height,
            output,
            written,
            base_units: 1,
        })
    }

    /// Runs a view. `reader` is the crosschain transaction doing the read, if
    /// any; it alone sees the provisional state of contracts it has locked.
    pub fn execute_view(
        &self,
        call: &ViewCall,
        reader: Option<TxId>,
    ) -> Result<Value, LedgerError> {
        self.execute_view_with(call, reader, &[])
    }

    /// Like [`Chain::execute_view`] for a view that itself calls subordinate
    /// views whose results have already been fetched.
    pub fn execute_view_with(
        &self,
        call: &ViewCall,
        reader: Option<TxId>,
        subordinates: &[SubordinateCallRecord],
    ) -> Result<Value, LedgerError> {
        let mut ex = Exec::new(
            self,
            Mode::View {
                reader,
                calls: subordinates,
            },
        );
        let out = ex.call_view(call.target, &call.function, &call.args)?;
        ex.finish()?;
        Ok(out)
    }

    /// Trial-executes an originating or subordinate transaction.
    ///
    /// Every subordinate view must already carry its cached result. During
    /// execution each subordinate call site is checked against the next
    /// signed record of the same kind; any difference, extra call or unused
    /// record fails the part. On success the block is mined, every contract
    /// written is locked by `part.tx_id`, and the writes are kept as its
    /// provisional state. On failure nothing changes.
    pub fn process_crosschain_part(
        &mut self,
        part: &CrosschainPart,
    ) -> Result<PartReady, LedgerError> {
        if let Some(i) = part
            .subordinates
            .iter()
            .filter(|r| r.kind == CallKind::View)
            .position(|r| r.cached_result.is_none())
        {
            return Err(LedgerError::ViewResultMissing(i));
        }
        let mut ex = Exec::new(
            self,
            Mode::Crosschain {
                tx_id: part.tx_id,
                calls: &part.subordinates,
            },
        );
        let output = ex.call_transaction(part.target, &part.function, &part.args, &part.caller)?;
        ex.finish()?;
        let overlay = ex.into_overlay();
        self.height += 1;
        let locked: Vec<Address> = overlay.keys().copied().collect();
        for (addr, delta) in overlay {
            let c = self
                .contracts
                .get_mut(&addr)
                .expect("overlay only holds known contracts");
            c.lock = Some(part.tx_id);
            c.provisional = Some(delta);
        }
        let to_submit = part
            .subordinates
            .iter()
            .enumerate()
            .filter(|(_, r)| r.kind == CallKind::Transaction)
            .map(|(i, _)| i)
            .collect();
        Ok(PartReady {
            block: self.height,
            output,
            locked,
            to_submit,
        })
    }

    /// Contracts currently locked by `tx_id`.
    pub fn locked_by(&self, tx_id: TxId) -> Vec<Address> {
        self.contracts
            .values()
            .filter(|c| c.lock == Some(tx_id))
            .map(|c| c.address)
            .collect()
    }

    /// Mines the signalling transaction for `tx_id`: merges (Commit) or drops
    /// (Ignore) every provisional overlay it holds and releases its locks.
    pub fn apply_signalling(
        &mut self,
        tx_id: TxId,
        outcome: SignalOutcome,
    ) -> Result<Receipt, LedgerError> {
        let locked = self.locked_by(tx_id);
        if locked.is_empty() {
            return Err(LedgerError::NoSuchLock(tx_id));
        }
        self.height += 1;
        for addr in &locked {
            let c = self
                .contracts
                .get_mut(addr)
                .expect("address came from this map");
            let delta = c.provisional.take();
            c.lock = None;
            if outcome == SignalOutcome::Commit {
                c.committed.extend(delta.unwrap_or_default());
            }
        }
        Ok(Receipt {
            chain: self.id,
            block: self.height,
            output: None,
            written: locked,
            base_units: 1,
        })
    }

    /// Lowest-indexed item behind `router` that is unlocked and satisfies
    /// `available` (evaluated on committed state).
    pub fn select_unlocked_item(
        &self,
        router: Address,
        available: impl Fn(Address, &State) -> bool,
    ) -> Result<Address, LedgerError> {
        let ex = Exec::new(
            self,
            Mode::View {
                reader: None,
                calls: &[],
            },
        );
        ex.select_from_router(router, contracts::ITEM_PREFIX, |ex, addr| {
            Ok(available(addr, ex.chain().contract(addr)?.committed()))
        })
    }

    pub fn dump(&self) -> ChainDump {
        self.contracts
            .values()
            .map(|c| {
                (
                    c.address,
                    ContractDump {
                        behavior: c.behavior,
                        lockable: c.lockable,
                        lock: c.lock,
                        committed: c.committed.clone(),
                    },
                )
            })
            .collect()
    }
}
