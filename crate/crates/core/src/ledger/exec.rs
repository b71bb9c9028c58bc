use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::contracts;
use super::{CallKind, Chain, LedgerError, State, SubordinateCallRecord};
use crate::types::{Address, BlockchainId, TxId, Value};

pub(crate) enum Mode<'a> {
    Local,
    Crosschain {
        tx_id: TxId,
        calls: &'a [SubordinateCallRecord],
    },
    View {
        reader: Option<TxId>,
        calls: &'a [SubordinateCallRecord],
    },
}

/// One (trial) execution against a chain. Writes go to a copy-on-write
/// overlay that the caller either discards or installs.
pub(crate) struct Exec<'a> {
    chain: &'a Chain,
    mode: Mode<'a>,
    overlay: BTreeMap<Address, State>,
    tx_calls: Vec<usize>,
    view_calls: Vec<usize>,
    next_tx: usize,
    next_view: usize,
}

impl<'a> Exec<'a> {
    pub(crate) fn new(chain: &'a Chain, mode: Mode<'a>) -> Self {
        let calls: &[SubordinateCallRecord] = match &mode {
            Mode::Local => &[],
            Mode::Crosschain { calls, .. } | Mode::View { calls, .. } => calls,
        };
        let pick = |kind| {
            calls
                .iter()
                .enumerate()
                .filter(|(_, r)| r.kind == kind)
                .map(|(i, _)| i)
                .collect()
        };
        Exec {
            chain,
            tx_calls: pick(CallKind::Transaction),
            view_calls: pick(CallKind::View),
            mode,
            overlay: BTreeMap::new(),
            next_tx: 0,
            next_view: 0,
        }
    }

    pub(crate) fn chain(&self) -> &'a Chain {
        self.chain
    }

    fn calls(&self) -> &'a [SubordinateCallRecord] {
        match self.mode {
            Mode::Local => &[],
            Mode::Crosschain { calls, .. } | Mode::View { calls, .. } => calls,
        }
    }

    fn own_tx(&self) -> Option<TxId> {
        match self.mode {
            Mode::Local => None,
            Mode::Crosschain { tx_id, .. } => Some(tx_id),
            Mode::View { reader, .. } => reader,
        }
    }

    pub(crate) fn read(&self, addr: Address, key: &str) -> Result<Option<Value>, LedgerError> {
        if let Some(v) = self.overlay.get(&addr).and_then(|d| d.get(key)) {
            return Ok(Some(v.clone()));
        }
        let c = self.chain.contract(addr)?;
        if c.lock.is_some() && c.lock == self.own_tx() {
            if let Some(v) = c.provisional.as_ref().and_then(|p| p.get(key)) {
                return Ok(Some(v.clone()));
            }
        }
        Ok(c.committed.get(key).cloned())
    }

    pub(crate) fn read_int(&self, addr: Address, key: &str) -> Result<i64, LedgerError> {
        Ok(self.read(addr, key)?.and_then(|v| v.as_int()).unwrap_or(0))
    }

    /// Every key of `addr` starting with `prefix`, overlay included.
    pub(crate) fn keys_with_prefix(
        &self,
        addr: Address,
        prefix: &str,
    ) -> Result<Vec<String>, LedgerError> {
        let c = self.chain.contract(addr)?;
        let mut keys: Vec<String> = c
            .committed
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect();
        if let Some(d) = self.overlay.get(&addr) {
            keys.extend(d.keys().filter(|k| k.starts_with(prefix)).cloned());
        }
        keys.sort();
        keys.dedup();
        Ok(keys)
    }

    pub(crate) fn write(
        &mut self,
        addr: Address,
        key: String,
        value: Value,
    ) -> Result<(), LedgerError> {
        let c = self.chain.contract(addr)?;
        match self.mode {
            Mode::View { .. } => return Err(LedgerError::ReadOnly),
            Mode::Local => {}
            Mode::Crosschain { .. } if !c.lockable => return Err(LedgerError::NotLockable(addr)),
            Mode::Crosschain { .. } => {}
        }
        if let Some(by) = c.lock {
            return Err(LedgerError::Locked { address: addr, by });
        }
        self.overlay.entry(addr).or_default().insert(key, value);
        Ok(())
    }

    pub(crate) fn is_available(&self, addr: Address) -> Result<bool, LedgerError> {
        Ok(self.chain.contract(addr)?.lock.is_none())
    }

    pub(crate) fn call_transaction(
        &mut self,
        target: Address,
        function: &str,
        args: &[Value],
        caller: &str,
    ) -> Result<Option<Value>, LedgerError> {
        let behavior = self.chain.contract(target)?.behavior;
        if contracts::is_view(behavior, function) {
            return Err(LedgerError::UnknownFunction {
                behavior,
                function: String::from(function),
            });
        }
        contracts::invoke(self, target, behavior, function, args, caller)
    }

    pub(crate) fn call_view(
        &mut self,
        target: Address,
        function: &str,
        args: &[Value],
    ) -> Result<Value, LedgerError> {
        let behavior = self.chain.contract(target)?.behavior;
        if !contracts::is_view(behavior, function) {
            return Err(LedgerError::UnknownFunction {
                behavior,
                function: String::from(function),
            });
        }
        contracts::invoke(self, target, behavior, function, args, "")?
            .ok_or(LedgerError::Rejected("view returned nothing"))
    }

    /// A call site that invokes a transaction on another chain.
    pub(crate) fn subordinate_transaction(
        &mut self,
        chain: BlockchainId,
        target: Address,
        function: &str,
        args: &[Value],
    ) -> Result<(), LedgerError> {
        match self.mode {
            Mode::Local => return Err(LedgerError::NotCrosschain),
            Mode::View { .. } => return Err(LedgerError::ReadOnly),
            Mode::Crosschain { .. } => {}
        }
        let k = self.next_tx;
        self.next_tx += 1;
        let calls = self.calls();
        let rec = self.tx_calls.get(k).map(|&i| &calls[i]);
        match_call(rec, k, chain, target, function, args)?;
        Ok(())
    }

    /// A call site that reads a view on another chain; answers from the cache.
    pub(crate) fn subordinate_view(
        &mut self,
        chain: BlockchainId,
        target: Address,
        function: &str,
        args: &[Value],
    ) -> Result<Value, LedgerError> {
        if let Mode::Local = self.mode {
            return Err(LedgerError::NotCrosschain);
        }
        let k = self.next_view;
        self.next_view += 1;
        let calls = self.calls();
        let rec = self.view_calls.get(k).map(|&i| &calls[i]);
        let rec = match_call(rec, k, chain, target, function, args)?;
        rec.cached_result
            .clone()
            .ok_or(LedgerError::ViewResultMissing(k))
    }

    /// Fails if any signed subordinate call was never reached.
    pub(crate) fn finish(&self) -> Result<(), LedgerError> {
        let unused = self.tx_calls.len().saturating_sub(self.next_tx)
            + self.view_calls.len().saturating_sub(self.next_view);
        if unused > 0 {
            return Err(LedgerError::MissingSubordinateCall(unused));
        }
        Ok(())
    }

    pub(crate) fn into_overlay(self) -> BTreeMap<Address, State> {
        self.overlay
    }

    /// Walks `router`'s `<prefix><i>` entries in index order and returns the
    /// first unlocked one accepted by `pred`.
    pub(crate) fn select_from_router(
        &self,
        router: Address,
        prefix: &str,
        pred: impl Fn(&Self, Address) -> Result<bool, LedgerError>,
    ) -> Result<Address, LedgerError> {
        let count = self.read_int(router, &alloc::format!("{prefix}count"))?;
        for i in 0..count {
            let item = self
                .read(router, &alloc::format!("{prefix}{i}"))?
                .and_then(|v| v.as_addr())
                .ok_or(LedgerError::Rejected("router entry is not an address"))?;
            if self.is_available(item)? && pred(self, item)? {
                return Ok(item);
            }
        }
        Err(LedgerError::NoneAvailable(router))
    }
}

fn match_call<'r>(
    rec: Option<&'r SubordinateCallRecord>,
    index: usize,
    chain: BlockchainId,
    target: Address,
    function: &str,
    args: &[Value],
) -> Result<&'r SubordinateCallRecord, LedgerError> {
    let rec = rec
        .filter(|r| r.chain == chain && r.target == target && r.function == function)
        .ok_or_else(|| LedgerError::UnexpectedSubordinateCall {
            chain,
            target,
            function: String::from(function),
        })?;
    if rec.expected_args != args {
        return Err(LedgerError::ParameterMismatch {
            index,
            expected: rec.expected_args.clone(),
            actual: args.to_vec(),
        });
    }
    Ok(rec)
}
