//! Native contract behaviors.

use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use super::exec::Exec;
use super::LedgerError;
use crate::codec::sha256_parts;
use crate::types::{Address, BlockchainId, Value};

pub(crate) const ITEM_PREFIX: &str = "item/";
pub(crate) const PURSE_PREFIX: &str = "purse/";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Fungible token balances (`balance/<account>`).
    Token,
    /// Nonlockable front for a list of items and token purses.
    Router,
    /// A bookable resource such as a hotel room or train seat.
    Item,
    /// Supply chain event log that attests each event on a provenance chain.
    SupplyChain,
    /// Provenance records, one per item.
    Provenance,
    /// Commodity prices set by the feed owner.
    OraclePriceFeed,
    /// Benchmark account store (`open`, `query`, `transfer`).
    SimpleAccount,
    /// Books a hotel room and a train seat on two other chains.
    TravelAgency,
    /// Settles trades at a price read from an oracle chain.
    OracleConsumer,
}

pub(crate) fn is_view(behavior: Behavior, function: &str) -> bool {
    use Behavior::*;
    matches!(
        (behavior, function),
        (Token, "balance_of" | "total_supply")
            | (Router, "find")
            | (Item, "is_booked")
            | (SupplyChain, "event_count")
            | (Provenance, "lookup")
            | (OraclePriceFeed, "get")
            | (SimpleAccount, "query")
            | (TravelAgency, "trip_count")
            | (OracleConsumer, "settlement")
    )
}

/// Digest a supply chain event is attested under.
pub fn provenance_digest(item: &str, supplier: &str) -> [u8; 32] {
    sha256_parts(
        b"xchain/provenance",
        &[item.as_bytes(), supplier.as_bytes()],
    )
}

struct Args<'v> {
    function: &'v str,
    values: &'v [Value],
}

impl<'v> Args<'v> {
    fn new(function: &'v str, values: &'v [Value], arity: usize) -> Result<Self, LedgerError> {
        if values.len() != arity {
            return Err(bad(function, "wrong number of arguments"));
        }
        Ok(Args { function, values })
    }

    fn int(&self, i: usize) -> Result<i64, LedgerError> {
        self.values[i]
            .as_int()
            .ok_or_else(|| bad(self.function, "expected an integer"))
    }

    fn text(&self, i: usize) -> Result<&'v str, LedgerError> {
        self.values[i]
            .as_text()
            .ok_or_else(|| bad(self.function, "expected text"))
    }

    fn addr(&self, i: usize) -> Result<Address, LedgerError> {
        self.values[i]
            .as_addr()
            .ok_or_else(|| bad(self.function, "expected an address"))
    }

    fn chain(&self, i: usize) -> Result<BlockchainId, LedgerError> {
        self.values[i]
            .as_chain()
            .ok_or_else(|| bad(self.function, "expected a chain id"))
    }

    fn bytes(&self, i: usize) -> Result<&'v [u8], LedgerError> {
        match &self.values[i] {
            Value::Bytes(b) => Ok(b),
            _ => Err(bad(self.function, "expected bytes")),
        }
    }
}

fn bad(function: &str, reason: &'static str) -> LedgerError {
    LedgerError::BadArguments {
        function: String::from(function),
        reason,
    }
}

fn counter_key(prefix: &str) -> String {
    format!("{prefix}count")
}

/// Appends `value` at `<prefix><n>` and bumps `<prefix>count`; returns `n`.
fn append(
    ex: &mut Exec<'_>,
    addr: Address,
    prefix: &str,
    value: Value,
) -> Result<i64, LedgerError> {
    let n = ex.read_int(addr, &counter_key(prefix))?;
    ex.write(addr, format!("{prefix}{n}"), value)?;
    ex.write(addr, counter_key(prefix), Value::Int(n + 1))?;
    Ok(n)
}

fn token_transfer(
    ex: &mut Exec<'_>,
    token: Address,
    from: &str,
    to: &str,
    amount: i64,
) -> Result<(), LedgerError> {
    if amount < 0 {
        return Err(bad("transfer", "negative amount"));
    }
    let from_key = format!("balance/{from}");
    let available = ex.read_int(token, &from_key)?;
    if available < amount {
        return Err(LedgerError::InsufficientBalance {
            account: String::from(from),
            needed: amount,
            available,
        });
    }
    if from == to {
        return Ok(());
    }
    let to_key = format!("balance/{to}");
    let to_balance = ex.read_int(token, &to_key)?;
    ex.write(token, from_key, Value::Int(available - amount))?;
    ex.write(token, to_key, Value::Int(to_balance + amount))?;
    Ok(())
}

fn is_booked(ex: &Exec<'_>, item: Address, date: &str) -> Result<bool, LedgerError> {
    Ok(ex.read(item, &format!("booked/{date}"))?.is_some())
}

pub(crate) fn invoke(
    ex: &mut Exec<'_>,
    target: Address,
    behavior: Behavior,
    function: &str,
    args: &[Value],
    caller: &str,
) -> Result<Option<Value>, LedgerError> {
    use Behavior::*;
    match (behavior, function) {
        (Token, "transfer") => {
            let a = Args::new(function, args, 2)?;
            token_transfer(ex, target, caller, a.text(0)?, a.int(1)?)?;
            Ok(None)
        }
        (Token, "balance_of") => {
            let a = Args::new(function, args, 1)?;
            Ok(Some(Value::Int(
                ex.read_int(target, &format!("balance/{}", a.text(0)?))?,
            )))
        }
        (Token, "total_supply") => {
            Args::new(function, args, 0)?;
            let mut total = 0i64;
            for k in ex.keys_with_prefix(target, "balance/")? {
                total += ex.read_int(target, &k)?;
            }
            Ok(Some(Value::Int(total)))
        }

        (Router, "book") => {
            let a = Args::new(function, args, 3)?;
            let (date, customer, price) = (a.text(0)?, a.text(1)?, a.int(2)?);
            let item = ex.select_from_router(target, ITEM_PREFIX, |ex, item| {
                Ok(!is_booked(ex, item, date)?)
            })?;
            invoke(
                ex,
                item,
                Item,
                "book",
                &[Value::text(date), Value::text(customer)],
                customer,
            )?;
            if price > 0 {
                let purse = match ex.select_from_router(target, PURSE_PREFIX, |ex, p| {
                    Ok(ex.read_int(p, &format!("balance/{customer}"))? >= price)
                }) {
                    Ok(p) => p,
                    Err(LedgerError::NoneAvailable(_)) => {
                        // Distinguish "every purse busy" from "not enough money".
                        let any = ex.select_from_router(target, PURSE_PREFIX, |_, _| Ok(true))?;
                        let available = ex.read_int(any, &format!("balance/{customer}"))?;
                        return Err(LedgerError::InsufficientBalance {
                            account: String::from(customer),
                            needed: price,
                            available,
                        });
                    }
                    Err(e) => return Err(e),
                };
                let payee = ex
                    .read(target, "payee")?
                    .and_then(|v| v.as_text().map(String::from))
                    .ok_or(LedgerError::Rejected("router has no payee"))?;
                token_transfer(ex, purse, customer, &payee, price)?;
            }
            Ok(Some(Value::Addr(item)))
        }
        (Router, "find") => {
            let a = Args::new(function, args, 1)?;
            let date = a.text(0)?;
            let item = ex.select_from_router(target, ITEM_PREFIX, |ex, item| {
                Ok(!is_booked(ex, item, date)?)
            })?;
            Ok(Some(Value::Addr(item)))
        }

        (Item, "book") => {
            let a = Args::new(function, args, 2)?;
            let date = a.text(0)?;
            if is_booked(ex, target, date)? {
                return Err(LedgerError::Rejected("already booked for that date"));
            }
            ex.write(target, format!("booked/{date}"), Value::text(a.text(1)?))?;
            Ok(None)
        }
        (Item, "is_booked") => {
            let a = Args::new(function, args, 1)?;
            Ok(Some(Value::Int(i64::from(is_booked(
                ex,
                target,
                a.text(0)?,
            )?))))
        }

        (SupplyChain, "ship") => {
            let a = Args::new(function, args, 4)?;
            let (item, supplier) = (a.text(0)?, a.text(1)?);
            let n = append(
                ex,
                target,
                "event/",
                Value::Text(format!("{item}|{supplier}")),
            )?;
            let digest = provenance_digest(item, supplier);
            ex.subordinate_transaction(
                a.chain(2)?,
                a.addr(3)?,
                "attest",
                &[Value::text(item), Value::Bytes(digest.to_vec())],
            )?;
            Ok(Some(Value::Int(n)))
        }
        (SupplyChain, "event_count") => {
            Args::new(function, args, 0)?;
            Ok(Some(Value::Int(ex.read_int(target, "event/count")?)))
        }

        (Provenance, "attest") => {
            let a = Args::new(function, args, 2)?;
            let (item, digest) = (a.text(0)?, a.bytes(1)?);
            if item.is_empty() {
                return Err(bad(function, "empty item id"));
            }
            if digest.len() != 32 {
                return Err(bad(function, "digest must be 32 bytes"));
            }
            let key = format!("provenance/{item}");
            if ex.read(target, &key)?.is_some() {
                return Err(LedgerError::Rejected("item already attested"));
            }
            ex.write(target, key, Value::Bytes(digest.to_vec()))?;
            Ok(None)
        }
        (Provenance, "lookup") => {
            let a = Args::new(function, args, 1)?;
            let key = format!("provenance/{}", a.text(0)?);
            ex.read(target, &key)?
                .map(Some)
                .ok_or(LedgerError::UnknownKey(key))
        }

        (OraclePriceFeed, "set") => {
            let a = Args::new(function, args, 2)?;
            ex.write(
                target,
                format!("price/{}", a.text(0)?),
                Value::Int(a.int(1)?),
            )?;
            Ok(None)
        }
        (OraclePriceFeed, "get") => {
            let a = Args::new(function, args, 1)?;
            let key = format!("price/{}", a.text(0)?);
            ex.read(target, &key)?
                .map(Some)
                .ok_or(LedgerError::UnknownKey(key))
        }

        (SimpleAccount, "open") => {
            let a = Args::new(function, args, 2)?;
            ex.write(
                target,
                format!("account/{}", a.text(0)?),
                Value::Int(a.int(1)?),
            )?;
            Ok(None)
        }
        (SimpleAccount, "query") => {
            let a = Args::new(function, args, 1)?;
            let key = format!("account/{}", a.text(0)?);
            ex.read(target, &key)?
                .map(Some)
                .ok_or(LedgerError::UnknownKey(key))
        }
        (SimpleAccount, "transfer") => {
            let a = Args::new(function, args, 3)?;
            let (from, to, amount) = (a.text(0)?, a.text(1)?, a.int(2)?);
            let from_key = format!("account/{from}");
            let to_key = format!("account/{to}");
            let available = ex
                .read(target, &from_key)?
                .and_then(|v| v.as_int())
                .ok_or(LedgerError::UnknownKey(from_key.clone()))?;
            let dest = ex
                .read(target, &to_key)?
                .and_then(|v| v.as_int())
                .ok_or(LedgerError::UnknownKey(to_key.clone()))?;
            if amount < 0 || available < amount {
                return Err(LedgerError::InsufficientBalance {
                    account: String::from(from),
                    needed: amount,
                    available,
                });
            }
            ex.write(target, from_key, Value::Int(available - amount))?;
            ex.write(target, to_key, Value::Int(dest + amount))?;
            Ok(None)
        }

        (TravelAgency, "book_trip") => {
            let a = Args::new(function, args, 8)?;
            let (date, traveller) = (a.text(0)?, a.text(1)?);
            append(
                ex,
                target,
                "trip/",
                Value::Text(format!("{date}|{traveller}")),
            )?;
            for leg in [2, 5] {
                ex.subordinate_transaction(
                    a.chain(leg)?,
                    a.addr(leg + 1)?,
                    "book",
                    &[
                        Value::text(date),
                        Value::text(traveller),
                        Value::Int(a.int(leg + 2)?),
                    ],
                )?;
            }
            Ok(None)
        }
        (TravelAgency, "trip_count") => {
            Args::new(function, args, 0)?;
            Ok(Some(Value::Int(ex.read_int(target, "trip/count")?)))
        }

        (OracleConsumer, "settle") => {
            let a = Args::new(function, args, 4)?;
            let (symbol, qty) = (a.text(0)?, a.int(1)?);
            let price = ex
                .subordinate_view(a.chain(2)?, a.addr(3)?, "get", &[Value::text(symbol)])?
                .as_int()
                .ok_or(LedgerError::Rejected("oracle price is not an integer"))?;
            let value = price
                .checked_mul(qty)
                .ok_or(LedgerError::Rejected("settlement overflows"))?;
            let n = append(ex, target, "settlement/", Value::Int(value))?;
            Ok(Some(Value::Int(n)))
        }
        (OracleConsumer, "settlement") => {
            let a = Args::new(function, args, 1)?;
            let key = format!("settlement/{}", a.int(0)?);
            ex.read(target, &key)?
                .map(Some)
                .ok_or(LedgerError::UnknownKey(key))
        }

        _ => Err(LedgerError::UnknownFunction {
            behavior,
            function: String::from(function),
        }),
    }
}

/// Initial state helpers used by scenario builders and tests.
pub mod init {
    use super::*;
    use crate::ledger::State;
    use alloc::vec::Vec;

    pub fn token(balances: &[(&str, i64)]) -> State {
        balances
            .iter()
            .map(|(who, amt)| (format!("balance/{who}"), Value::Int(*amt)))
            .collect()
    }

    pub fn router(items: &[Address], purses: &[Address], payee: &str) -> State {
        let mut s = State::new();
        for (prefix, list) in [(ITEM_PREFIX, items), (PURSE_PREFIX, purses)] {
            s.insert(counter_key(prefix), Value::Int(list.len() as i64));
            for (i, a) in list.iter().enumerate() {
                s.insert(format!("{prefix}{i}"), Value::Addr(*a));
            }
        }
        s.insert(String::from("payee"), Value::text(payee));
        s
    }

    pub fn prices(entries: &[(&str, i64)]) -> State {
        entries
            .iter()
            .map(|(sym, p)| (format!("price/{sym}"), Value::Int(*p)))
            .collect()
    }

    pub fn empty() -> State {
        State::new()
    }

    /// Router item list as stored, for tests that inspect it.
    pub fn router_items(state: &State) -> Vec<Address> {
        let n = state
            .get(&counter_key(ITEM_PREFIX))
            .and_then(|v| v.as_int())
            .unwrap_or(0);
        (0..n)
            .filter_map(|i| {
                state
                    .get(&format!("{ITEM_PREFIX}{i}"))
                    .and_then(|v| v.as_addr())
            })
            .collect()
    }
}
