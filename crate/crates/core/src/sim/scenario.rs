//! Built-in scenarios: contract deployment, per-transaction call trees,
//! fault injection variants and end-of-run state audits.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{InjectionKind, Rotation, SimConfig};
use crate::ledger::{init, provenance_digest, Behavior, Chain};
use crate::perf_model::{Role, ScenarioKind};
use crate::protocol::{CallSpec, Network, NodeId, TxKind};
use crate::types::{Address, BlockchainId, Value};

const HOTEL_PRICE: i64 = 10;
const TRAIN_PRICE: i64 = 12;
const PURSE_FUNDS: i64 = 1_000_000;
const UNAFFORDABLE: i64 = 1_000_000_000;
const PRICES: [(&str, i64); 2] = [("XAU", 1800), ("XAG", 25)];

pub fn scenario_description(kind: ScenarioKind) -> &'static str {
    match kind {
        ScenarioKind::HotelTrain => {
            "travel agency chain books a hotel room and a train seat, each paid in tokens, \
             on two other chains (2 subordinate transactions)"
        }
        ScenarioKind::SupplyChainProvenance => {
            "supply chain event recorded together with a provenance attestation on a \
             second chain (1 subordinate transaction)"
        }
        ScenarioKind::Oracle => {
            "trade settled at a commodity price read from an oracle chain (1 subordinate view)"
        }
    }
}

#[derive(Debug, Clone)]
enum Layout {
    HotelTrain {
        agency: BlockchainId,
        hotel: BlockchainId,
        train: BlockchainId,
        agencies: Vec<Address>,
        hotel_router: Address,
        train_router: Address,
        hotel_items: Vec<Address>,
        hotel_purses: Vec<Address>,
        train_items: Vec<Address>,
        train_purses: Vec<Address>,
    },
    SupplyChain {
        supply: BlockchainId,
        provenance: BlockchainId,
        shippers: Vec<Address>,
        registries: Vec<Address>,
        archive: Address,
    },
    Oracle {
        consumer: BlockchainId,
        oracle: BlockchainId,
        consumers: Vec<Address>,
        feed: Address,
    },
}

/// A deployed scenario.
#[derive(Debug)]
pub struct Scenario {
    kind: ScenarioKind,
    network: Option<Network>,
    layout: Layout,
    window: u32,
}

fn chain(n: &mut Network, id: BlockchainId) -> &mut Chain {
    n.chain_mut(id).expect("app chain exists")
}

fn deploy_n(
    chain: &mut Chain,
    n: u32,
    behavior: Behavior,
    state: impl Fn() -> crate::ledger::State,
) -> Vec<Address> {
    (0..n)
        .map(|_| chain.deploy(behavior, true, state()))
        .collect()
}

impl Scenario {
    pub(super) fn deploy(config: &SimConfig, mut network: Network) -> Scenario {
        let window = config.window();
        let apps: Vec<BlockchainId> = config.app_chains().iter().map(|c| c.id).collect();
        let layout = match config.scenario {
            ScenarioKind::HotelTrain => {
                let (agency, hotel, train) = (apps[0], apps[1], apps[2]);
                let agencies = deploy_n(
                    chain(&mut network, agency),
                    window,
                    Behavior::TravelAgency,
                    init::empty,
                );
                let mut side = |id, payee: &str| {
                    let c = chain(&mut network, id);
                    let items = deploy_n(c, window, Behavior::Item, init::empty);
                    let purses = deploy_n(c, window, Behavior::Token, || {
                        init::token(&[("agent", PURSE_FUNDS)])
                    });
                    let router = c.deploy(
                        Behavior::Router,
                        false,
                        init::router(&items, &purses, payee),
                    );
                    (router, items, purses)
                };
                let (hotel_router, hotel_items, hotel_purses) = side(hotel, "hotel");
                let (train_router, train_items, train_purses) = side(train, "train");
                Layout::HotelTrain {
                    agency,
                    hotel,
                    train,
                    agencies,
                    hotel_router,
                    train_router,
                    hotel_items,
                    hotel_purses,
                    train_items,
                    train_purses,
                }
            }
            ScenarioKind::SupplyChainProvenance => {
                let (supply, provenance) = (apps[0], apps[1]);
                let shippers = deploy_n(
                    chain(&mut network, supply),
                    window,
                    Behavior::SupplyChain,
                    init::empty,
                );
                let p = chain(&mut network, provenance);
                let registries = deploy_n(p, window, Behavior::Provenance, init::empty);
                let archive = p.deploy(Behavior::Provenance, false, init::empty());
                Layout::SupplyChain {
                    supply,
                    provenance,
                    shippers,
                    registries,
                    archive,
                }
            }
            ScenarioKind::Oracle => {
                let (consumer, oracle) = (apps[0], apps[1]);
                let consumers = deploy_n(
                    chain(&mut network, consumer),
                    window,
                    Behavior::OracleConsumer,
                    init::empty,
                );
                let feed = chain(&mut network, oracle).deploy(
                    Behavior::OraclePriceFeed,
                    true,
                    init::prices(&PRICES),
                );
                Layout::Oracle {
                    consumer,
                    oracle,
                    consumers,
                    feed,
                }
            }
        };
        Scenario {
            kind: config.scenario,
            network: Some(network),
            layout,
            window,
        }
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    /// Hands the network over to the engine.
    pub fn take_network(&mut self) -> Network {
        self.network.take().expect("network taken once")
    }

    pub fn network(&self) -> Option<&Network> {
        self.network.as_ref()
    }

    pub fn originating_chain(&self) -> BlockchainId {
        match &self.layout {
            Layout::HotelTrain { agency, .. } => *agency,
            Layout::SupplyChain { supply, .. } => *supply,
            Layout::Oracle { consumer, .. } => *consumer,
        }
    }

    pub fn subordinate_chains(&self) -> Vec<BlockchainId> {
        match &self.layout {
            Layout::HotelTrain { hotel, train, .. } => vec![*hotel, *train],
            Layout::SupplyChain { provenance, .. } => vec![*provenance],
            Layout::Oracle { oracle, .. } => vec![*oracle],
        }
    }

    /// Call tree for transaction `k` using contract slot `slot`.
    pub fn spec(&self, k: u64, slot: u32, injection: Option<InjectionKind>) -> CallSpec {
        let s = slot as usize;
        let fail = injection == Some(InjectionKind::SubordinateFailure);
        let tamper = injection == Some(InjectionKind::ParameterTamper);
        match &self.layout {
            Layout::HotelTrain {
                agency,
                hotel,
                train,
                agencies,
                hotel_router,
                train_router,
                ..
            } => {
                let date = format!("day-{k}");
                // Alternate which leg fails.
                let hotel_price = if fail && k.is_multiple_of(2) {
                    UNAFFORDABLE
                } else {
                    HOTEL_PRICE
                };
                let train_price = if fail && k % 2 == 1 {
                    UNAFFORDABLE
                } else {
                    TRAIN_PRICE
                };
                let leg = |chain, router, price: i64| {
                    let signed = if tamper { price + 1 } else { price };
                    CallSpec::new(
                        TxKind::Subordinate,
                        chain,
                        router,
                        "book",
                        vec![Value::text(&date), Value::text("agent"), Value::Int(signed)],
                    )
                    .caller("agent")
                };
                CallSpec::new(
                    TxKind::Originating,
                    *agency,
                    agencies[s],
                    "book_trip",
                    vec![
                        Value::text(&date),
                        Value::text("agent"),
                        Value::Chain(*hotel),
                        Value::Addr(*hotel_router),
                        Value::Int(hotel_price),
                        Value::Chain(*train),
                        Value::Addr(*train_router),
                        Value::Int(train_price),
                    ],
                )
                .caller("agent")
                .child(leg(*hotel, *hotel_router, hotel_price))
                .child(leg(*train, *train_router, train_price))
            }
            Layout::SupplyChain {
                supply,
                provenance,
                shippers,
                registries,
                archive,
            } => {
                let item = format!("pallet-{k}");
                let registry = if fail { *archive } else { registries[s] };
                let digest = if tamper {
                    [0u8; 32]
                } else {
                    provenance_digest(&item, "acme")
                };
                CallSpec::new(
                    TxKind::Originating,
                    *supply,
                    shippers[s],
                    "ship",
                    vec![
                        Value::text(&item),
                        Value::text("acme"),
                        Value::Chain(*provenance),
                        Value::Addr(registry),
                    ],
                )
                .caller("acme")
                .child(
                    CallSpec::new(
                        TxKind::Subordinate,
                        *provenance,
                        registry,
                        "attest",
                        vec![Value::text(&item), Value::Bytes(digest.to_vec())],
                    )
                    .caller("acme"),
                )
            }
            Layout::Oracle {
                consumer,
                oracle,
                consumers,
                feed,
            } => {
                let symbol = if fail {
                    "XPT"
                } else {
                    PRICES[(k % 2) as usize].0
                };
                let signed = if tamper {
                    if symbol == "XAU" {
                        "XAG"
                    } else {
                        "XAU"
                    }
                } else {
                    symbol
                };
                let qty = (k % 5 + 1) as i64;
                CallSpec::new(
                    TxKind::Originating,
                    *consumer,
                    consumers[s],
                    "settle",
                    vec![
                        Value::text(symbol),
                        Value::Int(qty),
                        Value::Chain(*oracle),
                        Value::Addr(*feed),
                    ],
                )
                .caller("trader")
                .child(CallSpec::new(
                    TxKind::View,
                    *oracle,
                    *feed,
                    "get",
                    vec![Value::text(signed)],
                ))
            }
        }
    }

    /// Table II role of each node whose role is fixed by the configuration.
    pub fn roles(&self, config: &SimConfig) -> BTreeMap<NodeId, Role> {
        let mut out = BTreeMap::new();
        for c in config.resolved_chains() {
            for i in 1..=c.n_validators {
                let node = NodeId::new(c.id, i);
                let instigating = match config.rotation {
                    Rotation::Fixed => i == 1,
                    Rotation::RoundRobin => (i as usize) <= config.instigators.len(),
                };
                let fixed = config.rotation == Rotation::Fixed || config.instigators.len() == 1;
                let role = if c.id == config.coordination_chain {
                    Some(Role::CoordinationChainNode)
                } else if c.id == self.originating_chain() {
                    match (instigating, fixed) {
                        (true, true) => Some(Role::OriginatingCoordinator),
                        (true, false) => None,
                        (false, _) => Some(Role::OriginatingOther),
                    }
                } else if instigating && fixed {
                    Some(match self.kind {
                        ScenarioKind::Oracle => Role::SubordinateViewServer,
                        _ => Role::SubordinateCoordinator,
                    })
                } else {
                    None
                };
                if let Some(r) = role {
                    out.insert(node, r);
                }
            }
        }
        out
    }

    /// Checks that the final committed state reflects exactly `committed`
    /// transactions.
    pub fn audit(&self, network: &Network, committed: &[(u64, u32)]) -> Vec<String> {
        let n = committed.len() as i64;
        let mut problems = Vec::new();
        let mut expect = |what: &str, got: i64, want: i64| {
            if got != want {
                problems.push(format!("audit: {what} is {got}, expected {want}"));
            }
        };
        let int = |chain: BlockchainId, addr: Address, key: &str| -> i64 {
            network
                .chain(chain)
                .and_then(|c| c.contract(addr).ok())
                .and_then(|c| c.committed().get(key).and_then(Value::as_int))
                .unwrap_or(0)
        };
        let keys = |chain: BlockchainId, addr: Address, prefix: &str| -> i64 {
            network
                .chain(chain)
                .and_then(|c| c.contract(addr).ok())
                .map_or(0, |c| {
                    c.committed()
                        .keys()
                        .filter(|k| k.starts_with(prefix))
                        .count() as i64
                })
        };
        let sum = |chain, addrs: &[Address], key: &str| {
            addrs.iter().map(|a| int(chain, *a, key)).sum::<i64>()
        };
        match &self.layout {
            Layout::HotelTrain {
                agency,
                hotel,
                train,
                agencies,
                hotel_items,
                hotel_purses,
                train_items,
                train_purses,
                ..
            } => {
                expect("trips booked", sum(*agency, agencies, "trip/count"), n);
                let funds = PURSE_FUNDS * i64::from(self.window);
                for (name, chain, items, purses, price) in [
                    ("hotel", *hotel, hotel_items, hotel_purses, HOTEL_PRICE),
                    ("train", *train, train_items, train_purses, TRAIN_PRICE),
                ] {
                    let booked: i64 = items.iter().map(|a| keys(chain, *a, "booked/")).sum();
                    expect(&format!("{name} bookings"), booked, n);
                    expect(
                        &format!("{name} payee balance"),
                        sum(chain, purses, &format!("balance/{name}")),
                        price * n,
                    );
                    expect(
                        &format!("{name} agent balance"),
                        sum(chain, purses, "balance/agent"),
                        funds - price * n,
                    );
                }
            }
            Layout::SupplyChain {
                supply,
                provenance,
                shippers,
                registries,
                archive,
            } => {
                expect(
                    "supply chain events",
                    sum(*supply, shippers, "event/count"),
                    n,
                );
                let attested: i64 = registries
                    .iter()
                    .map(|a| keys(*provenance, *a, "provenance/"))
                    .sum();
                expect("provenance records", attested, n);
                expect(
                    "archive records",
                    keys(*provenance, *archive, "provenance/"),
                    0,
                );
            }
            Layout::Oracle {
                consumer,
                consumers,
                ..
            } => {
                expect(
                    "settlements",
                    sum(*consumer, consumers, "settlement/count"),
                    n,
                );
            }
        }
        problems
    }
}
