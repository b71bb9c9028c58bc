use xchain_core::coordination::EntryState;
use xchain_core::perf_model::{verify_count, ScenarioKind};
use xchain_core::protocol::Outcome;
use xchain_core::sim::*;
use xchain_core::types::BlockchainId;

fn config(kind: ScenarioKind, txs: u64) -> SimConfig {
    let mut c = SimConfig::for_scenario(kind);
    c.tx_count = txs;
    c
}

#[test]
fn happy_path_commits_everything_and_counts_match_roles() {
    for kind in ScenarioKind::ALL {
        let out = run(&config(kind, 6)).unwrap();
        let agg = &out.report.aggregate;
        assert_eq!(
            (agg.committed, agg.ignored, agg.atomicity_violations),
            (6, 0, 0),
            "{kind}"
        );
        let mut seen = 0;
        for n in &out.report.nodes {
            if let Some(role) = n.role {
                assert_eq!(
                    n.verify_count,
                    6 * u64::from(verify_count(kind, role)),
                    "{kind} {}",
                    n.node
                );
                seen += 1;
            }
            assert_eq!(n.share_verify_count, 0);
        }
        assert!(seen >= 4, "{kind}");
    }
}

#[test]
fn reports_are_deterministic() {
    let mut c = config(ScenarioKind::Oracle, 5);
    c.injection = Some(Injection {
        kind: InjectionKind::SubordinateFailure,
        every: 2,
    });
    let a = run(&c).unwrap();
    let b = run(&c).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.final_state, b.final_state);
    c.seed = 2;
    let other = run(&c).unwrap();
    assert_ne!(a.report.transactions[0].id, other.report.transactions[0].id);
}

#[test]
fn injected_failures_are_ignored_atomically() {
    for kind in ScenarioKind::ALL {
        for inj in [
            InjectionKind::SubordinateFailure,
            InjectionKind::ParameterTamper,
            InjectionKind::ForceTimeout,
        ] {
            let mut c = config(kind, 4);
            c.injection = Some(Injection {
                kind: inj,
                every: 2,
            });
            let out = run(&c).unwrap();
            let agg = &out.report.aggregate;
            assert_eq!(
                agg.atomicity_violations, 0,
                "{kind} {inj:?}: {:?}",
                agg.violations
            );
            assert_eq!((agg.committed, agg.ignored), (2, 2), "{kind} {inj:?}");
            for t in &out.report.transactions {
                let expect = if t.index % 2 == 1 {
                    Outcome::Ignored
                } else {
                    Outcome::Committed
                };
                assert_eq!(t.outcome, expect, "{kind} {inj:?} tx {}", t.index);
            }
        }
    }
}

#[test]
fn forced_timeout_is_decided_by_the_block_number() {
    let mut c = config(ScenarioKind::HotelTrain, 2);
    c.injection = Some(Injection {
        kind: InjectionKind::ForceTimeout,
        every: 2,
    });
    let out = run(&c).unwrap();
    let t = &out.report.transactions[1];
    assert_eq!(t.outcome, Outcome::Ignored);
    assert!(
        t.latency > (c.timeout_blocks * c.block_interval_ms) as f64 / 1000.0,
        "{}",
        t.latency
    );
    assert!(
        t.reason
            .as_deref()
            .unwrap_or_default()
            .contains("timed out"),
        "{:?}",
        t.reason
    );
}

#[test]
fn byzantine_validators_do_not_break_atomicity() {
    for mode in [FaultMode::BadShare, FaultMode::Silent] {
        let base = config(ScenarioKind::HotelTrain, 5);
        let faults = [ByzantineFault {
            chain: BlockchainId(1),
            validator_index: 2,
            mode,
        }];
        let c = inject_byzantine(&base, &faults).unwrap();
        let out = run(&c).unwrap();
        let agg = &out.report.aggregate;
        assert_eq!(
            (agg.committed, agg.atomicity_violations),
            (5, 0),
            "{mode:?}"
        );
    }
}

#[test]
fn bad_share_is_checked_once_then_avoided() {
    let base = config(ScenarioKind::SupplyChainProvenance, 4);
    let faults = [ByzantineFault {
        chain: BlockchainId(2),
        validator_index: 3,
        mode: FaultMode::BadShare,
    }];
    let out = run(&inject_byzantine(&base, &faults).unwrap()).unwrap();
    let rounds: Vec<_> = out
        .trace
        .iter()
        .filter(|e| e.event == "share_verification")
        .collect();
    assert_eq!(rounds.len(), 1);
    assert_eq!(rounds[0].chain, BlockchainId(2));
}

#[test]
fn inject_byzantine_refuses_unreachable_thresholds() {
    let base = config(ScenarioKind::Oracle, 1);
    let two = [1, 2].map(|i| ByzantineFault {
        chain: BlockchainId(1),
        validator_index: i,
        mode: FaultMode::Silent,
    });
    assert!(matches!(
        inject_byzantine(&base, &two),
        Err(SimError::ThresholdUnreachable {
            honest: 2,
            m: 3,
            ..
        })
    ));
    let coord = [ByzantineFault {
        chain: BlockchainId(0),
        validator_index: 1,
        mode: FaultMode::Silent,
    }];
    assert!(matches!(
        inject_byzantine(&base, &coord),
        Err(SimError::InvalidConfig(_))
    ));
    let missing = [ByzantineFault {
        chain: BlockchainId(1),
        validator_index: 9,
        mode: FaultMode::Silent,
    }];
    assert!(matches!(
        inject_byzantine(&base, &missing),
        Err(SimError::InvalidConfig(_))
    ));
}

#[test]
fn config_validation() {
    let ok = SimConfig::default();
    assert!(ok.validate().is_ok());
    type Mutation = Box<dyn Fn(&mut SimConfig)>;
    let cases: Vec<Mutation> = vec![
        Box::new(|c| c.instigators.clear()),
        Box::new(|c| c.block_interval_ms = 0),
        Box::new(|c| c.timeout_blocks = 0),
        Box::new(|c| c.coordination_chain = BlockchainId(9)),
        Box::new(|c| c.cost.base_tx_rate = 0.0),
        Box::new(|c| {
            c.injection = Some(Injection {
                kind: InjectionKind::ParameterTamper,
                every: 0,
            })
        }),
        Box::new(|c| {
            c.chains = c.resolved_chains();
            c.chains.pop();
        }),
        Box::new(|c| {
            c.chains = c.resolved_chains();
            c.chains[1].threshold_m = 5;
        }),
        Box::new(|c| {
            c.chains = c.resolved_chains();
            c.chains[2].id = BlockchainId(1);
        }),
        Box::new(|c| c.instigators = (0..5).map(|i| format!("n{i}")).collect()),
    ];
    for (i, mutate) in cases.iter().enumerate() {
        let mut c = ok.clone();
        mutate(&mut c);
        if i == cases.len() - 1 {
            // Default chains grow with the instigator count.
            assert!(c.validate().is_ok());
            c.chains = ok.resolved_chains();
        }
        assert!(
            matches!(c.validate(), Err(SimError::InvalidConfig(_))),
            "case {i}"
        );
    }
}

#[test]
fn round_robin_spreads_instigation() {
    let mut c = config(ScenarioKind::HotelTrain, 4);
    c.instigators = vec!["a".into(), "b".into()];
    c.rotation = Rotation::RoundRobin;
    let out = run(&c).unwrap();
    assert_eq!(out.report.aggregate.committed, 4);
    let names: Vec<_> = out
        .report
        .transactions
        .iter()
        .map(|t| t.instigator.as_str())
        .collect();
    assert_eq!(names, ["a", "b", "a", "b"]);
}

#[test]
fn coordination_entries_record_outcomes() {
    let mut c = config(ScenarioKind::HotelTrain, 2);
    c.injection = Some(Injection {
        kind: InjectionKind::SubordinateFailure,
        every: 2,
    });
    let out = run(&c).unwrap();
    assert_eq!(out.coordination_entries.len(), 2);
    for t in &out.report.transactions {
        let e = out
            .coordination_entries
            .iter()
            .find(|e| e.crosschain_tx_id == t.id)
            .unwrap();
        assert_eq!(
            e.state == EntryState::Committed,
            t.outcome == Outcome::Committed
        );
    }
}

#[test]
fn measured_rates_match_the_model_for_originating_roles() {
    use xchain_core::perf_model::{compare_with_simulation, Expectation, Role};
    use xchain_core::protocol::NodeId;
    for kind in ScenarioKind::ALL {
        let c = config(kind, 20);
        let out = run(&c).unwrap();
        for (index, role) in [
            (1, Role::OriginatingCoordinator),
            (2, Role::OriginatingOther),
        ] {
            let node = NodeId::new(BlockchainId(1), index);
            let cmp =
                compare_with_simulation(&out.trace, node, Expectation::Role(kind, role), &c.cost)
                    .unwrap();
            assert!(cmp.relative_error <= 0.02, "{kind} {role:?}: {cmp:?}");
            let reported = out
                .report
                .nodes
                .iter()
                .find(|n| n.node == node.to_string())
                .unwrap();
            let tps = reported.measured_tps.unwrap();
            assert!(
                (tps - cmp.analytical).abs() / cmp.analytical <= 0.02,
                "{kind} {role:?}: {tps}"
            );
        }
    }
}
