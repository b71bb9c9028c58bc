//! Acceptance suite. Runs every criterion in sequence (wall-clock budgets
//! would be meaningless with tests competing for the CPU), prints one line
//! per criterion and exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use xchain_core::perf_model::{
    amortized_rate, compare_with_simulation, verify_count, CostParams, Expectation, Role,
    ScenarioKind,
};
use xchain_core::protocol::NodeId;
use xchain_core::sim::{
    run, ByzantineFault, ChainConfig, FaultMode, Injection, InjectionKind, Rotation, SimConfig,
};
use xchain_core::threshold::{
    combine_shares, keygen, robust_combine, sign_share, verify_group, verify_signature_share,
    GroupSignature, ThresholdError, ThresholdParams,
};
use xchain_core::types::BlockchainId;
use xchain_sim::{emit_report, trace_jsonl, ReportFormat};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(deadline: Duration, started: Instant, what: &str) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < deadline, || {
        format!("{what} took {took:?}, budget {deadline:?}")
    })
}

/// Closed-form rate restated independently: base work plus verifications.
fn oracle_rate(base_txs: f64, verifies: f64) -> f64 {
    1.0 / (base_txs / 375.0 + verifies * 0.005)
}

fn c1_model_table() -> Check {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_xchain-sim"))
        .arg("model")
        .output()
        .map_err(|e| e.to_string())?;
    within(Duration::from_secs(1), started, "model")?;
    ensure(out.status.success(), || {
        format!("model exited with {}", out.status)
    })?;
    let text = String::from_utf8_lossy(&out.stdout);
    let expected = [
        ("hotel_train", 39.5, 65.2),
        ("supply_chain_provenance", 49.2, 96.8),
        ("oracle", 49.2, 96.8),
    ];
    for (name, coord, other) in expected {
        let line = text
            .lines()
            .find(|l| l.starts_with(&format!("{name},")))
            .ok_or_else(|| format!("no CSV row for {name}"))?;
        let cells: Vec<&str> = line.split(',').collect();
        ensure(
            cells[1] == format!("{coord:.1}") && cells[2] == format!("{other:.1}"),
            || {
                format!(
                    "{name}: got {} / {}, want {coord} / {other}",
                    cells[1], cells[2]
                )
            },
        )?;
    }
    let json_start = text.find('{').ok_or("no JSON table")?;
    let json: serde_json::Value =
        serde_json::from_str(&text[json_start..]).map_err(|e| e.to_string())?;
    for (row, (name, coord, other)) in json["rows"].as_array().ok_or("rows")?.iter().zip(expected) {
        ensure(
            row["scenario"] == name
                && row["coordinating_node"] == coord
                && row["other_node"] == other,
            || format!("JSON row {row} does not match {name}"),
        )?;
    }
    // The published cells follow from the rate formula with these counts.
    ensure(
        (oracle_rate(2.0, 4.0) * 10.0).round() / 10.0 == 39.5,
        || "oracle disagrees with table".into(),
    )?;
    Ok(format!("CSV and JSON match in {:?}", started.elapsed()))
}

fn c2_closed_form_vs_trace() -> Check {
    let started = Instant::now();
    let mut config = SimConfig::for_scenario(ScenarioKind::HotelTrain);
    config.tx_count = 1000;
    let out = run(&config).map_err(|e| e.to_string())?;
    within(Duration::from_secs(30), started, "1000-tx simulation")?;
    ensure(out.report.aggregate.committed == 1000, || {
        format!("{:?}", out.report.aggregate)
    })?;
    let node = NodeId::new(BlockchainId(1), 1);
    let expectation = Expectation::Role(ScenarioKind::HotelTrain, Role::OriginatingCoordinator);
    let cmp = compare_with_simulation(&out.trace, node, expectation, &config.cost)
        .map_err(|e| e.to_string())?;
    ensure(cmp.transactions == 1000, || {
        format!("{} transactions in trace", cmp.transactions)
    })?;
    ensure(cmp.relative_error <= 0.02, || format!("{cmp:?}"))?;
    ensure(
        (cmp.analytical - oracle_rate(2.0, 4.0)).abs() < 1e-9,
        || "closed form disagrees with oracle".into(),
    )?;
    Ok(format!(
        "analytical {:.3} measured {:.3} error {:.4}% in {:?}",
        cmp.analytical,
        cmp.measured,
        cmp.relative_error * 100.0,
        started.elapsed()
    ))
}

fn c3_counters() -> Check {
    let txs = 30;
    let mut roles_seen = BTreeSet::new();
    for kind in ScenarioKind::ALL {
        let mut config = SimConfig::for_scenario(kind);
        config.tx_count = txs;
        let out = run(&config).map_err(|e| e.to_string())?;
        for n in &out.report.nodes {
            let Some(role) = n.role else { continue };
            roles_seen.insert(role);
            let want = txs * u64::from(verify_count(kind, role));
            ensure(n.verify_count == want, || {
                format!("{kind} {} ({role:?}): {} != {want}", n.node, n.verify_count)
            })?;
        }
    }
    ensure(roles_seen.len() == Role::ALL.len(), || {
        format!("roles covered: {roles_seen:?}")
    })?;
    Ok(format!(
        "{} roles across {} scenarios",
        roles_seen.len(),
        ScenarioKind::ALL.len()
    ))
}

fn c4_round_robin() -> Check {
    let cost = CostParams::default();
    let mut rates = Vec::new();
    for n in [1u32, 2, 4, 8] {
        let mut config = SimConfig::for_scenario(ScenarioKind::HotelTrain);
        config.instigators = (1..=n).map(|i| format!("node{i}")).collect();
        config.rotation = Rotation::RoundRobin;
        config.chains = (0..=3)
            .map(|i| ChainConfig {
                id: BlockchainId(i),
                n_validators: 8,
                threshold_m: 3,
            })
            .collect();
        config.tx_count = 96;
        let out = run(&config).map_err(|e| e.to_string())?;
        ensure(out.report.aggregate.committed == 96, || {
            format!("n={n}: {:?}", out.report.aggregate)
        })?;
        let model =
            amortized_rate(ScenarioKind::HotelTrain, n, &cost).map_err(|e| e.to_string())?;
        let oracle = oracle_rate(2.0, 2.0 + 2.0 / f64::from(n));
        ensure((model - oracle).abs() < 1e-9, || {
            format!("n={n}: model {model} oracle {oracle}")
        })?;
        let mut per_node = Vec::new();
        for i in 1..=n {
            let node = NodeId::new(BlockchainId(1), i);
            let cmp = compare_with_simulation(
                &out.trace,
                node,
                Expectation::Amortized(ScenarioKind::HotelTrain, n),
                &cost,
            )
            .map_err(|e| e.to_string())?;
            ensure(cmp.relative_error <= 0.02, || {
                format!("n={n} {node}: {cmp:?}")
            })?;
            per_node.push(cmp.measured);
        }
        let mean = per_node.iter().sum::<f64>() / per_node.len() as f64;
        rates.push((n, mean));
    }
    ensure((rates[0].1 - 39.5).abs() / 39.5 <= 0.02, || {
        format!("n=1 rate {}", rates[0].1)
    })?;
    ensure(rates.windows(2).all(|w| w[0].1 < w[1].1), || {
        format!("not increasing: {rates:?}")
    })?;
    ensure(rates.iter().all(|&(_, r)| r < 65.2), || {
        format!("exceeds 65.2: {rates:?}")
    })?;
    let shown: Vec<String> = rates.iter().map(|(n, r)| format!("n={n}:{r:.2}")).collect();
    Ok(shown.join(" "))
}

struct Cell {
    name: String,
    config: SimConfig,
    ignored: u64,
}

fn fault_cells(kind: ScenarioKind) -> Vec<Cell> {
    let mut base = SimConfig::for_scenario(kind);
    base.tx_count = 12;
    let app_chains: Vec<BlockchainId> = base.app_chains().iter().map(|c| c.id).collect();
    let injected = |k: InjectionKind, every: u64| {
        let mut c = base.clone();
        c.injection = Some(Injection { kind: k, every });
        c
    };
    let cell = |name: String, config: SimConfig, ignored: u64| Cell {
        name,
        config,
        ignored,
    };
    // Subordinate failures alternate between the legs of a two-subordinate
    // scenario, so every-2 covers each subordinate failing on its own.
    let mut cells = vec![
        cell("happy".into(), base.clone(), 0),
        cell(
            "subordinate failure".into(),
            injected(InjectionKind::SubordinateFailure, 2),
            6,
        ),
        cell(
            "parameter tamper".into(),
            injected(InjectionKind::ParameterTamper, 3),
            4,
        ),
        cell(
            "forced timeout".into(),
            injected(InjectionKind::ForceTimeout, 3),
            4,
        ),
    ];
    for &chain in &app_chains {
        for v in 1..=4 {
            for mode in [FaultMode::BadShare, FaultMode::Silent] {
                for timeout in [false, true] {
                    let mut c = if timeout {
                        injected(InjectionKind::ForceTimeout, 3)
                    } else {
                        base.clone()
                    };
                    c.byzantine = vec![ByzantineFault {
                        chain,
                        validator_index: v,
                        mode,
                    }];
                    let name = format!(
                        "{mode:?} c{chain}.v{v}{}",
                        if timeout { " + timeout" } else { "" }
                    );
                    cells.push(cell(name, c, if timeout { 4 } else { 0 }));
                }
            }
        }
    }
    // Two faulty validators leave the chain below threshold.
    let mut c = base.clone();
    c.tx_count = 3;
    c.byzantine = (2..=3)
        .map(|v| ByzantineFault {
            chain: app_chains[0],
            validator_index: v,
            mode: FaultMode::BadShare,
        })
        .collect();
    cells.push(cell("two bad shares".into(), c, 3));
    cells
}

fn c5_fault_matrix() -> Check {
    let started = Instant::now();
    let mut cells = 0;
    for kind in ScenarioKind::ALL {
        for Cell {
            name,
            config,
            ignored,
        } in fault_cells(kind)
        {
            ensure(config.tx_count <= 200, || {
                format!("{name}: too many transactions")
            })?;
            ensure(
                config.resolved_chains().iter().all(|c| c.n_validators == 4),
                || format!("{name}: shape"),
            )?;
            let out = run(&config).map_err(|e| format!("{kind} {name}: {e}"))?;
            let agg = &out.report.aggregate;
            ensure(agg.atomicity_violations == 0, || {
                format!("{kind} {name}: {:?}", agg.violations)
            })?;
            ensure(agg.committed + agg.ignored == config.tx_count, || {
                format!("{kind} {name}: unfinished")
            })?;
            ensure(agg.ignored == ignored, || {
                format!("{kind} {name}: {} ignored, expected {ignored}", agg.ignored)
            })?;
            cells += 1;
        }
    }
    within(Duration::from_secs(120), started, "fault matrix")?;
    Ok(format!(
        "{cells} cells, 0 violations, {:?}",
        started.elapsed()
    ))
}

fn subsets(n: u32, size: u32) -> impl Iterator<Item = Vec<u32>> {
    (0u32..1 << n)
        .filter(move |mask| mask.count_ones() == size)
        .map(move |mask| (1..=n).filter(|i| mask & (1 << (i - 1)) != 0).collect())
}

fn c6_threshold_exhaustive() -> Check {
    let started = Instant::now();
    let msg = b"acceptance message";
    let mut combos = 0;
    let mut corruptions = 0;
    for n in 1..=6u32 {
        for m in 1..=n {
            let ks = keygen(
                ThresholdParams::new(n, m).map_err(|e| e.to_string())?,
                u64::from(100 * n + m),
            );
            let honest: Vec<_> = (1..=n)
                .map(|i| sign_share(ks.share(i).expect("index"), msg))
                .collect();
            let mut unique: Option<GroupSignature> = None;
            for set in subsets(n, m) {
                let picked: Vec<_> = set.iter().map(|&i| honest[i as usize - 1]).collect();
                let sig = combine_shares(&picked, ks.params).map_err(|e| e.to_string())?;
                ensure(verify_group(&ks.group_key, msg, &sig), || {
                    format!("n={n} m={m} {set:?} does not verify")
                })?;
                let first = *unique.get_or_insert(sig);
                ensure(first == sig, || format!("n={n} m={m} {set:?} differs"))?;
                combos += 1;
            }
            let public = ks.public_shares();
            for bad_count in 1..=n {
                for bad in subsets(n, bad_count) {
                    let shares: Vec<_> = (1..=n)
                        .map(|i| {
                            let share = ks.share(i).expect("index");
                            if bad.contains(&i) {
                                // A perturbation polynomial in the index with zero constant
                                // term would cancel out under interpolation; keep it unstructured.
                                let delta = 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(u64::from(i))
                                    ^ 0x5bd1_e995;
                                sign_share(&share.with_perturbed_secret(delta), msg)
                            } else {
                                honest[i as usize - 1]
                            }
                        })
                        .collect();
                    for (s, p) in shares.iter().zip(&public) {
                        let flagged = !verify_signature_share(s, p, msg);
                        ensure(flagged == bad.contains(&s.index()), || {
                            format!("n={n} m={m} bad={bad:?}: share {} misjudged", s.index())
                        })?;
                    }
                    let result = robust_combine(&shares, ks.params, &ks.group_key, &public, msg);
                    if bad.iter().all(|&i| i > m) {
                        // The first m shares are honest, so nothing else is examined.
                        let r = result.map_err(|e| format!("n={n} m={m} bad={bad:?}: {e}"))?;
                        ensure(
                            r.bad_indices.is_empty() && r.share_verifications == 0,
                            || format!("n={n} m={m} bad={bad:?}: fast path did share checks"),
                        )?;
                        ensure(Some(r.signature) == unique, || {
                            format!("n={n} m={m} bad={bad:?}: wrong signature")
                        })?;
                    } else if n - bad_count >= m {
                        let r = result.map_err(|e| format!("n={n} m={m} bad={bad:?}: {e}"))?;
                        ensure(r.bad_indices == bad, || {
                            format!("n={n} m={m}: found {:?}, corrupted {bad:?}", r.bad_indices)
                        })?;
                        ensure(Some(r.signature) == unique, || {
                            format!("n={n} m={m} bad={bad:?}: wrong signature")
                        })?;
                    } else {
                        match result {
                            Err(ThresholdError::InsufficientValidShares { bad: found, .. }) => {
                                ensure(found == bad, || {
                                    format!("n={n} m={m}: found {found:?}, corrupted {bad:?}")
                                })?
                            }
                            other => return Err(format!("n={n} m={m} bad={bad:?}: {other:?}")),
                        }
                    }
                    corruptions += 1;
                }
            }
        }
    }
    within(Duration::from_secs(60), started, "threshold enumeration")?;
    Ok(format!(
        "{combos} subsets, {corruptions} corruption patterns, {:?}",
        started.elapsed()
    ))
}

fn c7_spike_locality() -> Check {
    let mut config = SimConfig::for_scenario(ScenarioKind::HotelTrain);
    config.tx_count = 20;
    let apps: Vec<BlockchainId> = config.app_chains().iter().map(|c| c.id).collect();
    config.byzantine = apps
        .iter()
        .map(|&chain| ByzantineFault {
            chain,
            validator_index: 2,
            mode: FaultMode::BadShare,
        })
        .collect();
    let out = run(&config).map_err(|e| e.to_string())?;
    ensure(out.report.aggregate.committed == 20, || {
        format!("{:?}", out.report.aggregate)
    })?;
    let first_tx = out.report.transactions[0].id;
    let mut per_chain: BTreeMap<BlockchainId, Vec<_>> = BTreeMap::new();
    for e in out.trace.iter().filter(|e| e.event == "share_verification") {
        per_chain
            .entry(e.chain)
            .or_default()
            .push(e.crosschain_tx_id);
    }
    for chain in &apps {
        let rounds = per_chain.get(chain).map(Vec::as_slice).unwrap_or_default();
        ensure(rounds.len() == 1, || {
            format!("chain {chain}: {} rounds with share checks", rounds.len())
        })?;
        ensure(rounds[0] == first_tx, || {
            format!("chain {chain}: spike outside the first round")
        })?;
    }
    ensure(per_chain.keys().all(|c| apps.contains(c)), || {
        format!("unexpected chains {per_chain:?}")
    })?;
    Ok(format!("one spike on each of {} chains", apps.len()))
}

fn c8_determinism() -> Check {
    let mut config = SimConfig::for_scenario(ScenarioKind::HotelTrain);
    config.tx_count = 15;
    config.injection = Some(Injection {
        kind: InjectionKind::ForceTimeout,
        every: 4,
    });
    config.byzantine = vec![ByzantineFault {
        chain: BlockchainId(2),
        validator_index: 3,
        mode: FaultMode::BadShare,
    }];
    config.seed = 42;
    let render = |c: &SimConfig| -> Result<Vec<Vec<u8>>, String> {
        let out = run(c).map_err(|e| e.to_string())?;
        Ok(vec![
            emit_report(&out.report, ReportFormat::Json).map_err(|e| e.to_string())?,
            emit_report(&out.report, ReportFormat::Csv).map_err(|e| e.to_string())?,
            trace_jsonl(&out).map_err(|e| e.to_string())?,
        ])
    };
    let a = render(&config)?;
    let b = render(&config)?;
    ensure(a == b, || "library reports differ".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        serde_json::to_vec(&config).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for k in 0..2 {
        let path = dir.path().join(format!("report{k}.json"));
        let out = Command::new(env!("CARGO_BIN_EXE_xchain-sim"))
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&path)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || {
            format!("run exited with {}", out.status)
        })?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure(files[0] == files[1], || "CLI reports differ".into())?;
    ensure(files[0] == a[0], || "CLI and library reports differ".into())?;
    Ok(format!("{} report bytes identical", files[0].len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("model table reproduction", c1_model_table),
        ("closed form vs trace-summed costs", c2_closed_form_vs_trace),
        ("verification counters per role", c3_counters),
        ("round-robin amortization", c4_round_robin),
        ("fault matrix atomicity", c5_fault_matrix),
        ("threshold enumeration", c6_threshold_exhaustive),
        ("byzantine spike locality", c7_spike_locality),
        ("determinism", c8_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
