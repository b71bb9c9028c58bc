//! Discrete-event engine.
//!
//! Virtual time is an integer count of nanoseconds; the wall clock is never
//! read. Every node is a single server: an action addressed to a busy node
//! waits until the node is free. Events at equal times run in insertion
//! order.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::perf_model::CostParams;
use crate::protocol::{
    Action, CrosschainTransaction, Finished, MultichainNode, Network, NodeId, ProtocolError,
    SubmitOptions, Target,
};
use crate::types::{BlockchainId, TxId};

/// Ordered by (time, sequence number).
#[derive(Debug, Clone, Default)]
pub struct EventQueue<E> {
    events: BTreeMap<(u64, u64), E>,
    seq: u64,
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            events: BTreeMap::new(),
            seq: 0,
        }
    }

    pub fn push(&mut self, time: u64, event: E) {
        self.events.insert((time, self.seq), event);
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<(u64, E)> {
        self.events.pop_first().map(|((t, _), e)| (t, e))
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.events.keys().next().map(|(t, _)| *t)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeStats {
    pub busy_ns: u64,
    pub busy_until: u64,
    pub base_tx_count: u64,
    /// Group-signature verifications.
    pub verify_count: u64,
    /// Individual signature-share verifications.
    pub share_verify_count: u64,
}

/// One unit of charged work.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    /// Seconds of virtual time at which the node started the work.
    pub time: f64,
    #[serde(with = "node_str")]
    pub node: NodeId,
    pub chain: BlockchainId,
    pub event: &'static str,
    pub crosschain_tx_id: TxId,
    /// Group plus share verifications.
    pub verifications_charged: u32,
    pub base_tx_charged: u32,
}

mod node_str {
    use super::NodeId;
    use alloc::format;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(n: &NodeId, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{n}"))
    }
}

/// A finished transaction with its timing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completed {
    pub finished: Finished,
    pub submitted_ns: u64,
    pub finished_ns: u64,
}

#[derive(Debug, Clone)]
struct Event {
    target: Target,
    action: Action,
}

#[derive(Debug, Clone)]
pub struct Engine {
    network: Network,
    queue: EventQueue<Event>,
    now: u64,
    base_ns: u64,
    verify_ns: u64,
    stats: BTreeMap<NodeId, NodeStats>,
    trace: Vec<TraceEvent>,
    submitted: BTreeMap<TxId, u64>,
}

impl Engine {
    pub fn new(network: Network, cost: &CostParams) -> Self {
        let stats = network
            .nodes()
            .into_iter()
            .map(|n| (n, NodeStats::default()))
            .collect();
        Engine {
            network,
            queue: EventQueue::new(),
            now: 0,
            base_ns: cost.base_cost_ns(),
            verify_ns: cost.verify_cost_ns(),
            stats,
            trace: Vec::new(),
            submitted: BTreeMap::new(),
        }
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn stats(&self) -> &BTreeMap<NodeId, NodeStats> {
        &self.stats
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    /// Coordination block number at the current time.
    pub fn current_block(&self) -> u64 {
        self.now / self.network.block_interval_ns()
    }

    pub fn submit(
        &mut self,
        tx: CrosschainTransaction,
        instigator: &MultichainNode,
        options: SubmitOptions,
    ) -> Result<(), ProtocolError> {
        let id = tx.crosschain_tx_id;
        let (target, action) = self.network.submit(tx, instigator, options)?;
        self.submitted.insert(id, self.now);
        self.queue.push(self.now, Event { target, action });
        Ok(())
    }

    /// Processes one event; returns transactions that finished during it,
    /// or `None` once the queue is empty.
    pub fn step(&mut self) -> Option<Vec<Completed>> {
        let (time, ev) = self.queue.pop()?;
        self.now = self.now.max(time);
        if let Target::Node(node) = ev.target {
            let free = self.stats.get(&node).map_or(0, |s| s.busy_until);
            if free > self.now {
                self.queue.push(free, ev);
                return Some(Vec::new());
            }
        }
        let step = self.network.handle(ev.target, ev.action, self.now);
        for c in &step.charges {
            let stats = self.stats.entry(c.node).or_default();
            let start = stats.busy_until.max(self.now);
            let cost = u64::from(c.base_tx) * self.base_ns
                + u64::from(c.verifications + c.share_verifications) * self.verify_ns;
            stats.busy_until = start + cost;
            stats.busy_ns += cost;
            stats.base_tx_count += u64::from(c.base_tx);
            stats.verify_count += u64::from(c.verifications);
            stats.share_verify_count += u64::from(c.share_verifications);
            self.trace.push(TraceEvent {
                time: start as f64 / 1e9,
                node: c.node,
                chain: c.node.chain,
                event: c.event,
                crosschain_tx_id: c.tx_id,
                verifications_charged: c.verifications + c.share_verifications,
                base_tx_charged: c.base_tx,
            });
        }
        let done_at = match ev.target {
            Target::Node(node) => self
                .stats
                .get(&node)
                .map_or(self.now, |s| s.busy_until.max(self.now)),
            Target::Network => self.now,
        };
        for (target, action) in step.next {
            self.queue.push(done_at, Event { target, action });
        }
        for (delay, target, action) in step.delayed {
            self.queue.push(done_at + delay, Event { target, action });
        }
        for (at, target, action) in step.at {
            self.queue.push(at.max(self.now), Event { target, action });
        }
        let completed = step
            .finished
            .into_iter()
            .map(|f| Completed {
                submitted_ns: self.submitted.remove(&f.tx_id).unwrap_or(0),
                finished_ns: done_at,
                finished: f,
            })
            .collect();
        Some(completed)
    }

    /// Runs until the next transaction finishes or nothing is left to do.
    pub fn run_until_finished(&mut self) -> Vec<Completed> {
        while let Some(done) = self.step() {
            if !done.is_empty() {
                return done;
            }
        }
        Vec::new()
    }

    /// Drains the queue, timeout checks for finished transactions included.
    pub fn run_to_idle(&mut self) -> Vec<Completed> {
        let mut all = Vec::new();
        while let Some(done) = self.step() {
            all.extend(done);
        }
        all
    }

    /// Submits one transaction and runs it to completion.
    pub fn run_originating(
        &mut self,
        tx: CrosschainTransaction,
        instigator: &MultichainNode,
    ) -> Result<Completed, ProtocolError> {
        let id = tx.crosschain_tx_id;
        self.submit(tx, instigator, SubmitOptions::default())?;
        loop {
            let done = self.run_until_finished();
            if done.is_empty() {
                return Err(ProtocolError::Malformed("transaction never finished"));
            }
            if let Some(c) = done.into_iter().find(|c| c.finished.tx_id == id) {
                return Ok(c);
            }
        }
    }
}
