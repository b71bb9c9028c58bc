use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use ed25519_dalek::SigningKey;

use super::*;
use crate::threshold::{keygen, verify_group, ThresholdParams};

const A: BlockchainId = BlockchainId(1);
const B: BlockchainId = BlockchainId(2);
const C: BlockchainId = BlockchainId(3);
const D: BlockchainId = BlockchainId(4);

fn signer() -> SigningKey {
    SigningKey::from_bytes(&[7; 32])
}

fn ctx() -> TxContext {
    TxContext {
        coordination_chain: BlockchainId(0),
        coordination_contract: Address(1),
        timeout_block: 10,
        nonce: 1,
    }
}

fn node(name: &str, chains: &[BlockchainId]) -> MultichainNode {
    MultichainNode {
        operator: String::from(name),
        validators: chains.iter().map(|&c| (c, 1)).collect(),
    }
}

fn call(kind: TxKind, chain: BlockchainId, function: &str) -> CallSpec {
    CallSpec::new(kind, chain, Address(1), function, vec![Value::Int(1)]).caller("user")
}

/// A → B, where B reads a view on C and updates D.
fn nested_tree() -> CallSpec {
    call(TxKind::Originating, A, "a").child(
        call(TxKind::Subordinate, B, "b")
            .child(call(TxKind::View, C, "c"))
            .child(call(TxKind::Subordinate, D, "d")),
    )
}

#[test]
fn nested_tree_embeds_signed_children() {
    let everywhere = node("ent1", &[A, B, C, D, BlockchainId(0)]);
    let tx = build_crosschain_tx(&nested_tree(), &signer(), ctx(), &everywhere).unwrap();
    tx.verify_tree().unwrap();
    assert_eq!(tx.kind, TxKind::Originating);
    let b = &tx.subordinates[0];
    assert_eq!((b.chain, b.kind), (B, TxKind::Subordinate));
    assert_eq!(
        (b.subordinates[0].chain, b.subordinates[0].kind),
        (C, TxKind::View)
    );
    assert_eq!(
        (b.subordinates[1].chain, b.subordinates[1].kind),
        (D, TxKind::Subordinate)
    );
    // The parent's signed bytes contain each child's full encoding.
    let parent_bytes = b.signing_bytes();
    for c in &b.subordinates {
        let enc = c.encode();
        assert!(parent_bytes.windows(enc.len()).any(|w| w == enc.as_slice()));
    }
    assert_eq!(tx.paths(), vec![vec![], vec![0], vec![0, 0], vec![0, 1]]);
    assert_eq!(
        tx.chains().into_iter().collect::<Vec<_>>(),
        vec![A, B, C, D]
    );
    let ids: BTreeSet<TxId> = tx
        .paths()
        .iter()
        .map(|p| tx.node_at(p).unwrap().crosschain_tx_id)
        .collect();
    assert_eq!(ids.len(), 1);
}

#[test]
fn coverage_is_enforced() {
    let ent4 = node("ent4", &[B, C]);
    let spec = call(TxKind::Originating, A, "a").child(call(TxKind::Subordinate, B, "b"));
    assert_eq!(
        build_crosschain_tx(&spec, &signer(), ctx(), &ent4),
        Err(ProtocolError::Coverage {
            node: String::from("ent4"),
            chain: A
        })
    );
    let spec = call(TxKind::Originating, B, "b").child(call(TxKind::Subordinate, C, "c"));
    assert!(build_crosschain_tx(&spec, &signer(), ctx(), &ent4).is_ok());
}

#[test]
fn single_part_tree() {
    let tx = build_crosschain_tx(
        &call(TxKind::Originating, A, "a"),
        &signer(),
        ctx(),
        &node("n", &[A]),
    )
    .unwrap();
    tx.verify_tree().unwrap();
    assert!(tx.subordinates.is_empty());
    assert!(tx.to_part().subordinates.is_empty());
}

#[test]
fn malformed_trees_are_rejected() {
    let n = node("n", &[A, B, C]);
    let view_with_tx = call(TxKind::Originating, A, "a")
        .child(call(TxKind::View, B, "v").child(call(TxKind::Subordinate, C, "t")));
    assert!(matches!(
        build_crosschain_tx(&view_with_tx, &signer(), ctx(), &n),
        Err(ProtocolError::Malformed(_))
    ));
    let sub_root = call(TxKind::Subordinate, A, "a");
    assert!(matches!(
        build_crosschain_tx(&sub_root, &signer(), ctx(), &n),
        Err(ProtocolError::Malformed(_))
    ));
    let nested_origin = call(TxKind::Originating, A, "a").child(call(TxKind::Originating, B, "b"));
    assert!(matches!(
        build_crosschain_tx(&nested_origin, &signer(), ctx(), &n),
        Err(ProtocolError::Malformed(_))
    ));
}

#[test]
fn tampering_breaks_sender_signatures() {
    let everywhere = node("ent1", &[A, B, C, D]);
    let tx = build_crosschain_tx(&nested_tree(), &signer(), ctx(), &everywhere).unwrap();

    let mut t = tx.clone();
    t.subordinates[0].subordinates[1].args = vec![Value::Int(2)];
    assert_eq!(t.verify_tree(), Err(ProtocolError::BadSenderSignature(D)));

    let mut t = tx.clone();
    t.subordinates[0].timeout_block += 1;
    assert!(matches!(t.verify_tree(), Err(ProtocolError::Malformed(_))));

    // Swapping in a validly signed child from another transaction breaks the parent.
    let other = build_crosschain_tx(
        &nested_tree(),
        &signer(),
        TxContext { nonce: 2, ..ctx() },
        &everywhere,
    )
    .unwrap();
    let mut t = tx.clone();
    t.subordinates[0] = other.subordinates[0].clone();
    assert!(t.verify_tree().is_err());
}

#[test]
fn tx_id_depends_on_spec_and_nonce() {
    let s = nested_tree();
    assert_eq!(s.tx_id(1), s.tx_id(1));
    assert_ne!(s.tx_id(1), s.tx_id(2));
    let mut s2 = s.clone();
    s2.children[0].args = vec![Value::Int(5)];
    assert_ne!(s.tx_id(1), s2.tx_id(1));
}

#[test]
fn part_records_follow_children() {
    let everywhere = node("ent1", &[A, B, C, D]);
    let tx = build_crosschain_tx(&nested_tree(), &signer(), ctx(), &everywhere).unwrap();
    let part = tx.subordinates[0].to_part();
    let kinds: Vec<_> = part.subordinates.iter().map(|r| r.kind).collect();
    assert_eq!(
        kinds,
        vec![
            crate::ledger::CallKind::View,
            crate::ledger::CallKind::Transaction
        ]
    );
    assert_eq!(part.subordinates[1].chain, D);
    assert_eq!(part.subordinates[1].expected_args, vec![Value::Int(1)]);
}

fn keys4() -> KeySet {
    keygen(ThresholdParams::new(4, 3).unwrap(), 21)
}

#[test]
fn honest_round_uses_one_group_verification() {
    let ks = keys4();
    let r = threshold_sign_round(
        &ks,
        &[ValidatorBehavior::Honest; 4],
        1,
        &BTreeSet::new(),
        b"start",
    );
    assert_eq!((r.group_verifications, r.share_verifications), (1, 0));
    assert!(verify_group(&ks.group_key, b"start", &r.signature.unwrap()));
}

#[test]
fn bad_share_triggers_share_checks_until_known() {
    let ks = keys4();
    let mut beh = [ValidatorBehavior::Honest; 4];
    beh[1] = ValidatorBehavior::BadShare;
    let r = threshold_sign_round(&ks, &beh, 1, &BTreeSet::new(), b"m");
    assert_eq!(r.bad_indices, vec![2]);
    assert_eq!(r.share_verifications, 4);
    assert!(verify_group(
        &ks.group_key,
        b"m",
        r.signature.as_ref().unwrap()
    ));

    // Once known, the bad validator's share is used last and never needed.
    let known: BTreeSet<u32> = [2].into_iter().collect();
    let r2 = threshold_sign_round(&ks, &beh, 1, &known, b"m");
    assert_eq!((r2.group_verifications, r2.share_verifications), (1, 0));
    assert_eq!(r2.signature, r.signature);
}

#[test]
fn silent_validator_is_tolerated() {
    let ks = keys4();
    let mut beh = [ValidatorBehavior::Honest; 4];
    beh[0] = ValidatorBehavior::Silent;
    let r = threshold_sign_round(&ks, &beh, 2, &BTreeSet::new(), b"m");
    assert_eq!((r.group_verifications, r.share_verifications), (1, 0));
    assert!(r.signature.is_some());
}

#[test]
fn threshold_unreachable() {
    let ks = keys4();
    let beh = [
        ValidatorBehavior::Honest,
        ValidatorBehavior::BadShare,
        ValidatorBehavior::Silent,
        ValidatorBehavior::Honest,
    ];
    let r = threshold_sign_round(&ks, &beh, 1, &BTreeSet::new(), b"m");
    assert!(r.signature.is_none());
    assert!(matches!(
        r.error,
        Some(ThresholdError::InsufficientValidShares { .. })
    ));
    assert_eq!(r.bad_indices, vec![2]);
    assert_eq!(r.share_verifications, 3);
}

#[test]
fn node_id_display() {
    assert_eq!(alloc::format!("{}", NodeId::new(B, 3)), "c2.v3");
    let mut m = BTreeMap::new();
    m.insert(B, 1);
    let n = MultichainNode {
        operator: String::from("x"),
        validators: m,
    };
    assert_eq!(n.validator(B), Some(NodeId::new(B, 1)));
    assert_eq!(n.validator(A), None);
}
