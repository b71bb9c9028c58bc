//! Threshold-signed protocol messages.
//!
//! Every message is signed over [`MessageBody::signing_bytes`]:
//!
//! ```text
//! "xchain/msg/v1" | kind u8 | tx_id [32] | chain u32 | payload (u32 len + bytes)
//! ```
//!
//! Payloads by kind:
//!
//! | kind | tag | payload |
//! |------|-----|---------|
//! | Start | 0 | timeout_block u64, coordination chain u32, coordination contract u64 |
//! | Commit | 1 | empty |
//! | Ignore | 2 | empty |
//! | SubordinateTransactionReady | 3 | subordinate hash [32] |
//! | SubordinateViewResult | 4 | view hash [32], encoded result value |

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::threshold::{GroupPublicKey, GroupSignature, GroupVerifier};
use crate::types::{Address, BlockchainId, TxId, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Start,
    Commit,
    Ignore,
    SubordinateTransactionReady,
    SubordinateViewResult,
}

impl MessageKind {
    fn tag(self) -> u8 {
        match self {
            MessageKind::Start => 0,
            MessageKind::Commit => 1,
            MessageKind::Ignore => 2,
            MessageKind::SubordinateTransactionReady => 3,
            MessageKind::SubordinateViewResult => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageBody {
    pub kind: MessageKind,
    pub tx_id: TxId,
    /// The chain whose validators sign the message.
    pub chain: BlockchainId,
    pub payload: Vec<u8>,
}

impl MessageBody {
    pub fn start(
        tx_id: TxId,
        chain: BlockchainId,
        timeout_block: u64,
        coordination_chain: BlockchainId,
        coordination_contract: Address,
    ) -> Self {
        let mut p = Encoder::new(b"");
        p.u64(timeout_block)
            .u32(coordination_chain.0)
            .u64(coordination_contract.0);
        MessageBody {
            kind: MessageKind::Start,
            tx_id,
            chain,
            payload: p.finish(),
        }
    }

    pub fn commit(tx_id: TxId, chain: BlockchainId) -> Self {
        MessageBody {
            kind: MessageKind::Commit,
            tx_id,
            chain,
            payload: Vec::new(),
        }
    }

    pub fn ignore(tx_id: TxId, chain: BlockchainId) -> Self {
        MessageBody {
            kind: MessageKind::Ignore,
            tx_id,
            chain,
            payload: Vec::new(),
        }
    }

    pub fn ready(tx_id: TxId, chain: BlockchainId, subordinate_hash: [u8; 32]) -> Self {
        MessageBody {
            kind: MessageKind::SubordinateTransactionReady,
            tx_id,
            chain,
            payload: subordinate_hash.to_vec(),
        }
    }

    pub fn view_result(
        tx_id: TxId,
        chain: BlockchainId,
        view_hash: [u8; 32],
        result: &Value,
    ) -> Self {
        let mut p = Encoder::new(b"");
        p.fixed(&view_hash).value(result);
        MessageBody {
            kind: MessageKind::SubordinateViewResult,
            tx_id,
            chain,
            payload: p.finish(),
        }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(b"xchain/msg/v1");
        e.u8(self.kind.tag())
            .fixed(&self.tx_id.0)
            .u32(self.chain.0)
            .bytes(&self.payload);
        e.finish()
    }

    /// Decodes a view-result payload into (view hash, value).
    pub fn view_result_parts(&self) -> Result<([u8; 32], Value), DecodeError> {
        let mut d = Decoder::new(&self.payload);
        let hash = d.fixed::<32>()?;
        let value = d.value()?;
        d.finish()?;
        Ok((hash, value))
    }
}

/// A message together with its chain's group signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub body: MessageBody,
    pub group_signature: GroupSignature,
}

impl ProtocolMessage {
    pub fn verify(&self, key: &GroupPublicKey, verifier: &mut impl GroupVerifier) -> bool {
        verifier.verify(key, &self.body.signing_bytes(), &self.group_signature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threshold::{combine_shares, keygen, sign_share, DirectVerifier, ThresholdParams};
    use alloc::vec;

    fn signed(body: MessageBody) -> (ProtocolMessage, GroupPublicKey) {
        let ks = keygen(ThresholdParams::new(4, 3).unwrap(), 11);
        let msg = body.signing_bytes();
        let shares: Vec<_> = (1..=3)
            .map(|i| sign_share(ks.share(i).unwrap(), &msg))
            .collect();
        let sig = combine_shares(&shares, ks.params).unwrap();
        (
            ProtocolMessage {
                body,
                group_signature: sig,
            },
            ks.group_key,
        )
    }

    #[test]
    fn any_payload_mutation_breaks_signature() {
        let body =
            MessageBody::view_result(TxId([3; 32]), BlockchainId(2), [9; 32], &Value::Int(1800));
        let (msg, key) = signed(body);
        assert!(msg.verify(&key, &mut DirectVerifier));
        for i in 0..msg.body.payload.len() {
            let mut m = msg.clone();
            m.body.payload[i] ^= 1;
            assert!(!m.verify(&key, &mut DirectVerifier), "byte {i}");
        }
        let mut m = msg.clone();
        m.body.kind = MessageKind::SubordinateTransactionReady;
        assert!(!m.verify(&key, &mut DirectVerifier));
        let mut m = msg;
        m.body.chain = BlockchainId(3);
        assert!(!m.verify(&key, &mut DirectVerifier));
    }

    #[test]
    fn view_result_payload_round_trips() {
        let body =
            MessageBody::view_result(TxId([1; 32]), BlockchainId(2), [7; 32], &Value::text("x"));
        assert_eq!(
            body.view_result_parts().unwrap(),
            ([7; 32], Value::text("x"))
        );
        let start = MessageBody::start(
            TxId([1; 32]),
            BlockchainId(1),
            12,
            BlockchainId(0),
            Address(1),
        );
        assert_eq!(
            start.payload,
            vec![0, 0, 0, 0, 0, 0, 0, 12, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1]
        );
    }
}
