//! Canonical byte encoding used for everything that gets signed or hashed.
//!
//! Layout rules:
//!
//! | item            | encoding                                         |
//! |-----------------|--------------------------------------------------|
//! | domain tag      | raw ASCII bytes, no length prefix                |
//! | `u8`            | 1 byte                                           |
//! | `u32` / `u64`   | big-endian, 4 / 8 bytes                          |
//! | `i64`           | big-endian two's complement, 8 bytes             |
//! | byte string     | `u32` length, then the bytes                     |
//! | text            | byte string of the UTF-8 encoding                |
//! | list            | `u32` element count, then each element           |
//! | fixed array     | raw bytes (e.g. a 32-byte id)                    |
//!
//! [`Value`]s are a one-byte tag followed by the payload:
//! `0x00` Int (`i64`), `0x01` Text, `0x02` Addr (`u64`),
//! `0x03` Chain (`u32`), `0x04` Bytes.

use alloc::string::String;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::types::{Address, BlockchainId, Value};

const TAG_INT: u8 = 0;
const TAG_TEXT: u8 = 1;
const TAG_ADDR: u8 = 2;
const TAG_CHAIN: u8 = 3;
const TAG_BYTES: u8 = 4;

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(domain: &[u8]) -> Self {
        let mut buf = Vec::with_capacity(128);
        buf.extend_from_slice(domain);
        Encoder { buf }
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn fixed(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(len_u32(v.len()));
        self.buf.extend_from_slice(v);
        self
    }

    pub fn text(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn value(&mut self, v: &Value) -> &mut Self {
        match v {
            Value::Int(x) => self.u8(TAG_INT).i64(*x),
            Value::Text(x) => self.u8(TAG_TEXT).text(x),
            Value::Addr(x) => self.u8(TAG_ADDR).u64(x.0),
            Value::Chain(x) => self.u8(TAG_CHAIN).u32(x.0),
            Value::Bytes(x) => self.u8(TAG_BYTES).bytes(x),
        }
    }

    pub fn values(&mut self, vs: &[Value]) -> &mut Self {
        self.u32(len_u32(vs.len()));
        for v in vs {
            self.value(v);
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

fn len_u32(n: usize) -> u32 {
    u32::try_from(n).expect("encoded item longer than u32::MAX")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("unknown value tag {0:#04x}")]
    BadTag(u8),
    #[error("text is not valid utf-8")]
    BadUtf8,
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

/// Reads back the pieces written by [`Encoder`].
#[derive(Debug)]
pub struct Decoder<'a> {
    rest: &'a [u8],
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Decoder { rest: input }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.rest.len() < n {
            return Err(DecodeError::Truncated);
        }
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_be_bytes(a))
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn value(&mut self) -> Result<Value, DecodeError> {
        match self.u8()? {
            TAG_INT => Ok(Value::Int(self.u64()? as i64)),
            TAG_TEXT => {
                let raw = self.bytes()?;
                let s = core::str::from_utf8(raw).map_err(|_| DecodeError::BadUtf8)?;
                Ok(Value::Text(String::from(s)))
            }
            TAG_ADDR => Ok(Value::Addr(Address(self.u64()?))),
            TAG_CHAIN => Ok(Value::Chain(BlockchainId(self.u32()?))),
            TAG_BYTES => Ok(Value::Bytes(self.bytes()?.to_vec())),
            t => Err(DecodeError::BadTag(t)),
        }
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.rest.len() {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Hash of several byte strings, each length-prefixed so that part boundaries
/// cannot be shifted.
pub fn sha256_parts(domain: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(domain);
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    h.finalize().into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn value_layout_is_fixed() {
        let mut e = Encoder::new(b"T");
        e.value(&Value::Int(-2)).value(&Value::text("ab"));
        assert_eq!(
            e.finish(),
            [b'T', 0, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xfe, 1, 0, 0, 0, 2, b'a', b'b']
        );
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<i64>().prop_map(Value::Int),
            "[a-z0-9:-]{0,12}".prop_map(Value::Text),
            any::<u64>().prop_map(|a| Value::Addr(Address(a))),
            any::<u32>().prop_map(|c| Value::Chain(BlockchainId(c))),
            proptest::collection::vec(any::<u8>(), 0..40).prop_map(Value::Bytes),
        ]
    }

    proptest! {
        #[test]
        fn values_decode_to_what_was_encoded(vs in proptest::collection::vec(arb_value(), 0..8)) {
            let mut e = Encoder::new(b"");
            for v in &vs {
                e.value(v);
            }
            let bytes = e.finish();
            let mut d = Decoder::new(&bytes);
            for v in &vs {
                prop_assert_eq!(&d.value().unwrap(), v);
            }
            prop_assert!(d.finish().is_ok());
        }
    }
}
