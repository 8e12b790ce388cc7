//! Canonical binary encoding for signable domain values.
//!
//! Signatures must be stable across runs and independent of field insertion
//! order, so every signable type encodes to a fixed byte layout: a one-byte
//! type tag followed by the fields in declared order. Variable-length fields
//! carry a u64 big-endian length prefix; maps encode sorted by key. The full
//! layout is documented in `docs/encoding.md` and must not change without a
//! new type tag.

use thiserror::Error;

/// Type tags. One per encodable domain type; never reuse a retired value.
pub mod tag {
    pub const KEY_PAIR: u8 = 0x01;
    pub const SIGNATURE: u8 = 0x02;
    pub const SIGNED_TOKEN: u8 = 0x03;
    pub const DID_DOCUMENT: u8 = 0x04;
    pub const MEMBERSHIP_CREDENTIAL: u8 = 0x05;
    pub const PRESENTATION: u8 = 0x06;
    pub const ENDPOINT_CERTIFICATE: u8 = 0x07;
    pub const PACKAGE_MANIFEST: u8 = 0x08;
    pub const TRANSFER_LOG: u8 = 0x09;
    pub const PRESENTATION_PAYLOAD: u8 = 0x0a;
    pub const CATALOG_RECORD: u8 = 0x0b;
    pub const CONTRACT: u8 = 0x0c;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodingError {
    #[error("expected type tag {expected:#04x}, found {found:#04x}")]
    UnexpectedTag { expected: u8, found: u8 },
    #[error("input truncated while reading {0}")]
    Truncated(&'static str),
    #[error("trailing bytes after value")]
    TrailingBytes,
    #[error("invalid utf-8 in string field")]
    InvalidUtf8,
    #[error("invalid enum discriminant {0}")]
    InvalidDiscriminant(u8),
    #[error("map keys not strictly ascending")]
    UnsortedMap,
    #[error("invalid fixed-size field length for {0}")]
    BadLength(&'static str),
}

/// A domain value with a stable, injective byte encoding.
pub trait Canonical: Sized {
    const TAG: u8;

    fn encode_body(&self, out: &mut Vec<u8>);
    fn decode_body(r: &mut Reader<'_>) -> Result<Self, EncodingError>;

    fn canonical_encode(&self) -> Vec<u8> {
        let mut out = vec![Self::TAG];
        self.encode_body(&mut out);
        out
    }

    fn canonical_decode(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let found = r.take_u8("type tag")?;
        if found != Self::TAG {
            return Err(EncodingError::UnexpectedTag {
                expected: Self::TAG,
                found,
            });
        }
        let value = Self::decode_body(&mut r)?;
        if !r.is_empty() {
            return Err(EncodingError::TrailingBytes);
        }
        Ok(value)
    }
}

// --- writers ---

pub fn put_u8(out: &mut Vec<u8>, v: u8) {
    out.push(v);
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

pub fn put_bool(out: &mut Vec<u8>, v: bool) {
    out.push(u8::from(v));
}

pub fn put_bytes(out: &mut Vec<u8>, v: &[u8]) {
    put_u64(out, v.len() as u64);
    out.extend_from_slice(v);
}

pub fn put_str(out: &mut Vec<u8>, v: &str) {
    put_bytes(out, v.as_bytes());
}

pub fn put_opt_u64(out: &mut Vec<u8>, v: Option<u64>) {
    match v {
        None => put_u8(out, 0),
        Some(x) => {
            put_u8(out, 1);
            put_u64(out, x);
        }
    }
}

/// Maps encode as count followed by key/value pairs in ascending key order.
/// The iterator must already be sorted (BTreeMap iteration is).
pub fn put_str_map<'a, I>(out: &mut Vec<u8>, entries: I, count: usize)
where
    I: Iterator<Item = (&'a String, &'a String)>,
{
    put_u64(out, count as u64);
    for (k, v) in entries {
        put_str(out, k);
        put_str(out, v);
    }
}

pub fn put_str_list<'a, I>(out: &mut Vec<u8>, items: I, count: usize)
where
    I: Iterator<Item = &'a String>,
{
    put_u64(out, count as u64);
    for item in items {
        put_str(out, item);
    }
}

// --- reader ---

pub struct Reader<'a> {
    rest: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { rest: bytes }
    }

    pub fn is_empty(&self) -> bool {
        self.rest.is_empty()
    }

    pub fn take_u8(&mut self, what: &'static str) -> Result<u8, EncodingError> {
        let (&b, rest) = self
            .rest
            .split_first()
            .ok_or(EncodingError::Truncated(what))?;
        self.rest = rest;
        Ok(b)
    }

    pub fn take_u64(&mut self, what: &'static str) -> Result<u64, EncodingError> {
        if self.rest.len() < 8 {
            return Err(EncodingError::Truncated(what));
        }
        let (head, rest) = self.rest.split_at(8);
        self.rest = rest;
        Ok(u64::from_be_bytes(head.try_into().expect("8 bytes")))
    }

    pub fn take_bool(&mut self, what: &'static str) -> Result<bool, EncodingError> {
        match self.take_u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            d => Err(EncodingError::InvalidDiscriminant(d)),
        }
    }

    pub fn take_bytes(&mut self, what: &'static str) -> Result<Vec<u8>, EncodingError> {
        let len = self.take_u64(what)? as usize;
        if self.rest.len() < len {
            return Err(EncodingError::Truncated(what));
        }
        let (head, rest) = self.rest.split_at(len);
        self.rest = rest;
        Ok(head.to_vec())
    }

    pub fn take_str(&mut self, what: &'static str) -> Result<String, EncodingError> {
        String::from_utf8(self.take_bytes(what)?).map_err(|_| EncodingError::InvalidUtf8)
    }

    pub fn take_opt_u64(&mut self, what: &'static str) -> Result<Option<u64>, EncodingError> {
        match self.take_u8(what)? {
            0 => Ok(None),
            1 => Ok(Some(self.take_u64(what)?)),
            d => Err(EncodingError::InvalidDiscriminant(d)),
        }
    }

    pub fn take_str_map(
        &mut self,
        what: &'static str,
    ) -> Result<std::collections::BTreeMap<String, String>, EncodingError> {
        let count = self.take_u64(what)?;
        let mut map = std::collections::BTreeMap::new();
        let mut prev: Option<String> = None;
        for _ in 0..count {
            let k = self.take_str(what)?;
            let v = self.take_str(what)?;
            if let Some(p) = &prev {
                if *p >= k {
                    return Err(EncodingError::UnsortedMap);
                }
            }
            prev = Some(k.clone());
            map.insert(k, v);
        }
        Ok(map)
    }

    pub fn take_str_list(&mut self, what: &'static str) -> Result<Vec<String>, EncodingError> {
        let count = self.take_u64(what)?;
        let mut items = Vec::new();
        for _ in 0..count {
            items.push(self.take_str(what)?);
        }
        Ok(items)
    }
}
