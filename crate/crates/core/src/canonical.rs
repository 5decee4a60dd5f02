//! Canonical binary encoding used for hashing, signing and the persisted block log.
//!
//! Every field is written as a big-endian `u32` length followed by its bytes, in
//! declared order. Integers are fixed width inside their field, lists carry their
//! element count as a leading `u64` field, and nested structures are encoded into
//! their own field. The format is bit-exact: two implementations that follow these
//! rules produce identical bytes and therefore identical hashes.

use num::rational::Ratio;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("field at offset {offset} has length {found}, expected {expected}")]
    BadWidth { offset: usize, expected: usize, found: usize },
    #[error("unknown tag {tag} for {what}")]
    UnknownTag { what: &'static str, tag: u8 },
    #[error("invalid utf-8 in string field")]
    Utf8,
    #[error("invalid value: {0}")]
    Invalid(&'static str),
    #[error("{0} trailing bytes after value")]
    Trailing(usize),
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        let len = u32::try_from(b.len()).expect("canonical field exceeds u32 length");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.bytes(&[v])
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn rational(&mut self, r: &Ratio<i128>) -> &mut Self {
        let mut raw = [0u8; 32];
        raw[..16].copy_from_slice(&r.numer().to_be_bytes());
        raw[16..].copy_from_slice(&r.denom().to_be_bytes());
        self.bytes(&raw)
    }

    pub fn nested(&mut self, f: impl FnOnce(&mut Encoder)) -> &mut Self {
        let mut inner = Encoder::new();
        f(&mut inner);
        self.bytes(&inner.buf)
    }

    pub fn list<T>(&mut self, items: &[T], mut f: impl FnMut(&mut Encoder, &T)) -> &mut Self {
        self.u64(items.len() as u64);
        for item in items {
            self.nested(|e| f(e, item));
        }
        self
    }

    pub fn option<T>(&mut self, v: Option<&T>, f: impl FnOnce(&mut Encoder, &T)) -> &mut Self {
        match v {
            None => self.u8(0),
            Some(x) => {
                self.u8(1);
                self.nested(|e| f(e, x))
            }
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let start = self.pos;
        let header = self.data.get(start..start + 4).ok_or(DecodeError::Truncated(start))?;
        let len = u32::from_be_bytes(header.try_into().unwrap()) as usize;
        let body = self.data.get(start + 4..start + 4 + len).ok_or(DecodeError::Truncated(start + 4))?;
        self.pos = start + 4 + len;
        Ok(body)
    }

    fn fixed<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let offset = self.pos;
        let raw = self.bytes()?;
        raw.try_into().map_err(|_| DecodeError::BadWidth { offset, expected: N, found: raw.len() })
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        self.fixed::<N>()
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        let raw = self.bytes()?;
        String::from_utf8(raw.to_vec()).map_err(|_| DecodeError::Utf8)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.fixed::<1>()?[0])
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.fixed::<8>()?))
    }

    pub fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(DecodeError::UnknownTag { what: "bool", tag }),
        }
    }

    pub fn rational(&mut self) -> Result<Ratio<i128>, DecodeError> {
        let raw = self.fixed::<32>()?;
        let numer = i128::from_be_bytes(raw[..16].try_into().unwrap());
        let denom = i128::from_be_bytes(raw[16..].try_into().unwrap());
        if denom <= 0 {
            return Err(DecodeError::Invalid("rational denominator must be positive"));
        }
        let r = Ratio::new(numer, denom);
        // only reduced forms are canonical
        if *r.numer() != numer || *r.denom() != denom {
            return Err(DecodeError::Invalid("rational not in lowest terms"));
        }
        Ok(r)
    }

    pub fn nested<T>(&mut self, f: impl FnOnce(&mut Decoder<'a>) -> Result<T, DecodeError>) -> Result<T, DecodeError> {
        let raw = self.bytes()?;
        let mut inner = Decoder::new(raw);
        let v = f(&mut inner)?;
        inner.finish()?;
        Ok(v)
    }

    pub fn list<T>(
        &mut self,
        mut f: impl FnMut(&mut Decoder<'a>) -> Result<T, DecodeError>,
    ) -> Result<Vec<T>, DecodeError> {
        let n = self.u64()?;
        let remaining = self.data.len() - self.pos;
        // each element needs at least a 4-byte header
        if n as usize > remaining / 4 {
            return Err(DecodeError::Truncated(self.pos));
        }
        (0..n).map(|_| self.nested(&mut f)).collect()
    }

    pub fn option<T>(
        &mut self,
        f: impl FnOnce(&mut Decoder<'a>) -> Result<T, DecodeError>,
    ) -> Result<Option<T>, DecodeError> {
        match self.u8()? {
            0 => Ok(None),
            1 => self.nested(f).map(Some),
            tag => Err(DecodeError::UnknownTag { what: "option", tag }),
        }
    }

    pub fn finish(&self) -> Result<(), DecodeError> {
        match self.data.len() - self.pos {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

/// Types with a canonical, bit-exact byte form.
pub trait Canonical: Sized {
    fn encode(&self, enc: &mut Encoder);
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError>;

    fn to_canonical(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    fn from_canonical(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let v = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(v)
    }
}

/// Lowercase hex; the decoder rejects uppercase so every byte string has exactly one text form.
pub fn to_hex(bytes: &[u8]) -> String {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push(DIGITS[(b >> 4) as usize] as char);
        s.push(DIGITS[(b & 0xf) as usize] as char);
    }
    s
}

pub fn from_hex(s: &str) -> Option<Vec<u8>> {
    fn nibble(c: u8) -> Option<u8> {
        match c {
            b'0'..=b'9' => Some(c - b'0'),
            b'a'..=b'f' => Some(c - b'a' + 10),
            _ => None,
        }
    }
    let raw = s.as_bytes();
    if !raw.len().is_multiple_of(2) {
        return None;
    }
    raw.chunks(2).map(|pair| Some(nibble(pair[0])? << 4 | nibble(pair[1])?)).collect()
}
