//! Tagged, length-prefixed binary layout shared by keys, ciphertexts and
//! protocol messages.
//!
//! ```text
//! tag: u8 | field_count: u32 BE | (len: u32 BE | bytes)*
//! ```
//!
//! Integers are big-endian with no leading zeros (zero is the empty string),
//! labels are raw bytes, strings UTF-8, floats their IEEE-754 bit pattern as
//! an integer. Nested values are embedded as a single field holding their own
//! encoding. The hex debug form prints the same fields one per line.
//!
//! Ciphertexts are the exception: `ct1` then `ct0` are packed into one field
//! at a common width (the widest element), so their size is
//! `(eta + 1) * width` plus a constant header.

use num_bigint::BigUint;
use thiserror::Error;

use crate::group_math::{GroupParams, ScalarVector};
use crate::tmcfe::{
    Ciphertext, CoordinatePartial, FunctionalKeyShare, MasterSecretKey, PartialDecryption,
    PartySecretKey, PublicParams, VectorKeyShare, VectorPartialDecryption,
};

pub mod tag {
    pub const PUBLIC_PARAMS: u8 = 0x01;
    pub const MASTER_SECRET_KEY: u8 = 0x02;
    pub const PARTY_SECRET_KEY: u8 = 0x03;
    pub const FUNCTIONAL_KEY_SHARE: u8 = 0x04;
    pub const CIPHERTEXT: u8 = 0x05;
    pub const PARTIAL_DECRYPTION: u8 = 0x06;
    pub const VECTOR_KEY_SHARE: u8 = 0x07;
    pub const VECTOR_PARTIAL: u8 = 0x08;
    pub const PROTECTED_UPDATE: u8 = 0x20;
    pub const FUSION_SPEC: u8 = 0x21;
    pub const DK_REQUEST: u8 = 0x22;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("expected tag {expected:#04x}, found {found:#04x}")]
    WrongTag { expected: u8, found: u8 },
    #[error("trailing bytes after message")]
    Trailing,
    #[error("malformed field: {0}")]
    Malformed(String),
}

/// Collects fields of one tagged record.
#[derive(Debug, Default, Clone)]
pub struct FieldWriter {
    fields: Vec<Vec<u8>>,
}

impl FieldWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.fields.push(b.to_vec());
        self
    }

    pub fn big(&mut self, v: &BigUint) -> &mut Self {
        self.fields.push(if v.bits() == 0 {
            Vec::new()
        } else {
            v.to_bytes_be()
        });
        self
    }

    pub fn bigs<'a>(&mut self, vs: impl IntoIterator<Item = &'a BigUint>) -> &mut Self {
        for v in vs {
            self.big(v);
        }
        self
    }

    pub fn uint(&mut self, v: u64) -> &mut Self {
        let be = v.to_be_bytes();
        let start = be.iter().position(|&b| b != 0).unwrap_or(be.len());
        self.fields.push(be[start..].to_vec());
        self
    }

    pub fn float(&mut self, v: f64) -> &mut Self {
        self.uint(v.to_bits())
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn nested<T: Encode>(&mut self, v: &T) -> &mut Self {
        self.fields.push(v.to_bytes());
        self
    }

    pub fn finish(&self, tag: u8) -> Vec<u8> {
        let len: usize = self.fields.iter().map(|f| 4 + f.len()).sum();
        let mut out = Vec::with_capacity(5 + len);
        out.push(tag);
        out.extend_from_slice(&(self.fields.len() as u32).to_be_bytes());
        for f in &self.fields {
            out.extend_from_slice(&(f.len() as u32).to_be_bytes());
            out.extend_from_slice(f);
        }
        out
    }
}

/// Sequential reader over the fields of one record.
#[derive(Debug)]
pub struct FieldReader<'a> {
    fields: Vec<&'a [u8]>,
    pos: usize,
}

impl<'a> FieldReader<'a> {
    /// Parses a complete record, requiring `expected` as its tag.
    pub fn parse(data: &'a [u8], expected: u8) -> Result<Self, WireError> {
        let (found, fields) = split_record(data)?;
        if found != expected {
            return Err(WireError::WrongTag { expected, found });
        }
        Ok(Self { fields, pos: 0 })
    }

    pub fn remaining(&self) -> usize {
        self.fields.len() - self.pos
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        let f = self.fields.get(self.pos).ok_or(WireError::Truncated)?;
        self.pos += 1;
        Ok(f)
    }

    pub fn big(&mut self) -> Result<BigUint, WireError> {
        Ok(BigUint::from_bytes_be(self.bytes()?))
    }

    pub fn bigs(&mut self, count: usize) -> Result<Vec<BigUint>, WireError> {
        (0..count).map(|_| self.big()).collect()
    }

    pub fn uint(&mut self) -> Result<u64, WireError> {
        let b = self.bytes()?;
        if b.len() > 8 {
            return Err(WireError::Malformed("integer wider than 64 bits".into()));
        }
        Ok(b.iter().fold(0u64, |acc, &x| (acc << 8) | u64::from(x)))
    }

    /// A length or count field.
    pub fn count(&mut self) -> Result<usize, WireError> {
        let v = self.uint()?;
        usize::try_from(v)
            .ok()
            .filter(|&c| c <= u32::MAX as usize)
            .ok_or_else(|| WireError::Malformed(format!("implausible count {v}")))
    }

    pub fn index(&mut self) -> Result<u32, WireError> {
        u32::try_from(self.uint()?).map_err(|_| WireError::Malformed("index overflow".into()))
    }

    pub fn float(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_bits(self.uint()?))
    }

    pub fn string(&mut self) -> Result<String, WireError> {
        String::from_utf8(self.bytes()?.to_vec())
            .map_err(|_| WireError::Malformed("invalid UTF-8".into()))
    }

    pub fn nested<T: Decode>(&mut self) -> Result<T, WireError> {
        T::from_bytes(self.bytes()?)
    }

    pub fn finish(self) -> Result<(), WireError> {
        if self.pos == self.fields.len() {
            Ok(())
        } else {
            Err(WireError::Trailing)
        }
    }
}

fn read_u32(data: &[u8], at: usize) -> Result<usize, WireError> {
    let b = data.get(at..at + 4).ok_or(WireError::Truncated)?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
}

/// Splits a record into its tag and raw fields.
pub fn split_record(data: &[u8]) -> Result<(u8, Vec<&[u8]>), WireError> {
    let tag = *data.first().ok_or(WireError::Truncated)?;
    let count = read_u32(data, 1)?;
    let mut fields = Vec::with_capacity(count.min(data.len()));
    let mut at = 5;
    for _ in 0..count {
        let len = read_u32(data, at)?;
        at += 4;
        let f = data.get(at..at + len).ok_or(WireError::Truncated)?;
        fields.push(f);
        at += len;
    }
    if at != data.len() {
        return Err(WireError::Trailing);
    }
    Ok((tag, fields))
}

/// Hex debug form: `tag=0xNN fields=N` then `len hex` per field.
pub fn to_hex_debug(data: &[u8]) -> Result<String, WireError> {
    let (tag, fields) = split_record(data)?;
    let mut out = format!("tag=0x{tag:02x} fields={}\n", fields.len());
    for f in fields {
        out.push_str(&format!("{} {}\n", f.len(), hex::encode(f)));
    }
    Ok(out)
}

/// Inverse of [`to_hex_debug`].
pub fn from_hex_debug(text: &str) -> Result<Vec<u8>, WireError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(WireError::Truncated)?;
    let malformed = || WireError::Malformed("bad hex debug header".into());
    let mut parts = header.split_whitespace();
    let tag = parts
        .next()
        .and_then(|t| t.strip_prefix("tag=0x"))
        .and_then(|t| u8::from_str_radix(t, 16).ok())
        .ok_or_else(malformed)?;
    let count = parts
        .next()
        .and_then(|t| t.strip_prefix("fields="))
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(malformed)?;
    let mut w = FieldWriter::new();
    for _ in 0..count {
        let line = lines.next().ok_or(WireError::Truncated)?;
        let (len, body) = line.split_once(' ').unwrap_or((line, ""));
        let bytes = hex::decode(body).map_err(|e| WireError::Malformed(e.to_string()))?;
        if len.parse::<usize>().ok() != Some(bytes.len()) {
            return Err(WireError::Malformed(
                "field length disagrees with hex".into(),
            ));
        }
        w.bytes(&bytes);
    }
    Ok(w.finish(tag))
}

pub trait Encode {
    fn to_bytes(&self) -> Vec<u8>;

    fn to_hex_debug(&self) -> String {
        to_hex_debug(&self.to_bytes()).expect("freshly encoded record")
    }
}

pub trait Decode: Sized {
    fn from_bytes(data: &[u8]) -> Result<Self, WireError>;
}

fn write_group(w: &mut FieldWriter, g: &GroupParams) {
    w.big(&g.modulus_q)
        .big(&g.order_p)
        .big(&g.generator_g)
        .uint(u64::from(g.lambda_bits));
}

fn read_group(r: &mut FieldReader<'_>) -> Result<GroupParams, WireError> {
    let q = r.big()?;
    let p = r.big()?;
    let g = r.big()?;
    let lambda = r.index()?;
    GroupParams::new(q, p, g, lambda).map_err(|e| WireError::Malformed(e.to_string()))
}

impl Encode for PublicParams {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = FieldWriter::new();
        write_group(&mut w, &self.group);
        w.uint(self.threshold_t as u64)
            .uint(self.share_count_s as u64)
            .uint(self.client_count_n as u64)
            .str(&self.hash_id);
        for &eta in &self.vector_lengths {
            w.uint(eta as u64);
        }
        w.finish(tag::PUBLIC_PARAMS)
    }
}

impl Decode for PublicParams {
    fn from_bytes(data: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::parse(data, tag::PUBLIC_PARAMS)?;
        let group = read_group(&mut r)?;
        let threshold_t = r.count()?;
        let share_count_s = r.count()?;
        let client_count_n = r.count()?;
        let hash_id = r.string()?;
        let vector_lengths = (0..client_count_n)
            .map(|_| r.count())
            .collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(Self {
            group,
            threshold_t,
            share_count_s,
            client_count_n,
            vector_lengths,
            hash_id,
        })
    }
}

impl Encode for MasterSecretKey {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = FieldWriter::new();
        w.uint(self.w_matrix.len() as u64);
        for row in &self.w_matrix {
            w.uint(row.len() as u64);
        }
        for row in self.w_matrix.iter().chain(&self.u_matrix) {
            w.bigs(row.iter());
        }
        w.uint(self.alpha.len() as u64)
            .bigs(self.alpha.iter())
            .big(&self.alpha_sum)
            .bigs(self.g_alpha.iter());
        for row in &self.masked_bases {
            w.bigs(row.iter());
        }
        w.finish(tag::MASTER_SECRET_KEY)
    }
}

impl Decode for MasterSecretKey {
    fn from_bytes(data: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::parse(data, tag::MASTER_SECRET_KEY)?;
        let n = r.count()?;
        let lengths = (0..n).map(|_| r.count()).collect::<Result<Vec<_>, _>>()?;
        let rows = |r: &mut FieldReader<'_>| -> Result<Vec<ScalarVector>, WireError> {
            lengths
                .iter()
                .map(|&l| r.bigs(l).map(ScalarVector::new))
                .collect()
        };
        let w_matrix = rows(&mut r)?;
        let u_matrix = rows(&mut r)?;
        let alpha_len = r.count()?;
        let alpha = ScalarVector::new(r.bigs(alpha_len)?);
        let alpha_sum = r.big()?;
        let g_alpha = r.bigs(alpha_len)?;
        let masked_bases = lengths
            .iter()
            .map(|&l| r.bigs(l))
            .collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(Self {
            w_matrix,
            u_matrix,
            alpha,
            alpha_sum,
            g_alpha,
            masked_bases,
        })
    }
}

impl Encode for PartySecretKey {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = FieldWriter::new();
        w.uint(u64::from(self.client_index))
            .nested(&self.pp)
            .uint(self.g_alpha.len() as u64)
            .bigs(self.g_alpha.iter())
            .uint(self.masked_bases.len() as u64)
            .bigs(self.masked_bases.iter())
            .bigs(self.u_row.iter());
        w.finish(tag::PARTY_SECRET_KEY)
    }
}

impl Decode for PartySecretKey {
    fn from_bytes(data: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::parse(data, tag::PARTY_SECRET_KEY)?;
        let client_index = r.index()?;
        let pp = r.nested()?;
        let alpha_len = r.count()?;
        let g_alpha = r.bigs(alpha_len)?;
        let eta = r.count()?;
        let masked_bases = r.bigs(eta)?;
        let u_row = ScalarVector::new(r.bigs(eta)?);
        r.finish()?;
        Ok(Self {
            client_index,
            pp,
            g_alpha,
            masked_bases,
            u_row,
        })
    }
}

impl Encode for FunctionalKeyShare {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = FieldWriter::new();
        w.uint(u64::from(self.share_index))
            .bytes(&self.label)
            .big(&self.v0)
            .uint(self.v1.len() as u64)
            .bigs(self.v1.iter())
            .uint(self.weights.len() as u64)
            .bigs(self.weights.iter());
        w.finish(tag::FUNCTIONAL_KEY_SHARE)
    }
}

impl Decode for FunctionalKeyShare {
    fn from_bytes(data: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::parse(data, tag::FUNCTIONAL_KEY_SHARE)?;
        let share_index = r.index()?;
        let label = r.bytes()?.to_vec();
        let v0 = r.big()?;
        let n = r.count()?;
        let v1 = r.bigs(n)?;
        let len = r.count()?;
        let weights = ScalarVector::new(r.bigs(len)?);
        r.finish()?;
        Ok(Self {
            share_index,
            v0,
            v1,
            weights,
            label,
        })
    }
}

impl Ciphertext {
    /// Packs at no less than `min_width` bytes per element. Senders pass
    /// the group's element size so the length does not depend on the values.
    pub fn to_bytes_padded(&self, min_width: usize) -> Vec<u8> {
        let mut w = FieldWriter::new();
        let elements: Vec<&BigUint> = std::iter::once(&self.ct1).chain(&self.ct0).collect();
        let width = elements
            .iter()
            .map(|e| e.to_bytes_be().len())
            .max()
            .unwrap_or(0)
            .max(min_width);
        let mut packed = Vec::with_capacity(width * elements.len());
        for e in elements {
            let b = e.to_bytes_be();
            packed.resize(packed.len() + width - b.len(), 0);
            packed.extend_from_slice(&b);
        }
        w.uint(u64::from(self.client_index))
            .bytes(&self.label)
            .uint(width as u64)
            .bytes(&packed);
        w.finish(tag::CIPHERTEXT)
    }
}

impl Encode for Ciphertext {
    fn to_bytes(&self) -> Vec<u8> {
        self.to_bytes_padded(0)
    }
}

impl Decode for Ciphertext {
    fn from_bytes(data: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::parse(data, tag::CIPHERTEXT)?;
        let client_index = r.index()?;
        let label = r.bytes()?.to_vec();
        let width = r.count()?;
        let packed = r.bytes()?;
        r.finish()?;
        if width == 0 || packed.is_empty() || packed.len() % width != 0 {
            return Err(WireError::Malformed("ciphertext element packing".into()));
        }
        let mut elements = packed.chunks(width).map(BigUint::from_bytes_be);
        let ct1 = elements.next().expect("non-empty");
        let ct0 = elements.collect();
        Ok(Self {
            client_index,
            label,
            ct0,
            ct1,
        })
    }
}

impl Encode for PartialDecryption {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = FieldWriter::new();
        w.uint(u64::from(self.share_index))
            .bytes(&self.label)
            .big(&self.ct0_agg)
            .big(&self.ct2_share)
            .bigs(self.ct1_shares.iter());
        w.finish(tag::PARTIAL_DECRYPTION)
    }
}

impl Decode for PartialDecryption {
    fn from_bytes(data: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::parse(data, tag::PARTIAL_DECRYPTION)?;
        let share_index = r.index()?;
        let label = r.bytes()?.to_vec();
        let ct0_agg = r.big()?;
        let ct2_share = r.big()?;
        let rest = r.remaining();
        let ct1_shares = r.bigs(rest)?;
        r.finish()?;
        Ok(Self {
            share_index,
            ct0_agg,
            ct1_shares,
            ct2_share,
            label,
        })
    }
}

impl Encode for VectorKeyShare {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = FieldWriter::new();
        w.uint(u64::from(self.share_index))
            .bytes(&self.label)
            .uint(self.party_weights.len() as u64)
            .uint(self.v0.len() as u64)
            .bigs(self.party_weights.iter())
            .bigs(self.v0.iter());
        for row in &self.v1 {
            w.bigs(row.iter());
        }
        w.finish(tag::VECTOR_KEY_SHARE)
    }
}

impl Decode for VectorKeyShare {
    fn from_bytes(data: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::parse(data, tag::VECTOR_KEY_SHARE)?;
        let share_index = r.index()?;
        let label = r.bytes()?.to_vec();
        let n = r.count()?;
        let len = r.count()?;
        let party_weights = ScalarVector::new(r.bigs(n)?);
        let v0 = r.bigs(len)?;
        let v1 = (0..len).map(|_| r.bigs(n)).collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(Self {
            share_index,
            party_weights,
            label,
            v0,
            v1,
        })
    }
}

impl Encode for VectorPartialDecryption {
    fn to_bytes(&self) -> Vec<u8> {
        let n = self.coords.first().map_or(0, |c| c.ct1_shares.len());
        let mut w = FieldWriter::new();
        w.uint(u64::from(self.share_index))
            .bytes(&self.label)
            .uint(n as u64)
            .uint(self.coords.len() as u64);
        for c in &self.coords {
            w.big(&c.ct0_agg)
                .big(&c.ct2_share)
                .bigs(c.ct1_shares.iter());
        }
        w.finish(tag::VECTOR_PARTIAL)
    }
}

impl Decode for VectorPartialDecryption {
    fn from_bytes(data: &[u8]) -> Result<Self, WireError> {
        let mut r = FieldReader::parse(data, tag::VECTOR_PARTIAL)?;
        let share_index = r.index()?;
        let label = r.bytes()?.to_vec();
        let n = r.count()?;
        let len = r.count()?;
        let coords = (0..len)
            .map(|_| {
                Ok(CoordinatePartial {
                    ct0_agg: r.big()?,
                    ct2_share: r.big()?,
                    ct1_shares: r.bigs(n)?,
                })
            })
            .collect::<Result<Vec<_>, WireError>>()?;
        r.finish()?;
        Ok(Self {
            share_index,
            label,
            coords,
        })
    }
}
