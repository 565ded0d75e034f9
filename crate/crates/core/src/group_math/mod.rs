//! Numeric substrate for the threshold scheme: Schnorr-group arithmetic,
//! label hashing into `Z_p`, Shamir sharing with Lagrange recombination at
//! zero, and bounded baby-step/giant-step discrete logarithms.

mod dlog;
mod hash;
mod params;
mod shamir;

use num_bigint::BigUint;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub use dlog::{bsgs_dlog, DlogSolver, MAX_TABLE_SIZE};
pub use hash::hash_to_scalar;
pub use params::{
    gen_group, is_probable_prime, mod_exp, random_nonzero_scalar, GroupParams, GENERATION_BUDGET,
    GROUP_FORMAT_TAG, MIN_LAMBDA_BITS,
};
pub use shamir::{
    eval_polynomial, interpolate_at_zero, lagrange_coeff_at_zero, lagrange_coeffs_at_zero,
    shamir_share, ShamirShare, ShamirShareSet,
};

/// An exponent, always reduced into `[0, p-1]`.
pub type Scalar = BigUint;

/// An element of the order-`p` subgroup of `Z_q^*`.
pub type Element = BigUint;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("no safe prime of {0} bits found within the generation budget")]
    GenerationTimeout(u32),
    #[error("security parameter {0} is below the supported floor")]
    LambdaTooSmall(u32),
    #[error("invalid group parameters: {0}")]
    InvalidParams(String),
    #[error("cannot parse group parameters: {0}")]
    Parse(String),
    #[error("label must not be empty")]
    InvalidLabel,
    #[error("threshold {t} exceeds share count {s}")]
    ThresholdExceedsShares { t: usize, s: usize },
    #[error("invalid share configuration: {0}")]
    InvalidShareConfig(String),
    #[error("index {0} is not a member of the subset")]
    InvalidIndex(u32),
    #[error("discrete log not found within [-{0}, {0}]")]
    DlogOutOfBound(u64),
    #[error("dlog bound {0} is too large for the group order")]
    BoundTooLarge(u64),
}

/// A vector of exponents in `Z_p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ScalarVector {
    pub entries: Vec<Scalar>,
}

impl ScalarVector {
    pub fn new(entries: Vec<Scalar>) -> Self {
        Self { entries }
    }

    /// Reduces each signed integer into `Z_p`.
    pub fn from_i64s(values: &[i64], params: &GroupParams) -> Self {
        Self::new(
            values
                .iter()
                .map(|&v| params.scalar_from_i128(i128::from(v)))
                .collect(),
        )
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![BigUint::default(); len])
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R, len: usize, params: &GroupParams) -> Self {
        Self::new(
            (0..len)
                .map(|_| random_below(rng, &params.order_p))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Scalar> {
        self.entries.iter()
    }

    pub fn is_reduced(&self, params: &GroupParams) -> bool {
        self.entries.iter().all(|e| e < &params.order_p)
    }

    /// `<self, other> mod p`.
    pub fn dot(&self, other: &[Scalar], params: &GroupParams) -> Scalar {
        self.entries
            .iter()
            .zip(other)
            .fold(BigUint::default(), |acc, (a, b)| {
                (acc + a * b) % &params.order_p
            })
    }
}

impl From<Vec<Scalar>> for ScalarVector {
    fn from(entries: Vec<Scalar>) -> Self {
        Self::new(entries)
    }
}

/// Uniform sample from `[0, bound)` by rejection over masked random bytes.
pub fn random_below<R: RngCore + ?Sized>(rng: &mut R, bound: &BigUint) -> BigUint {
    assert!(bound > &BigUint::default(), "empty sampling range");
    let bits = bound.bits();
    let bytes = bits.div_ceil(8) as usize;
    let excess = (bytes as u64 * 8 - bits) as u32;
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let candidate = BigUint::from_bytes_be(&buf);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// ChaCha20 seeded from `seed`, or from OS entropy when none is given.
pub fn seeded_or_os_rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_os_rng(),
    }
}
