//! Schnorr group parameters: the order-`p` quadratic-residue subgroup of
//! `Z_q^*` with `q = 2p + 1`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{Rng, RngCore};

use super::{random_below, seeded_or_os_rng, Element, GroupError, Scalar};

/// Text-form format tag written as the first line of serialized parameters.
pub const GROUP_FORMAT_TAG: &str = "tapfed-group-v1";

/// Upper bound on the number of candidates examined by [`gen_group`].
pub const GENERATION_BUDGET: usize = 2_000_000;

/// Smallest accepted security parameter. Anything below cannot hold a label
/// hash or a meaningful dlog range.
pub const MIN_LAMBDA_BITS: u32 = 8;

// 256-bit Sophie Germain prime p with q = 2p + 1, generated once with
// `gen_group(256, Some(20240601))` and pinned so tests and experiments do not
// pay for safe-prime search at every start.
const DEFAULT_256_Q: &str =
    "224200191182182563064999403480164098811041647136631923679982208197020985900579";
const DEFAULT_256_P: &str =
    "112100095591091281532499701740082049405520823568315961839991104098510492950289";
const DEFAULT_256_G: &str =
    "57050787868446709097862173179511501391271684166506856875902801691731594737284";

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GroupParams {
    pub modulus_q: BigUint,
    pub order_p: BigUint,
    pub generator_g: BigUint,
    pub lambda_bits: u32,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("lambda_bits", &self.lambda_bits)
            .field("q", &self.modulus_q.to_str_radix(10))
            .field("p", &self.order_p.to_str_radix(10))
            .field("g", &self.generator_g.to_str_radix(10))
            .finish()
    }
}

impl GroupParams {
    /// Builds parameters from raw values and checks every group invariant.
    pub fn new(
        modulus_q: BigUint,
        order_p: BigUint,
        generator_g: BigUint,
        lambda_bits: u32,
    ) -> Result<Self, GroupError> {
        let params = Self {
            modulus_q,
            order_p,
            generator_g,
            lambda_bits,
        };
        params.validate()?;
        Ok(params)
    }

    /// The pinned 256-bit group used as the production default.
    pub fn default_256() -> Self {
        Self {
            modulus_q: BigUint::from_str(DEFAULT_256_Q).expect("pinned constant"),
            order_p: BigUint::from_str(DEFAULT_256_P).expect("pinned constant"),
            generator_g: BigUint::from_str(DEFAULT_256_G).expect("pinned constant"),
            lambda_bits: 256,
        }
    }

    pub fn validate(&self) -> Result<(), GroupError> {
        let two = BigUint::from(2u32);
        if &self.order_p * &two + 1u32 != self.modulus_q {
            return Err(GroupError::InvalidParams("q != 2p + 1".into()));
        }
        if self.order_p.bits() != u64::from(self.lambda_bits) {
            return Err(GroupError::InvalidParams(format!(
                "p has {} bits, expected {}",
                self.order_p.bits(),
                self.lambda_bits
            )));
        }
        if !is_probable_prime(&self.order_p) || !is_probable_prime(&self.modulus_q) {
            return Err(GroupError::InvalidParams("p or q is composite".into()));
        }
        if self.generator_g < two || self.generator_g >= self.modulus_q {
            return Err(GroupError::InvalidParams("g outside [2, q-1]".into()));
        }
        if !self.is_element(&self.generator_g) {
            return Err(GroupError::InvalidParams("g does not have order p".into()));
        }
        Ok(())
    }

    /// True when `x` lies in the order-`p` subgroup.
    pub fn is_element(&self, x: &BigUint) -> bool {
        !x.is_zero() && x < &self.modulus_q && x.modpow(&self.order_p, &self.modulus_q).is_one()
    }

    pub fn identity(&self) -> Element {
        BigUint::one()
    }

    /// `g^exponent mod q`.
    pub fn pow_g(&self, exponent: &Scalar) -> Element {
        mod_exp(&self.generator_g, exponent, self)
    }

    pub fn mul(&self, a: &Element, b: &Element) -> Element {
        (a * b) % &self.modulus_q
    }

    /// Inverse of a subgroup element, computed as `x^(p-1)`.
    pub fn inv(&self, x: &Element) -> Element {
        x.modpow(&(&self.order_p - 1u32), &self.modulus_q)
    }

    /// Reduces a signed integer into `Z_p`.
    pub fn scalar_from_i128(&self, v: i128) -> Scalar {
        let mag = BigUint::from(v.unsigned_abs()) % &self.order_p;
        if v < 0 && !mag.is_zero() {
            &self.order_p - mag
        } else {
            mag
        }
    }

    /// Serialized byte width of a group element (big-endian, no sign).
    pub fn element_byte_len(&self) -> usize {
        self.modulus_q.bits().div_ceil(8) as usize
    }

    /// `tapfed-group-v1` text form: tag, q, p, g, lambda, newline separated.
    pub fn to_text(&self) -> String {
        format!(
            "{GROUP_FORMAT_TAG}\n{}\n{}\n{}\n{}\n",
            self.modulus_q, self.order_p, self.generator_g, self.lambda_bits
        )
    }

    pub fn from_text(text: &str) -> Result<Self, GroupError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        match lines.next() {
            Some(GROUP_FORMAT_TAG) => {}
            other => {
                return Err(GroupError::Parse(format!(
                    "expected format tag {GROUP_FORMAT_TAG}, found {other:?}"
                )))
            }
        }
        let mut big = |name: &str| -> Result<BigUint, GroupError> {
            let line = lines
                .next()
                .ok_or_else(|| GroupError::Parse(format!("missing field {name}")))?;
            BigUint::from_str(line).map_err(|e| GroupError::Parse(format!("{name}: {e}")))
        };
        let q = big("q")?;
        let p = big("p")?;
        let g = big("g")?;
        let lambda = lines
            .next()
            .ok_or_else(|| GroupError::Parse("missing field lambda".into()))?
            .parse::<u32>()
            .map_err(|e| GroupError::Parse(format!("lambda: {e}")))?;
        Self::new(q, p, g, lambda)
    }
}

/// `base^exponent mod q`.
pub fn mod_exp(base: &Element, exponent: &Scalar, params: &GroupParams) -> Element {
    base.modpow(exponent, &params.modulus_q)
}

/// Generates a fresh Schnorr group whose subgroup order has exactly
/// `lambda_bits` bits. Deterministic for a given seed.
pub fn gen_group(lambda_bits: u32, seed: Option<u64>) -> Result<GroupParams, GroupError> {
    if lambda_bits < MIN_LAMBDA_BITS {
        return Err(GroupError::LambdaTooSmall(lambda_bits));
    }
    let mut rng = seeded_or_os_rng(seed);
    let p = find_sophie_germain_prime(lambda_bits, &mut rng)?;
    let q = &p * 2u32 + 1u32;
    let two = BigUint::from(2u32);
    loop {
        let h = random_below(&mut rng, &(&q - 3u32)) + &two;
        let g = h.modpow(&two, &q);
        if !g.is_one() {
            return Ok(GroupParams {
                modulus_q: q,
                order_p: p,
                generator_g: g,
                lambda_bits,
            });
        }
    }
}

const SMALL_PRIMES_LIMIT: u32 = 2048;

fn small_primes() -> Vec<u32> {
    let n = SMALL_PRIMES_LIMIT as usize;
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            let mut j = i * i;
            while j <= n {
                sieve[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    (0..=n).filter(|&k| sieve[k]).map(|k| k as u32).collect()
}

fn find_sophie_germain_prime<R: RngCore>(
    lambda_bits: u32,
    rng: &mut R,
) -> Result<BigUint, GroupError> {
    let primes = small_primes();
    let bytes = (lambda_bits as usize).div_ceil(8);
    let top_bit = BigUint::one() << (lambda_bits - 1);
    let mask = (BigUint::one() << lambda_bits) - 1u32;
    let mut buf = vec![0u8; bytes];
    for _ in 0..GENERATION_BUDGET {
        rng.fill_bytes(&mut buf);
        let mut p = (BigUint::from_bytes_be(&buf) & &mask) | &top_bit | BigUint::one();
        // p = 2 (mod 3) is required for 2p + 1 to avoid the factor 3
        if (&p % 3u32) != BigUint::from(2u32) && lambda_bits > 2 {
            p += 2u32;
            if p.bits() != u64::from(lambda_bits) {
                continue;
            }
        }
        if !passes_sieve(&p, &primes) {
            continue;
        }
        let q = &p * 2u32 + 1u32;
        if is_probable_prime(&p) && is_probable_prime(&q) {
            return Ok(p);
        }
    }
    Err(GroupError::GenerationTimeout(lambda_bits))
}

fn passes_sieve(p: &BigUint, primes: &[u32]) -> bool {
    for &r in primes {
        let rb = BigUint::from(r);
        if &rb >= p {
            break;
        }
        let rem = (p % r).to_u32_digits().first().copied().unwrap_or(0);
        if rem == 0 {
            return false;
        }
        // 2p + 1 = 0 (mod r)
        if (2 * u64::from(rem) + 1) % u64::from(r) == 0 {
            return false;
        }
    }
    true
}

const MR_BASES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Miller-Rabin with fixed bases, plus extra pseudo-random bases for
/// inputs above 82 bits where the fixed set is no longer a proof.
pub fn is_probable_prime(n: &BigUint) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &b in MR_BASES.iter() {
        let bb = BigUint::from(b);
        if n == &bb {
            return true;
        }
        if (n % b).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    let witness = |a: &BigUint| -> bool {
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            return true;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                return true;
            }
        }
        false
    };
    if !MR_BASES.iter().all(|&b| witness(&BigUint::from(b))) {
        return false;
    }
    if n.bits() > 82 {
        let mut rng = seeded_or_os_rng(Some(n.bits() ^ 0x5eed));
        let bound = n - 3u32;
        for _ in 0..16 {
            let a = random_below(&mut rng, &bound) + &two;
            if !witness(&a) {
                return false;
            }
        }
    }
    true
}

impl FromStr for GroupParams {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_text(s)
    }
}

/// Uniform sample from `[1, p-1]`.
pub fn random_nonzero_scalar<R: Rng + ?Sized>(rng: &mut R, params: &GroupParams) -> Scalar {
    random_below(rng, &(&params.order_p - 1u32)) + 1u32
}
