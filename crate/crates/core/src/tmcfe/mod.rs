//! t-of-s threshold multi-client functional encryption for inner products.
//!
//! Six algorithms: [`setup`], [`sk_distribute`], [`dk_generate`],
//! [`encrypt`], [`share_decrypt`] and [`combine_decrypt`]. Each of `n`
//! clients encrypts its own vector under a round label; a functional key for
//! a weight vector `y` is Shamir-split over `s` decryptors, and any `t`
//! partial decryptions recombine to `sum_i <x_i, y_i>`.
//!
//! Lagrange coefficients are applied in [`combine_decrypt`] over whichever
//! responders actually answered, so partial decryptions carry raw share
//! indices and any `t` of them suffice.

mod vector;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;
use thiserror::Error;

use crate::group_math::{
    self, gen_group, hash_to_scalar, lagrange_coeffs_at_zero, DlogSolver, Element, GroupError,
    GroupParams, Scalar, ScalarVector,
};

pub use vector::{
    combine_decrypt_vector, dk_generate_vector, share_decrypt_vector, CoordinatePartial,
    VectorKeyShare, VectorPartialDecryption,
};

/// Identifier of the label hash recorded in public parameters.
pub const HASH_ID: &str = "sha256-ctr-mod-p/v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TmcfeError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("threshold {t} must satisfy 1 <= t <= s = {s}")]
    Threshold { t: usize, s: usize },
    #[error("arity mismatch: {0}")]
    Arity(String),
    #[error("index {index} outside [1, {max}]")]
    IndexOutOfRange { index: u32, max: usize },
    #[error("label mismatch")]
    LabelMismatch,
    #[error("label must not be empty")]
    EmptyLabel,
    #[error("incomplete input: {0}")]
    IncompleteInput(String),
    #[error("weight vector does not match the key share")]
    KeyMismatch,
    #[error("insufficient shares: need {need}, got {got}")]
    InsufficientShares { need: usize, got: usize },
    #[error("partial decryptions disagree on the aggregated ciphertext")]
    TamperDetected,
    #[error("decrypted value outside [-{0}, {0}]")]
    ResultOutOfRange(u64),
    #[error("duplicate share index {0}")]
    DuplicateShareIndex(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicParams {
    pub group: GroupParams,
    pub threshold_t: usize,
    pub share_count_s: usize,
    pub client_count_n: usize,
    pub vector_lengths: Vec<usize>,
    pub hash_id: String,
}

impl PublicParams {
    /// Total length of the concatenated weight vector.
    pub fn total_len(&self) -> usize {
        self.vector_lengths.iter().sum()
    }

    /// Start offset of client `i` (1-based) inside the concatenated vector.
    pub fn offset(&self, client_index: u32) -> usize {
        self.vector_lengths[..client_index as usize - 1]
            .iter()
            .sum()
    }

    pub fn vector_len(&self, client_index: u32) -> usize {
        self.vector_lengths[client_index as usize - 1]
    }

    /// Slice of `y` belonging to client `i`.
    pub fn block<'a>(&self, y: &'a [Scalar], client_index: u32) -> &'a [Scalar] {
        let start = self.offset(client_index);
        &y[start..start + self.vector_len(client_index)]
    }

    fn check_client(&self, client_index: u32) -> Result<(), TmcfeError> {
        if client_index == 0 || client_index as usize > self.client_count_n {
            return Err(TmcfeError::IndexOutOfRange {
                index: client_index,
                max: self.client_count_n,
            });
        }
        Ok(())
    }

    fn check_weights(&self, y: &ScalarVector) -> Result<(), TmcfeError> {
        if y.len() != self.total_len() {
            return Err(TmcfeError::Arity(format!(
                "weight vector has {} entries, expected {}",
                y.len(),
                self.total_len()
            )));
        }
        if !y.is_reduced(&self.group) {
            return Err(TmcfeError::Arity(
                "weight entries must be reduced mod p".into(),
            ));
        }
        Ok(())
    }
}

/// Master secret: `W`, `U`, `alpha` and the derived bases.
///
/// `masked_bases[i][k] = g^(A * W[i][k])` where `A = sum(alpha)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterSecretKey {
    pub w_matrix: Vec<ScalarVector>,
    pub u_matrix: Vec<ScalarVector>,
    pub alpha: ScalarVector,
    pub alpha_sum: Scalar,
    pub g_alpha: Vec<Element>,
    pub masked_bases: Vec<Vec<Element>>,
}

/// Encryption key of one client. Holds `U_i` in the clear but never a row
/// of `W` nor `alpha` itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartySecretKey {
    pub client_index: u32,
    pub pp: PublicParams,
    pub g_alpha: Vec<Element>,
    pub masked_bases: Vec<Element>,
    pub u_row: ScalarVector,
}

/// Share `j` of the functional key for `(y, label)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionalKeyShare {
    pub share_index: u32,
    /// `f0(j)`
    pub v0: Scalar,
    /// `f_i(j)` for each client `i`
    pub v1: Vec<Scalar>,
    pub weights: ScalarVector,
    pub label: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub client_index: u32,
    pub label: Vec<u8>,
    pub ct0: Vec<Element>,
    pub ct1: Element,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialDecryption {
    pub share_index: u32,
    /// `prod_i prod_k ct0[i][k]^y[i][k]`, identical across honest decryptors
    pub ct0_agg: Element,
    /// `ct1[i]^f_i(j)` per client
    pub ct1_shares: Vec<Element>,
    /// `g^f0(j)`
    pub ct2_share: Element,
    pub label: Vec<u8>,
}

/// Generates a group of `lambda_bits` and runs [`setup_with_group`].
pub fn setup<R: RngCore + ?Sized>(
    lambda_bits: u32,
    vector_lengths: &[usize],
    t: usize,
    s: usize,
    n: usize,
    rng: &mut R,
) -> Result<(PublicParams, MasterSecretKey), TmcfeError> {
    let mut seed = [0u8; 8];
    rng.fill_bytes(&mut seed);
    let group = gen_group(lambda_bits, Some(u64::from_le_bytes(seed)))?;
    setup_with_group(group, vector_lengths, t, s, n, rng)
}

pub fn setup_with_group<R: RngCore + ?Sized>(
    group: GroupParams,
    vector_lengths: &[usize],
    t: usize,
    s: usize,
    n: usize,
    rng: &mut R,
) -> Result<(PublicParams, MasterSecretKey), TmcfeError> {
    if t == 0 || t > s {
        return Err(TmcfeError::Threshold { t, s });
    }
    if BigUint::from(s) >= group.order_p {
        return Err(TmcfeError::Threshold { t, s });
    }
    if vector_lengths.is_empty() || n == 0 {
        return Err(TmcfeError::Arity("at least one client is required".into()));
    }
    if vector_lengths.len() != n {
        return Err(TmcfeError::Arity(format!(
            "{} vector lengths for {n} clients",
            vector_lengths.len()
        )));
    }
    if vector_lengths.contains(&0) {
        return Err(TmcfeError::Arity("vector lengths must be positive".into()));
    }
    let eta_max = *vector_lengths.iter().max().expect("non-empty");
    let alpha = ScalarVector::random(rng, eta_max, &group);
    let w_matrix: Vec<ScalarVector> = vector_lengths
        .iter()
        .map(|&eta| ScalarVector::random(rng, eta, &group))
        .collect();
    let u_matrix: Vec<ScalarVector> = vector_lengths
        .iter()
        .map(|&eta| ScalarVector::random(rng, eta, &group))
        .collect();
    let alpha_sum = alpha
        .iter()
        .fold(BigUint::zero(), |acc, a| (acc + a) % &group.order_p);
    let g_alpha = alpha.iter().map(|a| group.pow_g(a)).collect();
    let masked_bases = w_matrix
        .iter()
        .map(|row| {
            row.iter()
                .map(|w| group.pow_g(&(&alpha_sum * w % &group.order_p)))
                .collect()
        })
        .collect();
    let pp = PublicParams {
        group,
        threshold_t: t,
        share_count_s: s,
        client_count_n: n,
        vector_lengths: vector_lengths.to_vec(),
        hash_id: HASH_ID.to_string(),
    };
    let msk = MasterSecretKey {
        w_matrix,
        u_matrix,
        alpha,
        alpha_sum,
        g_alpha,
        masked_bases,
    };
    Ok((pp, msk))
}

/// Projects the master key onto client `i`.
pub fn sk_distribute(
    pp: &PublicParams,
    msk: &MasterSecretKey,
    client_index: u32,
) -> Result<PartySecretKey, TmcfeError> {
    pp.check_client(client_index)?;
    let row = client_index as usize - 1;
    Ok(PartySecretKey {
        client_index,
        pp: pp.clone(),
        g_alpha: msk.g_alpha.clone(),
        masked_bases: msk.masked_bases[row].clone(),
        u_row: msk.u_matrix[row].clone(),
    })
}

/// Samples the `n + 1` key polynomials for `(y, label)` once and returns
/// all `s` shares.
pub fn dk_generate<R: RngCore + ?Sized>(
    pp: &PublicParams,
    msk: &MasterSecretKey,
    y: &ScalarVector,
    label: &[u8],
    rng: &mut R,
) -> Result<Vec<FunctionalKeyShare>, TmcfeError> {
    pp.check_weights(y)?;
    let group = &pp.group;
    let h = label_hash(label, group)?;
    let p = &group.order_p;
    let mut u_dot = BigUint::zero();
    let mut constant_terms = Vec::with_capacity(pp.client_count_n);
    for i in 1..=pp.client_count_n as u32 {
        let block = pp.block(&y.entries, i);
        let row = i as usize - 1;
        u_dot = (u_dot + msk.u_matrix[row].dot(block, group)) % p;
        constant_terms.push(msk.w_matrix[row].dot(block, group));
    }
    let f0 = random_polynomial(h * u_dot % p, pp.threshold_t, group, rng);
    let fi: Vec<Vec<Scalar>> = constant_terms
        .into_iter()
        .map(|b0| random_polynomial(b0, pp.threshold_t, group, rng))
        .collect();
    Ok((1..=pp.share_count_s as u32)
        .map(|j| FunctionalKeyShare {
            share_index: j,
            v0: group_math::eval_polynomial(&f0, j, group),
            v1: fi
                .iter()
                .map(|f| group_math::eval_polynomial(f, j, group))
                .collect(),
            weights: y.clone(),
            label: label.to_vec(),
        })
        .collect())
}

pub(crate) fn random_polynomial<R: RngCore + ?Sized>(
    constant: Scalar,
    t: usize,
    group: &GroupParams,
    rng: &mut R,
) -> Vec<Scalar> {
    let mut coeffs = Vec::with_capacity(t);
    coeffs.push(constant);
    coeffs.extend((1..t).map(|_| group_math::random_below(rng, &group.order_p)));
    coeffs
}

pub(crate) fn label_hash(label: &[u8], group: &GroupParams) -> Result<Scalar, TmcfeError> {
    if label.is_empty() {
        return Err(TmcfeError::EmptyLabel);
    }
    Ok(hash_to_scalar(label, group)?)
}

pub fn encrypt<R: RngCore + ?Sized>(
    sk: &PartySecretKey,
    x: &ScalarVector,
    label: &[u8],
    rng: &mut R,
) -> Result<Ciphertext, TmcfeError> {
    let r = group_math::random_below(rng, &sk.pp.group.order_p);
    encrypt_with_randomness(sk, x, label, &r)
}

/// [`encrypt`] with caller-chosen `r_i`. Exposed for known-answer tests.
pub fn encrypt_with_randomness(
    sk: &PartySecretKey,
    x: &ScalarVector,
    label: &[u8],
    r: &Scalar,
) -> Result<Ciphertext, TmcfeError> {
    let group = &sk.pp.group;
    if x.len() != sk.masked_bases.len() {
        return Err(TmcfeError::Arity(format!(
            "plaintext has {} entries, key expects {}",
            x.len(),
            sk.masked_bases.len()
        )));
    }
    if !x.is_reduced(group) {
        return Err(TmcfeError::Arity(
            "plaintext entries must be reduced mod p".into(),
        ));
    }
    let h = label_hash(label, group)?;
    let p = &group.order_p;
    let ct0 = x
        .iter()
        .zip(sk.u_row.iter())
        .zip(sk.masked_bases.iter())
        .map(|((xk, uk), base)| {
            let exponent = (xk + &h * uk) % p;
            group.mul(&group.pow_g(&exponent), &base.modpow(r, &group.modulus_q))
        })
        .collect();
    let alpha_product = sk
        .g_alpha
        .iter()
        .fold(BigUint::one(), |acc, e| group.mul(&acc, e));
    Ok(Ciphertext {
        client_index: sk.client_index,
        label: label.to_vec(),
        ct0,
        ct1: alpha_product.modpow(r, &group.modulus_q),
    })
}

/// Orders ciphertexts by client index. Clients whose weight block is all
/// zero may be absent (dropped parties).
pub(crate) fn index_ciphertexts<'a>(
    pp: &PublicParams,
    ciphertexts: &'a [Ciphertext],
    nonzero_client: impl Fn(u32) -> bool,
) -> Result<Vec<Option<&'a Ciphertext>>, TmcfeError> {
    let mut slots: Vec<Option<&Ciphertext>> = vec![None; pp.client_count_n];
    for ct in ciphertexts {
        pp.check_client(ct.client_index)?;
        let slot = &mut slots[ct.client_index as usize - 1];
        if slot.is_some() {
            return Err(TmcfeError::IncompleteInput(format!(
                "duplicate ciphertext for client {}",
                ct.client_index
            )));
        }
        if ct.ct0.len() != pp.vector_len(ct.client_index) {
            return Err(TmcfeError::Arity(format!(
                "ciphertext of client {} has {} entries",
                ct.client_index,
                ct.ct0.len()
            )));
        }
        *slot = Some(ct);
    }
    for i in 1..=pp.client_count_n as u32 {
        if slots[i as usize - 1].is_none() && nonzero_client(i) {
            return Err(TmcfeError::IncompleteInput(format!(
                "missing ciphertext for client {i}"
            )));
        }
    }
    Ok(slots)
}

pub fn share_decrypt(
    pp: &PublicParams,
    ciphertexts: &[Ciphertext],
    y: &ScalarVector,
    key: &FunctionalKeyShare,
) -> Result<PartialDecryption, TmcfeError> {
    if ciphertexts.iter().any(|ct| ct.label != key.label) {
        return Err(TmcfeError::LabelMismatch);
    }
    share_decrypt_unchecked(pp, ciphertexts, y, key)
}

/// [`share_decrypt`] without the label guard, so tests can observe what a
/// cross-label decryption would produce.
#[doc(hidden)]
pub fn share_decrypt_unchecked(
    pp: &PublicParams,
    ciphertexts: &[Ciphertext],
    y: &ScalarVector,
    key: &FunctionalKeyShare,
) -> Result<PartialDecryption, TmcfeError> {
    pp.check_weights(y)?;
    if &key.weights != y {
        return Err(TmcfeError::KeyMismatch);
    }
    if key.v1.len() != pp.client_count_n {
        return Err(TmcfeError::Arity(
            "key share has the wrong client count".into(),
        ));
    }
    let group = &pp.group;
    let slots = index_ciphertexts(pp, ciphertexts, |i| {
        pp.block(&y.entries, i).iter().any(|v| !v.is_zero())
    })?;
    let q = &group.modulus_q;
    let mut ct0_agg = BigUint::one();
    let mut ct1_shares = Vec::with_capacity(pp.client_count_n);
    for (idx, slot) in slots.iter().enumerate() {
        let i = idx as u32 + 1;
        match slot {
            Some(ct) => {
                for (c, w) in ct.ct0.iter().zip(pp.block(&y.entries, i)) {
                    if !w.is_zero() {
                        ct0_agg = ct0_agg * c.modpow(w, q) % q;
                    }
                }
                ct1_shares.push(ct.ct1.modpow(&key.v1[idx], q));
            }
            None => ct1_shares.push(BigUint::one()),
        }
    }
    Ok(PartialDecryption {
        share_index: key.share_index,
        ct0_agg,
        ct1_shares,
        ct2_share: group.pow_g(&key.v0),
        label: key.label.clone(),
    })
}

/// Verifies and selects the lowest `t` distinct share indices.
pub(crate) fn select_responders(
    t: usize,
    s: usize,
    indices: impl Iterator<Item = u32>,
) -> Result<Vec<(usize, u32)>, TmcfeError> {
    let mut seen: Vec<(usize, u32)> = Vec::new();
    for (pos, j) in indices.enumerate() {
        if j == 0 || j as usize > s {
            return Err(TmcfeError::IndexOutOfRange { index: j, max: s });
        }
        if seen.iter().any(|&(_, k)| k == j) {
            return Err(TmcfeError::DuplicateShareIndex(j));
        }
        seen.push((pos, j));
    }
    if seen.len() < t {
        return Err(TmcfeError::InsufficientShares {
            need: t,
            got: seen.len(),
        });
    }
    seen.sort_by_key(|&(_, j)| j);
    seen.truncate(t);
    Ok(seen)
}

/// Removes the key masks from one aggregated ciphertext:
/// `D = C / prod_j (ct2_j * prod_i ct1_j[i])^{L_j}`.
///
/// The inverse is folded into the exponent as `p - L_j`.
pub(crate) fn unmask(
    group: &GroupParams,
    ct0_agg: &Element,
    chosen: &[(&[Element], &Element)],
    coeffs: &[Scalar],
) -> Element {
    let q = &group.modulus_q;
    let p = &group.order_p;
    chosen
        .iter()
        .zip(coeffs)
        .fold(ct0_agg.clone(), |acc, ((ct1s, ct2), coeff)| {
            let combined = ct1s.iter().fold((*ct2).clone(), |m, c| m * c % q);
            let neg = (p - coeff) % p;
            acc * combined.modpow(&neg, q) % q
        })
}

pub fn combine_decrypt(
    pp: &PublicParams,
    partials: &[PartialDecryption],
    y: &ScalarVector,
    dlog_bound: u64,
) -> Result<i64, TmcfeError> {
    let solver = DlogSolver::for_bound(&pp.group, &pp.group.generator_g, dlog_bound);
    combine_decrypt_with(pp, partials, y, &solver, dlog_bound)
}

/// [`combine_decrypt`] with a caller-provided baby-step table.
pub fn combine_decrypt_with(
    pp: &PublicParams,
    partials: &[PartialDecryption],
    y: &ScalarVector,
    solver: &DlogSolver,
    dlog_bound: u64,
) -> Result<i64, TmcfeError> {
    pp.check_weights(y)?;
    let group = &pp.group;
    let chosen = select_responders(
        pp.threshold_t,
        pp.share_count_s,
        partials.iter().map(|p| p.share_index),
    )?;
    let first = &partials[0];
    if partials.iter().any(|p| p.label != first.label) {
        return Err(TmcfeError::LabelMismatch);
    }
    if partials.iter().any(|p| p.ct0_agg != first.ct0_agg) {
        return Err(TmcfeError::TamperDetected);
    }
    if partials
        .iter()
        .any(|p| p.ct1_shares.len() != pp.client_count_n)
    {
        return Err(TmcfeError::Arity(
            "partial has the wrong client count".into(),
        ));
    }
    let subset: Vec<u32> = chosen.iter().map(|&(_, j)| j).collect();
    let coeffs = lagrange_coeffs_at_zero(&subset, group)?;
    let parts: Vec<(&[Element], &Element)> = chosen
        .iter()
        .map(|&(pos, _)| {
            (
                partials[pos].ct1_shares.as_slice(),
                &partials[pos].ct2_share,
            )
        })
        .collect();
    let d = unmask(group, &first.ct0_agg, &parts, &coeffs);
    solve_result(solver, &d, dlog_bound)
}

pub(crate) fn solve_result(
    solver: &DlogSolver,
    d: &Element,
    bound: u64,
) -> Result<i64, TmcfeError> {
    solver.solve(d, bound).map_err(|e| match e {
        GroupError::DlogOutOfBound(b) => TmcfeError::ResultOutOfRange(b),
        other => TmcfeError::Group(other),
    })
}
