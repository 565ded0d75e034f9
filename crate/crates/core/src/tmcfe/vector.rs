//! Coordinate-wise batching of the scheme for model vectors.
//!
//! Every client encrypts a length-`L` vector in one [`Ciphertext`] (one
//! shared `ct1`). Coordinate `c` of the aggregate is the inner product with
//! `y(c)`, the weight vector that places party weight `w_i` at position
//! `(i, c)` and zero elsewhere. A [`VectorKeyShare`] stores the key shares
//! for all `L` such `y(c)` without materialising the sparse vectors.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;

use super::{
    index_ciphertexts, label_hash, random_polynomial, select_responders, solve_result, unmask,
    Ciphertext, FunctionalKeyShare, MasterSecretKey, PartialDecryption, PublicParams, TmcfeError,
};
use crate::group_math::{
    eval_polynomial, lagrange_coeffs_at_zero, DlogSolver, Element, Scalar, ScalarVector,
};

/// Share `j` of the `L` per-coordinate functional keys for party weights
/// `w` under one label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorKeyShare {
    pub share_index: u32,
    pub party_weights: ScalarVector,
    pub label: Vec<u8>,
    /// `f0_c(j)` per coordinate
    pub v0: Vec<Scalar>,
    /// `f_{c,i}(j)`, indexed `[c][i]`
    pub v1: Vec<Vec<Scalar>>,
}

impl VectorKeyShare {
    pub fn coordinate_count(&self) -> usize {
        self.v0.len()
    }

    /// The equivalent dense [`FunctionalKeyShare`] for coordinate `c`.
    pub fn coordinate(&self, pp: &PublicParams, c: usize) -> FunctionalKeyShare {
        FunctionalKeyShare {
            share_index: self.share_index,
            v0: self.v0[c].clone(),
            v1: self.v1[c].clone(),
            weights: coordinate_weights(pp, &self.party_weights, c),
            label: self.label.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinatePartial {
    pub ct0_agg: Element,
    pub ct1_shares: Vec<Element>,
    pub ct2_share: Element,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorPartialDecryption {
    pub share_index: u32,
    pub label: Vec<u8>,
    pub coords: Vec<CoordinatePartial>,
}

impl VectorPartialDecryption {
    pub fn coordinate(&self, c: usize) -> PartialDecryption {
        let part = &self.coords[c];
        PartialDecryption {
            share_index: self.share_index,
            ct0_agg: part.ct0_agg.clone(),
            ct1_shares: part.ct1_shares.clone(),
            ct2_share: part.ct2_share.clone(),
            label: self.label.clone(),
        }
    }
}

/// Dense `y(c)`: weight `w_i` at offset `(i, c)`, zero elsewhere.
pub fn coordinate_weights(
    pp: &PublicParams,
    party_weights: &ScalarVector,
    c: usize,
) -> ScalarVector {
    let mut y = ScalarVector::zeros(pp.total_len());
    for (idx, w) in party_weights.iter().enumerate() {
        let offset = pp.offset(idx as u32 + 1);
        y.entries[offset + c] = w.clone();
    }
    y
}

fn uniform_length(pp: &PublicParams) -> Result<usize, TmcfeError> {
    let len = pp.vector_lengths[0];
    if pp.vector_lengths.iter().any(|&l| l != len) {
        return Err(TmcfeError::Arity(
            "coordinate-wise keys need equal vector lengths".into(),
        ));
    }
    Ok(len)
}

fn check_party_weights(pp: &PublicParams, w: &ScalarVector) -> Result<(), TmcfeError> {
    if w.len() != pp.client_count_n {
        return Err(TmcfeError::Arity(format!(
            "{} party weights for {} clients",
            w.len(),
            pp.client_count_n
        )));
    }
    if !w.is_reduced(&pp.group) {
        return Err(TmcfeError::Arity(
            "party weights must be reduced mod p".into(),
        ));
    }
    Ok(())
}

/// Samples every coordinate's polynomials once and returns all `s` shares.
pub fn dk_generate_vector<R: RngCore + ?Sized>(
    pp: &PublicParams,
    msk: &MasterSecretKey,
    party_weights: &ScalarVector,
    label: &[u8],
    rng: &mut R,
) -> Result<Vec<VectorKeyShare>, TmcfeError> {
    let len = uniform_length(pp)?;
    check_party_weights(pp, party_weights)?;
    let group = &pp.group;
    let p = &group.order_p;
    let h = label_hash(label, group)?;
    let mut f0 = Vec::with_capacity(len);
    let mut fi = Vec::with_capacity(len);
    for c in 0..len {
        let mut u_dot = BigUint::zero();
        let mut polys = Vec::with_capacity(pp.client_count_n);
        for (row, w) in party_weights.iter().enumerate() {
            u_dot = (u_dot + w * &msk.u_matrix[row].entries[c]) % p;
            let b0 = w * &msk.w_matrix[row].entries[c] % p;
            polys.push(b0);
        }
        f0.push(random_polynomial(
            &h * u_dot % p,
            pp.threshold_t,
            group,
            rng,
        ));
        fi.push(
            polys
                .into_iter()
                .map(|b0| random_polynomial(b0, pp.threshold_t, group, rng))
                .collect::<Vec<_>>(),
        );
    }
    Ok((1..=pp.share_count_s as u32)
        .map(|j| VectorKeyShare {
            share_index: j,
            party_weights: party_weights.clone(),
            label: label.to_vec(),
            v0: f0.iter().map(|f| eval_polynomial(f, j, group)).collect(),
            v1: fi
                .iter()
                .map(|per_client| {
                    per_client
                        .iter()
                        .map(|f| eval_polynomial(f, j, group))
                        .collect()
                })
                .collect(),
        })
        .collect())
}

pub fn share_decrypt_vector(
    pp: &PublicParams,
    ciphertexts: &[Ciphertext],
    party_weights: &ScalarVector,
    key: &VectorKeyShare,
) -> Result<VectorPartialDecryption, TmcfeError> {
    if ciphertexts.iter().any(|ct| ct.label != key.label) {
        return Err(TmcfeError::LabelMismatch);
    }
    let len = uniform_length(pp)?;
    check_party_weights(pp, party_weights)?;
    if &key.party_weights != party_weights {
        return Err(TmcfeError::KeyMismatch);
    }
    if key.v0.len() != len || key.v1.len() != len {
        return Err(TmcfeError::Arity(
            "key share has the wrong coordinate count".into(),
        ));
    }
    let group = &pp.group;
    let q = &group.modulus_q;
    let slots = index_ciphertexts(pp, ciphertexts, |i| {
        !party_weights.entries[i as usize - 1].is_zero()
    })?;
    let coords = (0..len)
        .map(|c| {
            let mut ct0_agg = BigUint::one();
            let mut ct1_shares = Vec::with_capacity(pp.client_count_n);
            for (idx, slot) in slots.iter().enumerate() {
                match slot {
                    Some(ct) => {
                        let w = &party_weights.entries[idx];
                        if !w.is_zero() {
                            ct0_agg = ct0_agg * ct.ct0[c].modpow(w, q) % q;
                        }
                        ct1_shares.push(ct.ct1.modpow(&key.v1[c][idx], q));
                    }
                    None => ct1_shares.push(BigUint::one()),
                }
            }
            CoordinatePartial {
                ct0_agg,
                ct1_shares,
                ct2_share: group.pow_g(&key.v0[c]),
            }
        })
        .collect();
    Ok(VectorPartialDecryption {
        share_index: key.share_index,
        label: key.label.clone(),
        coords,
    })
}

/// Recombines coordinate-wise partials; returns one signed aggregate per
/// coordinate. The weights are not needed: the key shares already carry
/// them, which is what lets a party recover without knowing who dropped.
pub fn combine_decrypt_vector(
    pp: &PublicParams,
    partials: &[VectorPartialDecryption],
    solver: &DlogSolver,
    dlog_bound: u64,
) -> Result<Vec<i64>, TmcfeError> {
    let len = uniform_length(pp)?;
    let chosen = select_responders(
        pp.threshold_t,
        pp.share_count_s,
        partials.iter().map(|p| p.share_index),
    )?;
    let first = &partials[0];
    if partials.iter().any(|p| p.label != first.label) {
        return Err(TmcfeError::LabelMismatch);
    }
    if partials.iter().any(|p| {
        p.coords.len() != len
            || p.coords
                .iter()
                .any(|c| c.ct1_shares.len() != pp.client_count_n)
    }) {
        return Err(TmcfeError::Arity("partial has the wrong shape".into()));
    }
    for c in 0..len {
        if partials
            .iter()
            .any(|p| p.coords[c].ct0_agg != first.coords[c].ct0_agg)
        {
            return Err(TmcfeError::TamperDetected);
        }
    }
    let subset: Vec<u32> = chosen.iter().map(|&(_, j)| j).collect();
    let coeffs = lagrange_coeffs_at_zero(&subset, &pp.group)?;
    (0..len)
        .map(|c| {
            let parts: Vec<(&[Element], &Element)> = chosen
                .iter()
                .map(|&(pos, _)| {
                    let part = &partials[pos].coords[c];
                    (part.ct1_shares.as_slice(), &part.ct2_share)
                })
                .collect();
            let d = unmask(&pp.group, &first.coords[c].ct0_agg, &parts, &coeffs);
            solve_result(solver, &d, dlog_bound)
        })
        .collect()
}
