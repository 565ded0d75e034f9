use num_bigint::BigUint;
use num_traits::Zero;
use rand::RngCore;

use super::{random_below, GroupError, GroupParams, Scalar};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShamirShare {
    pub index: u32,
    pub value: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShamirShareSet {
    pub threshold_t: usize,
    pub share_count_s: usize,
    pub shares: Vec<ShamirShare>,
}

/// Horner evaluation of `coeffs[0] + coeffs[1] x + ...` modulo `p`.
pub fn eval_polynomial(coeffs: &[Scalar], x: u32, params: &GroupParams) -> Scalar {
    let x = BigUint::from(x);
    coeffs
        .iter()
        .rev()
        .fold(BigUint::zero(), |acc, c| (acc * &x + c) % &params.order_p)
}

/// Splits `secret` into `s` shares at `x = 1..=s` of a random degree `t-1`
/// polynomial.
pub fn shamir_share<R: RngCore + ?Sized>(
    secret: &Scalar,
    t: usize,
    s: usize,
    params: &GroupParams,
    rng: &mut R,
) -> Result<ShamirShareSet, GroupError> {
    check_share_config(t, s, params)?;
    let mut coeffs = Vec::with_capacity(t);
    coeffs.push(secret % &params.order_p);
    coeffs.extend((1..t).map(|_| random_below(rng, &params.order_p)));
    let shares = (1..=s as u32)
        .map(|index| ShamirShare {
            index,
            value: eval_polynomial(&coeffs, index, params),
        })
        .collect();
    Ok(ShamirShareSet {
        threshold_t: t,
        share_count_s: s,
        shares,
    })
}

pub(crate) fn check_share_config(
    t: usize,
    s: usize,
    params: &GroupParams,
) -> Result<(), GroupError> {
    if t > s {
        return Err(GroupError::ThresholdExceedsShares { t, s });
    }
    if t == 0 {
        return Err(GroupError::InvalidShareConfig(
            "threshold must be at least 1".into(),
        ));
    }
    if BigUint::from(s) >= params.order_p {
        return Err(GroupError::InvalidShareConfig(
            "share count must be below the group order".into(),
        ));
    }
    Ok(())
}

/// Lagrange basis coefficient for `j` over `subset`, evaluated at zero:
/// `prod_{j' != j} -j' / (j - j') mod p`.
pub fn lagrange_coeff_at_zero(
    subset: &[u32],
    j: u32,
    params: &GroupParams,
) -> Result<Scalar, GroupError> {
    if !subset.contains(&j) {
        return Err(GroupError::InvalidIndex(j));
    }
    let p = &params.order_p;
    let mut num = BigUint::from(1u32);
    let mut den = BigUint::from(1u32);
    for &other in subset {
        if other == j {
            continue;
        }
        if other == 0 {
            return Err(GroupError::InvalidIndex(other));
        }
        num = num * (p - (BigUint::from(other) % p)) % p;
        let diff = params.scalar_from_i128(i128::from(j) - i128::from(other));
        if diff.is_zero() {
            return Err(GroupError::InvalidShareConfig(format!(
                "duplicate index {other}"
            )));
        }
        den = den * diff % p;
    }
    let den_inv = den.modpow(&(p - 2u32), p);
    Ok(num * den_inv % p)
}

/// Coefficients for every member of `subset`, in subset order.
pub fn lagrange_coeffs_at_zero(
    subset: &[u32],
    params: &GroupParams,
) -> Result<Vec<Scalar>, GroupError> {
    subset
        .iter()
        .map(|&j| lagrange_coeff_at_zero(subset, j, params))
        .collect()
}

/// Recovers `f(0)` from at least `t` shares.
pub fn interpolate_at_zero(
    shares: &[ShamirShare],
    params: &GroupParams,
) -> Result<Scalar, GroupError> {
    let subset: Vec<u32> = shares.iter().map(|s| s.index).collect();
    let coeffs = lagrange_coeffs_at_zero(&subset, params)?;
    Ok(shares
        .iter()
        .zip(coeffs)
        .fold(BigUint::zero(), |acc, (share, c)| {
            (acc + &share.value * c) % &params.order_p
        }))
}
