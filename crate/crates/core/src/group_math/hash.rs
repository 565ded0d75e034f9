use num_bigint::BigUint;
use sha2::{Digest, Sha256};

use super::{GroupError, GroupParams, Scalar};

const DOMAIN: &[u8] = b"tapfed/hash-to-scalar/v1";

/// Hashes a round label to a scalar in `[1, p-1]`.
///
/// SHA-256 in counter mode is expanded to `bits(p) + 128` bits and reduced
/// modulo `p - 1`, which keeps the bias negligible and avoids zero.
pub fn hash_to_scalar(label: &[u8], params: &GroupParams) -> Result<Scalar, GroupError> {
    if label.is_empty() {
        return Err(GroupError::InvalidLabel);
    }
    let wanted = (params.order_p.bits() as usize + 128).div_ceil(8);
    let mut wide = Vec::with_capacity(wanted + 32);
    let mut counter = 0u32;
    while wide.len() < wanted {
        let mut hasher = Sha256::new();
        hasher.update(DOMAIN);
        hasher.update(counter.to_be_bytes());
        hasher.update((label.len() as u64).to_be_bytes());
        hasher.update(label);
        wide.extend_from_slice(&hasher.finalize());
        counter += 1;
    }
    wide.truncate(wanted);
    let reduced = BigUint::from_bytes_be(&wide) % (&params.order_p - 1u32);
    Ok(reduced + 1u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_math::gen_group;

    #[test]
    fn deterministic_and_separating() {
        let params = gen_group(32, Some(1)).unwrap();
        let a = hash_to_scalar(b"round-1", &params).unwrap();
        assert_eq!(a, hash_to_scalar(b"round-1", &params).unwrap());
        assert_ne!(a, hash_to_scalar(b"round-2", &params).unwrap());
    }

    #[test]
    fn empty_label_rejected() {
        let params = gen_group(32, Some(1)).unwrap();
        assert_eq!(hash_to_scalar(b"", &params), Err(GroupError::InvalidLabel));
    }

    #[test]
    fn outputs_stay_in_range() {
        let params = gen_group(32, Some(2)).unwrap();
        for i in 0..1000u32 {
            let label = format!("label-{i}-{}", i.wrapping_mul(2654435761));
            let h = hash_to_scalar(label.as_bytes(), &params).unwrap();
            assert!(h >= BigUint::from(1u32) && h < params.order_p);
        }
    }

    #[test]
    fn golden_value_on_default_group() {
        let params = GroupParams::default_256();
        let h = hash_to_scalar(b"round-1", &params).unwrap();
        assert_eq!(h.to_str_radix(16), GOLDEN_ROUND_1);
    }

    const GOLDEN_ROUND_1: &str = "772c41a21e478df39ea7e570a1df0d8dbb8accde05ed3d2dc326e5490735707f";
}
