use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::One;

use super::{Element, GroupError, GroupParams};

/// Largest baby-step table any solver will build.
pub const MAX_TABLE_SIZE: u64 = 1 << 22;

/// Reusable baby-step table for a fixed base.
///
/// Stores `base^j` for `j in [0, m)` keyed by the low 64 bits of the element.
/// Hits are confirmed by re-exponentiation, so key collisions cost time but
/// never correctness.
#[derive(Debug, Clone)]
pub struct DlogSolver {
    params: GroupParams,
    base: Element,
    step: u64,
    table: HashMap<u64, u64>,
    giant: Element,
    giant_inv: Element,
}

fn key(x: &BigUint) -> u64 {
    x.iter_u64_digits().next().unwrap_or(0)
}

impl DlogSolver {
    /// Builds a table with `table_size` baby steps (clamped to
    /// `[1, MAX_TABLE_SIZE]` and to the group order).
    pub fn new(params: &GroupParams, base: &Element, table_size: u64) -> Self {
        let order_cap = if params.order_p.bits() < 64 {
            params.order_p.iter_u64_digits().next().unwrap_or(1)
        } else {
            u64::MAX
        };
        let step = table_size.clamp(1, MAX_TABLE_SIZE).min(order_cap);
        let q = &params.modulus_q;
        let mut table = HashMap::with_capacity(step as usize);
        let mut acc = BigUint::one();
        for j in 0..step {
            table.entry(key(&acc)).or_insert(j);
            acc = (acc * base) % q;
        }
        let giant = acc;
        let giant_inv = params.inv(&giant);
        Self {
            params: params.clone(),
            base: base.clone(),
            step,
            table,
            giant,
            giant_inv,
        }
    }

    /// Table sized for a single search over `[-bound, bound]`.
    pub fn for_bound(params: &GroupParams, base: &Element, bound: u64) -> Self {
        let width = 2 * u128::from(bound) + 1;
        let size = (width as f64).sqrt().ceil() as u64;
        Self::new(params, base, size)
    }

    pub fn table_size(&self) -> u64 {
        self.step
    }

    /// Finds `v` in `[-bound, bound]` with `base^v = target`.
    ///
    /// Giant steps are taken outward from zero in both directions, so small
    /// magnitudes resolve first; the result is the unique solution in the
    /// range regardless of search order.
    pub fn solve(&self, target: &Element, bound: u64) -> Result<i64, GroupError> {
        let p = &self.params.order_p;
        if BigUint::from(bound) * 2u32 >= *p || bound > i64::MAX as u64 / 2 {
            return Err(GroupError::BoundTooLarge(bound));
        }
        let q = &self.params.modulus_q;
        let m = self.step as i128;
        let b = bound as i128;
        // window k covers v in [k m, k m + m)
        let k_max = b.div_euclid(m);
        let k_min = (-b).div_euclid(m);
        if let Some(v) = self.check(target, 0, b) {
            return Ok(v);
        }
        let mut up = target.clone(); // target * g^{-k m}
        let mut down = target.clone(); // target * g^{k m}
        for k in 1.. {
            let mut live = false;
            if k <= k_max {
                live = true;
                up = (up * &self.giant_inv) % q;
                if let Some(v) = self.check(&up, k, b) {
                    return Ok(v);
                }
            }
            if -k >= k_min {
                live = true;
                down = (down * &self.giant) % q;
                if let Some(v) = self.check(&down, -k, b) {
                    return Ok(v);
                }
            }
            if !live {
                break;
            }
        }
        Err(GroupError::DlogOutOfBound(bound))
    }

    fn check(&self, shifted: &Element, k: i128, bound: i128) -> Option<i64> {
        let j = *self.table.get(&key(shifted))?;
        let v = k * self.step as i128 + j as i128;
        if v.abs() > bound {
            return None;
        }
        let expect = self.base.modpow(
            &self.params.scalar_from_i128(j as i128),
            &self.params.modulus_q,
        );
        (expect == *shifted).then_some(v as i64)
    }
}

/// Bounded discrete log of `target` to `base`, searching `[-bound, bound]`.
pub fn bsgs_dlog(
    target: &Element,
    base: &Element,
    bound: u64,
    params: &GroupParams,
) -> Result<i64, GroupError> {
    DlogSolver::for_bound(params, base, bound).solve(target, bound)
}
