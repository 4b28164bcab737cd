//! Fixed-weight bitstring bases in colexicographic order.
//!
//! Site `j` of the chain is bit `j` of a mask; a set bit is an excited
//! emitter. Masks with exactly `weight` set bits are ordered by their integer
//! value, which coincides with colexicographic order of the set-bit positions.
//! The rank of a mask with set bits `p_1 < p_2 < … < p_e` is `Σ_t C(p_t, t)`.

/// Largest supported chain length.
pub const MAX_SITES: usize = 32;

const TABLE: usize = MAX_SITES + 1;

const fn binomial_table() -> [[u64; TABLE]; TABLE] {
    let mut t = [[0u64; TABLE]; TABLE];
    let mut n = 0;
    while n < TABLE {
        t[n][0] = 1;
        let mut k = 1;
        while k <= n {
            t[n][k] = t[n - 1][k - 1] + if k < n { t[n - 1][k] } else { 0 };
            k += 1;
        }
        n += 1;
    }
    t
}

static BINOMIAL: [[u64; TABLE]; TABLE] = binomial_table();

/// `C(n, k)`, zero when `k > n`. Panics if `n > MAX_SITES`.
#[inline]
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        0
    } else {
        BINOMIAL[n][k] as usize
    }
}

/// Colex rank of `mask` among masks of the same weight.
#[inline]
pub fn rank(mut mask: u64) -> usize {
    let mut r = 0usize;
    let mut t = 1usize;
    while mask != 0 {
        let p = mask.trailing_zeros() as usize;
        r += BINOMIAL[p][t] as usize;
        t += 1;
        mask &= mask - 1;
    }
    r
}

/// Inverse of [`rank`] for `weight` set bits among `n_bits`.
pub fn unrank(mut r: usize, n_bits: usize, weight: usize) -> u64 {
    let mut mask = 0u64;
    let mut p = n_bits;
    for t in (1..=weight).rev() {
        // largest p with C(p, t) <= r
        p -= 1;
        while binomial(p, t) > r {
            p -= 1;
        }
        mask |= 1 << p;
        r -= binomial(p, t);
    }
    mask
}

/// All masks of `n_bits` bits with exactly `weight` set, in rank order.
pub fn masks(n_bits: usize, weight: usize) -> Vec<u64> {
    let len = binomial(n_bits, weight);
    let mut out = Vec::with_capacity(len);
    if weight == 0 {
        out.push(0);
        return out;
    }
    if weight > n_bits {
        return out;
    }
    let limit = 1u64 << n_bits;
    let mut m: u64 = (1u64 << weight) - 1;
    while m < limit {
        out.push(m);
        // Gosper's hack: next integer with the same popcount
        let c = m & m.wrapping_neg();
        let r = m + c;
        m = (((r ^ m) >> 2) / c) | r;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(7, 4), 35);
        assert_eq!(binomial(16, 8), 12870);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(0, 0), 1);
        assert_eq!(binomial(32, 16), 601_080_390);
    }

    #[test]
    fn masks_are_ranked_in_order() {
        for n in 0..=10 {
            for w in 0..=n {
                let ms = masks(n, w);
                assert_eq!(ms.len(), binomial(n, w));
                for (i, &m) in ms.iter().enumerate() {
                    assert_eq!(m.count_ones() as usize, w);
                    assert_eq!(rank(m), i);
                    assert_eq!(unrank(i, n, w), m);
                }
            }
        }
    }

    #[test]
    fn first_mask_is_low_block() {
        assert_eq!(masks(7, 4)[0], 0b1111);
    }
}
