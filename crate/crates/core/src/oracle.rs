//! Exact click statistics.
//!
//! After all `M` excitations have decayed, a click sequence `m` has
//! probability `|Per(U_T)|² / M!` and an outcome `n` (clicks per detector)
//! has probability `|Per(U_T)|² / Π n_i!`, where `U_T` takes the first `M`
//! columns of `U` and repeats row `i` `n_i` times. These are Fock-state boson
//! sampling probabilities.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{param_err, Error, Result};
use crate::state::SectorState;
use crate::trajectory::{ClickSequence, OutcomeCounts};
use crate::unitary::UnitaryMatrix;
use crate::C64;

/// Largest matrix accepted by [`permanent_naive`].
pub const NAIVE_MAX_DIM: usize = 10;
/// Largest matrix accepted by [`permanent_ryser`].
pub const RYSER_MAX_DIM: usize = 30;
/// From this size on the Ryser sum is accumulated with compensation.
pub const COMPENSATED_FROM_DIM: usize = 16;
/// Upper limit on the number of outcomes [`enumerate_outcomes`] will list.
pub const MAX_OUTCOMES: u128 = 1_000_000;

fn check_square(a: &DMatrix<C64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return param_err(format!(
            "permanent needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        ));
    }
    Ok(a.nrows())
}

/// Permanent by direct expansion over all permutations.
pub fn permanent_naive(a: &DMatrix<C64>) -> Result<C64> {
    let n = check_square(a)?;
    if n > NAIVE_MAX_DIM {
        return Err(Error::SizeLimit(format!(
            "naive permanent limited to {NAIVE_MAX_DIM}x{NAIVE_MAX_DIM}, got {n}"
        )));
    }
    fn expand(a: &DMatrix<C64>, row: usize, used: u32, partial: C64) -> C64 {
        let n = a.nrows();
        if row == n {
            return partial;
        }
        let mut acc = C64::new(0.0, 0.0);
        for col in 0..n {
            if used & (1 << col) == 0 {
                acc += expand(a, row + 1, used | (1 << col), partial * a[(row, col)]);
            }
        }
        acc
    }
    Ok(expand(a, 0, 0, C64::new(1.0, 0.0)))
}

/// Kahan-compensated complex accumulator.
#[derive(Default)]
struct CompensatedSum {
    sum: C64,
    carry: C64,
}

impl CompensatedSum {
    fn add(&mut self, x: C64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Ryser's inclusion–exclusion formula,
/// `Per(A) = (-1)^n Σ_{S ⊆ cols} (-1)^{|S|} Π_i Σ_{j∈S} A_ij`,
/// visiting subsets in Gray-code order so each step adds or removes a single
/// column from the running row sums.
pub fn permanent_ryser(a: &DMatrix<C64>) -> Result<C64> {
    let n = check_square(a)?;
    if n > RYSER_MAX_DIM {
        return Err(Error::SizeLimit(format!(
            "Ryser permanent limited to {RYSER_MAX_DIM}x{RYSER_MAX_DIM}, got {n}"
        )));
    }
    if n == 0 {
        return Ok(C64::new(1.0, 0.0));
    }
    let mut row_sums = vec![C64::new(0.0, 0.0); n];
    let mut plain = C64::new(0.0, 0.0);
    let mut compensated = CompensatedSum::default();
    let use_compensation = n >= COMPENSATED_FROM_DIM;
    let mut gray: u32 = 0;
    for k in 1u32..(1u32 << n) {
        let col = k.trailing_zeros() as usize;
        gray ^= 1 << col;
        if gray & (1 << col) != 0 {
            for (i, s) in row_sums.iter_mut().enumerate() {
                *s += a[(i, col)];
            }
        } else {
            for (i, s) in row_sums.iter_mut().enumerate() {
                *s -= a[(i, col)];
            }
        }
        let mut prod = row_sums[0];
        for s in &row_sums[1..] {
            prod *= s;
        }
        let term = if gray.count_ones() % 2 == 1 {
            -prod
        } else {
            prod
        };
        if use_compensation {
            compensated.add(term);
        } else {
            plain += term;
        }
    }
    let total = if use_compensation {
        compensated.sum
    } else {
        plain
    };
    Ok(if n % 2 == 1 { -total } else { total })
}

/// `U_T`: rows of `U` listed with multiplicity in ascending detector order,
/// restricted to the first `M` columns (the initially excited emitters).
#[derive(Debug, Clone)]
pub struct RepeatedRowMatrix {
    pub row_multiplicities: Vec<usize>,
    pub realized: DMatrix<C64>,
}

/// Row selection for [`build_repeated_matrix`].
#[derive(Debug, Clone, Copy)]
pub enum RowSelection<'a> {
    Counts(&'a OutcomeCounts),
    Sequence(&'a ClickSequence),
}

pub fn build_repeated_matrix(
    u: &UnitaryMatrix,
    m: usize,
    rows: RowSelection<'_>,
) -> Result<RepeatedRowMatrix> {
    let n = u.dim();
    if m > n {
        return param_err(format!("{m} excitations exceed {n} modes"));
    }
    let counts = match rows {
        RowSelection::Counts(c) => {
            if c.len() != n {
                return param_err(format!(
                    "outcome has {} detectors, unitary has {n}",
                    c.len()
                ));
            }
            c.clone()
        }
        RowSelection::Sequence(s) => s.to_counts(n)?,
    };
    if counts.total() != m {
        return param_err(format!(
            "outcome holds {} clicks, expected {m}",
            counts.total()
        ));
    }
    let mut realized = DMatrix::<C64>::zeros(m, m);
    let mut r = 0;
    for (detector, &times) in counts.as_slice().iter().enumerate() {
        for _ in 0..times {
            for c in 0..m {
                realized[(r, c)] = u.get(detector, c);
            }
            r += 1;
        }
    }
    Ok(RepeatedRowMatrix {
        row_multiplicities: counts.into_vec(),
        realized,
    })
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// Probability of the full click sequence, `|Per(U_T)|² / M!`.
pub fn sequence_probability(u: &UnitaryMatrix, clicks: &ClickSequence, m: usize) -> Result<f64> {
    if clicks.len() != m {
        return param_err(format!(
            "sequence has {} clicks, expected {m}",
            clicks.len()
        ));
    }
    let t = build_repeated_matrix(u, m, RowSelection::Sequence(clicks))?;
    Ok(permanent_ryser(&t.realized)?.norm_sqr() / factorial(m))
}

/// Probability of an outcome, `|Per(U_T)|² / Π n_i!`.
pub fn outcome_probability(u: &UnitaryMatrix, counts: &OutcomeCounts, m: usize) -> Result<f64> {
    let t = build_repeated_matrix(u, m, RowSelection::Counts(counts))?;
    let denom: f64 = counts.as_slice().iter().map(|&c| factorial(c)).product();
    Ok(permanent_ryser(&t.realized)?.norm_sqr() / denom)
}

/// `P(next | prior)`: the click weight of `next` on the normalized state
/// reached after `prior`, divided by the remaining excitation number.
pub fn conditional_click_probability(
    u: &UnitaryMatrix,
    prior: &ClickSequence,
    next: usize,
    m: usize,
    n: usize,
) -> Result<f64> {
    if u.dim() != n {
        return param_err(format!("unitary dim {} does not match N={n}", u.dim()));
    }
    if prior.len() >= m {
        return param_err(format!(
            "all {m} excitations already decayed after {} clicks",
            prior.len()
        ));
    }
    if next >= n {
        return param_err(format!("detector {next} out of range for N={n}"));
    }
    let mut state = SectorState::initial(n, m)?;
    for &d in prior.as_slice() {
        state = state.apply_jump(u, d)?;
    }
    let w = state.jump_weights(u)?;
    Ok(w[next] / (m - prior.len()) as f64)
}

/// `Π_k P(m_{k+1} | m_1..m_k)`, stopping at zero once a prefix is impossible.
pub fn chained_sequence_probability(
    u: &UnitaryMatrix,
    clicks: &ClickSequence,
    m: usize,
) -> Result<f64> {
    if clicks.len() != m {
        return param_err(format!(
            "sequence has {} clicks, expected {m}",
            clicks.len()
        ));
    }
    let n = u.dim();
    let mut state = SectorState::initial(n, m)?;
    let mut p = 1.0;
    for (k, &d) in clicks.as_slice().iter().enumerate() {
        if d >= n {
            return param_err(format!("detector {d} out of range for N={n}"));
        }
        let w = state.jump_weights(u)?;
        p *= w[d] / (m - k) as f64;
        if p == 0.0 || k + 1 == m {
            break;
        }
        state = state.apply_jump(u, d)?;
    }
    Ok(p)
}

fn multiset_count(n: usize, m: usize) -> u128 {
    // C(n + m - 1, m), saturating
    if n == 0 {
        return u128::from(m == 0);
    }
    let mut c: u128 = 1;
    for i in 0..m as u128 {
        c = c.saturating_mul(n as u128 - 1 + i + 1) / (i + 1);
    }
    c
}

/// Every way to distribute `m` clicks over `n` detectors, ordered
/// lexicographically from `(m, 0, …, 0)` down to `(0, …, 0, m)`.
pub fn enumerate_outcomes(n: usize, m: usize) -> Result<Vec<OutcomeCounts>> {
    if n == 0 {
        return param_err("need at least one detector");
    }
    let total = multiset_count(n, m);
    if total > MAX_OUTCOMES {
        return Err(Error::SizeLimit(format!(
            "{total} outcomes for N={n}, M={m} exceeds {MAX_OUTCOMES}"
        )));
    }
    fn fill(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<OutcomeCounts>) {
        let n = cur.len();
        if pos == n - 1 {
            cur[pos] = left;
            out.push(OutcomeCounts::from(cur.clone()));
            return;
        }
        for c in (0..=left).rev() {
            cur[pos] = c;
            fill(pos + 1, left - c, cur, out);
        }
    }
    let mut out = Vec::with_capacity(total as usize);
    fill(0, m, &mut vec![0; n], &mut out);
    Ok(out)
}

/// All outcomes with their exact probabilities, in enumeration order.
pub fn exact_distribution(u: &UnitaryMatrix, m: usize) -> Result<Vec<(OutcomeCounts, f64)>> {
    let outcomes = enumerate_outcomes(u.dim(), m)?;
    outcomes
        .into_par_iter()
        .map(|o| {
            let p = outcome_probability(u, &o, m)?;
            Ok((o, p))
        })
        .collect()
}
