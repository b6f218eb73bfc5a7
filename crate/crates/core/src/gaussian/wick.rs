//! Wick (Isserlis) pairing for zero-mean bosonic Gaussian states.
//!
//! A product of quadratic forms is expanded into ordered strings of ladder
//! operators; the expectation of each string is the sum over perfect
//! matchings of products of ordered two-point contractions `⟨x_p x_q⟩`
//! (`p < q`). Matchings that hit a vanishing contraction are pruned.

use num_complex::Complex64;

use super::{QuadraticForm, SecondMoments};
use crate::error::{Error, Result};

/// Default maximum order accepted by [`wick_moment`].
pub const DEFAULT_MAX_ORDER: usize = 6;

/// Ordered contraction table indexed by ladder codes `2·mode + dagger`.
pub(crate) struct Contractions {
    table: [[Complex64; 8]; 8],
}

impl Contractions {
    pub(crate) fn new(state: &SecondMoments) -> Self {
        let mut table = [[Complex64::new(0.0, 0.0); 8]; 8];
        for i in 0..4 {
            for j in 0..4 {
                let n_ij = state.normal[(i, j)];
                let n_ji = state.normal[(j, i)];
                let m_ij = state.anomalous[(i, j)];
                let delta = if i == j { 1.0 } else { 0.0 };
                // ⟨a_i† a_j⟩, ⟨a_i a_j⟩, ⟨a_i† a_j†⟩, ⟨a_i a_j†⟩
                table[2 * i + 1][2 * j] = n_ij;
                table[2 * i][2 * j] = m_ij;
                table[2 * i + 1][2 * j + 1] = m_ij.conj();
                table[2 * i][2 * j + 1] = n_ji + delta;
            }
        }
        Self { table }
    }

    /// Sum over perfect matchings of the operators still flagged in `free`.
    fn matchings(&self, ops: &[u8], free: u64) -> Complex64 {
        if free == 0 {
            return Complex64::new(1.0, 0.0);
        }
        let first = free.trailing_zeros() as usize;
        let rest = free & !(1u64 << first);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut cand = rest;
        while cand != 0 {
            let j = cand.trailing_zeros() as usize;
            cand &= cand - 1;
            let c = self.table[ops[first] as usize][ops[j] as usize];
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            acc += c * self.matchings(ops, rest & !(1u64 << j));
        }
        acc
    }

    pub(crate) fn string_expectation(&self, ops: &[u8]) -> Complex64 {
        if ops.len() % 2 == 1 {
            return Complex64::new(0.0, 0.0);
        }
        debug_assert!(ops.len() <= 64);
        let free = if ops.len() == 64 {
            u64::MAX
        } else {
            (1u64 << ops.len()) - 1
        };
        self.matchings(ops, free)
    }
}

fn expand(
    ctr: &Contractions,
    forms: &[&QuadraticForm],
    depth: usize,
    ops: &mut Vec<u8>,
    weight: Complex64,
) -> Complex64 {
    if depth == forms.len() {
        return weight * ctr.string_expectation(ops);
    }
    let form = forms[depth];
    let mut acc = Complex64::new(0.0, 0.0);
    if form.offset != 0.0 {
        acc += expand(ctr, forms, depth + 1, ops, weight * form.offset);
    }
    for t in &form.terms {
        ops.push(t.left.code() as u8);
        ops.push(t.right.code() as u8);
        acc += expand(ctr, forms, depth + 1, ops, weight * t.weight);
        ops.pop();
        ops.pop();
    }
    acc
}

/// `⟨F_1 F_2 ⋯ F_k⟩` for the operator product in the given order.
pub fn wick_expectation(state: &SecondMoments, forms: &[&QuadraticForm]) -> Complex64 {
    let ctr = Contractions::new(state);
    wick_expectation_with(&ctr, forms)
}

pub(crate) fn wick_expectation_with(ctr: &Contractions, forms: &[&QuadraticForm]) -> Complex64 {
    let mut ops = Vec::with_capacity(2 * forms.len());
    expand(ctr, forms, 0, &mut ops, Complex64::new(1.0, 0.0))
}

/// Raw moment `⟨F^k⟩` of a Hermitian form, for `1 <= k <= DEFAULT_MAX_ORDER`.
pub fn wick_moment(state: &SecondMoments, form: &QuadraticForm, k: usize) -> Result<f64> {
    wick_moment_with_limit(state, form, k, DEFAULT_MAX_ORDER)
}

pub fn wick_moment_with_limit(state: &SecondMoments, form: &QuadraticForm, k: usize, max_order: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("moment order must be >= 1".into()));
    }
    if k > max_order {
        return Err(Error::UnsupportedOrder {
            order: k,
            max: max_order,
        });
    }
    let forms = vec![form; k];
    Ok(wick_expectation(state, &forms).re)
}
