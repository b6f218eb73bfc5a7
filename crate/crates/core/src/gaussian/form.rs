use std::collections::BTreeMap;

use num_complex::Complex64;

use super::Mode;
use crate::geometry::StokesDirection;

/// A creation (`dagger`) or annihilation operator on one mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ladder {
    pub mode: Mode,
    pub dagger: bool,
}

impl Ladder {
    pub fn create(mode: Mode) -> Self {
        Self { mode, dagger: true }
    }

    pub fn annihilate(mode: Mode) -> Self {
        Self { mode, dagger: false }
    }

    pub fn adjoint(self) -> Self {
        Self {
            mode: self.mode,
            dagger: !self.dagger,
        }
    }

    /// Dense code in `0..8`: `2·mode + dagger`.
    pub(crate) fn code(self) -> usize {
        2 * self.mode.index() + self.dagger as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadTerm {
    pub weight: Complex64,
    pub left: Ladder,
    pub right: Ladder,
}

/// `offset + Σ weight · left · right`, an operator quadratic in mode operators.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadraticForm {
    pub terms: Vec<QuadTerm>,
    pub offset: f64,
}

impl QuadraticForm {
    pub fn push(&mut self, weight: Complex64, left: Ladder, right: Ladder) {
        if weight.norm() > 1e-15 {
            self.terms.push(QuadTerm { weight, left, right });
        }
    }

    /// True when the term list is closed under Hermitian conjugation.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let mut map: BTreeMap<(Ladder, Ladder), Complex64> = BTreeMap::new();
        for t in &self.terms {
            *map.entry((t.left, t.right)).or_default() += t.weight;
        }
        map.iter().all(|(&(l, r), &w)| {
            let partner = map.get(&(r.adjoint(), l.adjoint())).copied().unwrap_or_default();
            (partner - w.conj()).norm() <= tol
        })
    }
}

/// Sign convention for S3. The standard one is
/// `S3 = Σ_j i(b_j†a_j − a_j†b_j)`; flipping it exists only so the validation
/// suites can demonstrate that they detect a convention mismatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesConvention {
    pub s3_sign: f64,
}

impl Default for StokesConvention {
    fn default() -> Self {
        Self { s3_sign: 1.0 }
    }
}

impl StokesConvention {
    pub fn flipped() -> Self {
        Self { s3_sign: -1.0 }
    }
}

const FREQUENCY_PAIRS: [(Mode, Mode); 2] = [(Mode::A1, Mode::B1), (Mode::A2, Mode::B2)];

/// Form of `n1·S1 + n2·S2 + n3·S3` for an explicit coefficient vector.
pub(crate) fn stokes_form_from_vector(n: [f64; 3], conv: StokesConvention) -> QuadraticForm {
    let mut f = QuadraticForm::default();
    let c = |re: f64, im: f64| Complex64::new(re, im);
    for (a, b) in FREQUENCY_PAIRS {
        let (ad, an) = (Ladder::create(a), Ladder::annihilate(a));
        let (bd, bn) = (Ladder::create(b), Ladder::annihilate(b));
        f.push(c(n[0], 0.0), ad, an);
        f.push(c(-n[0], 0.0), bd, bn);
        f.push(c(n[1], -conv.s3_sign * n[2]), ad, bn);
        f.push(c(n[1], conv.s3_sign * n[2]), bd, an);
    }
    f
}

/// `S_n` summed over both frequencies, with
/// `S1 = a†a − b†b`, `S2 = a†b + b†a`, `S3 = i(b†a − a†b)` per frequency.
pub fn stokes_quadratic_form(direction: &StokesDirection) -> QuadraticForm {
    stokes_quadratic_form_with(direction, StokesConvention::default())
}

pub fn stokes_quadratic_form_with(direction: &StokesDirection, conv: StokesConvention) -> QuadraticForm {
    stokes_form_from_vector(direction.unit_vector(), conv)
}

/// `S1`, `S2` or `S3` for `index` = 1, 2, 3.
pub fn stokes_component_form(index: usize) -> QuadraticForm {
    let mut n = [0.0; 3];
    n[index - 1] = 1.0;
    stokes_form_from_vector(n, StokesConvention::default())
}

/// `S0 = Σ_j (a_j†a_j + b_j†b_j)`.
pub fn total_intensity_form() -> QuadraticForm {
    let mut f = QuadraticForm::default();
    for m in Mode::ALL {
        f.push(Complex64::new(1.0, 0.0), Ladder::create(m), Ladder::annihilate(m));
    }
    f
}
