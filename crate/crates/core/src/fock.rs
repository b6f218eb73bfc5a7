//! Truncated Fock-space oracle for the Bell states.
//!
//! The state is the Schmidt expansion of two two-mode squeezed vacua,
//! `Σ s^n·tanh^{m+n}Γ / cosh²Γ`, with `m` photons in each mode of the first pair
//! and `n` in each mode of the second (`s = ±1` is the state sign), truncated
//! to `m + n <= c`. Each frequency then holds at most `c` photons, so no mode
//! exceeds `c`, and whole photon-number sectors are kept: the space is closed
//! under passive polarization optics and under Stokes operators, and the
//! singlet stays exactly rotation invariant. The only approximation is the
//! discarded tail `m + n > c`.

use num_complex::Complex64;

use crate::cumulant::{central_from_cumulants, cumulants_from_raw};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{BellStateSpec, Mode};
use crate::geometry::{measurement_unitary, StokesDirection, WaveplateSetting};

/// Default bound on the discarded probability mass.
pub const DEFAULT_TRUNCATION_BOUND: f64 = 1e-8;
/// Maximum moment order of [`TruncatedState::stokes_moments`].
pub const MAX_ORDER: usize = 6;
const LEAKAGE_BOUND: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TruncatedState {
    cutoff: usize,
    dim: usize,
    amps: Vec<Complex64>,
    truncation_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockMoments {
    /// `⟨S_n^k⟩`, `k = 1..`.
    pub raw: Vec<f64>,
    /// Central moments, `k = 1..` (first entry is 0).
    pub central: Vec<f64>,
}

/// Discarded mass `P(m + n > c) = q^{c+1}·((c + 2) − (c + 1)·q)`, `q = tanh²Γ`.
pub fn truncation_error(gain: f64, cutoff: usize) -> f64 {
    let q = gain.tanh().powi(2);
    let c = cutoff as f64;
    q.powi(cutoff as i32 + 1) * ((c + 2.0) - (c + 1.0) * q)
}

/// Smallest cutoff whose truncation error is at most `bound`.
pub fn default_cutoff(gain: f64, bound: f64) -> Result<usize> {
    (1..=200)
        .find(|&c| truncation_error(gain, c) <= bound)
        .ok_or_else(|| invalid(format!("no cutoff <= 200 meets bound {bound:e} at gain {gain}")))
}

/// Builds the truncated state at cutoff `c` (requires `quadruples == 1`).
pub fn build_state_fock(spec: &BellStateSpec, cutoff: usize) -> Result<TruncatedState> {
    build_state_fock_with_bound(spec, cutoff, DEFAULT_TRUNCATION_BOUND)
}

/// Builds the state at the smallest cutoff meeting the default bound.
pub fn build_state_fock_auto(spec: &BellStateSpec) -> Result<TruncatedState> {
    let c = default_cutoff(spec.gain(), DEFAULT_TRUNCATION_BOUND)?;
    build_state_fock(spec, c)
}

pub fn build_state_fock_with_bound(spec: &BellStateSpec, cutoff: usize, bound: f64) -> Result<TruncatedState> {
    if cutoff < 1 {
        return Err(invalid("Fock cutoff must be >= 1"));
    }
    if spec.quadruples() != 1 {
        return Err(invalid("the Fock oracle describes a single mode quadruple (M = 1)"));
    }
    let eps = truncation_error(spec.gain(), cutoff);
    if eps > bound {
        return Err(Error::Truncation {
            epsilon: eps,
            bound,
            cutoff,
        });
    }
    let dim = cutoff + 1;
    let mut st = TruncatedState {
        cutoff,
        dim,
        amps: vec![Complex64::new(0.0, 0.0); dim.pow(4)],
        truncation_error: eps,
    };
    let t = spec.gain().tanh();
    let norm = spec.gain().cosh().powi(2).recip();
    let [(p0a, p0b, _), (p1a, p1b, sign)] = spec.state.pairs();
    for m in 0..=cutoff {
        for n in 0..=(cutoff - m) {
            let amp = sign.powi(n as i32) * t.powi((m + n) as i32) * norm;
            let mut occ = [0usize; 4];
            occ[p0a.index()] = m;
            occ[p0b.index()] = m;
            occ[p1a.index()] = n;
            occ[p1b.index()] = n;
            let i = st.index(occ);
            st.amps[i] = Complex64::new(amp, 0.0);
        }
    }
    Ok(st)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k.min(n - k)).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Matrices `D_N[p][n_a]` giving the amplitude of `|p, N−p⟩` in `Û|n_a, N−n_a⟩`
/// for the polarization unitary `u`, for every total `N <= max_total`.
#[allow(clippy::needless_range_loop)]
fn number_sector_matrices(u: &nalgebra::Matrix2<Complex64>, max_total: usize) -> Vec<Vec<Vec<Complex64>>> {
    let (u00, u01, u10, u11) = (u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]);
    (0..=max_total)
        .map(|total| {
            let mut d = vec![vec![Complex64::new(0.0, 0.0); total + 1]; total + 1];
            for na in 0..=total {
                let nb = total - na;
                for r in 0..=na {
                    let ar = Complex64::new(binomial(na, r), 0.0) * u00.powu(r as u32) * u10.powu((na - r) as u32);
                    for s in 0..=nb {
                        let bs = Complex64::new(binomial(nb, s), 0.0) * u01.powu(s as u32) * u11.powu((nb - s) as u32);
                        let p = r + s;
                        let scale = (factorial(p) * factorial(total - p) / (factorial(na) * factorial(nb))).sqrt();
                        d[p][na] += ar * bs * scale;
                    }
                }
            }
            d
        })
        .collect()
}

impl TruncatedState {
    fn index(&self, occ: [usize; 4]) -> usize {
        ((occ[0] * self.dim + occ[1]) * self.dim + occ[2]) * self.dim + occ[3]
    }

    fn occupation(&self, mut i: usize) -> [usize; 4] {
        let mut occ = [0usize; 4];
        for slot in (0..4).rev() {
            occ[slot] = i % self.dim;
            i /= self.dim;
        }
        occ
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn truncation_error(&self) -> f64 {
        self.truncation_error
    }

    pub fn amplitude(&self, occ: [usize; 4]) -> Complex64 {
        if occ.iter().any(|&n| n >= self.dim) {
            return Complex64::new(0.0, 0.0);
        }
        self.amps[self.index(occ)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies the HWP→QWP chain to both frequencies.
    pub fn apply_waveplates(&self, setting: &WaveplateSetting) -> Result<TruncatedState> {
        let u = measurement_unitary(setting);
        let cap = self.dim - 1;
        let sectors = number_sector_matrices(&u, cap);
        let before = self.norm_sqr();
        let mut out = self.clone();
        for freq in 0..2 {
            let (ia, ib) = (2 * freq, 2 * freq + 1);
            let mut next = vec![Complex64::new(0.0, 0.0); out.amps.len()];
            for (i, amp) in out.amps.iter().enumerate() {
                if amp.norm_sqr() == 0.0 {
                    continue;
                }
                let occ = out.occupation(i);
                let total = occ[ia] + occ[ib];
                if total > cap {
                    // mass that cannot be represented; accounted for below
                    continue;
                }
                let d = &sectors[total];
                for (p, row) in d.iter().enumerate() {
                    let c = row[occ[ia]];
                    if c.norm_sqr() == 0.0 {
                        continue;
                    }
                    let mut o = occ;
                    o[ia] = p;
                    o[ib] = total - p;
                    next[out.index(o)] += c * amp;
                }
            }
            out.amps = next;
        }
        let leakage = before - out.norm_sqr();
        if leakage.abs() > LEAKAGE_BOUND {
            return Err(Error::Truncation {
                epsilon: leakage,
                bound: LEAKAGE_BOUND,
                cutoff: self.cutoff,
            });
        }
        Ok(out)
    }

    /// `S_n|ψ⟩` with `S3 = i(b†a − a†b)` per frequency.
    fn apply_stokes(&self, n: [f64; 3], amps: &[Complex64]) -> Vec<Complex64> {
        let cap = self.dim - 1;
        let up = Complex64::new(n[1], -n[2]); // coefficient of a†b
        let down = Complex64::new(n[1], n[2]); // coefficient of b†a
        let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
        for (i, amp) in amps.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let occ = self.occupation(i);
            for freq in 0..2 {
                let (ia, ib) = (2 * freq, 2 * freq + 1);
                let (na, nb) = (occ[ia], occ[ib]);
                out[i] += amp * (n[0] * (na as f64 - nb as f64));
                if nb > 0 && na < cap {
                    let mut o = occ;
                    o[ia] += 1;
                    o[ib] -= 1;
                    let f = ((nb * (na + 1)) as f64).sqrt();
                    out[self.index(o)] += amp * up * f;
                }
                if na > 0 && nb < cap {
                    let mut o = occ;
                    o[ia] -= 1;
                    o[ib] += 1;
                    let f = ((na * (nb + 1)) as f64).sqrt();
                    out[self.index(o)] += amp * down * f;
                }
            }
        }
        out
    }

    /// Raw and central moments of `S_n` up to order `k` (normalized to the
    /// retained norm).
    pub fn stokes_moments(&self, direction: &StokesDirection, k: usize) -> Result<FockMoments> {
        if k == 0 {
            return Err(invalid("moment order must be >= 1"));
        }
        if k > MAX_ORDER {
            return Err(Error::UnsupportedOrder {
                order: k,
                max: MAX_ORDER,
            });
        }
        let n = direction.unit_vector();
        let norm = self.norm_sqr();
        let mut v = self.amps.clone();
        let mut raw = Vec::with_capacity(k);
        for _ in 0..k {
            v = self.apply_stokes(n, &v);
            let ip: Complex64 = self.amps.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            raw.push(ip.re / norm);
        }
        let central = central_from_cumulants(&cumulants_from_raw(&raw));
        Ok(FockMoments { raw, central })
    }

    pub fn joint_pn_distribution(&self) -> PhotonNumberTable {
        PhotonNumberTable {
            dim: self.dim,
            probs: self.amps.iter().map(|a| a.norm_sqr()).collect(),
        }
    }
}

/// `|amplitude|²` over `(n_a1, n_b1, n_a2, n_b2)`.
#[derive(Debug, Clone)]
pub struct PhotonNumberTable {
    dim: usize,
    probs: Vec<f64>,
}

impl PhotonNumberTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, occ: [usize; 4]) -> f64 {
        if occ.iter().any(|&n| n >= self.dim) {
            return 0.0;
        }
        self.probs[((occ[0] * self.dim + occ[1]) * self.dim + occ[2]) * self.dim + occ[3]]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Nonzero entries as `(occupations, probability)`.
    pub fn entries(&self) -> impl Iterator<Item = ([usize; 4], f64)> + '_ {
        let d = self.dim;
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(move |(mut i, p)| {
                let mut occ = [0usize; 4];
                for slot in (0..4).rev() {
                    occ[slot] = i % d;
                    i /= d;
                }
                (occ, *p)
            })
    }

    pub fn marginal(&self, mode: Mode) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (occ, p) in self.entries() {
            m[occ[mode.index()]] += p;
        }
        m
    }

    /// Mean and variance of `Σ_i coeff_i · n_i`.
    pub fn linear_stats(&self, coeffs: [f64; 4]) -> (f64, f64) {
        let total = self.total();
        let (mut s1, mut s2) = (0.0, 0.0);
        for (occ, p) in self.entries() {
            let x: f64 = occ.iter().zip(&coeffs).map(|(&n, c)| n as f64 * c).sum();
            s1 += p * x;
            s2 += p * x * x;
        }
        let mean = s1 / total;
        (mean, s2 / total - mean * mean)
    }
}
