//! Moment reports for multimode Bell states.
//!
//! A beam of `M` independent identical quadruples has cumulants `M·κ_j`, where
//! `κ_j` are the single-quadruple cumulants obtained from Wick raw moments.

use std::collections::BTreeMap;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::form::{stokes_component_form, stokes_form_from_vector, total_intensity_form, StokesConvention};
use super::wick::{wick_expectation_with, Contractions, DEFAULT_MAX_ORDER};
use super::{build_state, BellStateSpec, QuadraticForm, SecondMoments};
use crate::cumulant::{central_from_cumulants, cumulants_from_raw};
use crate::error::{Error, Result};
use crate::geometry::StokesDirection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// Detected photons per pulse, `4·M·η·N`.
    pub mean_s0: f64,
    pub mean_stokes: [f64; 3],
    /// Symmetrized covariance of (S1, S2, S3), photons².
    pub stokes_cov: [[f64; 3]; 3],
    pub direction: StokesDirection,
    /// Central moments `ΔS_n^k` for `k = 1..=k_max` (order 1 is 0).
    pub central_moments: BTreeMap<usize, f64>,
    /// `ΔS_n² / ⟨S0⟩`; NaN when `⟨S0⟩ = 0`.
    pub nrf: f64,
}

fn check_order(k_max: usize) -> Result<()> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be >= 1".into()));
    }
    if k_max > DEFAULT_MAX_ORDER {
        return Err(Error::UnsupportedOrder {
            order: k_max,
            max: DEFAULT_MAX_ORDER,
        });
    }
    Ok(())
}

fn lossy_state(spec: &BellStateSpec, eta: f64) -> Result<SecondMoments> {
    build_state(spec).apply_loss(eta)
}

/// Raw moments `⟨F^1⟩..⟨F^k⟩` of one quadruple.
fn raw_moments(ctr: &Contractions, form: &QuadraticForm, k_max: usize) -> Vec<f64> {
    (1..=k_max)
        .map(|k| {
            let forms = vec![form; k];
            wick_expectation_with(ctr, &forms).re
        })
        .collect()
}

fn single_quadruple_cov(ctr: &Contractions) -> (Matrix3<f64>, [f64; 3]) {
    let comps: Vec<QuadraticForm> = (1..=3).map(stokes_component_form).collect();
    let means: Vec<f64> = comps.iter().map(|f| wick_expectation_with(ctr, &[f]).re).collect();
    let mut c = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            // ½⟨S_iS_j + S_jS_i⟩ = Re⟨S_iS_j⟩ for Hermitian S_i, S_j
            let v = wick_expectation_with(ctr, &[&comps[i], &comps[j]]).re - means[i] * means[j];
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    (c, [means[0], means[1], means[2]])
}

/// Symmetrized 3×3 Stokes covariance of the full `M`-quadruple beam after
/// loss `eta`. For every unit `n`, `ΔS_n² = nᵀ·C·n`.
pub fn stokes_covariance_matrix(spec: &BellStateSpec, eta: f64) -> Result<Matrix3<f64>> {
    let state = lossy_state(spec, eta)?;
    let ctr = Contractions::new(&state);
    let (c, _) = single_quadruple_cov(&ctr);
    Ok(c * spec.quadruples() as f64)
}

/// Mean, covariance and central moments up to `k_max` of `S_n` for the
/// detected beam.
pub fn central_moments(
    spec: &BellStateSpec,
    eta: f64,
    direction: &StokesDirection,
    k_max: usize,
) -> Result<MomentReport> {
    check_order(k_max)?;
    let state = lossy_state(spec, eta)?;
    let ctr = Contractions::new(&state);
    let m = spec.quadruples() as f64;

    let form = stokes_form_from_vector(direction.unit_vector(), StokesConvention::default());
    let orders = k_max.max(2);
    let raw = raw_moments(&ctr, &form, orders);
    let kappa: Vec<f64> = cumulants_from_raw(&raw).into_iter().map(|k| k * m).collect();
    let central = central_from_cumulants(&kappa);

    let s0 = wick_expectation_with(&ctr, &[&total_intensity_form()]).re * m;
    let (cov1, means1) = single_quadruple_cov(&ctr);
    let cov = cov1 * m;

    let central_moments = (1..=k_max).map(|k| (k, central[k - 1])).collect();
    let nrf = if s0 > 0.0 { central[1] / s0 } else { f64::NAN };
    Ok(MomentReport {
        mean_s0: s0,
        mean_stokes: [means1[0] * m, means1[1] * m, means1[2] * m],
        stokes_cov: cov.into(),
        direction: *direction,
        central_moments,
        nrf,
    })
}

/// Precomputed Stokes product expectations `⟨S_{i1} ⋯ S_{ik}⟩` (one quadruple)
/// for all orders up to `k_max`, so moments along many directions are cheap.
#[derive(Debug, Clone)]
pub struct MomentField {
    k_max: usize,
    quadruples: f64,
    mean_s0: f64,
    /// `tensors[k-1]` has `3^k` entries in row-major index order.
    tensors: Vec<Vec<f64>>,
}

impl MomentField {
    pub fn new(spec: &BellStateSpec, eta: f64, k_max: usize) -> Result<Self> {
        check_order(k_max)?;
        let state = lossy_state(spec, eta)?;
        Ok(Self::from_state(&state, spec.quadruples(), k_max.max(2)))
    }

    /// Field of an arbitrary zero-mean Gaussian quadruple state.
    pub fn from_state(state: &SecondMoments, quadruples: u32, k_max: usize) -> Self {
        let ctr = Contractions::new(state);
        let comps: Vec<QuadraticForm> = (1..=3).map(stokes_component_form).collect();
        let tensors = (1..=k_max)
            .map(|k| {
                let len = 3usize.pow(k as u32);
                (0..len)
                    .into_par_iter()
                    .map(|idx| {
                        let mut rem = idx;
                        let mut forms = Vec::with_capacity(k);
                        let mut digits = vec![0usize; k];
                        for slot in (0..k).rev() {
                            digits[slot] = rem % 3;
                            rem /= 3;
                        }
                        for d in digits {
                            forms.push(&comps[d]);
                        }
                        wick_expectation_with(&ctr, &forms).re
                    })
                    .collect()
            })
            .collect();
        let mean_s0 = wick_expectation_with(&ctr, &[&total_intensity_form()]).re * quadruples as f64;
        Self {
            k_max,
            quadruples: quadruples as f64,
            mean_s0,
            tensors,
        }
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn mean_s0(&self) -> f64 {
        self.mean_s0
    }

    /// Single-quadruple raw moments `⟨S_n^k⟩`, `k = 1..=k_max`.
    pub fn raw_per_quadruple(&self, direction: &StokesDirection) -> Vec<f64> {
        let n = direction.unit_vector();
        let mut weights = vec![1.0];
        let mut out = Vec::with_capacity(self.k_max);
        for tensor in &self.tensors {
            let mut next = Vec::with_capacity(weights.len() * 3);
            for w in &weights {
                for c in n {
                    next.push(w * c);
                }
            }
            weights = next;
            out.push(weights.iter().zip(tensor).map(|(w, t)| w * t).sum());
        }
        out
    }

    /// Central moments `μ_1..μ_{k_max}` of `S_n` for the whole beam.
    pub fn central(&self, direction: &StokesDirection) -> Vec<f64> {
        let kappa: Vec<f64> = cumulants_from_raw(&self.raw_per_quadruple(direction))
            .into_iter()
            .map(|k| k * self.quadruples)
            .collect();
        central_from_cumulants(&kappa)
    }

    pub fn central_moment(&self, direction: &StokesDirection, k: usize) -> Result<f64> {
        if k == 0 || k > self.k_max {
            return Err(Error::UnsupportedOrder {
                order: k,
                max: self.k_max,
            });
        }
        Ok(self.central(direction)[k - 1])
    }

    pub fn nrf(&self, direction: &StokesDirection) -> f64 {
        if self.mean_s0 > 0.0 {
            self.central(direction)[1] / self.mean_s0
        } else {
            f64::NAN
        }
    }

    /// Beam covariance matrix of (S1, S2, S3).
    pub fn covariance(&self) -> Matrix3<f64> {
        let t1 = &self.tensors[0];
        let t2 = &self.tensors[1];
        Matrix3::from_fn(|i, j| (0.5 * (t2[3 * i + j] + t2[3 * j + i]) - t1[i] * t1[j]) * self.quadruples)
    }

    pub fn mean_stokes(&self) -> [f64; 3] {
        let t1 = &self.tensors[0];
        [
            t1[0] * self.quadruples,
            t1[1] * self.quadruples,
            t1[2] * self.quadruples,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{probe_state, wick_moment, BellState};
    use crate::geometry::{direction_from_waveplates, WaveplateSetting};

    fn spec(state: BellState, nbar: f64, m: u32) -> BellStateSpec {
        BellStateSpec::from_nbar(state, nbar, m).unwrap()
    }

    #[test]
    fn singlet_nrf_is_one_minus_eta() {
        for (nb, eta) in [(0.2, 0.26), (1.3, 0.8), (0.05, 1.0)] {
            for (t, p) in [(0.0, 0.0), (1.0, 2.0), (2.5, -0.7)] {
                let r =
                    central_moments(&spec(BellState::PSI_MINUS, nb, 3), eta, &StokesDirection::new(t, p), 2).unwrap();
                assert!((r.nrf - (1.0 - eta)).abs() < 1e-12, "{nb} {eta}: {}", r.nrf);
            }
        }
    }

    #[test]
    fn psi_plus_s2_variance_matches_curve() {
        let (eta, nb) = (0.26, 0.2);
        let r = central_moments(&spec(BellState::PSI_PLUS, nb, 1), eta, &StokesDirection::s2(), 2).unwrap();
        let s0 = 4.0 * eta * nb;
        assert!((r.mean_s0 - s0).abs() < 1e-12);
        let expected = (1.0 + eta * nb + eta * (1.0 + nb)) * s0;
        assert!((r.central_moments[&2] - expected).abs() < 1e-12);
    }

    #[test]
    fn phi_plus_hwp_constant() {
        let s = spec(BellState::PHI_PLUS, 0.2, 1);
        for h in [0.0, 7.0, 22.5, 40.0] {
            let d = direction_from_waveplates(&WaveplateSetting::from_degrees(h, 0.0));
            let r = central_moments(&s, 0.26, &d, 2).unwrap();
            assert!((r.nrf - 1.364).abs() < 1e-12);
        }
    }

    #[test]
    fn covariance_eigen_structure() {
        let (eta, nb) = (0.26, 0.2);
        let s0 = 4.0 * eta * nb;
        let hi = s0 * (1.0 + eta * (2.0 * nb + 1.0));
        let lo = s0 * (1.0 - eta);
        let c = stokes_covariance_matrix(&spec(BellState::PSI_MINUS, nb, 1), eta).unwrap();
        assert!((c - Matrix3::identity() * lo).abs().max() < 1e-12);
        let c = stokes_covariance_matrix(&spec(BellState::PSI_PLUS, nb, 1), eta).unwrap();
        assert!(
            (c - Matrix3::from_diagonal(&nalgebra::Vector3::new(lo, hi, hi)))
                .abs()
                .max()
                < 1e-12
        );
        let c = stokes_covariance_matrix(&spec(BellState::PHI_PLUS, nb, 1), eta).unwrap();
        assert!(
            (c - Matrix3::from_diagonal(&nalgebra::Vector3::new(hi, hi, lo)))
                .abs()
                .max()
                < 1e-12
        );
    }

    #[test]
    fn field_matches_direct_expansion() {
        let s = spec(BellState::PHI_MINUS, 0.4, 5);
        let field = MomentField::new(&s, 0.6, 4).unwrap();
        for (t, p) in [(0.3, 0.2), (1.2, -2.0), (2.9, 1.0)] {
            let d = StokesDirection::new(t, p);
            let direct = central_moments(&s, 0.6, &d, 4).unwrap();
            let fc = field.central(&d);
            for k in 1..=4 {
                assert!((fc[k - 1] - direct.central_moments[&k]).abs() < 1e-9 * (1.0 + fc[k - 1].abs()));
            }
        }
        let c = stokes_covariance_matrix(&s, 0.6).unwrap();
        assert!((field.covariance() - c).abs().max() < 1e-10);
    }

    #[test]
    fn cumulants_scale_linearly_with_modes() {
        let d = StokesDirection::new(0.9, 0.4);
        let one = central_moments(&spec(BellState::PSI_PLUS, 0.5, 1), 0.7, &d, 4).unwrap();
        let four = central_moments(&spec(BellState::PSI_PLUS, 0.5, 4), 0.7, &d, 4).unwrap();
        let (v1, v4) = (one.central_moments[&2], four.central_moments[&2]);
        assert!((v4 - 4.0 * v1).abs() < 1e-10);
        let k4_1 = one.central_moments[&4] - 3.0 * v1 * v1;
        let k4_4 = four.central_moments[&4] - 3.0 * v4 * v4;
        assert!((k4_4 - 4.0 * k4_1).abs() < 1e-10);
        assert!((one.nrf - four.nrf).abs() < 1e-12);
    }

    #[test]
    fn report_invariants() {
        for st in BellState::ALL {
            let r = central_moments(&spec(st, 0.8, 2), 0.5, &StokesDirection::new(0.7, 2.2), 4).unwrap();
            assert!(r.mean_stokes.iter().all(|v| v.abs() < 1e-12));
            assert!(r.central_moments[&4] >= r.central_moments[&2].powi(2));
            for i in 0..3 {
                assert!(r.stokes_cov[i][i] >= 0.0);
                for j in 0..3 {
                    assert_eq!(r.stokes_cov[i][j], r.stokes_cov[j][i]);
                }
            }
        }
    }

    #[test]
    fn vacuum_nrf_is_nan() {
        let r = central_moments(&spec(BellState::PSI_PLUS, 0.0, 1), 0.5, &StokesDirection::s1(), 2).unwrap();
        assert_eq!(r.mean_s0, 0.0);
        assert!(r.nrf.is_nan());
    }

    #[test]
    fn rotation_equals_direction() {
        // a generic (non-Bell) Gaussian state with cross correlations pins the
        // S3 sign and the waveplate handedness together
        let st = probe_state();
        let s1 = stokes_component_form(1);
        for (h, qq) in [(0.0, 0.0), (22.5, 0.0), (0.0, 45.0), (12.0, 31.0), (-20.0, 100.0)] {
            let w = WaveplateSetting::from_degrees(h, qq);
            let rotated = st.apply_polarization_rotation(&w);
            let form = stokes_form_from_vector(crate::geometry::measurement_vector(&w), StokesConvention::default());
            for k in 1..=3 {
                let a = wick_moment(&rotated, &s1, k).unwrap();
                let b = wick_moment(&st, &form, k).unwrap();
                assert!((a - b).abs() < 1e-10, "{h} {qq} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn too_high_order_rejected() {
        let s = spec(BellState::PSI_PLUS, 0.2, 1);
        assert!(central_moments(&s, 0.5, &StokesDirection::s1(), 7).is_err());
        assert!(MomentField::new(&s, 0.5, 9).is_err());
    }
}
