//! Exact moment engine for the four macroscopic Bell states.
//!
//! Every state is zero-mean Gaussian over the four modes in the fixed order
//! [`Mode::A1`], [`Mode::B1`], [`Mode::A2`], [`Mode::B2`] (polarization `a` = H,
//! `b` = V; frequencies 1 and 2), and is fully described by its normal and
//! anomalous second moments. Moments of any quadratic observable follow from
//! Wick pairing ([`wick`]); multimode beams of `M` identical independent
//! quadruples are handled by cumulant additivity ([`moments`]).

mod form;
pub mod moments;
pub mod wick;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{measurement_unitary, WaveplateSetting};

pub use form::{
    stokes_component_form, stokes_quadratic_form, stokes_quadratic_form_with, total_intensity_form, Ladder, QuadTerm,
    QuadraticForm, StokesConvention,
};
pub use moments::{central_moments, stokes_covariance_matrix, MomentField, MomentReport};
pub use wick::{wick_expectation, wick_moment, wick_moment_with_limit, DEFAULT_MAX_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Psi,
    Phi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// One of Ψ±, Φ±.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BellState {
    pub family: Family,
    pub sign: Sign,
}

impl BellState {
    pub const PSI_PLUS: BellState = BellState {
        family: Family::Psi,
        sign: Sign::Plus,
    };
    pub const PSI_MINUS: BellState = BellState {
        family: Family::Psi,
        sign: Sign::Minus,
    };
    pub const PHI_PLUS: BellState = BellState {
        family: Family::Phi,
        sign: Sign::Plus,
    };
    pub const PHI_MINUS: BellState = BellState {
        family: Family::Phi,
        sign: Sign::Minus,
    };
    pub const ALL: [BellState; 4] = [Self::PSI_PLUS, Self::PSI_MINUS, Self::PHI_PLUS, Self::PHI_MINUS];

    /// Ψ− is the only state without hidden polarization.
    pub fn is_singlet(&self) -> bool {
        *self == Self::PSI_MINUS
    }

    /// The two squeezed pairs `(i, j, sign)`: `⟨a_i a_j⟩ = sign·sinhΓ·coshΓ`.
    pub fn pairs(&self) -> [(Mode, Mode, f64); 2] {
        match self.family {
            Family::Psi => [(Mode::A1, Mode::B2, 1.0), (Mode::B1, Mode::A2, self.sign.value())],
            Family::Phi => [(Mode::A1, Mode::A2, 1.0), (Mode::B1, Mode::B2, self.sign.value())],
        }
    }
}

impl fmt::Display for BellState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = match self.family {
            Family::Psi => "psi",
            Family::Phi => "phi",
        };
        let sign = match self.sign {
            Sign::Plus => '+',
            Sign::Minus => '-',
        };
        write!(f, "{fam}{sign}")
    }
}

impl FromStr for BellState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "psi+" | "psiplus" | "psi_plus" => Ok(Self::PSI_PLUS),
            "psi-" | "psiminus" | "psi_minus" => Ok(Self::PSI_MINUS),
            "phi+" | "phiplus" | "phi_plus" => Ok(Self::PHI_PLUS),
            "phi-" | "phiminus" | "phi_minus" => Ok(Self::PHI_MINUS),
            other => Err(invalid(format!(
                "unknown state '{other}', expected one of psi+, psi-, phi+, phi-"
            ))),
        }
    }
}

/// State, parametric gain Γ and number of independent mode quadruples `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellStateSpec {
    pub state: BellState,
    gain: f64,
    quadruples: u32,
}

impl BellStateSpec {
    pub fn from_gain(state: BellState, gain: f64, quadruples: u32) -> Result<Self> {
        if !(gain >= 0.0 && gain.is_finite()) {
            return Err(invalid(format!("gain must be finite and >= 0, got {gain}")));
        }
        if quadruples == 0 {
            return Err(invalid("number of mode quadruples must be >= 1"));
        }
        Ok(Self {
            state,
            gain,
            quadruples,
        })
    }

    /// `N = sinh²Γ`, so `Γ = asinh(√N)`.
    pub fn from_nbar(state: BellState, nbar: f64, quadruples: u32) -> Result<Self> {
        if !(nbar >= 0.0 && nbar.is_finite()) {
            return Err(invalid(format!(
                "mean photon number must be finite and >= 0, got {nbar}"
            )));
        }
        Self::from_gain(state, nbar.sqrt().asinh(), quadruples)
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn nbar(&self) -> f64 {
        self.gain.sinh().powi(2)
    }

    pub fn quadruples(&self) -> u32 {
        self.quadruples
    }

    pub fn with_quadruples(&self, quadruples: u32) -> Result<Self> {
        Self::from_gain(self.state, self.gain, quadruples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    A1 = 0,
    B1 = 1,
    A2 = 2,
    B2 = 3,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::A1, Mode::B1, Mode::A2, Mode::B2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Mode {
        Self::ALL[i]
    }
}

/// Normal `n[i][j] = ⟨a_i† a_j⟩` and anomalous `m[i][j] = ⟨a_i a_j⟩` moments of
/// one quadruple. First moments are identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMoments {
    pub normal: Matrix4<Complex64>,
    pub anomalous: Matrix4<Complex64>,
}

impl SecondMoments {
    pub fn vacuum() -> Self {
        Self {
            normal: Matrix4::zeros(),
            anomalous: Matrix4::zeros(),
        }
    }

    /// The 8×8 Gram matrix `G[p][q] = ⟨X_p† X_q⟩` over `X = (a_1..a_4, a_1†..a_4†)`.
    pub fn gram_matrix(&self) -> nalgebra::SMatrix<Complex64, 8, 8> {
        let mut g = nalgebra::SMatrix::<Complex64, 8, 8>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                g[(i, j)] = self.normal[(i, j)];
                g[(i, j + 4)] = self.anomalous[(i, j)].conj();
                g[(i + 4, j)] = self.anomalous[(i, j)];
                g[(i + 4, j + 4)] = self.normal[(j, i)] + if i == j { 1.0 } else { 0.0 };
            }
        }
        g
    }

    /// Checks Hermiticity of `n`, symmetry of `m` and positive semidefiniteness
    /// of the full second-moment matrix, all to `tol`.
    pub fn check_physical(&self, tol: f64) -> Result<()> {
        let n = &self.normal;
        let m = &self.anomalous;
        if (n - n.adjoint()).iter().any(|z| z.norm() > tol) {
            return Err(invalid("normal moment matrix is not Hermitian"));
        }
        if (m - m.transpose()).iter().any(|z| z.norm() > tol) {
            return Err(invalid("anomalous moment matrix is not symmetric"));
        }
        let g = self.gram_matrix();
        let g = (g + g.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(g);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -tol {
            return Err(invalid(format!(
                "second moments are unphysical (min eigenvalue {min:.3e})"
            )));
        }
        let neig = SymmetricEigen::new(*n);
        let nmin = neig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if nmin < -tol {
            return Err(invalid("normal moment matrix is not positive semidefinite"));
        }
        Ok(())
    }

    /// Mean photon number per mode `⟨a_i† a_i⟩`.
    pub fn occupation(&self, mode: Mode) -> f64 {
        self.normal[(mode.index(), mode.index())].re
    }

    /// Uniform beamsplitter loss of transmissivity `eta` on every mode.
    pub fn apply_loss(&self, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(invalid(format!("efficiency must lie in [0, 1], got {eta}")));
        }
        let s = Complex64::new(eta, 0.0);
        Ok(Self {
            normal: self.normal * s,
            anomalous: self.anomalous * s,
        })
    }

    /// Sends both frequencies through the HWP→QWP chain of `setting`.
    /// Afterwards, S1 of the new state has the statistics of `S_n` of the old
    /// state, with `n` from [`crate::geometry::direction_from_waveplates`].
    pub fn apply_polarization_rotation(&self, setting: &WaveplateSetting) -> Self {
        let u = measurement_unitary(setting);
        let mut v = Matrix4::<Complex64>::zeros();
        for block in 0..2 {
            for r in 0..2 {
                for c in 0..2 {
                    v[(2 * block + r, 2 * block + c)] = u[(r, c)];
                }
            }
        }
        self.apply_mode_unitary(&v)
    }

    /// Heisenberg transformation `a_i → Σ_j V_ij a_j`.
    pub fn apply_mode_unitary(&self, v: &Matrix4<Complex64>) -> Self {
        let vc = v.map(|z| z.conj());
        Self {
            normal: vc * self.normal * v.transpose(),
            anomalous: v * self.anomalous * v.transpose(),
        }
    }
}

/// Product of two two-mode squeezed vacua with the pairing of `spec.state`.
/// Each mode carries `N = sinh²Γ` photons; paired modes have
/// `⟨a_i a_j⟩ = ±sinhΓ·coshΓ`.
pub fn build_state(spec: &BellStateSpec) -> SecondMoments {
    let g = spec.gain();
    let nbar = g.sinh().powi(2);
    let sc = g.sinh() * g.cosh();
    let mut s = SecondMoments::vacuum();
    for i in 0..4 {
        s.normal[(i, i)] = Complex64::new(nbar, 0.0);
    }
    for (i, j, sign) in spec.state.pairs() {
        let z = Complex64::new(sign * sc, 0.0);
        s.anomalous[(i.index(), j.index())] = z;
        s.anomalous[(j.index(), i.index())] = z;
    }
    s
}

/// A Gaussian state with no Bell-state symmetry: a squeezed pair mixed over
/// all four modes by a fixed passive unitary. Its Stokes statistics depend on
/// every component of the measurement direction, including the sign of `n3`.
pub fn probe_state() -> SecondMoments {
    let spec = BellStateSpec::from_gain(BellState::PSI_PLUS, 0.6, 1).expect("fixed valid gain");
    let mix = Matrix4::from_fn(|i, j| {
        Complex64::new(
            ((i * 7 + j * 3) % 5) as f64 * 0.1,
            ((i + 2 * j) % 3) as f64 * 0.07 - 0.05,
        )
    });
    build_state(&spec).apply_mode_unitary(&mix.qr().q())
}
