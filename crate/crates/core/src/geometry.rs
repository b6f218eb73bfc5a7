//! Poincaré-sphere geometry: measurement directions, waveplate settings,
//! single-plate trajectories, sweep grids and the (S2, S1) plot projection.
//!
//! The measurement chain is HWP(χ_H) → QWP(χ_Q) → polarizing prism. Measuring
//! the prism difference signal on the output is the same as measuring
//! `S_n = n1·S1 + n2·S2 + n3·S3` on the input with
//!
//! ```text
//! n = (cos2χ_Q·cos(4χ_H − 2χ_Q), cos2χ_Q·sin(4χ_H − 2χ_Q), sin2χ_Q)
//! ```
//!
//! so `θ = arccos[cos2χ_Q·cos(4χ_H − 2χ_Q)]` and `φ = atan2(n3, n2)`.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A unit vector on the Poincaré sphere in spherical coordinates, measured
/// from the S1 axis (θ) with azimuth φ in the S2–S3 plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesDirection {
    theta: f64,
    phi: f64,
}

impl StokesDirection {
    /// Builds a direction and normalizes it to θ ∈ [0, π], φ ∈ (−π, π].
    pub fn new(theta: f64, phi: f64) -> Self {
        let v = [theta.cos(), theta.sin() * phi.cos(), theta.sin() * phi.sin()];
        let d = Self::from_vector(v);
        // keep the caller's azimuth at the poles if it is meaningful
        if theta.sin().abs() < 1e-15 {
            return Self {
                theta: d.theta,
                phi: wrap_phi(phi),
            };
        }
        d
    }

    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Self {
        Self::new(theta_deg.to_radians(), phi_deg.to_radians())
    }

    /// Direction of a (not necessarily normalized, nonzero) 3-vector
    /// `(s1, s2, s3)`. The zero vector maps to +S1.
    pub fn from_vector(v: [f64; 3]) -> Self {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm == 0.0 {
            return Self { theta: 0.0, phi: 0.0 };
        }
        let x = (v[0] / norm).clamp(-1.0, 1.0);
        let theta = x.acos();
        let phi = if v[1] == 0.0 && v[2] == 0.0 {
            0.0
        } else {
            wrap_phi(v[2].atan2(v[1]))
        };
        Self { theta, phi }
    }

    pub fn s1() -> Self {
        Self::from_vector([1.0, 0.0, 0.0])
    }

    pub fn s2() -> Self {
        Self::from_vector([0.0, 1.0, 0.0])
    }

    pub fn s3() -> Self {
        Self::from_vector([0.0, 0.0, 1.0])
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// `(cos θ, sin θ cos φ, sin θ sin φ)`: the S1, S2, S3 coefficients of `S_n`.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [ct, st * cp, st * sp]
    }

    /// The antipodal direction, `S_{-n} = -S_n`.
    pub fn opposite(&self) -> Self {
        let v = self.unit_vector();
        Self::from_vector([-v[0], -v[1], -v[2]])
    }
}

fn wrap_phi(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    if p == -PI {
        p = PI;
    }
    // normalize signed zero
    if p == 0.0 {
        0.0
    } else {
        p
    }
}

/// Half-wave and quarter-wave plate orientations (radians, unwrapped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveplateSetting {
    pub chi_h: f64,
    pub chi_q: f64,
}

impl WaveplateSetting {
    pub fn new(chi_h: f64, chi_q: f64) -> Self {
        Self { chi_h, chi_q }
    }

    pub fn from_degrees(chi_h_deg: f64, chi_q_deg: f64) -> Self {
        Self::new(chi_h_deg.to_radians(), chi_q_deg.to_radians())
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn chi_h_deg(&self) -> f64 {
        self.chi_h.to_degrees()
    }

    pub fn chi_q_deg(&self) -> f64 {
        self.chi_q.to_degrees()
    }
}

/// Unit vector selected by a waveplate setting.
pub fn measurement_vector(setting: &WaveplateSetting) -> [f64; 3] {
    let (s2q, c2q) = (2.0 * setting.chi_q).sin_cos();
    let (sd, cd) = (4.0 * setting.chi_h - 2.0 * setting.chi_q).sin_cos();
    [c2q * cd, c2q * sd, s2q]
}

/// Poincaré-sphere direction measured by the plate pair.
///
/// At the doubly singular point (`sin2χ_Q = 0` and `sin(4χ_H − 2χ_Q) = 0`) the
/// direction is a pole and φ is set to 0.
pub fn direction_from_waveplates(setting: &WaveplateSetting) -> StokesDirection {
    StokesDirection::from_vector(measurement_vector(setting))
}

/// A plate setting that measures `direction` (inverse of
/// [`measurement_vector`]), with `χ_Q ∈ [−45°, 45°]`.
pub fn waveplates_for_direction(direction: &StokesDirection) -> WaveplateSetting {
    let n = direction.unit_vector();
    let chi_q = 0.5 * n[2].clamp(-1.0, 1.0).asin();
    let planar = if n[0].hypot(n[1]) > 1e-15 {
        n[1].atan2(n[0])
    } else {
        0.0
    };
    WaveplateSetting::new((planar + 2.0 * chi_q) / 4.0, chi_q)
}

/// `(x, y) = (S2 component, S1 component)`.
pub fn project_s2s1(direction: &StokesDirection) -> (f64, f64) {
    let v = direction.unit_vector();
    (v[1], v[0])
}

/// Jones matrix of a linear retarder with fast axis at `chi` and retardance
/// `delta`: `R(χ)ᵀ · diag(1, e^{iδ}) · R(χ)`.
fn retarder(chi: f64, delta: f64) -> Matrix2<Complex64> {
    let (s, c) = chi.sin_cos();
    let e = Complex64::from_polar(1.0, delta);
    let one = Complex64::new(1.0, 0.0);
    let cs = Complex64::new(c * s, 0.0);
    Matrix2::new(
        c * c * one + s * s * e,
        cs * (one - e),
        cs * (one - e),
        s * s * one + c * c * e,
    )
}

fn plate_chain(chi_h: f64, chi_q: f64) -> Matrix2<Complex64> {
    retarder(chi_q, -PI / 2.0) * retarder(chi_h, PI)
}

/// Field transformation `J_out = U·J_in` of the HWP→QWP chain acting on the
/// `(a, b) = (H, V)` pair of one frequency, referenced to the chain at zero
/// angles (a diagonal H/V phase, invisible to the prism) so that the zero
/// setting is the identity.
///
/// The quarter-wave retardance sign is the one for which `U†·σ_z·U` equals
/// `n·(σ_z, σ_x, σ_y)` with `n` from [`measurement_vector`], i.e. measuring
/// S1 after the plates is measuring `S_n` before them.
pub fn measurement_unitary(setting: &WaveplateSetting) -> Matrix2<Complex64> {
    let reference = plate_chain(0.0, 0.0).adjoint();
    reference * plate_chain(setting.chi_h, setting.chi_q)
}

/// Ordered list of waveplate settings with their directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub entries: Vec<(WaveplateSetting, StokesDirection)>,
    pub step_h_deg: f64,
    pub step_q_deg: f64,
}

impl SweepGrid {
    fn from_settings(settings: Vec<WaveplateSetting>, step_h_deg: f64, step_q_deg: f64) -> Self {
        let entries = settings
            .into_iter()
            .map(|s| (s, direction_from_waveplates(&s)))
            .collect();
        Self {
            entries,
            step_h_deg,
            step_q_deg,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn directions(&self) -> impl Iterator<Item = &StokesDirection> {
        self.entries.iter().map(|(_, d)| d)
    }

    /// A grid built from explicit directions (no plate settings attached;
    /// settings are left at identity).
    pub fn from_directions(directions: Vec<StokesDirection>) -> Self {
        Self {
            entries: directions
                .into_iter()
                .map(|d| (WaveplateSetting::identity(), d))
                .collect(),
            step_h_deg: 0.0,
            step_q_deg: 0.0,
        }
    }
}

fn linspace(start: f64, end: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (end - start) / (n - 1) as f64;
    (0..n).map(move |i| if i == n - 1 { end } else { start + step * i as f64 })
}

/// HWP rotated over one direction period `[0, π/2]` with the QWP at 0.
pub fn hwp_trajectory(n_steps: usize) -> Result<SweepGrid> {
    if n_steps < 2 {
        return Err(invalid(format!("trajectory needs n_steps >= 2, got {n_steps}")));
    }
    let settings = linspace(0.0, PI / 2.0, n_steps)
        .map(|h| WaveplateSetting::new(h, 0.0))
        .collect();
    let step = 90.0 / (n_steps - 1) as f64;
    Ok(SweepGrid::from_settings(settings, step, 0.0))
}

/// QWP rotated over one direction period `[0, π]` with the HWP at 0.
pub fn qwp_trajectory(n_steps: usize) -> Result<SweepGrid> {
    if n_steps < 2 {
        return Err(invalid(format!("trajectory needs n_steps >= 2, got {n_steps}")));
    }
    let settings = linspace(0.0, PI, n_steps)
        .map(|q| WaveplateSetting::new(0.0, q))
        .collect();
    let step = 180.0 / (n_steps - 1) as f64;
    Ok(SweepGrid::from_settings(settings, 0.0, step))
}

fn inclusive_nodes(span: f64, step: f64) -> Vec<f64> {
    let n = (span / step + 1e-9).floor() as usize;
    let mut nodes: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    if span - nodes[n] > 1e-9 {
        nodes.push(span);
    }
    nodes
}

/// Cartesian plate grid over χ_H ∈ [0°, 45°], χ_Q ∈ [0°, 90°] (steps in
/// degrees). Its image is the closed hemisphere `n3 ≥ 0`, which is enough for
/// every even-order moment since `S_{-n} = -S_n`.
pub fn sphere_sweep(step_h_deg: f64, step_q_deg: f64) -> Result<SweepGrid> {
    if !(step_h_deg > 0.0 && step_q_deg > 0.0) {
        return Err(invalid(format!(
            "sweep steps must be positive, got ({step_h_deg}, {step_q_deg})"
        )));
    }
    let hs = inclusive_nodes(45.0, step_h_deg);
    let qs = inclusive_nodes(90.0, step_q_deg);
    let mut settings = Vec::with_capacity(hs.len() * qs.len());
    for &h in &hs {
        for &q in &qs {
            settings.push(WaveplateSetting::from_degrees(h, q));
        }
    }
    Ok(SweepGrid::from_settings(settings, step_h_deg, step_q_deg))
}

/// Roughly uniform directions over the closed hemisphere `n3 ≥ 0`
/// (a Fibonacci lattice), useful as a search grid independent of plate angles.
pub fn hemisphere_grid(points: usize) -> SweepGrid {
    let golden = PI * (3.0 - 5f64.sqrt());
    let dirs = (0..points)
        .map(|i| {
            let z = (i as f64 + 0.5) / points as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            StokesDirection::from_vector([r * a.cos(), r * a.sin(), z])
        })
        .collect();
    SweepGrid::from_directions(dirs)
}
