//! Degrees of polarization of every order.
//!
//! Order one uses the mean Stokes vector, order two the extreme eigenvalues
//! of the Stokes covariance, and higher orders a sphere search over the
//! central moment of `S_n` followed by a derivative-free local polish.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{BellState, Family, MomentField, Sign};
use crate::geometry::{StokesDirection, SweepGrid};

/// Default angular tolerance of the local refinement, in radians.
pub const DEFAULT_REFINE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DpMethod {
    Eigen,
    GridRefine,
    ClosedForm,
}

impl fmt::Display for DpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DpMethod::Eigen => "eigen",
            DpMethod::GridRefine => "grid+refine",
            DpMethod::ClosedForm => "closed-form",
        })
    }
}

/// Extremes of a moment field over the sphere and their visibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpReport {
    pub order: usize,
    pub sup: f64,
    pub inf: f64,
    pub dp: f64,
    pub argmax: StokesDirection,
    pub argmin: StokesDirection,
    pub method: DpMethod,
}

/// `(sup − inf)/(sup + inf)`; undefined when the extremes cancel or both
/// fall below `floor`.
fn visibility(order: usize, sup: f64, inf: f64, floor: f64) -> Result<f64> {
    let denom = sup + inf;
    let scale = sup.abs().max(inf.abs());
    if scale <= floor || denom.abs() <= 1e-9 * scale || !denom.is_finite() {
        return Err(Error::UndefinedDp(format!(
            "order-{order} moment field has sup + inf = {denom:e} (sup {sup:e}, inf {inf:e})"
        )));
    }
    Ok((sup - inf) / denom)
}

/// First-order degree from the mean Stokes vector, in both forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dp1Report {
    pub p1: f64,
    /// `(I_max − I_min) / (I_max + I_min)` of one prism port over the sphere.
    pub visibility: f64,
    pub direction: Option<StokesDirection>,
}

/// `|⟨S⟩| / ⟨S0⟩`, cross-checked against the port-intensity visibility.
pub fn dp1(mean_stokes: [f64; 3], mean_s0: f64) -> Result<Dp1Report> {
    if mean_s0.is_nan() || mean_s0 <= 0.0 {
        return Err(Error::UndefinedDp(format!("mean intensity {mean_s0} is not positive")));
    }
    let norm = Vector3::from(mean_stokes).norm();
    let p1 = norm / mean_s0;
    let (vis, direction) = dp1_visibility(mean_stokes, mean_s0, &crate::geometry::hemisphere_grid(400))?;
    if (vis - p1).abs() > 1e-9 {
        return Err(invalid(format!("P1 forms disagree: {p1} vs visibility {vis}")));
    }
    Ok(Dp1Report {
        p1,
        visibility: vis,
        direction,
    })
}

/// Visibility of the port intensity `I_A = (⟨S0⟩ + ⟨S_n⟩)/2` over `grid`
/// (plus antipodes), refined to `1e−8` rad.
pub fn dp1_visibility(mean_stokes: [f64; 3], mean_s0: f64, grid: &SweepGrid) -> Result<(f64, Option<StokesDirection>)> {
    if mean_s0.is_nan() || mean_s0 <= 0.0 {
        return Err(Error::UndefinedDp(format!("mean intensity {mean_s0} is not positive")));
    }
    if mean_stokes.iter().all(|v| *v == 0.0) {
        return Ok((0.0, None));
    }
    let port = |d: &StokesDirection| {
        let n = d.unit_vector();
        0.5 * (mean_s0 + n[0] * mean_stokes[0] + n[1] * mean_stokes[1] + n[2] * mean_stokes[2])
    };
    let dirs = with_antipodes(grid);
    let ext = extremes(&port, &dirs, 1e-8);
    let (i_max, i_min) = (ext.max_value, ext.min_value);
    Ok(((i_max - i_min) / (i_max + i_min), Some(ext.argmax)))
}

fn with_antipodes(grid: &SweepGrid) -> Vec<StokesDirection> {
    grid.directions().flat_map(|d| [*d, d.opposite()]).collect()
}

/// Second-order degree from the extreme eigenvalues of the covariance.
///
/// Eigenvalues below `1e−12·⟨S0⟩` count as zero, so a noiseless field (the
/// lossless singlet) is reported as undefined.
pub fn dp2_eigen(stokes_cov: &Matrix3<f64>, mean_s0: f64) -> Result<DpReport> {
    let scale = stokes_cov.abs().max();
    if !stokes_cov.iter().all(|v| v.is_finite()) {
        return Err(invalid("covariance has non-finite entries"));
    }
    let asym = (stokes_cov - stokes_cov.transpose()).abs().max();
    if asym > 1e-12 * scale.max(1.0) {
        return Err(invalid(format!("covariance is not symmetric (max asymmetry {asym:e})")));
    }
    let eig = SymmetricEigen::new(*stokes_cov);
    let (mut imax, mut imin) = (0, 0);
    for i in 1..3 {
        if eig.eigenvalues[i] > eig.eigenvalues[imax] {
            imax = i;
        }
        if eig.eigenvalues[i] < eig.eigenvalues[imin] {
            imin = i;
        }
    }
    let sup = eig.eigenvalues[imax];
    let inf = eig.eigenvalues[imin];
    let axis = |i: usize| {
        let v = eig.eigenvectors.column(i);
        StokesDirection::from_vector([v[0], v[1], v[2]])
    };
    Ok(DpReport {
        order: 2,
        sup,
        inf,
        dp: visibility(2, sup, inf, 1e-12 * mean_s0.abs())?,
        argmax: axis(imax),
        argmin: axis(imin),
        method: DpMethod::Eigen,
    })
}

struct Extremes {
    max_value: f64,
    argmax: StokesDirection,
    min_value: f64,
    argmin: StokesDirection,
}

fn extremes<F>(f: &F, dirs: &[StokesDirection], tol: f64) -> Extremes
where
    F: Fn(&StokesDirection) -> f64 + Sync,
{
    let values: Vec<f64> = dirs.par_iter().map(f).collect();
    let (mut imax, mut imin) = (0, 0);
    for (i, v) in values.iter().enumerate() {
        if *v > values[imax] {
            imax = i;
        }
        if *v < values[imin] {
            imin = i;
        }
    }
    let step = grid_spacing(dirs.len());
    let ((max_value, argmax), (min_value, argmin)) = rayon::join(
        || polish(f, dirs[imax], values[imax], step, tol, true),
        || polish(f, dirs[imin], values[imin], step, tol, false),
    );
    Extremes {
        max_value,
        argmax,
        min_value,
        argmin,
    }
}

/// Typical angular spacing of `len` roughly uniform points on the sphere.
fn grid_spacing(len: usize) -> f64 {
    (4.0 * std::f64::consts::PI / len.max(1) as f64).sqrt().min(0.5)
}

fn tangent_basis(n: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let v = Vector3::from(n);
    let pick = if n[0].abs() <= n[1].abs() && n[0].abs() <= n[2].abs() {
        Vector3::x()
    } else if n[1].abs() <= n[2].abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = (pick - v * v.dot(&pick)).normalize();
    let e2 = v.cross(&e1);
    ([e1[0], e1[1], e1[2]], [e2[0], e2[1], e2[2]])
}

/// Compass search in the tangent plane; the step halves on failure and the
/// search stops once it is below `tol`.
fn polish<F>(
    f: &F,
    start: StokesDirection,
    start_value: f64,
    step: f64,
    tol: f64,
    maximize: bool,
) -> (f64, StokesDirection)
where
    F: Fn(&StokesDirection) -> f64,
{
    const PATTERN: [(f64, f64); 8] = [
        (1.0, 0.0),
        (-1.0, 0.0),
        (0.0, 1.0),
        (0.0, -1.0),
        (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
        (-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
        (FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
        (-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    ];
    let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
    let (mut best, mut value, mut h) = (start, start_value, step);
    let mut iterations = 0;
    while h >= tol && iterations < 10_000 {
        iterations += 1;
        let n = best.unit_vector();
        let (e1, e2) = tangent_basis(n);
        let mut moved = false;
        for (c1, c2) in PATTERN {
            let p = [
                n[0] + h * (c1 * e1[0] + c2 * e2[0]),
                n[1] + h * (c1 * e1[1] + c2 * e2[1]),
                n[2] + h * (c1 * e1[2] + c2 * e2[2]),
            ];
            let d = StokesDirection::from_vector(p);
            let v = f(&d);
            if better(v, value) {
                best = d;
                value = v;
                moved = true;
                break;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    (value, best)
}

/// Order-`k` degree of polarization of an arbitrary moment field.
///
/// Even orders may use a hemisphere grid since `μ_k(−n) = μ_k(n)`; odd orders
/// are searched over the grid and its antipodes. A field whose sup and inf
/// cancel (the odd moments of a symmetric distribution) is reported as
/// undefined rather than as zero.
pub fn dpk_search<F>(moment_fn: F, k: usize, grid: &SweepGrid, refine_tol: f64) -> Result<DpReport>
where
    F: Fn(&StokesDirection) -> f64 + Sync,
{
    if k == 0 {
        return Err(invalid("order must be >= 1"));
    }
    if grid.is_empty() {
        return Err(invalid("direction grid is empty"));
    }
    if refine_tol.is_nan() || refine_tol <= 0.0 {
        return Err(invalid("refinement tolerance must be positive"));
    }
    let dirs: Vec<StokesDirection> = if k % 2 == 1 {
        with_antipodes(grid)
    } else {
        grid.directions().copied().collect()
    };
    let ext = extremes(&moment_fn, &dirs, refine_tol);
    let (sup, inf) = (ext.max_value, ext.min_value);
    Ok(DpReport {
        order: k,
        sup,
        inf,
        dp: visibility(k, sup, inf, 0.0)?,
        argmax: ext.argmax,
        argmin: ext.argmin,
        method: DpMethod::GridRefine,
    })
}

/// Degree of order `k` of an engine moment field: eigen for `k = 2`, search otherwise.
pub fn dp_of_field(field: &MomentField, k: usize, grid: &SweepGrid, refine_tol: f64) -> Result<DpReport> {
    if k > field.k_max() {
        return Err(Error::UnsupportedOrder {
            order: k,
            max: field.k_max(),
        });
    }
    match k {
        1 => {
            let r = dp1(field.mean_stokes(), field.mean_s0())?;
            let d = r.direction.unwrap_or_else(StokesDirection::s1);
            Ok(DpReport {
                order: 1,
                sup: 0.5 * field.mean_s0() * (1.0 + r.p1),
                inf: 0.5 * field.mean_s0() * (1.0 - r.p1),
                dp: r.p1,
                argmax: d,
                argmin: d.opposite(),
                method: DpMethod::Eigen,
            })
        }
        2 => dp2_eigen(&field.covariance(), field.mean_s0()),
        _ => dpk_search(|d| field.central(d)[k - 1], k, grid, refine_tol),
    }
}

/// Second-order degree from the closed forms: `η(1+N)/(1+ηN)` for the
/// triplets and 0 for the singlet.
pub fn closed_form_p2(state: BellState, eta: f64, nbar: f64) -> f64 {
    match (state.family, state.sign) {
        (Family::Psi, Sign::Minus) => 0.0,
        _ => eta * (1.0 + nbar) / (1.0 + eta * nbar),
    }
}

/// `P_{2m}` predicted from `P2` when all even central moments follow from the
/// variance (Gaussian statistics): with `a/b = (1+P2)/(1−P2)`,
/// `P_{2m} = (a^m − b^m)/(a^m + b^m)`.
pub fn gaussian_limit_dp(p2: f64, order: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p2) {
        return Err(invalid(format!("P2 = {p2} outside [0, 1]")));
    }
    if order < 2 || order % 2 == 1 {
        return Err(invalid(format!(
            "Gaussian-limit order must be even and >= 2, got {order}"
        )));
    }
    if p2 == 1.0 {
        return Ok(1.0);
    }
    let m = (order / 2) as i32;
    let ratio = ((1.0 + p2) / (1.0 - p2)).powi(m);
    Ok((ratio - 1.0) / (ratio + 1.0))
}

/// Fourth central moment of the difference of two independent Poisson counts
/// with total mean `s0`: `3·s0² + s0`.
pub fn coherent_fourth_moment(mean_s0: f64) -> f64 {
    3.0 * mean_s0 * mean_s0 + mean_s0
}

/// `μ4 / μ4_coh`, NaN for a dark beam.
pub fn normalized_fourth_moment(mu4: f64, mean_s0: f64) -> f64 {
    if mean_s0 > 0.0 {
        mu4 / coherent_fourth_moment(mean_s0)
    } else {
        f64::NAN
    }
}

/// Degree of polarization estimated from simulated pulse records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McDpEstimate {
    pub order: usize,
    pub value: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McDpOptions {
    /// Slices per batch for the standard errors.
    pub slices: usize,
    /// Extra hemisphere directions measured for orders above two.
    pub grid_points: usize,
    pub subtract_noise: bool,
    pub cutoff: Option<usize>,
}

impl Default for McDpOptions {
    fn default() -> Self {
        Self {
            slices: 10,
            grid_points: 24,
            subtract_noise: true,
            cutoff: None,
        }
    }
}

/// Simulates one batch per measurement direction and estimates `P_k`.
///
/// `P1` uses the mean Stokes vector from the three axes, `P2` the covariance
/// rebuilt from the axes and the three diagonal directions, higher even
/// orders the visibility of the central moment over all measured
/// directions. With `subtract_noise`, an independent dark record is used to
/// remove the electronic noise in cumulants. Standard errors come from
/// recomputing each estimate on non-overlapping slices of every batch.
pub fn monte_carlo_dp(
    spec: &crate::gaussian::BellStateSpec,
    config: &crate::pulse::DetectorConfig,
    orders: &[usize],
    options: &McDpOptions,
) -> Result<Vec<McDpEstimate>> {
    use crate::cumulant::{central_from_cumulants, cumulants_from_central};
    use crate::geometry::{hemisphere_grid, waveplates_for_direction};
    use crate::pulse::{central_estimate, noise_reference, sample_mean, simulate_setting, DetectorConfig};

    if orders.is_empty() {
        return Err(invalid("no orders requested"));
    }
    for &k in orders {
        if k == 0 || k > crate::fock::MAX_ORDER {
            return Err(Error::UnsupportedOrder {
                order: k,
                max: crate::fock::MAX_ORDER,
            });
        }
        if k >= 3 && k % 2 == 1 {
            return Err(Error::UndefinedDp(format!(
                "order {k}: odd central moments of these states cancel over the sphere"
            )));
        }
    }
    if options.slices < 2 {
        return Err(invalid("at least two slices are needed for standard errors"));
    }
    let needed = options.slices * 8;
    if config.pulses < needed {
        return Err(Error::InsufficientPulses {
            needed,
            got: config.pulses,
        });
    }
    let k_max = orders.iter().copied().max().unwrap_or(2).max(2);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut dirs = vec![
        StokesDirection::s1(),
        StokesDirection::s2(),
        StokesDirection::s3(),
        StokesDirection::from_vector([r, r, 0.0]),
        StokesDirection::from_vector([r, 0.0, r]),
        StokesDirection::from_vector([0.0, r, r]),
    ];
    if k_max > 2 {
        dirs.extend(hemisphere_grid(options.grid_points).directions().copied());
    }
    let mut batches = Vec::with_capacity(dirs.len());
    for (i, d) in dirs.iter().enumerate() {
        let cfg = DetectorConfig {
            seed: config
                .seed
                .wrapping_add((i as u64 + 1).wrapping_mul(0x2545_f491_4f6c_dd1d)),
            ..*config
        };
        let b = simulate_setting(spec, &waveplates_for_direction(d), &cfg, options.cutoff)?;
        batches.push((b.s_n(), b.s0()));
    }
    let noise_kappa = if options.subtract_noise && config.electronic_noise_sigma > 0.0 {
        let dark = noise_reference(config)?.s_n();
        let central: Vec<f64> = (1..=k_max)
            .map(|k| if k == 1 { 0.0 } else { central_estimate(&dark, k) })
            .collect();
        Some(cumulants_from_central(&central))
    } else {
        None
    };

    let evaluate = |range: std::ops::Range<usize>| -> Vec<f64> {
        let mut s0_sum = 0.0;
        let moments: Vec<Vec<f64>> = batches
            .iter()
            .map(|(s_n, s0)| {
                let x = &s_n[range.clone()];
                s0_sum += sample_mean(&s0[range.clone()]);
                let mut central: Vec<f64> = (1..=k_max)
                    .map(|k| if k == 1 { 0.0 } else { central_estimate(x, k) })
                    .collect();
                if let Some(nk) = &noise_kappa {
                    let kappa: Vec<f64> = cumulants_from_central(&central)
                        .iter()
                        .zip(nk)
                        .map(|(a, b)| a - b)
                        .collect();
                    central = central_from_cumulants(&kappa);
                }
                central[0] = sample_mean(x);
                central
            })
            .collect();
        let s0 = s0_sum / batches.len() as f64;
        orders
            .iter()
            .map(|&k| match k {
                1 => Vector3::new(moments[0][0], moments[1][0], moments[2][0]).norm() / s0,
                2 => {
                    let d = [moments[0][1], moments[1][1], moments[2][1]];
                    let off = |p: usize, i: usize, j: usize| moments[p][1] - 0.5 * (d[i] + d[j]);
                    let c = Matrix3::new(
                        d[0],
                        off(3, 0, 1),
                        off(4, 0, 2),
                        off(3, 0, 1),
                        d[1],
                        off(5, 1, 2),
                        off(4, 0, 2),
                        off(5, 1, 2),
                        d[2],
                    );
                    dp2_eigen(&c, s0).map(|r| r.dp).unwrap_or(f64::NAN)
                }
                _ => {
                    let vals = moments.iter().map(|m| m[k - 1]);
                    let sup = vals.clone().fold(f64::NEG_INFINITY, f64::max);
                    let inf = vals.fold(f64::INFINITY, f64::min);
                    visibility(k, sup, inf, 0.0).unwrap_or(f64::NAN)
                }
            })
            .collect()
    };

    let n = config.pulses;
    let full = evaluate(0..n);
    let per_slice: Vec<Vec<f64>> = (0..options.slices)
        .map(|s| evaluate((s * n / options.slices)..((s + 1) * n / options.slices)))
        .collect();
    let b = options.slices as f64;
    Ok(orders
        .iter()
        .enumerate()
        .map(|(i, &order)| {
            let vals: Vec<f64> = per_slice.iter().map(|v| v[i]).collect();
            let mean = vals.iter().sum::<f64>() / b;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
            McDpEstimate {
                order,
                value: full[i],
                standard_error: (var / b).sqrt(),
            }
        })
        .collect())
}
