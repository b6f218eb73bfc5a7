//! Weighted least-squares estimation of `(η, N)` from NRF curves.
//!
//! Every curve has the form `NRF(χ) = 1 + η·a(χ) + ηN·b(χ)`. The iteration is
//! Levenberg–Marquardt in `(logit η, ln N)` so the estimates stay inside
//! `0 < η < 1` and `N > 0`; the covariance is reported in `(η, N)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{BellState, Family, Sign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plate {
    Hwp,
    Qwp,
}

impl fmt::Display for Plate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Plate::Hwp => "hwp",
            Plate::Qwp => "qwp",
        })
    }
}

impl FromStr for Plate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hwp" | "half" => Ok(Plate::Hwp),
            "qwp" | "quarter" => Ok(Plate::Qwp),
            other => Err(invalid(format!("unknown plate '{other}' (expected hwp or qwp)"))),
        }
    }
}

/// NRF against the angle of one plate, the other held at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CurveModel {
    pub state: BellState,
    pub plate: Plate,
}

impl CurveModel {
    pub fn new(state: BellState, plate: Plate) -> Self {
        Self { state, plate }
    }

    /// Coefficients `(a, b)` of `NRF = 1 + η·a + ηN·b` at plate angle `chi`
    /// (radians).
    pub fn coefficients(&self, chi: f64) -> (f64, f64) {
        let c4 = (4.0 * chi).cos();
        let c8 = (8.0 * chi).cos();
        match (self.state.family, self.state.sign, self.plate) {
            (Family::Psi, Sign::Minus, _) => (-1.0, 0.0),
            // 1 + ηN − η(1+N)cos8χ
            (Family::Psi, Sign::Plus, Plate::Hwp) => (-c8, 1.0 - c8),
            // 1 + ηN + η(N+1)(1 − 4cos4χ − cos8χ)/4
            (Family::Psi, Sign::Plus, Plate::Qwp) => {
                let g = 0.25 * (1.0 - 4.0 * c4 - c8);
                (g, 1.0 + g)
            }
            // 1 + η + 2ηN
            (Family::Phi, Sign::Plus, Plate::Hwp) => (1.0, 2.0),
            // 1 + ηN + η(1+N)cos4χ
            (Family::Phi, Sign::Plus, Plate::Qwp) => (c4, 1.0 + c4),
            // 1 + ηN + η(1+N)cos8χ
            (Family::Phi, Sign::Minus, Plate::Hwp) => (c8, 1.0 + c8),
            // 1 + η(2N+1) − η(1+N)(1 − cos8χ)/4
            (Family::Phi, Sign::Minus, Plate::Qwp) => {
                let g = 0.25 * (1.0 - c8);
                (1.0 - g, 2.0 - g)
            }
        }
    }

    pub fn nrf(&self, chi: f64, eta: f64, nbar: f64) -> f64 {
        let (a, b) = self.coefficients(chi);
        1.0 + eta * a + eta * nbar * b
    }

    /// `(∂NRF/∂η, ∂NRF/∂N)`.
    pub fn gradient(&self, chi: f64, eta: f64, nbar: f64) -> (f64, f64) {
        let (a, b) = self.coefficients(chi);
        (a + nbar * b, eta * b)
    }

    pub fn nrf_degrees(&self, chi_deg: f64, eta: f64, nbar: f64) -> f64 {
        self.nrf(chi_deg.to_radians(), eta, nbar)
    }
}

impl fmt::Display for CurveModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.state, self.plate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub chi_degrees: f64,
    pub nrf: f64,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub model: CurveModel,
    pub samples: Vec<CurveSample>,
}

impl Dataset {
    pub fn new(model: CurveModel, samples: Vec<CurveSample>) -> Self {
        Self { model, samples }
    }

    /// Exact model values at the given angles.
    pub fn synthetic(model: CurveModel, chi_degrees: &[f64], eta: f64, nbar: f64, sigma: Option<f64>) -> Self {
        let samples = chi_degrees
            .iter()
            .map(|&chi| CurveSample {
                chi_degrees: chi,
                nrf: model.nrf_degrees(chi, eta, nbar),
                sigma,
            })
            .collect();
        Self { model, samples }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub initial_eta: f64,
    pub initial_nbar: f64,
    pub max_iterations: usize,
    /// Stop once the relative parameter step falls below this.
    pub step_tolerance: f64,
    pub prescan: bool,
    /// Scale the covariance by the reduced chi-square. `None` does so only
    /// when some sample carries no sigma.
    pub scale_covariance: Option<bool>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            initial_eta: 0.5,
            initial_nbar: 0.5,
            max_iterations: 200,
            step_tolerance: 1e-8,
            prescan: true,
            scale_covariance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub dataset: usize,
    pub chi_degrees: f64,
    pub observed: f64,
    pub model: f64,
    /// `(observed − model) / sigma`.
    pub weighted_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub eta: f64,
    pub nbar: f64,
    /// Covariance of `(η, N)`.
    pub covariance: [[f64; 2]; 2],
    pub residual_norm: f64,
    pub chi_square: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Vec<ResidualPoint>,
}

impl FitResult {
    pub fn eta_std_error(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn nbar_std_error(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
}

struct Point {
    model: CurveModel,
    chi: f64,
    y: f64,
    weight: f64,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn chi_square(points: &[Point], eta: f64, nbar: f64) -> f64 {
    points
        .iter()
        .map(|p| ((p.y - p.model.nrf(p.chi, eta, nbar)) * p.weight).powi(2))
        .sum()
}

/// Weighted residuals and Jacobian in `(η, N)`.
fn linearize(points: &[Point], eta: f64, nbar: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
    points
        .iter()
        .map(|p| {
            let r = (p.y - p.model.nrf(p.chi, eta, nbar)) * p.weight;
            let (de, dn) = p.model.gradient(p.chi, eta, nbar);
            (r, [de * p.weight, dn * p.weight])
        })
        .unzip()
}

fn normal_equations(res: &[f64], jac: &[[f64; 2]], scale: [f64; 2]) -> (Matrix2<f64>, Vector2<f64>) {
    let mut jtj = Matrix2::zeros();
    let mut jtr = Vector2::zeros();
    for (r, j) in res.iter().zip(jac) {
        let row = [j[0] * scale[0], j[1] * scale[1]];
        for a in 0..2 {
            jtr[a] += row[a] * r;
            for b in 0..2 {
                jtj[(a, b)] += row[a] * row[b];
            }
        }
    }
    (jtj, jtr)
}

/// Smallest over largest singular value of the column-normalized Jacobian.
fn conditioning(jac: &[[f64; 2]]) -> f64 {
    let n = jac.len();
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, 2);
    for (i, j) in jac.iter().enumerate() {
        m[(i, 0)] = j[0];
        m[(i, 1)] = j[1];
    }
    for c in 0..2 {
        let norm = m.column(c).norm();
        if norm == 0.0 {
            return 0.0;
        }
        m.column_mut(c).scale_mut(1.0 / norm);
    }
    let sv = m.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if hi > 0.0 {
        lo / hi
    } else {
        0.0
    }
}

const IDENTIFIABILITY_FLOOR: f64 = 1e-7;

/// Jointly fits all datasets.
pub fn fit(datasets: &[Dataset], options: &FitOptions) -> Result<FitResult> {
    let mut points = Vec::new();
    let mut any_unweighted = false;
    for (di, ds) in datasets.iter().enumerate() {
        for (si, s) in ds.samples.iter().enumerate() {
            if !s.chi_degrees.is_finite() || !s.nrf.is_finite() {
                return Err(invalid(format!("dataset {di} sample {si}: non-finite value")));
            }
            let weight = match s.sigma {
                Some(sig) if sig > 0.0 && sig.is_finite() => 1.0 / sig,
                Some(sig) => {
                    return Err(invalid(format!(
                        "dataset {di} sample {si}: sigma {sig} must be positive"
                    )))
                }
                None => {
                    any_unweighted = true;
                    1.0
                }
            };
            points.push(Point {
                model: ds.model,
                chi: s.chi_degrees.to_radians(),
                y: s.nrf,
                weight,
            });
        }
    }
    if points.len() < 3 {
        return Err(invalid(format!("fit needs at least 3 points, got {}", points.len())));
    }
    if !(options.initial_eta > 0.0 && options.initial_eta < 1.0 && options.initial_nbar > 0.0) {
        return Err(invalid("initial guess needs 0 < eta < 1 and N > 0"));
    }
    if options.max_iterations == 0 || options.step_tolerance.is_nan() || options.step_tolerance <= 0.0 {
        return Err(invalid("iteration limit and step tolerance must be positive"));
    }

    let (mut eta, mut nbar) = (options.initial_eta, options.initial_nbar);
    let probe = linearize(&points, eta, nbar).1;
    if conditioning(&probe) < IDENTIFIABILITY_FLOOR {
        return Err(Error::Unidentifiable(
            "the supplied curves constrain only one combination of eta and N".into(),
        ));
    }
    if options.prescan {
        let mut best = chi_square(&points, eta, nbar);
        for i in 0..8 {
            let e = 0.05 + 0.9 * i as f64 / 7.0;
            for j in 0..8 {
                let n = 0.01 * 500f64.powf(j as f64 / 7.0);
                let c = chi_square(&points, e, n);
                if c < best {
                    best = c;
                    eta = e;
                    nbar = n;
                }
            }
        }
    }

    let mut params = Vector2::new(logit(eta), nbar.ln());
    let mut lambda = 1e-3;
    let mut cost = chi_square(&points, eta, nbar);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let (res, jac) = linearize(&points, eta, nbar);
        let (jtj, jtr) = normal_equations(&res, &jac, [eta * (1.0 - eta), nbar]);
        let mut accepted = false;
        for _ in 0..60 {
            let damped = jtj + Matrix2::from_diagonal(&jtj.diagonal()) * lambda;
            let Some(step) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = params + step;
            let (te, tn) = (logistic(trial[0]), trial[1].exp());
            let tc = chi_square(&points, te, tn);
            if tc <= cost && tc.is_finite() {
                let rel = step.norm() / params.norm().max(1.0);
                params = trial;
                eta = te;
                nbar = tn;
                cost = tc;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if rel < options.step_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: stationary to working precision
            converged = true;
        }
        if converged {
            break;
        }
    }

    let (res, jac) = linearize(&points, eta, nbar);
    if conditioning(&jac) < IDENTIFIABILITY_FLOOR {
        return Err(Error::Unidentifiable(format!(
            "Jacobian is rank deficient at eta = {eta}, N = {nbar}"
        )));
    }
    let (jtj, _) = normal_equations(&res, &jac, [1.0, 1.0]);
    let inv = jtj
        .try_inverse()
        .ok_or_else(|| Error::Unidentifiable("normal matrix is singular".into()))?;
    let dof = points.len().saturating_sub(2).max(1) as f64;
    let scale = if options.scale_covariance.unwrap_or(any_unweighted) {
        cost / dof
    } else {
        1.0
    };
    let cov = inv * scale;
    let covariance = [
        [cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)])],
        [0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]],
    ];

    let mut residuals = Vec::with_capacity(points.len());
    for (di, ds) in datasets.iter().enumerate() {
        for s in &ds.samples {
            let m = ds.model.nrf_degrees(s.chi_degrees, eta, nbar);
            let w = s.sigma.map_or(1.0, |sig| 1.0 / sig);
            residuals.push(ResidualPoint {
                dataset: di,
                chi_degrees: s.chi_degrees,
                observed: s.nrf,
                model: m,
                weighted_residual: (s.nrf - m) * w,
            });
        }
    }
    Ok(FitResult {
        eta,
        nbar,
        covariance,
        residual_norm: cost.sqrt(),
        chi_square: cost,
        iterations,
        converged,
        residuals,
    })
}

/// `Jᵀr` at the reported optimum, in `(η, N)`; zero at a stationary point.
pub fn gradient_at(datasets: &[Dataset], eta: f64, nbar: f64) -> [f64; 2] {
    let mut g = [0.0; 2];
    for ds in datasets {
        for s in &ds.samples {
            let chi = s.chi_degrees.to_radians();
            let w = s.sigma.map_or(1.0, |sig| 1.0 / sig);
            let r = (s.nrf - ds.model.nrf(chi, eta, nbar)) * w;
            let (de, dn) = ds.model.gradient(chi, eta, nbar);
            g[0] += de * w * r;
            g[1] += dn * w * r;
        }
    }
    g
}

/// Uniform plate angles over one period of the curve, endpoints included.
pub fn plate_angles(plate: Plate, points: usize) -> Vec<f64> {
    let span = match plate {
        Plate::Hwp => 90.0,
        Plate::Qwp => 180.0,
    };
    let n = points.max(2);
    (0..n).map(|i| span * i as f64 / (n - 1) as f64).collect()
}
