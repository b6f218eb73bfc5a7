//! Implementations behind the command-line subcommands.
//!
//! Each command takes a validated [`RunConfig`], writes its files atomically
//! and returns the text summary printed on stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fit::{fit, plate_angles, CurveModel, Dataset, FitOptions, FitResult, Plate};
use crate::gaussian::{BellState, MomentField, StokesConvention};
use crate::geometry::{direction_from_waveplates, project_s2s1, sphere_sweep, WaveplateSetting};
use crate::io::{
    cell, csv_document, read_curve_csv, with_extension, write_atomic, RunConfig, SphereMap, SphereMapRecord,
    CURVES_SCHEMA, PULSES_SCHEMA, RESIDUALS_SCHEMA, SWEEP_SCHEMA,
};
use crate::metrics::{
    closed_form_p2, coherent_fourth_moment, dp_of_field, gaussian_limit_dp, monte_carlo_dp, McDpEstimate, McDpOptions,
};
use crate::pulse::{
    estimate_moments, histogram, noise_reference, simulate_setting, subtract_electronic_noise, MomentEstimate,
};
use crate::validate::{curve_suite, loss_suite, oracle_suite, SuiteReport};

pub const DP_SCHEMA: &str = "bellpol.dp/v1";
pub const SIMULATE_SCHEMA: &str = "bellpol.simulate/v1";
pub const FIT_SCHEMA: &str = "bellpol.fit/v1";

fn output_prefix(cfg: &RunConfig, default: &str) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))
}

fn setting_for(plate: Plate, chi_deg: f64) -> WaveplateSetting {
    match plate {
        Plate::Hwp => WaveplateSetting::from_degrees(chi_deg, 0.0),
        Plate::Qwp => WaveplateSetting::from_degrees(0.0, chi_deg),
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Moment estimates at one setting, noise-corrected when configured.
fn measured_nrf(cfg: &RunConfig, setting: &WaveplateSetting, seed_offset: u64) -> Result<Option<MomentEstimate>> {
    let spec = cfg.spec()?;
    let mut det = cfg.detector()?;
    det.seed = det.seed.wrapping_add(seed_offset);
    let batch = simulate_setting(&spec, setting, &det, cfg.cutoff)?;
    let est = estimate_moments(&batch, 2)?;
    if cfg.subtract_noise && det.electronic_noise_sigma > 0.0 {
        let dark = noise_reference(&det)?;
        Ok(subtract_electronic_noise(&est, &dark)?.estimates.nrf)
    } else {
        Ok(est.nrf)
    }
}

/// NRF against one plate angle: exact engine and optionally Monte Carlo.
pub fn cmd_curves(cfg: &RunConfig) -> Result<String> {
    let spec = cfg.spec()?;
    let field = MomentField::new(&spec, cfg.eta, 2)?;
    let mut rows = Vec::with_capacity(cfg.points);
    for (i, chi) in plate_angles(cfg.plate, cfg.points).into_iter().enumerate() {
        let setting = setting_for(cfg.plate, chi);
        let exact = finite(field.nrf(&direction_from_waveplates(&setting)));
        let mc = if cfg.mc {
            measured_nrf(cfg, &setting, i as u64)?
        } else {
            None
        };
        rows.push(vec![
            chi.to_string(),
            cell(exact),
            cell(mc.map(|m| m.value)),
            cell(mc.map(|m| m.standard_error)),
        ]);
    }
    let doc = csv_document(CURVES_SCHEMA, &["chi_deg", "nrf_exact", "nrf_mc", "nrf_mc_se"], &rows)?;
    let path = with_extension(&output_prefix(cfg, "bellpol-curves"), "csv");
    write_atomic(&path, doc.as_bytes())?;
    Ok(format!(
        "{} {} curve ({} points{}) -> {}\n",
        cfg.state,
        cfg.plate,
        cfg.points,
        if cfg.mc { ", with Monte Carlo" } else { "" },
        path.display()
    ))
}

/// Sphere map of NRF and normalized fourth moment.
pub fn sphere_map(cfg: &RunConfig) -> Result<SphereMap> {
    let spec = cfg.spec()?;
    let field = MomentField::new(&spec, cfg.eta, 4)?;
    let grid = sphere_sweep(cfg.step_h_deg, cfg.step_q_deg)?;
    let mu4_coh = coherent_fourth_moment(field.mean_s0());
    let records = grid
        .entries
        .iter()
        .map(|(w, d)| {
            let (x, y) = project_s2s1(d);
            let central = field.central(d);
            SphereMapRecord {
                chi_h_deg: w.chi_h_deg(),
                chi_q_deg: w.chi_q_deg(),
                theta_deg: d.theta().to_degrees(),
                phi_deg: d.phi().to_degrees(),
                x,
                y,
                nrf: field.nrf(d),
                m4_normalized: if mu4_coh > 0.0 { central[3] / mu4_coh } else { f64::NAN },
            }
        })
        .collect();
    Ok(SphereMap {
        schema: SWEEP_SCHEMA.to_string(),
        state: cfg.state.to_string(),
        eta: cfg.eta,
        nbar: spec.nbar(),
        modes: spec.quadruples(),
        step_h_deg: cfg.step_h_deg,
        step_q_deg: cfg.step_q_deg,
        records,
    })
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<String> {
    let map = sphere_map(cfg)?;
    if map.records.iter().any(|r| !r.nrf.is_finite()) {
        return Err(Error::UndefinedDp("NRF is undefined for a dark beam (gain 0)".into()));
    }
    let prefix = output_prefix(cfg, "bellpol-sweep");
    let csv_path = with_extension(&prefix, "csv");
    let json_path = with_extension(&prefix, "json");
    write_atomic(&csv_path, map.to_csv()?.as_bytes())?;
    write_atomic(&json_path, map.to_json()?.as_bytes())?;
    let (lo, hi) = map
        .records
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.nrf), hi.max(r.nrf))
        });
    Ok(format!(
        "{} sweep: {} directions, NRF in [{lo:.6}, {hi:.6}] -> {}, {}\n",
        cfg.state,
        map.records.len(),
        csv_path.display(),
        json_path.display()
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactDp {
    pub order: usize,
    pub value: Option<f64>,
    pub sup: Option<f64>,
    pub inf: Option<f64>,
    pub method: Option<String>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderValue {
    pub order: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DpDocument {
    pub schema: String,
    pub state: String,
    pub eta: f64,
    pub nbar: f64,
    pub modes: u32,
    pub exact: Vec<ExactDp>,
    pub closed_form_p2: f64,
    pub gaussian_limit: Vec<OrderValue>,
    pub monte_carlo: Option<Vec<McDpEstimate>>,
    pub monte_carlo_pulses: Option<usize>,
}

/// Degrees of polarization for the configured orders.
pub fn dp_document(cfg: &RunConfig) -> Result<DpDocument> {
    let spec = cfg.spec()?;
    let k_max = cfg.orders.iter().copied().max().unwrap_or(2).max(2);
    let field = MomentField::new(&spec, cfg.eta, k_max)?;
    let grid = sphere_sweep(cfg.step_h_deg, cfg.step_q_deg)?;
    let mut exact = Vec::new();
    let mut p2_exact = None;
    for &k in &cfg.orders {
        let entry = match dp_of_field(&field, k, &grid, cfg.refine_tol) {
            Ok(r) => {
                if k == 2 {
                    p2_exact = Some(r.dp);
                }
                ExactDp {
                    order: k,
                    value: Some(r.dp),
                    sup: Some(r.sup),
                    inf: Some(r.inf),
                    method: Some(r.method.to_string()),
                    note: None,
                }
            }
            Err(Error::UndefinedDp(why)) => ExactDp {
                order: k,
                value: None,
                sup: None,
                inf: None,
                method: None,
                note: Some(format!("undefined: {why}")),
            },
            Err(e) => return Err(e),
        };
        exact.push(entry);
    }
    let closed = closed_form_p2(cfg.state, cfg.eta, spec.nbar());
    let p2_ref = p2_exact.unwrap_or(closed);
    let gaussian_limit = cfg
        .orders
        .iter()
        .filter(|k| **k >= 4 && *k % 2 == 0)
        .map(|&k| gaussian_limit_dp(p2_ref.clamp(0.0, 1.0), k).map(|value| OrderValue { order: k, value }))
        .collect::<Result<Vec<_>>>()?;
    let (monte_carlo, monte_carlo_pulses) = if cfg.mc {
        let orders: Vec<usize> = cfg.orders.iter().copied().filter(|k| *k <= 2 || k % 2 == 0).collect();
        let options = McDpOptions {
            subtract_noise: cfg.subtract_noise,
            cutoff: cfg.cutoff,
            ..Default::default()
        };
        let est = if orders.is_empty() {
            Vec::new()
        } else {
            monte_carlo_dp(&spec, &cfg.detector()?, &orders, &options)?
        };
        (Some(est), Some(cfg.pulses))
    } else {
        (None, None)
    };
    Ok(DpDocument {
        schema: DP_SCHEMA.to_string(),
        state: cfg.state.to_string(),
        eta: cfg.eta,
        nbar: spec.nbar(),
        modes: spec.quadruples(),
        exact,
        closed_form_p2: closed,
        gaussian_limit,
        monte_carlo,
        monte_carlo_pulses,
    })
}

pub fn cmd_dp(cfg: &RunConfig) -> Result<String> {
    let doc = dp_document(cfg)?;
    let path = with_extension(&output_prefix(cfg, "bellpol-dp"), "json");
    write_atomic(&path, to_json(&doc)?.as_bytes())?;
    let mut out = String::new();
    writeln!(
        out,
        "{} at eta = {}, N = {:.6}, M = {}",
        doc.state, doc.eta, doc.nbar, doc.modes
    )
    .ok();
    for e in &doc.exact {
        match (e.value, &e.note) {
            (Some(v), _) => writeln!(out, "  P{} = {v:.6} ({})", e.order, e.method.as_deref().unwrap_or("")),
            (None, Some(n)) => writeln!(out, "  P{}: {n}", e.order),
            _ => Ok(()),
        }
        .ok();
    }
    writeln!(out, "  closed-form P2 = {:.6}", doc.closed_form_p2).ok();
    for g in &doc.gaussian_limit {
        writeln!(out, "  Gaussian-limit P{} = {:.6}", g.order, g.value).ok();
    }
    if let Some(mc) = &doc.monte_carlo {
        for m in mc {
            writeln!(
                out,
                "  Monte Carlo P{} = {:.4} ± {:.4} ({} pulses per direction)",
                m.order,
                m.value,
                m.standard_error,
                doc.monte_carlo_pulses.unwrap_or(0)
            )
            .ok();
        }
    }
    writeln!(out, "  -> {}", path.display()).ok();
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct EstimateRow {
    order: usize,
    value: f64,
    standard_error: f64,
}

impl From<&MomentEstimate> for EstimateRow {
    fn from(m: &MomentEstimate) -> Self {
        Self {
            order: m.order,
            value: m.value,
            standard_error: m.standard_error,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SimulateDocument {
    schema: String,
    state: String,
    eta: f64,
    nbar: f64,
    modes: u32,
    chi_h_deg: f64,
    chi_q_deg: f64,
    pulses: usize,
    seed: u64,
    electronic_noise_sigma: f64,
    s_n: Vec<EstimateRow>,
    s0: Vec<EstimateRow>,
    nrf: Option<EstimateRow>,
    corrected_s_n: Option<Vec<EstimateRow>>,
    corrected_nrf: Option<EstimateRow>,
    over_subtracted: Option<bool>,
    nrf_exact: Option<f64>,
    histogram_lower: f64,
    histogram_width: f64,
    histogram_counts: Vec<u64>,
    histogram_skewness: f64,
    normality_p_value: Option<f64>,
}

/// One Monte Carlo batch at the configured plate setting.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<String> {
    let spec = cfg.spec()?;
    let det = cfg.detector()?;
    let setting = WaveplateSetting::from_degrees(cfg.chi_h_deg, cfg.chi_q_deg);
    let batch = simulate_setting(&spec, &setting, &det, cfg.cutoff)?;
    let k_max = cfg.orders.iter().copied().max().unwrap_or(2).clamp(2, 6);
    let est = estimate_moments(&batch, k_max)?;
    let corrected = if cfg.subtract_noise && det.electronic_noise_sigma > 0.0 {
        Some(subtract_electronic_noise(&est, &noise_reference(&det)?)?)
    } else {
        None
    };
    let hist = histogram(&batch, cfg.bins)?;
    let exact = finite(MomentField::new(&spec, cfg.eta, 2)?.nrf(&direction_from_waveplates(&setting)));
    let doc = SimulateDocument {
        schema: SIMULATE_SCHEMA.to_string(),
        state: cfg.state.to_string(),
        eta: cfg.eta,
        nbar: spec.nbar(),
        modes: spec.quadruples(),
        chi_h_deg: cfg.chi_h_deg,
        chi_q_deg: cfg.chi_q_deg,
        pulses: batch.len(),
        seed: det.seed,
        electronic_noise_sigma: det.electronic_noise_sigma,
        s_n: est.s_n.iter().map(EstimateRow::from).collect(),
        s0: est.s0.iter().map(EstimateRow::from).collect(),
        nrf: est.nrf.as_ref().map(EstimateRow::from),
        corrected_s_n: corrected
            .as_ref()
            .map(|c| c.estimates.s_n.iter().map(EstimateRow::from).collect()),
        corrected_nrf: corrected
            .as_ref()
            .and_then(|c| c.estimates.nrf.as_ref().map(EstimateRow::from)),
        over_subtracted: corrected.as_ref().map(|c| c.over_subtracted),
        nrf_exact: exact,
        histogram_lower: hist.lower,
        histogram_width: hist.width,
        histogram_counts: hist.counts.clone(),
        histogram_skewness: hist.skewness,
        normality_p_value: hist.normality_test().ok().map(|t| t.p_value),
    };

    let prefix = output_prefix(cfg, "bellpol-simulate");
    let mut body = Vec::new();
    batch.write_csv(&mut body)?;
    let mut csv = format!("# schema: {PULSES_SCHEMA}\n").into_bytes();
    csv.extend_from_slice(&body);
    let csv_path = with_extension(&prefix, "csv");
    let json_path = with_extension(&prefix, "json");
    write_atomic(&csv_path, &csv)?;
    write_atomic(&json_path, to_json(&doc)?.as_bytes())?;

    let mut out = String::new();
    writeln!(
        out,
        "{} at ({}°, {}°): {} pulses, M = {}, eta = {}, sigma = {:.4}",
        cfg.state,
        cfg.chi_h_deg,
        cfg.chi_q_deg,
        batch.len(),
        spec.quadruples(),
        cfg.eta,
        det.electronic_noise_sigma
    )
    .ok();
    if let Some(n) = &doc.nrf {
        writeln!(out, "  NRF (raw) = {:.4} ± {:.4}", n.value, n.standard_error).ok();
    }
    if let Some(n) = &doc.corrected_nrf {
        writeln!(
            out,
            "  NRF (noise subtracted) = {:.4} ± {:.4}",
            n.value, n.standard_error
        )
        .ok();
    }
    if let Some(e) = exact {
        writeln!(out, "  NRF (engine) = {e:.4}").ok();
    }
    if doc.over_subtracted == Some(true) {
        writeln!(out, "  warning: noise subtraction left a negative variance").ok();
    }
    writeln!(out, "  -> {}, {}", csv_path.display(), json_path.display()).ok();
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct FitDocument<'a> {
    schema: &'a str,
    datasets: Vec<String>,
    #[serde(flatten)]
    result: &'a FitResult,
    eta_std_error: f64,
    nbar_std_error: f64,
}

/// Fits `(η, N)` to one or more `(plate, csv)` datasets of `cfg.state`.
pub fn cmd_fit(cfg: &RunConfig, inputs: &[(Plate, PathBuf)], options: &FitOptions) -> Result<String> {
    if inputs.is_empty() {
        return Err(invalid("fit needs at least one --data PLATE=PATH input"));
    }
    let datasets = inputs
        .iter()
        .map(|(plate, path)| Ok(Dataset::new(CurveModel::new(cfg.state, *plate), read_curve_csv(path)?)))
        .collect::<Result<Vec<_>>>()?;
    let result = fit(&datasets, options)?;
    let doc = FitDocument {
        schema: FIT_SCHEMA,
        datasets: datasets.iter().map(|d| d.model.to_string()).collect(),
        result: &result,
        eta_std_error: result.eta_std_error(),
        nbar_std_error: result.nbar_std_error(),
    };
    let prefix = output_prefix(cfg, "bellpol-fit");
    let json_path = with_extension(&prefix, "json");
    let resid_path = residual_path(&prefix);
    write_atomic(&json_path, to_json(&doc)?.as_bytes())?;
    let rows: Vec<Vec<String>> = result
        .residuals
        .iter()
        .map(|r| {
            vec![
                datasets[r.dataset].model.to_string(),
                r.chi_degrees.to_string(),
                r.observed.to_string(),
                r.model.to_string(),
                r.weighted_residual.to_string(),
            ]
        })
        .collect();
    let doc = csv_document(
        RESIDUALS_SCHEMA,
        &[
            "dataset",
            "chi_degrees",
            "nrf_observed",
            "nrf_model",
            "weighted_residual",
        ],
        &rows,
    )?;
    write_atomic(&resid_path, doc.as_bytes())?;
    let mut out = format!(
        "eta = {:.6} ± {:.6}, N = {:.6} ± {:.6} ({} iterations{})\n",
        result.eta,
        result.eta_std_error(),
        result.nbar,
        result.nbar_std_error(),
        result.iterations,
        if result.converged { "" } else { ", NOT converged" }
    );
    writeln!(out, "  -> {}, {}", json_path.display(), resid_path.display()).ok();
    Ok(out)
}

fn residual_path(prefix: &Path) -> PathBuf {
    let stem = prefix
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    prefix.with_file_name(format!("{stem}-residuals.csv"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteSelection {
    All,
    Oracle,
    Curves,
    Loss,
}

/// Runs the selected suites; the boolean is the overall verdict.
pub fn cmd_validate(cfg: &RunConfig, which: SuiteSelection, convention: StokesConvention) -> Result<(bool, String)> {
    let mut reports: Vec<SuiteReport> = Vec::new();
    if matches!(which, SuiteSelection::All | SuiteSelection::Oracle) {
        reports.push(oracle_suite(cfg.cutoff.unwrap_or(12))?);
    }
    if matches!(which, SuiteSelection::All | SuiteSelection::Curves) {
        reports.push(curve_suite(convention)?);
    }
    if matches!(which, SuiteSelection::All | SuiteSelection::Loss) {
        let det = crate::pulse::DetectorConfig {
            eta: cfg.eta,
            pulses: cfg.pulses,
            seed: cfg.seed,
            chunk_size: cfg.chunk_size,
            electronic_noise_sigma: 0.0,
        };
        reports.push(loss_suite(&det, cfg.modes, 3.0)?);
    }
    let ok = reports.iter().all(SuiteReport::passed);
    let mut out: String = reports.iter().map(|r| r.to_string()).collect();
    writeln!(out, "{}", if ok { "all suites passed" } else { "validation FAILED" }).ok();
    Ok((ok, out))
}

/// Plate CSV of exact model values, the inverse of [`cmd_fit`]'s input.
pub fn synthetic_curve_csv(
    state: BellState,
    plate: Plate,
    points: usize,
    eta: f64,
    nbar: f64,
    sigma: Option<f64>,
) -> Result<String> {
    let model = CurveModel::new(state, plate);
    let rows: Vec<Vec<String>> = plate_angles(plate, points)
        .into_iter()
        .map(|chi| {
            vec![
                chi.to_string(),
                model.nrf_degrees(chi, eta, nbar).to_string(),
                cell(sigma),
            ]
        })
        .collect();
    csv_document("bellpol.curve-data/v1", &["chi_degrees", "nrf", "sigma"], &rows)
}
