//! Self-checks run by the `validate` command.
//!
//! * oracle: Gaussian engine against the truncated Fock state,
//! * curves: closed-form NRF curves, singlet isotropy and the
//!   rotation-versus-direction cross-path check on a generic probe state,
//! * loss: Monte Carlo with binomial thinning against the engine's
//!   beamsplitter loss.

use std::fmt;
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::fit::{plate_angles, CurveModel, Plate};
use crate::fock::build_state_fock;
use crate::gaussian::{
    build_state, probe_state, stokes_component_form, stokes_quadratic_form_with, wick_moment, BellState, BellStateSpec,
    MomentField, StokesConvention,
};
use crate::geometry::{direction_from_waveplates, sphere_sweep, StokesDirection, WaveplateSetting};
use crate::pulse::{estimate_moments, simulate_setting, DetectorConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ok = self.checks.iter().filter(|c| c.passed).count();
        writeln!(
            f,
            "[{}] {}: {}/{} checks in {:.2} s",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite,
            ok,
            self.checks.len(),
            self.elapsed.as_secs_f64()
        )?;
        for c in &self.checks {
            writeln!(
                f,
                "  {} {}: {}",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

struct Suite {
    name: &'static str,
    start: Instant,
    checks: Vec<Check>,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            start: Instant::now(),
            checks: Vec::new(),
        }
    }

    fn within(&mut self, name: String, error: f64, tol: f64) {
        self.checks.push(Check {
            name,
            passed: error <= tol,
            detail: format!("max error {error:.3e} (tolerance {tol:.0e})"),
        });
    }

    fn finish(self) -> SuiteReport {
        SuiteReport {
            suite: self.name.to_string(),
            checks: self.checks,
            elapsed: self.start.elapsed(),
        }
    }
}

/// Fock oracle against the Wick engine at `η = 1`, `M = 1`.
pub fn oracle_suite(cutoff: usize) -> Result<SuiteReport> {
    let mut suite = Suite::new("oracle-equivalence");
    let settings = [
        WaveplateSetting::identity(),
        WaveplateSetting::from_degrees(22.5, 0.0),
        WaveplateSetting::from_degrees(13.0, 37.0),
    ];
    for gain in [0.1, 0.3] {
        for state in BellState::ALL {
            let spec = BellStateSpec::from_gain(state, gain, 1)?;
            let fock = build_state_fock(&spec, cutoff)?;
            let gauss = build_state(&spec);
            let mut err = 0.0f64;
            for k in 1..=3 {
                let dir = StokesDirection::from_vector({
                    let mut v = [0.0; 3];
                    v[k - 1] = 1.0;
                    v
                });
                let f = fock.stokes_moments(&dir, 4)?;
                let form = stokes_component_form(k);
                for order in [1, 2, 4] {
                    let g = wick_moment(&gauss, &form, order)?;
                    err = err.max((f.raw[order - 1] - g).abs());
                }
            }
            suite.within(format!("{state} gain {gain}: S1-S3 moments k=1,2,4"), err, 1e-6);

            let mut third = 0.0f64;
            for setting in &settings {
                let rotated = fock.apply_waveplates(setting)?;
                for v in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
                    let m = rotated.stokes_moments(&StokesDirection::from_vector(v), 3)?;
                    third = third.max(m.central[2].abs());
                }
            }
            suite.within(format!("{state} gain {gain}: third central moments"), third, 1e-8);
        }
    }
    Ok(suite.finish())
}

/// Curve reproduction. `convention` selects the S3 sign used to build the
/// direction-path forms; anything but the default must fail the
/// cross-path check.
pub fn curve_suite(convention: StokesConvention) -> Result<SuiteReport> {
    let mut suite = Suite::new("curve-reproduction");
    for (eta, nbar) in [(0.26, 0.2), (1.0, 1.0)] {
        for state in [BellState::PSI_PLUS, BellState::PHI_PLUS] {
            let spec = BellStateSpec::from_nbar(state, nbar, 1)?;
            let field = MomentField::new(&spec, eta, 2)?;
            for plate in [Plate::Hwp, Plate::Qwp] {
                let model = CurveModel::new(state, plate);
                let mut err = 0.0f64;
                for chi in plate_angles(plate, 73) {
                    let setting = match plate {
                        Plate::Hwp => WaveplateSetting::from_degrees(chi, 0.0),
                        Plate::Qwp => WaveplateSetting::from_degrees(0.0, chi),
                    };
                    let nrf = field.nrf(&direction_from_waveplates(&setting));
                    err = err.max((nrf - model.nrf_degrees(chi, eta, nbar)).abs());
                }
                suite.within(format!("{model} at eta {eta}, N {nbar}: 73 angles"), err, 1e-9);
            }
        }
    }

    let spec = BellStateSpec::from_nbar(BellState::PSI_MINUS, 0.2, 1)?;
    let field = MomentField::new(&spec, 0.26, 2)?;
    let sweep = sphere_sweep(2.5, 5.0)?;
    let iso = sweep
        .directions()
        .map(|d| (field.nrf(d) - 0.74).abs())
        .fold(0.0, f64::max);
    suite.within(
        format!("psi- isotropy over {} sweep directions", sweep.len()),
        iso,
        1e-10,
    );

    let spec = BellStateSpec::from_nbar(BellState::PHI_PLUS, 0.2, 1)?;
    let field = MomentField::new(&spec, 0.26, 2)?;
    let values: Vec<f64> = plate_angles(Plate::Hwp, 73)
        .into_iter()
        .map(|chi| field.nrf(&direction_from_waveplates(&WaveplateSetting::from_degrees(chi, 0.0))))
        .collect();
    let spread =
        values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - values.iter().cloned().fold(f64::INFINITY, f64::min);
    suite.within("phi+ invariance under linear rotation".into(), spread, 1e-10);

    let probe = probe_state();
    let s1 = stokes_component_form(1);
    let mut err = 0.0f64;
    for (h, q) in [
        (0.0, 0.0),
        (22.5, 0.0),
        (0.0, 45.0),
        (12.0, 31.0),
        (-20.0, 100.0),
        (33.0, 62.0),
    ] {
        let w = WaveplateSetting::from_degrees(h, q);
        let rotated = probe.apply_polarization_rotation(&w);
        let form = stokes_quadratic_form_with(&direction_from_waveplates(&w), convention);
        for k in 1..=2 {
            let jones = wick_moment(&rotated, &s1, k)?;
            let direct = wick_moment(&probe, &form, k)?;
            err = err.max((jones - direct).abs());
        }
    }
    suite.within("probe state: rotated S1 equals direction S_n".into(), err, 1e-10);
    Ok(suite.finish())
}

/// Loss-model equivalence: four states at five settings each, within
/// `sigmas` standard errors.
pub fn loss_suite(config: &DetectorConfig, quadruples: u32, sigmas: f64) -> Result<SuiteReport> {
    let mut suite = Suite::new("loss-equivalence");
    let settings = [
        WaveplateSetting::identity(),
        WaveplateSetting::from_degrees(22.5, 0.0),
        WaveplateSetting::from_degrees(0.0, 45.0),
        WaveplateSetting::from_degrees(11.0, 30.0),
        WaveplateSetting::from_degrees(37.0, 71.0),
    ];
    for (si, state) in BellState::ALL.into_iter().enumerate() {
        let spec = BellStateSpec::from_nbar(state, 0.2, quadruples)?;
        let field = MomentField::new(&spec, config.eta, 2)?;
        for (k, w) in settings.iter().enumerate() {
            let cfg = DetectorConfig {
                seed: config.seed.wrapping_add((5 * si + k) as u64),
                electronic_noise_sigma: 0.0,
                ..*config
            };
            let batch = simulate_setting(&spec, w, &cfg, None)?;
            let est = estimate_moments(&batch, 2)?;
            let expected = field.nrf(&direction_from_waveplates(w));
            let name = format!("{state} at ({:.1}°, {:.1}°)", w.chi_h_deg(), w.chi_q_deg());
            let check = match est.nrf.map(|n| (n, n.z_score(expected))) {
                Some((n, Ok(z))) => Check {
                    name,
                    passed: z.abs() <= sigmas,
                    detail: format!(
                        "NRF {:.4} ± {:.4} vs engine {:.4} (z = {:+.2})",
                        n.value, n.standard_error, expected, z
                    ),
                },
                _ => Check {
                    name,
                    passed: false,
                    detail: "no usable NRF estimate".into(),
                },
            };
            suite.checks.push(check);
        }
    }
    Ok(suite.finish())
}

/// All three suites with their default parameters.
pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    let loss = DetectorConfig {
        eta: 0.26,
        seed,
        ..Default::default()
    };
    Ok(vec![
        oracle_suite(12)?,
        curve_suite(StokesConvention::default())?,
        loss_suite(&loss, 100, 3.0)?,
    ])
}
