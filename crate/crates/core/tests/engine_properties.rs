use std::f64::consts::PI;

use bellpol::fit::{plate_angles, CurveModel, Plate};
use bellpol::fock::{build_state_fock, build_state_fock_with_bound, truncation_error};
use bellpol::gaussian::{build_state, central_moments, MomentField};
use bellpol::geometry::{direction_from_waveplates, hwp_trajectory, qwp_trajectory, StokesDirection, WaveplateSetting};
use bellpol::{BellState, BellStateSpec};
use proptest::prelude::*;

fn any_state() -> impl Strategy<Value = BellState> {
    (0usize..4).prop_map(|i| BellState::ALL[i])
}

fn setting_for(plate: Plate, chi: f64) -> WaveplateSetting {
    match plate {
        Plate::Hwp => WaveplateSetting::from_degrees(chi, 0.0),
        Plate::Qwp => WaveplateSetting::from_degrees(0.0, chi),
    }
}

#[test]
fn curves_match_closed_forms_on_parameter_grid() {
    for eta in [0.26, 1.0] {
        for nbar in [0.2, 1.0] {
            for state in [BellState::PSI_PLUS, BellState::PHI_PLUS] {
                let field = MomentField::new(&BellStateSpec::from_nbar(state, nbar, 1).unwrap(), eta, 2).unwrap();
                for plate in [Plate::Hwp, Plate::Qwp] {
                    let model = CurveModel::new(state, plate);
                    for chi in plate_angles(plate, 73) {
                        let got = field.nrf(&direction_from_waveplates(&setting_for(plate, chi)));
                        let want = model.nrf_degrees(chi, eta, nbar);
                        assert!(
                            (got - want).abs() <= 1e-9,
                            "{model} eta {eta} N {nbar} chi {chi}: {got} vs {want}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn hwp_and_qwp_curves_meet_at_zero() {
    for state in BellState::ALL {
        let field = MomentField::new(&BellStateSpec::from_nbar(state, 0.2, 1).unwrap(), 0.26, 2).unwrap();
        let h = field.nrf(&direction_from_waveplates(&setting_for(Plate::Hwp, 0.0)));
        let q = field.nrf(&direction_from_waveplates(&setting_for(Plate::Qwp, 0.0)));
        assert_eq!(h, q);
    }
}

#[test]
fn fine_trajectories_have_no_jumps() {
    for grid in [hwp_trajectory(3600).unwrap(), qwp_trajectory(3600).unwrap()] {
        let dirs: Vec<[f64; 3]> = grid.directions().map(StokesDirection::unit_vector).collect();
        for w in dirs.windows(2) {
            let d: f64 = (0..3).map(|i| (w[0][i] - w[1][i]).powi(2)).sum::<f64>().sqrt();
            assert!(d < 0.02);
        }
    }
}

#[test]
fn fourth_moment_is_gaussian_for_large_mode_counts() {
    let grid = bellpol::geometry::sphere_sweep(2.5, 5.0).unwrap();
    for state in BellState::ALL {
        for modes in [74, 100, 400] {
            let field = MomentField::new(&BellStateSpec::from_nbar(state, 0.2, modes).unwrap(), 0.26, 4).unwrap();
            for d in grid.directions() {
                let c = field.central(d);
                assert!((c[3] / (3.0 * c[1] * c[1]) - 1.0).abs() <= 0.05, "{state} M {modes}");
            }
        }
    }
}

#[test]
fn truncation_error_decreases_and_norm_approaches_one() {
    let spec = BellStateSpec::from_gain(BellState::PSI_PLUS, 0.3, 1).unwrap();
    let mut last_eps = f64::INFINITY;
    let mut last_norm = 0.0;
    for c in 2..=12 {
        let eps = truncation_error(0.3, c);
        let norm = build_state_fock_with_bound(&spec, c, 1.0).unwrap().norm_sqr();
        assert!(eps < last_eps);
        assert!(norm > last_norm);
        assert!((1.0 - norm - eps).abs() < 1e-12, "c {c}: 1 - {norm} vs {eps}");
        last_eps = eps;
        last_norm = norm;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mean_stokes_vector_vanishes(state in any_state(), nbar in 0.01f64..3.0, eta in 0.0f64..1.0,
                                   h in -90.0f64..90.0, q in -90.0f64..90.0) {
        let spec = BellStateSpec::from_nbar(state, nbar, 3).unwrap();
        let rotated = build_state(&spec).apply_loss(eta).unwrap()
            .apply_polarization_rotation(&WaveplateSetting::from_degrees(h, q));
        let field = MomentField::from_state(&rotated, 3, 2);
        for m in field.mean_stokes() {
            prop_assert!(m.abs() <= 1e-12);
        }
    }

    #[test]
    fn loss_commutes_with_plates(state in any_state(), nbar in 0.01f64..3.0, eta in 0.0f64..1.0,
                                 h in -90.0f64..90.0, q in -90.0f64..90.0) {
        let s = build_state(&BellStateSpec::from_nbar(state, nbar, 1).unwrap());
        let w = WaveplateSetting::from_degrees(h, q);
        let a = s.apply_loss(eta).unwrap().apply_polarization_rotation(&w);
        let b = s.apply_polarization_rotation(&w).apply_loss(eta).unwrap();
        prop_assert!((a.normal - b.normal).norm() <= 1e-12);
        prop_assert!((a.anomalous - b.anomalous).norm() <= 1e-12);
    }

    #[test]
    fn cumulants_are_linear_in_mode_count(state in any_state(), nbar in 0.01f64..2.0, eta in 0.05f64..1.0,
                                          theta in 0.0..PI, phi in -PI..PI) {
        let d = StokesDirection::new(theta, phi);
        let one = central_moments(&BellStateSpec::from_nbar(state, nbar, 1).unwrap(), eta, &d, 4).unwrap();
        let four = central_moments(&BellStateSpec::from_nbar(state, nbar, 4).unwrap(), eta, &d, 4).unwrap();
        let mu = |r: &bellpol::gaussian::MomentReport, k: usize| r.central_moments[&k];
        // κ2 = μ2 and κ4 = μ4 − 3μ2² for symmetric distributions
        let k2 = |r| mu(r, 2);
        let k4 = |r| mu(r, 4) - 3.0 * mu(r, 2).powi(2);
        let scale = mu(&four, 4).abs().max(1.0);
        prop_assert!((k2(&four) - 4.0 * k2(&one)).abs() <= 1e-10 * scale);
        prop_assert!((k4(&four) - 4.0 * k4(&one)).abs() <= 1e-10 * scale);
    }

    #[test]
    fn fourth_moment_excess_falls_as_inverse_mode_count(state in any_state(), modes in 2u32..400,
                                                        theta in 0.0..PI, phi in -PI..PI) {
        let d = StokesDirection::new(theta, phi);
        let excess = |m: u32| {
            let f = MomentField::new(&BellStateSpec::from_nbar(state, 0.2, m).unwrap(), 0.26, 4).unwrap();
            let c = f.central(&d);
            c[3] / (3.0 * c[1] * c[1]) - 1.0
        };
        let one = excess(1);
        prop_assert!((excess(modes) * modes as f64 - one).abs() <= 1e-9 * one.abs().max(1.0));
    }

    #[test]
    fn nrf_stays_within_curve_extremes(nbar in 0.01f64..3.0, eta in 0.0f64..1.0,
                                       h in -90.0f64..90.0, q in -90.0f64..90.0) {
        let field = MomentField::new(&BellStateSpec::from_nbar(BellState::PSI_PLUS, nbar, 1).unwrap(), eta, 2).unwrap();
        let nrf = field.nrf(&direction_from_waveplates(&WaveplateSetting::from_degrees(h, q)));
        prop_assert!(nrf >= 1.0 - eta - 1e-12);
        prop_assert!(nrf <= 1.0 + eta * (2.0 * nbar + 1.0) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn oracle_third_moments_vanish_at_random_settings(state in any_state(), h in -45.0f64..45.0, q in -45.0f64..45.0) {
        let spec = BellStateSpec::from_gain(state, 0.2, 1).unwrap();
        let rotated = build_state_fock(&spec, 8).unwrap()
            .apply_waveplates(&WaveplateSetting::from_degrees(h, q)).unwrap();
        for v in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
            let m = rotated.stokes_moments(&StokesDirection::from_vector(v), 3).unwrap();
            prop_assert!(m.central[2].abs() <= 1e-8);
        }
    }
}
