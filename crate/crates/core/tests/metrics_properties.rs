use bellpol::gaussian::{probe_state, MomentField};
use bellpol::geometry::{direction_from_waveplates, sphere_sweep, StokesDirection, WaveplateSetting};
use bellpol::metrics::{closed_form_p2, dp2_eigen, dp_of_field, dpk_search, DEFAULT_REFINE_TOL};
use bellpol::{BellState, BellStateSpec};
use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn spd_matrix() -> impl Strategy<Value = Matrix3<f64>> {
    (prop::array::uniform9(-2.0f64..2.0), 0.01f64..1.0).prop_map(|(a, shift)| {
        let a = Matrix3::from_row_slice(&a);
        a * a.transpose() + Matrix3::identity() * shift
    })
}

fn quadratic(c: &Matrix3<f64>, d: &StokesDirection) -> f64 {
    let n = Vector3::from(d.unit_vector());
    (n.transpose() * c * n)[0]
}

/// SO(3) image of a 2×2 field transformation on the (S1, S2, S3) basis
/// (σz, σx, σy): `U†σ_k U = Σ_j R_kj σ_j`.
fn stokes_rotation(u: &Matrix2<Complex64>) -> Matrix3<f64> {
    let i = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let sigma = [
        Matrix2::new(one, zero, zero, -one),
        Matrix2::new(zero, one, one, zero),
        Matrix2::new(zero, -i, i, zero),
    ];
    Matrix3::from_fn(|k, j| 0.5 * (sigma[j] * u.adjoint() * sigma[k] * u).trace().re)
}

proptest! {
    #[test]
    fn eigen_extremes_bracket_grid_samples(c in spd_matrix()) {
        let grid = sphere_sweep(5.0, 10.0).unwrap();
        let r = dp2_eigen(&c, 1.0).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.dp));
        prop_assert!(r.sup >= r.inf && r.inf >= 0.0);
        for d in grid.directions() {
            let v = quadratic(&c, d);
            prop_assert!(v <= r.sup * (1.0 + 1e-12) && v >= r.inf * (1.0 - 1e-12));
        }
    }

    #[test]
    fn triplets_show_hidden_polarization(nbar in 0.01f64..5.0, eta in 0.01f64..1.0) {
        for state in BellState::ALL {
            let field = MomentField::new(&BellStateSpec::from_nbar(state, nbar, 1).unwrap(), eta, 2).unwrap();
            let r = dp2_eigen(&field.covariance(), field.mean_s0()).unwrap();
            if state == BellState::PSI_MINUS {
                prop_assert!(r.dp <= 1e-12);
            } else {
                prop_assert!(r.dp > 0.0);
                prop_assert!((r.dp - closed_form_p2(state, eta, nbar)).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn grid_search_matches_eigen_on_random_covariances() {
    let grid = sphere_sweep(2.5, 5.0).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let c = a * a.transpose() + Matrix3::identity() * 0.05;
        let eigen = dp2_eigen(&c, 1.0).unwrap();
        let search = dpk_search(|d| quadratic(&c, d), 2, &grid, DEFAULT_REFINE_TOL).unwrap();
        assert!((search.dp - eigen.dp).abs() <= 1e-5, "{} vs {}", search.dp, eigen.dp);
        assert!(search.dp >= 0.0 && search.dp <= 1.0);
    }
}

#[test]
fn plates_rotate_extremal_directions_but_not_degrees() {
    let probe = probe_state();
    let before = MomentField::from_state(&probe, 1, 4);
    let grid = sphere_sweep(2.5, 5.0).unwrap();
    let base = dp2_eigen(&before.covariance(), before.mean_s0()).unwrap();
    let base4 = dp_of_field(&before, 4, &grid, DEFAULT_REFINE_TOL).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let w = WaveplateSetting::from_degrees(rng.random_range(-90.0..90.0), rng.random_range(-90.0..90.0));
        let r = stokes_rotation(&bellpol::geometry::measurement_unitary(&w));
        // S1 after the plates is S_n before them
        let n = Vector3::from(direction_from_waveplates(&w).unit_vector());
        assert!((r.row(0).transpose() - n).norm() < 1e-12);

        let after = MomentField::from_state(&probe.apply_polarization_rotation(&w), 1, 4);
        let rotated = dp2_eigen(&after.covariance(), after.mean_s0()).unwrap();
        assert!((rotated.dp - base.dp).abs() <= 1e-8);
        assert!((after.covariance() - r * before.covariance() * r.transpose()).norm() <= 1e-8);
        for (new, old) in [(rotated.argmax, base.argmax), (rotated.argmin, base.argmin)] {
            let mapped = r * Vector3::from(old.unit_vector());
            let overlap = Vector3::from(new.unit_vector()).dot(&mapped).abs();
            assert!((overlap - 1.0).abs() <= 1e-8, "overlap {overlap}");
        }
        let p4 = dp_of_field(&after, 4, &grid, DEFAULT_REFINE_TOL).unwrap();
        assert!((p4.dp - base4.dp).abs() <= 1e-6, "{} vs {}", p4.dp, base4.dp);
    }
}
