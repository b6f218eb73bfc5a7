use bellpol::gaussian::MomentField;
use bellpol::geometry::{direction_from_waveplates, WaveplateSetting};
use bellpol::metrics::{monte_carlo_dp, McDpOptions};
use bellpol::pulse::{
    default_noise_sigma, estimate_moments, histogram, noise_reference, outcome_table, sample_pulses, simulate_setting,
    subtract_electronic_noise, DetectorConfig, PulseBatch, PulseRecord,
};
use bellpol::{BellState, BellStateSpec};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

const ETA: f64 = 0.26;
const NBAR: f64 = 0.2;

fn settings() -> [WaveplateSetting; 5] {
    [
        WaveplateSetting::identity(),
        WaveplateSetting::from_degrees(22.5, 0.0),
        WaveplateSetting::from_degrees(0.0, 45.0),
        WaveplateSetting::from_degrees(11.0, 30.0),
        WaveplateSetting::from_degrees(37.0, 71.0),
    ]
}

fn config(seed: u64) -> DetectorConfig {
    DetectorConfig {
        eta: ETA,
        seed,
        ..Default::default()
    }
}

#[test]
fn thinning_reproduces_beamsplitter_loss() {
    for (si, state) in BellState::ALL.into_iter().enumerate() {
        let spec = BellStateSpec::from_nbar(state, NBAR, 100).unwrap();
        let field = MomentField::new(&spec, ETA, 2).unwrap();
        for (k, setting) in settings().iter().enumerate() {
            let batch = simulate_setting(&spec, setting, &config(1000 + 10 * si as u64 + k as u64), None).unwrap();
            let est = estimate_moments(&batch, 2).unwrap();
            let expected = field.nrf(&direction_from_waveplates(setting));
            let nrf = est.nrf.unwrap();
            let z = nrf.z_score(expected).unwrap();
            assert!(
                z.abs() <= 3.0,
                "{state} {setting:?}: {} ± {} vs {expected}",
                nrf.value,
                nrf.standard_error
            );
            // mean invariance
            let mean = est.s_n[0];
            assert!(mean.z_score(0.0).unwrap().abs() <= 3.0, "{state} mean {mean:?}");
        }
    }
}

#[test]
fn singlet_nrf_is_one_minus_eta() {
    let spec = BellStateSpec::from_nbar(BellState::PSI_MINUS, NBAR, 100).unwrap();
    let batch = simulate_setting(&spec, &WaveplateSetting::from_degrees(5.0, 17.0), &config(9), None).unwrap();
    let est = estimate_moments(&batch, 4).unwrap();
    assert!(est.nrf.unwrap().consistent_with(1.0 - ETA, 3.0).unwrap());
    assert!(
        est.s_n[2].consistent_with(0.0, 3.0).unwrap(),
        "third moment {:?}",
        est.s_n[2]
    );
    let h = histogram(&batch, 40).unwrap();
    let skew_se = (6.0 / batch.len() as f64).sqrt();
    assert!(h.skewness.abs() < 3.0 * skew_se, "skewness {}", h.skewness);
}

#[test]
fn psi_plus_at_diagonal_hwp_follows_curve() {
    let spec = BellStateSpec::from_nbar(BellState::PSI_PLUS, NBAR, 100).unwrap();
    let batch = simulate_setting(&spec, &WaveplateSetting::from_degrees(22.5, 0.0), &config(4), None).unwrap();
    let est = estimate_moments(&batch, 2).unwrap();
    // 1 + ηN − η(1+N)cos(180°)
    let expected = 1.0 + ETA * NBAR + ETA * (1.0 + NBAR);
    assert!(est.nrf.unwrap().consistent_with(expected, 3.0).unwrap());
}

#[test]
fn same_seed_same_batch() {
    let spec = BellStateSpec::from_nbar(BellState::PHI_PLUS, NBAR, 10).unwrap();
    let table = outcome_table(&spec, &WaveplateSetting::from_degrees(12.0, 3.0), None).unwrap();
    let cfg = DetectorConfig {
        pulses: 3000,
        chunk_size: 256,
        electronic_noise_sigma: 0.4,
        ..config(77)
    };
    let a = sample_pulses(&table, 10, &cfg).unwrap();
    let b = sample_pulses(&table, 10, &cfg).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| sample_pulses(&table, 10, &cfg).unwrap());
    assert_eq!(a, c);
    let d = sample_pulses(&table, 10, &DetectorConfig { seed: 78, ..cfg }).unwrap();
    assert_ne!(a, d);
    assert_eq!(a.len(), 3000);
}

#[test]
fn standard_error_scales_with_inverse_root_pulses() {
    let spec = BellStateSpec::from_nbar(BellState::PSI_PLUS, NBAR, 50).unwrap();
    let setting = WaveplateSetting::from_degrees(10.0, 0.0);
    let se = |pulses: usize| {
        let cfg = DetectorConfig { pulses, ..config(5) };
        let b = simulate_setting(&spec, &setting, &cfg, None).unwrap();
        estimate_moments(&b, 2).unwrap().nrf.unwrap().standard_error
    };
    let ratio = se(5000) / se(20000);
    assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
}

#[test]
fn constant_batch_has_zero_spread_and_guarded_errors() {
    let b = PulseBatch::from_records(vec![PulseRecord { i_a: 3.0, i_b: 1.0 }; 100]);
    let est = estimate_moments(&b, 4).unwrap();
    assert_eq!(est.s_n[0].value, 2.0);
    assert_eq!(est.s_n[1].value, 0.0);
    assert_eq!(est.s_n[1].standard_error, 0.0);
    assert!(est.s_n[3].z_score(0.0).is_err());
}

#[test]
fn gaussian_fourth_moment_identity() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let recs = (0..20000)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            PulseRecord { i_a: z, i_b: 0.0 }
        })
        .collect();
    let est = estimate_moments(&PulseBatch::from_records(recs), 4).unwrap();
    assert!(est.s_n[3].consistent_with(3.0, 3.0).unwrap(), "{:?}", est.s_n[3]);
}

#[test]
fn zero_noise_reference_is_identity() {
    let spec = BellStateSpec::from_nbar(BellState::PSI_PLUS, NBAR, 20).unwrap();
    let cfg = DetectorConfig {
        pulses: 4000,
        ..config(8)
    };
    let b = simulate_setting(&spec, &WaveplateSetting::from_degrees(7.0, 0.0), &cfg, None).unwrap();
    let est = estimate_moments(&b, 4).unwrap();
    let dark = noise_reference(&cfg).unwrap();
    let corrected = subtract_electronic_noise(&est, &dark).unwrap();
    assert!(!corrected.over_subtracted);
    for (a, c) in est.s_n.iter().zip(&corrected.estimates.s_n) {
        assert!((a.value - c.value).abs() <= 1e-9 * a.value.abs().max(1.0));
    }
}

#[test]
fn noise_subtraction_recovers_singlet_nrf() {
    let spec = BellStateSpec::from_nbar(BellState::PSI_MINUS, NBAR, 100).unwrap();
    let cfg = DetectorConfig {
        electronic_noise_sigma: 2.0,
        ..config(21)
    };
    let b = simulate_setting(&spec, &WaveplateSetting::from_degrees(3.0, 8.0), &cfg, None).unwrap();
    let raw = estimate_moments(&b, 4).unwrap();
    assert!(raw.nrf.unwrap().value > 1.0 - ETA + 0.2);
    let corrected = subtract_electronic_noise(&raw, &noise_reference(&cfg).unwrap()).unwrap();
    let nrf = corrected.estimates.nrf.unwrap();
    assert!(nrf.consistent_with(1.0 - ETA, 3.0).unwrap(), "{nrf:?}");
}

#[test]
fn pure_noise_fourth_cumulant_vanishes() {
    let cfg = DetectorConfig {
        electronic_noise_sigma: 1.5,
        ..config(31)
    };
    let dark = noise_reference(&cfg).unwrap();
    let est = estimate_moments(&dark, 4).unwrap();
    let other = noise_reference(&DetectorConfig { seed: 32, ..cfg }).unwrap();
    let c = subtract_electronic_noise(&est, &other).unwrap();
    // corrected μ4 equals the corrected fourth cumulant plus 3·var², both ≈ 0
    let mu4 = c.estimates.s_n[3];
    let var = c.estimates.s_n[1].value;
    let k4 = mu4.value - 3.0 * var * var;
    assert!(
        k4.abs() <= 3.0 * mu4.standard_error,
        "{k4} vs se {}",
        mu4.standard_error
    );
}

#[test]
fn over_subtraction_is_flagged() {
    let cfg = DetectorConfig {
        pulses: 2000,
        electronic_noise_sigma: 0.5,
        ..config(41)
    };
    let small = noise_reference(&cfg).unwrap();
    let big = noise_reference(&DetectorConfig {
        electronic_noise_sigma: 3.0,
        ..cfg
    })
    .unwrap();
    let c = subtract_electronic_noise(&estimate_moments(&small, 2).unwrap(), &big).unwrap();
    assert!(c.over_subtracted);
    assert!(c.estimates.s_n[1].value < 0.0);
}

#[test]
fn multimode_histogram_is_gaussian() {
    let spec = BellStateSpec::from_nbar(BellState::PSI_PLUS, NBAR, 100).unwrap();
    let cfg = DetectorConfig {
        electronic_noise_sigma: default_noise_sigma(ETA, NBAR, 100),
        ..config(51)
    };
    let b = simulate_setting(&spec, &WaveplateSetting::from_degrees(22.5, 0.0), &cfg, None).unwrap();
    let h = histogram(&b, 30).unwrap();
    let t = h.normality_test().unwrap();
    assert!(t.passes(0.01), "{t:?}");
    assert_eq!(h.total(), 20000);
}

#[test]
fn default_noise_is_a_tenth_of_singlet_variance() {
    let s = default_noise_sigma(ETA, NBAR, 100);
    let singlet = (1.0 - ETA) * 4.0 * 100.0 * ETA * NBAR;
    assert!((2.0 * s * s - 0.1 * singlet).abs() < 1e-12);
}

#[test]
fn csv_export_has_header_and_rows() {
    let b = PulseBatch::from_records(vec![
        PulseRecord { i_a: 2.0, i_b: 1.5 },
        PulseRecord { i_a: 0.0, i_b: 1.0 },
    ]);
    let mut out = Vec::new();
    b.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "pulse_index,I_A,I_B,S_n,S0");
    assert_eq!(lines[1], "0,2,1.5,0.5,3.5");
    assert_eq!(lines.len(), 3);
}

#[test]
fn monte_carlo_degrees() {
    let cfg = DetectorConfig {
        electronic_noise_sigma: default_noise_sigma(ETA, NBAR, 100),
        ..config(61)
    };
    let singlet = BellStateSpec::from_nbar(BellState::PSI_MINUS, NBAR, 100).unwrap();
    let est = monte_carlo_dp(&singlet, &cfg, &[1, 2], &McDpOptions::default()).unwrap();
    assert!(est[0].value <= 0.02, "P1 {:?}", est[0]);
    let triplet = BellStateSpec::from_nbar(BellState::PSI_PLUS, NBAR, 100).unwrap();
    let est = monte_carlo_dp(&triplet, &cfg, &[2], &McDpOptions::default()).unwrap();
    let p2 = 0.296_577_946_768_060_8;
    assert!(
        (est[0].value - p2).abs() <= 3.0 * est[0].standard_error + 0.01,
        "{:?}",
        est[0]
    );
}
