//! Pulse-by-pulse Monte Carlo of the Stokes measurement.
//!
//! Each pulse carries `M` independent quadruples. Their photon numbers at the
//! two prism outputs are drawn from the exact joint distribution of the
//! rotated truncated state, summed, thinned binomially with the detection
//! efficiency, and blurred by Gaussian electronic noise in each channel.
//! Estimates use unbiased sample moments with batch-means standard errors.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedAliasIndex, Binomial, Distribution, Normal};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal as StatNormal};

use crate::cumulant::{central_from_cumulants, cumulants_from_central};
use crate::error::{invalid, Error, Result};
use crate::fock::{build_state_fock_with_bound, default_cutoff, DEFAULT_TRUNCATION_BOUND};
use crate::gaussian::BellStateSpec;
use crate::geometry::WaveplateSetting;

pub const DEFAULT_PULSES: usize = 20_000;
pub const DEFAULT_QUADRUPLES: u32 = 100;
pub const DEFAULT_BATCHES: usize = 50;
pub const DEFAULT_CHUNK_SIZE: usize = 1024;
pub const DEFAULT_SEED: u64 = 0x5eed_b311;

/// Joint distribution of the photon numbers `(N_A, N_B)` reaching the two
/// prism outputs from one quadruple, summed over both frequencies.
#[derive(Debug, Clone)]
pub struct OutcomeTable {
    outcomes: Vec<(u32, u32)>,
    probs: Vec<f64>,
    truncation_error: f64,
}

impl OutcomeTable {
    /// Builds a table from explicit outcomes; weights are normalized.
    pub fn from_weights(outcomes: Vec<(u32, u32)>, weights: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() || outcomes.len() != weights.len() {
            return Err(invalid("outcome table needs one weight per outcome"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("outcome weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(invalid("outcome weights sum to zero"));
        }
        Ok(Self {
            outcomes,
            probs: weights.iter().map(|w| w / total).collect(),
            truncation_error: 0.0,
        })
    }

    /// Vacuum input: all mass at `(0, 0)`; used for electronic-noise references.
    pub fn vacuum() -> Self {
        Self {
            outcomes: vec![(0, 0)],
            probs: vec![1.0],
            truncation_error: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn truncation_error(&self) -> f64 {
        self.truncation_error
    }

    pub fn entries(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.outcomes.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn probability(&self, n_a: u32, n_b: u32) -> f64 {
        self.entries().filter(|(o, _)| *o == (n_a, n_b)).map(|(_, p)| p).sum()
    }

    /// Mean and variance of `N_A − N_B` for one quadruple, before loss.
    pub fn difference_stats(&self) -> (f64, f64) {
        let mean: f64 = self.entries().map(|((a, b), p)| p * (a as f64 - b as f64)).sum();
        let second: f64 = self
            .entries()
            .map(|((a, b), p)| p * (a as f64 - b as f64).powi(2))
            .sum();
        (mean, second - mean * mean)
    }
}

/// Outcome table of one quadruple measured behind the given plates.
///
/// `cutoff = None` picks the smallest cutoff meeting the default truncation
/// bound. The spec's quadruple count is ignored: the table is per quadruple.
pub fn outcome_table(spec: &BellStateSpec, setting: &WaveplateSetting, cutoff: Option<usize>) -> Result<OutcomeTable> {
    let single = spec.with_quadruples(1)?;
    let c = match cutoff {
        Some(c) => c,
        None => default_cutoff(single.gain(), DEFAULT_TRUNCATION_BOUND)?.max(1),
    };
    let state = build_state_fock_with_bound(&single, c, DEFAULT_TRUNCATION_BOUND)?;
    let rotated = state.apply_waveplates(setting)?;
    let joint = rotated.joint_pn_distribution();
    let width = 2 * c + 1;
    let mut grid = vec![0.0; width * width];
    for (occ, p) in joint.entries() {
        let n_a = occ[0] + occ[2];
        let n_b = occ[1] + occ[3];
        grid[n_a * width + n_b] += p;
    }
    let total: f64 = grid.iter().sum();
    let mut outcomes = Vec::new();
    let mut probs = Vec::new();
    for (i, p) in grid.into_iter().enumerate() {
        // drop numerical dust left by the rotation
        if p > 1e-300 {
            outcomes.push(((i / width) as u32, (i % width) as u32));
            probs.push(p / total);
        }
    }
    Ok(OutcomeTable {
        outcomes,
        probs,
        truncation_error: state.truncation_error(),
    })
}

/// Detection chain parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub eta: f64,
    /// Standard deviation of the additive noise in each channel, in photons.
    pub electronic_noise_sigma: f64,
    pub pulses: usize,
    pub seed: u64,
    /// Pulses per RNG stream; part of the determinism contract.
    pub chunk_size: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            eta: 0.26,
            electronic_noise_sigma: 0.0,
            pulses: DEFAULT_PULSES,
            seed: DEFAULT_SEED,
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(invalid(format!("efficiency {} outside [0, 1]", self.eta)));
        }
        if !self.electronic_noise_sigma.is_finite() || self.electronic_noise_sigma < 0.0 {
            return Err(invalid("electronic noise sigma must be finite and >= 0"));
        }
        if self.pulses < 1 {
            return Err(invalid("pulse count must be >= 1"));
        }
        if self.chunk_size < 1 {
            return Err(invalid("chunk size must be >= 1"));
        }
        Ok(())
    }
}

/// Per-channel noise sigma whose contribution to `Var(S_n)` is 10% of the
/// lossy singlet variance `(1 − η)·4MηN`.
pub fn default_noise_sigma(eta: f64, nbar: f64, quadruples: u32) -> f64 {
    let singlet_var = (1.0 - eta) * 4.0 * quadruples as f64 * eta * nbar;
    (0.1 * singlet_var / 2.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseRecord {
    pub i_a: f64,
    pub i_b: f64,
}

impl PulseRecord {
    pub fn s_n(&self) -> f64 {
        self.i_a - self.i_b
    }

    pub fn s0(&self) -> f64 {
        self.i_a + self.i_b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseBatch {
    records: Vec<PulseRecord>,
}

impl PulseBatch {
    pub fn from_records(records: Vec<PulseRecord>) -> Self {
        Self { records }
    }

    pub fn records(&self) -> &[PulseRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn s_n(&self) -> Vec<f64> {
        self.records.iter().map(PulseRecord::s_n).collect()
    }

    pub fn s0(&self) -> Vec<f64> {
        self.records.iter().map(PulseRecord::s0).collect()
    }

    /// CSV with header `pulse_index,I_A,I_B,S_n,S0`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pulse_index", "I_A", "I_B", "S_n", "S0"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for (i, r) in self.records.iter().enumerate() {
            w.write_record([
                i.to_string(),
                r.i_a.to_string(),
                r.i_b.to_string(),
                r.s_n().to_string(),
                r.s0().to_string(),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `config.pulses` pulses of `quadruples` independent quadruples each.
///
/// Chunk `j` of `config.chunk_size` pulses uses ChaCha stream `j` of the
/// master seed, so the batch is bit-identical for a fixed seed and chunk size
/// regardless of thread count.
pub fn sample_pulses(table: &OutcomeTable, quadruples: u32, config: &DetectorConfig) -> Result<PulseBatch> {
    config.validate()?;
    if quadruples < 1 {
        return Err(invalid("quadruple count must be >= 1"));
    }
    let alias = WeightedAliasIndex::new(table.probs.clone()).map_err(|e| invalid(format!("outcome table: {e}")))?;
    let noise = if config.electronic_noise_sigma > 0.0 {
        Some(Normal::new(0.0, config.electronic_noise_sigma).map_err(|e| invalid(e.to_string()))?)
    } else {
        None
    };
    let chunks = config.pulses.div_ceil(config.chunk_size);
    let records: Vec<PulseRecord> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(chunk as u64);
            let start = chunk * config.chunk_size;
            let end = (start + config.chunk_size).min(config.pulses);
            (start..end)
                .map(|_| {
                    let (mut n_a, mut n_b) = (0u64, 0u64);
                    for _ in 0..quadruples {
                        let (a, b) = table.outcomes[alias.sample(&mut rng)];
                        n_a += a as u64;
                        n_b += b as u64;
                    }
                    let i_a = thin(n_a, config.eta, &mut rng) as f64;
                    let i_b = thin(n_b, config.eta, &mut rng) as f64;
                    match &noise {
                        Some(d) => PulseRecord {
                            i_a: i_a + d.sample(&mut rng),
                            i_b: i_b + d.sample(&mut rng),
                        },
                        None => PulseRecord { i_a, i_b },
                    }
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    Ok(PulseBatch { records })
}

/// Builds the table for `setting` and samples `spec.quadruples()` per pulse.
pub fn simulate_setting(
    spec: &BellStateSpec,
    setting: &WaveplateSetting,
    config: &DetectorConfig,
    cutoff: Option<usize>,
) -> Result<PulseBatch> {
    let table = outcome_table(spec, setting, cutoff)?;
    sample_pulses(&table, spec.quadruples(), config)
}

/// Dark-beam record with the same detector, drawn on an independent seed.
pub fn noise_reference(config: &DetectorConfig) -> Result<PulseBatch> {
    let dark = DetectorConfig {
        seed: config.seed ^ 0x9e37_79b9_7f4a_7c15,
        ..*config
    };
    sample_pulses(&OutcomeTable::vacuum(), 1, &dark)
}

fn thin<R: Rng>(n: u64, eta: f64, rng: &mut R) -> u64 {
    if n == 0 || eta == 0.0 {
        0
    } else if eta == 1.0 {
        n
    } else {
        Binomial::new(n, eta).expect("validated efficiency").sample(rng)
    }
}

/// A moment estimate. Order 1 is the mean; orders `k >= 2` are central moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub order: usize,
    pub value: f64,
    pub standard_error: f64,
    pub pulses: usize,
}

impl MomentEstimate {
    /// `(value − expected) / SE`; fails when the standard error vanishes.
    pub fn z_score(&self, expected: f64) -> Result<f64> {
        if self.standard_error.is_nan() || self.standard_error <= 0.0 {
            return Err(invalid(format!(
                "order-{} estimate has zero standard error (degenerate batch)",
                self.order
            )));
        }
        Ok((self.value - expected) / self.standard_error)
    }

    /// `|value − expected| <= sigmas·SE`.
    pub fn consistent_with(&self, expected: f64, sigmas: f64) -> Result<bool> {
        Ok(self.z_score(expected)?.abs() <= sigmas)
    }
}

/// Moment estimates of `S_n` and `S0` from one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    /// `s_n[k-1]` is the order-`k` estimate.
    pub s_n: Vec<MomentEstimate>,
    pub s0: Vec<MomentEstimate>,
    /// `Var(S_n) / ⟨S0⟩`, absent when the mean intensity is not positive.
    pub nrf: Option<MomentEstimate>,
}

impl MomentEstimates {
    pub fn order(&self, k: usize) -> Option<&MomentEstimate> {
        self.s_n.get(k.wrapping_sub(1))
    }
}

pub(crate) fn sample_mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn plug_in_central(x: &[f64], k: usize, mean: f64) -> f64 {
    x.iter().map(|v| (v - mean).powi(k as i32)).sum::<f64>() / x.len() as f64
}

/// Unbiased central moment for `k <= 4`, plug-in estimate beyond.
pub(crate) fn central_estimate(x: &[f64], k: usize) -> f64 {
    let mean = sample_mean(x);
    if k == 1 {
        return mean;
    }
    let n = x.len() as f64;
    let m2 = plug_in_central(x, 2, mean);
    match k {
        2 => m2 * n / (n - 1.0),
        3 => plug_in_central(x, 3, mean) * n * n / ((n - 1.0) * (n - 2.0)),
        4 => {
            let m4 = plug_in_central(x, 4, mean);
            (n * (n * n - 2.0 * n + 3.0) * m4 - 3.0 * n * (2.0 * n - 3.0) * m2 * m2)
                / ((n - 1.0) * (n - 2.0) * (n - 3.0))
        }
        _ => plug_in_central(x, k, mean),
    }
}

/// Smallest sample on which the order-`k` estimator is defined.
fn min_sample(k: usize) -> usize {
    k.max(2)
}

/// Delta-method variance of the order-`k` sample central moment.
fn asymptotic_se(x: &[f64], k: usize) -> f64 {
    let mean = sample_mean(x);
    let n = x.len() as f64;
    let mu = |j: usize| if j == 0 { 1.0 } else { plug_in_central(x, j, mean) };
    let var = if k == 1 {
        mu(2)
    } else {
        let kf = k as f64;
        mu(2 * k) - mu(k).powi(2) - 2.0 * kf * mu(k - 1) * mu(k + 1) + kf * kf * mu(2) * mu(k - 1).powi(2)
    };
    (var.max(0.0) / n).sqrt()
}

/// Splits `len` items into `batches` contiguous non-overlapping ranges.
fn batch_ranges(len: usize, batches: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..batches).map(move |b| (b * len / batches)..((b + 1) * len / batches))
}

fn batch_se<F: Fn(std::ops::Range<usize>) -> f64>(len: usize, batches: usize, estimator: F) -> f64 {
    let values: Vec<f64> = batch_ranges(len, batches).map(estimator).collect();
    let b = values.len() as f64;
    let mean = values.iter().sum::<f64>() / b;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

fn estimate_series(x: &[f64], k_max: usize, batches: usize) -> Vec<MomentEstimate> {
    (1..=k_max)
        .map(|k| {
            let count = batches.min(x.len() / min_sample(k));
            let standard_error = if count >= 2 {
                batch_se(x.len(), count, |r| central_estimate(&x[r], k))
            } else {
                asymptotic_se(x, k)
            };
            MomentEstimate {
                order: k,
                value: central_estimate(x, k),
                standard_error,
                pulses: x.len(),
            }
        })
        .collect()
}

/// Estimates with the default 50 batch means.
pub fn estimate_moments(batch: &PulseBatch, k_max: usize) -> Result<MomentEstimates> {
    estimate_moments_with_batches(batch, k_max, DEFAULT_BATCHES)
}

pub fn estimate_moments_with_batches(batch: &PulseBatch, k_max: usize, batches: usize) -> Result<MomentEstimates> {
    if k_max == 0 {
        return Err(invalid("moment order must be >= 1"));
    }
    if batches < 2 {
        return Err(invalid("at least two batches are needed for standard errors"));
    }
    let needed = if k_max >= 4 { 2 * min_sample(k_max) } else { 2 };
    if batch.len() < needed {
        return Err(Error::InsufficientPulses {
            needed,
            got: batch.len(),
        });
    }
    let s_n = batch.s_n();
    let s0 = batch.s0();
    let s0_mean = sample_mean(&s0);
    let nrf = if s0_mean > 0.0 {
        let count = batches.min(s_n.len() / 2);
        let value = central_estimate(&s_n, 2) / s0_mean;
        let standard_error = if count >= 2 {
            batch_se(s_n.len(), count, |r| {
                let m = sample_mean(&s0[r.clone()]);
                central_estimate(&s_n[r], 2) / m
            })
        } else {
            asymptotic_se(&s_n, 2) / s0_mean
        };
        Some(MomentEstimate {
            order: 2,
            value,
            standard_error,
            pulses: s_n.len(),
        })
    } else {
        None
    };
    Ok(MomentEstimates {
        s_n: estimate_series(&s_n, k_max, batches),
        s0: estimate_series(&s0, k_max.max(1), batches),
        nrf,
    })
}

/// Signal estimates with the independently recorded noise removed.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedEstimates {
    pub estimates: MomentEstimates,
    /// Set when the corrected `S_n` variance came out negative.
    pub over_subtracted: bool,
}

fn subtract_series(signal: &[MomentEstimate], noise: &[MomentEstimate]) -> Vec<MomentEstimate> {
    let k = signal.len().min(noise.len());
    if k < 2 {
        return signal.to_vec();
    }
    let central = |s: &[MomentEstimate]| -> Vec<f64> {
        let mut c: Vec<f64> = s[..k].iter().map(|e| e.value).collect();
        c[0] = 0.0;
        c
    };
    let ks = cumulants_from_central(&central(signal));
    let kn = cumulants_from_central(&central(noise));
    let diff: Vec<f64> = ks.iter().zip(&kn).map(|(a, b)| a - b).collect();
    let corrected = central_from_cumulants(&diff);
    let mut out = signal.to_vec();
    for j in 1..k {
        out[j].value = corrected[j];
        out[j].standard_error = signal[j].standard_error.hypot(noise[j].standard_error);
    }
    out
}

/// Removes additive, independent electronic noise order by order in cumulants.
///
/// The reference batch must be recorded without light. The mean is untouched
/// (the noise is zero-mean); standard errors combine in quadrature.
pub fn subtract_electronic_noise(signal: &MomentEstimates, noise_reference: &PulseBatch) -> Result<CorrectedEstimates> {
    let k_max = signal.s_n.len();
    let noise = estimate_moments(noise_reference, k_max)?;
    let s_n = subtract_series(&signal.s_n, &noise.s_n);
    let s0 = subtract_series(&signal.s0, &noise.s0);
    let over_subtracted = s_n.len() >= 2 && s_n[1].value < 0.0;
    let nrf = match (signal.nrf, s0.first(), s_n.get(1), noise.s_n.get(1)) {
        (Some(raw), Some(mean), Some(var), Some(noise_var)) if mean.value > 0.0 => Some(MomentEstimate {
            value: var.value / mean.value,
            standard_error: raw.standard_error.hypot(noise_var.standard_error / mean.value),
            ..raw
        }),
        _ => None,
    };
    Ok(CorrectedEstimates {
        estimates: MomentEstimates { s_n, s0, nrf },
        over_subtracted,
    })
}

/// Histogram of `S_n` with bins placed symmetrically around the sample mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lower: f64,
    pub width: f64,
    pub counts: Vec<u64>,
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
}

/// Chi-square goodness of fit against a normal with the sample mean and sd.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalityTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl NormalityTest {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value >= level
    }
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins())
            .map(|i| self.lower + (i as f64 + 0.5) * self.width)
            .collect()
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }

    /// Adjacent bins are pooled until each expected count is at least 5.
    pub fn normality_test(&self) -> Result<NormalityTest> {
        if self.std_dev.is_nan() || self.std_dev <= 0.0 {
            return Err(invalid("normality test needs a nonzero spread"));
        }
        let n = self.total() as f64;
        let dist = StatNormal::new(self.mean, self.std_dev).map_err(|e| invalid(e.to_string()))?;
        let bins = self.bins();
        let edge = |i: usize| -> f64 {
            if i == 0 {
                f64::NEG_INFINITY
            } else if i == bins {
                f64::INFINITY
            } else {
                self.lower + i as f64 * self.width
            }
        };
        let mut cells: Vec<(f64, f64)> = Vec::new();
        let (mut obs, mut exp) = (0.0, 0.0);
        for i in 0..bins {
            obs += self.counts[i] as f64;
            exp += n * (dist.cdf(edge(i + 1)) - dist.cdf(edge(i)));
            if exp >= 5.0 {
                cells.push((obs, exp));
                obs = 0.0;
                exp = 0.0;
            }
        }
        if exp > 0.0 || obs > 0.0 {
            match cells.last_mut() {
                Some(last) => {
                    last.0 += obs;
                    last.1 += exp;
                }
                None => cells.push((obs, exp)),
            }
        }
        if cells.len() < 4 {
            return Err(invalid("too few populated cells for a chi-square test"));
        }
        let statistic: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
        let dof = cells.len() - 3;
        let chi = ChiSquared::new(dof as f64).map_err(|e| invalid(e.to_string()))?;
        Ok(NormalityTest {
            statistic,
            dof,
            p_value: 1.0 - chi.cdf(statistic),
        })
    }
}

/// Bins `S_n` into `bins` equal-width bins symmetric about the sample mean.
///
/// Integer-valued data (no electronic noise) are binned on the photon-number
/// lattice: widths are whole numbers and edges fall between lattice points,
/// with the centre at the lattice point nearest the mean.
pub fn histogram(batch: &PulseBatch, bins: usize) -> Result<Histogram> {
    if bins < 2 {
        return Err(invalid("histogram needs at least two bins"));
    }
    if batch.is_empty() {
        return Err(invalid("histogram of an empty batch"));
    }
    let x = batch.s_n();
    let mean = sample_mean(&x);
    let m2 = plug_in_central(&x, 2, mean);
    let std_dev = m2.sqrt();
    let skewness = if m2 > 0.0 {
        plug_in_central(&x, 3, mean) / m2.powf(1.5)
    } else {
        0.0
    };
    let reach = x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let lattice = x.iter().all(|v| v.fract() == 0.0);
    let (lower, width) = if lattice {
        let centre = mean.round();
        let reach = x.iter().map(|v| (v - centre).abs()).fold(0.0, f64::max) + 0.5;
        let width = (2.0 * reach / bins as f64).ceil().max(1.0);
        let half = width * bins as f64 / 2.0;
        // edges land on integers unless both bin count and width are odd
        let shift = if bins % 2 == 1 && width % 2.0 == 1.0 { 0.0 } else { 0.5 };
        (centre - half + shift, width)
    } else {
        let reach = if reach > 0.0 { reach * (1.0 + 1e-12) } else { 0.5 };
        (mean - reach, 2.0 * reach / bins as f64)
    };
    let mut counts = vec![0u64; bins];
    for v in &x {
        let i = ((v - lower) / width).floor();
        let i = (i.max(0.0) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(Histogram {
        lower,
        width,
        counts,
        mean,
        std_dev,
        skewness,
    })
}
