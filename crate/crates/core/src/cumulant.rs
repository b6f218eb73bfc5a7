//! Conversions between raw moments, cumulants and central moments.
//!
//! All slices are indexed by order starting at 1: `raw[0]` is `E[X]`,
//! `raw[1]` is `E[X²]`, and so on. Cumulants of independent summands add,
//! which is how multimode scaling and electronic-noise subtraction work.

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Cumulants `κ_1..κ_K` from raw moments `E[X^1]..E[X^K]`.
pub fn cumulants_from_raw(raw: &[f64]) -> Vec<f64> {
    let k_max = raw.len();
    let mut kappa = vec![0.0; k_max];
    let mu = |j: usize| if j == 0 { 1.0 } else { raw[j - 1] };
    for n in 1..=k_max {
        let mut acc = mu(n);
        for m in 1..n {
            acc -= binomial(n - 1, m - 1) * kappa[m - 1] * mu(n - m);
        }
        kappa[n - 1] = acc;
    }
    kappa
}

/// Raw moments from cumulants (inverse of [`cumulants_from_raw`]).
pub fn raw_from_cumulants(kappa: &[f64]) -> Vec<f64> {
    let k_max = kappa.len();
    let mut raw = vec![0.0; k_max];
    for n in 1..=k_max {
        let mut acc = 0.0;
        for m in 1..=n {
            let prev = if n == m { 1.0 } else { raw[n - m - 1] };
            acc += binomial(n - 1, m - 1) * kappa[m - 1] * prev;
        }
        raw[n - 1] = acc;
    }
    raw
}

/// Central moments `μ_1..μ_K` (with `μ_1 = 0`) from cumulants.
pub fn central_from_cumulants(kappa: &[f64]) -> Vec<f64> {
    let mut shifted = kappa.to_vec();
    if let Some(first) = shifted.first_mut() {
        *first = 0.0;
    }
    raw_from_cumulants(&shifted)
}

/// Cumulants `κ_2..` from central moments `μ_1..μ_K` (the mean is not
/// recoverable and `κ_1` is returned as 0).
pub fn cumulants_from_central(central: &[f64]) -> Vec<f64> {
    let mut c = central.to_vec();
    if let Some(first) = c.first_mut() {
        *first = 0.0;
    }
    cumulants_from_raw(&c)
}
