//! Special-function primitives shared by the kernel, Mellin and solver code.
//!
//! Everything here is real-argument and double precision. The Gamma function
//! uses the Lanczos approximation (g = 7, nine terms); for the logarithmic
//! ratios that the Mellin tail sums need at large arguments a Stirling series
//! is used instead, because differencing two large `ln Γ` values loses digits.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Bernoulli-number coefficients `B_{2k} / (2k (2k-1))` of the Stirling series.
const STIRLING_COEFFS: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
];

/// Surface area of the unit sphere `S^{d-1} ⊂ R^d`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SphereArea {
    pub d: usize,
    pub sigma: f64,
}

fn lanczos_sum(z: f64) -> f64 {
    // z is the shifted argument x - 1
    let mut acc = LANCZOS_COEFFS[0];
    for (k, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + k as f64);
    }
    acc
}

/// Γ(x) for x > 0.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("gamma_fn requires x > 0, got {x}")));
    }
    Ok(gamma_positive(x))
}

fn gamma_positive(x: f64) -> f64 {
    if x < 0.5 {
        // reflection keeps the Lanczos sum away from its poles
        return PI / ((PI * x).sin() * gamma_positive(1.0 - x));
    }
    if x == x.floor() && x <= 23.0 {
        // exact factorials
        return (1..x as u64).map(|k| k as f64).product();
    }
    if x > 140.0 {
        return ln_gamma_positive(x).exp();
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * lanczos_sum(z)
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_positive(x))
}

fn ln_gamma_positive(x: f64) -> f64 {
    if x >= 15.0 {
        return stirling_ln_gamma(x);
    }
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma_positive(1.0 - x);
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln()
}

fn stirling_correction(z: f64) -> f64 {
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut pow = inv;
    let mut acc = 0.0;
    for c in STIRLING_COEFFS {
        acc += c * pow;
        pow *= inv2;
    }
    acc
}

fn stirling_ln_gamma(z: f64) -> f64 {
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + stirling_correction(z)
}

/// `ln Γ(x + a) − ln Γ(x + b)` evaluated without forming either logarithm.
///
/// Accurate to a few ulps of the result once `x + min(a, b) ≥ 15`; below
/// that it falls back to the difference of [`ln_gamma`] values.
pub fn ln_gamma_ratio(x: f64, a: f64, b: f64) -> f64 {
    if x + a.min(b) < 15.0 {
        return ln_gamma_positive(x + a) - ln_gamma_positive(x + b);
    }
    let main = (a - b) * x.ln() + (x + a - 0.5) * (a / x).ln_1p()
        - (x + b - 0.5) * (b / x).ln_1p()
        - (a - b);
    main + stirling_correction(x + a) - stirling_correction(x + b)
}

/// B(a, b) = Γ(a)Γ(b)/Γ(a+b).
pub fn beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!(
            "beta_fn requires positive arguments, got ({a}, {b})"
        )));
    }
    if a + b > 140.0 {
        let ln = ln_gamma_positive(a) + ln_gamma_positive(b) - ln_gamma_positive(a + b);
        return Ok(ln.exp());
    }
    Ok(gamma_positive(a) * gamma_positive(b) / gamma_positive(a + b))
}

/// σ_d = 2π^{d/2}/Γ(d/2).
pub fn sphere_area(d: i64) -> Result<SphereArea> {
    if d <= 0 {
        return Err(Error::Domain(format!(
            "sphere_area requires d >= 1, got {d}"
        )));
    }
    let half = d as f64 / 2.0;
    let sigma = 2.0 * PI.powf(half) / gamma_positive(half);
    Ok(SphereArea {
        d: d as usize,
        sigma,
    })
}

/// Exact `n!!` while it fits in a `u128`.
pub fn double_factorial_exact(n: u32) -> Option<u128> {
    let mut acc: u128 = 1;
    let mut k = n;
    while k > 1 {
        acc = acc.checked_mul(k as u128)?;
        k -= 2;
    }
    Some(acc)
}

/// `n!! = n (n-2) (n-4) ⋯`, with `0!! = 1`.
///
/// Exact integer arithmetic is used while the product fits in 128 bits and
/// floating point beyond; the result overflows to `inf` past `n ≈ 300`.
pub fn double_factorial(n: u32) -> f64 {
    if let Some(v) = double_factorial_exact(n) {
        return v as f64;
    }
    let mut acc = 1.0_f64;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}
