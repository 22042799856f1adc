//! Mellin symbols of the radial kernel and the positivity certificate.
//!
//! With `c₁(n) = 2n + α/2 − δ/2` and `c₂(n) = d + 2n + α/2 + δ/2`,
//!
//! ```text
//! H₁(λ) = Σ a_{2n+1} [1/(iλ + c₁(n)) + 1/(−iλ + c₂(n))],
//! H(λ)  = ((α+δ)²/4 + λ²) H₁(λ).
//! ```
//!
//! The summands decay only like `n^{α−3}`, so the first [`DIRECT_TERMS`] are
//! summed exactly and the remainder is an Euler–Maclaurin tail built on the
//! smooth continuation of `n ↦ a_{2n+1}`.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, SeriesCoefficients};
use crate::quadrature::{integrate, QuadValue, Tolerance};

/// Number of summands added exactly before the Euler–Maclaurin tail.
pub const DIRECT_TERMS: usize = 256;

/// Default upper end of the certified λ range.
pub const DEFAULT_LAMBDA_MAX: f64 = 1e3;

/// Default number of certified grid points.
pub const DEFAULT_GRID_POINTS: usize = 2000;

/// `δ < α` and `α < 2`: the Mellin integral of `H₁` converges.
pub fn check_convergent(spec: KernelSpec, delta: f64) -> Result<()> {
    if spec.is_local_limit() {
        return Err(Error::LocalLimit(
            "no Mellin symbol without a kernel".into(),
        ));
    }
    if !delta.is_finite() || delta >= spec.alpha {
        return Err(Error::Hypothesis(format!(
            "delta must satisfy delta < alpha = {}, got {delta}",
            spec.alpha
        )));
    }
    Ok(())
}

/// `α ∈ (0, 2)`, `δ ∈ (−α, α)` and `δ + α < 2`.
pub fn check_weighted(spec: KernelSpec, delta: f64) -> Result<()> {
    check_convergent(spec, delta)?;
    let a = spec.alpha;
    if !(a > 0.0) {
        return Err(Error::Hypothesis(
            "the weighted inequality needs alpha > 0".into(),
        ));
    }
    if !(delta > -a) {
        return Err(Error::Hypothesis(format!(
            "delta must exceed -alpha = {}, got {delta}",
            -a
        )));
    }
    if !(delta + a < 2.0) {
        return Err(Error::Hypothesis(format!(
            "delta + alpha must be below 2, got {}",
            delta + a
        )));
    }
    Ok(())
}

fn shifts(spec: KernelSpec, delta: f64) -> (f64, f64) {
    let a = spec.alpha;
    (
        0.5 * a - 0.5 * delta,
        spec.dim as f64 + 0.5 * a + 0.5 * delta,
    )
}

fn prefactor(spec: KernelSpec, delta: f64, lambda: f64) -> f64 {
    let s = 0.5 * (spec.alpha + delta);
    s * s + lambda * lambda
}

/// `Σ_{n≥0} term(n, a_{2n+1})`: exact for `n < exact.len()`, Euler–Maclaurin
/// beyond, where `term` must be smooth in its first argument.
fn coefficient_sum<T, F>(exact: &[f64], coeffs: &SeriesCoefficients, term: F) -> T
where
    T: QuadValue,
    F: Fn(f64, f64) -> T,
{
    let mut acc = T::default();
    for (n, &a) in exact.iter().enumerate() {
        acc = acc + term(n as f64, a);
    }
    let alpha = coeffs.spec.alpha;
    if alpha == 0.0 {
        return acc;
    }
    let n0 = exact.len() as f64;
    let f = |x: f64| term(x, coeffs.coefficient_at(x));
    // x = n0 t^{-q} makes the n^{α-3} decay a bounded integrand in t
    let q = if alpha >= 1.0 { 1.0 } else { 2.0 } / (2.0 - alpha);
    let mapped = |t: f64| {
        let x = n0 * t.powf(-q);
        if !(x < 1e250) {
            return T::default();
        }
        f(x) * (n0 * q * t.powf(-q - 1.0))
    };
    let integral = integrate(mapped, 0.0, 1.0, Tolerance::new(1e-16, 1e-13)).value;
    let h = 0.5;
    let (fm2, fm1, f0, fp1, fp2) = (
        f(n0 - 2.0 * h),
        f(n0 - h),
        f(n0),
        f(n0 + h),
        f(n0 + 2.0 * h),
    );
    let d1 = (fp1 - fm1) * (0.5 / h);
    let d3 = (fp2 - fp1 * 2.0 + fm1 * 2.0 - fm2) * (0.5 / (h * h * h));
    acc + integral + f0 * 0.5 - d1 * (1.0 / 12.0) + d3 * (1.0 / 720.0)
}

fn h1_with(
    spec: KernelSpec,
    delta: f64,
    lambda: f64,
    exact: &[f64],
    coeffs: &SeriesCoefficients,
) -> Complex64 {
    let (c1, c2) = shifts(spec, delta);
    coefficient_sum(exact, coeffs, |x, a| {
        let m = 2.0 * x;
        (Complex64::new(c1 + m, lambda).inv() + Complex64::new(c2 + m, -lambda).inv()) * a
    })
}

/// `H₁(λ)` to an absolute accuracy well below `1e−10`.
pub fn h1_series(
    spec: KernelSpec,
    delta: f64,
    lambda: f64,
    coeffs: &SeriesCoefficients,
) -> Result<Complex64> {
    check_convergent(spec, delta)?;
    check_coeffs(spec, coeffs)?;
    let exact = coeffs.extended(DIRECT_TERMS);
    Ok(h1_with(spec, delta, lambda, &exact, coeffs))
}

/// `H(λ) = ((α+δ)²/4 + λ²) H₁(λ)`.
pub fn h_symbol(
    spec: KernelSpec,
    delta: f64,
    lambda: f64,
    coeffs: &SeriesCoefficients,
) -> Result<Complex64> {
    Ok(h1_series(spec, delta, lambda, coeffs)? * prefactor(spec, delta, lambda))
}

/// `Re H(λ)` from the explicit real expansion
/// `((α+δ)²/4 + λ²) Σ a_{2n+1} [c₁/(λ² + c₁²) + c₂/(λ² + c₂²)]`.
pub fn re_h_expansion(
    spec: KernelSpec,
    delta: f64,
    lambda: f64,
    coeffs: &SeriesCoefficients,
) -> Result<f64> {
    check_convergent(spec, delta)?;
    check_coeffs(spec, coeffs)?;
    let exact = coeffs.extended(DIRECT_TERMS);
    let (c1, c2) = shifts(spec, delta);
    let l2 = lambda * lambda;
    let sum: f64 = coefficient_sum(&exact, coeffs, |x, a| {
        let p = c1 + 2.0 * x;
        let q = c2 + 2.0 * x;
        a * (p / (l2 + p * p) + q / (l2 + q * q))
    });
    Ok(prefactor(spec, delta, lambda) * sum)
}

/// `((α+δ)²/4) Σ a_{2n+1} / c₂(n)`, a λ-independent lower bound for `Re H`.
pub fn analytic_lower_bound(
    spec: KernelSpec,
    delta: f64,
    coeffs: &SeriesCoefficients,
) -> Result<f64> {
    check_weighted(spec, delta)?;
    check_coeffs(spec, coeffs)?;
    let exact = coeffs.extended(DIRECT_TERMS);
    let (_, c2) = shifts(spec, delta);
    let sum: f64 = coefficient_sum(&exact, coeffs, |x, a| a / (c2 + 2.0 * x));
    Ok(prefactor(spec, delta, 0.0) * sum)
}

fn check_coeffs(spec: KernelSpec, coeffs: &SeriesCoefficients) -> Result<()> {
    if coeffs.spec != spec {
        return Err(Error::Domain(format!(
            "series built for {:?} used with {:?}",
            coeffs.spec, spec
        )));
    }
    Ok(())
}

/// `count` increasing points on `[0, lambda_max]`: half uniformly spaced on
/// `[0, min(10, λ_max)]`, the rest geometrically spaced up to `λ_max`.
pub fn lambda_grid(lambda_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::Domain(format!(
            "lambda_max must be positive, got {lambda_max}"
        )));
    }
    if count < 2 {
        return Err(Error::Domain(
            "a lambda grid needs at least 2 points".into(),
        ));
    }
    let knee = lambda_max.min(10.0);
    let linear = if lambda_max > knee {
        count.div_ceil(2)
    } else {
        count
    };
    let mut grid: Vec<f64> = (0..linear)
        .map(|i| knee * i as f64 / (linear - 1) as f64)
        .collect();
    let geometric = count - linear;
    let ratio = (lambda_max / knee).ln();
    for j in 1..=geometric {
        let x = if j == geometric {
            lambda_max
        } else {
            knee * (ratio * j as f64 / geometric as f64).exp()
        };
        grid.push(x);
    }
    Ok(grid)
}

/// Certified values of `H₁` and `H` on a λ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MellinSymbol {
    pub spec: KernelSpec,
    pub delta: f64,
    pub lambda_grid: Vec<f64>,
    pub h1_values: Vec<Complex64>,
    pub h_values: Vec<Complex64>,
    /// Minimum of `Re H` over the grid.
    pub positivity_constant: f64,
    /// λ at which the grid minimum occurs.
    pub argmin_lambda: f64,
    pub analytic_lower_bound: f64,
}

/// Summary written next to the symbol table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub dim: usize,
    pub alpha: f64,
    pub delta: f64,
    pub positivity_constant: f64,
    pub argmin_lambda: f64,
    pub analytic_lower_bound: f64,
    pub lambda_max: f64,
    pub grid_size: usize,
    pub growth_slope: Option<f64>,
}

/// Evaluates `H` on [`lambda_grid`] and fails on the first non-positive real part.
pub fn positivity_certificate(
    spec: KernelSpec,
    delta: f64,
    lambda_max: f64,
    coeffs: &SeriesCoefficients,
) -> Result<MellinSymbol> {
    certify_on(
        spec,
        delta,
        lambda_grid(lambda_max, DEFAULT_GRID_POINTS)?,
        coeffs,
    )
}

/// As [`positivity_certificate`] on a caller-supplied grid.
pub fn certify_on(
    spec: KernelSpec,
    delta: f64,
    grid: Vec<f64>,
    coeffs: &SeriesCoefficients,
) -> Result<MellinSymbol> {
    check_weighted(spec, delta)?;
    check_coeffs(spec, coeffs)?;
    if grid.is_empty() {
        return Err(Error::Domain("empty lambda grid".into()));
    }
    let exact = coeffs.extended(DIRECT_TERMS);
    let h1_values: Vec<Complex64> = grid
        .par_iter()
        .map(|&l| h1_with(spec, delta, l, &exact, coeffs))
        .collect();
    let h_values: Vec<Complex64> = grid
        .iter()
        .zip(&h1_values)
        .map(|(&l, h1)| h1 * prefactor(spec, delta, l))
        .collect();
    let mut min = f64::INFINITY;
    let mut argmin = grid[0];
    for (&l, h) in grid.iter().zip(&h_values) {
        if !(h.re > 0.0) {
            return Err(Error::Certification {
                lambda: l,
                re_h: h.re,
            });
        }
        if h.re < min {
            min = h.re;
            argmin = l;
        }
    }
    let bound = analytic_lower_bound(spec, delta, coeffs)?;
    Ok(MellinSymbol {
        spec,
        delta,
        lambda_grid: grid,
        h1_values,
        h_values,
        positivity_constant: min,
        argmin_lambda: argmin,
        analytic_lower_bound: bound,
    })
}

/// Least-squares slope of `ln Re H` against `ln λ` at `points` geometric
/// samples of `[lo, hi]`.
pub fn growth_slope(
    spec: KernelSpec,
    delta: f64,
    coeffs: &SeriesCoefficients,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<f64> {
    check_convergent(spec, delta)?;
    check_coeffs(spec, coeffs)?;
    if !(lo > 0.0 && hi > lo) || points < 2 {
        return Err(Error::Domain(
            "slope fit needs 0 < lo < hi and 2 points".into(),
        ));
    }
    let exact = coeffs.extended(DIRECT_TERMS);
    let samples: Vec<(f64, f64)> = (0..points)
        .into_par_iter()
        .map(|i| {
            let l = lo * (hi / lo).powf(i as f64 / (points - 1) as f64);
            let re = (h1_with(spec, delta, l, &exact, coeffs) * prefactor(spec, delta, l)).re;
            (l.ln(), re.ln())
        })
        .collect();
    Ok(least_squares_slope(&samples))
}

/// Slope of the least-squares line through `(x, y)` pairs.
pub fn least_squares_slope(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx) * (s.0 - mx)).sum();
    sxy / sxx
}

impl MellinSymbol {
    pub fn record(&self, growth_slope: Option<f64>) -> CertificateRecord {
        CertificateRecord {
            dim: self.spec.dim,
            alpha: self.spec.alpha,
            delta: self.delta,
            positivity_constant: self.positivity_constant,
            argmin_lambda: self.argmin_lambda,
            analytic_lower_bound: self.analytic_lower_bound,
            lambda_max: *self.lambda_grid.last().expect("nonempty grid"),
            grid_size: self.lambda_grid.len(),
            growth_slope,
        }
    }

    /// Columns `lambda,re_h,im_h,re_h1,im_h1`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "lambda,re_h,im_h,re_h1,im_h1")?;
        for ((l, h), h1) in self
            .lambda_grid
            .iter()
            .zip(&self.h_values)
            .zip(&self.h1_values)
        {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                l, h.re, h.im, h1.re, h1.im
            )?;
        }
        Ok(())
    }
}
