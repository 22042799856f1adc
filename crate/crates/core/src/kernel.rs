//! The radial kernel `g = g_{d,α}` mediating the velocity `v = T u`.
//!
//! For `d ≥ 2`
//!
//! ```text
//! g(r) = σ_{d-1} ∫₀^π cos θ sin^{d-2} θ (r² + 1 − 2r cos θ)^{-(d-2+α)/2} dθ,
//! ```
//!
//! and for `d = 1` it has the closed forms `(1+r)^{1-α} − |1−r|^{1-α}`
//! (`α < 1`), `log(1+r) − log|1−r|` (`α = 1`) and the negated power form for
//! `α ∈ (1, 2)`. The normalising constant of the Riesz potential is taken as 1.
//!
//! `g` is odd and analytic on `(−1, 1)` with Taylor series `Σ a_{2n+1} r^{2n+1}`,
//! and obeys the reflection `g(1/r) = r^{d-2+α} g(r)`. Evaluation uses the
//! series on `[0, r_s]`, the reflection on `[1/r_s, ∞)`, and a direct angular
//! quadrature (or, in [`Kernel::eval_fast`], a table built from it) in the band
//! around the singular point `r = 1`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_endpoint_singular, integrate_points, Tolerance};
use crate::special::{ln_gamma_ratio, sphere_area};

/// Radius below which the Taylor series is used.
pub const SWITCH_RADIUS: f64 = 0.7;

const ANGULAR_TOL: f64 = 1e-13;

/// Dimension and exponent defining `g_{d,α}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub dim: usize,
    pub alpha: f64,
}

impl KernelSpec {
    /// Accepts `α ∈ [0, 2]` for `d ≥ 2` and `α ∈ (0, 2]` for `d = 1`.
    /// `α = 2` is the local limit: there is no kernel and `v = ∂_r u`.
    pub fn new(dim: i64, alpha: f64) -> Result<Self> {
        if dim < 1 {
            return Err(Error::Domain(format!("dimension must be >= 1, got {dim}")));
        }
        if !alpha.is_finite() || !(0.0..=2.0).contains(&alpha) {
            return Err(Error::Domain(format!(
                "alpha must lie in [0, 2], got {alpha}"
            )));
        }
        if dim == 1 && alpha == 0.0 {
            return Err(Error::Domain("d = 1 requires alpha > 0".into()));
        }
        Ok(KernelSpec {
            dim: dim as usize,
            alpha,
        })
    }

    pub fn is_local_limit(&self) -> bool {
        self.alpha == 2.0
    }

    /// `d − 2 + α`, the homogeneity of the reflection identity.
    pub fn exponent(&self) -> f64 {
        self.dim as f64 - 2.0 + self.alpha
    }

    /// `d = 2, α = 0`: the kernel is identically zero.
    pub fn vanishes(&self) -> bool {
        self.dim == 2 && self.alpha == 0.0
    }

    /// Whether `g` is unbounded at `r = 1`.
    pub fn singular_at_one(&self) -> bool {
        self.alpha >= 1.0
    }

    fn require_kernel(&self) -> Result<()> {
        if self.is_local_limit() {
            return Err(Error::LocalLimit(
                "alpha = 2 has no kernel; the velocity is the radial derivative".into(),
            ));
        }
        Ok(())
    }
}

fn sigma(d: usize) -> f64 {
    sphere_area(d as i64).expect("d >= 1").sigma
}

/// `a_{2n+1}`, evaluated as a sum of logarithms.
pub fn taylor_coefficient(spec: KernelSpec, n: i64) -> Result<f64> {
    spec.require_kernel()?;
    if n < 0 {
        return Err(Error::Domain(format!(
            "coefficient index must be >= 0, got {n}"
        )));
    }
    let n = n as usize;
    let alpha = spec.alpha;
    if spec.dim == 1 {
        if alpha == 1.0 {
            return Ok(2.0 / (2 * n + 1) as f64);
        }
        // 2 |binom(1-α, 2n+1)| = 2 |1-α| Π_{k<2n} (α+k)/(k+2)
        let mut log = 2f64.ln() + (1.0 - alpha).abs().ln();
        for k in 0..2 * n {
            log += ((alpha - 2.0) / (k as f64 + 2.0)).ln_1p();
        }
        return Ok(log.exp());
    }
    let d = spec.dim as f64;
    if alpha == 0.0 {
        return Ok(if n == 0 {
            sigma(spec.dim) * (d - 2.0) / d
        } else {
            0.0
        });
    }
    let mut log = sigma(spec.dim).ln() + (d + alpha - 2.0).ln() - d.ln();
    for k in 0..n {
        let k = k as f64;
        // factors (α+2k)/(2k+2) and (d+α+2k)/(d+2k+2), each close to 1
        log += ((alpha - 2.0) / (2.0 * k + 2.0)).ln_1p()
            + ((alpha - 2.0) / (d + 2.0 * k + 2.0)).ln_1p();
    }
    Ok(log.exp())
}

/// Ratio `a_{2n+3} / a_{2n+1}`.
fn coefficient_ratio(spec: KernelSpec, n: usize) -> f64 {
    let a = spec.alpha;
    let n = n as f64;
    if spec.dim == 1 {
        (a + 2.0 * n) * (a + 2.0 * n + 1.0) / ((2.0 * n + 2.0) * (2.0 * n + 3.0))
    } else {
        let d = spec.dim as f64;
        (a + 2.0 * n) * (d + a + 2.0 * n) / ((2.0 * n + 2.0) * (d + 2.0 * n + 2.0))
    }
}

/// `ln a(x)` up to an additive constant, for real `x`.
fn log_coefficient_shape(spec: KernelSpec, x: f64) -> f64 {
    let a = spec.alpha;
    if spec.dim == 1 {
        ln_gamma_ratio(2.0 * x, a, 2.0)
    } else {
        let d = spec.dim as f64;
        ln_gamma_ratio(x, 0.5 * a, 1.0) + ln_gamma_ratio(x, 0.5 * (d + a), 0.5 * d + 1.0)
    }
}

/// Truncated Taylor series of `g` at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCoefficients {
    pub spec: KernelSpec,
    /// `coeffs[n] = a_{2n+1}` for `n = 0..=truncation_n`.
    pub coeffs: Vec<f64>,
    pub truncation_n: usize,
    /// Bound on `Σ_{n>N} a_{2n+1} r_s^{2n+1}`.
    pub tail_bound: f64,
    pub switch_radius: f64,
    /// Additive constant turning [`log_coefficient_shape`] into `ln a(x)`.
    log_anchor: f64,
}

/// Coefficients up to the first `N` with `a_{2N+1} r_s^{2N+1} / (1 − r_s²) < tol`.
///
/// The coefficients decrease in `n` for `α < 2`, so the remaining tail is
/// bounded by `a_{2N+1} r_s^{2N+3} / (1 − r_s²)`.
pub fn build_series(spec: KernelSpec, tol: f64) -> Result<SeriesCoefficients> {
    spec.require_kernel()?;
    if !(tol > 0.0) {
        return Err(Error::Domain(format!(
            "series tolerance must be positive, got {tol}"
        )));
    }
    let r = SWITCH_RADIUS;
    let geometric = 1.0 / (1.0 - r * r);
    let mut coeffs = vec![taylor_coefficient(spec, 0)?];
    let exact_monomial = spec.alpha == 0.0;
    if !exact_monomial {
        let mut n = 0usize;
        let mut rpow = r;
        while coeffs[n] * rpow * geometric >= tol {
            let next = coeffs[n] * coefficient_ratio(spec, n);
            coeffs.push(next);
            n += 1;
            rpow *= r * r;
            if n > 200_000 {
                return Err(Error::Domain("series truncation did not converge".into()));
            }
        }
    }
    let truncation_n = coeffs.len() - 1;
    let tail_bound = if exact_monomial {
        0.0
    } else {
        coeffs[truncation_n] * r.powi(2 * truncation_n as i32 + 3) * geometric
    };
    let anchor_n = 64;
    let log_anchor = if exact_monomial {
        0.0
    } else {
        taylor_coefficient(spec, anchor_n as i64)?.ln()
            - log_coefficient_shape(spec, anchor_n as f64)
    };
    Ok(SeriesCoefficients {
        spec,
        coeffs,
        truncation_n,
        tail_bound,
        switch_radius: r,
        log_anchor,
    })
}

impl SeriesCoefficients {
    /// Partial sum `Σ_{n≤N} a_{2n+1} r^{2n+1}`.
    pub fn eval(&self, r: f64) -> f64 {
        let r2 = r * r;
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * r2 + c;
        }
        acc * r
    }

    /// `a_{2n+1}` for `n < count`, continuing the recurrence past the truncation.
    pub fn extended(&self, count: usize) -> Vec<f64> {
        let mut out: Vec<f64> = self.coeffs.iter().copied().take(count).collect();
        while out.len() < count {
            let n = out.len() - 1;
            let next = if self.spec.alpha == 0.0 {
                0.0
            } else {
                out[n] * coefficient_ratio(self.spec, n)
            };
            out.push(next);
        }
        out
    }

    /// Smooth interpolation of `n ↦ a_{2n+1}` to real `x ≥ 1`, exact at the
    /// integers up to rounding. Used for tail sums far past the truncation.
    pub fn coefficient_at(&self, x: f64) -> f64 {
        if self.spec.alpha == 0.0 {
            return if x < 0.5 { self.coeffs[0] } else { 0.0 };
        }
        (self.log_anchor + log_coefficient_shape(self.spec, x)).exp()
    }
}

/// `d = 1` kernel at `r = 1 − gap < 1` with the gap supplied exactly.
fn one_dimensional_inside(alpha: f64, r: f64, gap: f64) -> f64 {
    if alpha == 1.0 {
        return r.ln_1p() - gap.ln();
    }
    let beta = 1.0 - alpha;
    let lo = beta * gap.ln();
    let hi = beta * r.ln_1p();
    let diff = lo.exp() * (hi - lo).exp_m1();
    if alpha < 1.0 {
        diff
    } else {
        -diff
    }
}

/// Odd-part kernel for `d = 1`, written to avoid cancellation at small `r`.
fn one_dimensional(alpha: f64, r: f64) -> f64 {
    if alpha == 1.0 {
        return if r < 1.0 {
            r.ln_1p() - (-r).ln_1p()
        } else if r == 1.0 {
            f64::INFINITY
        } else {
            (2.0 / (r - 1.0)).ln_1p()
        };
    }
    let beta = 1.0 - alpha;
    // (1+r)^β − |1−r|^β
    let diff = if r < 1.0 {
        let lo = beta * (-r).ln_1p();
        let hi = beta * r.ln_1p();
        lo.exp() * (hi - lo).exp_m1()
    } else if r == 1.0 {
        if beta > 0.0 {
            2f64.powf(beta)
        } else {
            f64::NEG_INFINITY
        }
    } else {
        (r - 1.0).powf(beta) * (beta * (2.0 / (r - 1.0)).ln_1p()).exp_m1()
    };
    if alpha < 1.0 {
        diff
    } else {
        -diff
    }
}

fn closed_form(spec: KernelSpec, a1: f64, r: f64) -> Option<f64> {
    if spec.vanishes() {
        return Some(0.0);
    }
    if spec.dim == 1 {
        return Some(one_dimensional(spec.alpha, r));
    }
    if spec.alpha == 0.0 {
        // harmonic case: a_1 r inside the unit ball, its reflection outside
        return Some(if r <= 1.0 {
            a1 * r
        } else {
            a1 * r.powf(-(spec.dim as f64 - 1.0))
        });
    }
    None
}

/// Evaluator for `g_{d,α}`.
#[derive(Debug, Clone)]
pub struct Kernel {
    spec: KernelSpec,
    series: SeriesCoefficients,
    table: Option<Arc<KernelTable>>,
}

impl Kernel {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        spec.require_kernel()?;
        let series = build_series(spec, 1e-17)?;
        Ok(Kernel {
            spec,
            series,
            table: None,
        })
    }

    /// Kernel with the band around `r = 1` tabulated for [`Kernel::eval_fast`].
    pub fn with_table(spec: KernelSpec) -> Result<Self> {
        let mut k = Self::new(spec)?;
        if closed_form(spec, 0.0, 0.5).is_none() {
            k.table = Some(Arc::new(KernelTable::build(&k)?));
        }
        Ok(k)
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn series(&self) -> &SeriesCoefficients {
        &self.series
    }

    /// Reference evaluation: series, reflection, or angular quadrature.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!(
                "kernel_eval expects r >= 0 (g is odd: use -g(|r|)), got {r}"
            )));
        }
        if r == 1.0 && self.spec.singular_at_one() {
            return Err(Error::SingularPoint {
                alpha: self.spec.alpha,
            });
        }
        if let Some(v) = closed_form(self.spec, self.series.coeffs[0], r) {
            return Ok(v);
        }
        let rs = SWITCH_RADIUS;
        if r <= rs {
            Ok(self.series.eval(r))
        } else if r >= 1.0 / rs {
            Ok(r.powf(-self.spec.exponent()) * self.series.eval(1.0 / r))
        } else {
            self.eval_quadrature(r)
        }
    }

    /// Direct adaptive quadrature of the angular integral (`d ≥ 2`).
    pub fn eval_quadrature(&self, r: f64) -> Result<f64> {
        if self.spec.dim < 2 {
            return Err(Error::Domain("angular quadrature needs d >= 2".into()));
        }
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("r must be >= 0, got {r}")));
        }
        if r == 1.0 && self.spec.singular_at_one() {
            return Err(Error::SingularPoint {
                alpha: self.spec.alpha,
            });
        }
        let d = self.spec.dim;
        let power = -0.5 * self.spec.exponent();
        let gap = (1.0 - r) * (1.0 - r);
        let integrand = |theta: f64| {
            let s = (0.5 * theta).sin();
            let a2 = gap + 4.0 * r * s * s;
            theta.cos() * theta.sin().powi(d as i32 - 2) * a2.powf(power)
        };
        let tol = Tolerance::new(ANGULAR_TOL, ANGULAR_TOL).with_max_intervals(20_000);
        let pi = std::f64::consts::PI;
        let value = if r == 1.0 {
            // integrand ~ θ^{-α} at the origin
            let split = 0.25 * pi;
            let p = 2.0 / (1.0 - self.spec.alpha);
            let near = integrate_endpoint_singular(integrand, 0.0, split, true, p, tol);
            let far = integrate_points(integrand, &[split, pi], tol);
            near.value + far.value
        } else {
            // geometric breakpoints resolve the peak of width |1 − r| at θ = 0
            let w = (1.0 - r).abs();
            let mut points = vec![0.0];
            let mut t = w;
            while t < pi {
                points.push(t);
                t *= 2.0;
            }
            points.push(pi);
            integrate_points(integrand, &points, tol).value
        };
        Ok(sigma(d - 1) * value)
    }

    /// [`Kernel::eval_fast`] at `s = 1 − gap ∈ (0, 1)`, with the gap passed
    /// separately so that points next to the singularity keep full relative
    /// accuracy in `1 − s`.
    pub fn eval_fast_inside(&self, s: f64, gap: f64) -> f64 {
        if self.spec.vanishes() {
            return 0.0;
        }
        if self.spec.dim == 1 {
            if s <= SWITCH_RADIUS {
                return one_dimensional(self.spec.alpha, s);
            }
            return one_dimensional_inside(self.spec.alpha, s, gap);
        }
        if self.spec.alpha == 0.0 {
            return self.series.coeffs[0] * s;
        }
        if s <= SWITCH_RADIUS {
            return self.series.eval(s);
        }
        self.table
            .as_ref()
            .expect("eval_fast_inside requires Kernel::with_table")
            .eval_gap(gap)
    }

    /// Fast evaluation for operator assembly. Requires [`Kernel::with_table`]
    /// for the band around `r = 1`; returns `+∞` exactly at a singular `r = 1`.
    pub fn eval_fast(&self, r: f64) -> f64 {
        if let Some(v) = closed_form(self.spec, self.series.coeffs[0], r) {
            return v;
        }
        let rs = SWITCH_RADIUS;
        if r <= rs {
            return self.series.eval(r);
        }
        if r >= 1.0 / rs {
            return r.powf(-self.spec.exponent()) * self.series.eval(1.0 / r);
        }
        let table = self
            .table
            .as_ref()
            .expect("eval_fast in the band around r = 1 requires Kernel::with_table");
        if r < 1.0 {
            table.eval_inside(r)
        } else if r == 1.0 {
            table.at_one()
        } else {
            r.powf(-self.spec.exponent()) * table.eval_inside(1.0 / r)
        }
    }
}

/// Convenience wrapper: builds a [`Kernel`] and evaluates it once.
pub fn kernel_eval(spec: KernelSpec, r: f64) -> Result<f64> {
    Kernel::new(spec)?.eval(r)
}

/// `g` on `[r_s, 1)` tabulated against `y = ln(1 − r)`.
///
/// For `α > 1` the stored quantity is `g(r)(1−r)^{α−1}`, which stays bounded as
/// `r → 1`; for `α ≤ 1` it is `g` itself (linear in `y` near the end when
/// `α = 1`). Six-point Lagrange interpolation in `y`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    alpha: f64,
    y_min: f64,
    step: f64,
    /// Nodes `ln(1 − r_j)` for the representable `r_j` nearest the uniform grid.
    ys: Vec<f64>,
    values: Vec<f64>,
    /// `g(1)` when finite (`α < 1`).
    g_one: f64,
}

const TABLE_STEP: f64 = 0.02;
const TABLE_GAP_MIN: f64 = 1e-13;

impl KernelTable {
    fn build(kernel: &Kernel) -> Result<Self> {
        let alpha = kernel.spec.alpha;
        let y_min = TABLE_GAP_MIN.ln();
        // a few nodes past r_s so interior stencils never leave the table
        let y_max = (1.0 - (SWITCH_RADIUS - 0.02)).ln();
        let count = ((y_max - y_min) / TABLE_STEP).ceil() as usize + 1;
        // 1 − e^y is rounded, so the node abscissa is recomputed from the stored r
        let ys: Vec<f64> = (0..count)
            .map(|j| (-(1.0 - (y_min + j as f64 * TABLE_STEP).exp())).ln_1p())
            .collect();
        let values = ys
            .par_iter()
            .map(|&y| {
                let r = 1.0 - y.exp();
                let gap = 1.0 - r;
                let g = kernel.eval_quadrature(r)?;
                Ok(if alpha > 1.0 {
                    g * gap.powf(alpha - 1.0)
                } else {
                    g
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let y_min = ys[0];
        let g_one = if alpha < 1.0 {
            kernel.eval_quadrature(1.0)?
        } else {
            f64::INFINITY
        };
        Ok(KernelTable {
            alpha,
            y_min,
            step: TABLE_STEP,
            ys,
            values,
            g_one,
        })
    }

    fn at_one(&self) -> f64 {
        self.g_one
    }

    fn stored(&self, y: f64) -> f64 {
        let n = self.values.len();
        let pos = (y - self.y_min) / self.step;
        let j0 = (pos.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
        let nodes = &self.ys[j0..j0 + 6];
        let mut acc = 0.0;
        for k in 0..6 {
            let mut w = 1.0;
            for j in 0..6 {
                if j != k {
                    w *= (y - nodes[j]) / (nodes[k] - nodes[j]);
                }
            }
            acc += w * self.values[j0 + k];
        }
        acc
    }

    fn eval_inside(&self, r: f64) -> f64 {
        self.eval_gap(1.0 - r)
    }

    fn eval_gap(&self, gap: f64) -> f64 {
        let y = gap.ln();
        let q = if y >= self.y_min {
            self.stored(y)
        } else {
            let q0 = self.values[0];
            if self.alpha > 1.0 {
                q0
            } else if self.alpha == 1.0 {
                q0 + (self.values[1] - q0) / (self.ys[1] - self.ys[0]) * (y - self.y_min)
            } else {
                self.g_one + (q0 - self.g_one) * ((1.0 - self.alpha) * (y - self.y_min)).exp()
            }
        };
        if self.alpha > 1.0 {
            q * gap.powf(1.0 - self.alpha)
        } else {
            q
        }
    }
}
