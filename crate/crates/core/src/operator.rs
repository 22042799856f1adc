//! The radial velocity `v = T u` and the weighted functionals built on it.
//!
//! For an even profile `u` the velocity is
//!
//! ```text
//! v(r) = ∫₀^∞ ∂_ρ u(ρ) g(r/ρ) ρ^{1−α} dρ,
//! ```
//!
//! with `∂_ρ u` taken from the monotone cubic interpolant of the samples. On
//! each cell `∂_ρ u` is a quadratic in the local coordinate, so `v(r_i)` is an
//! exact linear combination of node values and node slopes whose weights are
//! the first three moments of `ρ ↦ g(r_i/ρ) ρ^{1−α}` on every cell. The weights
//! are assembled once per grid; each velocity evaluation is a matrix product.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{RadialField, RadialGrid};
use crate::interp::{centered_slopes, Hermite, Parity};
use crate::kernel::{Kernel, KernelSpec};
use crate::mellin::check_weighted;
use crate::quadrature::{integrate, integrate_endpoint_singular, GaussLegendre, Tolerance, Vec3};

/// Fields must vanish (to relative `1e−10`) beyond this fraction of `R_max`.
pub const SUPPORT_FRACTION: f64 = 0.9;

const GAUSS_POINTS: usize = 8;

/// Velocity samples with their cubic interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    /// Bound on the moment quadrature error propagated to `v`.
    pub quadrature_error_estimate: f64,
}

impl VelocityField {
    fn new(grid: Arc<RadialGrid>, mut values: Vec<f64>, error: f64) -> Self {
        values[0] = 0.0;
        let slopes = centered_slopes(grid.nodes(), &values, Parity::Odd);
        VelocityField {
            grid,
            values,
            slopes,
            quadrature_error_estimate: error,
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Odd cubic interpolant of `v`.
    pub fn interpolant(&self) -> Hermite<'_> {
        Hermite {
            x: self.grid.nodes(),
            y: &self.values,
            m: &self.slopes,
            parity: Parity::Odd,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.interpolant().value(r)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `(1−θ) self + θ other`.
    pub fn blend(&self, other: &VelocityField, theta: f64) -> VelocityField {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect();
        VelocityField::new(
            self.grid.clone(),
            values,
            self.quadrature_error_estimate
                .max(other.quadrature_error_estimate),
        )
    }
}

#[derive(Debug, Clone)]
enum Weights {
    /// `α = 2`: `v = ∂_r u`.
    Local,
    /// `d = 2, α = 0`: the kernel vanishes.
    Zero,
    /// Row-major `n × n` weights on node values and node slopes.
    Dense {
        on_values: Vec<f64>,
        on_slopes: Vec<f64>,
        row_error: Vec<f64>,
    },
}

/// `u ↦ v` on a fixed grid.
#[derive(Debug, Clone)]
pub struct VelocityOperator {
    spec: KernelSpec,
    grid: Arc<RadialGrid>,
    weights: Weights,
}

impl VelocityOperator {
    pub fn new(spec: KernelSpec, grid: Arc<RadialGrid>) -> Result<Self> {
        Self::with_tolerance(spec, grid, Tolerance::new(1e-14, 1e-11))
    }

    /// `tol` controls the adaptive panels next to the kernel singularity.
    pub fn with_tolerance(spec: KernelSpec, grid: Arc<RadialGrid>, tol: Tolerance) -> Result<Self> {
        let weights = if spec.is_local_limit() {
            Weights::Local
        } else if spec.vanishes() {
            Weights::Zero
        } else {
            assemble(&Kernel::with_table(spec)?, &grid, tol)
        };
        Ok(VelocityOperator {
            spec,
            grid,
            weights,
        })
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    /// `v = T u`. Rejects fields reaching past [`SUPPORT_FRACTION`]` · R_max`.
    pub fn velocity(&self, u: &RadialField) -> Result<VelocityField> {
        if !Arc::ptr_eq(u.grid(), &self.grid) && **u.grid() != *self.grid {
            return Err(Error::Domain(
                "field and operator live on different grids".into(),
            ));
        }
        let n = self.grid.len();
        match &self.weights {
            Weights::Zero => Ok(VelocityField::new(self.grid.clone(), vec![0.0; n], 0.0)),
            Weights::Local => {
                let m = centered_slopes(self.grid.nodes(), u.values(), Parity::Even);
                Ok(VelocityField::new(self.grid.clone(), m, 0.0))
            }
            Weights::Dense {
                on_values,
                on_slopes,
                row_error,
            } => {
                u.check_support(SUPPORT_FRACTION)?;
                let (y, m) = (u.values(), u.slopes());
                let values: Vec<f64> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let a = &on_values[i * n..(i + 1) * n];
                        let b = &on_slopes[i * n..(i + 1) * n];
                        a.iter().zip(y).map(|(w, v)| w * v).sum::<f64>()
                            + b.iter().zip(m).map(|(w, s)| w * s).sum::<f64>()
                    })
                    .collect();
                let scale = y.iter().chain(m).fold(0.0_f64, |s, v| s.max(v.abs()));
                let err = row_error.iter().fold(0.0_f64, |s, &e| s.max(e)) * scale;
                Ok(VelocityField::new(self.grid.clone(), values, err))
            }
        }
    }

    /// `∫₀^∞ (T f)(r) f′(r) r^{−1−δ} dr`.
    pub fn weighted_pairing(&self, f: &RadialField, delta: f64) -> Result<f64> {
        check_weighted(self.spec, delta)?;
        let v = self.velocity(f)?;
        let (vi, fi) = (v.interpolant(), f.interpolant());
        Ok(radial_integral(self.grid.nodes(), self.grid.r_max(), |r| {
            vi.value(r) * fi.derivative(r) * r.powf(-1.0 - delta)
        }))
    }

    /// `weighted_pairing / rhs_functional`.
    pub fn positivity_ratio(&self, f: &RadialField, delta: f64) -> Result<f64> {
        let rhs = rhs_functional(self.spec, f, delta)?;
        if !(rhs > 0.0) {
            return Err(Error::UndefinedRatio);
        }
        Ok(self.weighted_pairing(f, delta)? / rhs)
    }
}

/// Three moments `∫₀¹ tᵏ K(ρ_a + h t) dt`, `k = 0, 1, 2`, of `K(ρ) = g(r/ρ) ρ^{1−α}`
/// on the cell `[a, b]`.
struct CellRule<'a> {
    kernel: &'a Kernel,
    alpha: f64,
    exponent: f64,
    gauss: GaussLegendre,
    power: f64,
    tol: Tolerance,
}

impl CellRule<'_> {
    fn kern(&self, r: f64, rho: f64) -> f64 {
        self.kernel.eval_fast(r / rho) * rho.powf(1.0 - self.alpha)
    }

    /// `K` at `ρ = r ± x`, with `1 − s` formed from `x` rather than from `r/ρ`.
    fn kern_offset(&self, r: f64, x: f64, above: bool) -> f64 {
        if above {
            let rho = r + x;
            self.kernel.eval_fast_inside(r / rho, x / rho) * rho.powf(1.0 - self.alpha)
        } else {
            let rho = r - x;
            let inner = rho / r;
            inner.powf(self.exponent)
                * self.kernel.eval_fast_inside(inner, x / r)
                * rho.powf(1.0 - self.alpha)
        }
    }

    fn moments(&self, r: f64, a: f64, b: f64, kind: CellKind) -> (Vec3, f64) {
        let h = b - a;
        let local = |t: f64, k: f64| {
            if k.is_finite() {
                Vec3([k, k * t, k * t * t])
            } else {
                Vec3::default()
            }
        };
        match kind {
            CellKind::Far => {
                let mut acc = Vec3::default();
                for (x, w) in self.gauss.mapped(0.0, 1.0) {
                    acc = acc + local(x, self.kern(r, a + h * x)) * w;
                }
                (acc, 0.0)
            }
            CellKind::Near => {
                let q = integrate(|t| local(t, self.kern(r, a + h * t)), 0.0, 1.0, self.tol);
                (q.value, q.error)
            }
            CellKind::Singular { above } => {
                // offset x = h τ^p from the singular end
                let p = self.power;
                let f = |tau: f64| {
                    let frac = tau.powf(p);
                    let jac = p * tau.powf(p - 1.0);
                    let k = self.kern_offset(r, h * frac, above);
                    let t = if above { frac } else { 1.0 - frac };
                    local(t, k) * jac
                };
                let q = integrate(f, 0.0, 1.0, self.tol);
                (q.value, q.error)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum CellKind {
    Far,
    Near,
    /// The cell ends at `ρ = r`; `above` when it lies to the right of it.
    Singular {
        above: bool,
    },
}

fn assemble(kernel: &Kernel, grid: &RadialGrid, tol: Tolerance) -> Weights {
    let nodes = grid.nodes();
    let n = nodes.len();
    let alpha = kernel.spec().alpha;
    let rule = CellRule {
        kernel,
        alpha,
        exponent: kernel.spec().exponent(),
        gauss: GaussLegendre::new(GAUSS_POINTS),
        // |ρ − r|^{1−α} becomes τ^{p(2−α)−1} with exponent ≥ 2 under ρ − r ∝ τ^p
        power: 3.0 * (1.0 / (2.0 - alpha)).max(1.0),
        tol,
    };
    let rows: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            let mut err = 0.0;
            if i == 0 {
                return (a, b, err);
            }
            let r = nodes[i];
            for j in 0..n - 1 {
                let (lo, hi) = (nodes[j], nodes[j + 1]);
                let h = hi - lo;
                let kind = if j == i {
                    CellKind::Singular { above: true }
                } else if j + 1 == i {
                    CellKind::Singular { above: false }
                } else if j + 2 == i || j == i + 1 {
                    CellKind::Near
                } else {
                    CellKind::Far
                };
                let (mu, e) = rule.moments(r, lo, hi, kind);
                let [m0, m1, m2] = mu.0;
                // moments of the Hermite basis derivatives in the local coordinate
                a[j] += 6.0 * (m2 - m1);
                a[j + 1] -= 6.0 * (m2 - m1);
                b[j] += h * (3.0 * m2 - 4.0 * m1 + m0);
                b[j + 1] += h * (3.0 * m2 - 2.0 * m1);
                err += 12.0 * e * h.max(1.0);
            }
            (a, b, err)
        })
        .collect();
    let mut on_values = Vec::with_capacity(n * n);
    let mut on_slopes = Vec::with_capacity(n * n);
    let mut row_error = Vec::with_capacity(n);
    for (a, b, e) in rows {
        on_values.extend(a);
        on_slopes.extend(b);
        row_error.push(e);
    }
    Weights::Dense {
        on_values,
        on_slopes,
        row_error,
    }
}

/// `∫₀^upper f` split at the grid nodes: an adaptive graded rule on the first
/// cell (weights singular at the origin), Gauss–Legendre elsewhere.
pub fn radial_integral<F: Fn(f64) -> f64>(nodes: &[f64], upper: f64, f: F) -> f64 {
    let hi = nodes[1].min(upper);
    let tol = Tolerance::new(1e-16, 1e-13);
    integrate_endpoint_singular(&f, 0.0, hi, true, 2.0, tol).value + gauss_cells(nodes, 1, upper, f)
}

/// Gauss–Legendre over the cells from `first` up to `upper`.
fn gauss_cells<F: Fn(f64) -> f64>(nodes: &[f64], first: usize, upper: f64, f: F) -> f64 {
    let gauss = GaussLegendre::new(GAUSS_POINTS);
    let mut total = 0.0;
    for w in nodes[first..].windows(2) {
        if w[0] >= upper {
            break;
        }
        total += gauss.integrate(&f, w[0], w[1].min(upper));
    }
    total
}

/// `∫₀^∞ (f(r) − f(0))² r^{−1−α−δ} dr`; `f` is constant past `R_max`.
pub fn rhs_functional(spec: KernelSpec, f: &RadialField, delta: f64) -> Result<f64> {
    check_weighted(spec, delta)?;
    if f.check_support(SUPPORT_FRACTION).is_err() {
        return Err(Error::Domain(
            "f does not settle to a constant inside the grid; the integral would be truncated"
                .into(),
        ));
    }
    let p = spec.alpha + delta;
    let f0 = f.origin_value();
    let fi = f.interpolant();
    let grid = f.grid();
    let body = radial_integral(grid.nodes(), grid.r_max(), |r| {
        let d = fi.value(r) - f0;
        d * d * r.powf(-1.0 - p)
    });
    let far = *f.values().last().expect("nonempty") - f0;
    Ok(body + far * far * grid.r_max().powf(-p) / p)
}

/// Value of the blowup functional together with a check of its hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupFunctional {
    pub value: f64,
    /// `u(0) = max u`; when false the value is still computed.
    pub origin_is_max: bool,
}

/// `I = ∫₀^L (u(0) − u(r)) r^{−1−δ} dr`.
pub fn blowup_functional(u: &RadialField, delta: f64, cutoff: f64) -> Result<BlowupFunctional> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Hypothesis(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(cutoff > 0.0) {
        return Err(Error::Domain(format!(
            "cutoff L must be positive, got {cutoff}"
        )));
    }
    let u0 = u.origin_value();
    let ui = u.interpolant();
    let grid = u.grid();
    let r_max = grid.r_max();
    let nodes = grid.nodes();
    let upper = cutoff.min(r_max);
    // on the first cell u(0) − u = t²(3D + h m₁) − t³(2D + h m₁), t = r/h
    let h = nodes[1];
    let b = h.min(upper);
    let dy = u0 - u.values()[1];
    let hm = h * u.slopes()[1];
    let moment = |k: f64| b.powf(k - delta) / (h.powf(k) * (k - delta));
    let mut value = (3.0 * dy + hm) * moment(2.0) - (2.0 * dy + hm) * moment(3.0)
        + gauss_cells(nodes, 1, upper, |r| {
            (u0 - ui.value(r)) * r.powf(-1.0 - delta)
        });
    if cutoff > r_max {
        let far = u0 - *u.values().last().expect("nonempty");
        value += far * (r_max.powf(-delta) - cutoff.powf(-delta)) / delta;
    }
    Ok(BlowupFunctional {
        value,
        origin_is_max: u0 >= u.max(),
    })
}

/// `Σ cᵢ exp(−sᵢ r²)`, the smooth even test functions of the inequality suite.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub terms: Vec<(f64, f64)>,
}

impl GaussianMixture {
    pub fn eval(&self, r: f64) -> f64 {
        self.terms.iter().map(|(c, s)| c * (-s * r * r).exp()).sum()
    }

    pub fn sample(&self, grid: Arc<RadialGrid>) -> Result<RadialField> {
        RadialField::from_fn(grid, |r| self.eval(r))
    }
}
