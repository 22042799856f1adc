//! Semi-Lagrangian time stepping of `u_t + v ∂_r u = 0`, `v = T u`, with the
//! diagnostics used to detect gradient blowup.
//!
//! One step of size `dt` from `uⁿ`:
//!
//! 1. `vⁿ = T uⁿ`, and a predictor `u*` advected with `vⁿ` frozen;
//! 2. `v* = T u*` and the midpoint velocity `v½ = (vⁿ + v*) / 2`;
//! 3. the corrector traces each node back with the midpoint rule through `v½`
//!    and evaluates the monotone interpolant of `uⁿ` at the foot.
//!
//! The monotone interpolant never leaves the range of the data, so the scheme
//! satisfies an exact maximum principle, and `v(0) = 0` pins `u(0)`.

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cluster, RadialField, RadialGrid};
use crate::kernel::{build_series, KernelSpec};
use crate::mellin::{positivity_certificate, DEFAULT_LAMBDA_MAX};
use crate::operator::{blowup_functional, VelocityField, VelocityOperator};

/// Relative level below which a value counts as outside the support.
pub const SUPPORT_EPS: f64 = 1e-12;

/// Quantity compared against the blowup threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monitor {
    /// `sup |∂_r u|`.
    Gradient,
    /// `sup |∂_r² u|`; for `α = 2` the gradient stays bounded up to the shock
    /// time while the curvature diverges.
    Curvature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub spec: KernelSpec,
    /// Weight exponent of the blowup functional.
    pub delta: f64,
    /// Number of grid cells.
    pub grid_m: usize,
    /// Refinement zones of the graded grid.
    pub clusters: Vec<Cluster>,
    pub r_max: f64,
    /// Cutoff of the blowup functional.
    pub cutoff_l: f64,
    pub cfl: f64,
    pub t_end: f64,
    pub dt_max: f64,
    /// Absolute threshold on the monitored quantity.
    pub blowup_threshold: f64,
    pub monitor: Monitor,
    /// Steps between trace samples.
    pub output_stride: usize,
    /// Trace samples between snapshots.
    pub snapshot_stride: usize,
}

/// Midpoint of the admissible range `(0, min(α, 2−α))`; `1/2` when that range
/// is empty (`α ∈ {0, 2}`), where the functional is only monitored.
pub fn default_delta(alpha: f64) -> f64 {
    let m = alpha.min(2.0 - alpha);
    if m > 0.0 {
        0.5 * m
    } else {
        0.5
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let a = self.spec.alpha;
        if a > 0.0 && a < 2.0 {
            let hi = a.min(2.0 - a);
            if !(self.delta > 0.0 && self.delta < hi) {
                return Err(Error::Hypothesis(format!(
                    "delta must lie in (0, {hi}) for alpha = {a}, got {}",
                    self.delta
                )));
            }
        } else if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Hypothesis(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::Domain(format!(
                "cfl must lie in (0, 1), got {}",
                self.cfl
            )));
        }
        let positive = [
            ("t_end", self.t_end),
            ("dt_max", self.dt_max),
            ("r_max", self.r_max),
            ("cutoff L", self.cutoff_l),
            ("blowup threshold", self.blowup_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.grid_m < 2 {
            return Err(Error::Domain(format!(
                "grid needs at least 2 cells, got {}",
                self.grid_m
            )));
        }
        if self.output_stride == 0 || self.snapshot_stride == 0 {
            return Err(Error::Domain("strides must be at least 1".into()));
        }
        Ok(())
    }
}

/// Smooth bump `h · exp(1 − 1/(1 − (r/R)²))` on `r < R`, zero beyond.
pub fn bump_profile(height: f64, radius: f64, r: f64) -> f64 {
    let s = r / radius;
    if s.abs() >= 1.0 {
        0.0
    } else {
        height * (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// Samples [`bump_profile`] on `grid`.
pub fn make_initial_bump(height: f64, radius: f64, grid: Arc<RadialGrid>) -> Result<RadialField> {
    if !(height > 0.0) || !height.is_finite() {
        return Err(Error::Domain(format!(
            "bump height must be positive, got {height}"
        )));
    }
    if !(radius > 0.0) || radius >= 0.9 * grid.r_max() {
        return Err(Error::Domain(format!(
            "bump radius must lie in (0, 0.9 R_max) = (0, {}), got {radius}",
            0.9 * grid.r_max()
        )));
    }
    RadialField::from_fn(grid, |r| bump_profile(height, radius, r))
}

/// Diagnostics sampled along a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BlowupTrace {
    pub times: Vec<f64>,
    pub i_values: Vec<f64>,
    pub grad_sup: Vec<f64>,
    pub grad_argmax: Vec<f64>,
    pub curvature_sup: Vec<f64>,
    pub support_radius: Vec<f64>,
    pub u_at_origin: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    /// Samples where `u(0) < max u`, violating the functional's hypothesis.
    pub origin_not_max: usize,
    pub delta: f64,
    pub cutoff_l: f64,
    /// Certified Mellin constant `C_{d,α,δ}`, when `α ∈ (0, 2)`.
    pub mellin_constant: Option<f64>,
    /// `C̃ = C (α−δ) / L^{α−δ}`.
    pub c_tilde: Option<f64>,
    pub predicted_t_star: f64,
}

impl BlowupTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Columns `t,I,grad_sup,support_radius,u_origin,grad_argmax,curvature_sup`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "t,I,grad_sup,support_radius,u_origin,grad_argmax,curvature_sup"
        )?;
        for k in 0..self.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[k],
                self.i_values[k],
                self.grad_sup[k],
                self.support_radius[k],
                self.u_at_origin[k],
                self.grad_argmax[k],
                self.curvature_sup[k]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Verdict {
    Completed { time: f64 },
    Blowup { time: f64, monitor_value: f64 },
    Unstable { time: f64, reason: String },
}

impl Verdict {
    pub fn blowup_time(&self) -> Option<f64> {
        match self {
            Verdict::Blowup { time, .. } => Some(*time),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl Snapshot {
    /// Columns `r,u,v`.
    pub fn write_csv<W: Write>(&self, nodes: &[f64], mut out: W) -> io::Result<()> {
        writeln!(out, "r,u,v")?;
        for ((r, u), v) in nodes.iter().zip(&self.u).zip(&self.v) {
            writeln!(out, "{r:.16e},{u:.16e},{v:.16e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: BlowupTrace,
    pub verdict: Verdict,
    pub snapshots: Vec<Snapshot>,
    pub final_field: RadialField,
    pub steps: usize,
    /// Characteristic feet that left `[0, R_max]` and were clamped.
    pub clamped_feet: usize,
    pub max_quadrature_error: f64,
}

/// Result of one time step.
#[derive(Debug, Clone)]
pub struct Step {
    pub field: RadialField,
    /// Velocity of the field the step started from.
    pub velocity: VelocityField,
    pub clamped_feet: usize,
}

/// Time stepper bound to one grid and kernel.
#[derive(Debug, Clone)]
pub struct Solver {
    config: SolverConfig,
    operator: VelocityOperator,
    mellin_constant: Option<f64>,
}

/// Certified `C_{d,α,δ}` on the default λ grid.
pub fn certified_constant(spec: KernelSpec, delta: f64) -> Result<f64> {
    let coeffs = build_series(spec, 1e-16)?;
    Ok(positivity_certificate(spec, delta, DEFAULT_LAMBDA_MAX, &coeffs)?.positivity_constant)
}

/// `C̃ = C (α−δ) / L^{α−δ}`.
pub fn c_tilde(mellin_constant: f64, alpha: f64, delta: f64, cutoff_l: f64) -> f64 {
    mellin_constant * (alpha - delta) / cutoff_l.powf(alpha - delta)
}

/// `T* = 1 / (C̃ I(0))`, infinite for a flat profile.
pub fn predict_blowup_time(
    u0: &RadialField,
    spec: KernelSpec,
    delta: f64,
    cutoff_l: f64,
    mellin_constant: f64,
) -> Result<f64> {
    let i0 = blowup_functional(u0, delta, cutoff_l)?.value;
    if !(i0 > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (c_tilde(mellin_constant, spec.alpha, delta, cutoff_l) * i0))
}

impl Solver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        let grid = Arc::new(RadialGrid::clustered(
            config.grid_m,
            config.r_max,
            &config.clusters,
        )?);
        Self::on_grid(config, grid)
    }

    pub fn on_grid(config: SolverConfig, grid: Arc<RadialGrid>) -> Result<Self> {
        config.validate()?;
        let operator = VelocityOperator::new(config.spec, grid)?;
        let a = config.spec.alpha;
        let mellin_constant = if a > 0.0 && a < 2.0 {
            Some(certified_constant(config.spec, config.delta)?)
        } else {
            None
        };
        Ok(Solver {
            config,
            operator,
            mellin_constant,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.operator.grid()
    }

    pub fn operator(&self) -> &VelocityOperator {
        &self.operator
    }

    pub fn mellin_constant(&self) -> Option<f64> {
        self.mellin_constant
    }

    pub fn c_tilde(&self) -> Option<f64> {
        self.mellin_constant.map(|c| {
            c_tilde(
                c,
                self.config.spec.alpha,
                self.config.delta,
                self.config.cutoff_l,
            )
        })
    }

    /// Largest admissible step for velocity `v`.
    pub fn cfl_limit(&self, v: &VelocityField) -> f64 {
        let vmax = v.max_abs();
        let h = self.grid().min_spacing();
        if vmax > 0.0 {
            self.config.cfl * h / vmax
        } else {
            f64::INFINITY
        }
    }

    /// Advances `u` by `dt`.
    pub fn step(&self, u: &RadialField, dt: f64) -> Result<Step> {
        let v = self.operator.velocity(u)?;
        self.step_with(u, v, dt)
    }

    fn step_with(&self, u: &RadialField, v0: VelocityField, dt: f64) -> Result<Step> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let limit = self.cfl_limit(&v0);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit });
        }
        let (predicted, _) = self.advect(u, &v0, dt)?;
        let v_star = self.operator.velocity(&predicted)?;
        let v_mid = v0.blend(&v_star, 0.5);
        let (field, clamped_feet) = self.advect(u, &v_mid, dt)?;
        Ok(Step {
            field,
            velocity: v0,
            clamped_feet,
        })
    }

    /// Midpoint traceback of every node through `v`, then interpolation.
    fn advect(&self, u: &RadialField, v: &VelocityField, dt: f64) -> Result<(RadialField, usize)> {
        let grid = self.grid();
        let r_max = grid.r_max();
        let ui = u.interpolant();
        let vi = v.interpolant();
        let out: Vec<(f64, bool)> = grid
            .nodes()
            .par_iter()
            .map(|&r| {
                let mid = r - 0.5 * dt * vi.value(r);
                let foot = r - dt * vi.value(mid);
                (ui.value(foot), foot.abs() > r_max)
            })
            .collect();
        let clamped = out.iter().filter(|o| o.1).count();
        let values = out.into_iter().map(|o| o.0).collect();
        Ok((RadialField::new(grid.clone(), values)?, clamped))
    }

    fn monitored(&self, u: &RadialField) -> f64 {
        match self.config.monitor {
            Monitor::Gradient => u.gradient_sup().0,
            Monitor::Curvature => u.curvature_sup(),
        }
    }

    fn record(&self, trace: &mut BlowupTrace, t: f64, u: &RadialField) -> Result<()> {
        let f = blowup_functional(u, self.config.delta, self.config.cutoff_l)?;
        let (g, at) = u.gradient_sup();
        let scale = u.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        trace.times.push(t);
        trace.i_values.push(f.value);
        trace.grad_sup.push(g);
        trace.grad_argmax.push(at);
        trace.curvature_sup.push(u.curvature_sup());
        trace
            .support_radius
            .push(u.support_radius(SUPPORT_EPS * scale));
        trace.u_at_origin.push(u.origin_value());
        trace.u_min.push(u.min());
        trace.u_max.push(u.max());
        if !f.origin_is_max {
            trace.origin_not_max += 1;
        }
        Ok(())
    }

    /// Runs from `u0` until `t_end`, the blowup threshold, or a failure.
    pub fn run(&self, u0: &RadialField) -> Result<RunOutcome> {
        let cfg = &self.config;
        let c_tilde = self.c_tilde();
        let predicted = match self.mellin_constant {
            Some(c) => predict_blowup_time(u0, cfg.spec, cfg.delta, cfg.cutoff_l, c)?,
            None => f64::INFINITY,
        };
        let trace = BlowupTrace {
            delta: cfg.delta,
            cutoff_l: cfg.cutoff_l,
            mellin_constant: self.mellin_constant,
            c_tilde,
            predicted_t_star: predicted,
            ..Default::default()
        };
        self.run_with_trace(u0, trace)
    }

    /// As [`Solver::run`] with a caller-provided prediction in the trace.
    pub fn run_with_trace(&self, u0: &RadialField, mut trace: BlowupTrace) -> Result<RunOutcome> {
        let cfg = &self.config;
        let mut u = u0.clone();
        let mut v = self.operator.velocity(&u)?;
        let mut t = 0.0;
        let mut steps = 0usize;
        let mut clamped = 0usize;
        let mut max_err = v.quadrature_error_estimate;
        let mut snapshots = vec![Snapshot {
            time: 0.0,
            u: u.values().to_vec(),
            v: v.values().to_vec(),
        }];
        self.record(&mut trace, 0.0, &u)?;
        let mut samples = 1usize;
        let unstable = |time: f64, reason: String| Verdict::Unstable { time, reason };
        let verdict = loop {
            if t >= cfg.t_end * (1.0 - 1e-14) {
                break Verdict::Completed { time: t };
            }
            if !v.is_finite() {
                break unstable(t, "non-finite velocity".into());
            }
            let dt = self.cfl_limit(&v).min(cfg.dt_max).min(cfg.t_end - t);
            let step = match self.step_with(&u, v.clone(), dt) {
                Ok(s) => s,
                Err(e) => break unstable(t, e.to_string()),
            };
            t += dt;
            steps += 1;
            clamped += step.clamped_feet;
            u = step.field;
            v = match self.operator.velocity(&u) {
                Ok(v) => v,
                Err(e) => break unstable(t, e.to_string()),
            };
            max_err = max_err.max(v.quadrature_error_estimate);
            let m = self.monitored(&u);
            if !m.is_finite() {
                break unstable(t, "non-finite field".into());
            }
            let crossed = m >= cfg.blowup_threshold;
            let finished = t >= cfg.t_end * (1.0 - 1e-14);
            if crossed || finished || steps.is_multiple_of(cfg.output_stride) {
                self.record(&mut trace, t, &u)?;
                samples += 1;
                if crossed || finished || samples.is_multiple_of(cfg.snapshot_stride) {
                    snapshots.push(Snapshot {
                        time: t,
                        u: u.values().to_vec(),
                        v: v.values().to_vec(),
                    });
                }
            }
            if crossed {
                break Verdict::Blowup {
                    time: t,
                    monitor_value: m,
                };
            }
        };
        Ok(RunOutcome {
            trace,
            verdict,
            snapshots,
            final_field: u,
            steps,
            clamped_feet: clamped,
            max_quadrature_error: max_err,
        })
    }
}

/// Two runs on nested grids, the second with every cell halved.
#[derive(Debug, Clone)]
pub struct RefinementStudy {
    pub coarse: RunOutcome,
    pub fine: RunOutcome,
    pub coarse_time: Option<f64>,
    pub fine_time: Option<f64>,
    /// `|t_fine − t_coarse| / t_coarse`.
    pub relative_shift: Option<f64>,
    /// Both grids detect blowup and the detection times differ by < 20%.
    pub consistent: bool,
}

pub const REFINEMENT_TOLERANCE: f64 = 0.2;

/// Runs `config` on its grid and on the doubled grid; `initial` samples the
/// initial profile on a given grid.
pub fn refinement_study<F>(config: &SolverConfig, initial: F) -> Result<RefinementStudy>
where
    F: Fn(Arc<RadialGrid>) -> Result<RadialField>,
{
    let coarse_solver = Solver::new(config.clone())?;
    let coarse = coarse_solver.run(&initial(coarse_solver.grid().clone())?)?;
    let mut fine_config = config.clone();
    fine_config.grid_m *= 2;
    fine_config.output_stride *= 2;
    let fine_grid = Arc::new(coarse_solver.grid().refined());
    let fine_solver = Solver::on_grid(fine_config, fine_grid)?;
    let fine = fine_solver.run(&initial(fine_solver.grid().clone())?)?;
    Ok(RefinementStudy::from_runs(coarse, fine))
}

impl RefinementStudy {
    pub fn from_runs(coarse: RunOutcome, fine: RunOutcome) -> Self {
        let coarse_time = coarse.verdict.blowup_time();
        let fine_time = fine.verdict.blowup_time();
        let relative_shift = match (coarse_time, fine_time) {
            (Some(a), Some(b)) => Some((b - a).abs() / a),
            _ => None,
        };
        RefinementStudy {
            coarse,
            fine,
            coarse_time,
            fine_time,
            relative_shift,
            consistent: relative_shift.is_some_and(|s| s < REFINEMENT_TOLERANCE),
        }
    }
}

/// Outcome of comparing the trace with `dI/dt ≥ C̃ I²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeReport {
    /// Set when the inequality's hypotheses do not hold for this run.
    pub skipped: Option<String>,
    pub checked: usize,
    pub satisfied: usize,
    pub fraction: f64,
    /// First time at which `I ≥ 2 I(0)`.
    pub doubling_time: Option<f64>,
    /// `1 / (C̃ I(0))`.
    pub doubling_bound: f64,
    pub doubling_ok: bool,
}

pub const ODE_MIN_SAMPLES: usize = 10;

/// Central differences of `I` at every interior sample with `t ≤ cutoff`.
pub fn ode_inequality_check(trace: &BlowupTrace, cutoff: f64) -> Result<OdeReport> {
    let Some(ct) = trace.c_tilde else {
        return Ok(OdeReport {
            skipped: Some("alpha outside (0, 2): no certified constant".into()),
            checked: 0,
            satisfied: 0,
            fraction: 1.0,
            doubling_time: None,
            doubling_bound: f64::INFINITY,
            doubling_ok: true,
        });
    };
    let n = trace.times.iter().take_while(|&&t| t <= cutoff).count();
    if n < ODE_MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: ODE_MIN_SAMPLES,
            got: n,
        });
    }
    let (t, i) = (&trace.times, &trace.i_values);
    let mut satisfied = 0;
    for k in 1..n - 1 {
        let didt = (i[k + 1] - i[k - 1]) / (t[k + 1] - t[k - 1]);
        let rhs = ct * i[k] * i[k];
        if didt >= rhs - 1e-12 * rhs.abs().max(1.0) {
            satisfied += 1;
        }
    }
    let checked = n - 2;
    let i0 = i[0];
    let doubling_time = (0..trace.len()).find(|&k| i[k] >= 2.0 * i0).map(|k| t[k]);
    let doubling_bound = if i0 > 0.0 {
        1.0 / (ct * i0)
    } else {
        f64::INFINITY
    };
    Ok(OdeReport {
        skipped: None,
        checked,
        satisfied,
        fraction: satisfied as f64 / checked as f64,
        doubling_time,
        doubling_bound,
        doubling_ok: doubling_time.is_none_or(|d| d <= doubling_bound),
    })
}

type RealFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Exact pre-shock solution of `u_t + (∂_r u)² = 0` (the `α = 2` equation).
///
/// `w = ∂_r u` is constant along `x(t) = x₀ + 2 w₀(x₀) t`, on which
/// `u = u₀(x₀) + t w₀(x₀)²`; the first crossing of characteristics happens at
/// `T* = −1 / (2 min w₀′)`.
pub struct BurgersOracle {
    u0: RealFn,
    w0: RealFn,
    w_bound: f64,
    t_star: f64,
}

impl std::fmt::Debug for BurgersOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BurgersOracle")
            .field("w_bound", &self.w_bound)
            .field("t_star", &self.t_star)
            .finish()
    }
}

/// `−1 / (2 m)` for `m < 0`, infinite otherwise.
pub fn burgers_blowup_time(min_w0_prime: f64) -> f64 {
    if min_w0_prime < 0.0 {
        -0.5 / min_w0_prime
    } else {
        f64::INFINITY
    }
}

impl BurgersOracle {
    /// `u0`, its derivative `w0` and second derivative `w0_prime`, scanned on
    /// `[0, extent]` for `min w₀′` and `sup |w₀|`.
    pub fn new(u0: RealFn, w0: RealFn, w0_prime: RealFn, extent: f64) -> Self {
        let n = 200_000;
        let mut min_wp = f64::INFINITY;
        let mut w_bound: f64 = 0.0;
        for k in 0..=n {
            let r = extent * k as f64 / n as f64;
            min_wp = min_wp.min(w0_prime(r));
            w_bound = w_bound.max(w0(r).abs());
        }
        BurgersOracle {
            u0,
            w0,
            w_bound,
            t_star: burgers_blowup_time(min_wp),
        }
    }

    /// `u₀ = h e^{−r²/s²}`.
    pub fn gaussian(height: f64, width: f64) -> Self {
        let s2 = width * width;
        Self::new(
            Box::new(move |r| height * (-r * r / s2).exp()),
            Box::new(move |r| -2.0 * height * r / s2 * (-r * r / s2).exp()),
            Box::new(move |r| height * (4.0 * r * r / s2 - 2.0) / s2 * (-r * r / s2).exp()),
            12.0 * width,
        )
    }

    pub fn blowup_time(&self) -> f64 {
        self.t_star
    }

    /// `u(r, t)` for `0 ≤ t < T*`.
    pub fn solution(&self, r: f64, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t < self.t_star) {
            return Err(Error::Domain(format!(
                "characteristics cross at T* = {}; t = {t} is outside [0, T*)",
                self.t_star
            )));
        }
        let r = r.abs();
        // x₀ ↦ x₀ + 2 w₀(x₀) t is increasing before T*
        let map = |x0: f64| x0 + 2.0 * (self.w0)(x0) * t - r;
        let reach = 2.0 * self.w_bound * t + 1e-12;
        let mut lo = r - reach;
        let mut hi = r + reach;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if map(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-16 * r.max(1.0) {
                break;
            }
        }
        let x0 = 0.5 * (lo + hi);
        let w = (self.w0)(x0);
        Ok((self.u0)(x0) + t * w * w)
    }
}

/// Preset scenarios of the batch driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Standard unit bump, gradient threshold 100× initial, `t_end = 2 T*`.
    Blowup,
    /// `α = 0` global-regularity run to `t = 50`.
    GlobalAlpha0,
    /// `α = 2` with a Gaussian, curvature threshold 20× initial.
    Burgers,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blowup" => Ok(Preset::Blowup),
            "global-alpha0" => Ok(Preset::GlobalAlpha0),
            "burgers" => Ok(Preset::Burgers),
            _ => Err(Error::Domain(format!(
                "unknown preset {s:?}; expected blowup, global-alpha0 or burgers"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialProfile {
    Bump { height: f64, radius: f64 },
    Gaussian { height: f64, width: f64 },
}

impl InitialProfile {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            InitialProfile::Bump { height, radius } => bump_profile(height, radius, r),
            InitialProfile::Gaussian { height, width } => height * (-(r / width).powi(2)).exp(),
        }
    }

    pub fn sample(&self, grid: Arc<RadialGrid>) -> Result<RadialField> {
        match *self {
            InitialProfile::Bump { height, radius } => make_initial_bump(height, radius, grid),
            InitialProfile::Gaussian { .. } => RadialField::from_fn(grid, |r| self.eval(r)),
        }
    }

    /// `min ∂_r² u₀` by a five-point difference on a fine scan.
    pub fn min_second_derivative(&self, extent: f64) -> f64 {
        let h = 1e-3;
        let n = (extent / h).ceil() as usize;
        (0..=n)
            .map(|k| {
                let r = k as f64 * h;
                let e = 1e-3;
                (-self.eval(r + 2.0 * e) + 16.0 * self.eval(r + e) - 30.0 * self.eval(r)
                    + 16.0 * self.eval(r - e)
                    - self.eval(r - 2.0 * e))
                    / (12.0 * e * e)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// A preset with every default filled in; fields may be overridden before
/// [`Scenario::prepare`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub preset: Preset,
    pub spec: KernelSpec,
    pub profile: InitialProfile,
    pub delta: Option<f64>,
    pub grid_m: usize,
    pub r_max: f64,
    /// Node density at the origin relative to the far field.
    pub origin_refinement: f64,
    /// Node density at the initial support boundary relative to the far field.
    pub edge_refinement: f64,
    pub cutoff_l: Option<f64>,
    pub cfl: f64,
    pub t_end: Option<f64>,
    /// Threshold as a multiple of the initial monitored value.
    pub threshold_factor: f64,
    pub monitor: Monitor,
    pub output_stride: usize,
    pub snapshot_stride: usize,
}

impl Preset {
    /// Defaults for `preset`; `dim` and `alpha` override the preset's own.
    pub fn scenario(self, dim: Option<i64>, alpha: Option<f64>) -> Result<Scenario> {
        let (d, a, profile, r_max, grid_m, factor, monitor, refine) = match self {
            Preset::Blowup => (
                dim.unwrap_or(2),
                alpha.unwrap_or(1.0),
                InitialProfile::Bump {
                    height: 1.0,
                    radius: 1.0,
                },
                1.25,
                400,
                100.0,
                Monitor::Gradient,
                (10.0, 3.0),
            ),
            Preset::GlobalAlpha0 => (
                dim.unwrap_or(3),
                alpha.unwrap_or(0.0),
                // C_{d,α} = 1 fixes the time scale to 1/height
                InitialProfile::Bump {
                    height: 0.002,
                    radius: 1.0,
                },
                1.25,
                400,
                100.0,
                Monitor::Gradient,
                (4.0, 2.0),
            ),
            Preset::Burgers => (
                dim.unwrap_or(2),
                alpha.unwrap_or(2.0),
                InitialProfile::Gaussian {
                    height: 1.0,
                    width: 1.0,
                },
                6.0,
                2000,
                20.0,
                Monitor::Curvature,
                (1.0, 1.0),
            ),
        };
        let spec = KernelSpec::new(d, a)?;
        match self {
            Preset::Blowup if !(a > 0.0 && a < 2.0) => {
                return Err(Error::Domain(format!(
                    "the blowup preset needs alpha in (0, 2), got {a}"
                )));
            }
            Preset::GlobalAlpha0 if a != 0.0 => {
                return Err(Error::Domain(format!(
                    "the global-alpha0 preset needs alpha = 0, got {a}"
                )));
            }
            Preset::Burgers if a != 2.0 => {
                return Err(Error::Domain(format!(
                    "the burgers preset needs alpha = 2, got {a}"
                )));
            }
            _ => {}
        }
        Ok(Scenario {
            preset: self,
            spec,
            profile,
            delta: None,
            grid_m,
            r_max,
            origin_refinement: refine.0,
            edge_refinement: refine.1,
            cutoff_l: None,
            cfl: 0.5,
            t_end: None,
            threshold_factor: factor,
            monitor,
            output_stride: 1,
            snapshot_stride: 100,
        })
    }
}

/// A scenario resolved into a solver configuration and an initial field.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: SolverConfig,
    pub solver: Solver,
    pub initial: RadialField,
    pub profile: InitialProfile,
    /// `1/(C̃ I(0))` for `α ∈ (0, 2)`, the shock time for `α = 2`, else `∞`.
    pub predicted_t_star: f64,
}

impl Scenario {
    /// Clusters of width `R_max / 12` at the origin and, for a bump, at its
    /// edge.
    pub fn clusters(&self) -> Vec<Cluster> {
        let width = self.r_max / 12.0;
        let mut out = Vec::new();
        if self.origin_refinement > 1.0 {
            out.push(Cluster {
                center: 0.0,
                width,
                strength: self.origin_refinement - 1.0,
            });
        }
        if let InitialProfile::Bump { radius, .. } = self.profile {
            if self.edge_refinement > 1.0 {
                out.push(Cluster {
                    center: radius,
                    width,
                    strength: self.edge_refinement - 1.0,
                });
            }
        }
        out
    }

    pub fn prepare(&self) -> Result<Prepared> {
        let grid = Arc::new(RadialGrid::clustered(
            self.grid_m,
            self.r_max,
            &self.clusters(),
        )?);
        let initial = self.profile.sample(grid.clone())?;
        let delta = self.delta.unwrap_or_else(|| default_delta(self.spec.alpha));
        let scale = initial.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let cutoff_l = match self.cutoff_l {
            Some(l) => l,
            None => initial.support_radius(SUPPORT_EPS * scale),
        };
        let monitored = match self.monitor {
            Monitor::Gradient => initial.gradient_sup().0,
            Monitor::Curvature => initial.curvature_sup(),
        };
        let mut config = SolverConfig {
            spec: self.spec,
            delta,
            grid_m: self.grid_m,
            clusters: self.clusters(),
            r_max: self.r_max,
            cutoff_l,
            cfl: self.cfl,
            t_end: 1.0,
            dt_max: 1.0,
            blowup_threshold: self.threshold_factor * monitored,
            monitor: self.monitor,
            output_stride: self.output_stride,
            snapshot_stride: self.snapshot_stride,
        };
        config.validate()?;
        let a = self.spec.alpha;
        let predicted = if a > 0.0 && a < 2.0 {
            let c = certified_constant(self.spec, delta)?;
            predict_blowup_time(&initial, self.spec, delta, cutoff_l, c)?
        } else if a == 2.0 {
            burgers_blowup_time(self.profile.min_second_derivative(self.r_max))
        } else {
            f64::INFINITY
        };
        config.t_end = match (self.t_end, self.preset) {
            (Some(t), _) => t,
            (None, Preset::GlobalAlpha0) => 50.0,
            (None, _) if predicted.is_finite() => 2.0 * predicted,
            (None, _) => {
                return Err(Error::Domain(
                    "no finite predicted blowup time; pass an explicit t_end".into(),
                ))
            }
        };
        config.dt_max = config.t_end / 200.0;
        let solver = Solver::on_grid(config.clone(), grid)?;
        Ok(Prepared {
            config,
            solver,
            initial,
            profile: self.profile,
            predicted_t_star: predicted,
        })
    }
}

impl Prepared {
    pub fn run(&self) -> Result<RunOutcome> {
        let trace = BlowupTrace {
            delta: self.config.delta,
            cutoff_l: self.config.cutoff_l,
            mellin_constant: self.solver.mellin_constant(),
            c_tilde: self.solver.c_tilde(),
            predicted_t_star: self.predicted_t_star,
            ..Default::default()
        };
        self.solver.run_with_trace(&self.initial, trace)
    }

    /// Coarse run plus the run on the doubled grid with the same thresholds.
    pub fn refinement_study(&self) -> Result<RefinementStudy> {
        let coarse = self.run()?;
        let mut fine_config = self.config.clone();
        fine_config.grid_m *= 2;
        fine_config.output_stride *= 2;
        let fine_grid = Arc::new(self.solver.grid().refined());
        let fine = Prepared {
            initial: self.profile.sample(fine_grid.clone())?,
            solver: Solver::on_grid(fine_config.clone(), fine_grid)?,
            config: fine_config,
            profile: self.profile,
            predicted_t_star: self.predicted_t_star,
        }
        .run()?;
        Ok(RefinementStudy::from_runs(coarse, fine))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::rhs_functional;
    use approx::assert_relative_eq;

    fn blowup(d: i64, alpha: f64, m: usize) -> Prepared {
        let mut sc = Preset::Blowup.scenario(Some(d), Some(alpha)).unwrap();
        sc.grid_m = m;
        sc.prepare().unwrap()
    }

    #[test]
    fn bump_construction() {
        let g = Arc::new(RadialGrid::uniform(200, 1.25).unwrap());
        let u = make_initial_bump(1.0, 1.0, g.clone()).unwrap();
        assert_eq!(u.origin_value(), 1.0);
        assert_eq!(u.slopes()[0], 0.0);
        assert!(u.min() >= 0.0);
        assert!(g
            .nodes()
            .iter()
            .zip(u.values())
            .all(|(&r, &v)| r < 1.0 || v == 0.0));
        let h = g.min_spacing();
        let second = u
            .values()
            .windows(3)
            .map(|w| (w[0] - 2.0 * w[1] + w[2]).abs() / (h * h))
            .fold(0.0, f64::max);
        assert!(second < 30.0, "{second}");
        assert!(make_initial_bump(1.0, 1.2, g.clone()).is_err());
        assert!(make_initial_bump(0.0, 0.5, g).is_err());
    }

    #[test]
    fn config_validation() {
        let p = blowup(2, 1.0, 60);
        let mut c = p.config.clone();
        assert!(c.validate().is_ok());
        c.delta = 1.0;
        assert!(matches!(c.validate(), Err(Error::Hypothesis(_))));
        let mut c = p.config.clone();
        c.cfl = 1.0;
        assert!(c.validate().is_err());
        let mut c = p.config.clone();
        c.output_stride = 0;
        assert!(c.validate().is_err());
        assert_eq!(default_delta(1.5), 0.25);
        assert_eq!(default_delta(2.0), 0.5);
    }

    #[test]
    fn cfl_violation_is_an_error() {
        let p = blowup(2, 1.0, 60);
        let v = p.solver.operator().velocity(&p.initial).unwrap();
        let limit = p.solver.cfl_limit(&v);
        assert!(matches!(
            p.solver.step(&p.initial, 2.0 * limit),
            Err(Error::Cfl { .. })
        ));
        assert!(p.solver.step(&p.initial, limit).is_ok());
    }

    #[test]
    fn stationary_when_velocity_vanishes() {
        let mut sc = Preset::GlobalAlpha0.scenario(Some(2), None).unwrap();
        sc.grid_m = 80;
        sc.t_end = Some(1.0);
        let p = sc.prepare().unwrap();
        let out = p.run().unwrap();
        assert_eq!(out.final_field.values(), p.initial.values());
        assert!(matches!(out.verdict, Verdict::Completed { .. }));
    }

    #[test]
    fn step_preserves_range_and_origin() {
        let p = blowup(3, 1.0, 100);
        let v = p.solver.operator().velocity(&p.initial).unwrap();
        let dt = p.solver.cfl_limit(&v);
        let mut u = p.initial.clone();
        for _ in 0..20 {
            let next = p.solver.step(&u, dt).unwrap().field;
            assert!(next.max() <= u.max() && next.min() >= u.min());
            u = next;
        }
        assert_eq!(u.origin_value(), p.initial.origin_value());
    }

    #[test]
    fn burgers_oracle_basics() {
        let o = BurgersOracle::gaussian(1.0, 1.0);
        assert_relative_eq!(o.blowup_time(), 0.25, epsilon = 1e-9);
        assert_relative_eq!(
            o.solution(0.7, 0.0).unwrap(),
            (-0.49f64).exp(),
            epsilon = 1e-14
        );
        assert!(o.solution(0.0, 0.3).is_err());
        // u_t = −(∂_r u)² by finite differences
        let (r, t, e) = (0.6, 0.1, 1e-5);
        let ut = (o.solution(r, t + e).unwrap() - o.solution(r, t - e).unwrap()) / (2.0 * e);
        let ur = (o.solution(r + e, t).unwrap() - o.solution(r - e, t).unwrap()) / (2.0 * e);
        assert_relative_eq!(ut, -ur * ur, epsilon = 1e-8);
        assert_eq!(burgers_blowup_time(0.5), f64::INFINITY);
    }

    #[test]
    fn burgers_step_matches_characteristics() {
        let mut sc = Preset::Burgers.scenario(None, None).unwrap();
        sc.t_end = Some(0.1);
        let p = sc.prepare().unwrap();
        assert_relative_eq!(p.predicted_t_star, 0.25, epsilon = 1e-6);
        let out = p.run().unwrap();
        let o = BurgersOracle::gaussian(1.0, 1.0);
        let err = p
            .solver
            .grid()
            .nodes()
            .iter()
            .zip(out.final_field.values())
            .map(|(&r, &u)| (u - o.solution(r, 0.1).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn c_tilde_is_the_cauchy_schwarz_constant() {
        // ∫(u₀−u)² r^{−1−α−δ} ≥ (α−δ)/L^{α−δ} · I² on (0, L)
        let g = Arc::new(RadialGrid::uniform(400, 2.0).unwrap());
        for (alpha, delta, radius) in [(1.0, 0.5, 1.0), (0.5, 0.25, 0.7), (1.5, 0.25, 1.2)] {
            let spec = KernelSpec::new(2, alpha).unwrap();
            let u = make_initial_bump(1.0, radius, g.clone()).unwrap();
            let i = blowup_functional(&u, delta, radius).unwrap().value;
            let rhs = rhs_functional(spec, &u, delta).unwrap();
            let bound = c_tilde(1.0, alpha, delta, radius) * i * i;
            assert!(rhs >= bound, "{rhs} < {bound}");
        }
    }

    #[test]
    fn functional_rate_is_the_weighted_pairing() {
        let p = blowup(2, 1.0, 400);
        let (delta, l) = (p.config.delta, p.config.cutoff_l);
        let pairing = p
            .solver
            .operator()
            .weighted_pairing(&p.initial, delta)
            .unwrap();
        let dt = 1e-4;
        let u1 = p.solver.step(&p.initial, dt).unwrap().field;
        let i0 = blowup_functional(&p.initial, delta, l).unwrap().value;
        let i1 = blowup_functional(&u1, delta, l).unwrap().value;
        assert_relative_eq!((i1 - i0) / dt, pairing, max_relative = 5e-3);
    }

    #[test]
    fn prediction_scales_inversely_with_amplitude() {
        let p = blowup(2, 1.0, 100);
        let spec = p.config.spec;
        let c = p.solver.mellin_constant().unwrap();
        let t1 = predict_blowup_time(&p.initial, spec, 0.5, 1.0, c).unwrap();
        let t3 = predict_blowup_time(&p.initial.scaled(3.0), spec, 0.5, 1.0, c).unwrap();
        assert_relative_eq!(t1 / t3, 3.0, max_relative = 1e-12);
        let flat = RadialField::from_fn(p.initial.grid().clone(), |_| 0.0).unwrap();
        assert_eq!(
            predict_blowup_time(&flat, spec, 0.5, 1.0, c).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn ode_check_gates() {
        let trace = BlowupTrace {
            times: (0..5).map(f64::from).collect(),
            i_values: vec![1.0; 5],
            c_tilde: Some(1.0),
            ..Default::default()
        };
        assert!(matches!(
            ode_inequality_check(&trace, 10.0),
            Err(Error::InsufficientSamples { needed: 10, got: 5 })
        ));
        let skipped = BlowupTrace {
            c_tilde: None,
            ..trace
        };
        assert!(ode_inequality_check(&skipped, 10.0)
            .unwrap()
            .skipped
            .is_some());
        // exact comparison solution I = I₀/(1 − C̃ I₀ t) satisfies it everywhere
        let (ct, i0) = (2.0, 0.5);
        let times: Vec<f64> = (0..40).map(|k| 0.02 * k as f64).collect();
        let exact = BlowupTrace {
            i_values: times.iter().map(|t| i0 / (1.0 - ct * i0 * t)).collect(),
            times,
            c_tilde: Some(ct),
            ..Default::default()
        };
        let r = ode_inequality_check(&exact, 1.0).unwrap();
        assert_eq!(r.fraction, 1.0);
        assert!(r.doubling_ok);
    }

    #[test]
    fn blowup_run_small_grid() {
        let p = blowup(2, 1.5, 120);
        let out = p.run().unwrap();
        let t = out.verdict.blowup_time().expect("blowup");
        assert!(t < p.predicted_t_star);
        let tr = &out.trace;
        assert!(tr.i_values.windows(2).all(|w| w[1] > w[0]));
        assert!(tr.u_at_origin.iter().all(|&u| u == 1.0));
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().lines().count(),
            tr.len() + 1
        );
    }

    #[test]
    fn presets_reject_mismatched_alpha() {
        assert!(Preset::Blowup.scenario(None, Some(2.0)).is_err());
        assert!(Preset::GlobalAlpha0.scenario(None, Some(1.0)).is_err());
        assert!(Preset::Burgers.scenario(None, Some(1.0)).is_err());
        assert!("nope".parse::<Preset>().is_err());
        assert_eq!(
            "global-alpha0".parse::<Preset>().unwrap(),
            Preset::GlobalAlpha0
        );
    }
}
