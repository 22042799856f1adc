//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always printed.

// negated comparisons also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use nonlocal_transport::kernel::{build_series, taylor_coefficient, Kernel, KernelSpec};
use nonlocal_transport::mellin::{growth_slope, least_squares_slope, positivity_certificate};
use nonlocal_transport::operator::{GaussianMixture, VelocityOperator};
use nonlocal_transport::solver::{
    ode_inequality_check, BlowupTrace, BurgersOracle, InitialProfile, Prepared, Preset, RunOutcome,
    Solver, Verdict,
};
use nonlocal_transport::{RadialField, RadialGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIMS: [i64; 6] = [1, 2, 3, 4, 5, 6];
const ALPHAS: [f64; 6] = [0.1, 0.25, 0.5, 1.0, 1.5, 1.9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn spec(d: i64, a: f64) -> KernelSpec {
    KernelSpec::new(d, a).expect("valid spec")
}

fn coefficient_positivity() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    for d in DIMS {
        for a in ALPHAS {
            for n in 0..=200 {
                let c = taylor_coefficient(spec(d, a), n).expect("coefficient");
                worst = worst.min(c);
                if !(c > 0.0) {
                    failures.push(format!("a_{} (d={d}, α={a}) = {c:e}", 2 * n + 1));
                }
            }
        }
    }
    let mut a0 = Vec::new();
    for d in 3..=6 {
        let s = spec(d, 0.0);
        let a1 = taylor_coefficient(s, 0).expect("a1");
        let rest = (1..=200)
            .map(|n| taylor_coefficient(s, n).expect("coefficient").abs())
            .fold(0.0, f64::max);
        a0.push(format!("d={d}: a1={a1:.4}"));
        if !(a1 > 0.0) || rest >= 1e-14 {
            failures.push(format!("α=0 d={d}: a1={a1}, max |a_(2n+1)| = {rest:e}"));
        }
    }
    let a1_d2 = taylor_coefficient(spec(2, 0.0), 0).expect("a1");
    if a1_d2 != 0.0 {
        failures.push(format!("α=0 d=2: a1 = {a1_d2:e}"));
    }
    outcome(
        failures.is_empty(),
        format!(
            "min a_(2n+1) over 36 specs, n≤200 = {worst:.3e}; α=0 [{}]; d=2 α=0 a1 = {a1_d2}{}",
            a0.join(", "),
            summarize(&failures)
        ),
    )
}

fn coefficient_asymptotics() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for d in DIMS {
        for a in ALPHAS {
            let s = spec(d, a);
            let samples: Vec<(f64, f64)> = (100..=200)
                .map(|n| {
                    let c = taylor_coefficient(s, n).expect("coefficient");
                    ((n as f64).ln(), c.ln())
                })
                .collect();
            let slope = least_squares_slope(&samples);
            let dev = (slope - (a - 2.0)).abs();
            worst = worst.max(dev);
            if dev > 0.05 {
                failures.push(format!("d={d} α={a}: slope {slope:.4}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "max |slope − (α−2)| = {worst:.4} (tolerance 0.05){}",
            summarize(&failures)
        ),
    )
}

fn series_quadrature_agreement() -> Outcome {
    let mut worst_series: f64 = 0.0;
    let mut worst_reflection: f64 = 0.0;
    for d in [2, 3, 4] {
        for a in [0.25, 0.5, 1.0, 1.5] {
            let s = spec(d, a);
            let series = build_series(s, 1e-16).expect("series");
            let kernel = Kernel::new(s).expect("kernel");
            for r in [0.1, 0.3, 0.5] {
                let q = kernel.eval_quadrature(r).expect("quadrature");
                worst_series = worst_series.max((series.eval(r) - q).abs());
            }
            for r in [0.2, 0.5, 0.8] {
                let inside = kernel.eval_quadrature(r).expect("quadrature");
                let outside = kernel.eval_quadrature(1.0 / r).expect("quadrature");
                let residual = (outside - r.powf(s.exponent()) * inside).abs();
                worst_reflection = worst_reflection.max(residual);
            }
        }
    }
    outcome(
        worst_series <= 1e-8 && worst_reflection <= 1e-8,
        format!(
            "max |series − quadrature| = {worst_series:.2e}, max reflection residual = {worst_reflection:.2e} (tolerance 1e-8)"
        ),
    )
}

fn mellin_positivity() -> Outcome {
    let mut count = 0;
    let mut failures = Vec::new();
    let mut min_margin = f64::INFINITY;
    let mut worst_slope: f64 = 0.0;
    for d in [1, 2, 3, 5] {
        for a in [0.25, 0.5, 1.0, 1.5, 1.75] {
            let s = spec(d, a);
            let coeffs = build_series(s, 1e-16).expect("series");
            for delta in [0.0, 0.45 * a, -0.45 * a] {
                if delta + a >= 2.0 {
                    continue;
                }
                count += 1;
                let tag = format!("(d={d}, α={a}, δ={delta:.4})");
                let sym = match positivity_certificate(s, delta, 1e3, &coeffs) {
                    Ok(sym) => sym,
                    Err(e) => {
                        failures.push(format!("{tag}: {e}"));
                        continue;
                    }
                };
                if sym.h_values.len() != 2000 || sym.h_values.iter().any(|h| !(h.re > 0.0)) {
                    failures.push(format!("{tag}: non-positive Re H"));
                }
                min_margin = min_margin.min(sym.positivity_constant / sym.analytic_lower_bound);
                if sym.positivity_constant < sym.analytic_lower_bound {
                    failures.push(format!(
                        "{tag}: grid min {} below bound {}",
                        sym.positivity_constant, sym.analytic_lower_bound
                    ));
                }
                let slope = growth_slope(s, delta, &coeffs, 1e2, 1e3, 41).expect("slope");
                worst_slope = worst_slope.max((slope - a).abs());
                if (slope - a).abs() > 0.1 {
                    failures.push(format!("{tag}: slope {slope:.4}"));
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{count} specs × 2000 λ points; min (grid min / lower bound) = {min_margin:.4}; max |slope − α| on [1e2, 1e3] = {worst_slope:.4}{}",
            summarize(&failures)
        ),
    )
}

/// `Σ cₖ e^{−sₖ r²}` with 1–3 terms, `cₖ ∈ [−1, 1]`, `sₖ ∈ [0.5, 4]`.
fn random_mixture(rng: &mut ChaCha8Rng) -> GaussianMixture {
    let n = rng.gen_range(1..=3);
    GaussianMixture {
        terms: (0..n)
            .map(|_| {
                let mut c: f64 = rng.gen_range(-1.0..1.0);
                if c.abs() < 0.1 {
                    c = 0.5;
                }
                (c, rng.gen_range(0.5..4.0))
            })
            .collect(),
    }
}

fn weighted_inequality() -> Outcome {
    let grid = Arc::new(RadialGrid::uniform(400, 8.0).expect("grid"));
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    for (d, a, delta) in [
        (1, 0.5, 0.0),
        (2, 1.0, 0.0),
        (2, 0.5, 0.25),
        (3, 1.5, 0.2),
        (5, 0.25, 0.0),
    ] {
        let s = spec(d, a);
        let coeffs = build_series(s, 1e-16).expect("series");
        let c = positivity_certificate(s, delta, 1e3, &coeffs)
            .expect("certificate")
            .positivity_constant;
        let op = VelocityOperator::new(s, grid.clone()).expect("operator");
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ (d as u64) << 8 ^ (a * 100.0) as u64);
        let mut min_ratio = f64::INFINITY;
        for k in 0..20 {
            let f = random_mixture(&mut rng)
                .sample(grid.clone())
                .expect("field");
            let ratio = op.positivity_ratio(&f, delta).expect("ratio");
            min_ratio = min_ratio.min(ratio);
            if ratio < c * (1.0 - 1e-4) {
                failures.push(format!(
                    "(d={d}, α={a}, δ={delta}) sample {k}: ratio {ratio} < C {c}"
                ));
            }
        }
        lines.push(format!(
            "({d},{a},{delta}): min ratio {min_ratio:.4} vs C {c:.4}"
        ));
    }
    outcome(
        failures.is_empty(),
        format!("{}{}", lines.join("; "), summarize(&failures)),
    )
}

fn burgers_oracle() -> Outcome {
    let oracle = BurgersOracle::gaussian(1.0, 1.0);
    let t_star = oracle.blowup_time();
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    for m in [2000, 4000] {
        let mut sc = Preset::Burgers.scenario(None, None).expect("preset");
        sc.grid_m = m;
        sc.t_end = Some(0.5 * t_star);
        let p = sc.prepare().expect("prepare");
        let out = p.run().expect("run");
        let err = p
            .solver
            .grid()
            .nodes()
            .iter()
            .zip(out.final_field.values())
            .map(|(&r, &u)| (u - oracle.solution(r, 0.5 * t_star).expect("oracle")).abs())
            .fold(0.0, f64::max);
        sc.t_end = Some(2.0 * t_star);
        let detect = sc.prepare().expect("prepare").run().expect("run").verdict;
        let shift = detect.blowup_time().map(|t| (t - t_star).abs() / t_star);
        lines.push(format!(
            "M={m}: sup error {err:.2e} at t=T*/2, detected {:?} (rel. shift {:?})",
            detect.blowup_time(),
            shift
        ));
        if err > 1e-4 || !shift.is_some_and(|s| s <= 0.15) {
            failures.push(format!("M={m}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "T* = {t_star}; {}{}",
            lines.join("; "),
            summarize(&failures)
        ),
    )
}

struct BlowupCase {
    dim: i64,
    alpha: f64,
    prepared: Prepared,
    coarse: RunOutcome,
    fine: RunOutcome,
    shift: Option<f64>,
}

fn blowup_cases() -> Vec<BlowupCase> {
    [(2, 0.5), (2, 1.0), (3, 1.0), (2, 1.5)]
        .into_iter()
        .map(|(dim, alpha)| {
            let prepared = Preset::Blowup
                .scenario(Some(dim), Some(alpha))
                .and_then(|s| s.prepare())
                .expect("prepare");
            let study = prepared.refinement_study().expect("refinement study");
            BlowupCase {
                dim,
                alpha,
                prepared,
                shift: study.relative_shift,
                coarse: study.coarse,
                fine: study.fine,
            }
        })
        .collect()
}

fn blowup_scenario(cases: &[BlowupCase]) -> Outcome {
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    for c in cases {
        let t_star = c.prepared.predicted_t_star;
        let mut fractions = Vec::new();
        for (name, run) in [("coarse", &c.coarse), ("fine", &c.fine)] {
            let tr = &run.trace;
            let increasing = tr.i_values.windows(2).all(|w| w[1] > w[0]);
            let detected = run.verdict.blowup_time();
            let fraction = detected
                .ok_or("no blowup".to_string())
                .and_then(|t| ode_inequality_check(tr, t).map_err(|e| e.to_string()))
                .map(|r| r.fraction);
            fractions.push(fraction.clone());
            let before = detected.is_some_and(|t| t < 2.0 * t_star);
            if !increasing || !before || !fraction.as_ref().is_ok_and(|f| *f >= 0.95) {
                failures.push(format!(
                    "(d={}, α={}) {name}: increasing={increasing}, detected={detected:?}, ode={fraction:?}",
                    c.dim, c.alpha
                ));
            }
        }
        if !c.shift.is_some_and(|s| s < 0.2) {
            failures.push(format!("(d={}, α={}) shift {:?}", c.dim, c.alpha, c.shift));
        }
        lines.push(format!(
            "({},{}): T*={t_star:.4}, detected {:.4}/{:.4}, shift {:.3}, ode {:.3}/{:.3}",
            c.dim,
            c.alpha,
            c.coarse.verdict.blowup_time().unwrap_or(f64::NAN),
            c.fine.verdict.blowup_time().unwrap_or(f64::NAN),
            c.shift.unwrap_or(f64::NAN),
            fractions[0].clone().unwrap_or(f64::NAN),
            fractions[1].clone().unwrap_or(f64::NAN),
        ));
    }
    outcome(
        failures.is_empty(),
        format!("{}{}", lines.join("; "), summarize(&failures)),
    )
}

/// Largest cell width, the resolution of the support radius.
fn grid_tolerance(trace_grid: &RadialGrid) -> f64 {
    trace_grid
        .nodes()
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max)
}

fn support_non_increasing(tr: &BlowupTrace, tol: f64) -> bool {
    tr.support_radius
        .iter()
        .enumerate()
        .all(|(k, &s)| tr.support_radius[..k].iter().all(|&p| s <= p + tol))
}

fn global_scenario() -> Outcome {
    let mut failures = Vec::new();
    let p = Preset::GlobalAlpha0
        .scenario(Some(3), None)
        .and_then(|s| s.prepare())
        .expect("prepare");
    let out = p.run().expect("run");
    let tr = &out.trace;
    let g0 = tr.grad_sup[0];
    let growth = tr.grad_sup.iter().fold(0.0_f64, |m, &g| m.max(g / g0));
    let support_ok = support_non_increasing(tr, grid_tolerance(p.solver.grid()));
    let completed =
        matches!(out.verdict, Verdict::Completed { time } if time >= 50.0 * (1.0 - 1e-12));
    if growth > 2.0 || !support_ok || !completed {
        failures.push(format!(
            "d=3: growth {growth}, support {support_ok}, verdict {:?}",
            out.verdict
        ));
    }

    let p2 = Preset::GlobalAlpha0
        .scenario(Some(2), None)
        .and_then(|s| s.prepare())
        .expect("prepare");
    let v = p2
        .solver
        .operator()
        .velocity(&p2.initial)
        .expect("velocity");
    let out2 = p2.run().expect("run");
    let stationary = out2.final_field.values() == p2.initial.values();
    if v.max_abs() > 1e-12 || !stationary || !matches!(out2.verdict, Verdict::Completed { .. }) {
        failures.push(format!(
            "d=2: |v| = {:e}, stationary {stationary}",
            v.max_abs()
        ));
    }

    // the same run at unit height, for scale: the linear kernel compresses at rate ∝ u(0)
    let mut unit = Preset::GlobalAlpha0
        .scenario(Some(3), None)
        .expect("preset");
    unit.profile = InitialProfile::Bump {
        height: 1.0,
        radius: 1.0,
    };
    let unit = unit.prepare().expect("prepare").run().expect("run");
    let unit_note = match &unit.verdict {
        Verdict::Blowup { time, .. } => {
            format!("unit-height bump reaches 100× grad_sup(0) at t = {time:.3}")
        }
        other => format!("unit-height bump: {other:?}"),
    };
    outcome(
        failures.is_empty(),
        format!(
            "d=3 (height 0.002): max grad_sup/grad_sup(0) = {growth:.4}, support non-increasing {support_ok}, verdict {:?}; d=2: max |v| = {:e}, stationary {stationary}; informational: {unit_note}{}",
            out.verdict,
            v.max_abs(),
            summarize(&failures)
        ),
    )
}

fn solver_contracts(cases: &[BlowupCase]) -> Outcome {
    let mut failures = Vec::new();
    let mut worst_origin: f64 = 0.0;
    let mut worst_bound: f64 = 0.0;
    for c in cases {
        let u0 = &c.prepared.initial;
        let (lo, hi) = (u0.min(), u0.max());
        for run in [&c.coarse, &c.fine] {
            let tr = &run.trace;
            let range_ok = tr.u_min.iter().all(|&m| m >= lo) && tr.u_max.iter().all(|&m| m <= hi);
            let snaps_ok = run
                .snapshots
                .iter()
                .all(|s| s.u.iter().all(|&u| u >= lo && u <= hi));
            let origin = tr
                .u_at_origin
                .iter()
                .map(|u| (u - u0.origin_value()).abs())
                .fold(0.0, f64::max);
            worst_origin = worst_origin.max(origin);
            let factor = tr.cutoff_l.powf(1.0 - tr.delta) / (1.0 - tr.delta);
            let bound = (0..tr.len())
                .map(|k| tr.i_values[k] / (factor * tr.grad_sup[k]))
                .fold(0.0, f64::max);
            worst_bound = worst_bound.max(bound);
            if !range_ok || !snaps_ok || origin > 1e-10 || bound > 1.0 {
                failures.push(format!(
                    "(d={}, α={}): range {range_ok}/{snaps_ok}, origin drift {origin:e}, I/bound {bound}",
                    c.dim, c.alpha
                ));
            }
        }
    }
    let order = convergence_order();
    if !(order >= 1.5) {
        failures.push(format!("convergence order {order}"));
    }
    outcome(
        failures.is_empty(),
        format!(
            "range exact on all samples and snapshots; max |u(t,0) − u0(0)| = {worst_origin:e}; max I/(L^(1−δ)/(1−δ)·grad_sup) = {worst_bound:.4}; fitted order {order:.3}{}",
            summarize(&failures)
        ),
    )
}

/// Order of `max |u_h − u_{h/2}|` on nested grids, `dt ∝ h`, (d=2, α=1) bump
/// to `t = 0.08`, well before the detected blowup near 0.2.
fn convergence_order() -> f64 {
    let mut sc = Preset::Blowup.scenario(Some(2), Some(1.0)).expect("preset");
    sc.grid_m = 50;
    let base = sc.prepare().expect("prepare");
    let t_end = 0.08;
    let mut grid: Arc<RadialGrid> = base.solver.grid().clone();
    let mut solutions: Vec<RadialField> = Vec::new();
    for level in 0..5 {
        let mut cfg = base.config.clone();
        cfg.grid_m = 50 << level;
        let solver = Solver::on_grid(cfg, grid.clone()).expect("solver");
        let mut u = base.profile.sample(grid.clone()).expect("field");
        let steps = 120usize << level;
        let dt = t_end / steps as f64;
        for _ in 0..steps {
            u = solver.step(&u, dt).expect("step").field;
        }
        solutions.push(u);
        grid = Arc::new(grid.refined());
    }
    let samples: Vec<(f64, f64)> = solutions
        .windows(2)
        .enumerate()
        .map(|(level, w)| {
            let coarse = w[0].values();
            let fine = w[1].values();
            let err = (0..coarse.len())
                .map(|i| (coarse[i] - fine[2 * i]).abs())
                .fold(0.0, f64::max);
            let h = base.solver.grid().min_spacing() / (1 << level) as f64;
            (h.ln(), err.ln())
        })
        .collect();
    least_squares_slope(&samples)
}

fn summarize(failures: &[String]) -> String {
    if failures.is_empty() {
        String::new()
    } else {
        format!(" | failures: {}", failures.join("; "))
    }
}

fn main() -> ExitCode {
    let mut all_pass = true;
    let mut report = |id: u32, name: &str, start: Instant, o: Outcome| {
        all_pass &= o.pass;
        println!(
            "{} criterion {id} ({name}) [{:.1}s]: {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    };
    let t = Instant::now();
    report(1, "coefficient positivity", t, coefficient_positivity());
    let t = Instant::now();
    report(2, "coefficient asymptotics", t, coefficient_asymptotics());
    let t = Instant::now();
    report(
        3,
        "series-quadrature agreement",
        t,
        series_quadrature_agreement(),
    );
    let t = Instant::now();
    report(4, "Mellin positivity", t, mellin_positivity());
    let t = Instant::now();
    report(5, "weighted inequality", t, weighted_inequality());
    let t = Instant::now();
    report(6, "Burgers oracle", t, burgers_oracle());
    let t = Instant::now();
    let cases = blowup_cases();
    report(7, "blowup scenario", t, blowup_scenario(&cases));
    let t = Instant::now();
    report(8, "global scenario", t, global_scenario());
    let t = Instant::now();
    report(9, "solver contracts", t, solver_contracts(&cases));
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
