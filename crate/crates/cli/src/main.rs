use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use nonlocal_transport::kernel::{taylor_coefficient, Kernel, KernelSpec};
use nonlocal_transport::mellin::{certify_on, growth_slope, lambda_grid, CertificateRecord};
use nonlocal_transport::operator::{GaussianMixture, VelocityOperator};
use nonlocal_transport::solver::{
    ode_inequality_check, BurgersOracle, OdeReport, Preset, RunOutcome, SolverConfig, Verdict,
};
use nonlocal_transport::{Error, RadialGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const EXIT_CODES: &str = "\
Exit codes:
  0   success (simulate: run completed without blowup)
  2   invalid input, hypothesis violation or refused overwrite
  3   Mellin certification failed (Re H <= 0 somewhere on the grid)
  4   weighted inequality violated beyond tolerance
  5   simulation became unstable (partial trace written)
  10  simulate: blowup detected and confirmed on the refined grid
  11  simulate: blowup detected but the refined grid disagrees

Settings may also come from a flat key=value file (--config); flags take
precedence. Keys are the long flag names without the leading dashes, e.g.
`grid-n = 400`.
NONLOCAL_THREADS caps the worker thread count.";

#[derive(Parser)]
#[command(name = "nonlocal", version, about = "Batch driver for nonlocal transport computations", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the radial kernel and its Taylor coefficients.
    KernelTable(KernelTableArgs),
    /// Certify positivity of the Mellin symbol on a λ grid.
    Certify(CertifyArgs),
    /// Check the weighted inequality on seeded random test functions.
    Inequality(InequalityArgs),
    /// Run a preset scenario of the transport equation.
    Simulate(SimulateArgs),
    /// Exact pre-shock solution of the α = 2 equation for a Gaussian.
    BurgersOracle(BurgersArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key=value settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    output: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct KernelTableArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dim: Option<i64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Largest r of the kernel table.
    #[arg(long)]
    r_max: Option<f64>,
    /// Number of r samples.
    #[arg(long)]
    grid_n: Option<usize>,
    /// Number of coefficients a_1, a_3, … to list.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dim: Option<i64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    /// Number of λ grid points.
    #[arg(long)]
    grid_n: Option<usize>,
}

#[derive(Args)]
struct InequalityArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dim: Option<i64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Number of random test functions.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    r_max: Option<f64>,
    /// Relative slack allowed below the certified constant.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// blowup, global-alpha0 or burgers.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    dim: Option<i64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long = "cutoff-L")]
    cutoff_l: Option<f64>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Skip the second run on the doubled grid.
    #[arg(long)]
    no_refinement: bool,
}

#[derive(Args)]
struct BurgersArgs {
    #[command(flatten)]
    common: Common,
    /// Evaluation time; must precede the shock time.
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    r_max: Option<f64>,
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Certification { .. }) => 3,
            _ => 2,
        };
        Failure { code, error }
    }
}

fn fail(code: u8, error: anyhow::Error) -> Failure {
    Failure { code, error }
}

type CmdResult = Result<u8, Failure>;

/// Config-file values under CLI overrides.
struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (no, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    anyhow!("{}:{}: expected key = value", path.display(), no + 1)
                })?;
                file.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Settings { file })
    }

    fn get<T: FromStr>(&self, key: &str, flag: Option<T>) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.file
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("config key {key} = {v:?}: {e}"))
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> anyhow::Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key, flag)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, key: &str, flag: Option<T>) -> anyhow::Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key, flag)?
            .ok_or_else(|| anyhow!("--{key} is required (flag or config key)"))
    }
}

/// Output directory that refuses to clobber files without `--force`.
struct Output {
    dir: PathBuf,
    force: bool,
}

impl Output {
    fn new(common: &Common) -> anyhow::Result<Self> {
        fs::create_dir_all(&common.output)
            .with_context(|| format!("creating {}", common.output.display()))?;
        Ok(Output {
            dir: common.output.clone(),
            force: common.force,
        })
    }

    fn create(&self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        if path.exists() && !self.force {
            bail!("{} exists; pass --force to overwrite", path.display());
        }
        Ok(BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        ))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn kernel_table(args: KernelTableArgs) -> CmdResult {
    let s = Settings::load(args.common.config.as_deref())?;
    let spec = KernelSpec::new(
        s.required("dim", args.dim)?,
        s.required("alpha", args.alpha)?,
    )?;
    let r_max = s.or("r-max", args.r_max, 3.0)?;
    let points = s.or("grid-n", args.grid_n, 300)?;
    let terms = s.or("samples", args.samples, 201)?;
    if r_max.is_nan() || r_max <= 0.0 || points < 1 || terms < 1 {
        return Err(fail(
            2,
            anyhow!("r-max, grid-n and samples must be positive"),
        ));
    }
    let kernel = Kernel::new(spec)?;
    let out = Output::new(&args.common)?;

    let coeffs = (0..terms as i64)
        .map(|n| taylor_coefficient(spec, n))
        .collect::<Result<Vec<_>, _>>()?;
    let mut w = out.create("coefficients.csv")?;
    writeln!(w, "n,a")?;
    for (n, a) in coeffs.iter().enumerate() {
        writeln!(w, "{n},{a:.16e}")?;
    }
    w.flush()?;

    let mut w = out.create("kernel.csv")?;
    writeln!(w, "r,g")?;
    for k in 1..=points {
        let r = r_max * k as f64 / points as f64;
        match kernel.eval(r) {
            Ok(g) => writeln!(w, "{r:.16e},{g:.16e}")?,
            // g is infinite at r = 1 when α ≥ 1
            Err(Error::SingularPoint { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    w.flush()?;

    let nonzero = coeffs.iter().filter(|a| **a != 0.0).count();
    let positive = coeffs.iter().filter(|a| **a != 0.0).all(|a| *a > 0.0);
    println!(
        "kernel d={} alpha={}: {terms} coefficients, {nonzero} nonzero, nonzero ones positive: {positive}",
        spec.dim, spec.alpha
    );
    if spec.alpha == 0.0 {
        println!("a_1 = {:.16e}", coeffs[0]);
    }
    Ok(0)
}

#[derive(Serialize)]
struct CertifyReport {
    #[serde(flatten)]
    record: CertificateRecord,
    certified: bool,
}

fn certify(args: CertifyArgs) -> CmdResult {
    let s = Settings::load(args.common.config.as_deref())?;
    let spec = KernelSpec::new(
        s.required("dim", args.dim)?,
        s.required("alpha", args.alpha)?,
    )?;
    let delta = s.or("delta", args.delta, 0.0)?;
    let lambda_max = s.or("lambda-max", args.lambda_max, 1e3)?;
    let points = s.or("grid-n", args.grid_n, 2000)?;
    let coeffs = nonlocal_transport::kernel::build_series(spec, 1e-16)?;
    let out = Output::new(&args.common)?;
    let symbol = certify_on(spec, delta, lambda_grid(lambda_max, points)?, &coeffs)?;
    let slope = if lambda_max > 1e2 {
        Some(growth_slope(spec, delta, &coeffs, 1e2, lambda_max, 41)?)
    } else {
        None
    };
    let mut w = out.create("symbol.csv")?;
    symbol.write_csv(&mut w)?;
    w.flush()?;
    let record = symbol.record(slope);
    println!(
        "certified d={} alpha={} delta={}: min Re H = {:.16e} at lambda = {:.6}, lower bound {:.16e}",
        spec.dim, spec.alpha, delta, record.positivity_constant, record.argmin_lambda, record.analytic_lower_bound
    );
    out.json(
        "certificate.json",
        &CertifyReport {
            record,
            certified: true,
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct InequalityReport {
    dim: usize,
    alpha: f64,
    delta: f64,
    seed: u64,
    samples: usize,
    grid_n: usize,
    r_max: f64,
    tolerance: f64,
    certified_constant: f64,
    min_ratio: f64,
    violations: usize,
    passed: bool,
}

/// `Σ cₖ e^{−sₖ r²}` with 1–3 terms, `|cₖ| ∈ [0.1, 1]`, `sₖ ∈ [0.5, 4]`.
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

fn inequality(args: InequalityArgs) -> CmdResult {
    let s = Settings::load(args.common.config.as_deref())?;
    let spec = KernelSpec::new(s.or("dim", args.dim, 2)?, s.or("alpha", args.alpha, 1.0)?)?;
    let delta = s.or("delta", args.delta, 0.0)?;
    let samples = s.or("samples", args.samples, 20)?;
    let seed = s.or("seed", args.seed, 42)?;
    let grid_n = s.or("grid-n", args.grid_n, 400)?;
    let r_max = s.or("r-max", args.r_max, 8.0)?;
    let tolerance = s.or("tolerance", args.tolerance, 1e-4)?;
    if samples == 0 {
        return Err(fail(2, anyhow!("--samples must be at least 1")));
    }
    let coeffs = nonlocal_transport::kernel::build_series(spec, 1e-16)?;
    let constant = nonlocal_transport::mellin::positivity_certificate(spec, delta, 1e3, &coeffs)?
        .positivity_constant;
    let grid = std::sync::Arc::new(RadialGrid::uniform(grid_n, r_max)?);
    let op = VelocityOperator::new(spec, grid.clone())?;
    let out = Output::new(&args.common)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = out.create("inequality.csv")?;
    writeln!(w, "sample,terms,ratio")?;
    let (mut min_ratio, mut violations) = (f64::INFINITY, 0);
    for k in 0..samples {
        let mix = random_mixture(&mut rng);
        let ratio = op.positivity_ratio(&mix.sample(grid.clone())?, delta)?;
        min_ratio = min_ratio.min(ratio);
        if ratio < constant * (1.0 - tolerance) {
            violations += 1;
        }
        let terms: Vec<String> = mix
            .terms
            .iter()
            .map(|(c, s)| format!("{c:.16e}:{s:.16e}"))
            .collect();
        writeln!(w, "{k},{},{ratio:.16e}", terms.join(" "))?;
    }
    w.flush()?;
    let report = InequalityReport {
        dim: spec.dim,
        alpha: spec.alpha,
        delta,
        seed,
        samples,
        grid_n,
        r_max,
        tolerance,
        certified_constant: constant,
        min_ratio,
        violations,
        passed: violations == 0,
    };
    out.json("inequality.json", &report)?;
    println!(
        "inequality d={} alpha={} delta={delta}: min ratio {min_ratio:.16e} vs certified {constant:.16e}, {violations} of {samples} violations",
        spec.dim, spec.alpha
    );
    if violations > 0 {
        return Err(fail(
            4,
            anyhow!("{violations} test functions fall below the certified constant"),
        ));
    }
    Ok(0)
}

#[derive(Serialize)]
struct RunSummary {
    verdict: Verdict,
    steps: usize,
    samples: usize,
    clamped_feet: usize,
    max_quadrature_error: f64,
    ode_check: Option<OdeReport>,
    ode_check_error: Option<String>,
}

#[derive(Serialize)]
struct RefinementSummary {
    coarse_time: Option<f64>,
    fine_time: Option<f64>,
    relative_shift: Option<f64>,
    consistent: bool,
    fine: RunSummary,
}

#[derive(Serialize)]
struct SimulateMetadata {
    preset: Preset,
    config: SolverConfig,
    predicted_t_star: f64,
    mellin_constant: Option<f64>,
    c_tilde: Option<f64>,
    detected_blowup_time: Option<f64>,
    run: RunSummary,
    refinement: Option<RefinementSummary>,
}

fn summarize(run: &RunOutcome) -> RunSummary {
    let cutoff = run.verdict.blowup_time().unwrap_or(f64::INFINITY);
    let (ode_check, ode_check_error) = match ode_inequality_check(&run.trace, cutoff) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    RunSummary {
        verdict: run.verdict.clone(),
        steps: run.steps,
        samples: run.trace.len(),
        clamped_feet: run.clamped_feet,
        max_quadrature_error: run.max_quadrature_error,
        ode_check,
        ode_check_error,
    }
}

fn write_run(out: &Output, prefix: &str, run: &RunOutcome, nodes: &[f64]) -> anyhow::Result<()> {
    let mut w = out.create(&format!("{prefix}trace.csv"))?;
    run.trace.write_csv(&mut w)?;
    w.flush()?;
    for (k, snap) in run.snapshots.iter().enumerate() {
        let mut w = out.create(&format!("{prefix}snapshots/snapshot_{k:04}.csv"))?;
        snap.write_csv(nodes, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> CmdResult {
    let s = Settings::load(args.common.config.as_deref())?;
    let preset: Preset = s.or("preset", args.preset, "blowup".to_string())?.parse()?;
    let mut sc = preset.scenario(s.get("dim", args.dim)?, s.get("alpha", args.alpha)?)?;
    sc.delta = s.get("delta", args.delta)?;
    if let Some(m) = s.get("grid-n", args.grid_n)? {
        sc.grid_m = m;
    }
    if let Some(r) = s.get("r-max", args.r_max)? {
        sc.r_max = r;
    }
    sc.cutoff_l = s.get("cutoff-L", args.cutoff_l)?;
    if let Some(c) = s.get("cfl", args.cfl)? {
        sc.cfl = c;
    }
    sc.t_end = s.get("t-end", args.t_end)?;
    let refine = !args.no_refinement && !s.or("no-refinement", None, false)?;

    let prepared = sc.prepare()?;
    let out = Output::new(&args.common)?;
    let (coarse, study) = if refine {
        let study = prepared.refinement_study()?;
        (study.coarse.clone(), Some(study))
    } else {
        (prepared.run()?, None)
    };
    write_run(&out, "", &coarse, prepared.solver.grid().nodes())?;
    if let Some(study) = &study {
        let fine_nodes = prepared.solver.grid().refined();
        write_run(&out, "fine_", &study.fine, fine_nodes.nodes())?;
    }
    let metadata = SimulateMetadata {
        preset,
        config: prepared.config.clone(),
        predicted_t_star: prepared.predicted_t_star,
        mellin_constant: coarse.trace.mellin_constant,
        c_tilde: coarse.trace.c_tilde,
        detected_blowup_time: coarse.verdict.blowup_time(),
        run: summarize(&coarse),
        refinement: study.as_ref().map(|st| RefinementSummary {
            coarse_time: st.coarse_time,
            fine_time: st.fine_time,
            relative_shift: st.relative_shift,
            consistent: st.consistent,
            fine: summarize(&st.fine),
        }),
    };
    out.json("metadata.json", &metadata)?;
    println!(
        "simulate {:?} d={} alpha={}: {:?}; predicted T* = {:.16e}",
        preset,
        prepared.config.spec.dim,
        prepared.config.spec.alpha,
        coarse.verdict,
        prepared.predicted_t_star
    );
    match &coarse.verdict {
        Verdict::Completed { .. } => Ok(0),
        Verdict::Unstable { reason, .. } => Err(fail(5, anyhow!("unstable run: {reason}"))),
        Verdict::Blowup { .. } => match &study {
            Some(st) if !st.consistent => {
                println!(
                    "refined grid disagrees: coarse {:?}, fine {:?}",
                    st.coarse_time, st.fine_time
                );
                Ok(11)
            }
            Some(st) => {
                println!(
                    "refined grid confirms: detection shift {:.3}",
                    st.relative_shift.unwrap_or(f64::NAN)
                );
                Ok(10)
            }
            None => Ok(10),
        },
    }
}

fn burgers_oracle(args: BurgersArgs) -> CmdResult {
    let s = Settings::load(args.common.config.as_deref())?;
    let oracle = BurgersOracle::gaussian(1.0, 1.0);
    let t_star = oracle.blowup_time();
    let t = s.or("t-end", args.t_end, 0.5 * t_star)?;
    let points = s.or("grid-n", args.grid_n, 2000)?;
    let r_max = s.or("r-max", args.r_max, 6.0)?;
    let grid = RadialGrid::uniform(points, r_max)?;
    let values = grid
        .nodes()
        .iter()
        .map(|&r| oracle.solution(r, t))
        .collect::<Result<Vec<_>, _>>()?;
    let out = Output::new(&args.common)?;
    let mut w = out.create("burgers_oracle.csv")?;
    writeln!(w, "r,u")?;
    for (r, u) in grid.nodes().iter().zip(&values) {
        writeln!(w, "{r:.16e},{u:.16e}")?;
    }
    w.flush()?;
    println!("u0 = exp(-r^2): shock time T* = {t_star:.16e}; solution written at t = {t:.16e}");
    Ok(0)
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("NONLOCAL_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow!("NONLOCAL_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("NONLOCAL_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads()
        .map_err(Failure::from)
        .and_then(|_| match cli.command {
            Command::KernelTable(a) => kernel_table(a),
            Command::Certify(a) => certify(a),
            Command::Inequality(a) => inequality(a),
            Command::Simulate(a) => simulate(a),
            Command::BurgersOracle(a) => burgers_oracle(a),
        });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
