//! Experiment harnesses: conservation audits, convergence-order studies
//! against the dense exponential, and the split-vs-unsplit timing grid.

use std::collections::HashMap;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{mean, rrmse_slices, GridShape, Image};
use crate::linalg::dense_expm_apply;
use crate::operator::{DriftField, SplitOperator};
use crate::stepper::{evolve, evolve_channel, FullSolver, Scheme, SchemeConfig};

/// Errors below this are treated as saturated and left out of slope fits.
pub const DEFAULT_SATURATION_FLOOR: f64 = 1e-12;

/// Smooth positive reference image: an off-centre Gaussian bump on a
/// constant floor, values in `[0.2, 0.8]`.
pub fn gaussian_bump(shape: GridShape) -> Vec<f64> {
    let (cx, cy) = (0.4 * shape.nx as f64, 0.6 * shape.ny as f64);
    let sigma = 0.2 * shape.nx.min(shape.ny) as f64;
    let mut v = Vec::with_capacity(shape.len());
    for j in 0..shape.ny {
        for i in 0..shape.nx {
            let (x, y) = (i as f64 + 0.5 - cx, j as f64 + 0.5 - cy);
            v.push(0.2 + 0.6 * (-(x * x + y * y) / (2.0 * sigma * sigma)).exp());
        }
    }
    v
}

/// Uniform random values in `[lo, hi)`, deterministic in `seed`.
pub fn random_field(shape: GridShape, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..shape.len()).map(|_| rng.random_range(lo..hi)).collect()
}

/// The standard benchmark pair `(f, v)`: constant start `f = 0.5`, Gaussian
/// bump reference `v`.
pub fn benchmark_pair(shape: GridShape) -> (Vec<f64>, Vec<f64>) {
    (vec![0.5; shape.len()], gaussian_bump(shape))
}

/// Steady state reached from `f` under the canonical drift of `v`:
/// `(µ_f/µ_v)·v`.
pub fn steady_state(f: &[f64], v: &[f64]) -> Vec<f64> {
    let ratio = mean(f) / mean(v);
    v.iter().map(|x| ratio * x).collect()
}

/// Least-squares slope of `log(err)` against `log(tau)`, ignoring points
/// with `err < floor`. `None` when fewer than two distinct step sizes remain.
pub fn fit_loglog_slope(points: &[(f64, f64)], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, e)| *t > 0.0 && *e >= floor && e.is_finite() && *e > 0.0)
        .map(|(t, e)| (t.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditReport {
    pub steps: usize,
    /// Worst relative mean drift over all channels and steps.
    pub max_mean_drift: f64,
    pub min_value: f64,
    /// `(channel, step)` of the first negative entry, if any.
    pub first_negative: Option<(usize, usize)>,
}

/// Evolve with diagnostics on and summarize conservation and positivity.
pub fn conservation_audit(
    f: &Image,
    drifts: &[DriftField],
    config: &SchemeConfig,
) -> Result<AuditReport> {
    let cfg = config.clone().with_diagnostics(true);
    let report = evolve(f, drifts, &cfg)?;
    let first_negative = report
        .channels
        .iter()
        .enumerate()
        .filter_map(|(c, r)| r.first_negative_step.map(|s| (c, s)))
        .min_by_key(|&(_, s)| s);
    Ok(AuditReport {
        steps: report.steps,
        max_mean_drift: report
            .channels
            .iter()
            .map(|r| r.max_mean_drift)
            .fold(0.0, f64::max),
        min_value: report
            .channels
            .iter()
            .map(|r| r.min_value)
            .fold(f64::INFINITY, f64::min),
        first_negative,
    })
}

/// A scheme entry in an order study; `theta` only matters for schemes that
/// use it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyScheme {
    pub scheme: Scheme,
    pub theta: f64,
}

impl StudyScheme {
    pub fn new(scheme: Scheme, theta: f64) -> Self {
        Self { scheme, theta }
    }

    pub fn config(&self, tau: f64, t_final: f64, solver: FullSolver) -> SchemeConfig {
        SchemeConfig::new(self.scheme, tau, t_final)
            .with_theta(self.theta)
            .with_solver(solver)
    }

    pub fn effective_theta(&self) -> Option<f64> {
        self.config(1.0, 1.0, FullSolver::BandedLu)
            .effective_theta()
    }

    pub fn label(&self) -> String {
        match self.effective_theta() {
            Some(t) if self.scheme.uses_theta() => format!("{}(θ={t})", self.scheme),
            _ => self.scheme.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrderRow {
    pub scheme: StudyScheme,
    pub tau: f64,
    pub steps: usize,
    /// `steps·τ`, the time the scheme actually reaches and the time the
    /// reference is evaluated at.
    pub time_reached: f64,
    pub rrmse: Result<f64, String>,
    pub wall: Duration,
}

#[derive(Debug, Clone)]
pub struct SlopeFit {
    pub scheme: StudyScheme,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OrderStudyResult {
    pub taus: Vec<f64>,
    pub rows: Vec<OrderRow>,
    pub slopes: Vec<SlopeFit>,
}

impl OrderStudyResult {
    pub fn slope_of(&self, scheme: Scheme, theta: f64) -> Option<f64> {
        let key = StudyScheme::new(scheme, theta);
        self.slopes
            .iter()
            .find(|s| s.scheme.label() == key.label())
            .and_then(|s| s.slope)
    }

    /// CSV `scheme,theta,tau,steps,rrmse,wall_s` followed by a `# slope`
    /// footer block.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        {
            let mut out = csv::Writer::from_writer(&mut w);
            out.write_record(["scheme", "theta", "tau", "steps", "rrmse", "wall_s"])?;
            for r in &self.rows {
                out.write_record([
                    r.scheme.scheme.name().to_string(),
                    fmt_opt(r.scheme.effective_theta()),
                    r.tau.to_string(),
                    r.steps.to_string(),
                    match &r.rrmse {
                        Ok(e) => format!("{e:e}"),
                        Err(_) => "error".to_string(),
                    },
                    format!("{:.6}", r.wall.as_secs_f64()),
                ])?;
            }
            out.flush()?;
        }
        writeln!(w, "# slopes")?;
        for s in &self.slopes {
            let value = s
                .slope
                .map_or_else(|| "absent".to_string(), |v| format!("{v:.4}"));
            writeln!(
                w,
                "# slope,{},{},{}",
                s.scheme.scheme.name(),
                fmt_opt(s.scheme.effective_theta()),
                value
            )?;
        }
        Ok(())
    }

    /// Whitespace-separated `label tau rrmse` lines for external plotting.
    pub fn write_plot_data<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.rows {
            if let Ok(e) = r.rrmse {
                writeln!(w, "{} {} {:e}", r.scheme.label(), r.tau, e)?;
            }
        }
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |t| t.to_string())
}

#[derive(Debug, Clone, Copy)]
pub struct StudyOptions {
    pub h: f64,
    pub oracle_cap: usize,
    pub floor: f64,
    /// Solver for the unsplit implicit schemes.
    pub solver: FullSolver,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            h: 1.0,
            oracle_cap: crate::linalg::DEFAULT_EXPM_CAP,
            floor: DEFAULT_SATURATION_FLOOR,
            solver: FullSolver::BandedLu,
        }
    }
}

/// Times that agree to 1e-9 share a reference.
fn time_key(t: f64) -> i64 {
    (t * 1e9).round() as i64
}

/// Caches `exp(tA)·f` per reached time.
struct ExactReference {
    dense: nalgebra::DMatrix<f64>,
    f: Vec<f64>,
    cap: usize,
    cache: HashMap<i64, Vec<f64>>,
}

impl ExactReference {
    fn new(op: &SplitOperator, f: &[f64], cap: usize) -> Result<Self> {
        if op.len() > cap {
            return Err(Error::OracleCap {
                size: op.len(),
                cap,
            });
        }
        Ok(Self {
            dense: op.to_dense(),
            f: f.to_vec(),
            cap,
            cache: HashMap::new(),
        })
    }

    fn at(&mut self, t: f64) -> Result<&[f64]> {
        let key = time_key(t);
        if !self.cache.contains_key(&key) {
            let y = dense_expm_apply(&self.dense, &self.f, t, self.cap)?;
            self.cache.insert(key, y);
        }
        Ok(&self.cache[&key])
    }
}

/// Evolve `f` under the canonical drift of `v` with every scheme and step
/// size, measure rRMSE against `exp(tA)·f`, and fit loglog slopes.
pub fn order_study(
    shape: GridShape,
    f: &[f64],
    v: &[f64],
    taus: &[f64],
    t_final: f64,
    schemes: &[StudyScheme],
    options: StudyOptions,
) -> Result<OrderStudyResult> {
    let drift = DriftField::canonical(shape, v, options.h)?;
    let op = SplitOperator::assemble(&drift);
    if f.len() != shape.len() {
        return Err(Error::LengthMismatch {
            expected: shape.len(),
            found: f.len(),
        });
    }
    let mut reference = ExactReference::new(&op, f, options.oracle_cap)?;

    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &scheme in schemes {
        let mut points = Vec::new();
        for &tau in taus {
            let cfg = scheme.config(tau, t_final, options.solver);
            let steps = cfg.steps();
            let time_reached = steps as f64 * tau;
            let start = Instant::now();
            let outcome = evolve_channel(f, &op, &cfg, 0);
            let wall = start.elapsed();
            let rrmse = match outcome {
                Ok(report) => {
                    let exact = reference.at(time_reached)?;
                    rrmse_slices(&report.state, exact).map_err(|e| e.to_string())
                }
                Err(e) => Err(e.to_string()),
            };
            if let Ok(e) = rrmse {
                points.push((tau, e));
            }
            rows.push(OrderRow {
                scheme,
                tau,
                steps,
                time_reached,
                rrmse,
                wall,
            });
        }
        slopes.push(SlopeFit {
            scheme,
            slope: fit_loglog_slope(&points, options.floor),
        });
    }
    Ok(OrderStudyResult {
        taus: taus.to_vec(),
        rows,
        slopes,
    })
}

/// One column of the split-vs-unsplit comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchMethod {
    /// Unsplit θ-method solved by BiCGStab (`tol = 1e-7`, `maxiter = 3e5`).
    KrylovFull {
        theta: f64,
    },
    /// Unsplit θ-method solved by banded LU.
    LuFull {
        theta: f64,
    },
    DouglasAdi {
        theta: f64,
    },
    PeacemanRachfordAdi,
}

impl BenchMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BenchMethod::KrylovFull { .. } => "bicgstab-full",
            BenchMethod::LuFull { .. } => "lu-full",
            BenchMethod::DouglasAdi { .. } => "douglas-adi",
            BenchMethod::PeacemanRachfordAdi => "pr-adi",
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match *self {
            BenchMethod::KrylovFull { theta }
            | BenchMethod::LuFull { theta }
            | BenchMethod::DouglasAdi { theta } => Some(theta),
            BenchMethod::PeacemanRachfordAdi => None,
        }
    }

    /// Nominal time order.
    pub fn order(&self) -> u32 {
        match self.theta() {
            Some(0.5) => 2,
            Some(_) => 1,
            None => 2,
        }
    }

    pub fn config(&self, tau: f64, t_final: f64) -> SchemeConfig {
        match *self {
            BenchMethod::KrylovFull { theta } => SchemeConfig::new(Scheme::ThetaFull, tau, t_final)
                .with_theta(theta)
                .with_solver(FullSolver::DEFAULT_KRYLOV),
            BenchMethod::LuFull { theta } => SchemeConfig::new(Scheme::ThetaFull, tau, t_final)
                .with_theta(theta)
                .with_solver(FullSolver::BandedLu),
            BenchMethod::DouglasAdi { theta } => {
                SchemeConfig::new(Scheme::Douglas, tau, t_final).with_theta(theta)
            }
            BenchMethod::PeacemanRachfordAdi => {
                SchemeConfig::new(Scheme::PeacemanRachford, tau, t_final)
            }
        }
    }

    /// The seven rows of the standard comparison: full Krylov, full LU and
    /// Douglas at θ = 1 and θ = 1/2, plus Peaceman–Rachford.
    pub fn standard_set() -> Vec<BenchMethod> {
        let mut m = Vec::new();
        for theta in [1.0, 0.5] {
            m.push(BenchMethod::KrylovFull { theta });
            m.push(BenchMethod::LuFull { theta });
            m.push(BenchMethod::DouglasAdi { theta });
        }
        m.push(BenchMethod::PeacemanRachfordAdi);
        m
    }
}

impl std::str::FromStr for BenchMethod {
    type Err = Error;

    /// `name` or `name:theta`, e.g. `douglas-adi:0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, theta) = match s.split_once(':') {
            Some((n, t)) => (
                n,
                t.parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad θ in {s:?}")))?,
            ),
            None => (s, 1.0),
        };
        match name {
            "bicgstab-full" | "bicgstab" => Ok(BenchMethod::KrylovFull { theta }),
            "lu-full" | "lu" => Ok(BenchMethod::LuFull { theta }),
            "douglas-adi" | "douglas" => Ok(BenchMethod::DouglasAdi { theta }),
            "pr-adi" | "pr" => Ok(BenchMethod::PeacemanRachfordAdi),
            _ => Err(Error::InvalidParameter(format!("unknown method {s:?}"))),
        }
    }
}

/// What rRMSE is measured against in [`bench_grid`].
#[derive(Debug, Clone, PartialEq)]
pub enum BenchReference {
    /// `exp(tA)·f` at the reached time (dense; small grids only).
    DenseExpm {
        cap: usize,
    },
    /// The limit `(µ_f/µ_v)·v`; meaningful only once `T` is well past the
    /// slowest relaxation time.
    SteadyState,
    None,
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub method: BenchMethod,
    pub tau: f64,
    pub steps: usize,
    pub factor_time: Duration,
    pub step_time: Duration,
    pub rrmse: Option<f64>,
    pub error: Option<String>,
}

impl BenchRow {
    pub fn total_time(&self) -> Duration {
        self.factor_time + self.step_time
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

pub const BENCH_COLUMNS: [&str; 10] = [
    "method", "theta", "p", "tau", "steps", "factor_s", "step_s", "total_s", "rrmse", "status",
];

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(BENCH_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.method.name().to_string(),
            fmt_opt(r.method.theta()),
            r.method.order().to_string(),
            r.tau.to_string(),
            r.steps.to_string(),
            format!("{:.6}", r.factor_time.as_secs_f64()),
            format!("{:.6}", r.step_time.as_secs_f64()),
            format!("{:.6}", r.total_time().as_secs_f64()),
            r.rrmse.map_or_else(String::new, |e| format!("{e:e}")),
            r.error.clone().unwrap_or_else(|| "ok".to_string()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub h: f64,
    /// Runs per cell; the fastest is reported.
    pub repeat: usize,
    pub reference: BenchReference,
    /// Run cells concurrently. Off by default: concurrent cells contend for
    /// cores and memory bandwidth and skew the wall-clock numbers.
    pub parallel: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            h: 1.0,
            repeat: 1,
            reference: BenchReference::None,
            parallel: false,
        }
    }
}

struct CellRun {
    factor_time: Duration,
    step_time: Duration,
    state: Vec<f64>,
}

fn run_cell(
    f: &[f64],
    op: &SplitOperator,
    cfg: &SchemeConfig,
    repeat: usize,
) -> Result<CellRun, String> {
    let mut best: Option<CellRun> = None;
    for _ in 0..repeat.max(1) {
        let r = evolve_channel(f, op, cfg, 0).map_err(|e| e.to_string())?;
        let total = r.factor_time + r.step_time;
        if best
            .as_ref()
            .is_none_or(|b| total < b.factor_time + b.step_time)
        {
            best = Some(CellRun {
                factor_time: r.factor_time,
                step_time: r.step_time,
                state: r.state,
            });
        }
    }
    Ok(best.expect("at least one run"))
}

/// Time every method at every τ and measure rRMSE against the chosen
/// reference. Failing cells are recorded and the grid continues.
pub fn bench_grid(
    shape: GridShape,
    f: &[f64],
    v: &[f64],
    taus: &[f64],
    t_final: f64,
    methods: &[BenchMethod],
    options: &BenchOptions,
) -> Result<Vec<BenchRow>> {
    let drift = DriftField::canonical(shape, v, options.h)?;
    let op = SplitOperator::assemble(&drift);
    let cells: Vec<(f64, BenchMethod)> = taus
        .iter()
        .flat_map(|&tau| methods.iter().map(move |&m| (tau, m)))
        .collect();

    // References first, so cells can run in any order.
    let mut targets: HashMap<i64, Vec<f64>> = HashMap::new();
    match &options.reference {
        BenchReference::DenseExpm { cap } => {
            let mut exact = ExactReference::new(&op, f, *cap)?;
            for &(tau, m) in &cells {
                let t = m.config(tau, t_final).steps() as f64 * tau;
                let y = exact.at(t)?.to_vec();
                targets.insert(time_key(t), y);
            }
        }
        BenchReference::SteadyState => {
            targets.insert(i64::MIN, steady_state(f, v));
        }
        BenchReference::None => {}
    }
    let target_for = |t: f64| match options.reference {
        BenchReference::DenseExpm { .. } => targets.get(&time_key(t)),
        BenchReference::SteadyState => targets.get(&i64::MIN),
        BenchReference::None => None,
    };

    let cell = |&(tau, method): &(f64, BenchMethod)| {
        let cfg = method.config(tau, t_final);
        let steps = cfg.steps();
        let row = match run_cell(f, &op, &cfg, options.repeat) {
            Ok(run) => BenchRow {
                method,
                tau,
                steps,
                factor_time: run.factor_time,
                step_time: run.step_time,
                rrmse: target_for(steps as f64 * tau)
                    .and_then(|t| rrmse_slices(&run.state, t).ok()),
                error: None,
            },
            Err(e) => BenchRow {
                method,
                tau,
                steps,
                factor_time: Duration::ZERO,
                step_time: Duration::ZERO,
                rrmse: None,
                error: Some(e),
            },
        };
        log::info!(
            "{} θ={:?} τ={tau}: {:.3}s",
            method.name(),
            method.theta(),
            row.total_time().as_secs_f64()
        );
        row
    };
    Ok(if options.parallel {
        cells.par_iter().map(cell).collect()
    } else {
        cells.iter().map(cell).collect()
    })
}
