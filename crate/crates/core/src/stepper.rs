//! Time integrators for `u' = (A1 + A2)·u`.
//!
//! All steppers preserve the mean of `u` because every factor they apply has
//! unit column sums. The ADI schemes factor their implicit stages once at
//! construction and only perform O(N) substitutions per step.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{mean, Image};
use crate::linalg::{bicgstab, BandedLu, TridiagonalFactors, DEFAULT_BANDED_CAP};
use crate::operator::{check_len, Direction, DriftField, SplitOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    ForwardEuler,
    /// Unsplit implicit Euler, `(I − τA)u⁺ = u`.
    BackwardEuler,
    /// Unsplit θ-method, `(I − θτA)u⁺ = (I + (1−θ)τA)u`.
    ThetaFull,
    PeacemanRachford,
    Douglas,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ForwardEuler => "fe",
            Scheme::BackwardEuler => "be",
            Scheme::ThetaFull => "theta",
            Scheme::PeacemanRachford => "pr",
            Scheme::Douglas => "douglas",
        }
    }

    pub fn uses_theta(self) -> bool {
        matches!(self, Scheme::ThetaFull | Scheme::Douglas)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fe" | "forward-euler" => Ok(Scheme::ForwardEuler),
            "be" | "backward-euler" => Ok(Scheme::BackwardEuler),
            "theta" => Ok(Scheme::ThetaFull),
            "pr" | "peaceman-rachford" => Ok(Scheme::PeacemanRachford),
            "douglas" => Ok(Scheme::Douglas),
            other => Err(Error::InvalidParameter(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Linear solver behind the unsplit implicit schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FullSolver {
    /// Matrix-free BiCGStab, warm-started from the previous state.
    Krylov { tol: f64, maxiter: usize },
    /// Direct banded LU, factored once.
    BandedLu,
}

impl FullSolver {
    pub const DEFAULT_KRYLOV: FullSolver = FullSolver::Krylov {
        tol: 1e-7,
        maxiter: 300_000,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub tau: f64,
    pub t_final: f64,
    /// Implicitness weight for [`Scheme::Douglas`] and [`Scheme::ThetaFull`].
    pub theta: f64,
    pub solver: FullSolver,
    /// Record mean and min after every step.
    pub diagnostics: bool,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, tau: f64, t_final: f64) -> Self {
        Self {
            scheme,
            tau,
            t_final,
            theta: 0.5,
            solver: FullSolver::DEFAULT_KRYLOV,
            diagnostics: false,
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_solver(mut self, solver: FullSolver) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_diagnostics(mut self, on: bool) -> Self {
        self.diagnostics = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "τ must be > 0, got {}",
                self.tau
            )));
        }
        if !(self.t_final >= self.tau) || !self.t_final.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "T = {} must be ≥ τ = {}",
                self.t_final, self.tau
            )));
        }
        if self.scheme.uses_theta() && !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!(
                "θ must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if let FullSolver::Krylov { tol, maxiter } = self.solver {
            if !(tol > 0.0) || maxiter == 0 {
                return Err(Error::InvalidParameter(format!(
                    "Krylov tol {tol} / maxiter {maxiter}"
                )));
            }
        }
        Ok(())
    }

    /// `round(T/τ)`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.tau).round() as usize
    }

    /// θ actually used by the scheme (1 for backward Euler).
    pub fn effective_theta(&self) -> Option<f64> {
        match self.scheme {
            Scheme::BackwardEuler => Some(1.0),
            Scheme::ThetaFull | Scheme::Douglas => Some(self.theta),
            Scheme::ForwardEuler | Scheme::PeacemanRachford => None,
        }
    }
}

pub trait Stepper {
    /// Advance one time step: `out = P·u`.
    fn step(&mut self, u: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Largest τ (exclusive) for which forward Euler keeps `I + τA` non-negative.
pub fn forward_euler_bound(op: &SplitOperator) -> f64 {
    let m = op.max_abs_diag();
    if m == 0.0 {
        f64::INFINITY
    } else {
        1.0 / m
    }
}

/// Largest τ (exclusive) for which the Peaceman–Rachford half steps keep
/// `I + (τ/2)A_i` non-negative.
pub fn peaceman_rachford_bound(op: &SplitOperator) -> f64 {
    let m = op.a1.max_abs_diag().max(op.a2.max_abs_diag());
    if m == 0.0 {
        f64::INFINITY
    } else {
        2.0 / m
    }
}

/// `out = u + τ(a1u + a2u)`; shared so Douglas with θ = 0 and forward Euler
/// round identically.
#[inline]
fn explicit_update(u: &[f64], a1u: &[f64], a2u: &[f64], tau: f64, out: &mut [f64]) {
    for k in 0..u.len() {
        out[k] = u[k] + tau * (a1u[k] + a2u[k]);
    }
}

fn check_io(n: usize, u: &[f64], out: &[f64]) -> Result<()> {
    check_len(n, u.len())?;
    check_len(n, out.len())
}

/// `P = I + τA`.
pub struct ForwardEuler<'a> {
    op: &'a SplitOperator,
    tau: f64,
    a1u: Vec<f64>,
    a2u: Vec<f64>,
}

impl<'a> ForwardEuler<'a> {
    pub fn new(op: &'a SplitOperator, tau: f64) -> Result<Self> {
        let bound = forward_euler_bound(op);
        if !(tau < bound) {
            return Err(Error::ForwardEulerBound { tau, bound });
        }
        let n = op.len();
        Ok(Self {
            op,
            tau,
            a1u: vec![0.0; n],
            a2u: vec![0.0; n],
        })
    }
}

impl Stepper for ForwardEuler<'_> {
    fn step(&mut self, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_io(self.op.len(), u, out)?;
        self.op.a1.apply(u, &mut self.a1u)?;
        self.op.a2.apply(u, &mut self.a2u)?;
        explicit_update(u, &self.a1u, &self.a2u, self.tau, out);
        Ok(())
    }
}

enum FullBackend {
    Explicit,
    Krylov { tol: f64, maxiter: usize },
    Banded(BandedLu),
}

/// Unsplit θ-method `(I − θτA)u⁺ = (I + (1−θ)τA)u`; θ = 1 is backward
/// Euler.
pub struct FullTheta<'a> {
    op: &'a SplitOperator,
    tau: f64,
    theta: f64,
    backend: FullBackend,
    au: Vec<f64>,
    rhs: Vec<f64>,
    pub last_iterations: usize,
}

impl<'a> FullTheta<'a> {
    pub fn new(op: &'a SplitOperator, tau: f64, theta: f64, solver: FullSolver) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!("θ = {theta}")));
        }
        let shift = theta * tau;
        let backend = if shift == 0.0 {
            FullBackend::Explicit
        } else {
            match solver {
                FullSolver::Krylov { tol, maxiter } => FullBackend::Krylov { tol, maxiter },
                FullSolver::BandedLu => {
                    FullBackend::Banded(BandedLu::factor_shifted(op, shift, DEFAULT_BANDED_CAP)?)
                }
            }
        };
        let n = op.len();
        Ok(Self {
            op,
            tau,
            theta,
            backend,
            au: vec![0.0; n],
            rhs: vec![0.0; n],
            last_iterations: 0,
        })
    }

    pub fn backward_euler(op: &'a SplitOperator, tau: f64, solver: FullSolver) -> Result<Self> {
        Self::new(op, tau, 1.0, solver)
    }
}

impl Stepper for FullTheta<'_> {
    fn step(&mut self, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_io(self.op.len(), u, out)?;
        let explicit = (1.0 - self.theta) * self.tau;
        if explicit != 0.0 {
            self.op.apply(u, &mut self.au)?;
            for k in 0..u.len() {
                self.rhs[k] = u[k] + explicit * self.au[k];
            }
        } else {
            self.rhs.copy_from_slice(u);
        }
        let shift = self.theta * self.tau;
        match &self.backend {
            FullBackend::Explicit => out.copy_from_slice(&self.rhs),
            FullBackend::Banded(lu) => lu.solve(&self.rhs, out)?,
            &FullBackend::Krylov { tol, maxiter } => {
                let op = self.op;
                let sol = bicgstab(
                    |x, y| {
                        op.apply(x, y).expect("lengths checked");
                        for (yk, xk) in y.iter_mut().zip(x) {
                            *yk = xk - shift * *yk;
                        }
                    },
                    &self.rhs,
                    tol,
                    maxiter,
                    Some(u),
                )?
                .into_result()?;
                self.last_iterations = sol.iterations;
                out.copy_from_slice(&sol.x);
            }
        }
        Ok(())
    }
}

fn check_factors(
    factors: &TridiagonalFactors,
    direction: Direction,
    expected_shift: f64,
) -> Result<()> {
    if factors.direction() != direction {
        return Err(Error::InvalidParameter(format!(
            "factors for {:?} supplied where {:?} expected",
            factors.direction(),
            direction
        )));
    }
    let found = factors.shift();
    if (found - expected_shift).abs() > 1e-14 * expected_shift.abs() {
        return Err(Error::ShiftMismatch {
            expected: expected_shift,
            found,
        });
    }
    Ok(())
}

/// Peaceman–Rachford ADI:
///
/// ```text
///   u⁺ = (I − τ/2·A1)⁻¹ (I + τ/2·A2) (I − τ/2·A2)⁻¹ (I + τ/2·A1) u
/// ```
///
/// The two `A2` stages run in the transposed (y-fastest) ordering, where the
/// blocks are contiguous.
pub struct PeacemanRachford<'a> {
    op: &'a SplitOperator,
    tau: f64,
    f1: TridiagonalFactors,
    f2: TridiagonalFactors,
    work: Vec<f64>,
    work_t: Vec<f64>,
    work_t2: Vec<f64>,
}

impl<'a> PeacemanRachford<'a> {
    pub fn new(op: &'a SplitOperator, tau: f64) -> Result<Self> {
        let f1 = TridiagonalFactors::factor(&op.a1, 0.5 * tau)?;
        let f2 = TridiagonalFactors::factor(&op.a2, 0.5 * tau)?;
        Self::with_factors(op, tau, f1, f2)
    }

    /// Reuse existing factors; both must have shift `τ/2`.
    pub fn with_factors(
        op: &'a SplitOperator,
        tau: f64,
        f1: TridiagonalFactors,
        f2: TridiagonalFactors,
    ) -> Result<Self> {
        check_factors(&f1, Direction::X, 0.5 * tau)?;
        check_factors(&f2, Direction::Y, 0.5 * tau)?;
        let bound = peaceman_rachford_bound(op);
        if tau >= bound {
            log::warn!("Peaceman–Rachford τ = {tau} ≥ {bound}: positivity is not guaranteed");
        }
        let n = op.len();
        Ok(Self {
            op,
            tau,
            f1,
            f2,
            work: vec![0.0; n],
            work_t: vec![0.0; n],
            work_t2: vec![0.0; n],
        })
    }
}

impl Stepper for PeacemanRachford<'_> {
    fn step(&mut self, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_io(self.op.len(), u, out)?;
        let half = 0.5 * self.tau;
        // z1 = (I + τ/2·A1) u
        self.op.a1.affine_blocks(1.0, half, u, &mut self.work);
        // y1 = (I − τ/2·A2)⁻¹ z1, transposed ordering
        self.op.perm.permute(&self.work, &mut self.work_t);
        self.f2.solve_blocks_in_place(&mut self.work_t);
        // z2 = (I + τ/2·A2) y1
        self.op
            .a2
            .affine_blocks(1.0, half, &self.work_t, &mut self.work_t2);
        // u⁺ = (I − τ/2·A1)⁻¹ z2
        self.op.perm.unpermute(&self.work_t2, out);
        self.f1.solve_blocks_in_place(out);
        Ok(())
    }
}

/// Douglas ADI with weight θ:
///
/// ```text
///   y0 = u + τ·A u
///   y1 = y0 + θτ·(A1 y1 − A1 u)
///   u⁺ = y1 + θτ·(A2 u⁺ − A2 u)
/// ```
pub struct Douglas<'a> {
    op: &'a SplitOperator,
    tau: f64,
    theta: f64,
    factors: Option<(TridiagonalFactors, TridiagonalFactors)>,
    a1u: Vec<f64>,
    a2u: Vec<f64>,
    work_t: Vec<f64>,
}

impl<'a> Douglas<'a> {
    pub fn new(op: &'a SplitOperator, tau: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!(
                "θ must lie in [0, 1], got {theta}"
            )));
        }
        let factors = if theta > 0.0 {
            let c = theta * tau;
            Some((
                TridiagonalFactors::factor(&op.a1, c)?,
                TridiagonalFactors::factor(&op.a2, c)?,
            ))
        } else {
            None
        };
        Self::build(op, tau, theta, factors)
    }

    /// Reuse existing factors; both must have shift `θτ` (θ > 0).
    pub fn with_factors(
        op: &'a SplitOperator,
        tau: f64,
        theta: f64,
        f1: TridiagonalFactors,
        f2: TridiagonalFactors,
    ) -> Result<Self> {
        check_factors(&f1, Direction::X, theta * tau)?;
        check_factors(&f2, Direction::Y, theta * tau)?;
        Self::build(op, tau, theta, Some((f1, f2)))
    }

    fn build(
        op: &'a SplitOperator,
        tau: f64,
        theta: f64,
        factors: Option<(TridiagonalFactors, TridiagonalFactors)>,
    ) -> Result<Self> {
        let n = op.len();
        Ok(Self {
            op,
            tau,
            theta,
            factors,
            a1u: vec![0.0; n],
            a2u: vec![0.0; n],
            work_t: vec![0.0; n],
        })
    }
}

impl Stepper for Douglas<'_> {
    fn step(&mut self, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_io(self.op.len(), u, out)?;
        self.op.a1.apply(u, &mut self.a1u)?;
        self.op.a2.apply(u, &mut self.a2u)?;
        let Some((f1, f2)) = &self.factors else {
            explicit_update(u, &self.a1u, &self.a2u, self.tau, out);
            return Ok(());
        };
        let (tau, c) = (self.tau, self.theta * self.tau);
        for k in 0..u.len() {
            out[k] = (u[k] + tau * (self.a1u[k] + self.a2u[k])) - c * self.a1u[k];
        }
        f1.solve_blocks_in_place(out);
        for k in 0..u.len() {
            out[k] -= c * self.a2u[k];
        }
        self.op.perm.permute(out, &mut self.work_t);
        f2.solve_blocks_in_place(&mut self.work_t);
        self.op.perm.unpermute(&self.work_t, out);
        Ok(())
    }
}

/// Build the stepper for `config` on `op` (factorizations happen here).
pub fn make_stepper<'a>(
    op: &'a SplitOperator,
    config: &SchemeConfig,
) -> Result<Box<dyn Stepper + Send + 'a>> {
    config.validate()?;
    let tau = config.tau;
    Ok(match config.scheme {
        Scheme::ForwardEuler => Box::new(ForwardEuler::new(op, tau)?),
        Scheme::BackwardEuler => Box::new(FullTheta::backward_euler(op, tau, config.solver)?),
        Scheme::ThetaFull => Box::new(FullTheta::new(op, tau, config.theta, config.solver)?),
        Scheme::PeacemanRachford => Box::new(PeacemanRachford::new(op, tau)?),
        Scheme::Douglas => Box::new(Douglas::new(op, tau, config.theta)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub mean: f64,
    pub min: f64,
}

/// Outcome of evolving one channel.
#[derive(Debug, Clone)]
pub struct ChannelReport {
    pub state: Vec<f64>,
    pub initial_mean: f64,
    pub final_mean: f64,
    /// `max_k |mean(u^k) − mean(f)| / |mean(f)|`; over every step when
    /// diagnostics are on, otherwise only the final state.
    pub max_mean_drift: f64,
    /// Smallest value seen over the trajectory.
    pub min_value: f64,
    /// First step whose result had a negative entry.
    pub first_negative_step: Option<usize>,
    pub history: Vec<StepRecord>,
    pub steps: usize,
    pub factor_time: Duration,
    pub step_time: Duration,
}

fn relative_drift(m: f64, m0: f64) -> f64 {
    if m0 == 0.0 {
        (m - m0).abs()
    } else {
        ((m - m0) / m0).abs()
    }
}

/// Evolve a single channel under `config`, factoring once up front.
pub fn evolve_channel(
    f: &[f64],
    op: &SplitOperator,
    config: &SchemeConfig,
    channel: usize,
) -> Result<ChannelReport> {
    check_len(op.len(), f.len())?;
    config.validate()?;
    let t0 = Instant::now();
    let mut stepper = make_stepper(op, config)?;
    let factor_time = t0.elapsed();

    let steps = config.steps();
    let initial_mean = mean(f);
    let mut u = f.to_vec();
    let mut next = vec![0.0; f.len()];
    let mut min_value = f.iter().copied().fold(f64::INFINITY, f64::min);
    let mut first_negative_step = None;
    let mut max_mean_drift = 0.0f64;
    let mut history = Vec::new();

    let t1 = Instant::now();
    for k in 1..=steps {
        stepper.step(&u, &mut next).map_err(|e| Error::Step {
            channel,
            step: k,
            source: Box::new(e),
        })?;
        std::mem::swap(&mut u, &mut next);
        let mut step_min = f64::INFINITY;
        for &v in &u {
            if !v.is_finite() {
                return Err(Error::NonFinite { channel, step: k });
            }
            step_min = step_min.min(v);
        }
        min_value = min_value.min(step_min);
        if step_min < 0.0 && first_negative_step.is_none() {
            first_negative_step = Some(k);
            log::warn!(
                "{}: negative value {step_min:e} in channel {channel} at step {k}",
                config.scheme
            );
        }
        if config.diagnostics {
            let m = mean(&u);
            max_mean_drift = max_mean_drift.max(relative_drift(m, initial_mean));
            history.push(StepRecord {
                step: k,
                mean: m,
                min: step_min,
            });
        }
    }
    let step_time = t1.elapsed();
    let final_mean = mean(&u);
    max_mean_drift = max_mean_drift.max(relative_drift(final_mean, initial_mean));
    Ok(ChannelReport {
        state: u,
        initial_mean,
        final_mean,
        max_mean_drift,
        min_value,
        first_negative_step,
        history,
        steps,
        factor_time,
        step_time,
    })
}

#[derive(Debug, Clone)]
pub struct EvolutionReport {
    pub output: Image,
    pub channels: Vec<ChannelReport>,
    pub steps: usize,
    pub factor_time: Duration,
    pub step_time: Duration,
}

/// Evolve every channel of `f`. `drifts` holds one field shared by all
/// channels or one per channel. Channels run concurrently.
pub fn evolve(f: &Image, drifts: &[DriftField], config: &SchemeConfig) -> Result<EvolutionReport> {
    config.validate()?;
    let nc = f.num_channels();
    if drifts.len() != 1 && drifts.len() != nc {
        return Err(Error::DimensionMismatch(format!(
            "{} drift fields for {nc} channels",
            drifts.len()
        )));
    }
    if let Some(d) = drifts.iter().find(|d| d.shape() != f.shape()) {
        return Err(Error::DimensionMismatch(format!(
            "drift on {} for image {}",
            d.shape(),
            f.shape()
        )));
    }
    let channels: Vec<ChannelReport> = (0..nc)
        .into_par_iter()
        .map(|c| {
            let drift = &drifts[c.min(drifts.len() - 1)];
            let op = SplitOperator::assemble(drift);
            evolve_channel(f.channel(c)?, &op, config, c)
        })
        .collect::<Result<_>>()?;
    let output = Image::new(
        f.shape(),
        channels.iter().map(|r| r.state.clone()).collect(),
    )?
    .with_offset(f.offset());
    Ok(EvolutionReport {
        output,
        steps: config.steps(),
        factor_time: channels.iter().map(|r| r.factor_time).sum(),
        step_time: channels.iter().map(|r| r.step_time).sum(),
        channels,
    })
}
