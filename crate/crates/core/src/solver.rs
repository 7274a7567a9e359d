//! Explicit leapfrog integration of
//!
//! ```text
//! u_tt - u_xx + V(x) u + a(x) u_t = 0
//! ```
//!
//! on a truncated line that always contains the light cone `|x| <= R + t`.
//!
//! Damping and potential are both time-centred,
//!
//! ```text
//! (u+ - 2u + u-)/dt^2 = D2 u - V (u+ + u-)/2 - a (u+ - u-)/(2 dt),
//! ```
//!
//! so every node update is a scalar division. The scheme is second order,
//! stable for `dt <= dx` whenever `a, V >= 0`, and at `dt = dx` its numerical
//! domain of dependence coincides with the exact one.

use serde::{Deserialize, Serialize};

use crate::energy::{self, EnergyTrace, RunMetadata, TraceRow};
use crate::multiplier::MultiplierWeights;
use crate::profiles::{self, DampingProfile, PotentialProfile, ProfileError, Table};

/// Amplitude below which a node counts as outside the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;
pub const DEFAULT_COURANT: f64 = 1.0;
pub const DEFAULT_MAX_NODES: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("invalid grid parameter: {0}")]
    InvalidGrid(String),
    #[error("CFL condition violated: courant = {0} must lie in (0, 1]")]
    Cfl(f64),
    #[error("grid of {nodes} nodes exceeds the memory cap of {cap}")]
    TooLarge { nodes: usize, cap: usize },
    #[error("state does not match grid: {0}")]
    Shape(String),
    #[error("numerical instability at t = {t}: non-finite value at x = {x}")]
    Unstable { t: f64, x: f64 },
    #[error("hypotheses violated: {0}")]
    Hypotheses(String),
    #[error("invalid initial data: {0}")]
    InitialData(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Required half-width `R + T + max(2 dx, 0.05 (R + T))`.
    pub halfwidth: f64,
    pub dx: f64,
    pub dt: f64,
    pub courant: f64,
    /// Nodes are `x_j = (j - n_half) dx`, `j = 0..2 n_half`.
    pub n_half: usize,
}

impl Grid {
    pub fn len(&self) -> usize {
        2 * self.n_half + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        (j as f64 - self.n_half as f64) * self.dx
    }

    pub fn center(&self) -> usize {
        self.n_half
    }

    /// Position of the outermost node, never less than `halfwidth`.
    pub fn extent(&self) -> f64 {
        self.n_half as f64 * self.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|j| self.x(j))
    }
}

pub fn build_grid(radius: f64, horizon: f64, dx: f64, courant: f64) -> Result<Grid, SolverError> {
    build_grid_capped(radius, horizon, dx, courant, DEFAULT_MAX_NODES)
}

pub fn build_grid_capped(
    radius: f64,
    horizon: f64,
    dx: f64,
    courant: f64,
    max_nodes: usize,
) -> Result<Grid, SolverError> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(SolverError::InvalidGrid(format!("R must be positive (got {radius})")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(SolverError::InvalidGrid(format!("T must be positive (got {horizon})")));
    }
    if !(dx > 0.0) || !dx.is_finite() {
        return Err(SolverError::InvalidGrid(format!("dx must be positive (got {dx})")));
    }
    if !(courant > 0.0 && courant <= 1.0) {
        return Err(SolverError::Cfl(courant));
    }
    let span = radius + horizon;
    let halfwidth = span + (2.0 * dx).max(0.05 * span);
    let n_half = (halfwidth / dx - 1e-9).ceil() as usize;
    let nodes = 2 * n_half + 1;
    if nodes > max_nodes {
        return Err(SolverError::TooLarge { nodes, cap: max_nodes });
    }
    Ok(Grid { halfwidth, dx, dt: courant * dx, courant, n_half })
}

/// One component of the initial data, supported in `|x| <= R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Pulse {
    /// `A max(0, 1 - |x|/R)`.
    Hat { amplitude: f64 },
    /// `A exp(1 - 1/(1 - (x/R)^2))` inside `|x| < R`.
    SmoothBump { amplitude: f64 },
    /// Linear interpolation of samples, cut off outside `|x| <= R`.
    Tabulated { table: Table },
}

impl Pulse {
    pub fn zero() -> Self {
        Pulse::Hat { amplitude: 0.0 }
    }

    pub fn eval(&self, x: f64, radius: f64) -> f64 {
        if x.abs() > radius {
            return 0.0;
        }
        match self {
            Pulse::Hat { amplitude } => amplitude * (1.0 - x.abs() / radius).max(0.0),
            Pulse::SmoothBump { amplitude } => {
                let r = x / radius;
                let q = 1.0 - r * r;
                if q <= 0.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / q).exp()
                }
            }
            Pulse::Tabulated { table } => table.value(x).unwrap_or(0.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Pulse::Hat { amplitude } | Pulse::SmoothBump { amplitude } => *amplitude == 0.0,
            Pulse::Tabulated { table } => table.values.iter().all(|&v| v == 0.0),
        }
    }

    /// `int_lo^hi pulse(s) ds`.
    pub fn integral(&self, lo: f64, hi: f64, radius: f64) -> f64 {
        if hi < lo {
            return -self.integral(hi, lo, radius);
        }
        let (lo, hi) = (lo.max(-radius), hi.min(radius));
        if hi <= lo {
            return 0.0;
        }
        match self {
            Pulse::Hat { amplitude } => {
                let prim = |x: f64| {
                    if x <= 0.0 {
                        (x + radius).powi(2) / (2.0 * radius)
                    } else {
                        radius - (radius - x).powi(2) / (2.0 * radius)
                    }
                };
                amplitude * (prim(hi) - prim(lo))
            }
            Pulse::SmoothBump { .. } => {
                let f = |s: f64| self.eval(s, radius);
                adaptive_simpson(&f, lo, hi, 1e-15, 40)
            }
            Pulse::Tabulated { table } => table.integral(lo, hi),
        }
    }

    fn check(&self) -> Result<(), SolverError> {
        match self {
            Pulse::Hat { amplitude } | Pulse::SmoothBump { amplitude } if !amplitude.is_finite() => {
                Err(SolverError::InitialData(format!("amplitude {amplitude}")))
            }
            Pulse::Tabulated { table } => table.check().map_err(|e| SolverError::InitialData(e.to_string())),
            _ => Ok(()),
        }
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub radius: f64,
    pub displacement: Pulse,
    pub velocity: Pulse,
}

impl InitialData {
    pub fn hat(radius: f64, amplitude: f64) -> Self {
        InitialData { radius, displacement: Pulse::Hat { amplitude }, velocity: Pulse::zero() }
    }

    pub fn u0(&self, x: f64) -> f64 {
        self.displacement.eval(x, self.radius)
    }

    pub fn u1(&self, x: f64) -> f64 {
        self.velocity.eval(x, self.radius)
    }

    pub fn check(&self) -> Result<(), SolverError> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(SolverError::InitialData(format!("support radius must be positive (got {})", self.radius)));
        }
        self.displacement.check()?;
        self.velocity.check()
    }
}

/// Classical solution for `a = 0`, `V = 0`:
/// `(u0(x - t) + u0(x + t))/2 + (1/2) int_{x-t}^{x+t} u1`.
pub fn dalembert_reference(init: &InitialData, t: f64, x: f64) -> f64 {
    0.5 * (init.u0(x - t) + init.u0(x + t)) + 0.5 * init.velocity.integral(x - t, x + t, init.radius)
}

/// Damping, potential and its derivative sampled on the grid nodes.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub grid: Grid,
    pub a: Vec<f64>,
    pub v: Vec<f64>,
    pub vx: Vec<f64>,
}

impl Coefficients {
    pub fn sample(grid: &Grid, damping: &DampingProfile, potential: &PotentialProfile) -> Result<Self, ProfileError> {
        let n = grid.len();
        let mut c = Coefficients { grid: *grid, a: Vec::with_capacity(n), v: Vec::with_capacity(n), vx: Vec::with_capacity(n) };
        for x in grid.nodes() {
            c.a.push(damping.eval(x)?);
            let (v, vx) = potential.eval(x)?;
            c.v.push(v);
            c.vx.push(vx);
        }
        Ok(c)
    }
}

// Per-node factors of the update u+ = inv (2u - keep u- + r2 lap).
struct StepFactors {
    inv: Vec<f64>,
    keep: Vec<f64>,
    r2: f64,
}

impl StepFactors {
    fn new(c: &Coefficients) -> Self {
        let dt = c.grid.dt;
        let (mut inv, mut keep) = (Vec::with_capacity(c.a.len()), Vec::with_capacity(c.a.len()));
        for (&a, &v) in c.a.iter().zip(&c.v) {
            let b = 0.5 * a * dt;
            let q = 0.5 * v * dt * dt;
            inv.push(1.0 / (1.0 + b + q));
            keep.push(1.0 - b + q);
        }
        let r = dt / c.grid.dx;
        StepFactors { inv, keep, r2: r * r }
    }

    #[inline]
    fn apply(&self, prev: &[f64], curr: &[f64], next: &mut [f64], lo: usize, hi: usize) -> bool {
        let mut finite = true;
        for j in lo..=hi {
            let lap = curr[j + 1] - 2.0 * curr[j] + curr[j - 1];
            let val = self.inv[j] * (2.0 * curr[j] - self.keep[j] * prev[j] + self.r2 * lap);
            finite &= val.is_finite();
            next[j] = val;
        }
        finite
    }
}

/// A leapfrog pair at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub t: f64,
    pub steps: u64,
    pub u: Vec<f64>,
    pub u_prev: Vec<f64>,
    // Inclusive node range outside which both fields vanish identically.
    lo: usize,
    hi: usize,
}

impl SimulationState {
    /// Seeds `u(-dt) = u0 - dt u1 + dt^2/2 (D2 u0 - V u0 - a u1)`.
    pub fn initial(grid: &Grid, coeffs: &Coefficients, init: &InitialData) -> Result<Self, SolverError> {
        init.check()?;
        let n = grid.len();
        let dt = grid.dt;
        let u: Vec<f64> = grid.nodes().map(|x| init.u0(x)).collect();
        let u1: Vec<f64> = grid.nodes().map(|x| init.u1(x)).collect();
        let mut u_prev = vec![0.0; n];
        for j in 1..n - 1 {
            let d2 = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (grid.dx * grid.dx);
            u_prev[j] = u[j] - dt * u1[j] + 0.5 * dt * dt * (d2 - coeffs.v[j] * u[j] - coeffs.a[j] * u1[j]);
        }
        let reach = (init.radius / grid.dx).ceil() as usize + 2;
        let c = grid.center();
        Ok(SimulationState { t: 0.0, steps: 0, u, u_prev, lo: c.saturating_sub(reach).max(1), hi: (c + reach).min(n - 2) })
    }

    /// Builds a state from an explicit pair, e.g. to run time backwards.
    pub fn from_pair(grid: &Grid, t: f64, u: Vec<f64>, u_prev: Vec<f64>) -> Result<Self, SolverError> {
        let n = grid.len();
        if u.len() != n || u_prev.len() != n {
            return Err(SolverError::Shape(format!("expected {n} nodes, got {} and {}", u.len(), u_prev.len())));
        }
        let steps = (t / grid.dt).round().max(0.0) as u64;
        Ok(SimulationState { t, steps, u, u_prev, lo: 1, hi: n - 2 })
    }

    /// Swaps the pair so further steps integrate backwards in time.
    pub fn reversed(&self) -> Self {
        SimulationState { u: self.u_prev.clone(), u_prev: self.u.clone(), ..self.clone() }
    }

    /// Centered velocity at this time level, given the next level.
    pub fn velocity(&self, next: &[f64], dt: f64) -> Vec<f64> {
        next.iter().zip(&self.u_prev).map(|(n, p)| (n - p) / (2.0 * dt)).collect()
    }

    pub fn step(&self, grid: &Grid, coeffs: &Coefficients) -> Result<SimulationState, SolverError> {
        let n = grid.len();
        if self.u.len() != n || coeffs.a.len() != n {
            return Err(SolverError::Shape(format!("state has {} nodes, grid {n}", self.u.len())));
        }
        let factors = StepFactors::new(coeffs);
        let (lo, hi) = ((self.lo.saturating_sub(1)).max(1), (self.hi + 1).min(n - 2));
        let mut next = vec![0.0; n];
        if !factors.apply(&self.u_prev, &self.u, &mut next, lo, hi) {
            return Err(unstable(grid, &next, self.t + grid.dt));
        }
        Ok(SimulationState { t: self.t + grid.dt, steps: self.steps + 1, u: next, u_prev: self.u.clone(), lo, hi })
    }
}

fn unstable(grid: &Grid, field: &[f64], t: f64) -> SolverError {
    let j = field.iter().position(|v| !v.is_finite()).unwrap_or(0);
    SolverError::Unstable { t, x: grid.x(j) }
}

/// Fields at one integer time level, `u_t` centred.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub grid: Grid,
    pub t: f64,
    pub u: Vec<f64>,
    pub u_t: Vec<f64>,
}

impl Snapshot {
    pub fn zero(grid: &Grid, t: f64) -> Self {
        Snapshot { grid: *grid, t, u: vec![0.0; grid.len()], u_t: vec![0.0; grid.len()] }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub initial: InitialData,
    pub damping: DampingProfile,
    pub potential: PotentialProfile,
    pub dx: f64,
    pub courant: f64,
    pub horizon: f64,
    pub sample_every: f64,
    #[serde(default)]
    pub weights: Option<MultiplierWeights>,
    #[serde(default)]
    pub override_hypotheses: bool,
}

impl RunSpec {
    pub fn grid(&self) -> Result<Grid, SolverError> {
        build_grid(self.initial.radius, self.horizon, self.dx, self.courant)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct SimulationFailure {
    pub error: SolverError,
    /// Rows recorded before the failure.
    pub partial: Box<EnergyTrace>,
}

impl From<SolverError> for SimulationFailure {
    fn from(error: SolverError) -> Self {
        SimulationFailure { error, partial: Box::default() }
    }
}

pub fn simulate(spec: &RunSpec) -> Result<EnergyTrace, SimulationFailure> {
    simulate_observed(spec, |_, _| {})
}

/// Runs `spec`, calling `observer` at every sample with the snapshot and the
/// sampled coefficients.
pub fn simulate_observed<F>(spec: &RunSpec, mut observer: F) -> Result<EnergyTrace, SimulationFailure>
where
    F: FnMut(&Snapshot, &Coefficients),
{
    if !(spec.sample_every > 0.0) {
        return Err(SolverError::InvalidGrid(format!("sample_every must be positive (got {})", spec.sample_every)).into());
    }
    let grid = spec.grid()?;
    if !spec.override_hypotheses {
        let report = profiles::validate_assumptions(&spec.damping, &spec.potential, grid.extent(), grid.dx)
            .map_err(SolverError::from)?;
        if !report.all_pass() {
            return Err(SolverError::Hypotheses(report.violations.join("; ")).into());
        }
    }
    let coeffs = Coefficients::sample(&grid, &spec.damping, &spec.potential).map_err(SolverError::from)?;
    let state = SimulationState::initial(&grid, &coeffs, &spec.initial)?;
    let factors = StepFactors::new(&coeffs);

    let n = grid.len();
    let dt = grid.dt;
    let total_steps = (spec.horizon / dt).round() as u64;
    // Sample the step nearest to each multiple of sample_every.
    let target = |k: u64| (k as f64 * spec.sample_every / dt).round() as u64;
    let mut next_sample = 0u64;

    let mut trace = EnergyTrace { rows: Vec::new(), meta: Some(RunMetadata::new(spec, &grid)) };
    let SimulationState { mut u_prev, u: mut curr, mut lo, mut hi, .. } = state;
    let mut next = vec![0.0; n];

    let mut e_lower = energy::half_step_energy(&coeffs, &u_prev, &curr, lo - 1, hi + 1);
    let mut q_curr = energy::weighted_l2(&coeffs.a, &curr, grid.dx, lo, hi);
    let mut cum = 0.0;

    for step in 0..=total_steps {
        lo = lo.saturating_sub(1).max(1);
        hi = (hi + 1).min(n - 2);
        let t = step as f64 * dt;
        if !factors.apply(&u_prev, &curr, &mut next, lo, hi) {
            return Err(SimulationFailure { error: unstable(&grid, &next, t + dt), partial: Box::new(trace) });
        }
        let e_upper = energy::half_step_energy(&coeffs, &curr, &next, lo - 1, hi + 1);
        let due = step >= target(next_sample);
        while target(next_sample) <= step {
            next_sample += 1;
        }
        if due || step == total_steps {
            let u_t: Vec<f64> = next.iter().zip(&u_prev).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
            let snap = Snapshot { grid, t, u: curr.clone(), u_t };
            let support = (lo..=hi)
                .filter(|&j| curr[j].abs() > SUPPORT_THRESHOLD)
                .map(|j| grid.x(j).abs())
                .fold(0.0, f64::max);
            let g = spec.weights.as_ref().map(|w| energy::g_functional(&snap, w, &coeffs));
            trace.rows.push(TraceRow {
                t,
                energy: 0.5 * (e_lower + e_upper),
                l2_u: energy::weighted_l2_ones(&curr, grid.dx, lo, hi),
                dissipation: energy::weighted_l2(&coeffs.a, &snap.u_t, grid.dx, lo, hi),
                support_radius: support,
                cum_au2: Some(cum),
                g,
            });
            observer(&snap, &coeffs);
        }
        let q_next = energy::weighted_l2(&coeffs.a, &next, grid.dx, lo, hi);
        cum += 0.5 * dt * (q_curr + q_next);
        q_curr = q_next;
        e_lower = e_upper;
        std::mem::swap(&mut u_prev, &mut curr);
        std::mem::swap(&mut curr, &mut next);
    }
    Ok(trace)
}

/// Largest nodal deviation from [`dalembert_reference`] over the samples of
/// an undamped, potential-free run, with the final support radius.
pub fn dalembert_error(
    initial: &InitialData,
    dx: f64,
    courant: f64,
    horizon: f64,
    sample_every: f64,
) -> Result<(f64, EnergyTrace), SimulationFailure> {
    let spec = RunSpec {
        initial: initial.clone(),
        damping: DampingProfile::monomial(0.0, 0.0),
        potential: PotentialProfile::Zero,
        dx,
        courant,
        horizon,
        sample_every,
        weights: None,
        override_hypotheses: true,
    };
    let mut err: f64 = 0.0;
    let trace = simulate_observed(&spec, |snap, _| {
        for j in 0..snap.u.len() {
            let x = snap.grid.x(j);
            err = err.max((snap.u[j] - dalembert_reference(initial, snap.t, x)).abs());
        }
    })?;
    Ok((err, trace))
}
