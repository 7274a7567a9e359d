//! Discrete energy functionals along simulated solutions.
//!
//! Two energies are used. [`total_energy`] is the plain trapezoid quadrature
//! of `(u_t^2 + u_x^2 + V u^2)/2` on one snapshot; the functionals built on it
//! (`G`, the identity residuals) are second-order consistent. The trace
//! column `E` is instead the energy conserved by the time stepper, averaged
//! over the two half steps around each integer level, which makes it exactly
//! non-increasing for non-negative damping.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::multiplier::{eval_weights, functionals_from, MultiplierWeights, WeightValues};
use crate::profiles::{DampingProfile, PotentialProfile};
use crate::solver::{Coefficients, Grid, InitialData, RunSpec, Snapshot};

#[derive(Debug, thiserror::Error)]
pub enum EnergyError {
    #[error("trace is missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error("need at least {need} snapshots, got {got}")]
    Segment { need: usize, got: usize },
    #[error("weighted data norm undefined: V({x}) = {v} where u1 + a u0 != 0")]
    NonPositivePotential { x: f64, v: f64 },
    #[error(transparent)]
    Profile(#[from] crate::profiles::ProfileError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub energy: f64,
    pub l2_u: f64,
    pub dissipation: f64,
    pub support_radius: f64,
    /// `int_0^t int a u^2`.
    pub cum_au2: Option<f64>,
    pub g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub spec: RunSpec,
    pub grid: Grid,
    pub regime: Option<crate::multiplier::Regime>,
    pub determinism: String,
}

impl RunMetadata {
    pub fn new(spec: &RunSpec, grid: &Grid) -> Self {
        RunMetadata {
            spec: spec.clone(),
            grid: *grid,
            regime: spec.weights.as_ref().map(|w| w.regime),
            determinism: "no random numbers are used; identical inputs give bit-identical traces".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub rows: Vec<TraceRow>,
    pub meta: Option<RunMetadata>,
}

pub const BASE_HEADER: [&str; 5] = ["t", "E", "l2_u", "dissipation", "support_radius"];

impl EnergyTrace {
    pub fn horizon(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t)
    }

    fn extended(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.g.is_some() && r.cum_au2.is_some())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let ext = self.extended();
        let mut header = BASE_HEADER.join(",");
        if ext {
            header.push_str(",cum_au2,G");
        }
        writeln!(out, "{header}")?;
        for r in &self.rows {
            write!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", r.t, r.energy, r.l2_u, r.dissipation, r.support_radius)?;
            if ext {
                write!(out, ",{:.16e},{:.16e}", r.cum_au2.unwrap(), r.g.unwrap())?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Reads a trace CSV. Only `t` and `E` are required; absent optional
    /// columns read as NaN (or `None` for `cum_au2`, `G`).
    pub fn read_csv<R: Read>(input: R) -> Result<Self, EnergyError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let t_col = col("t").ok_or(EnergyError::MissingColumn("t"))?;
        let e_col = col("E").ok_or(EnergyError::MissingColumn("E"))?;
        let opt = [col("l2_u"), col("dissipation"), col("support_radius"), col("cum_au2"), col("G")];
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64, EnergyError> {
                let s = rec.get(i).ok_or_else(|| EnergyError::Malformed(format!("row {} too short", line + 1)))?;
                s.parse::<f64>().map_err(|_| EnergyError::Malformed(format!("row {}: `{s}` is not a number", line + 1)))
            };
            let maybe = |c: Option<usize>| c.map(num).transpose();
            rows.push(TraceRow {
                t: num(t_col)?,
                energy: num(e_col)?,
                l2_u: maybe(opt[0])?.unwrap_or(f64::NAN),
                dissipation: maybe(opt[1])?.unwrap_or(f64::NAN),
                support_radius: maybe(opt[2])?.unwrap_or(f64::NAN),
                cum_au2: maybe(opt[3])?,
                g: maybe(opt[4])?,
            });
        }
        Ok(EnergyTrace { rows, meta: None })
    }

    pub fn read_csv_path(path: &Path) -> Result<Self, EnergyError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

// ---------------------------------------------------------------------------
// Quadrature helpers

/// Trapezoid weight of node `j`.
#[inline]
fn tw(grid: &Grid, j: usize) -> f64 {
    if j == 0 || j + 1 == grid.len() {
        0.5 * grid.dx
    } else {
        grid.dx
    }
}

/// Centred difference in the interior, one-sided at the ends.
pub fn gradient(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let dx = grid.dx;
    (0..n)
        .map(|j| {
            if j == 0 {
                (u[1] - u[0]) / dx
            } else if j == n - 1 {
                (u[n - 1] - u[n - 2]) / dx
            } else {
                (u[j + 1] - u[j - 1]) / (2.0 * dx)
            }
        })
        .collect()
}

/// `dx * sum_{lo..=hi} w u^2`. Callers pass interior ranges where the
/// trapezoid and plain sums agree.
pub fn weighted_l2(w: &[f64], u: &[f64], dx: f64, lo: usize, hi: usize) -> f64 {
    dx * (lo..=hi).map(|j| w[j] * u[j] * u[j]).sum::<f64>()
}

pub fn weighted_l2_ones(u: &[f64], dx: f64, lo: usize, hi: usize) -> f64 {
    dx * u[lo..=hi].iter().map(|v| v * v).sum::<f64>()
}

/// Energy the stepper conserves (for `a = 0`) between levels `p` and `q`:
///
/// ```text
/// (1/2) sum dx [ ((q - p)/dt)^2 + D+p D+q + V (p^2 + q^2)/2 ]
/// ```
///
/// over nodes `lo..=hi` and the edges between them.
pub fn half_step_energy(c: &Coefficients, p: &[f64], q: &[f64], lo: usize, hi: usize) -> f64 {
    let (dx, dt) = (c.grid.dx, c.grid.dt);
    let mut kin = 0.0;
    let mut pot = 0.0;
    for j in lo..=hi {
        let d = q[j] - p[j];
        kin += d * d;
        pot += c.v[j] * (p[j] * p[j] + q[j] * q[j]);
    }
    let mut grad = 0.0;
    for j in lo..hi {
        grad += (p[j + 1] - p[j]) * (q[j + 1] - q[j]);
    }
    0.5 * dx * (kin / (dt * dt) + grad / (dx * dx) + 0.5 * pot)
}

/// `(1/2) int (u_t^2 + u_x^2 + V u^2)` by the trapezoid rule.
pub fn total_energy(snap: &Snapshot, c: &Coefficients) -> f64 {
    let ux = gradient(&snap.grid, &snap.u);
    0.5 * (0..snap.u.len())
        .map(|j| tw(&snap.grid, j) * (snap.u_t[j].powi(2) + ux[j].powi(2) + c.v[j] * snap.u[j].powi(2)))
        .sum::<f64>()
}

/// `(1/2) int (u_t^2 + u_x^2 + V u^2)` for the initial data, with `u_x` and
/// the integrals evaluated on `grid` exactly as for a snapshot.
pub fn initial_energy(grid: &Grid, c: &Coefficients, init: &InitialData) -> f64 {
    let snap = Snapshot {
        grid: *grid,
        t: 0.0,
        u: grid.nodes().map(|x| init.u0(x)).collect(),
        u_t: grid.nodes().map(|x| init.u1(x)).collect(),
    };
    total_energy(&snap, c)
}

/// `|(E(t1) - E(t0))/(t1 - t0) + int a u_t^2|` with the dissipation evaluated
/// at the midpoint via `u_t = (u1 - u0)/(t1 - t0)`.
pub fn dissipation_residual(s0: &Snapshot, s1: &Snapshot, c: &Coefficients) -> f64 {
    let dt = s1.t - s0.t;
    if dt == 0.0 {
        return 0.0;
    }
    let de = (total_energy(s1, c) - total_energy(s0, c)) / dt;
    let diss: f64 = (0..s0.u.len())
        .map(|j| {
            let ut = (s1.u[j] - s0.u[j]) / dt;
            tw(&s0.grid, j) * c.a[j] * ut * ut
        })
        .sum();
    (de + diss).abs()
}

/// Weights for quadrature: at a node exactly on `|x| = 1`, `h_x` takes the
/// mean of its one-sided values so the trapezoid rule stays second order.
fn quadrature_weights(w: &MultiplierWeights, t: f64, x: f64) -> WeightValues {
    let mut v = eval_weights(w, t, x);
    if (x.abs() - 1.0).abs() < 1e-12 {
        v.h_x *= 0.5;
    }
    v
}

/// Terms of `G(t)`, kept apart so regroupings can be checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GParts {
    /// `f int (u_t^2 + u_x^2 + V u^2) = 2 f E`.
    pub energy: f64,
    /// `2 g int u u_t`.
    pub cross_u: f64,
    /// `int (g a - g_t) u^2`.
    pub mass: f64,
    /// `2 int h u_t u_x`.
    pub cross_h: f64,
}

impl GParts {
    pub fn total(&self) -> f64 {
        self.energy + self.cross_u + self.mass + self.cross_h
    }
}

pub fn g_parts(snap: &Snapshot, w: &MultiplierWeights, c: &Coefficients) -> GParts {
    let grid = &snap.grid;
    let ux = gradient(grid, &snap.u);
    let mut p = GParts { energy: 0.0, cross_u: 0.0, mass: 0.0, cross_h: 0.0 };
    for j in 0..snap.u.len() {
        let (u, ut) = (snap.u[j], snap.u_t[j]);
        if u == 0.0 && ut == 0.0 && ux[j] == 0.0 {
            continue;
        }
        let q = tw(grid, j);
        let wv = eval_weights(w, snap.t, grid.x(j));
        p.energy += q * wv.f * (ut * ut + ux[j] * ux[j] + c.v[j] * u * u);
        p.cross_u += q * 2.0 * wv.g * u * ut;
        p.mass += q * (wv.g * c.a[j] - wv.g_t) * u * u;
        p.cross_h += q * 2.0 * wv.h * ut * ux[j];
    }
    p
}

pub fn g_functional(snap: &Snapshot, w: &MultiplierWeights, c: &Coefficients) -> f64 {
    g_parts(snap, w, c).total()
}

/// Residual of the weighted energy identity at the middle of three
/// consecutive snapshots:
///
/// ```text
/// (1/2) dG/dt + (1/2) int F1 u_t^2 + (1/2) int F2 u_x^2 + (1/2) int F3 u^2 + int F4 u_x u_t
/// ```
///
/// The flux term integrates to zero because the fields vanish near the ends.
pub fn identity_residual(segment: &[Snapshot], w: &MultiplierWeights, c: &Coefficients) -> Result<f64, EnergyError> {
    if segment.len() < 3 {
        return Err(EnergyError::Segment { need: 3, got: segment.len() });
    }
    let (s0, s1, s2) = (&segment[0], &segment[1], &segment[2]);
    let dg = (g_functional(s2, w, c) - g_functional(s0, w, c)) / (s2.t - s0.t);
    let grid = &s1.grid;
    let ux = gradient(grid, &s1.u);
    let mut bulk = 0.0;
    for j in 0..s1.u.len() {
        let (u, ut) = (s1.u[j], s1.u_t[j]);
        if u == 0.0 && ut == 0.0 && ux[j] == 0.0 {
            continue;
        }
        let wv = quadrature_weights(w, s1.t, grid.x(j));
        let f = functionals_from(&wv, w.k, c.a[j], c.v[j], c.vx[j]);
        bulk += tw(grid, j)
            * (0.5 * f.f1 * ut * ut + 0.5 * f.f2 * ux[j] * ux[j] + 0.5 * f.f3 * u * u + f.f4 * ux[j] * ut);
    }
    Ok((0.5 * dg + bulk).abs())
}

/// `||u0||^2 + int |u1 + a u0|^2 / V` over `[-R, R]`.
pub fn weighted_data_norm_j0(
    init: &InitialData,
    damping: &DampingProfile,
    potential: &PotentialProfile,
) -> Result<f64, EnergyError> {
    let n = 20_000usize;
    let r = init.radius;
    let h = 2.0 * r / n as f64;
    let mut total = 0.0;
    for i in 0..=n {
        let x = -r + i as f64 * h;
        let u0 = init.u0(x);
        let num = init.u1(x) + damping.eval(x)? * u0;
        let mut val = u0 * u0;
        if num != 0.0 {
            let (v, _) = potential.eval(x)?;
            if !(v > 0.0) {
                return Err(EnergyError::NonPositivePotential { x, v });
            }
            val += num * num / v;
        }
        let q = if i == 0 || i == n { 0.5 } else { 1.0 };
        total += q * h * val;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformBound {
    /// `(t, ||u(t)||^2 + int_0^t int a u^2)`.
    pub lhs_curve: Vec<(f64, f64)>,
    pub plateau_ratio: f64,
    /// `max_t lhs(t) / J0^2`.
    pub c_measured: f64,
    pub horizon_too_short: bool,
    pub pass: bool,
}

pub const PLATEAU_LIMIT: f64 = 1.05;

/// Boundedness of `||u||^2 + int_0^t int a u^2`, read as `lhs(T)/lhs(T/2) <= 1.05`.
pub fn uniform_bound_check(trace: &EnergyTrace, j0_sq: f64, t0: Option<f64>) -> Result<UniformBound, EnergyError> {
    let mut curve = Vec::with_capacity(trace.rows.len());
    for r in &trace.rows {
        let cum = r.cum_au2.ok_or(EnergyError::MissingColumn("cum_au2"))?;
        curve.push((r.t, r.l2_u + cum));
    }
    let Some(&(horizon, end)) = curve.last() else {
        return Err(EnergyError::Malformed("empty trace".into()));
    };
    let mid = curve
        .iter()
        .min_by(|a, b| (a.0 - 0.5 * horizon).abs().total_cmp(&(b.0 - 0.5 * horizon).abs()))
        .map(|p| p.1)
        .unwrap_or(0.0);
    let plateau_ratio = if mid > 0.0 {
        end / mid
    } else if end == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    let peak = curve.iter().map(|p| p.1).fold(0.0, f64::max);
    let c_measured = if j0_sq > 0.0 { peak / j0_sq } else if peak == 0.0 { 0.0 } else { f64::INFINITY };
    let horizon_too_short = t0.is_some_and(|t0| horizon < 10.0 * t0);
    let pass = horizon_too_short || plateau_ratio <= PLATEAU_LIMIT;
    Ok(UniformBound { lhs_curve: curve, plateau_ratio, c_measured, horizon_too_short, pass })
}
