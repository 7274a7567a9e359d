//! Damping coefficient `a(x)` and potential `V(x)`, with pointwise checks of
//! the structural hypotheses the decay estimates rely on.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("x = {x} lies outside the tabulated range [{lo}, {hi}]")]
    OutOfTabulation { x: f64, lo: f64, hi: f64 },
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("mesh spacing must be positive (got {0})")]
    NonPositiveMesh(f64),
    #[error("domain half-width must be positive (got {0})")]
    NonPositiveDomain(f64),
}

/// Samples of a function on the uniform mesh `x0, x0 + dx, ...`, linearly
/// interpolated in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl Table {
    pub fn new(x0: f64, dx: f64, values: Vec<f64>) -> Result<Self, ProfileError> {
        let table = Table { x0, dx, values };
        table.check()?;
        Ok(table)
    }

    /// Tabulates `f` on `[lo, hi]` with `n` intervals.
    pub fn sample(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let dx = (hi - lo) / n as f64;
        let values = (0..=n).map(|j| f(lo + j as f64 * dx)).collect();
        Table { x0: lo, dx, values }
    }

    pub fn check(&self) -> Result<(), ProfileError> {
        if !(self.dx > 0.0) || !self.dx.is_finite() {
            return Err(ProfileError::InvalidTable(format!("dx = {}", self.dx)));
        }
        if self.values.len() < 2 {
            return Err(ProfileError::InvalidTable("need at least two samples".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(ProfileError::InvalidTable("non-finite sample".into()));
        }
        Ok(())
    }

    pub fn lo(&self) -> f64 {
        self.x0
    }

    pub fn hi(&self) -> f64 {
        self.x0 + (self.values.len() - 1) as f64 * self.dx
    }

    // Segment index and local coordinate in [0, 1].
    fn locate(&self, x: f64) -> Result<(usize, f64), ProfileError> {
        let (lo, hi) = (self.lo(), self.hi());
        let slack = 1e-12 * self.dx;
        if !(x >= lo - slack && x <= hi + slack) {
            return Err(ProfileError::OutOfTabulation { x, lo, hi });
        }
        let s = ((x - lo) / self.dx).clamp(0.0, (self.values.len() - 1) as f64);
        let j = (s.floor() as usize).min(self.values.len() - 2);
        Ok((j, s - j as f64))
    }

    pub fn value(&self, x: f64) -> Result<f64, ProfileError> {
        let (j, w) = self.locate(x)?;
        Ok((1.0 - w) * self.values[j] + w * self.values[j + 1])
    }

    /// Derivative of the interpolant: centered difference of the samples at
    /// mesh nodes, segment slope elsewhere.
    pub fn slope(&self, x: f64) -> Result<f64, ProfileError> {
        let (j, w) = self.locate(x)?;
        let n = self.values.len();
        let seg = |i: usize| (self.values[i + 1] - self.values[i]) / self.dx;
        let at_node = |i: usize| {
            if i == 0 {
                seg(0)
            } else if i == n - 1 {
                seg(n - 2)
            } else {
                (self.values[i + 1] - self.values[i - 1]) / (2.0 * self.dx)
            }
        };
        if w < 1e-12 {
            Ok(at_node(j))
        } else if w > 1.0 - 1e-12 {
            Ok(at_node(j + 1))
        } else {
            Ok(seg(j))
        }
    }

    /// Exact integral of the piecewise-linear interpolant over `[a, b]`,
    /// treating the function as zero outside the table.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        let lo = a.max(self.lo());
        let hi = b.min(self.hi());
        if hi <= lo {
            return 0.0;
        }
        let n = self.values.len();
        let node = |i: usize| self.x0 + i as f64 * self.dx;
        let mut total = 0.0;
        for i in 0..n - 1 {
            let (xl, xr) = (node(i), node(i + 1));
            let (l, r) = (xl.max(lo), xr.min(hi));
            if r > l {
                let fl = self.value(l).unwrap_or(0.0);
                let fr = self.value(r).unwrap_or(0.0);
                total += 0.5 * (fl + fr) * (r - l);
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DampingFamily {
    /// `a(x) = a0 (1 + |x|)^(-alpha)`.
    Monomial { a0: f64 },
    /// Samples of `a(x)`; queries outside the table are errors.
    Tabulated { table: Table },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingProfile {
    pub alpha: f64,
    #[serde(flatten)]
    pub family: DampingFamily,
}

impl DampingProfile {
    pub fn monomial(a0: f64, alpha: f64) -> Self {
        DampingProfile { alpha, family: DampingFamily::Monomial { a0 } }
    }

    pub fn tabulated(table: Table, alpha: f64) -> Self {
        DampingProfile { alpha, family: DampingFamily::Tabulated { table } }
    }

    pub fn eval(&self, x: f64) -> Result<f64, ProfileError> {
        match &self.family {
            DampingFamily::Monomial { a0 } => Ok(monomial(*a0, self.alpha, x)),
            DampingFamily::Tabulated { table } => table.value(x),
        }
    }

    /// Lower/upper constants of the two-sided bound and the sup-norm.
    ///
    /// Exact for the monomial family. For tables they are the inf/sup of
    /// `(1 + |x|)^alpha a(x)` and the max of `a` over the table samples.
    pub fn bounds(&self) -> DampingBounds {
        match &self.family {
            DampingFamily::Monomial { a0 } => DampingBounds { a1: *a0, a2: *a0, sup: *a0 },
            DampingFamily::Tabulated { table } => {
                let mut b = DampingBounds { a1: f64::INFINITY, a2: f64::NEG_INFINITY, sup: f64::NEG_INFINITY };
                for (j, &v) in table.values.iter().enumerate() {
                    let x = table.x0 + j as f64 * table.dx;
                    let w = (1.0 + x.abs()).powf(self.alpha) * v;
                    b.a1 = b.a1.min(w);
                    b.a2 = b.a2.max(w);
                    b.sup = b.sup.max(v);
                }
                b
            }
        }
    }

    /// Lower bound of `a` on `|x| <= 1` relative to `a1`, i.e. `2^(1-alpha)`
    /// in the form `2 a(x) >= C_alpha a1`.
    pub fn c_alpha(&self) -> f64 {
        2f64.powf(1.0 - self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingBounds {
    pub a1: f64,
    pub a2: f64,
    pub sup: f64,
}

#[inline]
pub fn monomial(a0: f64, alpha: f64, x: f64) -> f64 {
    if alpha == 0.0 {
        a0
    } else {
        a0 * (1.0 + x.abs()).powf(-alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PotentialProfile {
    /// `V0 exp(-x^2)`.
    Gaussian { v0: f64 },
    /// `V0 (1 + x^2)^(-mu/2)`.
    Power { v0: f64, mu: f64 },
    /// `V0`; the Klein-Gordon case.
    Constant { v0: f64 },
    Custom { table: Table },
    /// `V = 0`. Not admissible for the decay theory; used for oracle runs.
    Zero,
}

impl PotentialProfile {
    /// Returns `(V(x), V_x(x))`.
    pub fn eval(&self, x: f64) -> Result<(f64, f64), ProfileError> {
        Ok(match self {
            PotentialProfile::Gaussian { v0 } => {
                let v = v0 * (-x * x).exp();
                (v, -2.0 * x * v)
            }
            PotentialProfile::Power { v0, mu } => {
                let base = 1.0 + x * x;
                let v = v0 * base.powf(-0.5 * mu);
                (v, -mu * x * v / base)
            }
            PotentialProfile::Constant { v0 } => (*v0, 0.0),
            PotentialProfile::Custom { table } => (table.value(x)?, table.slope(x)?),
            PotentialProfile::Zero => (0.0, 0.0),
        })
    }

    /// `ln V(x)` without underflow for the closed-form families.
    pub fn ln_value(&self, x: f64) -> Result<f64, ProfileError> {
        Ok(match self {
            PotentialProfile::Gaussian { v0 } => v0.ln() - x * x,
            PotentialProfile::Power { v0, mu } => v0.ln() - 0.5 * mu * (1.0 + x * x).ln(),
            PotentialProfile::Constant { v0 } => v0.ln(),
            PotentialProfile::Custom { table } => table.value(x)?.ln(),
            PotentialProfile::Zero => f64::NEG_INFINITY,
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, PotentialProfile::Zero)
    }
}

/// Outcome of the pointwise hypothesis checks on a truncated domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub alpha_in_range: bool,
    pub damping_positive: bool,
    pub damping_bounds: bool,
    pub potential_positive: bool,
    pub potential_bounded: bool,
    pub potential_monotone: bool,
    pub a1: f64,
    pub a2: f64,
    pub a_sup: f64,
    pub v_sup: f64,
    /// First mesh point where each failed clause was observed.
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.alpha_in_range
            && self.damping_positive
            && self.damping_bounds
            && self.potential_positive
            && self.potential_bounded
            && self.potential_monotone
    }
}

/// Checks the damping and potential hypotheses pointwise on the mesh
/// `{j * mesh : |j * mesh| <= halfwidth}`.
///
/// Boundedness of `V` on a truncation is judged by comparing the outer half
/// of the domain against the inner half: a bounded, radially non-increasing
/// potential never exceeds its inner maximum further out.
pub fn validate_assumptions(
    damping: &DampingProfile,
    potential: &PotentialProfile,
    halfwidth: f64,
    mesh: f64,
) -> Result<ValidationReport, ProfileError> {
    if !(mesh > 0.0) || !mesh.is_finite() {
        return Err(ProfileError::NonPositiveMesh(mesh));
    }
    if !(halfwidth > 0.0) || !halfwidth.is_finite() {
        return Err(ProfileError::NonPositiveDomain(halfwidth));
    }
    let alpha = damping.alpha;
    let mut r = ValidationReport {
        alpha_in_range: (0.0..=1.0).contains(&alpha),
        damping_positive: true,
        damping_bounds: true,
        potential_positive: true,
        potential_bounded: true,
        potential_monotone: true,
        a1: f64::INFINITY,
        a2: f64::NEG_INFINITY,
        a_sup: f64::NEG_INFINITY,
        v_sup: f64::NEG_INFINITY,
        violations: Vec::new(),
    };
    if !r.alpha_in_range {
        r.violations.push(format!(
            "damping exponent alpha = {alpha} outside [0, 1]: the bound a1/(1+|x|)^alpha <= a(x) <= a2/(1+|x|)^alpha is only admitted for 0 <= alpha <= 1"
        ));
    }

    let n = (halfwidth / mesh).floor() as i64;
    let mut inner_sup = f64::NEG_INFINITY;
    let mut outer_sup = f64::NEG_INFINITY;
    for j in -n..=n {
        let x = j as f64 * mesh;
        let a = damping.eval(x)?;
        let (v, vx) = potential.eval(x)?;
        if !(a > 0.0) && r.damping_positive {
            r.damping_positive = false;
            r.violations.push(format!("a({x}) = {a} is not positive"));
        }
        let w = (1.0 + x.abs()).powf(alpha) * a;
        r.a1 = r.a1.min(w);
        r.a2 = r.a2.max(w);
        r.a_sup = r.a_sup.max(a);

        let positive = v > 0.0 || potential.ln_value(x)? > f64::NEG_INFINITY;
        if !positive && r.potential_positive {
            r.potential_positive = false;
            r.violations.push(format!("V({x}) = {v} is not positive"));
        }
        if x * vx > 0.0 && r.potential_monotone {
            r.potential_monotone = false;
            r.violations.push(format!("x V_x(x) = {} > 0 at x = {x}", x * vx));
        }
        r.v_sup = r.v_sup.max(v);
        if x.abs() <= 0.5 * halfwidth {
            inner_sup = inner_sup.max(v.abs());
        } else {
            outer_sup = outer_sup.max(v.abs());
        }
    }
    if !(r.a1 > 0.0 && r.a2.is_finite()) {
        r.damping_bounds = false;
        r.violations.push(format!("damping bounds degenerate: a1 = {}, a2 = {}", r.a1, r.a2));
    }
    if !r.v_sup.is_finite() || outer_sup > inner_sup * (1.0 + 1e-9) {
        r.potential_bounded = false;
        r.violations.push(format!(
            "V grows towards the edge of the domain (outer max {outer_sup} > inner max {inner_sup})"
        ));
    }
    Ok(r)
}
