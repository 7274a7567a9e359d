//! Multiplier weights `f`, `g`, `h`, the pointwise functionals they induce,
//! and numerical verification of the positivity certificates on the light
//! cone.
//!
//! With `s = 1 + t` and temporal exponent `theta`:
//!
//! ```text
//! f = eps1 s^theta,  g = eps2 s^(theta-1),  h = eps3 s^(theta-1) x phi(x),
//! phi(x) = 1 for |x| <= 1, 1/|x| otherwise.
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::profiles::{DampingProfile, PotentialProfile, ProfileError};

/// Coefficient threshold on `a1` separating the two critical regimes.
pub const CRITICAL_A1: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MultiplierError {
    #[error("regime {regime:?} does not match the damping profile: {reason}")]
    RegimeMismatch { regime: Regime, reason: String },
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("scan mesh must be positive: {0}")]
    Mesh(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `0 <= alpha < 1`.
    Subcritical,
    /// `alpha = 1`, `a1 > 2`.
    CriticalStrong,
    /// `alpha = 1`, `0 < a1 <= 2`.
    CriticalWeak,
}

impl Regime {
    pub fn classify(alpha: f64, a1: f64) -> Result<Regime, MultiplierError> {
        if !(a1 > 0.0) {
            return Err(MultiplierError::Infeasible(format!("a1 must be positive (got {a1})")));
        }
        if (0.0..1.0).contains(&alpha) {
            Ok(Regime::Subcritical)
        } else if alpha == 1.0 {
            Ok(if a1 > CRITICAL_A1 { Regime::CriticalStrong } else { Regime::CriticalWeak })
        } else {
            Err(MultiplierError::Infeasible(format!(
                "damping exponent alpha = {alpha} outside [0, 1]"
            )))
        }
    }

    pub fn is_quadratic(self) -> bool {
        !matches!(self, Regime::CriticalWeak)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierWeights {
    pub regime: Regime,
    pub mu: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub k: f64,
    /// Lower bound that `k` must strictly exceed.
    pub k_bound: f64,
    pub theta: f64,
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
}

pub const DEFAULT_K_FACTOR: f64 = 1.5;
pub const DEFAULT_DELTA: f64 = 0.1;

/// Picks `(eps1, eps2, eps3, k, theta)` for `regime`; `k = k_factor * k_bound`.
///
/// `delta` is only read in the critical-weak regime.
pub fn select_parameters(
    regime: Regime,
    damping: &DampingProfile,
    mu: f64,
    delta: f64,
    k_factor: f64,
) -> Result<MultiplierWeights, MultiplierError> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(MultiplierError::Infeasible(format!("mu must be positive (got {mu})")));
    }
    if !(k_factor > 1.0) {
        return Err(MultiplierError::Infeasible(format!(
            "k must strictly exceed its lower bound: k_factor = {k_factor} <= 1"
        )));
    }
    let bounds = damping.bounds();
    let (alpha, a1, sup) = (damping.alpha, bounds.a1, bounds.sup);
    let mismatch = |reason: String| MultiplierError::RegimeMismatch { regime, reason };
    let w = match regime {
        Regime::Subcritical => {
            if !(0.0..1.0).contains(&alpha) {
                return Err(mismatch(format!("subcritical requires 0 <= alpha < 1 (got alpha = {alpha})")));
            }
            if !(a1 > 0.0) {
                return Err(mismatch(format!("subcritical requires a1 > 0 (got a1 = {a1})")));
            }
            let k_bound = sup / 8.0;
            MultiplierWeights {
                regime,
                mu,
                eps1: mu,
                eps2: 3.0 * mu,
                eps3: 0.5 * mu,
                k: k_factor * k_bound,
                k_bound,
                theta: 2.0,
                delta: None,
                lambda: None,
                gamma: None,
            }
        }
        Regime::CriticalStrong => {
            if alpha != 1.0 {
                return Err(mismatch(format!("critical regime requires alpha = 1 (got alpha = {alpha})")));
            }
            if !(a1 > CRITICAL_A1) {
                return Err(mismatch(format!(
                    "(a1 - 1) eps1 > eps2 > eps1 requires a1 > 2 (got a1 = {a1})"
                )));
            }
            let lambda = a1 - CRITICAL_A1;
            let k_bound = sup / 4.0;
            MultiplierWeights {
                regime,
                mu,
                eps1: mu,
                eps2: (1.0 + 0.5 * lambda) * mu,
                eps3: 0.25 * lambda * mu,
                k: k_factor * k_bound,
                k_bound,
                theta: 2.0,
                delta: None,
                lambda: Some(lambda),
                gamma: None,
            }
        }
        Regime::CriticalWeak => {
            if alpha != 1.0 {
                return Err(mismatch(format!("critical regime requires alpha = 1 (got alpha = {alpha})")));
            }
            if !(a1 > 0.0 && a1 <= CRITICAL_A1) {
                return Err(mismatch(format!("critical-weak requires 0 < a1 <= 2 (got a1 = {a1})")));
            }
            if !(delta > 0.0 && delta < a1) {
                return Err(MultiplierError::Infeasible(format!(
                    "theta = a1 - delta < a1 needs 0 < delta < a1 (got delta = {delta}, a1 = {a1})"
                )));
            }
            let theta = a1 - delta;
            let gamma = a1 - theta;
            let k_bound = sup;
            MultiplierWeights {
                regime,
                mu,
                eps1: mu,
                eps2: 0.5 * a1 * mu,
                eps3: 0.5 * gamma * mu,
                k: k_factor * k_bound,
                k_bound,
                theta,
                delta: Some(delta),
                lambda: None,
                gamma: Some(gamma),
            }
        }
    };
    w.check_feasible(a1, sup)?;
    Ok(w)
}

impl MultiplierWeights {
    /// Verifies the strict inequalities the certificate argument needs.
    pub fn check_feasible(&self, a1: f64, sup: f64) -> Result<(), MultiplierError> {
        let fail = |s: String| Err(MultiplierError::Infeasible(s));
        let (e1, e2, e3, th) = (self.eps1, self.eps2, self.eps3, self.theta);
        if !(e1 > 0.0 && e2 > 0.0 && e3 >= 0.0) {
            return fail(format!("eps must be positive: ({e1}, {e2}, {e3})"));
        }
        match self.regime {
            Regime::Subcritical | Regime::CriticalStrong => {
                if !(e2 > e1) {
                    return fail(format!("eps2 > eps1 violated ({e2} <= {e1})"));
                }
                let bound = e3 * sup / (2.0 * (e2 - e1));
                if !(self.k > bound) {
                    return fail(format!("k > eps3 |a|_inf / (2 (eps2 - eps1)) = {bound} violated (k = {})", self.k));
                }
                if self.regime == Regime::CriticalStrong && !((a1 - 1.0) * e1 > e2) {
                    return fail(format!("(a1 - 1) eps1 > eps2 violated: requires a1 > 2 (a1 = {a1})"));
                }
                if !(e3 <= 2.0 * e2 - 2.0 * e1) {
                    return fail("eps3 <= 2 eps2 - 2 eps1 violated".to_string());
                }
            }
            Regime::CriticalWeak => {
                let lo = 0.5 * th * e1;
                let hi = 0.5 * (2.0 * a1 - th) * e1;
                if !(hi > e2 && e2 > lo) {
                    return fail(format!("(2 a1 - theta)/2 eps1 > eps2 > theta/2 eps1 violated ({hi} > {e2} > {lo})"));
                }
                if !(th < a1) {
                    return fail(format!("theta < a1 violated (theta = {th}, a1 = {a1})"));
                }
                let bound = (e3 * sup / (2.0 * e2 - th * e1)).max(sup);
                if !(self.k > bound) {
                    return fail(format!("k > max(eps3 |a|_inf / (2 eps2 - theta eps1), |a|_inf) = {bound} violated"));
                }
                if !(e3 <= 2.0 * e2 - th * e1) {
                    return fail("eps3 <= 2 eps2 - theta eps1 violated".to_string());
                }
            }
        }
        Ok(())
    }

    /// Weights with `theta = 2` and user-chosen constants, no feasibility check.
    pub fn quadratic_unchecked(regime: Regime, eps1: f64, eps2: f64, eps3: f64, k: f64) -> Self {
        MultiplierWeights {
            regime,
            mu: eps1,
            eps1,
            eps2,
            eps3,
            k,
            k_bound: 0.0,
            theta: 2.0,
            delta: None,
            lambda: None,
            gamma: None,
        }
    }

    /// Same constants with `mu` (and hence every `eps`) scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        MultiplierWeights {
            mu: self.mu * c,
            eps1: self.eps1 * c,
            eps2: self.eps2 * c,
            eps3: self.eps3 * c,
            ..self.clone()
        }
    }

    /// Default constant in `-F3 <= C a(x)`.
    pub fn default_c_cert(&self, a1: f64, radius: f64) -> f64 {
        if self.regime.is_quadratic() {
            self.eps2
        } else {
            let t0 = 10.0;
            let th = self.theta;
            self.eps2
                * (((th - 1.0) * (th - 2.0)).abs() * (1.0 + radius + t0) / (a1 * (1.0 + t0))
                    + (th - 1.0).abs())
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> WeightValues {
        eval_weights(self, t, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightValues {
    pub f: f64,
    pub f_t: f64,
    pub g: f64,
    pub g_t: f64,
    pub g_tt: f64,
    pub h: f64,
    pub h_t: f64,
    pub h_x: f64,
    pub phi: f64,
}

#[inline]
pub fn cutoff(x: f64) -> f64 {
    let r = x.abs();
    if r <= 1.0 {
        1.0
    } else {
        1.0 / r
    }
}

/// `x phi(x)`: identity on `[-1, 1]`, `sign(x)` outside.
#[inline]
fn x_phi(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        x
    } else {
        x.signum()
    }
}

/// Weight values at `(t, x)`. At the kinks `|x| = 1` the inside value of
/// `h_x` is returned.
pub fn eval_weights(w: &MultiplierWeights, t: f64, x: f64) -> WeightValues {
    let s = 1.0 + t;
    let th = w.theta;
    let s_th1 = s.powf(th - 1.0);
    let s_th2 = s_th1 / s;
    let xp = x_phi(x);
    let inside = x.abs() <= 1.0;
    WeightValues {
        f: w.eps1 * s_th1 * s,
        f_t: th * w.eps1 * s_th1,
        g: w.eps2 * s_th1,
        g_t: (th - 1.0) * w.eps2 * s_th2,
        g_tt: (th - 1.0) * (th - 2.0) * w.eps2 * s_th2 / s,
        h: w.eps3 * s_th1 * xp,
        h_t: (th - 1.0) * w.eps3 * s_th2 * xp,
        h_x: if inside { w.eps3 * s_th1 } else { 0.0 },
        phi: cutoff(x),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Functionals {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
    pub k1: f64,
    pub k2: f64,
}

/// Pointwise functionals from already-evaluated weights and coefficients.
#[inline]
pub fn functionals_from(w: &WeightValues, k: f64, a: f64, v: f64, vx: f64) -> Functionals {
    let f1 = 2.0 * w.f * a - w.f_t - 2.0 * w.g + w.h_x;
    let f2 = 2.0 * w.g - w.f_t + w.h_x;
    let f3 = w.g_tt - w.g_t * a - v * w.f_t + 2.0 * v * w.g - vx * w.h - v * w.h_x;
    let f4 = w.h * a - w.h_t;
    let pen = w.h.abs() * a;
    Functionals {
        f1,
        f2,
        f3,
        f4,
        k1: f1 - k * pen - w.h_t.abs(),
        k2: f2 - pen / k - w.h_t.abs(),
    }
}

pub fn eval_certificate_functionals(
    w: &MultiplierWeights,
    damping: &DampingProfile,
    potential: &PotentialProfile,
    t: f64,
    x: f64,
) -> Result<Functionals, ProfileError> {
    let a = damping.eval(x)?;
    let (v, vx) = potential.eval(x)?;
    Ok(functionals_from(&eval_weights(w, t, x), w.k, a, v, vx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub regime: Regime,
    /// First scanned time from which every certificate holds; infinite if none.
    pub t0: f64,
    pub min_k1: f64,
    pub min_k2: f64,
    pub c_cert: f64,
    pub max_f3_ratio: f64,
    pub c_alpha: f64,
    pub pass: bool,
}

impl CertificateReport {
    pub fn to_key_value(&self) -> String {
        format!(
            "regime={}\nt0={}\nmin_K1={:.16e}\nmin_K2={:.16e}\nC_cert={:.16e}\nmax_F3_ratio={:.16e}\nC_alpha={:.16e}\npass={}\n",
            serde_json::to_value(self.regime).unwrap().as_str().unwrap(),
            self.t0,
            self.min_k1,
            self.min_k2,
            self.c_cert,
            self.max_f3_ratio,
            self.c_alpha,
            self.pass
        )
    }

    pub const CSV_HEADER: &'static str = "regime,t0,min_K1,min_K2,C_cert,max_F3_ratio,C_alpha,pass";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            serde_json::to_value(self.regime).unwrap().as_str().unwrap(),
            self.t0,
            self.min_k1,
            self.min_k2,
            self.c_cert,
            self.max_f3_ratio,
            self.c_alpha,
            self.pass
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeScan {
    pub radius: f64,
    pub horizon: f64,
    pub dt: f64,
    pub dx: f64,
}

// Relative slack on the F3 comparison; the quadratic-regime bound is attained
// exactly where V underflows.
const F3_RATIO_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct RowStats {
    t: f64,
    min_k1: f64,
    min_k2: f64,
    max_ratio: f64,
}

/// Scans `{0 <= t <= T, |x| <= R + t}` and locates the onset time `t0`.
pub fn verify_certificate(
    w: &MultiplierWeights,
    damping: &DampingProfile,
    potential: &PotentialProfile,
    scan: ConeScan,
    c_cert: f64,
) -> Result<CertificateReport, MultiplierError> {
    let ConeScan { radius, horizon, dt, dx } = scan;
    for (name, v) in [("dt", dt), ("dx", dx), ("R", radius), ("T", horizon)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(MultiplierError::Mesh(format!("{name} = {v}")));
        }
    }
    let nt = (horizon / dt).round() as usize;
    let rows: Vec<RowStats> = (0..=nt)
        .into_par_iter()
        .map(|i| scan_row(w, damping, potential, i as f64 * dt, radius, dx))
        .collect::<Result<_, _>>()?;

    let ok = |r: &RowStats| {
        r.min_k1 >= 0.0 && r.min_k2 >= 0.0 && r.max_ratio <= c_cert * (1.0 + F3_RATIO_SLACK)
    };
    // Smallest index from which every later row is fine.
    let mut start = rows.len();
    while start > 0 && ok(&rows[start - 1]) {
        start -= 1;
    }
    let tail: &[RowStats] = if start < rows.len() { &rows[start..] } else { &rows };
    let fold = tail.iter().fold((f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY), |acc, r| {
        (acc.0.min(r.min_k1), acc.1.min(r.min_k2), acc.2.max(r.max_ratio))
    });
    let t0 = if start < rows.len() { rows[start].t } else { f64::INFINITY };
    Ok(CertificateReport {
        regime: w.regime,
        t0,
        min_k1: fold.0,
        min_k2: fold.1,
        c_cert,
        max_f3_ratio: fold.2,
        c_alpha: damping.c_alpha(),
        pass: t0.is_finite(),
    })
}

fn scan_row(
    w: &MultiplierWeights,
    damping: &DampingProfile,
    potential: &PotentialProfile,
    t: f64,
    radius: f64,
    dx: f64,
) -> Result<RowStats, ProfileError> {
    let m = ((radius + t) / dx).floor() as i64;
    let mut row = RowStats { t, min_k1: f64::INFINITY, min_k2: f64::INFINITY, max_ratio: f64::NEG_INFINITY };
    for j in -m..=m {
        let x = j as f64 * dx;
        if (x.abs() - 1.0).abs() < 1e-12 {
            continue;
        }
        let a = damping.eval(x)?;
        let (v, vx) = potential.eval(x)?;
        let fun = functionals_from(&eval_weights(w, t, x), w.k, a, v, vx);
        row.min_k1 = row.min_k1.min(fun.k1);
        row.min_k2 = row.min_k2.min(fun.k2);
        row.max_ratio = row.max_ratio.max(-fun.f3 / a);
    }
    Ok(row)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coercivity {
    pub lhs: f64,
    pub rhs: f64,
    /// Whether `eps3 / (1 + t) <= eps1 / 2`, the regime where the bound is claimed.
    pub applicable: bool,
    pub pass: bool,
}

/// Time from which `f - |h| >= f / 2` on the whole line.
pub fn coercivity_onset(w: &MultiplierWeights) -> f64 {
    (2.0 * w.eps3 / w.eps1 - 1.0).max(0.0)
}

/// Checks `f E + int h u_x u_t >= f E / 2` on one snapshot, with the same
/// trapezoid quadrature and centred `u_x` as [`crate::energy::total_energy`].
pub fn coercivity_check(
    w: &MultiplierWeights,
    snap: &crate::solver::Snapshot,
    coeffs: &crate::solver::Coefficients,
) -> Coercivity {
    let grid = &snap.grid;
    let e = crate::energy::total_energy(snap, coeffs);
    let ux = crate::energy::gradient(grid, &snap.u);
    let n = snap.u.len();
    let cross: f64 = (0..n)
        .map(|j| {
            let q = if j == 0 || j + 1 == n { 0.5 * grid.dx } else { grid.dx };
            q * eval_weights(w, snap.t, grid.x(j)).h * ux[j] * snap.u_t[j]
        })
        .sum();
    let f = eval_weights(w, snap.t, 0.0).f;
    let lhs = f * e + cross;
    let rhs = 0.5 * f * e;
    let applicable = snap.t >= coercivity_onset(w);
    Coercivity { lhs, rhs, applicable, pass: lhs >= rhs - 1e-12 * rhs.abs() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sub() -> MultiplierWeights {
        select_parameters(Regime::Subcritical, &DampingProfile::monomial(1.0, 0.5), 1.0, 0.1, 1.5).unwrap()
    }
    fn strong() -> MultiplierWeights {
        select_parameters(Regime::CriticalStrong, &DampingProfile::monomial(4.0, 1.0), 1.0, 0.1, 1.5).unwrap()
    }
    fn weak() -> MultiplierWeights {
        select_parameters(Regime::CriticalWeak, &DampingProfile::monomial(1.0, 1.0), 1.0, 0.1, 1.5).unwrap()
    }
    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn select_subcritical() {
        let w = sub();
        assert_eq!((w.eps1, w.eps2, w.eps3, w.theta), (1.0, 3.0, 0.5, 2.0));
        assert_eq!(w.k_bound, 0.125);
        assert!(w.k > w.k_bound);
    }

    #[test]
    fn select_critical_strong() {
        let w = strong();
        assert_eq!(w.lambda, Some(2.0));
        assert_eq!((w.eps1, w.eps2, w.eps3), (1.0, 2.0, 0.5));
        assert_eq!(w.k_bound, 1.0);
    }

    #[test]
    fn select_critical_weak() {
        let w = weak();
        assert!(close(w.theta, 0.9));
        assert!(close(w.gamma.unwrap(), 0.1));
        assert!(close(w.eps2, 0.5) && close(w.eps3, 0.05) && w.eps1 == 1.0);
        assert_eq!(w.k_bound, 1.0);
    }

    #[test]
    fn strong_with_small_a1_names_the_constraint() {
        let err = select_parameters(Regime::CriticalStrong, &DampingProfile::monomial(1.0, 1.0), 1.0, 0.1, 1.5)
            .unwrap_err();
        assert!(err.to_string().contains("a1 > 2"), "{err}");
    }

    #[test]
    fn weak_delta_must_stay_below_a1() {
        let e = select_parameters(Regime::CriticalWeak, &DampingProfile::monomial(1.0, 1.0), 1.0, 1.0, 1.5);
        assert!(matches!(e, Err(MultiplierError::Infeasible(_))));
    }

    #[test]
    fn regime_alpha_mismatch() {
        let e = select_parameters(Regime::Subcritical, &DampingProfile::monomial(1.0, 1.0), 1.0, 0.1, 1.5);
        assert!(matches!(e, Err(MultiplierError::RegimeMismatch { .. })));
        assert_eq!(Regime::classify(0.5, 1.0).unwrap(), Regime::Subcritical);
        assert_eq!(Regime::classify(1.0, 4.0).unwrap(), Regime::CriticalStrong);
        assert_eq!(Regime::classify(1.0, 2.0).unwrap(), Regime::CriticalWeak);
    }

    #[test]
    fn weights_at_origin() {
        let v = eval_weights(&sub(), 0.0, 0.0);
        assert_eq!((v.f, v.g, v.h, v.h_x, v.phi), (1.0, 3.0, 0.0, 0.5, 1.0));
    }

    #[test]
    fn weights_outside_unit_interval() {
        for w in [sub(), strong(), weak()] {
            for t in [0.0, 3.0, 40.0] {
                let v = eval_weights(&w, t, 4.0);
                assert_eq!(v.phi, 0.25);
                assert!(close(v.h, w.eps3 * (1.0 + t).powf(w.theta - 1.0)));
                assert_eq!(v.h_x, 0.0);
                let v = eval_weights(&w, t, -4.0);
                assert!(close(v.h, -w.eps3 * (1.0 + t).powf(w.theta - 1.0)));
            }
        }
    }

    #[test]
    fn weights_theta_regime() {
        let v = eval_weights(&weak(), 0.0, 0.5);
        assert!(close(v.f, 1.0) && close(v.g, 0.5) && close(v.h, 0.025));
    }

    #[test]
    fn functionals_hand_values() {
        let a = DampingProfile::monomial(1.0, 0.0);
        let w = MultiplierWeights { k: 1.0, ..sub() };
        let zero = PotentialProfile::Zero;
        let fun = eval_certificate_functionals(&w, &a, &zero, 0.0, 0.0).unwrap();
        assert!(close(fun.f1, -5.5) && close(fun.k1, -5.5));
        let fun = eval_certificate_functionals(&w, &a, &zero, 9.0, 0.0).unwrap();
        assert!(close(fun.f1, 125.0) && close(fun.k1, 125.0));
        assert!(close(fun.k2, 45.0));
        let c = PotentialProfile::Constant { v0: 1.0 };
        let fun = eval_certificate_functionals(&w, &a, &c, 0.0, 0.0).unwrap();
        assert!(close(-fun.f3, -0.5));
        assert!(-fun.f3 <= w.eps2 * 1.0);
        assert!(2.0 * w.eps1 - 2.0 * w.eps2 + w.eps3 <= 0.0);
    }

    #[test]
    fn default_c_cert() {
        assert_eq!(sub().default_c_cert(1.0, 1.0), 3.0);
        let w = weak();
        let expect = 0.5 * (0.1 * 1.1 * 12.0 / 11.0 + 0.1);
        assert!(close(w.default_c_cert(1.0, 1.0), expect));
    }

    fn scan(t: f64) -> ConeScan {
        ConeScan { radius: 1.0, horizon: t, dt: 0.5, dx: 0.05 }
    }

    #[test]
    fn subcritical_certificate_passes() {
        let d = DampingProfile::monomial(1.0, 0.5);
        let p = PotentialProfile::Gaussian { v0: 1.0 };
        let w = sub();
        let r = verify_certificate(&w, &d, &p, scan(200.0), w.default_c_cert(1.0, 1.0)).unwrap();
        assert!(r.pass && r.t0.is_finite() && r.t0 > 0.0, "{r:?}");
        assert!(r.min_k1 >= 0.0 && r.min_k2 >= 0.0 && r.max_f3_ratio <= r.c_cert * (1.0 + 1e-12));
        assert!(close(r.c_alpha, 2f64.sqrt()));
    }

    #[test]
    fn strong_formulas_forced_on_a1_one_fail() {
        // lambda = a1 - 2 = -1 makes eps3 negative and breaks (a1-1) eps1 > eps2.
        let lambda = -1.0;
        let w = MultiplierWeights::quadratic_unchecked(Regime::CriticalStrong, 1.0, 1.0 + 0.5 * lambda, 0.25 * lambda, 0.375);
        assert!(w.check_feasible(1.0, 1.0).is_err());
        let d = DampingProfile::monomial(1.0, 1.0);
        let p = PotentialProfile::Gaussian { v0: 1.0 };
        let r = verify_certificate(&w, &d, &p, scan(200.0), w.eps2.abs()).unwrap();
        assert!(!r.pass && r.t0.is_infinite());
        assert!(r.min_k1 < 0.0);
    }

    #[test]
    fn zero_eps3_passes() {
        let w = MultiplierWeights { eps3: 0.0, ..sub() };
        let d = DampingProfile::monomial(1.0, 0.5);
        let p = PotentialProfile::Gaussian { v0: 1.0 };
        let r = verify_certificate(&w, &d, &p, scan(100.0), w.eps2).unwrap();
        assert!(r.pass, "{r:?}");
        let v = eval_weights(&w, 7.0, 0.3);
        assert_eq!((v.h, v.h_t, v.h_x), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mesh_errors() {
        let d = DampingProfile::monomial(1.0, 0.5);
        let p = PotentialProfile::Gaussian { v0: 1.0 };
        let bad = ConeScan { dx: 0.0, ..scan(10.0) };
        assert!(matches!(verify_certificate(&sub(), &d, &p, bad, 3.0), Err(MultiplierError::Mesh(_))));
    }

    #[test]
    fn subcritical_k1_positive_late() {
        let d = DampingProfile::monomial(1.0, 0.5);
        let p = PotentialProfile::Gaussian { v0: 1.0 };
        let w = sub();
        for i in 0..=40 {
            let t = 100.0 + 10.0 * i as f64;
            let m = ((1.0 + t) / 0.37) as i64;
            for j in -m..=m {
                let x = j as f64 * 0.37;
                let fun = eval_certificate_functionals(&w, &d, &p, t, x).unwrap();
                assert!(fun.k1 > 0.0, "t={t} x={x}");
            }
        }
    }

    #[test]
    fn feasibility_algebra_on_selected_parameters() {
        for (d, r) in [
            (DampingProfile::monomial(1.0, 0.0), Regime::Subcritical),
            (DampingProfile::monomial(0.2, 0.9), Regime::Subcritical),
            (DampingProfile::monomial(4.0, 1.0), Regime::CriticalStrong),
            (DampingProfile::monomial(2.5, 1.0), Regime::CriticalStrong),
            (DampingProfile::monomial(1.0, 1.0), Regime::CriticalWeak),
            (DampingProfile::monomial(2.0, 1.0), Regime::CriticalWeak),
        ] {
            for mu in [0.1, 1.0, 7.0] {
                let w = select_parameters(r, &d, mu, 0.1, 1.5).unwrap();
                let b = d.bounds();
                w.check_feasible(b.a1, b.sup).unwrap();
                assert!(w.k > w.k_bound);
                if w.regime.is_quadratic() {
                    assert!(w.eps2 > w.eps1 && w.eps1 > 0.0);
                    if w.regime == Regime::CriticalStrong {
                        assert!((b.a1 - 1.0) * w.eps1 > w.eps2);
                    }
                } else {
                    let th = w.theta;
                    assert!((2.0 * b.a1 - th) / 2.0 * w.eps1 > w.eps2 && w.eps2 > th / 2.0 * w.eps1);
                    assert!(th < b.a1);
                }
            }
        }
    }

    #[test]
    fn sign_pattern_invariant_under_mu_scaling() {
        let d = DampingProfile::monomial(1.0, 0.5);
        let p = PotentialProfile::Gaussian { v0: 1.0 };
        for w in [sub(), weak()] {
            let (dd, w2) = if w.regime == Regime::CriticalWeak {
                (DampingProfile::monomial(1.0, 1.0), w.scaled(2.0))
            } else {
                (d.clone(), w.scaled(2.0))
            };
            for i in 0..30 {
                let t = i as f64 * 3.3;
                for j in -40..=40 {
                    let x = j as f64 * 0.61 * (1.0 + t) / 40.0;
                    let a = eval_certificate_functionals(&w, &dd, &p, t, x).unwrap();
                    let b = eval_certificate_functionals(&w2, &dd, &p, t, x).unwrap();
                    assert_eq!(a.k1 >= 0.0, b.k1 >= 0.0);
                    assert_eq!(a.k2 >= 0.0, b.k2 >= 0.0);
                }
            }
        }
    }

    fn fd_check(w: &MultiplierWeights, t: f64, x: f64) {
        let h = 1e-5;
        let rel = |fd: f64, an: f64| (fd - an).abs() <= 1e-5 * an.abs().max(1e-3);
        let v = eval_weights(w, t, x);
        let p = eval_weights(w, t + h, x);
        let m = eval_weights(w, t - h, x);
        assert!(rel((p.f - m.f) / (2.0 * h), v.f_t));
        assert!(rel((p.g - m.g) / (2.0 * h), v.g_t));
        assert!(rel((p.g_t - m.g_t) / (2.0 * h), v.g_tt));
        assert!(rel((p.h - m.h) / (2.0 * h), v.h_t));
        let px = eval_weights(w, t, x + h);
        let mx = eval_weights(w, t, x - h);
        assert!(rel((px.h - mx.h) / (2.0 * h), v.h_x), "h_x at t={t} x={x}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn weight_derivatives_match_finite_differences(t in 0.0f64..200.0, x in -50.0f64..50.0) {
            prop_assume!((x.abs() - 1.0).abs() > 1e-3);
            for w in [sub(), strong(), weak()] {
                fd_check(&w, t, x);
            }
        }
    }
}
