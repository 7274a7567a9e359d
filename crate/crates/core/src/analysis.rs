//! Decay-exponent fits of energy traces and mesh-refinement orders.

use serde::{Deserialize, Serialize};

use crate::energy::EnergyTrace;

pub const DEFAULT_WINDOW_FRACTION: f64 = 0.25;
pub const MIN_FIT_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("too few points: {got} usable samples in the window, need {need}")]
    TooFewPoints { got: usize, need: usize },
    #[error("degenerate trace: every energy in the window is zero")]
    Degenerate,
    #[error("window fraction must lie in (0, 1) (got {0})")]
    Window(f64),
    #[error("no runs to compare")]
    Empty,
    #[error("need at least two mesh levels")]
    TooFewLevels,
    #[error("mesh sequence must halve: dx = {coarse} then {fine}")]
    NotHalving { coarse: f64, fine: f64 },
    #[error("zero error at dx = {0}: the scheme is exact here")]
    Exact(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub window: (f64, f64),
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

impl DecayFit {
    pub const CSV_HEADER: &'static str = "label,t_lo,t_hi,exponent,r2,n";

    pub fn to_csv_row(&self, label: &str) -> String {
        format!(
            "{label},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.window.0, self.window.1, self.exponent, self.r_squared, self.n_points
        )
    }
}

/// Least-squares fit of `ln E = intercept + p ln(1 + t)` over `[frac T, T]`.
pub fn fit_decay_exponent(trace: &EnergyTrace, window_fraction: f64) -> Result<DecayFit, AnalysisError> {
    if !(window_fraction > 0.0 && window_fraction < 1.0) {
        return Err(AnalysisError::Window(window_fraction));
    }
    let horizon = trace.horizon();
    fit_over_window(trace, window_fraction * horizon, horizon)
}

pub fn fit_over_window(trace: &EnergyTrace, t_lo: f64, t_hi: f64) -> Result<DecayFit, AnalysisError> {
    let in_window: Vec<_> = trace.rows.iter().filter(|r| r.t >= t_lo && r.t <= t_hi).collect();
    let pts: Vec<(f64, f64)> = in_window
        .iter()
        .filter(|r| r.energy > 0.0 && r.energy.is_finite())
        .map(|r| ((1.0 + r.t).ln(), r.energy.ln()))
        .collect();
    if pts.is_empty() && !in_window.is_empty() && in_window.iter().all(|r| r.energy == 0.0) {
        return Err(AnalysisError::Degenerate);
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(AnalysisError::TooFewPoints { got: pts.len(), need: MIN_FIT_POINTS });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pts {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(DecayFit { window: (t_lo, t_hi), exponent: slope, intercept, r_squared, n_points: pts.len() })
}

/// `max E (1+t)^k / median E (1+t)^k` over the window.
pub fn envelope_ratio(trace: &EnergyTrace, t_lo: f64, t_hi: f64, k: f64) -> Option<f64> {
    let mut v: Vec<f64> = trace
        .rows
        .iter()
        .filter(|r| r.t >= t_lo && r.t <= t_hi && r.energy > 0.0)
        .map(|r| r.energy * (1.0 + r.t).powf(k))
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let median = v[v.len() / 2];
    Some(v[v.len() - 1] / median)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonEntry {
    pub label: String,
    pub fit: DecayFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeComparison {
    /// In input order.
    pub entries: Vec<ComparisonEntry>,
    pub warnings: Vec<String>,
    /// Label of the run with the largest (least negative) exponent.
    pub slowest: String,
    pub fastest: String,
}

impl RegimeComparison {
    pub fn exponent(&self, label: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.label == label).map(|e| e.fit.exponent)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(DecayFit::CSV_HEADER);
        s.push('\n');
        for e in &self.entries {
            s.push_str(&e.fit.to_csv_row(&e.label));
            s.push('\n');
        }
        s
    }
}

/// Fits every run over a common window `[frac T, T]`, `T` the shortest horizon.
pub fn regime_comparison(runs: &[(String, EnergyTrace)], window_fraction: f64) -> Result<RegimeComparison, AnalysisError> {
    if runs.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if !(window_fraction > 0.0 && window_fraction < 1.0) {
        return Err(AnalysisError::Window(window_fraction));
    }
    let horizon = runs.iter().map(|(_, t)| t.horizon()).fold(f64::INFINITY, f64::min);
    let mut warnings = Vec::new();
    for (label, t) in runs {
        if t.horizon() != horizon {
            warnings.push(format!("{label}: horizon {} differs; comparing on [{}, {horizon}]", t.horizon(), window_fraction * horizon));
        }
    }
    let entries = runs
        .iter()
        .map(|(label, t)| {
            fit_over_window(t, window_fraction * horizon, horizon).map(|fit| ComparisonEntry { label: label.clone(), fit })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let by = |cmp: fn(f64, f64) -> bool| {
        let mut best = &entries[0];
        for e in &entries[1..] {
            if cmp(e.fit.exponent, best.fit.exponent) {
                best = e;
            }
        }
        best.label.clone()
    };
    let slowest = by(|a, b| a > b);
    let fastest = by(|a, b| a < b);
    Ok(RegimeComparison { entries, warnings, slowest, fastest })
}

/// Mean of `log2(err_coarse / err_fine)` over adjacent levels.
pub fn convergence_order(errors_by_mesh: &[(f64, f64)]) -> Result<f64, AnalysisError> {
    if errors_by_mesh.len() < 2 {
        return Err(AnalysisError::TooFewLevels);
    }
    for &(dx, err) in errors_by_mesh {
        if err == 0.0 {
            return Err(AnalysisError::Exact(dx));
        }
    }
    let mut acc = 0.0;
    for w in errors_by_mesh.windows(2) {
        let ((c, ec), (f, ef)) = (w[0], w[1]);
        if ((c / f) - 2.0).abs() > 1e-9 {
            return Err(AnalysisError::NotHalving { coarse: c, fine: f });
        }
        acc += (ec / ef).log2();
    }
    Ok(acc / (errors_by_mesh.len() - 1) as f64)
}
