//! Perturbation conditions on `f` and `g`, forcing families, and per-theorem verdicts.
//!
//! Every condition here is a limit statement, so verdicts are trend
//! heuristics over the finite horizon. Each carries the statistics it was
//! decided on, and an INCONCLUSIVE band separates clear passes from clear
//! failures.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{aligned_steps, Extension, FunctionTable, Grid};
use crate::kernels::KernelTable;
use crate::quadrature::{cumulative_trapezoid, exponential_tail, last_quarter_start, line_fit, trapezoid};
use crate::resolvent::{estimate_v0, CharacteristicReport, DecayFit, ResolventTable};
use crate::volterra_ms::ProblemInstance;

pub const DEFAULT_DELTAS: [f64; 4] = [0.125, 0.25, 0.5, 1.0];
pub const DEFAULT_BETAS: [f64; 6] = [0.0625, 0.125, 0.25, 0.5, 0.75, 1.0];
/// Relative tolerance of the tail statistic against its early peak.
pub const TAIL_RELATIVE_TOL: f64 = 1e-3;
/// Minimum horizon for the sectional-average checks.
pub const MIN_HORIZON: f64 = 8.0;
/// Log-log slope of the quarter maxima below which a strictly decreasing tail counts as decaying.
pub const DECAY_TREND_SLOPE: f64 = -0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum ForcingKind {
    Zero,
    Constant(f64),
    /// Two-column `t,value` file with one row per node of `[0, T]`.
    Csv(PathBuf),
    /// `e^{αt} sin(e^{βt})`.
    Chirp { alpha: f64, beta: f64 },
    /// Entry `n` is `(a_n, h_n)` for the tent on `[n, n + 1]`.
    Spikes(Vec<(f64, f64)>),
    /// `scale · e^{-rate·t}`.
    ExpDecay { scale: f64, rate: f64 },
}

impl ForcingKind {
    /// Spikes with height `n` and integral `1/n` on `[n, n+1]` for `2 ≤ n < count`.
    pub fn inverse_mass_spikes(count: usize) -> Self {
        ForcingKind::Spikes(
            (0..count)
                .map(|n| {
                    if n < 2 {
                        (0.0, 0.0)
                    } else {
                        let n = n as f64;
                        (0.5 - 1.0 / (n * n), n)
                    }
                })
                .collect(),
        )
    }

    /// Pointwise value, for the analytic kinds.
    pub fn value(&self, t: f64) -> Option<f64> {
        match self {
            ForcingKind::Zero => Some(0.0),
            ForcingKind::Constant(c) => Some(*c),
            ForcingKind::Csv(_) => None,
            ForcingKind::Chirp { alpha, beta } => Some((alpha * t).exp() * (beta * t).exp().sin()),
            ForcingKind::Spikes(schedule) => Some(spike_value(schedule, t)),
            ForcingKind::ExpDecay { scale, rate } => Some(scale * (-rate * t).exp()),
        }
    }
}

fn spike_value(schedule: &[(f64, f64)], t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let n = t.floor();
    let Some(&(a, height)) = schedule.get(n as usize) else {
        return 0.0;
    };
    let w = 0.5 - a;
    let s = t - n;
    if s <= a || s >= 1.0 - a {
        0.0
    } else if s <= 0.5 {
        height * (s - a) / w
    } else {
        height * (1.0 - a - s) / w
    }
}

/// A forcing declaration together with its samples on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec {
    pub kind: ForcingKind,
    pub sampled: FunctionTable,
}

impl ForcingSpec {
    pub fn realize(kind: ForcingKind, grid: &Grid) -> Result<Self> {
        let sampled = match &kind {
            ForcingKind::Csv(path) => read_forcing_csv(path, grid)?,
            ForcingKind::Chirp { alpha, beta } => {
                if !(*beta > 0.0 && *alpha < *beta) {
                    return Err(Error::InvalidArgument(format!("chirp needs alpha < beta and beta > 0, got ({alpha}, {beta})")));
                }
                let period = 2.0 * PI * (-beta * grid.horizon()).exp();
                if period < 4.0 * grid.h() {
                    return Err(Error::InvalidArgument(format!(
                        "chirp period {period:.3e} at T falls below 4h = {:.3e}; refine the grid or shorten T",
                        4.0 * grid.h()
                    )));
                }
                FunctionTable::horizon_fn(*grid, |t| kind.value(t).unwrap_or(0.0))
            }
            ForcingKind::Spikes(schedule) => {
                for (n, &(a, height)) in schedule.iter().enumerate() {
                    if !(0.0..0.5).contains(&a) || !height.is_finite() {
                        return Err(Error::InvalidArgument(format!("spike {n}: need 0 <= a_n < 1/2, got a_n = {a}")));
                    }
                }
                FunctionTable::horizon_fn(*grid, |t| spike_value(schedule, t))
            }
            _ => FunctionTable::horizon_fn(*grid, |t| kind.value(t).unwrap_or(0.0)),
        };
        Ok(ForcingSpec { kind, sampled })
    }
}

fn read_forcing_csv(path: &Path, grid: &Grid) -> Result<FunctionTable> {
    let io = |e: std::io::Error| Error::Io { path: path.display().to_string(), message: e.to_string() };
    let text = std::fs::read_to_string(path).map_err(io)?;
    parse_forcing_csv(&text, grid).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses `t,value` rows (an optional non-numeric header is skipped); times must be exactly the grid nodes of `[0, T]`.
pub fn parse_forcing_csv(text: &str, grid: &Grid) -> Result<FunctionTable> {
    let values = parse_node_csv(text, grid, 0, grid.steps() as isize)?;
    FunctionTable::on_horizon(*grid, values)
}

/// Parses `t,value` rows whose times are exactly the nodes `first ..= last`.
pub fn parse_node_csv(text: &str, grid: &Grid, first: isize, last: isize) -> Result<Vec<f64>> {
    let expected = (last - first + 1).max(0) as usize;
    let mut values = Vec::with_capacity(expected);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (Some(t), Some(v), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::InvalidArgument(format!("line {}: expected two columns", lineno + 1)));
        };
        let (Ok(t), Ok(v)) = (t.parse::<f64>(), v.parse::<f64>()) else {
            if values.is_empty() && lineno == 0 {
                continue;
            }
            return Err(Error::InvalidArgument(format!("line {}: unparsable row", lineno + 1)));
        };
        let k = first + values.len() as isize;
        if k > last || aligned_steps(t, grid.h()) != Some(k as i64) {
            return Err(Error::InvalidArgument(format!(
                "line {}: time {t} does not match grid node t = {}",
                lineno + 1,
                grid.time(k)
            )));
        }
        values.push(v);
    }
    if values.len() != expected {
        return Err(Error::InvalidArgument(format!("expected {expected} rows, found {}", values.len())));
    }
    Ok(values)
}

/// `∫_t^{t+δ} f(s) ds` at every node with `t + δ ≤ T`.
pub fn sectional_average(f: &FunctionTable, delta: f64, grid: &Grid) -> Result<FunctionTable> {
    let m = window_steps(delta, grid)?;
    if f.start_index() != 0 || f.len() != grid.len() {
        return Err(Error::GridMismatch("sectional averages need f on [0, T]".into()));
    }
    let cum = cumulative_trapezoid(f.values(), grid.h());
    let values: Vec<f64> = (0..grid.len() - m).map(|k| cum[k + m] - cum[k]).collect();
    FunctionTable::new(*grid, 0, values, Extension::Zero)
}

fn window_steps(delta: f64, grid: &Grid) -> Result<usize> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!("window length {delta} must lie in (0, 1]")));
    }
    match aligned_steps(delta, grid.h()) {
        Some(m) if m > 0 && (m as usize) < grid.len() => Ok(m as usize),
        _ => Err(Error::InvalidArgument(format!("window length {delta} is not a multiple of h = {}", grid.h()))),
    }
}

/// Solves `u′ = −βu + f`, `u(0) = 0`, with the exact integrating factor per step.
pub fn exp_filter(f: &FunctionTable, beta: f64, grid: &Grid) -> Result<FunctionTable> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("filter rate must be positive, got {beta}")));
    }
    let h = grid.h();
    let decay = (-beta * h).exp();
    let fv = f.values();
    let mut u = Vec::with_capacity(fv.len());
    u.push(0.0);
    for k in 0..fv.len().saturating_sub(1) {
        let prev = u[k];
        u.push(decay * prev + 0.5 * h * (decay * fv[k] + fv[k + 1]));
    }
    FunctionTable::new(*grid, 0, u, Extension::Zero)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Three-valued conjunction: FAIL absorbs, INCONCLUSIVE dominates PASS.
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }

    pub fn all(items: impl IntoIterator<Item = Verdict>) -> Verdict {
        items.into_iter().fold(Verdict::Pass, Verdict::and)
    }

    /// PASS if any PASS, FAIL if every entry FAILs, otherwise INCONCLUSIVE.
    pub fn any(items: impl IntoIterator<Item = Verdict>) -> Verdict {
        let items: Vec<_> = items.into_iter().collect();
        if items.contains(&Verdict::Pass) {
            Verdict::Pass
        } else if !items.is_empty() && items.iter().all(|v| *v == Verdict::Fail) {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Which rule decided a [`TailTrend`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrendRule {
    IdenticallyZero,
    BelowTolerance,
    DecayTrend,
    NonDecaying,
    Undecided,
}

/// Tail behaviour of `|v|` split into four quarters of the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailTrend {
    pub quarter_maxima: [f64; 4],
    /// Maximum over the final quarter.
    pub statistic: f64,
    /// `TAIL_RELATIVE_TOL` times the maximum over the first quarter.
    pub tol_abs: f64,
    /// Log-log slope of the last three quarter maxima against quarter midpoints.
    pub loglog_slope: Option<f64>,
    pub verdict: Verdict,
    pub rule: TrendRule,
}

impl TailTrend {
    /// Classifies whether `|v(t)| → 0`, with `t0` the time of the first entry.
    ///
    /// PASS when the final-quarter maximum is below the tolerance with
    /// nonincreasing maxima over the last three quarters, or when those
    /// maxima fall strictly with log-log slope at most [`DECAY_TREND_SLOPE`].
    /// FAIL when the final-quarter maximum is at or above the tolerance and
    /// the last three maxima do not decrease.
    pub fn of(values: &[f64], h: f64, t0: f64) -> TailTrend {
        let n = values.len();
        let bounds = [0, n / 4, n / 2, last_quarter_start(n), n];
        let mut q = [0.0; 4];
        for i in 0..4 {
            q[i] = values[bounds[i]..bounds[i + 1].max(bounds[i] + 1).min(n)]
                .iter()
                .fold(0.0_f64, |m, v| m.max(v.abs()));
        }
        let tol_abs = TAIL_RELATIVE_TOL * q[0];
        let statistic = q[3];
        let slack = |a: f64| 1e-9 * a.abs();
        let nonincreasing = q[1] + slack(q[1]) >= q[2] && q[2] + slack(q[2]) >= q[3];
        let nondecreasing = q[1] <= q[2] + slack(q[2]) && q[2] <= q[3] + slack(q[3]);
        let mid = |i: usize| t0 + h * 0.5 * (bounds[i] + bounds[i + 1]) as f64;
        let loglog_slope = if q[1] > 0.0 && q[2] > 0.0 && q[3] > 0.0 && mid(1) > 0.0 {
            line_fit(&[(mid(1).ln(), q[1].ln()), (mid(2).ln(), q[2].ln()), (mid(3).ln(), q[3].ln())]).map(|p| p.0)
        } else {
            None
        };
        let (verdict, rule) = if q.iter().all(|&m| m == 0.0) {
            (Verdict::Pass, TrendRule::IdenticallyZero)
        } else if statistic < tol_abs && nonincreasing {
            (Verdict::Pass, TrendRule::BelowTolerance)
        } else if q[1] > q[2] && q[2] > q[3] && loglog_slope.is_some_and(|s| s <= DECAY_TREND_SLOPE) {
            (Verdict::Pass, TrendRule::DecayTrend)
        } else if statistic >= tol_abs && nondecreasing {
            (Verdict::Fail, TrendRule::NonDecaying)
        } else {
            (Verdict::Inconclusive, TrendRule::Undecided)
        };
        TailTrend { quarter_maxima: q, statistic, tol_abs, loglog_slope, verdict, rule }
    }

    pub fn of_table(t: &FunctionTable) -> TailTrend {
        TailTrend::of(t.values(), t.grid().h(), t.grid().time(t.start_index()))
    }
}

impl fmt::Display for TailTrend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (quarter maxima {:.3e} {:.3e} {:.3e} {:.3e}; tail {:.3e} vs tol {:.3e}; rule {:?}",
            self.verdict,
            self.quarter_maxima[0],
            self.quarter_maxima[1],
            self.quarter_maxima[2],
            self.quarter_maxima[3],
            self.statistic,
            self.tol_abs,
            self.rule
        )?;
        if let Some(s) = self.loglog_slope {
            write!(f, "; log-log slope {s:.3}")?;
        }
        f.write_str(")")
    }
}

/// Slope of `ln max|v|` over unit-length blocks starting at `from_time`.
///
/// Negative for decaying envelopes; tracks the exponential rate of oscillating signals.
pub fn envelope_rate(t: &FunctionTable, from_time: f64) -> Option<f64> {
    let grid = t.grid();
    let per_block = aligned_steps(1.0, grid.h()).filter(|&m| m > 0)? as usize;
    let first = ((from_time / grid.h()).ceil() as isize - t.start_index()).max(0) as usize;
    let pts: Vec<(f64, f64)> = t.values()[first.min(t.len())..]
        .chunks(per_block)
        .enumerate()
        .filter(|(_, c)| c.len() == per_block)
        .filter_map(|(b, c)| {
            let m = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let mid = grid.time(t.start_index() + (first + b * per_block) as isize) + 0.5;
            (m > 0.0).then(|| (mid, m.ln()))
        })
        .collect();
    line_fit(&pts).map(|p| p.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowEvidence {
    pub delta: f64,
    pub trend: TailTrend,
    pub envelope_rate: Option<f64>,
}

/// Sectional-average evidence for `f` and `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Thm2Evidence {
    pub f_windows: Vec<WindowEvidence>,
    /// The same statistic on `|f|`; diagnostic only.
    pub abs_f_windows: Vec<WindowEvidence>,
    pub cond_iii: Verdict,
    pub g_window: WindowEvidence,
    pub cond_iv: Verdict,
    /// Tail of `u′ = −u + f`, which tends to zero exactly when every sectional average does.
    pub filter_trend: TailTrend,
    pub filter_agrees: bool,
}

fn window_evidence(f: &FunctionTable, delta: f64, grid: &Grid) -> Result<WindowEvidence> {
    let avg = sectional_average(f, delta, grid)?;
    Ok(WindowEvidence {
        delta,
        trend: TailTrend::of_table(&avg),
        envelope_rate: envelope_rate(&avg, grid.horizon() / 4.0),
    })
}

pub fn check_thm2_conditions(f: &FunctionTable, g: &FunctionTable, grid: &Grid, delta_set: &[f64]) -> Result<Thm2Evidence> {
    if grid.horizon() < MIN_HORIZON {
        return Err(Error::InsufficientHorizon(format!(
            "T = {} is shorter than {MIN_HORIZON} time units",
            grid.horizon()
        )));
    }
    if delta_set.is_empty() {
        return Err(Error::InvalidArgument("empty window set".into()));
    }
    let f_windows = delta_set.iter().map(|&d| window_evidence(f, d, grid)).collect::<Result<Vec<_>>>()?;
    let abs_f = f.map(f64::abs);
    let abs_f_windows = delta_set.iter().map(|&d| window_evidence(&abs_f, d, grid)).collect::<Result<Vec<_>>>()?;
    let cond_iii = Verdict::all(f_windows.iter().map(|w| w.trend.verdict));
    let g_window = window_evidence(&g.map(|v| v * v), 1.0, grid)?;
    let cond_iv = g_window.trend.verdict;
    let filter_trend = TailTrend::of_table(&exp_filter(f, 1.0, grid)?);
    Ok(Thm2Evidence {
        filter_agrees: filter_trend.verdict == cond_iii,
        f_windows,
        abs_f_windows,
        cond_iii,
        g_window,
        cond_iv,
        filter_trend,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaEvidence {
    pub beta: f64,
    /// `max_t |∫_0^t e^{βs} f(s) ds|`.
    pub f_bound: f64,
    /// Node index of the first global maximum of the running integral.
    pub f_argmax: usize,
    pub f_verdict: Verdict,
    /// `∫_0^∞ e^{2βs} g²(s) ds` estimate.
    pub g_integral: f64,
    pub g_verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thm3Evidence {
    pub per_beta: Vec<BetaEvidence>,
    pub largest_f_beta: Option<f64>,
    pub largest_g_beta: Option<f64>,
    /// Condition on `g` (exponential square integrability).
    pub cond_iii: Verdict,
    /// Condition on `f` (bounded exponentially weighted running integral).
    pub cond_iv: Verdict,
    /// Smaller tested rates stay within twice the bound at the largest passing rate.
    pub beta_monotone: bool,
}

pub fn check_thm3_conditions(f: &FunctionTable, g: &FunctionTable, grid: &Grid, beta_grid: &[f64]) -> Result<Thm3Evidence> {
    if beta_grid.is_empty() {
        return Err(Error::InvalidArgument("empty beta grid".into()));
    }
    if beta_grid.iter().any(|&b| !(b > 0.0)) || beta_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("beta grid must be positive and strictly ascending".into()));
    }
    let h = grid.h();
    let n = f.len();
    let final_start = n - (n / 20).max(1);
    let per_beta: Vec<BetaEvidence> = beta_grid
        .iter()
        .map(|&beta| {
            let weighted: Vec<f64> = f.values().iter().enumerate().map(|(i, v)| (beta * h * i as f64).exp() * v).collect();
            let running: Vec<f64> = cumulative_trapezoid(&weighted, h).into_iter().map(f64::abs).collect();
            let (f_argmax, f_bound) = running
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |(ia, ma), (i, &v)| if v > ma { (i, v) } else { (ia, ma) });
            let before = running[..final_start].iter().fold(0.0_f64, |m, &v| m.max(v));
            let f_verdict = if f_argmax < final_start {
                Verdict::Pass
            } else if f_bound > 1.01 * before {
                Verdict::Fail
            } else {
                Verdict::Inconclusive
            };
            let g_sq_w: Vec<f64> = g.values().iter().enumerate().map(|(i, v)| (2.0 * beta * h * i as f64).exp() * v * v).collect();
            let tail = exponential_tail(&g_sq_w, h, crate::kernels::SQUARED_FLOOR);
            let g_integral = trapezoid(&g_sq_w, None, h) + tail.value;
            let g_verdict = if tail.diverging { Verdict::Fail } else { Verdict::Pass };
            BetaEvidence { beta, f_bound, f_argmax, f_verdict, g_integral, g_verdict }
        })
        .collect();
    let largest = |sel: fn(&BetaEvidence) -> Verdict| {
        per_beta.iter().filter(|e| sel(e) == Verdict::Pass).map(|e| e.beta).fold(None, |m: Option<f64>, b| Some(m.map_or(b, |m| m.max(b))))
    };
    let largest_f_beta = largest(|e| e.f_verdict);
    let largest_g_beta = largest(|e| e.g_verdict);
    let beta_monotone = match largest_f_beta {
        None => true,
        Some(b2) => {
            let bound = per_beta.iter().find(|e| e.beta == b2).map_or(0.0, |e| e.f_bound);
            per_beta
                .iter()
                .filter(|e| e.beta < b2)
                .all(|e| e.f_verdict == Verdict::Pass && e.f_bound <= 2.0 * bound + 1e-9 * bound.max(1.0))
        }
    };
    Ok(Thm3Evidence {
        cond_iii: Verdict::any(per_beta.iter().map(|e| e.g_verdict)),
        cond_iv: Verdict::any(per_beta.iter().map(|e| e.f_verdict)),
        per_beta,
        largest_f_beta,
        largest_g_beta,
        beta_monotone,
    })
}

/// Convergence evidence for `∫_0^∞ v²` from increments over the four quarters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyTail {
    pub quarter_increments: [f64; 4],
    pub truncated_integral: f64,
    pub verdict: Verdict,
}

impl CauchyTail {
    /// PASS when the last three increments shrink by at least half each
    /// quarter; FAIL when the last increment is at least 0.9 of the one before.
    pub fn of_squares(values: &[f64], h: f64) -> CauchyTail {
        let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
        let n = sq.len();
        let b = [0, n / 4, n / 2, last_quarter_start(n), n - 1];
        let mut inc = [0.0; 4];
        for i in 0..4 {
            inc[i] = trapezoid(&sq[b[i]..=b[i + 1].max(b[i])], None, h);
        }
        let total: f64 = inc.iter().sum();
        let verdict = if inc[1..].iter().all(|&v| v == 0.0) {
            Verdict::Pass
        } else if inc[2] > 0.0 && inc[3] >= 0.9 * inc[2] {
            Verdict::Fail
        } else if inc[2] <= 0.5 * inc[1] && inc[3] <= 0.5 * inc[2] {
            Verdict::Pass
        } else {
            Verdict::Inconclusive
        };
        CauchyTail { quarter_increments: inc, truncated_integral: total, verdict }
    }
}

impl fmt::Display for CauchyTail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.quarter_increments;
        write!(
            f,
            "{} (integral over [0,T] {:.6e}; quarter increments {:.3e} {:.3e} {:.3e} {:.3e})",
            self.verdict, self.truncated_integral, q[0], q[1], q[2], q[3]
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thm4Evidence {
    /// `∫ u²` for `u′ = −u + f`.
    pub filtered_f: CauchyTail,
    pub g: CauchyTail,
    pub cond_iii: Verdict,
    pub cond_iv: Verdict,
    /// `∫ (∫_t^{t+1} f)²`, reported alongside (no verdict depends on it).
    pub unit_average_f: CauchyTail,
}

pub fn check_thm4_conditions(f: &FunctionTable, g: &FunctionTable, grid: &Grid) -> Result<Thm4Evidence> {
    let u = exp_filter(f, 1.0, grid)?;
    let filtered_f = CauchyTail::of_squares(u.values(), grid.h());
    let g_tail = CauchyTail::of_squares(g.values(), grid.h());
    let unit_average_f = match sectional_average(f, 1.0, grid) {
        Ok(avg) => CauchyTail::of_squares(avg.values(), grid.h()),
        Err(_) => CauchyTail { quarter_increments: [0.0; 4], truncated_integral: 0.0, verdict: Verdict::Inconclusive },
    };
    Ok(Thm4Evidence { cond_iii: filtered_f.verdict, cond_iv: g_tail.verdict, filtered_f, g: g_tail, unit_average_f })
}

/// A condition verdict with a human-readable account of its evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub verdict: Verdict,
    pub evidence: String,
}

impl Condition {
    fn new(verdict: Verdict, evidence: impl Into<String>) -> Self {
        Condition { verdict, evidence: evidence.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremVerdict {
    pub cond_i: Condition,
    pub cond_ii: Condition,
    pub cond_iii: Condition,
    pub cond_iv: Condition,
    pub overall: Verdict,
}

impl TheoremVerdict {
    fn assemble(cond_i: Condition, cond_ii: Condition, cond_iii: Condition, cond_iv: Condition) -> Self {
        let overall = Verdict::all([cond_i.verdict, cond_ii.verdict, cond_iii.verdict, cond_iv.verdict]);
        TheoremVerdict { cond_i, cond_ii, cond_iii, cond_iv, overall }
    }

    pub fn conditions(&self) -> [&Condition; 4] {
        [&self.cond_i, &self.cond_ii, &self.cond_iii, &self.cond_iv]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOptions {
    pub deltas: Vec<f64>,
    pub betas: Vec<f64>,
    pub root_bracket: (f64, f64),
}

impl ClassifyOptions {
    /// Defaults with each window snapped to the nearest positive multiple of `h`.
    pub fn for_grid(grid: &Grid) -> Self {
        let mut opts = ClassifyOptions::default();
        opts.deltas = snap_windows(&opts.deltas, grid.h());
        opts
    }
}

/// Rounds window lengths to positive multiples of `h` no larger than 1, dropping duplicates.
pub fn snap_windows(deltas: &[f64], h: f64) -> Vec<f64> {
    let max_steps = (1.0 / h + 1e-9).floor().max(1.0);
    let mut steps: Vec<f64> = deltas.iter().map(|d| (d / h).round().clamp(1.0, max_steps)).collect();
    steps.dedup();
    steps.into_iter().map(|m| m * h).collect()
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { deltas: DEFAULT_DELTAS.to_vec(), betas: DEFAULT_BETAS.to_vec(), root_bracket: (-50.0, 50.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Mean square tends to zero.
    pub theorem2: TheoremVerdict,
    /// Mean square decays exponentially.
    pub theorem3: TheoremVerdict,
    /// Mean square is integrable.
    pub theorem4: TheoremVerdict,
    pub characteristic: CharacteristicReport,
    pub thm2: Option<Thm2Evidence>,
    pub thm3: Option<Thm3Evidence>,
    pub thm4: Option<Thm4Evidence>,
}

pub fn classify(inst: &ProblemInstance, r: &ResolventTable, k: &KernelTable) -> StabilityReport {
    classify_with(inst, r, k, &ClassifyOptions::for_grid(&inst.grid))
}

pub fn classify_with(inst: &ProblemInstance, r: &ResolventTable, k: &KernelTable, opts: &ClassifyOptions) -> StabilityReport {
    let characteristic = estimate_v0(&inst.nu, r, opts.root_bracket);
    let cond_i = resolvent_condition(&characteristic);
    let cond_ii = kernel_condition(k);
    let grid = &inst.grid;
    let thm2 = check_thm2_conditions(&inst.f, &inst.g, grid, &opts.deltas);
    let thm3 = check_thm3_conditions(&inst.f, &inst.g, grid, &opts.betas);
    let thm4 = check_thm4_conditions(&inst.f, &inst.g, grid);

    let (t2_iii, t2_iv) = match &thm2 {
        Ok(e) => (
            Condition::new(
                e.cond_iii,
                e.f_windows.iter().map(|w| format!("delta={}: {}", w.delta, w.trend)).collect::<Vec<_>>().join("; "),
            ),
            Condition::new(e.cond_iv, format!("unit windows of g^2: {}", e.g_window.trend)),
        ),
        Err(err) => (Condition::new(Verdict::Inconclusive, err.to_string()), Condition::new(Verdict::Inconclusive, err.to_string())),
    };
    let (t3_iii, t3_iv) = match &thm3 {
        Ok(e) => (
            Condition::new(e.cond_iii, format!("largest beta with finite weighted g^2 integral: {:?}", e.largest_g_beta)),
            Condition::new(
                e.cond_iv,
                format!(
                    "largest beta with bounded weighted running integral of f: {:?}; 2B monotonicity {}",
                    e.largest_f_beta,
                    if e.beta_monotone { "holds" } else { "violated" }
                ),
            ),
        ),
        Err(err) => (Condition::new(Verdict::Inconclusive, err.to_string()), Condition::new(Verdict::Inconclusive, err.to_string())),
    };
    let (t4_iii, t4_iv) = match &thm4 {
        Ok(e) => (
            Condition::new(e.cond_iii, format!("integral of filtered f squared: {}", e.filtered_f)),
            Condition::new(e.cond_iv, format!("integral of g squared: {}", e.g)),
        ),
        Err(err) => (Condition::new(Verdict::Inconclusive, err.to_string()), Condition::new(Verdict::Inconclusive, err.to_string())),
    };

    StabilityReport {
        theorem2: TheoremVerdict::assemble(cond_i.clone(), cond_ii.clone(), t2_iii, t2_iv),
        theorem3: TheoremVerdict::assemble(cond_i.clone(), cond_ii.clone(), t3_iii, t3_iv),
        theorem4: TheoremVerdict::assemble(cond_i, cond_ii, t4_iii, t4_iv),
        characteristic,
        thm2: thm2.ok(),
        thm3: thm3.ok(),
        thm4: thm4.ok(),
    }
}

fn resolvent_condition(c: &CharacteristicReport) -> Condition {
    let root = c.real_root.map_or("none in bracket".to_string(), |r| format!("{r:.6}"));
    let fit = match c.decay_fit {
        DecayFit::Rate(rate) => format!("{rate:.6}"),
        DecayFit::BelowFloor => "below numerical floor".to_string(),
    };
    Condition::new(
        if c.verdict_stable { Verdict::Pass } else { Verdict::Fail },
        format!("decay fit of ln|r| {fit}; rightmost real root {root}; method {}", c.method.tag()),
    )
}

fn kernel_condition(k: &KernelTable) -> Condition {
    if k.divergent {
        return Condition::new(
            Verdict::Fail,
            format!(
                "G^2 does not decay over the final quarter (log-slope {:?}); truncated norm^2 {:.6e}",
                k.tail_slope, k.l2_norm_sq_truncated
            ),
        );
    }
    let evidence = format!(
        "norm^2 {:.6e} (truncated {:.6e} + tail {:.3e})",
        k.l2_norm_sq, k.l2_norm_sq_truncated, k.l2_tail_estimate
    );
    let verdict = if (k.l2_norm_sq - 1.0).abs() < 10.0 * k.l2_tail_estimate {
        Verdict::Inconclusive
    } else if k.l2_norm_sq < 1.0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Condition::new(verdict, evidence)
}

/// `∫_t^{t+δ}` of the chirp by Richardson-extrapolated trapezoid sums at steps `h/32` and `h/64`.
pub fn chirp_window_oracle(alpha: f64, beta: f64, t: f64, delta: f64, h: f64) -> f64 {
    let f = |s: f64| (alpha * s).exp() * (beta * s).exp().sin();
    let trap = |step: f64| {
        let n = (delta / step).round() as usize;
        let step = delta / n as f64;
        let inner: f64 = (1..n).map(|i| f(t + step * i as f64)).sum();
        step * (0.5 * (f(t) + f(t + delta)) + inner)
    };
    let coarse = trap(h / 32.0);
    let fine = trap(h / 64.0);
    (4.0 * fine - coarse) / 3.0
}

/// Largest deviation of sampled chirp windows from the oracle, relative to the largest oracle value.
pub fn validate_chirp_windows(alpha: f64, beta: f64, averages: &FunctionTable, delta: f64, times: &[f64]) -> Result<f64> {
    let h = averages.grid().h();
    let mut max_dev = 0.0_f64;
    let mut scale = 0.0_f64;
    for &t in times {
        let oracle = chirp_window_oracle(alpha, beta, t, delta, h);
        max_dev = max_dev.max((averages.at_time(t)? - oracle).abs());
        scale = scale.max(oracle.abs());
    }
    Ok(if scale > 0.0 { max_dev / scale } else { max_dev })
}
