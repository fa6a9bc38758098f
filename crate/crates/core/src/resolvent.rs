//! Differential resolvent of the deterministic delay equation and the
//! deterministic solution components built from it.

use crate::error::{Error, Result};
use crate::grid::{FunctionTable, Grid};
use crate::measures::{DiscreteMeasure, FiniteSignedMeasure};
use crate::par::{map_indexed, Execution};
use crate::quadrature::{self, fit_log_slope, last_quarter_start, line_fit, KernelView};

/// Entries with smaller magnitude are ignored by the decay fit.
pub const DECAY_FIT_FLOOR: f64 = 1e-14;

/// Resolvent `r` on `[0, T]` with zero extension, plus its fitted decay rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventTable {
    pub r: FunctionTable,
    /// Least-squares slope of `ln|r|` over the fit window; `None` when every entry is below the floor.
    pub fitted_decay_rate: Option<f64>,
    /// Node range `[start, end]` of the fit window.
    pub fit_window: (usize, usize),
}

impl ResolventTable {
    pub fn grid(&self) -> &Grid {
        self.r.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.r.values()
    }
}

/// Marches `r(t) = 1 + ∫_0^t (r ∗ ν)(s) ds` with the trapezoid rule.
///
/// The integrand jumps wherever an atom of `ν` crosses the jump of `r` at 0,
/// so the right endpoint of each step uses the left limit there. The implicit
/// dependence through the atom at 0 and the first density cell is solved exactly.
pub fn solve_resolvent(nu: &FiniteSignedMeasure, grid: &Grid) -> Result<ResolventTable> {
    let dm = nu.discretize(grid)?;
    let h = grid.h();
    let diag = dm.diagonal();
    let pivot = 1.0 - 0.5 * h * diag;
    if pivot <= 1e-12 {
        return Err(Error::StepSize { diagonal: diag, pivot });
    }
    let n = grid.len();
    let mut r = vec![0.0; n];
    r[0] = 1.0;
    let mut phi = lag_sum(&dm, &r, 0, false);
    for k in 0..n - 1 {
        // r[k + 1] is still zero here, so this is the explicit part of the left limit.
        let explicit = lag_sum(&dm, &r, k + 1, true);
        r[k + 1] = (r[k] + 0.5 * h * (phi + explicit)) / pivot;
        phi = lag_sum(&dm, &r, k + 1, false);
    }
    let table = FunctionTable::on_horizon(*grid, r)?;
    Ok(with_decay_fit(table))
}

/// Fits `ln|r|` over the final quarter.
///
/// When `r` changes sign there, only the local maxima of `|r|` enter the fit,
/// widening the window to the final half if fewer than two are found.
fn with_decay_fit(r: FunctionTable) -> ResolventTable {
    let v = r.values();
    let h = r.grid().h();
    let last = v.len() - 1;
    let mut first = last_quarter_start(v.len());
    let oscillates = |from: usize| v[from..].windows(2).any(|w| w[0] * w[1] < 0.0);
    let peaks = |from: usize| -> Vec<(f64, f64)> {
        (from.max(1)..last)
            .filter(|&i| v[i].abs() >= v[i - 1].abs() && v[i].abs() > v[i + 1].abs() && v[i].abs() >= DECAY_FIT_FLOOR)
            .map(|i| (i as f64 * h, v[i].abs().ln()))
            .collect()
    };
    let slope = if oscillates(first) {
        let mut pts = peaks(first);
        if pts.len() < 2 {
            first = v.len() / 2;
            pts = peaks(first);
        }
        line_fit(&pts).map(|p| p.0)
    } else {
        None
    };
    let slope = slope.or_else(|| fit_log_slope(v, h, 0.0, first, DECAY_FIT_FLOOR).map(|f| f.slope));
    ResolventTable { r, fitted_decay_rate: slope, fit_window: (first, last) }
}

/// `(r ∗ ν)(t_k)` for a zero-extended sequence, optionally as a left limit in `t`.
fn lag_sum(dm: &DiscreteMeasure, r: &[f64], k: usize, left: bool) -> f64 {
    let read = |i: isize| -> f64 {
        if i < 0 || (left && i == 0) {
            0.0
        } else {
            r[i as usize]
        }
    };
    let k = k as isize;
    let mut acc = 0.0;
    for &(j, w) in dm.atoms() {
        acc += w * read(k - j as isize);
    }
    let half = 0.5 * dm.grid().h();
    for &(c, v) in dm.cells() {
        let hi = k - c as isize;
        if hi >= 1 {
            acc += half * v * (read(hi) + r[(hi - 1) as usize]);
        }
    }
    acc
}

/// `h(λ) = λ − ν̂(λ)`.
pub fn characteristic_h(nu: &FiniteSignedMeasure, lambda: f64) -> f64 {
    lambda - nu.transform(lambda)
}

/// Rightmost real zero of `h` in `[lo, hi]`, located by a downward scan and bisection.
pub fn rightmost_real_root(nu: &FiniteSignedMeasure, lo: f64, hi: f64) -> Option<f64> {
    const SAMPLES: usize = 4096;
    let hf = |l: f64| characteristic_h(nu, l);
    let step = (hi - lo) / SAMPLES as f64;
    let mut b = hi;
    let mut fb = hf(b);
    if fb == 0.0 {
        return Some(b);
    }
    for i in 1..=SAMPLES {
        let a = hi - step * i as f64;
        let fa = hf(a);
        if fa == 0.0 {
            return Some(a);
        }
        if fa.signum() != fb.signum() {
            let (mut a, mut b, fa0) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let fm = hf(mid);
                if fm == 0.0 {
                    return Some(mid);
                }
                if fm.signum() == fa0.signum() {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return Some(0.5 * (a + b));
        }
        b = a;
        fb = fa;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayFit {
    Rate(f64),
    /// Every entry of the fit window is below the numerical floor.
    BelowFloor,
}

impl DecayFit {
    pub fn rate(&self) -> Option<f64> {
        match self {
            DecayFit::Rate(r) => Some(*r),
            DecayFit::BelowFloor => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityMethod {
    DecayFit,
    /// Decay fit whose verdict is also supported by the sign of a real characteristic root.
    DecayFitAndRealRoot,
}

impl StabilityMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            StabilityMethod::DecayFit => "decay-fit",
            StabilityMethod::DecayFitAndRealRoot => "decay-fit+real-root",
        }
    }
}

/// Evidence about `v₀(ν)`; verdicts are estimates, not certificates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicReport {
    pub real_root: Option<f64>,
    pub decay_fit: DecayFit,
    pub verdict_stable: bool,
    pub method: StabilityMethod,
}

pub fn estimate_v0(nu: &FiniteSignedMeasure, r: &ResolventTable, bracket: (f64, f64)) -> CharacteristicReport {
    let real_root = rightmost_real_root(nu, bracket.0, bracket.1);
    let decay_fit = match r.fitted_decay_rate {
        Some(rate) => DecayFit::Rate(rate),
        None => DecayFit::BelowFloor,
    };
    let verdict_stable = match decay_fit {
        DecayFit::Rate(rate) => rate < 0.0,
        DecayFit::BelowFloor => true,
    };
    let method = match real_root {
        Some(root) if (root < 0.0) == verdict_stable => StabilityMethod::DecayFitAndRealRoot,
        _ => StabilityMethod::DecayFit,
    };
    CharacteristicReport { real_root, decay_fit, verdict_stable, method }
}

fn psi_by_lag(psi: &FunctionTable, grid: &Grid) -> Result<Vec<f64>> {
    if !psi.grid().same_mesh(grid) {
        return Err(Error::GridMismatch("initial segment uses a different grid".into()));
    }
    (0..=grid.lag()).map(|i| psi.at(-(i as isize))).collect()
}

/// `x₀(t) = r(t)ψ(0) + ∫ (∫_s^0 r(t+s−u)ψ(u) du) ν(ds)` with trapezoid inner quadrature.
///
/// The inner integral is truncated where `r` vanishes, i.e. at `u = t + s`.
/// Regrouping the double sum by `m = j − i` turns it into one lag sum per node.
pub fn x0_variation_of_constants(
    nu: &FiniteSignedMeasure,
    psi: &FunctionTable,
    r: &ResolventTable,
    grid: &Grid,
) -> Result<FunctionTable> {
    let omega = nu.discretize(grid)?.node_weights();
    let psi_lag = psi_by_lag(psi, grid)?;
    let rv = r.values();
    let lag = grid.lag();
    let h = grid.h();
    // c[m] = Σ_{j ≥ m} ω_j ψ(−(j − m)h)
    let nz: Vec<(usize, f64)> = omega.iter().copied().enumerate().filter(|(_, w)| *w != 0.0).collect();
    let mut c = vec![0.0; lag + 1];
    for &(j, w) in &nz {
        for m in 0..=j {
            c[m] += w * psi_lag[j - m];
        }
    }
    let omega_psi: f64 = nz.iter().map(|&(j, w)| w * psi_lag[j]).sum();
    let values = map_indexed(grid.len(), Execution::Parallel, |k| {
        let full: f64 = (0..=k.min(lag)).map(|m| rv[k - m] * c[m]).sum();
        let mut ends = rv[k] * omega_psi;
        for &(j, w) in &nz {
            ends += if j <= k { w * rv[k - j] * psi_lag[0] } else { w * rv[0] * psi_lag[j - k] };
        }
        rv[k] * psi_lag[0] + h * (full - 0.5 * ends)
    });
    FunctionTable::on_horizon(*grid, values)
}

/// Marches `x₀′(t) = ∫ x₀(t+u) ν(du)`, `x₀ = ψ` on `[−τ, 0]`, with the implicit trapezoid rule.
pub fn x0_direct_march(nu: &FiniteSignedMeasure, psi: &FunctionTable, grid: &Grid) -> Result<FunctionTable> {
    let weights = nu.discretize(grid)?.sparse_node_weights();
    let psi_lag = psi_by_lag(psi, grid)?;
    let lag = grid.lag();
    let h = grid.h();
    let diag = weights.iter().find(|(j, _)| *j == 0).map_or(0.0, |(_, w)| *w);
    let pivot = 1.0 - 0.5 * h * diag;
    if pivot <= 1e-12 {
        return Err(Error::StepSize { diagonal: diag, pivot });
    }
    // full[i] holds x at node i − lag.
    let mut full: Vec<f64> = psi_lag.iter().rev().copied().collect();
    full.reserve(grid.steps());
    let drift = |full: &[f64], k: usize| -> f64 { weights.iter().map(|&(j, w)| w * full[k + lag - j]).sum() };
    let mut phi = drift(&full, 0);
    for k in 0..grid.steps() {
        full.push(0.0);
        let explicit = drift(&full, k + 1);
        let next = (full[k + lag] + 0.5 * h * (phi + explicit)) / pivot;
        full[k + 1 + lag] = next;
        phi = drift(&full, k + 1);
    }
    FunctionTable::on_horizon(*grid, full.split_off(lag))
}

/// Agreement between the two constructions of `x₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct X0Agreement {
    pub max_deviation: f64,
    pub tolerance: f64,
    /// Step-halving estimate of the marching error, when the grid can be coarsened.
    pub halving_estimate: Option<f64>,
}

/// Deviation between the variation-of-constants and marched `x₀`, with the
/// allowed tolerance `10·max(halving estimate, h²·scale)`.
pub fn x0_agreement(
    nu: &FiniteSignedMeasure,
    psi: &FunctionTable,
    voc: &FunctionTable,
    march: &FunctionTable,
    grid: &Grid,
) -> X0Agreement {
    let max_deviation = voc
        .values()
        .iter()
        .zip(march.values())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let halving_estimate = grid.coarsened().and_then(|coarse| {
        let psi_coarse = FunctionTable::on_history(
            coarse,
            (0..=coarse.lag()).rev().map(|i| psi.at(-2 * i as isize)).collect::<Result<Vec<_>>>().ok()?,
        )
        .ok()?;
        let xc = x0_direct_march(nu, &psi_coarse, &coarse).ok()?;
        let diff = xc
            .values()
            .iter()
            .enumerate()
            .fold(0.0_f64, |m, (k, v)| m.max((v - march.values()[2 * k]).abs()));
        Some(diff / 3.0)
    });
    let scale = march.max_abs().max(psi.max_abs());
    let h2 = grid.h() * grid.h() * scale;
    let tolerance = 10.0 * halving_estimate.unwrap_or(0.0).max(h2) + 1e-12 * scale;
    X0Agreement { max_deviation, tolerance, halving_estimate }
}

/// Homogeneous solution by variation of constants, cross-checked against direct marching.
pub fn homogeneous_x0(
    nu: &FiniteSignedMeasure,
    psi: &FunctionTable,
    r: &ResolventTable,
    grid: &Grid,
) -> Result<FunctionTable> {
    let voc = x0_variation_of_constants(nu, psi, r, grid)?;
    let march = x0_direct_march(nu, psi, grid)?;
    let check = x0_agreement(nu, psi, &voc, &march, grid);
    if check.max_deviation > check.tolerance {
        return Err(Error::Consistency(format!(
            "variation-of-constants x0 deviates from marched x0 by {:.3e} (tolerance {:.3e})",
            check.max_deviation, check.tolerance
        )));
    }
    Ok(voc)
}

/// `x₁ = r ∗ f` on `[0, T]`.
pub fn forced_x1(r: &ResolventTable, f: &FunctionTable, grid: &Grid) -> Result<FunctionTable> {
    forced_x1_with(r, f, grid, Execution::Parallel)
}

pub fn forced_x1_with(r: &ResolventTable, f: &FunctionTable, grid: &Grid, exec: Execution) -> Result<FunctionTable> {
    if f.start_index() != 0 || f.len() != grid.len() || !f.grid().same_mesh(grid) {
        return Err(Error::GridMismatch("forcing must be sampled on [0, T] of the resolvent grid".into()));
    }
    let values = quadrature::convolve(KernelView::continuous(r.values()), f.values(), grid.h(), exec);
    FunctionTable::on_horizon(*grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: f64, t: f64) -> Grid {
        Grid::new(h, t, 1.0).unwrap()
    }

    #[test]
    fn zero_measure_gives_unit_resolvent() {
        let g = grid(0.01, 3.0);
        let r = solve_resolvent(&FiniteSignedMeasure::zero(1.0), &g).unwrap();
        assert!(r.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ode_resolvent_is_exponential() {
        let g = grid(1e-3, 2.0);
        let nu = FiniteSignedMeasure::dirac(1.0, 0.0, -1.0).unwrap();
        let r = solve_resolvent(&nu, &g).unwrap();
        assert_eq!(r.values()[0], 1.0);
        let r1 = r.r.at_time(1.0).unwrap();
        assert!((r1 - 0.36787944117144233).abs() < 1e-6, "{r1}");
    }

    #[test]
    fn pure_delay_resolvent_by_method_of_steps() {
        let g = grid(1e-3, 3.0);
        let nu = FiniteSignedMeasure::dirac(1.0, -1.0, -1.0).unwrap();
        let r = solve_resolvent(&nu, &g).unwrap();
        for k in 0..=1000 {
            assert!((r.values()[k] - 1.0).abs() < 1e-12);
        }
        for k in 1000..=2000 {
            let t = g.time(k as isize);
            assert!((r.values()[k] - (2.0 - t)).abs() < 1e-10);
        }
        assert!((r.r.at_time(3.0).unwrap() + 0.5).abs() < 1e-9);
    }

    #[test]
    fn singular_step_is_rejected() {
        let g = grid(0.5, 2.0);
        let nu = FiniteSignedMeasure::dirac(1.0, 0.0, 4.0).unwrap();
        assert!(matches!(solve_resolvent(&nu, &g), Err(Error::StepSize { .. })));
    }

    #[test]
    fn characteristic_examples() {
        let a = 2.5;
        let nu = FiniteSignedMeasure::dirac(1.0, 0.0, -a).unwrap();
        assert_eq!(characteristic_h(&nu, 0.75), 0.75 + a);
        let nu = FiniteSignedMeasure::dirac(1.0, 0.0, -1.0).unwrap();
        assert_eq!(characteristic_h(&nu, -1.0), 0.0);
        assert_eq!(characteristic_h(&FiniteSignedMeasure::zero(1.0), 0.3), 0.3);
    }

    #[test]
    fn v0_examples() {
        let g = grid(1e-2, 20.0);
        let nu = FiniteSignedMeasure::dirac(1.0, 0.0, -1.0).unwrap();
        let r = solve_resolvent(&nu, &g).unwrap();
        let rep = estimate_v0(&nu, &r, (-10.0, 10.0));
        assert!((rep.real_root.unwrap() + 1.0).abs() < 1e-10);
        assert!((rep.decay_fit.rate().unwrap() + 1.0).abs() < 1e-4);
        assert!(rep.verdict_stable);
        assert_eq!(rep.method, StabilityMethod::DecayFitAndRealRoot);

        let nu = FiniteSignedMeasure::dirac(1.0, 0.0, 1.0).unwrap();
        let r = solve_resolvent(&nu, &g).unwrap();
        let rep = estimate_v0(&nu, &r, (-10.0, 10.0));
        assert!((rep.real_root.unwrap() - 1.0).abs() < 1e-10);
        assert!(!rep.verdict_stable);
    }

    #[test]
    fn pure_delay_decay_fit_tracks_complex_roots() {
        let g = grid(1e-2, 40.0);
        let nu = FiniteSignedMeasure::dirac(1.0, -1.0, -1.0).unwrap();
        let r = solve_resolvent(&nu, &g).unwrap();
        let rep = estimate_v0(&nu, &r, (-10.0, 10.0));
        assert!(rep.verdict_stable);
        assert!(rep.real_root.is_none());
        assert!((rep.decay_fit.rate().unwrap() + 0.31813).abs() < 5e-3, "{:?}", rep.decay_fit);
    }

    #[test]
    fn v0_below_floor_counts_as_stable() {
        let g = grid(1e-2, 60.0);
        let nu = FiniteSignedMeasure::dirac(1.0, 0.0, -2.0).unwrap();
        let r = solve_resolvent(&nu, &g).unwrap();
        let rep = estimate_v0(&nu, &r, (-10.0, 10.0));
        assert_eq!(rep.decay_fit, DecayFit::BelowFloor);
        assert!(rep.verdict_stable);
    }

    #[test]
    fn x0_examples() {
        let g = grid(1e-3, 3.0);
        let zero_psi = FunctionTable::history_fn(g, |_| 0.0);
        let ones = FunctionTable::history_fn(g, |_| 1.0);

        let nu = FiniteSignedMeasure::dirac(1.0, 0.0, -1.0).unwrap();
        let r = solve_resolvent(&nu, &g).unwrap();
        let x0 = homogeneous_x0(&nu, &zero_psi, &r, &g).unwrap();
        assert!(x0.values().iter().all(|&v| v == 0.0));
        let x0 = homogeneous_x0(&nu, &ones, &r, &g).unwrap();
        for (t, v) in x0.times().zip(x0.values()) {
            assert!((v - (-t).exp()).abs() < 1e-6);
        }

        let nu = FiniteSignedMeasure::dirac(1.0, -1.0, -1.0).unwrap();
        let r = solve_resolvent(&nu, &g).unwrap();
        let x0 = homogeneous_x0(&nu, &ones, &r, &g).unwrap();
        for k in 0..=1000 {
            let t = g.time(k);
            assert!((x0.at(k).unwrap() - (1.0 - t)).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn x1_examples() {
        let g = grid(1e-3, 3.0);
        let nu = FiniteSignedMeasure::dirac(1.0, 0.0, -1.0).unwrap();
        let r = solve_resolvent(&nu, &g).unwrap();
        let zero = FunctionTable::horizon_fn(g, |_| 0.0);
        assert!(forced_x1(&r, &zero, &g).unwrap().values().iter().all(|&v| v == 0.0));
        let one = FunctionTable::horizon_fn(g, |_| 1.0);
        let x1 = forced_x1(&r, &one, &g).unwrap();
        for (t, v) in x1.times().zip(x1.values()) {
            assert!((v - (1.0 - (-t).exp())).abs() < 1e-6);
        }
        let decay = FunctionTable::horizon_fn(g, |t| (-t).exp());
        let x1 = forced_x1(&r, &decay, &g).unwrap();
        for (t, v) in x1.times().zip(x1.values()) {
            assert!((v - t * (-t).exp()).abs() < 1e-6);
        }
    }
}
