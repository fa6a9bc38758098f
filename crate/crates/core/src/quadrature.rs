//! Trapezoid convolution, second-kind Volterra marching and exponential tail fits.
//!
//! Kernels may jump at nodes. A kernel is passed as its node values `right`
//! together with its left limits `left`; for continuous kernels the two
//! coincide. The trapezoid rule on the cell `[s_i, s_{i+1}]` of
//! `∫_0^{t_n} k(t_n - s) y(s) ds` reads the kernel at `t_n - s_i` from the
//! left and at `t_n - s_{i+1}` from the right, which keeps the rule second
//! order on piecewise-smooth kernels.

use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};

/// Node values and left limits of a kernel on `[0, T]`.
#[derive(Debug, Clone, Copy)]
pub struct KernelView<'a> {
    pub right: &'a [f64],
    pub left: &'a [f64],
}

impl<'a> KernelView<'a> {
    pub fn continuous(values: &'a [f64]) -> Self {
        KernelView { right: values, left: values }
    }
}

/// `(k ∗ y)(t_n) = ∫_0^{t_n} k(t_n - s) y(s) ds` for every node.
pub fn convolve(kernel: KernelView<'_>, y: &[f64], h: f64, exec: Execution) -> Vec<f64> {
    let n = y.len().min(kernel.right.len());
    map_indexed(n, exec, |m| conv_at(kernel, y, h, m))
}

fn conv_at(kernel: KernelView<'_>, y: &[f64], h: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut acc = kernel.left[n] * y[0] + kernel.right[0] * y[n];
    for i in 1..n {
        acc += (kernel.left[n - i] + kernel.right[n - i]) * y[i];
    }
    0.5 * h * acc
}

/// Solves `y(t) = F(t) + (k ∗ y)(t)` by trapezoid marching, resolving the diagonal term exactly.
pub fn volterra_march(forcing: &[f64], kernel: KernelView<'_>, h: f64) -> Result<Vec<f64>> {
    let n = forcing.len();
    let pivot = 1.0 - 0.5 * h * kernel.right[0];
    if pivot <= 1e-12 {
        return Err(Error::StepSize { diagonal: kernel.right[0], pivot });
    }
    let both: Vec<f64> = kernel.left.iter().zip(kernel.right).map(|(l, r)| l + r).collect();
    let mut y = Vec::with_capacity(n);
    if n == 0 {
        return Ok(y);
    }
    y.push(forcing[0]);
    for m in 1..n {
        let mut acc = kernel.left[m] * y[0];
        for i in 1..m {
            acc += both[m - i] * y[i];
        }
        y.push((forcing[m] + 0.5 * h * acc) / pivot);
    }
    Ok(y)
}

/// Composite trapezoid integral over all nodes, honouring left limits when given.
pub fn trapezoid(values: &[f64], left: Option<&[f64]>, h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let left = left.unwrap_or(values);
    let sum: f64 = (0..values.len() - 1).map(|i| values[i] + left[i + 1]).sum();
    0.5 * h * sum
}

/// Running trapezoid integral `∫_0^{t_k}`, starting from zero.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out.truncate(values.len());
    out
}

/// Least-squares line through `(t, ln|v|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Fits `ln|v|` against `t` over `first..values.len()`, skipping entries with `|v| < floor`.
///
/// Returns `None` when fewer than two entries survive.
pub fn fit_log_slope(values: &[f64], h: f64, t0: f64, first: usize, floor: f64) -> Option<LogLinearFit> {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .skip(first)
        .filter(|(_, v)| v.abs() >= floor && v.is_finite())
        .map(|(i, v)| (t0 + i as f64 * h, v.abs().ln()))
        .collect();
    line_fit(&pts).map(|(slope, intercept)| LogLinearFit { slope, intercept, points: pts.len() })
}

/// Ordinary least-squares slope and intercept.
pub fn line_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// First index of the final quarter of a table with `len` entries.
pub fn last_quarter_start(len: usize) -> usize {
    (3 * len) / 4
}

/// Integral of a nonnegative integrand beyond the horizon, from an exponential fit of its final quarter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    /// `∫_T^∞`, zero when the integrand decays below the floor or does not decay.
    pub value: f64,
    /// Fitted log-slope of the integrand, if any points were above the floor.
    pub slope: Option<f64>,
    /// The integrand does not decay over the fit window.
    pub diverging: bool,
}

pub fn exponential_tail(integrand: &[f64], h: f64, floor: f64) -> TailEstimate {
    let first = last_quarter_start(integrand.len());
    match fit_log_slope(integrand, h, 0.0, first, floor) {
        None => TailEstimate { value: 0.0, slope: None, diverging: false },
        Some(fit) if fit.slope < 0.0 => {
            let last = *integrand.last().unwrap_or(&0.0);
            TailEstimate { value: last.abs() / -fit.slope, slope: Some(fit.slope), diverging: false }
        }
        Some(fit) => TailEstimate { value: 0.0, slope: Some(fit.slope), diverging: true },
    }
}
