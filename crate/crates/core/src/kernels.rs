//! Diffusion kernel `G(r_t)`, its exponential transform `Γ`, the critical
//! rate `α′` with `Γ(α′) = 1`, and the renewal resolvent `ρ = G² + G² ∗ ρ`.

use crate::error::{Error, Result};
use crate::grid::{FunctionTable, Grid};
use crate::measures::FiniteSignedMeasure;
use crate::par::{map_indexed, Execution};
use crate::quadrature::{exponential_tail, trapezoid, volterra_march, KernelView, TailEstimate};
use crate::resolvent::ResolventTable;

/// Squared quantities below this are ignored by tail fits.
pub const SQUARED_FLOOR: f64 = 1e-28;
/// Renewal values below `-RHO_CLAMP` are treated as scheme failure and clamped.
pub const RHO_CLAMP: f64 = 1e-12;
pub const GAMMA_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    /// `G(r_t)` on `[0, T]`, with left limits where atoms of `μ` meet the jump of `r` at 0.
    pub g: FunctionTable,
    pub g_sq: FunctionTable,
    pub l2_norm_sq_truncated: f64,
    pub l2_tail_estimate: f64,
    /// Truncated integral plus tail estimate.
    pub l2_norm_sq: f64,
    /// Log-slope of `G²` over the final quarter, if any entry was above the floor.
    pub tail_slope: Option<f64>,
    /// `G²` does not decay over the final quarter; the tail was not added.
    pub divergent: bool,
}

impl KernelTable {
    pub fn grid(&self) -> &Grid {
        self.g.grid()
    }

    pub fn is_trivial(&self) -> bool {
        self.g.values().iter().all(|&v| v == 0.0)
    }

    pub(crate) fn sq_view(&self) -> KernelView<'_> {
        KernelView { right: self.g_sq.values(), left: self.g_sq.left_limits().unwrap_or(self.g_sq.values()) }
    }
}

pub fn diffusion_kernel(mu: &FiniteSignedMeasure, r: &ResolventTable) -> Result<KernelTable> {
    diffusion_kernel_with(mu, r, Execution::Parallel)
}

pub fn diffusion_kernel_with(mu: &FiniteSignedMeasure, r: &ResolventTable, exec: Execution) -> Result<KernelTable> {
    let grid = *r.grid();
    let dm = mu.discretize(&grid)?;
    let pairs: Vec<Result<(f64, f64)>> = map_indexed(grid.len(), exec, |k| {
        let k = k as isize;
        let right = dm.convolve(&r.r, k)?;
        let left = if k == 0 { right } else { dm.convolve_left(&r.r, k)? };
        Ok((right, left))
    });
    let (g, g_left): (Vec<f64>, Vec<f64>) = pairs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<f64>>();
    let (g_sq, g_sq_left) = (sq(&g), sq(&g_left));
    let h = grid.h();
    let truncated = trapezoid(&g_sq, Some(&g_sq_left), h);
    let tail = exponential_tail(&g_sq, h, SQUARED_FLOOR);
    Ok(KernelTable {
        g: FunctionTable::on_horizon(grid, g)?.with_left_limits(g_left)?,
        g_sq: FunctionTable::on_horizon(grid, g_sq)?.with_left_limits(g_sq_left)?,
        l2_norm_sq_truncated: truncated,
        l2_tail_estimate: tail.value,
        l2_norm_sq: truncated + tail.value,
        tail_slope: tail.slope,
        divergent: tail.diverging,
    })
}

/// An integral over `[0, ∞)` estimated from `[0, T]` plus an exponential tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailedIntegral {
    pub value: f64,
    pub truncated: f64,
    pub tail: f64,
    /// The weighted integrand does not decay over the final quarter.
    pub diverging: bool,
}

fn exp_weighted_integral(values: &[f64], left: &[f64], h: f64, rate: f64) -> TailedIntegral {
    let w = |i: usize| (rate * i as f64 * h).exp();
    let weighted: Vec<f64> = values.iter().enumerate().map(|(i, v)| w(i) * v).collect();
    let weighted_left: Vec<f64> = left.iter().enumerate().map(|(i, v)| w(i) * v).collect();
    let truncated = trapezoid(&weighted, Some(&weighted_left), h);
    let TailEstimate { value, diverging, .. } = exponential_tail(&weighted, h, SQUARED_FLOOR);
    TailedIntegral { value: truncated + value, truncated, tail: value, diverging }
}

/// `Γ(λ) = ∫_0^∞ e^{2λs} G²(r_s) ds`.
pub fn gamma_transform(k: &KernelTable, lambda: f64) -> TailedIntegral {
    let view = k.sq_view();
    exp_weighted_integral(view.right, view.left, k.grid().h(), 2.0 * lambda)
}

/// The unique `α′ > 0` with `Γ(α′) = 1`, for a kernel with `0 < Γ(0) < 1`.
pub fn critical_rate(k: &KernelTable) -> Result<f64> {
    let g0 = gamma_transform(k, 0.0);
    if g0.value == 0.0 {
        return Err(Error::Precondition(
            "trivial kernel: Γ(0) = 0, use the explicit μ ≡ 0 mean square".into(),
        ));
    }
    if g0.diverging || g0.value >= 1.0 {
        return Err(Error::Precondition(format!("kernel not subcritical: Γ(0) = {}", g0.value)));
    }
    let decay = match k.tail_slope {
        Some(s) if s < 0.0 => -s / 2.0,
        _ => 1.0,
    };
    let cap = 1024.0 * decay;
    let exceeds = |l: f64| {
        let g = gamma_transform(k, l);
        (g.diverging || g.value > 1.0, g.value)
    };
    let mut lo = 0.0;
    let mut hi = decay / 1024.0;
    loop {
        let (over, _) = exceeds(hi);
        if over {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > cap {
            return Err(Error::Precondition(format!("Γ stays below 1 up to λ = {cap}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (over, value) = exceeds(mid);
        if !over && (value - 1.0).abs() < GAMMA_TOLERANCE {
            return Ok(mid);
        }
        if over {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoTable {
    /// `ρ` on `[0, T]` with left limits inherited from the kernel.
    pub rho: FunctionTable,
    pub l1_norm_truncated: f64,
    /// Nodes where the march went below `-RHO_CLAMP` and were reset to zero.
    pub clamped_nodes: usize,
}

/// Solves `ρ = G²(r_·) + G²(r_·) ∗ ρ` by trapezoid marching.
pub fn renewal_rho(k: &KernelTable, grid: &Grid) -> Result<RhoTable> {
    if !k.grid().same_mesh(grid) {
        return Err(Error::GridMismatch("kernel and grid differ".into()));
    }
    let view = k.sq_view();
    let mut rho = volterra_march(view.right, view, grid.h())?;
    let mut clamped = 0;
    for v in rho.iter_mut() {
        if *v < -RHO_CLAMP {
            *v = 0.0;
            clamped += 1;
        }
    }
    let left: Vec<f64> = rho.iter().zip(view.right.iter().zip(view.left)).map(|(p, (kr, kl))| p - kr + kl).collect();
    let l1 = trapezoid(&rho, Some(&left), grid.h());
    Ok(RhoTable {
        rho: FunctionTable::on_horizon(*grid, rho)?.with_left_limits(left)?,
        l1_norm_truncated: l1,
        clamped_nodes: clamped,
    })
}

/// `∫_0^∞ e^{2εs} ρ(s) ds`, with a divergence flag when the weighted integrand grows.
pub fn exp_weighted_rho_integral(rho: &RhoTable, eps: f64) -> TailedIntegral {
    let right = rho.rho.values();
    let left = rho.rho.left_limits().unwrap_or(right);
    exp_weighted_integral(right, left, rho.rho.grid().h(), 2.0 * eps)
}
