//! Deterministic Volterra equations for the mean square of the perturbed equation.
//!
//! With `x = x₀ + x₁` the deterministic solution and `k = G²(r_·)`:
//!
//! ```text
//! E[X²] = x² + Z,      Z = γ + k ∗ Z,      γ = r² ∗ (g + G(x_·))²,
//! E[Y²] = (g + G(x_·))² + k ∗ E[Y²],       Z = r² ∗ E[Y²] = γ + ρ ∗ γ.
//! ```

use crate::error::{Error, Result};
use crate::grid::{FunctionTable, Grid};
use crate::kernels::{diffusion_kernel, KernelTable, RhoTable};
use crate::measures::FiniteSignedMeasure;
use crate::par::{map_indexed, Execution};
use crate::quadrature::{convolve, volterra_march, KernelView};
use crate::resolvent::{forced_x1, homogeneous_x0, solve_resolvent, ResolventTable};

/// Drift and diffusion measures, deterministic forcings and a deterministic initial segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub nu: FiniteSignedMeasure,
    pub mu: FiniteSignedMeasure,
    pub f: FunctionTable,
    pub g: FunctionTable,
    pub psi: FunctionTable,
    pub grid: Grid,
}

impl ProblemInstance {
    pub fn new(
        nu: FiniteSignedMeasure,
        mu: FiniteSignedMeasure,
        f: FunctionTable,
        g: FunctionTable,
        psi: FunctionTable,
        grid: Grid,
    ) -> Result<Self> {
        nu.discretize(&grid)?;
        mu.discretize(&grid)?;
        for (name, t) in [("f", &f), ("g", &g)] {
            if !t.grid().same_mesh(&grid) || t.start_index() != 0 || t.len() != grid.len() {
                return Err(Error::GridMismatch(format!("{name} must be sampled on [0, T] of the instance grid")));
            }
        }
        if !psi.grid().same_mesh(&grid) || psi.start_index() != -(grid.lag() as isize) || psi.end_index() != 0 {
            return Err(Error::GridMismatch("psi must be sampled on [-tau, 0] of the instance grid".into()));
        }
        Ok(ProblemInstance { nu, mu, f, g, psi, grid })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanSquareSolution {
    pub ex2: FunctionTable,
    pub ey2: FunctionTable,
    pub z: FunctionTable,
    pub gamma: FunctionTable,
    pub x: FunctionTable,
    pub x0: FunctionTable,
    pub x1: FunctionTable,
    pub used_mu_zero_path: bool,
}

/// `(g(t) + G(x_t))²`, reading `x` from `ψ` before time 0.
pub fn forcing_square(inst: &ProblemInstance, x: &FunctionTable) -> Result<Vec<f64>> {
    let dm = inst.mu.discretize(&inst.grid)?;
    let extended = FunctionTable::concat_history(&inst.psi, x)?;
    let g = inst.g.values();
    let out: Vec<Result<f64>> = map_indexed(inst.grid.len(), Execution::Parallel, |k| {
        let y = g[k] + dm.convolve(&extended, k as isize)?;
        Ok(y * y)
    });
    out.into_iter().collect()
}

fn r_squared(r: &ResolventTable) -> Vec<f64> {
    r.values().iter().map(|v| v * v).collect()
}

/// `γ = r² ∗ (g + G(x_·))²`.
pub fn forcing_gamma(inst: &ProblemInstance, r: &ResolventTable, x: &FunctionTable) -> Result<FunctionTable> {
    let forcing = forcing_square(inst, x)?;
    let r2 = r_squared(r);
    let gamma = convolve(KernelView::continuous(&r2), &forcing, inst.grid.h(), Execution::Parallel);
    FunctionTable::on_horizon(inst.grid, gamma)
}

/// Solves `Z = γ + G²(r_·) ∗ Z`.
pub fn solve_z(gamma: &FunctionTable, k: &KernelTable, grid: &Grid) -> Result<FunctionTable> {
    if !gamma.grid().same_mesh(grid) || !k.grid().same_mesh(grid) {
        return Err(Error::GridMismatch("gamma, kernel and grid differ".into()));
    }
    let z = volterra_march(gamma.values(), k.sq_view(), grid.h())?;
    FunctionTable::on_horizon(*grid, z)
}

/// Runs the full pipeline from the instance alone.
pub fn mean_square(inst: &ProblemInstance) -> Result<MeanSquareSolution> {
    let r = solve_resolvent(&inst.nu, &inst.grid)?;
    let k = diffusion_kernel(&inst.mu, &r)?;
    mean_square_with(inst, &r, &k)
}

/// Mean square given a precomputed resolvent and kernel.
pub fn mean_square_with(inst: &ProblemInstance, r: &ResolventTable, k: &KernelTable) -> Result<MeanSquareSolution> {
    let grid = inst.grid;
    let x0 = homogeneous_x0(&inst.nu, &inst.psi, r, &grid)?;
    let x1 = forced_x1(r, &inst.f, &grid)?;
    let x = FunctionTable::on_horizon(grid, x0.values().iter().zip(x1.values()).map(|(a, b)| a + b).collect())?;
    let x_sq = x.values().iter().map(|v| v * v);

    if inst.mu.total_variation() == 0.0 {
        let g_sq: Vec<f64> = inst.g.values().iter().map(|v| v * v).collect();
        let r2 = r_squared(r);
        let z = convolve(KernelView::continuous(&r2), &g_sq, grid.h(), Execution::Parallel);
        let ex2 = x_sq.zip(&z).map(|(a, b)| a + b).collect();
        let z = FunctionTable::on_horizon(grid, z)?;
        return Ok(MeanSquareSolution {
            ex2: FunctionTable::on_horizon(grid, ex2)?,
            ey2: FunctionTable::on_horizon(grid, g_sq)?,
            gamma: z.clone(),
            z,
            x,
            x0,
            x1,
            used_mu_zero_path: true,
        });
    }

    let forcing = forcing_square(inst, &x)?;
    let r2 = r_squared(r);
    let gamma = convolve(KernelView::continuous(&r2), &forcing, grid.h(), Execution::Parallel);
    let z = volterra_march(&gamma, k.sq_view(), grid.h())?;
    let ey2 = volterra_march(&forcing, k.sq_view(), grid.h())?;
    let ex2 = x_sq.zip(&z).map(|(a, b)| a + b).collect();
    Ok(MeanSquareSolution {
        ex2: FunctionTable::on_horizon(grid, ex2)?,
        ey2: FunctionTable::on_horizon(grid, ey2)?,
        z: FunctionTable::on_horizon(grid, z)?,
        gamma: FunctionTable::on_horizon(grid, gamma)?,
        x,
        x0,
        x1,
        used_mu_zero_path: false,
    })
}

/// Agreement of the three discretized representations of `Z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    /// `max |Z − (γ + ρ ∗ γ)|`.
    pub renewal_deviation: f64,
    /// `max |Z − r² ∗ E[Y²]|`.
    pub direct_deviation: f64,
    /// `20 h² max|Z|`.
    pub tolerance: f64,
    pub pass: bool,
}

pub fn consistency_check(sol: &MeanSquareSolution, r: &ResolventTable, rho: &RhoTable) -> ConsistencyReport {
    let h = sol.z.grid().h();
    let gamma = sol.gamma.values();
    let z = sol.z.values();
    let rho_view = KernelView {
        right: rho.rho.values(),
        left: rho.rho.left_limits().unwrap_or(rho.rho.values()),
    };
    let via_rho = convolve(rho_view, gamma, h, Execution::Parallel);
    let r2 = r_squared(r);
    let via_y = convolve(KernelView::continuous(&r2), sol.ey2.values(), h, Execution::Parallel);
    let max_dev = |other: &mut dyn Iterator<Item = f64>| {
        z.iter().zip(other).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    };
    let renewal_deviation = max_dev(&mut gamma.iter().zip(&via_rho).map(|(g, c)| g + c));
    let direct_deviation = max_dev(&mut via_y.iter().copied());
    let tolerance = 20.0 * h * h * sol.z.max_abs();
    ConsistencyReport {
        renewal_deviation,
        direct_deviation,
        tolerance,
        pass: renewal_deviation <= tolerance && direct_deviation <= tolerance,
    }
}
