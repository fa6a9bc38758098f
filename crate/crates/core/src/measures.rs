//! Finite signed measures on `[-tau, 0]`: point masses plus a piecewise-constant density.

use crate::error::{Error, Result};
use crate::grid::{aligned_steps, Extension, FunctionTable, Grid};

const LOC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// Constant density `value` on `[left, right]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityPiece {
    pub left: f64,
    pub right: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSignedMeasure {
    tau: f64,
    atoms: Vec<Atom>,
    density: Vec<DensityPiece>,
}

impl FiniteSignedMeasure {
    pub fn new(tau: f64, atoms: Vec<Atom>, mut density: Vec<DensityPiece>) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidMeasure(format!("tau must be positive, got {tau}")));
        }
        let lo = -tau * (1.0 + LOC_TOL) - LOC_TOL;
        for a in &atoms {
            if !a.weight.is_finite() || !(lo..=LOC_TOL).contains(&a.location) {
                return Err(Error::InvalidMeasure(format!(
                    "atom ({}, {}) must lie in [-{tau}, 0] with finite weight",
                    a.location, a.weight
                )));
            }
        }
        density.sort_by(|a, b| a.left.total_cmp(&b.left));
        for p in &density {
            if !p.value.is_finite() || !(p.left < p.right) || p.left < lo || p.right > LOC_TOL {
                return Err(Error::InvalidMeasure(format!(
                    "density piece [{}, {}] must be a nonempty subinterval of [-{tau}, 0]",
                    p.left, p.right
                )));
            }
        }
        for w in density.windows(2) {
            if w[1].left < w[0].right - LOC_TOL {
                return Err(Error::InvalidMeasure(format!(
                    "density pieces [{}, {}] and [{}, {}] overlap",
                    w[0].left, w[0].right, w[1].left, w[1].right
                )));
            }
        }
        Ok(FiniteSignedMeasure { tau, atoms, density })
    }

    pub fn zero(tau: f64) -> Self {
        FiniteSignedMeasure { tau, atoms: Vec::new(), density: Vec::new() }
    }

    /// A single point mass.
    pub fn dirac(tau: f64, location: f64, weight: f64) -> Result<Self> {
        Self::new(tau, vec![Atom { location, weight }], Vec::new())
    }

    pub fn from_atoms(tau: f64, atoms: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            tau,
            atoms.iter().map(|&(location, weight)| Atom { location, weight }).collect(),
            Vec::new(),
        )
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> &[DensityPiece] {
        &self.density
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FiniteSignedMeasure {
            tau: self.tau,
            atoms: self.atoms.iter().map(|a| Atom { weight: a.weight * factor, ..*a }).collect(),
            density: self.density.iter().map(|p| DensityPiece { value: p.value * factor, ..*p }).collect(),
        }
    }

    /// `|m|([-tau, 0])`.
    pub fn total_variation(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.weight.abs()).sum();
        let dens: f64 = self.density.iter().map(|p| p.value.abs() * (p.right - p.left)).sum();
        atoms + dens
    }

    pub fn is_zero(&self) -> bool {
        self.total_variation() == 0.0
    }

    /// `m([-tau, 0])`.
    pub fn total_mass(&self) -> f64 {
        self.transform(0.0)
    }

    /// `∫ e^{λs} m(ds)`, with each density piece integrated exactly.
    pub fn transform(&self, lambda: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.weight * (lambda * a.location).exp()).sum();
        let dens: f64 = self
            .density
            .iter()
            .map(|p| {
                let len = p.right - p.left;
                if (lambda * len).abs() < 1e-8 {
                    // second-order expansion avoids cancellation
                    p.value * (lambda * p.left).exp() * len * (1.0 + 0.5 * lambda * len)
                } else {
                    p.value * ((lambda * p.right).exp() - (lambda * p.left).exp()) / lambda
                }
            })
            .sum();
        atoms + dens
    }

    /// Compiles the measure against `grid`; every atom and piece endpoint must be a node.
    pub fn discretize(&self, grid: &Grid) -> Result<DiscreteMeasure> {
        if (self.tau - grid.tau()).abs() > LOC_TOL * grid.tau().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "measure delay {} differs from grid delay {}",
                self.tau,
                grid.tau()
            )));
        }
        let h = grid.h();
        let lag_of = |x: f64, what: &str| -> Result<usize> {
            aligned_steps(-x, h)
                .map(|j| j.clamp(0, grid.lag() as i64) as usize)
                .ok_or_else(|| {
                    Error::InvalidMeasure(format!("{what} at {x} is not a multiple of h = {h}"))
                })
        };
        let mut atom_weights = vec![0.0; grid.lag() + 1];
        for a in &self.atoms {
            atom_weights[lag_of(a.location, "atom")?] += a.weight;
        }
        let mut cell_values = vec![0.0; grid.lag()];
        for p in &self.density {
            let near = lag_of(p.right, "density endpoint")?;
            let far = lag_of(p.left, "density endpoint")?;
            for c in cell_values.iter_mut().take(far).skip(near) {
                *c += p.value;
            }
        }
        Ok(DiscreteMeasure::from_parts(*grid, &atom_weights, &cell_values))
    }

    /// The reflected measure `m̃(E) = m(-E)` on `[0, tau]`.
    pub fn reflected(&self) -> ReflectedMeasure {
        ReflectedMeasure {
            atoms: self.atoms.iter().map(|a| Atom { location: -a.location, weight: a.weight }).collect(),
            density: self
                .density
                .iter()
                .map(|p| DensityPiece { left: -p.right, right: -p.left, value: p.value })
                .collect(),
        }
    }
}

/// A measure compiled to lag indices on a fixed grid.
///
/// Atom weights sit at lags `j` (location `-j h`); density cell `c` spans lags
/// `[c, c + 1]` and is integrated by the trapezoid rule.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    grid: Grid,
    atoms: Vec<(usize, f64)>,
    cells: Vec<(usize, f64)>,
}

impl DiscreteMeasure {
    fn from_parts(grid: Grid, atom_weights: &[f64], cell_values: &[f64]) -> Self {
        let nz = |v: &[f64]| v.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(j, w)| (j, *w)).collect();
        DiscreteMeasure { grid, atoms: nz(atom_weights), cells: nz(cell_values) }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn atoms(&self) -> &[(usize, f64)] {
        &self.atoms
    }

    pub fn cells(&self) -> &[(usize, f64)] {
        &self.cells
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.cells.is_empty()
    }

    pub fn atom_at(&self, lag: usize) -> f64 {
        self.atoms.iter().find(|(j, _)| *j == lag).map_or(0.0, |(_, w)| *w)
    }

    /// Coefficient multiplying `f(t)` itself: the atom at 0 plus half of the first density cell.
    pub fn diagonal(&self) -> f64 {
        let cell0 = self.cells.iter().find(|(c, _)| *c == 0).map_or(0.0, |(_, v)| *v);
        self.atom_at(0) + 0.5 * self.grid.h() * cell0
    }

    /// Trapezoid node weights `ω_j`, so that `∫ f(t+s) m(ds) ≈ Σ ω_j f(t - j h)` for continuous `f`.
    pub fn node_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.grid.lag() + 1];
        for &(j, a) in &self.atoms {
            w[j] += a;
        }
        let half = 0.5 * self.grid.h();
        for &(c, v) in &self.cells {
            w[c] += half * v;
            w[c + 1] += half * v;
        }
        w
    }

    /// Sparse form of [`node_weights`](Self::node_weights).
    pub fn sparse_node_weights(&self) -> Vec<(usize, f64)> {
        self.node_weights().into_iter().enumerate().filter(|(_, w)| *w != 0.0).collect()
    }

    /// `∫_{[-tau,0]} f(t_k + s) m(ds)` with the table's extension rule.
    ///
    /// Under zero extension, a density cell contributes only when both of its
    /// endpoints lie in the table's domain.
    pub fn convolve(&self, f: &FunctionTable, k: isize) -> Result<f64> {
        self.convolve_with(f, k, false)
    }

    /// Left limit in `t` of [`convolve`](Self::convolve) at node `k`.
    pub fn convolve_left(&self, f: &FunctionTable, k: isize) -> Result<f64> {
        self.convolve_with(f, k, true)
    }

    fn convolve_with(&self, f: &FunctionTable, k: isize, left: bool) -> Result<f64> {
        let mut acc = 0.0;
        for &(j, w) in &self.atoms {
            let i = k - j as isize;
            acc += w * if left { f.left_at(i)? } else { f.at(i)? };
        }
        let half = 0.5 * self.grid.h();
        let zero_ext = f.extension() == Extension::Zero;
        for &(c, v) in &self.cells {
            let hi = k - c as isize;
            let lo = hi - 1;
            if zero_ext && lo < f.start_index() {
                continue;
            }
            acc += half * v * (f.at(hi)? + f.at(lo)?);
        }
        Ok(acc)
    }
}

/// Measure on `[0, tau]` obtained by reflecting a measure on `[-tau, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectedMeasure {
    pub atoms: Vec<Atom>,
    pub density: Vec<DensityPiece>,
}

impl ReflectedMeasure {
    /// `∫_{[0, t]} f(t - s) m̃(ds)` for a table on `[0, T]`, with trapezoid density integration.
    pub fn convolve(&self, f: &FunctionTable, k: isize) -> Result<f64> {
        let grid = f.grid();
        let h = grid.h();
        let t = grid.time(k);
        let mut acc = 0.0;
        for a in &self.atoms {
            if a.location <= t + LOC_TOL {
                let s = aligned_steps(a.location, h)
                    .ok_or_else(|| Error::InvalidMeasure(format!("atom at {} is off-grid", a.location)))?;
                acc += a.weight * f.at(k - s as isize)?;
            }
        }
        for p in &self.density {
            let a = aligned_steps(p.left, h).ok_or_else(|| Error::InvalidMeasure("off-grid density".into()))?;
            let b = aligned_steps(p.right.min(t), h).unwrap_or(a).max(a);
            for s in a..b {
                acc += 0.5 * h * p.value * (f.at(k - s as isize)? + f.at(k - s as isize - 1)?);
            }
        }
        Ok(acc)
    }
}

/// `|m|([-tau, 0])`.
pub fn total_variation(m: &FiniteSignedMeasure) -> f64 {
    m.total_variation()
}

/// `∫ e^{λs} m(ds)`.
pub fn measure_transform(m: &FiniteSignedMeasure, lambda: f64) -> f64 {
    m.transform(lambda)
}

/// `(f ∗ m)(t_k) = ∫_{[-tau, 0]} f(t_k + s) m(ds)`.
pub fn convolve_measure(m: &FiniteSignedMeasure, f: &FunctionTable, t_index: isize) -> Result<f64> {
    m.discretize(f.grid())?.convolve(f, t_index)
}
