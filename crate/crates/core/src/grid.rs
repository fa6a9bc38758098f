//! Uniform time mesh and sampled functions on it.

use crate::error::{Error, Result};

const ALIGN_TOL: f64 = 1e-9;

/// Returns `x / h` as an integer when `x` is a grid multiple of `h`.
pub fn aligned_steps(x: f64, h: f64) -> Option<i64> {
    let ratio = x / h;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= ALIGN_TOL * rounded.abs().max(1.0) {
        Some(rounded as i64)
    } else {
        None
    }
}

/// Uniform mesh with step `h` on `[-tau, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    h: f64,
    horizon: f64,
    tau: f64,
    steps: usize,
    lag: usize,
}

impl Grid {
    pub fn new(h: f64, horizon: f64, tau: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidGrid(format!("step h must be positive, got {h}")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidGrid(format!("delay tau must be positive, got {tau}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon T must be positive, got {horizon}")));
        }
        let steps = aligned_steps(horizon, h).ok_or_else(|| {
            Error::InvalidGrid(format!("T/h = {} is not an integer", horizon / h))
        })?;
        let lag = aligned_steps(tau, h)
            .ok_or_else(|| Error::InvalidGrid(format!("tau/h = {} is not an integer", tau / h)))?;
        Ok(Grid { h, horizon, tau, steps: steps as usize, lag: lag as usize })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of steps covering `[0, T]`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes on `[0, T]`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of steps covering the delay window `[-tau, 0]`.
    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn time(&self, index: isize) -> f64 {
        index as f64 * self.h
    }

    /// Node index of `t`, which must be grid-aligned and within `[-tau, T]`.
    pub fn index_of(&self, t: f64) -> Result<isize> {
        let k = aligned_steps(t, self.h)
            .ok_or_else(|| Error::InvalidArgument(format!("time {t} is not a grid node")))?;
        if k < -(self.lag as i64) || k > self.steps as i64 {
            return Err(Error::InvalidArgument(format!("time {t} outside [-tau, T]")));
        }
        Ok(k as isize)
    }

    /// The same horizon and delay with half the step.
    pub fn refined(&self) -> Grid {
        Grid { h: self.h / 2.0, steps: self.steps * 2, lag: self.lag * 2, ..*self }
    }

    /// The same horizon and delay with twice the step, if every node count stays integral.
    pub fn coarsened(&self) -> Option<Grid> {
        if self.steps % 2 == 0 && self.lag % 2 == 0 {
            Some(Grid { h: self.h * 2.0, steps: self.steps / 2, lag: self.lag / 2, ..*self })
        } else {
            None
        }
    }

    pub fn same_mesh(&self, other: &Grid) -> bool {
        self.steps == other.steps
            && self.lag == other.lag
            && (self.h - other.h).abs() <= 1e-12 * self.h
    }
}

/// How a table is read before its first node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    /// Zero for every index before the start; the left limit at the start node is also zero.
    Zero,
    /// Reads before the start are domain errors.
    Strict,
}

/// A real function sampled on grid nodes `start_index ..= start_index + len - 1`.
///
/// Functions with jumps at nodes can carry left limits alongside the
/// (right-continuous) node values.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionTable {
    grid: Grid,
    start_index: isize,
    values: Vec<f64>,
    left_limits: Option<Vec<f64>>,
    extension: Extension,
}

impl FunctionTable {
    pub fn new(grid: Grid, start_index: isize, values: Vec<f64>, extension: Extension) -> Result<Self> {
        let end = start_index + values.len() as isize - 1;
        if start_index < -(grid.lag() as isize) || end > grid.steps() as isize || values.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "table nodes [{start_index}, {end}] do not fit the grid [-{}, {}]",
                grid.lag(),
                grid.steps()
            )));
        }
        Ok(FunctionTable { grid, start_index, values, left_limits: None, extension })
    }

    /// A table on `[0, T]`, zero before `t = 0`.
    pub fn on_horizon(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values on [0, T], got {}",
                grid.len(),
                values.len()
            )));
        }
        Self::new(grid, 0, values, Extension::Zero)
    }

    /// A table on `[-tau, 0]`.
    pub fn on_history(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.lag() + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} values on [-tau, 0], got {}",
                grid.lag() + 1,
                values.len()
            )));
        }
        Self::new(grid, -(grid.lag() as isize), values, Extension::Strict)
    }

    pub fn from_fn(grid: Grid, start_index: isize, end_index: isize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (start_index..=end_index).map(|k| f(grid.time(k))).collect();
        let ext = if start_index >= 0 { Extension::Zero } else { Extension::Strict };
        Self::new(grid, start_index, values, ext)
    }

    pub fn horizon_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, 0, grid.steps() as isize, f).expect("horizon table fits its grid")
    }

    pub fn history_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, -(grid.lag() as isize), 0, f).expect("history table fits its grid")
    }

    /// Joins a history table on `[-tau, 0]` and a horizon table on `[0, T]`.
    ///
    /// The node at `t = 0` is taken from the horizon table.
    pub fn concat_history(history: &FunctionTable, horizon: &FunctionTable) -> Result<Self> {
        if !history.grid.same_mesh(&horizon.grid) {
            return Err(Error::GridMismatch("history and horizon tables use different grids".into()));
        }
        if history.end_index() != 0 || horizon.start_index != 0 {
            return Err(Error::InvalidArgument("history must end and horizon start at t = 0".into()));
        }
        let mut values = history.values[..history.values.len() - 1].to_vec();
        values.extend_from_slice(&horizon.values);
        Self::new(horizon.grid, history.start_index, values, Extension::Strict)
    }

    pub fn with_left_limits(mut self, left: Vec<f64>) -> Result<Self> {
        if left.len() != self.values.len() {
            return Err(Error::InvalidArgument("left limits must match the table length".into()));
        }
        self.left_limits = Some(left);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn start_index(&self) -> isize {
        self.start_index
    }

    pub fn end_index(&self) -> isize {
        self.start_index + self.values.len() as isize - 1
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_limits(&self) -> Option<&[f64]> {
        self.left_limits.as_deref()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (self.start_index..=self.end_index()).map(|k| self.grid.time(k))
    }

    /// Value at node `index` with the extension rule applied.
    pub fn at(&self, index: isize) -> Result<f64> {
        if index < self.start_index {
            return match self.extension {
                Extension::Zero => Ok(0.0),
                Extension::Strict => Err(self.domain_error(index)),
            };
        }
        self.values
            .get((index - self.start_index) as usize)
            .copied()
            .ok_or_else(|| self.domain_error(index))
    }

    /// Left limit at node `index`.
    pub fn left_at(&self, index: isize) -> Result<f64> {
        if index == self.start_index && self.extension == Extension::Zero {
            return Ok(0.0);
        }
        if index < self.start_index {
            return self.at(index);
        }
        let i = (index - self.start_index) as usize;
        match &self.left_limits {
            Some(left) => left.get(i).copied().ok_or_else(|| self.domain_error(index)),
            None => self.at(index),
        }
    }

    /// Value at time `t`, which must be a grid node.
    pub fn at_time(&self, t: f64) -> Result<f64> {
        self.at(self.grid.index_of(t)?)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FunctionTable {
        FunctionTable {
            grid: self.grid,
            start_index: self.start_index,
            values: self.values.iter().map(|&v| f(v)).collect(),
            left_limits: self.left_limits.as_ref().map(|l| l.iter().map(|&v| f(v)).collect()),
            extension: self.extension,
        }
    }

    /// Restriction to nodes `from ..= to`.
    pub fn slice(&self, from: isize, to: isize) -> Result<FunctionTable> {
        if from < self.start_index || to > self.end_index() || from > to {
            return Err(self.domain_error(from.min(to)));
        }
        let a = (from - self.start_index) as usize;
        let b = (to - self.start_index) as usize;
        let ext = if from >= 0 { self.extension } else { Extension::Strict };
        Ok(FunctionTable {
            grid: self.grid,
            start_index: from,
            values: self.values[a..=b].to_vec(),
            left_limits: self.left_limits.as_ref().map(|l| l[a..=b].to_vec()),
            extension: ext,
        })
    }

    fn domain_error(&self, index: isize) -> Error {
        Error::Domain { index, start: self.start_index, end: self.end_index() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_misaligned_delay() {
        assert!(Grid::new(0.3, 3.0, 1.0).is_err());
        assert!(Grid::new(0.1, 2.05, 1.0).is_err());
        let g = Grid::new(0.001, 5.0, 1.0).unwrap();
        assert_eq!(g.steps(), 5000);
        assert_eq!(g.lag(), 1000);
    }

    #[test]
    fn zero_extension_and_left_limit_at_start() {
        let g = Grid::new(0.5, 2.0, 1.0).unwrap();
        let t = FunctionTable::horizon_fn(g, |_| 1.0);
        assert_eq!(t.at(-1).unwrap(), 0.0);
        assert_eq!(t.at(0).unwrap(), 1.0);
        assert_eq!(t.left_at(0).unwrap(), 0.0);
        assert_eq!(t.left_at(1).unwrap(), 1.0);
        assert!(t.at(5).is_err());
    }

    #[test]
    fn history_is_strict() {
        let g = Grid::new(0.5, 2.0, 1.0).unwrap();
        let psi = FunctionTable::history_fn(g, |t| t);
        assert_eq!(psi.at(-2).unwrap(), -1.0);
        assert!(psi.at(-3).is_err());
    }

    #[test]
    fn concat_takes_origin_from_horizon() {
        let g = Grid::new(0.5, 1.0, 1.0).unwrap();
        let psi = FunctionTable::history_fn(g, |_| 7.0);
        let x = FunctionTable::horizon_fn(g, |_| 1.0);
        let joined = FunctionTable::concat_history(&psi, &x).unwrap();
        assert_eq!(joined.values(), &[7.0, 7.0, 1.0, 1.0, 1.0]);
        assert_eq!(joined.start_index(), -2);
    }
}
