//! Euler–Maruyama simulation of the perturbed equation and comparison with the Volterra mean square.
//!
//! Path `p` draws from ChaCha8 keyed by `seed_from_u64(seed)` on stream `p`:
//! the first standard normal is the initial amplitude (drawn, and ignored, in
//! deterministic mode too), the following ones are the Brownian increments in
//! step order. Paths run in fixed blocks of [`BLOCK`]; each block reduces its
//! paths in index order and blocks merge in block order, so the estimate is
//! bit-identical under every execution strategy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{Extension, FunctionTable};
use crate::par::{map_indexed, Execution};
use crate::volterra_ms::{MeanSquareSolution, ProblemInstance};

pub const BLOCK: usize = 64;
pub const EXPLOSION_THRESHOLD: f64 = 1e150;
pub const DEFAULT_KAPPA: f64 = 5.0;
pub const Z_LIMIT: f64 = 4.0;
/// Below this many paths a comparison PASS is flagged as low power.
pub const LOW_POWER_PATHS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsiMode {
    #[default]
    Deterministic,
    /// The instance `psi` times an independent standard normal amplitude per path.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub paths: usize,
    pub seed: u64,
    pub psi_mode: PsiMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean_sq: FunctionTable,
    pub std_err: FunctionTable,
    /// Earliest time at which some path exceeded [`EXPLOSION_THRESHOLD`] in magnitude.
    pub explosion: Option<f64>,
    pub paths: usize,
}

/// Running mean and sum of squared deviations per node.
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments { count: 0.0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / self.count;
            *s += d * (v - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        let n = self.count + other.count;
        if other.count == 0.0 {
            return;
        }
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.count / n;
            self.m2[i] += other.m2[i] + d * d * self.count * other.count / n;
        }
        self.count = n;
    }
}

struct BlockResult {
    moments: Moments,
    blowup: Option<usize>,
}

pub fn simulate(inst: &ProblemInstance, cfg: &McConfig) -> Result<McEstimate> {
    simulate_with(inst, cfg, Execution::default())
}

pub fn simulate_with(inst: &ProblemInstance, cfg: &McConfig, exec: Execution) -> Result<McEstimate> {
    if cfg.paths < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 paths, got {}", cfg.paths)));
    }
    let grid = inst.grid;
    let nu_w = inst.nu.discretize(&grid)?.sparse_node_weights();
    let mu_w = inst.mu.discretize(&grid)?.sparse_node_weights();
    let len = grid.len();
    let blocks = cfg.paths.div_ceil(BLOCK);
    let results = map_indexed(blocks, exec, |b| {
        let mut moments = Moments::new(len);
        let mut blowup: Option<usize> = None;
        let mut sq = vec![0.0; len];
        for p in b * BLOCK..((b + 1) * BLOCK).min(cfg.paths) {
            let hit = run_path(inst, &nu_w, &mu_w, cfg, p as u64, &mut sq);
            if let Some(k) = hit {
                blowup = Some(blowup.map_or(k, |b| b.min(k)));
            }
            moments.push(&sq);
        }
        BlockResult { moments, blowup }
    });
    let mut total = Moments::new(len);
    let mut blowup: Option<usize> = None;
    for r in &results {
        total.merge(&r.moments);
        if let Some(k) = r.blowup {
            blowup = Some(blowup.map_or(k, |b| b.min(k)));
        }
    }
    let n = total.count;
    let std_err: Vec<f64> = total.m2.iter().map(|s| (s / (n - 1.0)).max(0.0).sqrt() / n.sqrt()).collect();
    let mut mean_sq = total.mean;
    let mut std_err = std_err;
    if let Some(k) = blowup {
        for i in k..len {
            mean_sq[i] = f64::INFINITY;
            std_err[i] = f64::INFINITY;
        }
    }
    Ok(McEstimate {
        mean_sq: FunctionTable::new(grid, 0, mean_sq, Extension::Zero)?,
        std_err: FunctionTable::new(grid, 0, std_err, Extension::Zero)?,
        explosion: blowup.map(|k| grid.time(k as isize)),
        paths: cfg.paths,
    })
}

/// Simulates one path and writes `X²` on `[0, T]` into `sq`; returns the first blow-up node.
fn run_path(inst: &ProblemInstance, nu_w: &[(usize, f64)], mu_w: &[(usize, f64)], cfg: &McConfig, p: u64, sq: &mut [f64]) -> Option<usize> {
    let grid = &inst.grid;
    let lag = grid.lag();
    let h = grid.h();
    let sqrt_h = h.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(p);
    let xi: f64 = rng.sample(StandardNormal);
    let amplitude = match cfg.psi_mode {
        PsiMode::Deterministic => 1.0,
        PsiMode::Random => xi,
    };
    let mut x = Vec::with_capacity(lag + sq.len());
    x.extend(inst.psi.values().iter().map(|v| amplitude * v));
    let f = inst.f.values();
    let g = inst.g.values();
    sq[0] = x[lag] * x[lag];
    for k in 0..sq.len() - 1 {
        let now = lag + k;
        let drift = f[k] + nu_w.iter().map(|&(j, w)| w * x[now - j]).sum::<f64>();
        let diffusion = g[k] + mu_w.iter().map(|&(j, w)| w * x[now - j]).sum::<f64>();
        let db = sqrt_h * rng.sample::<f64, _>(StandardNormal);
        let next = x[now] + drift * h + diffusion * db;
        if !(next.abs() <= EXPLOSION_THRESHOLD) {
            sq[k + 1..].fill(f64::INFINITY);
            return Some(k + 1);
        }
        x.push(next);
        sq[k + 1] = next * next;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointZ {
    pub time: f64,
    pub mc_mean_sq: f64,
    pub std_err: f64,
    pub volterra_ex2: f64,
    /// `|mc − EX2| / (std_err + κ h EX2)`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McComparison {
    pub checkpoints: Vec<CheckpointZ>,
    pub kappa: f64,
    pub pass: bool,
    pub low_power: bool,
    pub explosion: Option<f64>,
}

pub fn compare(est: &McEstimate, sol: &MeanSquareSolution, checkpoints: &[f64]) -> Result<McComparison> {
    compare_with(est, sol, checkpoints, DEFAULT_KAPPA)
}

pub fn compare_with(est: &McEstimate, sol: &MeanSquareSolution, checkpoints: &[f64], kappa: f64) -> Result<McComparison> {
    let grid = est.mean_sq.grid();
    if !grid.same_mesh(sol.ex2.grid()) || est.mean_sq.len() != sol.ex2.len() {
        return Err(Error::GridMismatch("Monte Carlo and Volterra results use different grids".into()));
    }
    let h = grid.h();
    let rows = checkpoints
        .iter()
        .map(|&t| {
            let m = est.mean_sq.at_time(t)?;
            let se = est.std_err.at_time(t)?;
            let e = sol.ex2.at_time(t)?;
            let num = (m - e).abs();
            let den = se + kappa * h * e.abs();
            let z = if num == 0.0 { 0.0 } else if den > 0.0 { num / den } else { f64::INFINITY };
            Ok(CheckpointZ { time: t, mc_mean_sq: m, std_err: se, volterra_ex2: e, z })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = est.explosion.is_none() && rows.iter().all(|r| r.z <= Z_LIMIT);
    Ok(McComparison { checkpoints: rows, kappa, pass, low_power: est.paths < LOW_POWER_PATHS, explosion: est.explosion })
}
