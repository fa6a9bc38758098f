//! TOML run configuration: parsing, validation and instance assembly.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use msfde_core::montecarlo::{McConfig, PsiMode, DEFAULT_KAPPA};
use msfde_core::perturb::{parse_node_csv, snap_windows, ClassifyOptions, ForcingKind, ForcingSpec};
use msfde_core::volterra_ms::ProblemInstance;
use msfde_core::{Atom, DensityPiece, FiniteSignedMeasure, FunctionTable, Grid};
use serde::Deserialize;
use toml::Spanned;

/// A configuration problem, tied to the key (and line, when known) that caused it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}: `{}`: {}", self.key, self.message),
            None => write!(f, "config error: `{}`: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Analysis {
    Resolvent,
    Kernel,
    MeanSquare,
    Classify,
    Simulate,
    Compare,
}

impl Analysis {
    pub const ALL: [Analysis; 6] =
        [Analysis::Resolvent, Analysis::Kernel, Analysis::MeanSquare, Analysis::Classify, Analysis::Simulate, Analysis::Compare];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Resolvent => "resolvent",
            Analysis::Kernel => "kernel",
            Analysis::MeanSquare => "meansquare",
            Analysis::Classify => "classify",
            Analysis::Simulate => "simulate",
            Analysis::Compare => "compare",
        }
    }

    fn parse(s: &str) -> Option<Analysis> {
        Analysis::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PsiShape {
    Constant(f64),
    Samples(PathBuf),
    /// `e^{λt}`.
    Exp(f64),
    /// `e^{re·t} cos(im·t)`.
    CosExp { re: f64, im: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub config: McConfig,
    pub checkpoints: Vec<f64>,
    pub kappa: f64,
}

/// A validated configuration with its problem instance realized on the grid.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: Grid,
    pub f_kind: ForcingKind,
    pub g_kind: ForcingKind,
    pub psi: PsiShape,
    pub instance: ProblemInstance,
    pub mc: Option<McSettings>,
    pub classify: ClassifyOptions,
    pub analyses: BTreeSet<Analysis>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    analyses: Option<Spanned<Vec<Spanned<String>>>>,
    grid: Spanned<RawGrid>,
    nu: Option<Spanned<RawMeasure>>,
    mu: Option<Spanned<RawMeasure>>,
    f: Option<Spanned<RawForcing>>,
    g: Option<Spanned<RawForcing>>,
    psi: Option<Spanned<RawPsi>>,
    mc: Option<Spanned<RawMc>>,
    classify: Option<Spanned<RawClassify>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    h: Spanned<f64>,
    #[serde(rename = "T")]
    horizon: Spanned<f64>,
    tau: Spanned<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    /// `[location, weight]` pairs.
    atoms: Option<Spanned<Vec<[f64; 2]>>>,
    /// `[left, right, value]` triples.
    density: Option<Spanned<Vec<[f64; 3]>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForcing {
    kind: Spanned<String>,
    value: Option<Spanned<f64>>,
    path: Option<Spanned<String>>,
    alpha: Option<Spanned<f64>>,
    beta: Option<Spanned<f64>>,
    schedule: Option<Spanned<Vec<[f64; 2]>>>,
    inverse_mass_count: Option<Spanned<usize>>,
    scale: Option<Spanned<f64>>,
    rate: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPsi {
    kind: Spanned<String>,
    value: Option<Spanned<f64>>,
    path: Option<Spanned<String>>,
    lambda: Option<Spanned<f64>>,
    re: Option<Spanned<f64>>,
    im: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    paths: Spanned<usize>,
    seed: Spanned<u64>,
    psi_mode: Option<Spanned<String>>,
    checkpoints: Option<Spanned<Vec<f64>>>,
    kappa: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClassify {
    deltas: Option<Spanned<Vec<f64>>>,
    betas: Option<Spanned<Vec<f64>>>,
}

/// Maps byte offsets to 1-based line numbers.
struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn at(&self, offset: usize) -> usize {
        self.0[..offset.min(self.0.len())].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn err<T>(&self, key: &str, spanned: &Spanned<T>, message: impl Into<String>) -> ConfigError {
        ConfigError { key: key.to_string(), line: Some(self.at(spanned.span().start)), message: message.into() }
    }
}

/// Reads and validates a configuration file; relative paths inside it resolve against its directory.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        key: "--config".into(),
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base)
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let lines = Lines(text);
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        key: "toml".into(),
        line: e.span().map(|s| lines.at(s.start)),
        message: e.message().to_string(),
    })?;

    let rg = raw.grid.get_ref();
    let grid = Grid::new(*rg.h.get_ref(), *rg.horizon.get_ref(), *rg.tau.get_ref()).map_err(|e| {
        let key = if !(rg.horizon.get_ref().is_finite() && *rg.horizon.get_ref() > 0.0) {
            ("grid.T", &rg.horizon)
        } else if !(rg.tau.get_ref().is_finite() && *rg.tau.get_ref() >= 0.0) {
            ("grid.tau", &rg.tau)
        } else {
            ("grid.h", &rg.h)
        };
        lines.err(key.0, key.1, e.to_string())
    })?;

    let nu = build_measure(&lines, "nu", raw.nu.as_ref(), &grid)?;
    let mu = build_measure(&lines, "mu", raw.mu.as_ref(), &grid)?;
    let f_kind = build_forcing(&lines, "f", raw.f.as_ref(), base_dir)?;
    let g_kind = build_forcing(&lines, "g", raw.g.as_ref(), base_dir)?;
    let realize = |name: &str, raw: &Option<Spanned<RawForcing>>, kind: &ForcingKind| {
        ForcingSpec::realize(kind.clone(), &grid).map_err(|e| match raw {
            Some(r) => lines.err(name, r, e.to_string()),
            None => ConfigError { key: name.into(), line: None, message: e.to_string() },
        })
    };
    let f = realize("f", &raw.f, &f_kind)?.sampled;
    let g = realize("g", &raw.g, &g_kind)?.sampled;
    let (psi, psi_table) = build_psi(&lines, raw.psi.as_ref(), &grid, base_dir)?;

    let instance = ProblemInstance::new(nu, mu, f, g, psi_table, grid).map_err(|e| ConfigError {
        key: "grid".into(),
        line: Some(lines.at(raw.grid.span().start)),
        message: e.to_string(),
    })?;

    let analyses = match &raw.analyses {
        None => Analysis::ALL.into_iter().filter(|a| raw.mc.is_some() || !matches!(a, Analysis::Simulate | Analysis::Compare)).collect(),
        Some(list) => {
            let mut set = BTreeSet::new();
            for item in list.get_ref() {
                let a = Analysis::parse(item.get_ref()).ok_or_else(|| {
                    let valid: Vec<_> = Analysis::ALL.iter().map(|a| a.name()).collect();
                    lines.err("analyses", item, format!("unknown analysis `{}`; valid: {}", item.get_ref(), valid.join(", ")))
                })?;
                set.insert(a);
            }
            set
        }
    };

    let mc = match &raw.mc {
        None => {
            if analyses.contains(&Analysis::Simulate) || analyses.contains(&Analysis::Compare) {
                let key = raw.analyses.as_ref().expect("explicit analyses");
                return Err(lines.err("mc", key, "simulate/compare requested without an [mc] section"));
            }
            None
        }
        Some(m) => Some(build_mc(&lines, m.get_ref(), &grid)?),
    };

    let mut classify = ClassifyOptions::for_grid(&grid);
    if let Some(c) = &raw.classify {
        let c = c.get_ref();
        if let Some(d) = &c.deltas {
            for &delta in d.get_ref() {
                if !(delta > 0.0 && delta <= 1.0) || msfde_core::grid::aligned_steps(delta, grid.h()).is_none() {
                    return Err(lines.err("classify.deltas", d, format!("window {delta} must lie in (0, 1] and be a multiple of grid.h")));
                }
            }
            classify.deltas = snap_windows(d.get_ref(), grid.h());
        }
        if let Some(b) = &c.betas {
            let v = b.get_ref();
            if v.is_empty() || v.iter().any(|&x| !(x > 0.0)) || v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(lines.err("classify.betas", b, "rates must be positive and strictly ascending"));
            }
            classify.betas = v.clone();
        }
    }

    Ok(RunConfig { grid, f_kind, g_kind, psi, instance, mc, classify, analyses })
}

fn build_measure(lines: &Lines, name: &str, raw: Option<&Spanned<RawMeasure>>, grid: &Grid) -> Result<FiniteSignedMeasure, ConfigError> {
    let Some(raw) = raw else {
        return Ok(FiniteSignedMeasure::zero(grid.tau()));
    };
    let m = raw.get_ref();
    let atoms: Vec<Atom> = m
        .atoms
        .as_ref()
        .map(|a| a.get_ref().iter().map(|&[location, weight]| Atom { location, weight }).collect())
        .unwrap_or_default();
    let density: Vec<DensityPiece> = m
        .density
        .as_ref()
        .map(|d| d.get_ref().iter().map(|&[left, right, value]| DensityPiece { left, right, value }).collect())
        .unwrap_or_default();
    let check = |measure: msfde_core::Result<FiniteSignedMeasure>| measure.and_then(|m| m.discretize(grid).map(|_| m));
    if let Some(a) = &m.atoms {
        check(FiniteSignedMeasure::new(grid.tau(), atoms.clone(), Vec::new())).map_err(|e| lines.err(&format!("{name}.atoms"), a, e.to_string()))?;
    }
    if let Some(d) = &m.density {
        check(FiniteSignedMeasure::new(grid.tau(), Vec::new(), density.clone()))
            .map_err(|e| lines.err(&format!("{name}.density"), d, e.to_string()))?;
    }
    check(FiniteSignedMeasure::new(grid.tau(), atoms, density)).map_err(|e| lines.err(name, raw, e.to_string()))
}

fn require<'a, T>(lines: &Lines, key: String, section: &Spanned<impl Sized>, v: &'a Option<Spanned<T>>) -> Result<&'a T, ConfigError> {
    v.as_ref().map(Spanned::get_ref).ok_or_else(|| lines.err(&key, section, "missing required key"))
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() { p } else { base.join(p) }
}

fn build_forcing(lines: &Lines, name: &str, raw: Option<&Spanned<RawForcing>>, base: &Path) -> Result<ForcingKind, ConfigError> {
    let Some(section) = raw else {
        return Ok(ForcingKind::Zero);
    };
    let r = section.get_ref();
    let key = |k: &str| format!("{name}.{k}");
    Ok(match r.kind.get_ref().as_str() {
        "zero" => ForcingKind::Zero,
        "constant" => ForcingKind::Constant(*require(lines, key("value"), section, &r.value)?),
        "csv" => ForcingKind::Csv(resolve(base, require(lines, key("path"), section, &r.path)?)),
        "chirp" => ForcingKind::Chirp {
            alpha: *require(lines, key("alpha"), section, &r.alpha)?,
            beta: *require(lines, key("beta"), section, &r.beta)?,
        },
        "spikes" => match (&r.schedule, &r.inverse_mass_count) {
            (Some(s), None) => ForcingKind::Spikes(s.get_ref().iter().map(|&[a, h]| (a, h)).collect()),
            (None, Some(n)) => ForcingKind::inverse_mass_spikes(*n.get_ref()),
            _ => return Err(lines.err(&key("schedule"), section, "give exactly one of `schedule` or `inverse_mass_count`")),
        },
        "exp_decay" => ForcingKind::ExpDecay {
            scale: *require(lines, key("scale"), section, &r.scale)?,
            rate: *require(lines, key("rate"), section, &r.rate)?,
        },
        other => {
            return Err(lines.err(
                &key("kind"),
                &r.kind,
                format!("unknown forcing kind `{other}`; valid: zero, constant, csv, chirp, spikes, exp_decay"),
            ))
        }
    })
}

fn build_psi(lines: &Lines, raw: Option<&Spanned<RawPsi>>, grid: &Grid, base: &Path) -> Result<(PsiShape, FunctionTable), ConfigError> {
    let Some(section) = raw else {
        return Ok((PsiShape::Constant(0.0), FunctionTable::history_fn(*grid, |_| 0.0)));
    };
    let r = section.get_ref();
    let key = |k: &str| format!("psi.{k}");
    let shape = match r.kind.get_ref().as_str() {
        "constant" => PsiShape::Constant(*require(lines, key("value"), section, &r.value)?),
        "samples" => PsiShape::Samples(resolve(base, require(lines, key("path"), section, &r.path)?)),
        "exp" => PsiShape::Exp(*require(lines, key("lambda"), section, &r.lambda)?),
        "cos_exp" => PsiShape::CosExp {
            re: *require(lines, key("re"), section, &r.re)?,
            im: *require(lines, key("im"), section, &r.im)?,
        },
        other => {
            return Err(lines.err(&key("kind"), &r.kind, format!("unknown psi kind `{other}`; valid: constant, samples, exp, cos_exp")))
        }
    };
    let table = match &shape {
        PsiShape::Constant(c) => FunctionTable::history_fn(*grid, |_| *c),
        PsiShape::Exp(l) => FunctionTable::history_fn(*grid, |t| (l * t).exp()),
        PsiShape::CosExp { re, im } => FunctionTable::history_fn(*grid, |t| (re * t).exp() * (im * t).cos()),
        PsiShape::Samples(path) => {
            let err = |m: String| lines.err("psi.path", r.path.as_ref().expect("samples path"), m);
            let text = std::fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
            let values = parse_node_csv(&text, grid, -(grid.lag() as isize), 0).map_err(|e| err(format!("{}: {e}", path.display())))?;
            FunctionTable::on_history(*grid, values).map_err(|e| err(e.to_string()))?
        }
    };
    Ok((shape, table))
}

fn build_mc(lines: &Lines, m: &RawMc, grid: &Grid) -> Result<McSettings, ConfigError> {
    if *m.paths.get_ref() < 2 {
        return Err(lines.err("mc.paths", &m.paths, "need at least 2 paths"));
    }
    let psi_mode = match m.psi_mode.as_ref().map(|s| s.get_ref().as_str()) {
        None | Some("deterministic") => PsiMode::Deterministic,
        Some("random") => PsiMode::Random,
        Some(other) => {
            return Err(lines.err(
                "mc.psi_mode",
                m.psi_mode.as_ref().expect("present"),
                format!("unknown mode `{other}`; valid: deterministic, random"),
            ))
        }
    };
    let checkpoints = match &m.checkpoints {
        None => vec![grid.horizon()],
        Some(c) => {
            for &t in c.get_ref() {
                if grid.index_of(t).map_or(true, |k| k < 0) {
                    return Err(lines.err("mc.checkpoints", c, format!("checkpoint {t} is not a grid node in [0, T]")));
                }
            }
            c.get_ref().clone()
        }
    };
    let kappa = match &m.kappa {
        None => DEFAULT_KAPPA,
        Some(k) if *k.get_ref() >= 0.0 => *k.get_ref(),
        Some(k) => return Err(lines.err("mc.kappa", k, "allowance factor must be nonnegative")),
    };
    Ok(McSettings {
        config: McConfig { paths: *m.paths.get_ref(), seed: *m.seed.get_ref(), psi_mode },
        checkpoints,
        kappa,
    })
}
