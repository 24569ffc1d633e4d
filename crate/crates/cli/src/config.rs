//! Flat `key = value` configuration.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment; blank lines are
//! ignored; lists are comma-separated; keys may appear once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use batchelor_core::norms::NormParams;
use batchelor_core::torus::MapParams;

use crate::error::CliError;

pub const MAX_GRID: usize = 16384;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Mixing,
    ProjectedMixing,
    Batchelor,
    Flux,
    Geometry,
    Norms,
    Evolve,
    Render,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Mixing,
        Experiment::ProjectedMixing,
        Experiment::Batchelor,
        Experiment::Flux,
        Experiment::Geometry,
        Experiment::Norms,
        Experiment::Evolve,
        Experiment::Render,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Mixing => "mixing",
            Experiment::ProjectedMixing => "projected-mixing",
            Experiment::Batchelor => "batchelor",
            Experiment::Flux => "flux",
            Experiment::Geometry => "geometry",
            Experiment::Norms => "norms",
            Experiment::Evolve => "evolve",
            Experiment::Render => "render",
        }
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Experiment::ALL.iter().copied().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
            CliError::field("experiment", format!("unknown experiment `{s}`, expected one of {}", names.join(", ")))
        })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    SineX,
    SineY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    SegmentsOverlay,
    SemilogDecay,
    MassVsLogN,
}

impl PlotKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlotKind::SegmentsOverlay => "segments-overlay",
            PlotKind::SemilogDecay => "semilog-decay",
            PlotKind::MassVsLogN => "mass-vs-logN",
        }
    }
}

impl FromStr for PlotKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        [PlotKind::SegmentsOverlay, PlotKind::SemilogDecay, PlotKind::MassVsLogN]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::field("kind", format!("unknown plot kind `{s}`")))
    }
}

/// Parsed `key = value` pairs with their line numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| CliError::Syntax { line, msg: format!("expected `key = value`, got `{body}`") })?;
            let k = k.trim();
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(CliError::Syntax { line, msg: format!("invalid key `{k}`") });
            }
            if entries.insert(k.to_string(), (line, v.trim().to_string())).is_some() {
                return Err(CliError::Syntax { line, msg: format!("duplicate key `{k}`") });
            }
        }
        Ok(Self { entries })
    }
}

struct Reader {
    raw: RawConfig,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.raw.entries.remove(key).map(|(_, v)| v)
    }

    fn parse<V: FromStr>(key: &str, s: &str) -> Result<V, CliError> {
        s.trim().parse().map_err(|_| CliError::field(key, format!("cannot parse `{}`", s.trim())))
    }

    fn scalar<V: FromStr>(&mut self, key: &str, default: V) -> Result<V, CliError> {
        match self.take(key) {
            Some(s) => Self::parse(key, &s),
            None => Ok(default),
        }
    }

    fn list<V: FromStr>(&mut self, key: &str, default: &[V]) -> Result<Vec<V>, CliError>
    where
        V: Clone,
    {
        match self.take(key) {
            Some(s) if s.trim().is_empty() => Ok(Vec::new()),
            Some(s) => s.split(',').map(|t| Self::parse(key, t)).collect(),
            None => Ok(default.to_vec()),
        }
    }
}

/// Validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub alphas: Vec<f64>,
    pub n_max: usize,
    /// Iteration depth: `ρ_n` for batchelor, the level for geometry.
    pub n: usize,
    /// `m - n` for projected mixing.
    pub gap: usize,
    pub grid: usize,
    pub cutoffs: Vec<f64>,
    pub fit_window: (f64, f64),
    pub field: FieldKind,
    pub field_k: i64,
    pub field_amplitude: f64,
    pub eta_mass: f64,
    pub norm: NormParams,
    pub seed: u64,
    pub kappa: f64,
    pub nodes: usize,
    pub dict_vertical: usize,
    pub dict_random: usize,
    pub pairs: usize,
    pub cap: Option<usize>,
    pub guard: usize,
    pub tol: f64,
    pub offdiag_cutoff: f64,
    pub w_x: f64,
    pub svg: bool,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub kind: Option<PlotKind>,
}

struct Defaults {
    alphas: &'static [f64],
    n_max: usize,
    n: usize,
    grid: usize,
    cutoffs: &'static [f64],
}

fn defaults(e: Experiment) -> Defaults {
    match e {
        Experiment::Mixing => Defaults { alphas: &[8.0, 16.0, 32.0], n_max: 4, n: 1, grid: 1024, cutoffs: &[] },
        Experiment::ProjectedMixing => {
            Defaults { alphas: &[16.0], n_max: 3, n: 1, grid: 512, cutoffs: &[8.0, 16.0, 32.0, 64.0] }
        }
        Experiment::Batchelor => {
            Defaults { alphas: &[8.0, 16.0], n_max: 6, n: 6, grid: 1024, cutoffs: &[4.0, 8.0, 16.0, 32.0, 64.0] }
        }
        Experiment::Flux => Defaults { alphas: &[32.0], n_max: 6, n: 0, grid: 256, cutoffs: &[8.0, 16.0, 32.0, 64.0] },
        Experiment::Geometry => Defaults { alphas: &[8.0], n_max: 1, n: 1, grid: 0, cutoffs: &[] },
        Experiment::Norms => Defaults { alphas: &[16.0], n_max: 2, n: 0, grid: 0, cutoffs: &[] },
        Experiment::Evolve => Defaults { alphas: &[8.0], n_max: 4, n: 0, grid: 256, cutoffs: &[] },
        Experiment::Render => Defaults { alphas: &[], n_max: 0, n: 0, grid: 0, cutoffs: &[] },
    }
}

impl ExperimentConfig {
    pub fn from_text(experiment: Experiment, text: &str) -> Result<Self, CliError> {
        Self::from_raw(experiment, RawConfig::parse(text)?)
    }

    pub fn from_raw(experiment: Experiment, raw: RawConfig) -> Result<Self, CliError> {
        let d = defaults(experiment);
        let mut r = Reader { raw };
        if let Some(name) = r.take("experiment") {
            let named: Experiment = name.parse()?;
            if named != experiment {
                return Err(CliError::field(
                    "experiment",
                    format!("config names `{named}` but `{experiment}` was requested"),
                ));
            }
        }
        let field = match r.take("field").as_deref() {
            None | Some("sine_y") => FieldKind::SineY,
            Some("sine_x") => FieldKind::SineX,
            Some(o) => return Err(CliError::field("field", format!("expected sine_x or sine_y, got `{o}`"))),
        };
        let fit: Vec<f64> = r.list("fit_window", &[4.0, 64.0])?;
        let cap: i64 = r.scalar("cap", 0)?;
        let norm_p = r.scalar("norm_p", 0.25)?;
        let norm_beta = r.scalar("norm_beta", 0.5)?;
        let svg: String = r.scalar("svg", "true".to_string())?;
        let cfg = ExperimentConfig {
            experiment,
            alphas: r.list("alpha", d.alphas)?,
            n_max: r.scalar("n_max", d.n_max)?,
            n: r.scalar("n", d.n)?,
            gap: r.scalar("gap", 1)?,
            grid: r.scalar("grid", d.grid)?,
            cutoffs: r.list("cutoffs", d.cutoffs)?,
            fit_window: match fit.as_slice() {
                [a, b] => (*a, *b),
                _ => return Err(CliError::field("fit_window", "expected two values `lo, hi`")),
            },
            field,
            field_k: r.scalar("field_k", 1)?,
            field_amplitude: r.scalar("field_amplitude", std::f64::consts::SQRT_2)?,
            eta_mass: r.scalar("eta_mass", 1.0)?,
            norm: NormParams::new(norm_p, norm_beta).map_err(|e| CliError::field("norm_p", e.to_string()))?,
            seed: r.scalar("seed", 1)?,
            kappa: r.scalar("kappa", 0.0)?,
            nodes: r.scalar("nodes", 64)?,
            dict_vertical: r.scalar("dict_vertical", 64)?,
            dict_random: r.scalar("dict_random", 64)?,
            pairs: r.scalar("pairs", 128)?,
            cap: if cap < 0 {
                return Err(CliError::field("cap", "must be non-negative"));
            } else if cap == 0 {
                None
            } else {
                Some(cap as usize)
            },
            guard: r.scalar("guard", batchelor_core::geometry::DEFAULT_GUARD)?,
            tol: r.scalar("tol", 1e-9)?,
            offdiag_cutoff: r.scalar("offdiag_cutoff", 32.0)?,
            w_x: r.scalar("w_x", 0.3)?,
            svg: match svg.as_str() {
                "true" => true,
                "false" => false,
                o => return Err(CliError::field("svg", format!("expected true or false, got `{o}`"))),
            },
            out: r.take("out").map(PathBuf::from),
            input: r.take("input").map(PathBuf::from),
            kind: r.take("kind").map(|s| s.parse()).transpose()?,
        };
        if let Some((k, (line, _))) = r.raw.entries.iter().next() {
            return Err(CliError::field(k, format!("unknown key (line {line})")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Preconditions of the modules the experiment calls, checked before any work.
    pub fn validate(&self) -> Result<(), CliError> {
        use Experiment::*;
        let e = self.experiment;
        if e == Render {
            if self.input.is_none() {
                return Err(CliError::field("input", "render needs an input CSV"));
            }
            if self.kind.is_none() {
                return Err(CliError::field("kind", "render needs a plot kind"));
            }
            return Ok(());
        }
        if self.alphas.is_empty() {
            return Err(CliError::field("alpha", "list must not be empty"));
        }
        for a in &self.alphas {
            let p = MapParams::new(*a).map_err(|err| CliError::field("alpha", err.to_string()))?;
            if matches!(e, Geometry | Norms) {
                p.require_hyperbolic().map_err(|err| CliError::field("alpha", err.to_string()))?;
            }
        }
        if matches!(e, Mixing | ProjectedMixing | Batchelor | Flux | Evolve) {
            if !self.grid.is_power_of_two() || self.grid < 8 {
                return Err(CliError::field("grid", format!("must be a power of two >= 8, got {}", self.grid)));
            }
            if self.grid > MAX_GRID {
                return Err(CliError::field("grid", format!("{} exceeds the memory guard {MAX_GRID}", self.grid)));
            }
        }
        if matches!(e, ProjectedMixing | Batchelor | Flux) {
            if self.cutoffs.is_empty() {
                return Err(CliError::field("cutoffs", "list must not be empty"));
            }
            let half = self.grid as f64 / 2.0;
            for c in &self.cutoffs {
                if !(*c >= 1.0 && *c < half) {
                    return Err(CliError::field("cutoffs", format!("cutoff {c} must lie in [1, {half})")));
                }
            }
        }
        if e == Batchelor {
            if !(self.fit_window.0 < self.fit_window.1) {
                return Err(CliError::field("fit_window", "needs lo < hi"));
            }
            if !(self.offdiag_cutoff >= 1.0 && self.offdiag_cutoff < self.grid as f64 / 2.0) {
                return Err(CliError::field("offdiag_cutoff", "must lie in [1, grid/2)"));
            }
        }
        if matches!(e, Mixing | ProjectedMixing | Flux | Norms | Evolve) && self.n_max < 1 {
            return Err(CliError::field("n_max", "must be at least 1"));
        }
        if e == Geometry && self.n < 1 {
            return Err(CliError::field("n", "must be at least 1"));
        }
        if e == ProjectedMixing && self.gap < 1 {
            return Err(CliError::field("gap", "must be at least 1"));
        }
        if self.field_k < 1 {
            return Err(CliError::field("field_k", "must be at least 1"));
        }
        if !self.field_amplitude.is_finite() {
            return Err(CliError::field("field_amplitude", "must be finite"));
        }
        if !(self.eta_mass.is_finite() && self.eta_mass > 0.0) {
            return Err(CliError::field("eta_mass", "must be positive"));
        }
        if self.nodes < 2 {
            return Err(CliError::field("nodes", "must be at least 2"));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(CliError::field("kappa", "must be non-negative"));
        }
        if !(self.tol > 0.0) {
            return Err(CliError::field("tol", "must be positive"));
        }
        if e == Norms && self.dict_vertical + self.dict_random == 0 {
            return Err(CliError::field("dict_vertical", "dictionary must hold at least one curve"));
        }
        if !(0.0..1.0).contains(&self.w_x) {
            return Err(CliError::field("w_x", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Resolved values in a fixed order, for the manifest.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut out = vec![
            ("experiment", self.experiment.to_string()),
            ("alpha", list(&self.alphas)),
            ("n_max", self.n_max.to_string()),
            ("n", self.n.to_string()),
            ("gap", self.gap.to_string()),
            ("grid", self.grid.to_string()),
            ("cutoffs", list(&self.cutoffs)),
            ("fit_window", format!("{}, {}", self.fit_window.0, self.fit_window.1)),
            ("field", if self.field == FieldKind::SineX { "sine_x" } else { "sine_y" }.to_string()),
            ("field_k", self.field_k.to_string()),
            ("field_amplitude", self.field_amplitude.to_string()),
            ("eta_mass", self.eta_mass.to_string()),
            ("norm_p", self.norm.p.to_string()),
            ("norm_beta", self.norm.beta.to_string()),
            ("seed", self.seed.to_string()),
            ("kappa", self.kappa.to_string()),
            ("nodes", self.nodes.to_string()),
            ("dict_vertical", self.dict_vertical.to_string()),
            ("dict_random", self.dict_random.to_string()),
            ("pairs", self.pairs.to_string()),
            ("cap", self.cap.unwrap_or(0).to_string()),
            ("guard", self.guard.to_string()),
            ("tol", self.tol.to_string()),
            ("offdiag_cutoff", self.offdiag_cutoff.to_string()),
            ("w_x", self.w_x.to_string()),
            ("svg", self.svg.to_string()),
        ];
        if let Some(i) = &self.input {
            out.push(("input", i.display().to_string()));
        }
        if let Some(k) = &self.kind {
            out.push(("kind", k.name().to_string()));
        }
        out
    }
}
