//! Sweep configuration, orchestration, calibration and CSV output.
//!
//! Config files are plain text: `[section]` headers, `key = value` lines and
//! `#` comments.
//!
//! ```text
//! [sweep]
//! mode = rs              # rs | rsb | finite | random_tas | decoupled_eval
//! variable = alpha_inv   # alpha_inv | lambda | lambda0 | lambda1 | rho
//! start = 1
//! stop = 3
//! step = 0.5
//!
//! [problem]
//! spectral = mp          # mp | point:<atom> | file:<path>
//! rho = 1
//! alpha_inv = 2
//! penalty = ridge-l1     # ridge | ridge-l0 | ridge-l1
//! lambda = 0.1
//! lambda1 = 0.5
//! target_eta = 0.3       # optional: tune one coefficient to hit η
//! tune = lambda1
//! support = complex      # complex | disc | psk
//!
//! [finite]
//! n = 256
//! trials = 30
//! seed = 1
//!
//! [solver]
//! tol = 1e-10
//! warm_start = true
//!
//! [output]
//! path = out.csv
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::decoupled::{Penalty, PenaltyKind, Support};
use crate::error::{Error, Result};
use crate::finite_sim::{self, ChannelModel, ConvexOptions, CoordinateOptions};
use crate::rs_solver::{self, QuadOptions, RsOptions, RsSolution, RsState};
use crate::rsb_solver::{self, RsbOptions, RsbState};
use crate::spectral::SpectralModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Rs,
    Rsb,
    Finite,
    RandomTas,
    DecoupledEval,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Rs => "rs",
            Mode::Rsb => "rsb",
            Mode::Finite => "finite",
            Mode::RandomTas => "random_tas",
            Mode::DecoupledEval => "decoupled_eval",
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "rs" => Mode::Rs,
            "rsb" => Mode::Rsb,
            "finite" => Mode::Finite,
            "random_tas" | "random-tas" => Mode::RandomTas,
            "decoupled_eval" | "decoupled" => Mode::DecoupledEval,
            _ => return Err(format!("unknown mode {s:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralSpec {
    Mp,
    Point(f64),
    File(PathBuf),
}

impl SpectralSpec {
    pub fn build(&self, alpha: f64) -> Result<SpectralModel> {
        match self {
            SpectralSpec::Mp => SpectralModel::marchenko_pastur(alpha),
            SpectralSpec::Point(a) => SpectralModel::point_mass(alpha, *a),
            SpectralSpec::File(p) => SpectralModel::from_file(alpha, p),
        }
    }
}

impl fmt::Display for SpectralSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralSpec::Mp => write!(f, "mp"),
            SpectralSpec::Point(a) => write!(f, "point:{a}"),
            SpectralSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for SpectralSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "mp" {
            Ok(SpectralSpec::Mp)
        } else if s == "point" {
            Ok(SpectralSpec::Point(1.0))
        } else if let Some(a) = s.strip_prefix("point:") {
            a.parse().map(SpectralSpec::Point).map_err(|_| format!("bad atom in {s:?}"))
        } else if let Some(p) = s.strip_prefix("file:") {
            Ok(SpectralSpec::File(PathBuf::from(p)))
        } else {
            Err(format!("unknown spectral model {s:?}"))
        }
    }
}

/// Swept quantity or tunable coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    AlphaInv,
    Lambda,
    Lambda0,
    Lambda1,
    Rho,
}

impl FromStr for Variable {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "alpha_inv" | "alpha-inv" => Variable::AlphaInv,
            "lambda" => Variable::Lambda,
            "lambda0" => Variable::Lambda0,
            "lambda1" => Variable::Lambda1,
            "rho" => Variable::Rho,
            _ => return Err(format!("unknown variable {s:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    pub fn single(v: f64) -> Self {
        Self { start: v, stop: v, step: 1.0 }
    }

    /// `start, start+step, …` up to `stop` inclusive.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.start + self.step * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FiniteSolver {
    Auto,
    Convex,
    Coordinate,
    Rzf,
    RandomTas,
}

impl FromStr for FiniteSolver {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "auto" => FiniteSolver::Auto,
            "convex" => FiniteSolver::Convex,
            "coordinate" => FiniteSolver::Coordinate,
            "rzf" => FiniteSolver::Rzf,
            "random_tas" | "random-tas" => FiniteSolver::RandomTas,
            _ => return Err(format!("unknown finite solver {s:?}")),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub warm_start: bool,
    pub restarts: usize,
    pub finite_solver: FiniteSolver,
    /// record wall-clock time (makes the CSV non-reproducible)
    pub timing: bool,
    /// pin c = 0 in rsb mode
    pub pin_c_zero: bool,
    pub radial_nodes: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 5000,
            damping: 0.5,
            warm_start: true,
            restarts: 8,
            finite_solver: FiniteSolver::Auto,
            timing: false,
            pin_c_zero: false,
            radial_nodes: QuadOptions::default().radial,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub mode: Mode,
    pub spectral: SpectralSpec,
    pub rho: f64,
    pub alpha_inv: f64,
    pub penalty: Penalty,
    /// `(coefficient, η)`: the coefficient is recalibrated at every point
    pub target_eta: Option<(Variable, f64)>,
    pub support: Support,
    /// random TAS fraction (random_tas mode and the random_tas finite solver)
    pub tas_eta: f64,
    /// decoupled_eval inputs
    pub xi: f64,
    pub rho_rs: f64,
    pub variable: Variable,
    pub range: Range,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub seed: u64,
    pub solver: SolverSettings,
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    /// A single-point configuration.
    pub fn single(mode: Mode, alpha_inv: f64, rho: f64, penalty: Penalty, support: Support) -> Self {
        Self {
            mode,
            spectral: SpectralSpec::Mp,
            rho,
            alpha_inv,
            penalty,
            target_eta: None,
            support,
            tas_eta: 1.0,
            xi: 1.0,
            rho_rs: 1.0,
            variable: Variable::AlphaInv,
            range: Range::single(alpha_inv),
            n: None,
            trials: None,
            seed: 0,
            solver: SolverSettings::default(),
            output: None,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(s) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = s.trim().to_string();
                if !["sweep", "problem", "finite", "solver", "output"].contains(&section.as_str()) {
                    return Err(Error::Config { line: i + 1, msg: format!("unknown section [{section}]") });
                }
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config { line: i + 1, msg: format!("expected key = value, got {line:?}") })?;
            if section.is_empty() {
                return Err(Error::Config { line: i + 1, msg: "key outside of a section".into() });
            }
            let key = format!("{section}.{}", k.trim());
            if kv.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::Config { line: i + 1, msg: format!("duplicate key {key}") });
            }
        }
        let mut cfg = Conf { kv, used: Vec::new() };
        let mode: Mode = cfg.req("sweep.mode")?;
        let variable: Variable = cfg.req("sweep.variable")?;
        let start: f64 = cfg.req("sweep.start")?;
        let stop: f64 = cfg.opt("sweep.stop")?.unwrap_or(start);
        let step: f64 = cfg.opt("sweep.step")?.unwrap_or(1.0);
        if !(step > 0.0) || stop < start {
            return Err(Error::Config { line: cfg.line("sweep.step"), msg: "range must satisfy start ≤ stop and step > 0".into() });
        }

        let spectral: SpectralSpec = cfg.opt("problem.spectral")?.unwrap_or(SpectralSpec::Mp);
        let rho = cfg.opt("problem.rho")?.unwrap_or(1.0);
        let alpha_inv = cfg.opt("problem.alpha_inv")?.unwrap_or(1.0);
        let kind: String = cfg.opt("problem.penalty")?.unwrap_or_else(|| "ridge".to_string());
        let lambda = cfg.opt("problem.lambda")?.unwrap_or(0.0);
        let lambda0 = cfg.opt("problem.lambda0")?.unwrap_or(0.0);
        let lambda1 = cfg.opt("problem.lambda1")?.unwrap_or(0.0);
        let pline = cfg.line("problem.penalty");
        let penalty = penalty_from(&kind, lambda, lambda0, lambda1).map_err(|m| Error::Config { line: pline, msg: m })?;
        let target_eta = match cfg.opt::<f64>("problem.target_eta")? {
            Some(t) => {
                let tune: Variable = cfg.req("problem.tune")?;
                if matches!(tune, Variable::AlphaInv | Variable::Rho) {
                    return Err(Error::Config { line: cfg.line("problem.tune"), msg: "tune must be a penalty coefficient".into() });
                }
                if tune == variable {
                    return Err(Error::Config { line: cfg.line("problem.tune"), msg: "the tuned coefficient cannot also be swept".into() });
                }
                Some((tune, t))
            }
            None => None,
        };
        let sup_kind: String = cfg.opt("problem.support")?.unwrap_or_else(|| "complex".to_string());
        let peak = cfg.opt("problem.peak")?.unwrap_or(1.0);
        let order = cfg.opt("problem.psk_order")?.unwrap_or(2u32);
        let sline = cfg.line("problem.support");
        let support = support_from(&sup_kind, peak, order).map_err(|m| Error::Config { line: sline, msg: m })?;
        let tas_eta = cfg.opt("problem.eta")?.unwrap_or(1.0);
        let xi = cfg.opt("problem.xi")?.unwrap_or(1.0);
        let rho_rs = cfg.opt("problem.rho_rs")?.unwrap_or(1.0);

        let n = cfg.opt("finite.n")?;
        let trials = cfg.opt("finite.trials")?;
        let seed = cfg.opt("finite.seed")?.unwrap_or(0u64);
        if mode == Mode::Finite && (n.is_none() || trials.is_none()) {
            return Err(Error::Config { line: 0, msg: "finite mode requires [finite] n and trials".into() });
        }

        let d = SolverSettings::default();
        let solver = SolverSettings {
            tol: cfg.opt("solver.tol")?.unwrap_or(d.tol),
            max_iter: cfg.opt("solver.max_iter")?.unwrap_or(d.max_iter),
            damping: cfg.opt("solver.damping")?.unwrap_or(d.damping),
            warm_start: cfg.opt("solver.warm_start")?.unwrap_or(d.warm_start),
            restarts: cfg.opt("solver.restarts")?.unwrap_or(d.restarts),
            finite_solver: cfg.opt("solver.finite_solver")?.unwrap_or(d.finite_solver),
            timing: cfg.opt("solver.timing")?.unwrap_or(d.timing),
            pin_c_zero: cfg.opt("solver.pin_c_zero")?.unwrap_or(d.pin_c_zero),
            radial_nodes: cfg.opt("solver.radial_nodes")?.unwrap_or(d.radial_nodes),
        };
        let output = cfg.opt::<String>("output.path")?.map(PathBuf::from);
        cfg.finish()?;
        Ok(Self {
            mode,
            spectral,
            rho,
            alpha_inv,
            penalty,
            target_eta,
            support,
            tas_eta,
            xi,
            rho_rs,
            variable,
            range: Range { start, stop, step },
            n,
            trials,
            seed,
            solver,
            output,
        })
    }

    /// Config with the swept variable set to `v`.
    fn at(&self, v: f64) -> Result<Self> {
        let mut c = self.clone();
        let p = c.penalty;
        match self.variable {
            Variable::AlphaInv => c.alpha_inv = v,
            Variable::Rho => c.rho = v,
            Variable::Lambda => c.penalty = Penalty::new(v, p.lambda0, p.lambda1)?,
            Variable::Lambda0 => c.penalty = Penalty::new(p.lambda, v, p.lambda1)?,
            Variable::Lambda1 => c.penalty = Penalty::new(p.lambda, p.lambda0, v)?,
        }
        Ok(c)
    }

    fn point(&self) -> Result<Point> {
        if !(self.alpha_inv > 0.0) {
            return Err(Error::InvalidInput(format!("α⁻¹ must be positive, got {}", self.alpha_inv)));
        }
        Ok(Point {
            spectral: self.spectral.build(1.0 / self.alpha_inv)?,
            rho: self.rho,
            penalty: self.penalty,
            support: self.support,
        })
    }

    fn rs_options(&self) -> RsOptions {
        let mut o = RsOptions::for_rho(self.rho);
        o.tol = self.solver.tol;
        o.max_iter = self.solver.max_iter;
        o.damping = self.solver.damping;
        o.quad.radial = self.solver.radial_nodes;
        o
    }

    fn rsb_options(&self) -> RsbOptions {
        let mut o = RsbOptions::for_rho(self.rho);
        o.rs = self.rs_options();
        o.quad = o.rs.quad;
        o.pin_c_zero = self.solver.pin_c_zero;
        o.damping = self.solver.damping;
        o
    }
}

struct Conf {
    kv: BTreeMap<String, (usize, String)>,
    used: Vec<String>,
}

impl Conf {
    fn line(&self, key: &str) -> usize {
        self.kv.get(key).map_or(0, |v| v.0)
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.used.push(key.to_string());
        match self.kv.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config { line: *line, msg: format!("{key}: {e}") }),
        }
    }

    fn req<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.opt(key)?.ok_or_else(|| Error::Config { line: 0, msg: format!("missing required key {key}") })
    }

    fn finish(&self) -> Result<()> {
        for (k, (line, _)) in &self.kv {
            if !self.used.contains(k) {
                return Err(Error::Config { line: *line, msg: format!("unknown key {k}") });
            }
        }
        Ok(())
    }
}

pub fn penalty_from(kind: &str, lambda: f64, lambda0: f64, lambda1: f64) -> std::result::Result<Penalty, String> {
    let p = match kind {
        "ridge" => Penalty::ridge(lambda),
        "ridge-l0" | "ridge_l0" => Penalty::ridge_l0(lambda, lambda0),
        "ridge-l1" | "ridge_l1" => Penalty::ridge_l1(lambda, lambda1),
        _ => return Err(format!("unknown penalty {kind:?}")),
    };
    p.map_err(|e| e.to_string())
}

pub fn support_from(kind: &str, peak: f64, order: u32) -> std::result::Result<Support, String> {
    let s = match kind {
        "complex" => Ok(Support::Complex),
        "disc" => Support::disc(peak),
        "psk" => Support::psk(peak, order),
        _ => return Err(format!("unknown support {kind:?}")),
    };
    s.map_err(|e| e.to_string())
}

fn penalty_name(p: &Penalty) -> &'static str {
    match p.kind() {
        PenaltyKind::Ridge => "ridge",
        PenaltyKind::ZeroNorm => "ridge-l0",
        PenaltyKind::L1 => "ridge-l1",
    }
}

fn support_name(s: &Support) -> &'static str {
    match s {
        Support::Complex => "complex",
        Support::Disc { .. } => "disc",
        Support::Psk { .. } => "psk",
    }
}

/// Everything needed for one asymptotic solve.
#[derive(Debug, Clone)]
pub struct Point {
    pub spectral: SpectralModel,
    pub rho: f64,
    pub penalty: Penalty,
    pub support: Support,
}

impl Point {
    pub fn with_coefficient(&self, which: Variable, v: f64) -> Result<Self> {
        let p = self.penalty;
        let penalty = match which {
            Variable::Lambda => Penalty::new(v, p.lambda0, p.lambda1)?,
            Variable::Lambda0 => Penalty::new(p.lambda, v, p.lambda1)?,
            Variable::Lambda1 => Penalty::new(p.lambda, p.lambda0, v)?,
            _ => return Err(Error::InvalidInput("only penalty coefficients can be tuned".into())),
        };
        Ok(Self { penalty, ..self.clone() })
    }
}

/// One output row. Unused fields are NaN (or empty for counts).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub mode: String,
    pub spectral: String,
    pub alpha_inv: f64,
    pub rho: f64,
    pub penalty: String,
    pub lambda: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub support: String,
    pub peak: f64,
    pub psk_order: Option<u32>,
    pub tas_eta: f64,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub chi: f64,
    pub p: f64,
    pub c: f64,
    pub mu: f64,
    pub xi: f64,
    pub rho_rs: f64,
    pub rho_rsb1: f64,
    pub distortion: f64,
    pub distortion_db: f64,
    /// Monte Carlo standard error of the distortion (finite mode)
    pub distortion_se: f64,
    pub eta: f64,
    pub avg_power: f64,
    pub papr: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub solver_mode: String,
    pub wall_time_ms: f64,
    pub note: String,
}

pub const HEADER: [&str; 34] = [
    "mode", "spectral", "alpha_inv", "rho", "penalty", "lambda", "lambda0", "lambda1", "support", "peak", "psk_order",
    "tas_eta", "n", "trials", "seed", "chi", "p", "c", "mu", "xi", "rho_rs", "rho_rsb1", "distortion", "distortion_db",
    "distortion_se", "eta", "avg_power", "papr", "iterations", "residual", "converged", "solver_mode", "wall_time_ms",
    "note",
];

/// 17 significant digits; `inf`, `-inf` and `nan` literals.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, |x| x.to_string())
}

impl ResultRow {
    fn blank(cfg: &SweepConfig) -> Self {
        let nan = f64::NAN;
        let finite = matches!(cfg.mode, Mode::Finite);
        Self {
            mode: cfg.mode.name().into(),
            spectral: cfg.spectral.to_string(),
            alpha_inv: cfg.alpha_inv,
            rho: cfg.rho,
            penalty: penalty_name(&cfg.penalty).into(),
            lambda: cfg.penalty.lambda,
            lambda0: cfg.penalty.lambda0,
            lambda1: cfg.penalty.lambda1,
            support: support_name(&cfg.support).into(),
            peak: cfg.support.peak().unwrap_or(f64::INFINITY),
            psk_order: match cfg.support {
                Support::Psk { order, .. } => Some(order),
                _ => None,
            },
            tas_eta: cfg.tas_eta,
            n: if finite { cfg.n } else { None },
            trials: if finite { cfg.trials } else { None },
            seed: if finite { Some(cfg.seed) } else { None },
            chi: nan,
            p: nan,
            c: nan,
            mu: nan,
            xi: nan,
            rho_rs: nan,
            rho_rsb1: nan,
            distortion: nan,
            distortion_db: nan,
            distortion_se: nan,
            eta: nan,
            avg_power: nan,
            papr: nan,
            iterations: 0,
            residual: nan,
            converged: false,
            solver_mode: String::new(),
            wall_time_ms: 0.0,
            note: String::new(),
        }
    }

    pub fn to_record(&self) -> Vec<String> {
        let f = fmt_f64;
        vec![
            self.mode.clone(),
            self.spectral.clone(),
            f(self.alpha_inv),
            f(self.rho),
            self.penalty.clone(),
            f(self.lambda),
            f(self.lambda0),
            f(self.lambda1),
            self.support.clone(),
            f(self.peak),
            opt_str(&self.psk_order),
            f(self.tas_eta),
            opt_str(&self.n),
            opt_str(&self.trials),
            opt_str(&self.seed),
            f(self.chi),
            f(self.p),
            f(self.c),
            f(self.mu),
            f(self.xi),
            f(self.rho_rs),
            f(self.rho_rsb1),
            f(self.distortion),
            f(self.distortion_db),
            f(self.distortion_se),
            f(self.eta),
            f(self.avg_power),
            f(self.papr),
            self.iterations.to_string(),
            f(self.residual),
            self.converged.to_string(),
            self.solver_mode.clone(),
            f(self.wall_time_ms),
            self.note.clone(),
        ]
    }

    pub fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != HEADER.len() {
            return Err(Error::InvalidInput(format!("row has {} fields, expected {}", rec.len(), HEADER.len())));
        }
        let g = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            g(i).parse().map_err(|_| Error::InvalidInput(format!("column {}: bad number {:?}", HEADER[i], g(i))))
        };
        fn opt<T: FromStr>(s: &str, col: &str) -> Result<Option<T>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::InvalidInput(format!("column {col}: bad value {s:?}")))
            }
        }
        Ok(Self {
            mode: g(0).into(),
            spectral: g(1).into(),
            alpha_inv: num(2)?,
            rho: num(3)?,
            penalty: g(4).into(),
            lambda: num(5)?,
            lambda0: num(6)?,
            lambda1: num(7)?,
            support: g(8).into(),
            peak: num(9)?,
            psk_order: opt(g(10), HEADER[10])?,
            tas_eta: num(11)?,
            n: opt(g(12), HEADER[12])?,
            trials: opt(g(13), HEADER[13])?,
            seed: opt(g(14), HEADER[14])?,
            chi: num(15)?,
            p: num(16)?,
            c: num(17)?,
            mu: num(18)?,
            xi: num(19)?,
            rho_rs: num(20)?,
            rho_rsb1: num(21)?,
            distortion: num(22)?,
            distortion_db: num(23)?,
            distortion_se: num(24)?,
            eta: num(25)?,
            avg_power: num(26)?,
            papr: num(27)?,
            iterations: opt(g(28), HEADER[28])?.unwrap_or(0),
            residual: num(29)?,
            converged: opt(g(30), HEADER[30])?.unwrap_or(false),
            solver_mode: g(31).into(),
            wall_time_ms: num(32)?,
            note: g(33).into(),
        })
    }

    /// Field-wise equality that treats NaN as equal to NaN.
    pub fn same_as(&self, other: &Self) -> bool {
        self.to_record() == other.to_record()
    }
}

/// CSV writer that flushes after every row.
pub struct RowWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl RowWriter<std::fs::File> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(std::fs::File::create(path)?)
    }
}

impl<W: Write> RowWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &ResultRow) -> Result<()> {
        self.inner.write_record(row.to_record())?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = RowWriter::create(path)?;
    for r in rows {
        w.write(r)?;
    }
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::InvalidInput("unexpected CSV header".into()));
    }
    rdr.records().map(|r| ResultRow::from_record(&r?)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Eta,
    AvgPower,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub value: f64,
    pub achieved: f64,
    pub iterations: usize,
    pub solution: RsSolution,
}

/// RS prediction for ridge precoding on a random `η` fraction of antennas:
/// the selected k×ηn block is a Marchenko-Pastur channel at load `α/η`
/// with regularization `λ/η`; distortion and average power (over all n
/// antennas) carry over unchanged.
pub fn random_tas_rs(point: &Point, eta: f64, lambda: f64, opts: &RsOptions) -> Result<RsSolution> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidInput(format!("η must lie in (0, 1], got {eta}")));
    }
    if !matches!(point.spectral.kind(), crate::spectral::SpectralKind::MarchenkoPastur) {
        return Err(Error::Unsupported("random TAS prediction needs the Marchenko-Pastur model".into()));
    }
    if !matches!(point.support, Support::Complex) {
        return Err(Error::Unsupported("random TAS uses the unconstrained ridge precoder".into()));
    }
    let sm = point.spectral.with_alpha(point.spectral.alpha() / eta)?;
    let mut sol = rs_solver::rs_solve(point.rho, &Penalty::ridge(lambda / eta)?, &Support::Complex, &sm, opts)?;
    sol.eta = eta;
    Ok(sol)
}

/// Starts from `state`, keeping the default start as a fallback.
fn warm_rs(o: &mut RsOptions, state: RsState) {
    let default = RsOptions::for_rho(1.0).init;
    o.extra_inits = vec![default];
    o.init = state;
}

fn metric_of(s: &RsSolution, m: Metric) -> f64 {
    match m {
        Metric::Eta => s.eta,
        Metric::AvgPower => s.avg_power,
    }
}

/// Bisection on one penalty coefficient until the RS metric is within `tol`
/// of `target`. The metric must decrease as the coefficient grows.
///
/// Under-penalized points can lack a finite fixed point (χ → ∞, e.g. more
/// active antennas than users with λ = 0); they sit on the fully active end
/// of the range and are treated as lying above the target.
pub fn calibrate(point: &Point, metric: Metric, target: f64, tunable: Variable, tol: f64, opts: &RsOptions) -> Result<Calibration> {
    let mut opts = opts.clone();
    let eval = |v: f64, o: &mut RsOptions| -> Result<Option<RsSolution>> {
        match rs_solver::rs_solve(point.rho, &point.with_coefficient(tunable, v)?.penalty, &point.support, &point.spectral, o) {
            Ok(s) => {
                warm_rs(o, s.state);
                Ok(Some(s))
            }
            Err(Error::Divergence { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let above = |s: &Option<RsSolution>| s.as_ref().map_or(true, |s| metric_of(s, metric) > target);
    let mut iterations = 1;
    if let Some(s0) = eval(0.0, &mut opts)? {
        let m0 = metric_of(&s0, metric);
        if (m0 - target).abs() < tol {
            return Ok(Calibration { value: 0.0, achieved: m0, iterations, solution: s0 });
        }
        if m0 < target {
            return Err(Error::NoBracket(format!("metric at zero coefficient is {m0}, below target {target}")));
        }
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut s_hi = eval(hi, &mut opts)?;
    while above(&s_hi) {
        lo = hi;
        hi *= 2.0;
        iterations += 1;
        if hi > 1e12 {
            return Err(Error::NoBracket(format!("target {target} not reached for coefficients up to 1e12")));
        }
        s_hi = eval(hi, &mut opts)?;
    }
    let mut best: Option<(f64, f64, RsSolution)> = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        iterations += 1;
        let s = eval(mid, &mut opts)?;
        if let Some(s) = &s {
            let m = metric_of(s, metric);
            if (m - target).abs() < tol {
                return Ok(Calibration { value: mid, achieved: m, iterations, solution: s.clone() });
            }
            if best.as_ref().map_or(true, |b| (m - target).abs() < b.0) {
                best = Some(((m - target).abs(), mid, s.clone()));
            }
        }
        if above(&s) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1e-300) {
            break;
        }
    }
    Err(match best {
        Some((_, v, s)) => Error::NoBracket(format!("metric jumps across {target} near coefficient {v} (closest {})", metric_of(&s, metric))),
        None => Error::NoBracket(format!("no finite fixed point while bracketing {target}")),
    })
}

/// `calibrate` for the active fraction to `1e-4`.
pub fn calibrate_eta(point: &Point, target_eta: f64, tunable: Variable, opts: &RsOptions) -> Result<Calibration> {
    calibrate(point, Metric::Eta, target_eta, tunable, 1e-4, opts)
}

/// Tunes `power_knob` for average power `target_power` while `eta_knob` holds
/// the active fraction at `target_eta`. Returns `(power_knob, eta_knob, solution)`.
///
/// Small power-knob values where `target_eta` cannot be reached (no finite
/// fixed point, or η jumping across the target) count as above the target
/// power, as the under-regularized end of the range.
pub fn calibrate_joint(
    point: &Point,
    target_eta: f64,
    eta_knob: Variable,
    target_power: f64,
    power_knob: Variable,
    opts: &RsOptions,
) -> Result<(f64, f64, RsSolution)> {
    let inner = |v: f64| -> Result<Option<Calibration>> {
        match calibrate_eta(&point.with_coefficient(power_knob, v)?, target_eta, eta_knob, opts) {
            Ok(c) => Ok(Some(c)),
            Err(Error::NoBracket(_)) | Err(Error::Divergence { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let above = |c: &Option<Calibration>| c.as_ref().map_or(true, |c| c.solution.avg_power > target_power);
    let (mut lo, mut hi) = (0.0, 1.0);
    if let Some(c) = inner(lo)? {
        if c.solution.avg_power < target_power {
            return Err(Error::NoBracket(format!("power {} at zero already below {target_power}", c.solution.avg_power)));
        }
    }
    let mut c_hi = inner(hi)?;
    while above(&c_hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoBracket(format!("power {target_power} not reached")));
        }
        c_hi = inner(hi)?;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let c = inner(mid)?;
        if let Some(c) = &c {
            let pw = c.solution.avg_power;
            if (pw - target_power).abs() < 1e-5 * target_power || hi - lo < 1e-12 {
                return Ok((mid, c.value, c.solution.clone()));
            }
        }
        if above(&c) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence { what: "joint calibration", residual: hi - lo })
}

/// Warm-start state carried along a sweep.
#[derive(Debug, Clone, Copy, Default)]
pub struct Warm {
    pub rs: Option<RsState>,
    pub rsb: Option<RsbState>,
}

fn fill_rs(row: &mut ResultRow, s: &RsSolution) {
    row.chi = s.state.chi;
    row.p = s.state.p;
    row.c = 0.0;
    row.xi = s.xi;
    row.rho_rs = s.rho_rs;
    row.rho_rsb1 = 0.0;
    row.distortion = s.distortion;
    row.distortion_db = s.distortion_db;
    row.eta = s.eta;
    row.avg_power = s.avg_power;
    row.papr = s.papr;
    row.iterations = s.iterations;
    row.residual = s.residual;
    row.converged = s.converged;
}

/// Evaluates one sweep point; failures end up in the row.
pub fn run_point(cfg: &SweepConfig, warm: &mut Warm) -> ResultRow {
    let t0 = Instant::now();
    let mut row = ResultRow::blank(cfg);
    if let Err(e) = eval_point(cfg, warm, &mut row) {
        row.converged = false;
        row.note = e.to_string();
    }
    if cfg.solver.timing {
        row.wall_time_ms = t0.elapsed().as_secs_f64() * 1e3;
    }
    row
}

fn eval_point(cfg: &SweepConfig, warm: &mut Warm, row: &mut ResultRow) -> Result<()> {
    let mut cfg = cfg.clone();
    let mut rs_opts = cfg.rs_options();
    if cfg.solver.warm_start {
        if let Some(w) = warm.rs {
            warm_rs(&mut rs_opts, w);
        }
    }
    if let Some((tune, eta)) = cfg.target_eta {
        let point = cfg.point()?;
        let cal = calibrate_eta(&point, eta, tune, &rs_opts)?;
        cfg.penalty = point.with_coefficient(tune, cal.value)?.penalty;
        row.lambda = cfg.penalty.lambda;
        row.lambda0 = cfg.penalty.lambda0;
        row.lambda1 = cfg.penalty.lambda1;
    }
    let point = cfg.point()?;
    match cfg.mode {
        Mode::Rs => {
            row.solver_mode = "rs".into();
            let s = rs_solver::rs_solve(point.rho, &point.penalty, &point.support, &point.spectral, &rs_opts)?;
            fill_rs(row, &s);
            warm.rs = Some(s.state);
        }
        Mode::RandomTas => {
            row.solver_mode = "rs_random_tas".into();
            let s = random_tas_rs(&point, cfg.tas_eta, point.penalty.lambda, &rs_opts)?;
            fill_rs(row, &s);
            warm.rs = Some(s.state);
        }
        Mode::Rsb => {
            let mut o = cfg.rsb_options();
            o.rs = rs_opts;
            if cfg.solver.warm_start {
                o.init = warm.rsb;
            }
            let s = rsb_solver::rsb_solve(point.rho, &point.penalty, &point.support, &point.spectral, &o)?;
            row.solver_mode = if s.fell_back_to_rs { "rsb_fallback_rs".into() } else { "rsb".into() };
            row.chi = s.state.chi;
            row.p = s.state.p;
            row.c = s.state.c;
            row.mu = s.state.mu;
            row.xi = s.xi;
            row.rho_rs = s.rho_rs;
            row.rho_rsb1 = s.rho1;
            row.distortion = s.distortion;
            row.distortion_db = s.distortion_db;
            row.eta = s.eta;
            row.avg_power = s.avg_power;
            row.papr = s.papr;
            row.iterations = s.iterations;
            row.residual = s.mu_residual;
            row.converged = s.converged;
            if s.roots.len() > 1 {
                row.note = format!("{} roots in μ; lowest distortion reported", s.roots.len());
            }
            warm.rs = Some(s.rs.state);
            if !s.fell_back_to_rs {
                warm.rsb = Some(s.state);
            }
        }
        Mode::DecoupledEval => {
            row.solver_mode = "decoupled".into();
            let e = rs_solver::rs_expectations(cfg.xi, cfg.rho_rs, &point.penalty, &point.support, &rs_opts.quad)?;
            row.xi = cfg.xi;
            row.rho_rs = cfg.rho_rs;
            row.p = e.power;
            row.chi = cfg.xi / cfg.rho_rs * e.corr;
            row.eta = e.eta;
            row.avg_power = e.power;
            row.papr = rs_solver::papr(&point.support, e.power);
            row.converged = true;
        }
        Mode::Finite => finite_point(&cfg, &point, row)?,
    }
    Ok(())
}

fn finite_point(cfg: &SweepConfig, point: &Point, row: &mut ResultRow) -> Result<()> {
    let n = cfg.n.ok_or_else(|| Error::InvalidInput("finite mode needs n".into()))?;
    let trials = cfg.trials.ok_or_else(|| Error::InvalidInput("finite mode needs trials".into()))?;
    let alpha = point.spectral.alpha();
    let model = match cfg.spectral {
        SpectralSpec::Mp => ChannelModel::IidGaussian,
        _ => ChannelModel::HaarSpectrum(point.spectral.clone()),
    };
    let solver = cfg.solver.finite_solver;
    let coord = CoordinateOptions { restarts: cfg.solver.restarts, ..Default::default() };
    let convex = ConvexOptions { tol: 1e-12, max_iter: cfg.solver.max_iter.max(20_000) };
    let tas_eta = cfg.tas_eta;
    row.solver_mode = format!("finite_{solver:?}").to_lowercase();
    let results = finite_sim::run_trials(trials, cfg.seed, |seed| {
        let inst = finite_sim::sample_instance(n, alpha, point.rho, point.penalty, point.support, model.clone(), seed)?;
        match solver {
            FiniteSolver::Auto => finite_sim::solve_auto(&inst),
            FiniteSolver::Convex => finite_sim::solve_convex(&inst, &convex),
            FiniteSolver::Coordinate => finite_sim::solve_coordinate(&inst, &coord),
            FiniteSolver::Rzf => finite_sim::random_tas(&inst, 1.0, point.penalty.lambda),
            FiniteSolver::RandomTas => finite_sim::random_tas(&inst, tas_eta, point.penalty.lambda),
        }
    });
    let results: Vec<_> = results.into_iter().collect::<Result<_>>()?;
    let t = results.len() as f64;
    let mean = |f: &dyn Fn(&finite_sim::SolveResult) -> f64| results.iter().map(f).sum::<f64>() / t;
    let d = mean(&|r| r.distortion);
    let var = results.iter().map(|r| (r.distortion - d).powi(2)).sum::<f64>() / (t - 1.0).max(1.0);
    row.distortion = d;
    row.distortion_db = rs_solver::to_db(d);
    row.distortion_se = (var / t).sqrt();
    row.eta = mean(&|r| r.active_fraction);
    row.avg_power = mean(&|r| r.avg_power);
    row.papr = rs_solver::papr(&point.support, row.avg_power);
    row.iterations = results.iter().map(|r| r.iterations).sum();
    row.converged = results.iter().all(|r| r.converged);
    Ok(())
}

/// Runs every sweep point. Warm-started sweeps are sequential; cold sweeps
/// run in parallel. Rows keep sweep order and go to the configured CSV.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<ResultRow>> {
    let values = cfg.range.values();
    let points: Vec<SweepConfig> = values.iter().map(|v| cfg.at(*v)).collect::<Result<_>>()?;
    let mut writer = match &cfg.output {
        Some(p) => Some(RowWriter::create(p)?),
        None => None,
    };
    let rows = if cfg.solver.warm_start {
        let mut warm = Warm::default();
        let mut rows = Vec::with_capacity(points.len());
        for p in &points {
            let r = run_point(p, &mut warm);
            if let Some(w) = writer.as_mut() {
                w.write(&r)?;
            }
            rows.push(r);
        }
        rows
    } else {
        let rows: Vec<ResultRow> = points.par_iter().map(|p| run_point(p, &mut Warm::default())).collect();
        if let Some(w) = writer.as_mut() {
            for r in &rows {
                w.write(r)?;
            }
        }
        rows
    };
    Ok(rows)
}
