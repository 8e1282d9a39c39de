use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use replica_lse::harness::{self, Mode, ResultRow, SpectralSpec, SweepConfig, Variable};
use replica_lse::{decoupled, Error};

#[derive(Parser)]
#[command(name = "replica-lse", about = "Asymptotic and finite-size analysis of LSE precoders")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replica-symmetric fixed point
    Rs(Common),
    /// One-step RSB fixed point
    Rsb {
        #[command(flatten)]
        common: Common,
        /// force c = 0
        #[arg(long)]
        pin_c_zero: bool,
    },
    /// Finite-size simulation
    Finite {
        #[command(flatten)]
        common: Common,
        /// auto | convex | coordinate | rzf | random_tas
        #[arg(long, default_value = "auto")]
        solver: String,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
    },
    /// RS prediction (or finite simulation with --n) for random antenna selection
    RandomTas {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eta: f64,
    },
    /// Decoupled scalar precoder at one input
    Decoupled {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        xi: f64,
        #[arg(long)]
        re: f64,
        #[arg(long, default_value_t = 0.0)]
        im: f64,
    },
    /// Run a sweep described by a config file
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune one penalty coefficient to reach a target active fraction
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target_eta: f64,
        /// lambda | lambda0 | lambda1
        #[arg(long)]
        tune: String,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 1.0)]
    alpha_inv: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// ridge | ridge-l0 | ridge-l1
    #[arg(long, default_value = "ridge")]
    penalty: String,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda0: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda1: f64,
    /// complex | disc | psk
    #[arg(long, default_value = "complex")]
    support: String,
    #[arg(long, default_value_t = 1.0)]
    peak: f64,
    #[arg(long, default_value_t = 2)]
    psk_order: u32,
    /// mp | point | point:<atom> | file:<path>
    #[arg(long, default_value = "mp")]
    spectral: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::Config { .. } | Error::Unsupported(_) | Error::Domain(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other),
        }
    }
}

fn config(mode: Mode, c: &Common) -> Result<SweepConfig, Failure> {
    let penalty = harness::penalty_from(&c.penalty, c.lambda, c.lambda0, c.lambda1).map_err(Failure::Usage)?;
    let support = harness::support_from(&c.support, c.peak, c.psk_order).map_err(Failure::Usage)?;
    let mut cfg = SweepConfig::single(mode, c.alpha_inv, c.rho, penalty, support);
    cfg.spectral = c.spectral.parse::<SpectralSpec>().map_err(Failure::Usage)?;
    cfg.n = c.n;
    cfg.trials = c.trials;
    cfg.seed = c.seed;
    cfg.output = c.out.clone();
    if let Some(t) = c.tol {
        cfg.solver.tol = t;
    }
    if let Some(m) = c.max_iter {
        cfg.solver.max_iter = m;
    }
    Ok(cfg)
}

fn print_rows(rows: &[ResultRow]) -> Result<bool, Failure> {
    let mut w = harness::RowWriter::new(std::io::stdout()).map_err(Failure::Run)?;
    for r in rows {
        w.write(r).map_err(Failure::Run)?;
    }
    Ok(rows.iter().all(|r| r.converged))
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let cfg = match cli.cmd {
        Cmd::Rs(c) => config(Mode::Rs, &c)?,
        Cmd::Rsb { common, pin_c_zero } => {
            let mut cfg = config(Mode::Rsb, &common)?;
            cfg.solver.pin_c_zero = pin_c_zero;
            cfg
        }
        Cmd::Finite { common, solver, restarts } => {
            if common.n.is_none() || common.trials.is_none() {
                return Err(Failure::Usage("finite needs --n and --trials".into()));
            }
            let mut cfg = config(Mode::Finite, &common)?;
            cfg.solver.finite_solver = solver.parse().map_err(Failure::Usage)?;
            cfg.solver.restarts = restarts;
            cfg
        }
        Cmd::RandomTas { common, eta } => {
            let finite = common.n.is_some();
            let mut cfg = config(if finite { Mode::Finite } else { Mode::RandomTas }, &common)?;
            if finite {
                cfg.trials = cfg.trials.or(Some(1));
                cfg.solver.finite_solver = harness::FiniteSolver::RandomTas;
            }
            cfg.tas_eta = eta;
            cfg
        }
        Cmd::Decoupled { common, xi, re, im } => {
            let cfg = config(Mode::DecoupledEval, &common)?;
            let x = decoupled::solve_scalar(Complex64::new(re, im), xi, &cfg.penalty, &cfg.support)?;
            let obj = decoupled::objective(x, Complex64::new(re, im), xi, &cfg.penalty);
            println!("x_re,x_im,objective");
            println!("{},{},{}", harness::fmt_f64(x.re), harness::fmt_f64(x.im), harness::fmt_f64(obj));
            return Ok(true);
        }
        Cmd::Sweep { config, out } => {
            let mut cfg = SweepConfig::from_file(&config)?;
            if out.is_some() {
                cfg.output = out;
            }
            let rows = harness::run_sweep(&cfg)?;
            if cfg.output.is_none() {
                return print_rows(&rows);
            }
            return Ok(rows.iter().all(|r| r.converged));
        }
        Cmd::Calibrate { common, target_eta, tune } => {
            let cfg = config(Mode::Rs, &common)?;
            let tune: Variable = tune.parse().map_err(Failure::Usage)?;
            let point = harness::Point {
                spectral: cfg.spectral.build(1.0 / cfg.alpha_inv)?,
                rho: cfg.rho,
                penalty: cfg.penalty,
                support: cfg.support,
            };
            let mut o = replica_lse::rs_solver::RsOptions::for_rho(cfg.rho);
            o.tol = cfg.solver.tol;
            let c = harness::calibrate_eta(&point, target_eta, tune, &o)?;
            println!("coefficient,eta,iterations,distortion");
            println!("{},{},{},{}", harness::fmt_f64(c.value), harness::fmt_f64(c.achieved), c.iterations, harness::fmt_f64(c.solution.distortion));
            return Ok(true);
        }
    };
    let rows = harness::run_sweep(&cfg)?;
    if cfg.output.is_none() {
        print_rows(&rows)
    } else {
        Ok(rows.iter().all(|r| r.converged))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
