use replica_lse::harness::*;
use replica_lse::rs_solver::{rs_solve, RsOptions};
use replica_lse::{Penalty, SpectralModel, Support};

const RS_SWEEP: &str = "
[sweep]
mode = rs
variable = alpha_inv
start = 1
stop = 3
step = 0.5

[problem]
rho = 1
penalty = ridge-l1
lambda = 0.1
target_eta = 0.3
tune = lambda1
support = disc
peak = 1
";

const FINITE: &str = "
[sweep]
mode = finite
variable = lambda
start = 0.05
stop = 0.15
step = 0.05

[problem]
alpha_inv = 2
penalty = ridge-l1
lambda1 = 0.4
support = complex

[finite]
n = 64
trials = 4
seed = 99
";

fn point(alpha: f64, pen: Penalty, sup: Support) -> Point {
    Point { spectral: SpectralModel::marchenko_pastur(alpha).unwrap(), rho: 1.0, penalty: pen, support: sup }
}

#[test]
fn sweeps_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for text in [RS_SWEEP, FINITE] {
        let mut bytes = Vec::new();
        for i in 0..2 {
            let mut c = SweepConfig::parse(text).unwrap();
            let path = dir.path().join(format!("{i}.csv"));
            c.output = Some(path.clone());
            run_sweep(&c).unwrap();
            bytes.push(std::fs::read(path).unwrap());
        }
        assert_eq!(bytes[0], bytes[1]);
    }
}

#[test]
fn warm_and_cold_sweeps_agree() {
    let warm = SweepConfig::parse(RS_SWEEP).unwrap();
    let mut cold = warm.clone();
    cold.solver.warm_start = false;
    let a = run_sweep(&warm).unwrap();
    let b = run_sweep(&cold).unwrap();
    assert_eq!(a.len(), 5);
    for (x, y) in a.iter().zip(&b) {
        assert!(x.converged && y.converged);
        assert!((x.distortion - y.distortion).abs() < 1e-6 * x.distortion);
        assert!((x.eta - 0.3).abs() < 1e-4);
    }
}

#[test]
fn single_point_sweep_matches_direct_call() {
    let pen = Penalty::ridge_l0(0.1, 0.4).unwrap();
    let cfg = SweepConfig::single(Mode::Rs, 2.0, 1.0, pen, Support::Complex);
    let rows = run_sweep(&cfg).unwrap();
    let direct = rs_solve(1.0, &pen, &Support::Complex, &SpectralModel::marchenko_pastur(0.5).unwrap(), &RsOptions::for_rho(1.0)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].distortion, direct.distortion);
    assert_eq!(rows[0].eta, direct.eta);
}

#[test]
fn zero_norm_calibration_matches_threshold_formula() {
    for eta in [0.2, 0.5, 0.8] {
        let p = point(0.5, Penalty::ridge_l0(0.1, 0.0).unwrap(), Support::Complex);
        let c = calibrate_eta(&p, eta, Variable::Lambda0, &RsOptions::for_rho(1.0)).unwrap();
        let s = &c.solution;
        // η = exp(−τ₀²/ρ_rs), τ₀² = ξλ₀(1+ξλ)
        let l0 = s.rho_rs * (1.0 / c.achieved).ln() / (s.xi * (1.0 + s.xi * 0.1));
        assert!((c.value - l0).abs() < 1e-9 * l0, "{} vs {l0}", c.value);
        assert!((c.achieved - eta).abs() < 1e-4);
    }
}

#[test]
fn l1_calibration_is_fast() {
    let p = point(0.5, Penalty::ridge_l1(0.1, 0.0).unwrap(), Support::Complex);
    let c = calibrate_eta(&p, 0.3, Variable::Lambda1, &RsOptions::for_rho(1.0)).unwrap();
    assert!((c.achieved - 0.3).abs() < 1e-4);
    assert!(c.iterations <= 40, "{}", c.iterations);
}

#[test]
fn calibration_rejects_unreachable_target() {
    // a ridge precoder on ℂ is always fully active
    let p = point(0.5, Penalty::ridge(0.1).unwrap(), Support::Complex);
    assert!(calibrate_eta(&p, 0.3, Variable::Lambda, &RsOptions::for_rho(1.0)).is_err());
}

#[test]
fn random_tas_prediction_at_full_activity_is_rzf() {
    let p = point(0.25, Penalty::ridge(0.05).unwrap(), Support::Complex);
    let a = random_tas_rs(&p, 1.0, 0.05, &RsOptions::for_rho(1.0)).unwrap();
    let b = rs_solve(1.0, &p.penalty, &p.support, &p.spectral, &RsOptions::for_rho(1.0)).unwrap();
    assert!((a.distortion - b.distortion).abs() < 1e-12);
    let half = random_tas_rs(&p, 0.5, 0.05, &RsOptions::for_rho(1.0)).unwrap();
    assert!(half.distortion > a.distortion);
}

#[test]
fn failures_land_in_rows() {
    let mut cfg = SweepConfig::single(Mode::RandomTas, 2.0, 1.0, Penalty::ridge(0.1).unwrap(), Support::disc(1.0).unwrap());
    cfg.tas_eta = 0.5;
    let rows = run_sweep(&cfg).unwrap();
    assert!(!rows[0].converged);
    assert!(!rows[0].note.is_empty());
}

#[test]
fn csv_round_trip_keeps_values() {
    let dir = tempfile::tempdir().unwrap();
    let rows = run_sweep(&SweepConfig::parse(FINITE).unwrap()).unwrap();
    write_csv(&rows, dir.path().join("f.csv")).unwrap();
    let back = read_csv(dir.path().join("f.csv")).unwrap();
    assert_eq!(rows.len(), back.len());
    for (a, b) in rows.iter().zip(&back) {
        assert!(a.same_as(b));
        assert_eq!(a.distortion_se, b.distortion_se);
    }
}
