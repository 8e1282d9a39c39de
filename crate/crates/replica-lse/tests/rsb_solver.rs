mod common;

use replica_lse::rs_solver::{rs_solve, QuadOptions, RsOptions};
use replica_lse::rsb_solver::{rsb_effective_params, rsb_expectations, rsb_mu_residual, rsb_solve, RsbOptions, TiltedDensityParams};
use replica_lse::{Penalty, SpectralModel, Support};

#[test]
fn pinned_c_reproduces_rs() {
    let cases = [
        (0.5, Penalty::ridge(0.1).unwrap(), Support::Complex),
        (0.5, Penalty::ridge_l1(0.1, 0.7).unwrap(), Support::Complex),
        (0.5, Penalty::ridge_l0(0.05, 0.3).unwrap(), Support::disc(1.0).unwrap()),
        (0.2, Penalty::ridge(0.34).unwrap(), Support::psk(1.0, 2).unwrap()),
    ];
    for (alpha, pen, sup) in cases {
        let sm = SpectralModel::marchenko_pastur(alpha).unwrap();
        let rs = rs_solve(1.0, &pen, &sup, &sm, &RsOptions::for_rho(1.0)).unwrap();
        let mut o = RsbOptions::for_rho(1.0);
        o.pin_c_zero = true;
        let rsb = rsb_solve(1.0, &pen, &sup, &sm, &o).unwrap();
        assert_eq!(rsb.state.c, 0.0);
        assert!((rsb.distortion - rs.distortion).abs() < 1e-8, "{pen:?} {sup:?}: {} {}", rsb.distortion, rs.distortion);
        assert!((rsb.eta - rs.eta).abs() < 1e-8);
    }
}

#[test]
fn info_plus_kl_matches_definitions() {
    let st = common::BPSK_STATE;
    let alpha = 1.0 / common::BPSK_ALPHA_INV;
    let sm = SpectralModel::marchenko_pastur(alpha).unwrap();
    let prm = rsb_effective_params(st, 1.0, &sm).unwrap();
    let pen = Penalty::ridge(common::BPSK_LAMBDA).unwrap();
    let td = TiltedDensityParams { mu: st.mu, xi: prm.xi, rho1: prm.rho1, penalty: pen, support: Support::psk(1.0, 2).unwrap() };
    let e = rsb_expectations(&td, prm.rho_rs, &QuadOptions::default()).unwrap();
    let want = common::bpsk_info_plus_kl(st, 1.0, alpha, common::BPSK_LAMBDA, 0.0);
    let got = e.info_plus_kl(st.mu, prm.xi);
    assert!((got - want).abs() < 1e-4, "{got} vs {want}");
}

#[test]
fn stored_root_is_stationary() {
    let st = common::BPSK_STATE;
    let sm = SpectralModel::marchenko_pastur(1.0 / common::BPSK_ALPHA_INV).unwrap();
    let pen = Penalty::ridge(common::BPSK_LAMBDA).unwrap();
    let r = rsb_mu_residual(st, 1.0, &sm, &pen, &Support::psk(1.0, 2).unwrap(), &QuadOptions::default()).unwrap();
    // λ is rounded to 5 digits, so the root moves slightly
    assert!(r.abs() < 1e-4, "{r}");
}

#[test]
fn convex_problem_falls_back_to_rs() {
    // ridge on ℂ is strictly convex: no nontrivial RSB root
    let sm = SpectralModel::marchenko_pastur(0.5).unwrap();
    let pen = Penalty::ridge(0.2).unwrap();
    let mut o = RsbOptions::for_rho(1.0);
    o.probes_per_decade = 2;
    let s = rsb_solve(1.0, &pen, &Support::Complex, &sm, &o).unwrap();
    assert!(s.fell_back_to_rs || s.state.c.abs() < 1e-8);
    assert!((s.distortion - s.rs.distortion).abs() < 1e-8);
}
