use replica_lse::rs_solver::{rs_expectations, rs_solve, QuadOptions, RsOptions};
use replica_lse::{Penalty, SpectralModel, Support};
use statrs::function::erf::erfc;

// E over the Marchenko-Pastur law of HHᴴ (k×k, ratio α = k/n) of f, plus the
// atom at zero when α > 1.
fn mp_expect(alpha: f64, f: impl Fn(f64) -> f64) -> f64 {
    let a = (1.0 - alpha.sqrt()).powi(2);
    let b = (1.0 + alpha.sqrt()).powi(2);
    let n = 4000;
    let mut s = 0.0;
    // x = a + (b−a)(1−cos θ)/2 removes the square-root endpoints
    for i in 0..n {
        let th = std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
        let x = a + 0.5 * (b - a) * (1.0 - th.cos());
        let dx = 0.5 * (b - a) * th.sin() * std::f64::consts::PI / n as f64;
        let dens = ((b - x) * (x - a)).max(0.0).sqrt() / (2.0 * std::f64::consts::PI * alpha * x);
        s += dens * f(x) * dx;
    }
    if alpha > 1.0 {
        s += (1.0 - 1.0 / alpha) * f(0.0);
    }
    s
}

#[test]
fn ridge_matches_mp_integral() {
    for (alpha, lam, rho) in [(0.5, 0.1, 1.0), (1.0, 0.3, 2.0), (2.0, 0.05, 1.0)] {
        let sm = SpectralModel::marchenko_pastur(alpha).unwrap();
        let s = rs_solve(rho, &Penalty::ridge(lam).unwrap(), &Support::Complex, &sm, &RsOptions::for_rho(rho)).unwrap();
        // residual of RZF is −λ(HHᴴ+λ)⁻¹√ρ s
        let d = rho * lam * lam * mp_expect(alpha, |x| 1.0 / (x + lam).powi(2));
        let p = rho * alpha * mp_expect(alpha, |x| x / (x + lam).powi(2));
        assert!(s.converged);
        assert!(((s.distortion - d) / d).abs() < 1e-6, "α={alpha}: {} vs {d}", s.distortion);
        assert!(((s.avg_power - p) / p).abs() < 1e-6, "α={alpha}: {} vs {p}", s.avg_power);
        assert_eq!(s.eta, 1.0);
    }
}

#[test]
fn activity_closed_forms() {
    let q = QuadOptions::default();
    let (xi, rho_rs) = (1.3, 0.7);
    // ℓ1 on ℂ: active iff |t| > ξλ₁/2
    let pen = Penalty::ridge_l1(0.2, 0.9).unwrap();
    let e = rs_expectations(xi, rho_rs, &pen, &Support::Complex, &q).unwrap();
    let t1 = 0.5 * xi * 0.9;
    assert!((e.eta - (-t1 * t1 / rho_rs).exp()).abs() < 1e-10);
    // zero norm on ℂ
    let pen = Penalty::ridge_l0(0.2, 0.4).unwrap();
    let e = rs_expectations(xi, rho_rs, &pen, &Support::Complex, &q).unwrap();
    let t0sq = xi * 0.4 * (1.0 + xi * 0.2);
    assert!((e.eta - (-t0sq / rho_rs).exp()).abs() < 1e-10);
    // BPSK: active iff |Re t| > τ, Re t ~ N(0, ρ_rs/2)
    let pen = Penalty::ridge(0.3).unwrap();
    let e = rs_expectations(xi, rho_rs, &pen, &Support::psk(1.0, 2).unwrap(), &q).unwrap();
    let tau = 0.5 * (1.0 + xi * 0.3);
    assert!((e.eta - erfc(tau / rho_rs.sqrt())).abs() < 1e-10);
    assert!((e.power - e.eta).abs() < 1e-12);
}

#[test]
fn disc_power_respects_peak() {
    let sm = SpectralModel::marchenko_pastur(0.5).unwrap();
    let sup = Support::disc(0.3).unwrap();
    let s = rs_solve(1.0, &Penalty::ridge(0.05).unwrap(), &sup, &sm, &RsOptions::for_rho(1.0)).unwrap();
    assert!(s.avg_power <= 0.3 + 1e-12);
    assert!((s.papr - 0.3 / s.avg_power).abs() < 1e-12);
}

#[test]
fn unregularized_underdetermined_is_reported() {
    // λ = 0 with α < 1 has no finite fixed point (zero distortion regime)
    let sm = SpectralModel::marchenko_pastur(0.5).unwrap();
    let r = rs_solve(1.0, &Penalty::ridge(0.0).unwrap(), &Support::Complex, &sm, &RsOptions::for_rho(1.0));
    match r {
        Err(_) => {}
        Ok(s) => assert!(s.distortion < 1e-6),
    }
}

#[test]
fn warm_start_reaches_same_point() {
    let sm = SpectralModel::marchenko_pastur(0.5).unwrap();
    let pen = Penalty::ridge_l1(0.1, 0.8).unwrap();
    let cold = rs_solve(1.0, &pen, &Support::Complex, &sm, &RsOptions::for_rho(1.0)).unwrap();
    let mut o = RsOptions::for_rho(1.0);
    o.init = replica_lse::rs_solver::RsState { chi: cold.state.chi * 1.3, p: cold.state.p * 0.7 };
    let warm = rs_solve(1.0, &pen, &Support::Complex, &sm, &o).unwrap();
    assert!(((warm.distortion - cold.distortion) / cold.distortion).abs() < 1e-8);
}
