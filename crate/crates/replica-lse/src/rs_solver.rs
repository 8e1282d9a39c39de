//! Replica-symmetric fixed point.
//!
//! With `ξ = 1/R(−χ)` and `ρ_rs = ξ²[ρR(−χ) − (ρχ − p)R'(−χ)]`, the decoupled
//! input is `s ~ CN(0, ρ_rs)` and the order parameters solve
//! `p = E|x|²`, `χ = (ξ/ρ_rs)·E Re(x̄s)` with `x = x^dec(s)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::decoupled::{self, Penalty, Support, Symmetry};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::spectral::SpectralModel;

/// Quadrature resolution shared by the RS and RSB solvers.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    /// Radial (or real-line) nodes of the outer Gaussian integral.
    pub radial: usize,
    /// Angular nodes per PSK sector.
    pub angular: usize,
    /// Inner nodes per axis for the tilted density.
    pub inner: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { radial: 200, angular: 64, inner: 96 }
    }
}

// Gaussian tails beyond e^{-45} are dropped
pub(crate) const TAIL: f64 = 45.0;

/// Nodes `(s, w)` for `E f(s)`, `s ~ CN(0, var)`, reduced by the support's
/// symmetry. Valid for functionals invariant under that symmetry (|x|²,
/// Re x̄s, activity, tilt).
pub(crate) fn outer_nodes(var: f64, xi: f64, pen: &Penalty, sup: &Support, q: &QuadOptions) -> Vec<(Complex64, f64)> {
    let pieces = (q.radial / 20).max(2);
    let rule = quadrature::legendre(20);
    match sup.symmetry() {
        Symmetry::Radial => {
            let hi = (TAIL * var).sqrt();
            let b = quadrature::refine(&quadrature::breakpoints(0.0, hi, &decoupled::radial_breaks(xi, pen, sup)), hi / pieces as f64);
            quadrature::piecewise(&rule, &b)
                .into_iter()
                .map(|(r, w)| (Complex64::new(r, 0.0), w * 2.0 * r / var * (-r * r / var).exp()))
                .collect()
        }
        Symmetry::RealLine => {
            // Re s ~ N(0, var/2); fold a → |a|
            let hi = (TAIL * var).sqrt();
            let tau = decoupled::psk_threshold(xi, pen, sup.peak().unwrap_or(1.0));
            let b = quadrature::refine(&quadrature::breakpoints(0.0, hi, &[tau]), hi / pieces as f64);
            let norm = 2.0 / (PI * var).sqrt();
            quadrature::piecewise(&rule, &b)
                .into_iter()
                .map(|(a, w)| (Complex64::new(a, 0.0), w * norm * (-a * a / var).exp()))
                .collect()
        }
        Symmetry::Sector(m) => {
            let hi = (TAIL * var).sqrt();
            let tau = decoupled::psk_threshold(xi, pen, sup.peak().unwrap_or(1.0));
            let half = PI / m as f64;
            let ang = quadrature::legendre(q.angular);
            let mut out = Vec::new();
            for (t, wt) in quadrature::piecewise(&ang, &[-half, half]) {
                let b = quadrature::refine(&quadrature::breakpoints(0.0, hi, &[tau / t.cos()]), hi / pieces as f64);
                for (r, wr) in quadrature::piecewise(&rule, &b) {
                    let w = wt * wr * m as f64 * r / (PI * var) * (-r * r / var).exp();
                    out.push((Complex64::from_polar(r, t), w));
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsState {
    pub chi: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams {
    pub xi: f64,
    pub rho_rs: f64,
}

/// `ξ = 1/R(−χ)` and `ρ_rs = ξ²[ρR(−χ) − (ρχ − p)R'(−χ)]`.
pub fn rs_effective_params(state: RsState, rho: f64, spectral: &SpectralModel) -> Result<EffectiveParams> {
    let r = spectral.r_transform(-state.chi)?;
    let rp = spectral.r_derivative(-state.chi)?;
    if !(r > 0.0) {
        return Err(Error::Infeasible(format!("R(−χ) = {r} at χ = {}", state.chi)));
    }
    let xi = 1.0 / r;
    let rho_rs = xi * xi * (rho * r - (rho * state.chi - state.p) * rp);
    if !(rho_rs > 0.0 && rho_rs.is_finite()) {
        return Err(Error::Infeasible(format!("ρ_rs = {rho_rs}")));
    }
    Ok(EffectiveParams { xi, rho_rs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsExpectations {
    /// `E|x|²`
    pub power: f64,
    /// `E Re(x̄s)`
    pub corr: f64,
    /// `P(x ≠ 0)`
    pub eta: f64,
}

/// Moments of the decoupled output for `s ~ CN(0, ρ_rs)`.
pub fn rs_expectations(xi: f64, rho_rs: f64, pen: &Penalty, sup: &Support, q: &QuadOptions) -> Result<RsExpectations> {
    if !(rho_rs > 0.0) {
        return Err(Error::InvalidInput(format!("ρ_rs must be positive, got {rho_rs}")));
    }
    let tol = sup.active_tol();
    let (mut power, mut corr, mut eta) = (0.0, 0.0, 0.0);
    for (s, w) in outer_nodes(rho_rs, xi, pen, sup, q) {
        let x = decoupled::solve_unchecked(s, xi, pen, sup);
        power += w * x.norm_sqr();
        corr += w * (x.conj() * s).re;
        if decoupled::is_active(x, tol) {
            eta += w;
        }
    }
    if !(power.is_finite() && corr.is_finite()) {
        return Err(Error::Integration("non-finite RS moment".into()));
    }
    Ok(RsExpectations { power, corr, eta: eta.clamp(0.0, 1.0) })
}

/// `D = ρ + α⁻¹[(p − 2ρχ)R(−χ) − χ(p − ρχ)R'(−χ)]`.
pub fn rs_distortion(chi: f64, p: f64, rho: f64, spectral: &SpectralModel) -> Result<f64> {
    let r = spectral.r_transform(-chi)?;
    let rp = spectral.r_derivative(-chi)?;
    Ok(rho + ((p - 2.0 * rho * chi) * r - chi * (p - rho * chi) * rp) / spectral.alpha())
}

#[derive(Debug, Clone)]
pub struct RsOptions {
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub init: RsState,
    /// Further starting points; the lowest-distortion fixed point is kept.
    pub extra_inits: Vec<RsState>,
    pub chi_cap: f64,
    pub quad: QuadOptions,
}

impl RsOptions {
    pub fn for_rho(rho: f64) -> Self {
        Self {
            damping: 0.5,
            max_iter: 5000,
            tol: 1e-10,
            init: RsState { chi: 1.0, p: rho },
            extra_inits: Vec::new(),
            chi_cap: 1e8,
            quad: QuadOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RsSolution {
    pub state: RsState,
    pub xi: f64,
    pub rho_rs: f64,
    pub distortion: f64,
    pub distortion_db: f64,
    pub eta: f64,
    pub avg_power: f64,
    pub papr: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Number of distinct fixed points reached from the starting points.
    pub multiplicity: usize,
}

pub fn to_db(d: f64) -> f64 {
    if d == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * d.log10()
    }
}

pub(crate) fn papr(sup: &Support, avg_power: f64) -> f64 {
    match sup.peak() {
        Some(p) if avg_power > 0.0 => p / avg_power,
        _ => f64::INFINITY,
    }
}

fn rel(new: f64, old: f64) -> f64 {
    let d = (new - old).abs();
    if d <= 1e-300 {
        0.0
    } else {
        d / new.abs().max(old.abs()).max(1e-300)
    }
}

/// Damped fixed-point iteration from one starting point.
fn iterate(rho: f64, pen: &Penalty, sup: &Support, spectral: &SpectralModel, opts: &RsOptions, init: RsState) -> Result<RsSolution> {
    let mut st = init;
    let mut damping = opts.damping.clamp(1e-3, 1.0);
    let mut best: Option<(f64, RsState)> = None;
    let mut prev_res = f64::INFINITY;
    let mut rising = 0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let eff = match rs_effective_params(st, rho, spectral) {
            Ok(e) => e,
            Err(Error::Infeasible(_)) if it > 1 => {
                // step back toward the last good point
                damping = (damping * 0.5).max(1e-3);
                let (_, b) = best.unwrap_or((f64::INFINITY, init));
                st = RsState { chi: 0.5 * (st.chi + b.chi), p: 0.5 * (st.p + b.p) };
                continue;
            }
            Err(e) => return Err(e),
        };
        let e = rs_expectations(eff.xi, eff.rho_rs, pen, sup, &opts.quad)?;
        let p_new = e.power;
        let chi_new = eff.xi * e.corr / eff.rho_rs;
        residual = rel(chi_new, st.chi).max(rel(p_new, st.p));
        if best.map_or(true, |(r, _)| residual < r) {
            best = Some((residual, st));
        }
        if residual < opts.tol {
            break;
        }
        if residual > prev_res {
            rising += 1;
            if rising >= 3 {
                damping = (damping * 0.5).max(1e-3);
                rising = 0;
            }
        } else {
            rising = 0;
        }
        prev_res = residual;
        st = RsState {
            chi: (1.0 - damping) * st.chi + damping * chi_new,
            p: ((1.0 - damping) * st.p + damping * p_new).max(0.0),
        };
        if !(st.chi <= opts.chi_cap) {
            return Err(Error::Divergence { what: "rs_solve", detail: format!("χ = {} exceeds cap {}", st.chi, opts.chi_cap) });
        }
    }
    let converged = residual < opts.tol;
    if !converged {
        if let Some((r, b)) = best {
            st = b;
            residual = r;
        }
    }
    finish(st, rho, pen, sup, spectral, &opts.quad, iterations, residual, converged)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    st: RsState,
    rho: f64,
    pen: &Penalty,
    sup: &Support,
    spectral: &SpectralModel,
    q: &QuadOptions,
    iterations: usize,
    residual: f64,
    converged: bool,
) -> Result<RsSolution> {
    let eff = rs_effective_params(st, rho, spectral)?;
    let e = rs_expectations(eff.xi, eff.rho_rs, pen, sup, q)?;
    let distortion = rs_distortion(st.chi, st.p, rho, spectral)?;
    Ok(RsSolution {
        state: st,
        xi: eff.xi,
        rho_rs: eff.rho_rs,
        distortion,
        distortion_db: to_db(distortion),
        eta: e.eta,
        avg_power: st.p,
        papr: papr(sup, st.p),
        iterations,
        residual,
        converged,
        multiplicity: 1,
    })
}

/// Solves the RS fixed point. On non-convergence the best iterate is returned
/// with `converged = false`; divergence of χ is an error.
pub fn rs_solve(rho: f64, pen: &Penalty, sup: &Support, spectral: &SpectralModel, opts: &RsOptions) -> Result<RsSolution> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
    }
    let mut inits = vec![opts.init];
    inits.extend(opts.extra_inits.iter().copied());
    let mut found: Vec<RsSolution> = Vec::new();
    let mut last_err = None;
    for init in inits {
        match iterate(rho, pen, sup, spectral, opts, init) {
            Ok(s) => found.push(s),
            Err(e) => last_err = Some(e),
        }
    }
    if found.is_empty() {
        return Err(last_err.expect("at least one start"));
    }
    // distinct converged fixed points
    let mut distinct: Vec<RsState> = Vec::new();
    for s in found.iter().filter(|s| s.converged) {
        if !distinct.iter().any(|d| rel(d.chi, s.state.chi) < 1e-6 && rel(d.p, s.state.p) < 1e-6) {
            distinct.push(s.state);
        }
    }
    let multiplicity = distinct.len().max(1);
    let mut best = found
        .into_iter()
        .min_by(|a, b| (!a.converged, a.distortion).partial_cmp(&(!b.converged, b.distortion)).unwrap())
        .expect("non-empty");
    best.multiplicity = multiplicity;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mp(alpha: f64) -> SpectralModel {
        SpectralModel::marchenko_pastur(alpha).unwrap()
    }

    #[test]
    fn mp_rho_rs_simplifies() {
        for (chi, p) in [(0.0, 0.0), (0.7, 0.2), (3.0, 1.5)] {
            let e = rs_effective_params(RsState { chi, p }, 1.3, &mp(0.5)).unwrap();
            assert!((e.rho_rs - (1.3 + p) / 0.5).abs() < 1e-12);
            assert!((e.xi - (1.0 + chi) / 0.5).abs() < 1e-12);
        }
        let e = rs_effective_params(RsState { chi: 0.0, p: 0.0 }, 1.0, &mp(1.0)).unwrap();
        assert!((e.xi - 1.0).abs() < 1e-15 && (e.rho_rs - 1.0).abs() < 1e-15);
    }

    #[test]
    fn point_mass_rho_rs() {
        let s = SpectralModel::point_mass(1.0, 2.0).unwrap();
        let e = rs_effective_params(RsState { chi: 0.4, p: 0.3 }, 1.5, &s).unwrap();
        assert!((e.rho_rs - 1.5 * e.xi).abs() < 1e-14);
    }

    #[test]
    fn ridge_moments_closed_form() {
        let pen = Penalty::ridge(0.3).unwrap();
        let (xi, v) = (1.7, 2.2);
        let e = rs_expectations(xi, v, &pen, &Support::Complex, &QuadOptions::default()).unwrap();
        let sh = 1.0 + xi * 0.3;
        assert!((e.power - v / (sh * sh)).abs() < 1e-12);
        assert!((e.corr - v / sh).abs() < 1e-12);
        assert!((e.eta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hard_threshold_eta() {
        let pen = Penalty::ridge_l0(0.2, 0.5).unwrap();
        let (xi, v) = (1.3, 0.9);
        let e = rs_expectations(xi, v, &pen, &Support::Complex, &QuadOptions::default()).unwrap();
        let t0sq = xi * 0.5 * (1.0 + xi * 0.2);
        assert!((e.eta - (-t0sq / v).exp()).abs() < 1e-12);
    }

    #[test]
    fn huge_penalty_silences() {
        let rho = 1.0;
        let pen = Penalty::ridge(1e8).unwrap();
        let s = rs_solve(rho, &pen, &Support::Complex, &mp(0.5), &RsOptions::for_rho(rho)).unwrap();
        assert!(s.converged);
        assert!((s.distortion - 1.0).abs() < 1e-6);
        assert!(s.avg_power < 1e-12);
    }

    #[test]
    fn ridge_fixed_point_matches_closed_pair() {
        let (rho, lam) = (1.0, 0.1);
        let pen = Penalty::ridge(lam).unwrap();
        let s = rs_solve(rho, &pen, &Support::Complex, &mp(0.5), &RsOptions::for_rho(rho)).unwrap();
        assert!(s.converged);
        let sh = 1.0 + s.xi * lam;
        assert!((s.state.chi - s.xi / sh).abs() < 1e-8);
        assert!((s.state.p - s.rho_rs / (sh * sh)).abs() < 1e-8);
    }

    #[test]
    fn distortion_zero_state() {
        assert_eq!(rs_distortion(0.0, 0.0, 1.7, &mp(0.5)).unwrap(), 1.7);
    }

    #[test]
    fn unregularized_underdetermined_diverges() {
        let pen = Penalty::ridge(0.0).unwrap();
        let r = rs_solve(1.0, &pen, &Support::Complex, &mp(0.5), &RsOptions::for_rho(1.0));
        match r {
            Err(Error::Divergence { .. }) => {}
            Ok(s) => assert!(!s.converged || s.distortion.abs() < 1e-6),
            Err(e) => panic!("{e}"),
        }
    }
}
