//! One-step replica-symmetry-breaking fixed point.
//!
//! Order parameters `(χ, c, p)` and the Parisi parameter `μ`, with
//! `χ̃ = χ + μc`, `ξ = 1/R(−χ)`, `ρ_rs = ξ²[ρR(−χ̃) − (ρχ̃ − p)R'(−χ̃)]` and
//! `ρ₁ = ξ²[R(−χ) − R(−χ̃)]/μ`. The decoupled input is `t + u` with
//! `t ~ CN(0, ρ_rs)` and `u | t` drawn from a Gaussian of variance `ρ₁` tilted by
//! `exp((μ/ξ)K(t+u))`, where `K(z) = |z|² − E_min(z) ≥ 0`.
//!
//! At fixed μ the order parameters satisfy
//! `c + p = E|x|²`, `χ̃ + μp = (ξ/ρ₁)E Re(x̄u)`, `χ̃ = (ξ/ρ_rs)E Re(x̄t)`,
//! and μ solves `μ²pρ₁/ξ² + μc/ξ + 𝓘 = (μ/ξ)E K − E ln Z(t)` with
//! `𝓘 = −∫_χ^χ̃ R(−ω)dω`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::decoupled::{self, Penalty, Support, Symmetry};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::rs_solver::{self, outer_nodes, QuadOptions, RsOptions, RsSolution, RsState};
use crate::spectral::SpectralModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsbState {
    pub chi: f64,
    pub c: f64,
    pub p: f64,
    pub mu: f64,
}

impl RsbState {
    pub fn chi_tilde(&self) -> f64 {
        self.chi + self.mu * self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsbParams {
    pub xi: f64,
    pub chi_tilde: f64,
    pub rho_rs: f64,
    pub rho1: f64,
}

/// Effective parameters of the decoupled channel. `ρ_rs` is evaluated at χ̃.
pub fn rsb_effective_params(state: RsbState, rho: f64, spectral: &SpectralModel) -> Result<RsbParams> {
    let chi_tilde = state.chi_tilde();
    let r0 = spectral.r_transform(-state.chi)?;
    if !(r0 > 0.0) {
        return Err(Error::Infeasible(format!("R(−χ) = {r0}")));
    }
    let xi = 1.0 / r0;
    let r1 = spectral.r_transform(-chi_tilde)?;
    let r1p = spectral.r_derivative(-chi_tilde)?;
    let rho_rs = xi * xi * (rho * r1 - (rho * chi_tilde - state.p) * r1p);
    let rho1 = if state.c == 0.0 || state.mu == 0.0 {
        0.0
    } else {
        xi * xi * (r0 - r1) / state.mu
    };
    if !(rho_rs > 0.0 && rho_rs.is_finite()) {
        return Err(Error::Infeasible(format!("ρ_rs = {rho_rs}")));
    }
    if rho1 < 0.0 || !rho1.is_finite() {
        return Err(Error::Infeasible(format!("ρ₁ = {rho1}")));
    }
    Ok(RsbParams { xi, chi_tilde, rho_rs, rho1 })
}

/// Parameters of the tilted conditional density of `u` given `t`.
#[derive(Debug, Clone, Copy)]
pub struct TiltedDensityParams {
    pub mu: f64,
    pub xi: f64,
    pub rho1: f64,
    pub penalty: Penalty,
    pub support: Support,
}

impl TiltedDensityParams {
    fn gamma(&self) -> f64 {
        self.mu / self.xi
    }

    // K(z) = |z|² − E_min(z)
    fn k(&self, z: Complex64) -> f64 {
        let x = decoupled::solve_unchecked(z, self.xi, &self.penalty, &self.support);
        (z.norm_sqr() - decoupled::objective(x, z, self.xi, &self.penalty)).max(0.0)
    }

    /// A tilt this strong on the unbounded plane makes `Z(t)` infinite.
    fn check_normalizable(&self) -> Result<()> {
        if matches!(self.support, Support::Complex) {
            let g = self.gamma() * self.rho1 / (1.0 + self.xi * self.penalty.lambda);
            if g >= 1.0 {
                return Err(Error::Infeasible(format!("tilt not normalizable (μρ₁/(ξ(1+ξλ)) = {g})")));
            }
        }
        Ok(())
    }
}

/// `ln Z(t)` by a `n×n` Gauss-Hermite product over `u ~ CN(0, ρ₁)`.
pub fn log_normalizer_hermite(t: Complex64, params: &TiltedDensityParams, n: usize) -> f64 {
    let rule = quadrature::hermite(n);
    let s = params.rho1.sqrt();
    let gamma = params.gamma();
    let mut logs = Vec::with_capacity(n * n);
    let mut ws = Vec::with_capacity(n * n);
    for (xa, wa) in rule.nodes.iter().zip(&rule.weights) {
        for (xb, wb) in rule.nodes.iter().zip(&rule.weights) {
            let u = Complex64::new(s * xa, s * xb);
            logs.push(gamma * params.k(t + u));
            ws.push(wa * wb / PI);
        }
    }
    quadrature::log_sum_exp(&logs, &ws)
}

/// Density of `u` given `t`:
/// `exp((μ/ξ)K(u+t))·φ(u; ρ₁)/Z(t)`, with `Z` from a 96×96 Hermite product
/// (doubled until two resolutions agree to 1e-6).
pub fn tilted_conditional(u: Complex64, t: Complex64, params: &TiltedDensityParams) -> Result<f64> {
    params.check_normalizable()?;
    if !(params.rho1 > 0.0) {
        return Err(Error::InvalidInput("tilted density needs ρ₁ > 0".into()));
    }
    let mut n = 96;
    let mut lz = log_normalizer_hermite(t, params, n);
    loop {
        let l2 = log_normalizer_hermite(t, params, 2 * n);
        if (l2 - lz).abs() <= 1e-6 {
            lz = l2;
            break;
        }
        n *= 2;
        lz = l2;
        if n > 768 {
            return Err(Error::Integration(format!("Z(t) not resolved at {n} nodes")));
        }
    }
    let log_phi = -u.norm_sqr() / params.rho1 - (PI * params.rho1).ln();
    Ok((params.gamma() * params.k(u + t) + log_phi - lz).exp())
}

/// Joint moments under `t ~ CN(0, ρ_rs)`, `u | t` tilted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RsbExpectations {
    /// `E|x|²`
    pub power: f64,
    /// `E Re(x̄u)`
    pub corr_u: f64,
    /// `E Re(x̄t)`
    pub corr_t: f64,
    pub eta: f64,
    /// `E K = −E tilt_energy`
    pub mean_k: f64,
    /// `E ln Z(t)`
    pub mean_log_z: f64,
}

impl RsbExpectations {
    /// `I(u; t) + D(p_u ‖ φ(·; ρ₁)) = E ln[p(u|t)/φ(u)] = (μ/ξ)E K − E ln Z`.
    pub fn info_plus_kl(&self, mu: f64, xi: f64) -> f64 {
        mu / xi * self.mean_k - self.mean_log_z
    }
}

#[derive(Default)]
struct Acc {
    power: f64,
    corr_u: f64,
    corr_t: f64,
    eta: f64,
    k: f64,
}

/// Nodes and log-weights covering the bulk of `exp(logw)` on `[lo, hi]`.
fn tilted_nodes(lo: f64, hi: f64, breaks: &[f64], step: f64, logw: &dyn Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    const SCAN: usize = 512;
    let h = (hi - lo) / SCAN as f64;
    let vals: Vec<f64> = (0..=SCAN).map(|i| logw(lo + h * i as f64)).collect();
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = vals.iter().position(|v| *v > m - 60.0).unwrap_or(0);
    let last = vals.iter().rposition(|v| *v > m - 60.0).unwrap_or(SCAN);
    let a = lo + h * first.saturating_sub(1) as f64;
    let b = lo + h * (last + 1).min(SCAN) as f64;
    let segs = quadrature::refine(&quadrature::breakpoints(a, b, breaks), step);
    let rule = quadrature::legendre(12);
    let pts = quadrature::piecewise(&rule, &segs);
    let nodes: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let logs: Vec<f64> = pts.iter().map(|(x, w)| w.ln() + logw(*x)).collect();
    (nodes, logs)
}

fn normalize(logs: &[f64]) -> (f64, Vec<f64>) {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    (m + s.ln(), w.into_iter().map(|v| v / s).collect())
}

// inner integral for phase-invariant supports; the angle around t is done in
// closed form with scaled Bessel functions
fn inner_radial(tm: f64, prm: &TiltedDensityParams, tol: f64) -> (f64, Acc) {
    let (xi, pen, sup, rho1) = (prm.xi, &prm.penalty, &prm.support, prm.rho1);
    let gamma = prm.gamma();
    let a = if matches!(sup, Support::Complex) { 1.0 / (1.0 + xi * pen.lambda) } else { 0.0 };
    let b = sup.peak().map_or(0.0, |p| 2.0 * p.sqrt());
    let big_g = (gamma * a * rho1).min(0.999_999);
    let r_star = (tm + 0.5 * gamma * b * rho1) / (1.0 - big_g);
    let sig = (rho1 / (1.0 - big_g)).sqrt();
    let lo = (tm.min(r_star) - 40.0 * sig).max(0.0);
    let hi = tm.max(r_star) + 40.0 * sig;
    let kk = |r: f64| (r * r - decoupled::radial_min_energy(r, xi, pen, sup)).max(0.0);
    let logw = |r: f64| {
        if r <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let kap = 2.0 * r * tm / rho1;
        (2.0 * r / rho1).ln() - (r - tm).powi(2) / rho1 + quadrature::bessel_i0e(kap).ln() + gamma * kk(r)
    };
    let step = 0.75 * (0.5 * rho1 / (1.0 - big_g)).sqrt();
    let (nodes, logs) = tilted_nodes(lo, hi, &decoupled::radial_breaks(xi, pen, sup), step, &logw);
    let (log_z, w) = normalize(&logs);
    let mut acc = Acc::default();
    for (r, wi) in nodes.iter().zip(&w) {
        let g = decoupled::radial_magnitude(*r, xi, pen, sup);
        let kap = 2.0 * r * tm / rho1;
        let ratio = if kap > 0.0 { quadrature::bessel_i1e(kap) / quadrature::bessel_i0e(kap) } else { 0.0 };
        let ct = g * tm * ratio;
        acc.power += wi * g * g;
        acc.corr_t += wi * ct;
        acc.corr_u += wi * (g * r - ct);
        if g > tol {
            acc.eta += wi;
        }
        acc.k += wi * kk(*r);
    }
    // log Z relative to the plain Gaussian: ∫ Rician density = 1
    (log_z, acc)
}

// BPSK: everything depends on real parts only
fn inner_real(at: f64, prm: &TiltedDensityParams, tol: f64) -> (f64, Acc) {
    let (xi, pen, sup, rho1) = (prm.xi, &prm.penalty, &prm.support, prm.rho1);
    let gamma = prm.gamma();
    let peak = sup.peak().unwrap_or(1.0);
    let tau = decoupled::psk_threshold(xi, pen, peak);
    let shift = gamma * peak.sqrt() * rho1;
    let sig = rho1.sqrt();
    let lo = at - shift - 40.0 * sig;
    let hi = at + shift + 40.0 * sig;
    let x_of = |z: f64| decoupled::solve_unchecked(Complex64::new(z, 0.0), xi, pen, sup).re;
    let kk = |z: f64| {
        let x = x_of(z);
        if x == 0.0 {
            0.0
        } else {
            (z * z - (x - z).powi(2) - xi * pen.value(Complex64::new(x, 0.0))).max(0.0)
        }
    };
    let c0 = -0.5 * (PI * rho1).ln();
    let logw = |z: f64| c0 - (z - at).powi(2) / rho1 + gamma * kk(z);
    let step = 0.75 * (0.5 * rho1).sqrt();
    let (nodes, logs) = tilted_nodes(lo, hi, &[-tau, tau], step, &logw);
    let (log_z, w) = normalize(&logs);
    let mut acc = Acc::default();
    for (z, wi) in nodes.iter().zip(&w) {
        let x = x_of(*z);
        acc.power += wi * x * x;
        acc.corr_t += wi * x * at;
        acc.corr_u += wi * x * (z - at);
        if x.abs() > tol {
            acc.eta += wi;
        }
        acc.k += wi * kk(*z);
    }
    (log_z, acc)
}

// general PSK: Gauss-Hermite product around u = 0
fn inner_hermite(t: Complex64, prm: &TiltedDensityParams, n: usize, tol: f64) -> (f64, Acc) {
    let rule = quadrature::hermite(n);
    let s = prm.rho1.sqrt();
    let gamma = prm.gamma();
    let mut logs = Vec::with_capacity(n * n);
    let mut pts = Vec::with_capacity(n * n);
    for (xa, wa) in rule.nodes.iter().zip(&rule.weights) {
        for (xb, wb) in rule.nodes.iter().zip(&rule.weights) {
            let u = Complex64::new(s * xa, s * xb);
            logs.push((wa * wb / PI).ln() + gamma * prm.k(t + u));
            pts.push(u);
        }
    }
    let (log_z, w) = normalize(&logs);
    let mut acc = Acc::default();
    for (u, wi) in pts.iter().zip(&w) {
        let z = t + u;
        let x = decoupled::solve_unchecked(z, prm.xi, &prm.penalty, &prm.support);
        acc.power += wi * x.norm_sqr();
        acc.corr_t += wi * (x.conj() * t).re;
        acc.corr_u += wi * (x.conj() * u).re;
        if x.norm() > tol {
            acc.eta += wi;
        }
        acc.k += wi * prm.k(z);
    }
    (log_z, acc)
}

/// Joint expectations over the outer Gaussian and the tilted inner density.
/// With `ρ₁ = 0` the inner density is a point mass at `u = 0`.
pub fn rsb_expectations(params: &TiltedDensityParams, rho_rs: f64, q: &QuadOptions) -> Result<RsbExpectations> {
    if !(rho_rs > 0.0) {
        return Err(Error::InvalidInput(format!("ρ_rs must be positive, got {rho_rs}")));
    }
    let tol = params.support.active_tol();
    let outer = outer_nodes(rho_rs, params.xi, &params.penalty, &params.support, q);
    let mut out = RsbExpectations::default();
    if params.rho1 == 0.0 {
        for (t, w) in outer {
            let x = decoupled::solve_unchecked(t, params.xi, &params.penalty, &params.support);
            let k = params.k(t);
            out.power += w * x.norm_sqr();
            out.corr_t += w * (x.conj() * t).re;
            if x.norm() > tol {
                out.eta += w;
            }
            out.mean_k += w * k;
            out.mean_log_z += w * params.gamma() * k;
        }
        return Ok(out);
    }
    params.check_normalizable()?;
    let sym = params.support.symmetry();
    let mut n_herm = q.inner;
    if let Symmetry::Sector(_) = sym {
        // resolution self-check at the outermost node
        let t_far = outer.iter().map(|p| p.0).fold(Complex64::new(0.0, 0.0), |a, b| if b.norm() > a.norm() { b } else { a });
        loop {
            let a = log_normalizer_hermite(t_far, params, n_herm);
            let b = log_normalizer_hermite(t_far, params, 2 * n_herm);
            if (a - b).abs() <= 1e-6 || n_herm >= 4 * q.inner {
                break;
            }
            n_herm *= 2;
        }
    }
    use rayon::prelude::*;
    let parts: Vec<(f64, f64, Acc)> = outer
        .par_iter()
        .map(|(t, w)| {
            let (lz, acc) = match sym {
                Symmetry::Radial => inner_radial(t.norm(), params, tol),
                Symmetry::RealLine => inner_real(t.re, params, tol),
                Symmetry::Sector(_) => inner_hermite(*t, params, n_herm, tol),
            };
            (*w, lz, acc)
        })
        .collect();
    for (w, lz, a) in parts {
        out.power += w * a.power;
        out.corr_u += w * a.corr_u;
        out.corr_t += w * a.corr_t;
        out.eta += w * a.eta;
        out.mean_k += w * a.k;
        out.mean_log_z += w * lz;
    }
    if ![out.power, out.corr_u, out.corr_t, out.mean_k, out.mean_log_z].iter().all(|v| v.is_finite()) {
        return Err(Error::Integration("non-finite RSB moment".into()));
    }
    out.eta = out.eta.clamp(0.0, 1.0);
    Ok(out)
}

fn tilted_params(prm: &RsbParams, mu: f64, pen: &Penalty, sup: &Support) -> TiltedDensityParams {
    TiltedDensityParams { mu, xi: prm.xi, rho1: prm.rho1, penalty: *pen, support: *sup }
}

/// Left side minus right side of the μ equation.
pub fn rsb_mu_residual(
    state: RsbState,
    rho: f64,
    spectral: &SpectralModel,
    pen: &Penalty,
    sup: &Support,
    q: &QuadOptions,
) -> Result<f64> {
    let prm = rsb_effective_params(state, rho, spectral)?;
    let e = rsb_expectations(&tilted_params(&prm, state.mu, pen, sup), prm.rho_rs, q)?;
    mu_residual_from(state, &prm, &e, spectral)
}

fn mu_residual_from(state: RsbState, prm: &RsbParams, e: &RsbExpectations, spectral: &SpectralModel) -> Result<f64> {
    let (mu, xi) = (state.mu, prm.xi);
    let big_i = -spectral.r_integral(state.chi, prm.chi_tilde)?;
    let lhs = mu * mu * state.p * prm.rho1 / (xi * xi) + mu * state.c / xi + big_i;
    Ok(lhs - e.info_plus_kl(mu, xi))
}

/// `D = ρ + α⁻¹[(p − 2ρχ̃)R(−χ̃) − χ̃(p − ρχ̃)R'(−χ̃) + (ξc − χ̃ρ₁)/ξ²]`.
pub fn rsb_distortion(state: RsbState, rho: f64, spectral: &SpectralModel) -> Result<f64> {
    let prm = rsb_effective_params(state, rho, spectral)?;
    let ct = prm.chi_tilde;
    let r1 = spectral.r_transform(-ct)?;
    let r1p = spectral.r_derivative(-ct)?;
    let p = state.p;
    let extra = (prm.xi * state.c - ct * prm.rho1) / (prm.xi * prm.xi);
    Ok(rho + ((p - 2.0 * rho * ct) * r1 - ct * (p - rho * ct) * r1p + extra) / spectral.alpha())
}

#[derive(Debug, Clone)]
pub struct RsbOptions {
    pub mu_min: f64,
    pub mu_max: f64,
    /// log-spaced μ probes per decade
    pub probes_per_decade: usize,
    pub damping: f64,
    pub max_iter: usize,
    /// relative tolerance of the inner (χ, c, p) iteration
    pub tol: f64,
    /// absolute tolerance on the μ residual
    pub mu_tol: f64,
    /// starting point of the inner iteration; derived from RS when `None`
    pub init: Option<RsbState>,
    /// force c = 0 (reproduces RS through the RSB code path)
    pub pin_c_zero: bool,
    pub quad: QuadOptions,
    pub rs: RsOptions,
}

impl RsbOptions {
    pub fn for_rho(rho: f64) -> Self {
        Self {
            mu_min: 1e-3,
            mu_max: 1e3,
            probes_per_decade: 6,
            damping: 0.5,
            max_iter: 4000,
            tol: 1e-11,
            mu_tol: 1e-9,
            init: None,
            pin_c_zero: false,
            quad: QuadOptions::default(),
            rs: RsOptions::for_rho(rho),
        }
    }
}

/// Converged inner fixed point at fixed μ.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub state: RsbState,
    pub params: RsbParams,
    pub expectations: RsbExpectations,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl InnerSolution {
    /// `c` has collapsed to zero (RS point).
    pub fn is_collapsed(&self) -> bool {
        self.state.c <= 1e-10 * self.state.p.max(1e-300)
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

/// Damped iteration on `(χ, c, p)` at fixed μ.
pub fn rsb_inner_solve(
    mu: f64,
    init: RsbState,
    rho: f64,
    pen: &Penalty,
    sup: &Support,
    spectral: &SpectralModel,
    opts: &RsbOptions,
) -> Result<InnerSolution> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidInput(format!("μ must be positive, got {mu}")));
    }
    let mut st = RsbState { mu, ..init };
    if opts.pin_c_zero {
        st.c = 0.0;
    }
    let mut damping = opts.damping.clamp(1e-3, 1.0);
    let mut best: Option<(f64, RsbState)> = None;
    let mut prev = f64::INFINITY;
    let mut rising = 0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut checkpoint = f64::INFINITY;
    for it in 1..=opts.max_iter {
        iterations = it;
        let step = rsb_effective_params(st, rho, spectral).and_then(|prm| {
            let e = rsb_expectations(&tilted_params(&prm, mu, pen, sup), prm.rho_rs, &opts.quad)?;
            Ok((prm, e))
        });
        let (prm, e) = match step {
            Ok(v) => v,
            Err(Error::Infeasible(_)) if best.is_some() => {
                damping = (damping * 0.5).max(1e-3);
                let b = best.unwrap().1;
                st = RsbState { chi: 0.5 * (st.chi + b.chi), c: 0.5 * (st.c + b.c), p: 0.5 * (st.p + b.p), mu };
                continue;
            }
            Err(e) => return Err(e),
        };
        let a = prm.xi / prm.rho_rs * e.corr_t;
        let (chi_n, c_n, p_n) = if opts.pin_c_zero || prm.rho1 == 0.0 {
            (a, 0.0, e.power)
        } else {
            let b = prm.xi / prm.rho1 * e.corr_u;
            let p_n = (b - a) / mu;
            let c_n = e.power - p_n;
            (a - mu * c_n, c_n, p_n)
        };
        residual = rel(chi_n, st.chi).max(rel(p_n, st.p)).max(if st.c > 0.0 || c_n > 0.0 { rel(c_n, st.c) } else { 0.0 });
        if best.map_or(true, |(r, _)| residual < r) {
            best = Some((residual, st));
        }
        if residual < opts.tol {
            break;
        }
        if it % 100 == 0 {
            let b = best.map_or(f64::INFINITY, |v| v.0);
            if b > 0.5 * checkpoint {
                break;
            }
            checkpoint = b;
        }
        if residual > prev {
            rising += 1;
            if rising >= 3 {
                damping = (damping * 0.5).max(1e-3);
                rising = 0;
            }
        } else {
            rising = 0;
        }
        prev = residual;
        let mix = |old: f64, new: f64| (1.0 - damping) * old + damping * new;
        st = RsbState {
            chi: mix(st.chi, chi_n).max(1e-12),
            c: if opts.pin_c_zero { 0.0 } else { mix(st.c, c_n).max(0.0) },
            p: mix(st.p, p_n).max(1e-300),
            mu,
        };
    }
    let converged = residual < opts.tol;
    if !converged {
        if let Some((r, b)) = best {
            st = b;
            residual = r;
        }
    }
    let params = rsb_effective_params(st, rho, spectral)?;
    let expectations = rsb_expectations(&tilted_params(&params, mu, pen, sup), params.rho_rs, &opts.quad)?;
    Ok(InnerSolution { state: st, params, expectations, residual, iterations, converged })
}

/// One bracketed root of the μ equation.
#[derive(Debug, Clone)]
pub struct RsbRoot {
    pub state: RsbState,
    pub distortion: f64,
    pub mu_residual: f64,
}

#[derive(Debug, Clone)]
pub struct RsbSolution {
    pub state: RsbState,
    pub xi: f64,
    pub chi_tilde: f64,
    pub rho_rs: f64,
    pub rho1: f64,
    pub distortion: f64,
    pub distortion_db: f64,
    pub eta: f64,
    pub avg_power: f64,
    pub papr: f64,
    pub mu_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// No c > 0 root was bracketed; the fields hold the RS solution.
    pub fell_back_to_rs: bool,
    /// Every root found in the μ bracket (the preferred one has the lowest distortion).
    pub roots: Vec<RsbRoot>,
    pub rs: RsSolution,
}

fn from_inner(inner: &InnerSolution, rho: f64, sup: &Support, spectral: &SpectralModel, mu_residual: f64, rs: RsSolution) -> Result<RsbSolution> {
    let distortion = rsb_distortion(inner.state, rho, spectral)?;
    let e = &inner.expectations;
    Ok(RsbSolution {
        state: inner.state,
        xi: inner.params.xi,
        chi_tilde: inner.params.chi_tilde,
        rho_rs: inner.params.rho_rs,
        rho1: inner.params.rho1,
        distortion,
        distortion_db: rs_solver::to_db(distortion),
        eta: e.eta,
        avg_power: e.power,
        papr: rs_solver::papr(sup, e.power),
        mu_residual,
        iterations: inner.iterations,
        converged: inner.converged,
        fell_back_to_rs: false,
        roots: Vec::new(),
        rs,
    })
}

fn rs_as_rsb(rs: &RsSolution) -> RsbSolution {
    RsbSolution {
        state: RsbState { chi: rs.state.chi, c: 0.0, p: rs.state.p, mu: 0.0 },
        xi: rs.xi,
        chi_tilde: rs.state.chi,
        rho_rs: rs.rho_rs,
        rho1: 0.0,
        distortion: rs.distortion,
        distortion_db: rs.distortion_db,
        eta: rs.eta,
        avg_power: rs.avg_power,
        papr: rs.papr,
        mu_residual: 0.0,
        iterations: rs.iterations,
        converged: rs.converged,
        fell_back_to_rs: true,
        roots: Vec::new(),
        rs: rs.clone(),
    }
}

struct Probe {
    inner: InnerSolution,
    residual: f64,
}

#[allow(clippy::too_many_arguments)]
fn probe(mu: f64, init: RsbState, rho: f64, pen: &Penalty, sup: &Support, spectral: &SpectralModel, opts: &RsbOptions) -> Option<Probe> {
    let inner = rsb_inner_solve(mu, init, rho, pen, sup, spectral, opts).ok()?;
    if inner.is_collapsed() || !inner.converged {
        return None;
    }
    let residual = mu_residual_from(inner.state, &inner.params, &inner.expectations, spectral).ok()?;
    Some(Probe { inner, residual })
}

/// Solves the one-step RSB equations: log-spaced probing of μ, then
/// bisection/secant refinement of every sign change. Falls back to the RS
/// solution (flagged) when no c > 0 root exists in the bracket.
pub fn rsb_solve(rho: f64, pen: &Penalty, sup: &Support, spectral: &SpectralModel, opts: &RsbOptions) -> Result<RsbSolution> {
    let rs = rs_solver::rs_solve(rho, pen, sup, spectral, &opts.rs)?;
    if opts.pin_c_zero {
        let init = RsbState { chi: rs.state.chi, c: 0.0, p: rs.state.p, mu: 1.0 };
        let inner = rsb_inner_solve(1.0, opts.init.unwrap_or(init), rho, pen, sup, spectral, opts)?;
        let mut s = from_inner(&inner, rho, sup, spectral, 0.0, rs)?;
        s.state.c = 0.0;
        return Ok(s);
    }
    let base = opts.init.unwrap_or(RsbState { chi: rs.state.chi, c: 0.15 * rs.state.p, p: 0.85 * rs.state.p, mu: opts.mu_min });
    let decades = (opts.mu_max / opts.mu_min).log10();
    let count = ((decades * opts.probes_per_decade as f64).ceil() as usize).max(2);
    let mus: Vec<f64> = (0..=count).map(|i| opts.mu_min * (opts.mu_max / opts.mu_min).powf(i as f64 / count as f64)).collect();

    let mut probes: Vec<(f64, Option<Probe>)> = Vec::with_capacity(mus.len());
    let mut warm = base;
    for &mu in &mus {
        let mut pr = probe(mu, warm, rho, pen, sup, spectral, opts);
        if pr.is_none() && warm != base {
            pr = probe(mu, base, rho, pen, sup, spectral, opts);
        }
        if let Some(p) = &pr {
            warm = p.inner.state;
        }
        probes.push((mu, pr));
    }

    let mut roots: Vec<(InnerSolution, f64)> = Vec::new();
    for w in probes.windows(2) {
        let (Some(pa), Some(pb)) = (&w[0].1, &w[1].1) else { continue };
        let (mut a, mut b) = (w[0].0, w[1].0);
        let (mut fa, mut fb) = (pa.residual, pb.residual);
        if fa == 0.0 {
            roots.push((pa.inner.clone(), 0.0));
            continue;
        }
        if fa.signum() == fb.signum() {
            continue;
        }
        let (mut sa, mut sb) = (pa.inner.state, pb.inner.state);
        let mut best: (f64, Option<InnerSolution>) = (f64::INFINITY, None);
        let mut side = 0i32;
        for it in 0..80 {
            // Illinois-modified regula falsi in log μ, with bisection every third step
            let (la, lb) = (a.ln(), b.ln());
            let lm = if it % 3 == 2 { 0.5 * (la + lb) } else { lb - fb * (lb - la) / (fb - fa) };
            let lm = lm.clamp(la.min(lb) + 1e-3 * (lb - la).abs(), la.max(lb) - 1e-3 * (lb - la).abs());
            let m = lm.exp();
            let init = if (m - a).abs() < (m - b).abs() { sa } else { sb };
            let Some(pm) = probe(m, init, rho, pen, sup, spectral, opts) else { break };
            let fm = pm.residual;
            if fm.abs() < best.0 {
                best = (fm.abs(), Some(pm.inner.clone()));
            }
            if fm.abs() < opts.mu_tol || (b - a).abs() < 1e-12 * m {
                break;
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
                sa = pm.inner.state;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = m;
                fb = fm;
                sb = pm.inner.state;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
        }
        if let (r, Some(inner)) = best {
            roots.push((inner, r));
        }
    }

    if roots.is_empty() {
        return Ok(rs_as_rsb(&rs));
    }
    let mut listed = Vec::new();
    for (inner, r) in &roots {
        let d = rsb_distortion(inner.state, rho, spectral)?;
        listed.push(RsbRoot { state: inner.state, distortion: d, mu_residual: *r });
    }
    let pick = (0..listed.len()).min_by(|&i, &j| listed[i].distortion.total_cmp(&listed[j].distortion)).unwrap();
    let (inner, r) = &roots[pick];
    let mut sol = from_inner(inner, rho, sup, spectral, *r, rs)?;
    sol.converged = inner.converged && r.abs() < opts.mu_tol.max(1e-6);
    sol.roots = listed;
    Ok(sol)
}

/// RS state seen as a degenerate RSB state.
pub fn rs_state_as_rsb(st: RsState, mu: f64) -> RsbState {
    RsbState { chi: st.chi, c: 0.0, p: st.p, mu }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mp(a: f64) -> SpectralModel {
        SpectralModel::marchenko_pastur(a).unwrap()
    }

    #[test]
    fn c_zero_params_match_rs() {
        let s = mp(0.5);
        let st = RsbState { chi: 0.8, c: 0.0, p: 0.3, mu: 2.0 };
        let prm = rsb_effective_params(st, 1.0, &s).unwrap();
        let rs = rs_solver::rs_effective_params(RsState { chi: 0.8, p: 0.3 }, 1.0, &s).unwrap();
        assert_eq!(prm.rho1, 0.0);
        assert!((prm.rho_rs - rs.rho_rs).abs() < 1e-14);
        assert_eq!(prm.chi_tilde, 0.8);
    }

    #[test]
    fn rho1_small_c_expansion() {
        let s = mp(1.0);
        let (chi, mu, c) = (0.5, 2.0, 5e-7);
        let prm = rsb_effective_params(RsbState { chi, c, p: 0.2, mu }, 1.0, &s).unwrap();
        let approx = prm.xi * prm.xi * c * s.r_derivative(-chi).unwrap();
        assert!(((prm.rho1 - approx) / approx).abs() < 1e-5);
    }

    #[test]
    fn mp_rho1_direct() {
        // α=1, χ=1, μc=1: ξ=2, ρ₁ = 4·(1/2 − 1/3)/μ
        let s = mp(1.0);
        let prm = rsb_effective_params(RsbState { chi: 1.0, c: 0.5, p: 0.2, mu: 2.0 }, 1.0, &s).unwrap();
        assert!((prm.rho1 - 4.0 * (0.5 - 1.0 / 3.0) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn radial_inner_normalizes_without_tilt() {
        // μ→0: Z = 1
        let prm = TiltedDensityParams { mu: 1e-12, xi: 1.5, rho1: 0.4, penalty: Penalty::ridge(0.2).unwrap(), support: Support::Complex };
        for tm in [0.0, 0.3, 2.0, 30.0] {
            let (lz, acc) = inner_radial(tm, &prm, 1e-9);
            assert!(lz.abs() < 1e-9, "t={tm}: ln Z = {lz}");
            // pure ridge: E Re x̄t = |t|²/(1+ξλ)
            let sh = 1.0 + 1.5 * 0.2;
            assert!((acc.corr_t - tm * tm / sh).abs() < 1e-8 * (1.0 + tm * tm));
            assert!((acc.power - (tm * tm + 0.4) / (sh * sh)).abs() < 1e-8 * (1.0 + tm * tm));
        }
    }

    #[test]
    fn ridge_tilt_closed_form() {
        // K = |z|²/(1+ξλ) gives a Gaussian tilt with ln Z = γ'|t|²/(s(1−g)) ... checked against Hermite
        let prm = TiltedDensityParams { mu: 0.7, xi: 1.2, rho1: 0.5, penalty: Penalty::ridge(0.3).unwrap(), support: Support::Complex };
        for tm in [0.0, 0.8, 1.7] {
            let (lz, _) = inner_radial(tm, &prm, 1e-9);
            let lh = log_normalizer_hermite(Complex64::new(tm, 0.0), &prm, 96);
            // exact: a = γ/(1+ξλ), Z = exp(a|t|²/(1−aρ₁))/(1−aρ₁)
            let a = 0.7 / 1.2 / (1.0 + 1.2 * 0.3);
            let exact = a * tm * tm / (1.0 - a * 0.5) - (1.0 - a * 0.5).ln();
            assert!((lz - exact).abs() < 1e-10, "{lz} {exact}");
            assert!((lh - exact).abs() < 1e-8, "{lh} {exact}");
        }
    }

    #[test]
    fn bpsk_inner_reference_values() {
        // adaptive quadrature of ∫ φ(u; ρ₁/2) e^{γK(a+u)} du over the real line
        let prm = TiltedDensityParams { mu: 3.0, xi: 2.0, rho1: 0.3, penalty: Penalty::ridge(0.2).unwrap(), support: Support::psk(1.0, 2).unwrap() };
        for (at, want) in [(0.0, 0.05261877866007313), (0.4, 0.26348356160928793), (1.5, 3.0752731758046665)] {
            let (lz, _) = inner_real(at, &prm, 1e-9);
            assert!((lz - want).abs() < 1e-10, "{lz} {want}");
            let lh = log_normalizer_hermite(Complex64::new(at, 0.0), &prm, 192);
            assert!((lh - want).abs() < 1e-2, "{lh} {want}");
        }
    }

    #[test]
    fn tilted_density_integrates_to_one() {
        let prm = TiltedDensityParams { mu: 1.0, xi: 1.5, rho1: 0.5, penalty: Penalty::ridge_l1(0.1, 0.4).unwrap(), support: Support::disc(1.0).unwrap() };
        let t = Complex64::new(0.6, -0.2);
        let rule = quadrature::legendre(64);
        let lim = 8.0 * prm.rho1.sqrt();
        let mut s = 0.0;
        for (x, wx) in rule.nodes.iter().zip(&rule.weights) {
            for (y, wy) in rule.nodes.iter().zip(&rule.weights) {
                let u = Complex64::new(lim * x, lim * y);
                s += wx * wy * lim * lim * tilted_conditional(u, t, &prm).unwrap();
            }
        }
        assert!((s - 1.0).abs() < 2e-4, "{s}");
    }

    #[test]
    fn distortion_c_zero_reduces_to_rs() {
        let s = mp(0.5);
        let d1 = rsb_distortion(RsbState { chi: 0.9, c: 0.0, p: 0.4, mu: 3.0 }, 1.0, &s).unwrap();
        let d0 = rs_solver::rs_distortion(0.9, 0.4, 1.0, &s).unwrap();
        assert!((d1 - d0).abs() < 1e-14);
    }

    #[test]
    fn mu_residual_vanishes_at_c_zero() {
        let s = mp(0.5);
        let pen = Penalty::ridge_l1(0.1, 0.5).unwrap();
        let r = rsb_mu_residual(RsbState { chi: 0.9, c: 0.0, p: 0.4, mu: 3.0 }, 1.0, &s, &pen, &Support::Complex, &QuadOptions::default()).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn complex_tilt_limit_is_reported() {
        let prm = TiltedDensityParams { mu: 10.0, xi: 1.0, rho1: 1.0, penalty: Penalty::ridge(0.0).unwrap(), support: Support::Complex };
        assert!(matches!(rsb_expectations(&prm, 1.0, &QuadOptions::default()), Err(Error::Infeasible(_))));
    }
}
