//! Scalar (decoupled) precoder `x(s) = argmin_{v ∈ 𝕏} |v − s|² + ξ·u(v)`.
//!
//! Closed forms cover ridge, ridge + zero-norm and ridge + ℓ1 penalties on the
//! complex plane and the disc, and ridge (optionally + ℓ1) on PSK ∪ {0}.
//! [`oracle_scalar`] is an exhaustive grid search used to check them.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Per-entry regularizer `u(v) = λ|v|² + λ₀·1{v≠0} + λ₁|v|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub lambda: f64,
    pub lambda0: f64,
    pub lambda1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    Ridge,
    ZeroNorm,
    L1,
}

impl Penalty {
    pub fn new(lambda: f64, lambda0: f64, lambda1: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("lambda0", lambda0), ("lambda1", lambda1)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if lambda0 > 0.0 && lambda1 > 0.0 {
            return Err(Error::InvalidInput("at most one of lambda0, lambda1 may be positive".into()));
        }
        Ok(Self { lambda, lambda0, lambda1 })
    }

    pub fn ridge(lambda: f64) -> Result<Self> {
        Self::new(lambda, 0.0, 0.0)
    }

    pub fn ridge_l0(lambda: f64, lambda0: f64) -> Result<Self> {
        Self::new(lambda, lambda0, 0.0)
    }

    pub fn ridge_l1(lambda: f64, lambda1: f64) -> Result<Self> {
        Self::new(lambda, 0.0, lambda1)
    }

    pub fn kind(&self) -> PenaltyKind {
        if self.lambda0 > 0.0 {
            PenaltyKind::ZeroNorm
        } else if self.lambda1 > 0.0 {
            PenaltyKind::L1
        } else {
            PenaltyKind::Ridge
        }
    }

    pub fn value(&self, v: Complex64) -> f64 {
        let r = v.norm();
        if r == 0.0 {
            return 0.0;
        }
        self.lambda * r * r + self.lambda0 + self.lambda1 * r
    }
}

/// Per-antenna constellation set 𝕏. Every kind contains 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Complex,
    /// `{|v| ≤ √peak}`
    Disc { peak: f64 },
    /// `{0} ∪ {√peak·e^{j2kπ/M}, k = 1..M}`
    Psk { peak: f64, order: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    /// x(e^{jθ}s) = e^{jθ}x(s) for every θ
    Radial,
    /// BPSK: x depends on Re s only
    RealLine,
    /// M-PSK with M ≥ 3
    Sector(u32),
}

impl Support {
    pub fn disc(peak: f64) -> Result<Self> {
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::InvalidInput(format!("peak power must be positive, got {peak}")));
        }
        Ok(Support::Disc { peak })
    }

    pub fn psk(peak: f64, order: u32) -> Result<Self> {
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::InvalidInput(format!("peak power must be positive, got {peak}")));
        }
        if order < 2 {
            return Err(Error::InvalidInput(format!("PSK order must be ≥ 2, got {order}")));
        }
        Ok(Support::Psk { peak, order })
    }

    pub fn peak(&self) -> Option<f64> {
        match self {
            Support::Complex => None,
            Support::Disc { peak } | Support::Psk { peak, .. } => Some(*peak),
        }
    }

    pub fn symmetry(&self) -> Symmetry {
        match self {
            Support::Complex | Support::Disc { .. } => Symmetry::Radial,
            Support::Psk { order: 2, .. } => Symmetry::RealLine,
            Support::Psk { order, .. } => Symmetry::Sector(*order),
        }
    }

    /// Default activity tolerance `1e-9·max(1, √P)`.
    pub fn active_tol(&self) -> f64 {
        1e-9 * self.peak().map_or(1.0, |p| p.sqrt().max(1.0))
    }

    /// Constellation points of a PSK support, index k = 1..M at position k−1.
    pub fn psk_points(&self) -> Vec<Complex64> {
        match self {
            Support::Psk { peak, order } => (1..=*order)
                .map(|k| Complex64::from_polar(peak.sqrt(), 2.0 * PI * k as f64 / *order as f64))
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn contains(&self, v: Complex64, tol: f64) -> bool {
        match self {
            Support::Complex => v.is_finite(),
            Support::Disc { peak } => v.norm() <= peak.sqrt() + tol,
            Support::Psk { .. } => v.norm() <= tol || self.psk_points().iter().any(|p| (v - p).norm() <= tol),
        }
    }

    /// Nearest point of the support.
    pub fn project(&self, v: Complex64) -> Complex64 {
        match self {
            Support::Complex => v,
            Support::Disc { peak } => {
                let r = v.norm();
                let c = peak.sqrt();
                if r > c {
                    v * (c / r)
                } else {
                    v
                }
            }
            Support::Psk { .. } => {
                let mut best = Complex64::new(0.0, 0.0);
                let mut d = v.norm_sqr();
                for p in self.psk_points() {
                    let dp = (v - p).norm_sqr();
                    if dp < d {
                        d = dp;
                        best = p;
                    }
                }
                best
            }
        }
    }
}

/// `|v − s|² + ξ·u(v)`.
pub fn objective(v: Complex64, s: Complex64, xi: f64, pen: &Penalty) -> f64 {
    (v - s).norm_sqr() + xi * pen.value(v)
}

pub fn is_active(x: Complex64, tol: f64) -> bool {
    x.norm() > tol
}

fn check(s: Complex64, xi: f64, pen: &Penalty, sup: &Support) -> Result<()> {
    if !s.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite input {s}")));
    }
    if !(xi.is_finite() && xi > 0.0) {
        return Err(Error::InvalidInput(format!("xi must be positive and finite, got {xi}")));
    }
    if matches!(sup, Support::Psk { .. }) && pen.kind() == PenaltyKind::ZeroNorm {
        return Err(Error::Unsupported("zero-norm penalty with PSK support (all nonzero points have equal norm)".into()));
    }
    Ok(())
}

/// Magnitude map `g(r)` of a phase-invariant precoder, `x = e^{j∠s} g(|s|)`.
/// Only valid for [`Support::Complex`] and [`Support::Disc`].
pub fn radial_magnitude(r: f64, xi: f64, pen: &Penalty, sup: &Support) -> f64 {
    let shrink = 1.0 + xi * pen.lambda;
    let cap = sup.peak().map_or(f64::INFINITY, f64::sqrt);
    match pen.kind() {
        PenaltyKind::Ridge => (r / shrink).min(cap),
        PenaltyKind::L1 => {
            let t1 = 0.5 * xi * pen.lambda1;
            if r <= t1 {
                0.0
            } else {
                ((r - t1) / shrink).min(cap)
            }
        }
        PenaltyKind::ZeroNorm => match sup {
            Support::Complex => {
                let t0 = (xi * pen.lambda0 * shrink).sqrt();
                if r <= t0 {
                    0.0
                } else {
                    r / shrink
                }
            }
            _ => {
                // compare the zero branch with the best nonzero magnitude directly
                let g = (r / shrink).min(cap);
                let active = (g - r).powi(2) + xi * (pen.lambda * g * g + pen.lambda0);
                if g > 0.0 && active < r * r {
                    g
                } else {
                    0.0
                }
            }
        },
    }
}

/// Minimal scalar energy `E_min(r) = min_v |v − s|² + ξu(v)` at `|s| = r`
/// for phase-invariant supports.
pub fn radial_min_energy(r: f64, xi: f64, pen: &Penalty, sup: &Support) -> f64 {
    let g = radial_magnitude(r, xi, pen, sup);
    if g == 0.0 {
        return r * r;
    }
    (g - r).powi(2) + xi * (pen.lambda * g * g + pen.lambda0 + pen.lambda1 * g)
}

/// Radii where `g(r)` changes branch (thresholds and the peak clip).
pub fn radial_breaks(xi: f64, pen: &Penalty, sup: &Support) -> Vec<f64> {
    let shrink = 1.0 + xi * pen.lambda;
    let peak = sup.peak();
    let mut b = Vec::new();
    match pen.kind() {
        PenaltyKind::Ridge => {}
        PenaltyKind::L1 => b.push(0.5 * xi * pen.lambda1),
        PenaltyKind::ZeroNorm => {
            let t0 = (xi * pen.lambda0 * shrink).sqrt();
            b.push(t0);
            if let Some(p) = peak {
                let tt = shrink * p.sqrt();
                b.push(tt);
                b.push((p * shrink + xi * pen.lambda0) / (2.0 * p.sqrt()));
            }
        }
    }
    if let Some(p) = peak {
        b.push(shrink * p.sqrt() + 0.5 * xi * pen.lambda1);
    }
    b.retain(|v| v.is_finite() && *v > 0.0);
    b
}

/// PSK activity threshold: the output is nonzero iff `|s|·ψ(k*) > τ`.
pub fn psk_threshold(xi: f64, pen: &Penalty, peak: f64) -> f64 {
    0.5 * (peak.sqrt() * (1.0 + xi * pen.lambda) + xi * pen.lambda1)
}

/// Index k ∈ 1..=M of the constellation point closest in angle to `s`
/// (ties go to the smaller index) and its alignment `ψ = cos(2kπ/M − ∠s)`.
pub fn psk_nearest(s: Complex64, order: u32) -> (u32, f64) {
    let m = order as f64;
    let theta = s.arg();
    let t = (theta * m / (2.0 * PI)).rem_euclid(m);
    let lo = t.floor() as u32 % order;
    let hi = (lo + 1) % order;
    let idx = |i: u32| if i == 0 { order } else { i };
    let psi = |k: u32| (2.0 * PI * k as f64 / m - theta).cos();
    let (a, b) = (idx(lo), idx(hi));
    let (pa, pb) = (psi(a), psi(b));
    if pa > pb || (pa == pb && a < b) {
        (a, pa)
    } else {
        (b, pb)
    }
}

/// Global minimizer of `|v − s|² + ξu(v)` over the support.
pub fn solve_scalar(s: Complex64, xi: f64, pen: &Penalty, sup: &Support) -> Result<Complex64> {
    check(s, xi, pen, sup)?;
    Ok(solve_unchecked(s, xi, pen, sup))
}

pub(crate) fn solve_unchecked(s: Complex64, xi: f64, pen: &Penalty, sup: &Support) -> Complex64 {
    let r = s.norm();
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    match sup {
        Support::Complex | Support::Disc { .. } => {
            let g = radial_magnitude(r, xi, pen, sup);
            if g == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                s * (g / r)
            }
        }
        Support::Psk { peak, order } => {
            let (k, psi) = psk_nearest(s, *order);
            if r * psi > psk_threshold(xi, pen, *peak) {
                Complex64::from_polar(peak.sqrt(), 2.0 * PI * k as f64 / *order as f64)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }
    }
}

/// `E_min(s) − |s|² ≤ 0`, the exponent of the one-step RSB tilt (up to −μ/ξ).
pub fn tilt_energy(z: Complex64, xi: f64, pen: &Penalty, sup: &Support) -> Result<f64> {
    let x = solve_scalar(z, xi, pen, sup)?;
    Ok((objective(x, z, xi, pen) - z.norm_sqr()).min(0.0))
}

/// Polar search grid for [`oracle_scalar`].
#[derive(Debug, Clone, Copy)]
pub struct OracleGrid {
    pub radial: usize,
    pub angular: usize,
    /// Outer radius for the complex plane; must be at least 4|s|.
    pub radius_cap: f64,
}

impl OracleGrid {
    pub fn for_input(s: Complex64, radial: usize, angular: usize) -> Self {
        Self { radial, angular, radius_cap: (4.0 * s.norm()).max(1.0) }
    }

    fn outer(&self, sup: &Support) -> f64 {
        match sup.peak() {
            Some(p) if matches!(sup, Support::Disc { .. }) => p.sqrt(),
            _ => self.radius_cap,
        }
    }

    /// Upper bound on `objective(best grid point) − objective(true minimizer)`.
    pub fn resolution_bound(&self, s: Complex64, xi: f64, pen: &Penalty, sup: &Support) -> f64 {
        if matches!(sup, Support::Psk { .. }) {
            return 0.0;
        }
        let big_r = self.outer(sup);
        let dr = big_r / self.radial as f64;
        let dth = 2.0 * PI / self.angular as f64;
        let delta = 0.5 * dr + 0.5 * big_r * dth;
        let lip = 2.0 * (big_r + s.norm()) + 2.0 * xi * pen.lambda * big_r + xi * pen.lambda1;
        lip * delta
    }
}

/// Exhaustive grid search for the scalar problem (exact enumeration on PSK).
pub fn oracle_scalar(s: Complex64, xi: f64, pen: &Penalty, sup: &Support, grid: &OracleGrid) -> Result<Complex64> {
    check(s, xi, pen, sup)?;
    if grid.radial == 0 || grid.angular == 0 || !(grid.radius_cap > 0.0) {
        return Err(Error::InvalidInput("oracle grid needs positive resolution and radius".into()));
    }
    let mut best = Complex64::new(0.0, 0.0);
    let mut best_obj = objective(best, s, xi, pen);
    let mut consider = |v: Complex64| {
        let o = objective(v, s, xi, pen);
        if o < best_obj {
            best_obj = o;
            best = v;
        }
    };
    match sup {
        Support::Psk { .. } => sup.psk_points().into_iter().for_each(&mut consider),
        _ => {
            let big_r = grid.outer(sup);
            for i in 1..=grid.radial {
                let r = big_r * i as f64 / grid.radial as f64;
                for j in 0..grid.angular {
                    consider(Complex64::from_polar(r, 2.0 * PI * j as f64 / grid.angular as f64));
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn documented_examples() {
        let p = Penalty::ridge_l0(0.0, 1.0).unwrap();
        assert_eq!(solve_scalar(c(2.0), 1.0, &p, &Support::Complex).unwrap(), c(2.0));
        let p = Penalty::ridge_l1(0.5, 1.0).unwrap();
        assert!((solve_scalar(c(3.0), 2.0, &p, &Support::Complex).unwrap() - c(1.0)).norm() < 1e-15);
        let bpsk = Support::psk(1.0, 2).unwrap();
        let p = Penalty::ridge(0.0).unwrap();
        assert_eq!(solve_scalar(c(0.6), 1.0, &p, &bpsk).unwrap().re, 1.0);
        assert_eq!(solve_scalar(c(0.4), 1.0, &p, &bpsk).unwrap(), c(0.0));
        let p = Penalty::ridge_l0(1.0, 2.0).unwrap();
        assert_eq!(solve_scalar(c(1.5), 1.0, &p, &Support::Complex).unwrap(), c(0.0));
    }

    #[test]
    fn zero_input_gives_zero() {
        for sup in [Support::Complex, Support::disc(2.0).unwrap(), Support::psk(1.0, 4).unwrap()] {
            let p = Penalty::ridge_l1(0.3, 0.2).unwrap();
            assert_eq!(solve_scalar(c(0.0), 1.3, &p, &sup).unwrap(), c(0.0));
        }
    }

    #[test]
    fn ties_go_to_zero() {
        // τ0 = √(ξλ0(1+ξλ)) = √(1·2·1) with ξ=1, λ=0, λ0=2
        let p = Penalty::ridge_l0(0.0, 2.0).unwrap();
        let t0 = 2f64.sqrt();
        assert_eq!(solve_scalar(c(t0), 1.0, &p, &Support::Complex).unwrap(), c(0.0));
        assert!(!is_active(solve_scalar(c(t0 - 1e-9), 1.0, &p, &Support::Complex).unwrap(), 0.0));
        // PSK threshold 0.5 at P=1, ξλ=0
        let p = Penalty::ridge(0.0).unwrap();
        assert_eq!(solve_scalar(c(0.5), 1.0, &p, &Support::psk(1.0, 2).unwrap()).unwrap(), c(0.0));
    }

    #[test]
    fn psk_tie_prefers_smaller_index() {
        // ∠s = π/4 with M=4 is equidistant from k=4 (angle 0) and k=1 (angle π/2)
        let (k, _) = psk_nearest(Complex64::from_polar(1.0, PI / 4.0), 4);
        assert!(k == 1 || k == 4);
        let (k, psi) = psk_nearest(Complex64::new(-1.0, 0.0), 2);
        assert_eq!(k, 1);
        assert!((psi - 1.0).abs() < 1e-15);
        let (k, _) = psk_nearest(Complex64::new(1.0, 1e-3), 2);
        assert_eq!(k, 2);
    }

    #[test]
    fn rejects_invalid() {
        assert!(Support::psk(1.0, 1).is_err());
        assert!(Penalty::new(0.1, 1.0, 1.0).is_err());
        assert!(Penalty::ridge(-1.0).is_err());
        let p = Penalty::ridge_l0(0.0, 1.0).unwrap();
        assert!(solve_scalar(c(1.0), 1.0, &p, &Support::psk(1.0, 2).unwrap()).is_err());
        assert!(solve_scalar(Complex64::new(f64::NAN, 0.0), 1.0, &Penalty::ridge(0.0).unwrap(), &Support::Complex).is_err());
    }

    #[test]
    fn tilt_energy_examples() {
        let p = Penalty::ridge(0.5).unwrap();
        let z = Complex64::new(1.0, 2.0);
        let v = tilt_energy(z, 2.0, &p, &Support::Complex).unwrap();
        assert!((v + z.norm_sqr() / 2.0).abs() < 1e-14);
        assert_eq!(tilt_energy(c(0.0), 2.0, &p, &Support::Complex).unwrap(), 0.0);
        let p = Penalty::ridge_l0(0.0, 4.0).unwrap();
        assert_eq!(tilt_energy(c(1.0), 1.0, &p, &Support::Complex).unwrap(), 0.0);
    }

    #[test]
    fn disc_rule_matches_branch_boundaries() {
        // τ̂0 = max{τ̃0, τ̃0/2 + τ0²/(2τ̃0)}: for large λ0 the boundary branch switches on at τ̂0
        let sup = Support::disc(1.0).unwrap();
        let p = Penalty::ridge_l0(0.0, 3.0).unwrap();
        let (xi, tt, t0sq) = (1.0, 1.0, 3.0);
        let that = f64::max(tt, tt / 2.0 + t0sq / (2.0 * tt));
        assert_eq!(solve_scalar(c(that - 1e-9), xi, &p, &sup).unwrap(), c(0.0));
        assert_eq!(solve_scalar(c(that + 1e-9), xi, &p, &sup).unwrap(), c(1.0));
    }

    #[test]
    fn projection_lands_in_support() {
        let v = Complex64::new(3.0, -4.0);
        let d = Support::disc(4.0).unwrap();
        assert!((d.project(v).norm() - 2.0).abs() < 1e-15);
        let q = Support::psk(1.0, 4).unwrap();
        assert!(q.contains(q.project(v), 1e-12));
        assert_eq!(q.project(Complex64::new(0.1, 0.0)), c(0.0));
    }
}
