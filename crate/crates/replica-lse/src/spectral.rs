//! R-transform of the channel Gram spectrum.
//!
//! `R(ω) = G⁻¹(−ω) − 1/ω` with `G(s) = E(λ − s)⁻¹`. Only the real half-line
//! `ω ≤ 0` is needed downstream (arguments are always `−χ` with `χ ≥ 0`); the
//! Marchenko-Pastur and point-mass models accept any `ω` in their domain.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::quadrature;

// below this |ω| the empirical transform uses its free-cumulant series
const SERIES_CUTOFF: f64 = 1e-3;

#[derive(Debug, Clone)]
pub enum SpectralKind {
    /// Gram spectrum of a k×n matrix with i.i.d. entries of variance 1/n.
    MarchenkoPastur,
    PointMass { atom: f64 },
    Empirical(Empirical),
}

/// Sampled eigenvalues plus precomputed series coefficients and an optional
/// interpolation cache.
#[derive(Debug, Clone)]
pub struct Empirical {
    eigs: Vec<f64>,
    cumulants: [f64; 4],
    cache: Option<HermiteCache>,
}

impl Empirical {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigs
    }
}

#[derive(Debug, Clone)]
struct HermiteCache {
    omega: Vec<f64>,
    value: Vec<f64>,
    slope: Vec<f64>,
}

/// Eigenvalue distribution of `HᴴH` together with the load factor `α = k/n`.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    alpha: f64,
    kind: SpectralKind,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")))
    }
}

impl SpectralModel {
    pub fn marchenko_pastur(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, kind: SpectralKind::MarchenkoPastur })
    }

    pub fn point_mass(alpha: f64, atom: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(atom.is_finite() && atom > 0.0) {
            return Err(Error::InvalidInput(format!("atom must be positive, got {atom}")));
        }
        Ok(Self { alpha, kind: SpectralKind::PointMass { atom } })
    }

    pub fn empirical(alpha: f64, mut eigs: Vec<f64>) -> Result<Self> {
        check_alpha(alpha)?;
        if eigs.is_empty() {
            return Err(Error::InvalidInput("empty eigenvalue list".into()));
        }
        if let Some(bad) = eigs.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!("eigenvalue {bad} is not finite and non-negative")));
        }
        eigs.sort_by(f64::total_cmp);
        let n = eigs.len() as f64;
        let m = |k: i32| eigs.iter().map(|v| v.powi(k)).sum::<f64>() / n;
        let (m1, m2, m3, m4) = (m(1), m(2), m(3), m(4));
        let cumulants = [
            m1,
            m2 - m1 * m1,
            m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3),
            m4 - 4.0 * m1 * m3 - 2.0 * m2 * m2 + 10.0 * m1 * m1 * m2 - 5.0 * m1.powi(4),
        ];
        Ok(Self { alpha, kind: SpectralKind::Empirical(Empirical { eigs, cumulants, cache: None }) })
    }

    /// Reads one eigenvalue per line; blank lines and `#` comments are skipped.
    pub fn from_file(alpha: f64, path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut eigs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.split('#').next().unwrap_or("").trim();
            if t.is_empty() {
                continue;
            }
            let v: f64 = t
                .parse()
                .map_err(|_| Error::Config { line: i + 1, msg: format!("not a number: {t:?}") })?;
            eigs.push(v);
        }
        Self::empirical(alpha, eigs)
    }

    /// Tabulates an empirical transform on `grid` (all points ≤ 0). Evaluations
    /// inside the grid then use a monotone cubic Hermite interpolant. No-op for
    /// the analytic models.
    pub fn with_cache(mut self, grid: &[f64]) -> Result<Self> {
        let mut omega: Vec<f64> = grid.to_vec();
        omega.sort_by(f64::total_cmp);
        omega.dedup();
        if omega.len() < 2 || omega.iter().any(|w| !w.is_finite() || *w > 0.0) {
            return Err(Error::InvalidInput("cache grid needs ≥ 2 finite points ≤ 0".into()));
        }
        if let SpectralKind::Empirical(e) = &mut self.kind {
            e.cache = None;
            let value: Vec<f64> = omega.iter().map(|&w| empirical_eval(e, w).0).collect();
            let mut slope: Vec<f64> = omega.iter().map(|&w| empirical_eval(e, w).1).collect();
            // Fritsch-Carlson limiter keeps the interpolant monotone
            for i in 0..omega.len() - 1 {
                let d = (value[i + 1] - value[i]) / (omega[i + 1] - omega[i]);
                if d == 0.0 {
                    slope[i] = 0.0;
                    slope[i + 1] = 0.0;
                    continue;
                }
                let a = slope[i] / d;
                let b = slope[i + 1] / d;
                let s = a * a + b * b;
                if s > 9.0 {
                    let t = 3.0 / s.sqrt();
                    slope[i] = t * a * d;
                    slope[i + 1] = t * b * d;
                }
            }
            e.cache = Some(HermiteCache { omega, value, slope });
        }
        Ok(self)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kind(&self) -> &SpectralKind {
        &self.kind
    }

    /// Same spectrum shape with a different load factor (MP takes its shape from α).
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, kind: self.kind.clone() })
    }

    /// Mean eigenvalue `E λ = lim_{ω→0} R(ω)`.
    pub fn mean_eigenvalue(&self) -> f64 {
        match &self.kind {
            SpectralKind::MarchenkoPastur => self.alpha,
            SpectralKind::PointMass { atom } => *atom,
            SpectralKind::Empirical(e) => e.cumulants[0],
        }
    }

    /// `R(ω)`.
    pub fn r_transform(&self, omega: f64) -> Result<f64> {
        self.check_domain(omega)?;
        Ok(match &self.kind {
            SpectralKind::MarchenkoPastur => self.alpha / (1.0 - omega),
            SpectralKind::PointMass { atom } => *atom,
            SpectralKind::Empirical(e) => match cached(e, omega) {
                Some((v, _)) => v,
                None => empirical_eval(e, omega).0,
            },
        })
    }

    /// `dR/dω`.
    pub fn r_derivative(&self, omega: f64) -> Result<f64> {
        self.check_domain(omega)?;
        Ok(match &self.kind {
            SpectralKind::MarchenkoPastur => self.alpha / (1.0 - omega).powi(2),
            SpectralKind::PointMass { .. } => 0.0,
            SpectralKind::Empirical(e) => match cached(e, omega) {
                Some((_, d)) => d,
                None => empirical_eval(e, omega).1,
            },
        })
    }

    /// `∫_a^b R(−ω) dω`.
    pub fn r_integral(&self, a: f64, b: f64) -> Result<f64> {
        if !(a <= b) {
            return Err(Error::Domain(format!("r_integral needs a ≤ b, got [{a}, {b}]")));
        }
        if a == b {
            return Ok(0.0);
        }
        self.check_domain(-a)?;
        self.check_domain(-b)?;
        match &self.kind {
            SpectralKind::MarchenkoPastur => Ok(self.alpha * ((1.0 + b) / (1.0 + a)).ln()),
            SpectralKind::PointMass { atom } => Ok(atom * (b - a)),
            SpectralKind::Empirical(_) => {
                let f = |w: f64| self.r_transform(-w).unwrap_or(f64::NAN);
                let v = quadrature::adaptive(&f, a, b, 1e-10);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Integration("empirical r_integral".into()))
                }
            }
        }
    }

    fn check_domain(&self, omega: f64) -> Result<()> {
        if !omega.is_finite() {
            return Err(Error::Domain(format!("ω = {omega}")));
        }
        match &self.kind {
            SpectralKind::MarchenkoPastur if omega >= 1.0 => {
                Err(Error::Domain(format!("Marchenko-Pastur R(ω) needs ω < 1, got {omega}")))
            }
            SpectralKind::Empirical(_) if omega > 0.0 => {
                Err(Error::Domain(format!("empirical R(ω) is evaluated for ω ≤ 0 only, got {omega}")))
            }
            _ => Ok(()),
        }
    }

    /// Draws `min(n, k)` eigenvalues for a Haar-rotated k×n channel, sorted in
    /// decreasing order. The Gram matrix has rank `min(n, k)`; for
    /// Marchenko-Pastur the draws come from the continuous part of the law.
    pub fn sample_gram_spectrum<R: Rng + ?Sized>(&self, n: usize, k: usize, rng: &mut R) -> Vec<f64> {
        let rank = n.min(k);
        let mut v: Vec<f64> = match &self.kind {
            SpectralKind::MarchenkoPastur => {
                let table = MpTable::new(self.alpha);
                (0..rank).map(|_| table.quantile(rng.gen::<f64>())).collect()
            }
            SpectralKind::PointMass { atom } => vec![*atom; n],
            SpectralKind::Empirical(e) => (0..n).map(|_| e.eigs[rng.gen_range(0..e.eigs.len())]).collect(),
        };
        v.sort_by(|a, b| b.total_cmp(a));
        v.truncate(rank);
        v
    }
}

fn cached(e: &Empirical, omega: f64) -> Option<(f64, f64)> {
    let c = e.cache.as_ref()?;
    let n = c.omega.len();
    if omega < c.omega[0] || omega > c.omega[n - 1] {
        return None;
    }
    let j = c.omega.partition_point(|w| *w <= omega).clamp(1, n - 1) - 1;
    let h = c.omega[j + 1] - c.omega[j];
    let t = (omega - c.omega[j]) / h;
    let (y0, y1, m0, m1) = (c.value[j], c.value[j + 1], c.slope[j] * h, c.slope[j + 1] * h);
    let t2 = t * t;
    let t3 = t2 * t;
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1;
    let d = ((6.0 * t2 - 6.0 * t) * y0 + (3.0 * t2 - 4.0 * t + 1.0) * m0 + (-6.0 * t2 + 6.0 * t) * y1 + (3.0 * t2 - 2.0 * t) * m1) / h;
    Some((v, d))
}

/// `(R(ω), R'(ω))` for ω ≤ 0. With `w = −ω` the value `y = R(−w)` solves
/// `mean 1/(1 + w(λᵢ − y)) = 1`, which is increasing in `y` below the pole
/// `λ_min + 1/w`, so the root is unique.
fn empirical_eval(e: &Empirical, omega: f64) -> (f64, f64) {
    let [k1, k2, k3, k4] = e.cumulants;
    if omega.abs() < SERIES_CUTOFF {
        let v = k1 + omega * (k2 + omega * (k3 + omega * k4));
        let d = k2 + omega * (2.0 * k3 + omega * 3.0 * k4);
        return (v, d);
    }
    let w = -omega;
    let eigs = &e.eigs;
    let lmin = eigs[0];
    let lmax = eigs[eigs.len() - 1];
    let n = eigs.len() as f64;
    let f = |y: f64| -> (f64, f64) {
        let mut s = 0.0;
        let mut ds = 0.0;
        for &l in eigs {
            let q = 1.0 / (1.0 + w * (l - y));
            s += q;
            ds += q * q;
        }
        (s / n - 1.0, w * ds / n)
    };
    let mut lo = lmin;
    let mut hi = lmax.min(lmin + (1.0 - 1e-12) / w);
    let mut y = k1.clamp(lo, hi);
    if hi > lo {
        for _ in 0..200 {
            let (fy, dfy) = f(y);
            if fy == 0.0 {
                break;
            }
            if fy < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let mut next = y - fy / dfy;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let done = (next - y).abs() <= 1e-15 * (1.0 + y.abs());
            y = next;
            if done || hi - lo <= 1e-15 * (1.0 + y.abs()) {
                break;
            }
        }
    } else {
        y = lo;
    }
    // implicit derivative dy/dw, then R'(ω) = −dy/dw
    let mut num = 0.0;
    let mut den = 0.0;
    for &l in eigs {
        let d = l - y;
        let q = 1.0 / (1.0 + w * d);
        num += d * q * q;
        den += q * q;
    }
    let dy_dw = if den > 0.0 { num / (w * den) } else { 0.0 };
    (y, -dy_dw)
}

/// Inverse-CDF table for the continuous part of the Marchenko-Pastur law of
/// `HᴴH`, density ∝ √((b−x)(x−a))/x on `[(1−√α)², (1+√α)²]`.
struct MpTable {
    mid: f64,
    half: f64,
    cdf: Vec<f64>,
}

impl MpTable {
    const CELLS: usize = 8192;

    fn new(alpha: f64) -> Self {
        let sa = alpha.sqrt();
        let a = (1.0 - sa).powi(2);
        let b = (1.0 + sa).powi(2);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        // x = mid − half·cos θ turns the density into half² sin²θ / x dθ
        let h = std::f64::consts::PI / Self::CELLS as f64;
        let mut cdf = Vec::with_capacity(Self::CELLS + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for i in 0..Self::CELLS {
            let th = (i as f64 + 0.5) * h;
            let x = mid - half * th.cos();
            acc += half * half * th.sin().powi(2) / x * h;
            cdf.push(acc);
        }
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        Self { mid, half, cdf }
    }

    fn quantile(&self, u: f64) -> f64 {
        let j = self.cdf.partition_point(|c| *c <= u).clamp(1, Self::CELLS) - 1;
        let span = self.cdf[j + 1] - self.cdf[j];
        let t = if span > 0.0 { (u - self.cdf[j]) / span } else { 0.0 };
        let th = (j as f64 + t) * std::f64::consts::PI / Self::CELLS as f64;
        self.mid - self.half * th.cos()
    }
}
