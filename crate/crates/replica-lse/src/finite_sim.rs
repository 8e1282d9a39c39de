//! Finite-size instances of `min_v ‖Hv − √ρ s‖² + Σ u(vⱼ)` and solvers for them.

use std::io::{Read, Write};
use std::path::Path;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::decoupled::{self, Penalty, Support};
use crate::error::{Error, Result};
use crate::spectral::SpectralModel;

#[derive(Debug, Clone)]
pub enum ChannelModel {
    /// Entries i.i.d. CN(0, 1/n).
    IidGaussian,
    /// `HᴴH = U D Uᴴ`, U Haar, D drawn from the spectral model.
    HaarSpectrum(SpectralModel),
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    /// k×n channel
    pub h: Mat<Complex64>,
    pub s: Vec<Complex64>,
    pub rho: f64,
    pub penalty: Penalty,
    pub support: Support,
    pub seed: u64,
    pub model: ChannelModel,
}

impl ProblemInstance {
    pub fn from_parts(h: Mat<Complex64>, s: Vec<Complex64>, rho: f64, penalty: Penalty, support: Support) -> Result<Self> {
        if s.len() != h.nrows() {
            return Err(Error::InvalidInput(format!("s has {} entries, H has {} rows", s.len(), h.nrows())));
        }
        if !(rho > 0.0) {
            return Err(Error::InvalidInput(format!("ρ must be positive, got {rho}")));
        }
        Ok(Self { h, s, rho, penalty, support, seed: 0, model: ChannelModel::IidGaussian })
    }

    pub fn n(&self) -> usize {
        self.h.ncols()
    }

    pub fn k(&self) -> usize {
        self.h.nrows()
    }

    /// `√ρ s`
    pub fn target(&self) -> Vec<Complex64> {
        let a = self.rho.sqrt();
        self.s.iter().map(|v| v * a).collect()
    }

    /// `Hx − √ρ s`
    pub fn residual(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut r = matvec(&self.h, x);
        let a = self.rho.sqrt();
        for (ri, si) in r.iter_mut().zip(&self.s) {
            *ri -= si * a;
        }
        r
    }

    /// `‖Hx − √ρ s‖² + Σ u(xⱼ)`
    pub fn objective(&self, x: &[Complex64]) -> f64 {
        norm_sqr(&self.residual(x)) + x.iter().map(|v| self.penalty.value(*v)).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: Vec<Complex64>,
    pub objective: f64,
    /// `‖Hx − √ρ s‖²/k`
    pub distortion: f64,
    pub active_fraction: f64,
    /// `‖x‖²/n`
    pub avg_power: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn summarize(inst: &ProblemInstance, pen: &Penalty, x: Vec<Complex64>, iterations: usize, converged: bool) -> SolveResult {
    let res = norm_sqr(&inst.residual(&x));
    let tol = inst.support.active_tol();
    let n = x.len() as f64;
    SolveResult {
        objective: res + x.iter().map(|v| pen.value(*v)).sum::<f64>(),
        distortion: res / inst.k() as f64,
        active_fraction: x.iter().filter(|v| v.norm() > tol).count() as f64 / n,
        avg_power: norm_sqr(&x) / n,
        x,
        iterations,
        converged,
    }
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn matvec(h: &Mat<Complex64>, x: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); h.nrows()];
    for (j, xj) in x.iter().enumerate() {
        if *xj == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += h[(i, j)] * xj;
        }
    }
    out
}

fn matvec_adj(h: &Mat<Complex64>, r: &[Complex64]) -> Vec<Complex64> {
    (0..h.ncols())
        .map(|j| (0..h.nrows()).map(|i| h[(i, j)].conj() * r[i]).sum())
        .collect()
}

fn cgauss<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    Complex64::new(a, b) * (0.5 * var).sqrt()
}

/// Seed of trial `trial` under master seed `master` (splitmix64 finalizer).
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut z = master ^ trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat<Complex64> {
    let g: Mat<Complex64> = Mat::from_fn(n, n, |_, _| cgauss(rng, 1.0));
    let qr = g.qr();
    let q = qr.compute_Q();
    let r = qr.R();
    // fix the phases so the law is exactly Haar
    Mat::from_fn(n, n, |i, j| {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        q[(i, j)] * ph
    })
}

pub fn sample_instance(
    n: usize,
    alpha: f64,
    rho: f64,
    penalty: Penalty,
    support: Support,
    model: ChannelModel,
    seed: u64,
) -> Result<ProblemInstance> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("n must be ≥ 2, got {n}")));
    }
    if !(alpha > 0.0) || alpha * n as f64 <= 0.5 {
        return Err(Error::InvalidInput(format!("α·n must be ≥ 1, got α = {alpha}, n = {n}")));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidInput(format!("ρ must be positive, got {rho}")));
    }
    let k = ((alpha * n as f64).round() as usize).max(1);
    let mut rng = StdRng::seed_from_u64(seed);
    let h = match &model {
        ChannelModel::IidGaussian => {
            let var = 1.0 / n as f64;
            Mat::from_fn(k, n, |_, _| cgauss(&mut rng, var))
        }
        ChannelModel::HaarSpectrum(sm) => {
            let u = haar_unitary(n, &mut rng);
            let d = sm.sample_gram_spectrum(n, k, &mut rng);
            // H = Σ Uᴴ with Σ k×n diagonal
            Mat::from_fn(k, n, |i, j| if i < d.len() { u[(j, i)].conj() * d[i].sqrt() } else { Complex64::new(0.0, 0.0) })
        }
    };
    let s = (0..k).map(|_| cgauss(&mut rng, 1.0)).collect();
    Ok(ProblemInstance { h, s, rho, penalty, support, seed, model })
}

/// `(HᴴH + λI)⁻¹Hᴴ√ρ s`, through the k×k dual system when k ≤ n.
pub fn rzf(inst: &ProblemInstance, lambda: f64) -> Result<Vec<Complex64>> {
    ridge_on(&inst.h, &inst.target(), lambda)
}

fn ridge_on(h: &Mat<Complex64>, b: &[Complex64], lambda: f64) -> Result<Vec<Complex64>> {
    let (k, n) = (h.nrows(), h.ncols());
    let bm = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let singular = || Error::Domain("ridge system is singular (λ = 0 with rank-deficient H)".into());
    if k <= n {
        let mut g = h * h.adjoint();
        for i in 0..k {
            g[(i, i)] += lambda;
        }
        let y = g.llt(Side::Lower).map_err(|_| singular())?.solve(&bm);
        let x = h.adjoint() * &y;
        Ok((0..n).map(|j| x[(j, 0)]).collect())
    } else {
        let mut g = h.adjoint() * h;
        for i in 0..n {
            g[(i, i)] += lambda;
        }
        let rhs = h.adjoint() * &bm;
        let x = g.llt(Side::Lower).map_err(|_| singular())?.solve(&rhs);
        Ok((0..n).map(|j| x[(j, 0)]).collect())
    }
}

/// Largest eigenvalue of `HᴴH` by power iteration to `tol` relative.
pub fn spectral_norm_sqr(h: &Mat<Complex64>, tol: f64) -> f64 {
    let n = h.ncols();
    let mut v: Vec<Complex64> = (0..n).map(|j| Complex64::new(1.0 + (j as f64 / n as f64), 0.5)).collect();
    let mut est = 0.0;
    for _ in 0..10_000 {
        let nv = norm_sqr(&v).sqrt();
        v.iter_mut().for_each(|z| *z /= nv);
        let w = matvec_adj(h, &matvec(h, &v));
        let e = norm_sqr(&w).sqrt();
        v = w;
        if (e - est).abs() <= tol * e {
            return e;
        }
        est = e;
    }
    est
}

#[derive(Debug, Clone)]
pub struct ConvexOptions {
    pub max_iter: usize,
    /// relative objective change
    pub tol: f64,
}

impl Default for ConvexOptions {
    fn default() -> Self {
        Self { max_iter: 20_000, tol: 1e-12 }
    }
}

/// Monotone accelerated proximal gradient for ridge / ridge+ℓ1 over ℂ or a disc.
pub fn solve_convex(inst: &ProblemInstance, opts: &ConvexOptions) -> Result<SolveResult> {
    let pen = inst.penalty;
    if pen.lambda0 != 0.0 {
        return Err(Error::Unsupported("zero-norm penalty is non-convex; use solve_coordinate".into()));
    }
    let cap = match inst.support {
        Support::Complex => f64::INFINITY,
        Support::Disc { peak } => peak.sqrt(),
        Support::Psk { .. } => return Err(Error::Unsupported("PSK support is non-convex; use solve_coordinate".into())),
    };
    let lip = 2.0 * spectral_norm_sqr(&inst.h, 1e-6) * (1.0 + 1e-4);
    let step = 1.0 / lip;
    let prox = |z: Complex64| {
        let r = z.norm();
        if r == 0.0 {
            return z;
        }
        let m = ((r - step * pen.lambda1).max(0.0) / (1.0 + 2.0 * step * pen.lambda)).min(cap);
        z * (m / r)
    };
    let n = inst.n();
    let b = inst.target();
    let obj = |x: &[Complex64]| inst.objective(x);
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut y = x.clone();
    let mut fx = obj(&x);
    let mut t = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let mut r = matvec(&inst.h, &y);
        r.iter_mut().zip(&b).for_each(|(ri, bi)| *ri -= bi);
        let g = matvec_adj(&inst.h, &r);
        let z: Vec<Complex64> = y.iter().zip(&g).map(|(yi, gi)| prox(yi - gi * (2.0 * step))).collect();
        let fz = obj(&z);
        let accepted = fz <= fx;
        let step_norm = y.iter().zip(&z).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let scale = norm_sqr(&z).sqrt().max(1e-300);
        let (x_new, f_new) = if accepted { (z.clone(), fz) } else { (x.clone(), fx) };
        let change = (fx - f_new).abs() / f_new.abs().max(1e-300);
        if accepted {
            let t1 = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = (0..n).map(|j| x_new[j] + (x_new[j] - x[j]) * ((t - 1.0) / t1)).collect();
            t = t1;
        } else {
            // momentum restart
            y = x_new.clone();
            t = 1.0;
        }
        x = x_new;
        fx = f_new;
        if accepted && change < opts.tol && step_norm <= opts.tol.sqrt() * scale && it > 1 {
            converged = true;
            break;
        }
    }
    Ok(summarize(inst, &pen, x, iterations, converged))
}

#[derive(Debug, Clone)]
pub struct CoordinateOptions {
    pub sweeps: usize,
    pub restarts: usize,
    /// stop when a sweep lowers the objective by less than `tol` relative
    pub tol: f64,
    /// shuffle the coordinate order every sweep (seeded)
    pub shuffle: bool,
    /// perturb-and-descend rounds on the best point after the restarts
    pub kicks: usize,
}

impl Default for CoordinateOptions {
    fn default() -> Self {
        Self { sweeps: 500, restarts: 8, tol: 1e-12, shuffle: false, kicks: 32 }
    }
}

struct Descent {
    x: Vec<Complex64>,
    objective: f64,
    sweeps: usize,
    converged: bool,
}

fn coordinate_descent<R: Rng>(
    inst: &ProblemInstance,
    cols: &[f64],
    start: Vec<Complex64>,
    gram: Option<&Mat<Complex64>>,
    opts: &CoordinateOptions,
    rng: &mut R,
) -> Descent {
    let (k, n) = (inst.k(), inst.n());
    let pen = &inst.penalty;
    let mut x = start;
    // r = √ρ s − Hx
    let mut r: Vec<Complex64> = inst.residual(&x).into_iter().map(|v| -v).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut fx = norm_sqr(&r) + x.iter().map(|v| pen.value(*v)).sum::<f64>();
    let mut sweeps = 0;
    let mut converged = false;
    for _ in 0..opts.sweeps {
        sweeps += 1;
        if opts.shuffle {
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
        }
        let mut max_step: f64 = 0.0;
        for &j in &order {
            let nj = cols[j];
            if nj == 0.0 {
                continue;
            }
            let mut dot = Complex64::new(0.0, 0.0);
            for i in 0..k {
                dot += inst.h[(i, j)].conj() * r[i];
            }
            let c = x[j] + dot / nj;
            let v = decoupled::solve_unchecked(c, 1.0 / nj, pen, &inst.support);
            let dv = v - x[j];
            max_step = max_step.max(dv.norm());
            if dv != Complex64::new(0.0, 0.0) {
                for i in 0..k {
                    r[i] -= inst.h[(i, j)] * dv;
                }
                x[j] = v;
            }
        }
        let f_new = norm_sqr(&r) + x.iter().map(|v| pen.value(*v)).sum::<f64>();
        let change = (fx - f_new) / f_new.abs().max(1e-300);
        fx = f_new;
        let xmax = x.iter().map(|v| v.norm()).fold(1.0, f64::max);
        if change < opts.tol && max_step <= opts.tol.sqrt() * xmax {
            // single-coordinate minimum; on a finite alphabet try joint pair moves
            if let Some(g) = gram {
                if pair_pass(inst, g, &mut x, &mut r) {
                    fx = norm_sqr(&r) + x.iter().map(|v| pen.value(*v)).sum::<f64>();
                    continue;
                }
            }
            converged = true;
            break;
        }
    }
    Descent { x, objective: fx, sweeps, converged }
}

/// One pass of exact two-coordinate moves over a finite alphabet. `r` is
/// `√ρ s − Hx` and is kept in sync. Returns whether anything moved.
fn pair_pass(inst: &ProblemInstance, g: &Mat<Complex64>, x: &mut [Complex64], r: &mut [Complex64]) -> bool {
    let pen = &inst.penalty;
    let n = x.len();
    let mut alphabet = vec![Complex64::new(0.0, 0.0)];
    alphabet.extend(inst.support.psk_points());
    let pv: Vec<f64> = alphabet.iter().map(|a| pen.value(*a)).collect();
    let mut corr = matvec_adj(&inst.h, r);
    let scale = norm_sqr(r).max(1e-300);
    let mut moved = false;
    for i in 0..n {
        for j in i + 1..n {
            let (xi, xj) = (x[i], x[j]);
            let base = pen.value(xi) + pen.value(xj);
            let mut best = (-1e-12 * scale, None);
            for (a, pa) in alphabet.iter().zip(&pv) {
                let di = a - xi;
                for (b, pb) in alphabet.iter().zip(&pv) {
                    let dj = b - xj;
                    let delta = -2.0 * (di.conj() * corr[i]).re - 2.0 * (dj.conj() * corr[j]).re
                        + di.norm_sqr() * g[(i, i)].re
                        + dj.norm_sqr() * g[(j, j)].re
                        + 2.0 * (di.conj() * g[(i, j)] * dj).re
                        + pa
                        + pb
                        - base;
                    if delta < best.0 {
                        best = (delta, Some((di, dj)));
                    }
                }
            }
            if let Some((di, dj)) = best.1 {
                x[i] += di;
                x[j] += dj;
                for (l, rl) in r.iter_mut().enumerate() {
                    *rl -= inst.h[(l, i)] * di + inst.h[(l, j)] * dj;
                }
                for (l, cl) in corr.iter_mut().enumerate() {
                    *cl -= g[(l, i)] * di + g[(l, j)] * dj;
                }
                moved = true;
            }
        }
    }
    moved
}

fn random_support_point<R: Rng>(sup: &Support, scale: f64, rng: &mut R) -> Complex64 {
    match sup {
        Support::Complex => cgauss(rng, scale * scale),
        Support::Disc { peak } => {
            let r = peak.sqrt() * rng.gen::<f64>().sqrt();
            Complex64::from_polar(r, 2.0 * std::f64::consts::PI * rng.gen::<f64>())
        }
        Support::Psk { order, .. } => {
            let k = rng.gen_range(0..=*order as usize);
            if k == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                sup.psk_points()[k - 1]
            }
        }
    }
}

/// Cyclic exact coordinate minimization with restarts from zero, the
/// projected ridge solution and random support points. Returns the best run.
pub fn solve_coordinate(inst: &ProblemInstance, opts: &CoordinateOptions) -> Result<SolveResult> {
    let n = inst.n();
    let cols: Vec<f64> = (0..n).map(|j| (0..inst.k()).map(|i| inst.h[(i, j)].norm_sqr()).sum()).collect();
    let mut rng = StdRng::seed_from_u64(trial_seed(inst.seed, 0xC0DE));
    let restarts = opts.restarts.max(1);
    let mut starts = vec![vec![Complex64::new(0.0, 0.0); n]];
    if restarts > 1 {
        let lam = inst.penalty.lambda.max(1e-3);
        let ridge = ridge_on(&inst.h, &inst.target(), lam)?;
        let scale = (norm_sqr(&ridge) / n as f64).sqrt().max(1e-3);
        starts.push(ridge.iter().map(|v| inst.support.project(*v)).collect());
        while starts.len() < restarts {
            starts.push((0..n).map(|_| random_support_point(&inst.support, scale, &mut rng)).collect());
        }
    }
    let gram = matches!(inst.support, Support::Psk { .. }).then(|| inst.h.adjoint() * &inst.h);
    let mut best: Option<Descent> = None;
    let mut total = 0;
    let mut all_converged = true;
    for st in starts {
        let d = coordinate_descent(inst, &cols, st, gram.as_ref(), opts, &mut rng);
        total += d.sweeps;
        all_converged &= d.converged;
        if best.as_ref().map_or(true, |b| d.objective < b.objective) {
            best = Some(d);
        }
    }
    let mut b = best.expect("at least one restart");
    let lam = inst.penalty.lambda.max(1e-3);
    let scale = (norm_sqr(&b.x) / n as f64).sqrt().max(lam.sqrt() * 1e-2);
    let width = n.div_ceil(4).max(3).min(n);
    for _ in 0..opts.kicks {
        let mut st = b.x.clone();
        for j in rand::seq::index::sample(&mut rng, n, width) {
            st[j] = random_support_point(&inst.support, scale, &mut rng);
        }
        let d = coordinate_descent(inst, &cols, st, gram.as_ref(), opts, &mut rng);
        total += d.sweeps;
        if d.objective < b.objective {
            b = d;
        }
    }
    let mut res = summarize(inst, &inst.penalty, b.x, total, b.converged && all_converged);
    res.converged = b.converged;
    Ok(res)
}

/// Convex instances go to [`solve_convex`], everything else to [`solve_coordinate`].
pub fn solve_auto(inst: &ProblemInstance) -> Result<SolveResult> {
    let convex = inst.penalty.lambda0 == 0.0 && matches!(inst.support, Support::Complex | Support::Disc { .. });
    if convex {
        solve_convex(inst, &ConvexOptions::default())
    } else {
        solve_coordinate(inst, &CoordinateOptions::default())
    }
}

/// Ridge precoding on `⌈η·n⌉` antennas drawn uniformly at random.
pub fn random_tas(inst: &ProblemInstance, eta_target: f64, lambda: f64) -> Result<SolveResult> {
    if !(eta_target > 0.0 && eta_target <= 1.0) {
        return Err(Error::InvalidInput(format!("η must lie in (0, 1], got {eta_target}")));
    }
    if !matches!(inst.support, Support::Complex) {
        return Err(Error::Unsupported("random TAS uses the unconstrained ridge precoder".into()));
    }
    let n = inst.n();
    let m = ((eta_target * n as f64) - 1e-9).ceil() as usize;
    if m == 0 {
        return Err(Error::InvalidInput("empty antenna selection".into()));
    }
    let mut rng = StdRng::seed_from_u64(trial_seed(inst.seed, 0x7A5));
    let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    let sub = Mat::from_fn(inst.k(), m, |i, j| inst.h[(i, idx[j])]);
    let xs = ridge_on(&sub, &inst.target(), lambda)?;
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for (j, v) in idx.iter().zip(xs) {
        x[*j] = v;
    }
    let pen = Penalty::ridge(lambda)?;
    Ok(summarize(inst, &pen, x, 1, true))
}

/// Runs `solve` on `trials` independent instances (trial `t` uses
/// `trial_seed(master, t)`), in parallel, results in trial order.
pub fn run_trials<F>(trials: usize, master: u64, solve: F) -> Vec<Result<SolveResult>>
where
    F: Fn(u64) -> Result<SolveResult> + Sync,
{
    (0..trials as u64).into_par_iter().map(|t| solve(trial_seed(master, t))).collect()
}

#[derive(Debug, Clone)]
pub struct HistogramSpec {
    pub bins: usize,
    /// upper edge for |xⱼ|; larger values land in the last bin
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct BinSummary {
    pub count: usize,
    /// normalized counts of |xⱼ|
    pub histogram: Vec<f64>,
    pub activity: f64,
}

#[derive(Debug, Clone)]
pub struct MarginalSummary {
    pub bins: Vec<BinSummary>,
    pub max_ks: f64,
    /// two-sample KS critical value at the 1% level for the smallest pair
    pub critical_1pct: f64,
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// `1.628·√((n₁+n₂)/(n₁n₂))`
pub fn ks_critical_1pct(n1: usize, n2: usize) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    1.628 * ((a + b) / (a * b)).sqrt()
}

/// Pools `xⱼ` by index bin across results and compares the bins.
pub fn empirical_marginal(results: &[SolveResult], bins: &[Vec<usize>], hist: &HistogramSpec) -> Result<MarginalSummary> {
    if bins.len() < 2 {
        return Err(Error::InvalidInput("need at least two index bins".into()));
    }
    if hist.bins == 0 || !(hist.max > 0.0) {
        return Err(Error::InvalidInput("histogram needs bins > 0 and max > 0".into()));
    }
    let tol = 1e-9;
    let mut pooled: Vec<Vec<f64>> = Vec::with_capacity(bins.len());
    for idx in bins {
        let mut v = Vec::new();
        for r in results {
            for &j in idx {
                let x = r.x.get(j).ok_or_else(|| Error::InvalidInput(format!("index {j} out of range")))?;
                v.push(x.norm());
            }
        }
        if v.len() < 1000 {
            return Err(Error::InvalidInput(format!("insufficient samples: {} < 1000 in a bin", v.len())));
        }
        pooled.push(v);
    }
    let summaries = pooled
        .iter()
        .map(|v| {
            let mut h = vec![0.0; hist.bins];
            for x in v {
                let b = ((x / hist.max) * hist.bins as f64).floor() as usize;
                h[b.min(hist.bins - 1)] += 1.0;
            }
            let c = v.len() as f64;
            h.iter_mut().for_each(|x| *x /= c);
            BinSummary { count: v.len(), histogram: h, activity: v.iter().filter(|x| **x > tol).count() as f64 / c }
        })
        .collect();
    let mut max_ks: f64 = 0.0;
    let mut crit = f64::INFINITY;
    for a in 0..pooled.len() {
        for b in a + 1..pooled.len() {
            max_ks = max_ks.max(ks_statistic(&pooled[a], &pooled[b]));
            crit = crit.min(ks_critical_1pct(pooled[a].len(), pooled[b].len()));
        }
    }
    Ok(MarginalSummary { bins: summaries, max_ks, critical_1pct: crit })
}

/// Eigenvalues of `HᴴH` in increasing order.
pub fn gram_eigenvalues(h: &Mat<Complex64>) -> Result<Vec<f64>> {
    let g = h.adjoint() * h;
    let mut ev = g
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Integration(format!("eigenvalue solver failed: {e:?}")))?;
    ev.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(ev)
}

/// Writes `n, k` (u64 LE), then H row-major and s as interleaved f64 LE (re, im).
pub fn dump_instance(h: &Mat<Complex64>, s: &[Complex64], path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 16 * (h.nrows() * h.ncols() + s.len()));
    buf.extend_from_slice(&(h.ncols() as u64).to_le_bytes());
    buf.extend_from_slice(&(h.nrows() as u64).to_le_bytes());
    let mut put = |z: Complex64| {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    };
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            put(h[(i, j)]);
        }
    }
    for z in s {
        put(*z);
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<(Mat<Complex64>, Vec<Complex64>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let word = |i: usize| -> Result<[u8; 8]> {
        buf.get(8 * i..8 * i + 8)
            .map(|b| b.try_into().unwrap())
            .ok_or_else(|| Error::InvalidInput("truncated instance file".into()))
    };
    let n = u64::from_le_bytes(word(0)?) as usize;
    let k = u64::from_le_bytes(word(1)?) as usize;
    if buf.len() != 16 + 16 * (k * n + k) {
        return Err(Error::InvalidInput(format!("instance file has {} bytes, expected {}", buf.len(), 16 + 16 * (k * n + k))));
    }
    let z = |m: usize| -> Complex64 {
        let a = f64::from_le_bytes(word(2 + 2 * m).unwrap());
        let b = f64::from_le_bytes(word(3 + 2 * m).unwrap());
        Complex64::new(a, b)
    };
    let h = Mat::from_fn(k, n, |i, j| z(i * n + j));
    let s = (0..k).map(|i| z(k * n + i)).collect();
    Ok((h, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(n: usize, alpha: f64, pen: Penalty, sup: Support, seed: u64) -> ProblemInstance {
        sample_instance(n, alpha, 1.0, pen, sup, ChannelModel::IidGaussian, seed).unwrap()
    }

    #[test]
    fn same_seed_same_instance() {
        let a = inst(20, 0.5, Penalty::ridge(0.1).unwrap(), Support::Complex, 9);
        let b = inst(20, 0.5, Penalty::ridge(0.1).unwrap(), Support::Complex, 9);
        assert_eq!(a.h, b.h);
        assert_eq!(a.s, b.s);
        assert_eq!(a.k(), 10);
    }

    #[test]
    fn dims_checked() {
        assert!(sample_instance(1, 1.0, 1.0, Penalty::ridge(0.1).unwrap(), Support::Complex, ChannelModel::IidGaussian, 0).is_err());
        assert!(sample_instance(10, 0.01, 1.0, Penalty::ridge(0.1).unwrap(), Support::Complex, ChannelModel::IidGaussian, 0).is_err());
    }

    #[test]
    fn point_mass_haar_is_isometry() {
        let sm = SpectralModel::point_mass(1.0, 1.0).unwrap();
        let p = sample_instance(16, 1.0, 1.0, Penalty::ridge(0.1).unwrap(), Support::Complex, ChannelModel::HaarSpectrum(sm), 3).unwrap();
        for v in gram_eigenvalues(&p.h).unwrap() {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rzf_primal_and_dual_agree() {
        for alpha in [0.5, 2.0] {
            let p = inst(12, alpha, Penalty::ridge(0.3).unwrap(), Support::Complex, 4);
            let x = rzf(&p, 0.3).unwrap();
            // gradient of ‖Hx − b‖² + λ‖x‖² vanishes
            let g = matvec_adj(&p.h, &p.residual(&x));
            for (gj, xj) in g.iter().zip(&x) {
                assert!((gj + xj * 0.3).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn convex_matches_rzf() {
        let p = inst(40, 0.5, Penalty::ridge(0.1).unwrap(), Support::Complex, 5);
        let r = solve_convex(&p, &ConvexOptions::default()).unwrap();
        let x = rzf(&p, 0.1).unwrap();
        let d: f64 = r.x.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(r.converged);
        assert!(d / norm_sqr(&x).sqrt() < 1e-6, "{d}");
    }

    #[test]
    fn coordinate_matches_rzf() {
        let p = inst(30, 0.5, Penalty::ridge(0.2).unwrap(), Support::Complex, 6);
        let r = solve_coordinate(&p, &CoordinateOptions { restarts: 1, tol: 1e-20, sweeps: 20_000, ..Default::default() }).unwrap();
        let x = rzf(&p, 0.2).unwrap();
        let d: f64 = r.x.iter().zip(&x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn psk_outputs_on_constellation() {
        let sup = Support::psk(1.0, 4).unwrap();
        let p = inst(16, 0.5, Penalty::ridge(0.1).unwrap(), sup, 7);
        let r = solve_coordinate(&p, &CoordinateOptions::default()).unwrap();
        assert!(r.x.iter().all(|v| sup.contains(*v, 1e-12)));
    }

    #[test]
    fn ks_identical_is_zero() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        assert_eq!(ks_statistic(&a, &a), 0.0);
        assert_eq!(ks_statistic(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
    }

    #[test]
    fn dump_round_trip() {
        let p = inst(5, 0.6, Penalty::ridge(0.1).unwrap(), Support::Complex, 8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.bin");
        dump_instance(&p.h, &p.s, &path).unwrap();
        let (h, s) = load_instance(&path).unwrap();
        assert_eq!(h, p.h);
        assert_eq!(s, p.s);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 16 + 16 * (3 * 5 + 3));
    }

    #[test]
    fn random_tas_full_selection_is_ridge() {
        let p = inst(20, 0.5, Penalty::ridge(0.1).unwrap(), Support::Complex, 2);
        let a = random_tas(&p, 1.0, 0.1).unwrap();
        let x = rzf(&p, 0.1).unwrap();
        for (u, v) in a.x.iter().zip(&x) {
            assert!((u - v).norm() < 1e-12);
        }
        let b = random_tas(&p, 0.33, 0.1).unwrap();
        assert_eq!(b.active_fraction, 7.0 / 20.0);
    }
}
