//! Gauss-type rules, piecewise integration and a few special functions.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::{GaussHermite, GaussLegendre};

/// Nodes and weights of a fixed rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

type Cache = Mutex<HashMap<(u8, usize), Arc<Rule>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn sorted_rule(pairs: Vec<(f64, f64)>) -> Rule {
    let mut pairs = pairs;
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss-Legendre rule on [-1, 1] with `n ≥ 2` nodes (cached).
pub fn legendre(n: usize) -> Arc<Rule> {
    let n = n.max(2);
    let mut c = cache().lock().unwrap();
    c.entry((0, n))
        .or_insert_with(|| {
            let r = GaussLegendre::new(n).expect("degree >= 2");
            Arc::new(sorted_rule(r.into_node_weight_pairs()))
        })
        .clone()
}

/// Gauss-Hermite rule for the weight `e^{-x²}` with `n ≥ 2` nodes (cached).
pub fn hermite(n: usize) -> Arc<Rule> {
    let n = n.max(2);
    let mut c = cache().lock().unwrap();
    c.entry((1, n))
        .or_insert_with(|| {
            let r = GaussHermite::new(n).expect("degree >= 2");
            Arc::new(sorted_rule(r.into_node_weight_pairs()))
        })
        .clone()
}

/// Maps a [-1,1] rule onto consecutive segments of `breaks`, returning
/// `(node, weight)` pairs. Degenerate segments are skipped.
pub fn piecewise(rule: &Rule, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(rule.len() * breaks.len().saturating_sub(1));
    for seg in breaks.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if !(b > a) {
            continue;
        }
        let h = 0.5 * (b - a);
        let m = 0.5 * (b + a);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            out.push((m + h * x, h * w));
        }
    }
    out
}

/// Sorted, deduplicated breakpoints from `extra` clipped into `[lo, hi]`.
pub fn breakpoints(lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let mut b = vec![lo, hi];
    b.extend(extra.iter().copied().filter(|v| v.is_finite() && *v > lo && *v < hi));
    b.sort_by(f64::total_cmp);
    b.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
    b
}

/// Splits every segment longer than `max_len` into equal pieces.
pub fn refine(breaks: &[f64], max_len: f64) -> Vec<f64> {
    let mut out = vec![breaks[0]];
    for seg in breaks.windows(2) {
        let len = seg[1] - seg[0];
        let pieces = if max_len > 0.0 { (len / max_len).ceil().max(1.0) as usize } else { 1 };
        for i in 1..=pieces {
            out.push(seg[0] + len * i as f64 / pieces as f64);
        }
    }
    out
}

/// Adaptive Gauss-Legendre integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn gl<F: Fn(f64) -> f64>(f: &F, rule: &Rule, a: f64, b: f64) -> f64 {
        let h = 0.5 * (b - a);
        let m = 0.5 * (b + a);
        rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * f(m + h * x)).sum::<f64>() * h
    }
    fn rec<F: Fn(f64) -> f64>(f: &F, rule: &Rule, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let l = gl(f, rule, a, m);
        let r = gl(f, rule, m, b);
        if depth == 0 || (l + r - whole).abs() <= tol {
            return l + r;
        }
        rec(f, rule, a, m, l, 0.5 * tol, depth - 1) + rec(f, rule, m, b, r, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let rule = legendre(20);
    let whole = gl(f, &rule, a, b);
    rec(f, &rule, a, b, whole, tol, 40)
}

/// `I₀(x)·e^{-|x|}`.
pub fn bessel_i0e(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 700.0 {
        puruspe::In(0, ax) * (-ax).exp()
    } else {
        asymptotic_ie(0.0, ax)
    }
}

/// `I₁(x)·e^{-|x|}`.
pub fn bessel_i1e(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax < 700.0 { puruspe::In(1, ax) * (-ax).exp() } else { asymptotic_ie(1.0, ax) };
    v.copysign(x)
}

// Hankel expansion of e^{-x} I_ν(x) for large x.
fn asymptotic_ie(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..12 {
        let kf = k as f64;
        term *= -(mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * x);
        sum += term;
        if term.abs() < 1e-17 {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// Numerically stable `ln(Σ exp(aᵢ)·wᵢ)` for positive weights.
pub fn log_sum_exp(a: &[f64], w: &[f64]) -> f64 {
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = a.iter().zip(w).map(|(x, wi)| wi * (x - m).exp()).sum();
    m + s.ln()
}
