#![allow(dead_code)]

use replica_lse::rsb_solver::{rsb_effective_params, RsbState};
use replica_lse::SpectralModel;

/// Stationary point of the BPSK, ρ = 1, α⁻¹ = 5 system found by the full solver.
pub const BPSK_ALPHA_INV: f64 = 5.0;
pub const BPSK_LAMBDA: f64 = 0.33939;
pub const BPSK_STATE: RsbState = RsbState {
    chi: 0.08745859659123534,
    c: 0.015656641901044745,
    p: 0.18299331121161,
    mu: 59.85315851597346,
};

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `I(u; t) + D(p_u ‖ φ)` for BPSK (unit peak, ridge + ℓ1), straight from the
/// definitions on uniform grids. Only real parts are tilted; imaginary parts
/// cancel in both terms.
pub fn bpsk_info_plus_kl(state: RsbState, rho: f64, alpha: f64, lambda: f64, lambda1: f64) -> f64 {
    let sm = SpectralModel::marchenko_pastur(alpha).unwrap();
    let prm = rsb_effective_params(state, rho, &sm).unwrap();
    let gamma = state.mu / prm.xi;
    let thr = 1.0 + prm.xi * (lambda + lambda1);
    // |z|² − min over {0, ±1}
    let k = |a: f64| (2.0 * a.abs() - thr).max(0.0);
    let st = (prm.rho_rs / 2.0).sqrt();
    let su = (prm.rho1 / 2.0).sqrt();
    let (nt, nu) = (1201, 6001);
    let tmax = 9.0 * st;
    let umax = tmax + 14.0 * su + 2.0 * gamma * prm.rho1;
    let ht = 2.0 * tmax / (nt - 1) as f64;
    let hu = 2.0 * umax / (nu - 1) as f64;
    let ts: Vec<f64> = (0..nt).map(|i| -tmax + ht * i as f64).collect();
    let us: Vec<f64> = (0..nu).map(|i| -umax + hu * i as f64).collect();
    let log_phi: Vec<f64> = us.iter().map(|u| -u * u / (2.0 * su * su) - (2.0 * std::f64::consts::PI).sqrt().ln() - su.ln()).collect();
    let wt: Vec<f64> = {
        let raw: Vec<f64> = ts.iter().map(|t| (-t * t / (2.0 * st * st)).exp()).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|w| w / s).collect()
    };
    // log p(u|t) on the grid
    let mut logp = vec![vec![0.0; nu]; nt];
    for (i, t) in ts.iter().enumerate() {
        let row: Vec<f64> = us.iter().zip(&log_phi).map(|(u, lp)| gamma * k(t + u) + lp).collect();
        let lz = log_sum_exp(&row) + hu.ln();
        for (j, v) in row.iter().enumerate() {
            logp[i][j] = v - lz;
        }
    }
    let mut pu = vec![0.0; nu];
    for i in 0..nt {
        for j in 0..nu {
            pu[j] += wt[i] * logp[i][j].exp();
        }
    }
    let mut info = 0.0;
    for i in 0..nt {
        for j in 0..nu {
            let p = logp[i][j].exp();
            if p > 0.0 && pu[j] > 0.0 {
                info += wt[i] * hu * p * (logp[i][j] - pu[j].ln());
            }
        }
    }
    let mut kl = 0.0;
    for j in 0..nu {
        if pu[j] > 0.0 {
            kl += hu * pu[j] * (pu[j].ln() - log_phi[j]);
        }
    }
    info + kl
}
