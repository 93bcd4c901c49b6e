//! Independent reference computations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use mfe_core::{ModelParams, Resource, ThresholdPolicy};

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col];
        assert!(p.abs() > 1e-300, "singular system");
        for row in col + 1..n {
            let factor = a[row][col] / p;
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Poisson(mean) weights on `0..levels`, renormalized.
pub fn truncated_poisson(mean: f64, levels: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(levels);
    let mut log_p = -mean;
    for n in 0..levels {
        if n > 0 {
            log_p += mean.ln() - (n as f64).ln();
        }
        w.push(log_p.exp());
    }
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Switch probability of the threshold rule, written out from its
/// definition.
pub fn threshold_switch(nz: f64, n: usize) -> f64 {
    let x = n as f64;
    let fl = nz.floor();
    if x > nz {
        1.0
    } else if x < fl {
        0.0
    } else {
        fl + 1.0 - nz
    }
}

/// `V̂` of the focal agent under the stationary rule `stay[n - 1][z]`,
/// others following `others`, from the embedded jump chain:
///
/// at `(z, n)` with `D = nλ + μ_z + κ` the next event is the focal agent's
/// epoch (`λ/D`), another agent leaving the system (`(n−1)λ(1−γ)/D`), another
/// agent surviving its epoch (`(n−1)λγ/D`, then switching with the threshold
/// probability), a resource flip (`μ_z/D`) or an arrival (`κ/D`, reflected at
/// `nmax`).
pub fn rule_vhat(
    params: &ModelParams,
    others: &ThresholdPolicy,
    kappa: f64,
    c: f64,
    nmax: usize,
    stay: &[[bool; 2]],
) -> Vec<[f64; 2]> {
    let idx = |z: usize, n: usize| (n - 1) * 2 + z;
    let size = 2 * nmax;
    let mut a = vec![vec![0.0; size]; size];
    let mut b = vec![0.0; size];
    let (l, g) = (params.lambda, params.gamma);
    for n in 1..=nmax {
        for z in 0..2 {
            let res = Resource::from_index(z).unwrap();
            let mu = params.flip_rate(res);
            let d = n as f64 * l + mu + kappa;
            let p_dec = l / d;
            let p_exit = (n - 1) as f64 * l * (1.0 - g) / d;
            let p_sur = (n - 1) as f64 * l * g / d;
            let p_res = mu / d;
            let p_arr = kappa / d;
            let s = threshold_switch([others.n0, others.n1][z], n);
            let i = idx(z, n);
            a[i][i] += 1.0;
            // Own epoch: V = z f(n) + γ (stay ? V̂ : C).
            b[i] += p_dec * (z as f64) * params.reward.f(n);
            if stay[n - 1][z] {
                a[i][i] -= p_dec * g;
            } else {
                b[i] += p_dec * g * c;
            }
            if n > 1 {
                a[i][idx(z, n - 1)] -= p_exit + p_sur * s;
            }
            a[i][i] -= p_sur * (1.0 - s);
            a[i][idx(1 - z, n)] -= p_res;
            a[i][idx(z, (n + 1).min(nmax))] -= p_arr;
        }
    }
    let x = dense_solve(a, b);
    (1..=nmax).map(|n| [x[idx(0, n)], x[idx(1, n)]]).collect()
}

/// Pointwise maximum of [`rule_vhat`] over all `2^(2 nmax)` deterministic
/// stationary rules, and over the integer threshold rules alone
/// (stay iff `n < t_z`, `t_z ∈ 0..=nmax+1`).
pub fn enumerate_rules(
    params: &ModelParams,
    others: &ThresholdPolicy,
    kappa: f64,
    c: f64,
    nmax: usize,
) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let states = 2 * nmax;
    let mut all = vec![[f64::NEG_INFINITY; 2]; nmax];
    for mask in 0u32..(1 << states) {
        let stay: Vec<[bool; 2]> = (0..nmax)
            .map(|i| [mask >> (2 * i) & 1 == 1, mask >> (2 * i + 1) & 1 == 1])
            .collect();
        let v = rule_vhat(params, others, kappa, c, nmax, &stay);
        for (m, x) in all.iter_mut().zip(&v) {
            m[0] = m[0].max(x[0]);
            m[1] = m[1].max(x[1]);
        }
    }
    let mut thresholds = vec![[f64::NEG_INFINITY; 2]; nmax];
    for t0 in 0..=nmax + 1 {
        for t1 in 0..=nmax + 1 {
            let stay: Vec<[bool; 2]> = (1..=nmax).map(|n| [n < t0, n < t1]).collect();
            let v = rule_vhat(params, others, kappa, c, nmax, &stay);
            for (m, x) in thresholds.iter_mut().zip(&v) {
                m[0] = m[0].max(x[0]);
                m[1] = m[1].max(x[1]);
            }
        }
    }
    (all, thresholds)
}

pub fn max_abs_diff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x[0] - y[0]).abs().max((x[1] - y[1]).abs()))
        .fold(0.0, f64::max)
}
