//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use mgsim_core::plant::DgParams;

/// Dense Metropolis matrix built straight from the adjacency.
pub fn dense_metropolis(adj: &[Vec<bool>]) -> Vec<Vec<f64>> {
    let n = adj.len();
    let deg: Vec<usize> = (0..n).map(|i| (0..n).filter(|&j| j != i && adj[i][j]).count()).collect();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && adj[i][j] {
                w[i][j] = 1.0 / deg[i].max(deg[j]) as f64;
            }
        }
        w[i][i] = 1.0 - (0..n).filter(|&j| j != i).map(|j| w[i][j]).sum::<f64>();
    }
    w
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

pub fn matpow(w: &[Vec<f64>], mut k: u32) -> Vec<Vec<f64>> {
    let n = w.len();
    let mut acc: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut base = w.to_vec();
    while k > 0 {
        if k & 1 == 1 {
            acc = matmul(&acc, &base);
        }
        base = matmul(&base, &base);
        k >>= 1;
    }
    acc
}

pub fn matvec(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    w.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Root of Σ P_i(f) − load by bisection, with each DG's power read off its
/// droop line.
pub fn bisect_bus(dgs: &[DgParams], delta_f: &[f64], load: f64) -> f64 {
    let mismatch = |f: f64| -> f64 {
        dgs.iter().zip(delta_f).map(|(d, df)| d.p0 + (d.f0 + df - f) / d.kp).sum::<f64>() - load
    };
    let (mut lo, mut hi) = (40.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mismatch(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}


/// Largest |λ| of `w` off the consensus direction, by power iteration on
/// `w − 11ᵀ/n`. Bounds the per-round contraction of the disagreement.
pub fn disagreement_modulus(w: &[Vec<f64>]) -> f64 {
    let n = w.len();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0).sin()).collect();
    let mut gain = 0.0;
    for _ in 0..5000 {
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let u = matvec(w, &v);
        gain = u.iter().map(|x| x * x).sum::<f64>().sqrt() / norm;
        v = u.iter().map(|x| x / norm).collect();
    }
    gain
}
