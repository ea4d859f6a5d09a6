#![allow(dead_code)]

use smc_core::models::NonMarkovGauss;

/// Kalman filter on the augmented state `(x_t, μ_t)` of each replica.
/// Returns `log p(y_{1:T})` and the filtering means of `x_T`.
pub fn kalman(model: &NonMarkovGauss) -> (f64, Vec<f64>, Vec<f64>) {
    let (phi, q, beta, r) = (model.phi, model.q, model.beta, model.r);
    let t_len = model.horizon();
    let mut log_z = 0.0;
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for j in 0..model.d {
        let mut m = [0.0f64; 2];
        let mut p = [[0.0f64; 2]; 2];
        for t in 1..=t_len {
            // predict: x' = φx + v, μ' = βμ + x'
            let a = [[phi, 0.0], [phi, beta]];
            let mp = [a[0][0] * m[0] + a[0][1] * m[1], a[1][0] * m[0] + a[1][1] * m[1]];
            let mut pp = [[0.0; 2]; 2];
            for i in 0..2 {
                for k in 0..2 {
                    let mut s = 0.0;
                    for u in 0..2 {
                        for v in 0..2 {
                            s += a[i][u] * p[u][v] * a[k][v];
                        }
                    }
                    pp[i][k] = s + q;
                }
            }
            let y = model.obs(t)[j];
            let s = pp[1][1] + r;
            let resid = y - mp[1];
            log_z += -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + resid * resid / s);
            let k = [pp[0][1] / s, pp[1][1] / s];
            m = [mp[0] + k[0] * resid, mp[1] + k[1] * resid];
            for i in 0..2 {
                for c in 0..2 {
                    p[i][c] = pp[i][c] - k[i] * pp[1][c];
                }
            }
        }
        means.push(m[0]);
        vars.push(p[0][0]);
    }
    (log_z, means, vars)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn se(x: &[f64]) -> f64 {
    let m = mean(x);
    let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0);
    (v / x.len() as f64).sqrt()
}
