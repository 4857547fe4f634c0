//! Reference implementations that share no code path with the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};

fn hinge_primal(x: &[Vec<f64>], y: &[f64], w: &[f64], c: f64, fit_bias: bool) -> f64 {
    let d = x[0].len();
    let mut loss = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let mut s: f64 = xi.iter().zip(w).map(|(a, b)| a * b).sum();
        if fit_bias {
            s += w[d];
        }
        loss += (1.0 - yi * s).max(0.0);
    }
    0.5 * w.iter().map(|v| v * v).sum::<f64>() + c * loss
}

/// Full-batch subgradient descent on the L1-hinge primal with step 1/t
/// (the objective is 1-strongly convex). Returns the best objective seen.
pub fn subgradient_objective(
    x: &[Vec<f64>],
    y: &[f64],
    c: f64,
    fit_bias: bool,
    iterations: usize,
) -> f64 {
    let d = x[0].len();
    let width = d + usize::from(fit_bias);
    let mut w = vec![0.0; width];
    let mut best = hinge_primal(x, y, &w, c, fit_bias);
    let mut g = vec![0.0; width];
    for t in 1..=iterations {
        g.copy_from_slice(&w);
        for (xi, &yi) in x.iter().zip(y) {
            let mut s: f64 = xi.iter().zip(&w).map(|(a, b)| a * b).sum();
            if fit_bias {
                s += w[d];
            }
            if yi * s < 1.0 {
                for j in 0..d {
                    g[j] -= c * yi * xi[j];
                }
                if fit_bias {
                    g[d] -= c * yi;
                }
            }
        }
        let eta = 1.0 / t as f64;
        for j in 0..width {
            w[j] -= eta * g[j];
        }
        let obj = hinge_primal(x, y, &w, c, fit_bias);
        if obj < best {
            best = obj;
        }
    }
    best
}

/// AUC by counting every positive/negative pair.
pub fn auc_all_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            den += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / den
}

/// Unit eigenvector of the largest eigenvalue of `XᵀX` by full
/// eigendecomposition.
pub fn top_eigenvector(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let gram = x.transpose() * &x;
    let eig = SymmetricEigen::new(gram);
    let k = eig.eigenvalues.imax();
    eig.eigenvectors.column(k).iter().copied().collect()
}

/// Angle in radians between two directions, ignoring sign.
pub fn unsigned_angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    (dot.abs() / (na * nb)).min(1.0).acos()
}
