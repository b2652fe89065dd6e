//! Linear ε-insensitive support vector regression trained by full-batch
//! subgradient descent on standardized features.

use serde::{Deserialize, Serialize};

use super::{LearnError, SvrParams};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvr {
    /// Per-feature standardization; a zero scale marks a constant column.
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// Weights in standardized units.
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearSvr {
    #[inline]
    fn standardized(&self, j: usize, v: f64) -> f64 {
        if self.scale[j] > 0.0 {
            (v - self.center[j]) / self.scale[j]
        } else {
            0.0
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut acc = self.bias;
        for (j, &v) in row.iter().enumerate() {
            acc += self.weights[j] * self.standardized(j, v);
        }
        acc
    }

    /// Weights mapped back to raw feature units.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.scale)
            .map(|(w, s)| if *s > 0.0 { w / s } else { 0.0 })
            .collect()
    }
}

/// `½‖w‖² + c·Σ max(0, |w·x + b − y| − ε)`.
pub fn objective(w: &[f64], residuals: &[f64], params: &SvrParams) -> f64 {
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = residuals
        .iter()
        .map(|r| (r.abs() - params.epsilon).max(0.0))
        .sum();
    reg + params.c * loss
}

pub fn train_linear_svr(x: &Matrix, y: &[f64], params: &SvrParams) -> Result<LinearSvr, LearnError> {
    let (n, d) = (x.n_rows(), x.n_cols());
    if !x.all_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite);
    }

    let mut center = vec![0.0; d];
    let mut scale = vec![0.0; d];
    for j in 0..d {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        center[j] = mean;
        scale[j] = if var > 0.0 { var.sqrt() } else { 0.0 };
    }
    let mut z = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            if scale[j] > 0.0 {
                z.set(i, j, (x.get(i, j) - center[j]) / scale[j]);
            }
        }
    }

    let mut w = vec![0.0; d];
    let mut b = y.iter().sum::<f64>() / n as f64;
    let mut residuals = vec![0.0; n];
    let mut best = (f64::INFINITY, w.clone(), b);
    let norm = params.c * n as f64;
    let mut grad_w = vec![0.0; d];

    for t in 1..=params.iterations.max(1) {
        for i in 0..n {
            let zi = z.row(i);
            residuals[i] = b + zi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() - y[i];
        }
        let obj = objective(&w, &residuals, params);
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
        if t == params.iterations.max(1) {
            break;
        }

        // subgradient of objective / (c·n)
        for (g, wj) in grad_w.iter_mut().zip(&w) {
            *g = wj / norm;
        }
        let mut grad_b = 0.0;
        for (i, &r) in residuals.iter().enumerate() {
            if r.abs() > params.epsilon {
                let s = r.signum() / n as f64;
                grad_b += s;
                for (g, zij) in grad_w.iter_mut().zip(z.row(i)) {
                    *g += s * zij;
                }
            }
        }
        let eta = params.step_size / (t as f64).sqrt();
        for (wj, g) in w.iter_mut().zip(&grad_w) {
            *wj -= eta * g;
        }
        b -= eta * grad_b;
    }

    let (_, weights, bias) = best;
    Ok(LinearSvr {
        center,
        scale,
        weights,
        bias,
    })
}
