use serde::{Deserialize, Serialize};

use super::linalg::cholesky_solve;

/// Ridge regression `y ≈ w·x + bias`; the bias is not penalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Linear {
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> Option<Linear> {
        let d = xs.first().map(|x| x.len()).unwrap_or(0);
        let n = d + 1;
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n];
        for (x, &y) in xs.iter().zip(ys) {
            for i in 0..n {
                let xi = if i < d { x[i] } else { 1.0 };
                b[i] += xi * y;
                for j in 0..=i {
                    let xj = if j < d { x[j] } else { 1.0 };
                    a[i * n + j] += xi * xj;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                a[j * n + i] = a[i * n + j];
            }
            if i < d {
                a[i * n + i] += lambda;
            }
        }
        let mut w = cholesky_solve(&a, &b)?;
        let bias = w.pop().expect("bias term");
        Some(Linear { weights: w, bias })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
    }
}
