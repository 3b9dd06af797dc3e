//! Fully connected regression network with ReLU hidden layers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths from input to the scalar output.
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

pub(crate) fn he_init(rng: &mut ChaCha8Rng, out: &mut Vec<f64>, fan_in: usize, fan_out: usize) {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    out.extend((0..fan_in * fan_out).map(|_| normal.sample(rng)));
    out.extend(std::iter::repeat_n(0.0, fan_out));
}

/// y += W x for row-major W (rows × x.len()).
pub(crate) fn matvec_add(w: &[f64], x: &[f64], y: &mut [f64]) {
    let cols = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *yr += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// dx += Wᵀ dy.
pub(crate) fn matvec_t_add(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    for (r, g) in dy.iter().enumerate() {
        if *g == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (d, a) in dx.iter_mut().zip(row) {
            *d += a * g;
        }
    }
}

/// dW += dy ⊗ x.
pub(crate) fn outer_add(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, g) in dy.iter().enumerate() {
        if *g == 0.0 {
            continue;
        }
        for (d, a) in dw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *d += a * g;
        }
    }
}

impl Mlp {
    pub fn new(input: usize, hidden: &[usize], seed: u64) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            he_init(&mut rng, &mut params, w[0], w[1]);
        }
        Mlp { sizes, params }
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let at = offset;
            offset += w[0] * w[1] + w[1];
            (at, w[0], w[1])
        })
    }

    /// Activations of every layer, input first.
    fn forward_all(&self, params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.sizes.len() - 2;
        for (l, (at, fan_in, fan_out)) in self.layers().enumerate() {
            let mut y = params[at + fan_in * fan_out..at + fan_in * fan_out + fan_out].to_vec();
            matvec_add(&params[at..at + fan_in * fan_out], &acts[l], &mut y);
            if l < last {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(y);
        }
        acts
    }

    pub fn predict_with(&self, params: &[f64], x: &[f64]) -> f64 {
        self.forward_all(params, x).last().expect("output layer")[0]
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_with(&self.params, x)
    }

    /// Mean squared error over `batch` and its gradient, accumulated into `grad`.
    pub fn loss_grad(&self, params: &[f64], xs: &[Vec<f64>], ys: &[f64], batch: &[usize], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let layers: Vec<_> = self.layers().collect();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &i in batch {
            let acts = self.forward_all(params, &xs[i]);
            let err = acts.last().expect("output")[0] - ys[i];
            loss += err * err * scale;
            let mut delta = vec![2.0 * err * scale];
            for (l, &(at, fan_in, fan_out)) in layers.iter().enumerate().rev() {
                let wlen = fan_in * fan_out;
                outer_add(&mut grad[at..at + wlen], &delta, &acts[l]);
                for (g, d) in grad[at + wlen..at + wlen + fan_out].iter_mut().zip(&delta) {
                    *g += d;
                }
                if l == 0 {
                    break;
                }
                let mut back = vec![0.0; fan_in];
                matvec_t_add(&params[at..at + wlen], &delta, &mut back);
                for (b, a) in back.iter_mut().zip(&acts[l]) {
                    if *a <= 0.0 {
                        *b = 0.0;
                    }
                }
                delta = back;
            }
        }
        loss
    }

    pub fn loss(&self, params: &[f64], xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        let n = xs.len().max(1) as f64;
        xs.iter().zip(ys).map(|(x, y)| (self.predict_with(params, x) - y).powi(2)).sum::<f64>() / n
    }
}
