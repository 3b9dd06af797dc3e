//! Message-passing network over plan DAGs.
//!
//! Each node is encoded by a ReLU layer. Every round visits nodes in
//! topological order and updates a node from its own previous state and the
//! mean of its predecessors' updated states, so one round carries source
//! information all the way to the sink. The sink's final state feeds a
//! two-layer readout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::PlanGraph;
use super::mlp::{he_init, matvec_add, matvec_t_add, outer_add};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gnn {
    pub input: usize,
    pub hidden: usize,
    pub rounds: usize,
    pub params: Vec<f64>,
}

/// Offsets of each parameter block.
struct Layout {
    enc_w: usize,
    enc_b: usize,
    /// (self weight, message weight, bias) per round
    rounds: Vec<(usize, usize, usize)>,
    read_w: usize,
    read_b: usize,
    out_w: usize,
    out_b: usize,
}

/// Forward activations kept for backpropagation.
struct Tape {
    x: Vec<Vec<f64>>,
    /// h[t][v] for t in 0..=rounds
    h: Vec<Vec<Vec<f64>>>,
    /// mean message into v during round t
    m: Vec<Vec<Vec<f64>>>,
    r: Vec<f64>,
    y: f64,
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Mean of the given vectors, summed in a canonical (sorted) order so the
/// result does not depend on how predecessors are listed.
fn mean_sorted(vectors: &mut [&Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    if vectors.is_empty() {
        return out;
    }
    vectors.sort_by(|a, b| a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    for v in vectors.iter() {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    let n = vectors.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

impl Gnn {
    pub fn new(input: usize, hidden: usize, rounds: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        he_init(&mut rng, &mut params, input, hidden);
        for _ in 0..rounds {
            // self and message weights share one bias
            let mut block = Vec::new();
            he_init(&mut rng, &mut block, 2 * hidden, hidden);
            let (w, b) = block.split_at(2 * hidden * hidden);
            for r in 0..hidden {
                params.extend_from_slice(&w[r * 2 * hidden..r * 2 * hidden + hidden]);
            }
            for r in 0..hidden {
                params.extend_from_slice(&w[r * 2 * hidden + hidden..(r + 1) * 2 * hidden]);
            }
            params.extend_from_slice(b);
        }
        he_init(&mut rng, &mut params, hidden, hidden);
        he_init(&mut rng, &mut params, hidden, 1);
        let g = Gnn { input, hidden, rounds, params };
        debug_assert_eq!(g.params.len(), g.param_count());
        g
    }

    pub fn param_count(&self) -> usize {
        let h = self.hidden;
        self.input * h + h + self.rounds * (2 * h * h + h) + h * h + h + h + 1
    }

    fn layout(&self) -> Layout {
        let h = self.hidden;
        let enc_w = 0;
        let enc_b = self.input * h;
        let mut at = enc_b + h;
        let rounds = (0..self.rounds)
            .map(|_| {
                let r = (at, at + h * h, at + 2 * h * h);
                at += 2 * h * h + h;
                r
            })
            .collect();
        let read_w = at;
        let read_b = read_w + h * h;
        let out_w = read_b + h;
        Layout { enc_w, enc_b, rounds, read_w, read_b, out_w, out_b: out_w + h }
    }

    fn forward(&self, p: &[f64], g: &PlanGraph, x: Vec<Vec<f64>>) -> Tape {
        let (h, lay) = (self.hidden, self.layout());
        let n = x.len();
        let h0: Vec<Vec<f64>> = x
            .iter()
            .map(|xv| {
                let mut v = p[lay.enc_b..lay.enc_b + h].to_vec();
                matvec_add(&p[lay.enc_w..lay.enc_b], xv, &mut v);
                relu(&mut v);
                v
            })
            .collect();
        let mut hs = vec![h0];
        let mut ms = Vec::with_capacity(self.rounds);
        for &(ws, wm, b) in &lay.rounds {
            let prev = hs.last().expect("previous round");
            let mut next = vec![Vec::new(); n];
            let mut msgs = vec![Vec::new(); n];
            for &v in &g.order {
                let mut incoming: Vec<&Vec<f64>> = g.preds[v].iter().map(|&u| &next[u]).collect();
                let m = mean_sorted(&mut incoming, h);
                let mut s = p[b..b + h].to_vec();
                matvec_add(&p[ws..ws + h * h], &prev[v], &mut s);
                matvec_add(&p[wm..wm + h * h], &m, &mut s);
                relu(&mut s);
                next[v] = s;
                msgs[v] = m;
            }
            hs.push(next);
            ms.push(msgs);
        }
        let mut r = p[lay.read_b..lay.read_b + h].to_vec();
        matvec_add(&p[lay.read_w..lay.read_b], &hs[self.rounds][g.sink], &mut r);
        relu(&mut r);
        let y = p[lay.out_b] + p[lay.out_w..lay.out_w + h].iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        Tape { x, h: hs, m: ms, r, y }
    }

    pub fn predict_with(&self, p: &[f64], g: &PlanGraph, x: Vec<Vec<f64>>) -> f64 {
        self.forward(p, g, x).y
    }

    /// Adds d(loss)/d(params) for one graph given d(loss)/dy.
    fn backward(&self, p: &[f64], g: &PlanGraph, tape: &Tape, dy: f64, grad: &mut [f64]) {
        let (h, lay) = (self.hidden, self.layout());
        grad[lay.out_b] += dy;
        let mut dr = vec![0.0; h];
        for k in 0..h {
            grad[lay.out_w + k] += dy * tape.r[k];
            dr[k] = if tape.r[k] > 0.0 { dy * p[lay.out_w + k] } else { 0.0 };
        }
        let n = tape.x.len();
        let mut dh = vec![vec![0.0; h]; n];
        outer_add(&mut grad[lay.read_w..lay.read_b], &dr, &tape.h[self.rounds][g.sink]);
        for (gb, d) in grad[lay.read_b..lay.read_b + h].iter_mut().zip(&dr) {
            *gb += d;
        }
        matvec_t_add(&p[lay.read_w..lay.read_b], &dr, &mut dh[g.sink]);

        for t in (0..self.rounds).rev() {
            let (ws, wm, b) = lay.rounds[t];
            let mut dprev = vec![vec![0.0; h]; n];
            for &v in g.order.iter().rev() {
                let out = &tape.h[t + 1][v];
                let dpre: Vec<f64> = dh[v].iter().zip(out).map(|(d, o)| if *o > 0.0 { *d } else { 0.0 }).collect();
                outer_add(&mut grad[ws..ws + h * h], &dpre, &tape.h[t][v]);
                outer_add(&mut grad[wm..wm + h * h], &dpre, &tape.m[t][v]);
                for (gb, d) in grad[b..b + h].iter_mut().zip(&dpre) {
                    *gb += d;
                }
                matvec_t_add(&p[ws..ws + h * h], &dpre, &mut dprev[v]);
                let preds = &g.preds[v];
                if !preds.is_empty() {
                    let mut dm = vec![0.0; h];
                    matvec_t_add(&p[wm..wm + h * h], &dpre, &mut dm);
                    let share = 1.0 / preds.len() as f64;
                    for &u in preds {
                        for (a, d) in dh[u].iter_mut().zip(&dm) {
                            *a += d * share;
                        }
                    }
                }
            }
            dh = dprev;
        }

        for v in 0..n {
            let dpre: Vec<f64> = dh[v].iter().zip(&tape.h[0][v]).map(|(d, o)| if *o > 0.0 { *d } else { 0.0 }).collect();
            outer_add(&mut grad[lay.enc_w..lay.enc_b], &dpre, &tape.x[v]);
            for (gb, d) in grad[lay.enc_b..lay.enc_b + h].iter_mut().zip(&dpre) {
                *gb += d;
            }
        }
    }

    /// Mean squared error over `batch` and its gradient (overwrites `grad`).
    pub fn loss_grad(
        &self,
        p: &[f64],
        graphs: &[(PlanGraph, Vec<Vec<f64>>)],
        ys: &[f64],
        batch: &[usize],
        grad: &mut [f64],
    ) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &i in batch {
            let (g, x) = &graphs[i];
            let tape = self.forward(p, g, x.clone());
            let err = tape.y - ys[i];
            loss += err * err * scale;
            self.backward(p, g, &tape, 2.0 * err * scale, grad);
        }
        loss
    }

    pub fn loss(&self, p: &[f64], graphs: &[(PlanGraph, Vec<Vec<f64>>)], ys: &[f64]) -> f64 {
        let n = graphs.len().max(1) as f64;
        graphs.iter().zip(ys).map(|((g, x), y)| (self.predict_with(p, g, x.clone()) - y).powi(2)).sum::<f64>() / n
    }
}
