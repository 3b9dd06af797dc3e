//! Bagged CART regression trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::mix64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

struct Builder<'a> {
    xs: &'a [Vec<f64>],
    ys: &'a [f64],
    max_depth: Option<usize>,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let mean = rows.iter().map(|&i| self.ys[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        self.nodes.len() - 1
    }

    /// Best (feature, threshold) by squared-error reduction; first wins ties.
    /// Impure nodes always split if any feature separates them.
    fn best_split(&self, rows: &[usize]) -> Option<(usize, f64)> {
        let d = self.xs[rows[0]].len();
        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&i| self.ys[i]).sum();
        let parent = total * total / n;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = rows.to_vec();
        for f in 0..d {
            sorted.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]).then(a.cmp(&b)));
            let mut left = 0.0;
            for k in 0..sorted.len() - 1 {
                left += self.ys[sorted[k]];
                let (lo, hi) = (self.xs[sorted[k]][f], self.xs[sorted[k + 1]][f]);
                if lo == hi {
                    continue;
                }
                let nl = (k + 1) as f64;
                let right = total - left;
                let gain = left * left / nl + right * right / (n - nl) - parent;
                if best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, f, lo + (hi - lo) / 2.0));
                }
            }
        }
        best.map(|b| (b.1, b.2))
    }

    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let first = self.ys[rows[0]];
        let pure = rows.iter().all(|&i| self.ys[i] == first);
        if rows.len() < 2 || pure || self.max_depth.is_some_and(|m| depth >= m) {
            return self.leaf(rows);
        }
        let Some((feature, threshold)) = self.best_split(rows) else {
            return self.leaf(rows);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.xs[i][feature] <= threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(0.0));
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }
}

impl Tree {
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], rows: &[usize], max_depth: Option<usize>) -> Tree {
        let mut b = Builder { xs, ys, max_depth, nodes: Vec::new() };
        b.grow(rows, 0);
        Tree { nodes: b.nodes }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

impl Forest {
    /// Each tree sees a bootstrap sample drawn with its own seed, so the
    /// result does not depend on the number of worker threads.
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], trees: usize, max_depth: Option<usize>, bootstrap: bool, seed: u64) -> Forest {
        let n = xs.len();
        let trees = (0..trees)
            .into_par_iter()
            .map(|t| {
                let rows: Vec<usize> = if bootstrap {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed, t as u64));
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                Tree::fit(xs, ys, &rows, max_depth)
            })
            .collect();
        Forest { trees }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_deep_tree_memorizes() {
        let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![(i * 7 % 50) as f64, (i % 3) as f64]).collect();
        let ys: Vec<f64> = (0..50).map(|i| ((i * 13) % 17) as f64 + 0.5).collect();
        let rows: Vec<usize> = (0..50).collect();
        let t = Tree::fit(&xs, &ys, &rows, None);
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(t.predict(x), *y);
        }
    }

    #[test]
    fn depth_limit_holds() {
        let xs: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let ys: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let f = Forest::fit(&xs, &ys, 4, Some(3), true, 1);
        assert!(f.trees.iter().all(|t| t.depth() <= 3));
    }

    #[test]
    fn forest_is_mean_of_trees() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 5) as f64]).collect();
        let ys: Vec<f64> = (0..40).map(|i| (i as f64).sqrt()).collect();
        let f = Forest::fit(&xs, &ys, 7, Some(4), true, 9);
        let x = [12.5, 2.0];
        let mean = f.trees.iter().map(|t| t.predict(&x)).sum::<f64>() / 7.0;
        assert_eq!(f.predict(&x), mean);
        assert_eq!(f, Forest::fit(&xs, &ys, 7, Some(4), true, 9));
    }
}
