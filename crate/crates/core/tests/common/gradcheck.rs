//! Central finite-difference checks of analytic gradients.

use pdsp_core::corpus::{Labels, RunRecord, HARNESS_VERSION};
use pdsp_core::exec::{ExecMode, PlacementPolicy};
use pdsp_core::learn::{featurize_graph, Gnn, Mlp, PlanGraph};
use pdsp_core::model::fixtures::{linear_plan, two_way_join_plan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Outcome {
    pub checked: usize,
    /// Coordinates whose gradient magnitude exceeds 1e-6.
    pub nonzero: usize,
    pub worst: f64,
}

/// Relative error of the analytic gradient against central differences on
/// `coords` random coordinates.
fn check(params: &[f64], coords: usize, seed: u64, loss: impl Fn(&[f64]) -> f64, grad: &[f64]) -> Outcome {
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    for _ in 0..coords {
        let i = rng.random_range(0..p.len());
        let orig = p[i];
        p[i] = orig + H;
        let up = loss(&p);
        p[i] = orig - H;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        if grad[i].abs() > 1e-6 {
            nonzero += 1;
        }
        let scale = grad[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((grad[i] - numeric).abs() / scale);
    }
    Outcome { checked: coords, nonzero, worst }
}

fn data(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ys = xs.iter().map(|x| x.iter().sum::<f64>().sin()).collect();
    (xs, ys)
}

pub fn mlp(coords: usize, seed: u64) -> Outcome {
    let (xs, ys) = data(6, 5, seed);
    let net = Mlp::new(5, &[8, 8], seed);
    let batch: Vec<usize> = (0..xs.len()).collect();
    let mut grad = vec![0.0; net.params.len()];
    net.loss_grad(&net.params, &xs, &ys, &batch, &mut grad);
    let scratch = vec![0.0; net.params.len()];
    check(&net.params, coords, seed, |p| net.loss_grad(p, &xs, &ys, &batch, &mut scratch.clone()), &grad)
}

fn graph(join: bool) -> PlanGraph {
    let plan = if join { two_way_join_plan(5) } else { linear_plan() };
    let record = RunRecord {
        id: 0,
        plan,
        cluster: "m510x2".into(),
        cluster_digest: String::new(),
        nodes: vec![(8, 1.0), (8, 1.0)],
        placement: PlacementPolicy::RoundRobin,
        slots_per_core: 1,
        strategy: "rule".into(),
        duration_s: 1.0,
        labels: Labels { median_latency_us: 1.0, throughput_tps: 1.0 },
        run_medians_us: vec![1.0],
        mode: ExecMode::Sim,
        seed: 0,
        harness_version: HARNESS_VERSION.into(),
    };
    featurize_graph(&record)
}

pub fn gnn(coords: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Gnn::new(pdsp_core::learn::NODE_FEATURES.len(), 6, 2, seed);
    let graphs: Vec<(PlanGraph, Vec<Vec<f64>>)> = [true, false, true]
        .into_iter()
        .map(|join| {
            let g = graph(join);
            // random inputs keep pre-activations away from ReLU kinks
            let x = g.features.iter().map(|f| f.iter().map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            (g, x)
        })
        .collect();
    let ys = vec![0.3, -0.7, 1.1];
    let batch: Vec<usize> = (0..graphs.len()).collect();
    let mut grad = vec![0.0; net.params.len()];
    net.loss_grad(&net.params, &graphs, &ys, &batch, &mut grad);
    let scratch = vec![0.0; net.params.len()];
    check(&net.params, coords, seed, |p| net.loss_grad(p, &graphs, &ys, &batch, &mut scratch.clone()), &grad)
}
