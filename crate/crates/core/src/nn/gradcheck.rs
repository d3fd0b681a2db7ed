//! Central-finite-difference gradient verification, run in f64.
//!
//! `layer_kind_reports` builds a small instance of every layer kind plus the
//! loss functions and reports the worst relative error of analytic against
//! numeric gradients; the CLI `gradcheck` subcommand and the acceptance
//! suite both consume it.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::tensor::Tensor;

use super::loss::{bce, kl_gaussian, mse, reparameterize, LatentDistribution};
use super::{Graph, Layer};

pub const FD_EPS: f64 = 1e-5;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn loss_of(graph: &Graph<f64>, x: &Tensor<f64>, probe: &Tensor<f64>) -> f64 {
    let (y, _) = graph.forward(x).expect("gradcheck forward");
    y.data()
        .iter()
        .zip(probe.data().iter())
        .map(|(a, b)| a * b)
        .sum()
}

/// Max relative error between analytic and central-difference gradients for
/// a random linear functional of the graph output, over every parameter and
/// input coordinate.
pub fn graph_max_rel_err(graph: &mut Graph<f64>, input: &Tensor<f64>, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let out_shape = graph.infer_shape(input.shape()).expect("shape inference");
    let probe = Tensor::from_vec(
        &out_shape,
        (0..out_shape.iter().product())
            .map(|_| rng.uniform_in(-1.0, 1.0))
            .collect(),
    );
    let (_, cache) = graph.forward(input).expect("forward");
    let (gx, gp) = graph.backward(&cache, &probe).expect("backward");

    let mut worst: f64 = 0.0;
    // parameters
    let n_params = graph.params().len();
    for pi in 0..n_params {
        let n_coords = graph.params()[pi].len();
        for c in 0..n_coords {
            let orig = graph.params()[pi].data()[c];
            graph.params_mut()[pi].data_mut()[c] = orig + FD_EPS;
            let lp = loss_of(graph, input, &probe);
            graph.params_mut()[pi].data_mut()[c] = orig - FD_EPS;
            let lm = loss_of(graph, input, &probe);
            graph.params_mut()[pi].data_mut()[c] = orig;
            let numeric = (lp - lm) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(gp[pi].data()[c], numeric));
        }
    }
    // input
    let mut x = input.clone();
    for c in 0..x.len() {
        let orig = x.data()[c];
        x.data_mut()[c] = orig + FD_EPS;
        let lp = loss_of(graph, &x, &probe);
        x.data_mut()[c] = orig - FD_EPS;
        let lm = loss_of(graph, &x, &probe);
        x.data_mut()[c] = orig;
        let numeric = (lp - lm) / (2.0 * FD_EPS);
        worst = worst.max(rel_err(gx.data()[c], numeric));
    }
    worst
}

fn random_tensor(shape: &[usize], rng: &mut Rng, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_vec(
        shape,
        (0..shape.iter().product())
            .map(|_| rng.uniform_in(lo, hi))
            .collect(),
    )
}

fn check_loss_grad(
    mut f: impl FnMut(&Tensor<f64>) -> f64,
    at: &Tensor<f64>,
    analytic: &Tensor<f64>,
) -> f64 {
    let mut x = at.clone();
    let mut worst: f64 = 0.0;
    for c in 0..x.len() {
        let orig = x.data()[c];
        x.data_mut()[c] = orig + FD_EPS;
        let lp = f(&x);
        x.data_mut()[c] = orig - FD_EPS;
        let lm = f(&x);
        x.data_mut()[c] = orig;
        let numeric = (lp - lm) / (2.0 * FD_EPS);
        worst = worst.max(rel_err(analytic.data()[c], numeric));
    }
    worst
}

/// One (name, max relative error) row per layer kind and loss.
pub fn layer_kind_reports() -> Vec<(String, f64)> {
    let mut rng = Rng::new(0xC0FFEE);
    let mut out = Vec::new();

    let mut dense = Graph::new(vec![Layer::Dense(super::Dense::new(5, 4, &mut rng))]);
    out.push((
        "dense".to_string(),
        graph_max_rel_err(&mut dense, &random_tensor(&[5], &mut rng, -1.0, 1.0), 1),
    ));

    let mut conv = Graph::new(vec![Layer::Conv2d(super::Conv2d::new(2, 3, 3, 2, 1, &mut rng))]);
    out.push((
        "conv2d".to_string(),
        graph_max_rel_err(&mut conv, &random_tensor(&[2, 7, 6], &mut rng, -1.0, 1.0), 2),
    ));

    let mut tconv =
        Graph::new(vec![Layer::TConv2d(super::TConv2d::new(2, 3, 3, 2, 1, &mut rng))]);
    out.push((
        "transposed-conv2d".to_string(),
        graph_max_rel_err(&mut tconv, &random_tensor(&[2, 4, 3], &mut rng, -1.0, 1.0), 3),
    ));

    let mut lstm = Graph::new(vec![Layer::Lstm(super::Lstm::new(4, 3, 2, &mut rng))]);
    out.push((
        "lstm".to_string(),
        graph_max_rel_err(&mut lstm, &random_tensor(&[5, 4], &mut rng, -1.0, 1.0), 4),
    ));

    let mut relu = Graph::new(vec![
        Layer::Dense(super::Dense::new(4, 4, &mut rng)),
        Layer::Relu,
    ]);
    out.push((
        "relu".to_string(),
        // offset inputs keep pre-activations away from the kink
        graph_max_rel_err(&mut relu, &random_tensor(&[4], &mut rng, 0.5, 1.5), 5),
    ));

    let mut sigmoid = Graph::new(vec![
        Layer::Dense(super::Dense::new(4, 4, &mut rng)),
        Layer::Sigmoid,
    ]);
    out.push((
        "sigmoid".to_string(),
        graph_max_rel_err(&mut sigmoid, &random_tensor(&[4], &mut rng, -1.0, 1.0), 6),
    ));

    let mut flat = Graph::new(vec![
        Layer::Conv2d(super::Conv2d::new(1, 2, 3, 2, 1, &mut rng)),
        Layer::Flatten,
        Layer::Dense(super::Dense::new(2 * 3 * 3, 3, &mut rng)),
    ]);
    out.push((
        "flatten".to_string(),
        graph_max_rel_err(&mut flat, &random_tensor(&[1, 5, 5], &mut rng, -1.0, 1.0), 7),
    ));

    // losses
    let pred = random_tensor(&[6], &mut rng, 0.1, 0.9);
    let target = random_tensor(&[6], &mut rng, 0.0, 1.0);
    let (_, g) = mse(&pred, &target).unwrap();
    out.push((
        "mse".to_string(),
        check_loss_grad(|p| mse(p, &target).unwrap().0, &pred, &g),
    ));
    let (_, g) = bce(&pred, &target).unwrap();
    out.push((
        "bce".to_string(),
        check_loss_grad(|p| bce(p, &target).unwrap().0, &pred, &g),
    ));

    let mu = random_tensor(&[5], &mut rng, -1.0, 1.0);
    let sigma = random_tensor(&[5], &mut rng, 0.3, 2.0);
    let dist = LatentDistribution::new(mu.clone(), sigma.clone()).unwrap();
    let (_, gmu, gsig) = kl_gaussian(&dist).unwrap();
    let kl_mu = check_loss_grad(
        |m| {
            kl_gaussian(&LatentDistribution::new(m.clone(), sigma.clone()).unwrap())
                .unwrap()
                .0
        },
        &mu,
        &gmu,
    );
    let kl_sig = check_loss_grad(
        |s| {
            kl_gaussian(&LatentDistribution::new(mu.clone(), s.clone()).unwrap())
                .unwrap()
                .0
        },
        &sigma,
        &gsig,
    );
    out.push(("kl_gaussian".to_string(), kl_mu.max(kl_sig)));

    // reparameterize: z = mu + sigma*noise, loss = sum(r * z)
    let noise = random_tensor(&[5], &mut rng, -1.0, 1.0);
    let probe = random_tensor(&[5], &mut rng, -1.0, 1.0);
    let score = |mu_t: &Tensor<f64>, sig_t: &Tensor<f64>| {
        let d = LatentDistribution::new(mu_t.clone(), sig_t.clone()).unwrap();
        let z = reparameterize(&d, &noise).unwrap();
        z.data()
            .iter()
            .zip(probe.data().iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    // analytic: dz/dmu = probe, dz/dsigma = probe * noise
    let gmu = probe.clone();
    let mut gsig = probe.clone();
    for (g, &n) in gsig.data_mut().iter_mut().zip(noise.data().iter()) {
        *g *= n;
    }
    let rep_mu = check_loss_grad(|m| score(m, &sigma), &mu, &gmu);
    let rep_sig = check_loss_grad(|s| score(&mu, s), &sigma, &gsig);
    out.push(("reparameterize".to_string(), rep_mu.max(rep_sig)));

    out
}
