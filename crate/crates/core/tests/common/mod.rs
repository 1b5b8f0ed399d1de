//! Shared test helpers: seeded random tensors and a central finite-difference
//! gradient oracle that only ever calls the forward pass.
#![allow(dead_code)]

use msg_unet::tensor::{Graph, ReduceKind, Shape, Tensor, Var};
use msg_unet::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod gradcheck;

pub const FD_STEP: Real = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
    let data = (0..shape.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Relative error between analytic and finite-difference gradients, one
/// entry per input tensor: `‖a − f‖ / max(‖a‖, ‖f‖)` over the probed
/// coordinates (all of them when `max_coords` is `None`).
pub fn gradient_errors(
    inputs: &[Tensor],
    build: impl Fn(&mut Graph, &[Var]) -> Var,
    max_coords: Option<usize>,
    seed: u64,
) -> Vec<Real> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.parameter(t.clone())).collect();
    let loss = build(&mut g, &vars);
    g.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |inputs: &[Tensor]| -> Real {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.parameter(t.clone())).collect();
        let loss = build(&mut g, &vars);
        g.value(loss).item()
    };

    let mut pick = rng(seed);
    let mut errors = Vec::new();
    for (i, input) in inputs.iter().enumerate() {
        let coords: Vec<usize> = match max_coords {
            Some(k) if k < input.numel() => (0..k).map(|_| pick.random_range(0..input.numel())).collect(),
            _ => (0..input.numel()).collect(),
        };
        let (mut diff, mut na, mut nf) = (0.0, 0.0, 0.0);
        for &c in &coords {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[c] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[c] -= FD_STEP;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            let a = analytic[i].data()[c];
            diff += (a - fd) * (a - fd);
            na += a * a;
            nf += fd * fd;
        }
        let denom = na.sqrt().max(nf.sqrt()).max(1e-12);
        errors.push(diff.sqrt() / denom);
    }
    errors
}

/// Scalar probe with a non-uniform upstream gradient: mean((x − 0.3)²)
/// gives each output element its own weight 2(x − 0.3)/n.
pub fn probe(g: &mut Graph, x: Var) -> Var {
    g.reduce(x, ReduceKind::SquaredDistanceTo(0.3)).unwrap()
}
