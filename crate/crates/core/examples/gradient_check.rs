//! Compares reverse-mode gradients of a conv, batch-norm, leaky ReLU, tanh
//! chain against central differences.
//!
//! `cargo run --release --example gradient_check`

use msg_unet::tensor::{Activation, BnMode, Graph, ReduceKind, RunningStats, Shape, Tensor};
use msg_unet::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: Real = 1e-5;

fn objective(inputs: &[Tensor], with_grad: bool) -> msg_unet::Result<(Real, Vec<Tensor>)> {
    let mut g = Graph::new();
    let v: Vec<_> = inputs.iter().map(|t| g.leaf(t.clone(), with_grad)).collect();
    let mut stats = RunningStats::new(4);
    let y = g.conv2d(v[0], v[1], None, 2, 1)?;
    let y = g.batch_norm2d(y, v[2], v[3], &mut stats, BnMode::Train, 1e-5, 0.1)?;
    let y = g.activation(y, Activation::LeakyRelu(0.2))?;
    let y = g.tanh(y)?;
    let loss = g.reduce(y, ReduceKind::SquaredDistanceTo(0.3))?;
    let value = g.value(loss).item();
    if !with_grad {
        return Ok((value, Vec::new()));
    }
    g.backward(loss)?;
    Ok((value, v.iter().map(|&x| g.grad(x).cloned().unwrap()).collect()))
}

fn main() -> msg_unet::Result<()> {
    let mut r = ChaCha8Rng::seed_from_u64(0);
    let mut random = |s: Shape| {
        let n = s.numel();
        Tensor::from_vec(s, (0..n).map(|_| r.random_range(-1.0..1.0)).collect())
    };
    let inputs = vec![
        random(Shape::new(2, 3, 8, 8))?,
        random(Shape::new(4, 3, 4, 4))?,
        random(Shape::new(1, 4, 1, 1))?,
        random(Shape::new(1, 4, 1, 1))?,
    ];
    let (value, grads) = objective(&inputs, true)?;
    println!("loss {value:.6}");
    for (name, i) in [("x", 0), ("weight", 1), ("gamma", 2), ("beta", 3)] {
        let (mut diff, mut norm) = (0.0, 0.0);
        for e in 0..inputs[i].numel() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[e] += STEP;
            let mut minus = inputs.clone();
            minus[i].data_mut()[e] -= STEP;
            let fd = (objective(&plus, false)?.0 - objective(&minus, false)?.0) / (2.0 * STEP);
            let a = grads[i].data()[e];
            diff += (a - fd) * (a - fd);
            norm += a * a;
        }
        println!("{name:>6}: relative error {:.2e}", (diff / norm.max(1e-24)).sqrt());
    }
    Ok(())
}
