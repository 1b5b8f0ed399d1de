//! Builds the toy generator, runs one forward pass and prints the output shapes.

use std::time::Instant;

use msg_unet::nets::{ArchitectureConfig, DiscriminatorBank, MsgUNetGenerator};
use msg_unet::tensor::{BnMode, Graph, Shape, Tensor};

fn main() -> msg_unet::Result<()> {
    let config = ArchitectureConfig::toy();
    let mut generator = MsgUNetGenerator::build(&config, 7)?;
    let mut bank = DiscriminatorBank::build(&config, 8)?;
    println!(
        "generator: {} parameters, discriminator bank: {} parameters",
        generator.num_parameters(),
        bank.num_parameters()
    );
    let inputs: Vec<Tensor> = config
        .scales
        .iter()
        .map(|r| Tensor::full(Shape::new(1, 3, r.h, r.w), 0.25))
        .collect();
    let start = Instant::now();
    let mut g = Graph::new();
    let params = generator.bind(&mut g, true);
    let xs: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let outputs = generator.forward(&mut g, &params, &xs, BnMode::Train)?;
    let forward = start.elapsed();
    let d_params = bank.bind(&mut g, true);
    let mut terms = Vec::new();
    for (k, &z) in outputs.iter().enumerate() {
        let d = bank.forward(&mut g, &d_params, k, xs[k], z, BnMode::Train)?;
        terms.push(g.reduce(d.logits, msg_unet::tensor::ReduceKind::SquaredDistanceTo(1.0))?);
    }
    let loss = g.add_all(&terms)?;
    g.backward(loss)?;
    for (k, &z) in outputs.iter().enumerate() {
        println!("output {k}: {}", g.shape(z));
    }
    println!("forward {:?}, forward+disc+backward {:?}", forward, start.elapsed());
    Ok(())
}
