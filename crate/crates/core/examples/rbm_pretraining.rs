//! Greedy RBM pretraining of a small encoder stack on correlated data.

use vsr::rbm::{pretrain_stack, PretrainConfig};
use vsr::{Rng, Tensor};

fn main() -> vsr::Result<()> {
    let mut rng = Rng::new(1);
    let (n, d) = (400, 32);
    // Two latent factors spread across all dimensions, plus noise.
    let mut x = Vec::with_capacity(n * d);
    for _ in 0..n {
        let (a, b) = (rng.normal(0.0, 1.0), rng.normal(0.0, 1.0));
        for j in 0..d {
            let w = j as f64 / d as f64;
            x.push(a * w + b * (1.0 - w) + 0.3 * rng.normal(0.0, 1.0));
        }
    }
    let data = Tensor::<f32>::from_f64(&[n, d], &x)?;
    let cfg = PretrainConfig { epochs: 10, batch: 50, lr: 0.005, ..PretrainConfig::default() };
    let stack = pretrain_stack(&[d, 16, 8, 2], &data, &cfg)?;
    for (i, (rbm, errors)) in stack.rbms.iter().zip(&stack.errors).enumerate() {
        println!(
            "layer {i}: {}->{} {:?}, error {:.4} -> {:.4}",
            rbm.visible(),
            rbm.hidden(),
            rbm.hidden_kind,
            errors[0],
            errors[errors.len() - 1]
        );
    }
    println!("encoder layers: {}", stack.encoder_layers().len());
    Ok(())
}
