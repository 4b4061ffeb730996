//! Reverse-mode gradients through a small network, one Adam step, and a
//! central finite-difference check of the same loss.
//!
//! cargo run --example autograd

use radar_gesture::tensor::{
    cross_entropy_loss, finite_diff_check, Adam, AdamConfig, Graph, ParamStore, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
    )
    .unwrap()
}

fn main() -> radar_gesture::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    store.insert("w1", random(&[8, 4], &mut rng))?;
    store.insert("b1", random(&[8], &mut rng))?;
    store.insert("w2", random(&[3, 8], &mut rng))?;
    store.insert("b2", random(&[3], &mut rng))?;
    let x = random(&[6, 4], &mut rng);
    let labels = [0, 1, 2, 0, 1, 2];

    let loss_of = |s: &ParamStore, g: &mut Graph| {
        let input = g.constant(x.clone());
        let (w1, b1, w2, b2) = (
            g.param(s, "w1")?,
            g.param(s, "b1")?,
            g.param(s, "w2")?,
            g.param(s, "b2")?,
        );
        let h = g.linear(input, w1, b1)?;
        let h = g.tanh(h);
        let z = g.linear(h, w2, b2)?;
        cross_entropy_loss(g, z, &labels)
    };

    let check = finite_diff_check(&store, 1e-6, 200, 0, loss_of)?;
    println!(
        "finite differences on {} coordinates: max rel error {:.2e}",
        check.coords_checked, check.max_rel_error
    );

    let mut adam = Adam::new(AdamConfig {
        lr: 0.05,
        ..AdamConfig::default()
    });
    for step in 0..=50 {
        let mut g = Graph::new();
        let loss = loss_of(&store, &mut g)?;
        if step % 10 == 0 {
            println!("step {step:>2} loss {:.4}", g.value(loss).data()[0]);
        }
        store.zero_grad();
        g.backward(loss, &mut store)?;
        adam.step(&mut store)?;
    }
    Ok(())
}
