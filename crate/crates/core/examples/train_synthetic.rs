//! Trains a small network on generated images (a bright patch whose position
//! encodes the class), then saves, reloads and re-evaluates it.
//!
//!     cargo run --release --example train_synthetic

use diffractnet::config::RunConfig;
use diffractnet::data::{Dataset, IMAGE_SIDE};
use diffractnet::training::{evaluate, train_epoch, OptimizerState};
use diffractnet::{checkpoint, MfdNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn patches(n: usize, seed: u64) -> diffractnet::Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut images, mut labels) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let c = rng.gen_range(0..4);
        let (px, py) = (4 + 12 * (c % 2), 4 + 12 * (c / 2));
        for y in 0..IMAGE_SIDE {
            for x in 0..IMAGE_SIDE {
                let on = (px..px + 8).contains(&x) && (py..py + 8).contains(&y);
                images.push(if on { 220 } else { rng.gen_range(0..60) });
            }
        }
        labels.push(c);
    }
    Dataset::new(images, labels, 4)
}

fn main() -> diffractnet::Result<()> {
    let mut config = RunConfig::default();
    for s in [
        "net.nx=40",
        "net.ny=40",
        "net.layers=3",
        "net.classes=4",
        "train.lr=0.01",
    ] {
        config.apply_override(s)?;
    }
    let (train, test) = (patches(400, 1)?, patches(100, 2)?);
    let mut net = MfdNet::new(config.net_config()?, config.train.seed)?;
    let mut state = OptimizerState::new(&net);
    println!(
        "before training: test accuracy {:.3}",
        evaluate(&net, &test)?
    );
    for epoch in 1..=4 {
        let m = train_epoch(
            &mut net,
            &train,
            Some(&test),
            &config.train,
            &mut state,
            epoch,
        )?;
        println!(
            "epoch {epoch}: loss {:.4}, train {:.3}, test {:.3}, {:.1} s",
            m.train_loss,
            m.train_accuracy,
            m.test_accuracy.unwrap_or(f64::NAN),
            m.seconds
        );
    }
    println!("channel weights {:?}", net.channel_weights());

    let path = std::env::temp_dir().join("diffractnet-synthetic.mfdn");
    checkpoint::save(&path, &config, &net)?;
    let (_, reloaded) = checkpoint::load(&path)?;
    println!(
        "reloaded from {}: identical {}, test accuracy {:.3}",
        path.display(),
        reloaded == net,
        evaluate(&reloaded, &test)?
    );
    Ok(())
}
