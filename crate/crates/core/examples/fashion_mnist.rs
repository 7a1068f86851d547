//! Single- versus three-wavelength training on Fashion-MNIST.
//!
//!     cargo run --release --example fashion_mnist -- DIR [TRAIN_N] [TEST_N] [EPOCHS]
//!
//! DIR holds the four standard IDX files (`train-images-idx3-ubyte`, ...,
//! optionally gzipped). `scripts/fashion_npm_to_idx.py` builds them from the
//! `fashion-mnist` npm package when the usual download mirrors are unreachable.

use std::path::{Path, PathBuf};

use diffractnet::cli::{load_test, load_train};
use diffractnet::config::RunConfig;
use diffractnet::training::{train_epoch, OptimizerState};
use diffractnet::MfdNet;

fn locate(dir: &Path, stem: &str) -> PathBuf {
    let plain = dir.join(stem);
    if plain.exists() {
        plain
    } else {
        dir.join(format!("{stem}.gz"))
    }
}

fn main() -> diffractnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next().map(PathBuf::from) else {
        eprintln!("usage: fashion_mnist DIR [TRAIN_N] [TEST_N] [EPOCHS]");
        std::process::exit(2);
    };
    let mut next = |default: usize| args.next().and_then(|s| s.parse().ok()).unwrap_or(default);
    let (train_n, test_n, epochs) = (next(2000), next(500), next(3));

    let mut config = RunConfig::default();
    config.data.train_images = locate(&dir, "train-images-idx3-ubyte");
    config.data.train_labels = locate(&dir, "train-labels-idx1-ubyte");
    config.data.test_images = locate(&dir, "t10k-images-idx3-ubyte");
    config.data.test_labels = locate(&dir, "t10k-labels-idx1-ubyte");
    config.train.train_subset = Some(train_n);
    config.train.test_subset = Some(test_n);
    config.train.learning_rate = 0.01;
    let train = load_train(&config)?;
    let test = load_test(&config)?;

    for channels in [1, 3] {
        config.net.channels = channels;
        let mut net = MfdNet::new(config.net_config()?, config.train.seed)?;
        let mut state = OptimizerState::new(&net);
        for epoch in 1..=epochs {
            let m = train_epoch(
                &mut net,
                &train,
                Some(&test),
                &config.train,
                &mut state,
                epoch,
            )?;
            println!(
                "F={channels} epoch {epoch}: loss {:.4}, test accuracy {:.4} ({:.0} s)",
                m.train_loss,
                m.test_accuracy.unwrap_or(f64::NAN),
                m.seconds
            );
        }
    }
    Ok(())
}
