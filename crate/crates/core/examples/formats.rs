//! File formats: IDX datasets, MFDN checkpoints and the run-config text they
//! embed, and 16-bit graymaps.
//!
//!     cargo run --release --example formats

use diffractnet::config::RunConfig;
use diffractnet::data::{parse_idx, IdxTensor};
use diffractnet::pgm::{encode_pgm16, parse_pgm};
use diffractnet::{checkpoint, GridGeometry, MfdNet, RealMap};

fn main() -> diffractnet::Result<()> {
    let labels = IdxTensor::new(vec![5], vec![3, 1, 4, 1, 5])?;
    let bytes = labels.encode()?;
    println!("IDX labels: {bytes:02x?}");
    println!("parsed back equal: {}", parse_idx(&bytes)? == labels);

    let mut config = RunConfig::default();
    config.apply_text("net.nx = 16\nnet.ny = 16\nnet.layers = 2\nnet.classes = 4\n")?;
    config.apply_override("net.bias=true")?;
    let net = MfdNet::new(config.net_config()?, 5)?;
    let ckpt = checkpoint::encode(&config, &net)?;
    println!(
        "checkpoint: {} bytes, magic {:?}",
        ckpt.len(),
        std::str::from_utf8(&ckpt[..4]).unwrap()
    );
    println!("embedded config:\n{}", config.to_text());

    let mut corrupt = ckpt.clone();
    corrupt[ckpt.len() / 2] ^= 0x01;
    println!(
        "one flipped bit: {}",
        checkpoint::decode(&corrupt).unwrap_err()
    );

    let g = GridGeometry::new(4, 2, 1.0)?;
    let map = RealMap::from_values(g, vec![0.0, 0.5, 1.0, 2.0, 0.25, 0.0, 4.0, 3.0])?;
    let pgm = parse_pgm(&encode_pgm16(&map))?;
    println!(
        "graymap {}x{} max {}: {:?}",
        pgm.width, pgm.height, pgm.maxval, pgm.samples
    );
    Ok(())
}
