//! One input through a three-wavelength network: per-channel scores, merged
//! scores, the prediction, and the output maps written as 16-bit graymaps.
//!
//!     cargo run --release --example multi_frequency [OUT_DIR]

use std::path::PathBuf;

use diffractnet::data::{to_input_field, IMAGE_SIDE};
use diffractnet::network::{argmax, detector_readout};
use diffractnet::{cli, MfdNet, MfdNetConfig};

fn main() -> diffractnet::Result<()> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("diffractnet-maps"));
    let net = MfdNet::new(MfdNetConfig::default(), 1)?;

    // A hollow square, roughly the size of a handwritten digit.
    let mut image = vec![0u8; IMAGE_SIDE * IMAGE_SIDE];
    for i in 6..22 {
        for (x, y) in [(i, 6), (i, 21), (6, i), (21, i)] {
            image[y * IMAGE_SIDE + x] = 255;
        }
    }
    let trace = net.forward(&to_input_field(&image, net.geometry())?)?;
    for (f, channel) in trace.channels.iter().enumerate() {
        let scores = detector_readout(&channel.readout, net.detector())?;
        println!(
            "channel {f} (lambda {:.2}, w {:.3}): predicts {}",
            channel.wavelength,
            net.channel_weights()[f],
            argmax(&scores)
        );
    }
    let scores: Vec<String> = trace.logits.iter().map(|s| format!("{s:.4}")).collect();
    let class = argmax(&trace.logits);
    println!("merged scores [{}] -> class {class}", scores.join(", "));

    // Training should concentrate light on the chosen detector; an untrained
    // network usually does not.
    let (x, y) = trace.merged.argmax();
    let inside = net.detector().regions()[class].contains(x, y);
    println!("brightest merged pixel ({x}, {y}) inside detector {class}: {inside}");

    for path in cli::export_maps(&net, &image, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
