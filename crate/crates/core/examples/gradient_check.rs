//! Reverse-mode gradients against central finite differences for every
//! trainable parameter class.
//!
//!     cargo run --release --example gradient_check

use diffractnet::network::{pick_frequencies, ParamId};
use diffractnet::training::grad_check_report;
use diffractnet::{ComplexField, GridGeometry, MfdNet, MfdNetConfig};
use num_complex::Complex64;

fn main() -> diffractnet::Result<()> {
    let g = GridGeometry::square(20, 1.0)?;
    let config = MfdNetConfig {
        num_layers: 3,
        wavelengths: pick_frequencies(0.8, 1.2, 3)?,
        geometry: g,
        num_classes: 4,
        amplitude_trainable: true,
        bias_enabled: true,
        ..MfdNetConfig::default()
    };
    let net = MfdNet::new(config, 7)?;
    println!("{} trainable parameters", net.num_trainable());

    // A smooth off-centre blob as input.
    let values = (0..g.len())
        .map(|i| {
            let (x, y) = ((i % g.nx) as f64 - 8.0, (i / g.nx) as f64 - 11.0);
            Complex64::new((-(x * x + y * y) / 18.0).exp(), 0.0)
        })
        .collect();
    let input = ComplexField::from_values(g, values)?;

    let report = grad_check_report(&net, &input, 2, 16, 1e-6, 1, |_| {})?;
    for p in &report.probes {
        let kind = match p.param {
            ParamId::Phase { .. } => "phase",
            ParamId::Amplitude { .. } => "amplitude",
            ParamId::BiasRe { .. } | ParamId::BiasIm { .. } => "bias",
            ParamId::ChannelWeight(_) => "weight",
        };
        println!(
            "{kind:>9}  analytic {:+.6e}  numeric {:+.6e}  rel {:.1e}",
            p.analytic, p.numeric, p.rel_error
        );
    }
    println!("worst relative error {:.2e}", report.max_rel_error());

    let flipped = grad_check_report(&net, &input, 2, 16, 1e-6, 1, |g| g.scale(-1.0))?;
    println!("with negated gradients: {:.2e}", flipped.max_rel_error());
    Ok(())
}
