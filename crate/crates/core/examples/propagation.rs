//! Free-space propagation: FFT kernels against the direct sum, adjoints, and
//! energy behaviour of the angular-spectrum method.
//!
//!     cargo run --release --example propagation

use diffractnet::propagation::{direct_sum_oracle, propagate, propagate_adjoint};
use diffractnet::{ComplexField, GridGeometry, Method, PropagationKernel};
use num_complex::Complex64;

fn main() -> diffractnet::Result<()> {
    let g = GridGeometry::square(16, 1.0)?;
    let (wavelength, z) = (1.0, 12.0);

    // A point source and a small square aperture.
    let point = ComplexField::zeros(g)?.with_pixel(8, 8, Complex64::new(1.0, 0.0));
    let mut aperture = ComplexField::zeros(g)?;
    for y in 6..10 {
        for x in 6..10 {
            aperture = aperture.with_pixel(x, y, Complex64::new(1.0, 0.0));
        }
    }

    let rs = PropagationKernel::build(g, wavelength, z, Method::SampledRs)?;
    for (name, u) in [("point", &point), ("aperture", &aperture)] {
        let fast = propagate(u, &rs)?;
        let slow = direct_sum_oracle(u, wavelength, z)?;
        println!(
            "{name:>8}: |out| at centre {:.6}, max |fft - direct| {:.2e}",
            fast.get(8, 8).norm(),
            fast.max_abs_diff(&slow)?
        );
    }

    let v = propagate(&aperture, &rs)?;
    let lhs = propagate(&point, &rs)?.inner(&v)?;
    let rhs = point.inner(&propagate_adjoint(&v, &rs)?)?;
    println!("adjoint: <Ku,v> = {lhs:.6}, <u,K*v> = {rhs:.6}");

    println!("angular spectrum, energy out/in for the aperture:");
    for wavelength in [0.5, 1.0, 1.5, 2.5] {
        let k = PropagationKernel::build(g, wavelength, z, Method::AngularSpectrum)?;
        let ratio = propagate(&aperture, &k)?.total_energy() / aperture.total_energy();
        println!("  lambda {wavelength:>4}: {ratio:.6}");
    }
    Ok(())
}
