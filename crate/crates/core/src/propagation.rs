//! Free-space propagation between parallel planes.
//!
//! The impulse response between a source pixel and a point at displacement
//! `(dx, dy, dz)` is the Rayleigh–Sommerfeld kernel
//!
//! ```text
//! w = (dz / r²) · (1/(2πr) + 1/(jλ)) · exp(j2πr/λ),   r = √(dx² + dy² + dz²)
//! ```
//!
//! where the vector factor `(p − pᵢ)/r²` is reduced to its axial component
//! `dz/r²` (the inclination factor). That choice changes off-axis amplitudes
//! relative to a literal reading of the vector form.
//!
//! Two discretizations are offered:
//!
//! - [`Method::SampledRs`] samples `w` on a `2nx × 2ny` displacement grid and
//!   applies it as a linear (non-wrapping) convolution. It reproduces the direct
//!   pixel sum exactly, see [`direct_sum_oracle`].
//! - [`Method::AngularSpectrum`] multiplies the unpadded spectrum by the
//!   phase-only transfer function and zeroes evanescent components.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;

use crate::field::{ComplexField, Fft2Plan, GridGeometry};
use crate::{Error, Result};

/// Discretization of the propagation operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Method {
    #[default]
    SampledRs,
    AngularSpectrum,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::SampledRs => "sampled-rs",
            Method::AngularSpectrum => "angular-spectrum",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled-rs" => Ok(Method::SampledRs),
            "angular-spectrum" => Ok(Method::AngularSpectrum),
            other => Err(Error::Config(format!(
                "unknown propagation method {other:?} (expected sampled-rs or angular-spectrum)"
            ))),
        }
    }
}

/// Rayleigh–Sommerfeld impulse response for one displacement.
pub fn rs_impulse(dx: f64, dy: f64, dz: f64, wavelength: f64) -> Result<Complex64> {
    if !(dz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "axial distance must be positive, got {dz}"
        )));
    }
    if !(wavelength > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    Ok(rs_impulse_unchecked(dx, dy, dz, wavelength))
}

#[inline]
fn rs_impulse_unchecked(dx: f64, dy: f64, dz: f64, wavelength: f64) -> Complex64 {
    let r2 = dx * dx + dy * dy + dz * dz;
    let r = r2.sqrt();
    // 1/(jλ) = −j/λ
    let radial = Complex64::new(1.0 / (2.0 * PI * r), -1.0 / wavelength);
    radial * Complex64::from_polar(dz / r2, 2.0 * PI * r / wavelength)
}

/// Precomputed frequency-domain transfer data for one
/// (geometry, wavelength, distance, method) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationKernel {
    geometry: GridGeometry,
    wavelength: f64,
    distance: f64,
    method: Method,
    transfer: Vec<Complex64>,
}

impl PropagationKernel {
    pub fn build(
        geometry: GridGeometry,
        wavelength: f64,
        distance: f64,
        method: Method,
    ) -> Result<Self> {
        geometry.validate()?;
        if !(distance > 0.0 && distance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "propagation distance must be positive, got {distance}"
            )));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        let transfer = match method {
            Method::SampledRs => sampled_rs_transfer(geometry, wavelength, distance),
            Method::AngularSpectrum => angular_spectrum_transfer(geometry, wavelength, distance),
        };
        Ok(Self {
            geometry,
            wavelength,
            distance,
            method,
            transfer,
        })
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Transfer samples; `2nx × 2ny` for sampled-rs, `nx × ny` otherwise.
    pub fn transfer(&self) -> &[Complex64] {
        &self.transfer
    }

    /// The kernel whose forward application is this kernel's adjoint.
    pub fn adjoint(&self) -> PropagationKernel {
        PropagationKernel {
            transfer: self.transfer.iter().map(|t| t.conj()).collect(),
            ..self.clone()
        }
    }
}

fn sampled_rs_transfer(geometry: GridGeometry, wavelength: f64, distance: f64) -> Vec<Complex64> {
    let (nx, ny) = (geometry.nx, geometry.ny);
    let (px, py) = (2 * nx, 2 * ny);
    let area = geometry.pitch * geometry.pitch;
    // Displacement d sits at index d mod P; index n (d = ±n) never occurs.
    let offset = |i: usize, n: usize| -> Option<f64> {
        match i.cmp(&n) {
            std::cmp::Ordering::Less => Some(i as f64),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(i as f64 - 2.0 * n as f64),
        }
    };
    let mut impulse = vec![Complex64::default(); px * py];
    for iy in 0..py {
        let Some(dy) = offset(iy, ny) else { continue };
        for ix in 0..px {
            let Some(dx) = offset(ix, nx) else { continue };
            impulse[iy * px + ix] = area
                * rs_impulse_unchecked(
                    dx * geometry.pitch,
                    dy * geometry.pitch,
                    distance,
                    wavelength,
                );
        }
    }
    Fft2Plan::cached(px, py).forward(&mut impulse);
    impulse
}

/// FFT bin index to signed frequency index.
fn signed_bin(k: usize, n: usize) -> f64 {
    if k <= (n - 1) / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

fn angular_spectrum_transfer(
    geometry: GridGeometry,
    wavelength: f64,
    distance: f64,
) -> Vec<Complex64> {
    let (nx, ny) = (geometry.nx, geometry.ny);
    let inv_lambda2 = 1.0 / (wavelength * wavelength);
    let mut transfer = Vec::with_capacity(nx * ny);
    for ky in 0..ny {
        let fy = signed_bin(ky, ny) / (ny as f64 * geometry.pitch);
        for kx in 0..nx {
            let fx = signed_bin(kx, nx) / (nx as f64 * geometry.pitch);
            let kz2 = inv_lambda2 - fx * fx - fy * fy;
            transfer.push(if kz2 >= 0.0 {
                Complex64::from_polar(1.0, 2.0 * PI * distance * kz2.sqrt())
            } else {
                Complex64::default()
            });
        }
    }
    transfer
}

/// Carries `field` across one gap.
pub fn propagate(field: &ComplexField, kernel: &PropagationKernel) -> Result<ComplexField> {
    apply(field, kernel, false)
}

/// Conjugate transpose of [`propagate`] for the same kernel.
pub fn propagate_adjoint(grad: &ComplexField, kernel: &PropagationKernel) -> Result<ComplexField> {
    apply(grad, kernel, true)
}

fn apply(
    field: &ComplexField,
    kernel: &PropagationKernel,
    conjugate: bool,
) -> Result<ComplexField> {
    let geometry = field.geometry();
    geometry.ensure_same(&kernel.geometry)?;
    let values = match kernel.method {
        Method::SampledRs => convolve_padded(field.values(), geometry, &kernel.transfer, conjugate),
        Method::AngularSpectrum => {
            let mut buf = field.values().to_vec();
            let plan = Fft2Plan::cached(geometry.nx, geometry.ny);
            plan.forward(&mut buf);
            multiply(&mut buf, &kernel.transfer, conjugate);
            plan.inverse(&mut buf);
            let norm = 1.0 / geometry.len() as f64;
            buf.iter_mut().for_each(|v| *v *= norm);
            buf
        }
    };
    Ok(ComplexField::from_raw(geometry, values))
}

fn multiply(buf: &mut [Complex64], transfer: &[Complex64], conjugate: bool) {
    if conjugate {
        buf.iter_mut()
            .zip(transfer)
            .for_each(|(b, t)| *b *= t.conj());
    } else {
        buf.iter_mut().zip(transfer).for_each(|(b, t)| *b *= t);
    }
}

/// Linear convolution through a `2nx × 2ny` circular one. Input rows beyond
/// `ny` are zero, so their row transforms are skipped on the way in; only the
/// first `ny` rows are needed on the way out.
fn convolve_padded(
    values: &[Complex64],
    geometry: GridGeometry,
    transfer: &[Complex64],
    conjugate: bool,
) -> Vec<Complex64> {
    let (nx, ny) = (geometry.nx, geometry.ny);
    let (px, py) = (2 * nx, 2 * ny);
    let plan = Fft2Plan::cached(px, py);
    let mut buf = vec![Complex64::default(); px * py];
    for (dst, src) in buf.chunks_exact_mut(px).zip(values.chunks_exact(nx)) {
        dst[..nx].copy_from_slice(src);
    }
    plan.rows(&mut buf[..ny * px], false);
    plan.columns(&mut buf, false);
    multiply(&mut buf, transfer, conjugate);
    plan.columns(&mut buf, true);
    plan.rows(&mut buf[..ny * px], true);
    let norm = 1.0 / (px * py) as f64;
    let mut out = Vec::with_capacity(nx * ny);
    for row in buf.chunks_exact(px).take(ny) {
        out.extend(row[..nx].iter().map(|v| v * norm));
    }
    out
}

/// Largest grid [`direct_sum_oracle`] accepts.
pub const ORACLE_MAX_PIXELS: usize = 4096;

/// Literal pixel-by-pixel summation of the sampled impulse response.
/// Quartic in the grid size; intended for verification only.
pub fn direct_sum_oracle(
    field: &ComplexField,
    wavelength: f64,
    distance: f64,
) -> Result<ComplexField> {
    let geometry = field.geometry();
    if geometry.len() > ORACLE_MAX_PIXELS {
        return Err(Error::InvalidArgument(format!(
            "direct sum limited to {ORACLE_MAX_PIXELS} pixels, got {}",
            geometry.len()
        )));
    }
    rs_impulse(0.0, 0.0, distance, wavelength)?;
    let area = geometry.pitch * geometry.pitch;
    let mut out = vec![Complex64::default(); geometry.len()];
    for oy in 0..geometry.ny {
        for ox in 0..geometry.nx {
            let mut acc = Complex64::default();
            for iy in 0..geometry.ny {
                for ix in 0..geometry.nx {
                    let source = field.get(ix, iy);
                    if source == Complex64::default() {
                        continue;
                    }
                    let dx = (ox as f64 - ix as f64) * geometry.pitch;
                    let dy = (oy as f64 - iy as f64) * geometry.pitch;
                    acc += area * rs_impulse_unchecked(dx, dy, distance, wavelength) * source;
                }
            }
            out[geometry.index(ox, oy)] = acc;
        }
    }
    Ok(ComplexField::from_raw(geometry, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct KernelKey {
    nx: usize,
    ny: usize,
    pitch: u64,
    wavelength: u64,
    distance: u64,
    method: Method,
}

/// Kernels keyed by (geometry, wavelength, distance, method), built once and shared.
#[derive(Debug, Default, Clone)]
pub struct KernelCache {
    kernels: HashMap<KernelKey, Arc<PropagationKernel>>,
}

impl KernelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_build(
        &mut self,
        geometry: GridGeometry,
        wavelength: f64,
        distance: f64,
        method: Method,
    ) -> Result<Arc<PropagationKernel>> {
        let key = KernelKey {
            nx: geometry.nx,
            ny: geometry.ny,
            pitch: geometry.pitch.to_bits(),
            wavelength: wavelength.to_bits(),
            distance: distance.to_bits(),
            method,
        };
        if let Some(kernel) = self.kernels.get(&key) {
            return Ok(kernel.clone());
        }
        let kernel = Arc::new(PropagationKernel::build(
            geometry, wavelength, distance, method,
        )?);
        self.kernels.insert(key, kernel.clone());
        Ok(kernel)
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(geometry: GridGeometry, rng: &mut ChaCha8Rng) -> ComplexField {
        let values = (0..geometry.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexField::from_values(geometry, values).unwrap()
    }

    fn close(a: Complex64, re: f64, im: f64, tol: f64) -> bool {
        (a - Complex64::new(re, im)).norm() < tol
    }

    #[test]
    fn impulse_reference_values() {
        // Frozen from 30-digit evaluations of the kernel formula.
        let v = rs_impulse(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(close(v, 0.15915494309189533577, -1.0, 1e-12), "{v}");
        let v = rs_impulse(0.0, 0.0, 1.0, 2.0).unwrap();
        assert!(close(v, -0.15915494309189533577, 0.5, 1e-12), "{v}");
        let v = rs_impulse(3.0, -2.0, 5.0, 0.75).unwrap();
        assert!(
            close(v, 0.17282057151722826567, -0.030385717505601972619, 1e-12),
            "{v}"
        );
        let v = rs_impulse(0.5, 1.5, 20.0, 1.1).unwrap();
        assert!(
            close(v, 0.045083666051752630362, -0.0028544377902494228666, 1e-12),
            "{v}"
        );
    }

    #[test]
    fn impulse_rejects_non_forward_distance() {
        assert!(rs_impulse(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(rs_impulse(1.0, 0.0, -1.0, 1.0).is_err());
        assert!(rs_impulse(0.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn build_rejects_bad_arguments_and_is_deterministic() {
        let g = GridGeometry::square(8, 0.5).unwrap();
        for method in [Method::SampledRs, Method::AngularSpectrum] {
            assert!(PropagationKernel::build(g, 1.0, 0.0, method).is_err());
            assert!(PropagationKernel::build(g, 0.0, 1.0, method).is_err());
            let a = PropagationKernel::build(g, 1.0, 3.0, method).unwrap();
            let b = PropagationKernel::build(g, 1.0, 3.0, method).unwrap();
            let bits = |k: &PropagationKernel| {
                k.transfer()
                    .iter()
                    .flat_map(|c| [c.re.to_bits(), c.im.to_bits()])
                    .collect::<Vec<_>>()
            };
            assert_eq!(bits(&a), bits(&b));
            assert!(a.transfer().iter().all(|t| t.is_finite()));
        }
        let sampled = PropagationKernel::build(g, 1.0, 3.0, Method::SampledRs).unwrap();
        assert_eq!(sampled.transfer().len(), 16 * 16);
        let angular = PropagationKernel::build(g, 1.0, 3.0, Method::AngularSpectrum).unwrap();
        assert_eq!(angular.transfer().len(), 8 * 8);
    }

    #[test]
    fn angular_spectrum_transfer_is_bounded() {
        let g = GridGeometry::new(12, 10, 0.3).unwrap();
        let k = PropagationKernel::build(g, 1.0, 4.0, Method::AngularSpectrum).unwrap();
        assert!(k.transfer().iter().all(|t| t.norm() <= 1.0 + 1e-15));
        // pitch 0.3 puts the band edge inside the grid, so some bins are evanescent.
        assert!(k.transfer().iter().any(|t| t.norm() == 0.0));
    }

    #[test]
    fn unit_impulse_reproduces_sampled_kernel() {
        let g = GridGeometry::square(8, 0.7).unwrap();
        let (z, lambda) = (2.5, 0.9);
        let kernel = PropagationKernel::build(g, lambda, z, Method::SampledRs).unwrap();
        let (i, j) = (2, 5);
        let input = ComplexField::zeros(g)
            .unwrap()
            .with_pixel(i, j, Complex64::new(1.0, 0.0));
        let out = propagate(&input, &kernel).unwrap();
        for l in 0..8 {
            for k in 0..8 {
                let expected = 0.49
                    * rs_impulse(
                        (k as f64 - i as f64) * 0.7,
                        (l as f64 - j as f64) * 0.7,
                        z,
                        lambda,
                    )
                    .unwrap();
                assert!((out.get(k, l) - expected).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn oracle_single_pixel_is_kernel_row() {
        let g = GridGeometry::square(5, 1.0).unwrap();
        let input = ComplexField::zeros(g)
            .unwrap()
            .with_pixel(0, 0, Complex64::new(2.0, -1.0));
        let out = direct_sum_oracle(&input, 1.0, 3.0).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                let expected =
                    Complex64::new(2.0, -1.0) * rs_impulse(x as f64, y as f64, 3.0, 1.0).unwrap();
                assert_eq!(out.get(x, y), expected);
            }
        }
        let zero = direct_sum_oracle(&ComplexField::zeros(g).unwrap(), 1.0, 3.0).unwrap();
        assert_eq!(zero.total_energy(), 0.0);
        let big = ComplexField::zeros(GridGeometry::square(65, 1.0).unwrap()).unwrap();
        assert!(direct_sum_oracle(&big, 1.0, 3.0).is_err());
    }

    #[test]
    fn sampled_rs_matches_oracle_on_rectangular_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = GridGeometry::new(9, 6, 0.8).unwrap();
        let u = random_field(g, &mut rng);
        let kernel = PropagationKernel::build(g, 1.1, 5.0, Method::SampledRs).unwrap();
        let fast = propagate(&u, &kernel).unwrap();
        let slow = direct_sum_oracle(&u, 1.1, 5.0).unwrap();
        assert!(fast.max_abs_diff(&slow).unwrap() < 1e-10);
    }

    #[test]
    fn adjoint_is_reflected_conjugate_convolution() {
        // Kᴴv(i) = Σ_k conj(h(k − i)) v_k, checked by direct summation.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = GridGeometry::new(6, 7, 1.0).unwrap();
        let v = random_field(g, &mut rng);
        let kernel = PropagationKernel::build(g, 1.3, 4.0, Method::SampledRs).unwrap();
        let fast = propagate_adjoint(&v, &kernel).unwrap();
        for iy in 0..7 {
            for ix in 0..6 {
                let mut acc = Complex64::default();
                for ky in 0..7 {
                    for kx in 0..6 {
                        let h = rs_impulse(kx as f64 - ix as f64, ky as f64 - iy as f64, 4.0, 1.3)
                            .unwrap();
                        acc += h.conj() * v.get(kx, ky);
                    }
                }
                assert!((acc - fast.get(ix, iy)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn linearity_zero_and_double_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = GridGeometry::square(16, 0.6).unwrap();
        for method in [Method::SampledRs, Method::AngularSpectrum] {
            let kernel = PropagationKernel::build(g, 0.9, 6.0, method).unwrap();
            let zero = ComplexField::zeros(g).unwrap();
            assert_eq!(propagate(&zero, &kernel).unwrap().total_energy(), 0.0);
            assert_eq!(
                propagate_adjoint(&zero, &kernel).unwrap().total_energy(),
                0.0
            );

            let u = random_field(g, &mut rng);
            let v = random_field(g, &mut rng);
            let two = Complex64::new(2.0, 0.0);
            let three = Complex64::new(3.0, 0.0);
            let combined = propagate(&u.scale(two).add(&v.scale(three)).unwrap(), &kernel).unwrap();
            let separate = propagate(&u, &kernel)
                .unwrap()
                .scale(two)
                .add(&propagate(&v, &kernel).unwrap().scale(three))
                .unwrap();
            assert!(combined.max_abs_diff(&separate).unwrap() < 1e-12);

            let forward = propagate(&u, &kernel).unwrap();
            let via_adjoint = propagate_adjoint(&u, &kernel.adjoint()).unwrap();
            assert!(forward.max_abs_diff(&via_adjoint).unwrap() < 1e-12);
        }
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let kernel = PropagationKernel::build(
            GridGeometry::square(8, 1.0).unwrap(),
            1.0,
            2.0,
            Method::SampledRs,
        )
        .unwrap();
        let other = ComplexField::zeros(GridGeometry::square(8, 0.5).unwrap()).unwrap();
        assert!(propagate(&other, &kernel).is_err());
        assert!(propagate_adjoint(&other, &kernel).is_err());
    }

    #[test]
    fn cache_shares_identical_kernels() {
        let g = GridGeometry::square(8, 1.0).unwrap();
        let mut cache = KernelCache::new();
        let a = cache.get_or_build(g, 1.0, 2.0, Method::SampledRs).unwrap();
        let b = cache.get_or_build(g, 1.0, 2.0, Method::SampledRs).unwrap();
        let c = cache.get_or_build(g, 1.2, 2.0, Method::SampledRs).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert!(!Arc::ptr_eq(&a, &c));
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn method_names_roundtrip() {
        for m in [Method::SampledRs, Method::AngularSpectrum] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("fresnel".parse::<Method>().is_err());
    }
}
