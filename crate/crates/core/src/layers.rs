//! Learnable modulation layers: `h = a·exp(jφ)·z (+ b)`.
//!
//! Gradients of the real loss `L` with respect to a complex quantity `u` are
//! carried as `G_u = ∂L/∂Re u + j·∂L/∂Im u`. Under this convention a linear map
//! `A` pulls gradients back through `Aᴴ`, and a real parameter `θ` with
//! `∂h/∂θ` known receives `∂L/∂θ = Re[conj(G_h)·∂h/∂θ]`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;

use crate::field::{ComplexField, GridGeometry};
use crate::{Error, Result};

/// Per-layer amplitude and phase grids plus an optional scalar bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationParams {
    geometry: GridGeometry,
    pub amplitude: Vec<f64>,
    /// Radians, unbounded.
    pub phase: Vec<f64>,
    pub bias: Option<Complex64>,
    amplitude_trainable: bool,
}

impl ModulationParams {
    /// Transparent layer: `a ≡ 1`, `φ ≡ 0`.
    pub fn identity(geometry: GridGeometry, amplitude_trainable: bool, bias: bool) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            amplitude: vec![1.0; geometry.len()],
            phase: vec![0.0; geometry.len()],
            bias: bias.then(Complex64::default),
            geometry,
            amplitude_trainable,
        })
    }

    /// Uniform phase in `[0, 2π)`, unit amplitude, zero bias.
    pub fn random<R: Rng + ?Sized>(
        geometry: GridGeometry,
        amplitude_trainable: bool,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = Self::identity(geometry, amplitude_trainable, bias)?;
        params
            .phase
            .iter_mut()
            .for_each(|p| *p = rng.gen_range(0.0..TAU));
        Ok(params)
    }

    pub fn from_parts(
        geometry: GridGeometry,
        amplitude: Vec<f64>,
        phase: Vec<f64>,
        bias: Option<Complex64>,
        amplitude_trainable: bool,
    ) -> Result<Self> {
        geometry.validate()?;
        if amplitude.len() != geometry.len() || phase.len() != geometry.len() {
            return Err(Error::ShapeMismatch(format!(
                "amplitude/phase lengths {}/{} for {} pixels",
                amplitude.len(),
                phase.len(),
                geometry.len()
            )));
        }
        if amplitude.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidArgument(
                "amplitude must be finite and nonnegative".into(),
            ));
        }
        if phase.iter().any(|p| !p.is_finite()) || bias.is_some_and(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument(
                "phase and bias must be finite".into(),
            ));
        }
        if !amplitude_trainable && amplitude.iter().any(|a| *a != 1.0) {
            return Err(Error::InvalidArgument(
                "phase-only layers require unit amplitude".into(),
            ));
        }
        Ok(Self {
            geometry,
            amplitude,
            phase,
            bias,
            amplitude_trainable,
        })
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn amplitude_trainable(&self) -> bool {
        self.amplitude_trainable
    }

    /// Real scalars the optimizer updates: N (phase-only) or 2N, plus two for a bias.
    pub fn trainable_count(&self) -> usize {
        let n = self.geometry.len();
        let grids = if self.amplitude_trainable { 2 * n } else { n };
        grids + if self.bias.is_some() { 2 } else { 0 }
    }

    /// Restores `a ≥ 0`.
    pub fn clamp_amplitude(&mut self) {
        self.amplitude.iter_mut().for_each(|a| *a = a.max(0.0));
    }

    /// `t = a·exp(j·s·φ)` with `s` the phase scale (1 unless dispersive).
    pub fn transmittance(&self, phase_scale: f64) -> Vec<Complex64> {
        self.amplitude
            .iter()
            .zip(&self.phase)
            .map(|(&a, &p)| Complex64::from_polar(a, phase_scale * p))
            .collect()
    }
}

/// Gradient of the loss with respect to one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub d_amplitude: Vec<f64>,
    pub d_phase: Vec<f64>,
    /// `∂L/∂Re b + j·∂L/∂Im b`.
    pub d_bias: Option<Complex64>,
}

impl ParamGrad {
    pub fn zeros_like(params: &ModulationParams) -> Self {
        let n = params.geometry.len();
        Self {
            d_amplitude: vec![0.0; n],
            d_phase: vec![0.0; n],
            d_bias: params.bias.map(|_| Complex64::default()),
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrad) -> Result<()> {
        if self.d_phase.len() != other.d_phase.len()
            || self.d_bias.is_some() != other.d_bias.is_some()
        {
            return Err(Error::ShapeMismatch(
                "parameter gradients differ in shape".into(),
            ));
        }
        self.d_amplitude
            .iter_mut()
            .zip(&other.d_amplitude)
            .for_each(|(a, b)| *a += b);
        self.d_phase
            .iter_mut()
            .zip(&other.d_phase)
            .for_each(|(a, b)| *a += b);
        if let (Some(a), Some(b)) = (self.d_bias.as_mut(), other.d_bias) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        self.d_amplitude.iter_mut().for_each(|a| *a *= c);
        self.d_phase.iter_mut().for_each(|a| *a *= c);
        if let Some(b) = self.d_bias.as_mut() {
            *b *= c;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_amplitude
            .iter()
            .chain(&self.d_phase)
            .all(|v| v.is_finite())
            && self.d_bias.is_none_or(|b| b.is_finite())
    }
}

/// `h = t·z (+ b)`.
pub fn modulate(z: &ComplexField, params: &ModulationParams) -> Result<ComplexField> {
    modulate_scaled(z, params, 1.0)
}

/// [`modulate`] with the phase grid multiplied by `phase_scale`.
pub fn modulate_scaled(
    z: &ComplexField,
    params: &ModulationParams,
    phase_scale: f64,
) -> Result<ComplexField> {
    z.geometry().ensure_same(&params.geometry)?;
    let bias = params.bias.unwrap_or_default();
    let values = z
        .values()
        .iter()
        .zip(params.amplitude.iter().zip(&params.phase))
        .map(|(&z, (&a, &p))| Complex64::from_polar(a, phase_scale * p) * z + bias)
        .collect();
    Ok(ComplexField::from_raw(z.geometry(), values))
}

/// Reverse pass of [`modulate`]; `z_cached` must be the forward input.
pub fn modulate_backward(
    grad_h: &ComplexField,
    z_cached: &ComplexField,
    params: &ModulationParams,
) -> Result<(ComplexField, ParamGrad)> {
    modulate_backward_scaled(grad_h, z_cached, params, 1.0)
}

pub fn modulate_backward_scaled(
    grad_h: &ComplexField,
    z_cached: &ComplexField,
    params: &ModulationParams,
    phase_scale: f64,
) -> Result<(ComplexField, ParamGrad)> {
    let geometry = params.geometry;
    grad_h.geometry().ensure_same(&geometry)?;
    z_cached.geometry().ensure_same(&geometry)?;
    let n = geometry.len();
    let mut grad_z = Vec::with_capacity(n);
    let mut grads = ParamGrad::zeros_like(params);
    let mut bias_acc = Complex64::default();
    let j = Complex64::i();
    for i in 0..n {
        let g = grad_h.values()[i];
        let z = z_cached.values()[i];
        let rotor = Complex64::from_polar(1.0, phase_scale * params.phase[i]);
        let t = params.amplitude[i] * rotor;
        grad_z.push(t.conj() * g);
        // ∂h/∂a = rotor·z, ∂h/∂φ = j·s·t·z
        grads.d_amplitude[i] = (g.conj() * rotor * z).re;
        grads.d_phase[i] = phase_scale * (g.conj() * j * t * z).re;
        bias_acc += g;
    }
    if let Some(d) = grads.d_bias.as_mut() {
        *d = bias_acc;
    }
    Ok((ComplexField::from_raw(geometry, grad_z), grads))
}
