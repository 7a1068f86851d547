//! Complex fields on a uniform 2D grid.
//!
//! Pixels are stored row-major with `x` varying fastest: the value at column
//! `x`, row `y` lives at index `y * nx + x`. The forward FFT is unnormalized
//! and the inverse carries the full `1/(nx·ny)` factor.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::{Error, Result};

/// Pixel counts and spacing of a sampling grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub nx: usize,
    pub ny: usize,
    /// Pixel spacing, in the same length unit as the wavelength.
    pub pitch: f64,
}

impl GridGeometry {
    pub fn new(nx: usize, ny: usize, pitch: f64) -> Result<Self> {
        let geometry = Self { nx, ny, pitch };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn square(n: usize, pitch: f64) -> Result<Self> {
        Self::new(n, n, pitch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidGeometry(format!(
                "grid must be at least 2x2, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "pitch must be positive and finite, got {}",
                self.pitch
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny);
        y * self.nx + x
    }

    pub(crate) fn ensure_same(&self, other: &GridGeometry) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch {
                left: *self,
                right: *other,
            })
        }
    }
}

/// A grid of complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    geometry: GridGeometry,
    values: Vec<Complex64>,
}

impl ComplexField {
    /// Every pixel set to `fill`.
    pub fn filled(geometry: GridGeometry, fill: Complex64) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            values: vec![fill; geometry.len()],
            geometry,
        })
    }

    pub fn zeros(geometry: GridGeometry) -> Result<Self> {
        Self::filled(geometry, Complex64::new(0.0, 0.0))
    }

    pub fn from_values(geometry: GridGeometry, values: Vec<Complex64>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                geometry.nx,
                geometry.ny
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("field values must be finite".into()));
        }
        Ok(Self { geometry, values })
    }

    /// Skips validation; callers guarantee the length invariant.
    pub(crate) fn from_raw(geometry: GridGeometry, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), geometry.len());
        Self { geometry, values }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.values[self.geometry.index(x, y)]
    }

    /// Returns a copy with one pixel replaced.
    pub fn with_pixel(mut self, x: usize, y: usize, value: Complex64) -> Self {
        let i = self.geometry.index(x, y);
        self.values[i] = value;
        self
    }

    pub fn fft2(&self) -> ComplexField {
        let mut values = self.values.clone();
        Fft2Plan::cached(self.geometry.nx, self.geometry.ny).forward(&mut values);
        Self::from_raw(self.geometry, values)
    }

    pub fn ifft2(&self) -> ComplexField {
        let mut values = self.values.clone();
        Fft2Plan::cached(self.geometry.nx, self.geometry.ny).inverse(&mut values);
        let norm = 1.0 / self.geometry.len() as f64;
        values.iter_mut().for_each(|v| *v *= norm);
        Self::from_raw(self.geometry, values)
    }

    /// Pixelwise complex product.
    pub fn mul(&self, other: &ComplexField) -> Result<ComplexField> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &ComplexField) -> Result<ComplexField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexField) -> Result<ComplexField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: Complex64) -> ComplexField {
        Self::from_raw(self.geometry, self.values.iter().map(|v| v * c).collect())
    }

    pub fn conj(&self) -> ComplexField {
        Self::from_raw(
            self.geometry,
            self.values.iter().map(|v| v.conj()).collect(),
        )
    }

    fn zip_with(
        &self,
        other: &ComplexField,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<ComplexField> {
        self.geometry.ensure_same(&other.geometry)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_raw(self.geometry, values))
    }

    /// Σ |u|².
    pub fn total_energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Pixelwise |u|.
    pub fn modulus(&self) -> RealMap {
        RealMap::from_raw(
            self.geometry,
            self.values.iter().map(|v| v.norm()).collect(),
        )
    }

    /// Pixelwise |u|².
    pub fn intensity(&self) -> RealMap {
        RealMap::from_raw(
            self.geometry,
            self.values.iter().map(|v| v.norm_sqr()).collect(),
        )
    }

    /// Hermitian inner product Σ conj(self)·other.
    pub fn inner(&self, other: &ComplexField) -> Result<Complex64> {
        self.geometry.ensure_same(&other.geometry)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn max_abs_diff(&self, other: &ComplexField) -> Result<f64> {
        self.geometry.ensure_same(&other.geometry)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// A grid of nonnegative reals, such as a modulus or intensity map.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMap {
    geometry: GridGeometry,
    values: Vec<f64>,
}

impl RealMap {
    pub fn zeros(geometry: GridGeometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            values: vec![0.0; geometry.len()],
            geometry,
        })
    }

    pub fn from_values(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                geometry.nx,
                geometry.ny
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "map values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { geometry, values })
    }

    pub(crate) fn from_raw(geometry: GridGeometry, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), geometry.len());
        Self { geometry, values }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[self.geometry.index(x, y)]
    }

    pub fn scale(&self, c: f64) -> RealMap {
        Self::from_raw(self.geometry, self.values.iter().map(|v| v * c).collect())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the brightest pixel, lowest index on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best % self.geometry.nx, best / self.geometry.nx)
    }
}

/// Row and column FFT plans for one grid shape.
pub(crate) struct Fft2Plan {
    nx: usize,
    ny: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

type PlanCache = Mutex<HashMap<(usize, usize), Arc<Fft2Plan>>>;

impl Fft2Plan {
    pub(crate) fn cached(nx: usize, ny: usize) -> Arc<Fft2Plan> {
        static PLANS: OnceLock<PlanCache> = OnceLock::new();
        static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
        let plans = PLANS.get_or_init(Default::default);
        let mut plans = plans.lock().unwrap_or_else(|e| e.into_inner());
        plans
            .entry((nx, ny))
            .or_insert_with(|| {
                let planner = PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()));
                let mut planner = planner.lock().unwrap_or_else(|e| e.into_inner());
                Arc::new(Fft2Plan {
                    nx,
                    ny,
                    row_fwd: planner.plan_fft(nx, FftDirection::Forward),
                    row_inv: planner.plan_fft(nx, FftDirection::Inverse),
                    col_fwd: planner.plan_fft(ny, FftDirection::Forward),
                    col_inv: planner.plan_fft(ny, FftDirection::Inverse),
                })
            })
            .clone()
    }

    /// Unnormalized forward transform of an `nx × ny` row-major buffer.
    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.rows(data, false);
        self.columns(data, false);
    }

    /// Unnormalized inverse transform.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.columns(data, true);
        self.rows(data, true);
    }

    /// Transforms every complete row in `data` (any number of leading rows).
    pub(crate) fn rows(&self, data: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(data.len() % self.nx, 0);
        let plan = if inverse {
            &self.row_inv
        } else {
            &self.row_fwd
        };
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
    }

    pub(crate) fn columns(&self, data: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(data.len(), self.nx * self.ny);
        let plan = if inverse {
            &self.col_inv
        } else {
            &self.col_fwd
        };
        let mut transposed = vec![Complex64::default(); data.len()];
        transpose(data, &mut transposed, self.ny, self.nx);
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(&mut transposed, &mut scratch);
        transpose(&transposed, data, self.nx, self.ny);
    }
}

/// `src` holds `rows` rows of `cols` values; `dst` receives `cols` rows of `rows`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const BLOCK: usize = 16;
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}
