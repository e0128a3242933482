//! Periodic grids, the unitary discrete Fourier transform, and the Fourier
//! multipliers every scheme is built from: the low-frequency projector
//! `Π_τ`, the free Schrödinger flow `S(t) = e^{itΔ}` and the filtered flow
//! `S_τ(t) = S(t) Π_τ`.
//!
//! The computational domain is `[-π/a, π/a)^d` sampled with `K` points per
//! direction, so the frequency lattice is `a·{-K/2, …, K/2-1}` in every
//! direction. Transforms are unitary (`K^{-d/2}` in both directions); the
//! dimensionful `L²` norm attaches `dx^d` at the norm instead.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Uniform periodic grid on `[-π/a, π/a)^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    scale: f64,
    modes: usize,
}

impl Grid {
    pub fn new(dim: usize, scale: f64, modes: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Config(format!("dimension must be 1..={MAX_DIM}, got {dim}")));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Config(format!("domain scale must be positive, got {scale}")));
        }
        if modes < 2 || !modes.is_power_of_two() {
            return Err(Error::Config(format!("modes per dimension must be a power of two ≥ 2, got {modes}")));
        }
        Ok(Self { dim, scale, modes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The scale `a`; the domain is `[-π/a, π/a)^d`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Modes per dimension, `K`.
    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Total number of samples `K^d`.
    pub fn len(&self) -> usize {
        self.modes.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `dx = 2π/(aK)`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / (self.scale * self.modes as f64)
    }

    /// Side length of the periodic box, `2π/a`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.scale
    }

    /// Volume element `dx^d` of the discrete `L²` inner product.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Sample coordinates along one direction.
    pub fn coordinates(&self) -> Vec<f64> {
        let dx = self.spacing();
        let x0 = -PI / self.scale;
        (0..self.modes).map(|i| x0 + i as f64 * dx).collect()
    }

    /// Signed mode number of FFT index `i`, in `{-K/2, …, K/2-1}`.
    pub fn signed_mode(&self, i: usize) -> i64 {
        let k = self.modes as i64;
        let i = i as i64;
        if i < k / 2 {
            i
        } else {
            i - k
        }
    }

    /// Frequencies `ξ = a·m` along one direction, in FFT order.
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.modes).map(|i| self.scale * self.signed_mode(i) as f64).collect()
    }

    /// Per-direction indices of a flat (row-major) index.
    pub fn unflatten(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        for axis in (0..self.dim).rev() {
            idx[axis] = flat % self.modes;
            flat /= self.modes;
        }
        idx
    }

    /// Wave vector at a flat frequency index.
    pub fn wavevector(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.unflatten(flat);
        let mut xi = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            xi[axis] = self.scale * self.signed_mode(idx[axis]) as f64;
        }
        xi
    }

    /// Position at a flat physical index.
    pub fn position(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.unflatten(flat);
        let dx = self.spacing();
        let x0 = -PI / self.scale;
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = x0 + idx[axis] as f64 * dx;
        }
        x
    }

    /// `|ξ|²` for every frequency index.
    pub fn wavenumber_sq(&self) -> Vec<f64> {
        let freq = self.frequencies();
        let mut out = Vec::with_capacity(self.len());
        for flat in 0..self.len() {
            let idx = self.unflatten(flat);
            out.push((0..self.dim).map(|a| freq[idx[a]] * freq[idx[a]]).sum());
        }
        out
    }

    /// `|x|²` for every physical index.
    pub fn radius_sq(&self) -> Vec<f64> {
        (0..self.len())
            .map(|flat| {
                let x = self.position(flat);
                x[..self.dim].iter().map(|v| v * v).sum()
            })
            .collect()
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(contract(format!("grid mismatch: {self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Which space a field's samples live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Repr {
    Physical,
    Frequency,
}

/// Cut-off profile `χ` of the low-frequency projector, as a function of `r = √τ|ξ|`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffProfile {
    /// Indicator of the ball of radius 2.
    #[default]
    SharpIndicator,
    /// `1` on `[0,1]`, `0` on `[2,∞)`, quintic smoothstep (C²) in between.
    SmoothBump,
}

impl CutoffProfile {
    pub fn value(&self, r: f64) -> f64 {
        match self {
            CutoffProfile::SharpIndicator => {
                if r < 2.0 {
                    1.0
                } else {
                    0.0
                }
            }
            CutoffProfile::SmoothBump => {
                if r <= 1.0 {
                    1.0
                } else if r >= 2.0 {
                    0.0
                } else {
                    let s = r - 1.0;
                    1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
                }
            }
        }
    }

    /// Multiplier `χ(√τ|ξ|)` for every frequency index of `grid`.
    pub fn mask(&self, grid: &Grid, tau: f64) -> Result<Vec<f64>> {
        check_tau(tau)?;
        let st = tau.sqrt();
        Ok(grid.wavenumber_sq().into_iter().map(|k2| self.value(st * k2.sqrt())).collect())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(contract(format!("projector step must be positive, got {tau}")));
    }
    Ok(())
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// In-place unitary `d`-dimensional DFT on row-major data.
pub(crate) fn fft_in_place(grid: &Grid, data: &mut [Complex64], inverse: bool) {
    let k = grid.modes();
    let d = grid.dim();
    debug_assert_eq!(data.len(), grid.len());
    let fft = plan(k, inverse);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // Last axis is contiguous.
    fft.process_with_scratch(data, &mut scratch);
    if d > 1 {
        let mut line = vec![Complex64::new(0.0, 0.0); k];
        for axis in 0..d - 1 {
            let stride = k.pow((d - 1 - axis) as u32);
            let outer = data.len() / (stride * k);
            for o in 0..outer {
                let base = o * stride * k;
                for inner in 0..stride {
                    for (i, v) in line.iter_mut().enumerate() {
                        *v = data[base + inner + i * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (i, v) in line.iter().enumerate() {
                        data[base + inner + i * stride] = *v;
                    }
                }
            }
        }
    }
    let norm = 1.0 / (data.len() as f64).sqrt();
    for v in data.iter_mut() {
        *v *= norm;
    }
}

/// A complex field on a [`Grid`], tagged with its representation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    data: Vec<Complex64>,
    repr: Repr,
}

impl SpectralField {
    pub fn new(grid: Grid, data: Vec<Complex64>, repr: Repr) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(contract(format!("field has {} samples, grid needs {}", data.len(), grid.len())));
        }
        Ok(Self { grid, data, repr })
    }

    pub fn zeros(grid: Grid, repr: Repr) -> Self {
        Self { grid, data: vec![Complex64::new(0.0, 0.0); grid.len()], repr }
    }

    /// Samples `f(x)` at every grid point.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let data = (0..grid.len()).map(|flat| f(&grid.position(flat)[..grid.dim()])).collect();
        Self { grid, data, repr: Repr::Physical }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn repr(&self) -> Repr {
        self.repr
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn to_frequency(&self) -> Result<SpectralField> {
        if self.repr != Repr::Physical {
            return Err(contract("to_frequency expects a physical field"));
        }
        let mut out = self.clone();
        fft_in_place(&out.grid, &mut out.data, false);
        out.repr = Repr::Frequency;
        Ok(out)
    }

    pub fn to_physical(&self) -> Result<SpectralField> {
        if self.repr != Repr::Frequency {
            return Err(contract("to_physical expects a frequency field"));
        }
        let mut out = self.clone();
        fft_in_place(&out.grid, &mut out.data, true);
        out.repr = Repr::Physical;
        Ok(out)
    }

    /// Same field in the requested representation.
    pub fn in_repr(&self, repr: Repr) -> SpectralField {
        if self.repr == repr {
            return self.clone();
        }
        let mut out = self.clone();
        fft_in_place(&out.grid, &mut out.data, repr == Repr::Physical);
        out.repr = repr;
        out
    }

    /// Applies a real Fourier multiplier, returning the result in the input representation.
    pub fn map_frequency(&self, f: impl Fn(usize, Complex64) -> Complex64) -> SpectralField {
        let mut out = self.in_repr(Repr::Frequency);
        for (i, v) in out.data.iter_mut().enumerate() {
            *v = f(i, *v);
        }
        out.in_repr(self.repr)
    }

    pub fn scale(&self, c: Complex64) -> SpectralField {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.grid.ensure_same(&other.grid)?;
        let other = other.in_repr(self.repr);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(SpectralField { grid: self.grid, data, repr: self.repr })
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Largest sample modulus in the current representation.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Discrete `L²` norm `sqrt(Σ|f|² dx^d)`, representation invariant.
pub fn l2_norm(f: &SpectralField) -> f64 {
    let sum: f64 = f.data.iter().map(|v| v.norm_sqr()).sum();
    (sum * f.grid.cell_volume()).sqrt()
}

/// Discrete `L²` distance between two fields on one grid.
pub fn l2_error(f: &SpectralField, g: &SpectralField) -> Result<f64> {
    Ok(l2_norm(&f.sub(g)?))
}

/// Multiplies every frequency coefficient by `χ(√τ ξ)`.
pub fn apply_projector(f: &SpectralField, tau: f64, cutoff: CutoffProfile) -> Result<SpectralField> {
    let mask = cutoff.mask(f.grid(), tau)?;
    Ok(f.map_frequency(|i, v| v * mask[i]))
}

/// Free Schrödinger flow `e^{itΔ}`: multiplies coefficients by `e^{-it|ξ|²}`.
pub fn free_flow(f: &SpectralField, t: f64) -> SpectralField {
    if t == 0.0 {
        return f.clone();
    }
    let k2 = f.grid().wavenumber_sq();
    f.map_frequency(|i, v| v * Complex64::from_polar(1.0, -t * k2[i]))
}

/// Filtered flow `S_τ(t) = S(t) Π_τ`.
pub fn filtered_flow(f: &SpectralField, t: f64, tau: f64, cutoff: CutoffProfile) -> Result<SpectralField> {
    let mask = cutoff.mask(f.grid(), tau)?;
    let k2 = f.grid().wavenumber_sq();
    Ok(f.map_frequency(|i, v| v * Complex64::from_polar(mask[i], -t * k2[i])))
}

/// Precomputed symbols of the free and filtered flows for one `(grid, τ, χ)`.
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: Grid,
    tau: f64,
    k2: Vec<f64>,
    mask: Vec<f64>,
}

impl Propagator {
    pub fn new(grid: Grid, tau: f64, cutoff: CutoffProfile) -> Result<Self> {
        let mask = cutoff.mask(&grid, tau)?;
        Ok(Self { grid, tau, k2: grid.wavenumber_sq(), mask })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    /// `e^{-it|ξ|²}` applied in place to frequency coefficients.
    pub fn free_in_place(&self, coeffs: &mut [Complex64], t: f64) {
        if t == 0.0 {
            return;
        }
        for (v, k2) in coeffs.iter_mut().zip(&self.k2) {
            *v *= Complex64::from_polar(1.0, -t * k2);
        }
    }

    /// `χ(√τξ) e^{-it|ξ|²}` applied in place to frequency coefficients.
    pub fn filtered_in_place(&self, coeffs: &mut [Complex64], t: f64) {
        for ((v, k2), m) in coeffs.iter_mut().zip(&self.k2).zip(&self.mask) {
            *v *= Complex64::from_polar(*m, -t * k2);
        }
    }

    /// `S_τ(t)` on a field, keeping its representation.
    pub fn filtered(&self, f: &SpectralField, t: f64) -> SpectralField {
        let mut out = f.in_repr(Repr::Frequency);
        self.filtered_in_place(out.data_mut(), t);
        out.in_repr(f.repr())
    }

    /// `S(t)` on a field, keeping its representation.
    pub fn free(&self, f: &SpectralField, t: f64) -> SpectralField {
        if t == 0.0 {
            return f.clone();
        }
        let mut out = f.in_repr(Repr::Frequency);
        self.free_in_place(out.data_mut(), t);
        out.in_repr(f.repr())
    }

    /// Physical samples of `S_τ(t)` applied to frequency coefficients.
    pub fn materialize(&self, coeffs: &[Complex64], t: f64) -> SpectralField {
        let mut data = coeffs.to_vec();
        self.filtered_in_place(&mut data, t);
        fft_in_place(&self.grid, &mut data, true);
        SpectralField::new(self.grid, data, Repr::Physical).expect("grid-sized buffer")
    }

    /// Frequency coefficients of `S(-t) g` for a physical field `g`.
    pub fn pull_back(&self, g: &SpectralField, t: f64) -> Vec<Complex64> {
        let mut data = g.in_repr(Repr::Frequency).into_data();
        self.free_in_place(&mut data, -t);
        data
    }
}

/// Spectral partial derivative `∂^α f` for per-direction orders `alpha`.
pub fn derivative(f: &SpectralField, alpha: &[u8]) -> SpectralField {
    let grid = *f.grid();
    let symbol = derivative_symbol(&grid, alpha);
    f.map_frequency(|i, v| v * symbol[i])
}

/// Symbol `(iξ)^α` on the frequency lattice.
pub fn derivative_symbol(grid: &Grid, alpha: &[u8]) -> Vec<Complex64> {
    let freq = grid.frequencies();
    (0..grid.len())
        .map(|flat| {
            let idx = grid.unflatten(flat);
            let mut s = Complex64::new(1.0, 0.0);
            for (axis, &order) in alpha.iter().enumerate().take(grid.dim()) {
                let ik = Complex64::new(0.0, freq[idx[axis]]);
                s *= ik.powu(order as u32);
            }
            s
        })
        .collect()
}
