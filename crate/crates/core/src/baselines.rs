//! Lie and Strang splitting for `i∂ₜu + Δu = ε|u|^{p−1}u`, used as
//! references and as the first-order baseline.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::picard::check_exponent;
use crate::spectral::{CutoffProfile, Propagator, Repr, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplittingKind {
    /// `S_τ(τ) ∘ Φ^τ`
    Lie,
    /// `S_τ(τ/2) ∘ Φ^τ ∘ S_τ(τ/2)`
    Strang,
}

/// Exact flow of `i∂ₜw = ε|w|^{p−1}w`: `w ↦ e^{−iεt|w|^{p−1}} w`, pointwise.
pub fn nonlinear_flow(w: &mut [Complex64], eps: f64, p: usize, t: f64) {
    let half = ((p - 1) / 2) as i32;
    for v in w.iter_mut() {
        let phase = -eps * t * v.norm_sqr().powi(half);
        *v *= Complex64::from_polar(1.0, phase);
    }
}

#[derive(Debug, Clone)]
pub struct Splitting {
    kind: SplittingKind,
    p: usize,
    eps: f64,
    tau: f64,
    prop: Propagator,
    /// Frequency coefficients of the current solution.
    coeffs: Vec<Complex64>,
    j: usize,
}

impl Splitting {
    pub fn new(kind: SplittingKind, p: usize, eps: f64, tau: f64, cutoff: CutoffProfile, phi: &SpectralField) -> Result<Self> {
        check_exponent(p)?;
        if !(tau > 0.0) {
            return Err(config(format!("time step must be positive, got {tau}")));
        }
        let prop = Propagator::new(*phi.grid(), tau, cutoff)?;
        Ok(Self { kind, p, eps, tau, prop, coeffs: phi.in_repr(Repr::Frequency).into_data(), j: 0 })
    }

    pub fn time(&self) -> f64 {
        self.j as f64 * self.tau
    }

    fn nonlinear(&mut self) {
        let grid = *self.prop.grid();
        let mut u = SpectralField::new(grid, std::mem::take(&mut self.coeffs), Repr::Frequency)
            .expect("grid-sized buffer")
            .in_repr(Repr::Physical)
            .into_data();
        nonlinear_flow(&mut u, self.eps, self.p, self.tau);
        self.coeffs = SpectralField::new(grid, u, Repr::Physical).expect("grid-sized buffer").in_repr(Repr::Frequency).into_data();
    }

    pub fn step(&mut self) {
        match self.kind {
            SplittingKind::Lie => {
                self.nonlinear();
                self.prop.filtered_in_place(&mut self.coeffs, self.tau);
            }
            SplittingKind::Strang => {
                self.prop.filtered_in_place(&mut self.coeffs, self.tau / 2.0);
                self.nonlinear();
                self.prop.filtered_in_place(&mut self.coeffs, self.tau / 2.0);
            }
        }
        self.j += 1;
    }

    pub fn run(&mut self, steps: usize) {
        for _ in 0..steps {
            self.step();
        }
    }

    /// Current solution in physical representation.
    pub fn solution(&self) -> SpectralField {
        SpectralField::new(*self.prop.grid(), self.coeffs.clone(), Repr::Frequency)
            .expect("grid-sized buffer")
            .in_repr(Repr::Physical)
    }
}

/// Runs a splitting from `phi` up to `final_time` (which `tau` must divide).
pub fn splitting_solution(
    kind: SplittingKind,
    p: usize,
    eps: f64,
    tau: f64,
    final_time: f64,
    phi: &SpectralField,
) -> Result<SpectralField> {
    let steps = crate::params::step_count(final_time, tau)?;
    let mut s = Splitting::new(kind, p, eps, tau, CutoffProfile::default(), phi)?;
    s.run(steps);
    Ok(s.solution())
}
