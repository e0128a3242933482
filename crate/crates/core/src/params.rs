use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::picard::check_exponent;
use crate::spectral::CutoffProfile;

/// Scalar parameters shared by the nested integrators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorParams {
    /// Odd nonlinearity exponent `p`.
    pub p: usize,
    /// Number of Picard levels `N` (iterates `U₀ … U_{N−1}`).
    pub order: usize,
    /// Time step `τ`, also the projector scale.
    pub tau: f64,
    pub cutoff: CutoffProfile,
    /// 2/3-rule dealiasing of every pointwise product.
    pub dealias: bool,
}

impl IntegratorParams {
    pub fn new(p: usize, order: usize, tau: f64) -> Self {
        Self { p, order, tau, cutoff: CutoffProfile::default(), dealias: false }
    }

    pub fn validate(&self) -> Result<()> {
        check_exponent(self.p)?;
        if self.order == 0 {
            return Err(config("order N must be at least 1"));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(config(format!("time step must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Number of steps `J` with `Jτ = T`, rejecting steps that do not divide `T`.
pub fn step_count(final_time: f64, tau: f64) -> Result<usize> {
    if !(final_time >= 0.0) || !(tau > 0.0) {
        return Err(config(format!("need T ≥ 0 and τ > 0, got T={final_time}, τ={tau}")));
    }
    let ratio = final_time / tau;
    let j = ratio.round();
    if (ratio - j).abs() > 1e-9 * ratio.max(1.0) {
        return Err(config(format!("τ={tau} does not divide T={final_time}")));
    }
    Ok(j as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_counts() {
        assert_eq!(step_count(1.0, 0.1).unwrap(), 10);
        assert_eq!(step_count(1.0, 0.0125).unwrap(), 80);
        assert_eq!(step_count(0.0, 0.1).unwrap(), 0);
        assert!(step_count(1.0, 0.3).is_err());
        assert!(IntegratorParams::new(4, 3, 0.1).validate().is_err());
        assert!(IntegratorParams::new(3, 0, 0.1).validate().is_err());
        assert!(IntegratorParams::new(5, 3, 0.1).validate().is_ok());
    }
}
