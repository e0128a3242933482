use num_complex::Complex64;

use crate::channel::Channel;
use crate::error::{contract, Result};
use crate::nqs::NqsScheme;
use crate::spectral::{derivative, Repr, SpectralField};
use crate::trees::MultiIndex;

/// Common driver interface of the nested integrators.
pub trait NestedScheme {
    /// Number of levels `N`.
    fn order(&self) -> usize;
    /// Current grid time `t_j`.
    fn time(&self) -> f64;
    fn step(&mut self) -> Result<()>;
    /// Current value of a reported channel, one field per component.
    fn channel(&self, ch: Channel) -> Result<Vec<SpectralField>>;
    /// `Σₙ εⁿ Uₙ` at the current time.
    fn reconstruct(&self, eps: f64) -> Result<SpectralField>;

    fn run(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }
}

/// Assembles channel components from partial derivatives supplied by `part`.
pub(crate) fn assemble(
    ch: Channel,
    dim: usize,
    mut part: impl FnMut(&MultiIndex) -> Result<SpectralField>,
) -> Result<Vec<SpectralField>> {
    let mut out = Vec::new();
    for comp in ch.deriv.components(dim) {
        let mut acc: Option<SpectralField> = None;
        for (alpha, w) in comp {
            let f = part(&alpha)?.in_repr(Repr::Physical).scale(Complex64::new(w, 0.0));
            acc = Some(match acc {
                None => f,
                Some(a) => a.add(&f)?,
            });
        }
        out.push(acc.expect("non-empty component"));
    }
    Ok(out)
}

impl NestedScheme for NqsScheme {
    fn order(&self) -> usize {
        self.params().order
    }

    fn time(&self) -> f64 {
        NqsScheme::time(self)
    }

    fn step(&mut self) -> Result<()> {
        NqsScheme::step(self);
        Ok(())
    }

    /// Derivative channels are spectral derivatives of the stored iterate.
    fn channel(&self, ch: Channel) -> Result<Vec<SpectralField>> {
        if ch.level >= self.params().order {
            return Err(contract(format!("channel {ch} beyond order {}", self.params().order)));
        }
        let u = self.state().iterate(ch.level);
        assemble(ch, u.grid().dim(), |alpha| Ok(derivative(u, alpha)))
    }

    fn reconstruct(&self, eps: f64) -> Result<SpectralField> {
        Ok(NqsScheme::reconstruct(self, eps))
    }
}
