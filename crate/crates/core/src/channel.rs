use std::fmt;

use crate::error::{config, Result};
use crate::spectral::{l2_norm, SpectralField};
use crate::trees::{MultiIndex, NO_DERIV};

/// Spatial derivative carried by an output channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Deriv {
    Value,
    Grad,
    Lap,
    GradLap,
    BiLap,
}

impl Deriv {
    /// Components as linear combinations of partial derivatives `∂^α`.
    pub fn components(self, dim: usize) -> Vec<Vec<(MultiIndex, f64)>> {
        let unit = |l: usize, k: u8| {
            let mut a = NO_DERIV;
            a[l] += k;
            a
        };
        let lap_of = |base: MultiIndex| {
            (0..dim)
                .map(|m| {
                    let mut a = base;
                    a[m] += 2;
                    (a, 1.0)
                })
                .collect::<Vec<_>>()
        };
        match self {
            Deriv::Value => vec![vec![(NO_DERIV, 1.0)]],
            Deriv::Grad => (0..dim).map(|l| vec![(unit(l, 1), 1.0)]).collect(),
            Deriv::Lap => vec![lap_of(NO_DERIV)],
            Deriv::GradLap => (0..dim).map(|l| lap_of(unit(l, 1))).collect(),
            Deriv::BiLap => vec![(0..dim).flat_map(|l| lap_of(unit(l, 2))).collect()],
        }
    }
}

/// One reported quantity: a derivative of the iterate `U_level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Channel {
    pub level: usize,
    pub deriv: Deriv,
}

impl Channel {
    pub const fn new(level: usize, deriv: Deriv) -> Self {
        Self { level, deriv }
    }

    pub const fn value(level: usize) -> Self {
        Self { level, deriv: Deriv::Value }
    }

    /// Components of the channel; vector channels have one per direction.
    pub fn is_vector(&self) -> bool {
        matches!(self.deriv, Deriv::Grad | Deriv::GradLap)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (prefix, rest) = match s.find('U') {
            Some(i) => (&s[..i], &s[i + 1..]),
            None => return Err(config(format!("unknown channel '{s}'"))),
        };
        let level = rest.parse().map_err(|_| config(format!("unknown channel '{s}'")))?;
        let deriv = match prefix {
            "" => Deriv::Value,
            "grad" => Deriv::Grad,
            "lap" => Deriv::Lap,
            "gradlap" => Deriv::GradLap,
            "bilap" => Deriv::BiLap,
            _ => return Err(config(format!("unknown channel '{s}'"))),
        };
        Ok(Self { level, deriv })
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.deriv {
            Deriv::Value => "",
            Deriv::Grad => "grad",
            Deriv::Lap => "lap",
            Deriv::GradLap => "gradlap",
            Deriv::BiLap => "bilap",
        };
        write!(f, "{prefix}U{}", self.level)
    }
}

/// `L²` distance between two (possibly vector) channel values.
pub fn channel_error(a: &[SpectralField], b: &[SpectralField]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(crate::error::contract("channel component count mismatch"));
    }
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let e = l2_norm(&x.sub(y)?);
        sum += e * e;
    }
    Ok(sum.sqrt())
}

/// `L²` norm of a (possibly vector) channel value.
pub fn channel_norm(a: &[SpectralField]) -> f64 {
    a.iter().map(|f| l2_norm(f).powi(2)).sum::<f64>().sqrt()
}
