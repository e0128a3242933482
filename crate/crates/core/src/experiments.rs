//! Convergence sweeps, their tabular records, and the on-disk formats.
//!
//! CSV schemas: convergence rows are `abscissa,channel,error`, spectrum rows
//! are `t,k_shell,n_rad`; numbers use 17 significant digits.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{splitting_solution, SplittingKind};
use crate::channel::{channel_error, Channel};
use crate::error::{config, contract, Result};
use crate::fit::{fit_loglog, SlopeFit};
use crate::nqs::NqsScheme;
use crate::nts::{NtsEngine, NtsScheme, NtsVariant};
use crate::oracles::{gaussian_oracle, GaussianOracleConfig};
use crate::params::{step_count, IntegratorParams};
use crate::scheme::NestedScheme;
use crate::spectral::{l2_error, CutoffProfile, Grid, Repr, SpectralField};
use crate::turbulence::SpectrumRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Nqs,
    Nts,
    Lie,
    Strang,
}

impl SchemeKind {
    pub fn label(&self) -> &'static str {
        match self {
            SchemeKind::Nqs => "NQS",
            SchemeKind::Nts => "NTS",
            SchemeKind::Lie => "LS",
            SchemeKind::Strang => "ST",
        }
    }
}

/// Tree-generated or hand-expanded Taylor terms for [`SchemeKind::Nts`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NtsEngineChoice {
    #[default]
    Generic,
    Cubic2d,
    Cubic2dAsPrinted,
}

impl From<NtsEngineChoice> for NtsEngine {
    fn from(c: NtsEngineChoice) -> Self {
        match c {
            NtsEngineChoice::Generic => NtsEngine::Generic,
            NtsEngineChoice::Cubic2d => NtsEngine::Cubic2d(NtsVariant::Corrected),
            NtsEngineChoice::Cubic2dAsPrinted => NtsEngine::Cubic2d(NtsVariant::AsPrinted),
        }
    }
}

/// Every scalar governing one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub p: usize,
    pub d: usize,
    /// Number of Picard levels `N`.
    pub order: usize,
    pub eps: f64,
    pub tau: f64,
    pub final_time: f64,
    /// Domain scale `a`; the box is `[−π/a, π/a)^d`.
    pub scale: f64,
    /// Modes per dimension `K`.
    pub modes: usize,
    #[serde(default)]
    pub cutoff: CutoffProfile,
    #[serde(default)]
    pub dealias: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub nts_engine: NtsEngineChoice,
}

impl SchemeConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.d, self.scale, self.modes)
    }

    pub fn params(&self) -> IntegratorParams {
        IntegratorParams { p: self.p, order: self.order, tau: self.tau, cutoff: self.cutoff, dealias: self.dealias }
    }

    pub fn steps(&self) -> Result<usize> {
        step_count(self.final_time, self.tau)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.steps()?;
        if !self.eps.is_finite() || self.eps < 0.0 {
            return Err(config(format!("ε must be a nonnegative number, got {}", self.eps)));
        }
        match self.scheme {
            SchemeKind::Nqs | SchemeKind::Nts => self.params().validate()?,
            SchemeKind::Lie | SchemeKind::Strang => crate::picard::check_exponent(self.p)?,
        }
        if self.scheme == SchemeKind::Nqs && self.order > crate::nqs::MAX_NQS_ORDER {
            return Err(config(format!("NQS supports N ≤ {}, got {}", crate::nqs::MAX_NQS_ORDER, self.order)));
        }
        if self.scheme == SchemeKind::Nts && self.d == 3 && self.order > 3 {
            return Err(config(format!("NTS in three dimensions supports N ≤ 3, got {}", self.order)));
        }
        Ok(())
    }

    /// Same configuration with another time step.
    pub fn with_tau(&self, tau: f64) -> Self {
        Self { tau, ..self.clone() }
    }

    /// Builds the nested integrator carrying `outputs` on top of the iterates.
    pub fn nested(&self, phi: &SpectralField, outputs: &[Channel]) -> Result<Box<dyn NestedScheme + Send + Sync>> {
        match self.scheme {
            SchemeKind::Nqs => Ok(Box::new(NqsScheme::new(self.params(), phi)?)),
            SchemeKind::Nts => Ok(Box::new(NtsScheme::new(self.params(), self.nts_engine.into(), phi, outputs)?)),
            other => Err(config(format!("{other:?} is not a nested scheme"))),
        }
    }
}

/// `φ(x) = e^{−|x|²/2}`, the datum of the Gaussian references.
pub fn gaussian_datum(grid: &Grid) -> SpectralField {
    SpectralField::from_fn(*grid, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Complex64::new((-r2 / 2.0).exp(), 0.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Abscissa {
    Tau,
    Eps,
}

/// Errors of every channel at one abscissa.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub abscissa: f64,
    pub errors: Vec<f64>,
}

/// One sweep: channel names and a point per abscissa, strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRecord {
    pub kind: Abscissa,
    pub channels: Vec<String>,
    pub points: Vec<ConvergencePoint>,
}

impl ConvergenceRecord {
    pub fn series(&self, channel: &str) -> Option<(Vec<f64>, Vec<f64>)> {
        let c = self.channels.iter().position(|n| n == channel)?;
        Some(self.points.iter().map(|p| (p.abscissa, p.errors[c])).unzip())
    }

    /// Log-log slope of `channel` over abscissas in `[lo, hi]`; `None` with
    /// fewer than two points in the window.
    pub fn slope(&self, channel: &str, lo: f64, hi: f64) -> Option<SlopeFit> {
        let (xs, ys) = self.series(channel)?;
        fit_loglog(&xs, &ys, lo, hi)
    }

    /// Largest error of `channel` over the sweep.
    pub fn max_error(&self, channel: &str) -> Option<f64> {
        let (_, ys) = self.series(channel)?;
        ys.into_iter().reduce(f64::max)
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "abscissa,channel,error")?;
        for p in &self.points {
            for (name, e) in self.channels.iter().zip(&p.errors) {
                writeln!(w, "{:.16e},{name},{:.16e}", p.abscissa, e)?;
            }
        }
        Ok(())
    }
}

fn check_decreasing(xs: &[f64], what: &str) -> Result<()> {
    if xs.is_empty() {
        return Err(config(format!("empty {what} list")));
    }
    if xs.windows(2).any(|w| !(w[0] > w[1])) || xs.iter().any(|x| !(*x > 0.0)) {
        return Err(config(format!("{what} list must be positive and strictly decreasing")));
    }
    Ok(())
}

/// Runs `base` once per time step and compares `channels` at `T` against
/// the Gaussian reference.
pub fn run_convergence_tau(
    base: &SchemeConfig,
    taus: &[f64],
    oracle: &GaussianOracleConfig,
    channels: &[Channel],
) -> Result<ConvergenceRecord> {
    check_decreasing(taus, "τ")?;
    base.validate()?;
    if oracle.case.exponent() != base.p || oracle.case.dim() != base.d {
        return Err(config(format!("oracle {:?} does not match p={}, d={}", oracle.case, base.p, base.d)));
    }
    if (oracle.final_time - base.final_time).abs() > 1e-12 {
        return Err(config("oracle and scheme final times differ"));
    }
    for &tau in taus {
        base.with_tau(tau).validate()?;
    }
    oracle.check_resolves(taus[taus.len() - 1])?;
    let grid = base.grid()?;
    let reference = gaussian_oracle(oracle, &grid)?;
    for ch in channels {
        if reference.get(*ch).is_none() {
            return Err(config(format!("no reference for channel {ch}")));
        }
    }
    let phi = gaussian_datum(&grid);
    let points = taus
        .par_iter()
        .map(|&tau| {
            let cfg = base.with_tau(tau);
            let mut scheme = cfg.nested(&phi, channels)?;
            scheme.run(cfg.steps()?)?;
            let errors = channels
                .iter()
                .map(|ch| channel_error(&scheme.channel(*ch)?, reference.get(*ch).expect("checked above")))
                .collect::<Result<Vec<_>>>()?;
            log::info!("τ = {tau}: {errors:?}");
            Ok(ConvergencePoint { abscissa: tau, errors })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceRecord { kind: Abscissa::Tau, channels: channels.iter().map(|c| c.to_string()).collect(), points })
}

/// Compares Lie splitting and the base scheme, both at step `base.tau`,
/// with a Strang reference at step `reference_tau`, for every `ε`.
/// Channels are named `E_LS` and `E_<scheme>`.
pub fn run_convergence_eps(base: &SchemeConfig, epsilons: &[f64], reference_tau: f64) -> Result<ConvergenceRecord> {
    check_decreasing(epsilons, "ε")?;
    base.validate()?;
    if !(reference_tau > 0.0) || reference_tau >= base.tau {
        return Err(config(format!("reference step {reference_tau} must be below τ = {}", base.tau)));
    }
    step_count(base.final_time, reference_tau)?;
    let grid = base.grid()?;
    let phi = gaussian_datum(&grid);
    // The iterates do not depend on ε, so one nested run serves the whole sweep.
    let iterates = match base.scheme {
        SchemeKind::Nqs | SchemeKind::Nts => {
            let mut s = base.nested(&phi, &[])?;
            s.run(base.steps()?)?;
            Some(s)
        }
        _ => None,
    };
    let label = format!("E_{}", base.scheme.label());
    let mut channels = vec!["E_LS".to_string()];
    if base.scheme != SchemeKind::Lie {
        channels.push(label);
    }
    let points = epsilons
        .par_iter()
        .map(|&eps| {
            let reference = splitting_solution(SplittingKind::Strang, base.p, eps, reference_tau, base.final_time, &phi)?;
            let lie = splitting_solution(SplittingKind::Lie, base.p, eps, base.tau, base.final_time, &phi)?;
            let mut errors = vec![l2_error(&lie, &reference)?];
            match (&iterates, base.scheme) {
                (Some(s), _) => errors.push(l2_error(&s.reconstruct(eps)?, &reference)?),
                (None, SchemeKind::Strang) => {
                    let st = splitting_solution(SplittingKind::Strang, base.p, eps, base.tau, base.final_time, &phi)?;
                    errors.push(l2_error(&st, &reference)?);
                }
                _ => {}
            }
            log::info!("ε = {eps}: {errors:?}");
            Ok(ConvergencePoint { abscissa: eps, errors })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceRecord { kind: Abscissa::Eps, channels, points })
}

pub fn write_spectra_csv(records: &[SpectrumRecord], w: &mut impl Write) -> Result<()> {
    writeln!(w, "t,k_shell,n_rad")?;
    for r in records {
        for (k, v) in r.shells.iter().zip(&r.values) {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", r.t, k, v)?;
        }
    }
    Ok(())
}

const FIELD_MAGIC: &[u8; 8] = b"PNLSFLD1";

/// Binary dump: magic `PNLSFLD1`, `u32 d`, `u32 K`, `f64 a`, `u8 repr`
/// (0 physical, 1 frequency), then `(re, im)` pairs in flat order, all
/// little-endian.
pub fn write_field(f: &SpectralField, w: &mut impl Write) -> Result<()> {
    let g = f.grid();
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    w.write_all(&(g.modes() as u32).to_le_bytes())?;
    w.write_all(&g.scale().to_le_bytes())?;
    w.write_all(&[(f.repr() == Repr::Frequency) as u8])?;
    for v in f.data() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field(r: &mut impl Read) -> Result<SpectralField> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(contract("not a field dump"));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let k = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let a = f64::from_le_bytes(b8);
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let repr = match tag[0] {
        0 => Repr::Physical,
        1 => Repr::Frequency,
        t => return Err(contract(format!("unknown representation tag {t}"))),
    };
    let grid = Grid::new(d, a, k)?;
    let mut data = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        r.read_exact(&mut b8)?;
        let re = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        data.push(Complex64::new(re, f64::from_le_bytes(b8)));
    }
    SpectralField::new(grid, data, repr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Deriv;
    use crate::oracles::OracleCase;

    fn quintic(tau: f64) -> SchemeConfig {
        SchemeConfig {
            scheme: SchemeKind::Nqs,
            p: 5,
            d: 1,
            order: 3,
            eps: 1.0,
            tau,
            final_time: 0.2,
            scale: 0.25,
            modes: 64,
            cutoff: CutoffProfile::SharpIndicator,
            dealias: false,
            seed: None,
            nts_engine: NtsEngineChoice::Generic,
        }
    }

    #[test]
    fn config_validation() {
        assert!(quintic(0.05).validate().is_ok());
        assert!(quintic(0.03).validate().is_err());
        assert!(SchemeConfig { order: 5, ..quintic(0.05) }.validate().is_err());
        assert!(SchemeConfig { modes: 48, ..quintic(0.05) }.validate().is_err());
        assert!(SchemeConfig { scheme: SchemeKind::Nts, d: 3, order: 4, ..quintic(0.05) }.validate().is_err());
        assert!(SchemeConfig { eps: -1.0, ..quintic(0.05) }.validate().is_err());
    }

    #[test]
    fn tau_sweep_records_every_channel() {
        let base = quintic(0.05);
        let oracle = GaussianOracleConfig::new(OracleCase::Quintic1D, 0.2);
        let chans = [Channel::value(0), Channel::value(1), Channel::value(2)];
        let rec = run_convergence_tau(&base, &[0.05, 0.025], &oracle, &chans).unwrap();
        assert_eq!(rec.points.len(), 2);
        assert_eq!(rec.channels, ["U0", "U1", "U2"]);
        assert!(rec.max_error("U0").unwrap() < 1e-8);
        let (e1, e2) = (rec.points[0].errors[1], rec.points[1].errors[1]);
        assert!(e2 < e1);
        assert!(rec.slope("U1", 0.0, 1.0).is_some());
        assert!(rec.slope("U1", 0.04, 1.0).is_none());
        assert!(run_convergence_tau(&base, &[0.025, 0.05], &oracle, &chans).is_err());
        assert!(run_convergence_tau(&base, &[0.05], &oracle, &[Channel::new(1, Deriv::Grad)]).is_err());
    }

    #[test]
    fn single_point_sweep_has_no_slope() {
        let oracle = GaussianOracleConfig::new(OracleCase::Quintic1D, 0.2);
        let rec = run_convergence_tau(&quintic(0.05), &[0.05], &oracle, &[Channel::value(1)]).unwrap();
        assert!(rec.slope("U1", 0.0, 1.0).is_none());
    }

    #[test]
    fn eps_sweep_at_zero_coupling_is_exact() {
        let base = SchemeConfig { final_time: 0.1, ..quintic(0.05) };
        let rec = run_convergence_eps(&base, &[0.5, 1e-12], 1e-3).unwrap();
        assert_eq!(rec.channels, ["E_LS", "E_NQS"]);
        let last = &rec.points[1];
        assert!(last.errors.iter().all(|e| *e < 1e-10), "{last:?}");
        assert!(rec.points[0].errors[1] > last.errors[1]);
        assert!(run_convergence_eps(&base, &[0.5], 0.05).is_err());
    }

    #[test]
    fn csv_rows_use_seventeen_digits() {
        let rec = ConvergenceRecord {
            kind: Abscissa::Tau,
            channels: vec!["U1".into()],
            points: vec![ConvergencePoint { abscissa: 0.1, errors: vec![1.0 / 3.0] }],
        };
        let mut out = Vec::new();
        rec.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "abscissa,channel,error\n1.0000000000000001e-1,U1,3.3333333333333331e-1\n");
    }

    #[test]
    fn field_dump_round_trip() {
        let grid = Grid::new(2, 0.5, 8).unwrap();
        let f = gaussian_datum(&grid).in_repr(Repr::Frequency);
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 4 + 8 + 1 + 16 * 64);
        let g = read_field(&mut buf.as_slice()).unwrap();
        assert_eq!(g.repr(), Repr::Frequency);
        assert_eq!(g.data(), f.data());
        buf[0] = b'X';
        assert!(read_field(&mut buf.as_slice()).is_err());
    }
}
