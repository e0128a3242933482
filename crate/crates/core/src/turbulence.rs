//! Random-phase data and radial wave-action spectra.
//!
//! The torus has side `L`, i.e. grid scale `a = 2π/L`, so the lattice is
//! `(2π/L)ℤ^d` and shells of thickness `2π/L` are indexed by the integer
//! radius `|m|` rounded to nearest (ties to the lower shell). Spectra use
//! Fourier-series coefficients `Û(k) = K^{−d/2}·c_m` of the unitary DFT
//! coefficients `c_m`.
//!
//! The experiment's wavenumber parameters (`k_s`, `σ`, the fit window) are
//! mode numbers, i.e. measured in units of `2π/L`; records carry physical
//! shell centres `𝗄 = j·2π/L`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Error, Result};
use crate::fit::{fit_loglog, SlopeFit};
use crate::nqs::NqsScheme;
use crate::params::{step_count, IntegratorParams};
use crate::spectral::{CutoffProfile, Grid, Repr, SpectralField};

/// Amplitude law and phases of the random-phase datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomPhaseSpec {
    /// Torus side `L`.
    pub l: f64,
    /// Radius of the spectral bump `k_s`, in mode numbers.
    pub k_s: f64,
    /// Width `σ`, in mode numbers.
    pub sigma: f64,
    pub seed: u64,
}

impl RandomPhaseSpec {
    pub fn scale(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.l
    }

    pub fn grid(&self, dim: usize, modes: usize) -> Result<Grid> {
        Grid::new(dim, self.scale(), modes)
    }

    /// `φ(k) = exp(−(|k|−k_s)²/σ²) / (L²|k|²)` for the squared mode number
    /// `k2 = |m|²`, with `|k|² := 1` at the origin.
    pub fn amplitude(&self, k2: f64) -> f64 {
        let r = k2.sqrt();
        let k2 = if k2 == 0.0 { 1.0 } else { k2 };
        (-(r - self.k_s).powi(2) / (self.sigma * self.sigma)).exp() / (self.l * self.l * k2)
    }
}

fn check_lattice(spec: &RandomPhaseSpec, grid: &Grid) -> Result<()> {
    if (grid.scale() - spec.scale()).abs() > 1e-12 * spec.scale() {
        return Err(contract(format!("grid scale {} does not match the lattice 2π/L = {}", grid.scale(), spec.scale())));
    }
    Ok(())
}

/// Frequency field with Fourier moduli `√φ(k)` and uniform phases.
pub fn rp_initial_data(spec: &RandomPhaseSpec, grid: &Grid) -> Result<SpectralField> {
    check_lattice(spec, grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let norm = (grid.len() as f64).sqrt();
    let data = (0..grid.len())
        .map(|flat| {
            let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            Complex64::from_polar(norm * spec.amplitude(integer_radius_sq(grid, flat) as f64).sqrt(), theta)
        })
        .collect();
    SpectralField::new(*grid, data, Repr::Frequency)
}

/// Radial spectrum at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRecord {
    pub t: f64,
    /// Shell centres `𝗄 = j·2π/L`.
    pub shells: Vec<f64>,
    pub values: Vec<f64>,
}

/// Shell of the lattice point with integer radius² `m2`.
pub fn shell_index(m2: u64) -> usize {
    let r = (m2 as f64).sqrt();
    let f = r.floor();
    if r - f > 0.5 {
        f as usize + 1
    } else {
        f as usize
    }
}

fn integer_radius_sq(grid: &Grid, flat: usize) -> u64 {
    let idx = grid.unflatten(flat);
    (0..grid.dim()).map(|ax| grid.signed_mode(idx[ax]).unsigned_abs().pow(2)).sum()
}

fn coefficients(f: &SpectralField) -> Result<&[Complex64]> {
    if f.repr() != Repr::Frequency {
        return Err(contract("spectra need frequency representation"));
    }
    Ok(f.data())
}

/// Per-mode density `|Û₁|² + 2Re(conj(Û₀)Û₂)`.
pub fn mode_density(u0: &SpectralField, u1: &SpectralField, u2: &SpectralField) -> Result<Vec<f64>> {
    u0.grid().ensure_same(u1.grid())?;
    u0.grid().ensure_same(u2.grid())?;
    let w = 1.0 / u0.grid().len() as f64;
    let (a, b, c) = (coefficients(u0)?, coefficients(u1)?, coefficients(u2)?);
    Ok((0..a.len()).map(|i| w * (b[i].norm_sqr() + 2.0 * (a[i].conj() * c[i]).re)).collect())
}

/// `n^rad(𝗄) = (L/2π) Σ_{k∈Γ_𝗄} [|Û₁|² + 2Re(conj(Û₀)Û₂)]`.
pub fn radial_spectrum(u0: &SpectralField, u1: &SpectralField, u2: &SpectralField, l: f64, t: f64) -> Result<SpectrumRecord> {
    let density = mode_density(u0, u1, u2)?;
    Ok(shell_sums(u0.grid(), &density, l, t))
}

/// Bins a per-mode density into shells with prefactor `L/2π`.
pub fn shell_sums(grid: &Grid, density: &[f64], l: f64, t: f64) -> SpectrumRecord {
    let two_pi = 2.0 * std::f64::consts::PI;
    let half = (grid.modes() / 2) as u64;
    let top = shell_index(grid.dim() as u64 * half * half);
    let mut values = vec![0.0; top + 1];
    for (flat, d) in density.iter().enumerate() {
        values[shell_index(integer_radius_sq(grid, flat))] += d;
    }
    for v in &mut values {
        *v *= l / two_pi;
    }
    let shells = (0..=top).map(|j| j as f64 * two_pi / l).collect();
    SpectrumRecord { t, shells, values }
}

/// `‖Re(conj(Û₀)Û₁)‖ / ‖|Û₀|²‖` in `ℓ²` over modes.
pub fn first_order_ratio(u0: &SpectralField, u1: &SpectralField) -> Result<f64> {
    u0.grid().ensure_same(u1.grid())?;
    let (a, b) = (coefficients(u0)?, coefficients(u1)?);
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x.conj() * y).re.powi(2)).sum();
    let den: f64 = a.iter().map(|x| x.norm_sqr().powi(2)).sum();
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurbulenceConfig {
    pub spec: RandomPhaseSpec,
    pub modes: usize,
    pub eps: f64,
    pub tau: f64,
    pub final_time: f64,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_p")]
    pub p: usize,
    /// Steps between recorded spectra.
    pub record_every: usize,
    /// Shell window of the power-law fit, in mode numbers.
    pub fit_window: (f64, f64),
    #[serde(default = "default_memory")]
    pub memory_limit_mb: u64,
    #[serde(default)]
    pub cutoff: CutoffProfile,
}

fn default_order() -> usize {
    3
}

fn default_p() -> usize {
    3
}

fn default_memory() -> u64 {
    4096
}

impl TurbulenceConfig {
    /// Desk-scale defaults: `K = 2⁸`, `L = 8π`, `ε = 0.1`, `τ = 0.1`, `T = 20`.
    pub fn desk(seed: u64) -> Self {
        Self {
            spec: RandomPhaseSpec { l: 8.0 * std::f64::consts::PI, k_s: 15.0, sigma: 1.0, seed },
            modes: 256,
            eps: 0.1,
            tau: 0.1,
            final_time: 20.0,
            order: 3,
            p: 3,
            record_every: 20,
            // from three widths above the bump to the projector edge 2/(a√τ) ≈ 25.3
            fit_window: (18.0, 25.0),
            memory_limit_mb: default_memory(),
            cutoff: CutoffProfile::default(),
        }
    }

    /// Full-scale run: `K = 2¹⁰`, `L = 16π`, `T = 100`.
    pub fn full(seed: u64) -> Self {
        Self {
            spec: RandomPhaseSpec { l: 16.0 * std::f64::consts::PI, ..Self::desk(seed).spec },
            modes: 1024,
            final_time: 100.0,
            record_every: 100,
            fit_window: (18.0, 50.0),
            ..Self::desk(seed)
        }
    }

    /// Resident field footprint of a run, in MiB.
    pub fn memory_estimate_mb(&self) -> u64 {
        // iterates, accumulators, cached endpoint forcings and scratch
        let fields = (4 * self.order + 4) as u64;
        (fields * (self.modes * self.modes) as u64 * 16).div_ceil(1024 * 1024)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TurbulenceOutput {
    pub spectra: Vec<SpectrumRecord>,
    /// `(t, ratio)` of the first-order diagnostic at each recorded time.
    pub diagnostics: Vec<(f64, f64)>,
    pub max_diagnostic: f64,
    /// Power-law fit of the final spectrum over the configured window.
    pub fit: Option<SlopeFit>,
}

/// Runs NQS on random-phase data and records spectra every `record_every` steps.
pub fn turbulence_run(cfg: &TurbulenceConfig) -> Result<TurbulenceOutput> {
    let estimate = cfg.memory_estimate_mb();
    if estimate > cfg.memory_limit_mb {
        return Err(Error::Memory { estimate_mb: estimate, limit_mb: cfg.memory_limit_mb });
    }
    if cfg.record_every == 0 {
        return Err(config("record_every must be positive"));
    }
    if cfg.order < 3 {
        return Err(config("the spectrum needs U₀, U₁ and U₂ (order ≥ 3)"));
    }
    let grid = cfg.spec.grid(2, cfg.modes)?;
    let steps = step_count(cfg.final_time, cfg.tau)?;
    let phi = rp_initial_data(&cfg.spec, &grid)?;
    let mut params = IntegratorParams::new(cfg.p, cfg.order, cfg.tau);
    params.cutoff = cfg.cutoff;
    let mut scheme = NqsScheme::new(params, &phi)?;
    let mut out = TurbulenceOutput { spectra: Vec::new(), diagnostics: Vec::new(), max_diagnostic: 0.0, fit: None };
    let record = |s: &NqsScheme, out: &mut TurbulenceOutput| -> Result<()> {
        let f: Vec<SpectralField> = (0..3).map(|n| s.state().iterate(n).in_repr(Repr::Frequency)).collect();
        let t = s.time();
        out.spectra.push(radial_spectrum(&f[0], &f[1], &f[2], cfg.spec.l, t)?);
        if t > 0.0 {
            let r = first_order_ratio(&f[0], &f[1])?;
            out.diagnostics.push((t, r));
            out.max_diagnostic = out.max_diagnostic.max(r);
        }
        Ok(())
    };
    record(&scheme, &mut out)?;
    for j in 1..=steps {
        scheme.step();
        if j % cfg.record_every == 0 || j == steps {
            record(&scheme, &mut out)?;
            log::info!("turbulence t = {:.3}", scheme.time());
        }
    }
    if let Some(last) = out.spectra.last() {
        let a = cfg.spec.scale();
        out.fit = fit_loglog(&last.shells, &last.values, cfg.fit_window.0 * a, cfg.fit_window.1 * a);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_spec(seed: u64) -> RandomPhaseSpec {
        RandomPhaseSpec { l: 8.0 * std::f64::consts::PI, k_s: 3.0, sigma: 0.5, seed }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = small_spec(7);
        let grid = spec.grid(2, 32).unwrap();
        let a = rp_initial_data(&spec, &grid).unwrap();
        let b = rp_initial_data(&spec, &grid).unwrap();
        assert_eq!(a.data(), b.data());
        let c = rp_initial_data(&small_spec(8), &grid).unwrap();
        assert_ne!(a.data(), c.data());
        for (x, y) in a.data().iter().zip(c.data()) {
            assert!((x.norm() - y.norm()).abs() <= 1e-15 * x.norm().max(1e-300));
        }
        assert!(rp_initial_data(&spec, &Grid::new(2, 0.3, 32).unwrap()).is_err());
    }

    #[test]
    fn moduli_decay_away_from_the_bump() {
        let spec = small_spec(1);
        let grid = spec.grid(2, 64).unwrap();
        let f = rp_initial_data(&spec, &grid).unwrap();
        let peak = f.data().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (flat, v) in f.data().iter().enumerate() {
            let m2 = integer_radius_sq(&grid, flat) as f64;
            if (m2.sqrt() - spec.k_s).abs() > 10.0 * spec.sigma {
                assert!(v.norm() < 1e-12 * peak);
            }
        }
    }

    #[test]
    fn ensemble_mean_of_moduli_matches_the_law() {
        let grid = small_spec(0).grid(2, 32).unwrap();
        let n = grid.len() as f64;
        let mut mean = vec![0.0; grid.len()];
        for seed in 0..200 {
            let f = rp_initial_data(&small_spec(seed), &grid).unwrap();
            for (m, v) in mean.iter_mut().zip(f.data()) {
                *m += v.norm_sqr() / n / 200.0;
            }
        }
        let spec = small_spec(0);
        for (flat, m) in mean.iter().enumerate() {
            let m2 = integer_radius_sq(&grid, flat);
            if shell_index(m2) == 3 {
                let want = spec.amplitude(m2 as f64);
                assert!((m - want).abs() <= 0.15 * want);
            }
        }
    }

    #[test]
    fn shell_tie_rule() {
        assert_eq!(shell_index(0), 0);
        assert_eq!(shell_index(1), 1);
        assert_eq!(shell_index(2), 1);
        assert_eq!(shell_index(3), 2);
        assert_eq!(shell_index(6), 2);
        assert_eq!(shell_index(7), 3);
    }

    #[test]
    fn zero_and_single_mode() {
        let spec = small_spec(0);
        let grid = spec.grid(2, 16).unwrap();
        let z = SpectralField::zeros(grid, Repr::Frequency);
        let rec = radial_spectrum(&z, &z, &z, spec.l, 0.0).unwrap();
        assert!(rec.values.iter().all(|v| *v == 0.0));
        let mut u1 = z.clone();
        // mode m = (3, 4): radius 5
        let flat = 3 * 16 + 4;
        u1.data_mut()[flat] = Complex64::new(16.0, 0.0);
        let rec = radial_spectrum(&z, &u1, &z, spec.l, 0.0).unwrap();
        for (j, v) in rec.values.iter().enumerate() {
            let want = if j == 5 { spec.l / (2.0 * std::f64::consts::PI) } else { 0.0 };
            assert!((v - want).abs() < 1e-14, "{j}: {v}");
        }
        assert!((rec.shells[5] - 5.0 * spec.scale()).abs() < 1e-14);
        assert!(radial_spectrum(&z.in_repr(Repr::Physical), &u1, &z, spec.l, 0.0).is_err());
    }

    fn field(grid: Grid, re: &[f64], im: &[f64]) -> SpectralField {
        SpectralField::new(grid, re.iter().zip(im).map(|(a, b)| Complex64::new(*a, *b)).collect(), Repr::Frequency).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn spectrum_matches_brute_force_and_is_complete(
            v in prop::collection::vec(-4i32..5, 6 * 64),
        ) {
            // small integers keep every sum exact
            let spec = small_spec(0);
            let grid = spec.grid(2, 8).unwrap();
            let re: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            let (a, rest) = re.split_at(128);
            let (b, c) = rest.split_at(128);
            let u0 = field(grid, &a[..64], &a[64..]);
            let u1 = field(grid, &b[..64], &b[64..]);
            let u2 = field(grid, &c[..64], &c[64..]);
            let rec = radial_spectrum(&u0, &u1, &u2, spec.l, 0.0).unwrap();
            let pref = spec.l / (2.0 * std::f64::consts::PI);
            let mut brute = vec![0.0; rec.values.len()];
            let mut total = 0.0;
            for i in 0..8i64 {
                for j in 0..8i64 {
                    let mi = if i >= 4 { i - 8 } else { i };
                    let mj = if j >= 4 { j - 8 } else { j };
                    let r = ((mi * mi + mj * mj) as f64).sqrt();
                    let mut shell = r.floor();
                    if r - shell > 0.5 { shell += 1.0; }
                    let flat = (i * 8 + j) as usize;
                    let d = (u1.data()[flat].norm_sqr() + 2.0 * (u0.data()[flat].conj() * u2.data()[flat]).re) / 64.0;
                    brute[shell as usize] += d;
                    total += d;
                }
            }
            for (x, y) in rec.values.iter().zip(&brute) {
                prop_assert_eq!(*x, y * pref);
            }
            let shelled: f64 = rec.values.iter().sum::<f64>() / pref;
            prop_assert_eq!(shelled, total);
        }
    }

    #[test]
    fn memory_guard() {
        let mut cfg = TurbulenceConfig::full(1);
        cfg.memory_limit_mb = 1;
        assert!(matches!(turbulence_run(&cfg), Err(Error::Memory { .. })));
        assert!(TurbulenceConfig::full(1).memory_estimate_mb() < 4096);
    }

    #[test]
    fn spectra_are_eps_independent_and_reproducible() {
        let mut cfg = TurbulenceConfig::desk(3);
        cfg.spec = small_spec(3);
        cfg.modes = 32;
        cfg.final_time = 0.4;
        cfg.record_every = 2;
        cfg.fit_window = (1.0, 2.0);
        let a = turbulence_run(&cfg).unwrap();
        cfg.eps = 0.7;
        let b = turbulence_run(&cfg).unwrap();
        assert_eq!(a.spectra, b.spectra);
        assert_eq!(a.spectra.len(), 3);
        assert_eq!(a.diagnostics.len(), 2);
    }
}
