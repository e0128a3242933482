//! Closed-form Gaussian references for the first Picard iterates.
//!
//! Gaussians stay Gaussian under the free flow, so starting from
//! `φ = e^{-|x|²/2}` every forcing of the cascade is a superposition of
//! Gaussians and `U₁`, `U₂` reduce to one- and two-dimensional time
//! integrals of explicit Gaussians. Those integrals are discretized with a
//! fine rectangle rule; the resulting superposition is accumulated on the
//! distinct values of `|x|²` present on the grid and mapped back at the end.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, Deriv};
use crate::error::{config, Error, Result};
use crate::params::step_count;
use crate::spectral::{Grid, Repr, SpectralField};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Which cascade the reference describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleCase {
    /// `p = 5`, `d = 1`.
    #[serde(rename = "quintic1d")]
    Quintic1D,
    /// `p = 3`, `d = 2`.
    #[serde(rename = "cubic2d")]
    Cubic2D,
}

impl OracleCase {
    pub fn dim(&self) -> usize {
        match self {
            OracleCase::Quintic1D => 1,
            OracleCase::Cubic2D => 2,
        }
    }

    pub fn exponent(&self) -> usize {
        match self {
            OracleCase::Quintic1D => 5,
            OracleCase::Cubic2D => 3,
        }
    }
}

/// Node placement of the rectangle rule used for the time integrals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleRule {
    /// Left endpoints; first order in `τ₀`.
    #[default]
    LeftRectangle,
    /// Cell midpoints; second order in `τ₀`.
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianOracleConfig {
    pub case: OracleCase,
    /// Quadrature step `τ₀`.
    pub tau0: f64,
    pub final_time: f64,
    #[serde(default)]
    pub rule: OracleRule,
}

impl GaussianOracleConfig {
    pub fn new(case: OracleCase, final_time: f64) -> Self {
        let (tau0, rule) = match case {
            OracleCase::Quintic1D => (1e-4, OracleRule::LeftRectangle),
            // A first-order rule at this τ₀ would floor the U₂ error of the
            // coarser schemes under test.
            OracleCase::Cubic2D => (1e-3, OracleRule::Midpoint),
        };
        Self { case, tau0, final_time, rule }
    }

    /// Rejects `τ₀` too coarse to validate a scheme running with step `tau`.
    pub fn check_resolves(&self, tau: f64) -> Result<()> {
        if self.tau0 > tau / 10.0 * (1.0 + 1e-12) {
            return Err(config(format!("oracle step τ₀={} must be ≤ τ/10 = {}", self.tau0, tau / 10.0)));
        }
        Ok(())
    }
}

/// Reference values at the final time, one entry per channel.
#[derive(Debug, Clone)]
pub struct OracleFields {
    pub entries: Vec<(Channel, Vec<SpectralField>)>,
}

impl OracleFields {
    pub fn get(&self, channel: Channel) -> Option<&[SpectralField]> {
        self.entries.iter().find(|(c, _)| *c == channel).map(|(_, v)| v.as_slice())
    }
}

/// Guards a complex square root against jumping across its branch cut
/// between consecutive quadrature nodes.
#[derive(Debug, Clone, Default)]
pub struct BranchTracker {
    prev: Option<Complex64>,
    node: usize,
}

impl BranchTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Principal square root of `w`, failing if the path from the previous
    /// argument crossed the negative real axis.
    pub fn sqrt(&mut self, w: Complex64) -> Result<Complex64> {
        if let Some(prev) = self.prev {
            let crossed = prev.re < 0.0 && w.re < 0.0 && (prev.im >= 0.0) != (w.im >= 0.0);
            if crossed {
                return Err(Error::Branch { node: self.node, from: format!("{prev}"), to: format!("{w}") });
            }
        }
        self.prev = Some(w);
        self.node += 1;
        Ok(w.sqrt())
    }
}

fn lambda(t: f64) -> Complex64 {
    Complex64::new(1.0, 2.0 * t)
}

/// Quadrature nodes and weights of one rectangle rule on `[0, t]` with `count` cells.
fn nodes(rule: OracleRule, t: f64, count: usize) -> impl Iterator<Item = (f64, f64)> {
    let h = if count == 0 { 0.0 } else { t / count as f64 };
    (0..count).map(move |i| {
        let s = match rule {
            OracleRule::LeftRectangle => i as f64 * h,
            OracleRule::Midpoint => (i as f64 + 0.5) * h,
        };
        (s, h)
    })
}

/// Gaussians `c (p₀ + p₁|x|²) e^{-b|x|²}` accumulated on the distinct radii of a grid.
struct RadialSum {
    grid: Grid,
    dx2: f64,
    keys: usize,
}

impl RadialSum {
    fn new(grid: Grid) -> Self {
        let half = grid.modes() / 2;
        let keys = match grid.dim() {
            1 => half + 1,
            d => d * half * half + 1,
        };
        Self { grid, dx2: grid.spacing().powi(2), keys }
    }

    fn zeros(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.keys]
    }

    /// Adds `c (p₀ + p₁ r²) e^{-b r²}` on every key, stopping once a
    /// decaying Gaussian has fallen below double-precision relevance.
    fn add(&self, acc: &mut [Complex64], c: Complex64, b: Complex64, poly: Option<(Complex64, Complex64)>) {
        const RESET: usize = 256;
        const NEGLIGIBLE: f64 = 1e-18;
        let bd = b * self.dx2;
        let decaying = b.re > 0.0;
        if self.grid.dim() == 1 {
            // key k ↔ r² = k² dx²; e_{k+1} = e_k e^{-b(2k+1)dx²}
            let q = (-2.0 * bd).exp();
            let mut e = ONE;
            let mut ratio = (-bd).exp();
            for (k, a) in acc.iter_mut().enumerate() {
                let w = match poly {
                    None => c,
                    Some((p0, p1)) => c * (p0 + p1 * ((k * k) as f64 * self.dx2)),
                };
                *a += w * e;
                e *= ratio;
                ratio *= q;
                if decaying && e.norm_sqr() < NEGLIGIBLE * NEGLIGIBLE && poly.is_none() {
                    break;
                }
            }
        } else {
            // key n ↔ r² = n dx²
            let q = (-bd).exp();
            let mut e = ONE;
            for (n, a) in acc.iter_mut().enumerate() {
                if n % RESET == 0 && n > 0 {
                    e = (-bd * n as f64).exp();
                }
                let w = match poly {
                    None => c,
                    Some((p0, p1)) => c * (p0 + p1 * (n as f64 * self.dx2)),
                };
                *a += w * e;
                e *= q;
                if decaying && e.norm_sqr() < NEGLIGIBLE * NEGLIGIBLE && poly.is_none() {
                    break;
                }
            }
        }
    }

    fn key(&self, flat: usize) -> usize {
        let idx = self.grid.unflatten(flat);
        let half = self.grid.modes() as i64 / 2;
        let mut n = 0i64;
        for a in 0..self.grid.dim() {
            let k = idx[a] as i64 - half;
            n += k * k;
        }
        if self.grid.dim() == 1 {
            (n as f64).sqrt().round() as usize
        } else {
            n as usize
        }
    }

    /// Field with value `acc[key]`, optionally multiplied by the coordinate `x_axis`.
    fn field(&self, acc: &[Complex64], axis: Option<usize>) -> SpectralField {
        let data = (0..self.grid.len())
            .map(|flat| {
                let v = acc[self.key(flat)];
                match axis {
                    None => v,
                    Some(a) => v * self.grid.position(flat)[a],
                }
            })
            .collect();
        SpectralField::new(self.grid, data, Repr::Physical).expect("grid-sized buffer")
    }
}

/// Sums per-outer-node contributions in a fixed order, in parallel chunks.
fn reduce_outer<F>(count: usize, keys: usize, channels: usize, f: F) -> Result<Vec<Vec<Complex64>>>
where
    F: Fn(usize, &mut [Vec<Complex64>]) -> Result<()> + Sync,
{
    const CHUNK: usize = 64;
    let chunks: Vec<usize> = (0..count.div_ceil(CHUNK)).collect();
    let partials: Vec<Result<Vec<Vec<Complex64>>>> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = vec![vec![Complex64::new(0.0, 0.0); keys]; channels];
            for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
                f(i, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![vec![Complex64::new(0.0, 0.0); keys]; channels];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part?) {
            for (a, b) in t.iter_mut().zip(p) {
                *a += b;
            }
        }
    }
    Ok(total)
}

/// Evaluates the reference iterates at `cfg.final_time` on `grid`.
pub fn gaussian_oracle(cfg: &GaussianOracleConfig, grid: &Grid) -> Result<OracleFields> {
    if grid.dim() != cfg.case.dim() {
        return Err(config(format!("{:?} needs a {}-dimensional grid", cfg.case, cfg.case.dim())));
    }
    if !(cfg.tau0 > 0.0) {
        return Err(config("oracle step must be positive"));
    }
    let count = step_count(cfg.final_time, cfg.tau0)?;
    match cfg.case {
        OracleCase::Quintic1D => quintic_1d(cfg, grid, count, -1.0),
        OracleCase::Cubic2D => cubic_2d(cfg, grid, count),
    }
}

/// `U₀` of the one-dimensional case on a grid.
pub fn free_gaussian_1d(grid: &Grid, t: f64) -> SpectralField {
    let l = lambda(t);
    let amp = l.sqrt().inv();
    SpectralField::from_fn(*grid, |x| amp * (-(x[0] * x[0]) / (2.0 * l)).exp())
}

/// One-dimensional quintic references. `sign` is the sign of the `U₁`
/// exponent; the Duhamel formula gives `-1`.
pub(crate) fn quintic_1d(cfg: &GaussianOracleConfig, grid: &Grid, count: usize, sign: f64) -> Result<OracleFields> {
    let t = cfg.final_time;
    let sum = RadialSum::new(*grid);
    let z = |s: f64| 2.0 / (1.0 + 4.0 * s * s) + (2.0 * lambda(s)).inv();
    let amp = |s: f64| {
        let l = lambda(s);
        l.sqrt().inv() / l.norm_sqr()
    };
    let outer: Vec<(f64, f64)> = nodes(cfg.rule, t, count).collect();

    let mut tracker = BranchTracker::new();
    let mut u1 = sum.zeros();
    for &(s, h) in &outer {
        let zs = z(s);
        let d = ONE + 4.0 * I * (t - s) * zs;
        let root = tracker.sqrt(d)?;
        let c = -I * h * amp(s) / root;
        sum.add(&mut u1, c, -sign * zs / d, None);
    }

    let rule = cfg.rule;
    let u2 = reduce_outer(outer.len(), sum.keys, 1, |i, acc| {
        let (s, hs) = outer[i];
        let ls = lambda(s);
        let g = 1.0 / (1.0 + 4.0 * s * s);
        let w1 = -3.0 * hs / ls.norm_sqr();
        let w2 = 2.0 * hs / (ls.norm() * ls);
        let inner_count = match rule {
            OracleRule::LeftRectangle => i,
            OracleRule::Midpoint => i + 1,
        };
        let mut tr_l = BranchTracker::new();
        let mut tr_th = BranchTracker::new();
        let mut tr_d1 = BranchTracker::new();
        let mut tr_d2 = BranchTracker::new();
        for (r, hr) in nodes(rule, s, inner_count) {
            let lr = lambda(r);
            let zr = z(r);
            let theta = ONE + 4.0 * I * (s - r) * zr;
            let a = hr / (lr.norm_sqr() * tr_l.sqrt(lr)?);
            let sq_theta = tr_th.sqrt(theta)?;
            let zeta = zr / theta + 2.0 * g;
            let d1 = ONE + 4.0 * I * (t - s) * zeta;
            sum.add(&mut acc[0], w1 * a / (sq_theta * tr_d1.sqrt(d1)?), zeta / d1, None);
            let zeta_t = zr.conj() / theta.conj() + g + ls.inv();
            let d2 = ONE + 4.0 * I * (t - s) * zeta_t;
            sum.add(&mut acc[0], w2 * a.conj() / (sq_theta.conj() * tr_d2.sqrt(d2)?), zeta_t / d2, None);
        }
        Ok(())
    })?;

    Ok(OracleFields {
        entries: vec![
            (Channel::value(0), vec![free_gaussian_1d(grid, t)]),
            (Channel::value(1), vec![sum.field(&u1, None)]),
            (Channel::value(2), vec![sum.field(&u2[0], None)]),
        ],
    })
}

/// Closed forms of `U₀` and its derivatives in the two-dimensional case.
pub fn free_gaussian_2d(grid: &Grid, t: f64) -> Vec<(Channel, Vec<SpectralField>)> {
    let l = lambda(t);
    let w = (2.0 * l).inv();
    let li = l.inv();
    let make = |f: &dyn Fn(&[f64], f64, Complex64) -> Complex64| {
        SpectralField::from_fn(*grid, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            f(x, r2, (-w * r2).exp())
        })
    };
    let grad = |axis: usize| make(&|x, _, e| -x[axis] * li * li * e);
    let gradlap = |axis: usize| make(&|x, r2, e| li * x[axis] * (16.0 * w * w - 8.0 * w * w * w * r2) * e);
    vec![
        (Channel::value(0), vec![make(&|_, _, e| li * e)]),
        (Channel::new(0, Deriv::Grad), vec![grad(0), grad(1)]),
        (Channel::new(0, Deriv::Lap), vec![make(&|_, r2, e| li * li * (r2 * li - 2.0) * e)]),
        (Channel::new(0, Deriv::GradLap), vec![gradlap(0), gradlap(1)]),
        (
            Channel::new(0, Deriv::BiLap),
            vec![make(&|_, r2, e| {
                li * (32.0 * w * w - 64.0 * w * w * w * r2 + 16.0 * w * w * w * w * r2 * r2) * e
            })],
        ),
    ]
}

fn cubic_2d(cfg: &GaussianOracleConfig, grid: &Grid, count: usize) -> Result<OracleFields> {
    let t = cfg.final_time;
    let sum = RadialSum::new(*grid);
    let nu = |s: f64| 1.0 / (1.0 + 4.0 * s * s) + (2.0 * lambda(s)).inv();
    let amp = |s: f64| {
        let l = lambda(s);
        (l.norm_sqr() * l).inv()
    };
    let outer: Vec<(f64, f64)> = nodes(cfg.rule, t, count).collect();

    // U₁, the radial part of ∇U₁ (times x), ΔU₁
    let mut u1 = sum.zeros();
    let mut g1 = sum.zeros();
    let mut l1 = sum.zeros();
    for &(s, h) in &outer {
        let n = nu(s);
        let d = ONE + 4.0 * I * (t - s) * n;
        let c = h * amp(s);
        let b = n / d;
        sum.add(&mut u1, -I * c / d, b, None);
        sum.add(&mut g1, 2.0 * I * c * n / (d * d), b, None);
        sum.add(&mut l1, 4.0 * I * c * n / (d * d), b, Some((ONE, -b)));
    }

    let rule = cfg.rule;
    let u2 = reduce_outer(outer.len(), sum.keys, 1, |i, acc| {
        let (s, hs) = outer[i];
        let ls = lambda(s);
        let g = 1.0 / (1.0 + 4.0 * s * s);
        let w1 = -2.0 * hs / ls.norm_sqr();
        let w2 = hs / (ls * ls);
        let inner_count = match rule {
            OracleRule::LeftRectangle => i,
            OracleRule::Midpoint => i + 1,
        };
        for (r, hr) in nodes(rule, s, inner_count) {
            let nr = nu(r);
            let ups = ONE + 4.0 * I * (s - r) * nr;
            let a = hr * amp(r);
            let mu = nr / ups + g;
            let d1 = ONE + 4.0 * I * (t - s) * mu;
            sum.add(&mut acc[0], w1 * a / (ups * d1), mu / d1, None);
            let mu_t = nr.conj() / ups.conj() + ls.inv();
            let d2 = ONE + 4.0 * I * (t - s) * mu_t;
            sum.add(&mut acc[0], w2 * a.conj() / (ups.conj() * d2), mu_t / d2, None);
        }
        Ok(())
    })?;

    let mut entries = free_gaussian_2d(grid, t);
    entries.push((Channel::value(1), vec![sum.field(&u1, None)]));
    entries.push((Channel::new(1, Deriv::Grad), vec![sum.field(&g1, Some(0)), sum.field(&g1, Some(1))]));
    entries.push((Channel::new(1, Deriv::Lap), vec![sum.field(&l1, None)]));
    entries.push((Channel::value(2), vec![sum.field(&u2[0], None)]));
    Ok(OracleFields { entries })
}
