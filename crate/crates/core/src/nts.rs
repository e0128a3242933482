//! Nested Taylor Scheme.
//!
//! On each step the Duhamel integrand `S(t−s)Fₙ(s)` of level `n` is replaced
//! by its Taylor polynomial at the left node. The time derivatives come from
//! the decorated-tree calculus in [`crate::trees`]; they involve spatial
//! derivatives of lower iterates, which the scheme carries as extra channels
//! `∂^α Uₙ` integrated by the same recipe with a shorter expansion
//! ([`taylor_depth`]). `U₀` and its derivatives are exact free flows.
//!
//! Two engines are available. [`NtsEngine::Generic`] derives the channel set
//! and the trees for any `(p, N, d)`. [`NtsEngine::Cubic2d`] is the explicit
//! cubic two-dimensional `N = 4` recipe, kept as an independent check of the
//! generic path.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{channel_error, channel_norm, Channel, Deriv};
use crate::error::{contract, Error, Result};
use crate::nqs::reconstruct_series;
use crate::params::IntegratorParams;
use crate::scheme::{assemble, NestedScheme};
use crate::spectral::{derivative_symbol, Propagator, Repr, SpectralField};
use crate::trees::{initial_iterates, order, taylor_depth, Iterate, MultiIndex, TreeSet, NO_DERIV};

/// Level and per-direction derivative of a carried channel.
pub type ChannelKey = (usize, MultiIndex);

/// Fourth-order `τ³` term of the explicit cubic recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NtsVariant {
    /// Full Hessian contractions.
    #[default]
    Corrected,
    /// Hessian contractions replaced by products of Laplacians.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NtsEngine {
    #[default]
    Generic,
    Cubic2d(NtsVariant),
}

/// One term `c · Π factors` with factors indexing the value table.
#[derive(Debug, Clone)]
struct CompiledTerm {
    coeff: Complex64,
    factors: Vec<(bool, usize)>,
}

#[derive(Debug, Clone)]
struct Plan {
    key: ChannelKey,
    depth: Option<usize>,
    terms: Vec<CompiledTerm>,
}

#[derive(Debug, Clone)]
struct Generic {
    plans: Vec<Plan>,
    /// Value table layout: exact `U₀` derivatives then carried channels.
    slots: Vec<ChannelKey>,
    acc: BTreeMap<ChannelKey, Vec<Complex64>>,
}

#[derive(Debug, Clone)]
struct Cubic2d {
    variant: NtsVariant,
    v1: Vec<Complex64>,
    v1grad: [Vec<Complex64>; 2],
    v1lap: Vec<Complex64>,
    v2: Vec<Complex64>,
    v3: Vec<Complex64>,
}

#[derive(Debug, Clone)]
enum Engine {
    Generic(Generic),
    Cubic2d(Box<Cubic2d>),
}

#[derive(Debug, Clone)]
pub struct NtsScheme {
    params: IntegratorParams,
    prop: Propagator,
    phi_hat: Vec<Complex64>,
    j: usize,
    engine: Engine,
}

fn zero(len: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); len]
}

fn unit(l: usize, k: u8) -> MultiIndex {
    let mut a = NO_DERIV;
    a[l] += k;
    a
}

impl NtsScheme {
    /// Builds the scheme; `outputs` lists extra channels to carry.
    pub fn new(params: IntegratorParams, engine: NtsEngine, phi: &SpectralField, outputs: &[Channel]) -> Result<Self> {
        params.validate()?;
        if params.dealias {
            return Err(Error::Unsupported("dealiasing in the nested Taylor scheme".into()));
        }
        let grid = *phi.grid();
        let prop = Propagator::new(grid, params.tau, params.cutoff)?;
        let phi_hat = phi.in_repr(Repr::Frequency).into_data();
        let engine = match engine {
            NtsEngine::Generic => Engine::Generic(Self::plan_generic(&params, grid.dim(), outputs)?),
            NtsEngine::Cubic2d(variant) => {
                if params.p != 3 || params.order != 4 || grid.dim() != 2 {
                    return Err(Error::Unsupported(format!(
                        "explicit recipe needs p=3, N=4, d=2; got p={}, N={}, d={}",
                        params.p,
                        params.order,
                        grid.dim()
                    )));
                }
                for ch in outputs {
                    Self::cubic_supports(*ch)?;
                }
                let len = grid.len();
                Engine::Cubic2d(Box::new(Cubic2d {
                    variant,
                    v1: zero(len),
                    v1grad: [zero(len), zero(len)],
                    v1lap: zero(len),
                    v2: zero(len),
                    v3: zero(len),
                }))
            }
        };
        Ok(Self { params, prop, phi_hat, j: 0, engine })
    }

    fn cubic_supports(ch: Channel) -> Result<()> {
        let ok = ch.level == 0
            || matches!((ch.level, ch.deriv), (1, Deriv::Value | Deriv::Grad | Deriv::Lap) | (2 | 3, Deriv::Value));
        if ok {
            Ok(())
        } else {
            Err(contract(format!("explicit recipe does not carry {ch}")))
        }
    }

    fn plan_generic(params: &IntegratorParams, dim: usize, outputs: &[Channel]) -> Result<Generic> {
        let (p, big_n) = (params.p, params.order);
        if dim == 3 && big_n > 3 {
            return Err(Error::Unsupported(format!("tree derivatives for N={big_n} in three dimensions")));
        }
        let mut queue: Vec<ChannelKey> = (1..big_n).map(|n| (n, NO_DERIV)).collect();
        for ch in outputs {
            if ch.level >= big_n {
                return Err(contract(format!("channel {ch} beyond order {big_n}")));
            }
            if ch.level == 0 {
                continue;
            }
            for comp in ch.deriv.components(dim) {
                for (alpha, _) in comp {
                    if taylor_depth(big_n, ch.level, order(&alpha)).is_none() {
                        return Err(contract(format!("channel {ch} has no Taylor terms at order {big_n}")));
                    }
                    queue.push((ch.level, alpha));
                }
            }
        }
        let mut initial: BTreeMap<usize, TreeSet<Iterate>> = BTreeMap::new();
        let mut raw: BTreeMap<ChannelKey, (Option<usize>, Vec<(Vec<(bool, ChannelKey)>, Complex64)>)> = BTreeMap::new();
        let mut u0: BTreeSet<MultiIndex> = BTreeSet::new();
        u0.insert(NO_DERIV);
        while let Some(key) = queue.pop() {
            if raw.contains_key(&key) {
                continue;
            }
            let (n, alpha) = key;
            let depth = taylor_depth(big_n, n, order(&alpha));
            let mut terms = Vec::new();
            if let Some(m) = depth {
                if !initial.contains_key(&n) {
                    initial.insert(n, initial_iterates(n, p, dim)?);
                }
                let mut base = initial[&n].clone();
                let tau = params.tau;
                let mut weight = 1.0;
                for beta in 0..=m {
                    if beta > 0 {
                        base = base.derive()?;
                    }
                    weight *= tau / (beta + 1) as f64;
                    let set = if alpha == NO_DERIV { base.clone() } else { base.add_gradient_weight(&alpha) };
                    for (tree, c) in set.iter() {
                        let mut factors = Vec::with_capacity(tree.edges().len());
                        for e in tree.edges() {
                            let fk = (e.sub.0, e.deriv);
                            if fk.0 == 0 {
                                u0.insert(fk.1);
                            } else {
                                queue.push(fk);
                            }
                            factors.push((e.conj, fk));
                        }
                        terms.push((factors, c * weight));
                    }
                }
            } else {
                log::debug!("channel U{n} ∂^{alpha:?} has an empty expansion and stays zero");
            }
            raw.insert(key, (depth, terms));
        }
        let mut slots: Vec<ChannelKey> = u0.iter().map(|a| (0, *a)).collect();
        slots.extend(raw.keys().copied());
        let index: BTreeMap<ChannelKey, usize> = slots.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let plans = raw
            .into_iter()
            .map(|(key, (depth, terms))| Plan {
                key,
                depth,
                terms: terms
                    .into_iter()
                    .map(|(factors, coeff)| CompiledTerm {
                        coeff,
                        factors: factors.into_iter().map(|(conj, k)| (conj, index[&k])).collect(),
                    })
                    .collect(),
            })
            .collect::<Vec<_>>();
        let acc = plans.iter().map(|pl| (pl.key, zero(0))).collect();
        Ok(Generic { plans, slots, acc })
    }

    pub fn params(&self) -> &IntegratorParams {
        &self.params
    }

    /// Carried channels with their Taylor depth (`None`: stays zero).
    pub fn channel_plan(&self) -> Vec<(ChannelKey, Option<usize>, usize)> {
        match &self.engine {
            Engine::Generic(g) => g.plans.iter().map(|p| (p.key, p.depth, p.terms.len())).collect(),
            Engine::Cubic2d(_) => Vec::new(),
        }
    }

    fn exact_u0(&self, alpha: &MultiIndex, t: f64) -> SpectralField {
        let grid = self.prop.grid();
        let coeffs: Vec<Complex64> = if *alpha == NO_DERIV {
            self.phi_hat.clone()
        } else {
            let sym = derivative_symbol(grid, alpha);
            self.phi_hat.iter().zip(&sym).map(|(a, b)| a * b).collect()
        };
        self.prop.materialize(&coeffs, t)
    }

    fn carried(&self, key: &ChannelKey, t: f64) -> Result<SpectralField> {
        if key.0 == 0 {
            return Ok(self.exact_u0(&key.1, t));
        }
        let len = self.prop.grid().len();
        let coeffs: &[Complex64] = match &self.engine {
            Engine::Generic(g) => g
                .acc
                .get(key)
                .ok_or_else(|| contract(format!("channel U{} ∂^{:?} is not carried", key.0, key.1)))?,
            Engine::Cubic2d(c) => match (key.0, key.1) {
                (1, a) if a == NO_DERIV => &c.v1,
                (1, a) if a == unit(0, 1) => &c.v1grad[0],
                (1, a) if a == unit(1, 1) => &c.v1grad[1],
                (2, a) if a == NO_DERIV => &c.v2,
                (3, a) if a == NO_DERIV => &c.v3,
                _ => return Err(contract(format!("channel U{} ∂^{:?} is not carried", key.0, key.1))),
            },
        };
        if coeffs.is_empty() {
            return Ok(SpectralField::zeros(*self.prop.grid(), Repr::Physical));
        }
        debug_assert_eq!(coeffs.len(), len);
        Ok(self.prop.materialize(coeffs, t))
    }

    fn step_generic(&mut self) -> Result<()> {
        let t = self.time();
        let len = self.prop.grid().len();
        let Engine::Generic(g) = &self.engine else { unreachable!() };
        let mut values = Vec::with_capacity(g.slots.len());
        for key in &g.slots {
            values.push(self.carried(key, t)?.into_data());
        }
        let mut increments = Vec::new();
        for plan in &g.plans {
            if plan.depth.is_none() {
                continue;
            }
            let mut out = zero(len);
            for term in &plan.terms {
                let fs: Vec<(bool, &[Complex64])> = term.factors.iter().map(|&(c, i)| (c, values[i].as_slice())).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    let mut v = term.coeff;
                    for (conj, f) in &fs {
                        v *= if *conj { f[i].conj() } else { f[i] };
                    }
                    *o += v;
                }
            }
            let field = SpectralField::new(*self.prop.grid(), out, Repr::Physical)?;
            increments.push((plan.key, self.prop.pull_back(&field, t)));
        }
        let Engine::Generic(g) = &mut self.engine else { unreachable!() };
        let minus_i = Complex64::new(0.0, -1.0);
        for (key, inc) in increments {
            let acc = g.acc.get_mut(&key).expect("planned channel");
            if acc.is_empty() {
                *acc = zero(len);
            }
            for (a, b) in acc.iter_mut().zip(&inc) {
                *a += minus_i * b;
            }
        }
        Ok(())
    }

    fn step_cubic(&mut self) -> Result<()> {
        let t = self.time();
        let tau = self.params.tau;
        let grid = *self.prop.grid();
        let len = grid.len();
        let d = |a: [u8; 2]| self.exact_u0(&[a[0], a[1], 0], t).into_data();
        let u = d([0, 0]);
        let gx = d([1, 0]);
        let gy = d([0, 1]);
        let hxx = d([2, 0]);
        let hxy = d([1, 1]);
        let hyy = d([0, 2]);
        let d30 = d([3, 0]);
        let d12 = d([1, 2]);
        let d21 = d([2, 1]);
        let d03 = d([0, 3]);
        let d40 = d([4, 0]);
        let d22 = d([2, 2]);
        let d04 = d([0, 4]);
        let Engine::Cubic2d(c) = &self.engine else { unreachable!() };
        let variant = c.variant;
        let mat = |v: &[Complex64]| self.prop.materialize(v, t).into_data();
        let w = mat(&c.v1);
        let wx = mat(&c.v1grad[0]);
        let wy = mat(&c.v1grad[1]);
        let wl = mat(&c.v1lap);
        let u2 = mat(&c.v2);

        let i = Complex64::new(0.0, 1.0);
        let mut b1 = zero(len);
        let mut b1x = zero(len);
        let mut b1y = zero(len);
        let mut b1l = zero(len);
        let mut b2 = zero(len);
        let mut b3 = zero(len);
        for k in 0..len {
            let (u, ub) = (u[k], u[k].conj());
            let g = [gx[k], gy[k]];
            let gb = [g[0].conj(), g[1].conj()];
            let h = [[hxx[k], hxy[k]], [hxy[k], hyy[k]]];
            let lap = hxx[k] + hyy[k];
            let lapb = lap.conj();
            let glb = [(d30[k] + d12[k]).conj(), (d21[k] + d03[k]).conj()];
            let bilb = (d40[k] + 2.0 * d22[k] + d04[k]).conj();
            let abs_u2 = u.norm_sqr();
            let abs_g2 = g[0].norm_sqr() + g[1].norm_sqr();
            let gg = g[0] * g[0] + g[1] * g[1];
            let g_glb = g[0] * glb[0] + g[1] * glb[1];

            let e1 = 2.0 * abs_g2 * u + gg * ub + u * u * lapb;
            let e2 = match variant {
                NtsVariant::Corrected => {
                    let mut hh = Complex64::new(0.0, 0.0);
                    let mut hhb = 0.0;
                    let mut g_h_gb = Complex64::new(0.0, 0.0);
                    let mut g_hb_g = Complex64::new(0.0, 0.0);
                    for a in 0..2 {
                        for b in 0..2 {
                            hh += h[a][b] * h[a][b];
                            hhb += h[a][b].norm_sqr();
                            g_h_gb += g[a] * h[a][b] * gb[b];
                            g_hb_g += g[a] * h[a][b].conj() * g[b];
                        }
                    }
                    u * u * bilb + 2.0 * gg * lapb + 4.0 * u * g_glb + hh * ub + 4.0 * g_h_gb + 2.0 * g_hb_g + 2.0 * hhb * u
                }
                NtsVariant::AsPrinted => {
                    lap * lap * ub + 4.0 * lap * abs_g2 + 4.0 * gg * lapb + 2.0 * lap.norm_sqr() * u + u * u * bilb
                        + 4.0 * u * g_glb
                }
            };
            b1[k] = tau * u * u * ub - i * tau * tau * e1 - (2.0 / 3.0) * tau.powi(3) * e2;
            b1x[k] = tau * (2.0 * abs_u2 * g[0] + u * u * gb[0]);
            b1y[k] = tau * (2.0 * abs_u2 * g[1] + u * u * gb[1]);
            b1l[k] = tau * (2.0 * abs_u2 * lap + 4.0 * abs_g2 * u + 2.0 * gg * ub + u * u * lapb);

            let (w, wb) = (w[k], w[k].conj());
            let gw = [wx[k], wy[k]];
            let g_gw = g[0] * gw[0] + g[1] * gw[1];
            let gb_gw = gb[0] * gw[0] + gb[1] * gw[1];
            let g_gwb = g[0] * gw[0].conj() + g[1] * gw[1].conj();
            let big_b2 = abs_u2 * abs_u2 * u
                + 4.0 * abs_g2 * w
                + 4.0 * lapb * u * w
                + 4.0 * ub * g_gw
                + 4.0 * u * gb_gw
                + 2.0 * u * u * wl[k].conj()
                + 2.0 * gg * wb
                + 4.0 * u * g_gwb;
            b2[k] = tau * (2.0 * abs_u2 * w + u * u * wb) - i * (tau * tau / 2.0) * big_b2;
            b3[k] = tau * (2.0 * abs_u2 * u2[k] + u * u * u2[k].conj() + 2.0 * w.norm_sqr() * u + w * w * ub);
        }
        let pull = |b: Vec<Complex64>| -> Result<Vec<Complex64>> {
            Ok(self.prop.pull_back(&SpectralField::new(grid, b, Repr::Physical)?, t))
        };
        let incs = [pull(b1)?, pull(b1x)?, pull(b1y)?, pull(b1l)?, pull(b2)?, pull(b3)?];
        let Engine::Cubic2d(c) = &mut self.engine else { unreachable!() };
        let minus_i = Complex64::new(0.0, -1.0);
        let [v1x, v1y] = &mut c.v1grad;
        let targets: [&mut Vec<Complex64>; 6] = [&mut c.v1, v1x, v1y, &mut c.v1lap, &mut c.v2, &mut c.v3];
        for (acc, inc) in targets.into_iter().zip(&incs) {
            for (a, b) in acc.iter_mut().zip(inc) {
                *a += minus_i * b;
            }
        }
        Ok(())
    }

    fn iterates(&self) -> Result<Vec<SpectralField>> {
        let t = self.time();
        (0..self.params.order).map(|n| self.carried(&(n, NO_DERIV), t)).collect()
    }
}

impl NestedScheme for NtsScheme {
    fn order(&self) -> usize {
        self.params.order
    }

    fn time(&self) -> f64 {
        self.j as f64 * self.params.tau
    }

    fn step(&mut self) -> Result<()> {
        match self.engine {
            Engine::Generic(_) => self.step_generic()?,
            Engine::Cubic2d(_) => self.step_cubic()?,
        }
        self.j += 1;
        Ok(())
    }

    fn channel(&self, ch: Channel) -> Result<Vec<SpectralField>> {
        if ch.level >= self.params.order {
            return Err(contract(format!("channel {ch} beyond order {}", self.params.order)));
        }
        let t = self.time();
        if let Engine::Cubic2d(c) = &self.engine {
            Self::cubic_supports(ch)?;
            if ch.level == 1 && ch.deriv == Deriv::Lap {
                return Ok(vec![self.prop.materialize(&c.v1lap, t)]);
            }
        }
        assemble(ch, self.prop.grid().dim(), |alpha| self.carried(&(ch.level, *alpha), t))
    }

    fn reconstruct(&self, eps: f64) -> Result<SpectralField> {
        if self.params.tau > eps && eps > 0.0 {
            log::warn!("τ = {} exceeds ε = {eps}; the ε-order is only expected for τ ≤ ε", self.params.tau);
        }
        Ok(reconstruct_series(&self.iterates()?, eps))
    }
}

/// Relative discrepancy between the generic and explicit engines per channel.
pub fn cross_validate(
    params: IntegratorParams,
    variant: NtsVariant,
    phi: &SpectralField,
    steps: usize,
) -> Result<Vec<(Channel, f64)>> {
    let channels = [
        Channel::value(1),
        Channel::new(1, Deriv::Grad),
        Channel::new(1, Deriv::Lap),
        Channel::value(2),
        Channel::value(3),
    ];
    let mut generic = NtsScheme::new(params, NtsEngine::Generic, phi, &channels)?;
    let mut explicit = NtsScheme::new(params, NtsEngine::Cubic2d(variant), phi, &channels)?;
    generic.run(steps)?;
    explicit.run(steps)?;
    channels
        .iter()
        .map(|&ch| {
            let a = generic.channel(ch)?;
            let b = explicit.channel(ch)?;
            let scale = channel_norm(&b).max(f64::MIN_POSITIVE);
            Ok((ch, channel_error(&a, &b)? / scale))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{free_flow, Grid};

    fn smooth_2d(grid: Grid) -> SpectralField {
        SpectralField::from_fn(grid, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            Complex64::new((-r2).exp() * (1.0 + 0.3 * x[0]), 0.2 * x[1] * (-r2).exp())
        })
    }

    #[test]
    fn generic_matches_explicit_recipe() {
        let grid = Grid::new(2, 0.5, 32).unwrap();
        let phi = smooth_2d(grid);
        let params = IntegratorParams::new(3, 4, 0.05);
        for (ch, rel) in cross_validate(params, NtsVariant::Corrected, &phi, 4).unwrap() {
            assert!(rel < 1e-10, "{ch}: {rel:e}");
        }
    }

    #[test]
    fn variants_differ_at_second_order_in_tau() {
        // The variants only differ in the τ³ term of U₁, so after a fixed time
        // their gap shrinks like τ².
        let grid = Grid::new(2, 0.5, 32).unwrap();
        let phi = smooth_2d(grid);
        let gap = |tau: f64, steps: usize| {
            let rels = cross_validate(IntegratorParams::new(3, 4, tau), NtsVariant::AsPrinted, &phi, steps).unwrap();
            for (ch, rel) in &rels {
                if ch.level == 1 && ch.deriv != Deriv::Value {
                    assert!(*rel < 1e-10, "{ch}: {rel:e}");
                }
            }
            rels.iter().find(|(c, _)| *c == Channel::value(1)).unwrap().1
        };
        let coarse = gap(0.05, 4);
        let fine = gap(0.025, 8);
        assert!(coarse > 1e-6);
        let ratio = coarse / fine;
        assert!((3.0..5.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn channel_plan_for_cubic_fourth_order() {
        let grid = Grid::new(2, 0.5, 16).unwrap();
        let phi = smooth_2d(grid);
        let s = NtsScheme::new(IntegratorParams::new(3, 4, 0.1), NtsEngine::Generic, &phi, &[]).unwrap();
        let plan = s.channel_plan();
        let keys: BTreeSet<ChannelKey> = plan.iter().map(|(k, _, _)| *k).collect();
        let expect: BTreeSet<ChannelKey> = [
            (1, NO_DERIV),
            (1, [1, 0, 0]),
            (1, [0, 1, 0]),
            (1, [2, 0, 0]),
            (1, [0, 2, 0]),
            (2, NO_DERIV),
            (3, NO_DERIV),
        ]
        .into_iter()
        .collect();
        assert_eq!(keys, expect);
        for (k, depth, _) in plan {
            let want = match k.0 {
                1 if k.1 == NO_DERIV => 2,
                _ => 0,
            };
            let want = if k.0 == 2 { 1 } else { want };
            assert_eq!(depth, Some(want), "{k:?}");
        }
    }

    #[test]
    fn first_level_is_the_filtered_flow() {
        let grid = Grid::new(1, 0.25, 64).unwrap();
        let phi = SpectralField::from_fn(grid, |x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        let mut s = NtsScheme::new(IntegratorParams::new(5, 1, 0.1), NtsEngine::Generic, &phi, &[]).unwrap();
        s.run(3).unwrap();
        let u0 = &s.channel(Channel::value(0)).unwrap()[0];
        let exact = crate::spectral::filtered_flow(&phi, 0.3, 0.1, Default::default()).unwrap();
        assert!(u0.sub(&exact).unwrap().max_abs() < 1e-14);
        assert!(NtsScheme::new(IntegratorParams::new(3, 4, 0.1), NtsEngine::Cubic2d(NtsVariant::Corrected), &phi, &[]).is_err());
    }

    #[test]
    fn taylor_derivatives_match_finite_differences() {
        // G(s) = S(−s)F₁(s) with U₀(s) = S(s)φ; the trees give ∂ₛ^β G = S(−s) Σ c(a)aᵗ.
        // Wide enough in frequency that the quintic products are not aliased,
        // and in space that the datum is periodic to round-off.
        let grid = Grid::new(2, 0.25, 128).unwrap();
        let phi = SpectralField::from_fn(grid, |x| {
            let r2 = (x[0] * x[0] + x[1] * x[1]) / 4.0;
            Complex64::new((-r2).exp() * (1.0 + 0.3 * x[0]), 0.2 * x[1] * (-r2).exp())
        });
        for p in [3usize, 5] {
            let init = initial_iterates(1, p, 2).unwrap();
            let g_at = |s: f64| -> SpectralField {
                let u = free_flow(&phi, s);
                let terms = crate::picard::force_terms(1, p).unwrap();
                let f = crate::picard::force_from_terms(&terms, &[&u], false);
                free_flow(&f, -s)
            };
            let s0 = 0.3;
            let h = 1e-3;
            let u0_derivs: BTreeMap<MultiIndex, Vec<Complex64>> = init
                .derive()
                .unwrap()
                .derive()
                .unwrap()
                .factors()
                .into_iter()
                .map(|(_, a)| (a, crate::spectral::derivative(&free_flow(&phi, s0), &a).into_data()))
                .collect();
            let lookup = |_: &Iterate, a: &MultiIndex| u0_derivs.get(a).map(|v| v.as_slice());
            let mut set = init.clone();
            let (gm, g0, gp) = (g_at(s0 - h), g_at(s0), g_at(s0 + h));
            for beta in 1..=2 {
                set = set.derive().unwrap();
                let val = SpectralField::new(grid, set.evaluate(grid.len(), lookup).unwrap(), Repr::Physical).unwrap();
                let trees = free_flow(&val, -s0);
                let fd: Vec<Complex64> = match beta {
                    1 => gp.data().iter().zip(gm.data()).map(|(a, b)| (a - b) / (2.0 * h)).collect(),
                    _ => gp.data().iter().zip(g0.data()).zip(gm.data()).map(|((a, b), c)| (a - 2.0 * b + c) / (h * h)).collect(),
                };
                let fd = SpectralField::new(grid, fd, Repr::Physical).unwrap();
                let rel = trees.sub(&fd).unwrap().max_abs() / trees.max_abs();
                assert!(rel < 1e-4, "p={p} β={beta}: {rel:e}");
            }
        }
    }
}
