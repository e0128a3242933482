//! Nested Quadrature Scheme.
//!
//! Level `n ≥ 1` integrates its Duhamel formula with the closed Newton–Cotes
//! rule of degree `N − n − 1` (Simpson, trapezoid, left rectangle for
//! `N = 4`). Accumulators are kept in the interaction picture
//! `Vₙ = S(−t) 𝔘ₙ` so a step is a running sum and `𝔘ₙ = S_τ(t)Vₙ` costs one
//! multiplier. Lower orders shift the rules upwards: for `N = 3`, `𝔘₁` uses
//! the trapezoid and `𝔘₂` the left rectangle.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::IntegratorParams;
use crate::picard::{force_from_terms, force_terms, ForceTerm};
use crate::spectral::{Propagator, Repr, SpectralField};

/// Highest order the nested quadrature supports.
pub const MAX_NQS_ORDER: usize = 4;

/// Closed Newton–Cotes rule on the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonCotesRule {
    pub degree: usize,
    pub weights: Vec<f64>,
}

/// Weights for degree 0 (left rectangle), 1 (trapezoid) and 2 (Simpson).
pub fn newton_cotes_weights(degree: usize) -> Result<NewtonCotesRule> {
    let weights = match degree {
        0 => vec![1.0],
        1 => vec![0.5, 0.5],
        2 => vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        m => return Err(Error::Unsupported(format!("Newton–Cotes degree {m} (supported: 0, 1, 2)"))),
    };
    Ok(NewtonCotesRule { degree, weights })
}

/// Rule degree used for level `n` of an order-`N` scheme.
pub fn rule_degree(order: usize, n: usize) -> usize {
    order - n - 1
}

/// Discrete iterates at the current grid time together with the accumulators.
#[derive(Debug, Clone)]
pub struct NqsState {
    j: usize,
    iterates: Vec<SpectralField>,
    accumulators: Vec<Vec<Complex64>>,
    left_cache: Vec<Option<Vec<Complex64>>>,
}

impl NqsState {
    /// Step index `j`.
    pub fn step_index(&self) -> usize {
        self.j
    }

    /// `𝔘ₙ^j` in physical representation.
    pub fn iterate(&self, n: usize) -> &SpectralField {
        &self.iterates[n]
    }

    /// Interaction-picture accumulator `Vₙ^j` (frequency coefficients), `n ≥ 1`.
    pub fn accumulator(&self, n: usize) -> &[Complex64] {
        &self.accumulators[n]
    }
}

/// The scheme with its precomputed flows, forcings and rules.
#[derive(Debug, Clone)]
pub struct NqsScheme {
    params: IntegratorParams,
    prop: Propagator,
    phi_hat: Vec<Complex64>,
    terms: Vec<Vec<ForceTerm>>,
    rules: Vec<NewtonCotesRule>,
    state: NqsState,
}

impl NqsScheme {
    pub fn new(params: IntegratorParams, phi: &SpectralField) -> Result<Self> {
        params.validate()?;
        if params.order > MAX_NQS_ORDER {
            return Err(Error::Unsupported(format!(
                "nested quadrature of order {} (supported up to {MAX_NQS_ORDER})",
                params.order
            )));
        }
        let grid = *phi.grid();
        let prop = Propagator::new(grid, params.tau, params.cutoff)?;
        let phi_hat = phi.in_repr(Repr::Frequency).into_data();
        let mut terms = vec![Vec::new()];
        let mut rules = vec![NewtonCotesRule { degree: 0, weights: vec![] }];
        for n in 1..params.order {
            terms.push(force_terms(n, params.p)?);
            rules.push(newton_cotes_weights(rule_degree(params.order, n))?);
        }
        let mut iterates = vec![prop.materialize(&phi_hat, 0.0)];
        iterates.extend((1..params.order).map(|_| SpectralField::zeros(grid, Repr::Physical)));
        let state = NqsState {
            j: 0,
            iterates,
            accumulators: vec![vec![Complex64::new(0.0, 0.0); grid.len()]; params.order],
            left_cache: vec![None; params.order],
        };
        Ok(Self { params, prop, phi_hat, terms, rules, state })
    }

    pub fn params(&self) -> &IntegratorParams {
        &self.params
    }

    pub fn state(&self) -> &NqsState {
        &self.state
    }

    /// Current time `t_j = jτ`.
    pub fn time(&self) -> f64 {
        self.state.j as f64 * self.params.tau
    }

    fn pulled_force(&self, n: usize, fields: &[SpectralField], t: f64) -> Vec<Complex64> {
        let refs: Vec<&SpectralField> = fields[..n].iter().collect();
        let force = force_from_terms(&self.terms[n], &refs, self.params.dealias);
        self.prop.pull_back(&force, t)
    }

    /// Advances every level from `t_j` to `t_{j+1}`.
    pub fn step(&mut self) {
        let tau = self.params.tau;
        let t = self.time();
        let t1 = t + tau;
        let mut next = Vec::with_capacity(self.params.order);
        next.push(self.prop.materialize(&self.phi_hat, t1));
        for n in 1..self.params.order {
            let rule = &self.rules[n];
            let m = rule.degree;
            let mut incr = vec![Complex64::new(0.0, 0.0); self.prop.grid().len()];
            let mut add = |w: f64, g: &[Complex64]| {
                for (a, b) in incr.iter_mut().zip(g) {
                    *a += w * b;
                }
            };
            let left = match self.state.left_cache[n].take() {
                Some(cached) => cached,
                None => self.pulled_force(n, &self.state.iterates, t),
            };
            add(rule.weights[0], &left);
            if m >= 1 {
                // Interior nodes only ever involve U₀, which is known everywhere.
                for beta in 1..m {
                    debug_assert_eq!(n, 1);
                    let tb = t + beta as f64 * tau / m as f64;
                    let u0 = [self.prop.materialize(&self.phi_hat, tb)];
                    add(rule.weights[beta], &self.pulled_force(1, &u0, tb));
                }
                let right = self.pulled_force(n, &next, t1);
                add(rule.weights[m], &right);
                self.state.left_cache[n] = Some(right);
            }
            let scale = Complex64::new(0.0, -tau);
            for (v, g) in self.state.accumulators[n].iter_mut().zip(&incr) {
                *v += scale * g;
            }
            next.push(self.prop.materialize(&self.state.accumulators[n], t1));
        }
        self.state.iterates = next;
        self.state.j += 1;
    }

    pub fn run(&mut self, steps: usize) {
        for _ in 0..steps {
            self.step();
        }
    }

    /// `Σₙ εⁿ 𝔘ₙ^j` in physical representation.
    pub fn reconstruct(&self, eps: f64) -> SpectralField {
        if self.params.tau > eps && eps > 0.0 {
            log::warn!("τ = {} exceeds ε = {eps}; the ε-order is only expected for τ ≤ ε", self.params.tau);
        }
        reconstruct_series(&self.state.iterates, eps)
    }
}

/// `Σₙ εⁿ Uₙ` for physical iterates.
pub fn reconstruct_series(iterates: &[SpectralField], eps: f64) -> SpectralField {
    let mut out = iterates[0].clone();
    let mut w = 1.0;
    for u in &iterates[1..] {
        w *= eps;
        if w == 0.0 {
            break;
        }
        for (o, v) in out.data_mut().iter_mut().zip(u.data()) {
            *o += w * v;
        }
    }
    out
}
