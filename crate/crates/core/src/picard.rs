//! Nonlinear forcings of the Picard cascade.
//!
//! The `n`-th iterate solves `i∂ₜUₙ + ΔUₙ = Fₙ` with
//! `Fₙ = Σ U_{n₁} conj(U_{n₂}) U_{n₃} ⋯ U_{n_p}` over ordered `p`-tuples with
//! `n₁ + ⋯ + n_p = n − 1`, conjugating the even positions.

use num_complex::Complex64;

use crate::error::{config, contract, Result};
use crate::spectral::{Grid, Repr, SpectralField};

/// One monomial of `Fₙ`: iterate indices of the plain and conjugated
/// factors (both sorted) and how many ordered tuples collapse onto it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ForceTerm {
    pub plain: Vec<usize>,
    pub conj: Vec<usize>,
    pub count: u64,
}

pub(crate) fn check_exponent(p: usize) -> Result<()> {
    if p < 3 || p % 2 == 0 {
        return Err(config(format!("nonlinearity exponent must be odd and ≥ 3, got {p}")));
    }
    Ok(())
}

/// Binomial coefficient, exact for the small arguments used here.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Calls `f` on every ordered tuple of `parts` non-negative integers summing to `total`.
pub fn for_each_composition(total: usize, parts: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(rem: usize, slot: usize, buf: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if slot + 1 == buf.len() {
            buf[slot] = rem;
            f(buf);
            return;
        }
        for v in 0..=rem {
            buf[slot] = v;
            rec(rem - v, slot + 1, buf, f);
        }
    }
    let mut buf = vec![0; parts];
    rec(total, 0, &mut buf, f);
}

/// Monomials of `Fₙ` for exponent `p`, in a fixed order.
pub fn force_terms(n: usize, p: usize) -> Result<Vec<ForceTerm>> {
    check_exponent(p)?;
    if n == 0 {
        return Err(contract("forcings start at n = 1"));
    }
    let mut terms: std::collections::BTreeMap<(Vec<usize>, Vec<usize>), u64> = Default::default();
    let mut tuples = 0u64;
    for_each_composition(n - 1, p, &mut |tuple| {
        tuples += 1;
        let mut plain: Vec<usize> = tuple.iter().step_by(2).copied().collect();
        let mut conj: Vec<usize> = tuple.iter().skip(1).step_by(2).copied().collect();
        plain.sort_unstable();
        conj.sort_unstable();
        *terms.entry((plain, conj)).or_default() += 1;
    });
    let expected = binomial((n - 1 + p - 1) as u64, (p - 1) as u64);
    assert_eq!(tuples, expected, "composition count mismatch");
    Ok(terms.into_iter().map(|((plain, conj), count)| ForceTerm { plain, conj, count }).collect())
}

/// The iterates `U₀ … U_{n−1}` (physical representation) feeding `Fₙ`.
#[derive(Debug, Clone)]
pub struct IterateStack {
    p: usize,
    entries: Vec<SpectralField>,
}

impl IterateStack {
    pub fn new(p: usize, entries: Vec<SpectralField>) -> Result<Self> {
        check_exponent(p)?;
        let first = entries.first().ok_or_else(|| contract("iterate stack is empty"))?;
        let grid = *first.grid();
        for e in &entries {
            grid.ensure_same(e.grid())?;
            if e.repr() != Repr::Physical {
                return Err(contract("iterate stack entries must be physical"));
            }
        }
        Ok(Self { p, entries })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn grid(&self) -> &Grid {
        self.entries[0].grid()
    }

    pub fn entries(&self) -> &[SpectralField] {
        &self.entries
    }
}

/// `Fₙ` evaluated pointwise from the stack.
pub fn nonlinear_force(n: usize, stack: &IterateStack) -> Result<SpectralField> {
    nonlinear_force_with(n, stack, false)
}

/// `Fₙ` with optional 2/3-rule dealiasing of the factors and the product.
pub fn nonlinear_force_with(n: usize, stack: &IterateStack, dealias: bool) -> Result<SpectralField> {
    if n == 0 || n > stack.entries.len() {
        return Err(contract(format!(
            "F_{n} needs iterates U_0..U_{} but the stack holds {}",
            n.saturating_sub(1),
            stack.entries.len()
        )));
    }
    let terms = force_terms(n, stack.p)?;
    let refs: Vec<&SpectralField> = stack.entries[..n].iter().collect();
    Ok(force_from_terms(&terms, &refs, dealias))
}

/// Evaluates precomputed monomials on physical fields.
pub(crate) fn force_from_terms(terms: &[ForceTerm], fields: &[&SpectralField], dealias: bool) -> SpectralField {
    let grid = *fields[0].grid();
    let data = if dealias {
        let truncated: Vec<SpectralField> = fields.iter().map(|f| two_thirds_truncation(f)).collect();
        let slices: Vec<&[Complex64]> = truncated.iter().map(|f| f.data()).collect();
        evaluate_terms(terms, &slices, grid.len())
    } else {
        let slices: Vec<&[Complex64]> = fields.iter().map(|f| f.data()).collect();
        evaluate_terms(terms, &slices, grid.len())
    };
    let out = SpectralField::new(grid, data, Repr::Physical).expect("grid-sized buffer");
    if dealias {
        two_thirds_truncation(&out)
    } else {
        out
    }
}

pub(crate) fn evaluate_terms(terms: &[ForceTerm], fields: &[&[Complex64]], len: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for term in terms {
        let c = term.count as f64;
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = Complex64::new(c, 0.0);
            for &k in &term.plain {
                v *= fields[k][i];
            }
            for &k in &term.conj {
                v *= fields[k][i].conj();
            }
            *o += v;
        }
    }
    out
}

/// Zeroes every mode with some `|mᵢ| > K/3`.
pub fn two_thirds_truncation(f: &SpectralField) -> SpectralField {
    let grid = *f.grid();
    let limit = grid.modes() as i64 / 3;
    f.map_frequency(|flat, v| {
        let idx = grid.unflatten(flat);
        if (0..grid.dim()).any(|a| grid.signed_mode(idx[a]).abs() > limit) {
            Complex64::new(0.0, 0.0)
        } else {
            v
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(grid: Grid, rng: &mut ChaCha8Rng) -> SpectralField {
        let data = (0..grid.len())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        SpectralField::new(grid, data, Repr::Physical).unwrap()
    }

    fn stack(p: usize, depth: usize, seed: u64) -> IterateStack {
        let grid = Grid::new(1, 1.0, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        IterateStack::new(p, (0..depth).map(|_| random(grid, &mut rng)).collect()).unwrap()
    }

    fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
        let scale = b.iter().map(|v| v.norm()).fold(1e-300, f64::max);
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
    }

    fn check(n: usize, p: usize, expected: impl Fn(&[Complex64]) -> Complex64) {
        let s = stack(p, n, 7 + n as u64 + p as u64);
        let got = nonlinear_force(n, &s).unwrap();
        let want: Vec<_> = (0..16)
            .map(|i| {
                let vals: Vec<_> = s.entries().iter().map(|e| e.data()[i]).collect();
                expected(&vals)
            })
            .collect();
        assert!(max_rel(got.data(), &want) < 1e-14, "n={n} p={p}");
    }

    #[test]
    fn closed_forms() {
        check(1, 3, |u| u[0].norm_sqr() * u[0]);
        check(1, 5, |u| u[0].norm_sqr().powi(2) * u[0]);
        check(2, 3, |u| 2.0 * u[0].norm_sqr() * u[1] + u[0] * u[0] * u[1].conj());
        check(2, 5, |u| 3.0 * u[0].norm_sqr().powi(2) * u[1] + 2.0 * u[0].norm_sqr() * u[0] * u[0] * u[1].conj());
        check(3, 3, |u| {
            2.0 * u[0].norm_sqr() * u[2] + u[0] * u[0] * u[2].conj() + 2.0 * u[1].norm_sqr() * u[0] + u[1] * u[1] * u[0].conj()
        });
        check(3, 5, |u| {
            let (a, b, c) = (u[0], u[1], u[2]);
            let a2 = a.norm_sqr();
            // plain slots 3, conjugated slots 2; one index 2 or two indices 1
            3.0 * a2 * a2 * c
                + 2.0 * a2 * a * a * c.conj()
                + 3.0 * a2 * a.conj() * b * b
                + 6.0 * a2 * a * b.norm_sqr()
                + 1.0 * a * a * a * b.conj() * b.conj()
        });
    }

    #[test]
    fn term_counts_match_multisets() {
        for p in [3usize, 5, 7] {
            for n in 1..=4 {
                let total: u64 = force_terms(n, p).unwrap().iter().map(|t| t.count).sum();
                assert_eq!(total, binomial((n - 1 + p - 1) as u64, (p - 1) as u64));
            }
        }
    }

    #[test]
    fn vanishes_without_first_iterate() {
        let grid = Grid::new(1, 1.0, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = IterateStack::new(3, vec![random(grid, &mut rng), SpectralField::zeros(grid, Repr::Physical)]).unwrap();
        assert_eq!(nonlinear_force(2, &s).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = stack(3, 2, 0);
        assert!(nonlinear_force(3, &s).is_err());
        assert!(nonlinear_force(0, &s).is_err());
        assert!(IterateStack::new(4, s.entries().to_vec()).is_err());
    }

    #[test]
    fn dealiasing_removes_top_third() {
        let grid = Grid::new(1, 1.0, 24usize.next_power_of_two()).unwrap();
        let f = SpectralField::from_fn(grid, |x| Complex64::from_polar(1.0, 4.0 * x[0]));
        let s = IterateStack::new(3, vec![f]).unwrap();
        // |e^{4ix}|² e^{4ix} keeps mode 4 ≤ 32/3
        let out = nonlinear_force_with(1, &s, true).unwrap();
        assert!((out.data()[0].norm() - 1.0).abs() < 1e-12);
        let g = SpectralField::from_fn(grid, |x| Complex64::from_polar(1.0, 12.0 * x[0]));
        let s = IterateStack::new(3, vec![g]).unwrap();
        assert!(nonlinear_force_with(1, &s, true).unwrap().max_abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn homogeneous_of_degree_p(seed in any::<u64>(), c in 0.2f64..3.0, n in 1usize..4, p in prop::sample::select(vec![3usize, 5])) {
                let s = stack(p, n, seed);
                let scaled = IterateStack::new(p, s.entries().iter().map(|e| e.scale(Complex64::new(c, 0.0))).collect()).unwrap();
                let a = nonlinear_force(n, &s).unwrap().scale(Complex64::new(c.powi(p as i32), 0.0));
                let b = nonlinear_force(n, &scaled).unwrap();
                prop_assert!(max_rel(b.data(), a.data()) < 1e-13);
            }
        }
    }
}
