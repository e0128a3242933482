//! Decorated planted trees indexing the Taylor expansion of the forcings.
//!
//! A planted tree `a` stands for an iterate contribution `−i∫S(t−s) aᵗ(s) ds`
//! where `aᵗ` is the product of the subtrees grafted on the root node
//! (conjugated along dotted edges). Time derivatives of `S(t−s)aᵗ` are
//! generated by three rules acting on the first floor:
//!
//! * **A**: `−2i ∂ₗbₑ ∂ₗb_{e'}` for two distinct factors and each direction `l`;
//! * **B**: `−2i ∂ₗ²b̄ₑ` for a conjugated factor;
//! * **C**: replace a factor by its own forcing, `−i` (plain) or `+i`
//!   (conjugated, the conjugation propagating to the spliced edges), the
//!   factor's derivatives being distributed over the spliced edges.
//!
//! Derivatives are kept per direction, so rule A and B terms carry the
//! contractions `∇b·∇b'` and `Δb̄` explicitly as sums over directions.
//!
//! Subtrees come in two flavours: [`Tree`] keeps the full recursive structure
//! (used to reproduce and inspect the tree sets), [`Iterate`] collapses a
//! subtree to the iterate `U_n` it sums into (used by the scheme, which only
//! ever needs the values of `∂^α U_n`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;

use crate::error::{contract, Result};
use crate::picard::{check_exponent, for_each_composition, force_terms};
use crate::spectral::MAX_DIM;

/// Per-direction derivative orders.
pub type MultiIndex = [u8; MAX_DIM];

pub const NO_DERIV: MultiIndex = [0; MAX_DIM];

pub fn order(alpha: &MultiIndex) -> usize {
    alpha.iter().map(|&a| a as usize).sum()
}

/// Full subtree: the initial datum or a node with `p` upgoing edges.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tree {
    Leaf,
    Node(Vec<Edge>),
}

/// Edge to a child, dotted when the child enters conjugated.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub conj: bool,
    pub child: Tree,
}

impl Tree {
    /// Node with canonically sorted children.
    pub fn node(mut children: Vec<Edge>) -> Tree {
        children.sort();
        Tree::Node(children)
    }

    /// Index `n` of the iterate the tree contributes to.
    pub fn level(&self) -> usize {
        match self {
            Tree::Leaf => 0,
            Tree::Node(ch) => 1 + ch.iter().map(|e| e.child.level()).sum::<usize>(),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            Tree::Leaf => 1,
            Tree::Node(ch) => ch.iter().map(|e| e.child.leaves()).sum(),
        }
    }

    /// Every node has `p` children, `(p−1)/2` of them dotted.
    pub fn is_well_formed(&self, p: usize) -> bool {
        match self {
            Tree::Leaf => true,
            Tree::Node(ch) => {
                ch.len() == p
                    && ch.iter().filter(|e| e.conj).count() == (p - 1) / 2
                    && ch.iter().all(|e| e.child.is_well_formed(p))
            }
        }
    }

    /// The undecorated shape.
    pub fn shape(&self) -> Shape {
        match self {
            Tree::Leaf => Shape::Leaf,
            Tree::Node(ch) => Shape::node(ch.iter().map(|e| e.child.shape()).collect()),
        }
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tree::Leaf => write!(f, "•"),
            Tree::Node(ch) => {
                write!(f, "[")?;
                for (i, e) in ch.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    if e.conj {
                        write!(f, "~")?;
                    }
                    write!(f, "{}", e.child)?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Bare tree: structure without dots or weights.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Shape {
    Leaf,
    Node(Vec<Shape>),
}

impl Shape {
    pub fn node(mut children: Vec<Shape>) -> Shape {
        children.sort();
        Shape::Node(children)
    }

    pub fn leaves(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Node(ch) => ch.iter().map(Shape::leaves).sum(),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Leaf => write!(f, "•"),
            Shape::Node(ch) => {
                write!(f, "[")?;
                for (i, c) in ch.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// A subtree hanging from a first-floor edge.
pub trait Subtree: Clone + Ord + fmt::Debug + fmt::Display {
    fn level(&self) -> usize;
    /// Forcing of the subtree as `(children, multiplicity)` products;
    /// empty for the free flow of the initial datum.
    fn cut(&self, p: usize) -> Result<Vec<(Vec<(bool, Self)>, u64)>>;
}

impl Subtree for Tree {
    fn level(&self) -> usize {
        Tree::level(self)
    }

    fn cut(&self, _p: usize) -> Result<Vec<(Vec<(bool, Self)>, u64)>> {
        Ok(match self {
            Tree::Leaf => Vec::new(),
            Tree::Node(ch) => vec![(ch.iter().map(|e| (e.conj, e.child.clone())).collect(), 1)],
        })
    }
}

/// A subtree collapsed to the iterate `U_n` it sums into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Iterate(pub usize);

impl fmt::Display for Iterate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "U{}", self.0)
    }
}

impl Subtree for Iterate {
    fn level(&self) -> usize {
        self.0
    }

    fn cut(&self, p: usize) -> Result<Vec<(Vec<(bool, Self)>, u64)>> {
        if self.0 == 0 {
            return Ok(Vec::new());
        }
        Ok(force_terms(self.0, p)?
            .into_iter()
            .map(|t| {
                let mut ch: Vec<(bool, Iterate)> = t.plain.iter().map(|&k| (false, Iterate(k))).collect();
                ch.extend(t.conj.iter().map(|&k| (true, Iterate(k))));
                (ch, t.count)
            })
            .collect())
    }
}

/// First-floor edge: a possibly conjugated, differentiated subtree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FirstEdge<S> {
    pub conj: bool,
    pub deriv: MultiIndex,
    pub sub: S,
}

/// The product `aᵗ = Π ∂^{αₑ} bₑ` over the first floor of a planted tree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DecoratedTree<S> {
    edges: Vec<FirstEdge<S>>,
}

impl<S: Subtree> DecoratedTree<S> {
    pub fn new(mut edges: Vec<FirstEdge<S>>) -> Self {
        edges.sort();
        Self { edges }
    }

    pub fn edges(&self) -> &[FirstEdge<S>] {
        &self.edges
    }

    /// Number of rule C applications, from the first-floor width `p + q(p−1)`.
    pub fn cuts(&self, p: usize) -> usize {
        (self.edges.len() - p) / (p - 1)
    }

    /// Total first-floor weight `Σ|αₑ|`.
    pub fn total_weight(&self) -> usize {
        self.edges.iter().map(|e| order(&e.deriv)).sum()
    }

    /// Index `n` of the iterate whose forcing the tree expands.
    pub fn level(&self, p: usize) -> usize {
        1 + self.cuts(p) + self.edges.iter().map(|e| e.sub.level()).sum::<usize>()
    }

    pub fn dotted(&self) -> usize {
        self.edges.iter().filter(|e| e.conj).count()
    }
}

impl DecoratedTree<Tree> {
    pub fn leaves(&self) -> usize {
        self.edges.iter().map(|e| e.sub.leaves()).sum()
    }

    /// The bare planted tree.
    pub fn shape(&self) -> Shape {
        Shape::node(self.edges.iter().map(|e| e.sub.shape()).collect())
    }

    /// Collapses every subtree to its iterate.
    pub fn collapse(&self) -> DecoratedTree<Iterate> {
        DecoratedTree::new(
            self.edges
                .iter()
                .map(|e| FirstEdge { conj: e.conj, deriv: e.deriv, sub: Iterate(e.sub.level()) })
                .collect(),
        )
    }
}

impl<S: Subtree> fmt::Display for DecoratedTree<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, e) in self.edges.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            if e.conj {
                write!(f, "~")?;
            }
            if e.deriv != NO_DERIV {
                write!(f, "∂{:?}", e.deriv)?;
            }
            write!(f, "{}", e.sub)?;
        }
        write!(f, "]")
    }
}

/// A linear combination of decorated trees: the terms of `∂^α ∂ₛ^β (S(t−s)Fₙ)`
/// (without the outer flow).
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSet<S> {
    pub n: usize,
    pub beta: usize,
    pub extra: MultiIndex,
    pub p: usize,
    pub dim: usize,
    members: BTreeMap<DecoratedTree<S>, Complex64>,
}

impl<S: Subtree> TreeSet<S> {
    fn empty_like(&self, beta: usize, extra: MultiIndex) -> Self {
        Self { n: self.n, beta, extra, p: self.p, dim: self.dim, members: BTreeMap::new() }
    }

    fn insert(&mut self, tree: DecoratedTree<S>, c: Complex64) {
        let slot = self.members.entry(tree).or_insert(Complex64::new(0.0, 0.0));
        *slot += c;
    }

    fn prune(mut self) -> Self {
        self.members.retain(|_, c| *c != Complex64::new(0.0, 0.0));
        self
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DecoratedTree<S>, &Complex64)> {
        self.members.iter()
    }

    pub fn coefficient(&self, tree: &DecoratedTree<S>) -> Option<Complex64> {
        self.members.get(tree).copied()
    }

    /// One more time derivative: applies rules A, B and C to every member.
    pub fn derive(&self) -> Result<Self> {
        let mut out = self.empty_like(self.beta + 1, self.extra);
        let minus_2i = Complex64::new(0.0, -2.0);
        for (tree, &c) in &self.members {
            let edges = &tree.edges;
            // A
            for e in 0..edges.len() {
                for f in e + 1..edges.len() {
                    for l in 0..self.dim {
                        let mut new = edges.clone();
                        new[e].deriv[l] += 1;
                        new[f].deriv[l] += 1;
                        out.insert(DecoratedTree::new(new), c * minus_2i);
                    }
                }
            }
            // B
            for e in 0..edges.len() {
                if !edges[e].conj {
                    continue;
                }
                for l in 0..self.dim {
                    let mut new = edges.clone();
                    new[e].deriv[l] += 2;
                    out.insert(DecoratedTree::new(new), c * minus_2i);
                }
            }
            // C
            for e in 0..edges.len() {
                let edge = &edges[e];
                let sign = if edge.conj { Complex64::new(0.0, 1.0) } else { Complex64::new(0.0, -1.0) };
                for (children, mult) in edge.sub.cut(self.p)? {
                    for (split, weight) in leibniz(&edge.deriv, children.len(), self.dim) {
                        let mut new: Vec<FirstEdge<S>> =
                            edges.iter().enumerate().filter(|(i, _)| *i != e).map(|(_, x)| x.clone()).collect();
                        for ((conj, sub), deriv) in children.iter().zip(split) {
                            new.push(FirstEdge { conj: *conj != edge.conj, deriv, sub: sub.clone() });
                        }
                        out.insert(DecoratedTree::new(new), c * sign * (mult as f64 * weight));
                    }
                }
            }
        }
        Ok(out.prune())
    }

    /// Distributes the extra derivative `alpha` over the first floor (Leibniz rule).
    pub fn add_gradient_weight(&self, alpha: &MultiIndex) -> Self {
        let mut extra = self.extra;
        for l in 0..MAX_DIM {
            extra[l] += alpha[l];
        }
        let mut out = self.empty_like(self.beta, extra);
        for (tree, &c) in &self.members {
            for (split, weight) in leibniz(alpha, tree.edges.len(), self.dim) {
                let mut new = tree.edges.clone();
                for (e, d) in new.iter_mut().zip(split) {
                    for l in 0..MAX_DIM {
                        e.deriv[l] += d[l];
                    }
                }
                out.insert(DecoratedTree::new(new), c * weight);
            }
        }
        out.prune()
    }

    /// Every factor `(subtree, conj, derivative)` referenced by the set.
    pub fn factors(&self) -> BTreeSet<(S, MultiIndex)> {
        self.members.keys().flat_map(|t| t.edges.iter().map(|e| (e.sub.clone(), e.deriv))).collect()
    }

    /// `Σ c(a) aᵗ` pointwise, reading factor values from `lookup`.
    pub fn evaluate<'a>(
        &self,
        len: usize,
        lookup: impl Fn(&S, &MultiIndex) -> Option<&'a [Complex64]>,
    ) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); len];
        for (tree, &c) in &self.members {
            evaluate_tree(tree, c, &lookup, &mut out)?;
        }
        Ok(out)
    }
}

/// Adds `c·aᵗ` to `out`, conjugating dotted factors.
pub fn evaluate_tree<'a, S: Subtree>(
    tree: &DecoratedTree<S>,
    c: Complex64,
    lookup: &impl Fn(&S, &MultiIndex) -> Option<&'a [Complex64]>,
    out: &mut [Complex64],
) -> Result<()> {
    let mut factors = Vec::with_capacity(tree.edges.len());
    for e in &tree.edges {
        let v = lookup(&e.sub, &e.deriv)
            .ok_or_else(|| contract(format!("no value for factor {} with derivative {:?}", e.sub, e.deriv)))?;
        if v.len() != out.len() {
            return Err(contract("factor length mismatch"));
        }
        factors.push((e.conj, v));
    }
    for (i, o) in out.iter_mut().enumerate() {
        let mut v = c;
        for (conj, f) in &factors {
            v *= if *conj { f[i].conj() } else { f[i] };
        }
        *o += v;
    }
    Ok(())
}

/// All ways to split `alpha` over `parts` factors, with multinomial weights.
pub fn leibniz(alpha: &MultiIndex, parts: usize, dim: usize) -> Vec<(Vec<MultiIndex>, f64)> {
    let mut out = vec![(vec![NO_DERIV; parts], 1.0)];
    for l in 0..dim {
        let total = alpha[l] as usize;
        if total == 0 {
            continue;
        }
        let mut next = Vec::new();
        for (split, w) in &out {
            for_each_composition(total, parts, &mut |comp| {
                let mut s = split.clone();
                let mut multinom = factorial(total);
                for (e, &k) in comp.iter().enumerate() {
                    s[e][l] += k as u8;
                    multinom /= factorial(k);
                }
                next.push((s, w * multinom));
            });
        }
        out = next;
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// `𝒯ₙ`: full trees with `p + (p−1)(n−1)` leaves and their grafting multiplicities.
pub fn grow_trees(n: usize, p: usize) -> Result<Vec<(Tree, u64)>> {
    check_exponent(p)?;
    if n == 0 {
        return Err(contract("tree sets start at n = 1"));
    }
    let mut levels: Vec<Vec<(Tree, u64)>> = vec![vec![(Tree::Leaf, 1)]];
    for m in 1..=n {
        let mut acc: BTreeMap<Tree, u64> = BTreeMap::new();
        for_each_composition(m - 1, p, &mut |tuple| {
            let mut choice = vec![0usize; p];
            loop {
                let mut children = Vec::with_capacity(p);
                let mut c = 1u64;
                for (pos, (&lvl, &k)) in tuple.iter().zip(&choice).enumerate() {
                    let (t, ct) = &levels[lvl][k];
                    c *= ct;
                    children.push(Edge { conj: pos % 2 == 1, child: t.clone() });
                }
                *acc.entry(Tree::node(children)).or_default() += c;
                // odometer over the candidate trees of each slot
                let mut slot = 0;
                loop {
                    if slot == p {
                        return;
                    }
                    choice[slot] += 1;
                    if choice[slot] < levels[tuple[slot]].len() {
                        break;
                    }
                    choice[slot] = 0;
                    slot += 1;
                }
            }
        });
        levels.push(acc.into_iter().collect());
    }
    Ok(levels.pop().unwrap_or_default())
}

/// `𝒯ₙ⁰` in full-tree form: the first floor of each tree of `𝒯ₙ`.
pub fn initial_full(n: usize, p: usize, dim: usize) -> Result<TreeSet<Tree>> {
    let mut set = TreeSet { n, beta: 0, extra: NO_DERIV, p, dim, members: BTreeMap::new() };
    for (tree, c) in grow_trees(n, p)? {
        let Tree::Node(children) = tree else { unreachable!("n ≥ 1 trees have a root node") };
        let edges = children.into_iter().map(|e| FirstEdge { conj: e.conj, deriv: NO_DERIV, sub: e.child }).collect();
        set.insert(DecoratedTree::new(edges), Complex64::new(c as f64, 0.0));
    }
    Ok(set)
}

/// `𝒯ₙ⁰` with subtrees collapsed to iterates: the monomials of `Fₙ`.
pub fn initial_iterates(n: usize, p: usize, dim: usize) -> Result<TreeSet<Iterate>> {
    let mut set = TreeSet { n, beta: 0, extra: NO_DERIV, p, dim, members: BTreeMap::new() };
    for (children, c) in Iterate(n).cut(p)? {
        let edges = children.into_iter().map(|(conj, sub)| FirstEdge { conj, deriv: NO_DERIV, sub }).collect();
        set.insert(DecoratedTree::new(edges), Complex64::new(c as f64, 0.0));
    }
    Ok(set)
}

/// `𝒯ₙ^{β,α}`: `β` derivations of `initial` followed by the extra weight `alpha`.
pub fn tree_set<S: Subtree>(initial: &TreeSet<S>, beta: usize, alpha: &MultiIndex) -> Result<TreeSet<S>> {
    let mut set = initial.clone();
    for _ in 0..beta {
        set = set.derive()?;
    }
    Ok(if *alpha == NO_DERIV { set } else { set.add_gradient_weight(alpha) })
}

/// `𝒮ₙ^β`: bare shapes reachable from `𝒮ₙ` with at most `β` cuts.
pub fn shapes(n: usize, p: usize, beta: usize) -> Result<BTreeSet<Shape>> {
    let mut frontier: BTreeSet<Shape> = grow_trees(n, p)?.iter().map(|(t, _)| t.shape()).collect();
    let mut all = frontier.clone();
    for _ in 0..beta {
        let mut next = BTreeSet::new();
        for s in &frontier {
            let Shape::Node(children) = s else { continue };
            for (i, c) in children.iter().enumerate() {
                if let Shape::Node(grand) = c {
                    let mut new: Vec<Shape> = children.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x.clone()).collect();
                    new.extend(grand.iter().cloned());
                    next.insert(Shape::node(new));
                }
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    Ok(all)
}

/// Outcome of checking `Σ|αₑ| = 2(β−q)` over generated full-tree sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WeightCheck {
    /// Trees inspected.
    pub checked: usize,
    /// `(n, β, tree)` of every violation, rendered.
    pub violations: Vec<(usize, usize, String)>,
}

/// Checks the weight identity for every tree of `𝒯ₙ^β`, `n ≤ n_max`, `β ≤ beta_max`.
pub fn check_weight_identity(p: usize, n_max: usize, beta_max: usize) -> Result<WeightCheck> {
    let mut out = WeightCheck::default();
    for n in 1..=n_max {
        let mut set = initial_full(n, p, 1)?;
        for beta in 0..=beta_max {
            if beta > 0 {
                set = set.derive()?;
            }
            for (tree, _) in set.iter() {
                out.checked += 1;
                let q = tree.cuts(p);
                if q > beta || tree.total_weight() != 2 * (beta - q) || tree.level(p) != n {
                    out.violations.push((n, beta, tree.to_string()));
                }
            }
        }
    }
    Ok(out)
}

/// Taylor order `mₙ^k` of the channel `∇^k Uₙ` in an order-`N` scheme.
pub fn level_orders(order: usize, n: usize, k: usize) -> Result<i64> {
    if n >= order {
        return Err(contract(format!("level n={n} outside 0..{order}")));
    }
    let (big_n, n_i, k_i) = (order as i64, n as i64, k as i64);
    if k == 0 {
        return Ok(big_n - n_i - 1);
    }
    if k_i > 2 * (big_n - n_i - 2) {
        return Err(contract(format!("derivative order k={k} exceeds 2(N−n−2) for N={order}, n={n}")));
    }
    Ok(big_n - n_i - (k_i + 1) / 2 - 2)
}

/// Number of Taylor terms minus one for a channel, `None` when the expansion is empty.
pub fn taylor_depth(order: usize, n: usize, k: usize) -> Option<usize> {
    match level_orders(order, n, k) {
        Ok(m) if m >= 0 => Some(m as usize),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn first_tree_sets() {
        let t1 = grow_trees(1, 3).unwrap();
        assert_eq!(t1.len(), 1);
        assert_eq!(t1[0].1, 1);
        assert_eq!(t1[0].0.to_string(), "[• • ~•]");
        let t2 = grow_trees(2, 3).unwrap();
        assert_eq!(t2.len(), 2);
        let plain = t2.iter().find(|(t, _)| matches!(t, Tree::Node(ch) if ch.iter().any(|e| !e.conj && e.child != Tree::Leaf))).unwrap();
        assert_eq!(plain.1, 2);
        let t3 = grow_trees(3, 3).unwrap();
        assert_eq!(t3.len(), 6);
        let shapes3: BTreeSet<Shape> = t3.iter().map(|(t, _)| t.shape()).collect();
        assert_eq!(shapes3.len(), 2);
        for n in 1..=4 {
            for p in [3, 5] {
                for (t, _) in grow_trees(n, p).unwrap() {
                    assert!(t.is_well_formed(p));
                    assert_eq!(t.level(), n);
                    assert_eq!(t.leaves(), p + (p - 1) * (n - 1));
                }
            }
        }
    }

    #[test]
    fn coefficient_sums_count_ordered_tuples() {
        // Σ c(a) over 𝒯ₙ counts the ordered grafting sequences.
        for p in [3usize, 5] {
            let mut totals = vec![1u64];
            for n in 1..=4 {
                let mut expected = 0u64;
                for_each_composition(n - 1, p, &mut |tuple| {
                    expected += tuple.iter().map(|&k| totals[k]).product::<u64>();
                });
                let got: u64 = grow_trees(n, p).unwrap().iter().map(|(_, c)| c).sum();
                assert_eq!(got, expected);
                totals.push(got);
            }
        }
    }

    #[test]
    fn shape_sets() {
        let s2 = shapes(2, 3, 0).unwrap();
        assert_eq!(s2.len(), 1);
        for beta in 1..=4 {
            let s = shapes(2, 3, beta).unwrap();
            assert_eq!(s.len(), 2);
            assert!(s.contains(&Shape::node(vec![Shape::Leaf; 5])));
        }
        assert_eq!(shapes(3, 3, 0).unwrap().len(), 2);
        let s31 = shapes(3, 3, 1).unwrap();
        assert_eq!(s31.len(), 3);
        for beta in 2..=5 {
            let s = shapes(3, 3, beta).unwrap();
            assert_eq!(s.len(), 4);
            assert!(s.contains(&Shape::node(vec![Shape::Leaf; 7])));
            assert!(s.is_superset(&s31));
        }
        assert_eq!(shapes(1, 3, 3).unwrap().len(), 1);
    }

    #[test]
    fn level_order_table() {
        assert_eq!(level_orders(4, 1, 0).unwrap(), 2);
        assert_eq!(level_orders(4, 1, 2).unwrap(), 0);
        assert_eq!(level_orders(4, 0, 4).unwrap(), 0);
        assert_eq!(level_orders(4, 0, 1).unwrap(), 1);
        assert_eq!(level_orders(4, 3, 0).unwrap(), 0);
        assert!(level_orders(4, 1, 3).is_err());
        assert!(level_orders(4, 4, 0).is_err());
        assert_eq!(taylor_depth(4, 2, 1), None);
        assert_eq!(taylor_depth(4, 1, 1), Some(0));
        for order in 1..=6 {
            for n in 0..order {
                let top = 2 * (order as i64 - n as i64 - 2);
                for k in 1..=top.max(0) as usize {
                    let m = level_orders(order, n, k).unwrap();
                    assert!(2 * m + k as i64 <= 2 * (order as i64 - n as i64 - 2));
                }
            }
        }
    }

    #[test]
    fn leibniz_weights() {
        let splits = leibniz(&[2, 1, 0], 3, 2);
        // (2 into 3 parts: 6 splits) × (1 into 3 parts: 3 splits)
        assert_eq!(splits.len(), 18);
        let total: f64 = splits.iter().map(|(_, w)| w).sum();
        assert_eq!(total, 27.0);
        assert_eq!(leibniz(&NO_DERIV, 4, 2).len(), 1);
    }

    #[test]
    fn first_derivative_of_cubic_forcing() {
        // ∂ₛ(S(t−s)|u|²u) = S(t−s)(−2i)(2|∇u|²u + (∇u·∇u)ū + u²Δū) in d = 2
        let set = initial_iterates(1, 3, 2).unwrap().derive().unwrap();
        let u = |conj, deriv| FirstEdge { conj, deriv, sub: Iterate(0) };
        let m2i = Complex64::new(0.0, -2.0);
        let mut expected = BTreeMap::new();
        for l in 0..2 {
            let mut e = NO_DERIV;
            e[l] = 1;
            expected.insert(DecoratedTree::new(vec![u(false, e), u(true, e), u(false, NO_DERIV)]), m2i * 2.0);
            expected.insert(DecoratedTree::new(vec![u(false, e), u(false, e), u(true, NO_DERIV)]), m2i);
            let mut e2 = NO_DERIV;
            e2[l] = 2;
            expected.insert(DecoratedTree::new(vec![u(false, NO_DERIV), u(false, NO_DERIV), u(true, e2)]), m2i);
        }
        assert_eq!(set.len(), expected.len());
        for (t, coeff) in expected {
            assert_eq!(set.coefficient(&t), Some(coeff), "{t}");
        }
    }

    #[test]
    fn weight_identity_and_leaf_count() {
        for p in [3usize, 5] {
            for n in 1..=4 {
                let mut set = initial_full(n, p, 1).unwrap();
                for beta in 0..=3 {
                    if beta > 0 {
                        set = set.derive().unwrap();
                    }
                    for (tree, _) in set.iter() {
                        let q = tree.cuts(p);
                        assert_eq!(tree.edges().len(), p + q * (p - 1));
                        assert_eq!(tree.total_weight(), 2 * (beta - q), "{tree}");
                        assert_eq!(tree.leaves(), p + (p - 1) * (n - 1));
                        assert_eq!(tree.level(p), n);
                        for e in tree.edges() {
                            assert!(e.sub.is_well_formed(p));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn gradient_weight_bound() {
        for order in 2usize..=5 {
            for n in 1..order {
                for k in 0..=2 * (order - n).saturating_sub(2) {
                    let Some(m) = taylor_depth(order, n, k) else { continue };
                    let alpha: MultiIndex = [k as u8, 0, 0];
                    let init = initial_iterates(n, 3, 1).unwrap();
                    for beta in 0..=m {
                        let set = tree_set(&init, beta, &alpha).unwrap();
                        for (tree, _) in set.iter() {
                            let q = tree.cuts(3);
                            assert_eq!(tree.total_weight(), 2 * (beta - q) + k);
                            let top = tree.edges().iter().map(order_of).max().unwrap();
                            assert!(top <= 2 * m + k);
                        }
                    }
                }
            }
        }
    }

    fn order_of<S>(e: &FirstEdge<S>) -> usize {
        order(&e.deriv)
    }

    #[test]
    fn add_gradient_weight_zero_is_identity() {
        let set = initial_iterates(2, 3, 2).unwrap().derive().unwrap();
        assert_eq!(set.add_gradient_weight(&NO_DERIV), set);
        let grad = initial_iterates(1, 3, 1).unwrap().add_gradient_weight(&[1, 0, 0]);
        // ∂(u u ū) = 2 (∂u) u ū + u u ∂ū
        assert_eq!(grad.len(), 2);
        let total: Complex64 = grad.iter().map(|(_, c)| *c).sum();
        assert_eq!(total, c(3.0));
    }

    #[test]
    fn collapsed_coefficients_sum_full_ones() {
        // Expanding each U_k = Σ c(a) a turns a collapsed coefficient into the
        // sum of the full coefficients mapping onto it.
        for p in [3usize, 5] {
            let mut weight = vec![1.0];
            for k in 1..=3 {
                weight.push(grow_trees(k, p).unwrap().iter().map(|(_, c)| *c as f64).sum());
            }
            for n in 1..=3 {
                let mut full = initial_full(n, p, 2).unwrap();
                let mut coll = initial_iterates(n, p, 2).unwrap();
                for beta in 0..=2 {
                    if beta > 0 {
                        full = full.derive().unwrap();
                        coll = coll.derive().unwrap();
                    }
                    let mut sums: BTreeMap<DecoratedTree<Iterate>, Complex64> = BTreeMap::new();
                    for (t, c) in full.iter() {
                        *sums.entry(t.collapse()).or_default() += c;
                    }
                    let keys: BTreeSet<_> = sums.keys().cloned().collect();
                    let coll_keys: BTreeSet<_> = coll.iter().map(|(t, _)| t.clone()).collect();
                    assert_eq!(keys, coll_keys, "p={p} n={n} β={beta}");
                    for (t, c) in coll.iter() {
                        let scale: f64 = t.edges().iter().map(|e| weight[e.sub.0]).product();
                        assert!((sums[t] - c * scale).norm() < 1e-9 * c.norm() * scale, "{t}");
                    }
                }
            }
        }
    }
}
