//! Closed-form moments of `(H H† m)_a` and an exact Wick-pairing oracle.
//!
//! For `H = h⁽ⁿ⁾ ⋯ h⁽¹⁾` with independent circular Gaussian stages, every
//! stage appears twice unconjugated and twice conjugated in
//! `|(H H† m)_a|²`. Circular symmetry kills unconjugated–unconjugated
//! pairings, leaving two pairings per stage:
//!
//! * **arc** — each factor pairs with its conjugate on the same side of the
//!   product (both inside `X` or both inside `X*`);
//! * **ladder** — each factor pairs across to the other side.
//!
//! Choosing one pairing per stage gives `2ⁿ` graphs. Each graph identifies
//! index variables; the number of free assignments is a monomial in
//! `N, K₁, …, K_{n−1}` found by union-find, and the symbol contraction is
//! either `|m_a|²` or `Σ|m_i|²`. The all-arc graph is `|E H H† m|²`.

use std::fmt;

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Largest stage count accepted by the enumeration (`2ⁿ` graphs).
pub const MAX_STAGES: usize = 12;

/// Input to the moment oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSpec {
    pub n_tx: usize,
    pub pinholes: Vec<usize>,
    pub n_rx: usize,
    /// One entry variance per stage.
    pub variances: Vec<f64>,
    pub symbols: Vec<Complex64>,
    pub receiver: usize,
}

impl MomentSpec {
    /// Unit variances and symbols equal to `mag` on every receiver.
    pub fn uniform(n_tx: usize, pinholes: Vec<usize>, n_rx: usize, mag: f64) -> Self {
        let n = pinholes.len() + 1;
        MomentSpec {
            n_tx,
            pinholes,
            n_rx,
            variances: vec![1.0; n],
            symbols: vec![Complex64::new(mag, 0.0); n_rx],
            receiver: 0,
        }
    }

    pub fn n_stages(&self) -> usize {
        self.pinholes.len() + 1
    }

    /// `N, K₁, …, K_{n−1}, M`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.n_tx];
        d.extend_from_slice(&self.pinholes);
        d.push(self.n_rx);
        d
    }

    fn check(&self) -> Result<()> {
        let n = self.n_stages();
        if n > MAX_STAGES {
            return Err(Error::Capacity {
                stages: n,
                max: MAX_STAGES,
            });
        }
        if self.dims().contains(&0) {
            return Err(Error::InvalidInput("dimensions must be at least 1".into()));
        }
        if self.variances.len() != n {
            return Err(Error::InvalidInput(format!("expected {n} variances, got {}", self.variances.len())));
        }
        if self.symbols.len() != self.n_rx {
            return Err(Error::InvalidInput(format!(
                "symbol vector has {} entries for {} receivers",
                self.symbols.len(),
                self.n_rx
            )));
        }
        if self.receiver >= self.n_rx {
            return Err(Error::InvalidInput(format!("receiver {} out of range", self.receiver)));
        }
        Ok(())
    }

    fn self_power(&self) -> f64 {
        self.symbols[self.receiver].norm_sqr()
    }

    fn total_power(&self) -> f64 {
        self.symbols.iter().map(|z| z.norm_sqr()).sum()
    }

    fn variance_product(&self) -> f64 {
        self.variances.iter().map(|s| s * s).product()
    }
}

/// Symbol contraction carried by a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolFactor {
    /// `|m_a|²`
    Own,
    /// `Σ_i |m_i|²`
    Total,
}

impl fmt::Display for SymbolFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolFactor::Own => f.write_str("|m_a|^2"),
            SymbolFactor::Total => f.write_str("sum|m|^2"),
        }
    }
}

/// `coefficient · N^e₀ · K₁^e₁ ⋯ K_{n−1}^e_{n−1} · (symbol factor) · Πσ_k²`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    pub coefficient: u64,
    /// Exponents of `N, K₁, …, K_{n−1}`.
    pub exponents: Vec<u32>,
    pub symbol: SymbolFactor,
}

impl Monomial {
    /// Total degree under `N = K_j = s`.
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// Exact integer count `coefficient · Π dims^exponents`.
    pub fn count(&self, dims: &[usize]) -> BigUint {
        let mut acc = BigUint::from(self.coefficient);
        for (&d, &e) in dims.iter().zip(&self.exponents) {
            acc *= BigUint::from(d).pow(e);
        }
        acc
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.coefficient != 1 {
            parts.push(self.coefficient.to_string());
        }
        for (i, &e) in self.exponents.iter().enumerate() {
            let name = if i == 0 { "N".to_string() } else { format!("K{i}") };
            match e {
                0 => {}
                1 => parts.push(name),
                _ => parts.push(format!("{name}^{e}")),
            }
        }
        parts.push(self.symbol.to_string());
        write!(f, "{}", parts.join("*"))
    }
}

/// Sum of monomials; evaluation is exact until the final float scaling.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonomialSum {
    pub terms: Vec<Monomial>,
}

impl MonomialSum {
    /// Merges terms with identical exponents and symbol factor.
    pub fn collected(&self) -> MonomialSum {
        let mut out: Vec<Monomial> = Vec::new();
        for t in &self.terms {
            match out.iter_mut().find(|o| o.exponents == t.exponents && o.symbol == t.symbol) {
                Some(o) => o.coefficient += t.coefficient,
                None => out.push(t.clone()),
            }
        }
        out.sort_by(|a, b| b.degree().cmp(&a.degree()).then(b.exponents.cmp(&a.exponents)).then(a.symbol.cmp(&b.symbol)));
        MonomialSum { terms: out }
    }

    /// Exact integer totals of the `|m_a|²` and `Σ|m|²` parts.
    pub fn exact_counts(&self, dims: &[usize]) -> (BigUint, BigUint) {
        let (mut own, mut total) = (BigUint::zero(), BigUint::zero());
        for t in &self.terms {
            match t.symbol {
                SymbolFactor::Own => own += t.count(dims),
                SymbolFactor::Total => total += t.count(dims),
            }
        }
        (own, total)
    }

    /// `Πσ² · (own·|m_a|² + total·Σ|m|²)`.
    pub fn evaluate(&self, spec: &MomentSpec) -> f64 {
        let (own, total) = self.exact_counts(&spec.dims());
        let own = own.to_f64().unwrap_or(f64::INFINITY);
        let total = total.to_f64().unwrap_or(f64::INFINITY);
        spec.variance_product() * (own * spec.self_power() + total * spec.total_power())
    }
}

impl fmt::Display for MonomialSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        write!(f, "{}", s.join(" + "))
    }
}

/// One pairing combination. Bit `k` of `mask` set means stage `k+1` is a ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub mask: u32,
    pub monomial: Monomial,
}

impl Graph {
    pub fn ladder_count(&self) -> u32 {
        self.mask.count_ones()
    }

    /// The `|E H H† m|²` graph.
    pub fn is_mean(&self) -> bool {
        self.mask == 0
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

/// Index variables of `X X*` with `X = (H H† m)_a`.
///
/// `X  = h⁽ⁿ⁾_{a,iₙ} ⋯ h⁽¹⁾_{i₂,i₁} · h̄⁽¹⁾_{j₂,i₁} ⋯ h̄⁽ⁿ⁾_{j_{n+1},jₙ} · m_{j_{n+1}}`
/// and `X*` is the same with primed indices and conjugation flipped.
struct Indices {
    n: usize,
}

impl Indices {
    const A: usize = 0;

    fn count(&self) -> usize {
        4 * self.n + 1
    }

    // i_k, k = 1..=n+1 (i_{n+1} = a)
    fn i(&self, k: usize, primed: bool) -> usize {
        if k == self.n + 1 {
            return Self::A;
        }
        1 + (k - 1) + if primed { 2 * self.n } else { 0 }
    }

    // j_k, k = 1..=n+1 (j_1 = i_1)
    fn j(&self, k: usize, primed: bool) -> usize {
        if k == 1 {
            return self.i(1, primed);
        }
        1 + self.n + (k - 2) + if primed { 2 * self.n } else { 0 }
    }

    /// Dimension slot (0 = N, j = K_j, n = M) ranged over by a variable.
    fn slot(&self, var: usize) -> usize {
        if var == Self::A {
            return self.n;
        }
        let local = (var - 1) % (2 * self.n);
        if local < self.n {
            local // i_{local+1} ranges over dims[local]
        } else {
            local - self.n + 1 // j_{k} with k = local − n + 2 ranges over dims[k − 1]
        }
    }
}

fn graph_monomial(n: usize, mask: u32) -> Monomial {
    let ix = Indices { n };
    let mut uf = UnionFind::new(ix.count());
    for k in 1..=n {
        let ladder = mask & (1 << (k - 1)) != 0;
        // unconjugated h⁽ᵏ⁾ factors: in X (i_{k+1}, i_k) and in X* (j'_{k+1}, j'_k)
        let u1 = (ix.i(k + 1, false), ix.i(k, false));
        let u2 = (ix.j(k + 1, true), ix.j(k, true));
        // conjugated: in X (j_{k+1}, j_k) and in X* (i'_{k+1}, i'_k)
        let c1 = (ix.j(k + 1, false), ix.j(k, false));
        let c2 = (ix.i(k + 1, true), ix.i(k, true));
        let (p, q) = if ladder { (c2, c1) } else { (c1, c2) };
        uf.union(u1.0, p.0);
        uf.union(u1.1, p.1);
        uf.union(u2.0, q.0);
        uf.union(u2.1, q.1);
    }
    let fixed = uf.find(Indices::A);
    let m_class = uf.find(ix.j(n + 1, false));
    debug_assert_eq!(m_class, uf.find(ix.j(n + 1, true)));
    let symbol = if m_class == fixed {
        SymbolFactor::Own
    } else {
        SymbolFactor::Total
    };

    let mut exponents = vec![0u32; n];
    let mut seen = vec![false; ix.count()];
    for v in 0..ix.count() {
        let r = uf.find(v);
        if seen[r] {
            continue;
        }
        seen[r] = true;
        if r == fixed || r == m_class {
            continue;
        }
        let slot = ix.slot(v);
        // receiver-indexed variables only ever join the fixed or symbol class
        debug_assert!(slot < n);
        exponents[slot] += 1;
    }
    Monomial {
        coefficient: 1,
        exponents,
        symbol,
    }
}

/// All `2ⁿ` graphs for an `n`-stage chain, in mask order.
pub fn enumerate_graphs(n_stages: usize) -> Result<Vec<Graph>> {
    if n_stages == 0 {
        return Err(Error::InvalidInput("at least one stage is required".into()));
    }
    if n_stages > MAX_STAGES {
        return Err(Error::Capacity {
            stages: n_stages,
            max: MAX_STAGES,
        });
    }
    Ok((0..1u32 << n_stages)
        .map(|mask| Graph {
            mask,
            monomial: graph_monomial(n_stages, mask),
        })
        .collect())
}

/// Result of the Wick enumeration.
#[derive(Debug, Clone)]
pub struct WickMoment {
    /// `E|(H H† m)_a|²`.
    pub value: f64,
    /// `|E (H H† m)_a|²`, the all-arc graph.
    pub mean_sq: f64,
    pub graphs: Vec<Graph>,
    pub expansion: MonomialSum,
}

impl WickMoment {
    /// `E|X|² − |E X|²`: the sum of every graph except the all-arc one.
    pub fn variance(&self, spec: &MomentSpec) -> f64 {
        MonomialSum {
            terms: self.graphs.iter().filter(|g| !g.is_mean()).map(|g| g.monomial.clone()).collect(),
        }
        .evaluate(spec)
    }
}

/// Exact `E|(H H† m)_a|²` by enumerating every Wick pairing.
pub fn wick_exact(spec: &MomentSpec) -> Result<WickMoment> {
    spec.check()?;
    let graphs = enumerate_graphs(spec.n_stages())?;
    let expansion = MonomialSum {
        terms: graphs.iter().map(|g| g.monomial.clone()).collect(),
    };
    let value = expansion.evaluate(spec);
    let mean_sq = MonomialSum {
        terms: vec![graphs[0].monomial.clone()],
    }
    .evaluate(spec);
    Ok(WickMoment {
        value,
        mean_sq,
        graphs,
        expansion,
    })
}

/// `E (H H† m)_a = Πσ_k · N · ΠK_j · m_a`.
pub fn mean_entry(spec: &MomentSpec) -> Complex64 {
    let dims: f64 = spec.n_tx as f64 * spec.pinholes.iter().map(|&k| k as f64).product::<f64>();
    spec.symbols[spec.receiver] * dims * spec.variances.iter().product::<f64>()
}

/// Flat-channel second moment `N²|m_j|² + N Σ|m_i|²`.
pub fn second_moment_flat(n_tx: usize, symbols: &[Complex64], receiver: usize) -> f64 {
    let n = n_tx as f64;
    let total: f64 = symbols.iter().map(|z| z.norm_sqr()).sum();
    n * n * symbols[receiver].norm_sqr() + n * total
}

/// Single-layer fluctuation `KN(MN + MK + 1) σ₁²σ₂² μ²`.
pub fn single_layer_closed(n_tx: usize, k: usize, n_rx: usize, sigma1: f64, sigma2: f64, mag: f64) -> f64 {
    let (n, k, m) = (n_tx as f64, k as f64, n_rx as f64);
    k * n * (m * n + m * k + 1.0) * sigma1 * sigma1 * sigma2 * sigma2 * mag * mag
}

/// Collected simple-graph terms
/// `Σ|m|² · N · Πσ² · ΠK · (ΠK + N Σ_i K₁⋯K̂_i⋯K_{n−1})`.
///
/// With equal-magnitude symbols `Σ|m|² = M μ²`.
pub fn multilayer_leading(spec: &MomentSpec) -> Result<f64> {
    spec.check()?;
    if spec.pinholes.is_empty() {
        return Err(Error::InvalidInput("multilayer_leading needs at least one pinhole layer".into()));
    }
    let ks: Vec<f64> = spec.pinholes.iter().map(|&k| k as f64).collect();
    let prod: f64 = ks.iter().product();
    let hat_sum: f64 = (0..ks.len())
        .map(|i| ks.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, k)| k).product::<f64>())
        .sum();
    let n = spec.n_tx as f64;
    Ok(spec.total_power() * n * spec.variance_product() * prod * (prod + n * hat_sum))
}

/// Leading/subleading split of the pairing graphs.
#[derive(Debug, Clone)]
pub struct GraphClassification {
    pub n_stages: usize,
    /// Degree in `s` (with `N = K_j = s`) of the leading fluctuation graphs.
    pub leading_degree: u32,
    /// Simple graphs: the mean graph plus every maximal-degree fluctuation graph.
    pub leading: Vec<Graph>,
    pub subleading: Vec<Graph>,
}

impl GraphClassification {
    pub fn leading_count(&self) -> usize {
        self.leading.len()
    }
}

/// Splits the `2ⁿ` graphs into simple (leading) and subleading ones.
///
/// The mean graph is always simple. Among the remaining fluctuation graphs
/// the simple ones have maximal degree in `s` when `N = K_j = s` and `M` is
/// held fixed.
pub fn classify_graphs(n_stages: usize) -> Result<GraphClassification> {
    let graphs = enumerate_graphs(n_stages)?;
    let leading_degree = graphs.iter().filter(|g| !g.is_mean()).map(|g| g.monomial.degree()).max().unwrap_or(0);
    let (leading, subleading) = graphs
        .into_iter()
        .partition(|g| g.is_mean() || g.monomial.degree() == leading_degree);
    Ok(GraphClassification {
        n_stages,
        leading_degree,
        leading,
        subleading,
    })
}

/// Effective transmitter count `(1/N + Σ 1/K_j)⁻¹` and effective pinhole
/// count `(Σ 1/K_j)⁻¹` (absent without pinholes).
pub fn neff(n_tx: f64, pinholes: &[f64]) -> (f64, Option<f64>) {
    if pinholes.is_empty() {
        return (n_tx, None);
    }
    let inv_p: f64 = pinholes.iter().map(|k| 1.0 / k).sum();
    (1.0 / (1.0 / n_tx + inv_p), Some(1.0 / inv_p))
}

/// Exact `(E|X|², |E X|²)` as integers for unit variances and unit symbols
/// on every receiver.
pub fn exact_unit_counts(dims: &[usize]) -> Result<(BigUint, BigUint)> {
    let n = dims.len() - 1;
    let graphs = enumerate_graphs(n)?;
    let m = BigUint::from(dims[n]);
    let mut total = BigUint::zero();
    for g in &graphs {
        let c = g.monomial.count(dims);
        total += match g.monomial.symbol {
            SymbolFactor::Own => c,
            SymbolFactor::Total => c * &m,
        };
    }
    let mean = graphs[0].monomial.count(dims);
    debug_assert!(graphs[0].monomial.symbol == SymbolFactor::Own);
    Ok((total, mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn flat_examples() {
        assert_eq!(second_moment_flat(1, &[c(1.0, 0.0)], 0), 2.0);
        assert_eq!(second_moment_flat(2, &[c(1.0, 0.0)], 0), 6.0);
        assert_eq!(second_moment_flat(3, &[c(1.0, 0.0), c(1.0, 0.0)], 0), 15.0);
    }

    #[test]
    fn flat_graphs_are_mean_and_one_ladder() {
        let g = enumerate_graphs(1).unwrap();
        assert_eq!(g[0].monomial.to_string(), "N^2*|m_a|^2");
        assert_eq!(g[1].monomial.to_string(), "N*sum|m|^2");
    }

    #[test]
    fn scalar_single_layer_is_four() {
        let w = wick_exact(&MomentSpec::uniform(1, vec![1], 1, 1.0)).unwrap();
        assert_eq!(w.value, 4.0);
        assert_eq!(single_layer_closed(1, 1, 1, 1.0, 1.0, 1.0), 3.0);
        assert_eq!(w.mean_sq, 1.0);
    }

    #[test]
    fn single_layer_fluctuation_matches_three_term_sum() {
        for (n, k, m) in [(1, 1, 1), (2, 3, 2), (5, 4, 3), (50, 50, 2)] {
            let spec = MomentSpec::uniform(n, vec![k], m, 1.0);
            let w = wick_exact(&spec).unwrap();
            let closed = single_layer_closed(n, k, m, 1.0, 1.0, 1.0);
            assert!((w.variance(&spec) - closed).abs() <= 1e-12 * closed, "{n} {k} {m}");
        }
    }

    #[test]
    fn mean_graph_is_squared_mean() {
        let mut spec = MomentSpec::uniform(3, vec![2, 4], 2, 1.0);
        spec.variances = vec![0.5, 2.0, 1.5];
        spec.symbols = vec![c(0.3, 0.4), c(-1.0, 2.0)];
        spec.receiver = 1;
        let w = wick_exact(&spec).unwrap();
        assert!((w.mean_sq - mean_entry(&spec).norm_sqr()).abs() < 1e-12 * w.mean_sq);
    }

    #[test]
    fn capacity_limit() {
        let spec = MomentSpec::uniform(2, vec![2; 12], 2, 1.0);
        assert!(matches!(wick_exact(&spec), Err(Error::Capacity { stages: 13, .. })));
        assert!(matches!(classify_graphs(13), Err(Error::Capacity { .. })));
    }

    #[test]
    fn graph_counts() {
        for n in 1..=5 {
            let cl = classify_graphs(n).unwrap();
            assert_eq!(cl.leading_count(), n + 1, "n = {n}");
            assert_eq!(cl.leading.len() + cl.subleading.len(), 1 << n);
            assert_eq!(cl.leading_degree as usize, 2 * n - 1);
        }
        let cl = classify_graphs(4).unwrap();
        assert!(cl.subleading.iter().all(|g| g.monomial.degree() < cl.leading_degree));
    }

    #[test]
    fn leading_formula_is_the_simple_graph_sum() {
        for ks in [vec![7], vec![3, 5], vec![2, 9, 4]] {
            let spec = MomentSpec::uniform(6, ks.clone(), 3, 1.0);
            let cl = classify_graphs(spec.n_stages()).unwrap();
            let simple = MonomialSum {
                terms: cl.leading.iter().filter(|g| !g.is_mean()).map(|g| g.monomial.clone()).collect(),
            };
            let want = multilayer_leading(&spec).unwrap();
            assert!((simple.evaluate(&spec) - want).abs() <= 1e-12 * want, "{ks:?}");
        }
    }

    #[test]
    fn leading_formula_specializations() {
        let spec = MomentSpec::uniform(4, vec![6], 3, 1.5);
        let want = 1.5f64.powi(2) * 4.0 * 3.0 * 6.0 * (6.0 + 4.0);
        assert!((multilayer_leading(&spec).unwrap() - want).abs() < 1e-9);
        let spec = MomentSpec::uniform(5, vec![3, 7], 2, 1.0);
        let norm = 2.0 * 25.0 * 9.0 * 49.0;
        let got = multilayer_leading(&spec).unwrap() / norm;
        assert!((got - (1.0 / 5.0 + 1.0 / 3.0 + 1.0 / 7.0)).abs() < 1e-12);
        assert!(multilayer_leading(&MomentSpec::uniform(5, vec![], 2, 1.0)).is_err());
    }

    #[test]
    fn neff_examples() {
        assert_eq!(neff(10.0, &[]), (10.0, None));
        assert_eq!(neff(10.0, &[10.0]), (5.0, Some(10.0)));
        let (e, p) = neff(12.0, &[6.0, 4.0]);
        assert!((e - 2.0).abs() < 1e-12 && (p.unwrap() - 2.4).abs() < 1e-12);
    }

    #[test]
    fn monomial_display_and_collection() {
        let s = MonomialSum {
            terms: vec![
                Monomial { coefficient: 1, exponents: vec![1, 2], symbol: SymbolFactor::Total },
                Monomial { coefficient: 1, exponents: vec![1, 2], symbol: SymbolFactor::Total },
                Monomial { coefficient: 1, exponents: vec![2, 2], symbol: SymbolFactor::Own },
            ],
        };
        let c = s.collected();
        assert_eq!(c.terms.len(), 2);
        assert_eq!(c.to_string(), "N^2*K1^2*|m_a|^2 + 2*N*K1^2*sum|m|^2");
    }

    #[test]
    fn exact_counts_do_not_overflow() {
        let (total, mean) = exact_unit_counts(&[200, 200, 200, 200, 2]).unwrap();
        assert!(total > mean);
        assert_eq!(mean, BigUint::from(200u32).pow(8));
    }
}
