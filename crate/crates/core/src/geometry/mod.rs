//! Model cones and their constraint (facet) representation.
//!
//! Deduction runs in four steps over the µpath signatures:
//!
//! 1. divide each signature by the gcd of its entries and drop duplicates;
//! 2. eliminate redundant counters by Gaussian elimination, which also yields
//!    the equality constraints;
//! 3. drop generators that are non-negative combinations of the others;
//! 4. enumerate the facets of the remaining full-rank cone.
//!
//! All arithmetic is exact.

mod hull;

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::lp::{FeasibilityProblem, Relation};
use crate::mudd::{self, CounterNamespace, CounterSignature, MuDD, MuddError};

pub use hull::conic_hull_facets;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate hull: {0}")]
    DegenerateHull(String),
}

#[derive(Debug, Error)]
pub enum DeduceError {
    #[error(transparent)]
    Model(#[from] MuddError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Equality,
    Inequality,
}

/// Which deduction step produced a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeductionStep {
    GaussianElimination,
    ConicHull,
}

/// `a·v = 0` or `a·v ≥ 0` with integer coefficients of collective gcd 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub coefficients: Vec<BigInt>,
    pub provenance: DeductionStep,
}

impl Constraint {
    pub fn inequality(coefficients: Vec<BigInt>) -> Self {
        Constraint {
            kind: ConstraintKind::Inequality,
            coefficients,
            provenance: DeductionStep::ConicHull,
        }
    }

    pub fn equality(coefficients: Vec<BigInt>) -> Self {
        Constraint {
            kind: ConstraintKind::Equality,
            coefficients,
            provenance: DeductionStep::GaussianElimination,
        }
    }

    /// Builds `lhs ≤ rhs` from small integer coefficient vectors.
    pub fn at_most(lhs: &[i64], rhs: &[i64]) -> Self {
        let coeffs = rhs.iter().zip(lhs).map(|(r, l)| BigInt::from(r - l)).collect();
        Constraint::inequality(coeffs)
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn evaluate(&self, point: &[BigRational]) -> BigRational {
        self.coefficients
            .iter()
            .zip(point)
            .filter(|(a, _)| !a.is_zero())
            .map(|(a, v)| v * a)
            .sum()
    }

    pub fn evaluate_counts(&self, counts: &[u64]) -> BigInt {
        self.coefficients
            .iter()
            .zip(counts)
            .map(|(a, &c)| a * BigInt::from(c))
            .sum()
    }

    pub fn is_satisfied_by(&self, point: &[BigRational]) -> bool {
        let value = self.evaluate(point);
        match self.kind {
            ConstraintKind::Equality => value.is_zero(),
            ConstraintKind::Inequality => !value.is_negative(),
        }
    }

    /// Renders as `lhs ≤ rhs` (or `lhs = rhs`) with every coefficient
    /// non-negative, counters in namespace order.
    pub fn display(&self, ns: &CounterNamespace) -> String {
        let side = |positive: bool| {
            let terms: Vec<String> = self
                .coefficients
                .iter()
                .enumerate()
                .filter(|(_, a)| if positive { a.is_positive() } else { a.is_negative() })
                .map(|(i, a)| {
                    let a = a.abs();
                    if a.is_one() {
                        ns.name(i).to_string()
                    } else {
                        format!("{a}·{}", ns.name(i))
                    }
                })
                .collect();
            if terms.is_empty() {
                "0".to_string()
            } else {
                terms.join(" + ")
            }
        };
        match self.kind {
            ConstraintKind::Inequality => format!("{} ≤ {}", side(false), side(true)),
            ConstraintKind::Equality => format!("{} = {}", side(true), side(false)),
        }
    }

    pub fn to_json(&self, ns: &CounterNamespace) -> serde_json::Value {
        let coefficients: serde_json::Map<String, serde_json::Value> = self
            .coefficients
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.is_zero())
            .map(|(i, a)| {
                let v = match a.to_i64() {
                    Some(n) => serde_json::Value::from(n),
                    None => serde_json::Value::from(a.to_string()),
                };
                (ns.name(i).to_string(), v)
            })
            .collect();
        serde_json::json!({
            "kind": self.kind,
            "coefficients": coefficients,
            "display": self.display(ns),
            "provenance": self.provenance,
        })
    }
}

/// Counts describing one deduction run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DeductionSummary {
    pub signatures: usize,
    pub distinct_generators: usize,
    pub extreme_generators: usize,
    pub rank: usize,
}

/// Explicit constraint representation of a model cone.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub namespace: CounterNamespace,
    pub equalities: Vec<Constraint>,
    pub inequalities: Vec<Constraint>,
    pub summary: DeductionSummary,
}

impl ConstraintSet {
    pub fn iter(&self) -> impl Iterator<Item = &Constraint> {
        self.equalities.iter().chain(&self.inequalities)
    }

    pub fn len(&self) -> usize {
        self.equalities.len() + self.inequalities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_satisfied_by(&self, point: &[BigRational]) -> bool {
        self.iter().all(|c| c.is_satisfied_by(point))
    }

    pub fn displays(&self) -> Vec<String> {
        self.iter().map(|c| c.display(&self.namespace)).collect()
    }

    pub fn contains_display(&self, text: &str) -> bool {
        self.iter().any(|c| c.display(&self.namespace) == text)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "namespace": self.namespace.names(),
            "summary": self.summary,
            "constraints": self.iter().map(|c| c.to_json(&self.namespace)).collect::<Vec<_>>(),
        })
    }
}

impl fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.equalities {
            writeln!(f, "{}", c.display(&self.namespace))?;
        }
        for c in &self.inequalities {
            writeln!(f, "{}", c.display(&self.namespace))?;
        }
        Ok(())
    }
}

/// A model cone given by its normalized generators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelCone {
    pub generators: Vec<CounterSignature>,
    pub namespace: CounterNamespace,
}

impl ModelCone {
    pub fn from_signatures(signatures: &[CounterSignature], namespace: CounterNamespace) -> Self {
        ModelCone {
            generators: normalize_signatures(signatures),
            namespace,
        }
    }

    pub fn from_model(model: &MuDD, cap: usize) -> Result<Self, MuddError> {
        let sigs = mudd::signatures_of_model(model, cap)?;
        Ok(Self::from_signatures(&sigs, model.namespace().clone()))
    }

    pub fn dimension(&self) -> usize {
        self.namespace.len()
    }

    pub fn contains(&self, point: &[BigRational]) -> Result<bool, GeometryError> {
        cone_membership_in(&self.generators, self.dimension(), point)
    }
}

pub(crate) fn to_int_vec(counts: &[u64]) -> Vec<BigInt> {
    counts.iter().map(|&c| BigInt::from(c)).collect()
}

pub(crate) fn gcd_normalize(v: &mut [BigInt]) {
    let g = v.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if !g.is_zero() && !g.is_one() {
        for x in v.iter_mut() {
            *x /= &g;
        }
    }
}

fn gcd_u64(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

/// Divides each signature by the gcd of its entries, drops zero vectors and
/// duplicates, and sorts lexicographically. The first source path of each
/// surviving direction is kept.
pub fn normalize_signatures(sigs: &[CounterSignature]) -> Vec<CounterSignature> {
    let mut out: Vec<CounterSignature> = sigs
        .iter()
        .filter(|s| !s.is_zero())
        .map(|s| {
            let g = s.counts.iter().fold(0, |acc, &c| gcd_u64(acc, c));
            CounterSignature {
                counts: s.counts.iter().map(|&c| c / g).collect(),
                source_path: s.source_path,
            }
        })
        .collect();
    out.sort_by(|a, b| a.counts.cmp(&b.counts).then(a.source_path.cmp(&b.source_path)));
    out.dedup_by(|b, a| a.counts == b.counts);
    out
}

/// Result of the elimination step.
#[derive(Debug, Clone)]
pub struct EqualityReduction {
    /// Integer basis of the orthogonal complement of the generators' span.
    pub equalities: Vec<Constraint>,
    /// Counters kept as coordinates of the span, in namespace order.
    pub kept: Vec<usize>,
    /// Generators restricted to the kept counters; full rank.
    pub reduced: Vec<Vec<BigInt>>,
}

/// Reduced row echelon form over the rationals. Returns the pivot columns.
pub(crate) fn rref(rows: &mut Vec<Vec<BigRational>>, width: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..width {
        if r == rows.len() {
            break;
        }
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = rows[r][col].recip();
        for v in rows[r].iter_mut() {
            *v *= &inv;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[col].is_zero() {
                continue;
            }
            let f = row[col].clone();
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &f * p;
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    rows.truncate(r);
    pivots
}

/// Finds the equality constraints satisfied by every generator and projects
/// the generators onto a set of counters on which they have full rank.
pub fn find_equalities(gens: &[CounterSignature], dim: usize) -> EqualityReduction {
    let mut rows: Vec<Vec<BigRational>> = gens
        .iter()
        .map(|g| {
            g.counts
                .iter()
                .map(|&c| BigRational::from_integer(c.into()))
                .collect()
        })
        .collect();
    let pivots = rref(&mut rows, dim);

    let mut equalities = Vec::new();
    for free in (0..dim).filter(|c| !pivots.contains(c)) {
        // a_free = 1, a_pivot(i) = -R[i][free]
        let mut coeffs = vec![BigRational::zero(); dim];
        coeffs[free] = BigRational::one();
        for (row, &p) in rows.iter().zip(&pivots) {
            coeffs[p] = -row[free].clone();
        }
        let scale = coeffs.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
        let mut ints: Vec<BigInt> = coeffs.iter().map(|v| (v * &scale).to_integer()).collect();
        gcd_normalize(&mut ints);
        equalities.push(Constraint::equality(ints));
    }

    let reduced = gens
        .iter()
        .map(|g| pivots.iter().map(|&c| BigInt::from(g.counts[c])).collect())
        .collect();
    EqualityReduction {
        equalities,
        kept: pivots,
        reduced,
    }
}

/// Exact test of `point ∈ cone(gens)` for integer generators.
pub fn cone_contains(gens: &[Vec<BigInt>], dim: usize, point: &[BigRational]) -> Result<bool, GeometryError> {
    if point.len() != dim {
        return Err(GeometryError::DimensionMismatch {
            expected: dim,
            got: point.len(),
        });
    }
    if let Some(g) = gens.iter().find(|g| g.len() != dim) {
        return Err(GeometryError::DimensionMismatch {
            expected: dim,
            got: g.len(),
        });
    }
    if point.iter().all(|v| v.is_zero()) {
        return Ok(true);
    }
    let mut lp = FeasibilityProblem::new(gens.len());
    for (k, target) in point.iter().enumerate() {
        let coeffs: Vec<BigInt> = gens.iter().map(|g| g[k].clone()).collect();
        lp.add_int_row(&coeffs, Relation::Eq, target.clone());
    }
    Ok(lp.solve().is_some())
}

fn cone_membership_in(
    gens: &[CounterSignature],
    dim: usize,
    point: &[BigRational],
) -> Result<bool, GeometryError> {
    let ints: Vec<Vec<BigInt>> = gens.iter().map(|g| to_int_vec(&g.counts)).collect();
    cone_contains(&ints, dim, point)
}

/// True iff some non-negative flow over `gens` produces `point`.
pub fn cone_membership(gens: &[CounterSignature], point: &[BigRational]) -> Result<bool, GeometryError> {
    let dim = gens.first().map_or(point.len(), |g| g.dim());
    cone_membership_in(gens, dim, point)
}

/// Indices of the generators that are not non-negative combinations of the
/// other generators.
///
/// Input must be normalized (no zero vectors, no two generators on the same
/// ray). Under that precondition a generator lies in the cone of the others
/// exactly when it is not an extreme ray, so every generator can be tested
/// against all others independently.
pub fn remove_interior_generators(gens: &[Vec<BigInt>]) -> Vec<usize> {
    let Some(dim) = gens.first().map(Vec::len) else {
        return Vec::new();
    };
    let redundant: Vec<bool> = (0..gens.len())
        .into_par_iter()
        .map(|i| {
            let others: Vec<Vec<BigInt>> = gens
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, g)| g.clone())
                .collect();
            let point: Vec<BigRational> = gens[i].iter().cloned().map(BigRational::from_integer).collect();
            cone_contains(&others, dim, &point).expect("dimensions agree")
        })
        .collect();
    (0..gens.len()).filter(|&i| !redundant[i]).collect()
}

/// Runs the four deduction steps on a list of signatures.
pub fn deduce_from_signatures(
    sigs: &[CounterSignature],
    namespace: &CounterNamespace,
) -> Result<ConstraintSet, GeometryError> {
    let dim = namespace.len();
    if let Some(s) = sigs.iter().find(|s| s.dim() != dim) {
        return Err(GeometryError::DimensionMismatch {
            expected: dim,
            got: s.dim(),
        });
    }
    let gens = normalize_signatures(sigs);
    let reduction = find_equalities(&gens, dim);
    let extreme = remove_interior_generators(&reduction.reduced);
    let extreme_gens: Vec<Vec<BigInt>> = extreme.iter().map(|&i| reduction.reduced[i].clone()).collect();

    let facets = if reduction.kept.is_empty() {
        Vec::new()
    } else {
        conic_hull_facets(&extreme_gens)?
    };
    let mut inequalities: Vec<Constraint> = facets
        .into_iter()
        .map(|normal| {
            let mut full = vec![BigInt::zero(); dim];
            for (&c, a) in reduction.kept.iter().zip(normal) {
                full[c] = a;
            }
            Constraint::inequality(full)
        })
        .collect();
    inequalities.sort_by(|a, b| a.coefficients.cmp(&b.coefficients));

    Ok(ConstraintSet {
        namespace: namespace.clone(),
        equalities: reduction.equalities,
        inequalities,
        summary: DeductionSummary {
            signatures: sigs.len(),
            distinct_generators: gens.len(),
            extreme_generators: extreme.len(),
            rank: reduction.kept.len(),
        },
    })
}

/// Enumerates the model's µpaths and deduces its constraint set.
pub fn deduce_constraints(model: &MuDD, cap: usize) -> Result<ConstraintSet, DeduceError> {
    let sigs = mudd::signatures_of_model(model, cap)?;
    Ok(deduce_from_signatures(&sigs, model.namespace())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(v: &[u64]) -> CounterSignature {
        CounterSignature::new(v.to_vec())
    }

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    fn q(v: &[i64]) -> Vec<BigRational> {
        v.iter().map(|&x| BigRational::from_integer(x.into())).collect()
    }

    fn counts(sigs: &[CounterSignature]) -> Vec<Vec<u64>> {
        sigs.iter().map(|s| s.counts.clone()).collect()
    }

    fn ns(names: &[&str]) -> CounterNamespace {
        CounterNamespace::new(names.iter().copied()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(counts(&normalize_signatures(&[sig(&[2, 4, 6])])), vec![vec![1, 2, 3]]);
        assert_eq!(
            counts(&normalize_signatures(&[sig(&[1, 1]), sig(&[2, 2]), sig(&[0, 0])])),
            vec![vec![1, 1]]
        );
        assert_eq!(
            counts(&normalize_signatures(&[sig(&[3, 5]), sig(&[5, 3])])),
            vec![vec![3, 5], vec![5, 3]]
        );
    }

    #[test]
    fn equality_from_split_counter() {
        // namespace order: stlb_hit, stlb_hit_4k, stlb_hit_2m
        let gens = [sig(&[1, 1, 0]), sig(&[1, 0, 1])];
        let red = find_equalities(&gens, 3);
        assert_eq!(red.equalities.len(), 1);
        let a = &red.equalities[0].coefficients;
        assert!(*a == ints(&[1, -1, -1]) || *a == ints(&[-1, 1, 1]));
        let names = ns(&["load.stlb_hit", "load.stlb_hit_4k", "load.stlb_hit_2m"]);
        // eliminated counter on the left
        let red = find_equalities(&[sig(&[1, 0, 1]), sig(&[0, 1, 1])], 3);
        assert_eq!(
            red.equalities[0].display(&ns(&["load.stlb_hit_4k", "load.stlb_hit_2m", "load.stlb_hit"])),
            "load.stlb_hit = load.stlb_hit_4k + load.stlb_hit_2m"
        );
        let _ = names;
    }

    #[test]
    fn equalities_full_span_and_single_generator() {
        let red = find_equalities(&[sig(&[1, 0]), sig(&[0, 1])], 2);
        assert!(red.equalities.is_empty());
        assert_eq!(red.kept, vec![0, 1]);

        let red = find_equalities(&[sig(&[1, 2])], 2);
        assert_eq!(red.equalities.len(), 1);
        let a = &red.equalities[0].coefficients;
        // 2 v1 - v2 = 0, up to sign
        assert!(*a == ints(&[2, -1]) || *a == ints(&[-2, 1]));
        assert_eq!(red.reduced, vec![ints(&[1])]);
    }

    #[test]
    fn empty_generators_force_zero() {
        let red = find_equalities(&[], 3);
        assert_eq!(red.equalities.len(), 3);
        for (i, e) in red.equalities.iter().enumerate() {
            let mut unit = vec![0; 3];
            unit[i] = 1;
            assert_eq!(e.coefficients, ints(&unit));
        }
    }

    #[test]
    fn interior_removal_examples() {
        let g = [ints(&[1, 0]), ints(&[0, 1]), ints(&[1, 1])];
        assert_eq!(remove_interior_generators(&g), vec![0, 1]);
        let g = [ints(&[1, 0]), ints(&[0, 1])];
        assert_eq!(remove_interior_generators(&g), vec![0, 1]);
        let g = [ints(&[2, 1]), ints(&[1, 2]), ints(&[1, 1])];
        assert_eq!(remove_interior_generators(&g), vec![0, 1]);
    }

    #[test]
    fn membership_examples() {
        let gens = [sig(&[1, 0]), sig(&[1, 1])];
        assert!(cone_membership(&gens, &q(&[2, 1])).unwrap());
        assert!(cone_membership(&gens, &q(&[0, 0])).unwrap());
        assert!(!cone_membership(&gens, &q(&[1, 2])).unwrap());
        assert_eq!(
            cone_membership(&gens, &q(&[1, 2, 3])).unwrap_err(),
            GeometryError::DimensionMismatch { expected: 2, got: 3 }
        );
    }

    #[test]
    fn walk_cone_facets() {
        let names = ns(&["load.causes_walk", "load.pde$_miss"]);
        let set = deduce_from_signatures(&[sig(&[1, 0]), sig(&[1, 1])], &names).unwrap();
        assert!(set.equalities.is_empty());
        let mut shown = set.displays();
        shown.sort();
        assert_eq!(shown, vec!["0 ≤ load.pde$_miss", "load.pde$_miss ≤ load.causes_walk"]);
    }

    #[test]
    fn orthant_facets() {
        let names = ns(&["a", "b", "c"]);
        let set = deduce_from_signatures(&[sig(&[1, 0, 0]), sig(&[0, 1, 0]), sig(&[0, 0, 1])], &names).unwrap();
        let mut shown = set.displays();
        shown.sort();
        assert_eq!(shown, vec!["0 ≤ a", "0 ≤ b", "0 ≤ c"]);
    }

    #[test]
    fn zero_path_only() {
        let names = ns(&["a", "b"]);
        let set = deduce_from_signatures(&[sig(&[0, 0])], &names).unwrap();
        assert!(set.inequalities.is_empty());
        assert_eq!(set.displays(), vec!["a = 0", "b = 0"]);
    }

    #[test]
    fn display_forms() {
        let names = ns(&["x", "y", "z"]);
        let c = Constraint::inequality(ints(&[3, -1, -2]));
        assert_eq!(c.display(&names), "y + 2·z ≤ 3·x");
        let c = Constraint::inequality(ints(&[0, 0, 1]));
        assert_eq!(c.display(&names), "0 ≤ z");
        let c = Constraint::at_most(&[1, 0, 0], &[0, 1, 0]);
        assert_eq!(c.display(&names), "x ≤ y");
    }

    /// Brute-force facet oracle for small cones: every hyperplane through
    /// `rank - 1` independent generators that keeps all generators on one
    /// side is a facet.
    fn brute_force_facets(gens: &[Vec<i64>]) -> Vec<Vec<i64>> {
        let d = gens[0].len();
        let mut found: Vec<Vec<i64>> = Vec::new();
        let n = gens.len();
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != d - 1 {
                continue;
            }
            let rows: Vec<Vec<BigRational>> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| q(&gens[i]))
                .collect();
            let mut m = rows.clone();
            let piv = rref(&mut m, d);
            if piv.len() != d - 1 {
                continue;
            }
            let free = (0..d).find(|c| !piv.contains(c)).unwrap();
            let mut a = vec![BigRational::zero(); d];
            a[free] = BigRational::one();
            for (row, &p) in m.iter().zip(&piv) {
                a[p] = -row[free].clone();
            }
            let scale = a.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
            let mut a: Vec<BigInt> = a.iter().map(|v| (v * &scale).to_integer()).collect();
            gcd_normalize(&mut a);
            let vals: Vec<BigInt> = gens
                .iter()
                .map(|g| g.iter().zip(&a).map(|(x, y)| BigInt::from(*x) * y).sum())
                .collect();
            let sign = if vals.iter().all(|v| !v.is_negative()) {
                1
            } else if vals.iter().all(|v| !v.is_positive()) {
                -1
            } else {
                continue;
            };
            let a: Vec<i64> = a.iter().map(|v| v.to_i64().unwrap() * sign).collect();
            if !found.contains(&a) {
                found.push(a);
            }
        }
        found.sort();
        found
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn hull_matches_brute_force_on_full_rank_cones(
            raw in prop::collection::vec(prop::collection::vec(0u64..=4, 3), 3..=6)
        ) {
            let sigs: Vec<CounterSignature> = raw.iter().map(|v| sig(v)).collect();
            let names = ns(&["a", "b", "c"]);
            let set = deduce_from_signatures(&sigs, &names).unwrap();
            prop_assume!(set.equalities.is_empty());
            let gens: Vec<Vec<i64>> = normalize_signatures(&sigs)
                .iter()
                .map(|s| s.counts.iter().map(|&c| c as i64).collect())
                .collect();
            let mut got: Vec<Vec<i64>> = set
                .inequalities
                .iter()
                .map(|c| c.coefficients.iter().map(|v| v.to_i64().unwrap()).collect())
                .collect();
            got.sort();
            prop_assert_eq!(got, brute_force_facets(&gens));
        }

        #[test]
        fn interior_removal_preserves_cone(
            raw in prop::collection::vec(prop::collection::vec(0u64..=4, 3), 1..=6),
            probe in prop::collection::vec(0i64..=6, 3),
        ) {
            let gens: Vec<Vec<BigInt>> = normalize_signatures(
                &raw.iter().map(|v| sig(v)).collect::<Vec<_>>(),
            )
            .iter()
            .map(|s| to_int_vec(&s.counts))
            .collect();
            prop_assume!(!gens.is_empty());
            let kept: Vec<Vec<BigInt>> = remove_interior_generators(&gens)
                .into_iter()
                .map(|i| gens[i].clone())
                .collect();
            let p = q(&probe);
            prop_assert_eq!(cone_contains(&gens, 3, &p).unwrap(), cone_contains(&kept, 3, &p).unwrap());
        }
    }
}
