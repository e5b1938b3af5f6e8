//! Exact feasibility linear programs.
//!
//! Decides whether `{ x ≥ 0 : A x (≤|=|≥) b }` is empty using a phase-one
//! simplex over arbitrary-precision integers with Bland's rule. Each tableau
//! row is kept as an integer vector scaled by its own positive factor and
//! reduced by its content (gcd) after every pivot, so no rational
//! normalization happens per entry.
//!
//! Before the exact simplex runs, a floating-point phase one proposes a final
//! basis. That basis is then certified exactly: a non-negative basic solution
//! with zero artificials proves feasibility, and a Farkas vector `y` with
//! `yᵀA ≤ 0`, `yᵀb > 0` proves infeasibility. Only when neither certificate
//! holds does the exact simplex run from scratch.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<BigRational>,
    relation: Relation,
    rhs: BigRational,
}

/// A pure feasibility problem over non-negative variables.
#[derive(Debug, Clone)]
pub struct FeasibilityProblem {
    num_vars: usize,
    rows: Vec<Row>,
}

impl FeasibilityProblem {
    pub fn new(num_vars: usize) -> Self {
        FeasibilityProblem {
            num_vars,
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<BigRational>, relation: Relation, rhs: BigRational) {
        assert_eq!(coeffs.len(), self.num_vars, "row width must match variable count");
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn add_int_row(&mut self, coeffs: &[BigInt], relation: Relation, rhs: BigRational) {
        self.add_row(
            coeffs.iter().cloned().map(BigRational::from_integer).collect(),
            relation,
            rhs,
        );
    }

    /// Checks a candidate point exactly.
    pub fn is_satisfied_by(&self, x: &[BigRational]) -> bool {
        if x.len() != self.num_vars || x.iter().any(|v| v.is_negative()) {
            return false;
        }
        self.rows.iter().all(|row| {
            let lhs: BigRational = row.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            match row.relation {
                Relation::Le => lhs <= row.rhs,
                Relation::Eq => lhs == row.rhs,
                Relation::Ge => lhs >= row.rhs,
            }
        })
    }

    /// Returns a feasible point, or `None` if the system has no solution.
    pub fn solve(&self) -> Option<Vec<BigRational>> {
        let tableau = Tableau::build(self);
        match tableau.guided() {
            Some(Some((nums, d))) if tableau.satisfies(&nums, &d) => {
                return Some(nums.into_iter().map(|v| BigRational::new(v, d.clone())).collect());
            }
            Some(None) => return None,
            _ => {}
        }
        self.solve_exact_with(tableau)
    }

    /// Exact simplex only, without the floating-point guide.
    pub fn solve_exact(&self) -> Option<Vec<BigRational>> {
        self.solve_exact_with(Tableau::build(self))
    }

    fn solve_exact_with(&self, mut tableau: Tableau) -> Option<Vec<BigRational>> {
        tableau.run_phase_one();
        let x = tableau.solution()?;
        debug_assert!(self.is_satisfied_by(&x));
        Some(x)
    }
}

struct Tableau {
    num_vars: usize,
    // columns: [original vars | slacks | artificials], last entry of each row is the rhs
    rows: Vec<Vec<BigInt>>,
    basis: Vec<usize>,
    // phase-one reduced costs, scaled by an arbitrary positive factor
    cost: Vec<BigInt>,
    first_artificial: usize,
    width: usize,
    // relation of each row after sign normalization
    relations: Vec<Relation>,
}

fn lcm_of_denominators<'a>(values: impl Iterator<Item = &'a BigRational>) -> BigInt {
    values.fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

fn content(row: &[BigInt]) -> BigInt {
    let mut g = BigInt::zero();
    for v in row {
        if !v.is_zero() {
            g = g.gcd(v);
            if g.is_one() {
                break;
            }
        }
    }
    g
}

fn reduce(row: &mut [BigInt]) {
    let g = content(row);
    if !g.is_zero() && !g.is_one() {
        for v in row.iter_mut() {
            if !v.is_zero() {
                *v /= &g;
            }
        }
    }
}

impl Tableau {
    fn build(problem: &FeasibilityProblem) -> Self {
        let n = problem.num_vars;
        // integer rows with rhs >= 0
        let mut int_rows: Vec<(Vec<BigInt>, Relation, BigInt)> = Vec::with_capacity(problem.rows.len());
        for row in &problem.rows {
            let scale = lcm_of_denominators(row.coeffs.iter().chain(std::iter::once(&row.rhs)));
            let to_int = |v: &BigRational| v.numer() * (&scale / v.denom());
            let mut coeffs: Vec<BigInt> = row.coeffs.iter().map(to_int).collect();
            let mut rhs = to_int(&row.rhs);
            let mut relation = row.relation;
            if rhs.is_negative() || (rhs.is_zero() && relation == Relation::Ge) {
                for c in coeffs.iter_mut() {
                    *c = -&*c;
                }
                rhs = -rhs;
                relation = match relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            int_rows.push((coeffs, relation, rhs));
        }

        let slacks = int_rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let artificials = int_rows.iter().filter(|r| r.1 != Relation::Le).count();
        let first_slack = n;
        let first_artificial = n + slacks;
        let width = first_artificial + artificials;

        let relations = int_rows.iter().map(|r| r.1).collect();
        let mut rows = Vec::with_capacity(int_rows.len());
        let mut basis = Vec::with_capacity(int_rows.len());
        let mut cost = vec![BigInt::zero(); width + 1];
        let (mut s, mut a) = (first_slack, first_artificial);
        for (coeffs, relation, rhs) in int_rows {
            let mut row = coeffs;
            row.resize(width + 1, BigInt::zero());
            row[width] = rhs;
            match relation {
                Relation::Le => {
                    row[s] = BigInt::one();
                    basis.push(s);
                    s += 1;
                }
                Relation::Ge => {
                    row[s] = -BigInt::one();
                    row[a] = BigInt::one();
                    basis.push(a);
                    s += 1;
                    a += 1;
                }
                Relation::Eq => {
                    row[a] = BigInt::one();
                    basis.push(a);
                    a += 1;
                }
            }
            if *basis.last().unwrap() >= first_artificial {
                // minimize the sum of artificials: subtract the row from the cost row
                for (c, v) in cost.iter_mut().zip(&row) {
                    if !v.is_zero() {
                        *c -= v;
                    }
                }
            }
            rows.push(row);
        }
        for c in cost.iter_mut().take(width).skip(first_artificial) {
            *c += 1;
        }
        Tableau {
            num_vars: n,
            rows,
            basis,
            cost,
            first_artificial,
            width,
            relations,
        }
    }

    /// Checks `x = nums / d` (with `d > 0`) against the untouched rows.
    fn satisfies(&self, nums: &[BigInt], d: &BigInt) -> bool {
        if nums.iter().any(|v| v.is_negative()) {
            return false;
        }
        self.rows.iter().zip(&self.relations).all(|(row, rel)| {
            let lhs: BigInt = row[..self.num_vars].iter().zip(nums).filter(|(a, _)| !a.is_zero()).map(|(a, v)| a * v).sum();
            let rhs = &row[self.width] * d;
            match rel {
                Relation::Le => lhs <= rhs,
                Relation::Eq => lhs == rhs,
                Relation::Ge => lhs >= rhs,
            }
        })
    }

    fn run_phase_one(&mut self) {
        while let Some(col) = self.entering() {
            let row = self
                .leaving(col)
                .expect("phase-one objective is bounded below");
            self.pivot(row, col);
        }
    }

    // Bland: lowest-index column with negative reduced cost.
    fn entering(&self) -> Option<usize> {
        (0..self.first_artificial).find(|&j| self.cost[j].is_negative())
    }

    // Bland: minimum ratio, ties broken by the lowest basic variable index.
    fn leaving(&self, col: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, row) in self.rows.iter().enumerate() {
            if !row[col].is_positive() {
                continue;
            }
            best = Some(match best {
                None => i,
                Some(b) => {
                    let lhs = &row[self.width] * &self.rows[b][col];
                    let rhs = &self.rows[b][self.width] * &row[col];
                    match lhs.cmp(&rhs) {
                        std::cmp::Ordering::Less => i,
                        std::cmp::Ordering::Equal if self.basis[i] < self.basis[b] => i,
                        _ => b,
                    }
                }
            });
        }
        best
    }

    fn pivot(&mut self, r: usize, k: usize) {
        let pivot_row = std::mem::take(&mut self.rows[r]);
        let p = pivot_row[k].clone();
        let eliminate = |target: &mut Vec<BigInt>| {
            let factor = target[k].clone();
            if factor.is_zero() {
                return;
            }
            for (t, v) in target.iter_mut().zip(&pivot_row) {
                if v.is_zero() {
                    if !t.is_zero() {
                        *t *= &p;
                    }
                } else {
                    *t = &*t * &p - &factor * v;
                }
            }
            reduce(target);
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.cost);
        self.rows[r] = pivot_row;
        reduce(&mut self.rows[r]);
        self.basis[r] = k;
    }

    fn solution(&self) -> Option<Vec<BigRational>> {
        let mut x = vec![BigRational::zero(); self.num_vars];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let rhs = &row[self.width];
            if b >= self.first_artificial {
                if rhs.is_positive() {
                    return None;
                }
            } else if b < self.num_vars {
                x[b] = BigRational::new(rhs.clone(), row[b].clone());
            }
        }
        Some(x)
    }
}

const FLOAT_EPS: f64 = 1e-9;

/// Fraction-free Gauss-Jordan elimination of `[a | rhs]` (Bareiss). Every
/// division is exact and every entry stays a minor of the input. Returns the
/// solution as numerators over one positive common denominator, or `None` if
/// `a` is singular.
fn solve_integer_system(mut m: Vec<Vec<BigInt>>) -> Option<(Vec<BigInt>, BigInt)> {
    let n = m.len();
    let mut prev = BigInt::one();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let pivot_row = std::mem::take(&mut m[col]);
        let p = pivot_row[col].clone();
        for row in m.iter_mut() {
            if row.is_empty() {
                continue;
            }
            let f = row[col].clone();
            for (t, v) in row.iter_mut().zip(&pivot_row) {
                *t = (&*t * &p - &f * v) / &prev;
            }
        }
        m[col] = pivot_row;
        prev = p;
    }
    // every diagonal entry now equals the determinant
    let (nums, mut denom): (Vec<BigInt>, BigInt) = (m.iter().map(|r| r[n].clone()).collect(), prev);
    if denom.is_negative() {
        denom = -denom;
        return Some((nums.into_iter().map(|v| -v).collect(), denom));
    }
    Some((nums, denom))
}

impl Tableau {
    /// Floating-point phase one from the initial basis; returns the final
    /// basis, or `None` if the float run is unusable.
    fn float_basis(&self) -> Option<Vec<usize>> {
        let w = self.width;
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let mut r: Vec<f64> = row.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
            if r.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let scale = r[..w].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale > 0.0 {
                r.iter_mut().for_each(|v| *v /= scale);
            }
            // slack and artificial columns have one nonzero each; rescaling
            // them to unit size leaves the set of feasible bases unchanged
            for v in r[self.num_vars..w].iter_mut() {
                if *v != 0.0 {
                    *v = v.signum();
                }
            }
            rows.push(r);
        }
        let mut basis = self.basis.clone();
        let mut cost = vec![0.0; w + 1];
        for (row, &b) in rows.iter().zip(&basis) {
            if b >= self.first_artificial {
                for (c, v) in cost.iter_mut().zip(row) {
                    *c -= v;
                }
            }
        }
        // every artificial starts basic, so its reduced cost is zero; the
        // objective is a positively weighted sum of artificials
        for c in cost.iter_mut().take(w).skip(self.first_artificial) {
            *c = 0.0;
        }
        let limit = 50 * (rows.len() + w) + 1000;
        for _ in 0..limit {
            // most negative reduced cost
            let entering = (0..self.first_artificial)
                .filter(|&j| cost[j] < -FLOAT_EPS)
                .min_by(|&a, &b| cost[a].total_cmp(&cost[b]));
            let Some(k) = entering else { return Some(basis) };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in rows.iter().enumerate() {
                if row[k] <= FLOAT_EPS {
                    continue;
                }
                let ratio = row[w].max(0.0) / row[k];
                best = match best {
                    Some((b, r)) if ratio > r + FLOAT_EPS || (ratio >= r - FLOAT_EPS && basis[i] > basis[b]) => Some((b, r)),
                    _ => Some((i, ratio)),
                };
            }
            let (r, _) = best?;
            let pivot_row: Vec<f64> = {
                let p = rows[r][k];
                rows[r].iter().map(|v| v / p).collect()
            };
            for (i, row) in rows.iter_mut().enumerate() {
                if i == r {
                    continue;
                }
                let f = row[k];
                if f != 0.0 {
                    row.iter_mut().zip(&pivot_row).for_each(|(t, v)| *t -= f * v);
                    row[k] = 0.0;
                }
            }
            let f = cost[k];
            cost.iter_mut().zip(&pivot_row).for_each(|(t, v)| *t -= f * v);
            cost[k] = 0.0;
            rows[r] = pivot_row;
            basis[r] = k;
        }
        None
    }

    /// Certifies the float basis exactly. `Some(Some((nums, d)))`: feasible at
    /// `nums / d`; `Some(None)`: infeasible; `None`: no certificate.
    fn guided(&self) -> Option<Option<(Vec<BigInt>, BigInt)>> {
        if self.rows.is_empty() {
            return None;
        }
        let basis = self.float_basis()?;
        let w = self.width;
        let m = self.rows.len();

        // basic solution: B x_B = b
        let system: Vec<Vec<BigInt>> = self
            .rows
            .iter()
            .map(|row| basis.iter().map(|&j| row[j].clone()).chain(std::iter::once(row[w].clone())).collect())
            .collect();
        let (xb, d) = solve_integer_system(system)?;
        let artificial_level: BigInt = basis
            .iter()
            .zip(&xb)
            .filter(|(&j, _)| j >= self.first_artificial)
            .map(|(_, v)| v.clone())
            .sum();
        if xb.iter().all(|v| !v.is_negative()) && artificial_level.is_zero() {
            let mut x = vec![BigInt::zero(); self.num_vars];
            for (&j, v) in basis.iter().zip(xb) {
                if j < self.num_vars {
                    x[j] = v;
                }
            }
            return Some(Some((x, d)));
        }

        // Farkas vector from the phase-one duals: Bᵀ y = c_B
        let transposed: Vec<Vec<BigInt>> = (0..m)
            .map(|k| {
                let cb = if basis[k] >= self.first_artificial { BigInt::one() } else { BigInt::zero() };
                self.rows.iter().map(|row| row[basis[k]].clone()).chain(std::iter::once(cb)).collect()
            })
            .collect();
        let (y, _) = solve_integer_system(transposed)?;
        let dot = |col: usize| -> BigInt { self.rows.iter().zip(&y).map(|(row, yi)| &row[col] * yi).sum() };
        if dot(w).is_positive() && (0..self.first_artificial).all(|j| !dot(j).is_positive()) {
            return Some(None);
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn qv(v: &[i64]) -> Vec<BigRational> {
        v.iter().map(|&n| q(n)).collect()
    }

    #[test]
    fn simple_feasible() {
        let mut lp = FeasibilityProblem::new(2);
        lp.add_row(qv(&[1, 1]), Relation::Eq, q(3));
        lp.add_row(qv(&[1, -1]), Relation::Ge, q(1));
        let x = lp.solve().unwrap();
        assert!(lp.is_satisfied_by(&x));
    }

    #[test]
    fn simple_infeasible() {
        let mut lp = FeasibilityProblem::new(2);
        lp.add_row(qv(&[1, 1]), Relation::Le, q(1));
        lp.add_row(qv(&[1, 1]), Relation::Ge, q(2));
        assert!(lp.solve().is_none());
    }

    #[test]
    fn negative_rhs_and_fractions() {
        let mut lp = FeasibilityProblem::new(1);
        lp.add_row(vec![BigRational::new((-2).into(), 3.into())], Relation::Eq, BigRational::new((-1).into(), 5.into()));
        let x = lp.solve().unwrap();
        assert_eq!(x[0], BigRational::new(3.into(), 10.into()));
    }

    #[test]
    fn no_rows_is_feasible() {
        let lp = FeasibilityProblem::new(3);
        assert_eq!(lp.solve().unwrap(), qv(&[0, 0, 0]));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // classic cycling example shape: many zero right-hand sides
        let mut lp = FeasibilityProblem::new(4);
        lp.add_row(qv(&[1, -11, -5, 18]), Relation::Le, q(0));
        lp.add_row(qv(&[1, -3, -1, 2]), Relation::Le, q(0));
        lp.add_row(qv(&[1, 0, 0, 0]), Relation::Eq, q(1));
        lp.add_row(qv(&[0, 1, 1, 1]), Relation::Ge, q(1));
        let x = lp.solve().unwrap();
        assert!(lp.is_satisfied_by(&x));
    }

    /// Gaussian elimination over the rationals; returns None if singular.
    fn solve_square(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Option<Vec<BigRational>> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
            a.swap(col, piv);
            b.swap(col, piv);
            for r in 0..n {
                if r != col && !a[r][col].is_zero() {
                    let f = &a[r][col] / &a[col][col];
                    for c in 0..n {
                        let d = &f * &a[col][c];
                        a[r][c] -= d;
                    }
                    let d = &f * &b[col];
                    b[r] -= d;
                }
            }
        }
        Some((0..n).map(|i| &b[i] / &a[i][i]).collect())
    }

    /// Brute-force oracle for `A x = b, x >= 0`: a feasible system has a basic
    /// feasible solution on some set of columns, so try them all.
    fn brute_force_feasible(a: &[Vec<i64>], b: &[i64]) -> bool {
        let m = a.len();
        let n = a[0].len();
        for mask in 0u32..(1 << n) {
            let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
            if cols.len() > m {
                continue;
            }
            // least-squares free check: pick rows subsets of size |cols|
            let k = cols.len();
            for rmask in 0u32..(1 << m) {
                if rmask.count_ones() as usize != k {
                    continue;
                }
                let rs: Vec<usize> = (0..m).filter(|i| rmask & (1 << i) != 0).collect();
                let sub: Vec<Vec<BigRational>> = rs
                    .iter()
                    .map(|&i| cols.iter().map(|&j| q(a[i][j])).collect())
                    .collect();
                let rhs: Vec<BigRational> = rs.iter().map(|&i| q(b[i])).collect();
                let Some(xs) = solve_square(sub, rhs) else { continue };
                if xs.iter().any(|v| v.is_negative()) {
                    continue;
                }
                let mut x = vec![BigRational::zero(); n];
                for (&j, v) in cols.iter().zip(xs) {
                    x[j] = v;
                }
                let ok = (0..m).all(|i| {
                    let lhs: BigRational = (0..n).map(|j| q(a[i][j]) * &x[j]).sum();
                    lhs == q(b[i])
                });
                if ok {
                    return true;
                }
            }
        }
        false
    }

    fn relation(k: u8) -> Relation {
        match k % 3 {
            0 => Relation::Le,
            1 => Relation::Eq,
            _ => Relation::Ge,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn guided_agrees_with_exact(
            rows in prop::collection::vec((prop::collection::vec(-4i64..=4, 5), 0u8..3, -6i64..=6), 1..=6),
        ) {
            let mut lp = FeasibilityProblem::new(5);
            for (coeffs, k, rhs) in &rows {
                lp.add_row(qv(coeffs), relation(*k), q(*rhs));
            }
            let guided = lp.solve();
            let exact = lp.solve_exact();
            prop_assert_eq!(guided.is_some(), exact.is_some());
            if let Some(x) = guided {
                prop_assert!(lp.is_satisfied_by(&x));
            }
        }

        #[test]
        fn guided_handles_float_coefficients(
            rows in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 4), 0u8..3, -1.0f64..1.0), 1..=8),
        ) {
            let mut lp = FeasibilityProblem::new(4);
            for (coeffs, k, rhs) in &rows {
                let c = coeffs.iter().map(|&v| BigRational::from_float(v).unwrap()).collect();
                lp.add_row(c, relation(*k), BigRational::from_float(*rhs).unwrap());
            }
            prop_assert_eq!(lp.solve().is_some(), lp.solve_exact().is_some());
        }

        #[test]
        fn agrees_with_basic_solution_enumeration(
            a in prop::collection::vec(prop::collection::vec(-3i64..=3, 4), 1..=3),
            b in prop::collection::vec(-4i64..=4, 3),
        ) {
            let m = a.len();
            let b = &b[..m];
            let mut lp = FeasibilityProblem::new(4);
            for (row, &rhs) in a.iter().zip(b) {
                lp.add_row(qv(row), Relation::Eq, q(rhs));
            }
            let got = lp.solve();
            if let Some(x) = &got {
                prop_assert!(lp.is_satisfied_by(x));
            }
            prop_assert_eq!(got.is_some(), brute_force_feasible(&a, b));
        }
    }
}
