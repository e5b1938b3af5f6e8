//! Facet enumeration for pointed, full-rank cones.
//!
//! Incremental beneath-beyond update: start from the simplicial cone on `d`
//! independent generators, then insert the remaining generators one at a
//! time. Facets seen from the new generator are replaced by facets through
//! the new generator and each horizon ridge. Ridges are detected
//! combinatorially from generator incidence sets.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use super::{gcd_normalize, rref, GeometryError};

#[derive(Debug, Clone, PartialEq, Eq)]
struct Incidence(Vec<u64>);

impl Incidence {
    fn empty(n: usize) -> Self {
        Incidence(vec![0; n.div_ceil(64)])
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn and(&self, other: &Incidence) -> Incidence {
        Incidence(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn is_subset_of(&self, other: &Incidence) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & !b == 0)
    }
}

#[derive(Debug, Clone)]
struct Facet {
    normal: Vec<BigInt>,
    incident: Incidence,
}

fn dot(a: &[BigInt], b: &[BigInt]) -> BigInt {
    a.iter().zip(b).filter(|(x, _)| !x.is_zero()).map(|(x, y)| x * y).sum()
}

/// Picks `d` linearly independent generators, greedily in input order.
fn independent_subset(gens: &[Vec<BigInt>], d: usize) -> Vec<usize> {
    let mut chosen = Vec::new();
    let mut basis: Vec<Vec<BigRational>> = Vec::new();
    for (i, g) in gens.iter().enumerate() {
        let mut trial = basis.clone();
        trial.push(g.iter().cloned().map(BigRational::from_integer).collect());
        let rank = rref(&mut trial, d).len();
        if rank > basis.len() {
            basis = trial;
            chosen.push(i);
            if chosen.len() == d {
                break;
            }
        }
    }
    chosen
}

/// Columns of the inverse of the square matrix whose rows are `rows`.
fn inverse_columns(rows: &[Vec<BigInt>]) -> Vec<Vec<BigRational>> {
    let d = rows.len();
    let mut aug: Vec<Vec<BigRational>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut v: Vec<BigRational> = r.iter().cloned().map(BigRational::from_integer).collect();
            v.extend((0..d).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }));
            v
        })
        .collect();
    let pivots = rref(&mut aug, d);
    debug_assert_eq!(pivots.len(), d);
    (0..d).map(|j| (0..d).map(|i| aug[i][d + j].clone()).collect()).collect()
}

fn integer_direction(v: &[BigRational]) -> Vec<BigInt> {
    let scale = v.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let mut out: Vec<BigInt> = v.iter().map(|x| (x * &scale).to_integer()).collect();
    gcd_normalize(&mut out);
    out
}

fn two_dimensional(gens: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    let mut facets: Vec<Vec<BigInt>> = Vec::new();
    for g in gens {
        let mut normal = vec![-g[1].clone(), g[0].clone()];
        let values: Vec<BigInt> = gens.iter().map(|h| dot(&normal, h)).collect();
        if values.iter().all(|v| !v.is_negative()) {
        } else if values.iter().all(|v| !v.is_positive()) {
            normal = normal.into_iter().map(|x| -x).collect();
        } else {
            continue;
        }
        gcd_normalize(&mut normal);
        if !facets.contains(&normal) {
            facets.push(normal);
        }
    }
    facets
}

/// Facet normals `a` (with `a·g ≥ 0` for every generator) of the cone
/// generated by `gens`, which must span their whole space and contain no
/// line. Normals are integer with gcd 1, sorted lexicographically.
pub fn conic_hull_facets(gens: &[Vec<BigInt>]) -> Result<Vec<Vec<BigInt>>, GeometryError> {
    let Some(d) = gens.first().map(Vec::len) else {
        return Ok(Vec::new());
    };
    if let Some(g) = gens.iter().find(|g| g.len() != d) {
        return Err(GeometryError::DimensionMismatch { expected: d, got: g.len() });
    }
    let mut facets = match d {
        0 => Vec::new(),
        1 => {
            let positive = gens.iter().any(|g| g[0].is_positive());
            let negative = gens.iter().any(|g| g[0].is_negative());
            match (positive, negative) {
                (true, false) => vec![vec![BigInt::one()]],
                (false, true) => vec![vec![-BigInt::one()]],
                _ => return Err(GeometryError::DegenerateHull("one-dimensional cone is a line or a point".into())),
            }
        }
        2 => two_dimensional(gens),
        _ => incremental(gens, d)?,
    };
    for a in &facets {
        if gens.iter().any(|g| dot(a, g).is_negative()) {
            return Err(GeometryError::DegenerateHull("facet normal separates a generator".into()));
        }
        let tight: Vec<Vec<BigRational>> = gens
            .iter()
            .filter(|g| dot(a, g).is_zero())
            .map(|g| g.iter().cloned().map(BigRational::from_integer).collect())
            .collect();
        let mut tight = tight;
        if rref(&mut tight, d).len() + 1 != d {
            return Err(GeometryError::DegenerateHull("facet is not supported by rank - 1 generators".into()));
        }
    }
    facets.sort();
    Ok(facets)
}

fn incremental(gens: &[Vec<BigInt>], d: usize) -> Result<Vec<Vec<BigInt>>, GeometryError> {
    let n = gens.len();
    let start = independent_subset(gens, d);
    if start.len() < d {
        return Err(GeometryError::DegenerateHull(format!(
            "generators have rank {} in dimension {d}",
            start.len()
        )));
    }
    let basis: Vec<Vec<BigInt>> = start.iter().map(|&i| gens[i].clone()).collect();
    let mut facets: Vec<Facet> = inverse_columns(&basis)
        .iter()
        .enumerate()
        .map(|(k, col)| {
            let mut incident = Incidence::empty(n);
            for (j, &g) in start.iter().enumerate() {
                if j != k {
                    incident.insert(g);
                }
            }
            Facet {
                normal: integer_direction(col),
                incident,
            }
        })
        .collect();

    for gi in (0..n).filter(|i| !start.contains(i)) {
        let g = &gens[gi];
        let values: Vec<BigInt> = facets.par_iter().map(|f| dot(&f.normal, g)).collect();
        let visible: Vec<usize> = (0..facets.len()).filter(|&k| values[k].is_negative()).collect();
        if visible.is_empty() {
            for (f, v) in facets.iter_mut().zip(&values) {
                if v.is_zero() {
                    f.incident.insert(gi);
                }
            }
            continue;
        }
        let hidden: Vec<usize> = (0..facets.len()).filter(|&k| values[k].is_positive()).collect();

        let created: Vec<Facet> = visible
            .par_iter()
            .flat_map_iter(|&fv| {
                let facets = &facets;
                let values = &values;
                hidden.iter().filter_map(move |&fh| {
                    let common = facets[fv].incident.and(&facets[fh].incident);
                    if common.count() < d - 2 {
                        return None;
                    }
                    let adjacent = facets
                        .iter()
                        .enumerate()
                        .all(|(k, f)| k == fv || k == fh || !common.is_subset_of(&f.incident));
                    if !adjacent {
                        return None;
                    }
                    let sv = &values[fv];
                    let sh = &values[fh];
                    let mut normal: Vec<BigInt> = facets[fv]
                        .normal
                        .iter()
                        .zip(&facets[fh].normal)
                        .map(|(a, b)| sh * a - sv * b)
                        .collect();
                    gcd_normalize(&mut normal);
                    let mut incident = common;
                    incident.insert(gi);
                    Some(Facet { normal, incident })
                })
            })
            .collect();

        let mut next: Vec<Facet> = Vec::with_capacity(facets.len() + created.len());
        for (k, mut f) in facets.into_iter().enumerate() {
            if values[k].is_negative() {
                continue;
            }
            if values[k].is_zero() {
                f.incident.insert(gi);
            }
            next.push(f);
        }
        next.extend(created);
        facets = next;
    }
    Ok(facets.into_iter().map(|f| f.normal).collect())
}
