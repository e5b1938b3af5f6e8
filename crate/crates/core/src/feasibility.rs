//! Does a confidence region intersect a model cone?
//!
//! The counter vector is substituted by the flow sum `v = Σ σ_p·f(p)`, so the
//! program has one non-negative variable per µpath and two rows per region
//! axis: `c_i - h_i ≤ e_i·Σ σ_p·f(p) ≤ c_i + h_i` with `c_i = e_i·Ȳ`. Axes of
//! zero half-length become equality rows. Region data are floats and are
//! converted to rationals exactly. Non-negativity of `v` follows from that of
//! the signatures and flows.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{self, Constraint, ConstraintKind, ConstraintSet};
use crate::lp::{FeasibilityProblem, Relation};
use crate::mudd::{self, CounterNamespace, CounterSignature, MuDD, MuPath, MuddError, DEFAULT_PATH_CAP};
use crate::stats::{self, ConfidenceRegion, ObservationSet, RegionOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0} flow variables exceed the cap of {1}")]
    PathExplosion(usize, usize),
    #[error("observation counter `{0}` is not in the model namespace")]
    ForeignCounter(String),
    #[error("non-finite region value {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeasibilityOptions {
    /// Use one flow variable per distinct signature instead of per µpath.
    pub compress: bool,
    pub flow_cap: usize,
}

impl Default for FeasibilityOptions {
    fn default() -> Self {
        FeasibilityOptions {
            compress: false,
            flow_cap: DEFAULT_PATH_CAP,
        }
    }
}

/// How the violated constraints of an infeasible verdict were found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attribution {
    /// The whole region lies outside each listed half-space.
    Region,
    /// No single half-space excludes the whole region; listed constraints
    /// are those violated at the region center.
    Center,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    /// Non-zero flows as (µpath index, flow).
    pub witness_flow: Option<Vec<(usize, BigRational)>>,
    pub witness_point: Option<Vec<BigRational>>,
    pub violated: Vec<Constraint>,
    pub attribution: Option<Attribution>,
    pub namespace: CounterNamespace,
}

impl FeasibilityVerdict {
    pub fn to_json(&self) -> serde_json::Value {
        let flow = self.witness_flow.as_ref().map(|f| {
            f.iter()
                .map(|(p, v)| serde_json::json!({ "path": p, "flow": v.to_f64() }))
                .collect::<Vec<_>>()
        });
        let point = self
            .witness_point
            .as_ref()
            .map(|v| v.iter().map(|x| x.to_f64()).collect::<Vec<_>>());
        serde_json::json!({
            "feasible": self.feasible,
            "witness_flow": flow,
            "witness_point": point,
            "violated": self.violated.iter().map(|c| c.to_json(&self.namespace)).collect::<Vec<_>>(),
            "attribution": self.attribution,
        })
    }
}

fn rational(x: f64) -> Result<BigRational, FeasibilityError> {
    BigRational::from_float(x).ok_or(FeasibilityError::NonFinite(x))
}

fn rational_vec(v: &[f64]) -> Result<Vec<BigRational>, FeasibilityError> {
    v.iter().map(|&x| rational(x)).collect()
}

/// Builds the region rows over the given flow directions. Each axis row is
/// scaled by the common denominator of its entries so the per-flow
/// coefficients are computed over the integers.
fn region_problem(gens: &[&[u64]], region: &ConfidenceRegion) -> Result<FeasibilityProblem, FeasibilityError> {
    let center = rational_vec(&region.center)?;
    let mut lp = FeasibilityProblem::new(gens.len());
    for (axis, &h) in region.axes.iter().zip(&region.half_lengths) {
        let e = rational_vec(axis)?;
        let denom = e.iter().fold(BigInt::from(1), |acc, v| num_integer::Integer::lcm(&acc, v.denom()));
        let scaled: Vec<BigInt> = e.iter().map(|v| (v * &denom).to_integer()).collect();
        let coeffs: Vec<BigInt> = gens
            .iter()
            .map(|g| {
                scaled
                    .iter()
                    .zip(g.iter())
                    .filter(|(a, &c)| c != 0 && !a.is_zero())
                    .map(|(a, &c)| a * BigInt::from(c))
                    .sum()
            })
            .collect();
        let c: BigRational = e.iter().zip(&center).map(|(a, y)| a * y).sum();
        let h = rational(h)?;
        let d = BigRational::from_integer(denom);
        if h.is_zero() {
            lp.add_int_row(&coeffs, Relation::Eq, c * d);
        } else {
            lp.add_int_row(&coeffs, Relation::Le, (&c + &h) * &d);
            lp.add_int_row(&coeffs, Relation::Ge, (c - h) * d);
        }
    }
    Ok(lp)
}

/// Solves the region/cone program for the given µpath signatures.
pub fn check_feasibility(
    sigs: &[CounterSignature],
    region: &ConfidenceRegion,
    options: &FeasibilityOptions,
) -> Result<FeasibilityVerdict, FeasibilityError> {
    let n = region.dim();
    if let Some(s) = sigs.iter().find(|s| s.dim() != n) {
        return Err(FeasibilityError::DimensionMismatch {
            expected: n,
            got: s.dim(),
        });
    }
    if region.axes.len() != n || region.half_lengths.len() != n {
        return Err(FeasibilityError::DimensionMismatch {
            expected: n,
            got: region.axes.len(),
        });
    }

    // columns: (signature, path index of the column's representative)
    let mut columns: Vec<(&[u64], usize)> = Vec::new();
    if options.compress {
        let mut seen: HashMap<&[u64], ()> = HashMap::new();
        for (i, s) in sigs.iter().enumerate() {
            if seen.insert(&s.counts, ()).is_none() {
                columns.push((&s.counts, s.source_path.unwrap_or(i)));
            }
        }
    } else {
        columns.extend(sigs.iter().enumerate().map(|(i, s)| (s.counts.as_slice(), s.source_path.unwrap_or(i))));
    }
    if columns.len() > options.flow_cap {
        return Err(FeasibilityError::PathExplosion(columns.len(), options.flow_cap));
    }

    let gens: Vec<&[u64]> = columns.iter().map(|(g, _)| *g).collect();
    let lp = region_problem(&gens, region)?;
    let namespace = placeholder_namespace(n);
    match lp.solve() {
        Some(f) => {
            let mut point = vec![BigRational::zero(); n];
            let mut flow = Vec::new();
            for ((g, path), x) in columns.iter().zip(f) {
                if x.is_zero() {
                    continue;
                }
                for (v, &c) in point.iter_mut().zip(g.iter()) {
                    if c != 0 {
                        *v += &x * BigInt::from(c);
                    }
                }
                flow.push((*path, x));
            }
            Ok(FeasibilityVerdict {
                feasible: true,
                witness_flow: Some(flow),
                witness_point: Some(point),
                violated: Vec::new(),
                attribution: None,
                namespace,
            })
        }
        None => Ok(FeasibilityVerdict {
            feasible: false,
            witness_flow: None,
            witness_point: None,
            violated: Vec::new(),
            attribution: None,
            namespace,
        }),
    }
}

fn placeholder_namespace(n: usize) -> CounterNamespace {
    CounterNamespace::new((0..n).map(|i| format!("v{i}"))).expect("distinct names")
}

/// Exact bounds of `a·v` over the region box.
fn range_over_region(a: &[BigInt], region: &ConfidenceRegion) -> Result<(BigRational, BigRational), FeasibilityError> {
    let center = rational_vec(&region.center)?;
    let mid: BigRational = a.iter().zip(&center).filter(|(c, _)| !c.is_zero()).map(|(c, y)| y * c).sum();
    let mut spread = BigRational::zero();
    for (axis, &h) in region.axes.iter().zip(&region.half_lengths) {
        if h == 0.0 {
            continue;
        }
        let e = rational_vec(axis)?;
        let ae: BigRational = a.iter().zip(&e).filter(|(c, _)| !c.is_zero()).map(|(c, x)| x * c).sum();
        spread += ae.abs() * rational(h)?;
    }
    Ok((&mid - &spread, mid + spread))
}

/// Constraints whose half-space (or hyperplane) misses the whole region.
pub fn attribute_violations(constraints: &ConstraintSet, region: &ConfidenceRegion) -> Vec<Constraint> {
    constraints
        .iter()
        .filter(|c| {
            let Ok((lo, hi)) = range_over_region(&c.coefficients, region) else {
                return false;
            };
            match c.kind {
                ConstraintKind::Inequality => hi.is_negative(),
                ConstraintKind::Equality => lo.is_positive() || hi.is_negative(),
            }
        })
        .cloned()
        .collect()
}

fn violated_at_center(constraints: &ConstraintSet, region: &ConfidenceRegion) -> Vec<Constraint> {
    let Ok(center) = rational_vec(&region.center) else {
        return Vec::new();
    };
    constraints.iter().filter(|c| !c.is_satisfied_by(&center)).cloned().collect()
}

/// Feasibility plus violation attribution against a deduced constraint set.
///
/// `constraints` is only evaluated when the verdict is infeasible.
pub fn check_with_constraints<F>(
    sigs: &[CounterSignature],
    constraints: F,
    region: &ConfidenceRegion,
    options: &FeasibilityOptions,
) -> Result<FeasibilityVerdict, FeasibilityError>
where
    F: FnOnce() -> Option<ConstraintSet>,
{
    let mut verdict = check_feasibility(sigs, region, options)?;
    if !verdict.feasible {
        if let Some(set) = constraints() {
            let mut violated = attribute_violations(&set, region);
            let mut attribution = Attribution::Region;
            if violated.is_empty() {
                violated = violated_at_center(&set, region);
                attribution = Attribution::Center;
            }
            verdict.violated = violated;
            verdict.attribution = Some(attribution);
            verdict.namespace = set.namespace.clone();
        }
    }
    Ok(verdict)
}

/// A µpath whose signature lies strictly outside a constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementCandidate {
    pub index: usize,
    pub path: MuPath,
    pub signature: CounterSignature,
}

/// µpaths of `candidate` whose signatures violate `constraint` (given over
/// `ns`). Counters of `ns` absent from the candidate count as zero.
pub fn refinement_candidates(
    constraint: &Constraint,
    ns: &CounterNamespace,
    candidate: &MuDD,
    cap: usize,
) -> Result<Vec<RefinementCandidate>, MuddError> {
    let target = candidate.namespace();
    let mut coeffs = vec![BigInt::zero(); target.len()];
    for (i, a) in constraint.coefficients.iter().enumerate() {
        if let Some(j) = target.index_of(ns.name(i)) {
            coeffs[j] = a.clone();
        }
    }
    let remapped = Constraint {
        kind: constraint.kind,
        coefficients: coeffs,
        provenance: constraint.provenance,
    };
    let paths = mudd::enumerate_mupaths(candidate, cap)?;
    let mut out = Vec::new();
    for (index, path) in paths.into_iter().enumerate() {
        let mut signature = mudd::signature_of(candidate, &path, target)?;
        signature.source_path = Some(index);
        let value = remapped.evaluate_counts(&signature.counts);
        let violates = match constraint.kind {
            ConstraintKind::Inequality => value.is_negative(),
            ConstraintKind::Equality => !value.is_zero(),
        };
        if violates {
            out.push(RefinementCandidate { index, path, signature });
        }
    }
    Ok(out)
}

/// One cell of a batch run.
#[derive(Debug, Clone)]
pub struct BatchRow {
    pub model: String,
    pub run_id: String,
    pub outcome: Result<FeasibilityVerdict, String>,
}

impl BatchRow {
    pub fn is_infeasible(&self) -> bool {
        matches!(&self.outcome, Ok(v) if !v.feasible)
    }

    pub fn to_json(&self) -> serde_json::Value {
        match &self.outcome {
            Ok(v) => {
                let mut j = v.to_json();
                j["model"] = self.model.clone().into();
                j["run_id"] = self.run_id.clone().into();
                j
            }
            Err(e) => serde_json::json!({ "model": self.model, "run_id": self.run_id, "error": e }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchOptions {
    pub region: RegionOptions,
    pub feasibility: FeasibilityOptions,
    pub path_cap: usize,
}

struct ModelData {
    signatures: Result<Vec<CounterSignature>, MuddError>,
}

/// Model signatures restricted to an observation's counters, with the
/// restricted constraint set deduced on first use.
struct Projected {
    namespace: CounterNamespace,
    signatures: Result<Vec<CounterSignature>, String>,
    constraints: OnceLock<Option<ConstraintSet>>,
}

fn project_model(model: &MuDD, data: &ModelData, obs_ns: &CounterNamespace) -> Projected {
    let signatures = match &data.signatures {
        Err(e) => Err(e.to_string()),
        Ok(sigs) => {
            let coords: Result<Vec<usize>, String> = obs_ns
                .names()
                .iter()
                .map(|n| {
                    model
                        .namespace()
                        .index_of(n)
                        .ok_or_else(|| FeasibilityError::ForeignCounter(n.clone()).to_string())
                })
                .collect();
            coords.map(|c| sigs.iter().map(|s| s.project(&c)).collect())
        }
    };
    Projected {
        namespace: obs_ns.clone(),
        signatures,
        constraints: OnceLock::new(),
    }
}

/// Checks every observation against every model, in parallel. Rows are
/// sorted by model name, then run id.
pub fn batch_check(models: &[(String, MuDD)], observations: &[ObservationSet], options: &BatchOptions) -> Vec<BatchRow> {
    let cap = if options.path_cap == 0 { DEFAULT_PATH_CAP } else { options.path_cap };
    let data: Vec<ModelData> = models
        .par_iter()
        .map(|(_, m)| ModelData {
            signatures: mudd::signatures_of_model(m, cap),
        })
        .collect();
    let regions: Vec<Result<ConfidenceRegion, String>> = observations
        .par_iter()
        .map(|o| stats::build_confidence_region(o, &options.region).map_err(|e| e.to_string()))
        .collect();

    // one projection per (model, distinct observation namespace)
    let mut ns_index: Vec<&CounterNamespace> = Vec::new();
    let obs_ns: Vec<usize> = observations
        .iter()
        .map(|o| match ns_index.iter().position(|n| **n == o.namespace) {
            Some(i) => i,
            None => {
                ns_index.push(&o.namespace);
                ns_index.len() - 1
            }
        })
        .collect();
    let projected: Vec<Vec<Projected>> = models
        .iter()
        .zip(&data)
        .map(|((_, m), d)| ns_index.iter().map(|ns| project_model(m, d, ns)).collect())
        .collect();

    let cells: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|m| (0..observations.len()).map(move |o| (m, o)))
        .collect();
    let mut rows: Vec<BatchRow> = cells
        .par_iter()
        .map(|&(m, o)| {
            let proj = &projected[m][obs_ns[o]];
            let outcome = match (&proj.signatures, &regions[o]) {
                (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                (Ok(sigs), Ok(region)) => check_with_constraints(
                    sigs,
                    || {
                        proj.constraints
                            .get_or_init(|| geometry::deduce_from_signatures(sigs, &proj.namespace).ok())
                            .clone()
                    },
                    region,
                    &options.feasibility,
                )
                .map(|mut v| {
                    v.namespace = proj.namespace.clone();
                    v
                })
                .map_err(|e| e.to_string()),
            };
            BatchRow {
                model: models[m].0.clone(),
                run_id: observations[o].run_id.clone(),
                outcome,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.model.cmp(&b.model).then_with(|| a.run_id.cmp(&b.run_id)));
    rows
}

/// Human-readable verdict report.
pub fn render_report(rows: &[BatchRow]) -> String {
    let mut out = String::new();
    for row in rows {
        match &row.outcome {
            Ok(v) if v.feasible => {
                let _ = writeln!(out, "{} {}: feasible", row.model, row.run_id);
            }
            Ok(v) => {
                let note = match v.attribution {
                    Some(Attribution::Center) => " (violated at region center)",
                    _ => "",
                };
                let _ = writeln!(out, "{} {}: INFEASIBLE{note}", row.model, row.run_id);
                for c in &v.violated {
                    let _ = writeln!(out, "    {}", c.display(&v.namespace));
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{} {}: error: {e}", row.model, row.run_id);
            }
        }
    }
    let infeasible = rows.iter().filter(|r| r.is_infeasible()).count();
    let errors = rows.iter().filter(|r| r.outcome.is_err()).count();
    let _ = writeln!(
        out,
        "{} checked, {} infeasible, {} errors",
        rows.len(),
        infeasible,
        errors
    );
    out
}

/// Deduces constraints for `model` and checks one region against it.
pub fn check_model(
    model: &MuDD,
    region: &ConfidenceRegion,
    options: &FeasibilityOptions,
    cap: usize,
) -> Result<FeasibilityVerdict, crate::Error> {
    let sigs = mudd::signatures_of_model(model, cap)?;
    let verdict = check_with_constraints(
        &sigs,
        || geometry::deduce_from_signatures(&sigs, model.namespace()).ok(),
        region,
        options,
    )?;
    Ok(FeasibilityVerdict {
        namespace: model.namespace().clone(),
        ..verdict
    })
}
