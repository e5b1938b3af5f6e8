//! Bookkeeping for the expert-driven model search.
//!
//! A catalog records the models an expert has tried, their feature tags, how
//! many observations each fails, and how each was derived from its parent:
//! a relaxation adds features to remove violations, a pruning removes
//! features from a model to find a smaller one that still fits.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::{self, BatchOptions};
use crate::geometry::{self, normalize_signatures, to_int_vec, GeometryError};
use crate::mudd::{self, MuDD, MuddError};
use crate::stats::ObservationSet;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExplorationError {
    #[error("model `{0}` appears more than once")]
    DuplicateName(String),
    #[error("model `{entry}` names unknown parent `{parent}`")]
    UnresolvedParent { entry: String, parent: String },
    #[error("no feasible model in the catalog")]
    NoFeasibleModel,
    #[error("counter namespaces differ: {0}")]
    DimensionMismatch(String),
    #[error("catalog: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Relaxation,
    Pruning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentRef {
    pub name: String,
    pub edge: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    #[serde(default)]
    pub features: BTreeSet<String>,
    /// `.mudd` or graph `.json` file, relative to the catalog file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub infeasible_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<ParentRef>,
}

impl ModelEntry {
    pub fn is_feasible(&self) -> bool {
        self.infeasible_count == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCatalog {
    #[serde(default)]
    pub dataset: String,
    /// Column order for reports; features not listed are appended sorted.
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default, rename = "models")]
    pub entries: Vec<ModelEntry>,
}

impl ModelCatalog {
    pub fn from_json(text: &str) -> Result<Self, ExplorationError> {
        let catalog: ModelCatalog = serde_json::from_str(text).map_err(|e| ExplorationError::Format(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn load(path: &Path) -> Result<Self, ExplorationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExplorationError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    /// Checks that names are unique and parents resolve.
    pub fn validate(&self) -> Result<(), ExplorationError> {
        let mut names = BTreeSet::new();
        for e in &self.entries {
            if !names.insert(e.name.as_str()) {
                return Err(ExplorationError::DuplicateName(e.name.clone()));
            }
        }
        for e in &self.entries {
            if let Some(p) = &e.parent {
                if !names.contains(p.name.as_str()) {
                    return Err(ExplorationError::UnresolvedParent {
                        entry: e.name.clone(),
                        parent: p.name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ModelEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Feature columns: the declared order, then any others sorted.
    pub fn feature_columns(&self) -> Vec<String> {
        let mut cols = self.features.clone();
        let extra: BTreeSet<&String> = self
            .entries
            .iter()
            .flat_map(|e| &e.features)
            .filter(|f| !self.features.contains(f))
            .collect();
        cols.extend(extra.into_iter().cloned());
        cols
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub feasible: Vec<String>,
    pub infeasible: Vec<String>,
}

/// Splits entries by whether they fail any observation. Catalog order is kept.
pub fn classify(catalog: &ModelCatalog) -> Classification {
    let mut c = Classification::default();
    for e in &catalog.entries {
        if e.is_feasible() {
            c.feasible.push(e.name.clone());
        } else {
            c.infeasible.push(e.name.clone());
        }
    }
    c
}

/// Features present in every feasible entry.
pub fn required_features(catalog: &ModelCatalog) -> Result<BTreeSet<String>, ExplorationError> {
    let mut feasible = catalog.entries.iter().filter(|e| e.is_feasible());
    let first = feasible.next().ok_or(ExplorationError::NoFeasibleModel)?;
    Ok(feasible.fold(first.features.clone(), |acc, e| {
        acc.intersection(&e.features).cloned().collect()
    }))
}

/// True iff the parent's cone is contained in the child's: every parent
/// generator is a non-negative combination of child generators.
pub fn cone_expansion_check(parent: &MuDD, child: &MuDD, cap: usize) -> Result<bool, crate::Error> {
    let pns = parent.namespace();
    let cns = child.namespace();
    let same_set = pns.len() == cns.len() && pns.names().iter().all(|n| cns.contains(n));
    if !same_set {
        return Err(ExplorationError::DimensionMismatch(format!(
            "[{}] vs [{}]",
            pns.names().join(", "),
            cns.names().join(", ")
        ))
        .into());
    }
    let child_gens: Vec<_> = normalize_signatures(&mudd::signatures_of_model(child, cap)?)
        .iter()
        .map(|s| to_int_vec(&s.counts))
        .collect();
    let parent_paths = mudd::enumerate_mupaths(parent, cap)?;
    let mut parent_sigs = Vec::with_capacity(parent_paths.len());
    for p in &parent_paths {
        // parent signatures in the child's coordinate order
        parent_sigs.push(mudd::signature_of(parent, p, cns)?);
    }
    for g in normalize_signatures(&parent_sigs) {
        let point: Vec<BigRational> = g.counts.iter().map(|&c| BigRational::from_integer(c.into())).collect();
        if !geometry::cone_contains(&child_gens, cns.len(), &point).map_err(crate::Error::from)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// An edge whose endpoints do not differ the way its kind says.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EdgeIssue {
    pub child: String,
    pub parent: String,
    pub edge: EdgeKind,
    pub message: String,
}

/// Relaxations must add features and prunings must remove them.
pub fn check_edges(catalog: &ModelCatalog) -> Vec<EdgeIssue> {
    let mut issues = Vec::new();
    for e in &catalog.entries {
        let Some(p) = &e.parent else { continue };
        let Some(parent) = catalog.get(&p.name) else { continue };
        let ok = match p.edge {
            EdgeKind::Relaxation => e.features.is_superset(&parent.features) && e.features != parent.features,
            EdgeKind::Pruning => e.features.is_subset(&parent.features) && e.features != parent.features,
        };
        if !ok {
            let message = match p.edge {
                EdgeKind::Relaxation => "relaxation should add features and keep the parent's",
                EdgeKind::Pruning => "pruning should remove features and add none",
            };
            issues.push(EdgeIssue {
                child: e.name.clone(),
                parent: p.name.clone(),
                edge: p.edge,
                message: message.to_string(),
            });
        }
    }
    issues
}

/// Outcome of a cone containment check along one relaxation edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExpansionCheck {
    pub parent: String,
    pub child: String,
    pub expanded: Result<bool, String>,
}

/// Runs [`cone_expansion_check`] on every relaxation edge whose two models
/// are present in `models`.
pub fn check_expansions(catalog: &ModelCatalog, models: &HashMap<String, MuDD>, cap: usize) -> Vec<ExpansionCheck> {
    catalog
        .entries
        .iter()
        .filter_map(|e| {
            let p = e.parent.as_ref()?;
            if p.edge != EdgeKind::Relaxation {
                return None;
            }
            let child = models.get(&e.name)?;
            let parent = models.get(&p.name)?;
            Some(ExpansionCheck {
                parent: p.name.clone(),
                child: e.name.clone(),
                expanded: cone_expansion_check(parent, child, cap).map_err(|e| e.to_string()),
            })
        })
        .collect()
}

/// Replaces the infeasible counts of entries that have a model with counts
/// from checking `observations` against it.
pub fn recount(
    catalog: &mut ModelCatalog,
    models: &HashMap<String, MuDD>,
    observations: &[ObservationSet],
    options: &BatchOptions,
) -> Vec<feasibility::BatchRow> {
    let named: Vec<(String, MuDD)> = catalog
        .entries
        .iter()
        .filter_map(|e| models.get(&e.name).map(|m| (e.name.clone(), m.clone())))
        .collect();
    let rows = feasibility::batch_check(&named, observations, options);
    for e in catalog.entries.iter_mut() {
        if models.contains_key(&e.name) {
            e.infeasible_count = rows.iter().filter(|r| r.model == e.name && r.is_infeasible()).count() as u64;
        }
    }
    rows
}

/// Feasible entries reached from an infeasible parent (or with no parent):
/// where a discovery chain first fits the data.
pub fn discovery_endpoints(catalog: &ModelCatalog) -> Vec<String> {
    catalog
        .entries
        .iter()
        .filter(|e| e.is_feasible())
        .filter(|e| match &e.parent {
            None => true,
            Some(p) => catalog.get(&p.name).is_none_or(|parent| !parent.is_feasible()),
        })
        .map(|e| e.name.clone())
        .collect()
}

/// Search suggestions: which feasible models still have unpruned features,
/// and which pruned models need no further pruning.
pub fn hints(catalog: &ModelCatalog) -> Vec<String> {
    let mut out = Vec::new();
    for e in &catalog.entries {
        let children: Vec<&ModelEntry> = catalog
            .entries
            .iter()
            .filter(|c| c.parent.as_ref().is_some_and(|p| p.name == e.name && p.edge == EdgeKind::Pruning))
            .collect();
        if e.is_feasible() {
            let untried: Vec<&String> = e
                .features
                .iter()
                .filter(|f| !children.iter().any(|c| !c.features.contains(*f)))
                .collect();
            if !untried.is_empty() {
                let list: Vec<&str> = untried.iter().map(|s| s.as_str()).collect();
                out.push(format!("{}: feasible; try pruning {}", e.name, list.join(", ")));
            }
        } else if e.parent.as_ref().is_some_and(|p| p.edge == EdgeKind::Pruning) && children.is_empty() {
            out.push(format!("{}: infeasible after pruning; its pruned variants are likely infeasible too", e.name));
        }
    }
    out
}

const STAR: &str = "★";

/// Aligned text table of the catalog, followed by the classification,
/// required features, edge problems, cone checks and hints. An empty catalog
/// renders as the header alone.
pub fn render_search_report(catalog: &ModelCatalog, expansions: &[ExpansionCheck]) -> String {
    let cols = catalog.feature_columns();
    let stars = discovery_endpoints(catalog);
    let mut header = vec!["".to_string(), "model".to_string()];
    header.extend(cols.iter().cloned());
    header.push("# inf.".into());
    header.push("parent".into());
    let mut rows = vec![header];
    for e in &catalog.entries {
        let mut row = vec![
            if stars.contains(&e.name) { STAR.to_string() } else { String::new() },
            e.name.clone(),
        ];
        row.extend(cols.iter().map(|f| if e.features.contains(f) { "✓" } else { "✗" }.to_string()));
        row.push(e.infeasible_count.to_string());
        row.push(match &e.parent {
            Some(p) => format!(
                "{} ({})",
                p.name,
                match p.edge {
                    EdgeKind::Relaxation => "relaxation",
                    EdgeKind::Pruning => "pruning",
                }
            ),
            None => String::new(),
        });
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    if !catalog.dataset.is_empty() {
        let _ = writeln!(out, "dataset: {}", catalog.dataset);
    }
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| {
                let pad = w - cell.chars().count();
                if c == row.len() - 1 {
                    cell.clone()
                } else if c == 1 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    if catalog.entries.is_empty() {
        return out;
    }

    let classes = classify(catalog);
    let list = |v: &[String]| if v.is_empty() { "(none)".to_string() } else { v.join(", ") };
    let _ = writeln!(out);
    let _ = writeln!(out, "feasible: {}", list(&classes.feasible));
    let _ = writeln!(out, "infeasible: {}", list(&classes.infeasible));
    match required_features(catalog) {
        Ok(req) => {
            let ordered: Vec<String> = cols.iter().filter(|f| req.contains(*f)).cloned().collect();
            let _ = writeln!(out, "required features: {}", list(&ordered));
        }
        Err(e) => {
            let _ = writeln!(out, "required features: {e}");
        }
    }
    for issue in check_edges(catalog) {
        let _ = writeln!(out, "edge {} -> {}: {}", issue.parent, issue.child, issue.message);
    }
    for x in expansions {
        let status = match &x.expanded {
            Ok(true) => "cone expanded".to_string(),
            Ok(false) => "cone NOT expanded".to_string(),
            Err(e) => format!("cone check failed: {e}"),
        };
        let _ = writeln!(out, "relaxation {} -> {}: {status}", x.parent, x.child);
    }
    let hints = hints(catalog);
    if !hints.is_empty() {
        let _ = writeln!(out, "hints:");
        for h in hints {
            let _ = writeln!(out, "  {h}");
        }
    }
    out
}

pub fn report_json(catalog: &ModelCatalog, expansions: &[ExpansionCheck]) -> serde_json::Value {
    let classes = classify(catalog);
    let required = required_features(catalog).ok();
    let stars = discovery_endpoints(catalog);
    serde_json::json!({
        "dataset": catalog.dataset,
        "features": catalog.feature_columns(),
        "models": catalog.entries.iter().map(|e| serde_json::json!({
            "name": e.name,
            "features": e.features,
            "infeasible_count": e.infeasible_count,
            "parent": e.parent,
            "feasible": e.is_feasible(),
            "star": stars.contains(&e.name),
        })).collect::<Vec<_>>(),
        "feasible": classes.feasible,
        "infeasible": classes.infeasible,
        "required_features": required,
        "edge_issues": check_edges(catalog),
        "expansions": expansions.iter().map(|x| serde_json::json!({
            "parent": x.parent,
            "child": x.child,
            "expanded": x.expanded.as_ref().ok(),
            "error": x.expanded.as_ref().err(),
        })).collect::<Vec<_>>(),
        "hints": hints(catalog),
    })
}

impl From<ExplorationError> for crate::Error {
    fn from(e: ExplorationError) -> Self {
        crate::Error::Exploration(e)
    }
}

impl From<GeometryError> for ExplorationError {
    fn from(e: GeometryError) -> Self {
        ExplorationError::DimensionMismatch(e.to_string())
    }
}

impl From<MuddError> for ExplorationError {
    fn from(e: MuddError) -> Self {
        ExplorationError::Format(e.to_string())
    }
}
