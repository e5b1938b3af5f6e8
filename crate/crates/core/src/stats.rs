//! Counter samples and their confidence regions.

use std::io::Read;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::mudd::CounterNamespace;

pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("observation is missing counter `{0}`")]
    MissingCounter(String),
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: {value} is negative or not finite")]
    InvalidCell { row: usize, column: String, value: f64 },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("matrix is not symmetric (entry {row},{col} differs by {diff:e})")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("sample row {row} has {got} values, expected {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("csv: {0}")]
    Csv(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Interval samples for one program run; columns follow `namespace`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub run_id: String,
    pub namespace: CounterNamespace,
    pub samples: Vec<Vec<f64>>,
    /// Columns of the CSV that were not used.
    pub ignored_columns: Vec<String>,
    /// Set when the namespace was restricted to the counters present in the
    /// data: positions of the kept counters in the requested namespace.
    pub projection: Option<Vec<usize>>,
}

impl ObservationSet {
    pub fn new(
        run_id: impl Into<String>,
        namespace: CounterNamespace,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self, StatsError> {
        if samples.len() < 2 {
            return Err(StatsError::TooFewSamples(samples.len()));
        }
        for (row, s) in samples.iter().enumerate() {
            if s.len() != namespace.len() {
                return Err(StatsError::RaggedRow {
                    row,
                    expected: namespace.len(),
                    got: s.len(),
                });
            }
            for (c, &v) in s.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(StatsError::InvalidCell {
                        row,
                        column: namespace.name(c).to_string(),
                        value: v,
                    });
                }
            }
        }
        Ok(ObservationSet {
            run_id: run_id.into(),
            namespace,
            samples,
            ignored_columns: Vec::new(),
            projection: None,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn dim(&self) -> usize {
        self.namespace.len()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Restrict the namespace to the counters present instead of failing on
    /// missing ones.
    pub project: bool,
}

/// Reads a CSV with a header of counter names. A leading `t` column is
/// ignored, as are columns not in `ns` (with a warning).
pub fn load_observations<R: Read>(
    run_id: &str,
    reader: R,
    ns: &CounterNamespace,
    options: LoadOptions,
) -> Result<ObservationSet, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| StatsError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();

    let mut kept = Vec::new();
    for name in ns.names() {
        match header.iter().position(|h| h == name) {
            Some(col) => kept.push((name.clone(), col)),
            None if options.project => {}
            None => return Err(StatsError::MissingCounter(name.clone())),
        }
    }
    let ignored: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, h)| !(i == 0 && h == "t") && !ns.contains(h))
        .map(|(_, h)| h.clone())
        .collect();
    if !ignored.is_empty() {
        log::warn!("{run_id}: ignoring unmodeled columns {}", ignored.join(", "));
    }

    let mut samples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| StatsError::Csv(e.to_string()))?;
        let values = kept
            .iter()
            .map(|(name, col)| {
                let cell = record.get(*col).unwrap_or("");
                cell.parse::<f64>().map_err(|_| StatsError::NonNumericCell {
                    row: row + 1,
                    column: name.clone(),
                    value: cell.to_string(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        samples.push(values);
    }

    let (namespace, projection) = if kept.len() == ns.len() {
        (ns.clone(), None)
    } else {
        let names: Vec<&str> = kept.iter().map(|(n, _)| n.as_str()).collect();
        let (sub, coords) = ns.restrict(&names);
        log::info!("{run_id}: projected onto {} of {} counters", sub.len(), ns.len());
        (sub, Some(coords))
    };
    let mut obs = ObservationSet::new(run_id, namespace, samples)?;
    obs.ignored_columns = ignored;
    obs.projection = projection;
    Ok(obs)
}

/// Loads a CSV file; the run id is the file stem.
pub fn load_observation_file(
    path: &Path,
    ns: &CounterNamespace,
    options: LoadOptions,
) -> Result<ObservationSet, StatsError> {
    let file = std::fs::File::open(path).map_err(|e| StatsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let run_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    load_observations(&run_id, std::io::BufReader::new(file), ns, options)
}

/// Sample mean, unbiased sample covariance, and covariance of the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub mean_covariance: Vec<Vec<f64>>,
}

pub fn mean_and_covariance(obs: &ObservationSet) -> Moments {
    let m = obs.num_samples();
    let n = obs.dim();
    let first = &obs.samples[0];
    // shift by the first row so constant columns come out exact
    let mut mean = vec![0.0; n];
    for row in &obs.samples {
        for j in 0..n {
            mean[j] += row[j] - first[j];
        }
    }
    for j in 0..n {
        mean[j] = first[j] + mean[j] / m as f64;
    }
    let mut cov = vec![vec![0.0; n]; n];
    for row in &obs.samples {
        for i in 0..n {
            let di = row[i] - mean[i];
            for j in i..n {
                cov[i][j] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            cov[i][j] /= (m - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let mean_covariance = cov
        .iter()
        .map(|r| r.iter().map(|v| v / m as f64).collect())
        .collect();
    Moments {
        mean,
        covariance: cov,
        mean_covariance,
    }
}

fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma function P(a, x).
pub fn regularized_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefix = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        for n in 1..10_000 {
            term *= x / (a + n as f64);
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum * log_prefix.exp()).min(1.0)
    } else {
        // modified Lentz evaluation of the continued fraction for Q(a, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-17 {
                break;
            }
        }
        (1.0 - h * log_prefix.exp()).max(0.0)
    }
}

pub fn chi_square_cdf(dof: usize, q: f64) -> f64 {
    regularized_lower_gamma(dof as f64 / 2.0, q / 2.0)
}

/// Quantile of the chi-square distribution by bisection on its CDF.
pub fn chi_square_quantile(dof: usize, p: f64) -> f64 {
    assert!(dof > 0, "chi-square needs at least one degree of freedom");
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut lo = 0.0;
    let mut hi = dof as f64 + 10.0;
    while chi_square_cdf(dof, hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_square_cdf(dof, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenvalues in descending order with matching unit eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// `vectors[i]` is the eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Negative
/// eigenvalues (rounding noise on a covariance) are clamped to zero.
pub fn eigendecompose(matrix: &[Vec<f64>]) -> Result<Eigen, StatsError> {
    let n = matrix.len();
    let scale = matrix
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            let diff = (matrix[i][j] - matrix[j][i]).abs();
            if diff > 1e-12 * (1.0 + scale) {
                return Err(StatsError::NotSymmetric { row: i, col: j, diff });
            }
        }
    }
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (matrix[i][j] + matrix[j][i])).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off.sqrt() <= 1e-30 * (1.0 + scale) || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    Ok(Eigen {
        values: order.iter().map(|&i| a[i][i].max(0.0)).collect(),
        vectors: order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DofPolicy {
    /// Chi-square degrees of freedom equal the counter dimension.
    #[default]
    Dimension,
    /// Degrees of freedom equal the number of non-zero eigenvalues.
    EffectiveRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceModel {
    #[default]
    Full,
    /// Drop all cross-counter covariances.
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionOptions {
    pub alpha: f64,
    /// Lower bound applied to every eigenvalue of the covariance of the mean.
    pub variance_floor: f64,
    pub dof: DofPolicy,
    pub covariance: CovarianceModel,
}

impl Default for RegionOptions {
    fn default() -> Self {
        RegionOptions {
            alpha: DEFAULT_ALPHA,
            variance_floor: 0.0,
            dof: DofPolicy::Dimension,
            covariance: CovarianceModel::Full,
        }
    }
}

/// Box `{ v : |axes[i]·(v − center)| ≤ half_lengths[i] }` bounding the
/// confidence ellipsoid of the mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceRegion {
    pub center: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub half_lengths: Vec<f64>,
    pub alpha: f64,
    pub samples: usize,
    pub chi_square: f64,
    pub dof: usize,
}

impl ConfidenceRegion {
    /// Degenerate region holding exactly `center`.
    pub fn point(center: Vec<f64>) -> Self {
        let n = center.len();
        ConfidenceRegion {
            axes: unit_axes(n),
            eigenvalues: vec![0.0; n],
            half_lengths: vec![0.0; n],
            center,
            alpha: DEFAULT_ALPHA,
            samples: 0,
            chi_square: 0.0,
            dof: n,
        }
    }

    /// Coordinate-aligned box with the given half-lengths.
    pub fn aligned_box(center: Vec<f64>, half_lengths: Vec<f64>) -> Self {
        let mut r = Self::point(center);
        r.half_lengths = half_lengths;
        r
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        self.axes.iter().zip(&self.half_lengths).all(|(e, &h)| {
            let proj: f64 = e.iter().zip(point).zip(&self.center).map(|((a, p), c)| a * (p - c)).sum();
            proj.abs() <= h * (1.0 + 1e-12) + 1e-12 * (1.0 + norm(&self.center))
        })
    }

    pub fn volume(&self) -> f64 {
        self.half_lengths.iter().map(|h| 2.0 * h).product()
    }
}

fn unit_axes(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn build_confidence_region(obs: &ObservationSet, options: &RegionOptions) -> Result<ConfidenceRegion, StatsError> {
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(options.alpha));
    }
    let moments = mean_and_covariance(obs);
    region_from_moments(&moments, obs.num_samples(), options)
}

pub fn region_from_moments(
    moments: &Moments,
    samples: usize,
    options: &RegionOptions,
) -> Result<ConfidenceRegion, StatsError> {
    let n = moments.mean.len();
    let mut cov = moments.mean_covariance.clone();
    if options.covariance == CovarianceModel::Diagonal {
        for (i, row) in cov.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if i != j {
                    *v = 0.0;
                }
            }
        }
    }
    let eigen = eigendecompose(&cov)?;
    let values: Vec<f64> = eigen.values.iter().map(|&l| l.max(options.variance_floor)).collect();
    let dof = match options.dof {
        DofPolicy::Dimension => n,
        DofPolicy::EffectiveRank => {
            let top = values.first().copied().unwrap_or(0.0);
            values.iter().filter(|&&l| l > 1e-12 * top && l > 0.0).count()
        }
    }
    .max(1);
    let chi_square = chi_square_quantile(dof, 1.0 - options.alpha);
    Ok(ConfidenceRegion {
        center: moments.mean.clone(),
        axes: eigen.vectors,
        half_lengths: values.iter().map(|l| (l * chi_square).sqrt()).collect(),
        eigenvalues: values,
        alpha: options.alpha,
        samples,
        chi_square,
        dof,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn ns(names: &[&str]) -> CounterNamespace {
        CounterNamespace::new(names.iter().copied()).unwrap()
    }

    fn obs(rows: Vec<Vec<f64>>) -> ObservationSet {
        let names: Vec<String> = (0..rows[0].len()).map(|i| format!("c{i}")).collect();
        ObservationSet::new("run", CounterNamespace::new(names).unwrap(), rows).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn csv_loading() {
        let names = ns(&["b", "a"]);
        let text = "t,a,b\n0,1,2\n1,3,4\n2,5,6\n";
        let o = load_observations("r", text.as_bytes(), &names, LoadOptions::default()).unwrap();
        assert_eq!(o.samples, vec![vec![2.0, 1.0], vec![4.0, 3.0], vec![6.0, 5.0]]);
        assert!(o.ignored_columns.is_empty());

        let text = "a,x\n1,2\n3,4\n";
        let err = load_observations("r", text.as_bytes(), &names, LoadOptions::default()).unwrap_err();
        assert_eq!(err, StatsError::MissingCounter("b".into()));
        let o = load_observations("r", text.as_bytes(), &names, LoadOptions { project: true }).unwrap();
        assert_eq!(o.namespace.names(), ["a".to_string()]);
        assert_eq!(o.projection, Some(vec![1]));
        assert_eq!(o.ignored_columns, vec!["x".to_string()]);

        let text = "a,b\n1,oops\n1,2\n";
        let err = load_observations("r", text.as_bytes(), &names, LoadOptions::default()).unwrap_err();
        assert!(matches!(err, StatsError::NonNumericCell { row: 1, .. }));

        let text = "a,b\n1,2\n";
        let err = load_observations("r", text.as_bytes(), &names, LoadOptions::default()).unwrap_err();
        assert_eq!(err, StatsError::TooFewSamples(1));
    }

    #[test]
    fn moments_examples() {
        let m = mean_and_covariance(&obs(vec![vec![0.1, 7.0]; 5]));
        assert_eq!(m.mean, vec![0.1, 7.0]);
        assert!(m.covariance.iter().flatten().all(|&v| v == 0.0));

        let m = mean_and_covariance(&obs(vec![vec![0.0, 0.0], vec![2.0, 2.0]]));
        assert_eq!(m.mean, vec![1.0, 1.0]);
        assert_eq!(m.covariance, vec![vec![2.0, 2.0], vec![2.0, 2.0]]);
        assert_eq!(m.mean_covariance, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);

        let m = mean_and_covariance(&obs(vec![vec![0.0, 2.0], vec![2.0, 0.0]]));
        assert_eq!(m.covariance[0][1], -2.0);
    }

    #[test]
    fn chi_square_examples() {
        let q = chi_square_quantile(2, 0.99);
        assert!(close(q, -2.0 * 0.01f64.ln(), 1e-8));
        assert!(close(q, 9.21034, 1e-5));
        assert!(chi_square_quantile(1, 1e-12) < 1e-10);
        assert!(chi_square_quantile(1, 1e-6) < chi_square_quantile(1, 1e-3));
    }

    #[test]
    fn chi_square_matches_independent_implementation() {
        for dof in 1..=30 {
            let reference = ChiSquared::new(dof as f64).unwrap();
            for &p in &[0.001, 0.05, 0.5, 0.9, 0.99, 0.999] {
                let q = chi_square_quantile(dof, p);
                assert!(close(reference.cdf(q), p, 1e-8), "dof {dof} p {p}");
            }
        }
    }

    #[test]
    fn eigen_examples() {
        let e = eigendecompose(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);

        let e = eigendecompose(&[vec![1.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(e.values, vec![4.0, 1.0]);
        assert!(close(e.vectors[0][1].abs(), 1.0, 1e-15));

        let e = eigendecompose(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!(close(e.values[0], 3.0, 1e-12) && close(e.values[1], 1.0, 1e-12));
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close((e.vectors[0][0] * r + e.vectors[0][1] * r).abs(), 1.0, 1e-12));
        assert!(close((e.vectors[1][0] * r - e.vectors[1][1] * r).abs(), 1.0, 1e-12));

        let err = eigendecompose(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, StatsError::NotSymmetric { .. }));
    }

    #[test]
    fn region_examples() {
        let r = build_confidence_region(&obs(vec![vec![3.0, 4.0]; 4]), &RegionOptions::default()).unwrap();
        assert_eq!(r.half_lengths, vec![0.0, 0.0]);
        assert_eq!(r.center, vec![3.0, 4.0]);

        let m = Moments {
            mean: vec![0.0, 0.0],
            covariance: vec![],
            mean_covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let r = region_from_moments(&m, 10, &RegionOptions::default()).unwrap();
        for h in &r.half_lengths {
            assert!(close(*h, 9.21034f64.sqrt(), 1e-5));
            assert!(close(*h, 3.0348, 1e-4));
        }
    }

    #[test]
    fn correlated_box_is_smaller() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let x = (i as f64 * 0.37).sin();
                let y = (i as f64 * 1.91).cos() * 0.05;
                vec![10.0 + x + y, 10.0 + x - y]
            })
            .collect();
        let o = obs(rows);
        let full = build_confidence_region(&o, &RegionOptions::default()).unwrap();
        let diag = build_confidence_region(
            &o,
            &RegionOptions {
                covariance: CovarianceModel::Diagonal,
                ..RegionOptions::default()
            },
        )
        .unwrap();
        assert!(full.volume() < diag.volume());
    }

    #[test]
    fn variance_floor_and_effective_rank() {
        let o = obs(vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]);
        let r = build_confidence_region(
            &o,
            &RegionOptions {
                dof: DofPolicy::EffectiveRank,
                ..RegionOptions::default()
            },
        )
        .unwrap();
        assert_eq!(r.dof, 1);
        assert_eq!(r.half_lengths[1], 0.0);
        let r = build_confidence_region(
            &o,
            &RegionOptions {
                variance_floor: 0.25,
                ..RegionOptions::default()
            },
        )
        .unwrap();
        assert!(r.half_lengths[1] > 0.0);
        assert_eq!(
            build_confidence_region(&o, &RegionOptions { alpha: 1.5, ..RegionOptions::default() }).unwrap_err(),
            StatsError::InvalidAlpha(1.5)
        );
    }

    fn symmetric(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(-10.0f64..10.0, n * n).prop_map(move |raw| {
            (0..n)
                .map(|i| (0..n).map(|j| raw[i.min(j) * n + i.max(j)]).collect())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn jacobi_reconstructs(m in (1usize..=6).prop_flat_map(symmetric)) {
            let n = m.len();
            let e = eigendecompose(&m).unwrap();
            // reconstruct using unclamped eigenvalues: v_i^T M v_i
            let raw: Vec<f64> = e.vectors.iter().map(|v| {
                (0..n).map(|i| (0..n).map(|j| v[i] * m[i][j] * v[j]).sum::<f64>()).sum()
            }).collect();
            let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = (0..n).map(|k| e.vectors[i][k] * e.vectors[j][k]).sum();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    prop_assert!(close(dot, expected, 1e-9));
                    let rec: f64 = (0..n).map(|k| e.vectors[k][i] * raw[k] * e.vectors[k][j]).sum();
                    prop_assert!(close(rec, m[i][j], 1e-9 * (1.0 + scale)));
                }
            }
            for w in e.values.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }

        #[test]
        fn rotation_preserves_half_lengths(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..100.0, 2), 3..20),
            angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let (s, c) = angle.sin_cos();
            let rotated: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| vec![c * r[0] - s * r[1] + 500.0, s * r[0] + c * r[1] + 500.0])
                .collect();
            let a = build_confidence_region(&obs(rows), &RegionOptions::default()).unwrap();
            let b = build_confidence_region(&obs(rotated), &RegionOptions::default()).unwrap();
            let scale = a.half_lengths[0].max(1e-6);
            for (x, y) in a.half_lengths.iter().zip(&b.half_lengths) {
                prop_assert!(close(*x, *y, 1e-6 * scale));
            }
        }
    }
}
