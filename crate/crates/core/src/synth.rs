//! Synthetic observations from a model with known per-path flows.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::mudd::{self, MuDD, MuddError};
use crate::stats::{self, ObservationSet, StatsError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("expected {expected} flows (one per µpath), got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("flow {index} is {value}; flows must be finite and non-negative")]
    NegativeFlow { index: usize, value: f64 },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("noise: {0}")]
    Noise(String),
    #[error(transparent)]
    Model(#[from] MuddError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Noise {
    /// Independent Gaussian noise with one standard deviation per counter.
    PerCounter(Vec<f64>),
    /// Correlated Gaussian noise with this covariance.
    Covariance(Vec<Vec<f64>>),
}

impl Noise {
    pub fn none(dim: usize) -> Self {
        Noise::PerCounter(vec![0.0; dim])
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub model: MuDD,
    /// One flow per µpath, in enumeration order.
    pub flows: Vec<f64>,
    pub samples: usize,
    pub noise: Noise,
    pub seed: u64,
    pub path_cap: usize,
}

impl SynthSpec {
    pub fn new(model: MuDD, flows: Vec<f64>, samples: usize, noise: Noise, seed: u64) -> Self {
        SynthSpec {
            model,
            flows,
            samples,
            noise,
            seed,
            path_cap: mudd::DEFAULT_PATH_CAP,
        }
    }
}

/// Generated data together with the noise-free totals.
#[derive(Debug, Clone)]
pub struct Synthesized {
    pub observations: ObservationSet,
    pub exact: Vec<f64>,
    /// Cells that came out negative and were set to zero.
    pub clamped: usize,
}

/// Σ_p σ_p · f(p).
pub fn exact_counters(spec: &SynthSpec) -> Result<Vec<f64>, SynthError> {
    let sigs = mudd::signatures_of_model(&spec.model, spec.path_cap)?;
    if sigs.len() != spec.flows.len() {
        return Err(SynthError::DimensionMismatch {
            expected: sigs.len(),
            got: spec.flows.len(),
        });
    }
    let mut total = vec![0.0; spec.model.namespace().len()];
    for (i, (sig, &f)) in sigs.iter().zip(&spec.flows).enumerate() {
        if !f.is_finite() || f < 0.0 {
            return Err(SynthError::NegativeFlow { index: i, value: f });
        }
        for (t, &c) in total.iter_mut().zip(&sig.counts) {
            *t += c as f64 * f;
        }
    }
    Ok(total)
}

/// Matrix `L` with `L Lᵀ = cov`, built from the eigendecomposition so that
/// singular covariances work.
fn noise_factor(noise: &Noise, dim: usize) -> Result<Vec<Vec<f64>>, SynthError> {
    match noise {
        Noise::PerCounter(sigma) => {
            if sigma.len() != dim {
                return Err(SynthError::Noise(format!("{} deviations for {dim} counters", sigma.len())));
            }
            if let Some(s) = sigma.iter().find(|s| !s.is_finite() || **s < 0.0) {
                return Err(SynthError::Noise(format!("invalid deviation {s}")));
            }
            Ok((0..dim)
                .map(|i| (0..dim).map(|j| if i == j { sigma[i] } else { 0.0 }).collect())
                .collect())
        }
        Noise::Covariance(cov) => {
            if cov.len() != dim || cov.iter().any(|r| r.len() != dim) {
                return Err(SynthError::Noise(format!("covariance must be {dim}x{dim}")));
            }
            let eig = stats::eigendecompose(cov)?;
            // eigendecompose clamps negative eigenvalues; recover them as Rayleigh quotients
            let scale = cov.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            let rayleigh = |v: &[f64]| -> f64 {
                (0..dim).map(|i| v[i] * (0..dim).map(|j| cov[i][j] * v[j]).sum::<f64>()).sum()
            };
            if eig.vectors.iter().any(|v| rayleigh(v) < -1e-9 * scale) {
                return Err(SynthError::Noise("covariance is not positive semidefinite".into()));
            }
            let mut l = vec![vec![0.0; dim]; dim];
            for (k, (&lambda, v)) in eig.values.iter().zip(&eig.vectors).enumerate() {
                let s = lambda.max(0.0).sqrt();
                for i in 0..dim {
                    l[i][k] = v[i] * s;
                }
            }
            Ok(l)
        }
    }
}

/// M rows of exact/M plus seeded Gaussian noise, negatives clamped to zero.
pub fn generate(spec: &SynthSpec) -> Result<Synthesized, SynthError> {
    if spec.samples < 2 {
        return Err(SynthError::TooFewSamples(spec.samples));
    }
    let exact = exact_counters(spec)?;
    let dim = exact.len();
    let factor = noise_factor(&spec.noise, dim)?;
    let m = spec.samples as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut clamped = 0;
    let mut rows = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let row: Vec<f64> = (0..dim)
            .map(|i| {
                let noise: f64 = factor[i].iter().zip(&z).map(|(l, z)| l * z).sum();
                let v = exact[i] / m + noise;
                if v < 0.0 {
                    clamped += 1;
                    0.0
                } else {
                    v
                }
            })
            .collect();
        rows.push(row);
    }
    if clamped > 0 {
        log::debug!("synth: clamped {clamped} negative cells to zero");
    }
    let observations = ObservationSet::new(format!("synth-{}", spec.seed), spec.model.namespace().clone(), rows)?;
    Ok(Synthesized {
        observations,
        exact,
        clamped,
    })
}

/// Writes observations in the CSV layout the loader reads: a `t` column
/// followed by one column per counter.
pub fn write_csv<W: Write>(obs: &ObservationSet, out: W) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| StatsError::Csv(e.to_string());
    let mut header = vec!["t".to_string()];
    header.extend(obs.namespace.names().iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (t, row) in obs.samples.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| StatsError::Csv(e.to_string()))
}
