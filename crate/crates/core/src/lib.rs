//! Test microarchitectural models, written as µpath decision diagrams,
//! against noisy hardware event counter observations.

pub mod dsl;
pub mod exploration;
pub mod feasibility;
pub mod geometry;
pub mod lp;
pub mod mudd;
pub mod stats;
pub mod synth;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] mudd::MuddError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Feasibility(#[from] feasibility::FeasibilityError),
    #[error(transparent)]
    Exploration(exploration::ExplorationError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
}

impl From<geometry::DeduceError> for Error {
    fn from(e: geometry::DeduceError) -> Self {
        match e {
            geometry::DeduceError::Model(m) => Error::Model(m),
            geometry::DeduceError::Geometry(g) => Error::Geometry(g),
        }
    }
}
