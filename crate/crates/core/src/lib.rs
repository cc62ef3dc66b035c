//! Presence-condition extraction, t-wise presence-condition sampling and
//! coverage measurement for C-preprocessor product lines.

pub mod cli;
pub mod coverage;
pub mod error;
pub mod expr;
pub mod extract;
pub mod formats;
pub mod logic;
pub mod sampler;
pub mod sat;
pub mod transform;

pub use coverage::{
    brute_force_coverage, coverage, coverage_grouped, fault_covered, CoverageOptions,
    CoverageReport, FaultSpec,
};
pub use error::{Error, Result};
pub use expr::Expr;
pub use extract::{extract_file, extract_source, extract_tree, LinePcRecord};
pub use logic::{
    active, canonicalize, complete, Clause, Configuration, FeatureId, FeatureModel, Literal,
    Origin, PcKind, PresenceCondition,
};
pub use logic::{Sample, SampleMode};
pub use sampler::{random_sample, sample, sample_grouped, SamplerOptions, SamplerState};
pub use sat::SatContext;
pub use transform::{conjoin, negate, preprocess, simplify, Grouping, PcUniverse, UniverseMode};
