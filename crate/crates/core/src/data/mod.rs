//! Domain types, the clothes-class registry and the PK batch sampler.

mod registry;
mod sample;
mod sampler;

pub use registry::ClothesRegistry;
pub use sample::{Dataset, Sample, SampleLabels, Split};
pub use sampler::{sample_pk_batch, Batch, PkSampler};
