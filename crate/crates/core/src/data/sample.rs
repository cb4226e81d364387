use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Query,
    Gallery,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Query => "query",
            Split::Gallery => "gallery",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "query" => Ok(Split::Query),
            "gallery" => Ok(Split::Gallery),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// The label part of a sample, which is all the evaluation protocols look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleLabels {
    pub identity: u32,
    pub clothes: u32,
    pub camera: u32,
}

/// One record: raw feature vector plus identity, clothes, camera and split.
///
/// Clothes labels are globally unique: two identities never share one, even
/// for visually identical outfits.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub feature: Vec<f64>,
    pub identity: u32,
    pub clothes: u32,
    pub camera: u32,
    pub split: Split,
}

impl Sample {
    pub fn labels(&self) -> SampleLabels {
        SampleLabels {
            identity: self.identity,
            clothes: self.clothes,
            camera: self.camera,
        }
    }
}

/// A collection of samples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    /// Validates dimensions, finiteness and sample-id uniqueness.
    pub fn new(dim: usize, samples: Vec<Sample>) -> Result<Self> {
        let mut ids = std::collections::HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.feature.len() != dim {
                return Err(Error::Shape(format!(
                    "sample {} has dimension {}, dataset has {dim}",
                    s.id,
                    s.feature.len()
                )));
            }
            if s.feature.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature of sample {}", s.id)));
            }
            if !ids.insert(s.id) {
                return Err(Error::Label(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Self { dim, samples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    /// Stacks the features of `samples` into an `n × dim` matrix.
    pub fn feature_matrix(samples: &[&Sample], dim: usize) -> Matrix {
        let mut data = Vec::with_capacity(samples.len() * dim);
        for s in samples {
            data.extend_from_slice(&s.feature);
        }
        Matrix::new(samples.len(), dim, data).expect("features share the dataset dimension")
    }
}
