//! Samples, domains and the stored dataset layout.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::eval::EvalSplit;
use crate::linalg::Matrix;

/// One item of a domain: a raw feature vector plus its camera.
///
/// The ground-truth identity is only read by evaluation code; training works
/// from pseudo labels alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f32>,
    pub domain_id: usize,
    pub camera_id: usize,
    gt_id: Option<u32>,
}

impl Sample {
    pub fn new(features: Vec<f32>, domain_id: usize, camera_id: usize, gt_id: Option<u32>) -> Self {
        Self {
            features,
            domain_id,
            camera_id,
            gt_id,
        }
    }

    /// Ground-truth identity, for evaluation only.
    pub fn gt_id(&self) -> Option<u32> {
        self.gt_id
    }

    pub fn without_gt(mut self) -> Self {
        self.gt_id = None;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub name: String,
    pub samples: Vec<Sample>,
    pub num_cameras: usize,
}

impl Domain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn features(&self) -> Matrix {
        features_matrix(self.samples.iter())
    }
}

/// Stacks sample features into an `f64` matrix.
pub fn features_matrix<'a, I>(samples: I) -> Matrix
where
    I: IntoIterator<Item = &'a Sample>,
{
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = 0;
    for s in samples {
        cols = s.features.len();
        data.extend(s.features.iter().map(|&x| x as f64));
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data)
}

/// Checks feature dimensions and camera ranges across a stream.
pub fn validate_stream(domains: &[Domain], d_in: usize) -> Result<()> {
    for (d, domain) in domains.iter().enumerate() {
        if domain.num_cameras == 0 {
            return Err(Error::NoCameras { domain: d });
        }
        for (i, s) in domain.samples.iter().enumerate() {
            if s.features.len() != d_in {
                return Err(Error::SampleDimension {
                    domain: d,
                    index: i,
                    expected: d_in,
                    found: s.features.len(),
                });
            }
            if s.camera_id >= domain.num_cameras {
                return Err(Error::CameraOutOfRange {
                    domain: d,
                    index: i,
                    camera: s.camera_id,
                    num_cameras: domain.num_cameras,
                });
            }
        }
    }
    Ok(())
}

/// A domain as stored on disk: every sample plus the evaluation indices.
///
/// Samples listed in neither `query` nor `gallery` form the training set.
/// Unseen domains have an empty training set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetDomain {
    pub domain: Domain,
    pub query: Vec<usize>,
    pub gallery: Vec<usize>,
}

impl DatasetDomain {
    pub fn train_indices(&self) -> Vec<usize> {
        let mut held = alloc::vec![false; self.domain.len()];
        for &i in self.query.iter().chain(&self.gallery) {
            held[i] = true;
        }
        (0..self.domain.len()).filter(|&i| !held[i]).collect()
    }

    /// Training samples only, with ground truth stripped.
    pub fn train_domain(&self) -> Domain {
        Domain {
            name: self.domain.name.clone(),
            samples: self
                .train_indices()
                .into_iter()
                .map(|i| self.domain.samples[i].clone().without_gt())
                .collect(),
            num_cameras: self.domain.num_cameras,
        }
    }

    pub fn eval_split(&self) -> EvalSplit {
        let pick = |idx: &[usize]| idx.iter().map(|&i| self.domain.samples[i].clone()).collect();
        EvalSplit {
            name: self.domain.name.clone(),
            query: pick(&self.query),
            gallery: pick(&self.gallery),
        }
    }
}
