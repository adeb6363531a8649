//! Hyperparameters.
//!
//! Field names double as the keys of the JSON configuration file; any key left
//! out takes the default below. The defaults are the full-scale training
//! recipe (30 epochs of 400 iterations per domain), see [`HyperParams::desk_scale`]
//! for the reduced schedule used on synthetic streams.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineVariant {
    #[serde(rename = "cluster_only")]
    ClusterOnly,
    #[serde(rename = "cluster+hard")]
    ClusterHard,
    #[serde(rename = "cluster+cam")]
    ClusterCam,
}

impl BaselineVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ClusterOnly => "cluster_only",
            Self::ClusterHard => "cluster+hard",
            Self::ClusterCam => "cluster+cam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cluster_only" => Some(Self::ClusterOnly),
            "cluster+hard" => Some(Self::ClusterHard),
            "cluster+cam" => Some(Self::ClusterCam),
            _ => None,
        }
    }
}

/// Which members of a cluster are kept in the image memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryPolicy {
    /// Highest cosine similarity to the cluster prototype.
    Nearest,
    /// Lowest cosine similarity to the cluster prototype.
    Farthest,
    Random,
}

impl MemoryPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Nearest => "nearest",
            Self::Farthest => "farthest",
            Self::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nearest" => Some(Self::Nearest),
            "farthest" => Some(Self::Farthest),
            "random" => Some(Self::Random),
            _ => None,
        }
    }
}

/// Mini-batch layout: `ids` identities with `per_id` samples each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub ids: usize,
    pub per_id: usize,
}

impl BatchSpec {
    pub const fn new(ids: usize, per_id: usize) -> Self {
        Self { ids, per_id }
    }

    pub fn size(&self) -> usize {
        self.ids * self.per_id
    }
}

// Serialized as a two-element array `[ids, per_id]`.
mod batch_spec_serde {
    use super::BatchSpec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(b: &BatchSpec, s: S) -> Result<S::Ok, S::Error> {
        [b.ids, b.per_id].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BatchSpec, D::Error> {
        let [ids, per_id] = <[usize; 2]>::deserialize(d)?;
        Ok(BatchSpec { ids, per_id })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// EMA coefficient of the momentum encoder.
    pub alpha: f64,
    /// Prototype temperature (cluster and rehearsal losses).
    pub tau_p: f64,
    /// Camera prototype temperature.
    pub tau_c: f64,
    /// Image-to-image similarity temperature.
    pub tau_s: f64,
    pub lambda_cam: f64,
    pub lambda_sim: f64,
    /// Hardest negative camera prototypes per positive.
    pub n_neg: usize,
    /// Images stored per cluster in the image memory.
    pub k_mem: usize,
    #[serde(with = "batch_spec_serde")]
    pub batch_current: BatchSpec,
    #[serde(with = "batch_spec_serde")]
    pub batch_old: BatchSpec,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub rerank_k1: usize,
    pub rerank_k2: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub epochs_per_domain: usize,
    pub iters_per_epoch: usize,
    pub baseline_variant: BaselineVariant,
    pub seed: u64,
    pub memory_policy: MemoryPolicy,
    /// Hidden layer widths of the encoder.
    pub hidden_dims: Vec<usize>,
    /// Embedding dimension.
    pub d_emb: usize,
    /// L2-normalize prototypes after averaging.
    pub normalize_prototypes: bool,
    /// Re-embed the old batch with the momentum encoder every iteration
    /// (otherwise the embeddings from the start of the epoch are reused).
    pub fresh_old_momentum: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 0.999,
            tau_p: 0.5,
            tau_c: 0.07,
            tau_s: 0.2,
            lambda_cam: 0.5,
            lambda_sim: 20.0,
            n_neg: 50,
            k_mem: 2,
            batch_current: BatchSpec::new(8, 4),
            batch_old: BatchSpec::new(16, 2),
            dbscan_eps: 0.55,
            dbscan_min_pts: 4,
            rerank_k1: 30,
            rerank_k2: 6,
            lr: 3.5e-4,
            weight_decay: 5e-4,
            warmup_epochs: 10,
            epochs_per_domain: 30,
            iters_per_epoch: 400,
            baseline_variant: BaselineVariant::ClusterCam,
            seed: 0,
            memory_policy: MemoryPolicy::Nearest,
            hidden_dims: vec![64, 64],
            d_emb: 32,
            normalize_prototypes: true,
            fresh_old_momentum: true,
        }
    }
}

fn bad(key: &'static str, reason: String) -> Error {
    Error::Config { key, reason }
}

impl HyperParams {
    /// Reduced schedule for CPU-sized synthetic streams. With 500 iterations
    /// per domain, α = 0.999 would leave the momentum encoder close to its
    /// starting point, so the EMA horizon is shortened to α = 0.99.
    pub fn desk_scale() -> Self {
        Self {
            epochs_per_domain: 10,
            iters_per_epoch: 50,
            warmup_epochs: 3,
            alpha: 0.99,
            ..Self::default()
        }
    }

    /// Layer widths from input to embedding.
    pub fn layer_dims(&self, d_in: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(d_in);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.d_emb);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(bad("alpha", format!("{} not in [0, 1]", self.alpha)));
        }
        for (key, t) in [
            ("tau_p", self.tau_p),
            ("tau_c", self.tau_c),
            ("tau_s", self.tau_s),
        ] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(bad(key, format!("{t} must be positive")));
            }
        }
        for (key, v) in [
            ("lambda_cam", self.lambda_cam),
            ("lambda_sim", self.lambda_sim),
            ("lr", self.lr),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(key, format!("{v} must be non-negative")));
            }
        }
        if self.k_mem < 1 {
            return Err(bad("k_mem", "must be at least 1".into()));
        }
        for (key, b) in [
            ("batch_current", self.batch_current),
            ("batch_old", self.batch_old),
        ] {
            if b.ids == 0 || b.per_id == 0 {
                return Err(bad(key, format!("[{}, {}] must be positive", b.ids, b.per_id)));
            }
        }
        if !(self.dbscan_eps > 0.0 && self.dbscan_eps <= 1.0) {
            return Err(bad("dbscan_eps", format!("{} not in (0, 1]", self.dbscan_eps)));
        }
        if self.dbscan_min_pts < 2 {
            return Err(bad("dbscan_min_pts", "must be at least 2".into()));
        }
        if self.rerank_k2 < 1 || self.rerank_k1 < self.rerank_k2 {
            return Err(bad(
                "rerank_k2",
                format!("need k1 >= k2 >= 1 (k1={}, k2={})", self.rerank_k1, self.rerank_k2),
            ));
        }
        if self.epochs_per_domain == 0 {
            return Err(bad("epochs_per_domain", "must be at least 1".into()));
        }
        if self.iters_per_epoch == 0 {
            return Err(bad("iters_per_epoch", "must be at least 1".into()));
        }
        if self.d_emb == 0 || self.hidden_dims.contains(&0) {
            return Err(bad("d_emb", "layer widths must be positive".into()));
        }
        Ok(())
    }
}
