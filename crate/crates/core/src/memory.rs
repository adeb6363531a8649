//! Cluster and camera prototypes, the prototype memory, the image memory,
//! and identity-balanced mini-batch sampling.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::{BatchSpec, MemoryPolicy};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::pseudo_label::PseudoLabeling;
use crate::rng::Rng;

/// Relative norm below which a member mean counts as zero.
const DEGENERATE: f64 = 1e-9;

fn mean_of(embeddings: &Matrix, members: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; embeddings.cols()];
    for &i in members {
        for (a, &x) in acc.iter_mut().zip(embeddings.row(i)) {
            *a += x;
        }
    }
    acc.iter_mut().for_each(|a| *a /= members.len() as f64);
    acc
}

/// Mean of `members`, optionally normalized; `None` if the mean vanishes.
fn prototype(embeddings: &Matrix, members: &[usize], normalize: bool) -> Option<Vec<f64>> {
    let mut p = mean_of(embeddings, members);
    let scale = members
        .iter()
        .map(|&i| norm(embeddings.row(i)))
        .fold(0.0, f64::max);
    let n = norm(&p);
    if n <= DEGENERATE * scale.max(f64::MIN_POSITIVE) {
        return None;
    }
    if normalize {
        p.iter_mut().for_each(|x| *x /= n);
    }
    Some(p)
}

/// One prototype per cluster: the (normalized) mean of its members'
/// momentum embeddings. Outliers are ignored.
pub fn cluster_prototypes(
    embeddings: &Matrix,
    labels: &PseudoLabeling,
    normalize: bool,
) -> Result<Matrix> {
    if labels.num_clusters == 0 {
        return Err(Error::NoClusters);
    }
    let mut out = Matrix::zeros(labels.num_clusters, embeddings.cols());
    for (c, members) in labels.members().iter().enumerate() {
        let p = prototype(embeddings, members, normalize)
            .ok_or(Error::DegeneratePrototype { cluster: c })?;
        out.row_mut(c).copy_from_slice(&p);
    }
    Ok(out)
}

/// Per-(cluster, camera) prototypes, sorted by cluster then camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPrototypes {
    pub vectors: Matrix,
    pub cluster: Vec<usize>,
    pub camera: Vec<usize>,
}

impl CameraPrototypes {
    pub fn empty(dim: usize) -> Self {
        Self {
            vectors: Matrix::zeros(0, dim),
            cluster: Vec::new(),
            camera: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cluster.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cluster.is_empty()
    }

    pub fn get(&self, cluster: usize, camera: usize) -> Option<&[f64]> {
        self.position(cluster, camera).map(|i| self.vectors.row(i))
    }

    fn position(&self, cluster: usize, camera: usize) -> Option<usize> {
        (0..self.len()).find(|&i| self.cluster[i] == cluster && self.camera[i] == camera)
    }

    /// Row indices of the prototypes belonging to `cluster`.
    pub fn of_cluster(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.cluster[i] == cluster)
    }
}

/// Camera prototypes of every (cluster, camera) pair with at least one member.
/// Pairs whose member mean vanishes are left out.
pub fn camera_prototypes(
    embeddings: &Matrix,
    labels: &PseudoLabeling,
    camera_ids: &[usize],
    normalize: bool,
) -> CameraPrototypes {
    let mut rows = Vec::new();
    let mut cluster = Vec::new();
    let mut camera = Vec::new();
    for (c, members) in labels.members().iter().enumerate() {
        let mut cams: Vec<usize> = members.iter().map(|&i| camera_ids[i]).collect();
        cams.sort_unstable();
        cams.dedup();
        for cam in cams {
            let sub: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| camera_ids[i] == cam)
                .collect();
            if let Some(p) = prototype(embeddings, &sub, normalize) {
                rows.push(p);
                cluster.push(c);
                camera.push(cam);
            }
        }
    }
    let vectors = if rows.is_empty() {
        Matrix::zeros(0, embeddings.cols())
    } else {
        Matrix::from_rows(&rows)
    };
    CameraPrototypes {
        vectors,
        cluster,
        camera,
    }
}

/// A prototype committed at the end of its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredPrototype {
    pub vector: Vec<f64>,
    pub domain: usize,
    pub cluster: usize,
}

/// Prototype memory `P = P^o ∪ P^c`.
///
/// Indices into [`PrototypeBank::all`] put the stored prototypes first, so a
/// stored prototype keeps its index for the rest of the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    old: Vec<StoredPrototype>,
    current: Matrix,
    camera_current: CameraPrototypes,
}

impl PrototypeBank {
    pub fn new(dim: usize) -> Self {
        Self {
            old: Vec::new(),
            current: Matrix::zeros(0, dim),
            camera_current: CameraPrototypes::empty(dim),
        }
    }

    pub fn old(&self) -> &[StoredPrototype] {
        &self.old
    }

    pub fn current(&self) -> &Matrix {
        &self.current
    }

    pub fn camera_current(&self) -> &CameraPrototypes {
        &self.camera_current
    }

    /// `|P|`.
    pub fn len(&self) -> usize {
        self.old.len() + self.current.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored prototypes followed by the current ones.
    pub fn all(&self) -> Matrix {
        let mut m = Matrix::zeros(0, self.current.cols());
        for p in &self.old {
            m = m.vstack(&Matrix::from_vec(1, p.vector.len(), p.vector.clone()));
        }
        m.vstack(&self.current)
    }

    /// Replaces the current-domain prototypes; stored ones are untouched.
    pub fn refresh(&mut self, current: Matrix, camera: CameraPrototypes) {
        self.current = current;
        self.camera_current = camera;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub sample: Sample,
    /// Index into [`PrototypeBank::old`].
    pub prototype: usize,
    /// `(domain, cluster)` at commit time.
    pub key: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageMemory {
    pub entries: Vec<MemoryEntry>,
}

impl ImageMemory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries grouped by prototype index.
    pub fn pool(&self) -> IdentityPool {
        let mut ids: Vec<usize> = self.entries.iter().map(|e| e.prototype).collect();
        ids.sort_unstable();
        ids.dedup();
        let members = ids
            .iter()
            .map(|&p| {
                (0..self.entries.len())
                    .filter(|&i| self.entries[i].prototype == p)
                    .collect()
            })
            .collect();
        IdentityPool { ids, members }
    }
}

/// Member indices ordered by `policy` relative to `proto`.
pub fn select_members(
    embeddings: &Matrix,
    members: &[usize],
    proto: &[f64],
    k: usize,
    policy: MemoryPolicy,
    rng: &mut Rng,
) -> Vec<usize> {
    let mut chosen = members.to_vec();
    let pn = norm(proto);
    let sim = |i: usize| dot(embeddings.row(i), proto) / (norm(embeddings.row(i)) * pn);
    match policy {
        MemoryPolicy::Nearest => {
            chosen.sort_by(|&a, &b| sim(b).total_cmp(&sim(a)).then(a.cmp(&b)))
        }
        MemoryPolicy::Farthest => {
            chosen.sort_by(|&a, &b| sim(a).total_cmp(&sim(b)).then(a.cmp(&b)))
        }
        MemoryPolicy::Random => rng.shuffle(&mut chosen),
    }
    chosen.truncate(k);
    chosen
}

/// End-of-domain commit: every current cluster's prototype joins the stored
/// prototypes and up to `k_mem` of its members, chosen by `policy`, join the
/// image memory. Prototypes are computed from `embeddings` (the final
/// momentum embeddings of the domain).
#[allow(clippy::too_many_arguments)]
pub fn commit_domain_memory(
    bank: &mut PrototypeBank,
    memory: &mut ImageMemory,
    embeddings: &Matrix,
    labels: &PseudoLabeling,
    samples: &[Sample],
    domain: usize,
    k_mem: usize,
    policy: MemoryPolicy,
    normalize: bool,
    rng: &mut Rng,
) -> Result<()> {
    let protos = cluster_prototypes(embeddings, labels, normalize)?;
    let expected = memory.len()
        + labels
            .members()
            .iter()
            .map(|m| m.len().min(k_mem))
            .sum::<usize>();
    for (c, members) in labels.members().iter().enumerate() {
        let index = bank.old.len();
        let proto = protos.row(c).to_vec();
        for i in select_members(embeddings, members, &proto, k_mem, policy, rng) {
            memory.entries.push(MemoryEntry {
                sample: samples[i].clone(),
                prototype: index,
                key: (domain, c),
            });
        }
        bank.old.push(StoredPrototype {
            vector: proto,
            domain,
            cluster: c,
        });
    }
    assert_eq!(memory.len(), expected, "image memory size invariant");
    Ok(())
}

/// Identities available for sampling, each with its member indices.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityPool {
    /// Pseudo id of each group (cluster id, or stored prototype index).
    pub ids: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl IdentityPool {
    /// Clusters of a labeling; outliers are excluded.
    pub fn from_labels(labels: &PseudoLabeling) -> Self {
        Self {
            ids: (0..labels.num_clusters).collect(),
            members: labels.members(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Current,
    Old,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    /// Indices into the pool's sample list.
    pub indices: Vec<usize>,
    /// Pseudo id of each drawn sample.
    pub ids: Vec<usize>,
    pub origin: Origin,
}

/// Random identity sampler.
///
/// Draws `spec.ids` distinct identities (all of them, topped up with repeats,
/// when fewer exist), then `spec.per_id` distinct members of each (with
/// replacement when an identity is too small).
pub fn sample_batch(
    pool: &IdentityPool,
    spec: BatchSpec,
    origin: Origin,
    rng: &mut Rng,
) -> Result<MiniBatch> {
    let groups: Vec<usize> = (0..pool.ids.len())
        .filter(|&g| !pool.members[g].is_empty())
        .collect();
    if groups.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut chosen = groups.clone();
    rng.shuffle(&mut chosen);
    if chosen.len() >= spec.ids {
        chosen.truncate(spec.ids);
    } else {
        while chosen.len() < spec.ids {
            chosen.push(groups[rng.below(groups.len())]);
        }
    }
    let mut indices = Vec::with_capacity(spec.size());
    let mut ids = Vec::with_capacity(spec.size());
    for g in chosen {
        let members = &pool.members[g];
        if members.len() >= spec.per_id {
            let mut m = members.clone();
            // partial Fisher-Yates
            for k in 0..spec.per_id {
                let j = k + rng.below(m.len() - k);
                m.swap(k, j);
            }
            indices.extend_from_slice(&m[..spec.per_id]);
        } else {
            for _ in 0..spec.per_id {
                indices.push(members[rng.below(members.len())]);
            }
        }
        ids.extend(core::iter::repeat_n(pool.ids[g], spec.per_id));
    }
    Ok(MiniBatch {
        indices,
        ids,
        origin,
    })
}
