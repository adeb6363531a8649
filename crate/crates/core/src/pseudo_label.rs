//! Pseudo labels: cosine distances, k-reciprocal Jaccard re-ranking, DBSCAN.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::HyperParams;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    Cosine,
    Jaccard,
}

/// Symmetric `n × n` distance matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub kind: DistanceKind,
    values: Matrix,
}

impl DistanceMatrix {
    /// Wraps a square matrix, zeroing its diagonal.
    pub fn new(kind: DistanceKind, mut values: Matrix) -> Self {
        assert_eq!(values.rows(), values.cols(), "distance matrix must be square");
        for i in 0..values.rows() {
            values[(i, i)] = 0.0;
        }
        Self { kind, values }
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.values
    }

    /// Range, symmetry and diagonal checks.
    pub fn check(&self) -> bool {
        let hi = match self.kind {
            DistanceKind::Cosine => 2.0,
            DistanceKind::Jaccard => 1.0,
        };
        let n = self.len();
        (0..n).all(|i| {
            self.get(i, i) == 0.0
                && (0..n).all(|j| {
                    let d = self.get(i, j);
                    (0.0..=hi).contains(&d) && (d - self.get(j, i)).abs() <= 1e-6
                })
        })
    }
}

/// `D[i][j] = 1 − ⟨e_i, e_j⟩` for unit-norm rows.
pub fn cosine_distance_matrix(embeddings: &Matrix) -> DistanceMatrix {
    let n = embeddings.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = (1.0 - dot(embeddings.row(i), embeddings.row(j))).clamp(0.0, 2.0);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    DistanceMatrix::new(DistanceKind::Cosine, d)
}

/// Ascending neighbour order of every row. The point itself always comes
/// first; other ties are broken by index.
fn ranking(d: &DistanceMatrix) -> Vec<Vec<usize>> {
    let n = d.len();
    (0..n)
        .map(|i| {
            let row = d.row(i);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                (a != i)
                    .cmp(&(b != i))
                    .then(row[a].total_cmp(&row[b]))
                    .then(a.cmp(&b))
            });
            order
        })
        .collect()
}

/// The `k + 1` nearest entries of `order` (self included), extended with every
/// further entry tied with the last one.
fn knn<'a>(order: &'a [usize], row: &[f64], k: usize) -> &'a [usize] {
    let mut end = (k + 1).min(order.len());
    let cut = row[order[end - 1]];
    while end < order.len() && row[order[end]] == cut {
        end += 1;
    }
    &order[..end]
}

struct Neighbourhoods<'a> {
    d: &'a DistanceMatrix,
    ranks: &'a [Vec<usize>],
}

impl Neighbourhoods<'_> {
    fn knn(&self, i: usize, k: usize) -> &[usize] {
        knn(&self.ranks[i], self.d.row(i), k)
    }

    /// Members of `i`'s k-NN that also have `i` in their own k-NN.
    fn k_reciprocal(&self, i: usize, k: usize) -> Vec<usize> {
        self.knn(i, k)
            .iter()
            .copied()
            .filter(|&c| self.knn(c, k).contains(&i))
            .collect()
    }
}

/// Round half to even, as used for the half-size reciprocal neighbourhoods.
fn half(k1: usize) -> usize {
    libm::rint(k1 as f64 / 2.0) as usize
}

/// k-reciprocal re-ranked Jaccard distance.
///
/// For every point the k1-reciprocal neighbour set is expanded with the
/// half-size reciprocal sets of its members whenever at least two thirds of
/// such a set already lies inside it. Members are weighted by
/// `exp(−‖x_i − x_j‖²) = exp(−2·D[i][j])` and normalized to sum to one; the
/// weight vectors are then averaged over each point's `k2` nearest neighbours
/// (local query expansion). The result is the weighted Jaccard distance
/// `1 − Σ min(V_i, V_j) / Σ max(V_i, V_j)` between weight vectors, with no
/// blend of the original distance.
///
/// Nearest-neighbour sets include points tied with the k-th neighbour, so
/// duplicated inputs always share their neighbourhoods.
pub fn rerank_jaccard(d: &DistanceMatrix, k1: usize, k2: usize) -> Result<DistanceMatrix> {
    let n = d.len();
    if k1 >= n || k2 > k1 || k2 < 1 {
        return Err(Error::RerankParams { n, k1, k2 });
    }
    let ranks = ranking(d);
    let nb = Neighbourhoods { d, ranks: &ranks };
    let k_half = half(k1);

    let mut v = Matrix::zeros(n, n);
    let mut mark = vec![false; n];
    for i in 0..n {
        let reciprocal = nb.k_reciprocal(i, k1);
        let mut expansion = reciprocal.clone();
        for &c in &reciprocal {
            let cand = nb.k_reciprocal(c, k_half);
            let shared = cand.iter().filter(|x| reciprocal.contains(x)).count();
            if shared as f64 > 2.0 / 3.0 * cand.len() as f64 {
                expansion.extend_from_slice(&cand);
            }
        }
        expansion.sort_unstable();
        expansion.dedup();
        let row = d.row(i);
        let weights: Vec<f64> = expansion.iter().map(|&j| libm::exp(-2.0 * row[j])).collect();
        let total: f64 = weights.iter().sum();
        for (&j, w) in expansion.iter().zip(&weights) {
            v[(i, j)] = w / total;
            mark[j] = true;
        }
    }

    if k2 > 1 {
        let mut qe = Matrix::zeros(n, n);
        for i in 0..n {
            let neigh = &ranks[i][..k2];
            let out = qe.row_mut(i);
            for &r in neigh {
                for (o, &x) in out.iter_mut().zip(v.row(r)) {
                    *o += x;
                }
            }
            out.iter_mut().for_each(|o| *o /= k2 as f64);
        }
        v = qe;
    }

    // Inverted index over non-zero columns.
    let mut inv: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (k, &x) in v.row(i).iter().enumerate() {
            if x != 0.0 {
                inv[k].push(i);
            }
        }
    }
    let mut jac = Matrix::zeros(n, n);
    let mut acc = vec![0.0; n];
    for i in 0..n {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (k, &vik) in v.row(i).iter().enumerate() {
            if vik == 0.0 {
                continue;
            }
            for &j in &inv[k] {
                acc[j] += f64::min(vik, v[(j, k)]);
            }
        }
        for j in 0..n {
            // Rows of V sum to one, so Σ max = 2 − Σ min.
            jac[(i, j)] = (1.0 - acc[j] / (2.0 - acc[j])).clamp(0.0, 1.0);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (jac[(i, j)] + jac[(j, i)]);
            jac[(i, j)] = s;
            jac[(j, i)] = s;
        }
    }
    let out = DistanceMatrix::new(DistanceKind::Jaccard, jac);
    debug_assert!(out.check(), "re-ranked distance out of range or asymmetric");
    Ok(out)
}

/// Cluster assignment per sample; `None` marks an outlier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabeling {
    pub labels: Vec<Option<usize>>,
    pub num_clusters: usize,
}

impl PseudoLabeling {
    pub fn all_outliers(n: usize) -> Self {
        Self {
            labels: vec![None; n],
            num_clusters: 0,
        }
    }

    /// Labels as integers with `-1` for outliers.
    pub fn as_i64(&self) -> Vec<i64> {
        self.labels
            .iter()
            .map(|l| l.map_or(-1, |c| c as i64))
            .collect()
    }

    /// Member indices of every cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_clusters];
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = l {
                groups[*c].push(i);
            }
        }
        groups
    }

    pub fn num_outliers(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

/// DBSCAN on a precomputed distance matrix.
///
/// The neighbourhood of `i` is `{j ≠ i : D[i][j] ≤ eps}`; `i` is a core point
/// when that set plus `i` itself has at least `min_pts` members. Clusters are
/// grown breadth-first from unvisited core points in ascending index order, a
/// border point joins the first cluster reaching it, and labels are finally
/// renumbered by first occurrence.
pub fn dbscan(d: &DistanceMatrix, eps: f64, min_pts: usize) -> PseudoLabeling {
    let n = d.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && d.get(i, j) <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() + 1 >= min_pts).collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if !core[seed] || labels[seed].is_some() {
            continue;
        }
        labels[seed] = Some(next);
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if labels[q].is_none() {
                    labels[q] = Some(next);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }

    let mut remap = vec![usize::MAX; next];
    let mut count = 0;
    for l in labels.iter_mut().flatten() {
        if remap[*l] == usize::MAX {
            remap[*l] = count;
            count += 1;
        }
        *l = remap[*l];
    }
    PseudoLabeling {
        labels,
        num_clusters: count,
    }
}

/// Momentum embeddings → cosine distance → re-ranked Jaccard → DBSCAN.
///
/// Fewer samples than `dbscan_min_pts` yield all outliers. When the domain is
/// too small for the configured `rerank_k1`, the neighbourhood is shrunk to
/// `n − 1` and query expansion to at most `dbscan_min_pts` neighbours, so that
/// minimum-size clusters are not averaged into each other.
pub fn pseudo_labels(embeddings: &Matrix, hp: &HyperParams) -> Result<PseudoLabeling> {
    let n = embeddings.rows();
    if n < hp.dbscan_min_pts || n < 2 {
        return Ok(PseudoLabeling::all_outliers(n));
    }
    let (k1, k2) = if hp.rerank_k1 < n {
        (hp.rerank_k1, hp.rerank_k2)
    } else {
        let k1 = n - 1;
        (k1, hp.rerank_k2.min(hp.dbscan_min_pts).min(k1))
    };
    let cos = cosine_distance_matrix(embeddings);
    let jac = rerank_jaccard(&cos, k1, k2)?;
    Ok(dbscan(&jac, hp.dbscan_eps, hp.dbscan_min_pts))
}
