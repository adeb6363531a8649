//! Training objectives and their gradients with respect to the online
//! embeddings.
//!
//! Every loss is a mean over anchors. Momentum, frozen and prototype vectors
//! are constants: gradients flow only into the online embeddings passed in.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::BaselineVariant;
use crate::error::{Error, Result};
use crate::linalg::{dot, log_sum_exp, softmax, softmax_into, Matrix};
use crate::memory::CameraPrototypes;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// `∂loss / ∂embeddings`, one row per anchor.
    pub grad: Matrix,
}

impl LossValue {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            value: 0.0,
            grad: Matrix::zeros(rows, cols),
        }
    }

    /// `Σ wᵢ·termᵢ`, all terms over the same embeddings.
    pub fn combine(terms: &[(f64, &LossValue)]) -> Self {
        let (r, c) = terms[0].1.grad.shape();
        let mut out = Self::zero(r, c);
        for (w, t) in terms {
            out.value += w * t.value;
            out.grad.add_scaled(&t.grad, *w);
        }
        out
    }
}

/// Softmax cross-entropy of `f` against `targets` (rows), positive at
/// `positive`. Adds `scale · ∂/∂f` into `grad` and returns the loss.
fn nce_term(f: &[f64], targets: &[&[f64]], positive: usize, tau: f64, scale: f64, grad: &mut [f64]) -> f64 {
    let logits: Vec<f64> = targets.iter().map(|t| dot(f, t) / tau).collect();
    let loss = log_sum_exp(&logits) - logits[positive];
    let p = softmax(&logits);
    for (k, t) in targets.iter().enumerate() {
        let coef = scale * (p[k] - if k == positive { 1.0 } else { 0.0 }) / tau;
        for (g, &x) in grad.iter_mut().zip(t.iter()) {
            *g += coef * x;
        }
    }
    loss
}

fn prototype_nce(emb: &Matrix, positives: &[usize], prototypes: &Matrix, tau: f64) -> Result<LossValue> {
    if positives.len() != emb.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} anchors",
            positives.len(),
            emb.rows()
        )));
    }
    if let Some(&bad) = positives.iter().find(|&&p| p >= prototypes.rows()) {
        return Err(Error::PrototypeIndex {
            index: bad,
            len: prototypes.rows(),
        });
    }
    let n = emb.rows();
    let mut out = LossValue::zero(n, emb.cols());
    if n == 0 {
        return Ok(out);
    }
    let targets: Vec<&[f64]> = prototypes.iter_rows().collect();
    let scale = 1.0 / n as f64;
    for i in 0..n {
        let l = nce_term(emb.row(i), &targets, positives[i], tau, scale, out.grad.row_mut(i));
        out.value += l * scale;
    }
    Ok(out)
}

/// Cluster prototype contrastive loss over the current prototypes.
pub fn loss_cluster(online: &Matrix, labels: &[usize], prototypes: &Matrix, tau_p: f64) -> Result<LossValue> {
    prototype_nce(online, labels, prototypes, tau_p).map_err(|e| match e {
        Error::PrototypeIndex { index, .. } => Error::MissingPrototype(index),
        e => e,
    })
}

/// Rehearsal loss: stored samples against their stored prototype, with every
/// prototype of the memory (stored and current) in the denominator.
pub fn loss_old(online: &Matrix, prototype_index: &[usize], all_prototypes: &Matrix, tau_p: f64) -> Result<LossValue> {
    prototype_nce(online, prototype_index, all_prototypes, tau_p)
}

/// Camera prototype contrastive loss.
///
/// For an anchor of cluster `a`, every camera prototype `p_aj` of that cluster
/// is a positive. Each positive is scored against itself plus the `n_neg`
/// camera prototypes of other clusters most similar to the anchor; the anchor
/// loss is the mean over its positives.
pub fn loss_cam(
    online: &Matrix,
    labels: &[usize],
    cams: &CameraPrototypes,
    n_neg: usize,
    tau_c: f64,
) -> Result<LossValue> {
    let n = online.rows();
    let mut out = LossValue::zero(n, online.cols());
    if n == 0 {
        return Ok(out);
    }
    let scale = 1.0 / n as f64;
    for i in 0..n {
        let f = online.row(i);
        let a = labels[i];
        let positives: Vec<usize> = cams.of_cluster(a).collect();
        if positives.is_empty() {
            return Err(Error::MissingPrototype(a));
        }
        let mut negatives: Vec<(f64, usize)> = (0..cams.len())
            .filter(|&k| cams.cluster[k] != a)
            .map(|k| (dot(f, cams.vectors.row(k)), k))
            .collect();
        negatives.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        negatives.truncate(n_neg);
        let per_pos = scale / positives.len() as f64;
        for &p in &positives {
            let mut targets: Vec<&[f64]> = Vec::with_capacity(negatives.len() + 1);
            targets.push(cams.vectors.row(p));
            targets.extend(negatives.iter().map(|&(_, k)| cams.vectors.row(k)));
            let l = nce_term(f, &targets, 0, tau_c, per_pos, out.grad.row_mut(i));
            out.value += l * per_pos;
        }
    }
    Ok(out)
}

/// Hard instance contrastive loss.
///
/// For each anchor the positive is the momentum embedding of the same-label
/// batch member (other than the anchor) least similar to the anchor's online
/// embedding; the denominator adds every different-label momentum embedding.
/// Logits are plain cosine similarities. Anchors without a positive are left
/// out of the mean.
pub fn loss_hard(online: &Matrix, momentum: &Matrix, labels: &[usize]) -> Result<LossValue> {
    if online.shape() != momentum.shape() || labels.len() != online.rows() {
        return Err(Error::Shape("online, momentum and labels must align".into()));
    }
    let n = online.rows();
    let mut out = LossValue::zero(n, online.cols());
    let mut anchors = Vec::new();
    for i in 0..n {
        let f = online.row(i);
        let hardest = (0..n)
            .filter(|&j| j != i && labels[j] == labels[i])
            .map(|j| (dot(f, momentum.row(j)), j))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        if let Some((_, h)) = hardest {
            let negatives = (0..n).filter(|&j| labels[j] != labels[i]);
            let targets: Vec<usize> = core::iter::once(h).chain(negatives).collect();
            anchors.push((i, targets));
        }
    }
    if anchors.is_empty() {
        return Ok(out);
    }
    let scale = 1.0 / anchors.len() as f64;
    for (i, targets) in anchors {
        let rows: Vec<&[f64]> = targets.iter().map(|&j| momentum.row(j)).collect();
        let l = nce_term(online.row(i), &rows, 0, 1.0, scale, out.grad.row_mut(i));
        out.value += l * scale;
    }
    Ok(out)
}

/// Inputs of the current-domain loss for one mini-batch.
pub struct CurrentBatch<'a> {
    pub online: &'a Matrix,
    /// Needed by the hard-instance variant.
    pub momentum: Option<&'a Matrix>,
    pub labels: &'a [usize],
    pub cameras: &'a [usize],
    pub prototypes: &'a Matrix,
    pub camera_prototypes: &'a CameraPrototypes,
}

#[derive(Debug, Clone, Copy)]
pub struct CurrentParams {
    pub variant: BaselineVariant,
    pub tau_p: f64,
    pub tau_c: f64,
    pub lambda_cam: f64,
    pub n_neg: usize,
}

/// Current-domain loss for one of the three baselines.
pub fn loss_current(batch: &CurrentBatch<'_>, p: CurrentParams) -> Result<LossValue> {
    let cluster = loss_cluster(batch.online, batch.labels, batch.prototypes, p.tau_p)?;
    match p.variant {
        BaselineVariant::ClusterOnly => Ok(cluster),
        BaselineVariant::ClusterHard => {
            let momentum = batch
                .momentum
                .ok_or_else(|| Error::Shape("hard-instance loss needs momentum embeddings".into()))?;
            let hard = loss_hard(batch.online, momentum, batch.labels)?;
            Ok(LossValue::combine(&[(1.0, &cluster), (1.0, &hard)]))
        }
        BaselineVariant::ClusterCam => {
            let cam = loss_cam(batch.online, batch.labels, batch.camera_prototypes, p.n_neg, p.tau_c)?;
            Ok(LossValue::combine(&[(1.0, &cluster), (p.lambda_cam, &cam)]))
        }
    }
}

/// Row-stochastic image-to-image similarity distributions of an old batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDistributions {
    /// Online rows against momentum columns.
    pub p: Matrix,
    /// Frozen rows against frozen columns.
    pub q: Matrix,
    momentum: Matrix,
    tau_s: f64,
}

fn row_softmax(logits: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        softmax_into(logits.row(i), out.row_mut(i));
    }
    out
}

/// `P[i][j] = softmax_j(⟨f_i, m_j⟩ / τ_s)` and `Q[i][j] = softmax_j(⟨g_i, g_j⟩ / τ_s)`,
/// self pairs included. Inputs are unit-norm embeddings of the same batch.
pub fn sim_distributions(online: &Matrix, momentum: &Matrix, frozen: &Matrix, tau_s: f64) -> Result<SimDistributions> {
    if online.shape() != momentum.shape() || online.shape() != frozen.shape() {
        return Err(Error::Shape("online, momentum and frozen batches must align".into()));
    }
    if online.rows() < 2 {
        return Err(Error::Shape("similarity distributions need at least two samples".into()));
    }
    let mut s = online.matmul_t(momentum);
    s.scale(1.0 / tau_s);
    let mut r = frozen.matmul_t(frozen);
    r.scale(1.0 / tau_s);
    Ok(SimDistributions {
        p: row_softmax(&s),
        q: row_softmax(&r),
        momentum: momentum.clone(),
        tau_s,
    })
}

/// `mean_i KL(P_i ‖ Q_i)` over the rows of two row-stochastic matrices.
pub fn mean_kl(p: &Matrix, q: &Matrix) -> f64 {
    assert_eq!(p.shape(), q.shape(), "distribution shapes differ");
    let kl: f64 = p
        .iter_rows()
        .zip(q.iter_rows())
        .map(|(pr, qr)| {
            pr.iter()
                .zip(qr)
                .map(|(&a, &b)| a * (libm::log(a) - libm::log(b)))
                .sum::<f64>()
        })
        .sum();
    kl / p.rows() as f64
}

/// `mean_i KL(P_i ‖ Q_i)`, differentiated through the online rows of `P`.
pub fn loss_sim(d: &SimDistributions) -> LossValue {
    let n = d.p.rows();
    let mut out = LossValue::zero(n, d.momentum.cols());
    let scale = 1.0 / n as f64;
    let mut ds = vec![0.0; n];
    for i in 0..n {
        let p = d.p.row(i);
        let q = d.q.row(i);
        let log_ratio: Vec<f64> = p
            .iter()
            .zip(q)
            .map(|(&a, &b)| libm::log(a) - libm::log(b))
            .collect();
        let kl: f64 = p.iter().zip(&log_ratio).map(|(a, r)| a * r).sum();
        out.value += kl * scale;
        // ∂KL/∂s_k = P_k (ln(P_k/Q_k) − KL)
        for k in 0..n {
            ds[k] = p[k] * (log_ratio[k] - kl);
        }
        let g = out.grad.row_mut(i);
        for (k, &dk) in ds.iter().enumerate() {
            let coef = scale * dk / d.tau_s;
            for (gj, &m) in g.iter_mut().zip(d.momentum.row(k)) {
                *gj += coef * m;
            }
        }
    }
    out
}

/// The overall objective over a current batch and (optionally) an old batch.
#[derive(Debug, Clone, PartialEq)]
pub struct OverallLoss {
    pub value: f64,
    pub current: f64,
    pub old: f64,
    pub sim: f64,
    pub grad_current: Matrix,
    /// Gradient for the old-batch online embeddings, when an old term exists.
    pub grad_old: Option<Matrix>,
}

/// `L_current + L_old + λ_sim·L_sim`; missing terms contribute nothing.
pub fn loss_overall(current: &LossValue, old: Option<&LossValue>, sim: Option<&LossValue>, lambda_sim: f64) -> OverallLoss {
    let mut grad_old: Option<Matrix> = None;
    let mut add = |g: &Matrix, w: f64| match &mut grad_old {
        Some(acc) => acc.add_scaled(g, w),
        None => {
            let mut m = g.clone();
            m.scale(w);
            grad_old = Some(m);
        }
    };
    if let Some(o) = old {
        add(&o.grad, 1.0);
    }
    if let Some(s) = sim {
        add(&s.grad, lambda_sim);
    }
    let old_v = old.map_or(0.0, |o| o.value);
    let sim_v = sim.map_or(0.0, |s| s.value);
    OverallLoss {
        value: current.value + old_v + lambda_sim * sim_v,
        current: current.value,
        old: old_v,
        sim: sim_v,
        grad_current: current.grad.clone(),
        grad_old,
    }
}
