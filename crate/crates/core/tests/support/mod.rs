//! Independent reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;

use ucr_core::config::BaselineVariant;
use ucr_core::encoder::EncoderParams;
use ucr_core::losses::{self, CurrentBatch, CurrentParams};
use ucr_core::memory::CameraPrototypes;
use ucr_core::{Matrix, Rng};

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.normal()).collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn random_unit_rows(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let mut m = random_matrix(rows, cols, rng);
    for i in 0..rows {
        let r = m.row_mut(i);
        let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        r.iter_mut().for_each(|x| *x /= n);
    }
    m
}

/// Forward pass with explicit loops: affine, tanh on hidden layers, then L2
/// normalization.
pub fn naive_forward(p: &EncoderParams, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let last = p.layers.len() - 1;
    for (l, layer) in p.layers.iter().enumerate() {
        let mut z = layer.bias.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            for (i, hi) in h.iter().enumerate() {
                *zo += hi * layer.weights[(i, o)];
            }
        }
        if l < last {
            z.iter_mut().for_each(|v| *v = v.tanh());
        }
        h = z;
    }
    let n = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter().map(|v| v / n).collect()
}

/// Central differences of `f` with respect to every parameter.
pub fn finite_difference<F: Fn(&EncoderParams) -> f64>(p: &EncoderParams, h: f64, f: F) -> Vec<f64> {
    let base = p.to_flat();
    let mut q = p.clone();
    let mut out = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        let mut flat = base.clone();
        flat[k] = base[k] + h;
        q.set_flat(&flat);
        let up = f(&q);
        flat[k] = base[k] - h;
        q.set_flat(&flat);
        let down = f(&q);
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Cluster,
    Cam,
    Hard,
    Old,
    Sim,
    Overall,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Cluster,
        LossKind::Cam,
        LossKind::Hard,
        LossKind::Old,
        LossKind::Sim,
        LossKind::Overall,
    ];
}

/// A small random problem: encoder 6 → 12 → 8 (188 parameters), an
/// 8-sample current batch of 4 pseudo ids over 2 cameras, a 6-sample old
/// batch, and fixed targets for every loss.
pub struct GradientCase {
    pub encoder: EncoderParams,
    x: Matrix,
    labels: Vec<usize>,
    cameras: Vec<usize>,
    prototypes: Matrix,
    cams: CameraPrototypes,
    momentum: Matrix,
    x_old: Matrix,
    old_index: Vec<usize>,
    all_prototypes: Matrix,
    old_momentum: Matrix,
    old_frozen: Matrix,
}

const TAU_P: f64 = 0.5;
const TAU_C: f64 = 0.07;
const TAU_S: f64 = 0.2;
const LAMBDA_CAM: f64 = 0.5;
const LAMBDA_SIM: f64 = 20.0;
const N_NEG: usize = 3;

impl GradientCase {
    pub fn new(seed: u64) -> Self {
        let mut rng = Rng::new(seed).fork(77);
        let encoder = EncoderParams::init(&[6, 12, 8], &mut rng);
        let labels = vec![0, 0, 1, 1, 2, 2, 3, 3];
        let cameras = vec![0, 1, 0, 1, 1, 0, 0, 1];
        let mut cam_cluster = Vec::new();
        let mut cam_camera = Vec::new();
        for c in 0..4 {
            for cam in 0..2 {
                cam_cluster.push(c);
                cam_camera.push(cam);
            }
        }
        let (di, de) = (6, 8);
        let other = EncoderParams::init(&[di, 12, de], &mut rng);
        let x = random_matrix(8, di, &mut rng);
        let x_old = random_matrix(6, di, &mut rng);
        let momentum = other.embed(&x).unwrap();
        let old_momentum = other.embed(&x_old).unwrap();
        let frozen = EncoderParams::init(&[di, 12, de], &mut rng);
        Self {
            encoder,
            prototypes: random_unit_rows(4, de, &mut rng),
            cams: CameraPrototypes {
                vectors: random_unit_rows(8, de, &mut rng),
                cluster: cam_cluster,
                camera: cam_camera,
            },
            all_prototypes: random_unit_rows(7, de, &mut rng),
            old_index: vec![0, 0, 1, 1, 2, 2],
            old_frozen: frozen.embed(&x_old).unwrap(),
            x,
            labels,
            cameras,
            momentum,
            x_old,
            old_momentum,
        }
    }

    fn current(&self, online: &Matrix) -> losses::LossValue {
        losses::loss_current(
            &CurrentBatch {
                online,
                momentum: Some(&self.momentum),
                labels: &self.labels,
                cameras: &self.cameras,
                prototypes: &self.prototypes,
                camera_prototypes: &self.cams,
            },
            CurrentParams {
                variant: BaselineVariant::ClusterCam,
                tau_p: TAU_P,
                tau_c: TAU_C,
                lambda_cam: LAMBDA_CAM,
                n_neg: N_NEG,
            },
        )
        .unwrap()
    }

    /// Loss value and analytic parameter gradient at `p`.
    pub fn evaluate(&self, kind: LossKind, p: &EncoderParams) -> (f64, Vec<f64>) {
        let fwd = p.forward(&self.x).unwrap();
        let fwd_old = p.forward(&self.x_old).unwrap();
        let e = fwd.output();
        let eo = fwd_old.output();
        let single = |l: losses::LossValue, cache| (l.value, p.backward(cache, &l.grad).unwrap().to_flat());
        match kind {
            LossKind::Cluster => single(losses::loss_cluster(e, &self.labels, &self.prototypes, TAU_P).unwrap(), &fwd),
            LossKind::Cam => single(losses::loss_cam(e, &self.labels, &self.cams, N_NEG, TAU_C).unwrap(), &fwd),
            LossKind::Hard => single(losses::loss_hard(e, &self.momentum, &self.labels).unwrap(), &fwd),
            LossKind::Old => single(
                losses::loss_old(eo, &self.old_index, &self.all_prototypes, TAU_P).unwrap(),
                &fwd_old,
            ),
            LossKind::Sim => {
                let d = losses::sim_distributions(eo, &self.old_momentum, &self.old_frozen, TAU_S).unwrap();
                single(losses::loss_sim(&d), &fwd_old)
            }
            LossKind::Overall => {
                let cur = self.current(e);
                let old = losses::loss_old(eo, &self.old_index, &self.all_prototypes, TAU_P).unwrap();
                let d = losses::sim_distributions(eo, &self.old_momentum, &self.old_frozen, TAU_S).unwrap();
                let sim = losses::loss_sim(&d);
                let total = losses::loss_overall(&cur, Some(&old), Some(&sim), LAMBDA_SIM);
                let mut g = p.backward(&fwd, &total.grad_current).unwrap();
                g.add_scaled(&p.backward(&fwd_old, total.grad_old.as_ref().unwrap()).unwrap(), 1.0);
                (total.value, g.to_flat())
            }
        }
    }

    /// Relative error between analytic and central-difference gradients.
    pub fn gradient_error(&self, kind: LossKind, h: f64) -> f64 {
        let (_, analytic) = self.evaluate(kind, &self.encoder);
        let numeric = finite_difference(&self.encoder, h, |q| self.evaluate(kind, q).0);
        relative_error(&analytic, &numeric)
    }
}

/// Row-major square distance matrix from a point cloud, cosine distance of
/// normalized rows.
pub fn cosine_rows(points: &Matrix) -> Vec<Vec<f64>> {
    let n = points.rows();
    let unit: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let r = points.row(i);
            let nr = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            r.iter().map(|x| x / nr).collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let c: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
                        (1.0 - c).clamp(0.0, 2.0)
                    }
                })
                .collect()
        })
        .collect()
}

/// Core flags and the partition of core points into density-connected
/// components, from the definition: cores are linked when within `eps`, and
/// components are the transitive closure of that relation.
pub fn dbscan_reference(d: &[Vec<f64>], eps: f64, min_pts: usize) -> (Vec<bool>, BTreeSet<BTreeSet<usize>>) {
    let n = d.len();
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| d[i][j] <= eps).count() >= min_pts)
        .collect();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            reach[i][j] = core[i] && core[j] && (i == j || d[i][j] <= eps);
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut parts = BTreeSet::new();
    for i in (0..n).filter(|&i| core[i]) {
        parts.insert((0..n).filter(|&j| reach[i][j]).collect::<BTreeSet<usize>>());
    }
    (core, parts)
}

/// Groups the core points of a labeling by label.
pub fn core_partition(labels: &[Option<usize>], core: &[bool]) -> BTreeSet<BTreeSet<usize>> {
    let mut groups: std::collections::BTreeMap<usize, BTreeSet<usize>> = Default::default();
    for (i, l) in labels.iter().enumerate() {
        if core[i] {
            groups
                .entry(l.expect("core point labeled as outlier"))
                .or_default()
                .insert(i);
        }
    }
    groups.into_values().collect()
}

fn neighbour_set(d: &[Vec<f64>], i: usize, k: usize) -> BTreeSet<usize> {
    let mut others: Vec<f64> = (0..d.len()).filter(|&j| j != i).map(|j| d[i][j]).collect();
    others.sort_by(f64::total_cmp);
    let mut set: BTreeSet<usize> = BTreeSet::from([i]);
    if k == 0 {
        return set;
    }
    let cut = others[(k - 1).min(others.len() - 1)];
    set.extend((0..d.len()).filter(|&j| j != i && d[i][j] <= cut));
    set
}

fn reciprocal_set(d: &[Vec<f64>], i: usize, k: usize) -> BTreeSet<usize> {
    neighbour_set(d, i, k)
        .into_iter()
        .filter(|&j| neighbour_set(d, j, k).contains(&i))
        .collect()
}

/// Re-ranked Jaccard distance written with explicit sets.
pub fn rerank_reference(d: &[Vec<f64>], k1: usize, k2: usize) -> Vec<Vec<f64>> {
    let n = d.len();
    let half = (k1 as f64 / 2.0).round_ties_even() as usize;
    let mut v = vec![vec![0.0; n]; n];
    for i in 0..n {
        let r = reciprocal_set(d, i, k1);
        let mut expanded = r.clone();
        for &c in &r {
            let rc = reciprocal_set(d, c, half);
            let inside = rc.intersection(&r).count();
            if 3 * inside > 2 * rc.len() {
                expanded.extend(rc);
            }
        }
        let total: f64 = expanded.iter().map(|&j| (-2.0 * d[i][j]).exp()).sum();
        for &j in &expanded {
            v[i][j] = (-2.0 * d[i][j]).exp() / total;
        }
    }
    if k2 > 1 {
        let mut qe = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| (a != i).cmp(&(b != i)).then(d[i][a].total_cmp(&d[i][b])).then(a.cmp(&b)));
            for &r in &order[..k2] {
                for k in 0..n {
                    qe[i][k] += v[r][k] / k2 as f64;
                }
            }
        }
        v = qe;
    }
    let mut j = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            let mins: f64 = (0..n).map(|k| v[a][k].min(v[b][k])).sum();
            let maxs: f64 = (0..n).map(|k| v[a][k].max(v[b][k])).sum();
            j[a][b] = (1.0 - mins / maxs).clamp(0.0, 1.0);
        }
    }
    let mut out = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            if a != b {
                out[a][b] = 0.5 * (j[a][b] + j[b][a]);
            }
        }
    }
    out
}

pub struct ReferenceEval {
    pub map: f64,
    pub cmc: Vec<f64>,
    pub scored: usize,
    pub skipped: usize,
}

/// Per-query retrieval scores from pairwise positions: an item ranks before
/// another when its similarity is higher, or equal with a smaller index.
/// Same-identity same-camera gallery items are discarded.
pub fn eval_reference(
    q: &Matrix,
    q_ids: &[u32],
    q_cams: &[usize],
    g: &Matrix,
    g_ids: &[u32],
    g_cams: &[usize],
) -> ReferenceEval {
    let ng = g.rows();
    let mut first_hits = Vec::new();
    let mut ap_sum = 0.0;
    let mut skipped = 0;
    for qi in 0..q.rows() {
        let sim: Vec<f64> = (0..ng)
            .map(|k| q.row(qi).iter().zip(g.row(k)).map(|(a, b)| a * b).sum())
            .collect();
        let kept: Vec<usize> = (0..ng)
            .filter(|&k| !(g_ids[k] == q_ids[qi] && g_cams[k] == q_cams[qi]))
            .collect();
        let before = |a: usize, b: usize| sim[a] > sim[b] || (sim[a] == sim[b] && a < b);
        let position = |k: usize| kept.iter().filter(|&&h| before(h, k)).count();
        let mut rel: Vec<usize> = kept
            .iter()
            .copied()
            .filter(|&k| g_ids[k] == q_ids[qi])
            .map(position)
            .collect();
        if rel.is_empty() {
            skipped += 1;
            continue;
        }
        rel.sort_unstable();
        let mut ap = 0.0;
        for (hit, &pos) in rel.iter().enumerate() {
            ap += (hit + 1) as f64 / (pos + 1) as f64;
        }
        ap_sum += ap / rel.len() as f64;
        first_hits.push(rel[0]);
    }
    let scored = first_hits.len();
    let cmc = (0..ng)
        .map(|k| first_hits.iter().filter(|&&f| f <= k).count() as f64 / scored as f64)
        .collect();
    ReferenceEval {
        map: ap_sum / scored as f64,
        cmc,
        scored,
        skipped,
    }
}
